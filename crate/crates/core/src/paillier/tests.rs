use super::{
    batch_encrypt_fast, keygen, keygen_insecure, random_below, BigUint, Ciphertext, Execution,
    NonceExponent, One, PaillierError, PrivateKey, PublicKey, Zero,
};
use num_integer::Integer;
use proptest::prelude::*;
use rand::rngs::OsRng;
use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::HashSet;
use std::sync::OnceLock;

fn key512() -> &'static (PublicKey, PrivateKey) {
    static KEY: OnceLock<(PublicKey, PrivateKey)> = OnceLock::new();
    KEY.get_or_init(|| keygen(512, &mut OsRng).unwrap())
}

fn toy() -> PrivateKey {
    PrivateKey::from_primes(BigUint::from(5u32), BigUint::from(7u32)).unwrap()
}

/// Repeated multiplication, no square-and-multiply.
fn naive_pow_mod(base: u64, exp: u64, modulus: u64) -> u64 {
    (0..exp).fold(1 % modulus, |acc, _| acc * base % modulus)
}

fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

#[test]
fn toy_key_parameters() {
    let sk = toy();
    let pk = sk.public();
    assert_eq!(pk.n(), &big(35));
    assert_eq!(pk.g(), &big(36));
    assert_eq!(pk.n_squared(), &big(1225));
    assert_eq!(sk.lambda(), &big(12));
    // L(36^12 mod 1225) = L(421) = 12, and 12 * 3 = 36 = 1 mod 35
    let u = naive_pow_mod(36, 12, 1225);
    assert_eq!(u, 421);
    assert_eq!(sk.mu(), &big(3));
    assert_eq!((u - 1) / 35 * 3 % 35, 1);
}

#[test]
fn toy_known_answer_encryption() {
    let sk = toy();
    let expected = naive_pow_mod(36, 4, 1225) * naive_pow_mod(2, 35, 1225) % 1225;
    assert_eq!(expected, 88);
    let c = sk.public().encrypt_with_nonce(&big(4), &big(2)).unwrap();
    assert_eq!(c.value(), &big(88));
    assert_eq!(sk.decrypt(&c).unwrap(), big(4));
    assert_eq!(sk.decrypt_direct(&c).unwrap(), big(4));
}

#[test]
fn toy_exhaustive_round_trip() {
    let sk = toy();
    let pk = sk.public();
    for m in 0u64..35 {
        for r in (1u64..35).filter(|r| r.gcd(&35) == 1) {
            let oracle = naive_pow_mod(36, m, 1225) * naive_pow_mod(r, 35, 1225) % 1225;
            let c = pk.encrypt_with_nonce(&big(m), &big(r)).unwrap();
            assert_eq!(c.value(), &big(oracle), "m={m} r={r}");
            assert_eq!(sk.decrypt(&c).unwrap(), big(m));
            assert_eq!(sk.decrypt_direct(&c).unwrap(), big(m));
        }
    }
}

#[test]
fn keygen_rejects_small_and_odd_sizes() {
    assert_eq!(
        keygen(128, &mut OsRng).unwrap_err(),
        PaillierError::InvalidKeySize(128)
    );
    assert!(keygen(511, &mut OsRng).is_err());
    assert!(keygen_insecure(8, &mut OsRng).is_err());
    let (pk, _) = keygen_insecure(64, &mut OsRng).unwrap();
    assert_eq!(pk.bits(), 64);
}

#[test]
fn keygen_has_exact_width_and_valid_mu() {
    let (pk, sk) = key512();
    assert_eq!(pk.bits(), 512);
    assert_eq!(pk.n().bits(), 512);
    assert!(pk.g().gcd(pk.n_squared()).is_one());
    let u = pk.g().modpow(sk.lambda(), pk.n_squared());
    let l = (u - BigUint::one()) / pk.n();
    assert!(((l * sk.mu()) % pk.n()).is_one());
}

#[test]
fn key_id_is_deterministic() {
    let (pk, _) = key512();
    let again = PublicKey::from_bytes(&pk.to_bytes()).unwrap();
    assert_eq!(again.key_id(), pk.key_id());
    assert_eq!(&again, pk);
}

#[test]
fn entropy_failure_is_reported() {
    struct Broken;
    impl RngCore for Broken {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, _: &mut [u8]) {}
        fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
            Err(rand::Error::new("device unplugged"))
        }
    }
    impl CryptoRng for Broken {}
    let (pk, _) = key512();
    assert!(matches!(
        pk.encrypt(&big(1), &mut Broken),
        Err(PaillierError::Entropy(_))
    ));
    assert!(matches!(
        keygen(256, &mut Broken),
        Err(PaillierError::Entropy(_))
    ));
}

#[test]
fn boundary_round_trips() {
    let (pk, sk) = key512();
    let n_minus_one = pk.n() - BigUint::one();
    for m in [BigUint::zero(), BigUint::one(), n_minus_one] {
        let c = pk.encrypt(&m, &mut OsRng).unwrap();
        assert_eq!(sk.decrypt(&c).unwrap(), m);
        assert_eq!(sk.decrypt_direct(&c).unwrap(), m);
    }
    assert_eq!(
        pk.encrypt(pk.n(), &mut OsRng).unwrap_err(),
        PaillierError::PlaintextOutOfRange
    );
}

#[test]
fn random_round_trips() {
    let (pk, sk) = key512();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let m = random_below(&mut rng, pk.n()).unwrap();
        let c = pk.encrypt(&m, &mut rng).unwrap();
        assert_eq!(sk.decrypt(&c).unwrap(), m);
    }
}

#[test]
fn encryption_is_probabilistic() {
    let (pk, _) = key512();
    let values: HashSet<BigUint> = (0..100)
        .map(|_| pk.encrypt(&big(5), &mut OsRng).unwrap().value().clone())
        .collect();
    assert_eq!(values.len(), 100);
}

#[test]
fn add_examples() {
    let (pk, sk) = key512();
    let e0 = pk.encrypt(&big(0), &mut OsRng).unwrap();
    let e0b = pk.encrypt(&big(0), &mut OsRng).unwrap();
    assert_eq!(sk.decrypt(&pk.add(&e0, &e0b).unwrap()).unwrap(), big(0));
    let e3 = pk.encrypt(&big(3), &mut OsRng).unwrap();
    let e4 = pk.encrypt(&big(4), &mut OsRng).unwrap();
    let sum = pk.add(&e3, &e4).unwrap();
    assert_eq!(sum.value(), &((e3.value() * e4.value()) % pk.n_squared()));
    assert_eq!(sk.decrypt(&sum).unwrap(), big(7));
}

#[test]
fn add_and_scalar_mul_random_identities() {
    let (pk, sk) = key512();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let m1 = random_below(&mut rng, pk.n()).unwrap();
        let m2 = random_below(&mut rng, pk.n()).unwrap();
        let s = big(rng.gen_range(0..1u64 << 16));
        let c1 = pk.encrypt(&m1, &mut rng).unwrap();
        let c2 = pk.encrypt(&m2, &mut rng).unwrap();
        assert_eq!(
            sk.decrypt(&pk.add(&c1, &c2).unwrap()).unwrap(),
            (&m1 + &m2) % pk.n()
        );
        assert_eq!(
            sk.decrypt(&pk.scalar_mul(&c1, &s).unwrap()).unwrap(),
            (&s * &m1) % pk.n()
        );
    }
}

#[test]
fn scalar_mul_edge_cases() {
    let (pk, sk) = key512();
    let c = pk.encrypt(&big(99), &mut OsRng).unwrap();
    assert_eq!(
        sk.decrypt(&pk.scalar_mul(&c, &big(1)).unwrap()).unwrap(),
        big(99)
    );
    let zeroed = pk.scalar_mul(&c, &big(0)).unwrap();
    assert_eq!(zeroed.value(), &BigUint::one());
    assert_eq!(sk.decrypt(&zeroed).unwrap(), big(0));
}

#[test]
fn encrypt_zero_rerandomizes() {
    let (pk, sk) = key512();
    let z1 = pk.encrypt_zero(&mut OsRng).unwrap();
    let z2 = pk.encrypt_zero(&mut OsRng).unwrap();
    assert_ne!(z1.value(), z2.value());
    assert_eq!(sk.decrypt(&z1).unwrap(), big(0));
    let c = pk.encrypt(&big(42), &mut OsRng).unwrap();
    let fresh = pk.add(&c, &z1).unwrap();
    assert_ne!(fresh.value(), c.value());
    assert_eq!(sk.decrypt(&fresh).unwrap(), big(42));
    let fresh = pk.rerandomize(&c, &mut OsRng).unwrap();
    assert_eq!(sk.decrypt(&fresh).unwrap(), big(42));
}

#[test]
fn key_mismatch_is_rejected() {
    let (pk, sk) = key512();
    let (other_pk, _) = keygen(256, &mut OsRng).unwrap();
    let foreign = other_pk.encrypt(&big(1), &mut OsRng).unwrap();
    let mine = pk.encrypt(&big(1), &mut OsRng).unwrap();
    assert!(matches!(
        pk.add(&mine, &foreign),
        Err(PaillierError::KeyMismatch { .. })
    ));
    assert!(matches!(
        pk.scalar_mul(&foreign, &big(2)),
        Err(PaillierError::KeyMismatch { .. })
    ));
    assert!(matches!(
        sk.decrypt(&foreign),
        Err(PaillierError::KeyMismatch { .. })
    ));
}

#[test]
fn malformed_ciphertexts_are_rejected() {
    let (pk, sk) = key512();
    let zero = Ciphertext::from_raw(BigUint::zero(), pk.key_id());
    assert!(matches!(
        sk.decrypt(&zero),
        Err(PaillierError::MalformedCiphertext(_))
    ));
    let too_big = Ciphertext::from_raw(pk.n_squared().clone(), pk.key_id());
    assert!(matches!(
        sk.decrypt(&too_big),
        Err(PaillierError::MalformedCiphertext(_))
    ));
    let not_unit = Ciphertext::from_raw(pk.n().clone(), pk.key_id());
    assert!(matches!(
        sk.decrypt(&not_unit),
        Err(PaillierError::MalformedCiphertext(_))
    ));
}

#[test]
fn batch_fast_round_trips_and_matches_standard() {
    let (pk, sk) = key512();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let messages: Vec<BigUint> = (0..1024)
        .map(|_| random_below(&mut rng, pk.n()).unwrap())
        .collect();
    for exec in [Execution::Sequential, Execution::Parallel] {
        let fast =
            batch_encrypt_fast(sk, &messages, NonceExponent::Lambda, exec, &mut rng).unwrap();
        assert_eq!(fast.len(), messages.len());
        for (m, c) in messages.iter().zip(&fast) {
            let standard = pk.encrypt(m, &mut rng).unwrap();
            assert_eq!(sk.decrypt(c).unwrap(), sk.decrypt(&standard).unwrap());
            assert_eq!(&sk.decrypt(c).unwrap(), m);
        }
    }
}

#[test]
fn batch_fast_zeros_are_distinct() {
    let (_, sk) = key512();
    let zeros = vec![BigUint::zero(); 3];
    let out = batch_encrypt_fast(
        sk,
        &zeros,
        NonceExponent::Lambda,
        Execution::default(),
        &mut OsRng,
    )
    .unwrap();
    let distinct: HashSet<&BigUint> = out.iter().map(|c| c.value()).collect();
    assert_eq!(distinct.len(), 3);
    for c in &out {
        assert_eq!(sk.decrypt(c).unwrap(), BigUint::zero());
    }
}

#[test]
fn batch_fast_k_bit_mode_decrypts() {
    let (_, sk) = key512();
    let messages: Vec<BigUint> = (0u32..200).map(|m| big(m as u64 % 2)).collect();
    let out = batch_encrypt_fast(
        sk,
        &messages,
        NonceExponent::Bits(16),
        Execution::default(),
        &mut OsRng,
    )
    .unwrap();
    for (m, c) in messages.iter().zip(&out) {
        assert_eq!(&sk.decrypt(c).unwrap(), m);
    }
}

#[test]
fn batch_fast_rejects_out_of_range() {
    let (pk, sk) = key512();
    let bad = vec![BigUint::zero(), pk.n().clone()];
    assert_eq!(
        batch_encrypt_fast(
            sk,
            &bad,
            NonceExponent::Lambda,
            Execution::default(),
            &mut OsRng
        )
        .unwrap_err(),
        PaillierError::PlaintextOutOfRange
    );
}

#[test]
fn private_key_encoding_round_trips() {
    let (_, sk) = key512();
    let back = PrivateKey::from_bytes(&sk.to_bytes()).unwrap();
    assert_eq!(&back, sk);
    assert!(PrivateKey::from_bytes(&sk.to_bytes()[..10]).is_err());
}

#[test]
fn public_key_decoding_rejects_bad_widths() {
    let (pk, _) = key512();
    let mut bytes = pk.to_bytes();
    bytes[3] = bytes[3].wrapping_add(8);
    assert!(PublicKey::from_bytes(&bytes).is_err());
    assert!(PublicKey::from_bytes(&[0, 0]).is_err());
}

/// Wall-clock comparison at 2048-bit keys over 2^12 messages. Slow.
#[test]
#[ignore]
fn batch_fast_beats_standard_at_2048_bits() {
    use std::time::Instant;
    let (pk, sk) = keygen(2048, &mut OsRng).unwrap();
    let messages: Vec<BigUint> = (0..4096u64).map(|i| big(i % 2)).collect();
    let t = Instant::now();
    for m in &messages {
        pk.encrypt(m, &mut OsRng).unwrap();
    }
    let standard = t.elapsed();
    let t = Instant::now();
    batch_encrypt_fast(
        &sk,
        &messages,
        NonceExponent::Lambda,
        Execution::Sequential,
        &mut OsRng,
    )
    .unwrap();
    let fast = t.elapsed();
    eprintln!("standard {standard:?}, fast {fast:?}");
    assert!(fast < standard);
}

#[test]
fn batch_fast_beats_standard_at_512_bits() {
    use std::time::Instant;
    let (pk, sk) = key512();
    let messages: Vec<BigUint> = (0..512u64).map(|i| big(i % 2)).collect();
    let t = Instant::now();
    for m in &messages {
        pk.encrypt(m, &mut OsRng).unwrap();
    }
    let standard = t.elapsed();
    let t = Instant::now();
    batch_encrypt_fast(
        sk,
        &messages,
        NonceExponent::Lambda,
        Execution::Sequential,
        &mut OsRng,
    )
    .unwrap();
    assert!(t.elapsed() < standard);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ciphertext_bytes_round_trip(m in any::<u64>()) {
        let (pk, _) = key512();
        let c = pk.encrypt(&big(m), &mut OsRng).unwrap();
        let bytes = c.to_bytes(pk);
        prop_assert_eq!(bytes.len(), pk.ciphertext_len() + 8);
        prop_assert_eq!(Ciphertext::from_bytes(pk, &bytes).unwrap(), c);
    }
}
