use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::prime::random_prime;
use super::{to_fixed_be, KeyId, PaillierError};

/// Smallest modulus accepted by [`keygen`].
pub const MIN_SECURE_BITS: u64 = 256;
const MIN_INSECURE_BITS: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    bits: u64,
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
    key_id: KeyId,
}

/// Decryption key. Keeps the factors for CRT decryption alongside the
/// textbook `lambda` and `mu`.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    public: PublicKey,
    p: BigUint,
    q: BigUint,
    lambda: BigUint,
    mu: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    h_p: BigUint,
    h_q: BigUint,
    p_inv_mod_q: BigUint,
}

impl std::fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrivateKey")
            .field("key_id", &self.public.key_id)
            .finish_non_exhaustive()
    }
}

/// Generates a key pair with an `bits`-bit modulus `n = p * q`.
pub fn keygen<R>(bits: u64, rng: &mut R) -> Result<(PublicKey, PrivateKey), PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    if bits < MIN_SECURE_BITS || !bits.is_multiple_of(2) {
        return Err(PaillierError::InvalidKeySize(bits));
    }
    generate(bits, rng)
}

/// Like [`keygen`] but accepts toy sizes down to 16 bits. Test use only.
pub fn keygen_insecure<R>(bits: u64, rng: &mut R) -> Result<(PublicKey, PrivateKey), PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    if bits < MIN_INSECURE_BITS || !bits.is_multiple_of(2) {
        return Err(PaillierError::InvalidKeySize(bits));
    }
    generate(bits, rng)
}

fn generate<R>(bits: u64, rng: &mut R) -> Result<(PublicKey, PrivateKey), PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    loop {
        let p = random_prime(bits / 2, rng)?;
        let q = random_prime(bits / 2, rng)?;
        if p == q {
            continue;
        }
        // only fails when one prime divides the other's p - 1
        if let Ok(sk) = PrivateKey::build(p, q) {
            debug_assert_eq!(sk.public.bits, bits);
            let pk = sk.public.clone();
            return Ok((pk, sk));
        }
    }
}

impl PublicKey {
    fn from_modulus(n: BigUint) -> Result<Self, PaillierError> {
        if n.is_even() || n <= BigUint::from(3u32) {
            return Err(PaillierError::InvalidKey("modulus must be odd and > 3"));
        }
        let bits = n.bits();
        let n_squared = &n * &n;
        let g = &n + BigUint::one();
        let key_id = key_id_of(&encode_public(bits, &n));
        Ok(PublicKey {
            bits,
            n,
            g,
            n_squared,
            key_id,
        })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    /// Byte width of a plaintext (`n`).
    pub fn plaintext_len(&self) -> usize {
        self.bits.div_ceil(8) as usize
    }

    /// Byte width of a ciphertext value (`n^2`).
    pub fn ciphertext_len(&self) -> usize {
        (2 * self.bits).div_ceil(8) as usize
    }

    /// `bits` as u32 big-endian, then `n` big-endian in `ceil(bits / 8)` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_public(self.bits, &self.n)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PaillierError> {
        if bytes.len() < 4 {
            return Err(PaillierError::Encoding("public key truncated"));
        }
        let bits = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as u64;
        if bytes.len() != 4 + bits.div_ceil(8) as usize {
            return Err(PaillierError::Encoding(
                "public key length does not match bit size",
            ));
        }
        let n = BigUint::from_bytes_be(&bytes[4..]);
        if n.bits() != bits {
            return Err(PaillierError::InvalidKey(
                "modulus width differs from declared bits",
            ));
        }
        Self::from_modulus(n)
    }
}

fn encode_public(bits: u64, n: &BigUint) -> Vec<u8> {
    let mut out = (bits as u32).to_be_bytes().to_vec();
    out.extend(to_fixed_be(n, bits.div_ceil(8) as usize));
    out
}

fn key_id_of(encoding: &[u8]) -> KeyId {
    let digest = Sha256::digest(encoding);
    KeyId(digest[..8].try_into().unwrap())
}

impl PrivateKey {
    fn build(p: BigUint, q: BigUint) -> Result<Self, PaillierError> {
        let one = BigUint::one();
        if p == q || p <= one || q <= one {
            return Err(PaillierError::InvalidKey(
                "factors must be distinct and > 1",
            ));
        }
        let n = &p * &q;
        let p1 = &p - &one;
        let q1 = &q - &one;
        if !n.gcd(&(&p1 * &q1)).is_one() {
            return Err(PaillierError::InvalidKey("gcd(n, phi(n)) != 1"));
        }
        let public = PublicKey::from_modulus(n)?;
        let lambda = p1.lcm(&q1);
        let u = public.g.modpow(&lambda, &public.n_squared);
        let l = (u - &one) / &public.n;
        let mu = l.modinv(&public.n).ok_or(PaillierError::InvalidKey(
            "L(g^lambda) not invertible mod n",
        ))?;

        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let h_p = crt_h(&public.g, &p, &p_squared)?;
        let h_q = crt_h(&public.g, &q, &q_squared)?;
        let p_inv_mod_q = p
            .modinv(&q)
            .ok_or(PaillierError::InvalidKey("p not invertible mod q"))?;
        Ok(PrivateKey {
            public,
            p,
            q,
            lambda,
            mu,
            p_squared,
            q_squared,
            h_p,
            h_q,
            p_inv_mod_q,
        })
    }

    /// Builds a key pair from caller-supplied primes. Only for known-answer tests.
    #[cfg(any(test, feature = "test-keys"))]
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self, PaillierError> {
        Self::build(p, q)
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn key_id(&self) -> KeyId {
        self.public.key_id
    }

    pub fn n(&self) -> &BigUint {
        &self.public.n
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub(super) fn decrypt_crt_unchecked(&self, c: &BigUint) -> BigUint {
        let one = BigUint::one();
        let m_p = {
            let u = c.modpow(&(&self.p - &one), &self.p_squared);
            ((u - &one) / &self.p * &self.h_p) % &self.p
        };
        let m_q = {
            let u = c.modpow(&(&self.q - &one), &self.q_squared);
            ((u - &one) / &self.q * &self.h_q) % &self.q
        };
        // m = m_p + p * ((m_q - m_p) * p^-1 mod q)
        let diff = (&m_q + &self.q - (&m_p % &self.q)) % &self.q;
        let k = (diff * &self.p_inv_mod_q) % &self.q;
        m_p + &self.p * k
    }

    /// `bits` (u32 BE), then `p` and `q` each as u16 BE length + big-endian bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = (self.public.bits as u32).to_be_bytes().to_vec();
        for f in [&self.p, &self.q] {
            let raw = f.to_bytes_be();
            out.extend((raw.len() as u16).to_be_bytes());
            out.extend(raw);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PaillierError> {
        let truncated = PaillierError::Encoding("private key truncated");
        if bytes.len() < 4 {
            return Err(truncated);
        }
        let bits = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as u64;
        let mut rest = &bytes[4..];
        let mut factors = Vec::with_capacity(2);
        for _ in 0..2 {
            if rest.len() < 2 {
                return Err(truncated);
            }
            let len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
            rest = &rest[2..];
            if rest.len() < len {
                return Err(truncated);
            }
            factors.push(BigUint::from_bytes_be(&rest[..len]));
            rest = &rest[len..];
        }
        if !rest.is_empty() {
            return Err(PaillierError::Encoding("trailing bytes after private key"));
        }
        let q = factors.pop().unwrap();
        let p = factors.pop().unwrap();
        let sk = Self::build(p, q)?;
        if sk.public.bits != bits {
            return Err(PaillierError::InvalidKey(
                "modulus width differs from declared bits",
            ));
        }
        Ok(sk)
    }
}

fn crt_h(g: &BigUint, prime: &BigUint, prime_squared: &BigUint) -> Result<BigUint, PaillierError> {
    let one = BigUint::one();
    let u = g.modpow(&(prime - &one), prime_squared);
    let l = (u - &one) / prime;
    if l.is_zero() {
        return Err(PaillierError::InvalidKey("degenerate CRT parameter"));
    }
    l.modinv(prime)
        .ok_or(PaillierError::InvalidKey("CRT parameter not invertible"))
}
