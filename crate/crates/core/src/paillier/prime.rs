use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};

use super::{random_below, random_bytes, PaillierError};

/// Miller-Rabin rounds applied to every prime candidate.
pub const MILLER_RABIN_ROUNDS: usize = 64;

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Draws a random prime of exactly `bits` bits with the two top bits set, so
/// the product of two such primes has exactly `2 * bits` bits.
pub fn random_prime<R>(bits: u64, rng: &mut R) -> Result<BigUint, PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    assert!(bits >= 4, "prime width too small");
    let byte_len = bits.div_ceil(8) as usize;
    loop {
        let mut bytes = random_bytes(rng, byte_len)?;
        let excess = byte_len as u64 * 8 - bits;
        bytes[0] &= 0xff >> excess;
        let mut candidate = BigUint::from_bytes_be(&bytes);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng)? {
            return Ok(candidate);
        }
    }
}

pub fn is_probable_prime<R>(n: &BigUint, rounds: usize, rng: &mut R) -> Result<bool, PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    let two = BigUint::from(2u32);
    if *n < two {
        return Ok(false);
    }
    if *n == two {
        return Ok(true);
    }
    if n.is_even() {
        return Ok(false);
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if *n == p {
            return Ok(true);
        }
        if (n % &p).is_zero() {
            return Ok(false);
        }
    }

    let one = BigUint::one();
    let n_minus_one = n - &one;
    let shift = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> shift;
    // witnesses are drawn from [2, n - 2]
    let span = n - BigUint::from(3u32);

    'witness: for _ in 0..rounds {
        let a = random_below(rng, &span)? + &two;
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..shift {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return Ok(false);
            }
        }
        return Ok(false);
    }
    Ok(true)
}
