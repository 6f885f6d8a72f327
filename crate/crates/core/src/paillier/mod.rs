//! Paillier cryptosystem over `num-bigint`.
//!
//! Keys always use the generator `g = n + 1`, so `g^m mod n^2 = 1 + m*n` and
//! encryption costs a single exponentiation `r^n`. Ciphertexts carry the
//! [`KeyId`] of the key that produced them and every operation checks it.

mod fixed_base;
mod keys;
pub mod prime;

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::exec::Execution;

pub use fixed_base::FixedBaseTable;
pub use keys::{keygen, keygen_insecure, PrivateKey, PublicKey, MIN_SECURE_BITS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaillierError {
    #[error("key size {0} bits rejected: need an even size of at least {MIN_SECURE_BITS} bits")]
    InvalidKeySize(u64),
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error("plaintext out of range [0, n)")]
    PlaintextOutOfRange,
    #[error("ciphertext belongs to key {found}, expected {expected}")]
    KeyMismatch { expected: KeyId, found: KeyId },
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(&'static str),
    #[error("invalid key material: {0}")]
    InvalidKey(&'static str),
    #[error("invalid encoding: {0}")]
    Encoding(&'static str),
}

/// First eight bytes of SHA-256 over a public key's canonical encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyId(pub [u8; 8]);

impl KeyId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, PaillierError> {
        let bytes = hex::decode(s).map_err(|_| PaillierError::Encoding("key id is not hex"))?;
        let arr: [u8; 8] = bytes
            .try_into()
            .map_err(|_| PaillierError::Encoding("key id must be 8 bytes"))?;
        Ok(KeyId(arr))
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// An element of the unit group mod `n^2`, tagged with its key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    value: BigUint,
    key_id: KeyId,
}

impl Ciphertext {
    /// Wraps a raw value. Range is checked by the operations that consume it.
    pub fn from_raw(value: BigUint, key_id: KeyId) -> Self {
        Ciphertext { value, key_id }
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    /// Fixed-width big-endian value followed by the 8-byte key id.
    pub fn to_bytes(&self, pk: &PublicKey) -> Vec<u8> {
        let mut out = to_fixed_be(&self.value, pk.ciphertext_len());
        out.extend_from_slice(&self.key_id.0);
        out
    }

    pub fn from_bytes(pk: &PublicKey, bytes: &[u8]) -> Result<Self, PaillierError> {
        let width = pk.ciphertext_len();
        if bytes.len() != width + 8 {
            return Err(PaillierError::Encoding("ciphertext has wrong length"));
        }
        let value = BigUint::from_bytes_be(&bytes[..width]);
        let key_id = KeyId(bytes[width..].try_into().expect("8 bytes"));
        Ok(Ciphertext { value, key_id })
    }
}

/// Which interval the per-element exponent of [`batch_encrypt_fast`] is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonceExponent {
    /// Uniform in `[0, lambda - 1]`. Elements are independent of one another.
    Lambda,
    /// Uniform in `[0, 2^K - 1]`. Cheaper, but the elements of one batch share
    /// `r0`: once one plaintext leaks, the rest fall to `O(2^K)` trial
    /// decryptions.
    Bits(u32),
}

impl PublicKey {
    pub fn encrypt<R>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext, PaillierError>
    where
        R: RngCore + CryptoRng + ?Sized,
    {
        let r = self.random_nonce(rng)?;
        self.encrypt_with_nonce(m, &r)
    }

    /// `g^m * r^n mod n^2` for a caller-chosen `r`. Only for known-answer
    /// checks; real encryptions must use a fresh random `r`.
    pub fn encrypt_with_nonce(
        &self,
        m: &BigUint,
        r: &BigUint,
    ) -> Result<Ciphertext, PaillierError> {
        if m >= self.n() {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        if r.is_zero() || r >= self.n() || !r.gcd(self.n()).is_one() {
            return Err(PaillierError::InvalidKey("nonce must be a unit mod n"));
        }
        let rn = r.modpow(self.n(), self.n_squared());
        Ok(self.wrap((self.g_pow(m) * rn) % self.n_squared()))
    }

    /// A fresh encryption of zero, `r^n mod n^2`.
    pub fn encrypt_zero<R>(&self, rng: &mut R) -> Result<Ciphertext, PaillierError>
    where
        R: RngCore + CryptoRng + ?Sized,
    {
        let r = self.random_nonce(rng)?;
        Ok(self.wrap(r.modpow(self.n(), self.n_squared())))
    }

    /// Homomorphic addition: `c1 * c2 mod n^2`.
    pub fn add(&self, c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        self.check(c1)?;
        self.check(c2)?;
        Ok(self.wrap((&c1.value * &c2.value) % self.n_squared()))
    }

    /// Homomorphic scalar multiplication: `c^s mod n^2`.
    pub fn scalar_mul(&self, c: &Ciphertext, s: &BigUint) -> Result<Ciphertext, PaillierError> {
        self.check(c)?;
        Ok(self.wrap(c.value.modpow(s, self.n_squared())))
    }

    /// Adds a fresh encryption of zero, changing the bytes but not the plaintext.
    pub fn rerandomize<R>(&self, c: &Ciphertext, rng: &mut R) -> Result<Ciphertext, PaillierError>
    where
        R: RngCore + CryptoRng + ?Sized,
    {
        let zero = self.encrypt_zero(rng)?;
        self.add(c, &zero)
    }

    /// The ciphertext with value 1: the trivial, non-random encryption of zero.
    pub fn identity(&self) -> Ciphertext {
        self.wrap(BigUint::one())
    }

    pub(crate) fn wrap(&self, value: BigUint) -> Ciphertext {
        Ciphertext {
            value,
            key_id: self.key_id(),
        }
    }

    pub(crate) fn check(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        if c.key_id != self.key_id() {
            return Err(PaillierError::KeyMismatch {
                expected: self.key_id(),
                found: c.key_id,
            });
        }
        if c.value.is_zero() || &c.value >= self.n_squared() {
            return Err(PaillierError::MalformedCiphertext("value outside (0, n^2)"));
        }
        Ok(())
    }

    fn g_pow(&self, m: &BigUint) -> BigUint {
        (BigUint::one() + m * self.n()) % self.n_squared()
    }

    fn random_nonce<R>(&self, rng: &mut R) -> Result<BigUint, PaillierError>
    where
        R: RngCore + CryptoRng + ?Sized,
    {
        loop {
            let r = random_below(rng, self.n())?;
            if !r.is_zero() && r.gcd(self.n()).is_one() {
                return Ok(r);
            }
        }
    }
}

impl PrivateKey {
    /// Decrypts using CRT over `p^2` and `q^2`. Output is identical to
    /// [`PrivateKey::decrypt_direct`].
    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        self.validate(c)?;
        Ok(self.decrypt_crt_unchecked(&c.value))
    }

    /// `L(c^lambda mod n^2) * mu mod n` with `L(x) = (x - 1) / n`.
    pub fn decrypt_direct(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        self.validate(c)?;
        let pk = self.public();
        let u = c.value.modpow(self.lambda(), pk.n_squared());
        let l = (u - BigUint::one()) / pk.n();
        Ok((l * self.mu()) % pk.n())
    }

    fn validate(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        let pk = self.public();
        pk.check(c)?;
        if !c.value.gcd(pk.n()).is_one() {
            return Err(PaillierError::MalformedCiphertext(
                "value not invertible mod n^2",
            ));
        }
        Ok(())
    }
}

/// Encrypts a batch with one shared `r0`: `rho = r0^n mod n^2` is computed
/// once and element `m` becomes `g^m * rho^x mod n^2` with a fresh `x` per
/// element. Needs the private key because the default exponent range is
/// `[0, lambda - 1]`.
pub fn batch_encrypt_fast<R>(
    sk: &PrivateKey,
    messages: &[BigUint],
    exponent: NonceExponent,
    exec: Execution,
    rng: &mut R,
) -> Result<Vec<Ciphertext>, PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    let pk = sk.public();
    if messages.iter().any(|m| m >= pk.n()) {
        return Err(PaillierError::PlaintextOutOfRange);
    }
    if messages.is_empty() {
        return Ok(Vec::new());
    }
    let r0 = pk.random_nonce(rng)?;
    let rho = r0.modpow(pk.n(), pk.n_squared());
    let bound = match exponent {
        NonceExponent::Lambda => sk.lambda().clone(),
        NonceExponent::Bits(k) => BigUint::one() << k,
    };
    let window = FixedBaseTable::suggested_window(bound.bits(), messages.len());
    let table = FixedBaseTable::new(&rho, pk.n_squared(), bound.bits(), window);
    exec.map_with_rng(messages, rng, |m, local| {
        let x = random_below(local, &bound)?;
        Ok(pk.wrap((pk.g_pow(m) * table.pow(&x)) % pk.n_squared()))
    })
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub(crate) fn random_below<R>(rng: &mut R, bound: &BigUint) -> Result<BigUint, PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    assert!(!bound.is_zero(), "empty range");
    let bits = bound.bits();
    let byte_len = bits.div_ceil(8) as usize;
    let excess = byte_len as u64 * 8 - bits;
    loop {
        let mut bytes = random_bytes(rng, byte_len)?;
        bytes[0] &= 0xff >> excess;
        let candidate = BigUint::from_bytes_be(&bytes);
        if &candidate < bound {
            return Ok(candidate);
        }
    }
}

pub(crate) fn random_bytes<R>(rng: &mut R, len: usize) -> Result<Vec<u8>, PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    let mut bytes = vec![0u8; len];
    rng.try_fill_bytes(&mut bytes)
        .map_err(|e| PaillierError::Entropy(e.to_string()))?;
    Ok(bytes)
}

/// Big-endian bytes left-padded to `width`. Panics if the value is wider.
pub fn to_fixed_be(value: &BigUint, width: usize) -> Vec<u8> {
    let raw = value.to_bytes_be();
    let raw: &[u8] = if value.is_zero() { &[] } else { &raw };
    assert!(raw.len() <= width, "value wider than field");
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(raw);
    out
}

#[cfg(test)]
mod tests;
