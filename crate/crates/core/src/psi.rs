//! Client and server steps of the intersection protocols, as pure transforms.
//!
//! * Full PSI: the client sends `c_i = Enc(a_i)`, the server answers
//!   `d_i = c_i^{b_i} * Enc(0)` and the client decrypts `a_i * b_i`.
//! * Cardinality: the server folds everything into one ciphertext
//!   `d = prod(c_i^{b_i}) * Enc(0)`, which decrypts to `|A ∩ B|`.
//! * Blinded: the server publishes `Enc(b_i)` under its own key. The client
//!   evaluates locally, blinds the result and has the server decrypt it, so
//!   nothing about the client's trajectory leaves the device in the clear.
//!
//! Server-side functions take no private key: they cannot decrypt.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::exec::Execution;
use crate::grid::{GridError, GridId, TrajectoryBitVector};
use crate::paillier::{
    batch_encrypt_fast, random_below, random_bytes, Ciphertext, NonceExponent, PaillierError,
    PrivateKey, PublicKey,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("expected a {expected:?} message, got {found:?}")]
    WrongMode { expected: Mode, found: Mode },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("protocol violation: {0}")]
    Violation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Full,
    Cardinality,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "FULL",
            Mode::Cardinality => "CARDINALITY",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "FULL" => Some(Mode::Full),
            "CARDINALITY" => Some(Mode::Cardinality),
            _ => None,
        }
    }
}

/// The client's encrypted trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedQuery {
    pub pk: PublicKey,
    pub grid_id: GridId,
    pub mode: Mode,
    pub ciphertexts: Vec<Ciphertext>,
}

/// `set_size` is the length of the evaluated vectors. Full responses carry
/// one ciphertext per position, cardinality responses exactly one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsiResponse {
    pub grid_id: GridId,
    pub mode: Mode,
    pub set_size: usize,
    pub payload: Vec<Ciphertext>,
}

fn bit(b: bool) -> BigUint {
    if b {
        BigUint::one()
    } else {
        BigUint::zero()
    }
}

pub fn client_prepare_query<R>(
    sk: &PrivateKey,
    v: &TrajectoryBitVector,
    mode: Mode,
    exec: Execution,
    rng: &mut R,
) -> Result<EncryptedQuery, ProtocolError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    let messages: Vec<BigUint> = v.bits().iter().map(|&b| bit(b)).collect();
    let ciphertexts = batch_encrypt_fast(sk, &messages, NonceExponent::Lambda, exec, rng)?;
    Ok(EncryptedQuery {
        pk: sk.public().clone(),
        grid_id: v.grid_id(),
        mode,
        ciphertexts,
    })
}

fn validate_query(
    q: &EncryptedQuery,
    server_bits: &TrajectoryBitVector,
    mode: Mode,
) -> Result<(), ProtocolError> {
    if q.mode != mode {
        return Err(ProtocolError::WrongMode {
            expected: mode,
            found: q.mode,
        });
    }
    if q.grid_id != server_bits.grid_id() {
        return Err(GridError::GridMismatch {
            left: q.grid_id,
            right: server_bits.grid_id(),
        }
        .into());
    }
    if q.ciphertexts.len() != server_bits.len() {
        return Err(ProtocolError::LengthMismatch(
            q.ciphertexts.len(),
            server_bits.len(),
        ));
    }
    for c in &q.ciphertexts {
        q.pk.check(c)?;
    }
    Ok(())
}

/// `d_i = c_i^{b_i} * Enc(0)` with a fresh encryption of zero per position.
pub fn server_eval_full<R>(
    q: &EncryptedQuery,
    server_bits: &TrajectoryBitVector,
    exec: Execution,
    rng: &mut R,
) -> Result<PsiResponse, ProtocolError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    validate_query(q, server_bits, Mode::Full)?;
    let pk = &q.pk;
    let positions: Vec<(&Ciphertext, bool)> = q
        .ciphertexts
        .iter()
        .zip(server_bits.bits().iter().copied())
        .collect();
    let payload = exec.map_with_rng(&positions, rng, |(c, b), local| {
        let raised = pk.scalar_mul(c, &bit(*b))?;
        let zero = pk.encrypt_zero(local)?;
        Ok::<_, ProtocolError>(pk.add(&raised, &zero)?)
    })?;
    Ok(PsiResponse {
        grid_id: q.grid_id,
        mode: Mode::Full,
        set_size: server_bits.len(),
        payload,
    })
}

/// `d = prod(c_i^{b_i}) * Enc(0)`: one ciphertext, one encryption of zero.
pub fn server_eval_cardinality<R>(
    q: &EncryptedQuery,
    server_bits: &TrajectoryBitVector,
    exec: Execution,
    rng: &mut R,
) -> Result<PsiResponse, ProtocolError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    validate_query(q, server_bits, Mode::Cardinality)?;
    let pk = &q.pk;
    let d = masked_product(pk, &q.ciphertexts, server_bits.bits(), exec, rng)?;
    Ok(PsiResponse {
        grid_id: q.grid_id,
        mode: Mode::Cardinality,
        set_size: server_bits.len(),
        payload: vec![d],
    })
}

fn masked_product<R>(
    pk: &PublicKey,
    ciphertexts: &[Ciphertext],
    exponents: &[bool],
    exec: Execution,
    rng: &mut R,
) -> Result<Ciphertext, ProtocolError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    let selected: Vec<BigUint> = ciphertexts
        .iter()
        .zip(exponents)
        .filter(|(_, &b)| b)
        .map(|(c, _)| c.value().clone())
        .collect();
    let n2 = pk.n_squared();
    let product = exec.reduce(selected, BigUint::one, |a, b| (a * b) % n2);
    let zero = pk.encrypt_zero(rng)?;
    Ok(pk.add(&pk.wrap(product), &zero)?)
}

fn expect_mode(found: Mode, expected: Mode) -> Result<(), ProtocolError> {
    if found != expected {
        return Err(ProtocolError::WrongMode { expected, found });
    }
    Ok(())
}

/// Decrypts a full response into the intersection indicator vector.
pub fn client_decode_full(
    sk: &PrivateKey,
    r: &PsiResponse,
    exec: Execution,
) -> Result<TrajectoryBitVector, ProtocolError> {
    expect_mode(r.mode, Mode::Full)?;
    if r.payload.len() != r.set_size {
        return Err(ProtocolError::LengthMismatch(r.payload.len(), r.set_size));
    }
    let bits = exec.map(&r.payload, |c| {
        let m = sk.decrypt(c)?;
        if m.is_zero() {
            Ok(false)
        } else if m.is_one() {
            Ok(true)
        } else {
            Err(ProtocolError::Violation(
                "full response decrypted to a value outside {0, 1}".into(),
            ))
        }
    })?;
    Ok(TrajectoryBitVector::from_bits(r.grid_id, bits))
}

/// Decrypts a cardinality response into `|A ∩ B|`.
pub fn client_decode_cardinality(sk: &PrivateKey, r: &PsiResponse) -> Result<usize, ProtocolError> {
    expect_mode(r.mode, Mode::Cardinality)?;
    if r.payload.len() != 1 {
        return Err(ProtocolError::LengthMismatch(r.payload.len(), 1));
    }
    let count = sk.decrypt(&r.payload[0])?;
    bounded_count(&count, r.set_size)
}

fn bounded_count(count: &BigUint, set_size: usize) -> Result<usize, ProtocolError> {
    if *count > BigUint::from(set_size) {
        return Err(ProtocolError::Violation(format!(
            "cardinality exceeds vector length {set_size}"
        )));
    }
    Ok(count.try_into().expect("bounded by set_size"))
}

/// What an evaluation without the `Enc(0)` factor gives away.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakReport {
    pub positions: usize,
    /// Positions with `b_i = 1` whose naive response equals the query ciphertext.
    pub naive_equal_to_query: usize,
    /// Positions with `b_i = 0` whose naive response is exactly 1.
    pub naive_equal_to_one: usize,
    /// Server bits read straight off the naive response, no key needed.
    pub recovered_server_bits: Vec<bool>,
    /// Positions where the rerandomized response equals the query ciphertext or 1.
    pub rerandomized_equalities: usize,
}

impl LeakReport {
    /// Every position follows the leak pattern.
    pub fn naive_leaks_everything(&self) -> bool {
        self.naive_equal_to_query + self.naive_equal_to_one == self.positions
    }
}

/// Evaluates a full query with and without rerandomization and compares the
/// responses to the query ciphertexts.
pub fn demonstrate_rerandomization_leak<R>(
    q: &EncryptedQuery,
    server_bits: &TrajectoryBitVector,
    rng: &mut R,
) -> Result<LeakReport, ProtocolError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    let full_query = EncryptedQuery {
        mode: Mode::Full,
        ..q.clone()
    };
    validate_query(&full_query, server_bits, Mode::Full)?;
    let pk = &q.pk;
    let one = pk.identity();
    let mut report = LeakReport {
        positions: q.ciphertexts.len(),
        naive_equal_to_query: 0,
        naive_equal_to_one: 0,
        recovered_server_bits: Vec::with_capacity(q.ciphertexts.len()),
        rerandomized_equalities: 0,
    };
    for (c, &b) in q.ciphertexts.iter().zip(server_bits.bits()) {
        let naive = pk.scalar_mul(c, &bit(b))?;
        if b && naive == *c {
            report.naive_equal_to_query += 1;
        }
        if !b && naive == one {
            report.naive_equal_to_one += 1;
        }
        report.recovered_server_bits.push(naive == *c);
    }
    let fresh = server_eval_full(&full_query, server_bits, Execution::Sequential, rng)?;
    report.rerandomized_equalities = fresh
        .payload
        .iter()
        .zip(&q.ciphertexts)
        .filter(|(d, c)| d == c || **d == one)
        .count();
    Ok(report)
}

/// The server's bit vector encrypted under the server's own key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishedVector {
    pub pk: PublicKey,
    pub grid_id: GridId,
    pub ciphertexts: Vec<Ciphertext>,
}

pub fn publish_encrypted_vector<R>(
    sk: &PrivateKey,
    v: &TrajectoryBitVector,
    exec: Execution,
    rng: &mut R,
) -> Result<PublishedVector, ProtocolError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    let q = client_prepare_query(sk, v, Mode::Full, exec, rng)?;
    Ok(PublishedVector {
        pk: q.pk,
        grid_id: q.grid_id,
        ciphertexts: q.ciphertexts,
    })
}

/// Client-side secrets needed to read the server's decryption of a blinded
/// response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlindState {
    /// Per-position multiplicative blinds in `[1, 2^64)`.
    Full { grid_id: GridId, blinds: Vec<u64> },
    /// One additive blind in `[0, n - set_size)`.
    Cardinality {
        blind: BigUint,
        modulus: BigUint,
        set_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unblinded {
    Intersection(TrajectoryBitVector),
    Cardinality(usize),
}

fn random_nonzero_u64<R>(rng: &mut R) -> Result<u64, PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    loop {
        let bytes = random_bytes(rng, 8)?;
        let s = u64::from_le_bytes(bytes.try_into().unwrap());
        if s != 0 {
            return Ok(s);
        }
    }
}

/// Evaluates against a published server vector on the client, then blinds.
///
/// Full mode multiplies each `d_i` by a secret scalar, so the server still
/// sees which positions are zero. Cardinality mode adds `Enc(b)` and hides
/// the count entirely.
pub fn client_eval_blinded<R>(
    published: &PublishedVector,
    client_bits: &TrajectoryBitVector,
    mode: Mode,
    exec: Execution,
    rng: &mut R,
) -> Result<(PsiResponse, BlindState), ProtocolError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    let as_query = EncryptedQuery {
        pk: published.pk.clone(),
        grid_id: published.grid_id,
        mode,
        ciphertexts: published.ciphertexts.clone(),
    };
    validate_query(&as_query, client_bits, mode)?;
    let pk = &published.pk;
    let set_size = client_bits.len();
    match mode {
        Mode::Full => {
            let positions: Vec<(&Ciphertext, bool)> = published
                .ciphertexts
                .iter()
                .zip(client_bits.bits().iter().copied())
                .collect();
            let blinded = exec.map_with_rng(&positions, rng, |(c, b), local| {
                let raised = pk.scalar_mul(c, &bit(*b))?;
                let d = pk.add(&raised, &pk.encrypt_zero(local)?)?;
                let s = random_nonzero_u64(local)?;
                Ok::<_, ProtocolError>((pk.scalar_mul(&d, &BigUint::from(s))?, s))
            })?;
            let (payload, blinds) = blinded.into_iter().unzip();
            Ok((
                PsiResponse {
                    grid_id: published.grid_id,
                    mode,
                    set_size,
                    payload,
                },
                BlindState::Full {
                    grid_id: published.grid_id,
                    blinds,
                },
            ))
        }
        Mode::Cardinality => {
            let room = pk.n() - BigUint::from(set_size);
            if room.is_zero() || room > *pk.n() {
                return Err(ProtocolError::Violation(
                    "modulus too small for vector".into(),
                ));
            }
            let d = masked_product(pk, &published.ciphertexts, client_bits.bits(), exec, rng)?;
            let blind = random_below(rng, &room)?;
            let blinded = pk.add(&d, &pk.encrypt(&blind, rng)?)?;
            Ok((
                PsiResponse {
                    grid_id: published.grid_id,
                    mode,
                    set_size,
                    payload: vec![blinded],
                },
                BlindState::Cardinality {
                    blind,
                    modulus: pk.n().clone(),
                    set_size,
                },
            ))
        }
    }
}

/// Server-side decryption of a blinded response.
pub fn server_decrypt(
    sk: &PrivateKey,
    ciphertexts: &[Ciphertext],
    exec: Execution,
) -> Result<Vec<BigUint>, ProtocolError> {
    exec.map(ciphertexts, |c| Ok(sk.decrypt(c)?))
}

pub fn client_unblind(
    state: &BlindState,
    decrypted: &[BigUint],
) -> Result<Unblinded, ProtocolError> {
    match state {
        BlindState::Full { grid_id, blinds } => {
            if decrypted.len() != blinds.len() {
                return Err(ProtocolError::LengthMismatch(decrypted.len(), blinds.len()));
            }
            let bits = decrypted
                .iter()
                .zip(blinds)
                .map(|(value, &s)| {
                    if value.is_zero() {
                        Ok(false)
                    } else if *value == BigUint::from(s) {
                        Ok(true)
                    } else {
                        Err(ProtocolError::Violation(
                            "blinded value is neither 0 nor the blind".into(),
                        ))
                    }
                })
                .collect::<Result<_, _>>()?;
            Ok(Unblinded::Intersection(TrajectoryBitVector::from_bits(
                *grid_id, bits,
            )))
        }
        BlindState::Cardinality {
            blind,
            modulus,
            set_size,
        } => {
            if decrypted.len() != 1 {
                return Err(ProtocolError::LengthMismatch(decrypted.len(), 1));
            }
            let value = &decrypted[0] % modulus;
            let count = (value + modulus - blind) % modulus;
            Ok(Unblinded::Cardinality(bounded_count(&count, *set_size)?))
        }
    }
}
