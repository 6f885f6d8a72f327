//! Desk-scale benchmark of the full protocol stack.
//!
//! Each cell runs one query in-process through the real wire encoding and the
//! query server's frame handler, checks the decoded answer against a plaintext
//! oracle, and only then records timings. Times are wall-clock seconds.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{CryptoRng, Rng, RngCore};
use serde::Serialize;

use crate::exec::Execution;
use crate::grid::{GridSpec, TrajectoryBitVector};
use crate::paillier::{keygen, PaillierError, PrivateKey};
use crate::psi::{self, Mode};
use crate::service::frame::framed_len;
use crate::service::wire::{Body, QueryBody, WireMessage};
use crate::service::{Role, Server, ServerSettings};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub set_size: usize,
    pub key_bits: u64,
    pub mode: &'static str,
    pub server_time: f64,
    pub client_encrypt_time: f64,
    pub client_decrypt_time: f64,
    /// Framed bytes sent by the client.
    pub bytes_up: u64,
    /// Framed bytes returned by the server.
    pub bytes_down: u64,
    /// Upload model `M * N` with `M` = one plaintext bit, in bytes.
    pub model_bytes_plain: u64,
    /// Upload model `M * N` with `M` = one ciphertext (`2 * key_bits`), in bytes.
    pub model_bytes_ciphertext: u64,
    pub worker_count: usize,
    pub timestamp: u64,
    /// `ok`, or why the cell's timings are void.
    pub status: String,
}

impl BenchResult {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// A grid of exactly `size` cells: one spatial cell, `size` one-second slots.
pub fn bench_grid(size: usize) -> GridSpec {
    GridSpec::new(0.0, 1.0, 0.0, 1.0, 1.0, 0, 1, size as u64).expect("valid bench grid")
}

fn random_vector(grid: &GridSpec, rng: &mut (impl Rng + ?Sized)) -> TrajectoryBitVector {
    let bits = (0..grid.total_cells()).map(|_| rng.gen()).collect();
    TrajectoryBitVector::from_bits(grid.grid_id(), bits)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs one (size, key, mode) cell. Failures are reported in `status`.
pub fn run_cell<R>(
    size: usize,
    sk: &PrivateKey,
    mode: Mode,
    exec: Execution,
    rng: &mut R,
) -> BenchResult
where
    R: RngCore + CryptoRng,
{
    let key_bits = sk.public().bits();
    let mut result = BenchResult {
        set_size: size,
        key_bits,
        mode: mode.as_str(),
        server_time: 0.0,
        client_encrypt_time: 0.0,
        client_decrypt_time: 0.0,
        bytes_up: 0,
        bytes_down: 0,
        model_bytes_plain: (size as u64).div_ceil(8),
        model_bytes_ciphertext: size as u64 * (2 * key_bits).div_ceil(8),
        worker_count: exec.worker_count(),
        timestamp: unix_now(),
        status: "ok".into(),
    };
    if let Err(status) = measure(&mut result, size, sk, mode, exec, rng) {
        result.status = status;
    }
    result
}

fn measure<R>(
    out: &mut BenchResult,
    size: usize,
    sk: &PrivateKey,
    mode: Mode,
    exec: Execution,
    rng: &mut R,
) -> Result<(), String>
where
    R: RngCore + CryptoRng,
{
    let grid = bench_grid(size);
    let mut settings = ServerSettings::new(Role::QueryServer, Some(grid.clone()));
    settings.quota = u32::MAX;
    settings.exec = exec;
    let server = Server::new(settings).map_err(|e| e.to_string())?;
    let infected = random_vector(&grid, rng);
    server
        .ingest_infected(&infected)
        .map_err(|e| e.to_string())?;
    let mine = random_vector(&grid, rng);

    let t = Instant::now();
    let query = psi::client_prepare_query(sk, &mine, mode, exec, rng).map_err(|e| e.to_string())?;
    let request = WireMessage::new(Body::Query(QueryBody::from_query(&query))).to_bytes();
    out.client_encrypt_time = t.elapsed().as_secs_f64();
    out.bytes_up = framed_len(request.len()) as u64;

    let t = Instant::now();
    let reply = server.handle_frame(&request);
    out.server_time = t.elapsed().as_secs_f64();
    out.bytes_down = framed_len(reply.len()) as u64;

    let t = Instant::now();
    let body = WireMessage::from_bytes(&reply)
        .map_err(|e| e.to_string())?
        .body;
    let Body::Response(r) = body else {
        return Err(format!("server replied {}", body.type_name()));
    };
    let response = r
        .to_response(sk.public(), size)
        .map_err(|e| e.to_string())?;
    let truth = mine.and(&infected).map_err(|e| e.to_string())?;
    let correct = match mode {
        Mode::Full => {
            psi::client_decode_full(sk, &response, exec).map_err(|e| e.to_string())? == truth
        }
        Mode::Cardinality => {
            psi::client_decode_cardinality(sk, &response).map_err(|e| e.to_string())?
                == truth.popcount()
        }
    };
    out.client_decrypt_time = t.elapsed().as_secs_f64();
    if !correct {
        return Err("oracle mismatch".into());
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub key_bits: Vec<u64>,
    pub modes: Vec<Mode>,
    pub exec: Execution,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: (10..=14).map(|e| 1usize << e).collect(),
            key_bits: vec![512, 1024],
            modes: vec![Mode::Full, Mode::Cardinality],
            exec: Execution::default(),
        }
    }
}

/// Runs every cell sequentially, one key per bit width.
pub fn run_matrix<R>(
    cfg: &BenchConfig,
    rng: &mut R,
    mut progress: impl FnMut(&BenchResult),
) -> Result<Vec<BenchResult>, PaillierError>
where
    R: RngCore + CryptoRng,
{
    let mut results = Vec::new();
    for &bits in &cfg.key_bits {
        let (_, sk) = keygen(bits, rng)?;
        for &mode in &cfg.modes {
            for &size in &cfg.sizes {
                let r = run_cell(size, &sk, mode, cfg.exec, rng);
                progress(&r);
                results.push(r);
            }
        }
    }
    Ok(results)
}

pub fn write_csv<W: Write>(w: W, results: &[BenchResult]) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in results {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trend {
    pub mode: &'static str,
    /// `"size"` when `from`/`to` are set sizes at fixed `held` key bits,
    /// `"bits"` when they are key sizes at fixed `held` set size.
    pub axis: &'static str,
    pub held: u64,
    pub from: u64,
    pub to: u64,
    pub ratio: f64,
}

/// Server-time ratios between neighbouring sizes and neighbouring key widths.
pub fn trends(results: &[BenchResult]) -> Vec<Trend> {
    let ok: Vec<&BenchResult> = results.iter().filter(|r| r.is_ok()).collect();
    let mut out = Vec::new();
    let mut by_bits: BTreeMap<(&str, u64), Vec<&BenchResult>> = BTreeMap::new();
    let mut by_size: BTreeMap<(&str, u64), Vec<&BenchResult>> = BTreeMap::new();
    for r in &ok {
        by_bits.entry((r.mode, r.key_bits)).or_default().push(r);
        by_size
            .entry((r.mode, r.set_size as u64))
            .or_default()
            .push(r);
    }
    for ((mode, bits), mut rows) in by_bits {
        rows.sort_by_key(|r| r.set_size);
        for w in rows.windows(2) {
            out.push(Trend {
                mode,
                axis: "size",
                held: bits,
                from: w[0].set_size as u64,
                to: w[1].set_size as u64,
                ratio: w[1].server_time / w[0].server_time,
            });
        }
    }
    for ((mode, size), mut rows) in by_size {
        rows.sort_by_key(|r| r.key_bits);
        for w in rows.windows(2) {
            out.push(Trend {
                mode,
                axis: "bits",
                held: size,
                from: w[0].key_bits,
                to: w[1].key_bits,
                ratio: w[1].server_time / w[0].server_time,
            });
        }
    }
    out
}
