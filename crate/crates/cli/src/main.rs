use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use geopsi::bench::{self, BenchConfig};
use geopsi::grid::{GpsPoint, GridError, GridSpec, TrajectoryBitVector};
use geopsi::paillier::{keygen, keygen_insecure, KeyId, PrivateKey, PublicKey};
use geopsi::psi::{Mode, Unblinded};
use geopsi::service::{Client, QueryOutcome, Server, ServerConfig};
use geopsi::Execution;
use rand::rngs::OsRng;

const PUBLIC_KEY_FILE: &str = "public.key";
const PRIVATE_KEY_FILE: &str = "private.key";

/// Exit status when a query finds at least one shared cell.
const EXIT_EXPOSED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "geopsi",
    version,
    about = "Private location intersection over Paillier encryption"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum QueryMode {
    Full,
    Card,
}

impl From<QueryMode> for Mode {
    fn from(m: QueryMode) -> Mode {
        match m {
            QueryMode::Full => Mode::Full,
            QueryMode::Card => Mode::Cardinality,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    Full,
    Card,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Paillier key pair into DIR/public.key and DIR/private.key.
    Keygen {
        #[arg(long, default_value_t = 1024)]
        bits: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite existing key files.
        #[arg(long)]
        force: bool,
        /// Allow key sizes below 256 bits (tests and demos only).
        #[arg(long)]
        insecure: bool,
    },
    /// Encode a GPS trace (CSV with header lat,lon,timestamp) into a bit-vector file.
    Encode {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip points outside the grid instead of failing.
        #[arg(long)]
        skip_oob: bool,
    },
    /// Query a query server. Exit status 0 = no exposure, 2 = exposure, 1 = error.
    Query {
        #[arg(long)]
        server: String,
        /// Directory holding public.key and private.key.
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        bitvec: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        mode: QueryMode,
        /// Grid spec, used to print coordinates and time slots of matches.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Evaluate on-device against a decryption server's published vector.
    /// Same exit status contract as `query`.
    BlindedQuery {
        #[arg(long)]
        server: String,
        /// Client token registered with the decryption server.
        #[arg(long)]
        token: String,
        #[arg(long)]
        bitvec: PathBuf,
        #[arg(long, value_enum, default_value = "card")]
        mode: QueryMode,
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Submit an infected trajectory (health-authority path).
    Ingest {
        #[arg(long)]
        server: String,
        #[arg(long)]
        token: String,
        #[arg(long)]
        bitvec: PathBuf,
    },
    /// Register a public key with a key-exchange server.
    KeysPut {
        #[arg(long)]
        server: String,
        /// Public key file.
        #[arg(long)]
        key: PathBuf,
    },
    /// Fetch a public key from a key-exchange server.
    KeysGet {
        #[arg(long)]
        server: String,
        /// 16 hex digits.
        #[arg(long)]
        key_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a server from a TOML config file.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Time the protocol over a matrix of set sizes and key sizes.
    Bench {
        /// Comma list of sizes; `2^10..2^14` expands to every power of two in range.
        #[arg(long, default_value = "2^10..2^14")]
        sizes: String,
        #[arg(long, default_value = "512,1024", value_delimiter = ',')]
        bits: Vec<u64>,
        #[arg(long, value_enum, default_value = "both")]
        mode: BenchMode,
        /// CSV output path. Defaults to standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Evaluate positions on one thread.
        #[arg(long)]
        sequential: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Keygen {
            bits,
            out,
            force,
            insecure,
        } => cmd_keygen(bits, &out, force, insecure).map(|_| 0),
        Command::Encode {
            grid,
            csv,
            out,
            skip_oob,
        } => cmd_encode(&grid, &csv, &out, skip_oob).map(|_| 0),
        Command::Query {
            server,
            keys,
            bitvec,
            mode,
            grid,
        } => cmd_query(&server, &keys, &bitvec, mode.into(), grid.as_deref()),
        Command::BlindedQuery {
            server,
            token,
            bitvec,
            mode,
            grid,
        } => cmd_blinded_query(&server, &token, &bitvec, mode.into(), grid.as_deref()),
        Command::Ingest {
            server,
            token,
            bitvec,
        } => {
            let v = read_bitvec(&bitvec)?;
            Client::connect(&server)?.ingest(&token, &v)?;
            println!("ingested {} cells ({} set)", v.len(), v.popcount());
            Ok(0)
        }
        Command::KeysPut { server, key } => {
            let pk = read_public_key(&key)?;
            Client::connect(&server)?.put_key(&pk)?;
            println!("registered key {}", pk.key_id());
            Ok(0)
        }
        Command::KeysGet {
            server,
            key_id,
            out,
        } => {
            let id = KeyId::from_hex(&key_id).context("--key-id")?;
            let pk = Client::connect(&server)?.get_key(id)?;
            fs::write(&out, pk.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote key {} to {}", pk.key_id(), out.display());
            Ok(0)
        }
        Command::Serve { config } => cmd_serve(&config).map(|_| 0),
        Command::Bench {
            sizes,
            bits,
            mode,
            csv,
            sequential,
        } => cmd_bench(&sizes, bits, mode, csv.as_deref(), sequential).map(|_| 0),
    }
}

fn cmd_keygen(bits: u64, out: &Path, force: bool, insecure: bool) -> Result<()> {
    let public = out.join(PUBLIC_KEY_FILE);
    let private = out.join(PRIVATE_KEY_FILE);
    if !force {
        for path in [&public, &private] {
            ensure!(
                !path.exists(),
                "{} exists; pass --force to overwrite",
                path.display()
            );
        }
    }
    let (pk, sk) = if insecure {
        keygen_insecure(bits, &mut OsRng)?
    } else {
        keygen(bits, &mut OsRng)?
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(&public, pk.to_bytes())?;
    fs::write(&private, sk.to_bytes())?;
    println!(
        "key {} ({bits} bits) written to {}",
        pk.key_id(),
        out.display()
    );
    Ok(())
}

fn cmd_encode(grid_path: &Path, csv_path: &Path, out: &Path, skip_oob: bool) -> Result<()> {
    let grid = read_grid(grid_path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(str::to_ascii_lowercase)
        .collect();
    ensure!(
        header == ["lat", "lon", "timestamp"],
        "{}: header must be lat,lon,timestamp",
        csv_path.display()
    );
    let mut v = grid.empty_vector();
    let mut skipped = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let point = parse_point(&record).with_context(|| format!("line {line}"))?;
        match grid.cell_index(&point) {
            Ok(i) => v.set(i, true),
            Err(e @ GridError::OutOfBounds { .. }) if skip_oob => {
                eprintln!("line {line}: skipped, {e}");
                skipped += 1;
            }
            Err(e) => return Err(e).with_context(|| format!("line {line}")),
        }
    }
    fs::write(out, v.to_file_bytes()).with_context(|| format!("writing {}", out.display()))?;
    println!("popcount {} of {} cells", v.popcount(), v.len());
    if skipped > 0 {
        println!("skipped {skipped} out-of-bounds points");
    }
    Ok(())
}

fn parse_point(record: &csv::StringRecord) -> Result<GpsPoint> {
    ensure!(
        record.len() == 3,
        "expected 3 fields, found {}",
        record.len()
    );
    let lat: f64 = record[0].parse().context("lat")?;
    let lon: f64 = record[1].parse().context("lon")?;
    let timestamp: i64 = record[2].parse().context("timestamp")?;
    Ok(GpsPoint::new(lat, lon, timestamp)?)
}

fn cmd_query(
    server: &str,
    keys: &Path,
    bitvec: &Path,
    mode: Mode,
    grid: Option<&Path>,
) -> Result<u8> {
    let sk = read_private_key(&keys.join(PRIVATE_KEY_FILE))?;
    let v = read_bitvec(bitvec)?;
    let grid = grid.map(read_grid).transpose()?;
    let mut client = Client::connect(server)?;
    let outcome = client.query(&sk, &v, mode, Execution::default(), &mut OsRng)?;
    let found = match outcome {
        QueryOutcome::Intersection(hits) => report_matches(&hits, grid.as_ref())?,
        QueryOutcome::Cardinality(count) => report_count(count),
    };
    Ok(if found > 0 { EXIT_EXPOSED } else { 0 })
}

fn cmd_blinded_query(
    server: &str,
    token: &str,
    bitvec: &Path,
    mode: Mode,
    grid: Option<&Path>,
) -> Result<u8> {
    let v = read_bitvec(bitvec)?;
    let grid = grid.map(read_grid).transpose()?;
    let mut client = Client::connect(server)?;
    let found = match client.blinded_query(token, &v, mode, Execution::default(), &mut OsRng)? {
        Unblinded::Intersection(hits) => report_matches(&hits, grid.as_ref())?,
        Unblinded::Cardinality(count) => report_count(count),
    };
    Ok(if found > 0 { EXIT_EXPOSED } else { 0 })
}

fn report_count(count: usize) -> usize {
    println!("{count} matches");
    count
}

fn report_matches(hits: &TrajectoryBitVector, grid: Option<&GridSpec>) -> Result<usize> {
    if let Some(g) = grid {
        ensure!(
            g.grid_id() == hits.grid_id(),
            "--grid does not match the bit vector"
        );
    }
    for i in hits.ones() {
        match grid {
            Some(g) => {
                let c = g.coords_of(i);
                println!(
                    "cell {i}: slot {} [{}, {}) lat [{}, {}) lon [{}, {})",
                    c.time_slot,
                    g.slot_start(c.time_slot),
                    g.slot_start(c.time_slot + 1),
                    g.row_edge(c.row),
                    g.row_edge(c.row + 1),
                    g.col_edge(c.col),
                    g.col_edge(c.col + 1),
                );
            }
            None => println!("cell {i}"),
        }
    }
    Ok(report_count(hits.popcount()))
}

fn cmd_serve(config: &Path) -> Result<()> {
    let cfg =
        ServerConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    let server = Arc::new(Server::from_config(&cfg)?);
    let listener =
        TcpListener::bind(&cfg.listen).with_context(|| format!("binding {}", cfg.listen))?;
    if let Some(pk) = server.server_public_key() {
        eprintln!("server key {}", pk.key_id());
    }
    // Scripts read the bound address from this line; nothing else goes to stdout.
    println!("{:?} listening on {}", cfg.role, listener.local_addr()?);
    std::io::stdout().flush()?;
    server.serve(listener)?;
    Ok(())
}

/// Parses `1024,2^12,2^13..2^15` into a list of sizes.
fn parse_sizes(spec: &str) -> Result<Vec<usize>> {
    fn one(s: &str) -> Result<usize> {
        let s = s.trim();
        match s.split_once('^') {
            Some(("2", e)) => {
                let e: u32 = e
                    .parse()
                    .with_context(|| format!("bad exponent in {s:?}"))?;
                ensure!(e < 40, "size {s} is too large");
                Ok(1usize << e)
            }
            Some(_) => bail!("only powers of two may use ^: {s:?}"),
            None => s.parse().with_context(|| format!("bad size {s:?}")),
        }
    }
    let mut sizes = Vec::new();
    for item in spec.split(',') {
        match item.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (one(lo)?, one(hi)?);
                ensure!(lo.is_power_of_two() && lo <= hi, "bad range {item:?}");
                let mut s = lo;
                while s <= hi {
                    sizes.push(s);
                    s *= 2;
                }
            }
            None => sizes.push(one(item)?),
        }
    }
    ensure!(sizes.iter().all(|&s| s > 0), "sizes must be positive");
    Ok(sizes)
}

fn cmd_bench(
    sizes: &str,
    bits: Vec<u64>,
    mode: BenchMode,
    csv: Option<&Path>,
    sequential: bool,
) -> Result<()> {
    let cfg = BenchConfig {
        sizes: parse_sizes(sizes)?,
        key_bits: bits,
        modes: match mode {
            BenchMode::Full => vec![Mode::Full],
            BenchMode::Card => vec![Mode::Cardinality],
            BenchMode::Both => vec![Mode::Full, Mode::Cardinality],
        },
        exec: if sequential {
            Execution::Sequential
        } else {
            Execution::default()
        },
    };
    let results = bench::run_matrix(&cfg, &mut OsRng, |r| {
        eprintln!(
            "{:>11} {:>6} bits {:>7} cells: server {:.3}s encrypt {:.3}s decrypt {:.3}s [{}]",
            r.mode,
            r.key_bits,
            r.set_size,
            r.server_time,
            r.client_encrypt_time,
            r.client_decrypt_time,
            r.status
        );
    })?;
    match csv {
        Some(path) => {
            let file =
                fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            bench::write_csv(file, &results)?;
        }
        None => bench::write_csv(std::io::stdout().lock(), &results)?,
    }
    for t in bench::trends(&results) {
        let label = if t.axis == "size" { "bits" } else { "cells" };
        eprintln!(
            "trend {} {}: {} -> {} at {} {label}: server time x{:.2}",
            t.mode, t.axis, t.from, t.to, t.held, t.ratio
        );
    }
    let failed = results.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} cells failed; see the status column");
    }
    Ok(())
}

fn read_grid(path: &Path) -> Result<GridSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GridSpec::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_bitvec(path: &Path) -> Result<TrajectoryBitVector> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    TrajectoryBitVector::from_file_bytes(&bytes)
        .with_context(|| format!("parsing {}", path.display()))
}

fn read_public_key(path: &Path) -> Result<PublicKey> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    PublicKey::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn read_private_key(path: &Path) -> Result<PrivateKey> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    PrivateKey::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}
