//! Acceptance suite. Runs every criterion in order inside one test so timing
//! measurements are not disturbed by other tests, and prints one PASS/FAIL
//! line per criterion. Set `ACCEPTANCE_ONLY=1,6` to run a subset while
//! developing; skipped criteria print SKIP and the full run is still required.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, ChildStdout, Command, Stdio};
use std::sync::{Arc, Barrier, OnceLock};
use std::thread;
use std::time::Instant;

use geopsi::bench::{self, BenchResult};
use geopsi::grid::{GridId, TrajectoryBitVector};
use geopsi::paillier::{
    batch_encrypt_fast, keygen, Ciphertext, NonceExponent, PrivateKey, PublicKey,
};
use geopsi::psi::{self, BlindState, Mode, Unblinded};
use geopsi::service::ledger::Operation;
use geopsi::service::wire::*;
use geopsi::service::{Client, Role, Server, ServerSettings};
use geopsi::Execution;
use num_bigint::{BigUint, RandBigInt};
use rand::distributions::{Alphanumeric, DistString};
use rand::rngs::OsRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn report(line: &str) {
    // Direct writes bypass the test harness's output capture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn key512() -> &'static PrivateKey {
    static KEY: OnceLock<PrivateKey> = OnceLock::new();
    KEY.get_or_init(|| keygen(512, &mut OsRng).unwrap().1)
}

fn grid_id_for(len: usize) -> GridId {
    bench::bench_grid(len).grid_id()
}

fn random_vector(len: usize, rng: &mut impl Rng) -> TrajectoryBitVector {
    TrajectoryBitVector::from_bits(grid_id_for(len), (0..len).map(|_| rng.gen()).collect())
}

/// Plaintext oracle: elementwise AND computed on raw bools.
fn and_oracle(a: &TrajectoryBitVector, b: &TrajectoryBitVector) -> Vec<bool> {
    a.bits()
        .iter()
        .zip(b.bits())
        .map(|(x, y)| *x && *y)
        .collect()
}

fn popcount_oracle(a: &TrajectoryBitVector, b: &TrajectoryBitVector) -> usize {
    and_oracle(a, b).into_iter().filter(|x| *x).count()
}

/// One corpus pair per index, lengths cycling through 4, 64 and 1024.
fn corpus_pair(i: usize, rng: &mut impl Rng) -> (TrajectoryBitVector, TrajectoryBitVector) {
    let len = [4, 64, 1024][i % 3];
    (random_vector(len, rng), random_vector(len, rng))
}

const CORPUS_PAIRS: usize = 1000;

fn criterion_1() -> Outcome {
    let sk = key512();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut positions = 0;
    for i in 0..CORPUS_PAIRS {
        let (a, b) = corpus_pair(i, &mut rng);
        let q = psi::client_prepare_query(sk, &a, Mode::Full, Execution::default(), &mut OsRng)
            .unwrap();
        let r = psi::server_eval_full(&q, &b, Execution::default(), &mut OsRng).unwrap();
        let decoded = psi::client_decode_full(sk, &r, Execution::default()).unwrap();
        positions += a.len();
        mismatches += decoded
            .bits()
            .iter()
            .zip(and_oracle(&a, &b))
            .filter(|(x, y)| **x != *y)
            .count();
    }
    check(
        mismatches == 0,
        format!("{CORPUS_PAIRS} pairs, {positions} positions, {mismatches} mismatched bits"),
    )
}

fn criterion_2() -> Outcome {
    let sk = key512();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut wrong = 0;
    for i in 0..CORPUS_PAIRS {
        let (a, b) = corpus_pair(i, &mut rng);
        let q =
            psi::client_prepare_query(sk, &a, Mode::Cardinality, Execution::default(), &mut OsRng)
                .unwrap();
        let r = psi::server_eval_cardinality(&q, &b, Execution::default(), &mut OsRng).unwrap();
        if psi::client_decode_cardinality(sk, &r).unwrap() != popcount_oracle(&a, &b) {
            wrong += 1;
        }
    }
    check(
        wrong == 0,
        format!("{CORPUS_PAIRS} pairs (same corpus), {wrong} wrong counts"),
    )
}

fn criterion_3() -> Outcome {
    let sk = key512();
    let vectors: Vec<TrajectoryBitVector> = (0..16u8)
        .map(|m| {
            TrajectoryBitVector::from_bits(
                grid_id_for(4),
                (0..4).map(|i| m >> i & 1 == 1).collect(),
            )
        })
        .collect();
    let mut wrong = 0;
    let mut pairs = 0;
    for a in &vectors {
        let full_q =
            psi::client_prepare_query(sk, a, Mode::Full, Execution::default(), &mut OsRng).unwrap();
        let card_q =
            psi::client_prepare_query(sk, a, Mode::Cardinality, Execution::default(), &mut OsRng)
                .unwrap();
        for b in &vectors {
            pairs += 1;
            let r = psi::server_eval_full(&full_q, b, Execution::default(), &mut OsRng).unwrap();
            if psi::client_decode_full(sk, &r, Execution::default())
                .unwrap()
                .bits()
                != and_oracle(a, b)
            {
                wrong += 1;
            }
            let r =
                psi::server_eval_cardinality(&card_q, b, Execution::default(), &mut OsRng).unwrap();
            if psi::client_decode_cardinality(sk, &r).unwrap() != popcount_oracle(a, b) {
                wrong += 1;
            }
        }
    }
    check(
        pairs == 256 && wrong == 0,
        format!("{pairs} pairs x 2 modes, {wrong} disagreements"),
    )
}

/// `(1 + n)^m * r^n mod n^2` by repeated multiplication on machine words.
fn toy_encrypt(n: u64, m: u64, r: u64) -> u64 {
    let n2 = n * n;
    let mut c = 1;
    for _ in 0..m {
        c = c * (n + 1) % n2;
    }
    for _ in 0..n {
        c = c * r % n2;
    }
    c
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn criterion_4() -> Outcome {
    let sk = key512();
    let pk = sk.public();
    let n = pk.n();
    let n2 = pk.n_squared();
    let mut failures = 0;
    for _ in 0..1000 {
        let (m1, m2) = (OsRng.gen_biguint_below(n), OsRng.gen_biguint_below(n));
        let (c1, c2) = (
            pk.encrypt(&m1, &mut OsRng).unwrap(),
            pk.encrypt(&m2, &mut OsRng).unwrap(),
        );
        // Product of the raw values, computed here rather than by the library.
        let product = Ciphertext::from_raw(c1.value() * c2.value() % n2, pk.key_id());
        let sum = (&m1 + &m2) % n;
        if sk.decrypt(&product).unwrap() != sum
            || sk.decrypt(&pk.add(&c1, &c2).unwrap()).unwrap() != sum
        {
            failures += 1;
        }

        let (m, s) = (OsRng.gen_biguint_below(n), OsRng.gen_biguint_below(n));
        let c = pk.encrypt(&m, &mut OsRng).unwrap();
        let power = Ciphertext::from_raw(c.value().modpow(&s, n2), pk.key_id());
        let scaled = (&m * &s) % n;
        if sk.decrypt(&power).unwrap() != scaled
            || sk.decrypt(&pk.scalar_mul(&c, &s).unwrap()).unwrap() != scaled
        {
            failures += 1;
        }
    }

    let toy = PrivateKey::from_primes(5u32.into(), 7u32.into()).unwrap();
    let toy_pk = toy.public();
    let mut toy_failures = 0;
    let mut toy_cases = 0;
    for m in 0..35u64 {
        for r in (1..35u64).filter(|r| gcd(*r, 35) == 1) {
            toy_cases += 1;
            let c = toy_pk.encrypt_with_nonce(&m.into(), &r.into()).unwrap();
            let ok = c.value() == &BigUint::from(toy_encrypt(35, m, r))
                && toy.decrypt(&c).unwrap() == BigUint::from(m)
                && toy.decrypt_direct(&c).unwrap() == BigUint::from(m);
            if !ok {
                toy_failures += 1;
            }
        }
    }
    check(
        failures == 0 && toy_failures == 0,
        format!(
            "1000 add + 1000 scalar cases: {failures} failures; toy n=35: {toy_cases} (m, r) round trips, {toy_failures} failures"
        ),
    )
}

fn criterion_5() -> Outcome {
    let sk = key512();
    let pk = sk.public();
    let one = BigUint::from(1u32);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (mut bad_naive, mut rerandomized_hits, mut positions) = (0, 0, 0);
    for _ in 0..100 {
        let len = rng.gen_range(8..=64);
        let (a, b) = (random_vector(len, &mut rng), random_vector(len, &mut rng));
        let q = psi::client_prepare_query(sk, &a, Mode::Full, Execution::default(), &mut OsRng)
            .unwrap();
        positions += len;
        // Naive evaluation done here on raw values: d_i = c_i^{b_i} mod n^2.
        for (c, &bit) in q.ciphertexts.iter().zip(b.bits()) {
            let d = c.value().modpow(&BigUint::from(bit as u8), pk.n_squared());
            let expected = if bit { c.value() } else { &one };
            if d != *expected {
                bad_naive += 1;
            }
        }
        let report = psi::demonstrate_rerandomization_leak(&q, &b, &mut OsRng).unwrap();
        if !report.naive_leaks_everything() || report.recovered_server_bits != b.bits() {
            bad_naive += 1;
        }
        let r = psi::server_eval_full(&q, &b, Execution::default(), &mut OsRng).unwrap();
        rerandomized_hits += r
            .payload
            .iter()
            .zip(&q.ciphertexts)
            .filter(|(d, c)| d.value() == c.value() || d.value() == &one)
            .count();
        rerandomized_hits += report.rerandomized_equalities;
    }
    check(
        bad_naive == 0 && rerandomized_hits == 0,
        format!(
            "100 instances, {positions} positions: naive leak pattern broken at {bad_naive}, equalities with rerandomization {rerandomized_hits}"
        ),
    )
}

/// Fastest of `reps` verified cells.
fn min_server_time(size: usize, sk: &PrivateKey, reps: usize) -> Result<f64, String> {
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let r: BenchResult =
            bench::run_cell(size, sk, Mode::Full, Execution::default(), &mut OsRng);
        if !r.is_ok() {
            return Err(format!("cell {size}/{} failed: {}", r.key_bits, r.status));
        }
        best = best.min(r.server_time);
    }
    Ok(best)
}

fn criterion_6() -> Outcome {
    let sk512 = key512();
    let sk1024 = keygen(1024, &mut OsRng).unwrap().1;
    let t10 = min_server_time(1 << 10, sk512, 3)?;
    let t11 = min_server_time(1 << 11, sk512, 3)?;
    let t10_1024 = min_server_time(1 << 10, &sk1024, 3)?;
    let size_ratio = t11 / t10;
    let bits_ratio = t10_1024 / t10;
    check(
        (1.5..=3.0).contains(&size_ratio) && (3.0..=10.0).contains(&bits_ratio),
        format!(
            "2^11/2^10 at 512 bits = {size_ratio:.2} (want [1.5, 3.0]); 1024/512 bits at 2^10 = {bits_ratio:.2} (want [3, 10]); \
             server times {t10:.3}s, {t11:.3}s, {t10_1024:.3}s"
        ),
    )
}

/// Size of a RESPONSE frame holding exactly one ciphertext, built by hand.
fn one_ciphertext_frame(pk: &PublicKey, grid_id: GridId) -> u64 {
    let ct = pk.encrypt(&BigUint::from(0u32), &mut OsRng).unwrap();
    let json = format!(
        r#"{{"version":1,"type":"RESPONSE","body":{{"grid_id":"{}","mode":"CARDINALITY","payload":["{}"]}}}}"#,
        grid_id.to_hex(),
        b64(&ct.to_bytes(pk))
    );
    4 + json.len() as u64
}

fn criterion_7() -> Outcome {
    let sk = key512();
    let mut details = Vec::new();
    let mut ok = true;
    for size in [1usize << 10, 1 << 14] {
        let r = bench::run_cell(
            size,
            sk,
            Mode::Cardinality,
            Execution::default(),
            &mut OsRng,
        );
        let expected = one_ciphertext_frame(sk.public(), grid_id_for(size));
        ok &= r.is_ok() && r.bytes_down == expected;
        details.push(format!(
            "N={size}: bytes_down {} (one-ciphertext frame {expected}, bytes_up {})",
            r.bytes_down, r.bytes_up
        ));
    }
    check(ok, details.join("; "))
}

fn criterion_8() -> Outcome {
    let sk = key512();
    let grid = bench::bench_grid(16);
    let a = random_vector(16, &mut OsRng);
    let q = psi::client_prepare_query(sk, &a, Mode::Cardinality, Execution::default(), &mut OsRng)
        .unwrap();
    let request = Arc::new(WireMessage::new(Body::Query(QueryBody::from_query(&q))));
    let mut bad_trials = Vec::new();
    for trial in 0..100 {
        let mut settings = ServerSettings::new(Role::QueryServer, Some(grid.clone()));
        settings.quota = 1;
        let server = Arc::new(Server::new(settings).unwrap());
        let (addr, _) = server.clone().spawn("127.0.0.1:0").unwrap();
        let barrier = Arc::new(Barrier::new(10));
        let handles: Vec<_> = (0..10)
            .map(|_| {
                let (request, barrier) = (request.clone(), barrier.clone());
                thread::spawn(move || {
                    let mut client = Client::connect(addr).unwrap();
                    barrier.wait();
                    client.request(&request).unwrap()
                })
            })
            .collect();
        let replies: Vec<WireMessage> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let ok = replies
            .iter()
            .filter(|m| matches!(m.body, Body::Response(_)))
            .count();
        let limited = replies
            .iter()
            .filter(|m| matches!(&m.body, Body::Error(e) if e.code == ErrorCode::RateLimited))
            .count();
        let used = server.quota_used(Operation::Query, &sk.key_id().to_hex());
        if (ok, limited, used) != (1, 9, 1) {
            bad_trials.push(format!(
                "trial {trial}: {ok} ok, {limited} limited, ledger {used}"
            ));
        }
    }
    check(
        bad_trials.is_empty(),
        format!("100 trials of 10 concurrent queries at quota 1; bad trials: {bad_trials:?}"),
    )
}

fn criterion_9() -> Outcome {
    let server_sk = key512();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let (mut wrong, mut unmasked, mut zero_blinds) = (0, 0, 0);
    for _ in 0..100 {
        let len = rng.gen_range(4..=128);
        let (a, b) = (random_vector(len, &mut rng), random_vector(len, &mut rng));
        let published =
            psi::publish_encrypted_vector(server_sk, &b, Execution::default(), &mut OsRng).unwrap();
        let (response, state) = psi::client_eval_blinded(
            &published,
            &a,
            Mode::Cardinality,
            Execution::default(),
            &mut OsRng,
        )
        .unwrap();
        let seen = psi::server_decrypt(server_sk, &response.payload, Execution::default()).unwrap();
        let truth = popcount_oracle(&a, &b);
        if psi::client_unblind(&state, &seen).unwrap() != Unblinded::Cardinality(truth) {
            wrong += 1;
        }
        let BlindState::Cardinality { blind, .. } = &state else {
            return Err("cardinality evaluation returned a full-mode blind state".into());
        };
        let zero = BigUint::from(0u32);
        if *blind == zero {
            zero_blinds += 1;
        } else if seen[0] == BigUint::from(truth) {
            unmasked += 1;
        }
        if seen[0].clone() - blind != BigUint::from(truth) {
            wrong += 1;
        }
    }
    check(
        wrong == 0 && unmasked == 0,
        format!(
            "100 instances: {wrong} wrong unblinded counts, {unmasked} server views equal to the true count with b != 0 ({zero_blinds} zero blinds)"
        ),
    )
}

fn random_text(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(0..24);
    if rng.gen_bool(0.5) {
        Alphanumeric.sample_string(rng, len)
    } else {
        (0..len).map(|_| rng.gen::<char>()).collect()
    }
}

fn random_blob(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(0..160);
    b64(&(0..len).map(|_| rng.gen()).collect::<Vec<u8>>())
}

fn random_blobs(rng: &mut impl Rng) -> Vec<String> {
    (0..rng.gen_range(0..8)).map(|_| random_blob(rng)).collect()
}

fn random_hex(rng: &mut impl Rng) -> String {
    format!("{:016x}", rng.gen::<u64>())
}

fn random_body(kind: usize, rng: &mut impl Rng) -> Body {
    let mode = ["FULL", "CARDINALITY"][rng.gen_range(0..2)].to_string();
    match kind {
        0 => Body::Query(QueryBody {
            public_key: random_blob(rng),
            grid_id: random_hex(rng),
            mode,
            ciphertexts: random_blobs(rng),
        }),
        1 => Body::Response(ResponseBody {
            grid_id: random_hex(rng),
            mode,
            payload: random_blobs(rng),
        }),
        2 => Body::Ingest(IngestBody {
            token: random_text(rng),
            trajectory: random_blob(rng),
        }),
        3 => Body::KeysGet(KeysGetBody {
            key_id: random_hex(rng),
        }),
        4 => Body::KeysPut(KeysPutBody {
            public_key: random_blob(rng),
        }),
        5 => Body::KeysResp(KeysRespBody {
            key_id: random_hex(rng),
            public_key: random_blob(rng),
        }),
        6 => Body::VectorGet(VectorGetBody {}),
        7 => Body::VectorResp(VectorRespBody {
            public_key: random_blob(rng),
            grid_id: random_hex(rng),
            ciphertexts: random_blobs(rng),
        }),
        8 => Body::DecryptReq(DecryptReqBody {
            client_token: random_text(rng),
            key_id: random_hex(rng),
            ciphertexts: random_blobs(rng),
        }),
        9 => Body::DecryptResp(DecryptRespBody {
            plaintexts: random_blobs(rng),
        }),
        10 => Body::Ack(AckBody {
            detail: random_text(rng),
        }),
        _ => {
            let codes = [
                ErrorCode::RateLimited,
                ErrorCode::BadGrid,
                ErrorCode::Malformed,
                ErrorCode::UnknownType,
                ErrorCode::BadVersion,
                ErrorCode::WrongRole,
                ErrorCode::Unauthorized,
                ErrorCode::NotFound,
                ErrorCode::Conflict,
                ErrorCode::KeyMismatch,
                ErrorCode::Internal,
            ];
            Body::Error(ErrorBody {
                code: codes[rng.gen_range(0..codes.len())],
                message: random_text(rng),
            })
        }
    }
}

struct ServerProcess {
    child: Child,
    addr: String,
    _stdout: BufReader<ChildStdout>,
}

impl ServerProcess {
    fn start(config: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_geopsi"))
            .args(["serve", "--config", config.to_str().unwrap()])
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .rsplit_once("listening on ")
            .expect("banner")
            .1
            .to_string();
        ServerProcess {
            child,
            addr,
            _stdout: stdout,
        }
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_geopsi"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run geopsi")
        .status
        .success()
}

fn criterion_10() -> Outcome {
    const PER_TYPE: usize = 1000;
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let mut failures = 0;
    for kind in 0..12 {
        for _ in 0..PER_TYPE {
            let msg = WireMessage::new(random_body(kind, &mut rng));
            let bytes = msg.to_bytes();
            match WireMessage::from_bytes(&bytes) {
                Ok(back) if back == msg && back.to_bytes() == bytes => {}
                _ => failures += 1,
            }
        }
    }

    // Key exchange across three processes: server, uploader, downloader.
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("kx.toml");
    fs::write(
        &config,
        "listen = \"127.0.0.1:0\"\nrole = \"KEY_EXCHANGE\"\n",
    )
    .unwrap();
    let server = ServerProcess::start(&config);
    let keys = dir.path().join("keys");
    let fetched = dir.path().join("fetched.key");
    let keys_arg = keys.to_str().unwrap();
    let public = keys.join("public.key");
    let generated = cli(&["keygen", "--bits", "512", "--out", keys_arg]);
    let put = generated
        && cli(&[
            "keys-put",
            "--server",
            &server.addr,
            "--key",
            public.to_str().unwrap(),
        ]);
    let original = fs::read(&public).unwrap_or_default();
    let key_id = PublicKey::from_bytes(&original)
        .map(|pk| pk.key_id().to_hex())
        .unwrap_or_default();
    let got = put
        && cli(&[
            "keys-get",
            "--server",
            &server.addr,
            "--key-id",
            &key_id,
            "--out",
            fetched.to_str().unwrap(),
        ]);
    let downloaded = fs::read(&fetched).unwrap_or_default();
    let identical = got && downloaded == original;
    let usable = identical && {
        let pk = PublicKey::from_bytes(&downloaded).unwrap();
        let sk = PrivateKey::from_bytes(&fs::read(keys.join("private.key")).unwrap()).unwrap();
        let m = OsRng.gen_biguint_below(pk.n());
        sk.decrypt(&pk.encrypt(&m, &mut OsRng).unwrap()).unwrap() == m
    };
    check(
        failures == 0 && identical && usable,
        format!(
            "{PER_TYPE} random messages x 12 types, {failures} round-trip failures; cross-process key exchange byte-identical: {identical}, usable: {usable}"
        ),
    )
}

fn criterion_11() -> Outcome {
    let sk = key512();
    let pk = sk.public();
    let messages: Vec<BigUint> = (0..1 << 10)
        .map(|_| OsRng.gen_biguint_below(pk.n()))
        .collect();
    let fast = batch_encrypt_fast(
        sk,
        &messages,
        NonceExponent::Lambda,
        Execution::default(),
        &mut OsRng,
    )
    .unwrap();
    let mut wrong = 0;
    for (m, c) in messages.iter().zip(&fast) {
        let standard = pk.encrypt(m, &mut OsRng).unwrap();
        let fast_plain = sk.decrypt(c).unwrap();
        if fast_plain != *m
            || sk.decrypt_direct(c).unwrap() != *m
            || sk.decrypt(&standard).unwrap() != fast_plain
        {
            wrong += 1;
        }
    }
    let mut distinct: Vec<&BigUint> = fast.iter().map(|c| c.value()).collect();
    distinct.sort();
    distinct.dedup();
    check(
        wrong == 0 && distinct.len() == fast.len(),
        format!("{} messages: {wrong} disagree with plaintext or standard encryption; {} distinct ciphertexts", fast.len(), distinct.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 11] = [
        ("full PSI oracle equivalence", criterion_1),
        ("cardinality oracle equivalence", criterion_2),
        ("exhaustive length-4 pairs", criterion_3),
        ("homomorphic identities and toy key", criterion_4),
        ("rerandomization leak demonstration", criterion_5),
        ("scaling trend", criterion_6),
        ("cardinality response size", criterion_7),
        ("rate limiting under concurrency", criterion_8),
        ("blinded cardinality", criterion_9),
        ("wire round trip and key exchange", criterion_10),
        ("fast batch encryption equivalence", criterion_11),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&number)) {
            report(&format!("criterion {number:>2} SKIP {name}"));
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => report(&format!(
                "criterion {number:>2} PASS {name}: {detail} [{secs:.1}s]"
            )),
            Err(detail) => {
                report(&format!(
                    "criterion {number:>2} FAIL {name}: {detail} [{secs:.1}s]"
                ));
                failed.push(number);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
