use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::{SystemTime, UNIX_EPOCH};

use log::{debug, info, warn};
use rand::rngs::OsRng;

use super::config::{Role, ServerConfig};
use super::frame::{read_frame, write_frame};
use super::ledger::{Operation, RateLedger};
use super::wire::{
    b64, decode_ciphertexts, parse_key_id, parse_public_key, unb64, AckBody, Body, DecryptReqBody,
    DecryptRespBody, ErrorCode, IngestBody, KeysGetBody, KeysPutBody, KeysRespBody, QueryBody,
    ResponseBody, VectorRespBody, WireMessage,
};
use super::ServiceError;
use crate::exec::Execution;
use crate::grid::{GridSpec, TrajectoryBitVector};
use crate::paillier::{keygen, KeyId, PrivateKey, PublicKey};
use crate::psi::{self, Mode, PublishedVector};

const INFECTED_FILE: &str = "infected.tbv";
const LEDGER_FILE: &str = "ledger.txt";
const KEYS_FILE: &str = "keys.txt";
const SERVER_KEY_FILE: &str = "server.key";

type Clock = Box<dyn Fn() -> u64 + Send + Sync>;

/// Everything a [`Server`] needs, already loaded.
pub struct ServerSettings {
    pub role: Role,
    pub grid: Option<GridSpec>,
    pub ingest_token: Option<String>,
    pub client_tokens: Vec<String>,
    pub quota: u32,
    pub window_secs: u64,
    /// Required for [`Role::DecryptServer`].
    pub server_key: Option<PrivateKey>,
    pub state_dir: Option<PathBuf>,
    pub exec: Execution,
}

impl ServerSettings {
    pub fn new(role: Role, grid: Option<GridSpec>) -> Self {
        ServerSettings {
            role,
            grid,
            ingest_token: None,
            client_tokens: Vec::new(),
            quota: 1,
            window_secs: 86_400,
            server_key: None,
            state_dir: None,
            exec: Execution::default(),
        }
    }
}

type Reply = Result<Body, (ErrorCode, String)>;

fn fail<T>(code: ErrorCode, message: impl Into<String>) -> Result<T, (ErrorCode, String)> {
    Err((code, message.into()))
}

pub struct Server {
    role: Role,
    grid: Option<GridSpec>,
    ingest_token: Option<String>,
    client_tokens: Vec<String>,
    infected: RwLock<Option<Arc<TrajectoryBitVector>>>,
    ledger: Mutex<RateLedger>,
    keys: RwLock<BTreeMap<KeyId, Vec<u8>>>,
    server_key: Option<PrivateKey>,
    published: Mutex<Option<Arc<PublishedVector>>>,
    state_dir: Option<PathBuf>,
    exec: Execution,
    clock: Clock,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

impl Server {
    pub fn new(settings: ServerSettings) -> Result<Self, ServiceError> {
        let ServerSettings {
            role,
            grid,
            ingest_token,
            client_tokens,
            quota,
            window_secs,
            server_key,
            state_dir,
            exec,
        } = settings;
        if role != Role::KeyExchange && grid.is_none() {
            return Err(ServiceError::Config("grid required for this role".into()));
        }
        if role == Role::DecryptServer && server_key.is_none() {
            return Err(ServiceError::Config(
                "decrypt server needs a key pair".into(),
            ));
        }
        if client_tokens
            .iter()
            .any(|t| t.is_empty() || t.contains(char::is_whitespace))
        {
            return Err(ServiceError::Config(
                "client tokens must be non-empty words".into(),
            ));
        }

        let mut infected = match (&grid, role) {
            (Some(g), Role::QueryServer | Role::DecryptServer) => Some(g.empty_vector()),
            _ => None,
        };
        let mut ledger = RateLedger::new(quota, window_secs);
        let mut keys = BTreeMap::new();

        if let Some(dir) = &state_dir {
            fs::create_dir_all(dir)?;
            if let (Some(current), Ok(bytes)) = (&infected, fs::read(dir.join(INFECTED_FILE))) {
                let saved = TrajectoryBitVector::from_file_bytes(&bytes)?;
                if saved.grid_id() != current.grid_id() || saved.len() != current.len() {
                    return Err(ServiceError::Config(
                        "saved infected vector belongs to a different grid".into(),
                    ));
                }
                infected = Some(saved);
            }
            if let Ok(text) = fs::read_to_string(dir.join(LEDGER_FILE)) {
                ledger = RateLedger::from_text(&text, quota, window_secs)
                    .map_err(ServiceError::Config)?;
            }
            if role == Role::KeyExchange {
                if let Ok(text) = fs::read_to_string(dir.join(KEYS_FILE)) {
                    for line in text.lines().filter(|l| !l.trim().is_empty()) {
                        let bytes =
                            unb64(line.trim()).map_err(|e| ServiceError::Config(e.to_string()))?;
                        let pk = PublicKey::from_bytes(&bytes)?;
                        keys.insert(pk.key_id(), bytes);
                    }
                }
            }
        }

        Ok(Server {
            role,
            grid,
            ingest_token,
            client_tokens,
            infected: RwLock::new(infected.map(Arc::new)),
            ledger: Mutex::new(ledger),
            keys: RwLock::new(keys),
            server_key,
            published: Mutex::new(None),
            state_dir,
            exec,
            clock: Box::new(unix_now),
        })
    }

    /// Loads grid, snapshots and (for the decrypt role) the server key,
    /// generating and saving a key on first start.
    pub fn from_config(cfg: &ServerConfig) -> Result<Self, ServiceError> {
        let grid = match &cfg.grid {
            Some(path) => Some(GridSpec::parse(&fs::read_to_string(path)?)?),
            None => None,
        };
        let server_key = if cfg.role == Role::DecryptServer {
            let saved = cfg.state_dir.as_ref().map(|d| d.join(SERVER_KEY_FILE));
            match saved.as_ref().and_then(|p| fs::read(p).ok()) {
                Some(bytes) => Some(PrivateKey::from_bytes(&bytes)?),
                None => {
                    let (_, sk) = keygen(cfg.key_bits, &mut OsRng)?;
                    if let Some(path) = saved {
                        fs::create_dir_all(path.parent().unwrap())?;
                        write_atomic(&path, &sk.to_bytes())?;
                    }
                    Some(sk)
                }
            }
        } else {
            None
        };
        Server::new(ServerSettings {
            role: cfg.role,
            grid,
            ingest_token: cfg.ingest_token.clone(),
            client_tokens: cfg.client_tokens.clone(),
            quota: cfg.rate_limit.quota,
            window_secs: cfg.rate_limit.window_secs,
            server_key,
            state_dir: cfg.state_dir.clone(),
            exec: Execution::default(),
        })
    }

    /// Replaces the wall clock (UNIX seconds) used for rate limiting.
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }

    pub fn server_public_key(&self) -> Option<&PublicKey> {
        self.server_key.as_ref().map(|sk| sk.public())
    }

    /// Consistent snapshot of the aggregated infected vector.
    pub fn infected_snapshot(&self) -> Option<Arc<TrajectoryBitVector>> {
        self.infected.read().unwrap().clone()
    }

    pub fn quota_used(&self, op: Operation, identity: &str) -> u32 {
        self.ledger.lock().unwrap().used(op, identity)
    }

    /// Decodes one frame payload and returns the encoded reply.
    pub fn handle_frame(&self, bytes: &[u8]) -> Vec<u8> {
        let reply = match WireMessage::from_bytes(bytes) {
            Ok(msg) => self.handle_message(&msg),
            Err(e) => {
                debug!("rejecting frame: {}", e.code().as_str());
                WireMessage::error(e.code(), e.to_string())
            }
        };
        reply.to_bytes()
    }

    pub fn handle_message(&self, msg: &WireMessage) -> WireMessage {
        let reply = match (self.role, &msg.body) {
            (Role::QueryServer, Body::Query(q)) => self.handle_query(q),
            (Role::QueryServer | Role::DecryptServer, Body::Ingest(b)) => self.ingest(b),
            (Role::DecryptServer, Body::VectorGet(_)) => self.published_vector(),
            (Role::DecryptServer, Body::DecryptReq(b)) => self.handle_decrypt(b),
            (Role::KeyExchange, Body::KeysPut(b)) => self.key_exchange_put(b),
            (Role::KeyExchange, Body::KeysGet(b)) => self.key_exchange_get(b),
            (role, body) => fail(
                ErrorCode::WrongRole,
                format!("{} is not accepted by a {role:?} server", body.type_name()),
            ),
        };
        match reply {
            Ok(body) => WireMessage::new(body),
            Err((code, message)) => {
                info!("{} -> {}", msg.body.type_name(), code.as_str());
                WireMessage::error(code, message)
            }
        }
    }

    fn now(&self) -> u64 {
        (self.clock)()
    }

    fn acquire(&self, op: Operation, identity: &str) -> Result<(), (ErrorCode, String)> {
        let mut ledger = self.ledger.lock().unwrap();
        if let Err(limited) = ledger.try_acquire(op, identity, self.now()) {
            return fail(
                ErrorCode::RateLimited,
                format!("quota exhausted, retry in {}s", limited.retry_after),
            );
        }
        self.persist(LEDGER_FILE, ledger.to_text().as_bytes());
        Ok(())
    }

    fn persist(&self, file: &str, bytes: &[u8]) {
        if let Some(dir) = &self.state_dir {
            if let Err(e) = write_atomic(&dir.join(file), bytes) {
                warn!("could not snapshot {file}: {e}");
            }
        }
    }

    fn handle_query(&self, body: &QueryBody) -> Reply {
        let query = body
            .to_query()
            .or_else(|e| fail(ErrorCode::Malformed, e.to_string()))?;
        let snapshot = self
            .infected_snapshot()
            .expect("query server holds a vector");
        if query.grid_id != snapshot.grid_id() || query.ciphertexts.len() != snapshot.len() {
            return fail(ErrorCode::BadGrid, "query does not match the server grid");
        }
        let identity = query.pk.key_id().to_hex();
        self.acquire(Operation::Query, &identity)?;
        let result = match query.mode {
            Mode::Full => psi::server_eval_full(&query, &snapshot, self.exec, &mut OsRng),
            Mode::Cardinality => {
                psi::server_eval_cardinality(&query, &snapshot, self.exec, &mut OsRng)
            }
        };
        let response = result.or_else(|e| fail(ErrorCode::Malformed, e.to_string()))?;
        info!(
            "query from {identity}: mode {} over {} cells",
            query.mode.as_str(),
            query.ciphertexts.len()
        );
        Ok(Body::Response(ResponseBody::from_response(
            &query.pk, &response,
        )))
    }

    /// Merges an infected trajectory into the server vector.
    pub fn ingest_infected(&self, v: &TrajectoryBitVector) -> Result<(), ServiceError> {
        let mut guard = self.infected.write().unwrap();
        let current = guard
            .as_ref()
            .ok_or(ServiceError::Config("role keeps no vector".into()))?;
        let merged = current.merge_or(v)?;
        self.persist(INFECTED_FILE, &merged.to_file_bytes());
        *guard = Some(Arc::new(merged));
        *self.published.lock().unwrap() = None;
        Ok(())
    }

    fn ingest(&self, body: &IngestBody) -> Reply {
        match &self.ingest_token {
            Some(t) if *t == body.token => {}
            _ => return fail(ErrorCode::Unauthorized, "bad ingestion token"),
        }
        let v = body
            .trajectory()
            .or_else(|e| fail(ErrorCode::Malformed, e.to_string()))?;
        self.ingest_infected(&v).or_else(|_| {
            fail(
                ErrorCode::BadGrid,
                "trajectory does not match the server grid",
            )
        })?;
        info!("ingested one infected trajectory");
        Ok(Body::Ack(AckBody {
            detail: "ingested".into(),
        }))
    }

    /// The infected vector encrypted under the server key, cached until the
    /// next ingestion.
    pub fn publish(&self) -> Result<Arc<PublishedVector>, ServiceError> {
        let mut cache = self.published.lock().unwrap();
        if let Some(p) = cache.as_ref() {
            return Ok(p.clone());
        }
        let sk = self
            .server_key
            .as_ref()
            .ok_or(ServiceError::Config("no server key".into()))?;
        let snapshot = self
            .infected_snapshot()
            .expect("decrypt server holds a vector");
        let published = Arc::new(psi::publish_encrypted_vector(
            sk, &snapshot, self.exec, &mut OsRng,
        )?);
        *cache = Some(published.clone());
        Ok(published)
    }

    fn published_vector(&self) -> Reply {
        let p = self
            .publish()
            .or_else(|e| fail(ErrorCode::Internal, e.to_string()))?;
        Ok(Body::VectorResp(VectorRespBody::from_published(&p)))
    }

    fn handle_decrypt(&self, body: &DecryptReqBody) -> Reply {
        let sk = self.server_key.as_ref().expect("decrypt server has a key");
        let token = &body.client_token;
        if token.is_empty() || token.contains(char::is_whitespace) {
            return fail(
                ErrorCode::Malformed,
                "client token must be a non-empty word",
            );
        }
        if !self.client_tokens.is_empty() && !self.client_tokens.contains(token) {
            return fail(ErrorCode::Unauthorized, "unknown client token");
        }
        let key_id =
            parse_key_id(&body.key_id).or_else(|e| fail(ErrorCode::Malformed, e.to_string()))?;
        if key_id != sk.key_id() {
            return fail(
                ErrorCode::KeyMismatch,
                "ciphertexts are not under this server's key",
            );
        }
        let cts = decode_ciphertexts(sk.public(), &body.ciphertexts)
            .or_else(|e| fail(ErrorCode::Malformed, e.to_string()))?;
        self.acquire(Operation::Decrypt, &format!("token:{token}"))?;
        let plain = psi::server_decrypt(sk, &cts, self.exec)
            .or_else(|e| fail(ErrorCode::Malformed, e.to_string()))?;
        info!("decrypted {} values for one client", cts.len());
        Ok(Body::DecryptResp(DecryptRespBody::from_plaintexts(
            sk.public(),
            &plain,
        )))
    }

    fn key_exchange_put(&self, body: &KeysPutBody) -> Reply {
        let pk = parse_public_key(&body.public_key)
            .or_else(|e| fail(ErrorCode::Malformed, e.to_string()))?;
        let bytes = pk.to_bytes();
        let mut keys = self.keys.write().unwrap();
        if let Some(existing) = keys.get(&pk.key_id()) {
            if *existing != bytes {
                return fail(ErrorCode::Conflict, "key id already bound to other bytes");
            }
        } else {
            keys.insert(pk.key_id(), bytes);
            let text: String = keys.values().map(|k| format!("{}\n", b64(k))).collect();
            self.persist(KEYS_FILE, text.as_bytes());
        }
        info!("registered key {}", pk.key_id());
        Ok(Body::Ack(AckBody {
            detail: pk.key_id().to_hex(),
        }))
    }

    fn key_exchange_get(&self, body: &KeysGetBody) -> Reply {
        let key_id =
            parse_key_id(&body.key_id).or_else(|e| fail(ErrorCode::Malformed, e.to_string()))?;
        match self.keys.read().unwrap().get(&key_id) {
            Some(bytes) => Ok(Body::KeysResp(KeysRespBody {
                key_id: key_id.to_hex(),
                public_key: b64(bytes),
            })),
            None => fail(ErrorCode::NotFound, format!("no key {key_id}")),
        }
    }

    /// Serves connections until the listener fails. One thread per connection.
    pub fn serve(self: Arc<Self>, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let server = self.clone();
            thread::spawn(move || {
                if let Err(e) = server.handle_connection(stream) {
                    debug!("connection closed: {e}");
                }
            });
        }
        Ok(())
    }

    /// Binds `addr` and serves on a background thread.
    pub fn spawn(
        self: Arc<Self>,
        addr: impl ToSocketAddrs,
    ) -> io::Result<(SocketAddr, JoinHandle<io::Result<()>>)> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let handle = thread::spawn(move || self.serve(listener));
        Ok((local, handle))
    }

    fn handle_connection(&self, stream: TcpStream) -> io::Result<()> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        while let Some(frame) = read_frame(&mut reader)? {
            let reply = self.handle_frame(&frame);
            write_frame(&mut writer, &reply)?;
        }
        Ok(())
    }
}
