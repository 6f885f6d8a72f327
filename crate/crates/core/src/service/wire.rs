//! Version-1 wire messages.
//!
//! A message is a JSON object `{"version": 1, "type": "...", "body": {...}}`.
//! Big integers, keys and bit vectors travel as fixed-width big-endian bytes in
//! padded standard base64. The field-by-field schema is in `docs/wire.md`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridId, TrajectoryBitVector};
use crate::paillier::{to_fixed_be, Ciphertext, KeyId, PublicKey};
use crate::psi::{EncryptedQuery, Mode, PsiResponse, PublishedVector};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("unsupported protocol version {0}")]
    BadVersion(u32),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("malformed message: {0}")]
    Malformed(String),
}

impl WireError {
    pub fn code(&self) -> ErrorCode {
        match self {
            WireError::BadVersion(_) => ErrorCode::BadVersion,
            WireError::UnknownType(_) => ErrorCode::UnknownType,
            WireError::Malformed(_) => ErrorCode::Malformed,
        }
    }
}

fn malformed(e: impl std::fmt::Display) -> WireError {
    WireError::Malformed(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    RateLimited,
    BadGrid,
    Malformed,
    UnknownType,
    BadVersion,
    WrongRole,
    Unauthorized,
    NotFound,
    Conflict,
    KeyMismatch,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::RateLimited => "RATE_LIMITED",
            ErrorCode::BadGrid => "BAD_GRID",
            ErrorCode::Malformed => "MALFORMED",
            ErrorCode::UnknownType => "UNKNOWN_TYPE",
            ErrorCode::BadVersion => "BAD_VERSION",
            ErrorCode::WrongRole => "WRONG_ROLE",
            ErrorCode::Unauthorized => "UNAUTHORIZED",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::Conflict => "CONFLICT",
            ErrorCode::KeyMismatch => "KEY_MISMATCH",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBody {
    pub public_key: String,
    pub grid_id: String,
    pub mode: String,
    pub ciphertexts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseBody {
    pub grid_id: String,
    pub mode: String,
    pub payload: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestBody {
    pub token: String,
    /// Bit-vector file bytes.
    pub trajectory: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeysGetBody {
    pub key_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeysPutBody {
    pub public_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeysRespBody {
    pub key_id: String,
    pub public_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorGetBody {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorRespBody {
    pub public_key: String,
    pub grid_id: String,
    pub ciphertexts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecryptReqBody {
    pub client_token: String,
    pub key_id: String,
    pub ciphertexts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecryptRespBody {
    pub plaintexts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AckBody {
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Query(QueryBody),
    Response(ResponseBody),
    Ingest(IngestBody),
    KeysGet(KeysGetBody),
    KeysPut(KeysPutBody),
    KeysResp(KeysRespBody),
    VectorGet(VectorGetBody),
    VectorResp(VectorRespBody),
    DecryptReq(DecryptReqBody),
    DecryptResp(DecryptRespBody),
    Ack(AckBody),
    Error(ErrorBody),
}

impl Body {
    pub fn type_name(&self) -> &'static str {
        match self {
            Body::Query(_) => "QUERY",
            Body::Response(_) => "RESPONSE",
            Body::Ingest(_) => "INGEST",
            Body::KeysGet(_) => "KEYS_GET",
            Body::KeysPut(_) => "KEYS_PUT",
            Body::KeysResp(_) => "KEYS_RESP",
            Body::VectorGet(_) => "VECTOR_GET",
            Body::VectorResp(_) => "VECTOR_RESP",
            Body::DecryptReq(_) => "DECRYPT_REQ",
            Body::DecryptResp(_) => "DECRYPT_RESP",
            Body::Ack(_) => "ACK",
            Body::Error(_) => "ERROR",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawMessage {
    version: u32,
    #[serde(rename = "type")]
    kind: String,
    body: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub version: u32,
    pub body: Body,
}

impl WireMessage {
    pub fn new(body: Body) -> Self {
        WireMessage {
            version: PROTOCOL_VERSION,
            body,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Self::new(Body::Error(ErrorBody {
            code,
            message: message.into(),
        }))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let body = match &self.body {
            Body::Query(b) => serde_json::to_value(b),
            Body::Response(b) => serde_json::to_value(b),
            Body::Ingest(b) => serde_json::to_value(b),
            Body::KeysGet(b) => serde_json::to_value(b),
            Body::KeysPut(b) => serde_json::to_value(b),
            Body::KeysResp(b) => serde_json::to_value(b),
            Body::VectorGet(b) => serde_json::to_value(b),
            Body::VectorResp(b) => serde_json::to_value(b),
            Body::DecryptReq(b) => serde_json::to_value(b),
            Body::DecryptResp(b) => serde_json::to_value(b),
            Body::Ack(b) => serde_json::to_value(b),
            Body::Error(b) => serde_json::to_value(b),
        }
        .expect("bodies are plain data");
        let raw = RawMessage {
            version: self.version,
            kind: self.body.type_name().to_string(),
            body,
        };
        serde_json::to_vec(&raw).expect("plain data serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let raw: RawMessage = serde_json::from_slice(bytes).map_err(malformed)?;
        if raw.version != PROTOCOL_VERSION {
            return Err(WireError::BadVersion(raw.version));
        }
        fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, WireError> {
            serde_json::from_value(v).map_err(malformed)
        }
        let body = match raw.kind.as_str() {
            "QUERY" => Body::Query(parse(raw.body)?),
            "RESPONSE" => Body::Response(parse(raw.body)?),
            "INGEST" => Body::Ingest(parse(raw.body)?),
            "KEYS_GET" => Body::KeysGet(parse(raw.body)?),
            "KEYS_PUT" => Body::KeysPut(parse(raw.body)?),
            "KEYS_RESP" => Body::KeysResp(parse(raw.body)?),
            "VECTOR_GET" => Body::VectorGet(parse(raw.body)?),
            "VECTOR_RESP" => Body::VectorResp(parse(raw.body)?),
            "DECRYPT_REQ" => Body::DecryptReq(parse(raw.body)?),
            "DECRYPT_RESP" => Body::DecryptResp(parse(raw.body)?),
            "ACK" => Body::Ack(parse(raw.body)?),
            "ERROR" => Body::Error(parse(raw.body)?),
            other => return Err(WireError::UnknownType(other.to_string())),
        };
        Ok(WireMessage {
            version: raw.version,
            body,
        })
    }
}

pub fn b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn unb64(s: &str) -> Result<Vec<u8>, WireError> {
    STANDARD.decode(s).map_err(malformed)
}

fn parse_grid_id(s: &str) -> Result<GridId, WireError> {
    GridId::from_hex(s).ok_or_else(|| malformed("grid_id must be 16 hex digits"))
}

pub fn parse_key_id(s: &str) -> Result<KeyId, WireError> {
    KeyId::from_hex(s).map_err(malformed)
}

fn parse_mode(s: &str) -> Result<Mode, WireError> {
    Mode::parse(s).ok_or_else(|| malformed(format!("unknown mode {s:?}")))
}

pub fn parse_public_key(s: &str) -> Result<PublicKey, WireError> {
    PublicKey::from_bytes(&unb64(s)?).map_err(malformed)
}

pub fn encode_ciphertexts(pk: &PublicKey, cts: &[Ciphertext]) -> Vec<String> {
    cts.iter().map(|c| b64(&c.to_bytes(pk))).collect()
}

/// Decodes ciphertexts and requires every one to carry `pk`'s key id.
pub fn decode_ciphertexts(pk: &PublicKey, items: &[String]) -> Result<Vec<Ciphertext>, WireError> {
    items
        .iter()
        .map(|s| {
            let c = Ciphertext::from_bytes(pk, &unb64(s)?).map_err(malformed)?;
            if c.key_id() != pk.key_id() {
                return Err(malformed(format!(
                    "ciphertext tagged {} inside message for key {}",
                    c.key_id(),
                    pk.key_id()
                )));
            }
            Ok(c)
        })
        .collect()
}

impl QueryBody {
    pub fn from_query(q: &EncryptedQuery) -> Self {
        QueryBody {
            public_key: b64(&q.pk.to_bytes()),
            grid_id: q.grid_id.to_hex(),
            mode: q.mode.as_str().to_string(),
            ciphertexts: encode_ciphertexts(&q.pk, &q.ciphertexts),
        }
    }

    pub fn to_query(&self) -> Result<EncryptedQuery, WireError> {
        let pk = parse_public_key(&self.public_key)?;
        let ciphertexts = decode_ciphertexts(&pk, &self.ciphertexts)?;
        Ok(EncryptedQuery {
            grid_id: parse_grid_id(&self.grid_id)?,
            mode: parse_mode(&self.mode)?,
            ciphertexts,
            pk,
        })
    }
}

impl ResponseBody {
    pub fn from_response(pk: &PublicKey, r: &PsiResponse) -> Self {
        ResponseBody {
            grid_id: r.grid_id.to_hex(),
            mode: r.mode.as_str().to_string(),
            payload: encode_ciphertexts(pk, &r.payload),
        }
    }

    /// `pk` is the querying client's key, under which the payload was
    /// produced, and `set_size` the length of the vector it queried with. The
    /// length is not sent, so a cardinality reply has the same size for every
    /// vector length.
    pub fn to_response(&self, pk: &PublicKey, set_size: usize) -> Result<PsiResponse, WireError> {
        Ok(PsiResponse {
            grid_id: parse_grid_id(&self.grid_id)?,
            mode: parse_mode(&self.mode)?,
            set_size,
            payload: decode_ciphertexts(pk, &self.payload)?,
        })
    }
}

impl IngestBody {
    pub fn new(token: &str, v: &TrajectoryBitVector) -> Self {
        IngestBody {
            token: token.to_string(),
            trajectory: b64(&v.to_file_bytes()),
        }
    }

    pub fn trajectory(&self) -> Result<TrajectoryBitVector, WireError> {
        TrajectoryBitVector::from_file_bytes(&unb64(&self.trajectory)?).map_err(malformed)
    }
}

impl VectorRespBody {
    pub fn from_published(p: &PublishedVector) -> Self {
        VectorRespBody {
            public_key: b64(&p.pk.to_bytes()),
            grid_id: p.grid_id.to_hex(),
            ciphertexts: encode_ciphertexts(&p.pk, &p.ciphertexts),
        }
    }

    pub fn to_published(&self) -> Result<PublishedVector, WireError> {
        let pk = parse_public_key(&self.public_key)?;
        Ok(PublishedVector {
            grid_id: parse_grid_id(&self.grid_id)?,
            ciphertexts: decode_ciphertexts(&pk, &self.ciphertexts)?,
            pk,
        })
    }
}

impl DecryptRespBody {
    pub fn from_plaintexts(pk: &PublicKey, values: &[BigUint]) -> Self {
        DecryptRespBody {
            plaintexts: values
                .iter()
                .map(|v| b64(&to_fixed_be(v, pk.plaintext_len())))
                .collect(),
        }
    }

    pub fn plaintexts(&self) -> Result<Vec<BigUint>, WireError> {
        self.plaintexts
            .iter()
            .map(|s| Ok(BigUint::from_bytes_be(&unb64(s)?)))
            .collect()
    }
}
