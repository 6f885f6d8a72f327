use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};

use super::frame::{framed_len, read_frame, write_frame};
use super::wire::{
    b64, parse_public_key, Body, DecryptReqBody, ErrorBody, ErrorCode, IngestBody, KeysGetBody,
    KeysPutBody, QueryBody, VectorGetBody, WireMessage,
};
use super::ClientError;
use crate::exec::Execution;
use crate::grid::TrajectoryBitVector;
use crate::paillier::{KeyId, PrivateKey, PublicKey};
use crate::psi::{self, Mode, PublishedVector, Unblinded};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryOutcome {
    Intersection(TrajectoryBitVector),
    Cardinality(usize),
}

/// Blocking client over one framed TCP connection. Counts framed bytes in
/// both directions.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    bytes_up: u64,
    bytes_down: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            bytes_up: 0,
            bytes_down: 0,
        })
    }

    pub fn bytes_up(&self) -> u64 {
        self.bytes_up
    }

    pub fn bytes_down(&self) -> u64 {
        self.bytes_down
    }

    /// Sends one message and waits for the reply. `ERROR` replies are
    /// returned as messages, not errors.
    pub fn request(&mut self, msg: &WireMessage) -> Result<WireMessage, ClientError> {
        let out = msg.to_bytes();
        write_frame(&mut self.writer, &out)?;
        self.bytes_up += framed_len(out.len()) as u64;
        let reply = read_frame(&mut self.reader)?.ok_or(ClientError::Closed)?;
        self.bytes_down += framed_len(reply.len()) as u64;
        Ok(WireMessage::from_bytes(&reply)?)
    }

    fn call(&mut self, body: Body) -> Result<Body, ClientError> {
        match self.request(&WireMessage::new(body))?.body {
            Body::Error(ErrorBody { code, message }) => Err(ClientError::Server { code, message }),
            other => Ok(other),
        }
    }

    /// Encrypts `v`, queries the server and decodes the answer.
    pub fn query<R>(
        &mut self,
        sk: &PrivateKey,
        v: &TrajectoryBitVector,
        mode: Mode,
        exec: Execution,
        rng: &mut R,
    ) -> Result<QueryOutcome, ClientError>
    where
        R: RngCore + CryptoRng + ?Sized,
    {
        let q = psi::client_prepare_query(sk, v, mode, exec, rng)?;
        let body = self.call(Body::Query(QueryBody::from_query(&q)))?;
        let Body::Response(r) = body else {
            return Err(ClientError::Unexpected(body.type_name()));
        };
        let response = r.to_response(sk.public(), v.len())?;
        if response.grid_id != v.grid_id() || response.mode != mode {
            return Err(ClientError::Protocol(psi::ProtocolError::Violation(
                "response does not answer this query".into(),
            )));
        }
        Ok(match mode {
            Mode::Full => QueryOutcome::Intersection(psi::client_decode_full(sk, &response, exec)?),
            Mode::Cardinality => {
                QueryOutcome::Cardinality(psi::client_decode_cardinality(sk, &response)?)
            }
        })
    }

    pub fn ingest(&mut self, token: &str, v: &TrajectoryBitVector) -> Result<(), ClientError> {
        match self.call(Body::Ingest(IngestBody::new(token, v)))? {
            Body::Ack(_) => Ok(()),
            other => Err(ClientError::Unexpected(other.type_name())),
        }
    }

    pub fn put_key(&mut self, pk: &PublicKey) -> Result<(), ClientError> {
        let body = Body::KeysPut(KeysPutBody {
            public_key: b64(&pk.to_bytes()),
        });
        match self.call(body)? {
            Body::Ack(_) => Ok(()),
            other => Err(ClientError::Unexpected(other.type_name())),
        }
    }

    /// Fetches a key and checks that it hashes to the requested id.
    pub fn get_key(&mut self, key_id: KeyId) -> Result<PublicKey, ClientError> {
        let body = Body::KeysGet(KeysGetBody {
            key_id: key_id.to_hex(),
        });
        match self.call(body)? {
            Body::KeysResp(r) => {
                let pk = parse_public_key(&r.public_key)?;
                if pk.key_id() != key_id {
                    return Err(ClientError::Unexpected("KEYS_RESP for another key"));
                }
                Ok(pk)
            }
            other => Err(ClientError::Unexpected(other.type_name())),
        }
    }

    pub fn fetch_published(&mut self) -> Result<PublishedVector, ClientError> {
        match self.call(Body::VectorGet(VectorGetBody {}))? {
            Body::VectorResp(r) => Ok(r.to_published()?),
            other => Err(ClientError::Unexpected(other.type_name())),
        }
    }

    pub fn decrypt_remote(
        &mut self,
        token: &str,
        pk: &PublicKey,
        ciphertexts: &[crate::paillier::Ciphertext],
    ) -> Result<Vec<BigUint>, ClientError> {
        let body = Body::DecryptReq(DecryptReqBody {
            client_token: token.to_string(),
            key_id: pk.key_id().to_hex(),
            ciphertexts: super::wire::encode_ciphertexts(pk, ciphertexts),
        });
        match self.call(body)? {
            Body::DecryptResp(r) => {
                let values = r.plaintexts()?;
                if values.len() != ciphertexts.len() {
                    return Err(ClientError::Unexpected("DECRYPT_RESP with wrong count"));
                }
                Ok(values)
            }
            other => Err(ClientError::Unexpected(other.type_name())),
        }
    }

    /// On-device evaluation: fetch the published vector, evaluate and blind
    /// locally, have the server decrypt, unblind.
    pub fn blinded_query<R>(
        &mut self,
        token: &str,
        v: &TrajectoryBitVector,
        mode: Mode,
        exec: Execution,
        rng: &mut R,
    ) -> Result<Unblinded, ClientError>
    where
        R: RngCore + CryptoRng + ?Sized,
    {
        let published = self.fetch_published()?;
        let (response, state) = psi::client_eval_blinded(&published, v, mode, exec, rng)?;
        let values = self.decrypt_remote(token, &published.pk, &response.payload)?;
        Ok(psi::client_unblind(&state, &values)?)
    }
}

impl ClientError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Server { code, .. } => Some(*code),
            _ => None,
        }
    }
}
