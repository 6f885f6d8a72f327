//! Spatio-temporal grid and trajectory bit vectors.
//!
//! Cells are square in lat/lon degrees and grouped into fixed time slots. The
//! flat index is time-major, then row (latitude), then column (longitude):
//! `((slot * rows) + row) * cols + col`. Every interval is half-open
//! `[low, high)`.
//!
//! A hierarchy of grids is a composition pattern, not a protocol feature:
//! a coarse cell's bounds can be used as the bounds of a finer [`GridSpec`].

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TIME_INTERVAL: u64 = 300;
pub const DEFAULT_TIME_SLOTS: u64 = 288;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid GPS point: {0}")]
    InvalidPoint(String),
    #[error("point ({lat}, {lon}, t={timestamp}) lies outside the grid on {axis}")]
    OutOfBounds {
        lat: f64,
        lon: f64,
        timestamp: i64,
        axis: &'static str,
    },
    #[error("point #{index}: {source}")]
    AtPoint {
        index: usize,
        #[source]
        source: Box<GridError>,
    },
    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: GridId, right: GridId },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("malformed bit-vector file: {0}")]
    MalformedFile(&'static str),
}

/// First eight bytes of SHA-256 over a grid's canonical text encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridId(pub [u8; 8]);

impl GridId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        hex::decode(s).ok()?.try_into().ok().map(GridId)
    }
}

impl fmt::Display for GridId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    pub lat: f64,
    pub lon: f64,
    /// UTC seconds.
    pub timestamp: i64,
}

impl GpsPoint {
    pub fn new(lat: f64, lon: f64, timestamp: i64) -> Result<Self, GridError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GridError::InvalidPoint(format!(
                "latitude {lat} not in [-90, 90]"
            )));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GridError::InvalidPoint(format!(
                "longitude {lon} not in [-180, 180]"
            )));
        }
        Ok(GpsPoint {
            lat,
            lon,
            timestamp,
        })
    }
}

/// Position of a cell in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellCoords {
    pub time_slot: u64,
    pub row: u64,
    pub col: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
    cell_size: f64,
    epoch_start: i64,
    time_interval: u64,
    time_slots: u64,
    spatial_rows: u64,
    spatial_cols: u64,
}

impl GridSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
        cell_size: f64,
        epoch_start: i64,
        time_interval: u64,
        time_slots: u64,
    ) -> Result<Self, GridError> {
        let bad = |m: &str| Err(GridError::InvalidSpec(m.to_string()));
        if ![lat_min, lat_max, lon_min, lon_max, cell_size]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("bounds and cell size must be finite");
        }
        if lat_min >= lat_max || lon_min >= lon_max {
            return bad("need lat_min < lat_max and lon_min < lon_max");
        }
        if lat_min < -90.0 || lat_max > 90.0 || lon_min < -180.0 || lon_max > 180.0 {
            return bad("bounds exceed the globe");
        }
        if cell_size <= 0.0 {
            return bad("cell_size must be positive");
        }
        if time_interval == 0 || time_slots == 0 {
            return bad("time_interval and time_slots must be positive");
        }
        let spatial_rows = edge_count(lat_min, lat_max, cell_size);
        let spatial_cols = edge_count(lon_min, lon_max, cell_size);
        let total = spatial_rows
            .checked_mul(spatial_cols)
            .and_then(|c| c.checked_mul(time_slots))
            .filter(|&c| c <= u32::MAX as u64);
        if total.is_none() {
            return bad("grid has too many cells");
        }
        if epoch_start
            .checked_add((time_slots as i64).saturating_mul(time_interval as i64))
            .is_none()
        {
            return bad("time window overflows");
        }
        Ok(GridSpec {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            cell_size,
            epoch_start,
            time_interval,
            time_slots,
            spatial_rows,
            spatial_cols,
        })
    }

    /// A day of five-minute slots starting at `epoch_start`.
    pub fn daily(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
        cell_size: f64,
        epoch_start: i64,
    ) -> Result<Self, GridError> {
        Self::new(
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            cell_size,
            epoch_start,
            DEFAULT_TIME_INTERVAL,
            DEFAULT_TIME_SLOTS,
        )
    }

    pub fn lat_min(&self) -> f64 {
        self.lat_min
    }
    pub fn lat_max(&self) -> f64 {
        self.lat_max
    }
    pub fn lon_min(&self) -> f64 {
        self.lon_min
    }
    pub fn lon_max(&self) -> f64 {
        self.lon_max
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn epoch_start(&self) -> i64 {
        self.epoch_start
    }
    pub fn time_interval(&self) -> u64 {
        self.time_interval
    }
    pub fn time_slots(&self) -> u64 {
        self.time_slots
    }
    pub fn spatial_rows(&self) -> u64 {
        self.spatial_rows
    }
    pub fn spatial_cols(&self) -> u64 {
        self.spatial_cols
    }

    pub fn epoch_end(&self) -> i64 {
        self.epoch_start + (self.time_slots * self.time_interval) as i64
    }

    pub fn total_cells(&self) -> usize {
        (self.spatial_rows * self.spatial_cols * self.time_slots) as usize
    }

    /// Lower latitude edge of `row`. Also the upper edge of `row - 1`.
    pub fn row_edge(&self, row: u64) -> f64 {
        self.lat_min + row as f64 * self.cell_size
    }

    pub fn col_edge(&self, col: u64) -> f64 {
        self.lon_min + col as f64 * self.cell_size
    }

    pub fn slot_start(&self, slot: u64) -> i64 {
        self.epoch_start + (slot * self.time_interval) as i64
    }

    pub fn cell_index(&self, p: &GpsPoint) -> Result<usize, GridError> {
        let oob = |axis| GridError::OutOfBounds {
            lat: p.lat,
            lon: p.lon,
            timestamp: p.timestamp,
            axis,
        };
        if !(self.lat_min <= p.lat && p.lat < self.lat_max) {
            return Err(oob("latitude"));
        }
        if !(self.lon_min <= p.lon && p.lon < self.lon_max) {
            return Err(oob("longitude"));
        }
        if !(self.epoch_start <= p.timestamp && p.timestamp < self.epoch_end()) {
            return Err(oob("time"));
        }
        let row = locate(p.lat, self.lat_min, self.cell_size, self.spatial_rows);
        let col = locate(p.lon, self.lon_min, self.cell_size, self.spatial_cols);
        let slot = (p.timestamp - self.epoch_start) as u64 / self.time_interval;
        Ok(self.index_of(CellCoords {
            time_slot: slot,
            row,
            col,
        }))
    }

    pub fn index_of(&self, c: CellCoords) -> usize {
        (((c.time_slot * self.spatial_rows) + c.row) * self.spatial_cols + c.col) as usize
    }

    pub fn coords_of(&self, index: usize) -> CellCoords {
        let index = index as u64;
        let col = index % self.spatial_cols;
        let rest = index / self.spatial_cols;
        CellCoords {
            time_slot: rest / self.spatial_rows,
            row: rest % self.spatial_rows,
            col,
        }
    }

    /// Sorted `key=value` lines with decimal numbers.
    pub fn canonical_text(&self) -> String {
        let mut fields = BTreeMap::new();
        fields.insert("cell_size", self.cell_size.to_string());
        fields.insert("epoch_start", self.epoch_start.to_string());
        fields.insert("lat_max", self.lat_max.to_string());
        fields.insert("lat_min", self.lat_min.to_string());
        fields.insert("lon_max", self.lon_max.to_string());
        fields.insert("lon_min", self.lon_min.to_string());
        fields.insert("time_interval", self.time_interval.to_string());
        fields.insert("time_slots", self.time_slots.to_string());
        fields
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Parses `key=value` lines in any order. `#` starts a comment.
    /// `time_interval` and `time_slots` default to five minutes and one day.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                GridError::InvalidSpec(format!("line {}: expected key=value", lineno + 1))
            })?;
            if fields
                .insert(k.trim().to_string(), v.trim().to_string())
                .is_some()
            {
                return Err(GridError::InvalidSpec(format!(
                    "line {}: duplicate key {}",
                    lineno + 1,
                    k.trim()
                )));
            }
        }
        fn take<T: std::str::FromStr>(
            fields: &mut BTreeMap<String, String>,
            key: &str,
            default: Option<T>,
        ) -> Result<T, GridError> {
            match fields.remove(key) {
                Some(v) => v
                    .parse()
                    .map_err(|_| GridError::InvalidSpec(format!("{key}: cannot parse {v:?}"))),
                None => default.ok_or_else(|| GridError::InvalidSpec(format!("missing {key}"))),
            }
        }
        let spec = GridSpec::new(
            take(&mut fields, "lat_min", None)?,
            take(&mut fields, "lat_max", None)?,
            take(&mut fields, "lon_min", None)?,
            take(&mut fields, "lon_max", None)?,
            take(&mut fields, "cell_size", None)?,
            take(&mut fields, "epoch_start", None)?,
            take(&mut fields, "time_interval", Some(DEFAULT_TIME_INTERVAL))?,
            take(&mut fields, "time_slots", Some(DEFAULT_TIME_SLOTS))?,
        )?;
        if let Some(k) = fields.keys().next() {
            return Err(GridError::InvalidSpec(format!("unknown key {k}")));
        }
        Ok(spec)
    }

    pub fn grid_id(&self) -> GridId {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        GridId(digest[..8].try_into().unwrap())
    }

    pub fn empty_vector(&self) -> TrajectoryBitVector {
        TrajectoryBitVector::zeros(self.grid_id(), self.total_cells())
    }

    pub fn encode_trajectory(&self, points: &[GpsPoint]) -> Result<TrajectoryBitVector, GridError> {
        let mut v = self.empty_vector();
        for (index, p) in points.iter().enumerate() {
            let cell = self.cell_index(p).map_err(|e| GridError::AtPoint {
                index,
                source: Box::new(e),
            })?;
            v.bits[cell] = true;
        }
        Ok(v)
    }
}

/// Smallest count `k` with `min + k * size >= max`, computed with the same
/// floating-point expression used for cell edges.
fn edge_count(min: f64, max: f64, size: f64) -> u64 {
    let mut k = ((max - min) / size).ceil().max(1.0) as u64;
    while min + (k as f64) * size < max {
        k += 1;
    }
    while k > 1 && min + ((k - 1) as f64) * size >= max {
        k -= 1;
    }
    k
}

/// Index `i < count` with `min + i*size <= x < min + (i+1)*size`.
fn locate(x: f64, min: f64, size: f64, count: u64) -> u64 {
    let mut i = (((x - min) / size).floor().max(0.0) as u64).min(count - 1);
    while i > 0 && x < min + (i as f64) * size {
        i -= 1;
    }
    while i + 1 < count && x >= min + ((i + 1) as f64) * size {
        i += 1;
    }
    i
}

/// Indicator vector over a grid's cells, bound to that grid by its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryBitVector {
    grid_id: GridId,
    bits: Vec<bool>,
}

impl TrajectoryBitVector {
    pub fn zeros(grid_id: GridId, len: usize) -> Self {
        TrajectoryBitVector {
            grid_id,
            bits: vec![false; len],
        }
    }

    pub fn from_bits(grid_id: GridId, bits: Vec<bool>) -> Self {
        TrajectoryBitVector { grid_id, bits }
    }

    pub fn grid_id(&self) -> GridId {
        self.grid_id
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    fn check_compatible(&self, other: &Self) -> Result<(), GridError> {
        if self.grid_id != other.grid_id {
            return Err(GridError::GridMismatch {
                left: self.grid_id,
                right: other.grid_id,
            });
        }
        if self.len() != other.len() {
            return Err(GridError::LengthMismatch(self.len(), other.len()));
        }
        Ok(())
    }

    pub fn merge_or(&self, other: &Self) -> Result<Self, GridError> {
        self.check_compatible(other)?;
        Ok(Self::from_bits(
            self.grid_id,
            self.bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a | b)
                .collect(),
        ))
    }

    pub fn and(&self, other: &Self) -> Result<Self, GridError> {
        self.check_compatible(other)?;
        Ok(Self::from_bits(
            self.grid_id,
            self.bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a & b)
                .collect(),
        ))
    }

    /// Bit `i` goes to byte `i / 8`, bit position `i % 8` (LSB first).
    pub fn packed(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len().div_ceil(8)];
        for i in self.ones() {
            out[i / 8] |= 1 << (i % 8);
        }
        out
    }

    /// File layout: 8-byte grid id, u64 little-endian length, packed bits.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.len().div_ceil(8));
        out.extend_from_slice(&self.grid_id.0);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend(self.packed());
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self, GridError> {
        if bytes.len() < 16 {
            return Err(GridError::MalformedFile("header truncated"));
        }
        let grid_id = GridId(bytes[..8].try_into().unwrap());
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let body = &bytes[16..];
        if len > (u32::MAX as u64) || body.len() as u64 != len.div_ceil(8) {
            return Err(GridError::MalformedFile("length does not match payload"));
        }
        let len = len as usize;
        if !len.is_multiple_of(8) && body[body.len() - 1] >> (len % 8) != 0 {
            return Err(GridError::MalformedFile("padding bits set"));
        }
        let bits = (0..len).map(|i| body[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(TrajectoryBitVector { grid_id, bits })
    }
}
