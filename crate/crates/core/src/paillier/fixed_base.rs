use num_bigint::BigUint;
use num_traits::One;

/// Windowed precomputation for raising one fixed base to many exponents.
///
/// `rows[i][j - 1] = base^(j * 2^(window * i)) mod modulus` for `j` in
/// `1..2^window`. An exponent of at most `max_exponent_bits` bits then costs one
/// modular multiplication per non-zero window and no squarings.
#[derive(Debug, Clone)]
pub struct FixedBaseTable {
    modulus: BigUint,
    window: u32,
    rows: Vec<Vec<BigUint>>,
}

impl FixedBaseTable {
    pub fn new(base: &BigUint, modulus: &BigUint, max_exponent_bits: u64, window: u32) -> Self {
        assert!((1..=12).contains(&window));
        let row_count = max_exponent_bits.div_ceil(window as u64).max(1) as usize;
        let per_row = (1usize << window) - 1;
        let mut rows = Vec::with_capacity(row_count);
        let mut row_base = base % modulus;
        for _ in 0..row_count {
            let mut row = Vec::with_capacity(per_row);
            let mut acc = row_base.clone();
            row.push(acc.clone());
            for _ in 1..per_row {
                acc = (&acc * &row_base) % modulus;
                row.push(acc.clone());
            }
            // base^(2^window) for the next row
            row_base = (&acc * &row_base) % modulus;
            rows.push(row);
        }
        FixedBaseTable {
            modulus: modulus.clone(),
            window,
            rows,
        }
    }

    /// Picks a window width for the expected number of exponentiations.
    pub fn suggested_window(max_exponent_bits: u64, uses: usize) -> u32 {
        let mut best = (1u32, f64::INFINITY);
        for w in 1..=10u32 {
            let rows = max_exponent_bits.div_ceil(w as u64) as f64;
            let build = rows * ((1u64 << w) as f64);
            let per_use = rows * (1.0 - 1.0 / (1u64 << w) as f64);
            let cost = build + per_use * uses as f64;
            if cost < best.1 {
                best = (w, cost);
            }
        }
        best.0
    }

    pub fn max_exponent_bits(&self) -> u64 {
        self.rows.len() as u64 * self.window as u64
    }

    pub fn pow(&self, exponent: &BigUint) -> BigUint {
        assert!(
            exponent.bits() <= self.max_exponent_bits(),
            "exponent wider than table"
        );
        let mask = (1u64 << self.window) - 1;
        let mut acc = BigUint::one();
        for (i, row) in self.rows.iter().enumerate() {
            let digit = window_digit(exponent, i as u64 * self.window as u64, mask);
            if digit != 0 {
                acc = (&acc * &row[digit as usize - 1]) % &self.modulus;
            }
        }
        acc
    }
}

fn window_digit(exponent: &BigUint, start: u64, mask: u64) -> u64 {
    let width = mask.count_ones() as u64;
    let mut digit = 0u64;
    for b in 0..width {
        if exponent.bit(start + b) {
            digit |= 1 << b;
        }
    }
    digit & mask
}
