//! FP8 E4M3 reference format used as the comparison point for BP10.
//!
//! The variant here has exponent bias 7, keeps the all-ones exponent field
//! reserved for non-finite values and supports subnormals. That gives a
//! largest finite value of `1.875 * 2^7 = 240` and exactly 119 positive
//! finite values, 56 of which lie in `(0, 1]`.

use std::sync::OnceLock;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Fp8Error {
    #[error("{0} is outside the representable range [0, 240]")]
    Domain(f64),
    #[error("cannot normalize: range is degenerate (max == min == {0})")]
    DegenerateRange(f64),
    #[error("cannot normalize an empty list")]
    Empty,
}

/// Parameters of the minifloat layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinifloatFormat {
    pub exponent_bits: u32,
    pub mantissa_bits: u32,
    pub exponent_bias: i32,
}

pub const E4M3: MinifloatFormat = MinifloatFormat {
    exponent_bits: 4,
    mantissa_bits: 3,
    exponent_bias: 7,
};

impl MinifloatFormat {
    /// Largest finite exponent field; the all-ones field is reserved.
    fn max_exponent_field(&self) -> u32 {
        (1 << self.exponent_bits) - 2
    }

    fn mantissa_steps(&self) -> u32 {
        1 << self.mantissa_bits
    }

    /// Value of an (exponent field, mantissa field) pair.
    pub fn value(&self, exponent: u32, mantissa: u32) -> f64 {
        let m = f64::from(mantissa) / f64::from(self.mantissa_steps());
        if exponent == 0 {
            m * 2f64.powi(1 - self.exponent_bias)
        } else {
            (1.0 + m) * 2f64.powi(exponent as i32 - self.exponent_bias)
        }
    }

    pub fn max_finite(&self) -> f64 {
        self.value(self.max_exponent_field(), self.mantissa_steps() - 1)
    }

    pub fn min_normal(&self) -> f64 {
        self.value(1, 0)
    }

    pub fn min_subnormal(&self) -> f64 {
        self.value(0, 1)
    }

    /// Every positive finite value, ascending.
    pub fn enumerate_positive(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for e in 0..=self.max_exponent_field() {
            for m in 0..self.mantissa_steps() {
                if e == 0 && m == 0 {
                    continue;
                }
                out.push(self.value(e, m));
            }
        }
        out
    }

    /// Rounds `x` to the nearest representable value, ties to even mantissa.
    pub fn quantize(&self, x: f64) -> Result<f64, Fp8Error> {
        if !x.is_finite() || x < 0.0 || x > self.max_finite() {
            return Err(Fp8Error::Domain(x));
        }
        // Spacing of the grid around x. Subnormals share the spacing of the
        // first binade, so the same formula covers both.
        let step = if x < self.min_normal() {
            self.min_subnormal()
        } else {
            let exp = x.log2().floor() as i32;
            // log2 can land one off at exact powers of two
            let exp = if 2f64.powi(exp) > x {
                exp - 1
            } else if 2f64.powi(exp + 1) <= x {
                exp + 1
            } else {
                exp
            };
            2f64.powi(exp - self.mantissa_bits as i32)
        };
        // x / step and the product back are exact in f64 (power-of-two step)
        Ok((x / step).round_ties_even() * step)
    }

    /// Product of two representable values, clamped into range and re-quantized.
    pub fn multiply(&self, a: f64, b: f64) -> Result<f64, Fp8Error> {
        for v in [a, b] {
            if !v.is_finite() || v < 0.0 || v > self.max_finite() {
                return Err(Fp8Error::Domain(v));
            }
        }
        self.quantize((a * b).min(self.max_finite()))
    }
}

fn e4m3_grid() -> &'static [f64] {
    static GRID: OnceLock<Vec<f64>> = OnceLock::new();
    GRID.get_or_init(|| {
        let mut g = vec![0.0];
        g.extend(E4M3.enumerate_positive());
        g
    })
}

/// Magnitude code of the nearest E4M3 value: `exponent << 3 | mantissa`,
/// so 0 is zero and 119 is 240. Codes sort like the values they encode.
pub fn code(x: f64) -> Result<u8, Fp8Error> {
    let q = quantize(x)?;
    Ok((e4m3_grid().partition_point(|&v| v <= q) - 1) as u8)
}

/// Value of an E4M3 magnitude code.
pub fn value_of_code(code: u8) -> f64 {
    e4m3_grid()[usize::from(code)]
}

/// Number of E4M3 magnitude codes including zero.
pub const CODES: usize = 120;

pub fn enumerate_positive() -> Vec<f64> {
    E4M3.enumerate_positive()
}

pub fn quantize(x: f64) -> Result<f64, Fp8Error> {
    E4M3.quantize(x)
}

pub fn fp8_multiply(a: f64, b: f64) -> Result<f64, Fp8Error> {
    E4M3.multiply(a, b)
}

/// How [`normalize`] chooses the range it maps onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormRange {
    /// Use the list's own minimum and maximum.
    MinMax,
    /// Use a fixed range, e.g. `0..=240` for the FP8 grid.
    Fixed { min: f64, max: f64 },
}

/// Linear map of `values` onto `[0, 1]`.
pub fn normalize(values: &[f64], range: NormRange) -> Result<Vec<f64>, Fp8Error> {
    if values.is_empty() {
        return Err(Fp8Error::Empty);
    }
    let (lo, hi) = match range {
        NormRange::MinMax => values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            }),
        NormRange::Fixed { min, max } => (min, max),
    };
    if hi == lo {
        return Err(Fp8Error::DegenerateRange(hi));
    }
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// The positive FP8 values divided by the format maximum: 119 points in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGrid {
    pub raw: Vec<f64>,
    pub values: Vec<f64>,
}

impl NormalizedGrid {
    pub fn new() -> Self {
        let raw = enumerate_positive();
        let values = normalize(
            &raw,
            NormRange::Fixed {
                min: 0.0,
                max: E4M3.max_finite(),
            },
        )
        .expect("fixed range is not degenerate");
        Self { raw, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with columns `index,raw,normalized`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,raw,normalized\n");
        for (i, (r, n)) in self.raw.iter().zip(&self.values).enumerate() {
            out.push_str(&format!("{i},{r},{n}\n"));
        }
        out
    }
}

impl Default for NormalizedGrid {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Nearest-neighbour search over the enumerated grid, ties to the even
    /// code. Independent of the arithmetic rounding in `quantize`.
    fn nearest_by_search(x: f64) -> f64 {
        let mut grid = vec![0.0];
        grid.extend(enumerate_positive());
        let mut best = 0;
        for (i, &v) in grid.iter().enumerate() {
            let d = (v - x).abs();
            let bd = (grid[best] - x).abs();
            if d < bd || (d == bd && i % 2 == 0) {
                best = i;
            }
        }
        grid[best]
    }

    #[test]
    fn format_counts() {
        let v = enumerate_positive();
        assert_eq!(v.len(), 119);
        assert_eq!(*v.last().unwrap(), 240.0);
        assert_eq!(v[0], 2f64.powi(-9));
        assert_eq!(v.iter().filter(|&&x| x <= 1.0).count(), 56);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0).unwrap(), 0.0);
        assert_eq!(quantize(240.0).unwrap(), 240.0);
        assert_eq!(quantize(0.3).unwrap(), 0.3125);
        assert_eq!(nearest_by_search(0.3), 0.3125);
    }

    #[test]
    fn quantize_rejects_out_of_range() {
        for x in [-1e-9, 240.0001, f64::NAN, f64::INFINITY] {
            assert!(quantize(x).is_err(), "{x}");
        }
    }

    #[test]
    fn ties_go_to_even_mantissa() {
        let grid = enumerate_positive();
        // midpoint of 1.0 (m=0) and 1.125 (m=1) -> 1.0
        assert_eq!(quantize(1.0625).unwrap(), 1.0);
        // midpoint of 1.125 (m=1) and 1.25 (m=2) -> 1.25
        assert_eq!(quantize(1.1875).unwrap(), 1.25);
        // midpoint between 0 and the smallest subnormal -> 0
        assert_eq!(quantize(grid[0] / 2.0).unwrap(), 0.0);
        for w in grid.windows(2) {
            let mid = (w[0] + w[1]) / 2.0;
            assert_eq!(quantize(mid).unwrap(), nearest_by_search(mid), "mid {mid}");
        }
    }

    #[test]
    fn multiply_examples() {
        assert_eq!(fp8_multiply(0.0, 3.5).unwrap(), 0.0);
        for &x in &enumerate_positive() {
            assert_eq!(fp8_multiply(1.0, x).unwrap(), x);
        }
        // 0.1953125 = 1.5625 * 2^-3 needs four mantissa bits; it sits exactly
        // between 0.1875 (even code) and 0.203125
        assert_eq!(nearest_by_search(0.3125 * 0.625), 0.1875);
        assert_eq!(fp8_multiply(0.3125, 0.625).unwrap(), 0.1875);
        assert_eq!(fp8_multiply(240.0, 240.0).unwrap(), 240.0);
    }

    #[test]
    fn normalize_examples() {
        let g = NormalizedGrid::new();
        assert_eq!(g.len(), 119);
        assert_eq!(*g.values.last().unwrap(), 1.0);
        assert_eq!(g.values[0], 2f64.powi(-9) / 240.0);
        assert!(g.values.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            normalize(&[5.0], NormRange::MinMax),
            Err(Fp8Error::DegenerateRange(5.0))
        );
        assert_eq!(normalize(&[], NormRange::MinMax), Err(Fp8Error::Empty));
        assert_eq!(
            normalize(&[2.0, 4.0, 3.0], NormRange::MinMax).unwrap(),
            vec![0.0, 1.0, 0.5]
        );
    }

    #[test]
    fn codes_are_ordered() {
        assert_eq!(code(0.0).unwrap(), 0);
        assert_eq!(code(240.0).unwrap(), 119);
        // 1.0 = exponent field 7, mantissa 0
        assert_eq!(code(1.0).unwrap(), 7 << 3);
        for c in 0..CODES as u8 {
            assert_eq!(code(value_of_code(c)).unwrap(), c);
        }
    }

    #[test]
    fn grid_csv_shape() {
        let csv = NormalizedGrid::new().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "index,raw,normalized");
        assert_eq!(lines.len(), 120);
        assert_eq!(lines[119], "118,240,1");
    }

    proptest! {
        #[test]
        fn matches_search_oracle(x in 0.0f64..=240.0) {
            prop_assert_eq!(quantize(x).unwrap(), nearest_by_search(x));
        }

        #[test]
        fn idempotent(x in 0.0f64..=240.0) {
            let q = quantize(x).unwrap();
            prop_assert_eq!(quantize(q).unwrap(), q);
        }

        #[test]
        fn monotone(a in 0.0f64..=240.0, b in 0.0f64..=240.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize(lo).unwrap() <= quantize(hi).unwrap());
        }

        #[test]
        fn error_within_half_spacing(x in 0.0f64..=240.0) {
            let mut grid = vec![0.0];
            grid.extend(enumerate_positive());
            let i = grid.partition_point(|&v| v <= x).max(1).min(grid.len() - 1);
            let spacing = grid[i] - grid[i - 1];
            prop_assert!((quantize(x).unwrap() - x).abs() <= spacing / 2.0);
        }
    }
}
