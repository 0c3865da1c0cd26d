//! Bent-Pyramid quasi-stochastic numbers.
//!
//! A BP10 value is a fixed 10-bit stream whose ones-density encodes a
//! probability in `{0.0, 0.1, ..., 0.9}`. Two complementary datasets exist:
//! right-biased streams never set bit 0 and left-biased streams never set
//! bit 9, so the AND of one stream from each side always has both edge bits
//! clear. Dropping those two bits gives the BP8 hardware word without
//! changing any product.
//!
//! Bit index 0 is the leftmost character of the printed form: `0000011100`
//! has ones at indices 5, 6 and 7.

mod dataset;

use std::fmt;

use thiserror::Error;

pub use dataset::{
    default_dataset, load_dataset, parse_dataset, validate_dataset, BpDataset, DatasetError,
    Violation,
};

pub const BP10_WIDTH: usize = 10;
pub const BP8_WIDTH: usize = 8;
/// Number of representable values (0.0 through 0.9).
pub const LEVELS: usize = 10;
/// Largest representable value in tenths.
pub const MAX_TENTHS: u8 = 9;

const BP10_MASK: u16 = (1 << BP10_WIDTH) - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BpError {
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error(
        "both operands are {0}-biased; multiplication needs one right- and one left-biased stream"
    )]
    Correlated(Bias),
    #[error("invalid bitstream {0:?}: expected {1} characters of '0'/'1'")]
    Malformed(String, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bias {
    Right,
    Left,
}

impl Bias {
    pub fn opposite(self) -> Bias {
        match self {
            Bias::Right => Bias::Left,
            Bias::Left => Bias::Right,
        }
    }

    /// Index of the bit that must stay clear for this bias.
    pub fn zero_edge(self) -> usize {
        match self {
            Bias::Right => 0,
            Bias::Left => BP10_WIDTH - 1,
        }
    }
}

impl fmt::Display for Bias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bias::Right => "right",
            Bias::Left => "left",
        })
    }
}

/// Anything whose ones-count decodes to a probability in tenths.
pub trait Decode {
    fn ones(&self) -> u32;

    /// `ones / 10`, independent of the physical width.
    fn decode(&self) -> f64 {
        f64::from(self.ones()) / 10.0
    }
}

/// Free-function form of [`Decode::decode`].
pub fn decode<T: Decode + ?Sized>(b: &T) -> f64 {
    b.decode()
}

fn render(bits: u32, width: usize) -> String {
    (0..width)
        .map(|i| if bits >> i & 1 == 1 { '1' } else { '0' })
        .collect()
}

fn parse_bits(s: &str, width: usize) -> Result<u32, BpError> {
    let s = s.trim();
    if s.len() != width {
        return Err(BpError::Malformed(s.to_string(), width));
    }
    let mut bits = 0u32;
    for (i, c) in s.chars().enumerate() {
        match c {
            '0' => {}
            '1' => bits |= 1 << i,
            _ => return Err(BpError::Malformed(s.to_string(), width)),
        }
    }
    Ok(bits)
}

/// A 10-bit Bent-Pyramid stream together with the value it stands for.
///
/// `value_tenths` is the value the stream is meant to encode; for a valid
/// dataset entry it equals the popcount. Construction does not enforce the
/// bias edge rule so that malformed datasets can still be loaded and
/// reported by [`validate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BpBitstream {
    bits: u16,
    value_tenths: u8,
    bias: Bias,
}

impl BpBitstream {
    /// Builds a stream whose value is its own popcount.
    pub fn new(bits: u16, bias: Bias) -> Self {
        let bits = bits & BP10_MASK;
        Self {
            bits,
            value_tenths: bits.count_ones() as u8,
            bias,
        }
    }

    pub(crate) fn with_value(bits: u16, value_tenths: u8, bias: Bias) -> Self {
        Self {
            bits: bits & BP10_MASK,
            value_tenths,
            bias,
        }
    }

    /// Parses the printed form, e.g. `"0000011100"`.
    pub fn parse(s: &str, bias: Bias) -> Result<Self, BpError> {
        Ok(Self::new(parse_bits(s, BP10_WIDTH)? as u16, bias))
    }

    /// Raw bits; bit `i` of the integer is printed index `i`.
    pub fn bits(&self) -> u16 {
        self.bits
    }

    pub fn bit(&self, index: usize) -> bool {
        index < BP10_WIDTH && self.bits >> index & 1 == 1
    }

    pub fn value_tenths(&self) -> u8 {
        self.value_tenths
    }

    pub fn bias(&self) -> Bias {
        self.bias
    }
}

impl Decode for BpBitstream {
    fn ones(&self) -> u32 {
        self.bits.count_ones()
    }
}

impl fmt::Display for BpBitstream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(u32::from(self.bits), BP10_WIDTH))
    }
}

/// Compressed 8-bit form: positions 1..=8 of the parent BP10 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bp8Bitstream {
    bits: u8,
    value_tenths: u8,
    bias: Bias,
}

impl Bp8Bitstream {
    pub fn parse(s: &str, bias: Bias) -> Result<Self, BpError> {
        let bits = parse_bits(s, BP8_WIDTH)? as u8;
        Ok(Self {
            bits,
            value_tenths: bits.count_ones() as u8,
            bias,
        })
    }

    /// The stored word. Bit `i` is printed index `i` (parent index `i + 1`).
    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn value_tenths(&self) -> u8 {
        self.value_tenths
    }

    pub fn bias(&self) -> Bias {
        self.bias
    }
}

impl Decode for Bp8Bitstream {
    fn ones(&self) -> u32 {
        self.bits.count_ones()
    }
}

impl fmt::Display for Bp8Bitstream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(u32::from(self.bits), BP8_WIDTH))
    }
}

/// Result of an AND multiplication, at 10- or 8-bit width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BpProduct {
    bits: u16,
    width: u8,
    ones: u8,
}

impl BpProduct {
    fn new(bits: u16, width: usize) -> Self {
        Self {
            bits,
            width: width as u8,
            ones: bits.count_ones() as u8,
        }
    }

    pub fn bits(&self) -> u16 {
        self.bits
    }

    pub fn width(&self) -> usize {
        usize::from(self.width)
    }

    pub fn ones_count(&self) -> u8 {
        self.ones
    }

    pub fn value(&self) -> f64 {
        self.decode()
    }
}

impl Decode for BpProduct {
    fn ones(&self) -> u32 {
        u32::from(self.ones)
    }
}

impl fmt::Display for BpProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(u32::from(self.bits), self.width()))
    }
}

/// Rounds a probability to the nearest representable tenth.
///
/// Ties round half up (0.25 -> 3) and anything above 0.9 saturates to 9.
pub fn quantize_tenths(p: f64) -> Result<u8, BpError> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(BpError::Domain(p));
    }
    let k = (p * 10.0).round() as u8;
    Ok(k.min(MAX_TENTHS))
}

/// Maps `p` to the dataset entry for its nearest tenth.
pub fn encode(p: f64, bias: Bias, d: &BpDataset) -> Result<BpBitstream, BpError> {
    Ok(*d.get(bias, quantize_tenths(p)?))
}

/// Stochastic multiplication: bitwise AND of a right- and a left-biased stream.
pub fn multiply(x: &BpBitstream, y: &BpBitstream) -> Result<BpProduct, BpError> {
    if x.bias == y.bias {
        return Err(BpError::Correlated(x.bias));
    }
    Ok(BpProduct::new(x.bits & y.bits, BP10_WIDTH))
}

/// Drops the two edge bits, keeping value and bias.
pub fn compress(b: &BpBitstream) -> Bp8Bitstream {
    Bp8Bitstream {
        bits: ((b.bits >> 1) & 0xff) as u8,
        value_tenths: b.value_tenths,
        bias: b.bias,
    }
}

pub fn multiply8(x: &Bp8Bitstream, y: &Bp8Bitstream) -> Result<BpProduct, BpError> {
    if x.bias == y.bias {
        return Err(BpError::Correlated(x.bias));
    }
    Ok(BpProduct::new(u16::from(x.bits & y.bits), BP8_WIDTH))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn right(k: u8) -> BpBitstream {
        *default_dataset().get(Bias::Right, k)
    }

    fn left(k: u8) -> BpBitstream {
        *default_dataset().get(Bias::Left, k)
    }

    #[test]
    fn printed_order_is_index_order() {
        let b = BpBitstream::parse("0000011100", Bias::Right).unwrap();
        assert!(b.bit(5) && b.bit(6) && b.bit(7));
        assert!(!b.bit(0) && !b.bit(4) && !b.bit(8));
        assert_eq!(b.to_string(), "0000011100");
        assert_eq!(b.value_tenths(), 3);
    }

    #[test]
    fn encode_examples() {
        let d = default_dataset();
        assert_eq!(
            encode(0.3, Bias::Right, &d).unwrap().to_string(),
            "0000011100"
        );
        assert_eq!(encode(1.0, Bias::Right, &d).unwrap(), right(9));
        assert_eq!(encode(0.25, Bias::Left, &d).unwrap(), left(3));
        assert_eq!(encode(0.96, Bias::Left, &d).unwrap(), left(9));
        assert_eq!(encode(0.0, Bias::Left, &d).unwrap(), left(0));
    }

    #[test]
    fn encode_rejects_out_of_domain() {
        let d = default_dataset();
        for p in [-0.01, 1.01, f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            assert!(
                matches!(encode(p, Bias::Right, &d), Err(BpError::Domain(_))),
                "{p}"
            );
        }
    }

    #[test]
    fn encode_decode_identity_on_grid() {
        let d = default_dataset();
        for k in 0..=MAX_TENTHS {
            let p = f64::from(k) / 10.0;
            for bias in [Bias::Right, Bias::Left] {
                assert_eq!(encode(p, bias, &d).unwrap().decode(), p);
            }
        }
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            BpBitstream::parse("0000011100", Bias::Right)
                .unwrap()
                .decode(),
            0.3
        );
        assert_eq!(
            Bp8Bitstream::parse("00001100", Bias::Right)
                .unwrap()
                .decode(),
            0.2
        );
        assert_eq!(decode(&right(0)), 0.0);
    }

    #[test]
    fn worked_product() {
        let z = multiply(&right(3), &left(6)).unwrap();
        assert_eq!(z.value(), 0.2);
        assert_eq!(z.to_string(), "0000011000");
    }

    #[test]
    fn zero_operand_annihilates() {
        for k in 0..=MAX_TENTHS {
            assert_eq!(multiply(&right(0), &left(k)).unwrap().value(), 0.0);
            assert_eq!(
                multiply8(&compress(&right(k)), &compress(&left(0)))
                    .unwrap()
                    .ones_count(),
                0
            );
        }
    }

    #[test]
    fn nine_times_nine() {
        // right 0.9 = 0111111111, left 0.9 = 1111111110: overlap is indices 1..=8
        assert_eq!(multiply(&right(9), &left(9)).unwrap().ones_count(), 8);
        assert_eq!(multiply(&right(9), &left(9)).unwrap().value(), 0.8);
    }

    #[test]
    fn same_bias_is_rejected() {
        assert_eq!(
            multiply(&right(3), &right(6)),
            Err(BpError::Correlated(Bias::Right))
        );
        assert_eq!(
            multiply8(&compress(&left(3)), &compress(&left(6))),
            Err(BpError::Correlated(Bias::Left))
        );
    }

    #[test]
    fn compress_examples() {
        assert_eq!(compress(&right(3)).to_string(), "00001110");
        assert_eq!(compress(&left(6)).to_string(), "11111100");
        assert_eq!(compress(&right(0)).to_string(), "00000000");
        let z = multiply8(&compress(&right(3)), &compress(&left(6))).unwrap();
        assert_eq!(z.to_string(), "00001100");
        assert_eq!(z.value(), 0.2);
    }

    #[test]
    fn compress_keeps_value_and_bias() {
        let c = compress(&left(9));
        assert_eq!(c.value_tenths(), 9);
        assert_eq!(c.bias(), Bias::Left);
    }

    #[test]
    fn products_clear_edges_and_match_compressed() {
        for i in 0..=MAX_TENTHS {
            for j in 0..=MAX_TENTHS {
                let wide = multiply(&right(i), &left(j)).unwrap();
                assert!(wide.bits() & 1 == 0 && wide.bits() >> 9 & 1 == 0);
                let narrow = multiply8(&compress(&right(i)), &compress(&left(j))).unwrap();
                assert_eq!(wide.ones_count(), narrow.ones_count(), "({i},{j})");
                assert_eq!(wide.decode(), narrow.decode());
            }
        }
    }

    #[test]
    fn product_within_combinatorial_bounds() {
        for i in 0..=MAX_TENTHS {
            for j in 0..=MAX_TENTHS {
                let ones = multiply(&right(i), &left(j)).unwrap().ones_count();
                let lo = (i + j).saturating_sub(10);
                assert!(lo <= ones && ones <= i.min(j));
            }
        }
    }

    #[test]
    fn parse_rejects_bad_width_and_chars() {
        assert!(BpBitstream::parse("000001110", Bias::Right).is_err());
        assert!(BpBitstream::parse("00000111x0", Bias::Right).is_err());
        assert!(Bp8Bitstream::parse("0000111000", Bias::Left).is_err());
    }
}
