//! Gate-level model of the accumulation periphery.
//!
//! Three nested structures, each a flat netlist of full and half adders:
//!
//! * a 16-input parallel counter with a 5-bit output, built by column
//!   compression (Wallace style);
//! * a 64-input converter: four counters summed by two 5-bit adders and one
//!   6-bit adder, 7-bit output;
//! * the 256-input array periphery: four converters summed by two 7-bit
//!   adders and one 8-bit adder, 9-bit output.
//!
//! Multi-bit adders are ripple-carry. Netlists are evaluated bit-sliced: each
//! wire carries a `u64` so 64 independent input vectors go through in one
//! pass.

use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;

use crate::array::RowBits;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccumError {
    #[error("expected {expected} input bits, got {got}")]
    WrongWidth { expected: usize, got: usize },
}

pub type Wire = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Full,
    Half,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Full => "FA",
            CellKind::Half => "HA",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdderCell {
    pub kind: CellKind,
    pub inputs: Vec<Wire>,
    pub sum: Wire,
    pub carry: Wire,
}

/// Per-structure cell accounting.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NetlistStats {
    pub input_width: usize,
    pub output_width: usize,
    /// Single-bit cells in the whole structure.
    pub full_adders: usize,
    pub half_adders: usize,
    /// Sub-structures instantiated at this level (counters or converters).
    pub sub_units: usize,
    /// Widths of the multi-bit adders at this level.
    pub multibit_adders: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeripheryNetlist {
    inputs: Vec<Wire>,
    outputs: Vec<Wire>,
    wire_count: usize,
    cells: Vec<AdderCell>,
    stats: NetlistStats,
}

#[derive(Default)]
struct Builder {
    wire_count: usize,
    cells: Vec<AdderCell>,
}

impl Builder {
    fn wire(&mut self) -> Wire {
        self.wire_count += 1;
        self.wire_count - 1
    }

    fn cell(&mut self, kind: CellKind, inputs: Vec<Wire>) -> (Wire, Wire) {
        let sum = self.wire();
        let carry = self.wire();
        self.cells.push(AdderCell {
            kind,
            inputs,
            sum,
            carry,
        });
        (sum, carry)
    }

    /// Column compression of equally weighted bits into a binary count,
    /// least significant bit first.
    fn counter(&mut self, bits: &[Wire]) -> Vec<Wire> {
        let mut columns: Vec<Vec<Wire>> = vec![bits.to_vec()];
        let mut out = Vec::new();
        let mut weight = 0;
        while weight < columns.len() {
            let mut col = std::mem::take(&mut columns[weight]);
            let mut carries = Vec::new();
            while col.len() >= 3 {
                let ins = col.drain(..3).collect();
                let (s, c) = self.cell(CellKind::Full, ins);
                col.push(s);
                carries.push(c);
            }
            if col.len() == 2 {
                let (s, c) = self.cell(CellKind::Half, col.clone());
                col = vec![s];
                carries.push(c);
            }
            if !carries.is_empty() {
                if columns.len() == weight + 1 {
                    columns.push(Vec::new());
                }
                columns[weight + 1].extend(carries);
            }
            out.push(col.pop().expect("column reduced to one wire"));
            weight += 1;
        }
        out
    }

    /// Ripple-carry sum of two equal-width numbers; result is one bit wider.
    fn ripple_add(&mut self, a: &[Wire], b: &[Wire]) -> Vec<Wire> {
        debug_assert_eq!(a.len(), b.len());
        let mut out = Vec::with_capacity(a.len() + 1);
        let (s, mut carry) = self.cell(CellKind::Half, vec![a[0], b[0]]);
        out.push(s);
        for i in 1..a.len() {
            let (s, c) = self.cell(CellKind::Full, vec![a[i], b[i], carry]);
            out.push(s);
            carry = c;
        }
        out.push(carry);
        out
    }

    /// Sums four equal-width partial counts with a two-level adder tree.
    fn tree4(&mut self, parts: [Vec<Wire>; 4]) -> Vec<Wire> {
        let lo = self.ripple_add(&parts[0], &parts[1]);
        let hi = self.ripple_add(&parts[2], &parts[3]);
        self.ripple_add(&lo, &hi)
    }

    fn counter16(&mut self, bits: &[Wire]) -> Vec<Wire> {
        self.counter(bits)
    }

    fn convert64(&mut self, bits: &[Wire]) -> Vec<Wire> {
        let parts = std::array::from_fn(|q| self.counter16(&bits[16 * q..16 * (q + 1)]));
        self.tree4(parts)
    }

    fn accumulate256(&mut self, bits: &[Wire]) -> Vec<Wire> {
        let parts = std::array::from_fn(|q| self.convert64(&bits[64 * q..64 * (q + 1)]));
        self.tree4(parts)
    }

    fn finish(
        self,
        inputs: Vec<Wire>,
        outputs: Vec<Wire>,
        sub_units: usize,
        multibit: Vec<usize>,
    ) -> PeripheryNetlist {
        let full = self
            .cells
            .iter()
            .filter(|c| c.kind == CellKind::Full)
            .count();
        let stats = NetlistStats {
            input_width: inputs.len(),
            output_width: outputs.len(),
            full_adders: full,
            half_adders: self.cells.len() - full,
            sub_units,
            multibit_adders: multibit,
        };
        PeripheryNetlist {
            inputs,
            outputs,
            wire_count: self.wire_count,
            cells: self.cells,
            stats,
        }
    }
}

/// Which periphery structure to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    Counter16,
    Converter64,
    Periphery256,
}

impl Structure {
    pub fn input_width(self) -> usize {
        match self {
            Structure::Counter16 => 16,
            Structure::Converter64 => 64,
            Structure::Periphery256 => 256,
        }
    }
}

impl PeripheryNetlist {
    pub fn build(structure: Structure) -> Self {
        let mut b = Builder::default();
        let inputs: Vec<Wire> = (0..structure.input_width()).map(|_| b.wire()).collect();
        match structure {
            Structure::Counter16 => {
                let out = b.counter16(&inputs);
                b.finish(inputs, out, 0, Vec::new())
            }
            Structure::Converter64 => {
                let out = b.convert64(&inputs);
                b.finish(inputs, out, 4, vec![5, 5, 6])
            }
            Structure::Periphery256 => {
                let out = b.accumulate256(&inputs);
                b.finish(inputs, out, 4, vec![7, 7, 8])
            }
        }
    }

    pub fn input_width(&self) -> usize {
        self.inputs.len()
    }

    pub fn output_width(&self) -> usize {
        self.outputs.len()
    }

    pub fn cells(&self) -> &[AdderCell] {
        &self.cells
    }

    pub fn stats(&self) -> &NetlistStats {
        &self.stats
    }

    /// Every cell reads only primary inputs or outputs of earlier cells,
    /// and every wire has exactly one driver.
    pub fn is_acyclic(&self) -> bool {
        let mut driven = vec![false; self.wire_count];
        for &w in &self.inputs {
            driven[w] = true;
        }
        for c in &self.cells {
            if c.inputs.iter().any(|&w| !driven[w]) || driven[c.sum] || driven[c.carry] {
                return false;
            }
            driven[c.sum] = true;
            driven[c.carry] = true;
        }
        self.outputs.iter().all(|&w| driven[w])
    }

    /// Bit-sliced evaluation: `inputs[i]` holds input bit `i` for 64
    /// independent vectors; returns output bits (LSB first) in the same layout.
    pub fn eval_lanes(&self, inputs: &[u64]) -> Result<Vec<u64>, AccumError> {
        if inputs.len() != self.inputs.len() {
            return Err(AccumError::WrongWidth {
                expected: self.inputs.len(),
                got: inputs.len(),
            });
        }
        let mut v = vec![0u64; self.wire_count];
        for (&w, &x) in self.inputs.iter().zip(inputs) {
            v[w] = x;
        }
        for c in &self.cells {
            match c.kind {
                CellKind::Full => {
                    let (a, b, cin) = (v[c.inputs[0]], v[c.inputs[1]], v[c.inputs[2]]);
                    v[c.sum] = a ^ b ^ cin;
                    v[c.carry] = (a & b) | (cin & (a ^ b));
                }
                CellKind::Half => {
                    let (a, b) = (v[c.inputs[0]], v[c.inputs[1]]);
                    v[c.sum] = a ^ b;
                    v[c.carry] = a & b;
                }
            }
        }
        Ok(self.outputs.iter().map(|&w| v[w]).collect())
    }

    /// Evaluates a single input vector and returns the binary count.
    pub fn eval(&self, bits: &[bool]) -> Result<u32, AccumError> {
        let lanes: Vec<u64> = bits.iter().map(|&b| u64::from(b)).collect();
        let out = self.eval_lanes(&lanes)?;
        Ok(out
            .iter()
            .enumerate()
            .map(|(i, &b)| ((b & 1) as u32) << i)
            .sum())
    }

    /// Evaluates up to 64 vectors at once; returns one count per vector.
    pub fn eval_batch(&self, vectors: &[Vec<bool>]) -> Result<Vec<u32>, AccumError> {
        assert!(vectors.len() <= 64, "at most 64 vectors per batch");
        let width = self.inputs.len();
        let mut lanes = vec![0u64; width];
        for (lane, vec) in vectors.iter().enumerate() {
            if vec.len() != width {
                return Err(AccumError::WrongWidth {
                    expected: width,
                    got: vec.len(),
                });
            }
            for (i, &b) in vec.iter().enumerate() {
                lanes[i] |= u64::from(b) << lane;
            }
        }
        let out = self.eval_lanes(&lanes)?;
        Ok((0..vectors.len())
            .map(|lane| {
                out.iter()
                    .enumerate()
                    .map(|(i, &b)| ((b >> lane & 1) as u32) << i)
                    .sum()
            })
            .collect())
    }

    /// Text dump, one cell per line: `<id> <kind> <in...> -> <sum> <carry>`.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "# inputs w0..w{} outputs {}\n",
            self.inputs.len() - 1,
            self.outputs
                .iter()
                .map(|w| format!("w{w}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        for (id, c) in self.cells.iter().enumerate() {
            let ins: Vec<String> = c.inputs.iter().map(|w| format!("w{w}")).collect();
            out.push_str(&format!(
                "c{id} {} {} -> w{} w{}\n",
                c.kind,
                ins.join(" "),
                c.sum,
                c.carry
            ));
        }
        out
    }
}

fn netlist(structure: Structure) -> &'static PeripheryNetlist {
    static C16: OnceLock<PeripheryNetlist> = OnceLock::new();
    static C64: OnceLock<PeripheryNetlist> = OnceLock::new();
    static P256: OnceLock<PeripheryNetlist> = OnceLock::new();
    let cell = match structure {
        Structure::Counter16 => &C16,
        Structure::Converter64 => &C64,
        Structure::Periphery256 => &P256,
    };
    cell.get_or_init(|| PeripheryNetlist::build(structure))
}

/// 16 bits in, 5-bit count out.
pub fn parallel_count16(bits: &[bool]) -> Result<u8, AccumError> {
    Ok(netlist(Structure::Counter16).eval(bits)? as u8)
}

/// 64 bits in, 7-bit count out.
pub fn convert64(bits: &[bool]) -> Result<u8, AccumError> {
    Ok(netlist(Structure::Converter64).eval(bits)? as u8)
}

/// 256 bits in, 9-bit count out.
pub fn accumulate256(bits: &[bool]) -> Result<u16, AccumError> {
    Ok(netlist(Structure::Periphery256).eval(bits)? as u16)
}

/// [`accumulate256`] for a sensed array row.
pub fn accumulate_row(row: &RowBits) -> u16 {
    let limbs = row.limbs();
    let lanes: Vec<u64> = (0..256).map(|c| limbs[c / 64] >> (c % 64) & 1).collect();
    let out = netlist(Structure::Periphery256)
        .eval_lanes(&lanes)
        .expect("256 lanes");
    out.iter()
        .enumerate()
        .map(|(i, &b)| ((b & 1) as u16) << i)
        .sum()
}

/// Cell counts for the counter, converter and periphery, in that order.
pub fn netlist_stats() -> [NetlistStats; 3] {
    [
        netlist(Structure::Counter16).stats().clone(),
        netlist(Structure::Converter64).stats().clone(),
        netlist(Structure::Periphery256).stats().clone(),
    ]
}

pub fn netlist_for(structure: Structure) -> &'static PeripheryNetlist {
    netlist(structure)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits_of(x: u64, width: usize) -> Vec<bool> {
        (0..width).map(|i| x >> i & 1 == 1).collect()
    }

    #[test]
    fn counter16_examples() {
        assert_eq!(parallel_count16(&[false; 16]).unwrap(), 0);
        assert_eq!(parallel_count16(&[true; 16]).unwrap(), 16);
        let alt: Vec<bool> = "0101010101010101".chars().map(|c| c == '1').collect();
        assert_eq!(parallel_count16(&alt).unwrap(), 8);
    }

    #[test]
    fn counter16_exhaustive_bitsliced() {
        let n = netlist(Structure::Counter16);
        // 64 consecutive input values per pass
        for base in (0u32..1 << 16).step_by(64) {
            let lanes: Vec<u64> = (0..16)
                .map(|i| {
                    (0..64).fold(0u64, |acc, lane| {
                        acc | (u64::from((base + lane) >> i & 1) << lane)
                    })
                })
                .collect();
            let out = n.eval_lanes(&lanes).unwrap();
            for lane in 0..64 {
                let got: u32 = out
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| ((b >> lane & 1) as u32) << i)
                    .sum();
                assert_eq!(got, (base + lane as u32).count_ones());
            }
        }
    }

    #[test]
    fn widths_and_errors() {
        assert_eq!(netlist(Structure::Counter16).output_width(), 5);
        assert_eq!(netlist(Structure::Converter64).output_width(), 7);
        assert_eq!(netlist(Structure::Periphery256).output_width(), 9);
        assert_eq!(
            parallel_count16(&[true; 15]),
            Err(AccumError::WrongWidth {
                expected: 16,
                got: 15
            })
        );
        assert!(convert64(&[true; 65]).is_err());
        assert!(accumulate256(&[true; 64]).is_err());
    }

    #[test]
    fn corner_patterns() {
        assert_eq!(convert64(&[true; 64]).unwrap(), 64);
        assert_eq!(accumulate256(&[true; 256]).unwrap(), 256);
        assert_eq!(accumulate256(&[false; 256]).unwrap(), 0);
        let alt: Vec<bool> = (0..256).map(|i| i % 2 == 0).collect();
        assert_eq!(accumulate256(&alt).unwrap(), 128);
        for pos in 0..64 {
            let mut v = vec![false; 64];
            v[pos] = true;
            assert_eq!(convert64(&v).unwrap(), 1);
        }
    }

    #[test]
    fn stats_match_structure() {
        let [c16, c64, p256] = netlist_stats();
        assert_eq!(c16.full_adders + c16.half_adders, 15);
        assert_eq!((c16.full_adders, c16.half_adders), (11, 4));
        assert_eq!(
            (c64.sub_units, c64.multibit_adders.clone()),
            (4, vec![5, 5, 6])
        );
        assert_eq!(
            (p256.sub_units, p256.multibit_adders.clone()),
            (4, vec![7, 7, 8])
        );
        // ripple adders: n-bit adder = 1 HA + (n-1) FA
        assert_eq!(c64.full_adders, 4 * 11 + 4 + 4 + 5);
        assert_eq!(p256.half_adders, 4 * c64.half_adders + 3);
    }

    #[test]
    fn netlists_are_acyclic() {
        for s in [
            Structure::Counter16,
            Structure::Converter64,
            Structure::Periphery256,
        ] {
            assert!(netlist(s).is_acyclic(), "{s:?}");
        }
    }

    #[test]
    fn batch_matches_single() {
        let n = netlist(Structure::Converter64);
        let vectors: Vec<Vec<bool>> = (0..40u64)
            .map(|i| bits_of(i.wrapping_mul(0x9e37_79b9_7f4a_7c15), 64))
            .collect();
        let batch = n.eval_batch(&vectors).unwrap();
        for (v, got) in vectors.iter().zip(batch) {
            assert_eq!(got, n.eval(v).unwrap());
            assert_eq!(got, v.iter().filter(|&&b| b).count() as u32);
        }
    }

    #[test]
    fn row_accumulation() {
        let r = RowBits::from_limbs([u64::MAX, 0, 0b1011, 1 << 63]);
        assert_eq!(accumulate_row(&r), 64 + 3 + 1);
        assert_eq!(accumulate_row(&RowBits::ONES), 256);
    }

    #[test]
    fn dump_lists_every_cell() {
        let n = netlist(Structure::Counter16);
        let d = n.dump();
        assert_eq!(d.lines().count(), 1 + 15);
        assert!(d.lines().nth(1).unwrap().starts_with("c0 FA w0 w1 w2 -> "));
    }
}
