//! Functional model of one 256-column x 128-row 1T1R array.
//!
//! Cells hold HRS (logic 1) or LRS (logic 0). Every operation activates a
//! single wordline and emits the control-signal phases that drive the
//! column logic. Sensing is ideal; per-cell stuck-at faults can be injected
//! for experiments and are off by default.

use std::fmt;

use thiserror::Error;

pub const ROWS: usize = 128;
pub const COLS: usize = 256;
const LIMBS: usize = COLS / 64;

/// Total latency of a read or AND, in ns.
pub const CYCLE_NS: f64 = 20.0;
/// Pre-charge/discharge share of a read or AND, in ns.
pub const PRECHARGE_NS: f64 = 14.0;
/// Floating and sensing share of a read or AND, in ns.
pub const SENSE_NS: f64 = CYCLE_NS - PRECHARGE_NS;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArrayError {
    #[error("row {0} out of range (array has {ROWS} rows)")]
    RowOutOfRange(usize),
    #[error("expected {COLS} bits, got {0}")]
    WrongWidth(usize),
    #[error("malformed array snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RramState {
    Hrs,
    Lrs,
}

impl RramState {
    pub fn from_logic(bit: bool) -> Self {
        if bit {
            RramState::Hrs
        } else {
            RramState::Lrs
        }
    }

    pub fn logic(self) -> bool {
        self == RramState::Hrs
    }
}

/// 256 bits, one per column. Bit `c` lives in limb `c / 64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RowBits([u64; LIMBS]);

impl RowBits {
    pub const ZERO: RowBits = RowBits([0; LIMBS]);
    pub const ONES: RowBits = RowBits([u64::MAX; LIMBS]);

    pub fn from_limbs(limbs: [u64; LIMBS]) -> Self {
        RowBits(limbs)
    }

    pub fn limbs(&self) -> [u64; LIMBS] {
        self.0
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self, ArrayError> {
        if bits.len() != COLS {
            return Err(ArrayError::WrongWidth(bits.len()));
        }
        let mut r = RowBits::ZERO;
        for (c, &b) in bits.iter().enumerate() {
            r.set(c, b);
        }
        Ok(r)
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..COLS).map(|c| self.get(c)).collect()
    }

    /// Packs 32 eight-bit words; word `w` occupies columns `8w..8w+8` with
    /// bit `i` of the word in column `8w + i`.
    pub fn from_words(words: &[u8; COLS / 8]) -> Self {
        let mut limbs = [0u64; LIMBS];
        for (w, &byte) in words.iter().enumerate() {
            limbs[w / 8] |= u64::from(byte) << (8 * (w % 8));
        }
        RowBits(limbs)
    }

    pub fn to_words(&self) -> [u8; COLS / 8] {
        std::array::from_fn(|w| (self.0[w / 8] >> (8 * (w % 8))) as u8)
    }

    pub fn get(&self, col: usize) -> bool {
        self.0[col / 64] >> (col % 64) & 1 == 1
    }

    pub fn set(&mut self, col: usize, bit: bool) {
        let mask = 1u64 << (col % 64);
        if bit {
            self.0[col / 64] |= mask;
        } else {
            self.0[col / 64] &= !mask;
        }
    }

    pub fn and(&self, other: &RowBits) -> RowBits {
        RowBits(std::array::from_fn(|i| self.0[i] & other.0[i]))
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|l| l.count_ones()).sum()
    }

    fn not(&self) -> RowBits {
        RowBits(std::array::from_fn(|i| !self.0[i]))
    }

    fn or(&self, other: &RowBits) -> RowBits {
        RowBits(std::array::from_fn(|i| self.0[i] | other.0[i]))
    }

    pub fn parse(s: &str) -> Result<Self, ArrayError> {
        let s = s.trim();
        if s.len() != COLS {
            return Err(ArrayError::WrongWidth(s.len()));
        }
        let mut r = RowBits::ZERO;
        for (c, ch) in s.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => r.set(c, true),
                _ => return Err(ArrayError::Snapshot(format!("unexpected character {ch:?}"))),
            }
        }
        Ok(r)
    }
}

impl fmt::Display for RowBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in 0..COLS {
            f.write_str(if self.get(c) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A control input: 0, 1 or don't-care.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Logic {
    Zero,
    One,
    X,
}

impl From<bool> for Logic {
    fn from(b: bool) -> Self {
        if b {
            Logic::One
        } else {
            Logic::Zero
        }
    }
}

impl fmt::Display for Logic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Logic::Zero => "0",
            Logic::One => "1",
            Logic::X => "X",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineState {
    Charge,
    Discharge,
    Floating,
}

impl fmt::Display for LineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LineState::Charge => "Charge",
            LineState::Discharge => "Discharge",
            LineState::Floating => "Floating",
        })
    }
}

/// One phase worth of column control signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlVector {
    pub we: Logic,
    pub s: Logic,
    pub sb: Logic,
    pub r: Logic,
    pub input: Logic,
    pub pre_en: Logic,
    pub bl: LineState,
    pub blb: LineState,
}

impl ControlVector {
    /// Second phase shared by read and AND: lines float while the sense
    /// amplifier resolves.
    pub const SENSE: ControlVector = ControlVector {
        we: Logic::Zero,
        s: Logic::Zero,
        sb: Logic::One,
        r: Logic::Zero,
        input: Logic::X,
        pre_en: Logic::Zero,
        bl: LineState::Floating,
        blb: LineState::Floating,
    };

    pub const READ_PRECHARGE: ControlVector = ControlVector {
        we: Logic::Zero,
        s: Logic::Zero,
        sb: Logic::One,
        r: Logic::One,
        input: Logic::X,
        pre_en: Logic::One,
        bl: LineState::Charge,
        blb: LineState::Discharge,
    };

    /// AND pre-charge: BL follows the input bit, BLb is always discharged.
    pub fn and_precharge(input: bool) -> ControlVector {
        ControlVector {
            we: Logic::Zero,
            s: Logic::One,
            sb: Logic::Zero,
            r: Logic::Zero,
            input: input.into(),
            pre_en: Logic::One,
            bl: if input {
                LineState::Charge
            } else {
                LineState::Discharge
            },
            blb: LineState::Discharge,
        }
    }

    /// Write drive: BL and BLb take opposite levels set by the data bit.
    pub fn write(bit: bool) -> ControlVector {
        ControlVector {
            we: Logic::One,
            s: Logic::One,
            sb: Logic::Zero,
            r: Logic::X,
            input: bit.into(),
            pre_en: Logic::X,
            bl: if bit {
                LineState::Charge
            } else {
                LineState::Discharge
            },
            blb: if bit {
                LineState::Discharge
            } else {
                LineState::Charge
            },
        }
    }

    /// S and Sb must be complementary unless one is a don't-care.
    pub fn is_consistent(&self) -> bool {
        match (self.s, self.sb) {
            (Logic::X, _) | (_, Logic::X) => true,
            (a, b) => a != b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Read,
    And,
    Write,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpKind::Read => "read",
            OpKind::And => "and",
            OpKind::Write => "write",
        })
    }
}

/// Latency of one operation in ns. Every operation fits a single 20 ns cycle
/// (50 MHz).
pub fn latency(kind: OpKind) -> f64 {
    match kind {
        OpKind::Read | OpKind::And | OpKind::Write => CYCLE_NS,
    }
}

/// One protocol phase. Operations whose columns see different `IN` values
/// carry one control vector per distinct value (IN=0 first).
#[derive(Debug, Clone, PartialEq)]
pub struct TracePhase {
    pub index: u8,
    pub controls: Vec<ControlVector>,
    pub duration_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpTrace {
    pub kind: OpKind,
    pub row: usize,
    pub phases: Vec<TracePhase>,
    /// Columns driven with IN=1, for AND and write.
    pub column_mask: Option<RowBits>,
}

impl OpTrace {
    pub fn total_ns(&self) -> f64 {
        self.phases.iter().map(|p| p.duration_ns).sum()
    }

    /// One line per control vector:
    /// `<op> phase=<n> WE=<v> S=<v> Sb=<v> R=<v> IN=<v> Pre_en=<v> BL=<state> BLb=<state> dur_ns=<t>`
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.phases {
            for c in &p.controls {
                out.push_str(&format!(
                    "{} phase={} WE={} S={} Sb={} R={} IN={} Pre_en={} BL={} BLb={} dur_ns={}\n",
                    self.kind,
                    p.index,
                    c.we,
                    c.s,
                    c.sb,
                    c.r,
                    c.input,
                    c.pre_en,
                    c.bl,
                    c.blb,
                    p.duration_ns
                ));
            }
        }
        out
    }
}

/// Column-input split into the distinct IN values present, IN=0 first.
fn input_variants(input: &RowBits, make: impl Fn(bool) -> ControlVector) -> Vec<ControlVector> {
    let ones = input.count_ones() as usize;
    let mut v = Vec::with_capacity(2);
    if ones < COLS {
        v.push(make(false));
    }
    if ones > 0 {
        v.push(make(true));
    }
    v
}

fn two_phase(
    kind: OpKind,
    row: usize,
    first: Vec<ControlVector>,
    mask: Option<RowBits>,
) -> OpTrace {
    OpTrace {
        kind,
        row,
        phases: vec![
            TracePhase {
                index: 1,
                controls: first,
                duration_ns: PRECHARGE_NS,
            },
            TracePhase {
                index: 2,
                controls: vec![ControlVector::SENSE],
                duration_ns: SENSE_NS,
            },
        ],
        column_mask: mask,
    }
}

/// Per-cell stuck-at faults: `stuck_mask` selects faulty cells and
/// `stuck_value` holds the value they read as.
#[derive(Debug, Clone, PartialEq, Eq)]
struct FaultMap {
    stuck_mask: Vec<RowBits>,
    stuck_value: Vec<RowBits>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OismaArray {
    cells: Vec<RowBits>,
    faults: Option<FaultMap>,
}

impl Default for OismaArray {
    fn default() -> Self {
        Self::new()
    }
}

impl OismaArray {
    /// A fresh array with every cell in LRS.
    pub fn new() -> Self {
        Self {
            cells: vec![RowBits::ZERO; ROWS],
            faults: None,
        }
    }

    fn check_row(row: usize) -> Result<(), ArrayError> {
        if row >= ROWS {
            Err(ArrayError::RowOutOfRange(row))
        } else {
            Ok(())
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> RramState {
        RramState::from_logic(self.cells[row].get(col))
    }

    /// Forces the sensed value of one cell regardless of what is stored.
    pub fn inject_stuck_at(
        &mut self,
        row: usize,
        col: usize,
        value: bool,
    ) -> Result<(), ArrayError> {
        Self::check_row(row)?;
        if col >= COLS {
            return Err(ArrayError::WrongWidth(col));
        }
        let f = self.faults.get_or_insert_with(|| FaultMap {
            stuck_mask: vec![RowBits::ZERO; ROWS],
            stuck_value: vec![RowBits::ZERO; ROWS],
        });
        f.stuck_mask[row].set(col, true);
        f.stuck_value[row].set(col, value);
        Ok(())
    }

    pub fn clear_faults(&mut self) {
        self.faults = None;
    }

    /// What the sense amplifiers see for a fully pre-charged row.
    fn sensed(&self, row: usize) -> RowBits {
        let stored = self.cells[row];
        match &self.faults {
            None => stored,
            Some(f) => {
                let m = f.stuck_mask[row];
                stored.and(&m.not()).or(&f.stuck_value[row].and(&m))
            }
        }
    }

    pub fn write_row(&mut self, row: usize, bits: &RowBits) -> Result<OpTrace, ArrayError> {
        Self::check_row(row)?;
        self.cells[row] = *bits;
        Ok(OpTrace {
            kind: OpKind::Write,
            row,
            phases: vec![TracePhase {
                index: 1,
                controls: input_variants(bits, ControlVector::write),
                duration_ns: latency(OpKind::Write),
            }],
            column_mask: Some(*bits),
        })
    }

    pub fn write_row_bools(&mut self, row: usize, bits: &[bool]) -> Result<OpTrace, ArrayError> {
        self.write_row(row, &RowBits::from_bools(bits)?)
    }

    pub fn read_row(&self, row: usize) -> Result<(RowBits, OpTrace), ArrayError> {
        Self::check_row(row)?;
        let trace = two_phase(OpKind::Read, row, vec![ControlVector::READ_PRECHARGE], None);
        Ok((self.sensed(row), trace))
    }

    /// In-situ AND: columns with IN=1 pre-charge and read the cell, columns
    /// with IN=0 pre-discharge and always sense 0.
    pub fn and_row(&self, row: usize, input: &RowBits) -> Result<(RowBits, OpTrace), ArrayError> {
        Self::check_row(row)?;
        let trace = two_phase(
            OpKind::And,
            row,
            input_variants(input, ControlVector::and_precharge),
            Some(*input),
        );
        Ok((self.sensed(row).and(input), trace))
    }

    pub fn and_row_bools(
        &self,
        row: usize,
        input: &[bool],
    ) -> Result<(Vec<bool>, OpTrace), ArrayError> {
        let (out, trace) = self.and_row(row, &RowBits::from_bools(input)?)?;
        Ok((out.to_bools(), trace))
    }

    /// 128 lines of 256 `0`/`1` characters.
    pub fn snapshot(&self) -> String {
        let mut out = String::with_capacity(ROWS * (COLS + 1));
        for r in &self.cells {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self, ArrayError> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != ROWS {
            return Err(ArrayError::Snapshot(format!(
                "expected {ROWS} rows, found {}",
                rows.len()
            )));
        }
        let cells = rows
            .iter()
            .map(|l| RowBits::parse(l))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            cells,
            faults: None,
        })
    }
}
