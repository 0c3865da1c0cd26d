use std::fmt;

use thiserror::Error;

use super::{Bias, BpBitstream, Decode, BP10_WIDTH, LEVELS};

// Nested pyramids: each value's ones are the previous value's ones grown by
// one position at an edge. Right-biased streams grow around index 6 and
// left-biased ones around index 3.
const DEFAULT_RIGHT: [&str; LEVELS] = [
    "0000000000",
    "0000001000",
    "0000011000",
    "0000011100",
    "0000111100",
    "0000111110",
    "0000111111",
    "0001111111",
    "0011111111",
    "0111111111",
];

const DEFAULT_LEFT: [&str; LEVELS] = [
    "0000000000",
    "0001000000",
    "0001100000",
    "0001110000",
    "0011110000",
    "0111110000",
    "0111111000",
    "0111111100",
    "1111111100",
    "1111111110",
];

/// The two complementary 10-entry tables. Entry `k` encodes `k / 10`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BpDataset {
    pub right: [BpBitstream; LEVELS],
    pub left: [BpBitstream; LEVELS],
}

impl BpDataset {
    /// Builds a dataset from raw bit patterns; entry `k` of each table is
    /// assigned value `k`.
    pub fn from_bits(right: [u16; LEVELS], left: [u16; LEVELS]) -> Self {
        let side = |bits: [u16; LEVELS], bias| {
            std::array::from_fn(|k| BpBitstream::with_value(bits[k], k as u8, bias))
        };
        Self {
            right: side(right, Bias::Right),
            left: side(left, Bias::Left),
        }
    }

    pub fn get(&self, bias: Bias, tenths: u8) -> &BpBitstream {
        let k = usize::from(tenths);
        match bias {
            Bias::Right => &self.right[k],
            Bias::Left => &self.left[k],
        }
    }

    pub fn side(&self, bias: Bias) -> &[BpBitstream; LEVELS] {
        match bias {
            Bias::Right => &self.right,
            Bias::Left => &self.left,
        }
    }

    /// Ones-count of `right[i] AND left[j]` for every value pair.
    pub fn product_table(&self) -> [[u8; LEVELS]; LEVELS] {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| (self.right[i].bits() & self.left[j].bits()).count_ones() as u8)
        })
    }

    /// Serializes to the text dataset format accepted by [`load_dataset`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("BP10\nRIGHT\n");
        for b in &self.right {
            out.push_str(&b.to_string());
            out.push('\n');
        }
        out.push_str("LEFT\n");
        for b in &self.left {
            out.push_str(&b.to_string());
            out.push('\n');
        }
        out
    }
}

pub fn default_dataset() -> BpDataset {
    let parse = |table: [&str; LEVELS], bias| {
        std::array::from_fn(|k| BpBitstream::parse(table[k], bias).expect("built-in pattern"))
    };
    BpDataset {
        right: parse(DEFAULT_RIGHT, Bias::Right),
        left: parse(DEFAULT_LEFT, Bias::Left),
    }
}

/// One broken dataset invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Popcount { bias: Bias, tenths: u8, ones: u32 },
    EdgeBit { bias: Bias, tenths: u8 },
    WrongBias { expected: Bias, tenths: u8 },
    Duplicate { bias: Bias, first: u8, second: u8 },
    WorkedExample { ones: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Popcount { bias, tenths, ones } => {
                write!(
                    f,
                    "{bias}-biased 0.{tenths} has {ones} ones, expected {tenths}"
                )
            }
            Violation::EdgeBit { bias, tenths } => {
                write!(
                    f,
                    "{bias}-biased bit{} nonzero at 0.{tenths}",
                    bias.zero_edge()
                )
            }
            Violation::WrongBias { expected, tenths } => {
                write!(
                    f,
                    "entry 0.{tenths} of the {expected}-biased table carries the wrong bias"
                )
            }
            Violation::Duplicate {
                bias,
                first,
                second,
            } => {
                write!(f, "{bias}-biased 0.{first} and 0.{second} are identical")
            }
            Violation::WorkedExample { ones } => write!(
                f,
                "worked example mismatch: right 0.3 AND left 0.6 has {ones} ones, expected 2"
            ),
        }
    }
}

/// Checks every dataset invariant. An empty result means the dataset is usable.
pub fn validate_dataset(d: &BpDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    for bias in [Bias::Right, Bias::Left] {
        let side = d.side(bias);
        for (k, b) in side.iter().enumerate() {
            let tenths = k as u8;
            // at most one violation per entry, most specific first
            if b.bias() != bias {
                out.push(Violation::WrongBias {
                    expected: bias,
                    tenths,
                });
            } else if b.bit(bias.zero_edge()) {
                out.push(Violation::EdgeBit { bias, tenths });
            } else if b.ones() != u32::from(tenths) || b.value_tenths() != tenths {
                out.push(Violation::Popcount {
                    bias,
                    tenths,
                    ones: b.ones(),
                });
            }
        }
        for i in 0..LEVELS {
            for j in i + 1..LEVELS {
                if side[i].bits() == side[j].bits() {
                    out.push(Violation::Duplicate {
                        bias,
                        first: i as u8,
                        second: j as u8,
                    });
                }
            }
        }
    }
    let ones = (d.right[3].bits() & d.left[6].bits()).count_ones();
    if ones != 2 {
        out.push(Violation::WorkedExample { ones });
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset failed validation: {0}")]
    Invalid(Violation),
}

fn parse_err(line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the text dataset format and validates the result.
///
/// Use [`parse_dataset`] to get at a dataset that fails validation.
///
/// ```text
/// BP10
/// RIGHT
/// <10 lines of 10 '0'/'1' characters, values 0.0..0.9>
/// LEFT
/// <10 more lines>
/// ```
///
/// Blank lines and `#` comments are ignored.
pub fn load_dataset(text: &str) -> Result<BpDataset, DatasetError> {
    let d = parse_dataset(text)?;
    match validate_dataset(&d).into_iter().next() {
        Some(v) => Err(DatasetError::Invalid(v)),
        None => Ok(d),
    }
}

/// [`load_dataset`] without the validation step.
pub fn parse_dataset(text: &str) -> Result<BpDataset, DatasetError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        Some((_, "BP10")) => {}
        Some((n, other)) => {
            return Err(parse_err(
                n,
                format!("expected `BP10` header, found {other:?}"),
            ))
        }
        None => return Err(parse_err(0, "empty dataset file")),
    }

    let mut sections: [Vec<u16>; 2] = [Vec::new(), Vec::new()];
    let mut current: Option<usize> = None;
    let mut last_line = 1;
    for (n, line) in lines {
        last_line = n;
        match line {
            "RIGHT" | "LEFT" => {
                let idx = usize::from(line == "LEFT");
                if !sections[idx].is_empty() || current == Some(idx) {
                    return Err(parse_err(n, format!("duplicate {line} section")));
                }
                if idx == 1 && current.is_none() {
                    return Err(parse_err(n, "LEFT section before RIGHT"));
                }
                current = Some(idx);
            }
            _ => {
                let idx = current.ok_or_else(|| parse_err(n, "bitstream outside a section"))?;
                let b = BpBitstream::parse(line, Bias::Right).map_err(|_| {
                    parse_err(
                        n,
                        format!("expected {BP10_WIDTH} characters of 0/1, found {line:?}"),
                    )
                })?;
                if sections[idx].len() == LEVELS {
                    return Err(parse_err(n, format!("more than {LEVELS} lines in section")));
                }
                sections[idx].push(b.bits());
            }
        }
    }
    for (idx, name) in ["RIGHT", "LEFT"].iter().enumerate() {
        if sections[idx].len() != LEVELS {
            return Err(parse_err(
                last_line,
                format!(
                    "{name} section has {} lines, expected {LEVELS}",
                    sections[idx].len()
                ),
            ));
        }
    }

    let take = |v: &Vec<u16>| -> [u16; LEVELS] { std::array::from_fn(|k| v[k]) };
    Ok(BpDataset::from_bits(take(&sections[0]), take(&sections[1])))
}
