use std::fmt::Write as _;
use std::ops::Range;

use super::{DataflowError, MatrixReal};
use crate::array::{COLS, ROWS};

/// BP8 words held by one 256-bit wordline.
pub const WORDS_PER_ROW: usize = COLS / 8;

/// Arrays available to the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inventory {
    pub banks: usize,
    pub arrays_per_bank: usize,
}

impl Default for Inventory {
    /// 64 banks of four arrays: 1 MB of cells.
    fn default() -> Self {
        Self {
            banks: 64,
            arrays_per_bank: 4,
        }
    }
}

impl Inventory {
    pub fn total_arrays(&self) -> usize {
        self.banks * self.arrays_per_bank
    }

    /// Array 0 is reserved for the input vectors.
    pub fn weight_capacity(&self) -> usize {
        self.total_arrays().saturating_sub(1)
    }
}

/// A run of consecutive wordlines in one array, all holding the same
/// `WORDS_PER_ROW`-deep slice (`chunk`) of the weight rows, one column each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub matrix: usize,
    pub chunk: usize,
    pub cols: Range<usize>,
    pub wordlines: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayAssignment {
    pub array: usize,
    pub bank: usize,
    pub tiles: Vec<Tile>,
}

/// Weight-stationary placement of one or more weight matrices sharing an
/// inner dimension.
///
/// Weight column `j` of chunk `c` occupies one wordline. Within a matrix,
/// wordlines are laid out chunk by chunk and every matrix starts on a fresh
/// array. Chunk `c` of the input vector is broadcast to every array listed
/// in `broadcast[c]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementPlan {
    inventory: Inventory,
    inner: usize,
    matrix_cols: Vec<usize>,
    assignments: Vec<ArrayAssignment>,
    broadcast: Vec<Vec<usize>>,
}

pub fn plan_placement(
    weights: &[MatrixReal],
    inventory: Inventory,
) -> Result<PlacementPlan, DataflowError> {
    let shapes: Vec<(usize, usize)> = weights.iter().map(|w| w.shape()).collect();
    PlacementPlan::for_shapes(&shapes, inventory)
}

impl PlacementPlan {
    /// Plans weight matrices given as `(rows, cols)` = `(K, M)`.
    pub fn for_shapes(
        shapes: &[(usize, usize)],
        inventory: Inventory,
    ) -> Result<Self, DataflowError> {
        let &(inner, _) = shapes
            .first()
            .ok_or_else(|| DataflowError::Plan("no weight matrices".into()))?;
        for (m, &(k, cols)) in shapes.iter().enumerate() {
            if k == 0 || cols == 0 {
                return Err(DataflowError::Plan(format!(
                    "weight matrix {m} is empty ({k}x{cols})"
                )));
            }
            if k != inner {
                return Err(DataflowError::Plan(format!(
                    "weight matrix {m} has {k} rows, matrix 0 has {inner}; broadcast needs a shared input"
                )));
            }
        }
        let chunks = inner.div_ceil(WORDS_PER_ROW);
        let needed: usize = shapes
            .iter()
            .map(|&(_, cols)| (chunks * cols).div_ceil(ROWS))
            .sum();
        if needed > inventory.weight_capacity() {
            return Err(DataflowError::Capacity {
                needed,
                available: inventory.weight_capacity(),
            });
        }

        let mut assignments: Vec<ArrayAssignment> = Vec::with_capacity(needed);
        let mut broadcast = vec![Vec::new(); chunks];
        for (matrix, &(_, cols)) in shapes.iter().enumerate() {
            let base = assignments.len() + 1;
            for slot in 0..chunks * cols {
                let (chunk, col) = (slot / cols, slot % cols);
                let (array, wordline) = (base + slot / ROWS, slot % ROWS);
                if assignments.last().map(|a| a.array) != Some(array) {
                    assignments.push(ArrayAssignment {
                        array,
                        bank: array / inventory.arrays_per_bank,
                        tiles: Vec::new(),
                    });
                }
                let tiles = &mut assignments.last_mut().expect("pushed above").tiles;
                match tiles.last_mut() {
                    Some(t) if t.matrix == matrix && t.chunk == chunk => {
                        t.cols.end = col + 1;
                        t.wordlines.end = wordline + 1;
                    }
                    _ => {
                        tiles.push(Tile {
                            matrix,
                            chunk,
                            cols: col..col + 1,
                            wordlines: wordline..wordline + 1,
                        });
                        broadcast[chunk].push(array);
                    }
                }
            }
        }
        Ok(Self {
            inventory,
            inner,
            matrix_cols: shapes.iter().map(|&(_, c)| c).collect(),
            assignments,
            broadcast,
        })
    }

    pub fn inventory(&self) -> Inventory {
        self.inventory
    }

    /// Shared inner dimension `K`.
    pub fn inner(&self) -> usize {
        self.inner
    }

    pub fn chunks(&self) -> usize {
        self.broadcast.len()
    }

    /// Column counts of the planned weight matrices.
    pub fn matrix_cols(&self) -> &[usize] {
        &self.matrix_cols
    }

    pub fn assignments(&self) -> &[ArrayAssignment] {
        &self.assignments
    }

    /// Arrays holding weights, excluding the input array.
    pub fn weight_arrays(&self) -> usize {
        self.assignments.len()
    }

    pub fn input_array(&self) -> usize {
        0
    }

    /// Arrays receiving input chunk `chunk`.
    pub fn broadcast(&self, chunk: usize) -> &[usize] {
        &self.broadcast[chunk]
    }

    /// Largest broadcast fan-out over all chunks.
    pub fn fan_out(&self) -> usize {
        self.broadcast.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Text listing: one line per tile, then the broadcast table.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "inventory banks={} arrays_per_bank={} input_array={}\n",
            self.inventory.banks,
            self.inventory.arrays_per_bank,
            self.input_array()
        );
        for a in &self.assignments {
            for t in &a.tiles {
                let _ = writeln!(
                    out,
                    "array {} bank {}: matrix {} rows {}..{} cols {}..{} wordlines {}..{}",
                    a.array,
                    a.bank,
                    t.matrix,
                    t.chunk * WORDS_PER_ROW,
                    ((t.chunk + 1) * WORDS_PER_ROW).min(self.inner),
                    t.cols.start,
                    t.cols.end,
                    t.wordlines.start,
                    t.wordlines.end
                );
            }
        }
        for (c, arrays) in self.broadcast.iter().enumerate() {
            let ids: Vec<String> = arrays.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(out, "broadcast chunk {c} -> {}", ids.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_matrix_fills_one_array() {
        let plan = PlacementPlan::for_shapes(&[(128, 32)], Inventory::default()).unwrap();
        assert_eq!(plan.weight_arrays(), 1);
        let a = &plan.assignments()[0];
        assert_eq!(a.array, 1);
        let lines: usize = a.tiles.iter().map(|t| t.wordlines.len()).sum();
        assert_eq!(lines, 128);
        assert_eq!(a.tiles.len(), 4);
    }

    #[test]
    fn qkv_broadcasts_three_ways() {
        let plan = PlacementPlan::for_shapes(&[(128, 32); 3], Inventory::default()).unwrap();
        assert_eq!(plan.weight_arrays(), 3);
        assert_eq!(plan.fan_out(), 3);
        for c in 0..plan.chunks() {
            assert_eq!(plan.broadcast(c), &[1, 2, 3]);
        }
    }

    #[test]
    fn every_weight_slot_placed_once() {
        let plan = PlacementPlan::for_shapes(&[(70, 90), (70, 5)], Inventory::default()).unwrap();
        let mut seen = std::collections::HashSet::new();
        let mut used = std::collections::HashSet::new();
        for a in plan.assignments() {
            for t in &a.tiles {
                assert_eq!(t.cols.len(), t.wordlines.len());
                for (col, wl) in t.cols.clone().zip(t.wordlines.clone()) {
                    assert!(seen.insert((t.matrix, t.chunk, col)));
                    assert!(used.insert((a.array, wl)));
                }
            }
        }
        assert_eq!(seen.len(), 3 * 90 + 3 * 5);
    }

    #[test]
    fn capacity_exceeded() {
        let inv = Inventory {
            banks: 1,
            arrays_per_bank: 2,
        };
        assert_eq!(
            PlacementPlan::for_shapes(&[(256, 32)], inv),
            Err(DataflowError::Capacity {
                needed: 2,
                available: 1
            })
        );
    }

    #[test]
    fn mismatched_inner_rejected() {
        assert!(matches!(
            PlacementPlan::for_shapes(&[(32, 4), (64, 4)], Inventory::default()),
            Err(DataflowError::Plan(_))
        ));
        assert!(matches!(
            PlacementPlan::for_shapes(&[], Inventory::default()),
            Err(DataflowError::Plan(_))
        ));
    }

    #[test]
    fn dump_lists_tiles_and_broadcast() {
        let plan = PlacementPlan::for_shapes(&[(40, 2)], Inventory::default()).unwrap();
        assert_eq!(
            plan.dump(),
            "inventory banks=64 arrays_per_bank=4 input_array=0\n\
             array 1 bank 0: matrix 0 rows 0..32 cols 0..2 wordlines 0..2\n\
             array 1 bank 0: matrix 0 rows 32..40 cols 0..2 wordlines 2..4\n\
             broadcast chunk 0 -> 1\n\
             broadcast chunk 1 -> 1\n"
        );
    }
}
