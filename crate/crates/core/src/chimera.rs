//! Chimera qubit-connectivity graphs: a grid of 8-qubit bipartite cells.
//!
//! Each cell holds two sides of four qubits wired as a complete bipartite
//! K4,4 block. Inter-cell couplers join same-side, same-slot qubits of
//! adjacent cells: left-side qubits couple vertically (to the cell below),
//! right-side qubits couple horizontally (to the cell to the right). The
//! graph is bipartite, so every cycle has even length.

use std::fmt;
use std::io::{self, Write};

use crate::{Error, Result};

/// Number of qubits in one cell (two sides of four).
pub const QUBITS_PER_CELL: usize = 8;
/// Number of qubits on one side of a cell.
pub const SLOTS_PER_SIDE: usize = 4;

/// Index of a qubit within a graph.
///
/// Qubits are numbered cell-by-cell in row-major cell order; within a cell
/// the four left-side qubits come first, then the four right-side qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QubitId(pub u32);

impl QubitId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for QubitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a coupler within a graph's canonical coupler list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CouplerId(pub u32);

impl CouplerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Grid position of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellCoord {
    pub row: usize,
    pub col: usize,
}

/// Which half of a cell a qubit sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// How a coupler relates its two endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplerKind {
    /// Left/right pair inside one cell.
    Intra,
    /// Same-slot right-side qubits of horizontally adjacent cells.
    InterHorizontal,
    /// Same-slot left-side qubits of vertically adjacent cells.
    InterVertical,
}

impl CouplerKind {
    pub fn token(self) -> &'static str {
        match self {
            CouplerKind::Intra => "intra",
            CouplerKind::InterHorizontal => "inter-h",
            CouplerKind::InterVertical => "inter-v",
        }
    }
}

impl fmt::Display for CouplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// An undirected coupler; `q1 < q2` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coupler {
    pub q1: QubitId,
    pub q2: QubitId,
    pub kind: CouplerKind,
}

impl Coupler {
    /// The endpoint that is not `q`. Panics if `q` is not an endpoint.
    pub fn other(&self, q: QubitId) -> QubitId {
        if q == self.q1 {
            self.q2
        } else {
            assert_eq!(q, self.q2, "qubit {q} is not an endpoint");
            self.q1
        }
    }
}

/// A rectangular region of Chimera cells.
#[derive(Debug, Clone)]
pub struct ChimeraGraph {
    rows: usize,
    cols: usize,
    couplers: Vec<Coupler>,
    adjacency: Vec<Vec<(QubitId, CouplerId)>>,
}

impl ChimeraGraph {
    /// Builds the square c x c graph (8c^2 qubits).
    pub fn square(c: usize) -> Result<Self> {
        Self::rect(c, c)
    }

    /// Builds a rows x cols region. Both dimensions must be at least 1.
    pub fn rect(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "chimera grid must have positive dimensions, got {rows}x{cols}"
            )));
        }
        let n = rows * cols * QUBITS_PER_CELL;
        let mut couplers = Vec::new();
        // Enumerating each qubit's higher-numbered partners in ascending
        // order yields a coupler list globally sorted by (q1, q2).
        for q in 0..n {
            let (cell, side, slot) = decompose_index(q, cols);
            match side {
                Side::Left => {
                    let base = (cell.row * cols + cell.col) * QUBITS_PER_CELL;
                    for s in 0..SLOTS_PER_SIDE {
                        couplers.push(Coupler {
                            q1: QubitId(q as u32),
                            q2: QubitId((base + SLOTS_PER_SIDE + s) as u32),
                            kind: CouplerKind::Intra,
                        });
                    }
                    if cell.row + 1 < rows {
                        let below = ((cell.row + 1) * cols + cell.col) * QUBITS_PER_CELL + slot;
                        couplers.push(Coupler {
                            q1: QubitId(q as u32),
                            q2: QubitId(below as u32),
                            kind: CouplerKind::InterVertical,
                        });
                    }
                }
                Side::Right => {
                    if cell.col + 1 < cols {
                        let right = (cell.row * cols + cell.col + 1) * QUBITS_PER_CELL
                            + SLOTS_PER_SIDE
                            + slot;
                        couplers.push(Coupler {
                            q1: QubitId(q as u32),
                            q2: QubitId(right as u32),
                            kind: CouplerKind::InterHorizontal,
                        });
                    }
                }
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (i, c) in couplers.iter().enumerate() {
            let id = CouplerId(i as u32);
            adjacency[c.q1.index()].push((c.q2, id));
            adjacency[c.q2.index()].push((c.q1, id));
        }
        // Pushing in coupler-id order already leaves each list sorted by
        // neighbor index; keep the sort as a guard against reorderings.
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(ChimeraGraph {
            rows,
            cols,
            couplers,
            adjacency,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Side length if the region is square.
    pub fn square_side(&self) -> Option<usize> {
        (self.rows == self.cols).then_some(self.cols)
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn num_qubits(&self) -> usize {
        self.num_cells() * QUBITS_PER_CELL
    }

    pub fn num_couplers(&self) -> usize {
        self.couplers.len()
    }

    pub fn qubits(&self) -> impl Iterator<Item = QubitId> {
        (0..self.num_qubits() as u32).map(QubitId)
    }

    /// Couplers sorted by (q1, q2); a `CouplerId` indexes this slice.
    pub fn couplers(&self) -> &[Coupler] {
        &self.couplers
    }

    pub fn coupler(&self, id: CouplerId) -> &Coupler {
        &self.couplers[id.index()]
    }

    /// Neighbors of `q` in ascending order, each with the joining coupler.
    pub fn neighbors(&self, q: QubitId) -> &[(QubitId, CouplerId)] {
        &self.adjacency[q.index()]
    }

    /// The coupler joining `a` and `b`, if they are adjacent.
    pub fn find_coupler(&self, a: QubitId, b: QubitId) -> Option<CouplerId> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.couplers
            .binary_search_by_key(&(lo, hi), |c| (c.q1, c.q2))
            .ok()
            .map(|i| CouplerId(i as u32))
    }

    pub fn cell_of(&self, q: QubitId) -> CellCoord {
        self.decompose(q).0
    }

    /// Splits a qubit index into (cell, side, slot).
    pub fn decompose(&self, q: QubitId) -> (CellCoord, Side, usize) {
        assert!(q.index() < self.num_qubits(), "qubit {q} out of range");
        decompose_index(q.index(), self.cols)
    }

    /// Inverse of [`decompose`](Self::decompose).
    pub fn qubit_at(&self, cell: CellCoord, side: Side, slot: usize) -> QubitId {
        assert!(cell.row < self.rows && cell.col < self.cols && slot < SLOTS_PER_SIDE);
        let side_offset = match side {
            Side::Left => 0,
            Side::Right => SLOTS_PER_SIDE,
        };
        QubitId(((cell.row * self.cols + cell.col) * QUBITS_PER_CELL + side_offset + slot) as u32)
    }

    /// Writes one `q1 q2 kind` line per coupler, sorted by (q1, q2).
    pub fn export_edge_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        for c in &self.couplers {
            writeln!(w, "{} {} {}", c.q1, c.q2, c.kind)?;
        }
        Ok(())
    }
}

fn decompose_index(q: usize, cols: usize) -> (CellCoord, Side, usize) {
    let cell_index = q / QUBITS_PER_CELL;
    let within = q % QUBITS_PER_CELL;
    let side = if within < SLOTS_PER_SIDE {
        Side::Left
    } else {
        Side::Right
    };
    (
        CellCoord {
            row: cell_index / cols,
            col: cell_index % cols,
        },
        side,
        within % SLOTS_PER_SIDE,
    )
}
