//! Ising problems over a Chimera graph and their energy arithmetic.
//!
//! A problem assigns a qubit coefficient `a_i` to every qubit and a coupler
//! coefficient `b_ij` to every coupler; a sample assigns a spin of -1 or +1
//! to every qubit. The objective is
//! `F = sum_i a_i q_i + sum_(i,j) b_ij q_i q_j`.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::chimera::{ChimeraGraph, QubitId};
use crate::{Error, Result};

/// Hardware range for qubit coefficients.
pub const QUBIT_COEFF_RANGE: (f64, f64) = (-2.0, 2.0);
/// Hardware range for coupler coefficients.
pub const COUPLER_COEFF_RANGE: (f64, f64) = (-1.0, 1.0);

/// An energy value of a spin assignment.
pub type Energy = f64;

/// One spin per qubit, each -1 or +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub spins: Vec<i8>,
}

impl Sample {
    /// A sample with every spin set to `spin`.
    pub fn uniform(n: usize, spin: i8) -> Self {
        assert!(spin == 1 || spin == -1);
        Sample {
            spins: vec![spin; n],
        }
    }

    pub fn from_spins(spins: Vec<i8>) -> Result<Self> {
        if let Some(i) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!(
                "spin at qubit {i} must be -1 or +1, got {}",
                spins[i]
            )));
        }
        Ok(Sample { spins })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spin(&self, q: QubitId) -> i8 {
        self.spins[q.index()]
    }

    /// The sample with every spin negated.
    pub fn flipped(&self) -> Sample {
        Sample {
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }
}

/// Coefficients of an Ising objective over a shared Chimera graph.
#[derive(Debug, Clone)]
pub struct IsingProblem {
    graph: Arc<ChimeraGraph>,
    a: Vec<f64>,
    b: Vec<f64>,
    scaled: bool,
    zero_fields: bool,
}

impl IsingProblem {
    /// Builds a problem from per-qubit and per-coupler coefficients.
    ///
    /// Coefficient vectors must match the graph's qubit and coupler counts;
    /// all values must be finite. Hardware ranges are not enforced here —
    /// see [`rescale`](Self::rescale).
    pub fn new(graph: Arc<ChimeraGraph>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != graph.num_qubits() {
            return Err(Error::InvalidArgument(format!(
                "expected {} qubit coefficients, got {}",
                graph.num_qubits(),
                a.len()
            )));
        }
        if b.len() != graph.num_couplers() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coupler coefficients, got {}",
                graph.num_couplers(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "coefficients must be finite".into(),
            ));
        }
        let zero_fields = a.iter().all(|&v| v == 0.0);
        Ok(IsingProblem {
            graph,
            a,
            b,
            scaled: false,
            zero_fields,
        })
    }

    pub fn graph(&self) -> &Arc<ChimeraGraph> {
        &self.graph
    }

    pub fn num_qubits(&self) -> usize {
        self.graph.num_qubits()
    }

    pub fn qubit_coeffs(&self) -> &[f64] {
        &self.a
    }

    pub fn coupler_coeffs(&self) -> &[f64] {
        &self.b
    }

    /// True if this problem was produced by [`rescale`](Self::rescale).
    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    /// True if every qubit coefficient is zero. Such objectives are
    /// symmetric under a global spin flip.
    pub fn has_zero_fields(&self) -> bool {
        self.zero_fields
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.len() != self.num_qubits() {
            return Err(Error::InvalidArgument(format!(
                "sample has {} spins but the problem has {} qubits",
                s.len(),
                self.num_qubits()
            )));
        }
        Ok(())
    }

    /// Evaluates the objective for `s`.
    pub fn energy(&self, s: &Sample) -> Result<Energy> {
        self.check_sample(s)?;
        let mut e = 0.0;
        for (i, &ai) in self.a.iter().enumerate() {
            e += ai * f64::from(s.spins[i]);
        }
        for (c, &bc) in self.graph.couplers().iter().zip(&self.b) {
            e += bc * f64::from(s.spins[c.q1.index()] * s.spins[c.q2.index()]);
        }
        Ok(e)
    }

    /// Energy change from flipping every qubit in `flips` (duplicates are
    /// collapsed). Couplers with both endpoints flipped do not contribute.
    pub fn energy_delta(&self, s: &Sample, flips: &[QubitId]) -> Result<Energy> {
        self.check_sample(s)?;
        let mut flip = vec![false; self.num_qubits()];
        for &q in flips {
            if q.index() >= flip.len() {
                return Err(Error::InvalidArgument(format!("qubit {q} out of range")));
            }
            flip[q.index()] = true;
        }
        let mut delta = 0.0;
        for (i, f) in flip.iter().enumerate() {
            if !*f {
                continue;
            }
            let si = f64::from(s.spins[i]);
            delta += -2.0 * self.a[i] * si;
            for &(nbr, cid) in self.graph.neighbors(QubitId(i as u32)) {
                if !flip[nbr.index()] {
                    delta += -2.0 * self.b[cid.index()] * si * f64::from(s.spins[nbr.index()]);
                }
            }
        }
        Ok(delta)
    }

    /// Divides all coefficients by the smallest factor (at least 1) that
    /// brings qubit coefficients into [-2, 2] and coupler coefficients into
    /// [-1, 1]. Scaling preserves the energy ordering of samples, so the set
    /// of minimizing samples is unchanged.
    pub fn rescale(&self) -> IsingProblem {
        let max_a = self.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_b = self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let factor = (max_a / QUBIT_COEFF_RANGE.1)
            .max(max_b / COUPLER_COEFF_RANGE.1)
            .max(1.0);
        let mut out = self.clone();
        if factor > 1.0 {
            for v in out.a.iter_mut().chain(out.b.iter_mut()) {
                *v /= factor;
            }
        }
        out.scaled = true;
        out
    }

    /// Hex SHA-256 over the canonical text of the coefficients. Two problems
    /// share a hash exactly when graph shape and all coefficients agree.
    pub fn content_hash(&self) -> String {
        let mut text = format!("chimera {} {}\n", self.graph.rows(), self.graph.cols());
        for (i, &v) in self.a.iter().enumerate() {
            if v != 0.0 {
                text.push_str(&format!("a {i} {v}\n"));
            }
        }
        for (c, &v) in self.graph.couplers().iter().zip(&self.b) {
            if v != 0.0 {
                text.push_str(&format!("b {} {} {v}\n", c.q1, c.q2));
            }
        }
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|byte| format!("{byte:02x}")).collect()
    }
}
