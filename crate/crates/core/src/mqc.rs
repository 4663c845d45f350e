//! Multi-qubit correction (MQC): merge samples pairwise so the result's
//! energy never exceeds the better input, then fold whole batches with a
//! tournament.
//!
//! Combining works in three steps: (1) when the problem has zero qubit
//! coefficients, replace the second sample by its global flip if that
//! increases agreement — flip symmetry makes this free, and an exact tie is
//! broken canonically (first spin made to agree); (2) split the
//! disagreeing qubits into coupler-connected components; (3) take each
//! component as a block from whichever sample gives the lower energy
//! contribution, breaking ties toward the first sample. Components are
//! separated by agreeing qubits, so the per-component choices are
//! independent and the greedy pick reaches the best of all 2^k block
//! combinations.

use crate::chimera::QubitId;
use crate::ising::{Energy, IsingProblem, Sample};
use crate::sampler::SampleBatch;
use crate::{Error, Result};

/// Disagreement qubits of a sample pair, grouped into coupler-connected
/// components. Components are sorted by their smallest qubit; qubits within
/// a component are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisagreementPartition {
    pub components: Vec<Vec<QubitId>>,
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            self.parent[x as usize] = self.parent[self.parent[x as usize] as usize];
            x = self.parent[x as usize];
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
    }
}

/// Groups the qubits where `s1` and `s2` differ into connected components
/// of the problem's coupler graph — couplers with a zero coefficient carry
/// no interaction and do not join components. (Walking them would fuse
/// unrelated disagreement clusters through energy-free qubits and forfeit
/// most of the correction's power on sparse instances.)
pub fn partition_disagreement(
    p: &IsingProblem,
    s1: &Sample,
    s2: &Sample,
) -> Result<DisagreementPartition> {
    check_pair(p, s1, s2)?;
    let n = p.num_qubits();
    let disagree: Vec<bool> = (0..n).map(|i| s1.spins[i] != s2.spins[i]).collect();
    let mut uf = UnionFind::new(n);
    for (i, c) in p.graph().couplers().iter().enumerate() {
        if p.coupler_coeffs()[i] != 0.0 && disagree[c.q1.index()] && disagree[c.q2.index()] {
            uf.union(c.q1.0, c.q2.0);
        }
    }
    // Roots appear in qubit order, so components come out sorted by their
    // smallest member and each component is internally ascending.
    let mut component_of_root = vec![usize::MAX; n];
    let mut components: Vec<Vec<QubitId>> = Vec::new();
    for q in 0..n {
        if !disagree[q] {
            continue;
        }
        let root = uf.find(q as u32) as usize;
        if component_of_root[root] == usize::MAX {
            component_of_root[root] = components.len();
            components.push(Vec::new());
        }
        components[component_of_root[root]].push(QubitId(q as u32));
    }
    Ok(DisagreementPartition { components })
}

/// Merges two samples; the result's energy never exceeds the lower input
/// energy. Where the samples agree (after alignment) the result equals
/// them; each disagreement component is resolved as a block.
pub fn combine_pair(p: &IsingProblem, s1: &Sample, s2: &Sample) -> Result<Sample> {
    check_pair(p, s1, s2)?;
    let n = p.num_qubits();

    let aligned = aligned_second(p, s1, s2);

    let partition = partition_disagreement(p, s1, &aligned)?;
    if partition.components.is_empty() {
        return Ok(s1.clone());
    }

    let mut component_of = vec![usize::MAX; n];
    for (ci, comp) in partition.components.iter().enumerate() {
        for q in comp {
            component_of[q.index()] = ci;
        }
    }

    let graph = p.graph();
    let a = p.qubit_coeffs();
    let b = p.coupler_coeffs();
    let mut out = s1.clone();
    for (ci, comp) in partition.components.iter().enumerate() {
        // Energy change from flipping this component off s1's block onto
        // the aligned s2's block. Couplers internal to the component keep
        // their spin product, so only boundary couplers and a-terms count;
        // couplers into a *different* component are necessarily zero, so
        // including them costs nothing and the sum stays exact.
        let mut delta = 0.0;
        for &q in comp {
            let sq = f64::from(s1.spins[q.index()]);
            delta += -2.0 * a[q.index()] * sq;
            for &(nbr, cid) in graph.neighbors(q) {
                let nc = component_of[nbr.index()];
                debug_assert!(
                    nc == ci || nc == usize::MAX || b[cid.index()] == 0.0,
                    "components share a nonzero coupler"
                );
                if nc != ci {
                    delta += -2.0 * b[cid.index()] * sq * f64::from(s1.spins[nbr.index()]);
                }
            }
        }
        // Strictly better only: a tie keeps s1's block.
        if delta < 0.0 {
            for &q in comp {
                out.spins[q.index()] = aligned.spins[q.index()];
            }
        }
    }
    Ok(out)
}

/// Folds a batch into one sample by a balanced binary tournament of
/// [`combine_pair`] over the batch order; with an odd count the unpaired
/// sample passes through to the next round. The result's energy never
/// exceeds the batch minimum.
pub fn reduce(p: &IsingProblem, batch: &SampleBatch) -> Result<Sample> {
    reduce_samples(p, &batch.samples)
}

/// [`reduce`] over a plain sample slice.
pub fn reduce_samples(p: &IsingProblem, samples: &[Sample]) -> Result<Sample> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot reduce an empty batch".into()));
    }
    let mut level: Vec<Sample> = samples.to_vec();
    while level.len() > 1 {
        level = next_level(p, &level)?;
    }
    Ok(level.pop().expect("loop leaves exactly one sample"))
}

/// One tournament round: adjacent pairs combined, odd tail passed through.
pub fn next_level(p: &IsingProblem, level: &[Sample]) -> Result<Vec<Sample>> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [a, b] => combine_pair(p, a, b),
            [single] => Ok(single.clone()),
            _ => unreachable!("chunks(2) yields 1- or 2-element slices"),
        })
        .collect()
}

/// Energy of one tournament node; level 0 holds the input samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceNode {
    pub level: u32,
    pub node: u32,
    pub energy: Energy,
}

/// [`reduce`] that also records every tournament node's energy, for
/// plotting how the fold descends.
pub fn reduce_with_trace(
    p: &IsingProblem,
    batch: &SampleBatch,
) -> Result<(Sample, Vec<TraceNode>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("cannot reduce an empty batch".into()));
    }
    let mut trace = Vec::new();
    let mut level: Vec<Sample> = batch.samples.clone();
    let mut depth = 0u32;
    loop {
        for (i, s) in level.iter().enumerate() {
            trace.push(TraceNode {
                level: depth,
                node: i as u32,
                energy: p.energy(s)?,
            });
        }
        if level.len() == 1 {
            return Ok((level.pop().expect("non-empty"), trace));
        }
        level = next_level(p, &level)?;
        depth += 1;
    }
}

/// Alignment step: with zero qubit coefficients the energy is symmetric
/// under a global flip, so `s2` may be flipped for free. Flip when that
/// increases agreement with `s1`; when the counts tie exactly, orient `s2`
/// so its first spin agrees with `s1` — a canonical choice that makes the
/// merge independent of `s2`'s global orientation.
fn aligned_second(p: &IsingProblem, s1: &Sample, s2: &Sample) -> Sample {
    if !p.has_zero_fields() {
        return s2.clone();
    }
    let n = p.num_qubits();
    let disagreements = (0..n).filter(|&i| s1.spins[i] != s2.spins[i]).count();
    let flip = match (2 * disagreements).cmp(&n) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => s1.spins[0] != s2.spins[0],
        std::cmp::Ordering::Less => false,
    };
    if flip {
        s2.flipped()
    } else {
        s2.clone()
    }
}

fn check_pair(p: &IsingProblem, s1: &Sample, s2: &Sample) -> Result<()> {
    if s1.len() != p.num_qubits() || s2.len() != p.num_qubits() {
        return Err(Error::InvalidArgument(format!(
            "samples of {} and {} spins do not cover a {}-qubit problem",
            s1.len(),
            s2.len(),
            p.num_qubits()
        )));
    }
    Ok(())
}
