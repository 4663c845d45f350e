//! Frustrated-cluster-loop (FCL) instance generation.
//!
//! An FCL instance is built from random closed loops in the Chimera graph.
//! Each loop contributes -1 to every coupler it traverses except one
//! uniformly chosen coupler that gets +1, which frustrates the loop. Qubit
//! coefficients are all zero. Summing the loop contributions yields a
//! problem whose ground energy is exactly the sum of all coefficients,
//! achieved by the uniform all-(+1) (and all-(-1)) spin state.

use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chimera::{ChimeraGraph, CouplerId, QubitId};
use crate::ising::{Energy, IsingProblem, Sample};
use crate::{Error, Result};

/// Attempts allowed per accepted loop before generation gives up.
pub const LOOP_RETRY_BUDGET: usize = 1000;

/// The two loop-size disciplines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemType {
    /// Loops of at least eight qubits.
    Type1,
    /// Loops spanning more than one cell (at least six qubits follows).
    Type2,
}

impl ProblemType {
    pub fn code(self) -> u8 {
        match self {
            ProblemType::Type1 => 1,
            ProblemType::Type2 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(ProblemType::Type1),
            2 => Ok(ProblemType::Type2),
            _ => Err(Error::InvalidArgument(format!(
                "problem type must be 1 or 2, got {code}"
            ))),
        }
    }
}

impl std::fmt::Display for ProblemType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for ProblemType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(ProblemType::Type1),
            "2" => Ok(ProblemType::Type2),
            _ => Err(Error::InvalidArgument(format!(
                "problem type must be 1 or 2, got {s:?}"
            ))),
        }
    }
}

/// Maximum number of loops allowed to share one coupler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapLimit {
    Bounded(u32),
    Unlimited,
}

impl OverlapLimit {
    /// Whether a coupler with `usage` prior loops may take one more.
    pub fn allows(self, usage: u32) -> bool {
        match self {
            OverlapLimit::Bounded(r) => usage < r,
            OverlapLimit::Unlimited => true,
        }
    }

    /// Stable integer code, used for seed derivation.
    pub fn code(self) -> u64 {
        match self {
            OverlapLimit::Bounded(r) => u64::from(r),
            OverlapLimit::Unlimited => u64::MAX,
        }
    }
}

impl std::fmt::Display for OverlapLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OverlapLimit::Bounded(r) => write!(f, "{r}"),
            OverlapLimit::Unlimited => write!(f, "inf"),
        }
    }
}

impl FromStr for OverlapLimit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("inf") {
            return Ok(OverlapLimit::Unlimited);
        }
        match s.parse::<u32>() {
            Ok(r) if r >= 1 => Ok(OverlapLimit::Bounded(r)),
            _ => Err(Error::InvalidArgument(format!(
                "overlap limit must be a positive integer or 'inf', got {s:?}"
            ))),
        }
    }
}

/// Parameters of one FCL instance.
#[derive(Debug, Clone, Copy)]
pub struct FclConfig {
    pub problem_type: ProblemType,
    /// Side of the square cell region.
    pub c: usize,
    /// Loop density: target loop count = alpha x qubit count.
    pub alpha: f64,
    pub r_limit: OverlapLimit,
    pub seed: u64,
}

impl FclConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 {
            return Err(Error::InvalidArgument("region side must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "loop density must be a positive real, got {}",
                self.alpha
            )));
        }
        if self.r_limit == OverlapLimit::Bounded(0) {
            return Err(Error::InvalidArgument("overlap limit must be at least 1".into()));
        }
        Ok(())
    }
}

/// A closed simple cycle of qubits; `couplers[i]` joins `qubits[i]` and
/// `qubits[(i + 1) % len]`. Exactly one coupler (at `afm_index`) carries
/// the +1 coefficient; all others carry -1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loop {
    pub qubits: Vec<QubitId>,
    pub couplers: Vec<CouplerId>,
    pub afm_index: usize,
}

impl Loop {
    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    /// How many distinct cells the loop's qubits touch.
    pub fn cells_spanned(&self, graph: &ChimeraGraph) -> usize {
        let mut cells: Vec<_> = self.qubits.iter().map(|&q| graph.cell_of(q)).collect();
        cells.sort_by_key(|c| (c.row, c.col));
        cells.dedup();
        cells.len()
    }
}

/// A generated instance together with its construction record.
#[derive(Debug, Clone)]
pub struct FclInstance {
    pub config: FclConfig,
    pub problem: IsingProblem,
    pub loops: Vec<Loop>,
    /// Sum of all coefficients; the problem's global minimum energy.
    pub ground_energy: Energy,
    /// Number of loops through each coupler.
    pub coupler_usage: Vec<u32>,
}

impl FclInstance {
    /// Generates an instance on a fresh square c x c graph.
    pub fn generate(config: &FclConfig) -> Result<FclInstance> {
        config.validate()?;
        let graph = Arc::new(ChimeraGraph::square(config.c)?);
        Self::generate_on(graph, config)
    }

    /// Generates an instance on a caller-supplied graph (which may be a
    /// rectangular region; `config.c` is kept only as a label).
    pub fn generate_on(graph: Arc<ChimeraGraph>, config: &FclConfig) -> Result<FclInstance> {
        config.validate()?;
        if config.problem_type == ProblemType::Type2 && graph.num_cells() == 1 {
            return Err(Error::UnsatisfiableConfig(
                "multi-cell loops require a graph with more than one cell".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let target = draw_target(graph.num_qubits(), config.alpha, &mut rng);
        let mut usage = vec![0u32; graph.num_couplers()];
        let mut loops = Vec::with_capacity(target);
        while loops.len() < target {
            let mut accepted = None;
            for _ in 0..LOOP_RETRY_BUDGET {
                if let Some(lp) =
                    generate_loop(&graph, &usage, config.problem_type, config.r_limit, &mut rng)?
                {
                    accepted = Some(lp);
                    break;
                }
            }
            match accepted {
                Some(lp) => {
                    for &cid in &lp.couplers {
                        usage[cid.index()] += 1;
                    }
                    loops.push(lp);
                }
                None => {
                    return Err(Error::GenerationFailure {
                        accepted: loops.len(),
                        target,
                    })
                }
            }
        }
        Self::assemble(graph, *config, loops, usage)
    }

    fn assemble(
        graph: Arc<ChimeraGraph>,
        config: FclConfig,
        loops: Vec<Loop>,
        coupler_usage: Vec<u32>,
    ) -> Result<FclInstance> {
        let a = vec![0.0; graph.num_qubits()];
        let mut b = vec![0.0; graph.num_couplers()];
        for lp in &loops {
            for (i, &cid) in lp.couplers.iter().enumerate() {
                b[cid.index()] += if i == lp.afm_index { 1.0 } else { -1.0 };
            }
        }
        let ground_energy = b.iter().sum();
        let problem = IsingProblem::new(graph, a, b)?;
        Ok(FclInstance {
            config,
            problem,
            loops,
            ground_energy,
            coupler_usage,
        })
    }

    /// True iff `s` attains the ground energy; exact comparison is safe
    /// because all coefficients are integers.
    pub fn is_solution(&self, s: &Sample) -> Result<bool> {
        Ok(self.problem.energy(s)? == self.ground_energy)
    }
}

/// Target loop count: randomized rounding of `alpha * n`, so a fractional
/// expectation of 12.8 yields 12 or 13 loops.
fn draw_target<R: Rng>(n_qubits: usize, alpha: f64, rng: &mut R) -> usize {
    let t = alpha * n_qubits as f64;
    let frac = t - t.floor();
    t.floor() as usize + usize::from(rng.random_bool(frac))
}

/// Attempts one self-avoiding random walk and returns the closed loop, or
/// `None` when the attempt must be discarded (dead end, or the walk chose a
/// coupler already carrying `r_limit` loops).
///
/// The walk starts at a uniformly random qubit. At each step, if the start
/// qubit neighbors the current qubit and the type's minimum-size rule is
/// met, the loop closes with probability 1/2; otherwise the walk moves to a
/// uniformly random unvisited neighbor. The +1 coupler is then chosen
/// uniformly among the loop's couplers. Saturated couplers stay in the
/// candidate set — choosing one discards the attempt rather than steering
/// the walk around it.
pub fn generate_loop<R: Rng>(
    graph: &ChimeraGraph,
    usage: &[u32],
    problem_type: ProblemType,
    r_limit: OverlapLimit,
    rng: &mut R,
) -> Result<Option<Loop>> {
    if problem_type == ProblemType::Type2 && graph.num_cells() == 1 {
        return Err(Error::UnsatisfiableConfig(
            "multi-cell loops require a graph with more than one cell".into(),
        ));
    }
    let n = graph.num_qubits();
    assert_eq!(usage.len(), graph.num_couplers(), "usage map size mismatch");
    let start = QubitId(rng.random_range(0..n as u32));
    let start_cell = graph.cell_of(start);
    let mut visited = vec![false; n];
    visited[start.index()] = true;
    let mut qubits = vec![start];
    let mut couplers = Vec::new();
    let mut spans_multiple = false;
    loop {
        let current = *qubits.last().expect("walk is never empty");
        let size_ok = match problem_type {
            ProblemType::Type1 => qubits.len() >= 8,
            ProblemType::Type2 => spans_multiple,
        };
        if qubits.len() >= 3 && size_ok {
            if let Some(closing) = graph.find_coupler(current, start) {
                if rng.random_bool(0.5) {
                    if !r_limit.allows(usage[closing.index()]) {
                        return Ok(None);
                    }
                    couplers.push(closing);
                    let afm_index = rng.random_range(0..couplers.len());
                    return Ok(Some(Loop {
                        qubits,
                        couplers,
                        afm_index,
                    }));
                }
            }
        }
        let candidates: Vec<(QubitId, CouplerId)> = graph
            .neighbors(current)
            .iter()
            .copied()
            .filter(|(nbr, _)| !visited[nbr.index()])
            .collect();
        if candidates.is_empty() {
            return Ok(None); // dead end
        }
        let (next, cid) = candidates[rng.random_range(0..candidates.len())];
        if !r_limit.allows(usage[cid.index()]) {
            return Ok(None);
        }
        visited[next.index()] = true;
        spans_multiple = spans_multiple || graph.cell_of(next) != start_cell;
        qubits.push(next);
        couplers.push(cid);
    }
}

/// Writes the canonical instance text: a bare-value header line
/// `c type alpha r seed ground_energy`, nonzero `b` lines in coupler order,
/// then one `loop` line per loop (`loop <afm_index> <qubits...>`). Qubit
/// coefficients are all zero, so no `a` lines are emitted.
pub fn write_instance<W: Write>(mut w: W, inst: &FclInstance) -> Result<()> {
    let cfg = &inst.config;
    writeln!(
        w,
        "{} {} {} {} {} {}",
        cfg.c, cfg.problem_type, cfg.alpha, cfg.r_limit, cfg.seed, inst.ground_energy
    )?;
    let graph = inst.problem.graph();
    for (i, &ai) in inst.problem.qubit_coeffs().iter().enumerate() {
        if ai != 0.0 {
            writeln!(w, "a {i} {ai}")?;
        }
    }
    for (c, &bc) in graph.couplers().iter().zip(inst.problem.coupler_coeffs()) {
        if bc != 0.0 {
            writeln!(w, "b {} {} {bc}", c.q1, c.q2)?;
        }
    }
    for lp in &inst.loops {
        write!(w, "loop {}", lp.afm_index)?;
        for q in &lp.qubits {
            write!(w, " {q}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

/// Reads an instance file written by [`write_instance`], revalidating the
/// loop structure and coefficient sums so corrupt files are rejected
/// without regenerating anything.
pub fn read_instance<R: BufRead>(r: R) -> Result<FclInstance> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(1, "empty instance file"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(format_err(
            1,
            format!("expected 6 header fields, got {}", fields.len()),
        ));
    }
    let bad = |what: &str| format_err(1, format!("unparseable {what} in header"));
    let c: usize = fields[0].parse().map_err(|_| bad("region side"))?;
    let problem_type: ProblemType = fields[1].parse().map_err(|_| bad("problem type"))?;
    let alpha: f64 = fields[2].parse().map_err(|_| bad("loop density"))?;
    let r_limit: OverlapLimit = fields[3].parse().map_err(|_| bad("overlap limit"))?;
    let seed: u64 = fields[4].parse().map_err(|_| bad("seed"))?;
    let ground: f64 = fields[5].parse().map_err(|_| bad("ground energy"))?;
    let config = FclConfig {
        problem_type,
        c,
        alpha,
        r_limit,
        seed,
    };
    config.validate().map_err(|e| format_err(1, e.to_string()))?;

    let graph = Arc::new(ChimeraGraph::square(c).map_err(|e| format_err(1, e.to_string()))?);
    let mut b = vec![0.0f64; graph.num_couplers()];
    let mut seen_b = vec![false; graph.num_couplers()];
    let mut loops = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let mut parts = line.split_whitespace();
        let tag = match parts.next() {
            Some(t) => t,
            None => return Err(format_err(lineno, "blank line")),
        };
        let toks: Vec<&str> = parts.collect();
        match tag {
            "a" => {
                // Loop instances carry no qubit terms; an explicit zero is
                // tolerated, anything else is corrupt.
                let [q, v] = toks[..] else {
                    return Err(format_err(lineno, "expected 'a <qubit> <value>'"));
                };
                let q: usize = q.parse().map_err(|_| format_err(lineno, "bad qubit index"))?;
                let v: f64 = v.parse().map_err(|_| format_err(lineno, "bad value"))?;
                if q >= graph.num_qubits() {
                    return Err(format_err(lineno, "qubit index out of range"));
                }
                if v != 0.0 {
                    return Err(format_err(
                        lineno,
                        "loop instances have zero qubit coefficients",
                    ));
                }
            }
            "b" => {
                let [q1, q2, v] = toks[..] else {
                    return Err(format_err(lineno, "expected 'b <q1> <q2> <value>'"));
                };
                let q1: u32 = q1.parse().map_err(|_| format_err(lineno, "bad qubit index"))?;
                let q2: u32 = q2.parse().map_err(|_| format_err(lineno, "bad qubit index"))?;
                let v: f64 = v.parse().map_err(|_| format_err(lineno, "bad value"))?;
                if q1.max(q2) as usize >= graph.num_qubits() {
                    return Err(format_err(lineno, "qubit index out of range"));
                }
                let cid = graph
                    .find_coupler(QubitId(q1), QubitId(q2))
                    .ok_or_else(|| format_err(lineno, format!("{q1} and {q2} are not coupled")))?;
                if seen_b[cid.index()] {
                    return Err(format_err(lineno, "duplicate coupler line"));
                }
                seen_b[cid.index()] = true;
                b[cid.index()] = v;
            }
            "loop" => {
                if toks.len() < 4 {
                    return Err(format_err(lineno, "loop needs an afm index and >= 3 qubits"));
                }
                let afm_index: usize = toks[0]
                    .parse()
                    .map_err(|_| format_err(lineno, "bad afm index"))?;
                let mut qubits = Vec::with_capacity(toks.len() - 1);
                for t in &toks[1..] {
                    let q: u32 = t.parse().map_err(|_| format_err(lineno, "bad qubit index"))?;
                    if q as usize >= graph.num_qubits() {
                        return Err(format_err(lineno, "qubit index out of range"));
                    }
                    qubits.push(QubitId(q));
                }
                let lp = validate_loop(&graph, qubits, afm_index, problem_type)
                    .map_err(|msg| format_err(lineno, msg))?;
                loops.push(lp);
            }
            _ => return Err(format_err(lineno, format!("unknown line tag {tag:?}"))),
        }
    }

    // The coefficient lines must be exactly the loop sums.
    let mut expected = vec![0.0f64; graph.num_couplers()];
    let mut usage = vec![0u32; graph.num_couplers()];
    for lp in &loops {
        for (i, &cid) in lp.couplers.iter().enumerate() {
            expected[cid.index()] += if i == lp.afm_index { 1.0 } else { -1.0 };
            usage[cid.index()] += 1;
        }
    }
    if b != expected {
        return Err(format_err(1, "coupler coefficients do not match the loop section"));
    }
    if let OverlapLimit::Bounded(r) = r_limit {
        if let Some(i) = usage.iter().position(|&u| u > r) {
            return Err(format_err(
                1,
                format!("coupler {i} is used by more loops than the overlap limit allows"),
            ));
        }
    }
    let sum: f64 = b.iter().sum();
    if sum != ground {
        return Err(format_err(
            1,
            format!("header ground energy {ground} but coefficients sum to {sum}"),
        ));
    }
    let inst = FclInstance::assemble(graph, config, loops, usage)?;
    Ok(inst)
}

/// Recomputes a loop's coupler list from its qubit cycle and rechecks the
/// structural invariants.
fn validate_loop(
    graph: &ChimeraGraph,
    qubits: Vec<QubitId>,
    afm_index: usize,
    problem_type: ProblemType,
) -> std::result::Result<Loop, String> {
    let len = qubits.len();
    let mut sorted = qubits.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != len {
        return Err("loop repeats a qubit".into());
    }
    if afm_index >= len {
        return Err("afm index out of range".into());
    }
    let mut couplers = Vec::with_capacity(len);
    for i in 0..len {
        let (p, q) = (qubits[i], qubits[(i + 1) % len]);
        match graph.find_coupler(p, q) {
            Some(cid) => couplers.push(cid),
            None => return Err(format!("{p} and {q} are not coupled")),
        }
    }
    let lp = Loop {
        qubits,
        couplers,
        afm_index,
    };
    match problem_type {
        ProblemType::Type1 if lp.len() < 8 => {
            return Err("loop shorter than eight qubits".into());
        }
        ProblemType::Type2 if lp.cells_spanned(graph) < 2 => {
            return Err("loop does not span multiple cells".into());
        }
        _ => {}
    }
    Ok(lp)
}
