//! Sample producers: a single-spin Metropolis annealer standing in for
//! quantum-annealing hardware, a uniform random baseline, and ingestion of
//! previously recorded sample files.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chimera::QubitId;
use crate::ising::{Energy, IsingProblem, Sample};
use crate::{Error, Result};

/// Default per-sample hardware time in microseconds, kept as optional
/// batch metadata for time extrapolations.
pub const HARDWARE_SAMPLE_TIME_US: f64 = 20.0;

/// Inverse-temperature progression across sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Linear,
    Geometric,
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Schedule::Linear => "linear",
            Schedule::Geometric => "geometric",
        })
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Schedule::Linear),
            "geometric" => Ok(Schedule::Geometric),
            _ => Err(Error::InvalidArgument(format!(
                "schedule must be 'linear' or 'geometric', got {s:?}"
            ))),
        }
    }
}

/// Annealer parameters. Each sample runs independently from a random start
/// with its own RNG stream (per-sample seed = `seed` + sample index), so a
/// batch is identical however the samples are scheduled across threads.
#[derive(Debug, Clone, Copy)]
pub struct AnnealConfig {
    pub sweeps: u32,
    pub beta_start: f64,
    pub beta_end: f64,
    pub schedule: Schedule,
    pub seed: u64,
    /// Visit qubits in a per-sweep random order instead of index order.
    pub random_sweep_order: bool,
}

impl AnnealConfig {
    /// The deliberately modest default used by surveys: weak enough that
    /// hard instances are not always solved, so post-processing has
    /// something to show.
    pub fn survey_default(seed: u64) -> Self {
        AnnealConfig {
            sweeps: 30,
            beta_start: 0.1,
            beta_end: 3.0,
            schedule: Schedule::Geometric,
            seed,
            random_sweep_order: false,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        AnnealConfig { seed, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps < 1 {
            return Err(Error::InvalidArgument("sweeps must be at least 1".into()));
        }
        if !(self.beta_start > 0.0 && self.beta_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "inverse temperatures must be positive reals, got start {}",
                self.beta_start
            )));
        }
        if self.beta_end < self.beta_start {
            return Err(Error::InvalidArgument(format!(
                "final inverse temperature {} is below the initial {}",
                self.beta_end, self.beta_start
            )));
        }
        Ok(())
    }

    /// One inverse temperature per sweep, following the schedule from
    /// `beta_start` to `beta_end` inclusive.
    pub fn betas(&self) -> Vec<f64> {
        let k = self.sweeps as usize;
        if k == 1 {
            return vec![self.beta_start];
        }
        (0..k)
            .map(|i| {
                let t = i as f64 / (k - 1) as f64;
                match self.schedule {
                    Schedule::Linear => self.beta_start + (self.beta_end - self.beta_start) * t,
                    Schedule::Geometric => {
                        self.beta_start * (self.beta_end / self.beta_start).powf(t)
                    }
                }
            })
            .collect()
    }
}

/// Where a batch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSource {
    Anneal,
    Random,
    Ingested,
}

impl BatchSource {
    pub fn token(self) -> &'static str {
        match self {
            BatchSource::Anneal => "anneal",
            BatchSource::Random => "random",
            BatchSource::Ingested => "ingested",
        }
    }

    fn from_token(s: &str) -> Option<Self> {
        match s {
            "anneal" => Some(BatchSource::Anneal),
            "random" => Some(BatchSource::Random),
            "ingested" => Some(BatchSource::Ingested),
            _ => None,
        }
    }
}

/// An ordered set of samples for one problem. Order matters: grouping
/// downstream slices the batch in production order.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// Content hash of the problem the samples answer.
    pub problem_id: String,
    pub samples: Vec<Sample>,
    pub source: BatchSource,
    pub seed: u64,
    /// Optional microseconds-per-sample figure for hardware batches.
    pub hardware_sample_time: Option<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `n` independent uniform +-1 assignments.
pub fn random_batch(p: &IsingProblem, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let nq = p.num_qubits();
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            random_sample(nq, &mut rng)
        })
        .collect();
    Ok(SampleBatch {
        problem_id: p.content_hash(),
        samples,
        source: BatchSource::Random,
        seed,
        hardware_sample_time: None,
    })
}

fn random_sample<R: Rng>(n: usize, rng: &mut R) -> Sample {
    Sample {
        spins: (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect(),
    }
}

/// `n` independent annealing runs.
pub fn anneal_batch(p: &IsingProblem, n: usize, cfg: &AnnealConfig) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    cfg.validate()?;
    let betas = cfg.betas();
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|i| anneal_run(p, cfg, &betas, cfg.seed.wrapping_add(i)).0)
        .collect();
    Ok(SampleBatch {
        problem_id: p.content_hash(),
        samples,
        source: BatchSource::Anneal,
        seed: cfg.seed,
        hardware_sample_time: None,
    })
}

/// One annealing run, returning the sample and its incrementally tracked
/// energy (which must match a full re-evaluation exactly on integer
/// coefficients — see tests).
pub fn anneal_single(p: &IsingProblem, cfg: &AnnealConfig, sample_seed: u64) -> Result<(Sample, Energy)> {
    cfg.validate()?;
    Ok(anneal_run(p, cfg, &cfg.betas(), sample_seed))
}

fn anneal_run(p: &IsingProblem, cfg: &AnnealConfig, betas: &[f64], sample_seed: u64) -> (Sample, Energy) {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let n = p.num_qubits();
    let mut s = random_sample(n, &mut rng);
    let mut energy = p.energy(&s).expect("sample covers the graph by construction");
    let a = p.qubit_coeffs();
    let b = p.coupler_coeffs();
    let graph = p.graph();
    let mut order: Vec<u32> = (0..n as u32).collect();
    for &beta in betas {
        if cfg.random_sweep_order {
            shuffle(&mut order, &mut rng);
        }
        for &q in &order {
            let qi = q as usize;
            let si = f64::from(s.spins[qi]);
            let mut field = a[qi];
            for &(nbr, cid) in graph.neighbors(QubitId(q)) {
                field += b[cid.index()] * f64::from(s.spins[nbr.index()]);
            }
            let delta = -2.0 * si * field;
            if delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp() {
                s.spins[qi] = -s.spins[qi];
                energy += delta;
            }
        }
    }
    (s, energy)
}

/// Fisher-Yates via the run's own RNG stream, so a shuffled sweep order
/// stays reproducible.
fn shuffle<R: Rng>(xs: &mut [u32], rng: &mut R) {
    for i in (1..xs.len()).rev() {
        xs.swap(i, rng.random_range(0..=i));
    }
}

/// Writes the batch: a `# problem <hash> n <count> source <tag>` header,
/// then one space-separated +-1 line per sample in qubit-index order.
pub fn write_batch<W: Write>(mut w: W, batch: &SampleBatch) -> Result<()> {
    writeln!(
        w,
        "# problem {} n {} source {}",
        batch.problem_id,
        batch.len(),
        batch.source.token()
    )?;
    let mut line = String::new();
    for s in &batch.samples {
        line.clear();
        for (i, spin) in s.spins.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(if *spin == 1 { "1" } else { "-1" });
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads a batch written by [`write_batch`] and checks it against `p`:
/// the header hash must match the problem and every line must hold exactly
/// one +-1 spin per qubit. The result is marked [`BatchSource::Ingested`].
pub fn ingest_batch<R: BufRead>(r: R, p: &IsingProblem) -> Result<SampleBatch> {
    let fail = |line: usize, message: String| Error::Format { line, message };
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| fail(1, "empty sample file".into()))??;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let (hash, count, tag) = match toks[..] {
        ["#", "problem", hash, "n", count, "source", tag] => (hash, count, tag),
        _ => return Err(fail(1, "malformed sample header".into())),
    };
    if hash != p.content_hash() {
        return Err(fail(
            1,
            "sample file was produced for a different problem (hash mismatch)".into(),
        ));
    }
    let count: usize = count
        .parse()
        .map_err(|_| fail(1, format!("bad sample count {count:?}")))?;
    if BatchSource::from_token(tag).is_none() {
        return Err(fail(1, format!("unknown source tag {tag:?}")));
    }
    let nq = p.num_qubits();
    let mut samples = Vec::with_capacity(count);
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        let mut spins = Vec::with_capacity(nq);
        for tok in line.split_whitespace() {
            match tok {
                "1" | "+1" => spins.push(1i8),
                "-1" => spins.push(-1i8),
                _ => return Err(fail(lineno, format!("spin must be -1 or +1, got {tok:?}"))),
            }
        }
        if spins.len() != nq {
            return Err(fail(
                lineno,
                format!("expected {nq} spins, got {}", spins.len()),
            ));
        }
        samples.push(Sample { spins });
    }
    if samples.len() != count {
        return Err(fail(
            samples.len() + 1,
            format!("header promises {count} samples, file holds {}", samples.len()),
        ));
    }
    Ok(SampleBatch {
        problem_id: hash.to_string(),
        samples,
        source: BatchSource::Ingested,
        seed: 0,
        hardware_sample_time: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcl::{FclConfig, FclInstance, OverlapLimit, ProblemType};

    fn fcl_instance(c: usize, alpha: f64, seed: u64) -> FclInstance {
        FclInstance::generate(&FclConfig {
            problem_type: ProblemType::Type1,
            c,
            alpha,
            r_limit: OverlapLimit::Unlimited,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn schedule_endpoints_and_monotonicity() {
        for schedule in [Schedule::Linear, Schedule::Geometric] {
            let cfg = AnnealConfig {
                sweeps: 30,
                beta_start: 0.1,
                beta_end: 3.0,
                schedule,
                seed: 0,
                random_sweep_order: false,
            };
            let betas = cfg.betas();
            assert_eq!(betas.len(), 30);
            assert!((betas[0] - 0.1).abs() < 1e-12);
            assert!((betas[29] - 3.0).abs() < 1e-9);
            assert!(betas.windows(2).all(|w| w[1] > w[0]));
        }
        let one = AnnealConfig {
            sweeps: 1,
            ..AnnealConfig::survey_default(0)
        };
        assert_eq!(one.betas(), vec![0.1]);
    }

    #[test]
    fn config_validation() {
        let good = AnnealConfig::survey_default(1);
        assert!(good.validate().is_ok());
        assert!(AnnealConfig { sweeps: 0, ..good }.validate().is_err());
        assert!(AnnealConfig { beta_start: 0.0, ..good }.validate().is_err());
        assert!(AnnealConfig { beta_end: 0.05, ..good }.validate().is_err());
        assert!(matches!(
            anneal_batch(&fcl_instance(1, 0.2, 0).problem, 0, &good),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            random_batch(&fcl_instance(1, 0.2, 0).problem, 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn random_batch_marginals_and_determinism() {
        let p = fcl_instance(1, 0.2, 3).problem;
        let b1 = random_batch(&p, 10_000, 42).unwrap();
        let b2 = random_batch(&p, 10_000, 42).unwrap();
        assert_eq!(b1.samples, b2.samples);
        assert_eq!(b1.source, BatchSource::Random);
        for q in 0..p.num_qubits() {
            let ups = b1.samples.iter().filter(|s| s.spins[q] == 1).count();
            let frac = ups as f64 / b1.len() as f64;
            assert!((frac - 0.5).abs() < 0.02, "qubit {q} marginal {frac}");
        }
    }

    #[test]
    fn anneal_tracked_energy_is_exact() {
        let inst = fcl_instance(2, 0.3, 9);
        let cfg = AnnealConfig::survey_default(17);
        for i in 0..20 {
            let (s, tracked) = anneal_single(&inst.problem, &cfg, cfg.seed + i).unwrap();
            let full = inst.problem.energy(&s).unwrap();
            assert_eq!(tracked, full, "incremental energy drifted");
        }
    }

    #[test]
    fn anneal_batch_matches_independent_runs() {
        // The batch must equal per-sample runs stitched together, whatever
        // rayon does with scheduling.
        let inst = fcl_instance(2, 0.2, 1);
        let cfg = AnnealConfig::survey_default(5);
        let batch = anneal_batch(&inst.problem, 16, &cfg).unwrap();
        assert_eq!(batch.len(), 16);
        for (i, s) in batch.samples.iter().enumerate() {
            let (expect, _) =
                anneal_single(&inst.problem, &cfg, cfg.seed + i as u64).unwrap();
            assert_eq!(s, &expect, "sample {i} depends on scheduling");
        }
        let again = anneal_batch(&inst.problem, 16, &cfg).unwrap();
        assert_eq!(batch.samples, again.samples);
    }

    #[test]
    fn long_anneal_reaches_ground_on_one_cell() {
        // 8-qubit instances: with a long schedule, at least 99 of 100 runs
        // must end at the known ground energy (threshold frozen as a
        // regression value).
        let inst = fcl_instance(1, 0.25, 12);
        let cfg = AnnealConfig {
            sweeps: 1000,
            beta_start: 0.1,
            beta_end: 5.0,
            schedule: Schedule::Geometric,
            seed: 2,
            random_sweep_order: false,
        };
        let batch = anneal_batch(&inst.problem, 100, &cfg).unwrap();
        let hits = batch
            .samples
            .iter()
            .filter(|s| inst.is_solution(s).unwrap())
            .count();
        assert!(hits >= 99, "only {hits}/100 runs reached ground");
    }

    #[test]
    fn more_sweeps_do_not_hurt() {
        let inst = fcl_instance(4, 0.2, 31);
        let mean_energy = |sweeps: u32, seed: u64| {
            let cfg = AnnealConfig {
                sweeps,
                ..AnnealConfig::survey_default(seed)
            };
            let batch = anneal_batch(&inst.problem, 4, &cfg).unwrap();
            batch
                .samples
                .iter()
                .map(|s| inst.problem.energy(s).unwrap())
                .sum::<f64>()
                / batch.len() as f64
        };
        let diffs: f64 = (0..15)
            .map(|seed| mean_energy(10, seed) - mean_energy(300, seed))
            .sum();
        assert!(
            diffs / 15.0 > 0.0,
            "tripling sweeps did not lower mean energy: paired mean diff {}",
            diffs / 15.0
        );
    }

    #[test]
    fn near_zero_beta_single_sweep_looks_random() {
        let inst = fcl_instance(1, 0.3, 8);
        let cfg = AnnealConfig {
            sweeps: 1,
            beta_start: 1e-9,
            beta_end: 1e-9,
            schedule: Schedule::Linear,
            seed: 77,
            random_sweep_order: false,
        };
        let batch = anneal_batch(&inst.problem, 4000, &cfg).unwrap();
        for q in 0..inst.problem.num_qubits() {
            let ups = batch.samples.iter().filter(|s| s.spins[q] == 1).count();
            let frac = ups as f64 / batch.len() as f64;
            assert!((frac - 0.5).abs() < 0.03, "qubit {q} marginal {frac}");
        }
    }

    #[test]
    fn batch_file_roundtrip() {
        let inst = fcl_instance(2, 0.2, 21);
        let cfg = AnnealConfig::survey_default(3);
        let batch = anneal_batch(&inst.problem, 8, &cfg).unwrap();
        let mut bytes = Vec::new();
        write_batch(&mut bytes, &batch).unwrap();
        let back = ingest_batch(&bytes[..], &inst.problem).unwrap();
        assert_eq!(back.samples, batch.samples);
        assert_eq!(back.source, BatchSource::Ingested);
        assert_eq!(back.problem_id, batch.problem_id);
    }

    #[test]
    fn ingest_rejects_bad_files() {
        let inst = fcl_instance(1, 0.25, 2);
        let p = &inst.problem;
        let hash = p.content_hash();

        let zero = format!("# problem {hash} n 1 source anneal\n1 1 1 0 1 1 1 1\n");
        match ingest_batch(zero.as_bytes(), p) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }

        let short = format!("# problem {hash} n 1 source anneal\n1 1 1\n");
        assert!(matches!(
            ingest_batch(short.as_bytes(), p),
            Err(Error::Format { line: 2, .. })
        ));

        let missing = format!("# problem {hash} n 3 source anneal\n");
        assert!(matches!(
            ingest_batch(missing.as_bytes(), p),
            Err(Error::Format { .. })
        ));

        let wrong_hash = "# problem deadbeef n 0 source anneal\n".to_string();
        assert!(matches!(
            ingest_batch(wrong_hash.as_bytes(), p),
            Err(Error::Format { line: 1, .. })
        ));

        let bad_tag = format!("# problem {hash} n 0 source dwave\n");
        assert!(ingest_batch(bad_tag.as_bytes(), p).is_err());
    }
}
