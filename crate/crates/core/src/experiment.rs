//! Measurement methodology: power-of-two sample groupings, per-group raw
//! and MQC success probabilities, samples-to-solution, and the survey grid
//! over (overlap limit, region side, loop density).
//!
//! A batch of 2^m samples is sliced into consecutive disjoint groups of
//! every power-of-two size. A group succeeds "raw" when any member attains
//! the ground energy, and succeeds "mqc" when the tournament-reduced sample
//! does. Per-case results roll up into survey cells; everything is
//! reproducible bit-for-bit from one master seed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::chimera::ChimeraGraph;
use crate::fcl::{FclConfig, FclInstance, OverlapLimit, ProblemType};
use crate::ising::Sample;
use crate::mqc;
use crate::sampler::{anneal_batch, AnnealConfig, SampleBatch};
use crate::{Error, Result};

/// Largest supported batch exponent (2^16 samples).
pub const MAX_LOG2_BATCH: u32 = 16;

/// Success counts per power-of-two group size for one case. Probabilities
/// are derived from integer counts, so "equals 1.0" is an exact question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuccessCurve {
    pub case_id: String,
    /// log2 of each group size, ascending from 0.
    pub group_log_sizes: Vec<u32>,
    /// Number of groups at each size.
    pub group_counts: Vec<u64>,
    /// Groups with at least one ground-energy member.
    pub raw_successes: Vec<u64>,
    /// Groups whose MQC-reduced sample attains ground energy.
    pub mqc_successes: Vec<u64>,
}

impl SuccessCurve {
    pub fn len(&self) -> usize {
        self.group_log_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_log_sizes.is_empty()
    }

    pub fn raw_probability(&self, i: usize) -> f64 {
        self.raw_successes[i] as f64 / self.group_counts[i] as f64
    }

    pub fn mqc_probability(&self, i: usize) -> f64 {
        self.mqc_successes[i] as f64 / self.group_counts[i] as f64
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.group_log_sizes.len();
        if n == 0
            || self.group_counts.len() != n
            || self.raw_successes.len() != n
            || self.mqc_successes.len() != n
        {
            return Err(Error::InvalidArgument("malformed success curve".into()));
        }
        Ok(())
    }
}

/// Which judgment a samples-to-solution figure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsMode {
    Raw,
    Mqc,
}

/// Samples-to-solution: log2 of the smallest group size from which the
/// success probability stays at 1.0 through the top of the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sts {
    Solved(u32),
    Unsolved,
}

impl Sts {
    pub fn solved_log2(self) -> Option<u32> {
        match self {
            Sts::Solved(k) => Some(k),
            Sts::Unsolved => None,
        }
    }
}

impl fmt::Display for Sts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sts::Solved(k) => write!(f, "{k}"),
            Sts::Unsolved => write!(f, "U"),
        }
    }
}

/// Computes both success curves for one case by walking the tournament
/// bottom-up: raw group success is the OR of child groups, MQC group
/// results come from combining child results, so the whole curve costs one
/// combine per internal tournament node.
pub fn success_curve(instance: &FclInstance, batch: &SampleBatch) -> Result<SuccessCurve> {
    if batch.problem_id != instance.problem.content_hash() {
        return Err(Error::InvalidArgument(
            "sample batch answers a different problem".into(),
        ));
    }
    let n = batch.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "batch size must be a power of two, got {n}"
        )));
    }
    let m = n.trailing_zeros();
    if m > MAX_LOG2_BATCH {
        return Err(Error::InvalidArgument(format!(
            "batch size 2^{m} exceeds the 2^{MAX_LOG2_BATCH} limit"
        )));
    }
    let p = &instance.problem;
    let mut raw_solved: Vec<bool> = Vec::with_capacity(n);
    for s in &batch.samples {
        raw_solved.push(instance.is_solution(s)?);
    }
    let mut level: Vec<Sample> = batch.samples.clone();
    let mut curve = SuccessCurve {
        case_id: String::new(),
        group_log_sizes: Vec::with_capacity(m as usize + 1),
        group_counts: Vec::with_capacity(m as usize + 1),
        raw_successes: Vec::with_capacity(m as usize + 1),
        mqc_successes: Vec::with_capacity(m as usize + 1),
    };
    for k in 0..=m {
        if k > 0 {
            raw_solved = raw_solved
                .chunks(2)
                .map(|pair| pair.iter().any(|&s| s))
                .collect();
            level = mqc::next_level(p, &level)?;
        }
        let mut mqc_hits = 0u64;
        for s in &level {
            mqc_hits += u64::from(instance.is_solution(s)?);
        }
        curve.group_log_sizes.push(k);
        curve.group_counts.push(level.len() as u64);
        curve
            .raw_successes
            .push(raw_solved.iter().filter(|&&s| s).count() as u64);
        curve.mqc_successes.push(mqc_hits);
    }
    for w in 1..curve.len() {
        // Raw success is monotone by construction; the MQC curve is not
        // formally guaranteed monotone, so only report violations.
        if curve.mqc_successes[w] * curve.group_counts[w - 1]
            < curve.mqc_successes[w - 1] * curve.group_counts[w]
        {
            log::warn!(
                "mqc success probability dipped from group size 2^{} to 2^{}",
                w - 1,
                w
            );
        }
    }
    Ok(curve)
}

/// Sums the group counts of several curves measured at the same sizes
/// (e.g. ten 8192-sample batches pooled into one 81920-sample case).
pub fn pool_curves(curves: &[SuccessCurve], case_id: &str) -> Result<SuccessCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot pool zero curves".into()))?;
    first.check_shape()?;
    let mut pooled = SuccessCurve {
        case_id: case_id.to_string(),
        group_log_sizes: first.group_log_sizes.clone(),
        group_counts: vec![0; first.len()],
        raw_successes: vec![0; first.len()],
        mqc_successes: vec![0; first.len()],
    };
    for c in curves {
        c.check_shape()?;
        if c.group_log_sizes != pooled.group_log_sizes {
            return Err(Error::InvalidArgument(
                "pooled curves must share group sizes".into(),
            ));
        }
        for i in 0..c.len() {
            pooled.group_counts[i] += c.group_counts[i];
            pooled.raw_successes[i] += c.raw_successes[i];
            pooled.mqc_successes[i] += c.mqc_successes[i];
        }
    }
    Ok(pooled)
}

/// The smallest exponent from which the chosen probability is exactly 1.0
/// up through the largest group size; `Unsolved` when even the top size
/// misses. Integer counts make the "exactly 1.0" test exact.
pub fn samples_to_solution(curve: &SuccessCurve, mode: StsMode) -> Sts {
    let hit = |i: usize| match mode {
        StsMode::Raw => curve.raw_successes[i] == curve.group_counts[i],
        StsMode::Mqc => curve.mqc_successes[i] == curve.group_counts[i],
    };
    let mut answer = Sts::Unsolved;
    for i in (0..curve.len()).rev() {
        if hit(i) {
            answer = Sts::Solved(curve.group_log_sizes[i]);
        } else {
            break;
        }
    }
    answer
}

/// One survey case outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum CaseOutcome {
    Measured { ground_energy: f64, raw: Sts, mqc: Sts },
    /// The generator exhausted its retry budget for this seed.
    GenerationFailed,
}

/// One row of a per-cell case CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub case_id: String,
    pub r_limit: OverlapLimit,
    pub c: usize,
    pub alpha: f64,
    pub seed: u64,
    pub outcome: CaseOutcome,
}

impl CaseRecord {
    /// CSV line: `case_id,r,c,alpha,seed,ground_energy,raw,mqc`; a failed
    /// generation shows `G` in both result columns and no ground energy.
    pub fn to_csv_line(&self) -> String {
        let (ground, raw, mqc) = match &self.outcome {
            CaseOutcome::Measured { ground_energy, raw, mqc } => {
                (format!("{ground_energy}"), raw.to_string(), mqc.to_string())
            }
            CaseOutcome::GenerationFailed => (String::new(), "G".into(), "G".into()),
        };
        format!(
            "{},{},{},{},{},{},{},{}",
            self.case_id, self.r_limit, self.c, self.alpha, self.seed, ground, raw, mqc
        )
    }

    pub fn parse_csv_line(line: &str, lineno: usize) -> Result<CaseRecord> {
        let fail = |msg: String| Error::Format { line: lineno, message: msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(fail(format!("expected 8 case fields, got {}", f.len())));
        }
        let r_limit: OverlapLimit = f[1].parse().map_err(|_| fail("bad overlap limit".into()))?;
        let c: usize = f[2].parse().map_err(|_| fail("bad region side".into()))?;
        let alpha: f64 = f[3].parse().map_err(|_| fail("bad loop density".into()))?;
        let seed: u64 = f[4].parse().map_err(|_| fail("bad seed".into()))?;
        let parse_sts = |tok: &str| -> Result<Sts> {
            if tok == "U" {
                Ok(Sts::Unsolved)
            } else {
                tok.parse::<u32>()
                    .map(Sts::Solved)
                    .map_err(|_| fail(format!("bad samples-to-solution token {tok:?}")))
            }
        };
        let outcome = if f[6] == "G" || f[7] == "G" {
            if f[6] != f[7] || !f[5].is_empty() {
                return Err(fail("inconsistent generation-failure row".into()));
            }
            CaseOutcome::GenerationFailed
        } else {
            CaseOutcome::Measured {
                ground_energy: f[5].parse().map_err(|_| fail("bad ground energy".into()))?,
                raw: parse_sts(f[6])?,
                mqc: parse_sts(f[7])?,
            }
        };
        Ok(CaseRecord {
            case_id: f[0].to_string(),
            r_limit,
            c,
            alpha,
            seed,
            outcome,
        })
    }
}

/// Aggregates of one (r, c, alpha) cell. Means cover each mode's solved
/// cases; the `common` means cover cases solved by both modes (the fair
/// speedup basis); medians are a secondary aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyCell {
    pub r_limit: OverlapLimit,
    pub c: usize,
    pub alpha: f64,
    pub case_count: usize,
    pub gen_failed: usize,
    pub raw_solved: usize,
    pub mqc_solved: usize,
    pub raw_unsolved_count: usize,
    pub mean_raw_sts_log2: Option<f64>,
    pub mean_mqc_sts_log2: Option<f64>,
    pub mean_raw_sts_log2_common: Option<f64>,
    pub mean_mqc_sts_log2_common: Option<f64>,
    pub median_raw_sts_log2: Option<f64>,
    pub median_mqc_sts_log2: Option<f64>,
    /// Mean of 2^mqc_sts over cases the raw judgment never solved.
    pub mean_mqc_samples_for_raw_unsolved: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("sts values are finite"));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Folds one cell's case records into its aggregate row.
pub fn aggregate_cell(
    r_limit: OverlapLimit,
    c: usize,
    alpha: f64,
    records: &[CaseRecord],
) -> SurveyCell {
    let mut raw_all = Vec::new();
    let mut mqc_all = Vec::new();
    let mut raw_common = Vec::new();
    let mut mqc_common = Vec::new();
    let mut rescue_samples = Vec::new();
    let mut gen_failed = 0;
    let mut raw_unsolved = 0;
    for rec in records {
        match &rec.outcome {
            CaseOutcome::GenerationFailed => gen_failed += 1,
            CaseOutcome::Measured { raw, mqc, .. } => {
                if let Some(k) = raw.solved_log2() {
                    raw_all.push(f64::from(k));
                } else {
                    raw_unsolved += 1;
                    if let Some(k) = mqc.solved_log2() {
                        rescue_samples.push(f64::from(k).exp2());
                    }
                }
                if let Some(k) = mqc.solved_log2() {
                    mqc_all.push(f64::from(k));
                }
                if let (Some(rk), Some(mk)) = (raw.solved_log2(), mqc.solved_log2()) {
                    raw_common.push(f64::from(rk));
                    mqc_common.push(f64::from(mk));
                }
            }
        }
    }
    SurveyCell {
        r_limit,
        c,
        alpha,
        case_count: records.len(),
        gen_failed,
        raw_solved: raw_all.len(),
        mqc_solved: mqc_all.len(),
        raw_unsolved_count: raw_unsolved,
        mean_raw_sts_log2: mean(&raw_all),
        mean_mqc_sts_log2: mean(&mqc_all),
        mean_raw_sts_log2_common: mean(&raw_common),
        mean_mqc_sts_log2_common: mean(&mqc_common),
        median_raw_sts_log2: median(&raw_all),
        median_mqc_sts_log2: median(&mqc_all),
        mean_mqc_samples_for_raw_unsolved: mean(&rescue_samples),
    }
}

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.3}"))
}

impl SurveyCell {
    pub const CSV_COLUMNS: &'static str = "r,c,alpha,case_count,gen_failed,raw_solved,\
        mqc_solved,raw_unsolved_count,mean_raw_sts_log2,mean_mqc_sts_log2,\
        mean_raw_sts_log2_common,mean_mqc_sts_log2_common,median_raw_sts_log2,\
        median_mqc_sts_log2,mean_mqc_samples_for_raw_unsolved";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.r_limit,
            self.c,
            self.alpha,
            self.case_count,
            self.gen_failed,
            self.raw_solved,
            self.mqc_solved,
            self.raw_unsolved_count,
            opt3(self.mean_raw_sts_log2),
            opt3(self.mean_mqc_sts_log2),
            opt3(self.mean_raw_sts_log2_common),
            opt3(self.mean_mqc_sts_log2_common),
            opt3(self.median_raw_sts_log2),
            opt3(self.median_mqc_sts_log2),
            opt3(self.mean_mqc_samples_for_raw_unsolved),
        )
    }
}

/// Deterministic seed derivation: a splitmix64-style mix folded over the
/// master seed and a tag path. Frozen — changing it changes every output
/// file (see the pinned values in tests).
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let golden = 0x9E37_79B9_7F4A_7C15u64;
    let mut h = mix(master ^ golden);
    for &t in tags {
        h = mix(h.wrapping_add(golden) ^ t);
    }
    h
}

/// Integer tag for a loop density (ten-thousandths, e.g. 0.05 -> 500).
fn alpha_tag(alpha: f64) -> u64 {
    (alpha * 10_000.0).round() as u64
}

/// What a survey iterates over.
#[derive(Debug, Clone)]
pub struct SurveyGrid {
    pub r_limits: Vec<OverlapLimit>,
    pub c_values: Vec<usize>,
    pub alphas: Vec<f64>,
}

/// Full survey parameterization; per-case seeds derive from `master_seed`
/// (the seed inside `sampler` is ignored and replaced per case).
#[derive(Debug, Clone)]
pub struct SurveyConfig {
    pub problem_type: ProblemType,
    pub grid: SurveyGrid,
    pub cases_per_cell: usize,
    pub samples_per_case: usize,
    pub sampler: AnnealConfig,
    pub master_seed: u64,
}

impl SurveyConfig {
    /// The full-scale grid: r in {2, 3, unlimited}, c in 2..=16, alpha in
    /// 0.05..=0.5 step 0.05, 100 cases of 8192 samples each. Hours of
    /// runtime — use [`SurveyConfig::desk`] for anything interactive.
    pub fn paper(problem_type: ProblemType, master_seed: u64) -> Self {
        SurveyConfig {
            problem_type,
            grid: SurveyGrid {
                r_limits: vec![
                    OverlapLimit::Bounded(2),
                    OverlapLimit::Bounded(3),
                    OverlapLimit::Unlimited,
                ],
                c_values: (2..=16).collect(),
                alphas: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
            },
            cases_per_cell: 100,
            samples_per_case: 8192,
            sampler: AnnealConfig::survey_default(0),
            master_seed,
        }
    }

    /// A minutes-scale grid for smoke runs: 12 cells, 20 cases of 1024
    /// samples.
    pub fn desk(problem_type: ProblemType, master_seed: u64) -> Self {
        SurveyConfig {
            problem_type,
            grid: SurveyGrid {
                r_limits: vec![OverlapLimit::Bounded(2), OverlapLimit::Unlimited],
                c_values: vec![2, 4],
                alphas: vec![0.1, 0.3, 0.5],
            },
            cases_per_cell: 20,
            samples_per_case: 1024,
            sampler: AnnealConfig::survey_default(0),
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.r_limits.is_empty()
            || self.grid.c_values.is_empty()
            || self.grid.alphas.is_empty()
        {
            return Err(Error::InvalidArgument("survey grid is empty".into()));
        }
        if self.cases_per_cell == 0 {
            return Err(Error::InvalidArgument("survey needs at least one case".into()));
        }
        if !self.samples_per_case.is_power_of_two()
            || self.samples_per_case > 1 << MAX_LOG2_BATCH
        {
            return Err(Error::InvalidArgument(format!(
                "samples per case must be a power of two up to 2^{MAX_LOG2_BATCH}, got {}",
                self.samples_per_case
            )));
        }
        self.sampler.validate()
    }

    /// Hash pinned into cell files so a resumed survey can detect that the
    /// directory was produced under different parameters.
    pub fn fingerprint(&self, r: OverlapLimit, c: usize, alpha: f64) -> String {
        let text = format!(
            "type={} r={} c={} alpha={} cases={} samples={} sweeps={} bs={:016x} be={:016x} sched={} ro={} master={}",
            self.problem_type,
            r,
            c,
            alpha,
            self.cases_per_cell,
            self.samples_per_case,
            self.sampler.sweeps,
            self.sampler.beta_start.to_bits(),
            self.sampler.beta_end.to_bits(),
            self.sampler.schedule,
            self.sampler.random_sweep_order,
            self.master_seed,
        );
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn header_lines(&self) -> Vec<String> {
        vec![
            format!("# tool fclmqc {}", env!("CARGO_PKG_VERSION")),
            format!(
                "# sampler sweeps={} beta_start={} beta_end={} schedule={} random_order={}",
                self.sampler.sweeps,
                self.sampler.beta_start,
                self.sampler.beta_end,
                self.sampler.schedule,
                self.sampler.random_sweep_order
            ),
            format!("# master_seed {}", self.master_seed),
        ]
    }
}

/// Stable file stem for a cell, e.g. `cases_r2_c4_a010`.
pub fn cell_file_stem(r: OverlapLimit, c: usize, alpha: f64) -> String {
    let centi = (alpha * 100.0).round() as u32;
    format!("cases_r{r}_c{c}_a{centi:03}")
}

/// Runs one case: generate the instance, sample it, and judge both curves.
/// A generator retry-budget failure becomes a `GenerationFailed` record
/// rather than an error.
pub fn run_case(
    graph: &Arc<ChimeraGraph>,
    cfg: &SurveyConfig,
    r: OverlapLimit,
    c: usize,
    alpha: f64,
    case_index: usize,
) -> Result<CaseRecord> {
    let tags = [r.code(), c as u64, alpha_tag(alpha), case_index as u64];
    let instance_seed = derive_seed(cfg.master_seed, &[&tags[..], &[1]].concat());
    let sampler_seed = derive_seed(cfg.master_seed, &[&tags[..], &[2]].concat());
    let case_id = format!("r{r}_c{c}_a{alpha}_i{case_index:03}");
    let fcl_config = FclConfig {
        problem_type: cfg.problem_type,
        c,
        alpha,
        r_limit: r,
        seed: instance_seed,
    };
    let record = |outcome| CaseRecord {
        case_id: case_id.clone(),
        r_limit: r,
        c,
        alpha,
        seed: instance_seed,
        outcome,
    };
    let instance = match FclInstance::generate_on(Arc::clone(graph), &fcl_config) {
        Ok(inst) => inst,
        Err(Error::GenerationFailure { accepted, target }) => {
            log::warn!("{case_id}: generation failed ({accepted}/{target} loops)");
            return Ok(record(CaseOutcome::GenerationFailed));
        }
        Err(e) => return Err(e),
    };
    let batch = anneal_batch(
        &instance.problem,
        cfg.samples_per_case,
        &cfg.sampler.with_seed(sampler_seed),
    )?;
    let curve = success_curve(&instance, &batch)?;
    Ok(record(CaseOutcome::Measured {
        ground_energy: instance.ground_energy,
        raw: samples_to_solution(&curve, StsMode::Raw),
        mqc: samples_to_solution(&curve, StsMode::Mqc),
    }))
}

/// Writes `lines` to `path` atomically (temp file + rename), so readers
/// never observe a half-written cell.
fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

const CASE_COLUMNS: &str = "case_id,r,c,alpha,seed,ground_energy,raw_sts_log2,mqc_sts_log2";

/// Runs the whole grid, writing one case CSV per cell under
/// `out_dir/cells/` and the aggregate table to `out_dir/survey.csv`.
///
/// Cells are processed in grid order; cases within a cell run in parallel
/// but are recorded in case order, so output bytes do not depend on the
/// worker count. A completed cell file whose parameter fingerprint matches
/// is reused (crash-resumable); a mismatching file aborts with a
/// stale-input error rather than silently mixing configurations.
pub fn run_survey(cfg: &SurveyConfig, out_dir: &Path) -> Result<Vec<SurveyCell>> {
    cfg.validate()?;
    let cells_dir = out_dir.join("cells");
    fs::create_dir_all(&cells_dir)?;
    let mut graphs: BTreeMap<usize, Arc<ChimeraGraph>> = BTreeMap::new();
    for &c in &cfg.grid.c_values {
        graphs.insert(c, Arc::new(ChimeraGraph::square(c)?));
    }
    let mut cells = Vec::new();
    for &r in &cfg.grid.r_limits {
        for &c in &cfg.grid.c_values {
            for &alpha in &cfg.grid.alphas {
                let path = cells_dir.join(format!("{}.csv", cell_file_stem(r, c, alpha)));
                let fingerprint = cfg.fingerprint(r, c, alpha);
                let records = if path.exists() {
                    read_cell_file(&path, Some(&fingerprint))?
                } else {
                    let graph = &graphs[&c];
                    let records: Vec<CaseRecord> = (0..cfg.cases_per_cell)
                        .into_par_iter()
                        .map(|i| run_case(graph, cfg, r, c, alpha, i))
                        .collect::<Result<_>>()?;
                    let mut text = String::new();
                    for line in cfg.header_lines() {
                        text.push_str(&line);
                        text.push('\n');
                    }
                    text.push_str(&format!(
                        "# cell r={r} c={c} alpha={alpha} cases={} samples={}\n",
                        cfg.cases_per_cell, cfg.samples_per_case
                    ));
                    text.push_str(&format!("# config {fingerprint}\n"));
                    text.push_str(&format!("# columns {CASE_COLUMNS}\n"));
                    for rec in &records {
                        text.push_str(&rec.to_csv_line());
                        text.push('\n');
                    }
                    write_atomic(&path, &text)?;
                    records
                };
                cells.push(aggregate_cell(r, c, alpha, &records));
            }
        }
    }
    let mut text = String::new();
    for line in cfg.header_lines() {
        text.push_str(&line);
        text.push('\n');
    }
    text.push_str(&format!("# columns {}\n", SurveyCell::CSV_COLUMNS));
    for cell in &cells {
        text.push_str(&cell.to_csv_line());
        text.push('\n');
    }
    write_atomic(&out_dir.join("survey.csv"), &text)?;
    Ok(cells)
}

/// Parses a cell case file; when `expect_fingerprint` is given, a missing
/// or different `# config` line is a stale-input error.
pub fn read_cell_file(path: &Path, expect_fingerprint: Option<&str>) -> Result<Vec<CaseRecord>> {
    let file = fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    let mut fingerprint = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# config ") {
            fingerprint = Some(rest.trim().to_string());
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        records.push(CaseRecord::parse_csv_line(&line, idx + 1)?);
    }
    if let Some(expect) = expect_fingerprint {
        match fingerprint {
            Some(found) if found == expect => {}
            Some(_) => {
                return Err(Error::StaleInput(format!(
                    "{} was produced with different survey parameters",
                    path.display()
                )))
            }
            None => {
                return Err(Error::StaleInput(format!(
                    "{} has no configuration fingerprint",
                    path.display()
                )))
            }
        }
    }
    Ok(records)
}

/// Plain-text rollup across a whole survey.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub cells: usize,
    pub cases: usize,
    pub gen_failed: usize,
    pub raw_solved: usize,
    pub raw_unsolved: usize,
    pub mqc_solved: usize,
    pub mqc_unsolved: usize,
    pub raw_unsolved_mqc_solved: usize,
    /// Raw-unsolved cases the MQC judgment solved within 2^9 samples.
    pub rescued_within_512: usize,
    /// Histogram over commonly solved cases of raw_sts - mqc_sts (log2).
    pub speedup_log2_histogram: BTreeMap<i64, usize>,
    pub geometric_mean_speedup: Option<f64>,
}

impl ReportSummary {
    pub fn from_records(records: &[CaseRecord], cells: usize) -> ReportSummary {
        let mut s = ReportSummary {
            cells,
            cases: records.len(),
            gen_failed: 0,
            raw_solved: 0,
            raw_unsolved: 0,
            mqc_solved: 0,
            mqc_unsolved: 0,
            raw_unsolved_mqc_solved: 0,
            rescued_within_512: 0,
            speedup_log2_histogram: BTreeMap::new(),
            geometric_mean_speedup: None,
        };
        let mut diffs = Vec::new();
        for rec in records {
            match &rec.outcome {
                CaseOutcome::GenerationFailed => s.gen_failed += 1,
                CaseOutcome::Measured { raw, mqc, .. } => {
                    match raw {
                        Sts::Solved(_) => s.raw_solved += 1,
                        Sts::Unsolved => s.raw_unsolved += 1,
                    }
                    match mqc {
                        Sts::Solved(_) => s.mqc_solved += 1,
                        Sts::Unsolved => s.mqc_unsolved += 1,
                    }
                    if let (Sts::Unsolved, Sts::Solved(k)) = (raw, mqc) {
                        s.raw_unsolved_mqc_solved += 1;
                        if *k <= 9 {
                            s.rescued_within_512 += 1;
                        }
                    }
                    if let (Sts::Solved(rk), Sts::Solved(mk)) = (raw, mqc) {
                        let d = i64::from(*rk) - i64::from(*mk);
                        *s.speedup_log2_histogram.entry(d).or_insert(0) += 1;
                        diffs.push(d as f64);
                    }
                }
            }
        }
        if !diffs.is_empty() {
            let mean_log2 = diffs.iter().sum::<f64>() / diffs.len() as f64;
            s.geometric_mean_speedup = Some(mean_log2.exp2());
        }
        s
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("cells: {}\n", self.cells));
        out.push_str(&format!("cases: {}\n", self.cases));
        out.push_str(&format!("generation failures: {}\n", self.gen_failed));
        out.push_str(&format!(
            "raw: {} solved, {} unsolved\n",
            self.raw_solved, self.raw_unsolved
        ));
        out.push_str(&format!(
            "mqc: {} solved, {} unsolved\n",
            self.mqc_solved, self.mqc_unsolved
        ));
        out.push_str(&format!(
            "raw-unsolved cases solved by mqc: {} ({} within 512 samples)\n",
            self.raw_unsolved_mqc_solved, self.rescued_within_512
        ));
        match self.geometric_mean_speedup {
            Some(g) => out.push_str(&format!(
                "geometric mean mqc speedup over commonly solved cases: {g:.2}x\n"
            )),
            None => out.push_str("geometric mean mqc speedup: NA (no commonly solved cases)\n"),
        }
        out.push_str("speedup histogram (log2 raw-mqc: cases):\n");
        for (d, n) in &self.speedup_log2_histogram {
            out.push_str(&format!("  {d}: {n}\n"));
        }
        out
    }
}

/// Reads every cell file under `survey_dir/cells`, returning the records
/// per cell sorted by (r, c, alpha) together with the header lines of the
/// first file (tool/sampler/master provenance).
pub fn load_survey_cells(survey_dir: &Path) -> Result<(Vec<(Vec<CaseRecord>, SurveyCell)>, Vec<String>)> {
    let cells_dir = survey_dir.join("cells");
    let mut paths: Vec<_> = match fs::read_dir(&cells_dir) {
        Ok(rd) => rd
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension() == Some(std::ffi::OsStr::new("csv")))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    paths.sort();
    let mut cells = Vec::new();
    let mut header = Vec::new();
    for path in &paths {
        if header.is_empty() {
            let text = fs::read_to_string(path)?;
            header = text
                .lines()
                .filter(|l| {
                    l.starts_with("# tool") || l.starts_with("# sampler") || l.starts_with("# master_seed")
                })
                .map(String::from)
                .collect();
        }
        let records = read_cell_file(path, None)?;
        let Some(first) = records.first() else {
            continue;
        };
        let (r, c, alpha) = (first.r_limit, first.c, first.alpha);
        if let Some(bad) = records
            .iter()
            .find(|rec| rec.r_limit != r || rec.c != c || rec.alpha != alpha)
        {
            return Err(Error::StaleInput(format!(
                "{} mixes cells ({} vs {})",
                path.display(),
                first.case_id,
                bad.case_id
            )));
        }
        cells.push((records, (r, c, alpha)));
    }
    cells.sort_by(|a, b| {
        let key = |(_, (r, c, alpha)): &(Vec<CaseRecord>, (OverlapLimit, usize, f64))| {
            (r.code(), *c, (alpha * 10_000.0).round() as u64)
        };
        key(a).cmp(&key(b))
    });
    let cells = cells
        .into_iter()
        .map(|(records, (r, c, alpha))| {
            let cell = aggregate_cell(r, c, alpha, &records);
            (records, cell)
        })
        .collect();
    Ok((cells, header))
}

/// Parameters of the fixed-region scaling test: several loop densities on
/// one region size, judged with pooled batches per case.
#[derive(Debug, Clone)]
pub struct InitialConfig {
    pub problem_type: ProblemType,
    pub c: usize,
    pub alphas: Vec<f64>,
    pub cases_per_alpha: usize,
    /// Total samples per case; must be batch_size x whole batches.
    pub samples_per_case: usize,
    /// Group sizes run up to this power of two.
    pub batch_size: usize,
    pub r_limit: OverlapLimit,
    pub sampler: AnnealConfig,
    pub master_seed: u64,
}

impl InitialConfig {
    /// The full-scale configuration: c=16, five densities, 10 cases each,
    /// ten pooled 8192-sample batches per case. Long; see `desk`.
    pub fn paper(problem_type: ProblemType, master_seed: u64) -> Self {
        InitialConfig {
            problem_type,
            c: 16,
            alphas: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            cases_per_alpha: 10,
            samples_per_case: 81_920,
            batch_size: 8192,
            r_limit: OverlapLimit::Unlimited,
            sampler: AnnealConfig::survey_default(0),
            master_seed,
        }
    }

    /// Minutes-scale variant.
    pub fn desk(problem_type: ProblemType, master_seed: u64) -> Self {
        InitialConfig {
            problem_type,
            c: 4,
            alphas: vec![0.1, 0.3],
            cases_per_alpha: 3,
            samples_per_case: 8192,
            batch_size: 8192,
            r_limit: OverlapLimit::Unlimited,
            sampler: AnnealConfig::survey_default(0),
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.cases_per_alpha == 0 {
            return Err(Error::InvalidArgument("empty test plan".into()));
        }
        if !self.batch_size.is_power_of_two() || self.batch_size > 1 << MAX_LOG2_BATCH {
            return Err(Error::InvalidArgument(format!(
                "batch size must be a power of two up to 2^{MAX_LOG2_BATCH}, got {}",
                self.batch_size
            )));
        }
        if self.samples_per_case == 0 || self.samples_per_case % self.batch_size != 0 {
            return Err(Error::InvalidArgument(format!(
                "samples per case ({}) must be a whole number of {}-sample batches",
                self.samples_per_case, self.batch_size
            )));
        }
        self.sampler.validate()
    }

    fn header_lines(&self) -> Vec<String> {
        vec![
            format!("# tool fclmqc {}", env!("CARGO_PKG_VERSION")),
            format!(
                "# sampler sweeps={} beta_start={} beta_end={} schedule={} random_order={}",
                self.sampler.sweeps,
                self.sampler.beta_start,
                self.sampler.beta_end,
                self.sampler.schedule,
                self.sampler.random_sweep_order
            ),
            format!("# master_seed {}", self.master_seed),
        ]
    }
}

/// Runs the scaling test, writing one pooled-curve CSV per case into
/// `out_dir` and returning the curves. Cases whose generation fails are
/// skipped with a warning (mirroring survey semantics).
pub fn run_initial(cfg: &InitialConfig, out_dir: &Path) -> Result<Vec<SuccessCurve>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let graph = Arc::new(ChimeraGraph::square(cfg.c)?);
    let num_batches = cfg.samples_per_case / cfg.batch_size;
    let mut curves = Vec::new();
    for &alpha in &cfg.alphas {
        for case_index in 0..cfg.cases_per_alpha {
            let tags = [
                cfg.r_limit.code(),
                cfg.c as u64,
                alpha_tag(alpha),
                case_index as u64,
            ];
            let instance_seed = derive_seed(cfg.master_seed, &[&tags[..], &[1]].concat());
            let sampler_seed = derive_seed(cfg.master_seed, &[&tags[..], &[2]].concat());
            let case_id = format!("c{}_a{alpha}_i{case_index:03}", cfg.c);
            let fcl_config = FclConfig {
                problem_type: cfg.problem_type,
                c: cfg.c,
                alpha,
                r_limit: cfg.r_limit,
                seed: instance_seed,
            };
            let instance = match FclInstance::generate_on(Arc::clone(&graph), &fcl_config) {
                Ok(inst) => inst,
                Err(Error::GenerationFailure { accepted, target }) => {
                    log::warn!("{case_id}: generation failed ({accepted}/{target} loops)");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let sampler = cfg.sampler.with_seed(sampler_seed);
            let batch = anneal_batch(&instance.problem, cfg.samples_per_case, &sampler)?;
            let sub_curves: Vec<SuccessCurve> = batch
                .samples
                .chunks(cfg.batch_size)
                .map(|chunk| {
                    let sub = SampleBatch {
                        problem_id: batch.problem_id.clone(),
                        samples: chunk.to_vec(),
                        source: batch.source,
                        seed: batch.seed,
                        hardware_sample_time: batch.hardware_sample_time,
                    };
                    success_curve(&instance, &sub)
                })
                .collect::<Result<_>>()?;
            let mut curve = pool_curves(&sub_curves, &case_id)?;
            curve.case_id = case_id.clone();
            let mut text = String::new();
            for line in cfg.header_lines() {
                text.push_str(&line);
                text.push('\n');
            }
            text.push_str(&format!(
                "# case {case_id} ground {} batches {num_batches}\n",
                instance.ground_energy
            ));
            text.push_str("# columns log2_size,raw_prob,mqc_prob\n");
            text.push_str(&curve_rows(&curve));
            write_atomic(&out_dir.join(format!("{case_id}.csv")), &text)?;
            curves.push(curve);
        }
    }
    Ok(curves)
}

/// The data rows of a curve CSV (`log2_size,raw_prob,mqc_prob`,
/// probabilities at 6 decimal places).
pub fn curve_rows(curve: &SuccessCurve) -> String {
    let mut out = String::new();
    for i in 0..curve.len() {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            curve.group_log_sizes[i],
            curve.raw_probability(i),
            curve.mqc_probability(i)
        ));
    }
    out
}
