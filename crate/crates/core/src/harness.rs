//! Configuration-driven rate experiments and their reports.
//!
//! Every replicate draws its sample from `derive_seed(master_seed, [n, rep])`
//! and every candidate from `derive_seed(master_seed, [n, rep, candidate + 1])`,
//! so results do not depend on how work is scheduled across threads.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{fit_blockmodel_als, fit_dot_product_model, spectral_cocluster};
use crate::geometry::{cover_indices, epsilon_cover, psi_cdf_distance, quantize_latents, LatentSource};
use crate::graphon::{sample_bipartite, BipartiteSample, StepGraphon};
use crate::linalg::truncated_svd;
use crate::population::{
    blocked_graphon, centering_constants, match_population_cocluster, population_risk, PopulationLatentMap, RowSide,
    Side,
};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::stats::{
    block_sums, block_summary, empirical_risk, in_unit_cap, CoClusterLabels, GeneralLatent, ModelFamily, Theta,
};

/// Which experiment a configuration drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    MatchingRate,
    RiskGap,
    Concentration,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::MatchingRate => "matching_rate",
            Self::RiskGap => "risk_gap",
            Self::Concentration => "concentration",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matching_rate" => Ok(Self::MatchingRate),
            "risk_gap" => Ok(Self::RiskGap),
            "concentration" => Ok(Self::Concentration),
            _ => Err(Error::InvalidArgument(format!("unknown experiment {s:?}"))),
        }
    }
}

/// Labelling strategies used to probe the maximum over all labellings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    /// Spectral co-clustering of `A`.
    Spectral,
    /// Uniform random labels.
    Random,
    /// Equal-size bins of rows and columns sorted by degree.
    DegreeSorted,
    /// Equal-size bins along the second singular vectors of `W`.
    SingularThreshold,
    /// A fitted model (spectral start, then alternating least squares).
    Fit,
    /// Random labels, random vectors in the cap and random `θ`.
    RandomLatent,
}

impl Candidate {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spectral => "spectral",
            Self::Random => "random",
            Self::DegreeSorted => "degree_sorted",
            Self::SingularThreshold => "singular_threshold",
            Self::Fit => "fit",
            Self::RandomLatent => "random_latent",
        }
    }
}

impl FromStr for Candidate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "random" => Ok(Self::Random),
            "degree_sorted" => Ok(Self::DegreeSorted),
            "singular_threshold" => Ok(Self::SingularThreshold),
            "fit" => Ok(Self::Fit),
            "random_latent" => Ok(Self::RandomLatent),
            _ => Err(Error::InvalidArgument(format!("unknown candidate strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub graphon: StepGraphon,
    pub n_grid: Vec<usize>,
    /// `m / n` as `(numerator, denominator)`.
    pub ratio: (usize, usize),
    pub k: usize,
    pub d: usize,
    pub family: ModelFamily,
    pub reps: usize,
    pub master_seed: u64,
    pub candidates: Vec<Candidate>,
    /// Candidate count for the concentration suite.
    pub n_candidates: usize,
    /// Overrides the quantization radius schedule when set.
    pub epsilon: Option<f64>,
    pub psi_resolution: usize,
    pub max_iters: usize,
    /// Record wall-clock time per row. Off by default so outputs are reproducible byte for byte.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            graphon: StepGraphon::four_block(),
            n_grid: vec![100, 200, 400, 800, 1600],
            ratio: (1, 1),
            k: 4,
            d: 0,
            family: ModelFamily::Blockmodel,
            reps: 20,
            master_seed: 1,
            candidates: vec![
                Candidate::Spectral,
                Candidate::Random,
                Candidate::DegreeSorted,
                Candidate::SingularThreshold,
            ],
            n_candidates: 200,
            epsilon: None,
            psi_resolution: 32,
            max_iters: 20,
            timing: false,
        };
        match experiment {
            Experiment::MatchingRate => base,
            Experiment::RiskGap => Self {
                k: 2,
                reps: 10,
                candidates: vec![Candidate::Fit, Candidate::Spectral, Candidate::RandomLatent],
                ..base
            },
            Experiment::Concentration => Self { k: 3, reps: 5, ..base },
        }
    }

    /// Apply `key = value` lines on top of the experiment's defaults.
    /// `base_dir` resolves relative graphon file paths.
    pub fn parse(text: &str, experiment: Experiment, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::defaults(experiment);
        let mut experiment_override = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key = value`, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |msg: String| Error::Parse { line, msg };
            let num = |v: &str| -> Result<usize> { v.parse().map_err(|_| bad(format!("{key}: {v:?} is not a count"))) };
            match key {
                "experiment" => experiment_override = Some(value.parse::<Experiment>()?),
                "graphon" => cfg.graphon = parse_graphon_spec(value, base_dir).map_err(|e| bad(e.to_string()))?,
                "n_grid" => {
                    cfg.n_grid = value.split(',').map(|v| num(v.trim())).collect::<Result<_>>()?;
                }
                "ratio" => cfg.ratio = parse_ratio(value).map_err(|e| bad(e.to_string()))?,
                "K" | "k" => cfg.k = num(value)?,
                "d" => cfg.d = num(value)?,
                "family" => {
                    let id: u8 = value.parse().map_err(|_| bad(format!("family: {value:?} is not 1..4")))?;
                    cfg.family = ModelFamily::from_id(id).map_err(|e| bad(e.to_string()))?;
                }
                "reps" => cfg.reps = num(value)?,
                "master_seed" | "seed" => {
                    cfg.master_seed = value.parse().map_err(|_| bad(format!("seed: {value:?} is not a u64")))?;
                }
                "candidates" => {
                    cfg.candidates = value
                        .split(',')
                        .map(|c| c.trim().parse::<Candidate>().map_err(|e| bad(e.to_string())))
                        .collect::<Result<_>>()?;
                }
                "n_candidates" => cfg.n_candidates = num(value)?,
                "epsilon" => {
                    cfg.epsilon = if value == "auto" {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad(format!("epsilon: {value:?} is not a number")))?)
                    };
                }
                "psi_resolution" => cfg.psi_resolution = num(value)?,
                "max_iters" => cfg.max_iters = num(value)?,
                "timing" => {
                    cfg.timing = value.parse().map_err(|_| bad(format!("timing: {value:?} is not true/false")))?;
                }
                "output" => {}
                _ => return Err(bad(format!("unknown key {key:?}"))),
            }
        }
        if let Some(e) = experiment_override {
            if e != experiment {
                return Err(Error::InvalidArgument(format!(
                    "config is for {} but {} was requested",
                    e.name(),
                    experiment.name()
                )));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The `output` key of a config text, if present.
    pub fn output_path(text: &str) -> Option<String> {
        text.lines()
            .filter_map(|l| l.split('#').next()?.split_once('='))
            .find(|(k, _)| k.trim() == "output")
            .map(|(_, v)| v.trim().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) || self.n_grid[0] == 0 {
            return Err(Error::InvalidArgument("n_grid must be nonempty and strictly increasing".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.k == 0 || (self.k * self.k) > self.n_grid[0].min(self.m_for(self.n_grid[0])) {
            return Err(Error::InvalidArgument(format!(
                "K={} must satisfy 1 ≤ K ≤ √min(m, n) at n={}",
                self.k, self.n_grid[0]
            )));
        }
        if self.ratio.0 == 0 || self.ratio.1 == 0 {
            return Err(Error::InvalidArgument("ratio must be positive".into()));
        }
        if self.experiment != Experiment::Concentration && self.candidates.is_empty() {
            return Err(Error::InvalidArgument("at least one candidate strategy is required".into()));
        }
        if self.experiment == Experiment::Concentration && self.n_candidates == 0 {
            return Err(Error::InvalidArgument("n_candidates must be at least 1".into()));
        }
        if self.experiment == Experiment::RiskGap {
            if self.d > 2 {
                return Err(Error::InvalidArgument("the risk experiment supports d ≤ 2".into()));
            }
            if self.family == ModelFamily::DotProduct {
                return Err(Error::InvalidArgument("the risk experiment supports families 1, 2 and 4".into()));
            }
            if self.family == ModelFamily::Blockmodel && self.d != 0 {
                return Err(Error::InvalidArgument("family 1 uses d = 0".into()));
            }
            if self.family != ModelFamily::Blockmodel {
                self.family.check_dim(self.d)?;
            }
            if let Some(e) = self.epsilon {
                if !(e > 0.0 && e <= 1.0) {
                    return Err(Error::InvalidArgument(format!("epsilon {e} must be in (0, 1]")));
                }
            }
            if self.psi_resolution < 8 {
                return Err(Error::InvalidArgument("psi_resolution must be at least 8".into()));
            }
        }
        Ok(())
    }

    /// Number of rows for `n` columns.
    pub fn m_for(&self, n: usize) -> usize {
        ((n * self.ratio.0) as f64 / self.ratio.1 as f64).round().max(1.0) as usize
    }
}

fn parse_ratio(v: &str) -> Result<(usize, usize)> {
    let parse = |s: &str| -> Result<usize> {
        s.trim().parse().map_err(|_| Error::InvalidArgument(format!("ratio part {s:?} is not a positive integer")))
    };
    match v.split_once('/') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => Ok((parse(v)?, 1)),
    }
}

/// `four_block`, `constant <p>`, `steps <row breaks> | <col breaks> | <values>`
/// (comma-separated, values row-major), or a path to a graphon text file.
pub fn parse_graphon_spec(spec: &str, base_dir: Option<&Path>) -> Result<StepGraphon> {
    let spec = spec.trim();
    if spec == "four_block" {
        return Ok(StepGraphon::four_block());
    }
    if let Some(p) = spec.strip_prefix("constant") {
        let p: f64 = p.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad constant graphon {spec:?}")))?;
        return StepGraphon::constant(p);
    }
    if let Some(rest) = spec.strip_prefix("steps") {
        let parts: Vec<Vec<f64>> = rest
            .split('|')
            .map(|part| {
                part.split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number {v:?}"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        if parts.len() != 3 {
            return Err(Error::InvalidArgument("steps needs row breaks | col breaks | values".into()));
        }
        let (r, c) = (parts[0].len().saturating_sub(1), parts[1].len().saturating_sub(1));
        if parts[2].len() != r * c {
            return Err(Error::InvalidArgument(format!("{r}x{c} graphon needs {} values", r * c)));
        }
        return StepGraphon::new(parts[0].clone(), parts[1].clone(), DMatrix::from_row_slice(r, c, &parts[2]));
    }
    let path = match base_dir {
        Some(dir) if Path::new(spec).is_relative() => dir.join(spec),
        _ => Path::new(spec).to_path_buf(),
    };
    StepGraphon::from_text(&std::fs::read_to_string(path)?)
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub n: usize,
    pub m: usize,
    pub rep: usize,
    pub candidate: String,
    pub k: usize,
    pub d: usize,
    pub family: u8,
    pub error: f64,
    pub runtime_ms: Option<f64>,
}

/// Per-`n` median over replicates of the per-replicate maximum error.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub reps: usize,
    pub median_max_error: f64,
}

#[derive(Debug, Clone)]
pub struct RateResult {
    pub experiment: String,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    /// Log–log slope of the summary medians, when at least three sizes are available.
    pub slope: Option<(f64, f64)>,
}

impl RateResult {
    pub fn from_rows(experiment: &str, rows: Vec<ResultRow>) -> Self {
        let summary = summarize(&rows);
        let ns: Vec<f64> = summary.iter().map(|s| s.n as f64).collect();
        let errs: Vec<f64> = summary.iter().map(|s| s.median_max_error).collect();
        let slope = fit_rate_exponent(&ns, &errs).ok();
        Self {
            experiment: experiment.to_string(),
            rows,
            summary,
            slope,
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-`n` medians of per-replicate maxima, in increasing `n`.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let mut reps: Vec<usize> = rows.iter().filter(|r| r.n == n).map(|r| r.rep).collect();
            reps.sort_unstable();
            reps.dedup();
            let mut maxima: Vec<f64> = reps
                .iter()
                .map(|&rep| {
                    rows.iter()
                        .filter(|r| r.n == n && r.rep == rep)
                        .map(|r| r.error)
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            SummaryRow {
                n,
                reps: reps.len(),
                median_max_error: median(&mut maxima),
            }
        })
        .collect()
}

/// Ordinary least squares of `log err` on `log n`: `(slope, standard error)`.
pub fn fit_rate_exponent(ns: &[f64], errs: &[f64]) -> Result<(f64, f64)> {
    if ns.len() != errs.len() {
        return Err(Error::ShapeMismatch("sizes and errors differ in length".into()));
    }
    if ns.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 points, got {}", ns.len())));
    }
    if let Some(e) = errs.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument(format!("error values must be positive, got {e}")));
    }
    if let Some(n) = ns.iter().find(|n| !(**n > 0.0)) {
        return Err(Error::InvalidArgument(format!("sizes must be positive, got {n}")));
    }
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("sizes must not all be equal".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = (rss / (k - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

/// Equal-size bins of `0..len` after sorting by `key` (ties by index).
fn quantile_labels(key: &[f64], k: usize) -> Vec<usize> {
    let len = key.len();
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
    let mut labels = vec![0; len];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = (rank * k / len).min(k - 1);
    }
    labels
}

fn random_labels(len: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..k)).collect()
}

fn row_sums(a: &DMatrix<f64>) -> Vec<f64> {
    a.row_iter().map(|r| r.sum()).collect()
}

fn col_sums(a: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter().map(|c| c.sum()).collect()
}

/// Labels from the second singular vectors of `m` (first when rank 1).
fn singular_labels(m: &DMatrix<f64>, k: usize, seed: u64) -> Result<CoClusterLabels> {
    let rank = 2.min(m.nrows().min(m.ncols()));
    let svd = truncated_svd(m, rank, seed)?;
    let c = rank - 1;
    let u: Vec<f64> = svd.u.column(c).iter().copied().collect();
    let v: Vec<f64> = svd.v.column(c).iter().copied().collect();
    CoClusterLabels::new(quantile_labels(&u, k), quantile_labels(&v, k), k)
}

fn labelling_candidate(c: Candidate, sample: &BipartiteSample, k: usize, seed: u64) -> Result<CoClusterLabels> {
    let mut rng = rng_from_seed(seed);
    match c {
        Candidate::Spectral => spectral_cocluster(&sample.a, k, seed),
        Candidate::Random => CoClusterLabels::new(random_labels(sample.m(), k, &mut rng), random_labels(sample.n(), k, &mut rng), k),
        Candidate::DegreeSorted => {
            CoClusterLabels::new(quantile_labels(&row_sums(&sample.a), k), quantile_labels(&col_sums(&sample.a), k), k)
        }
        Candidate::SingularThreshold => singular_labels(&sample.w, k, seed),
        Candidate::Fit => {
            let init = spectral_cocluster(&sample.a, k, seed)?;
            Ok(fit_blockmodel_als(&sample.a, k, &init, 20)?.labels)
        }
        Candidate::RandomLatent => CoClusterLabels::new(random_labels(sample.m(), k, &mut rng), random_labels(sample.n(), k, &mut rng), k),
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `‖Φ_A(S,T) − Φ_ω(σ_S,τ_T)‖_F + ‖π_T − π_τ‖ + ‖π_S − π_σ‖` with `σ_S`, `τ_T`
/// the population co-clusters matched to `S` and `T`.
pub fn matching_error(g: &StepGraphon, sample: &BipartiteSample, labels: &CoClusterLabels) -> Result<f64> {
    let emp = block_summary(&sample.a, labels)?;
    let sigma = match_population_cocluster(g, sample, &labels.rows, labels.k, Side::Row)?;
    let tau = match_population_cocluster(g, sample, &labels.cols, labels.k, Side::Column)?;
    let pop = blocked_graphon(g, &sigma.alloc, &tau.alloc)?;
    Ok((&emp.phi - &pop.phi).norm() + l2(&emp.pi_col, &pop.pi_col) + l2(&emp.pi_row, &pop.pi_row))
}

fn run_grid<F>(cfg: &ExperimentConfig, jobs: usize, per_rep: F) -> Result<Vec<ResultRow>>
where
    F: Fn(usize, usize, &BipartiteSample) -> Result<Vec<ResultRow>> + Sync,
{
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.reps).map(move |rep| (n, rep)))
        .collect();
    let run = |&(n, rep): &(usize, usize)| -> Result<Vec<ResultRow>> {
        let m = cfg.m_for(n);
        let seed = derive_seed(cfg.master_seed, &[n as u64, rep as u64]);
        let sample = sample_bipartite(&cfg.graphon, m, n, seed)?;
        per_rep(n, rep, &sample).map_err(|e| e.in_instance(format!("{} n={n} rep={rep}", cfg.experiment.name())))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let chunks: Vec<Result<Vec<ResultRow>>> = pool.install(|| tasks.par_iter().map(run).collect());
    let mut rows = Vec::new();
    for c in chunks {
        rows.extend(c?);
    }
    Ok(rows)
}

fn elapsed_ms(cfg: &ExperimentConfig, start: Instant) -> Option<f64> {
    cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3)
}

/// Population-matching error of each candidate labelling, one row per (n, rep, candidate).
pub fn run_matching_rate_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RateResult> {
    let rows = run_grid(cfg, jobs, |n, rep, sample| {
        cfg.candidates
            .iter()
            .enumerate()
            .map(|(ci, &cand)| {
                let start = Instant::now();
                let seed = derive_seed(cfg.master_seed, &[n as u64, rep as u64, ci as u64 + 1]);
                let labels = labelling_candidate(cand, sample, cfg.k, seed)?;
                let error = matching_error(&cfg.graphon, sample, &labels)
                    .map_err(|e| e.in_instance(format!("candidate {}", cand.name())))?;
                Ok(ResultRow {
                    experiment: Experiment::MatchingRate.name().into(),
                    n,
                    m: sample.m(),
                    rep,
                    candidate: cand.name().into(),
                    k: cfg.k,
                    d: 0,
                    family: 1,
                    error,
                    runtime_ms: elapsed_ms(cfg, start),
                })
            })
            .collect()
    })?;
    Ok(RateResult::from_rows(Experiment::MatchingRate.name(), rows))
}

/// `‖Φ_A(S,T) − Φ_W(S,T)‖_F²`.
fn concentration_error(e: &DMatrix<f64>, labels: &CoClusterLabels) -> f64 {
    let sums = block_sums(e, &labels.rows, &labels.cols, labels.k);
    let mn = (e.nrows() * e.ncols()) as f64;
    sums.iter().map(|v| (v / mn).powi(2)).sum()
}

/// Deviation-seeking labellings: residual-sign bins, top singular vectors of
/// `A − W`, spectral, degree bins, then random labellings.
fn concentration_candidate(idx: usize, sample: &BipartiteSample, e: &DMatrix<f64>, k: usize, seed: u64) -> Result<(String, CoClusterLabels)> {
    let named = |name: &str, l: CoClusterLabels| Ok((name.to_string(), l));
    match idx {
        0 => named("residual_sign", CoClusterLabels::new(quantile_labels(&row_sums(e), k), quantile_labels(&col_sums(e), k), k)?),
        1 => {
            let svd = truncated_svd(e, 1, seed)?;
            let u: Vec<f64> = svd.u.column(0).iter().copied().collect();
            let v: Vec<f64> = svd.v.column(0).iter().copied().collect();
            named("residual_singular", CoClusterLabels::new(quantile_labels(&u, k), quantile_labels(&v, k), k)?)
        }
        2 => named("spectral", spectral_cocluster(&sample.a, k, seed)?),
        3 => named("degree_sorted", labelling_candidate(Candidate::DegreeSorted, sample, k, seed)?),
        _ => named("random", labelling_candidate(Candidate::Random, sample, k, seed)?),
    }
}

/// Concentration of `Φ_A` around `Φ_W` over a family of `n_candidates` labellings.
pub fn run_concentration_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RateResult> {
    let rows = run_grid(cfg, jobs, |n, rep, sample| {
        let e = &sample.a - &sample.w;
        (0..cfg.n_candidates)
            .map(|ci| {
                let start = Instant::now();
                let seed = derive_seed(cfg.master_seed, &[n as u64, rep as u64, ci as u64 + 1]);
                let (name, labels) = concentration_candidate(ci, sample, &e, cfg.k, seed)?;
                Ok(ResultRow {
                    experiment: Experiment::Concentration.name().into(),
                    n,
                    m: sample.m(),
                    rep,
                    candidate: name,
                    k: cfg.k,
                    d: 0,
                    family: 1,
                    error: concentration_error(&e, &labels),
                    runtime_ms: elapsed_ms(cfg, start),
                })
            })
            .collect()
    })?;
    Ok(RateResult::from_rows(Experiment::Concentration.name(), rows))
}

/// Quantization radius `min(1, (K² d^{d/2} log n / √n)^{1/(1+d)})`.
pub fn epsilon_schedule(k: usize, d: usize, n: usize) -> f64 {
    let (k, d, n) = (k as f64, d as f64, n as f64);
    let base = k * k * d.powf(d / 2.0) * n.ln() / n.sqrt();
    base.powf(1.0 / (1.0 + d)).min(1.0)
}

fn random_cap_vector(d: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let c: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        if in_unit_cap(&c) {
            return c;
        }
    }
}

/// A `(S, T, θ)` candidate for the risk experiment.
fn latent_candidate(
    cand: Candidate,
    sample: &BipartiteSample,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(GeneralLatent, GeneralLatent, Theta)> {
    let (k, d, family) = (cfg.k, cfg.d, cfg.family);
    let (m, n) = (sample.m(), sample.n());
    let mut rng = rng_from_seed(seed);
    match (cand, family) {
        (Candidate::Fit, ModelFamily::Blockmodel) => {
            let init = spectral_cocluster(&sample.a, k, seed)?;
            let fit = fit_blockmodel_als(&sample.a, k, &init, cfg.max_iters)?;
            Ok((
                GeneralLatent::labels_only(fit.labels.rows, k)?,
                GeneralLatent::labels_only(fit.labels.cols, k)?,
                fit.theta,
            ))
        }
        (Candidate::Fit, _) => {
            let fit = fit_dot_product_model(&sample.a, k, d, family, seed, cfg.max_iters)?;
            Ok((fit.row, fit.col, fit.theta))
        }
        (Candidate::RandomLatent, _) => {
            let vec_of = |len: usize, rng: &mut Rng| -> Vec<f64> { (0..len).flat_map(|_| random_cap_vector(d, rng)).collect() };
            let s = GeneralLatent::new(random_labels(m, k, &mut rng), vec_of(m, &mut rng), k, d)?;
            let t = GeneralLatent::new(random_labels(n, k, &mut rng), vec_of(n, &mut rng), k, d)?;
            let theta = Theta::new(DMatrix::from_fn(k, k, |_, _| rng.random::<f64>()))?;
            Ok((s, t, theta))
        }
        (other, _) => {
            // Labels from the strategy, θ̂ of those labels, and vectors at the cap's centre direction.
            let labels = labelling_candidate(other, sample, k, seed)?;
            let theta = Theta::new(block_summary(&sample.a, &labels)?.theta_hat)?;
            let v = if d == 0 { 0.0 } else { 0.9 / (d as f64).sqrt() };
            let s = GeneralLatent::new(labels.rows, vec![v; m * d], k, d)?;
            let t = GeneralLatent::new(labels.cols, vec![v; n * d], k, d)?;
            Ok((s, t, theta))
        }
    }
}

/// `|R_A(S,T;θ) − R_ω(S̄,τ̄;θ) − C1 − C2| + ‖Ψ_T − Ψ_τ̄‖² / (K·max(d,1))`, where
/// `S̄` are the row latents snapped to the ε-cover and `τ̄` is the population
/// co-cluster matched to the snapped column latents.
pub fn risk_gap(
    g: &StepGraphon,
    sample: &BipartiteSample,
    s: &GeneralLatent,
    t: &GeneralLatent,
    theta: &Theta,
    family: ModelFamily,
    epsilon: f64,
    psi_resolution: usize,
) -> Result<f64> {
    let (k, d) = (t.k(), t.d());
    let cover = epsilon_cover(d, epsilon)?;
    let idx = cover_indices(t, &cover)?;
    let per = cover.points.len();
    let super_labels: Vec<usize> = t.labels().iter().zip(&idx).map(|(&v, &c)| v * per + c).collect();
    let tau = match_population_cocluster(g, sample, &super_labels, k * per, Side::Column)?;
    let points = if d == 0 { Vec::new() } else { cover.points.clone() };
    let tau_map = PopulationLatentMap::from_super_allocation(g.col_breaks().to_vec(), &tau.alloc, &points, d)?;
    let r_a = empirical_risk(&sample.a, s, t, theta, family)?;
    let s_bar = quantize_latents(s, &cover)?;
    let r_w = population_risk(g, RowSide::Sample { x: &sample.x, latent: &s_bar }, &tau_map, theta, family)?;
    let c = centering_constants(sample, g)?;
    let psi = psi_cdf_distance(LatentSource::Sample(t), LatentSource::Map(&tau_map), psi_resolution)?;
    Ok((r_a - r_w - c.c1 - c.c2).abs() + psi / (k * d.max(1)) as f64)
}

/// Centering-corrected risk gap for each candidate `(S, T, θ)`.
pub fn run_risk_gap_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RateResult> {
    let rows = run_grid(cfg, jobs, |n, rep, sample| {
        let epsilon = cfg.epsilon.unwrap_or_else(|| epsilon_schedule(cfg.k, cfg.d, n));
        cfg.candidates
            .iter()
            .enumerate()
            .map(|(ci, &cand)| {
                let start = Instant::now();
                let seed = derive_seed(cfg.master_seed, &[n as u64, rep as u64, ci as u64 + 1]);
                let (s, t, theta) = latent_candidate(cand, sample, cfg, seed)?;
                let error = risk_gap(&cfg.graphon, sample, &s, &t, &theta, cfg.family, epsilon, cfg.psi_resolution)
                    .map_err(|e| e.in_instance(format!("candidate {}", cand.name())))?;
                Ok(ResultRow {
                    experiment: Experiment::RiskGap.name().into(),
                    n,
                    m: sample.m(),
                    rep,
                    candidate: cand.name().into(),
                    k: cfg.k,
                    d: cfg.d,
                    family: cfg.family.id(),
                    error,
                    runtime_ms: elapsed_ms(cfg, start),
                })
            })
            .collect()
    })?;
    Ok(RateResult::from_rows(Experiment::RiskGap.name(), rows))
}

pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RateResult> {
    match cfg.experiment {
        Experiment::MatchingRate => run_matching_rate_experiment(cfg, jobs),
        Experiment::RiskGap => run_risk_gap_experiment(cfg, jobs),
        Experiment::Concentration => run_concentration_experiment(cfg, jobs),
    }
}

pub const RESULTS_HEADER: &str = "experiment,n,m,rep,candidate,K,d,family,error,runtime_ms";
pub const SUMMARY_HEADER: &str = "experiment,n,reps,median_max_error,slope,slope_stderr";

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.n,
            r.m,
            r.rep,
            r.candidate,
            r.k,
            r.d,
            r.family,
            num(r.error),
            r.runtime_ms.map(num).unwrap_or_default()
        );
    }
    out
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RESULTS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "missing results header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            line: idx + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad("expected 10 fields"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        rows.push(ResultRow {
            experiment: f[0].to_string(),
            n: int(f[1])?,
            m: int(f[2])?,
            rep: int(f[3])?,
            candidate: f[4].to_string(),
            k: int(f[5])?,
            d: int(f[6])?,
            family: f[7].parse().map_err(|_| bad("bad family"))?,
            error: f[8].parse().map_err(|_| bad("bad error value"))?,
            runtime_ms: if f[9].is_empty() {
                None
            } else {
                Some(f[9].parse().map_err(|_| bad("bad runtime"))?)
            },
        });
    }
    Ok(rows)
}

pub fn summary_csv(result: &RateResult) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let (slope, se) = match result.slope {
        Some((s, e)) => (num(s), num(e)),
        None => (String::new(), String::new()),
    };
    for s in &result.summary {
        let _ = writeln!(out, "{},{},{},{},{},{}", result.experiment, s.n, s.reps, num(s.median_max_error), slope, se);
    }
    out
}

/// Log–log scatter of per-replicate maxima with the per-size medians and fitted line.
pub fn rate_svg(result: &RateResult) -> Option<String> {
    if result.rows.is_empty() {
        return None;
    }
    let mut points = Vec::new();
    for s in &result.summary {
        let mut reps: Vec<usize> = result.rows.iter().filter(|r| r.n == s.n).map(|r| r.rep).collect();
        reps.dedup();
        for rep in reps {
            let max = result
                .rows
                .iter()
                .filter(|r| r.n == s.n && r.rep == rep)
                .map(|r| r.error)
                .fold(f64::NEG_INFINITY, f64::max);
            if max > 0.0 {
                points.push(((s.n as f64).ln(), max.ln()));
            }
        }
    }
    let medians: Vec<(f64, f64)> = result
        .summary
        .iter()
        .filter(|s| s.median_max_error > 0.0)
        .map(|s| ((s.n as f64).ln(), s.median_max_error.ln()))
        .collect();
    let all: Vec<&(f64, f64)> = points.iter().chain(&medians).collect();
    if all.is_empty() {
        return None;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &&(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = |a: f64, b: f64| if b - a < 1e-9 { (a - 0.5, b + 0.5) } else { (a - 0.05 * (b - a), b + 0.05 * (b - a)) };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let (w, h, margin) = (640.0, 420.0, 60.0);
    let px = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
    let py = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = margin,
        b = h - margin,
        r = w - margin,
        t = margin
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">log n</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {})">log error (max over candidates, a lower bound on the sup)</text>"#,
        h / 2.0,
        h / 2.0
    );
    for &(x, y) in &points {
        let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#7a9cc6" fill-opacity="0.6"/>"##, px(x), py(y));
    }
    for &(x, y) in &medians {
        let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="4.5" fill="#c0392b"/>"##, px(x), py(y));
    }
    if let Some((slope, se)) = result.slope {
        let mx = medians.iter().map(|p| p.0).sum::<f64>() / medians.len() as f64;
        let my = medians.iter().map(|p| p.1).sum::<f64>() / medians.len() as f64;
        let (xa, xb) = (medians[0].0, medians[medians.len() - 1].0);
        let (ya, yb) = (my + slope * (xa - mx), my + slope * (xb - mx));
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c0392b" stroke-width="1.5"/>"##,
            px(xa),
            py(ya),
            px(xb),
            py(yb)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="13">{}: slope {:.3} ± {:.3}</text>"#,
            margin + 10.0,
            margin - 20.0,
            result.experiment,
            slope,
            se
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Write `results.csv`, `summary.csv` and, when there are rows, `rate.svg` into `dir`.
pub fn emit_report(result: &RateResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(&result.rows))?;
    std::fs::write(dir.join("summary.csv"), summary_csv(result))?;
    if let Some(svg) = rate_svg(result) {
        std::fs::write(dir.join("rate.svg"), svg)?;
    }
    Ok(())
}

/// Comma-separated rows; values use the shortest representation that parses back exactly.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in m.row_iter() {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad number {v:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {} fields, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}
