//! Deterministic Monte Carlo experiments: interval coverage and the `1/n`
//! rates of the bias, the potentials, and the Sinkhorn divergence.
//!
//! Replicates run in parallel on the ambient rayon pool. Each replicate draws
//! from its own stream `SeedSpec::for_cell(seed, cell, replicate)`, and
//! aggregates are folded in replicate order, so results do not depend on the
//! thread count.

mod config;
mod emit;

use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{ci_two_sample, sinkhorn_divergence};
use crate::measures::{
    empirical_from_indices, load_measure, sample_indices, sample_uniform_box, CompactDomain, DiscreteMeasure, SeedSpec,
};
use crate::oracle::{gaussian_cost, GaussianPairSpec};
use crate::potentials::{holder_norm, Difference, ExtendedPotential, GridSpec, HolderOrder, Side};
use crate::sinkhorn::{entropic_cost, normalize, Normalization, SolverConfig};

pub use config::{load_config, parse_config};
pub use emit::{emit, format_sig, render, OutputFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Coverage,
    BiasRate,
    PotentialRate,
    DivergenceRate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiscreteSource {
    Files {
        p: PathBuf,
        q: PathBuf,
    },
    /// `atoms` points drawn once, uniformly on `[0, 1]^d`, uniform weights.
    Generated {
        atoms: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// `N(0, I/2)` against `N(𝟙, I/2)`; truth from the closed form.
    GaussianPair,
    DiscretePair(DiscreteSource),
}

/// How empirical measures are drawn from a discrete population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Multinomial,
    /// The population itself stands in for every sample; a plumbing check
    /// whose bias is exactly zero.
    Enumerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub scenario: Scenario,
    pub dims: Vec<usize>,
    pub eps_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    /// `eps` is overridden per cell.
    pub solver: SolverConfig,
    /// Defaults to `⌊d/2⌋ + 1`.
    pub holder_order: Option<usize>,
    /// Defaults to [`GridSpec::default_for`].
    pub grid_points: Option<usize>,
    pub sampling: Sampling,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, scenario: Scenario) -> Self {
        Self {
            kind,
            scenario,
            dims: vec![2],
            eps_list: vec![1.0],
            n_list: vec![100],
            replicates: 100,
            alpha: 0.05,
            seed: 0,
            solver: SolverConfig::default(),
            holder_order: None,
            grid_points: None,
            sampling: Sampling::Multinomial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::InvalidConfig { line: 0, reason: reason.into() });
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.dims.is_empty() || self.eps_list.is_empty() || self.n_list.is_empty() {
            return bad("dims, eps and n must be non-empty");
        }
        if self.dims.contains(&0) || self.n_list.contains(&0) {
            return bad("dimensions and sample sizes must be positive");
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return bad("eps values must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.solver.tol <= 0.0 || self.solver.max_iter == 0 {
            return bad("tol must be positive and max_iter at least 1");
        }
        if self.kind != ExperimentKind::Coverage && self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n must be strictly increasing for rate experiments");
        }
        if self.kind != ExperimentKind::Coverage && self.scenario == Scenario::GaussianPair {
            return bad("rate experiments need a discrete scenario");
        }
        if self.kind == ExperimentKind::PotentialRate {
            if self.eps_list.iter().any(|&e| e != 1.0) {
                return bad("potential_rate runs at eps = 1");
            }
            if self.dims.iter().any(|&d| d > 3) {
                return bad("potential_rate supports d <= 3");
            }
        }
        if self.sampling == Sampling::Enumerate && self.scenario == Scenario::GaussianPair {
            return bad("enumerate sampling needs a discrete scenario");
        }
        Ok(())
    }

    fn solver_at(&self, eps: f64) -> SolverConfig {
        SolverConfig { eps, ..self.solver }
    }

    /// Solver for population quantities: at least `1e-12` tight.
    fn truth_solver_at(&self, eps: f64) -> SolverConfig {
        SolverConfig { eps, tol: self.solver.tol.min(1e-12), ..self.solver }
    }
}

/// Population measures of a discrete scenario in dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMeasures {
    pub d: usize,
    pub p: DiscreteMeasure,
    pub q: DiscreteMeasure,
    pub domain: CompactDomain,
}

/// Loads or generates the population pair; generation is seeded by
/// `(seed, d)` only, so every experiment with the same seed sees the same pair.
pub fn scenario_measures(cfg: &ExperimentConfig, d: usize) -> Result<ScenarioMeasures> {
    let source = match &cfg.scenario {
        Scenario::DiscretePair(s) => s,
        Scenario::GaussianPair => return Err(Error::invalid("gaussian scenario has no finite support")),
    };
    let (p, q, domain) = match source {
        DiscreteSource::Generated { atoms } => {
            let cube = CompactDomain::unit_cube(d)?;
            let base = SeedSpec::new(cfg.seed, u64::MAX - d as u64);
            let p = sample_uniform_box(&cube, *atoms, base.lane(0))?;
            let q = sample_uniform_box(&cube, *atoms, base.lane(1))?;
            (p, q, cube)
        }
        DiscreteSource::Files { p, q } => {
            let (p, q) = (load_measure(p)?, load_measure(q)?);
            if p.dim() != d || q.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: p.dim().max(q.dim()) });
            }
            let (lp, up) = p.bounding_box();
            let (lq, uq) = q.bounding_box();
            let lower: Vec<f64> = lp.iter().zip(&lq).map(|(a, b)| a.min(*b)).collect();
            let mut upper: Vec<f64> = up.iter().zip(&uq).map(|(a, b)| a.max(*b)).collect();
            // keep the box non-degenerate along every axis
            for (u, l) in upper.iter_mut().zip(&lower) {
                if *u <= *l {
                    *u = l + 1.0;
                }
            }
            (p, q, CompactDomain::new(lower, upper)?)
        }
    };
    Ok(ScenarioMeasures { d, p, q, domain })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCell {
    pub d: usize,
    pub eps: f64,
    pub n: usize,
    pub m: usize,
    pub truth: f64,
    pub hits: usize,
    /// Replicates whose interval was evaluated.
    pub evaluated: usize,
    /// Replicates dropped because the solver did not converge.
    pub excluded: usize,
    pub coverage: f64,
    pub mean_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageResult {
    pub cells: Vec<CoverageCell>,
    pub scenarios: Vec<ScenarioMeasures>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub evaluated: usize,
    pub excluded: usize,
}

/// Ordinary least squares of `ln|mean|` on `ln n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub label: String,
    pub d: usize,
    pub eps: f64,
    pub points: Vec<RatePoint>,
    /// `None` when some mean is zero or fewer than two points exist.
    pub fit: Option<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub kind: ExperimentKind,
    pub curves: Vec<RateCurve>,
    pub scenarios: Vec<ScenarioMeasures>,
}

impl RateResult {
    pub fn curve(&self, label: &str) -> Option<&RateCurve> {
        self.curves.iter().find(|c| c.label == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Coverage(CoverageResult),
    Rate(RateResult),
}

pub fn fit_log_log(points: &[RatePoint]) -> Option<SlopeFit> {
    if points.len() < 2 || points.iter().any(|p| !(p.mean.abs() > 0.0) || !p.mean.is_finite()) {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean.abs().ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if xs.len() > 2 {
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(SlopeFit { slope, intercept, slope_se })
}

/// Mean and sample standard deviation, accumulated in slice order.
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Runs `f` on a pool with `threads` workers; `None` uses the ambient pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.kind {
        ExperimentKind::Coverage => run_coverage(cfg).map(ExperimentOutput::Coverage),
        ExperimentKind::BiasRate => run_bias_rate(cfg).map(ExperimentOutput::Rate),
        ExperimentKind::PotentialRate => run_potential_rate(cfg).map(ExperimentOutput::Rate),
        ExperimentKind::DivergenceRate => run_divergence_rate(cfg).map(ExperimentOutput::Rate),
    }
}

fn require_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    cfg.validate()?;
    if cfg.kind != kind {
        return Err(Error::invalid(format!("config is for {:?}, not {kind:?}", cfg.kind)));
    }
    Ok(())
}

/// Runs every replicate of one cell; `None` marks a non-converged replicate.
fn replicate_values<T: Send>(
    cfg: &ExperimentConfig,
    cell: u64,
    job: impl Fn(SeedSpec) -> Result<T> + Sync,
) -> Result<Vec<Option<T>>> {
    (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| match job(SeedSpec::for_cell(cfg.seed, cell, r)) {
            Ok(v) => Ok(Some(v)),
            Err(Error::NotConverged(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn point_from(n: usize, outcomes: &[Option<f64>]) -> RatePoint {
    let values: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let (mean, sd) = mean_sd(&values);
    RatePoint { n, mean, sd, evaluated: values.len(), excluded: outcomes.len() - values.len() }
}

/// Two-sample interval coverage with `n = m` per cell.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageResult> {
    require_kind(cfg, ExperimentKind::Coverage)?;
    let mut result = CoverageResult::default();
    let mut cell = 0u64;
    for &d in &cfg.dims {
        let population = match cfg.scenario {
            Scenario::DiscretePair(_) => {
                let s = scenario_measures(cfg, d)?;
                result.scenarios.push(s.clone());
                Some(s)
            }
            Scenario::GaussianPair => None,
        };
        for &eps in &cfg.eps_list {
            let solver = cfg.solver_at(eps);
            let truth = match &population {
                None => gaussian_cost(&GaussianPairSpec::new(d, eps)?),
                Some(s) => entropic_cost(&s.p, &s.q, &cfg.truth_solver_at(eps))?.0,
            };
            for &n in &cfg.n_list {
                let outcomes = replicate_values(cfg, cell, |seed| {
                    let (p_n, q_m) = match &population {
                        None => GaussianPairSpec::new(d, eps)?.sample(n, n, seed)?,
                        Some(s) => draw_pair(cfg.sampling, s, n, seed)?,
                    };
                    let ci = ci_two_sample(&p_n, &q_m, &solver, cfg.alpha)?;
                    Ok((ci.contains(truth), ci.half_width))
                })?;
                let done: Vec<(bool, f64)> = outcomes.iter().flatten().copied().collect();
                let hits = done.iter().filter(|(h, _)| *h).count();
                let widths: Vec<f64> = done.iter().map(|(_, w)| *w).collect();
                result.cells.push(CoverageCell {
                    d,
                    eps,
                    n,
                    m: n,
                    truth,
                    hits,
                    evaluated: done.len(),
                    excluded: outcomes.len() - done.len(),
                    coverage: if done.is_empty() { f64::NAN } else { hits as f64 / done.len() as f64 },
                    mean_half_width: mean_sd(&widths).0,
                });
                cell += 1;
            }
        }
    }
    Ok(result)
}

fn draw_pair(
    sampling: Sampling,
    s: &ScenarioMeasures,
    n: usize,
    seed: SeedSpec,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    match sampling {
        Sampling::Enumerate => Ok((s.p.clone(), s.q.clone())),
        Sampling::Multinomial => {
            Ok((draw_merged(sampling, &s.p, n, seed.lane(0))?.0, draw_merged(sampling, &s.q, n, seed.lane(1))?.0))
        }
    }
}

/// Empirical measure of `P` with merged atoms, and the source atom of each.
fn draw_merged(
    sampling: Sampling,
    p: &DiscreteMeasure,
    n: usize,
    seed: SeedSpec,
) -> Result<(DiscreteMeasure, Vec<usize>)> {
    match sampling {
        Sampling::Enumerate => Ok((p.clone(), (0..p.len()).collect())),
        Sampling::Multinomial => empirical_from_indices(p, &sample_indices(p, n, seed)?),
    }
}

/// Curve labels produced by [`run_bias_rate`].
pub const BIAS: &str = "bias";
pub const BIAS_LINEARIZED: &str = "bias_linearized";

/// `E S_ε(P_n, Q) − S_ε(P, Q)` against `n`.
///
/// Two curves per `(d, ε)`: the raw difference, and the difference minus its
/// mean-zero linear term `∫ f* d(P_n − P)`. Both estimate the same bias; the
/// second is nonnegative replicate by replicate (weak duality with `(f*, g*)`)
/// and free of the `n^{-1/2}` fluctuation.
pub fn run_bias_rate(cfg: &ExperimentConfig) -> Result<RateResult> {
    require_kind(cfg, ExperimentKind::BiasRate)?;
    let mut result = RateResult { kind: cfg.kind, curves: Vec::new(), scenarios: Vec::new() };
    let mut cell = 0u64;
    for &d in &cfg.dims {
        let s = scenario_measures(cfg, d)?;
        for &eps in &cfg.eps_list {
            let solver = cfg.solver_at(eps);
            let (truth, star) = entropic_cost(&s.p, &s.q, &cfg.truth_solver_at(eps))?;
            let mean_f_star = s.p.integrate(&star.f);
            let (mut raw, mut lin) = (Vec::new(), Vec::new());
            for &n in &cfg.n_list {
                let outcomes = replicate_values(cfg, cell, |seed| {
                    let (p_n, atoms) = draw_merged(cfg.sampling, &s.p, n, seed)?;
                    let (value, _) = entropic_cost(&p_n, &s.q, &solver)?;
                    let f_on_sample: Vec<f64> = atoms.iter().map(|&i| star.f[i]).collect();
                    let linear = p_n.integrate(&f_on_sample) - mean_f_star;
                    Ok((value - truth, value - truth - linear))
                })?;
                raw.push(point_from(n, &outcomes.iter().map(|o| o.map(|v| v.0)).collect::<Vec<_>>()));
                lin.push(point_from(n, &outcomes.iter().map(|o| o.map(|v| v.1)).collect::<Vec<_>>()));
                cell += 1;
            }
            result.curves.push(RateCurve { label: BIAS.into(), d, eps, fit: fit_log_log(&raw), points: raw });
            result.curves.push(RateCurve {
                label: BIAS_LINEARIZED.into(),
                d,
                eps,
                fit: fit_log_log(&lin),
                points: lin,
            });
        }
        result.scenarios.push(s);
    }
    Ok(result)
}

pub const POTENTIAL_HOLDER_SQ: &str = "potential_holder_sq";
pub const POTENTIAL_SUP_SQ: &str = "potential_sup_sq";

/// `E‖f_n − f*‖²_{C^s(Ω)}` against `n`, with `GZero` potentials at `ε = 1`.
///
/// A second curve tracks the squared sup-norm term alone.
pub fn run_potential_rate(cfg: &ExperimentConfig) -> Result<RateResult> {
    require_kind(cfg, ExperimentKind::PotentialRate)?;
    let mut result = RateResult { kind: cfg.kind, curves: Vec::new(), scenarios: Vec::new() };
    let mut cell = 0u64;
    for &d in &cfg.dims {
        let s = scenario_measures(cfg, d)?;
        let order = match cfg.holder_order {
            Some(k) => HolderOrder::new(k)?,
            None => HolderOrder::default_for_dim(d),
        };
        let grid = match cfg.grid_points {
            Some(k) => GridSpec::new(s.domain.clone(), k)?,
            None => GridSpec::default_for(s.domain.clone()),
        };
        for &eps in &cfg.eps_list {
            let solver = cfg.solver_at(eps);
            let (_, star) = entropic_cost(&s.p, &s.q, &cfg.truth_solver_at(eps))?;
            let star = normalize(&star, &s.p, &s.q, Normalization::GZero);
            let f_star = ExtendedPotential::new(Side::F, &star, &s.q)?;
            let (mut holder, mut sup) = (Vec::new(), Vec::new());
            for &n in &cfg.n_list {
                let outcomes = replicate_values(cfg, cell, |seed| {
                    let (p_n, _) = draw_merged(cfg.sampling, &s.p, n, seed)?;
                    let (_, pair) = entropic_cost(&p_n, &s.q, &solver)?;
                    let pair = normalize(&pair, &p_n, &s.q, Normalization::GZero);
                    let f_n = ExtendedPotential::new(Side::F, &pair, &s.q)?;
                    let est = holder_norm(&Difference(f_n, f_star), order, &grid)?;
                    Ok((est.value.powi(2), est.sup_norm().powi(2)))
                })?;
                holder.push(point_from(n, &outcomes.iter().map(|o| o.map(|v| v.0)).collect::<Vec<_>>()));
                sup.push(point_from(n, &outcomes.iter().map(|o| o.map(|v| v.1)).collect::<Vec<_>>()));
                cell += 1;
            }
            result.curves.push(RateCurve {
                label: POTENTIAL_HOLDER_SQ.into(),
                d,
                eps,
                fit: fit_log_log(&holder),
                points: holder,
            });
            result.curves.push(RateCurve {
                label: POTENTIAL_SUP_SQ.into(),
                d,
                eps,
                fit: fit_log_log(&sup),
                points: sup,
            });
        }
        result.scenarios.push(s);
    }
    Ok(result)
}

pub const DIVERGENCE_ONE_SAMPLE: &str = "divergence_one_sample";
pub const DIVERGENCE_TWO_SAMPLE: &str = "divergence_two_sample";

/// `E D_ε(P_n, P)` and `E D_ε(P_n, P'_n)` against `n`.
pub fn run_divergence_rate(cfg: &ExperimentConfig) -> Result<RateResult> {
    require_kind(cfg, ExperimentKind::DivergenceRate)?;
    let mut result = RateResult { kind: cfg.kind, curves: Vec::new(), scenarios: Vec::new() };
    let mut cell = 0u64;
    for &d in &cfg.dims {
        let s = scenario_measures(cfg, d)?;
        for &eps in &cfg.eps_list {
            let solver = cfg.solver_at(eps);
            let (mut one, mut two) = (Vec::new(), Vec::new());
            for &n in &cfg.n_list {
                let outcomes = replicate_values(cfg, cell, |seed| {
                    let (p_n, _) = draw_merged(cfg.sampling, &s.p, n, seed.lane(0))?;
                    let (p_n2, _) = draw_merged(cfg.sampling, &s.p, n, seed.lane(1))?;
                    let one = sinkhorn_divergence(&p_n, &s.p, &solver)?.value;
                    let two = sinkhorn_divergence(&p_n, &p_n2, &solver)?.value;
                    Ok((one, two))
                })?;
                one.push(point_from(n, &outcomes.iter().map(|o| o.map(|v| v.0)).collect::<Vec<_>>()));
                two.push(point_from(n, &outcomes.iter().map(|o| o.map(|v| v.1)).collect::<Vec<_>>()));
                cell += 1;
            }
            result.curves.push(RateCurve {
                label: DIVERGENCE_ONE_SAMPLE.into(),
                d,
                eps,
                fit: fit_log_log(&one),
                points: one,
            });
            result.curves.push(RateCurve {
                label: DIVERGENCE_TWO_SAMPLE.into(),
                d,
                eps,
                fit: fit_log_log(&two),
                points: two,
            });
        }
        result.scenarios.push(s);
    }
    Ok(result)
}
