//! End-to-end runs: bound reports, the audit table and the figure data sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{k_agg_auto, k_agg_global, Aggregate, BoundFamily};
use crate::config::{KPolicy, Mode, RunConfig};
use crate::data::{Dataset, Phi};
use crate::divergence::Divergence;
use crate::dual::{dual_bound, dual_on_values, evaluate_bound, fit_conditional, fit_marginal, ConditionalConfig, ConditionalFit, FoldValue, PropensitySource};
use crate::error::{Error, Result};
use crate::nuisance::PropensityEstimate;
use crate::oracles::{binary_scm_grid, dpi_audit, primal_on_values, scm_ground_truth};
use crate::simulate::{evaluate_run, SyntheticScm};
use crate::Direction;

/// Schema version of every serialised report.
pub const REPORT_VERSION: u32 = 1;

/// Label of the order-statistics aggregate in reports.
pub const AGGREGATE_LABEL: &str = "tight_kth";

/// Penalised-width constants of the benchmark figures.
pub const PWIDTH_A: f64 = 10.0;
pub const PWIDTH_ALPHA: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub divergence: Divergence,
    pub lo: f64,
    pub up: f64,
}

/// Marginal bounds of one arm for every divergence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: u8,
    pub n: usize,
    pub e_hat: f64,
    pub intervals: Vec<Interval>,
    pub tight_kth: Aggregate,
    /// `(divergence, lambda_up, u_up, lambda_lo, u_lo)` at the scalar optimum.
    pub duals: Vec<(Divergence, f64, f64, f64, f64)>,
}

/// Per-fold diagnostics of one endpoint at one query point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointDiagnostics {
    pub divergence: Divergence,
    pub lo_folds: Vec<FoldValue>,
    pub up_folds: Vec<FoldValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub index: usize,
    pub arm: u8,
    pub x: Vec<f64>,
    /// Fold average of the fitted `e_a(x)`.
    pub e_hat: f64,
    pub intervals: Vec<Interval>,
    pub tight_kth: Aggregate,
    pub diagnostics: Vec<EndpointDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub divergence: Divergence,
    pub direction: Direction,
    pub fold: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub best_val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ReportBody {
    Marginal { arms: Vec<ArmReport> },
    Conditional { points: Vec<PointReport>, training: Vec<TrainingSummary> },
}

/// Versioned output of a bounds run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub n: usize,
    pub d: usize,
    pub body: ReportBody,
}

/// One line of the plot-ready table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub arm: u8,
    pub e_hat: f64,
    pub label: String,
    pub lo: f64,
    pub up: f64,
}

fn family(intervals: &[Interval]) -> Result<BoundFamily> {
    BoundFamily::new(
        intervals.iter().map(|i| i.lo).collect(),
        intervals.iter().map(|i| i.up).collect(),
        intervals.iter().map(|i| i.divergence.name().to_string()).collect(),
    )
}

/// Aggregates each family under the configured choice of `k`.
pub fn aggregate_all(families: &[BoundFamily], policy: KPolicy) -> Result<Vec<Aggregate>> {
    match policy {
        KPolicy::PerPoint => Ok(families.iter().map(k_agg_auto).collect()),
        KPolicy::Global => k_agg_global(families),
    }
}

/// The conditional estimator settings implied by a run configuration.
pub fn conditional_config(cfg: &RunConfig) -> ConditionalConfig {
    ConditionalConfig {
        folds: cfg.folds,
        debias: cfg.debias,
        optim: cfg.optim.clone(),
        propensity: cfg.propensity.clone(),
        pseudo: cfg.pseudo.clone(),
        source: PropensitySource::Fit,
        eta_override: None,
    }
}

/// Runs the configured estimator on `data`; conditional reports use the first
/// `query_points` rows as query covariates, for both arms.
pub fn run_bounds(data: &Dataset, cfg: &RunConfig) -> Result<BoundsReport> {
    cfg.validate()?;
    let data = data.clone().with_phi(cfg.phi.clone())?;
    let body = match cfg.mode {
        Mode::Marginal => marginal_body(&data, cfg)?,
        Mode::Conditional => {
            let q = cfg.query_points.min(data.n());
            let queries: Vec<Vec<f64>> = (0..q).map(|i| data.row(i).to_vec()).collect();
            let fits = fit_all(&data, cfg, &conditional_config(cfg))?;
            let mut points = Vec::with_capacity(2 * q);
            for arm in [0u8, 1] {
                points.extend(conditional_points(&fits, arm, &queries, cfg.k_policy)?);
            }
            for (i, p) in points.iter_mut().enumerate() {
                p.index = i % q;
            }
            ReportBody::Conditional { training: training_summaries(&fits), points }
        }
    };
    Ok(BoundsReport { version: REPORT_VERSION, config_hash: cfg.hash(), config: cfg.clone(), n: data.n(), d: data.d(), body })
}

fn marginal_body(data: &Dataset, cfg: &RunConfig) -> Result<ReportBody> {
    let fits = crate::par_map(&cfg.divergences, |&div| -> Result<_> {
        Ok((fit_marginal(data, div, Direction::Upper, None)?, fit_marginal(data, div, Direction::Lower, None)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut arms = Vec::with_capacity(2);
    let mut families = Vec::with_capacity(2);
    for arm in 0..2 {
        let intervals: Vec<Interval> = fits
            .iter()
            .map(|(up, lo)| Interval { divergence: up.divergence, lo: lo.arms[arm].theta, up: up.arms[arm].theta })
            .collect();
        families.push(family(&intervals)?);
        let duals = fits
            .iter()
            .map(|(up, lo)| (up.divergence, up.arms[arm].lambda, up.arms[arm].u, lo.arms[arm].lambda, lo.arms[arm].u))
            .collect();
        let first = &fits[0].0.arms[arm];
        arms.push((first.arm, first.n, first.e_hat, intervals, duals));
    }
    let aggs = aggregate_all(&families, cfg.k_policy)?;
    let arms = arms
        .into_iter()
        .zip(aggs)
        .map(|((arm, n, e_hat, intervals, duals), tight_kth)| ArmReport { arm, n, e_hat, intervals, tight_kth, duals })
        .collect();
    Ok(ReportBody::Marginal { arms })
}

/// Upper and lower conditional fits for every configured divergence.
#[derive(Clone, Debug)]
pub struct FittedFamily {
    pub fits: Vec<(ConditionalFit, ConditionalFit)>,
}

/// Fits both endpoints for every divergence; jobs run in parallel.
pub fn fit_all(data: &Dataset, cfg: &RunConfig, ccfg: &ConditionalConfig) -> Result<FittedFamily> {
    let jobs: Vec<(Divergence, Direction)> =
        cfg.divergences.iter().flat_map(|&d| [(d, Direction::Upper), (d, Direction::Lower)]).collect();
    let mut fitted = crate::par_map(&jobs, |&(div, dir)| fit_conditional(data, div, dir, ccfg, cfg.seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut fits = Vec::with_capacity(cfg.divergences.len());
    while let (Some(up), Some(lo)) = (fitted.next(), fitted.next()) {
        fits.push((up, lo));
    }
    Ok(FittedFamily { fits })
}

fn training_summaries(fam: &FittedFamily) -> Vec<TrainingSummary> {
    let mut out = Vec::new();
    for (up, lo) in &fam.fits {
        for fit in [up, lo] {
            for (fold, f) in fit.folds.iter().enumerate() {
                out.push(TrainingSummary {
                    divergence: fit.divergence,
                    direction: fit.direction,
                    fold,
                    epochs_run: f.history.val_loss.len().saturating_sub(1),
                    best_epoch: f.history.best_epoch,
                    stopped_early: f.history.stopped_early,
                    best_val_loss: f.history.best_loss(),
                });
            }
        }
    }
    out
}

/// Per-divergence intervals and the aggregate at each query covariate for arm `a`.
pub fn conditional_points(fam: &FittedFamily, a: u8, queries: &[Vec<f64>], policy: KPolicy) -> Result<Vec<PointReport>> {
    let mut points = Vec::with_capacity(queries.len());
    let mut families = Vec::with_capacity(queries.len());
    for (index, x) in queries.iter().enumerate() {
        let mut intervals = Vec::with_capacity(fam.fits.len());
        let mut diagnostics = Vec::with_capacity(fam.fits.len());
        let mut e_hat = f64::NAN;
        for (up_fit, lo_fit) in &fam.fits {
            let up = evaluate_bound(up_fit, a, x)?;
            let lo = evaluate_bound(lo_fit, a, x)?;
            // every divergence shares the fold split and hence the propensity fits
            e_hat = up.folds.iter().map(|f| f.e_hat).sum::<f64>() / up.folds.len() as f64;
            intervals.push(Interval { divergence: up_fit.divergence, lo: lo.value, up: up.value });
            diagnostics.push(EndpointDiagnostics { divergence: up_fit.divergence, lo_folds: lo.folds, up_folds: up.folds });
        }
        families.push(family(&intervals)?);
        points.push(PointReport {
            index,
            arm: a,
            x: x.clone(),
            e_hat,
            intervals,
            tight_kth: Aggregate { lo: f64::NAN, up: f64::NAN, k: 0, crossed: false },
            diagnostics,
        });
    }
    for (p, agg) in points.iter_mut().zip(aggregate_all(&families, policy)?) {
        p.tight_kth = agg;
    }
    Ok(points)
}

/// Flattens a report into `(arm, e_hat, label, lo, up)` rows sorted by `e_hat`.
pub fn plot_rows(report: &BoundsReport) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    let mut push = |arm: u8, e_hat: f64, intervals: &[Interval], agg: &Aggregate| {
        for i in intervals {
            rows.push(PlotRow { arm, e_hat, label: i.divergence.name().to_string(), lo: i.lo, up: i.up });
        }
        rows.push(PlotRow { arm, e_hat, label: AGGREGATE_LABEL.to_string(), lo: agg.lo, up: agg.up });
    };
    match &report.body {
        ReportBody::Marginal { arms } => arms.iter().for_each(|r| push(r.arm, r.e_hat, &r.intervals, &r.tight_kth)),
        ReportBody::Conditional { points, .. } => points.iter().for_each(|p| push(p.arm, p.e_hat, &p.intervals, &p.tight_kth)),
    }
    // stable sort keeps the divergence order within a point
    rows.sort_by(|a, b| a.arm.cmp(&b.arm).then(a.e_hat.total_cmp(&b.e_hat)));
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Probability levels of the binary SCM grid.
    pub levels: Vec<f64>,
    /// Multiplies every radius; values below one are a negative control.
    pub radius_scale: f64,
    pub dpi_tol: f64,
    /// Random discrete instances per divergence and radius.
    pub duality_instances: usize,
    pub duality_radii: Vec<f64>,
    pub duality_tol: f64,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            levels: vec![0.05, 0.275, 0.5, 0.725, 0.95],
            radius_scale: 1.0,
            dpi_tol: 1e-9,
            duality_instances: 40,
            duality_radii: vec![0.01, 0.1, 0.5],
            duality_tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub divergence: Divergence,
    pub dpi_checks: usize,
    pub dpi_violations: usize,
    /// Smallest `B_f(e) - D_f(P || Q)` over the grid.
    pub dpi_min_slack: f64,
    pub duality_checks: usize,
    pub duality_max_gap: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub version: u32,
    pub config: AuditConfig,
    pub rows: Vec<AuditRow>,
    pub pass: bool,
}

/// A random law with 2 to 10 atoms and values in `[-2, 2]`.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let m = rng.random_range(2..=10);
    let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    let probs = w.iter().map(|v| v / total).collect();
    let values = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    (probs, values)
}

/// Largest `|primal - dual|` over random discrete instances.
pub fn duality_gap(div: Divergence, instances: usize, radii: &[f64], seed: u64) -> Result<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for _ in 0..instances {
        let (probs, values) = random_instance(&mut rng);
        for &eta in radii {
            let primal = primal_on_values(&probs, &values, div, eta, Direction::Upper)?;
            let dual = dual_on_values(&probs, &values, div, eta)?.value;
            worst = worst.max((primal - dual).abs());
            checks += 1;
        }
    }
    Ok((checks, worst))
}

/// The radius audit over binary SCMs and the duality-gap audit, per divergence.
pub fn run_audit(cfg: &AuditConfig, divergences: &[Divergence]) -> Result<AuditReport> {
    if cfg.levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Invalid("grid levels must lie in (0, 1)".into()));
    }
    let scms = binary_scm_grid(&cfg.levels);
    let rows = crate::par_map(divergences, |&div| -> Result<AuditRow> {
        let dpi = dpi_audit(div, &scms, cfg.radius_scale, cfg.dpi_tol)?;
        let (checks, gap) = duality_gap(div, cfg.duality_instances, &cfg.duality_radii, cfg.seed)?;
        Ok(AuditRow {
            divergence: div,
            dpi_checks: dpi.checks,
            dpi_violations: dpi.violations,
            dpi_min_slack: dpi.min_slack,
            duality_checks: checks,
            duality_max_gap: gap,
            pass: dpi.violations == 0 && gap <= cfg.duality_tol,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let pass = rows.iter().all(|r| r.pass);
    Ok(AuditReport { version: REPORT_VERSION, config: cfg.clone(), rows, pass })
}

/// Compute budget and data-generating settings of the figure runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    pub d: usize,
    /// Seed of the structural weights.
    pub scm_seed: u64,
    /// Sample size of the single-run figure.
    pub n: usize,
    /// Sample sizes of the multi-run figures.
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub points: usize,
    pub mc_draws: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        FigureConfig { d: 5, scm_seed: 0, n: 5000, sizes: vec![1000, 4000, 16000], replications: 5, points: 200, mc_draws: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2aRow {
    pub point: usize,
    pub e_hat: f64,
    pub label: String,
    pub lo: f64,
    pub up: f64,
    pub truth: f64,
    pub truth_se: f64,
}

/// Bounds for the treated arm against simulated ground truth at grid points.
pub fn fig2a(scm: &SyntheticScm, fig: &FigureConfig, cfg: &RunConfig) -> Result<Vec<Fig2aRow>> {
    cfg.validate()?;
    let data = scm.generate(fig.n, cfg.seed).with_phi(cfg.phi.clone())?;
    let grid = scm.evaluation_grid(fig.points, cfg.seed.wrapping_add(1));
    let fits = fit_all(&data, cfg, &conditional_config(cfg))?;
    let points = conditional_points(&fits, 1, &grid, cfg.k_policy)?;
    let truth = scm_ground_truth(scm, 1, &grid, &cfg.phi, fig.mc_draws, cfg.seed.wrapping_add(2))?;
    let mut rows = Vec::new();
    for (p, t) in points.iter().zip(&truth) {
        let mut push = |label: &str, lo: f64, up: f64| {
            rows.push(Fig2aRow { point: p.index, e_hat: p.e_hat, label: label.into(), lo, up, truth: t.mean, truth_se: t.std_error })
        };
        for i in &p.intervals {
            push(i.divergence.name(), i.lo, i.up);
        }
        push(AGGREGATE_LABEL, p.tight_kth.lo, p.tight_kth.up);
    }
    rows.sort_by(|a, b| a.e_hat.total_cmp(&b.e_hat).then(a.point.cmp(&b.point)));
    Ok(rows)
}

/// `E[phi(Y) | do(A = a), X = x]` when it has a quadrature form.
pub fn exact_truth(scm: &SyntheticScm, phi: &Phi, a: u8, x: &[f64]) -> Option<f64> {
    match phi {
        Phi::Identity => Some(scm.interventional_mean(a, x)),
        Phi::Indicator { threshold } => Some(scm.interventional_cdf(a, x, *threshold)),
        Phi::Table { .. } => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2bReplicate {
    pub n: usize,
    pub replicate: usize,
    pub estimator: String,
    pub coverage: f64,
    pub width: f64,
    pub pwidth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2bRow {
    pub n: usize,
    pub estimator: String,
    pub coverage: f64,
    pub width: f64,
    pub pwidth: f64,
}

fn replicate_seed(base: u64, n: usize, r: usize) -> u64 {
    base ^ (n as u64).wrapping_mul(0x2545_f491_4f6c_dd1d) ^ (r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn treated_truth(scm: &SyntheticScm, phi: &Phi, grid: &[Vec<f64>], mc_draws: usize, seed: u64) -> Result<Vec<f64>> {
    match grid.iter().map(|x| exact_truth(scm, phi, 1, x)).collect::<Option<Vec<f64>>>() {
        Some(t) => Ok(t),
        None => Ok(scm_ground_truth(scm, 1, grid, phi, mc_draws, seed)?.into_iter().map(|g| g.mean).collect()),
    }
}

/// Aggregate intervals of one replicate with propensity noise, debiased and plain.
pub fn fig2b_replicates(scm: &SyntheticScm, fig: &FigureConfig, cfg: &RunConfig) -> Result<Vec<Fig2bReplicate>> {
    cfg.validate()?;
    let grid = scm.evaluation_grid(fig.points, cfg.seed.wrapping_add(1));
    let truth = treated_truth(scm, &cfg.phi, &grid, fig.mc_draws, cfg.seed.wrapping_add(2))?;
    let mut out = Vec::new();
    for &n in &fig.sizes {
        for r in 0..fig.replications {
            let seed = replicate_seed(cfg.seed, n, r);
            let data = scm.generate(n, seed).with_phi(cfg.phi.clone())?;
            let run = RunConfig { seed, ..cfg.clone() };
            for (estimator, debias) in [("debiased", true), ("plain", false)] {
                let ccfg = ConditionalConfig {
                    debias,
                    source: PropensitySource::FitWithNoise { scale: cfg.noise.second_param, seed: seed ^ 0x5eed },
                    ..conditional_config(&run)
                };
                let fits = fit_all(&data, &run, &ccfg)?;
                let points = conditional_points(&fits, 1, &grid, cfg.k_policy)?;
                let intervals: Vec<(f64, f64)> = points.iter().map(|p| (p.tight_kth.lo, p.tight_kth.up)).collect();
                let rep = evaluate_run(&truth, &intervals, PWIDTH_A, PWIDTH_ALPHA)?;
                out.push(Fig2bReplicate {
                    n,
                    replicate: r,
                    estimator: estimator.into(),
                    coverage: rep.coverage,
                    width: rep.width,
                    pwidth: rep.penalized_width,
                });
            }
        }
    }
    Ok(out)
}

/// Averages replicates into one row per `(n, estimator)`.
pub fn fig2b_summary(reps: &[Fig2bReplicate]) -> Vec<Fig2bRow> {
    let mut keys: Vec<(usize, String)> = reps.iter().map(|r| (r.n, r.estimator.clone())).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(n, estimator)| {
            let sel: Vec<&Fig2bReplicate> = reps.iter().filter(|r| r.n == n && r.estimator == estimator).collect();
            let m = sel.len() as f64;
            Fig2bRow {
                n,
                coverage: sel.iter().map(|r| r.coverage).sum::<f64>() / m,
                width: sel.iter().map(|r| r.width).sum::<f64>() / m,
                pwidth: sel.iter().map(|r| r.pwidth).sum::<f64>() / m,
                estimator,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2cRow {
    pub n: usize,
    pub series: String,
    pub error: f64,
    /// Standard error of `error` across replicates.
    pub error_se: f64,
}

/// Population bounds at `x` for an indicator functional: the observational law
/// of `phi(Y)` is Bernoulli, so the dual is solved exactly on two atoms.
pub fn population_bounds(scm: &SyntheticScm, div: Divergence, threshold: f64, a: u8, x: &[f64]) -> Result<(f64, f64)> {
    let p = scm.observational_cdf(a, x, threshold).clamp(0.0, 1.0);
    let e1 = scm.oracle_propensity(x);
    let e = if a == 1 { e1 } else { 1.0 - e1 };
    let eta = div.radius(e)?;
    let probs = [p, 1.0 - p];
    let values = [1.0, 0.0];
    let up = dual_bound(&probs, &values, div, eta, Direction::Upper)?.value;
    let lo = dual_bound(&probs, &values, div, eta, Direction::Lower)?.value;
    Ok((lo, up))
}

/// Root-mean-square error of the estimated endpoints against the population
/// bounds, for noisy-debiased, noisy-plain and oracle-propensity estimators.
///
/// Needs an indicator functional so that the population bounds are finite.
pub fn fig2c(scm: &SyntheticScm, fig: &FigureConfig, cfg: &RunConfig) -> Result<Vec<Fig2cRow>> {
    cfg.validate()?;
    let Phi::Indicator { threshold } = cfg.phi else {
        return Err(Error::Invalid("the convergence figure needs an indicator functional with finite population bounds".into()));
    };
    let grid = scm.evaluation_grid(fig.points, cfg.seed.wrapping_add(1));
    let targets: Vec<Vec<(f64, f64)>> = cfg
        .divergences
        .iter()
        .map(|&div| grid.iter().map(|x| population_bounds(scm, div, threshold, 1, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let series: [(&str, bool, bool); 3] = [("debiased", true, true), ("plain", false, true), ("oracle", true, false)];
    let mut rows = Vec::new();
    for &n in &fig.sizes {
        let mut errors: Vec<Vec<f64>> = vec![Vec::new(); series.len()];
        for r in 0..fig.replications {
            let seed = replicate_seed(cfg.seed, n, r);
            let data = scm.generate(n, seed).with_phi(cfg.phi.clone())?;
            let run = RunConfig { seed, ..cfg.clone() };
            for (s, &(_, debias, noisy)) in series.iter().enumerate() {
                let source = if noisy {
                    PropensitySource::FitWithNoise { scale: cfg.noise.second_param, seed: seed ^ 0x5eed }
                } else {
                    PropensitySource::Fixed(PropensityEstimate::oracle(scm.clone(), cfg.propensity.clip))
                };
                let ccfg = ConditionalConfig { debias, source, ..conditional_config(&run) };
                let fits = fit_all(&data, &run, &ccfg)?;
                let points = conditional_points(&fits, 1, &grid, cfg.k_policy)?;
                let mut sq = 0.0;
                let mut count = 0.0;
                for (p, _) in points.iter().zip(&grid) {
                    for (j, iv) in p.intervals.iter().enumerate() {
                        let (lo, up) = targets[j][p.index];
                        sq += (iv.lo - lo).powi(2) + (iv.up - up).powi(2);
                        count += 2.0;
                    }
                }
                errors[s].push((sq / count).sqrt());
            }
        }
        for (s, &(name, _, _)) in series.iter().enumerate() {
            let m = errors[s].len() as f64;
            let mean = errors[s].iter().sum::<f64>() / m;
            let var = if m > 1.0 { errors[s].iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
            rows.push(Fig2cRow { n, series: name.into(), error: mean, error_se: (var / m).sqrt() });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_data() -> Dataset {
        SyntheticScm::default().generate(400, 3)
    }

    #[test]
    fn marginal_report_has_one_interval_per_arm_and_divergence() {
        let cfg = RunConfig::default();
        let rep = run_bounds(&small_data(), &cfg).unwrap();
        let ReportBody::Marginal { arms } = &rep.body else { panic!("marginal body expected") };
        assert_eq!(arms.len(), 2);
        for arm in arms {
            assert_eq!(arm.intervals.len(), 5);
            assert!(arm.intervals.iter().all(|i| i.lo <= i.up));
            assert!(!arm.tight_kth.crossed);
        }
        assert_eq!(plot_rows(&rep).len(), 12);
        assert_eq!(rep.config_hash, cfg.hash());
    }

    #[test]
    fn plot_rows_are_sorted_by_propensity() {
        let rep = run_bounds(&small_data(), &RunConfig::default()).unwrap();
        let rows = plot_rows(&rep);
        assert!(rows.windows(2).all(|w| (w[0].arm, w[0].e_hat) <= (w[1].arm, w[1].e_hat)));
    }

    #[test]
    fn audit_passes_and_tampering_fails() {
        let cfg = AuditConfig { levels: vec![0.1, 0.5, 0.9], duality_instances: 3, ..AuditConfig::default() };
        let rep = run_audit(&cfg, &Divergence::ALL).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.rows.iter().all(|r| r.dpi_min_slack >= 0.0));
        let tampered = run_audit(&AuditConfig { radius_scale: 0.5, ..cfg }, &Divergence::ALL).unwrap();
        assert!(!tampered.pass);
    }

    #[test]
    fn population_bounds_bracket_the_observational_probability() {
        let scm = SyntheticScm::default();
        let x = vec![0.3, -0.2, 1.0, 0.0, 0.5];
        let p = scm.observational_cdf(1, &x, 1.0);
        for div in Divergence::ALL {
            let (lo, up) = population_bounds(&scm, div, 1.0, 1, &x).unwrap();
            assert!(lo <= p + 1e-9 && p <= up + 1e-9, "{div}: {lo} {p} {up}");
            assert!((0.0..=1.0 + 1e-9).contains(&up) && lo >= -1e-9);
        }
    }

    #[test]
    fn summary_averages_replicates() {
        let rep = |r, e: &str, w| Fig2bReplicate { n: 10, replicate: r, estimator: e.into(), coverage: 1.0, width: w, pwidth: w };
        let rows = fig2b_summary(&[rep(0, "plain", 1.0), rep(1, "plain", 3.0), rep(0, "debiased", 2.0)]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].estimator, "debiased");
        assert_eq!(rows[1].width, 2.0);
    }
}
