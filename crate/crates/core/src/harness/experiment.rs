use rayon::prelude::*;
use serde::Serialize;

use super::config::{derive_run_seed, ExperimentConfig};
use crate::analysis::{self, BoundsReport, RateFit};
use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::model::{self, NoiseModel, SwitchedSystem};

/// Experiments fail when more than this fraction of runs diverges.
const MAX_DIVERGED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrant {
    /// Margin below one and mean-square stable.
    BothStable,
    /// Margin below one only: stable in the time-average sense, not MSS.
    AverageOnly,
    /// Mean-square stable, but the margin is at least one.
    MssOnly,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub system_hash: String,
    pub assumption2_margin: f64,
    pub mss_radius: f64,
    pub assumption2_holds: bool,
    pub mss_holds: bool,
    pub quadrant: Quadrant,
    /// `(quantile, value)` of the per-run average energy, filled in by
    /// Monte Carlo runs.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub average_energy: Vec<(f64, f64)>,
}

pub fn stability_report(config: &ExperimentConfig) -> Result<StabilityReport> {
    let (sys, _) = config.build()?;
    system_stability(&sys)
}

pub(crate) fn system_stability(sys: &SwitchedSystem) -> Result<StabilityReport> {
    let margin = model::assumption2_margin(sys)?;
    let radius = model::mss_radius(sys)?;
    let (a2, mss) = (margin < 1.0, radius < 1.0);
    let quadrant = match (a2, mss) {
        (true, true) => Quadrant::BothStable,
        (true, false) => Quadrant::AverageOnly,
        (false, true) => Quadrant::MssOnly,
        (false, false) => Quadrant::Neither,
    };
    Ok(StabilityReport {
        system_hash: sys.hash(),
        assumption2_margin: margin,
        mss_radius: radius,
        assumption2_holds: a2,
        mss_holds: mss,
        quadrant,
        average_energy: Vec::new(),
    })
}

/// Everything recorded for one Monte Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// Step at which the state overflowed, if it did.
    pub diverged_at: Option<usize>,
    /// One report per checkpoint (empty when diverged).
    pub snapshots: Vec<BoundsReport>,
    pub average_energy: f64,
}

/// One row of the aggregated curves: a quantile across runs of each metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub t: usize,
    /// 1-based.
    pub mode: usize,
    pub quantile: f64,
    pub error_inf: f64,
    pub dd_bound: f64,
    pub di_visits: f64,
    pub di_pmf: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub visits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRateFit {
    /// 1-based.
    pub mode: usize,
    pub fit: Option<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub runs: usize,
    pub diverged: usize,
    pub diverged_runs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub run_seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub checkpoints: Vec<usize>,
    pub quantiles: Vec<f64>,
    /// Ordered by checkpoint, then mode, then quantile.
    pub curves: Vec<CurveRow>,
    pub rate_fits: Vec<ModeRateFit>,
    pub stability: StabilityReport,
    pub divergence: Divergence,
    pub provenance: Provenance,
    pub runs: Vec<RunRecord>,
}

impl ExperimentResult {
    /// Curve rows of one mode (1-based) at one quantile, in checkpoint order.
    pub fn curve(&self, mode: usize, quantile: f64) -> Vec<&CurveRow> {
        self.curves
            .iter()
            .filter(|r| r.mode == mode && r.quantile == quantile)
            .collect()
    }
}

fn run_one(
    sys: &SwitchedSystem,
    noise: &NoiseModel,
    config: &ExperimentConfig,
    checkpoints: &[usize],
    run: usize,
) -> Result<RunRecord> {
    let seed = derive_run_seed(config.master_seed, run);
    let traj = match model::simulate(sys, noise, config.horizon, seed) {
        Ok(t) => t,
        Err(Error::Instability { step, .. }) => {
            return Ok(RunRecord {
                run,
                seed,
                diverged_at: Some(step),
                snapshots: Vec::new(),
                average_energy: f64::NAN,
            })
        }
        Err(e) => return Err(e),
    };
    let mut state = match config.options.ridge {
        Some(eps) => EstimatorState::with_ridge(sys.n(), sys.k(), eps)?,
        None => EstimatorState::new(sys.n(), sys.k()),
    };
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    for t in 0..traj.horizon() {
        state.recursive_step(&traj.states[t], traj.switches[t], &traj.states[t + 1])?;
        if next.peek() == Some(&&state.t) {
            next.next();
            snapshots.push(analysis::bounds_report(&state, sys)?);
        }
    }
    Ok(RunRecord {
        run,
        seed,
        diverged_at: None,
        snapshots,
        average_energy: analysis::average_energy(&traj),
    })
}

/// Runs every Monte Carlo replication and aggregates them.
///
/// Run `r` uses seed [`derive_run_seed`]`(master_seed, r)` and its own
/// estimator, so runs are independent tasks. They are spread over `workers`
/// threads (all cores when `None`) and gathered in run order, which makes
/// the result independent of the worker count.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    config.validate()?;
    let (sys, noise) = config.build()?;
    let checkpoints = config.resolved_checkpoints();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|run| run_one(&sys, &noise, config, &checkpoints, run))
            .collect::<Result<Vec<_>>>()
    })?;

    let diverged_runs: Vec<usize> = records
        .iter()
        .filter(|r| r.diverged_at.is_some())
        .map(|r| r.run)
        .collect();
    let mut stability = system_stability(&sys)?;
    if diverged_runs.len() as f64 > MAX_DIVERGED_FRACTION * config.runs as f64 {
        return Err(Error::UnstableExperiment {
            diverged: diverged_runs.len(),
            runs: config.runs,
            margin: stability.assumption2_margin,
            mss_radius: stability.mss_radius,
        });
    }
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.diverged_at.is_none()).collect();
    let quantiles = config.options.quantiles.clone();

    let mut curves = Vec::new();
    for (c, &t) in checkpoints.iter().enumerate() {
        for mode in 0..sys.k() {
            let metric = |f: &dyn Fn(&analysis::ModeBounds) -> f64| -> Vec<f64> {
                ok.iter().map(|r| f(&r.snapshots[c].per_mode[mode])).collect()
            };
            let err = metric(&|m| m.error_inf);
            let dd = metric(&|m| m.dd_bound.unwrap_or(f64::NAN));
            let dv = metric(&|m| m.di_bound_visits.unwrap_or(f64::NAN));
            let dp = metric(&|m| m.di_bound_pmf);
            let lo = metric(&|m| m.lambda_min);
            let hi = metric(&|m| m.lambda_max);
            let vis = metric(&|m| m.visits as f64);
            for &q in &quantiles {
                curves.push(CurveRow {
                    t,
                    mode: mode + 1,
                    quantile: q,
                    error_inf: analysis::quantile(&err, q),
                    dd_bound: analysis::quantile(&dd, q),
                    di_visits: analysis::quantile(&dv, q),
                    di_pmf: analysis::quantile(&dp, q),
                    lambda_min: analysis::quantile(&lo, q),
                    lambda_max: analysis::quantile(&hi, q),
                    visits: analysis::quantile(&vis, q),
                });
            }
        }
    }

    let rate_fits = (0..sys.k())
        .map(|mode| {
            let mut hs = Vec::new();
            let mut meds = Vec::new();
            for (c, &t) in checkpoints.iter().enumerate() {
                let errs: Vec<f64> = ok.iter().map(|r| r.snapshots[c].per_mode[mode].error_inf).collect();
                let med = analysis::median(&errs);
                if t >= 3 && med > 0.0 {
                    hs.push(t as f64);
                    meds.push(med);
                }
            }
            match analysis::rate_exponent_fit(&hs, &meds) {
                Ok(fit) => ModeRateFit {
                    mode: mode + 1,
                    fit: Some(fit),
                    note: None,
                },
                Err(e) => ModeRateFit {
                    mode: mode + 1,
                    fit: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();

    let energies: Vec<f64> = ok.iter().map(|r| r.average_energy).collect();
    stability.average_energy = quantiles
        .iter()
        .map(|&q| (q, analysis::quantile(&energies, q)))
        .collect();

    Ok(ExperimentResult {
        checkpoints,
        quantiles,
        curves,
        rate_fits,
        stability,
        divergence: Divergence {
            runs: config.runs,
            diverged: diverged_runs.len(),
            diverged_runs,
        },
        provenance: Provenance {
            config_hash: config.hash(),
            master_seed: config.master_seed,
            run_seeds: records.iter().map(|r| r.seed).collect(),
        },
        runs: records,
    })
}
