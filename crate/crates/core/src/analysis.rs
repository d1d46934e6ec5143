//! Error metrics, convergence-rate bounds, rate fits and trajectory
//! diagnostics.
//!
//! The bounds carry unknown multiplicative constants; everything here reports
//! the raw expressions with constant one.

use std::f64::consts::E;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::matops::{self, Matrix};
use crate::model::{SwitchedSystem, Trajectory};

/// Element-wise max-abs distance `‖estimate − truth‖_∞`.
pub fn error_inf(estimate: &Matrix, truth: &Matrix) -> Result<f64> {
    Ok(matops::max_abs_entry(&estimate.sub(truth)?))
}

/// `√(log λ_max / λ_min)` with the logarithm floored at `log e = 1`.
pub fn data_dependent_bound(lambda_min: f64, lambda_max: f64) -> Result<f64> {
    if !(lambda_min > 0.0) {
        return Err(Error::NotIdentifiable(format!(
            "covariance is singular (lambda_min = {lambda_min})"
        )));
    }
    if !(lambda_max >= lambda_min) || !lambda_max.is_finite() {
        return Err(Error::invalid(format!(
            "lambda_max {lambda_max} below lambda_min {lambda_min}"
        )));
    }
    Ok((lambda_max.max(E).ln() / lambda_min).sqrt())
}

/// `(√(log T / visits), √(log T / (p_i T)))`.
pub fn data_independent_bounds(horizon: f64, visits: f64, p_i: f64) -> Result<(f64, f64)> {
    if !(horizon >= 2.0) {
        return Err(Error::invalid(format!("horizon must be at least 2, got {horizon}")));
    }
    if !(p_i > 0.0 && p_i <= 1.0) {
        return Err(Error::invalid(format!("probability must be in (0, 1], got {p_i}")));
    }
    if !(visits > 0.0) {
        return Err(Error::NotIdentifiable("mode not visited yet".into()));
    }
    let log_t = horizon.ln();
    Ok(((log_t / visits).sqrt(), (log_t / (p_i * horizon)).sqrt()))
}

/// Time-averaged energy `(1/T) Σ_{τ<T} ‖x_τ‖²`.
pub fn average_energy(traj: &Trajectory) -> f64 {
    let t = traj.horizon();
    if t == 0 {
        return 0.0;
    }
    traj.states[..t].iter().map(|x| norm_sq(x)).sum::<f64>() / t as f64
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Empirical noise covariance `(1/T) Σ_{t<T} w_t w_tᵀ` over the first
/// `upto` stored noises.
pub fn empirical_noise_covariance(traj: &Trajectory, upto: usize) -> Result<Matrix> {
    if upto == 0 || upto > traj.noises.len() {
        return Err(Error::invalid(format!(
            "need 1..={} noises, asked for {upto}",
            traj.noises.len()
        )));
    }
    let n = traj.dim();
    let mut acc = Matrix::zeros(n, n);
    for w in &traj.noises[..upto] {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory has no recorded noise"));
        }
        acc.add_outer(1.0, w, w);
    }
    Ok(acc.scale(1.0 / upto as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeBounds {
    pub error_inf: f64,
    /// `None` while `X_i` is singular.
    pub dd_bound: Option<f64>,
    /// `None` before the first visit.
    pub di_bound_visits: Option<f64>,
    pub di_bound_pmf: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub visits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub horizon: usize,
    pub per_mode: Vec<ModeBounds>,
    /// `‖θ̂ − θ‖_∞`, the max of the per-mode errors.
    pub global_error: f64,
    pub p_star: f64,
    /// `√(log T / (p* T))`.
    pub global_bound_pmf: f64,
}

/// Errors and bounds for the current estimator state against the true system.
pub fn bounds_report(state: &EstimatorState, sys: &SwitchedSystem) -> Result<BoundsReport> {
    if state.k() != sys.k() || state.n() != sys.n() {
        return Err(Error::invalid("estimator and system dimensions differ"));
    }
    let horizon = state.t;
    let log_t = (horizon.max(2) as f64).ln();
    let mut per_mode = Vec::with_capacity(sys.k());
    for (i, m) in state.per_mode.iter().enumerate() {
        let (lambda_min, lambda_max, visits) = state.covariance_extremes(i)?;
        let p = sys.switch_pmf()[i];
        let dd_bound = if m.is_identified() {
            data_dependent_bound(lambda_min, lambda_max).ok()
        } else {
            None
        };
        let di_bound_visits = (visits > 0).then(|| (log_t / visits as f64).sqrt());
        per_mode.push(ModeBounds {
            error_inf: error_inf(&m.a_hat, sys.mode(i))?,
            dd_bound,
            di_bound_visits,
            di_bound_pmf: (log_t / (p * horizon.max(1) as f64)).sqrt(),
            lambda_min,
            lambda_max,
            visits,
        });
    }
    let p_star = sys.switch_pmf().iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(BoundsReport {
        horizon,
        global_error: per_mode.iter().map(|m| m.error_inf).fold(0.0, f64::max),
        per_mode,
        p_star,
        global_bound_pmf: (log_t / (p_star * horizon.max(1) as f64)).sqrt(),
    })
}

/// Log-log regression of errors against the reference rate `√(log T / T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub horizons: Vec<f64>,
    pub median_errors: Vec<f64>,
    /// Slope; 1 means the errors decay exactly like the reference rate.
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn reference_rate(horizon: f64) -> f64 {
    (horizon.ln() / horizon).sqrt()
}

pub fn rate_exponent_fit(horizons: &[f64], median_errors: &[f64]) -> Result<RateFit> {
    if horizons.len() != median_errors.len() {
        return Err(Error::invalid("horizons and errors differ in length"));
    }
    if horizons.len() < 4 {
        return Err(Error::invalid("rate fit needs at least 4 horizons"));
    }
    if horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("horizons must be strictly increasing"));
    }
    if !(horizons[0] >= 3.0) {
        // log T / T is only monotone past e.
        return Err(Error::invalid("horizons must be at least 3"));
    }
    if let Some(e) = median_errors.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::invalid(format!("errors must be positive, got {e}")));
    }
    let xs: Vec<f64> = horizons.iter().map(|&t| reference_rate(t).ln()).collect();
    let ys: Vec<f64> = median_errors.iter().map(|e| e.ln()).collect();
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        horizons: horizons.to_vec(),
        median_errors: median_errors.to_vec(),
        exponent,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixDiagnostics {
    pub checkpoints: Vec<usize>,
    /// `P_T = Σ_{τ=1}^{T} ‖x_τ‖² / τ²`; bounded when the series converges.
    pub partial_sums: Vec<f64>,
    /// `R_T = ‖Σ_{τ=0}^{T} (A_{s_τ} x_τ w_τᵀ + w_τ x_τᵀ A_{s_τ}ᵀ)‖₂ / T`; tends
    /// to zero when the cross term is `o(T)`.
    pub cross_ratios: Vec<f64>,
}

/// Powers of two from 2⁷ up to `limit`.
pub fn dyadic_checkpoints(limit: usize) -> Vec<usize> {
    (7..usize::BITS)
        .map(|e| 1usize << e)
        .take_while(|&t| t <= limit)
        .collect()
}

/// Series and cross-term diagnostics at the given checkpoints, which must be
/// strictly increasing within `1..horizon` (the cross term at `T` uses `w_T`).
pub fn appendix_diagnostics(
    traj: &Trajectory,
    sys: &SwitchedSystem,
    checkpoints: &[usize],
) -> Result<AppendixDiagnostics> {
    traj.validate(sys.k())?;
    let horizon = traj.horizon();
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("checkpoints must be strictly increasing"));
    }
    if let Some(&c) = checkpoints.iter().find(|&&c| c == 0 || c >= horizon) {
        return Err(Error::invalid(format!(
            "checkpoint {c} outside 1..{horizon}"
        )));
    }
    let n = traj.dim();
    let mut partial = 0.0;
    let mut cross = Matrix::zeros(n, n);
    let mut partial_sums = Vec::with_capacity(checkpoints.len());
    let mut cross_ratios = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    for tau in 0..=checkpoints.last().copied().unwrap_or(0) {
        if next.peek().is_none() {
            break;
        }
        if tau >= 1 {
            partial += norm_sq(&traj.states[tau]) / (tau as f64 * tau as f64);
        }
        let w = &traj.noises[tau];
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory has no recorded noise"));
        }
        let ax = sys.mode(traj.switches[tau]).mul_vec(&traj.states[tau]);
        cross.add_outer(1.0, &ax, w);
        cross.add_outer(1.0, w, &ax);
        if next.peek() == Some(&&tau) {
            next.next();
            partial_sums.push(partial);
            cross_ratios.push(matops::spectral_norm(&cross)? / tau as f64);
        }
    }
    Ok(AppendixDiagnostics {
        checkpoints: checkpoints.to_vec(),
        partial_sums,
        cross_ratios,
    })
}

/// Linear-interpolation quantile of unsorted data (NaN entries ignored).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{batch_fit, EstimatorState};
    use crate::model::{replay, simulate, NoiseModel};

    fn scalar_sys(a: f64) -> SwitchedSystem {
        SwitchedSystem::new(vec![Matrix::diag(&[a])], vec![1.0], None).unwrap()
    }

    #[test]
    fn error_inf_examples() {
        let id = Matrix::identity(2);
        assert_eq!(error_inf(&id, &id).unwrap(), 0.0);
        let est = Matrix::diag(&[0.9, 1.2]);
        assert!((error_inf(&id, &est).unwrap() - 0.2).abs() < 1e-15);
        assert!(error_inf(&id, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn scalar_fit_error() {
        let traj = replay(&scalar_sys(0.5), vec![0; 3], vec![vec![1.0], vec![-1.0], vec![2.0]], 0).unwrap();
        let state = batch_fit(&traj, 1).unwrap();
        let err = error_inf(&state.per_mode[0].a_hat, &Matrix::diag(&[0.5])).unwrap();
        assert!((err - 1.6).abs() < 1e-14);
    }

    #[test]
    fn data_dependent_examples() {
        assert!((data_dependent_bound(E, E).unwrap() - (1.0 / E).sqrt()).abs() < 1e-15);
        assert!((data_dependent_bound(10.0, 10.0).unwrap() - 0.4799).abs() < 1e-4);
        assert!(matches!(data_dependent_bound(0.0, 1.0), Err(Error::NotIdentifiable(_))));
        assert!(matches!(data_dependent_bound(-1.0, 1.0), Err(Error::NotIdentifiable(_))));
        assert!(data_dependent_bound(2.0, 1.0).is_err());
        // log floor: below e the numerator is 1
        assert_eq!(data_dependent_bound(0.25, 0.5).unwrap(), 2.0);
    }

    #[test]
    fn data_independent_examples() {
        let e2 = E * E;
        let (a, b) = data_independent_bounds(e2, e2, 1.0).unwrap();
        let want = (2.0 / e2).sqrt();
        assert!((a - want).abs() < 1e-15 && (b - want).abs() < 1e-15);
        let (a, b) = data_independent_bounds(100.0, 25.0, 0.25).unwrap();
        assert!((a - 0.4292).abs() < 1e-4 && (b - 0.4292).abs() < 1e-4);
        let (a, _) = data_independent_bounds(100.0, 75.0, 0.75).unwrap();
        assert!((a - 0.2478).abs() < 1e-4);
        assert!(matches!(data_independent_bounds(100.0, 0.0, 0.5), Err(Error::NotIdentifiable(_))));
        assert!(data_independent_bounds(1.0, 1.0, 0.5).is_err());
        assert!(data_independent_bounds(10.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn both_data_independent_forms_agree_at_expected_visits() {
        for &(t, p) in &[(100.0, 0.25), (4096.0, 0.75), (30000.0, 0.1)] {
            let (a, b) = data_independent_bounds(t, p * t, p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn average_energy_examples() {
        let zero = replay(&scalar_sys(0.5), vec![0; 4], vec![vec![0.0]; 4], 0).unwrap();
        assert_eq!(average_energy(&zero), 0.0);
        let traj = replay(&scalar_sys(0.5), vec![0; 3], vec![vec![1.0], vec![-1.0], vec![2.0]], 0).unwrap();
        assert!((average_energy(&traj) - 1.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rate_fit_on_synthetic_curves() {
        let hs: Vec<f64> = (7..=15).map(|e| 2f64.powi(e)).collect();
        let exact: Vec<f64> = hs.iter().map(|&t| 0.7 * reference_rate(t)).collect();
        let fit = rate_exponent_fit(&hs, &exact).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);

        let fast: Vec<f64> = hs.iter().map(|&t| 3.0 / t).collect();
        let fit = rate_exponent_fit(&hs, &fast).unwrap();
        assert!(fit.exponent > 1.0);
    }

    #[test]
    fn rate_fit_validation() {
        let hs = [8.0, 16.0, 32.0, 64.0];
        assert!(rate_exponent_fit(&hs[..3], &[1.0, 1.0, 1.0]).is_err());
        assert!(rate_exponent_fit(&hs, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(rate_exponent_fit(&[8.0, 8.0, 32.0, 64.0], &[1.0; 4]).is_err());
        assert!(rate_exponent_fit(&[1.0, 8.0, 32.0, 64.0], &[1.0; 4]).is_err());
    }

    #[test]
    fn appendix_zero_noise() {
        let traj = replay(&scalar_sys(0.5), vec![0; 8], vec![vec![0.0]; 8], 0).unwrap();
        let d = appendix_diagnostics(&traj, &scalar_sys(0.5), &[1, 4, 7]).unwrap();
        assert_eq!(d.partial_sums, vec![0.0; 3]);
        assert_eq!(d.cross_ratios, vec![0.0; 3]);
    }

    #[test]
    fn appendix_scalar_cross_term() {
        let sys = scalar_sys(0.5);
        let traj = replay(&sys, vec![0; 3], vec![vec![1.0], vec![-1.0], vec![2.0]], 0).unwrap();
        let d = appendix_diagnostics(&traj, &sys, &[2]).unwrap();
        // 2·0.5·(1·(−1) + (−0.5)·2) = −2 over T = 2
        assert_eq!(d.cross_ratios, vec![1.0]);
        // 1/1 + 0.25/4
        assert_eq!(d.partial_sums, vec![1.0625]);
        assert!(appendix_diagnostics(&traj, &sys, &[3]).is_err());
        assert!(appendix_diagnostics(&traj, &sys, &[2, 1]).is_err());
    }

    #[test]
    fn bounds_report_global_error_is_mode_max() {
        let sys = SwitchedSystem::new(
            vec![Matrix::diag(&[1.5, 0.2]), Matrix::from_rows(&[vec![0.01, 0.1], vec![0.1, 0.1]]).unwrap()],
            vec![0.75, 0.25],
            None,
        )
        .unwrap();
        let traj = simulate(&sys, &NoiseModel::standard(2), 2000, 4).unwrap();
        let state = batch_fit(&traj, 2).unwrap();
        let report = bounds_report(&state, &sys).unwrap();
        let theta_err = error_inf(&state.theta_hat(), &sys.theta()).unwrap();
        assert_eq!(report.global_error, theta_err);
        assert_eq!(report.p_star, 0.25);
        for m in &report.per_mode {
            assert!(m.dd_bound.unwrap().is_finite());
            assert!(m.di_bound_visits.unwrap() > 0.0 && m.di_bound_pmf > 0.0);
        }
        let empty = EstimatorState::new(2, 2);
        let r = bounds_report(&empty, &sys).unwrap();
        assert!(r.per_mode.iter().all(|m| m.dd_bound.is_none() && m.di_bound_visits.is_none()));
    }

    #[test]
    fn noise_covariance_estimate() {
        let sys = scalar_sys(0.5);
        let traj = replay(&sys, vec![0; 3], vec![vec![1.0], vec![-1.0], vec![2.0]], 0).unwrap();
        let c = empirical_noise_covariance(&traj, 3).unwrap();
        assert_eq!(c[(0, 0)], 2.0);
        assert!(empirical_noise_covariance(&traj, 4).is_err());
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert!(quantile(&[], 0.5).is_nan());
        assert_eq!(median(&[f64::NAN, 5.0]), 5.0);
    }

    #[test]
    fn dyadic_grid() {
        assert_eq!(dyadic_checkpoints(100), Vec::<usize>::new());
        assert_eq!(dyadic_checkpoints(512), vec![128, 256, 512]);
        assert_eq!(dyadic_checkpoints(30000).last(), Some(&16384));
    }
}
