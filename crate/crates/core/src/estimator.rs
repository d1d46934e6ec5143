//! Switched least squares.
//!
//! Each mode `i` is fitted on its own from the pairs `(x_t, x_{t+1})` with
//! `s_t = i`:
//!
//! ```text
//!     Â_i = (Σ x_{t+1} x_tᵀ) X_i⁻¹,    X_i = Σ x_t x_tᵀ
//! ```
//!
//! [`batch_fit`] solves these normal equations directly. [`EstimatorState::recursive_step`]
//! consumes one transition at a time with a rank-one correction
//!
//! ```text
//!     Â ← Â + (x_{t+1} − Â x_t)(P x_t)ᵀ / (1 + x_tᵀ P x_t),    P = X⁻¹
//! ```
//!
//! and keeps `P` current with a Sherman-Morrison update. Estimates act on the
//! left, so the one-step prediction is `Â_i x_t`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matops::{self, Matrix};
use crate::model::{hstack, Trajectory};

/// A mode leaves warm-up once `λ_min(X) > WARMUP_REL_TOL · λ_max(X)`.
pub const WARMUP_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeStatus {
    /// Mode never visited.
    InsufficientData,
    /// Visited, but `X` is still singular (recursive fit only).
    WarmUp,
    /// `X` invertible and `Â` is the least squares solution.
    Identified,
    /// Batch fit on singular `X`: minimum-norm solution via pseudo-inverse.
    RankDeficient,
}

#[derive(Debug, Clone)]
pub struct ModeEstimate {
    pub a_hat: Matrix,
    /// Unnormalized covariance `Σ x_t x_tᵀ` over the mode's visits.
    pub x_cov: Matrix,
    /// Inverse of `x_cov` (of `x_cov + εI` under ridge), once available.
    pub x_cov_inv: Option<Matrix>,
    pub visits: usize,
    pub status: ModeStatus,
    /// Number of transitions processed when recursive updates started.
    pub warmup_step: Option<usize>,
    // Σ x_{t+1} x_tᵀ, only maintained while the inverse is unavailable.
    cross: Matrix,
}

impl ModeEstimate {
    fn empty(n: usize) -> Self {
        ModeEstimate {
            a_hat: Matrix::zeros(n, n),
            x_cov: Matrix::zeros(n, n),
            x_cov_inv: None,
            visits: 0,
            status: ModeStatus::InsufficientData,
            warmup_step: None,
            cross: Matrix::zeros(n, n),
        }
    }

    pub fn is_identified(&self) -> bool {
        self.status == ModeStatus::Identified
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorState {
    n: usize,
    ridge: Option<f64>,
    pub per_mode: Vec<ModeEstimate>,
    /// Transitions consumed so far.
    pub t: usize,
}

impl EstimatorState {
    pub fn new(n: usize, k: usize) -> Self {
        assert!(n > 0 && k > 0, "dimensions must be positive");
        EstimatorState {
            n,
            ridge: None,
            per_mode: (0..k).map(|_| ModeEstimate::empty(n)).collect(),
            t: 0,
        }
    }

    /// Regularized variant: every mode starts from `P = I/ε`, `Â = 0`, so
    /// there is no warm-up. Biased; meant for ill-conditioned exploration.
    pub fn with_ridge(n: usize, k: usize, ridge: f64) -> Result<Self> {
        if !(ridge.is_finite() && ridge > 0.0) {
            return Err(Error::invalid(format!("ridge must be positive, got {ridge}")));
        }
        let mut state = EstimatorState::new(n, k);
        state.ridge = Some(ridge);
        for m in &mut state.per_mode {
            m.x_cov_inv = Some(Matrix::identity(n).scale(1.0 / ridge));
        }
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.per_mode.len()
    }

    pub fn ridge(&self) -> Option<f64> {
        self.ridge
    }

    /// Stacked estimate `[Â_1, …, Â_k]`.
    pub fn theta_hat(&self) -> Matrix {
        let blocks: Vec<Matrix> = self.per_mode.iter().map(|m| m.a_hat.clone()).collect();
        hstack(&blocks)
    }

    /// Consumes the transition `(x_t, s_t, x_{t+1})`. Only mode `s_t` changes.
    pub fn recursive_step(&mut self, x_t: &[f64], s_t: usize, x_next: &[f64]) -> Result<()> {
        let n = self.n;
        if x_t.len() != n || x_next.len() != n {
            return Err(Error::invalid(format!(
                "state vectors must have length {n}, got {} and {}",
                x_t.len(),
                x_next.len()
            )));
        }
        if s_t >= self.k() {
            return Err(Error::invalid(format!(
                "mode index {} outside 1..={}",
                s_t + 1,
                self.k()
            )));
        }
        if x_t.iter().chain(x_next).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite state in transition"));
        }
        let step = self.t + 1;
        let m = &mut self.per_mode[s_t];
        m.visits += 1;
        m.x_cov.add_outer(1.0, x_t, x_t);

        match m.x_cov_inv.take() {
            Some(p) => {
                let px = p.mul_vec(x_t);
                let denom = 1.0 + x_t.iter().zip(&px).map(|(a, b)| a * b).sum::<f64>();
                let pred = m.a_hat.mul_vec(x_t);
                let resid: Vec<f64> = x_next.iter().zip(&pred).map(|(a, b)| a - b).collect();
                m.a_hat.add_outer(1.0 / denom, &resid, &px);
                m.x_cov_inv = Some(matops::sherman_morrison_inv_update(&p, x_t)?);
                if m.warmup_step.is_none() {
                    m.warmup_step = Some(step - 1);
                }
                m.status = ModeStatus::Identified;
            }
            None => {
                m.cross.add_outer(1.0, x_next, x_t);
                let (lo, hi) = matops::sym_eig_extremes(&m.x_cov)?;
                if hi > 0.0 && lo > WARMUP_REL_TOL * hi {
                    let inv = matops::spd_inverse(&m.x_cov)?;
                    m.a_hat = m.cross.matmul(&inv)?;
                    m.x_cov_inv = Some(inv);
                    m.cross = Matrix::zeros(n, n);
                    m.status = ModeStatus::Identified;
                    m.warmup_step = Some(step);
                } else {
                    m.status = ModeStatus::WarmUp;
                }
            }
        }
        self.t = step;
        Ok(())
    }

    /// `(λ_min(X_i), λ_max(X_i), |T_i|)` for mode `i`.
    pub fn covariance_extremes(&self, mode: usize) -> Result<(f64, f64, usize)> {
        let m = self
            .per_mode
            .get(mode)
            .ok_or_else(|| Error::invalid(format!("mode index {} outside 1..={}", mode + 1, self.k())))?;
        if m.visits == 0 {
            return Ok((0.0, 0.0, 0));
        }
        let (lo, hi) = matops::sym_eig_extremes(&m.x_cov)?;
        // X is a sum of outer products; negative values are rounding.
        Ok((lo.max(0.0), hi.max(0.0), m.visits))
    }
}

/// Feeds every transition of `traj` through [`EstimatorState::recursive_step`].
pub fn recursive_fit(traj: &Trajectory, k: usize, ridge: Option<f64>) -> Result<EstimatorState> {
    traj.validate(k)?;
    let mut state = match ridge {
        Some(eps) => EstimatorState::with_ridge(traj.dim(), k, eps)?,
        None => EstimatorState::new(traj.dim(), k),
    };
    for t in 0..traj.horizon() {
        state.recursive_step(&traj.states[t], traj.switches[t], &traj.states[t + 1])?;
    }
    Ok(state)
}

/// Solves each mode's normal equations over the whole trajectory.
///
/// Unvisited modes are flagged [`ModeStatus::InsufficientData`]; modes with a
/// singular covariance get the minimum-norm solution and
/// [`ModeStatus::RankDeficient`]. Neither affects the other modes.
pub fn batch_fit(traj: &Trajectory, k: usize) -> Result<EstimatorState> {
    batch_fit_with_ridge(traj, k, None)
}

pub fn batch_fit_with_ridge(traj: &Trajectory, k: usize, ridge: Option<f64>) -> Result<EstimatorState> {
    traj.validate(k)?;
    let n = traj.dim();
    let mut state = match ridge {
        Some(eps) => EstimatorState::with_ridge(n, k, eps)?,
        None => EstimatorState::new(n, k),
    };
    for t in 0..traj.horizon() {
        let m = &mut state.per_mode[traj.switches[t]];
        let x = &traj.states[t];
        m.visits += 1;
        m.x_cov.add_outer(1.0, x, x);
        m.cross.add_outer(1.0, &traj.states[t + 1], x);
    }
    for m in &mut state.per_mode {
        let cross = std::mem::replace(&mut m.cross, Matrix::zeros(n, n));
        if let Some(eps) = ridge {
            let inv = matops::spd_inverse(&m.x_cov.add(&Matrix::identity(n).scale(eps))?)?;
            m.a_hat = cross.matmul(&inv)?;
            m.x_cov_inv = Some(inv);
            m.status = if m.visits == 0 {
                ModeStatus::InsufficientData
            } else {
                ModeStatus::Identified
            };
            continue;
        }
        if m.visits == 0 {
            m.status = ModeStatus::InsufficientData;
            continue;
        }
        let (lo, hi) = matops::sym_eig_extremes(&m.x_cov)?;
        if hi > 0.0 && lo > WARMUP_REL_TOL * hi {
            let inv = matops::spd_inverse(&m.x_cov)?;
            m.a_hat = cross.matmul(&inv)?;
            m.x_cov_inv = Some(inv);
            m.status = ModeStatus::Identified;
        } else {
            let (pinv, _) = matops::psd_pseudo_inverse(&m.x_cov, WARMUP_REL_TOL)?;
            m.a_hat = cross.matmul(&pinv)?;
            m.status = ModeStatus::RankDeficient;
        }
    }
    state.t = traj.horizon();
    Ok(state)
}
