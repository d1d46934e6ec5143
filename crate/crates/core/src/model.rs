//! Switched linear systems, their noise processes, simulation and stability
//! margins.
//!
//! Mode indices are 0-based in this API. Files and reports written for users
//! shift them to 1-based.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matops::{self, Matrix};

/// Any state entry above this magnitude aborts the simulation.
pub const OVERFLOW_LIMIT: f64 = 1e150;

const PMF_TOL: f64 = 1e-12;

/// Default degrees of freedom for Student-t noise.
pub const DEFAULT_DOF: f64 = 5.0;

/// `x_{t+1} = A_{s_t} x_t + w_t` with `s_t` drawn i.i.d. from `switch_pmf`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchedSystem {
    modes: Vec<Matrix>,
    switch_pmf: Vec<f64>,
    x0: Vec<f64>,
}

impl SwitchedSystem {
    /// Validates and builds a system. `x0 = None` starts from the origin.
    pub fn new(modes: Vec<Matrix>, switch_pmf: Vec<f64>, x0: Option<Vec<f64>>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::invalid("system needs at least one mode"))?;
        let n = first.rows();
        for (i, a) in modes.iter().enumerate() {
            if a.rows() != n || a.cols() != n {
                return Err(Error::invalid(format!(
                    "mode {} matrix is {}x{}, expected {n}x{n}",
                    i + 1,
                    a.rows(),
                    a.cols()
                )));
            }
        }
        if switch_pmf.len() != modes.len() {
            return Err(Error::invalid(format!(
                "{} switching probabilities for {} modes",
                switch_pmf.len(),
                modes.len()
            )));
        }
        if let Some((i, p)) = switch_pmf
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(Error::invalid(format!(
                "switching probability of mode {} must be positive, got {p}",
                i + 1
            )));
        }
        let total: f64 = switch_pmf.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::invalid(format!(
                "switching probabilities sum to {total}, expected 1"
            )));
        }
        let x0 = x0.unwrap_or_else(|| vec![0.0; n]);
        if x0.len() != n || x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "initial state must be a finite vector of length {n}"
            )));
        }
        Ok(SwitchedSystem {
            modes,
            switch_pmf,
            x0,
        })
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.modes[0].rows()
    }

    /// Number of modes.
    pub fn k(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Matrix] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &Matrix {
        &self.modes[i]
    }

    pub fn switch_pmf(&self) -> &[f64] {
        &self.switch_pmf
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Stacked parameter `[A_1, …, A_k]` (n × nk).
    pub fn theta(&self) -> Matrix {
        hstack(&self.modes)
    }

    /// Short content hash identifying the system in trajectories and reports.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("system serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with the modes relabeled: new mode `j` is old mode `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k() {
            return Err(Error::invalid("permutation length mismatch"));
        }
        SwitchedSystem::new(
            perm.iter().map(|&i| self.modes[i].clone()).collect(),
            perm.iter().map(|&i| self.switch_pmf[i]).collect(),
            Some(self.x0.clone()),
        )
    }
}

pub(crate) fn hstack(blocks: &[Matrix]) -> Matrix {
    let n = blocks[0].rows();
    let width: usize = blocks.iter().map(Matrix::cols).sum();
    let mut out = Matrix::zeros(n, width);
    let mut offset = 0;
    for b in blocks {
        for i in 0..n {
            for j in 0..b.cols() {
                out[(i, offset + j)] = b[(i, j)];
            }
        }
        offset += b.cols();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    GaussianIid,
    /// Multivariate Student-t scaled so that its covariance equals `C`.
    StudentTIid {
        #[serde(default = "default_dof")]
        dof: f64,
    },
    /// Gaussian with covariance `schedule[t mod len] · C`.
    ScheduledGaussian { schedule: Vec<f64> },
}

fn default_dof() -> f64 {
    DEFAULT_DOF
}

/// Zero-mean noise process `w_t` with covariance `C`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    kind: NoiseKind,
    covariance: Matrix,
    chol: Matrix,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, covariance: Matrix) -> Result<Self> {
        let chol = matops::cholesky(&covariance).map_err(|_| {
            Error::invalid("noise covariance must be symmetric positive definite")
        })?;
        match &kind {
            NoiseKind::GaussianIid => {}
            NoiseKind::StudentTIid { dof } => {
                if !(dof.is_finite() && *dof > 2.0) {
                    return Err(Error::invalid(format!(
                        "student-t noise needs dof > 2 for a finite covariance, got {dof}"
                    )));
                }
            }
            NoiseKind::ScheduledGaussian { schedule } => {
                if schedule.is_empty() {
                    return Err(Error::invalid("covariance schedule is empty"));
                }
                if let Some(s) = schedule.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                    return Err(Error::invalid(format!(
                        "covariance schedule scalings must be positive and finite, got {s}"
                    )));
                }
            }
        }
        Ok(NoiseModel {
            kind,
            covariance,
            chol,
        })
    }

    pub fn gaussian(covariance: Matrix) -> Result<Self> {
        NoiseModel::new(NoiseKind::GaussianIid, covariance)
    }

    /// Unit-covariance Gaussian noise in dimension `n`.
    pub fn standard(n: usize) -> Self {
        NoiseModel::gaussian(Matrix::identity(n)).expect("identity is positive definite")
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.covariance.rows()
    }

    /// Covariance scaling applied at step `t`.
    pub fn scaling(&self, t: usize) -> f64 {
        match &self.kind {
            NoiseKind::ScheduledGaussian { schedule } => schedule[t % schedule.len()],
            _ => 1.0,
        }
    }

    /// Long-run average covariance of the process.
    pub fn long_run_covariance(&self) -> Matrix {
        match &self.kind {
            NoiseKind::ScheduledGaussian { schedule } => {
                let mean = schedule.iter().sum::<f64>() / schedule.len() as f64;
                self.covariance.scale(mean)
            }
            _ => self.covariance.clone(),
        }
    }
}

/// Draws `w_t`. Independent of the past, hence a martingale difference.
pub fn sample_noise<R: Rng + ?Sized>(noise: &NoiseModel, t: usize, rng: &mut R) -> Vec<f64> {
    let n = noise.dim();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut w = noise.chol.mul_vec(&z);
    let scale = match &noise.kind {
        NoiseKind::GaussianIid => 1.0,
        NoiseKind::StudentTIid { dof } => {
            let g: f64 = ChiSquared::new(*dof)
                .expect("dof validated at construction")
                .sample(rng);
            ((dof - 2.0) / g).sqrt()
        }
        NoiseKind::ScheduledGaussian { .. } => noise.scaling(t).sqrt(),
    };
    if scale != 1.0 {
        w.iter_mut().for_each(|v| *v *= scale);
    }
    w
}

/// A realized path `x_{0:T}` with its modes `s_{0:T-1}` and noises `w_{0:T-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub system_hash: String,
    pub seed: u64,
    pub states: Vec<Vec<f64>>,
    pub switches: Vec<usize>,
    pub noises: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Number of transitions `T`.
    pub fn horizon(&self) -> usize {
        self.switches.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// Checks shapes and that every mode index is below `k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        let t = self.switches.len();
        if t == 0 {
            return Err(Error::invalid("trajectory has no transitions"));
        }
        if self.states.len() != t + 1 || self.noises.len() != t {
            return Err(Error::invalid(format!(
                "trajectory with {t} transitions needs {} states and {t} noises, got {} and {}",
                t + 1,
                self.states.len(),
                self.noises.len()
            )));
        }
        let n = self.states[0].len();
        if self.states.iter().chain(&self.noises).any(|v| v.len() != n) {
            return Err(Error::invalid("inconsistent vector lengths in trajectory"));
        }
        if let Some(s) = self.switches.iter().find(|&&s| s >= k) {
            return Err(Error::invalid(format!(
                "mode index {} outside 1..={k}",
                s + 1
            )));
        }
        Ok(())
    }

    /// Writes `t, s_t, x_1..x_n, w_1..w_n`, modes 1-based. The final row
    /// carries `x_T` with empty mode and noise fields.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let n = self.dim();
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "s_t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("w_{i}")));
        writer.write_record(&header)?;
        for (t, x) in self.states.iter().enumerate() {
            let mut fields = vec![t.to_string()];
            match self.switches.get(t) {
                Some(s) => fields.push((s + 1).to_string()),
                None => fields.push(String::new()),
            }
            fields.extend(x.iter().map(|v| format!("{v:?}")));
            match self.noises.get(t) {
                Some(w) => fields.extend(w.iter().map(|v| format!("{v:?}"))),
                None => fields.extend(std::iter::repeat_n(String::new(), n)),
            }
            writer.write_record(&fields)?;
        }
        writer.flush()
    }

    /// Reads the CSV layout produced by [`Trajectory::write_csv`]. Rows must
    /// have consecutive time indices starting at 0; noise columns are
    /// optional (absent noises are recorded as NaN).
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::invalid(format!("bad trajectory header: {e}")))?
            .clone();
        if header.len() < 3 || &header[0] != "t" || &header[1] != "s_t" {
            return Err(Error::invalid("trajectory header must start with t,s_t"));
        }
        let n = header.iter().filter(|h| h.starts_with("x_")).count();
        let has_noise = header.iter().any(|h| h.starts_with("w_"));
        if n == 0 || header.len() != 2 + n * if has_noise { 2 } else { 1 } {
            return Err(Error::invalid("trajectory header has inconsistent columns"));
        }
        let parse = |s: &str, line: usize| -> Result<f64> {
            s.parse::<f64>().map_err(|e| {
                Error::invalid(format!("line {line}: bad number {s:?}: {e}"))
            })
        };
        let mut states = Vec::new();
        let mut switches = Vec::new();
        let mut noises = Vec::new();
        let mut ended = false;
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::invalid(format!("bad trajectory row: {e}")))?;
            let lineno = record.position().map_or(row + 2, |p| p.line() as usize);
            if ended {
                return Err(Error::invalid(format!(
                    "line {lineno}: rows after the final state"
                )));
            }
            let fields: Vec<&str> = record.iter().collect();
            let t: usize = fields[0]
                .parse()
                .map_err(|_| Error::invalid(format!("line {lineno}: bad time index")))?;
            if t != row {
                return Err(Error::invalid(format!(
                    "line {lineno}: time index {t} is duplicated or out of order (expected {row})"
                )));
            }
            states.push(
                fields[2..2 + n]
                    .iter()
                    .map(|s| parse(s, lineno))
                    .collect::<Result<Vec<_>>>()?,
            );
            if fields[1].is_empty() {
                ended = true;
                continue;
            }
            let s: usize = fields[1]
                .parse()
                .map_err(|_| Error::invalid(format!("line {lineno}: bad mode index")))?;
            if s == 0 {
                return Err(Error::invalid(format!(
                    "line {lineno}: mode indices are 1-based"
                )));
            }
            switches.push(s - 1);
            noises.push(if has_noise {
                fields[2 + n..]
                    .iter()
                    .map(|s| parse(s, lineno))
                    .collect::<Result<Vec<_>>>()?
            } else {
                vec![f64::NAN; n]
            });
        }
        if !ended {
            // No explicit final row: the last row's successor is unknown, drop it.
            if switches.pop().is_none() {
                return Err(Error::invalid("trajectory has no transitions"));
            }
            noises.pop();
        }
        if switches.is_empty() {
            return Err(Error::invalid("trajectory has no transitions"));
        }
        Ok(Trajectory {
            system_hash: String::new(),
            seed: 0,
            states,
            switches,
            noises,
        })
    }
}

/// Runs `x_{t+1} = A_{s_t} x_t + w_t` over given mode and noise sequences.
pub fn propagate(sys: &SwitchedSystem, switches: &[usize], noises: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if switches.len() != noises.len() {
        return Err(Error::invalid("mode and noise sequences differ in length"));
    }
    let n = sys.n();
    let mut states = Vec::with_capacity(switches.len() + 1);
    states.push(sys.x0().to_vec());
    for (t, (&s, w)) in switches.iter().zip(noises).enumerate() {
        if s >= sys.k() {
            return Err(Error::invalid(format!("mode index {} outside 1..={}", s + 1, sys.k())));
        }
        if w.len() != n {
            return Err(Error::invalid(format!("noise at step {t} has wrong length")));
        }
        let mut next = sys.mode(s).mul_vec(&states[t]);
        for (x, wi) in next.iter_mut().zip(w) {
            *x += wi;
        }
        let magnitude = next.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !(magnitude <= OVERFLOW_LIMIT) {
            return Err(Error::Instability {
                step: t + 1,
                magnitude,
                limit: OVERFLOW_LIMIT,
            });
        }
        states.push(next);
    }
    Ok(states)
}

/// Builds a trajectory from prescribed modes and noises.
pub fn replay(
    sys: &SwitchedSystem,
    switches: Vec<usize>,
    noises: Vec<Vec<f64>>,
    seed: u64,
) -> Result<Trajectory> {
    let states = propagate(sys, &switches, &noises)?;
    Ok(Trajectory {
        system_hash: sys.hash(),
        seed,
        states,
        switches,
        noises,
    })
}

/// Draws a mode from the pmf by inverting its cumulative sum.
fn sample_mode<R: Rng + ?Sized>(pmf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.len() - 1
}

/// Simulates `horizon` steps. The output is a deterministic function of
/// `seed`: one ChaCha8 stream draws, per step, the mode and then the noise.
pub fn simulate(
    sys: &SwitchedSystem,
    noise: &NoiseModel,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if noise.dim() != sys.n() {
        return Err(Error::invalid(format!(
            "noise dimension {} does not match state dimension {}",
            noise.dim(),
            sys.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut switches = Vec::with_capacity(horizon);
    let mut noises = Vec::with_capacity(horizon);
    for t in 0..horizon {
        switches.push(sample_mode(sys.switch_pmf(), &mut rng));
        noises.push(sample_noise(noise, t, &mut rng));
    }
    replay(sys, switches, noises, seed)
}

/// `Φ(t, τ) = A_{s_t} ⋯ A_{s_τ}`, the identity when `t < τ`.
pub fn transition_product(
    switches: &[usize],
    sys: &SwitchedSystem,
    t: usize,
    tau: usize,
) -> Result<Matrix> {
    let n = sys.n();
    if t < tau {
        return Ok(Matrix::identity(n));
    }
    if t >= switches.len() {
        return Err(Error::invalid(format!(
            "index {t} outside a mode sequence of length {}",
            switches.len()
        )));
    }
    let mut phi = Matrix::identity(n);
    for &s in &switches[tau..=t] {
        if s >= sys.k() {
            return Err(Error::invalid(format!("mode index {} outside 1..={}", s + 1, sys.k())));
        }
        phi = sys.mode(s).matmul(&phi)?;
    }
    Ok(phi)
}

/// `∏_i σ_max(A_i)^{p_i}`; values below one give average-sense stability.
pub fn assumption2_margin(sys: &SwitchedSystem) -> Result<f64> {
    sys.modes()
        .iter()
        .zip(sys.switch_pmf())
        .try_fold(1.0, |acc, (a, &p)| Ok(acc * matops::spectral_norm(a)?.powf(p)))
}

/// `ρ(Σ_i p_i A_i ⊗ A_i)`; values below one mean mean-square stability.
pub fn mss_radius(sys: &SwitchedSystem) -> Result<f64> {
    let n = sys.n();
    let mut lifted = Matrix::zeros(n * n, n * n);
    for (a, &p) in sys.modes().iter().zip(sys.switch_pmf()) {
        lifted = lifted.add(&matops::kron(a, a)?.scale(p))?;
    }
    matops::max_abs_eig(&lifted)
}
