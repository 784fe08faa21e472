//! Homogeneous product-state mean-field map.
//!
//! Every row is approximated by a product of identical single-site states
//! `ρ = [[1-n, (x+iy)/2], [(x-iy)/2, n]]` in the (◦, •) basis, with
//! `x = ⟨σ^x⟩` and `y = ⟨σ^y⟩`. One iteration applies a single local gate to
//! three copies of `ρ` and an empty target and keeps the target.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{QcaError, Result};
use crate::gates::{flip_unitary, proj_empty, FlipKind, GateParams, C64};

/// Slack allowed on the Bloch-ball constraint.
pub const STATE_TOL: f64 = 1e-9;

/// Iteration budget used for stationary densities.
pub const DEFAULT_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MFState {
    pub n: f64,
    pub x: f64,
    pub y: f64,
}

impl MFState {
    pub const EMPTY: MFState = MFState { n: 0.0, x: 0.0, y: 0.0 };
    pub const FULL: MFState = MFState { n: 1.0, x: 0.0, y: 0.0 };

    pub fn new(n: f64, x: f64, y: f64) -> Result<Self> {
        let s = Self { n, x, y };
        s.validate()?;
        Ok(s)
    }

    /// Incoherent state with density `n`.
    pub fn diagonal(n: f64) -> Result<Self> {
        Self::new(n, 0.0, 0.0)
    }

    /// `x² + y² + (2n−1)² − 1`; nonpositive for physical states.
    pub fn bloch_excess(&self) -> f64 {
        self.x * self.x + self.y * self.y + (2.0 * self.n - 1.0).powi(2) - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.n.is_finite() && self.x.is_finite() && self.y.is_finite();
        if !finite || self.bloch_excess() > STATE_TOL {
            return Err(QcaError::Numerical(format!("invalid single-site state {self:?}")));
        }
        Ok(())
    }

    pub fn to_matrix(&self) -> Matrix2<C64> {
        let off = C64::new(self.x, self.y) / 2.0;
        Matrix2::new(C64::from(1.0 - self.n), off, off.conj(), C64::from(self.n))
    }

    pub fn from_matrix(m: &Matrix2<C64>) -> Self {
        let off = m[(0, 1)];
        MFState {
            n: m[(1, 1)].re,
            x: 2.0 * off.re,
            y: 2.0 * off.im,
        }
    }

    fn distance(&self, other: &MFState) -> f64 {
        ((self.n - other.n).powi(2) + (self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Coefficients of the closed density update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MFCoefficients {
    pub r_dec: f64,
    pub r_coag: f64,
    pub r_branch: f64,
    pub r_star: f64,
}

pub fn coefficients(params: &GateParams) -> MFCoefficients {
    let lambda = params.lambda();
    let (p_coag, q_coag) = (params.p_coag(), params.q_coag());
    let (p_branch, q_branch) = (params.p_branch(), params.q_branch());
    let (p, q) = (params.p_plus(), params.q_plus());
    let r_coag = (1.0 - lambda) * p_coag
        + lambda * (p_branch.sqrt() * q.sqrt() + p.sqrt() * q_branch.sqrt()).powi(2);
    let r_branch = (1.0 - lambda) * p_branch
        + lambda * (p_coag.sqrt() * q.sqrt() - p.sqrt() * q_coag.sqrt()).powi(2);
    // Cross term of the two D-block branches. The relative signs follow from
    // ⟨•|U_• U_+|◦⟩ = √(p_• q) − √(q_• p) and ⟨•|U_◦ U_+†|◦⟩ = −(√(p_◦ q) + √(q_◦ p)).
    let r_star = lambda.sqrt()
        * (1.0 - lambda).sqrt()
        * (q.sqrt() * (p_branch - p_coag)
            + p.sqrt() * ((p_branch * q_branch).sqrt() + (p_coag * q_coag).sqrt()));
    MFCoefficients {
        r_dec: params.q_dec(),
        r_coag,
        r_branch,
        r_star,
    }
}

/// Density update with the coefficient set: the occupation after one step
/// given the current density `n` and coherence `y = ⟨σ^y⟩`.
pub fn mf_step_density(n: f64, y: f64, params: &GateParams) -> f64 {
    density_update(n, y, &coefficients(params))
}

/// Same as [`mf_step_density`] for an explicit coefficient set.
pub fn density_update(n: f64, y: f64, c: &MFCoefficients) -> f64 {
    let pi = (1.0 - n) * (1.0 - n);
    let pi_bar = 1.0 - pi;
    c.r_dec * pi * n + c.r_coag * pi_bar * n + c.r_branch * pi_bar * (1.0 - n) + c.r_star * pi_bar * y
}

/// Precomputed single-site maps for one parameter point.
///
/// The update is
/// `ρ' = ⟨Π⟩ (n A_• + (1−n) A_◦) + ⟨Π̄⟩ [(1−λ)(n B_• + (1−n) B_◦)
///      + λ (n C_• + (1−n) C_◦) + √λ√(1−λ) (X + X†)]`
/// with `X = ⟨σ^-⟩ U_• n̄ U_+† U_•† − ⟨σ^+⟩ U_◦ n̄ U_+ U_◦†` and
/// `⟨Π⟩ = (1−n)²`.
#[derive(Debug, Clone, Copy)]
pub struct MeanFieldMap {
    lambda: f64,
    a_occ: Matrix2<C64>,
    a_emp: Matrix2<C64>,
    b_occ: Matrix2<C64>,
    b_emp: Matrix2<C64>,
    c_occ: Matrix2<C64>,
    c_emp: Matrix2<C64>,
    x_minus: Matrix2<C64>,
    x_plus: Matrix2<C64>,
}

impl MeanFieldMap {
    pub fn new(params: &GateParams) -> Self {
        let u_dec = flip_unitary(FlipKind::Decay, params).0;
        let u_coag = flip_unitary(FlipKind::Coagulation, params).0;
        let u_branch = flip_unitary(FlipKind::Branching, params).0;
        let u_plus = flip_unitary(FlipKind::Plus, params).0;
        let nb = proj_empty();
        let conj = |u: Matrix2<C64>| u * nb * u.adjoint();
        Self {
            lambda: params.lambda(),
            a_occ: conj(u_dec),
            a_emp: nb,
            b_occ: conj(u_coag),
            b_emp: conj(u_branch),
            c_occ: conj(u_branch * u_plus.adjoint()),
            c_emp: conj(u_coag * u_plus),
            x_minus: u_coag * nb * u_plus.adjoint() * u_coag.adjoint(),
            x_plus: u_branch * nb * u_plus * u_branch.adjoint(),
        }
    }

    pub fn step_matrix(&self, state: &MFState) -> Matrix2<C64> {
        let n = state.n;
        let pi = (1.0 - n) * (1.0 - n);
        let pi_bar = 1.0 - pi;
        let rho = state.to_matrix();
        // ⟨σ^-⟩ = ρ_{•◦}, ⟨σ^+⟩ = ρ_{◦•}.
        let s_minus = rho[(1, 0)];
        let s_plus = rho[(0, 1)];
        let lam = self.lambda;
        let nc = C64::from(n);
        let ec = C64::from(1.0 - n);
        let sync_part = (self.b_occ * nc + self.b_emp * ec) * C64::from(1.0 - lam);
        let hop_part = (self.c_occ * nc + self.c_emp * ec) * C64::from(lam);
        let x = self.x_minus * s_minus - self.x_plus * s_plus;
        let cross = (x + x.adjoint()) * C64::from((lam * (1.0 - lam)).sqrt());
        (self.a_occ * nc + self.a_emp * ec) * C64::from(pi)
            + (sync_part + hop_part + cross) * C64::from(pi_bar)
    }

    pub fn step(&self, state: &MFState) -> Result<MFState> {
        let next = MFState::from_matrix(&self.step_matrix(state));
        next.validate()?;
        Ok(next)
    }
}

/// One iteration of the full single-site update.
pub fn mf_step_full(state: &MFState, params: &GateParams) -> Result<MFState> {
    MeanFieldMap::new(params).step(state)
}

/// State after a fixed number of iterations plus the size of the last step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub state: MFState,
    pub last_delta: f64,
    pub iterations: usize,
}

pub fn stationary(params: &GateParams, init: &MFState, iters: usize) -> Result<Stationary> {
    init.validate()?;
    let map = MeanFieldMap::new(params);
    let mut state = *init;
    let mut last_delta = 0.0;
    for _ in 0..iters {
        let next = map.step(&state)?;
        last_delta = next.distance(&state);
        state = next;
    }
    Ok(Stationary {
        state,
        last_delta,
        iterations: iters,
    })
}

/// Iterates until the step size drops below `tol` (or `max_iters`).
pub fn stationary_converged(params: &GateParams, init: &MFState, tol: f64, max_iters: usize) -> Result<Stationary> {
    init.validate()?;
    let map = MeanFieldMap::new(params);
    let mut state = *init;
    let mut last_delta = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters && last_delta > tol {
        let next = map.step(&state)?;
        last_delta = next.distance(&state);
        state = next;
        iterations += 1;
    }
    Ok(Stationary {
        state,
        last_delta,
        iterations,
    })
}

/// Linear growth factor of a small incoherent density around the absorbing
/// state; the absorbing state is unstable when it exceeds one.
pub fn absorbing_growth_factor(params: &GateParams) -> f64 {
    const SEED: f64 = 1e-9;
    let map = MeanFieldMap::new(params);
    let next = MFState::from_matrix(&map.step_matrix(&MFState { n: SEED, x: 0.0, y: 0.0 }));
    next.n / SEED
}

/// Trajectory of `(n, x, y)` over `iters` steps, including the initial state.
pub fn trajectory(params: &GateParams, init: &MFState, iters: usize) -> Result<Vec<MFState>> {
    init.validate()?;
    let map = MeanFieldMap::new(params);
    let mut out = Vec::with_capacity(iters + 1);
    out.push(*init);
    for _ in 0..iters {
        let next = map.step(out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}
