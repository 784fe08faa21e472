//! Exact row-to-row evolution for small systems.
//!
//! A step prepares the new row all-empty, applies one local gate per target
//! site in the configured order, then traces out the old row. The dense mode
//! propagates the full row density matrix through the equivalent Kraus form
//! `ρ' = Σ_o K_o ρ K_o†` with `K_o = ⟨o|_old G |Ø⟩_new`. The trajectory mode
//! unravels the same channel by measuring the old row in the computational
//! basis.
//!
//! Register layout: old-row site `k` is bit `k`, new-row site `k` is bit
//! `L + k` of the joint basis index. Row density matrices use bit `k` for
//! site `k`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QcaError, Result};
use crate::gates::{build_async_gate, GateParams, SparseGate, C64};
use crate::kernel::{apply_gate, GateSites};

pub const DENSE_MAX_SITES: usize = 6;
pub const TRAJECTORY_MAX_SITES: usize = 12;

const HERMITICITY_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = -1e-8;

/// Order in which the local gates of one step are applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateOrder {
    LeftToRight,
    RightToLeft,
    /// Explicit 0-based target order; the first entry is applied first.
    Permutation(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Boundary {
    /// Virtual permanently-empty sites beyond both edges.
    #[default]
    FixedEmpty,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Dense,
    Trajectory { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub order: UpdateOrder,
    pub boundary: Boundary,
    pub steps: usize,
    pub mode: Mode,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            order: UpdateOrder::LeftToRight,
            boundary: Boundary::FixedEmpty,
            steps: 0,
            mode: Mode::Dense,
        }
    }
}

impl EvolutionConfig {
    pub fn dense(order: UpdateOrder, steps: usize) -> Self {
        Self {
            order,
            steps,
            ..Self::default()
        }
    }

    pub fn validate(&self, sites: usize) -> Result<()> {
        if sites == 0 {
            return Err(QcaError::InvalidParameter("row must have at least one site".into()));
        }
        match self.mode {
            Mode::Dense if sites > DENSE_MAX_SITES => {
                return Err(QcaError::Capacity {
                    what: "dense sites",
                    requested: sites,
                    limit: DENSE_MAX_SITES,
                })
            }
            Mode::Trajectory { .. } if sites > TRAJECTORY_MAX_SITES => {
                return Err(QcaError::Capacity {
                    what: "trajectory sites",
                    requested: sites,
                    limit: TRAJECTORY_MAX_SITES,
                })
            }
            Mode::Trajectory { samples: 0, .. } => {
                return Err(QcaError::InvalidParameter("trajectory samples must be >= 1".into()))
            }
            _ => {}
        }
        if self.boundary == Boundary::Periodic && sites < 3 {
            return Err(QcaError::InvalidParameter(
                "periodic boundary needs at least 3 sites".into(),
            ));
        }
        if let UpdateOrder::Permutation(perm) = &self.order {
            let mut seen = vec![false; sites];
            if perm.len() != sites {
                return Err(QcaError::InvalidParameter(format!(
                    "permutation has {} entries for {sites} sites",
                    perm.len()
                )));
            }
            for &k in perm {
                if k >= sites || seen[k] {
                    return Err(QcaError::InvalidParameter(format!(
                        "order {perm:?} is not a permutation of 0..{sites}"
                    )));
                }
                seen[k] = true;
            }
        }
        Ok(())
    }

    fn targets(&self, sites: usize) -> Vec<usize> {
        match &self.order {
            UpdateOrder::LeftToRight => (0..sites).collect(),
            UpdateOrder::RightToLeft => (0..sites).rev().collect(),
            UpdateOrder::Permutation(p) => p.clone(),
        }
    }

    /// Gate placements in application order for the joint old/new register.
    fn placements(&self, sites: usize) -> Vec<GateSites> {
        self.targets(sites)
            .into_iter()
            .map(|k| {
                let (left, right) = match self.boundary {
                    Boundary::FixedEmpty => (
                        k.checked_sub(1),
                        if k + 1 < sites { Some(k + 1) } else { None },
                    ),
                    Boundary::Periodic => (Some((k + sites - 1) % sites), Some((k + 1) % sites)),
                };
                GateSites {
                    left,
                    center: k,
                    right,
                    target: sites + k,
                }
            })
            .collect()
    }
}

/// Parses an occupation pattern. `◦`, `o`, `0` and `.` are empty; `•`, `x`,
/// `1` and `#` are occupied.
pub fn parse_pattern(pattern: &str) -> Result<Vec<bool>> {
    pattern
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '◦' | 'o' | 'O' | '0' | '.' => Ok(false),
            '•' | 'x' | 'X' | '1' | '#' => Ok(true),
            other => Err(QcaError::InvalidParameter(format!(
                "unknown site symbol {other:?} in pattern"
            ))),
        })
        .collect()
}

fn basis_index(bits: &[bool]) -> usize {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (k, &b)| acc | ((b as usize) << k))
}

/// Density matrix of one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDensity {
    sites: usize,
    rho: DMatrix<C64>,
}

impl RowDensity {
    pub fn from_matrix(sites: usize, rho: DMatrix<C64>) -> Result<Self> {
        let dim = 1usize << sites;
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(QcaError::InvalidParameter(format!(
                "matrix is {}x{}, expected {dim}x{dim}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let out = Self { sites, rho };
        out.validate()?;
        Ok(out)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ.
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.rho
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Hermiticity, unit trace and positivity within the module tolerances.
    pub fn validate(&self) -> Result<()> {
        let asym = (&self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if asym > HERMITICITY_TOL {
            return Err(QcaError::Numerical(format!("row density not Hermitian ({asym:e})")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(QcaError::Numerical(format!("row density trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < POSITIVITY_TOL {
            return Err(QcaError::Numerical(format!("row density eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let n = self.rho.nrows();
        (0..n).all(|i| (0..n).all(|j| i == j || self.rho[(i, j)].norm() <= tol))
    }

    pub fn observables(&self, two_point: bool) -> RowObservables {
        let dim = self.rho.nrows();
        let l = self.sites;
        let mut n = vec![0.0; l];
        let mut sx = vec![0.0; l];
        let mut sy = vec![0.0; l];
        for a in 0..dim {
            let p = self.rho[(a, a)].re;
            for k in 0..l {
                if a >> k & 1 == 1 {
                    n[k] += p;
                } else {
                    let z = self.rho[(a, a | 1 << k)];
                    sx[k] += 2.0 * z.re;
                    sy[k] += 2.0 * z.im;
                }
            }
        }
        let two = two_point.then(|| {
            let mut m = vec![vec![0.0; l]; l];
            for a in 0..dim {
                let p = self.rho[(a, a)].re;
                for j in 0..l {
                    for k in 0..l {
                        if a >> j & 1 == 1 && a >> k & 1 == 1 {
                            m[j][k] += p;
                        }
                    }
                }
            }
            m
        });
        RowObservables::new(n, sx, sy, self.purity(), two)
    }
}

/// Computational-basis row state for an occupation pattern.
pub fn initial_row(pattern: &[bool]) -> Result<RowDensity> {
    if pattern.len() > DENSE_MAX_SITES {
        return Err(QcaError::Capacity {
            what: "dense sites",
            requested: pattern.len(),
            limit: DENSE_MAX_SITES,
        });
    }
    if pattern.is_empty() {
        return Err(QcaError::InvalidParameter("empty pattern".into()));
    }
    let dim = 1usize << pattern.len();
    let idx = basis_index(pattern);
    let mut rho = DMatrix::zeros(dim, dim);
    rho[(idx, idx)] = C64::new(1.0, 0.0);
    Ok(RowDensity {
        sites: pattern.len(),
        rho,
    })
}

/// Per-site and row-level observables of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowObservables {
    pub n: Vec<f64>,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub mean_density: f64,
    pub purity: f64,
    pub two_point: Option<Vec<Vec<f64>>>,
}

impl RowObservables {
    fn new(n: Vec<f64>, sx: Vec<f64>, sy: Vec<f64>, purity: f64, two_point: Option<Vec<Vec<f64>>>) -> Self {
        let mean_density = n.iter().sum::<f64>() / n.len() as f64;
        Self {
            n,
            sx,
            sy,
            mean_density,
            purity,
            two_point,
        }
    }
}

/// Trace distance `½‖a − b‖₁`.
pub fn trace_distance(a: &RowDensity, b: &RowDensity) -> f64 {
    let diff = &a.rho - &b.rho;
    0.5 * diff.symmetric_eigenvalues().iter().map(|e| e.abs()).sum::<f64>()
}

/// The one-step row channel in Kraus form.
#[derive(Debug, Clone)]
pub struct RowChannel {
    sites: usize,
    kraus: Vec<DMatrix<C64>>,
}

impl RowChannel {
    pub fn new(sites: usize, params: &GateParams, cfg: &EvolutionConfig) -> Result<Self> {
        let dense_cfg = EvolutionConfig {
            mode: Mode::Dense,
            ..cfg.clone()
        };
        dense_cfg.validate(sites)?;
        let gate = build_async_gate(params).sparse();
        let placements = cfg.placements(sites);
        let dim = 1usize << sites;
        let mut kraus = vec![DMatrix::<C64>::zeros(dim, dim); dim];
        let mut joint = vec![C64::new(0.0, 0.0); dim * dim];
        let mut scratch = [C64::new(0.0, 0.0); 32];
        for a in 0..dim {
            joint.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            joint[a] = C64::new(1.0, 0.0);
            for &s in &placements {
                apply_gate(&mut joint, &gate, s, &mut scratch);
            }
            for (idx, &amp) in joint.iter().enumerate() {
                if amp.norm_sqr() != 0.0 {
                    let old = idx & (dim - 1);
                    let new = idx >> sites;
                    kraus[old][(new, a)] = amp;
                }
            }
        }
        kraus.retain(|k| k.iter().any(|z| z.norm_sqr() != 0.0));
        Ok(Self { sites, kraus })
    }

    pub fn kraus_operators(&self) -> &[DMatrix<C64>] {
        &self.kraus
    }

    /// `P(b | a)`: probability of computational row `b` after one step from
    /// computational row `a`, as a column-stochastic matrix.
    pub fn population_map(&self) -> DMatrix<f64> {
        let dim = 1usize << self.sites;
        let mut t = DMatrix::zeros(dim, dim);
        for k in &self.kraus {
            t += k.map(|z| z.norm_sqr());
        }
        t
    }

    /// Applies the channel without validating the output.
    pub fn apply_unchecked(&self, rho: &RowDensity) -> RowDensity {
        let dim = 1usize << self.sites;
        let mut out = DMatrix::<C64>::zeros(dim, dim);
        for k in &self.kraus {
            out += k * &rho.rho * k.adjoint();
        }
        RowDensity {
            sites: self.sites,
            rho: out,
        }
    }

    pub fn apply(&self, rho: &RowDensity) -> Result<RowDensity> {
        if rho.sites != self.sites {
            return Err(QcaError::InvalidParameter(format!(
                "row has {} sites, channel expects {}",
                rho.sites, self.sites
            )));
        }
        let out = self.apply_unchecked(rho);
        out.validate()?;
        Ok(out)
    }
}

pub fn step_dense(rho: &RowDensity, params: &GateParams, cfg: &EvolutionConfig) -> Result<RowDensity> {
    RowChannel::new(rho.sites, params, cfg)?.apply(rho)
}

/// Trace distance between one-step results under left-to-right and
/// right-to-left gate orderings.
pub fn order_sensitivity(rho: &RowDensity, params: &GateParams, cfg: &EvolutionConfig) -> Result<f64> {
    let ltr = EvolutionConfig {
        order: UpdateOrder::LeftToRight,
        mode: Mode::Dense,
        ..cfg.clone()
    };
    let rtl = EvolutionConfig {
        order: UpdateOrder::RightToLeft,
        ..ltr.clone()
    };
    let a = step_dense(rho, params, &ltr)?;
    let b = step_dense(rho, params, &rtl)?;
    Ok(trace_distance(&a, &b))
}

/// Old-row measurement outcome of one trajectory step; bit `k` is site `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeasurementRecord(pub u64);

impl MeasurementRecord {
    pub fn occupied(&self, site: usize) -> bool {
        self.0 >> site & 1 == 1
    }
}

/// Reusable buffers for stepping pure row states.
#[derive(Debug, Clone)]
pub struct TrajectoryStepper {
    sites: usize,
    gate: SparseGate,
    placements: Vec<GateSites>,
    joint: Vec<C64>,
    scratch: [C64; 32],
}

impl TrajectoryStepper {
    pub fn new(sites: usize, params: &GateParams, cfg: &EvolutionConfig) -> Result<Self> {
        let traj_cfg = EvolutionConfig {
            mode: Mode::Trajectory { samples: 1, seed: 0 },
            ..cfg.clone()
        };
        traj_cfg.validate(sites)?;
        Ok(Self {
            sites,
            gate: build_async_gate(params).sparse(),
            placements: cfg.placements(sites),
            joint: vec![C64::new(0.0, 0.0); 1 << (2 * sites)],
            scratch: [C64::new(0.0, 0.0); 32],
        })
    }

    /// Advances `state` (length `2^L`) by one row, in place.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut [C64], rng: &mut R) -> Result<MeasurementRecord> {
        let dim = 1usize << self.sites;
        if state.len() != dim {
            return Err(QcaError::InvalidParameter(format!(
                "state has {} amplitudes, expected {dim}",
                state.len()
            )));
        }
        self.joint.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        self.joint[..dim].copy_from_slice(state);
        for &s in &self.placements {
            apply_gate(&mut self.joint, &self.gate, s, &mut self.scratch);
        }
        // Born probabilities of old-row outcomes.
        let mut probs = vec![0.0; dim];
        for (idx, amp) in self.joint.iter().enumerate() {
            probs[idx & (dim - 1)] += amp.norm_sqr();
        }
        let total: f64 = probs.iter().sum();
        let draw = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut outcome = dim - 1;
        for (o, &p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                outcome = o;
                break;
            }
        }
        let p = probs[outcome];
        if p <= f64::MIN_POSITIVE {
            return Err(QcaError::Resample);
        }
        let norm = p.sqrt();
        for (c, amp) in state.iter_mut().enumerate() {
            *amp = self.joint[outcome | c << self.sites] / norm;
        }
        Ok(MeasurementRecord(outcome as u64))
    }

    /// Like [`step`](Self::step) but redraws on a zero-norm branch.
    pub fn step_resampling<R: Rng + ?Sized>(&mut self, state: &mut [C64], rng: &mut R) -> MeasurementRecord {
        let backup = state.to_vec();
        loop {
            match self.step(state, rng) {
                Ok(rec) => return rec,
                Err(_) => state.copy_from_slice(&backup),
            }
        }
    }
}

/// One trajectory step: returns the normalized conditional new-row state and
/// the old-row measurement outcome.
pub fn step_trajectory<R: Rng + ?Sized>(
    state: &[C64],
    params: &GateParams,
    cfg: &EvolutionConfig,
    rng: &mut R,
) -> Result<(Vec<C64>, MeasurementRecord)> {
    let sites = state.len().trailing_zeros() as usize;
    if 1usize << sites != state.len() {
        return Err(QcaError::InvalidParameter("state length must be a power of two".into()));
    }
    let mut stepper = TrajectoryStepper::new(sites, params, cfg)?;
    let mut out = state.to_vec();
    let rec = stepper.step(&mut out, rng)?;
    Ok((out, rec))
}

/// Observables of a pure row state.
pub fn pure_observables(state: &[C64], sites: usize, two_point: bool) -> RowObservables {
    let mut n = vec![0.0; sites];
    let mut sx = vec![0.0; sites];
    let mut sy = vec![0.0; sites];
    let mut two = two_point.then(|| vec![vec![0.0; sites]; sites]);
    for (a, amp) in state.iter().enumerate() {
        let p = amp.norm_sqr();
        for k in 0..sites {
            if a >> k & 1 == 1 {
                n[k] += p;
            } else {
                let z = amp * state[a | 1 << k].conj();
                sx[k] += 2.0 * z.re;
                sy[k] += 2.0 * z.im;
            }
        }
        if let Some(m) = two.as_mut() {
            for j in 0..sites {
                for k in 0..sites {
                    if a >> j & 1 == 1 && a >> k & 1 == 1 {
                        m[j][k] += p;
                    }
                }
            }
        }
    }
    RowObservables::new(n, sx, sy, 1.0, two)
}

/// Result of [`evolve`]: `steps + 1` snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub snapshots: Vec<RowObservables>,
    /// Standard error of the mean density per snapshot (trajectory mode only).
    pub density_stderr: Option<Vec<f64>>,
}

pub fn evolve(rho0: &RowDensity, params: &GateParams, cfg: &EvolutionConfig) -> Result<Evolution> {
    evolve_with(rho0, params, cfg, false)
}

pub fn evolve_with(rho0: &RowDensity, params: &GateParams, cfg: &EvolutionConfig, two_point: bool) -> Result<Evolution> {
    cfg.validate(rho0.sites)?;
    rho0.validate()?;
    match cfg.mode {
        Mode::Dense => {
            let channel = RowChannel::new(rho0.sites, params, cfg)?;
            let mut rho = rho0.clone();
            let mut snapshots = vec![rho.observables(two_point)];
            for _ in 0..cfg.steps {
                rho = channel.apply(&rho)?;
                snapshots.push(rho.observables(two_point));
            }
            Ok(Evolution {
                snapshots,
                density_stderr: None,
            })
        }
        Mode::Trajectory { .. } => {
            // Unravel ρ0 into its eigen-ensemble.
            let eig = rho0.rho.clone().symmetric_eigen();
            let ensemble: Vec<(f64, Vec<C64>)> = (0..eig.eigenvalues.len())
                .filter(|&i| eig.eigenvalues[i] > 1e-14)
                .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().cloned().collect()))
                .collect();
            run_trajectories(rho0.sites, &ensemble, params, cfg, two_point)
        }
    }
}

/// Trajectory evolution from a pure initial row state (any size up to the
/// trajectory cap).
pub fn evolve_pure(psi0: &[C64], params: &GateParams, cfg: &EvolutionConfig, two_point: bool) -> Result<Evolution> {
    let sites = psi0.len().trailing_zeros() as usize;
    if 1usize << sites != psi0.len() {
        return Err(QcaError::InvalidParameter("state length must be a power of two".into()));
    }
    if !matches!(cfg.mode, Mode::Trajectory { .. }) {
        return Err(QcaError::InvalidParameter("evolve_pure requires trajectory mode".into()));
    }
    cfg.validate(sites)?;
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > TRACE_TOL {
        return Err(QcaError::InvalidParameter(format!("state norm² {norm}")));
    }
    run_trajectories(sites, &[(1.0, psi0.to_vec())], params, cfg, two_point)
}

/// Basis-state amplitude vector for a pattern.
pub fn basis_state(pattern: &[bool]) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); 1 << pattern.len()];
    v[basis_index(pattern)] = C64::new(1.0, 0.0);
    v
}

#[derive(Clone)]
struct Accum {
    n: Vec<Vec<f64>>,
    sx: Vec<Vec<f64>>,
    sy: Vec<Vec<f64>>,
    density_sq: Vec<f64>,
    overlap: Vec<f64>,
    pairs: usize,
    two: Option<Vec<Vec<Vec<f64>>>>,
}

impl Accum {
    fn new(snapshots: usize, sites: usize, two_point: bool) -> Self {
        Self {
            n: vec![vec![0.0; sites]; snapshots],
            sx: vec![vec![0.0; sites]; snapshots],
            sy: vec![vec![0.0; sites]; snapshots],
            density_sq: vec![0.0; snapshots],
            overlap: vec![0.0; snapshots],
            pairs: 0,
            two: two_point.then(|| vec![vec![vec![0.0; sites]; sites]; snapshots]),
        }
    }

    fn add_obs(&mut self, t: usize, obs: &RowObservables) {
        for k in 0..obs.n.len() {
            self.n[t][k] += obs.n[k];
            self.sx[t][k] += obs.sx[k];
            self.sy[t][k] += obs.sy[k];
        }
        self.density_sq[t] += obs.mean_density * obs.mean_density;
        if let (Some(acc), Some(m)) = (self.two.as_mut(), obs.two_point.as_ref()) {
            for (row_acc, row) in acc[t].iter_mut().zip(m) {
                for (a, b) in row_acc.iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
    }

    fn merge(&mut self, other: &Accum) {
        let add = |a: &mut Vec<Vec<f64>>, b: &Vec<Vec<f64>>| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
        };
        add(&mut self.n, &other.n);
        add(&mut self.sx, &other.sx);
        add(&mut self.sy, &other.sy);
        for (x, y) in self.density_sq.iter_mut().zip(&other.density_sq) {
            *x += y;
        }
        for (x, y) in self.overlap.iter_mut().zip(&other.overlap) {
            *x += y;
        }
        self.pairs += other.pairs;
        if let (Some(a), Some(b)) = (self.two.as_mut(), other.two.as_ref()) {
            for (ta, tb) in a.iter_mut().zip(b) {
                add(ta, tb);
            }
        }
    }
}

const TRAJECTORY_CHUNK: usize = 512;

fn sample_initial<'a, R: Rng>(ensemble: &'a [(f64, Vec<C64>)], rng: &mut R) -> &'a [C64] {
    if ensemble.len() == 1 {
        return &ensemble[0].1;
    }
    let total: f64 = ensemble.iter().map(|(w, _)| w).sum();
    let mut draw = rng.random::<f64>() * total;
    for (w, v) in ensemble {
        if draw < *w {
            return v;
        }
        draw -= w;
    }
    &ensemble[ensemble.len() - 1].1
}

fn run_trajectories(
    sites: usize,
    ensemble: &[(f64, Vec<C64>)],
    params: &GateParams,
    cfg: &EvolutionConfig,
    two_point: bool,
) -> Result<Evolution> {
    let Mode::Trajectory { samples, seed } = cfg.mode else {
        unreachable!("trajectory mode checked by caller")
    };
    let snapshots = cfg.steps + 1;
    let template = TrajectoryStepper::new(sites, params, cfg)?;
    let chunks = samples.div_ceil(TRAJECTORY_CHUNK);
    // Chunks are reduced in index order so the result does not depend on the
    // thread schedule.
    let partials: Vec<Accum> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stepper = template.clone();
            let mut acc = Accum::new(snapshots, sites, two_point);
            let start = chunk * TRAJECTORY_CHUNK;
            let end = (start + TRAJECTORY_CHUNK).min(samples);
            let mut sample = start;
            while sample < end {
                // Samples are stepped in pairs so that Tr ρ² can be estimated
                // from overlaps of independent trajectories.
                let width = if sample + 1 < end { 2 } else { 1 };
                let mut rngs: Vec<ChaCha8Rng> = (0..width)
                    .map(|j| {
                        let mut r = ChaCha8Rng::seed_from_u64(seed);
                        r.set_stream((sample + j) as u64);
                        r
                    })
                    .collect();
                let mut states: Vec<Vec<C64>> = rngs
                    .iter_mut()
                    .map(|r| sample_initial(ensemble, r).to_vec())
                    .collect();
                for t in 0..snapshots {
                    if t > 0 {
                        for (s, r) in states.iter_mut().zip(rngs.iter_mut()) {
                            stepper.step_resampling(s, r);
                        }
                    }
                    for s in &states {
                        acc.add_obs(t, &pure_observables(s, sites, two_point));
                    }
                    if width == 2 {
                        let ov: C64 = states[0]
                            .iter()
                            .zip(&states[1])
                            .map(|(a, b)| a.conj() * b)
                            .sum();
                        acc.overlap[t] += ov.norm_sqr();
                    }
                }
                if width == 2 {
                    acc.pairs += 1;
                }
                sample += width;
            }
            acc
        })
        .collect();
    let mut total = Accum::new(snapshots, sites, two_point);
    for p in &partials {
        total.merge(p);
    }
    let m = samples as f64;
    let mut out = Vec::with_capacity(snapshots);
    let mut stderr = Vec::with_capacity(snapshots);
    for t in 0..snapshots {
        let n: Vec<f64> = total.n[t].iter().map(|v| v / m).collect();
        let sx: Vec<f64> = total.sx[t].iter().map(|v| v / m).collect();
        let sy: Vec<f64> = total.sy[t].iter().map(|v| v / m).collect();
        let purity = if total.pairs > 0 {
            total.overlap[t] / total.pairs as f64
        } else {
            f64::NAN
        };
        let two = total
            .two
            .as_ref()
            .map(|tw| tw[t].iter().map(|r| r.iter().map(|v| v / m).collect()).collect());
        let obs = RowObservables::new(n, sx, sy, purity, two);
        let var = if samples > 1 {
            ((total.density_sq[t] / m - obs.mean_density * obs.mean_density) * m / (m - 1.0)).max(0.0)
        } else {
            0.0
        };
        stderr.push((var / m).sqrt());
        out.push(obs);
    }
    Ok(Evolution {
        snapshots: out,
        density_stderr: Some(stderr),
    })
}
