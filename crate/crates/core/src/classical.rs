//! Classical limit: the probabilistic automaton obtained from the commuting
//! gate, its exact transition matrix for small rows, trial statistics and the
//! continuous-time contact process.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QcaError, Result};
use crate::exact::Boundary;
use crate::gates::GateParams;

/// Largest row for which the dense transition matrix is assembled.
pub const TRANSITION_MAX_SITES: usize = 10;

/// Occupation bits of one row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitRow {
    bits: Vec<bool>,
}

impl BitRow {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn empty(sites: usize) -> Self {
        Self::new(vec![false; sites])
    }

    pub fn full(sites: usize) -> Self {
        Self::new(vec![true; sites])
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn occupied(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        self.occupied() as f64 / self.len() as f64
    }

    pub fn is_absorbed(&self) -> bool {
        self.bits.iter().all(|b| !b)
    }

    /// Basis index with bit `k` for site `k`.
    pub fn index(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &b)| acc | ((b as usize) << k))
    }

    pub fn from_index(index: usize, sites: usize) -> Self {
        Self::new((0..sites).map(|k| index >> k & 1 == 1).collect())
    }

    /// `(left, center, right)` occupation of the neighbourhood of site `k`.
    pub fn neighborhood(&self, k: usize, boundary: Boundary) -> Neighborhood {
        let l = self.len();
        let get = |i: Option<usize>| i.map(|i| self.bits[i]).unwrap_or(false);
        let (left, right) = match boundary {
            Boundary::FixedEmpty => (k.checked_sub(1), (k + 1 < l).then_some(k + 1)),
            Boundary::Periodic => (Some((k + l - 1) % l), Some((k + 1) % l)),
        };
        Neighborhood {
            left: get(left),
            center: self.bits[k],
            right: get(right),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Neighborhood {
    pub left: bool,
    pub center: bool,
    pub right: bool,
}

impl Neighborhood {
    pub fn from_bits(bits: u8) -> Self {
        Self {
            left: bits & 4 != 0,
            center: bits & 2 != 0,
            right: bits & 1 != 0,
        }
    }
}

/// Probability that the target becomes occupied given its parents.
pub fn target_occupation_prob(neigh: Neighborhood, params: &GateParams) -> f64 {
    let outer_empty = !neigh.left && !neigh.right;
    match (outer_empty, neigh.center) {
        (true, true) => params.q_dec(),
        (true, false) => 0.0,
        (false, true) => params.p_coag(),
        (false, false) => params.p_branch(),
    }
}

/// Synchronous update: every target reads the frozen parent row.
pub fn pca_step<R: Rng + ?Sized>(row: &BitRow, params: &GateParams, boundary: Boundary, rng: &mut R) -> BitRow {
    let bits = (0..row.len())
        .map(|k| {
            let p = target_occupation_prob(row.neighborhood(k, boundary), params);
            // p = 0 never fires, p = 1 always fires.
            rng.random::<f64>() < p
        })
        .collect();
    BitRow::new(bits)
}

/// Column-stochastic matrix `T[b][a] = P(row b | row a)`.
pub fn transition_matrix(sites: usize, params: &GateParams, boundary: Boundary) -> Result<DMatrix<f64>> {
    if sites == 0 || sites > TRANSITION_MAX_SITES {
        return Err(QcaError::Capacity {
            what: "transition-matrix sites",
            requested: sites,
            limit: TRANSITION_MAX_SITES,
        });
    }
    let dim = 1usize << sites;
    let mut t = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        let row = BitRow::from_index(a, sites);
        let probs: Vec<f64> = (0..sites)
            .map(|k| target_occupation_prob(row.neighborhood(k, boundary), params))
            .collect();
        for b in 0..dim {
            t[(b, a)] = probs
                .iter()
                .enumerate()
                .map(|(k, &p)| if b >> k & 1 == 1 { p } else { 1.0 - p })
                .product();
        }
    }
    Ok(t)
}

/// Trial-averaged density and survival time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalStats {
    pub density: Vec<f64>,
    pub density_stderr: Vec<f64>,
    pub survival: Vec<f64>,
    pub survival_stderr: Vec<f64>,
    pub trials: usize,
}

/// Settings for [`sample_statistics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub steps: usize,
    pub trials: usize,
    pub boundary: Boundary,
    pub seed: u64,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Runs independent trials from `initial`; trial `i` uses stream `i` of the
/// seeded generator, so results do not depend on scheduling.
pub fn sample_statistics(initial: &BitRow, params: &GateParams, cfg: &SamplingConfig) -> Result<SurvivalStats> {
    if cfg.trials == 0 {
        return Err(QcaError::InvalidParameter("trials must be >= 1".into()));
    }
    if initial.is_empty() {
        return Err(QcaError::InvalidParameter("row must have at least one site".into()));
    }
    let snapshots = cfg.steps + 1;
    let runs: Vec<Vec<f64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let mut row = initial.clone();
            let mut dens = vec![0.0; snapshots];
            dens[0] = row.density();
            for d in dens.iter_mut().skip(1) {
                if row.is_absorbed() {
                    // Absorbed: the rest of the series stays zero.
                    break;
                }
                row = pca_step(&row, params, cfg.boundary, &mut rng);
                *d = row.density();
            }
            dens
        })
        .collect();
    let m = cfg.trials as f64;
    let mut stats = SurvivalStats {
        density: vec![0.0; snapshots],
        density_stderr: vec![0.0; snapshots],
        survival: vec![0.0; snapshots],
        survival_stderr: vec![0.0; snapshots],
        trials: cfg.trials,
    };
    for t in 0..snapshots {
        let d: Vec<f64> = runs.iter().map(|r| r[t]).collect();
        let s: Vec<f64> = d.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let (mean_d, se_d) = mean_stderr(&d);
        let mean_s = s.iter().sum::<f64>() / m;
        stats.density[t] = mean_d;
        stats.density_stderr[t] = se_d;
        stats.survival[t] = mean_s;
        stats.survival_stderr[t] = if cfg.trials > 1 {
            (mean_s * (1.0 - mean_s) / (m - 1.0)).sqrt()
        } else {
            0.0
        };
    }
    Ok(stats)
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Continuous-time contact-process rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CPRates {
    pub kappa_c: f64,
    pub kappa_b: f64,
    pub gamma: f64,
    pub dt: f64,
}

impl CPRates {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.kappa_c, self.kappa_b, self.gamma].iter().all(|r| r.is_finite() && *r >= 0.0);
        if !ok {
            return Err(QcaError::InvalidParameter(format!("rates must be nonnegative: {self:?}")));
        }
        Ok(())
    }
}

/// Rates read off a synchronous gate; `negative_kappa_c` marks parameter
/// points outside the physical contact-process family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateMapping {
    pub rates: CPRates,
    pub negative_kappa_c: bool,
}

/// Probability differences below this are treated as round-off when
/// deciding whether a rate is negative.
pub const RATE_TOL: f64 = 1e-12;

pub fn ct_rates_from_probs(params: &GateParams, dt: f64) -> Result<RateMapping> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QcaError::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let kappa_c = (params.q_dec() - params.p_coag()) / dt;
    Ok(RateMapping {
        rates: CPRates {
            kappa_c,
            kappa_b: params.p_branch() / dt,
            gamma: params.p_dec() / dt,
            dt,
        },
        negative_kappa_c: kappa_c * dt < -RATE_TOL,
    })
}

/// Gate parameters whose synchronous mean-field recursion is the forward
/// Euler discretization of the contact-process equation with step `dt`.
pub fn probs_from_rates(rates: &CPRates) -> Result<GateParams> {
    let dt = rates.dt;
    GateParams::new(
        rates.gamma * dt,
        1.0 - rates.gamma * dt - rates.kappa_c * dt,
        rates.kappa_b * dt,
        0.0,
        0.0,
    )
}

/// Right-hand side `-γn + [1 − (1−n)²][κ_b − (κ_b+κ_c) n]`.
pub fn cp_mf_rhs(rates: &CPRates, n: f64) -> f64 {
    let active = 1.0 - (1.0 - n) * (1.0 - n);
    -rates.gamma * n + active * (rates.kappa_b - (rates.kappa_b + rates.kappa_c) * n)
}

/// Fixed points of the contact-process mean-field equation in `[0, 1]`,
/// ascending. Zero is always included.
pub fn cp_stationary_roots(rates: &CPRates) -> Vec<f64> {
    // n = 0, or (2 − n)(κ_b − K n) = γ with K = κ_b + κ_c:
    // K n² − (2K + κ_b) n + (2κ_b − γ) = 0.
    let k = rates.kappa_b + rates.kappa_c;
    let a = k;
    let b = -(2.0 * k + rates.kappa_b);
    let c = 2.0 * rates.kappa_b - rates.gamma;
    let mut roots = vec![0.0];
    if a.abs() < 1e-300 {
        if b != 0.0 {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // Numerically stable pair.
            let qv = -0.5 * (b + b.signum() * sq);
            roots.push(qv / a);
            if qv != 0.0 {
                roots.push(c / qv);
            }
        }
    }
    let mut roots: Vec<f64> = roots
        .into_iter()
        .filter(|r| (-1e-12..=1.0 + 1e-12).contains(r))
        .map(|r| r.clamp(0.0, 1.0))
        .collect();
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    roots
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpTrajectory {
    pub times: Vec<f64>,
    pub density: Vec<f64>,
    pub stationary_roots: Vec<f64>,
}

/// Integrates the contact-process mean-field equation with classical RK4.
pub fn cp_mf_ode(rates: &CPRates, n0: f64, t_max: f64, dt_int: f64) -> Result<CpTrajectory> {
    rates.validate()?;
    if !(0.0..=1.0).contains(&n0) {
        return Err(QcaError::InvalidParameter(format!("n0 = {n0} must lie in [0, 1]")));
    }
    if !(dt_int > 0.0) || !(t_max >= 0.0) {
        return Err(QcaError::InvalidParameter("t_max >= 0 and dt_int > 0 required".into()));
    }
    let steps = (t_max / dt_int).round() as usize;
    let h = if steps == 0 { 0.0 } else { t_max / steps as f64 };
    let mut times = Vec::with_capacity(steps + 1);
    let mut density = Vec::with_capacity(steps + 1);
    let mut n = n0;
    times.push(0.0);
    density.push(n);
    let f = |x: f64| cp_mf_rhs(rates, x);
    for i in 1..=steps {
        let k1 = f(n);
        let k2 = f(n + 0.5 * h * k1);
        let k3 = f(n + 0.5 * h * k2);
        let k4 = f(n + h * k3);
        n += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !(-1e-9..=1.0 + 1e-9).contains(&n) {
            return Err(QcaError::Numerical(format!(
                "density {n} left [0, 1] at t = {}; reduce dt_int",
                i as f64 * h
            )));
        }
        times.push(i as f64 * h);
        density.push(n);
    }
    Ok(CpTrajectory {
        times,
        density,
        stationary_roots: cp_stationary_roots(rates),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(p_branch: f64) -> GateParams {
        GateParams::from_q_dec(0.1, 0.1, p_branch, 0.1, 0.0).unwrap()
    }

    #[test]
    fn occupation_probabilities() {
        let p = GateParams::new(0.25, 0.3, 0.6, 0.1, 0.7).unwrap();
        let nb = |s: &str| Neighborhood::from_bits(u8::from_str_radix(s, 2).unwrap());
        assert_eq!(target_occupation_prob(nb("010"), &p), 0.75);
        assert_eq!(target_occupation_prob(nb("000"), &p), 0.0);
        assert_eq!(target_occupation_prob(nb("100"), &p), 0.6);
        assert_eq!(target_occupation_prob(nb("111"), &p), 0.3);
    }

    #[test]
    fn absorbing_row_stays_empty() {
        let mut rng = trial_rng(1, 0);
        let p = GateParams::new(0.0, 1.0, 1.0, 0.5, 0.0).unwrap();
        for boundary in [Boundary::FixedEmpty, Boundary::Periodic] {
            assert!(pca_step(&BitRow::empty(32), &p, boundary, &mut rng).is_absorbed());
        }
    }

    #[test]
    fn transition_matrix_is_stochastic() {
        let t = transition_matrix(4, &params(0.6), Boundary::Periodic).unwrap();
        for a in 0..16 {
            assert_abs_diff_eq!(t.column(a).sum(), 1.0, epsilon = 1e-14);
        }
        assert_eq!(t[(0, 0)], 1.0);
        assert!(transition_matrix(11, &params(0.6), Boundary::Periodic).is_err());
    }

    #[test]
    fn rates_from_probabilities() {
        let p = GateParams::from_q_dec(0.1, 0.1, 0.5, 0.1, 0.0).unwrap();
        let m = ct_rates_from_probs(&p, 0.01).unwrap();
        assert_abs_diff_eq!(m.rates.kappa_c, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rates.kappa_b, 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rates.gamma, 90.0, epsilon = 1e-12);
        assert!(!m.negative_kappa_c);

        let p = GateParams::from_q_dec(0.2, 0.1, 0.5, 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(ct_rates_from_probs(&p, 1.0).unwrap().rates.kappa_c, 0.1, epsilon = 1e-15);

        let p = GateParams::from_q_dec(0.1, 0.4, 0.5, 0.1, 0.0).unwrap();
        assert!(ct_rates_from_probs(&p, 1.0).unwrap().negative_kappa_c);
        assert!(ct_rates_from_probs(&p, 0.0).is_err());
    }

    #[test]
    fn ode_absorbing_and_roots() {
        let rates = CPRates {
            kappa_c: 0.5,
            kappa_b: 2.0,
            gamma: 0.0,
            dt: 1.0,
        };
        let traj = cp_mf_ode(&rates, 0.0, 5.0, 0.01).unwrap();
        assert!(traj.density.iter().all(|&n| n == 0.0));
        assert_eq!(*traj.stationary_roots.last().unwrap(), 2.0 / 2.5);
        assert!(cp_mf_ode(&rates, 1.5, 1.0, 0.1).is_err());
    }

    #[test]
    fn stationary_roots_satisfy_equation() {
        let rates = CPRates {
            kappa_c: 0.3,
            kappa_b: 1.7,
            gamma: 0.9,
            dt: 1.0,
        };
        let roots = cp_stationary_roots(&rates);
        assert!(roots.len() >= 2);
        for r in roots {
            assert!(cp_mf_rhs(&rates, r).abs() < 1e-12);
        }
    }

    #[test]
    fn survival_without_branching() {
        let p = GateParams::new(0.3, 0.5, 0.0, 0.1, 0.0).unwrap();
        let cfg = SamplingConfig {
            steps: 60,
            trials: 200,
            boundary: Boundary::Periodic,
            seed: 5,
        };
        let s = sample_statistics(&BitRow::full(20), &p, &cfg).unwrap();
        for w in s.survival.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(*s.density.last().unwrap() < 1e-2);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = SamplingConfig {
            steps: 20,
            trials: 64,
            boundary: Boundary::FixedEmpty,
            seed: 11,
        };
        let a = sample_statistics(&BitRow::full(16), &params(0.7), &cfg).unwrap();
        let b = sample_statistics(&BitRow::full(16), &params(0.7), &cfg).unwrap();
        assert_eq!(a, b);
    }
}
