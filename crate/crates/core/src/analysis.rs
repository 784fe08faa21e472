//! Phase-diagram sweeps of the mean-field map, critical-line extraction and
//! classification of the transition order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QcaError, Result};
use crate::gates::GateParams;
use crate::meanfield::{absorbing_growth_factor, stationary, stationary_converged, MFState, DEFAULT_ITERS};
use crate::qcp::g_ratio;

/// Density of the low initial condition used by the hysteresis detector.
pub const LOW_INIT_DENSITY: f64 = 1e-3;

/// Default level defining the critical line.
pub const CRITICAL_LEVEL: f64 = 0.1;

/// The gate parameters held fixed across a sweep of `(λ, p_branch)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseParams {
    pub p_dec: f64,
    pub p_coag: f64,
    pub p_plus: f64,
}

impl BaseParams {
    /// Decay, coagulation and `U_+` probabilities all 0.1: isolated occupied
    /// sites survive with probability 0.9. This is the parameter point at which
    /// the mean-field transition turns first order near λ ≈ 0.91.
    pub const REFERENCE: BaseParams = BaseParams {
        p_dec: 0.1,
        p_coag: 0.1,
        p_plus: 0.1,
    };

    pub fn from_q_dec(q_dec: f64, p_coag: f64, p_plus: f64) -> Result<Self> {
        let b = Self {
            p_dec: 1.0 - q_dec,
            p_coag,
            p_plus,
        };
        b.at(0.0, 0.0)?;
        Ok(b)
    }

    pub fn q_dec(&self) -> f64 {
        1.0 - self.p_dec
    }

    pub fn at(&self, p_branch: f64, lambda: f64) -> Result<GateParams> {
        GateParams::new(self.p_dec, self.p_coag, p_branch, self.p_plus, lambda)
    }
}

/// Initial single-site state of a stationary-density run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// Fully occupied, no coherence.
    #[default]
    High,
    /// Density 10⁻³, no coherence.
    Low,
}

impl InitialCondition {
    pub fn state(&self) -> MFState {
        match self {
            InitialCondition::High => MFState::FULL,
            InitialCondition::Low => MFState {
                n: LOW_INIT_DENSITY,
                x: 0.0,
                y: 0.0,
            },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            InitialCondition::High => "high",
            InitialCondition::Low => "low",
        }
    }
}

/// `n` evenly spaced points from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(QcaError::InvalidParameter(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(QcaError::InvalidParameter(format!("{name} grid leaves [0, 1]")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QcaError::InvalidParameter(format!("{name} grid is not ascending")));
    }
    Ok(())
}

/// Stationary densities on a `(λ, p_branch)` grid; `n_inf[i][j]` belongs to
/// `lambda_grid[i]`, `p_branch_grid[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub lambda_grid: Vec<f64>,
    pub p_branch_grid: Vec<f64>,
    pub n_inf: Vec<Vec<f64>>,
    pub init: InitialCondition,
    pub iters: usize,
    pub base: BaseParams,
}

fn stationary_density(base: &BaseParams, p_branch: f64, lambda: f64, iters: usize, init: InitialCondition) -> Result<f64> {
    let params = base.at(p_branch, lambda)?;
    stationary(&params, &init.state(), iters)
        .map(|s| s.state.n)
        .map_err(|e| QcaError::Numerical(format!("at lambda = {lambda}, p_branch = {p_branch}: {e}")))
}

pub fn sweep(
    base: &BaseParams,
    lambda_grid: &[f64],
    p_grid: &[f64],
    iters: usize,
    init: InitialCondition,
) -> Result<PhaseDiagram> {
    check_grid("lambda", lambda_grid)?;
    check_grid("p_branch", p_grid)?;
    let cols = p_grid.len();
    let flat: Vec<f64> = (0..lambda_grid.len() * cols)
        .into_par_iter()
        .map(|idx| stationary_density(base, p_grid[idx % cols], lambda_grid[idx / cols], iters, init))
        .collect::<Result<_>>()?;
    Ok(PhaseDiagram {
        lambda_grid: lambda_grid.to_vec(),
        p_branch_grid: p_grid.to_vec(),
        n_inf: flat.chunks(cols).map(|c| c.to_vec()).collect(),
        init,
        iters,
        base: *base,
    })
}

/// One point of a critical line; `p_c` is `None` where no crossing exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    pub lambda: f64,
    pub p_c: Option<f64>,
}

/// First upward crossing of `level` along each λ row, linearly interpolated.
pub fn critical_contour_from_diagram(diagram: &PhaseDiagram, level: f64) -> Vec<ContourPoint> {
    let ps = &diagram.p_branch_grid;
    diagram
        .lambda_grid
        .iter()
        .zip(&diagram.n_inf)
        .map(|(&lambda, row)| {
            let p_c = (1..row.len()).find(|&j| row[j - 1] < level && row[j] >= level).map(|j| {
                let t = (level - row[j - 1]) / (row[j] - row[j - 1]);
                ps[j - 1] + t * (ps[j] - ps[j - 1])
            });
            ContourPoint { lambda, p_c }
        })
        .collect()
}

/// Bisection tolerance on `p_branch` for refined critical points.
pub const CONTOUR_TOL: f64 = 1e-4;

/// `p_branch` at which the stationary density (from the high initial
/// condition) first reaches `level`, refined by bisection to `tol`.
pub fn critical_point(base: &BaseParams, lambda: f64, level: f64, iters: usize, tol: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(QcaError::InvalidParameter(format!("level = {level} must lie in (0, 1)")));
    }
    let density = |p: f64| stationary_density(base, p, lambda, iters, InitialCondition::High);
    let coarse = linspace(0.0, 1.0, 101);
    let mut prev = (coarse[0], density(coarse[0])?);
    let mut bracket = None;
    if prev.1 >= level {
        return Err(QcaError::Bracket(format!("density above level at p_branch = 0 (lambda = {lambda})")));
    }
    for &p in &coarse[1..] {
        let n = density(p)?;
        if n >= level {
            bracket = Some((prev.0, p));
            break;
        }
        prev = (p, n);
    }
    let (mut lo, mut hi) =
        bracket.ok_or_else(|| QcaError::Bracket(format!("no crossing of n = {level} at lambda = {lambda}")))?;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if density(mid)? >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection-refined critical line; λ values without a bracket get `None`.
pub fn critical_contour(base: &BaseParams, lambdas: &[f64], level: f64, iters: usize, tol: f64) -> Result<Vec<ContourPoint>> {
    lambdas
        .par_iter()
        .map(|&lambda| match critical_point(base, lambda, level, iters, tol) {
            Ok(p) => Ok(ContourPoint { lambda, p_c: Some(p) }),
            Err(QcaError::Bracket(_)) => Ok(ContourPoint { lambda, p_c: None }),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionOrder {
    Continuous,
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub p_resolution: f64,
    pub jump_threshold: f64,
    pub hysteresis_threshold: f64,
    pub iters: usize,
    pub level: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            p_resolution: 1e-3,
            jump_threshold: 0.05,
            hysteresis_threshold: 0.05,
            iters: DEFAULT_ITERS,
            level: CRITICAL_LEVEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub lambda: f64,
    /// `level` crossing of the high-density branch.
    pub p_c: Option<f64>,
    pub order: TransitionOrder,
    /// Largest adjacent difference of the high-density branch.
    pub jump: f64,
    /// Largest difference between the high- and low-initialized branches.
    pub hysteresis: f64,
}

/// Scans `p_branch` over `[0, 1]` from both initial conditions and decides
/// the transition order by the jump and hysteresis thresholds.
pub fn classify_transition(lambda: f64, base: &BaseParams, cfg: &ClassifierConfig) -> Result<TransitionReport> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(QcaError::InvalidParameter(format!("lambda = {lambda} must lie in [0, 1]")));
    }
    if !(cfg.p_resolution > 0.0 && cfg.p_resolution <= 1.0) {
        return Err(QcaError::InvalidParameter("p_resolution must lie in (0, 1]".into()));
    }
    let points = (1.0 / cfg.p_resolution).round() as usize + 1;
    let ps = linspace(0.0, 1.0, points);
    let run = |init: InitialCondition| -> Result<Vec<f64>> {
        ps.par_iter()
            .map(|&p| stationary_density(base, p, lambda, cfg.iters, init))
            .collect()
    };
    let high = run(InitialCondition::High)?;
    let low = run(InitialCondition::Low)?;
    let jump = high.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let hysteresis = high.iter().zip(&low).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let order = if jump > cfg.jump_threshold || hysteresis > cfg.hysteresis_threshold {
        TransitionOrder::FirstOrder
    } else {
        TransitionOrder::Continuous
    };
    let p_c = (1..high.len())
        .find(|&j| high[j - 1] < cfg.level && high[j] >= cfg.level)
        .map(|j| {
            let t = (cfg.level - high[j - 1]) / (high[j] - high[j - 1]);
            ps[j - 1] + t * (ps[j] - ps[j - 1])
        });
    Ok(TransitionReport {
        lambda,
        p_c,
        order,
        jump,
        hysteresis,
    })
}

/// Bisects λ on the transition order between the ends of `bracket`.
pub fn find_lambda_star(base: &BaseParams, bracket: (f64, f64), tol: f64, cfg: &ClassifierConfig) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(QcaError::InvalidParameter(format!("bracket {bracket:?} is empty")));
    }
    let order_lo = classify_transition(lo, base, cfg)?.order;
    let order_hi = classify_transition(hi, base, cfg)?.order;
    if order_lo == order_hi {
        return Err(QcaError::Bracket(format!(
            "transition is {order_lo:?} at both lambda = {lo} and lambda = {hi}"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if classify_transition(mid, base, cfg)?.order == order_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRow {
    pub lambda: f64,
    pub p_c: Option<f64>,
    pub g_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalTable {
    pub rows: Vec<CriticalRow>,
    pub lambda_star: Option<f64>,
    pub p_star: Option<f64>,
    pub g_star: Option<f64>,
    pub warnings: Vec<String>,
}

/// Tolerance of the λ* bisection.
pub const LAMBDA_STAR_TOL: f64 = 5e-3;

fn g_at(base: &BaseParams, p_c: f64, lambda: f64) -> Result<Option<f64>> {
    match g_ratio(&base.at(p_c, lambda)?) {
        Ok(g) => Ok(Some(g)),
        Err(QcaError::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `(λ, p_c, g_c)` along the critical line, plus `λ*` searched between the
/// ends of `lambdas` and `g* = g_c(λ*)`.
pub fn g_along_critical(base: &BaseParams, lambdas: &[f64], cfg: &ClassifierConfig) -> Result<CriticalTable> {
    if lambdas.is_empty() {
        return Err(QcaError::InvalidParameter("lambda range is empty".into()));
    }
    let contour = critical_contour(base, lambdas, cfg.level, cfg.iters, CONTOUR_TOL)?;
    let mut warnings = Vec::new();
    let mut rows = Vec::with_capacity(contour.len());
    for pt in contour {
        let g_c = match pt.p_c {
            Some(p) => g_at(base, p, pt.lambda)?,
            None => {
                warnings.push(format!("no critical point at lambda = {}", pt.lambda));
                None
            }
        };
        rows.push(CriticalRow {
            lambda: pt.lambda,
            p_c: pt.p_c,
            g_c,
        });
    }
    let first = lambdas[0];
    let last = lambdas[lambdas.len() - 1];
    let (mut lambda_star, mut p_star, mut g_star) = (None, None, None);
    if last > first {
        match find_lambda_star(base, (first, last), LAMBDA_STAR_TOL, cfg) {
            Ok(ls) => {
                lambda_star = Some(ls);
                match critical_point(base, ls, cfg.level, cfg.iters, CONTOUR_TOL) {
                    Ok(p) => {
                        p_star = Some(p);
                        g_star = g_at(base, p, ls)?;
                    }
                    Err(QcaError::Bracket(m)) => warnings.push(m),
                    Err(e) => return Err(e),
                }
            }
            Err(QcaError::Bracket(m)) => warnings.push(format!("no asynchronism transition in range: {m}")),
            Err(e) => return Err(e),
        }
    }
    Ok(CriticalTable {
        rows,
        lambda_star,
        p_star,
        g_star,
        warnings,
    })
}

/// Log–log fit of the stationary density against the distance to the
/// continuous threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub lambda: f64,
    /// Threshold where the absorbing state loses linear stability.
    pub p_c: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// False when the onset is not continuous (large density at the window
    /// start or a poor power law).
    pub valid: bool,
}

/// Window `(δ_min, δ_max)` above threshold and number of log-spaced samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            delta_min: 1e-3,
            delta_max: 1e-2,
            points: 10,
        }
    }
}

/// Linear-stability threshold of the absorbing state in `p_branch`.
pub fn continuous_threshold(base: &BaseParams, lambda: f64) -> Result<f64> {
    let growth = |p: f64| -> Result<f64> { Ok(absorbing_growth_factor(&base.at(p, lambda)?) - 1.0) };
    let (mut lo, mut hi) = (0.0, 1.0);
    let (g_lo, g_hi) = (growth(lo)?, growth(hi)?);
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(QcaError::Fit(format!(
            "absorbing state does not lose stability for p_branch in [0, 1] at lambda = {lambda}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if growth(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

const FIT_TOL: f64 = 1e-15;
const FIT_MAX_ITERS: usize = 5_000_000;

pub fn fit_mf_beta(lambda: f64, base: &BaseParams, window: &FitWindow) -> Result<BetaFit> {
    if !(window.delta_min > 0.0 && window.delta_max > window.delta_min && window.points >= 2) {
        return Err(QcaError::InvalidParameter(format!("bad fit window {window:?}")));
    }
    let p_c = continuous_threshold(base, lambda)?;
    if p_c + window.delta_max > 1.0 {
        return Err(QcaError::Fit(format!("window exceeds p_branch = 1 (p_c = {p_c})")));
    }
    let ratio = window.delta_max / window.delta_min;
    let deltas: Vec<f64> = (0..window.points)
        .map(|i| window.delta_min * ratio.powf(i as f64 / (window.points - 1) as f64))
        .collect();
    let densities: Vec<f64> = deltas
        .par_iter()
        .map(|&d| {
            let params = base.at(p_c + d, lambda)?;
            Ok(stationary_converged(&params, &MFState::FULL, FIT_TOL, FIT_MAX_ITERS)?.state.n)
        })
        .collect::<Result<_>>()?;
    if densities.iter().all(|&n| n < 1e-12) {
        return Err(QcaError::Fit("window lies entirely in the absorbing phase".into()));
    }
    if densities.iter().any(|&n| n <= 0.0) {
        return Err(QcaError::Fit("nonpositive density inside the window".into()));
    }
    let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = densities.iter().map(|n| n.ln()).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys);
    let valid = densities[0] < 10.0 * window.delta_max.max(window.delta_min * 10.0) && r_squared > 0.999;
    Ok(BetaFit {
        lambda,
        p_c,
        slope,
        intercept,
        r_squared,
        valid,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    (slope, my - slope * mx, r2)
}
