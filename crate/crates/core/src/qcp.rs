//! Correspondence between the automaton's mean-field coefficients and the
//! rates of a quantum contact process discretized with time step `dt`.

use serde::{Deserialize, Serialize};

use crate::error::{QcaError, Result};
use crate::gates::GateParams;
use crate::meanfield::{coefficients, MFCoefficients};

/// Quantum contact process rates. `g = Ω/κ_b` is `None` when `κ_b = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QCPRates {
    pub gamma: f64,
    pub kappa_c: f64,
    pub kappa_b: f64,
    pub omega: f64,
    pub dt: f64,
    pub g: Option<f64>,
}

impl QCPRates {
    pub fn new(gamma: f64, kappa_c: f64, kappa_b: f64, omega: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(QcaError::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let g = (kappa_b > 0.0).then(|| omega / kappa_b);
        Ok(Self {
            gamma,
            kappa_c,
            kappa_b,
            omega,
            dt,
            g,
        })
    }
}

/// Discretized coefficients plus a flag raised when any of `r_dec`, `r_coag`,
/// `r_branch` leaves `[0, 1]` (the step is too large for these rates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretized {
    pub coefficients: MFCoefficients,
    pub invalid_discretization: bool,
}

pub fn qcp_coefficients(rates: &QCPRates) -> Discretized {
    let dt = rates.dt;
    let c = MFCoefficients {
        r_dec: 1.0 - rates.gamma * dt,
        r_coag: 1.0 - rates.gamma * dt - rates.kappa_c * dt,
        r_branch: rates.kappa_b * dt,
        r_star: rates.omega * dt,
    };
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    Discretized {
        coefficients: c,
        invalid_discretization: !(in_unit(c.r_dec) && in_unit(c.r_coag) && in_unit(c.r_branch)),
    }
}

/// QCP rates whose discretization reproduces the automaton's coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcpMapping {
    pub rates: QCPRates,
    pub negative_kappa_c: bool,
}

pub fn map_qca_to_qcp(params: &GateParams, dt: f64) -> Result<QcpMapping> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QcaError::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let c = coefficients(params);
    let kappa_c = (c.r_dec - c.r_coag) / dt;
    let mut rates = QCPRates::new((1.0 - c.r_dec) / dt, kappa_c, c.r_branch / dt, c.r_star / dt, dt)?;
    // Ratio taken from the coefficients directly so it is independent of dt.
    rates.g = (c.r_branch > 0.0).then(|| c.r_star / c.r_branch);
    Ok(QcpMapping {
        rates,
        negative_kappa_c: kappa_c * dt < -crate::classical::RATE_TOL,
    })
}

/// Ratio of coherent to incoherent branching, `r_* / r_◦`.
pub fn g_ratio(params: &GateParams) -> Result<f64> {
    let c = coefficients(params);
    if c.r_branch > 0.0 {
        Ok(c.r_star / c.r_branch)
    } else {
        Err(QcaError::Undefined("g = Ω/κ_b with zero branching".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn classical_rates_discretize_exactly() {
        let r = QCPRates::new(0.9, 0.0, 0.5, 0.0, 1.0).unwrap();
        let d = qcp_coefficients(&r);
        assert_abs_diff_eq!(d.coefficients.r_dec, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(d.coefficients.r_coag, 0.1, epsilon = 1e-15);
        assert_eq!(d.coefficients.r_branch, 0.5);
        assert_eq!(d.coefficients.r_star, 0.0);
        assert!(!d.invalid_discretization);
    }

    #[test]
    fn large_step_is_flagged() {
        let r = QCPRates::new(0.9, 0.4, 0.5, 0.2, 10.0).unwrap();
        assert!(qcp_coefficients(&r).invalid_discretization);
    }

    #[test]
    fn endpoints_have_no_coherent_branching() {
        for lambda in [0.0, 1.0] {
            let p = GateParams::from_q_dec(0.9, 0.1, 0.4, 0.1, lambda).unwrap();
            let m = map_qca_to_qcp(&p, 0.01).unwrap();
            assert_eq!(m.rates.omega, 0.0);
            if lambda == 0.0 {
                assert_eq!(g_ratio(&p).unwrap(), 0.0);
                assert_eq!(m.rates.g, Some(0.0));
            }
        }
    }

    #[test]
    fn g_undefined_without_branching() {
        let p = GateParams::from_q_dec(0.9, 0.1, 0.0, 0.1, 0.0).unwrap();
        assert!(matches!(g_ratio(&p), Err(QcaError::Undefined(_))));
        assert_eq!(map_qca_to_qcp(&p, 1.0).unwrap().rates.g, None);
    }

    #[test]
    fn g_is_not_symmetric_in_lambda() {
        let p = GateParams::from_q_dec(0.9, 0.1, 0.4, 0.1, 0.3).unwrap();
        let a = g_ratio(&p).unwrap();
        let b = g_ratio(&p.with_lambda(0.7).unwrap()).unwrap();
        assert!((a - b).abs() > 1e-3, "{a} {b}");
    }

    #[test]
    fn negative_coagulation_is_reported() {
        // r_coag > r_dec when the coagulation probability exceeds q_dec.
        let p = GateParams::from_q_dec(0.1, 0.5, 0.4, 0.1, 0.0).unwrap();
        assert!(map_qca_to_qcp(&p, 0.1).unwrap().negative_kappa_c);
    }
}
