//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's mean-field or coefficient code.
#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix2, SMatrix};
use qca_core::exact::RowChannel;
use qca_core::gates::local_index;
use qca_core::{GateParams, LocalGate, MFState, C64};
use rand::Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Uniform draw of all five parameters.
pub fn random_params<R: Rng>(rng: &mut R) -> GateParams {
    GateParams::new(rng.random(), rng.random(), rng.random(), rng.random(), rng.random()).unwrap()
}

pub fn random_params_at<R: Rng>(rng: &mut R, lambda: f64) -> GateParams {
    random_params(rng).with_lambda(lambda).unwrap()
}

/// A uniformly drawn point of the Bloch ball as an `(n, x, y)` state.
pub fn random_state<R: Rng>(rng: &mut R) -> MFState {
    loop {
        let v: [f64; 3] = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
        if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
            // Bloch z = ⟨σ^z⟩ = (1−n) − n with the empty state as +1.
            return MFState { n: (1.0 - v[2]) / 2.0, x: v[0], y: v[1] };
        }
    }
}

/// Single-site density matrix in the (empty, occupied) basis written out from
/// ⟨σ^x⟩, ⟨σ^y⟩ with σ^y = −i|•⟩⟨◦| + i|◦⟩⟨•|.
pub fn site_density(s: &MFState) -> Matrix2<C64> {
    Matrix2::new(c(1.0 - s.n, 0.0), c(s.x / 2.0, s.y / 2.0), c(s.x / 2.0, -s.y / 2.0), c(s.n, 0.0))
}

/// `Tr_{l,c,r}[G (ρ⊗ρ⊗ρ⊗|◦⟩⟨◦|) G†]`, the homogeneous product-state update.
pub fn partial_trace_update(gate: &LocalGate, s: &MFState) -> Matrix2<C64> {
    let rho = site_density(s);
    let empty = Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
    let full: SMatrix<C64, 16, 16> = {
        let k = rho.kronecker(&rho).kronecker(&rho).kronecker(&empty);
        SMatrix::from_iterator(k.iter().cloned())
    };
    let g = gate.matrix();
    let out = g * full * g.adjoint();
    let mut m = Matrix2::zeros();
    for ctrl in 0..8 {
        for t in 0..2 {
            for u in 0..2 {
                m[(t, u)] += out[(ctrl << 1 | t, ctrl << 1 | u)];
            }
        }
    }
    m
}

/// Probability that the target ends occupied for a product control state
/// `|l⟩ ⊗ |center⟩ ⊗ |r⟩` with `center` an arbitrary normalized vector.
pub fn occupation_probability(gate: &LocalGate, l: usize, center: [C64; 2], r: usize) -> f64 {
    let g = gate.matrix();
    let mut p = 0.0;
    for lo in 0..2 {
        for co in 0..2 {
            for ro in 0..2 {
                let out = local_index(lo, co, ro, 1);
                let amp: C64 = (0..2).map(|ci| g[(out, local_index(l, ci, r, 0))] * center[ci]).sum();
                p += amp.norm_sqr();
            }
        }
    }
    p
}

/// Coefficients `(r_dec, r_coag, r_branch, r_star)` read from gate amplitudes.
pub fn brute_coefficients(gate: &LocalGate) -> [f64; 4] {
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    let r_dec = occupation_probability(gate, 0, [zero, one], 0);
    let r_coag = occupation_probability(gate, 1, [zero, one], 0);
    let r_branch = occupation_probability(gate, 1, [one, zero], 0);
    // (|◦⟩ − i|•⟩)/√2 is the +1 eigenvector of σ^y: n = 1/2, y = 1.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let p_y = occupation_probability(gate, 0, [c(s, 0.0), c(0.0, -s)], 1);
    let r_star = p_y - 0.5 * (r_coag + r_branch);
    // Both outer controls active must give the same numbers.
    let check = occupation_probability(gate, 1, [zero, one], 1);
    assert!((check - r_coag).abs() < 1e-13);
    [r_dec, r_coag, r_branch, r_star]
}

/// Row-to-row occupation probabilities `P(b | a)` of a channel acting on
/// computational basis rows.
pub fn channel_diagonal_map(channel: &RowChannel, sites: usize) -> (DMatrix<f64>, f64) {
    let dim = 1 << sites;
    let mut t = DMatrix::zeros(dim, dim);
    let mut max_offdiag: f64 = 0.0;
    for a in 0..dim {
        let mut rho = DMatrix::<C64>::zeros(dim, dim);
        rho[(a, a)] = c(1.0, 0.0);
        let row = qca_core::RowDensity::from_matrix(sites, rho).unwrap();
        let out = channel.apply(&row).unwrap();
        for b in 0..dim {
            t[(b, a)] = out.matrix()[(b, b)].re;
            for b2 in 0..dim {
                if b2 != b {
                    max_offdiag = max_offdiag.max(out.matrix()[(b, b2)].norm());
                }
            }
        }
    }
    (t, max_offdiag)
}

/// Largest root in `(0, 1]` of the synchronous scalar recursion
/// `n = q_dec (1−n)² n + (1 − (1−n)²)(p_coag n + p_branch (1−n))`, by bisection
/// against the rightmost sign change.
pub fn synchronous_fixed_point(q_dec: f64, p_coag: f64, p_branch: f64) -> f64 {
    let f = |n: f64| {
        let pi = (1.0 - n) * (1.0 - n);
        q_dec * pi * n + (1.0 - pi) * (p_coag * n + p_branch * (1.0 - n)) - n
    };
    let grid = 100_000;
    let mut hi = 1.0;
    let mut lo = None;
    for i in (0..grid).rev() {
        let x = i as f64 / grid as f64;
        if x > 0.0 && f(x).signum() != f(hi).signum() {
            lo = Some(x);
            break;
        }
        hi = x;
    }
    let (mut a, mut b) = (lo.expect("no active fixed point"), hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m).signum() == f(a).signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Random full-rank row density `A A† / Tr(A A†)` with complex Gaussian-like
/// entries.
pub fn random_row_density<R: Rng>(rng: &mut R, sites: usize) -> qca_core::RowDensity {
    let dim = 1 << sites;
    let a = DMatrix::<C64>::from_fn(dim, dim, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let mut rho = &a * a.adjoint();
    let tr = rho.trace();
    rho /= tr;
    qca_core::RowDensity::from_matrix(sites, rho).unwrap()
}
