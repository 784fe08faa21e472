//! Single-site flip unitaries and the four-qubit local gates.
//!
//! Single-qubit basis: index 0 is the empty state `|◦⟩`, index 1 the occupied
//! state `|•⟩`. A [`LocalGate`] acts on four qubits ordered
//! (left control, center control, right control, target); the local basis
//! index is `l << 3 | c << 2 | r << 1 | t`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2, Matrix4, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QcaError, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Unitarity residual tolerance used throughout the gate checks.
pub const UNITARITY_TOL: f64 = 1e-12;

/// The five scalars that parameterize every gate.
///
/// `p_dec` is the probability that an isolated occupied site decays; its
/// complement `q_dec = 1 - p_dec` is the probability that the target of an
/// isolated occupied control becomes occupied. `p_coag` and `p_branch` are
/// the occupation probabilities of the target when at least one outer control
/// is occupied and the center control is occupied or empty respectively.
/// `p_plus` parameterizes the extra unitary of the asynchronous gate and
/// `lambda` is the asynchronism strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGateParams", into = "RawGateParams")]
pub struct GateParams {
    p_dec: f64,
    p_coag: f64,
    p_branch: f64,
    p_plus: f64,
    lambda: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawGateParams {
    p_dec: f64,
    p_coag: f64,
    p_branch: f64,
    p_plus: f64,
    lambda: f64,
}

impl TryFrom<RawGateParams> for GateParams {
    type Error = QcaError;

    fn try_from(raw: RawGateParams) -> Result<Self> {
        GateParams::new(raw.p_dec, raw.p_coag, raw.p_branch, raw.p_plus, raw.lambda)
    }
}

impl From<GateParams> for RawGateParams {
    fn from(p: GateParams) -> Self {
        RawGateParams {
            p_dec: p.p_dec,
            p_coag: p.p_coag,
            p_branch: p.p_branch,
            p_plus: p.p_plus,
            lambda: p.lambda,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(QcaError::InvalidParameter(format!(
            "{name} = {v} must lie in [0, 1]"
        )))
    }
}

impl GateParams {
    pub fn new(p_dec: f64, p_coag: f64, p_branch: f64, p_plus: f64, lambda: f64) -> Result<Self> {
        check_unit("p_dec", p_dec)?;
        check_unit("p_coag", p_coag)?;
        check_unit("p_branch", p_branch)?;
        check_unit("p_plus", p_plus)?;
        check_unit("lambda", lambda)?;
        Ok(Self {
            p_dec,
            p_coag,
            p_branch,
            p_plus,
            lambda,
        })
    }

    /// Builds parameters from the occupation probability `q_dec` of an isolated
    /// occupied site rather than its decay probability.
    pub fn from_q_dec(q_dec: f64, p_coag: f64, p_branch: f64, p_plus: f64, lambda: f64) -> Result<Self> {
        check_unit("q_dec", q_dec)?;
        Self::new(1.0 - q_dec, p_coag, p_branch, p_plus, lambda)
    }

    pub fn p_dec(&self) -> f64 {
        self.p_dec
    }
    pub fn q_dec(&self) -> f64 {
        1.0 - self.p_dec
    }
    pub fn p_coag(&self) -> f64 {
        self.p_coag
    }
    pub fn q_coag(&self) -> f64 {
        1.0 - self.p_coag
    }
    pub fn p_branch(&self) -> f64 {
        self.p_branch
    }
    pub fn q_branch(&self) -> f64 {
        1.0 - self.p_branch
    }
    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }
    pub fn q_plus(&self) -> f64 {
        1.0 - self.p_plus
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        Self::new(self.p_dec, self.p_coag, self.p_branch, self.p_plus, lambda)
    }

    pub fn with_p_branch(self, p_branch: f64) -> Result<Self> {
        Self::new(self.p_dec, self.p_coag, p_branch, self.p_plus, self.lambda)
    }
}

/// Which single-site flip unitary to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlipKind {
    /// `U_◦•◦`, isolated occupied center.
    Decay,
    /// `U_•`, occupied center with an occupied neighbour.
    Coagulation,
    /// `U_◦`, empty center with an occupied neighbour.
    Branching,
    /// `U_+`, the extra unitary of the asynchronous gate.
    Plus,
}

impl FromStr for FlipKind {
    type Err = QcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dec" | "decay" | "◦•◦" | "o x o" | "oxo" => Ok(FlipKind::Decay),
            "coag" | "coagulation" | "•" | "x" => Ok(FlipKind::Coagulation),
            "branch" | "branching" | "◦" | "o" => Ok(FlipKind::Branching),
            "plus" | "+" => Ok(FlipKind::Plus),
            other => Err(QcaError::InvalidParameter(format!("unknown flip kind {other:?}"))),
        }
    }
}

impl fmt::Display for FlipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FlipKind::Decay => "decay",
            FlipKind::Coagulation => "coagulation",
            FlipKind::Branching => "branching",
            FlipKind::Plus => "plus",
        };
        f.write_str(s)
    }
}

/// A 2×2 complex matrix acting on one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2(pub Matrix2<C64>);

impl Unitary2 {
    pub fn identity() -> Self {
        Unitary2(Matrix2::identity())
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Unitary2(self.0.adjoint())
    }

    /// Max-abs entrywise residual of `U†U - 1`.
    pub fn unitarity_residual(&self) -> f64 {
        max_abs(&(self.0.adjoint() * self.0 - Matrix2::identity()))
    }
}

impl std::ops::Mul for Unitary2 {
    type Output = Unitary2;
    fn mul(self, rhs: Unitary2) -> Unitary2 {
        Unitary2(self.0 * rhs.0)
    }
}

pub fn sigma_x() -> Matrix2<C64> {
    Matrix2::new(ZERO, ONE, ONE, ZERO)
}

/// `σ^y = -i|•⟩⟨◦| + i|◦⟩⟨•|`.
pub fn sigma_y() -> Matrix2<C64> {
    Matrix2::new(ZERO, I, -I, ZERO)
}

/// `σ^+ = |•⟩⟨◦|`.
pub fn sigma_plus() -> Matrix2<C64> {
    Matrix2::new(ZERO, ZERO, ONE, ZERO)
}

/// `σ^- = |◦⟩⟨•|`.
pub fn sigma_minus() -> Matrix2<C64> {
    Matrix2::new(ZERO, ONE, ZERO, ZERO)
}

/// Projector onto the occupied state.
pub fn proj_occupied() -> Matrix2<C64> {
    Matrix2::new(ZERO, ZERO, ZERO, ONE)
}

/// Projector onto the empty state.
pub fn proj_empty() -> Matrix2<C64> {
    Matrix2::new(ONE, ZERO, ZERO, ZERO)
}

fn max_abs<R: nalgebra::Dim, Cc: nalgebra::Dim, S: nalgebra::RawStorage<C64, R, Cc>>(
    m: &nalgebra::Matrix<C64, R, Cc, S>,
) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `a·1 + b·σ^x`.
fn one_plus_x(a: C64, b: C64) -> Unitary2 {
    Unitary2(Matrix2::identity() * a + sigma_x() * b)
}

pub fn flip_unitary(kind: FlipKind, params: &GateParams) -> Unitary2 {
    match kind {
        FlipKind::Decay => one_plus_x(
            C64::from(params.p_dec().sqrt()),
            -I * params.q_dec().sqrt(),
        ),
        FlipKind::Coagulation => one_plus_x(
            C64::from(params.q_coag().sqrt()),
            -I * params.p_coag().sqrt(),
        ),
        FlipKind::Branching => one_plus_x(
            C64::from(params.q_branch().sqrt()),
            -I * params.p_branch().sqrt(),
        ),
        FlipKind::Plus => one_plus_x(
            I * params.q_plus().sqrt(),
            C64::from(-params.p_plus().sqrt()),
        ),
    }
}

fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    a.kronecker(b)
}

/// The (center, target) blocks of a gate: `outer_empty` acts when both outer
/// controls are empty, `outer_active` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateBlocks {
    pub outer_empty: Matrix4<C64>,
    pub outer_active: Matrix4<C64>,
}

impl GateBlocks {
    pub fn synchronous(params: &GateParams) -> Self {
        let u_dec = flip_unitary(FlipKind::Decay, params).0;
        let u_coag = flip_unitary(FlipKind::Coagulation, params).0;
        let u_branch = flip_unitary(FlipKind::Branching, params).0;
        let n = proj_occupied();
        let nb = proj_empty();
        GateBlocks {
            outer_empty: kron2(&n, &u_dec) + kron2(&nb, &Matrix2::identity()),
            outer_active: kron2(&n, &u_coag) + kron2(&nb, &u_branch),
        }
    }

    pub fn asynchronous(params: &GateParams) -> Self {
        let sync = Self::synchronous(params);
        let lambda = params.lambda();
        let u_coag = flip_unitary(FlipKind::Coagulation, params).0;
        let u_branch = flip_unitary(FlipKind::Branching, params).0;
        let u_plus = flip_unitary(FlipKind::Plus, params).0;
        let hop = kron2(&sigma_plus(), &(u_coag * u_plus))
            - kron2(&sigma_minus(), &(u_branch * u_plus.adjoint()));
        GateBlocks {
            outer_empty: sync.outer_empty,
            outer_active: sync.outer_active * C64::from((1.0 - lambda).sqrt())
                + hop * C64::from(lambda.sqrt()),
        }
    }
}

/// Dense 16×16 gate on (left, center, right, target).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGate(pub SMatrix<C64, 16, 16>);

impl LocalGate {
    pub fn from_blocks(blocks: &GateBlocks) -> Self {
        let mut m = SMatrix::<C64, 16, 16>::zeros();
        for l in 0..2 {
            for r in 0..2 {
                let block = if l == 0 && r == 0 {
                    &blocks.outer_empty
                } else {
                    &blocks.outer_active
                };
                for ct_out in 0..4 {
                    for ct_in in 0..4 {
                        let row = local_index(l, ct_out >> 1, r, ct_out & 1);
                        let col = local_index(l, ct_in >> 1, r, ct_in & 1);
                        m[(row, col)] = block[(ct_out, ct_in)];
                    }
                }
            }
        }
        LocalGate(m)
    }

    pub fn matrix(&self) -> &SMatrix<C64, 16, 16> {
        &self.0
    }

    pub fn unitarity_residual(&self) -> f64 {
        max_abs(&(self.0.adjoint() * self.0 - SMatrix::<C64, 16, 16>::identity()))
    }

    /// Nonzero entries as `(row, col, value)`, used by the state-vector kernels.
    pub fn sparse(&self) -> SparseGate {
        let mut entries = Vec::new();
        for col in 0..16 {
            for row in 0..16 {
                let v = self.0[(row, col)];
                if v.norm_sqr() > 0.0 {
                    entries.push((row as u8, col as u8, v));
                }
            }
        }
        SparseGate { entries }
    }
}

/// Local basis index for (left, center, right, target) bits.
pub fn local_index(l: usize, c: usize, r: usize, t: usize) -> usize {
    (l << 3) | (c << 2) | (r << 1) | t
}

/// Nonzero entries of a [`LocalGate`].
#[derive(Debug, Clone)]
pub struct SparseGate {
    pub entries: Vec<(u8, u8, C64)>,
}

/// The commuting gate (λ ignored).
pub fn build_sync_gate(params: &GateParams) -> LocalGate {
    LocalGate::from_blocks(&GateBlocks::synchronous(params))
}

/// The gate whose `σ^±` terms on the center control break commutativity for λ > 0.
pub fn build_async_gate(params: &GateParams) -> LocalGate {
    LocalGate::from_blocks(&GateBlocks::asynchronous(params))
}

/// Matrix norm used to quantify gate non-commutativity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MatrixNorm {
    #[default]
    Frobenius,
    Spectral,
}

/// Embeds a 16×16 gate into a 6-qubit space. `positions` gives, for each of
/// (left, center, right, target), the qubit index in `0..6` (qubit 0 is the
/// most significant bit).
fn embed6(gate: &LocalGate, positions: [usize; 4]) -> DMatrix<C64> {
    let dim = 64;
    let bit = |idx: usize, q: usize| (idx >> (5 - q)) & 1;
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    for col in 0..dim {
        let local_in = local_index(
            bit(col, positions[0]),
            bit(col, positions[1]),
            bit(col, positions[2]),
            bit(col, positions[3]),
        );
        let rest = positions
            .iter()
            .fold(col, |acc, &q| acc & !(1 << (5 - q)));
        for local_out in 0..16 {
            let v = gate.0[(local_out, local_in)];
            if v.norm_sqr() == 0.0 {
                continue;
            }
            let mut row = rest;
            for (slot, &q) in positions.iter().enumerate() {
                let b = (local_out >> (3 - slot)) & 1;
                row |= b << (5 - q);
            }
            out[(row, col)] += v;
        }
    }
    out
}

/// Norm of the commutator of two adjacent asynchronous gates.
///
/// Qubits are (c_{k-1}, c_k, c_{k+1}, c_{k+2}, t_k, t_{k+1}); the gate on
/// target k uses controls (k-1, k, k+1) and the gate on target k+1 uses
/// (k, k+1, k+2).
pub fn commutator_norm(params: &GateParams) -> f64 {
    commutator_norm_with(params, MatrixNorm::Frobenius)
}

pub fn commutator_norm_with(params: &GateParams, norm: MatrixNorm) -> f64 {
    let gate = build_async_gate(params);
    let first = embed6(&gate, [0, 1, 2, 4]);
    let second = embed6(&gate, [1, 2, 3, 5]);
    let comm = &first * &second - &second * &first;
    match norm {
        MatrixNorm::Frobenius => comm.norm(),
        MatrixNorm::Spectral => comm.singular_values().max(),
    }
}
