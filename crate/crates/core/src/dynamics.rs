//! The base energy, its gradient, and the damped update iteration.
//!
//! Two independent paths compute the dynamics: plain ndarray functions
//! ([`energy_base`], [`grad_energy_base`], [`fixed_point_map`]) used by the
//! theory suite, and the tape-recorded [`ghn_step_tape`] used in training.
//! Tests tie the two together.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{softmax_rows, AutodiffError, Mat, Tape, Var};
use crate::error::ShapeError;
use crate::memory::{bind_bank, bind_gate, gate_blend, retrieve, BankVars, Gate, GateVars, MemoryBank, MemoryError, RetrievalKind};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("damping alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("at least one iteration is required")]
    ZeroIterations,
    #[error("theory routines require lambda >= 0, got {0}")]
    NegativeLambda(f64),
    #[error("non-finite state at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl DynamicsError {
    pub fn is_config(&self) -> bool {
        match self {
            DynamicsError::InvalidAlpha(_)
            | DynamicsError::ZeroIterations
            | DynamicsError::NegativeLambda(_) => true,
            DynamicsError::Memory(e) => e.is_config(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Lse,
    Lsr,
    Hier,
    NoMem,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Lse, Variant::Lsr, Variant::Hier, Variant::NoMem];

    pub fn retrieval(self) -> Option<RetrievalKind> {
        match self {
            Variant::Lse => Some(RetrievalKind::Lse),
            Variant::Lsr => Some(RetrievalKind::Lsr),
            Variant::Hier => Some(RetrievalKind::Hier),
            Variant::NoMem => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lse => "lse",
            Variant::Lsr => "lsr",
            Variant::Hier => "hier",
            Variant::NoMem => "nomem",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub variant: Variant,
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(DynamicsError::InvalidAlpha(self.alpha));
        }
        if self.iterations == 0 {
            return Err(DynamicsError::ZeroIterations);
        }
        Ok(())
    }

    /// Stricter check for the theory suite, which assumes `λ ≥ 0`.
    pub fn validate_for_theory(&self) -> Result<(), DynamicsError> {
        self.validate()?;
        if self.lambda < 0.0 || self.lambda.is_nan() {
            return Err(DynamicsError::NegativeLambda(self.lambda));
        }
        Ok(())
    }
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            alpha: 0.3,
            iterations: 4,
            variant: Variant::Lse,
        }
    }
}

fn check_shapes(x: &ArrayView2<'_, f64>, m: &ArrayView2<'_, f64>, l: &CsrMatrix) -> Result<(), ShapeError> {
    if x.ncols() != m.ncols() {
        return Err(ShapeError::new("energy", x.dim(), m.dim()));
    }
    if l.shape() != (x.nrows(), x.nrows()) {
        return Err(ShapeError::new("energy", l.shape(), x.dim()));
    }
    Ok(())
}

/// `lse(β, z) = β⁻¹ log Σ exp(β z)` per row of `z`.
fn row_lse(z: &Mat, beta: f64) -> Vec<f64> {
    z.rows()
        .into_iter()
        .map(|r| {
            let top = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = r.iter().map(|v| (beta * (v - top)).exp()).sum();
            top + s.ln() / beta
        })
        .collect()
}

/// Retrieval field `s(X)`: row `v` is `Mᵀ softmax(β M x_v)`.
pub fn retrieval_field(x: &ArrayView2<'_, f64>, m: &ArrayView2<'_, f64>, beta: f64) -> Result<Mat, ShapeError> {
    if x.ncols() != m.ncols() {
        return Err(ShapeError::new("retrieval_field", x.dim(), m.dim()));
    }
    let p = softmax_rows(&x.dot(&m.t()), beta);
    Ok(p.dot(m))
}

/// `E(X) = Σ_v [−lse(β, M x_v) + ½‖x_v‖²] + λ tr(XᵀLX)`.
pub fn energy_base(
    x: &ArrayView2<'_, f64>,
    m: &ArrayView2<'_, f64>,
    beta: f64,
    lambda: f64,
    l: &CsrMatrix,
) -> Result<f64, ShapeError> {
    check_shapes(x, m, l)?;
    let logits = x.dot(&m.t());
    let lse: f64 = row_lse(&logits, beta).iter().sum();
    let half_sq = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
    let lx = l.matmul(x)?;
    let quad: f64 = x.iter().zip(lx.iter()).map(|(a, b)| a * b).sum();
    Ok(-lse + half_sq + lambda * quad)
}

/// `∇E`: row `v` is `−Mᵀ softmax(β M x_v) + x_v + 2λ (LX)_v`.
pub fn grad_energy_base(
    x: &ArrayView2<'_, f64>,
    m: &ArrayView2<'_, f64>,
    beta: f64,
    lambda: f64,
    l: &CsrMatrix,
) -> Result<Mat, ShapeError> {
    check_shapes(x, m, l)?;
    let s = retrieval_field(x, m, beta)?;
    let lx = l.matmul(x)?;
    Ok(x.to_owned() - s + lx * (2.0 * lambda))
}

/// Undamped map `T(X) = s(X) − 2λ LX`.
pub fn fixed_point_map(
    x: &ArrayView2<'_, f64>,
    m: &ArrayView2<'_, f64>,
    beta: f64,
    lambda: f64,
    l: &CsrMatrix,
) -> Result<Mat, ShapeError> {
    check_shapes(x, m, l)?;
    let s = retrieval_field(x, m, beta)?;
    let lx = l.matmul(x)?;
    Ok(s - lx * (2.0 * lambda))
}

/// One damped step on the tape. `gate = None` uses the raw retrieval.
/// Returns the new state and, when a gate is applied, its values.
pub fn ghn_step_tape<'a>(
    tape: &mut Tape<'a>,
    x: Var,
    bank: &BankVars,
    gate: Option<&GateVars>,
    cfg: &DynamicsConfig,
    l: &'a CsrMatrix,
) -> Result<(Var, Option<Var>), DynamicsError> {
    let lx = tape.sparse_matmul(l, x)?;
    let Some(kind) = cfg.variant.retrieval() else {
        let smooth = tape.scale(lx, 2.0 * cfg.alpha * cfg.lambda);
        return Ok((tape.sub(x, smooth)?, None));
    };
    let r = retrieve(tape, bank, kind, x)?.output;
    let (r, g) = match gate {
        Some(gv) => {
            let (blended, g) = gate_blend(tape, gv, x, r)?;
            (blended, Some(g))
        }
        None => (r, None),
    };
    let pull = tape.scale(lx, 2.0 * cfg.lambda);
    let target = tape.sub(r, pull)?;
    let keep = tape.scale(x, 1.0 - cfg.alpha);
    let step = tape.scale(target, cfg.alpha);
    Ok((tape.add(keep, step)?, g))
}

/// Per-iteration trajectory diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `‖X_{t+1} − X_t‖_F` per iteration.
    pub step_norms: Vec<f64>,
    /// Mean gate value per iteration (empty when no gate is applied).
    pub gate_means: Vec<f64>,
}

/// `T` steps on the tape, aborting on the first non-finite state.
pub fn iterate_tape<'a>(
    tape: &mut Tape<'a>,
    x0: Var,
    bank: &BankVars,
    gate: Option<&GateVars>,
    cfg: &DynamicsConfig,
    l: &'a CsrMatrix,
) -> Result<(Var, Diagnostics), DynamicsError> {
    cfg.validate()?;
    let mut x = x0;
    let mut diag = Diagnostics::default();
    for t in 0..cfg.iterations {
        let (next, g) = ghn_step_tape(tape, x, bank, gate, cfg, l)?;
        let value = tape.value(next);
        if value.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { iteration: t + 1 });
        }
        let diff = value - tape.value(x);
        diag.step_norms.push(diff.iter().map(|v| v * v).sum::<f64>().sqrt());
        if let Some(g) = g {
            diag.gate_means.push(tape.value(g).mean().unwrap_or(0.0));
        }
        x = next;
    }
    Ok((x, diag))
}

/// Plain single step on concrete values.
pub fn ghn_step(
    x: &Mat,
    bank: &MemoryBank,
    gate: Option<&Gate>,
    cfg: &DynamicsConfig,
    l: &CsrMatrix,
) -> Result<Mat, DynamicsError> {
    bank.validate()?;
    let mut tape = Tape::new();
    let bv = bind_bank(&mut tape, bank, false);
    let gv = gate.map(|g| bind_gate(&mut tape, g, false));
    let xv = tape.constant(x.clone());
    let (out, _) = ghn_step_tape(&mut tape, xv, &bv, gv.as_ref(), cfg, l)?;
    Ok(tape.value(out).clone())
}

/// Plain `T`-step iteration on concrete values.
pub fn iterate(
    x0: &Mat,
    bank: &MemoryBank,
    gate: Option<&Gate>,
    cfg: &DynamicsConfig,
    l: &CsrMatrix,
) -> Result<(Mat, Diagnostics), DynamicsError> {
    bank.validate()?;
    let mut tape = Tape::new();
    let bv = bind_bank(&mut tape, bank, false);
    let gv = gate.map(|g| bind_gate(&mut tape, g, false));
    let xv = tape.constant(x0.clone());
    let (out, diag) = iterate_tape(&mut tape, xv, &bv, gv.as_ref(), cfg, l)?;
    Ok((tape.value(out).clone(), diag))
}

/// Mean over rows, used for the `X = 0` fixed-point example.
pub fn column_mean(m: &ArrayView2<'_, f64>) -> ndarray::Array1<f64> {
    m.mean_axis(Axis(0)).unwrap_or_else(|| ndarray::Array1::zeros(m.ncols()))
}

/// Zero-state helper for callers that need an `N × d` origin.
pub fn zeros(n: usize, d: usize) -> Mat {
    Array2::zeros((n, d))
}
