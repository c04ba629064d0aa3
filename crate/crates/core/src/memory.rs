//! Associative-memory retrieval and the learned gate.
//!
//! All retrieval variants map a batch of queries `X` (`N × d`) to readouts
//! of the same shape, using one pattern matrix `M` (`K × d`) for both the
//! similarity and the output (tied keys and values):
//!
//! * LSE: `Mᵀ softmax(β M x)`.
//! * LSR: Epanechnikov weights `relu(1 − β/2 ‖x − m_μ‖²)`, normalized. A
//!   query outside every kernel's support is returned unchanged.
//! * Hierarchical: soft routing over `G` equal groups by centroid
//!   similarity (same `β`), then LSE inside each group, mixed by the
//!   routing weights.
//!
//! Multi-head retrieval splits the feature axis into `H` contiguous blocks;
//! head `h` reads the matching column block of `M` as its own `K`-pattern
//! bank.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Mat, Tape, Var};

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("{patterns} patterns cannot be split into {groups} equal groups")]
    GroupsNotDivisible { patterns: usize, groups: usize },
    #[error("feature dimension {dim} is not divisible by {heads} heads")]
    HeadsNotDivisible { dim: usize, heads: usize },
    #[error("memory bank needs at least one pattern, group and head")]
    Empty,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl MemoryError {
    pub fn is_config(&self) -> bool {
        !matches!(self, MemoryError::Autodiff(_))
    }
}

/// Which retrieval rule a bank uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalKind {
    Lse,
    Lsr,
    Hier,
}

/// Pattern matrix plus the unconstrained inverse-temperature parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    pub patterns: Mat,
    /// `β = exp(log_beta)`.
    pub log_beta: f64,
    pub groups: usize,
    pub heads: usize,
}

impl MemoryBank {
    pub fn new(patterns: Mat, log_beta: f64, groups: usize, heads: usize) -> Result<Self, MemoryError> {
        let bank = Self {
            patterns,
            log_beta,
            groups,
            heads,
        };
        bank.validate()?;
        Ok(bank)
    }

    /// Flat single-head bank with the given `β`.
    pub fn flat(patterns: Mat, beta: f64) -> Self {
        Self {
            patterns,
            log_beta: beta.ln(),
            groups: 1,
            heads: 1,
        }
    }

    /// Patterns drawn i.i.d. from `N(0, 1/d)`.
    pub fn random<R: Rng + ?Sized>(
        num_patterns: usize,
        dim: usize,
        groups: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self, MemoryError> {
        let scale = 1.0 / (dim as f64).sqrt();
        let patterns = Array2::from_shape_simple_fn((num_patterns, dim), || {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        });
        Self::new(patterns, 0.0, groups, heads)
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        let (k, d) = self.patterns.dim();
        if k == 0 || self.groups == 0 || self.heads == 0 {
            return Err(MemoryError::Empty);
        }
        if k % self.groups != 0 {
            return Err(MemoryError::GroupsNotDivisible {
                patterns: k,
                groups: self.groups,
            });
        }
        if d % self.heads != 0 {
            return Err(MemoryError::HeadsNotDivisible {
                dim: d,
                heads: self.heads,
            });
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    pub fn num_patterns(&self) -> usize {
        self.patterns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.patterns.ncols()
    }
}

/// Gate parameters. `weight` is stored as `2d × d` so that the gate
/// pre-activation is `[x ‖ r] · weight + bias` for row-major batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub weight: Mat,
    pub bias: Mat,
}

impl Gate {
    pub const DEFAULT_BIAS: f64 = 2.0;

    pub fn zeros(dim: usize, bias: f64) -> Self {
        Self {
            weight: Array2::zeros((2 * dim, dim)),
            bias: Array2::from_elem((1, dim), bias),
        }
    }

    /// Uniform `±1/√(2d)` weights and a constant bias.
    pub fn random<R: Rng + ?Sized>(dim: usize, bias: f64, rng: &mut R) -> Self {
        let bound = 1.0 / ((2 * dim) as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((2 * dim, dim), || rng.random_range(-bound..bound)),
            bias: Array2::from_elem((1, dim), bias),
        }
    }
}

/// A bank's parameters bound onto a tape.
#[derive(Debug, Clone, Copy)]
pub struct BankVars {
    pub patterns: Var,
    pub log_beta: Var,
    pub beta: Var,
    pub groups: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub weight: Var,
    pub bias: Var,
}

/// Places a bank on the tape. Non-trainable banks become constants.
pub fn bind_bank(tape: &mut Tape<'_>, bank: &MemoryBank, trainable: bool) -> BankVars {
    let patterns = if trainable {
        tape.param(bank.patterns.clone())
    } else {
        tape.constant(bank.patterns.clone())
    };
    let lb = Array2::from_elem((1, 1), bank.log_beta);
    let log_beta = if trainable { tape.param(lb) } else { tape.constant(lb) };
    let beta = tape.exp(log_beta);
    BankVars {
        patterns,
        log_beta,
        beta,
        groups: bank.groups,
        heads: bank.heads,
    }
}

pub fn bind_gate(tape: &mut Tape<'_>, gate: &Gate, trainable: bool) -> GateVars {
    if trainable {
        GateVars {
            weight: tape.param(gate.weight.clone()),
            bias: tape.param(gate.bias.clone()),
        }
    } else {
        GateVars {
            weight: tape.constant(gate.weight.clone()),
            bias: tape.constant(gate.bias.clone()),
        }
    }
}

/// Readout plus, for flat LSE/LSR, the per-pattern weights used.
#[derive(Debug, Clone, Copy)]
pub struct Retrieval {
    pub output: Var,
    pub weights: Option<Var>,
}

/// Retrieval for a batch of queries, honouring the bank's head count.
pub fn retrieve(
    tape: &mut Tape<'_>,
    bank: &BankVars,
    kind: RetrievalKind,
    x: Var,
) -> Result<Retrieval, MemoryError> {
    let (k, d) = tape.shape(bank.patterns);
    if d % bank.heads != 0 {
        return Err(MemoryError::HeadsNotDivisible {
            dim: d,
            heads: bank.heads,
        });
    }
    if k % bank.groups != 0 {
        return Err(MemoryError::GroupsNotDivisible {
            patterns: k,
            groups: bank.groups,
        });
    }
    if bank.heads == 1 {
        return retrieve_block(tape, kind, bank.beta, bank.patterns, x, bank.groups);
    }
    let width = d / bank.heads;
    let mut out: Option<Var> = None;
    for h in 0..bank.heads {
        let xs = tape.slice_cols(x, h * width, (h + 1) * width)?;
        let ms = tape.slice_cols(bank.patterns, h * width, (h + 1) * width)?;
        let r = retrieve_block(tape, kind, bank.beta, ms, xs, bank.groups)?.output;
        out = Some(match out {
            None => r,
            Some(acc) => tape.concat_rows(acc, r)?,
        });
    }
    Ok(Retrieval {
        output: out.expect("at least one head"),
        weights: None,
    })
}

fn retrieve_block(
    tape: &mut Tape<'_>,
    kind: RetrievalKind,
    beta: Var,
    m: Var,
    x: Var,
    groups: usize,
) -> Result<Retrieval, MemoryError> {
    match kind {
        RetrievalKind::Lse => lse_block(tape, beta, m, x),
        RetrievalKind::Lsr => lsr_block(tape, beta, m, x),
        RetrievalKind::Hier => hier_block(tape, beta, m, x, groups),
    }
}

/// `softmax(β X Mᵀ) M`.
fn lse_block(tape: &mut Tape<'_>, beta: Var, m: Var, x: Var) -> Result<Retrieval, MemoryError> {
    let mt = tape.transpose(m);
    let logits = tape.matmul(x, mt)?;
    let scaled = tape.mul_scalar(logits, beta)?;
    let p = tape.rowwise_softmax(scaled)?;
    let output = tape.matmul(p, m)?;
    Ok(Retrieval {
        output,
        weights: Some(p),
    })
}

fn lsr_block(tape: &mut Tape<'_>, beta: Var, m: Var, x: Var) -> Result<Retrieval, MemoryError> {
    // ‖x − m‖² = ‖x‖² + ‖m‖² − 2 xᵀm
    let mt = tape.transpose(m);
    let cross = tape.matmul(x, mt)?;
    let cross = tape.scale(cross, -2.0);
    let xsq = tape.row_squared_norms(x);
    let msq = tape.row_squared_norms(m);
    let msq_row = tape.transpose(msq);
    let dist = tape.add_col(cross, xsq)?;
    let dist = tape.add_row(dist, msq_row)?;
    let scaled = tape.mul_scalar(dist, beta)?;
    let scaled = tape.scale(scaled, -0.5);
    let shifted = tape.add_const(scaled, 1.0);
    let kernel = tape.relu(shifted);
    let weights = tape.row_normalize(kernel);
    let readout = tape.matmul(weights, m)?;

    let empty: Vec<f64> = tape
        .value(kernel)
        .rows()
        .into_iter()
        .map(|r| if r.sum() > 0.0 { 0.0 } else { 1.0 })
        .collect();
    let output = if empty.iter().any(|&e| e > 0.0) {
        let n = empty.len();
        let mask = tape.constant(Array2::from_shape_vec((n, 1), empty).expect("column"));
        let passthrough = tape.mul_col(x, mask)?;
        tape.add(readout, passthrough)?
    } else {
        readout
    };
    Ok(Retrieval {
        output,
        weights: Some(weights),
    })
}

fn hier_block(
    tape: &mut Tape<'_>,
    beta: Var,
    m: Var,
    x: Var,
    groups: usize,
) -> Result<Retrieval, MemoryError> {
    let k = tape.shape(m).0;
    let per = k / groups;
    let mut averaging = Array2::zeros((groups, k));
    for g in 0..groups {
        for j in g * per..(g + 1) * per {
            averaging[[g, j]] = 1.0 / per as f64;
        }
    }
    let averaging = tape.constant(averaging);
    let centroids = tape.matmul(averaging, m)?;
    let ct = tape.transpose(centroids);
    let route_logits = tape.matmul(x, ct)?;
    let route_logits = tape.mul_scalar(route_logits, beta)?;
    let route = tape.rowwise_softmax(route_logits)?;

    let mut out: Option<Var> = None;
    for g in 0..groups {
        let mg = tape.slice_rows(m, g * per, (g + 1) * per)?;
        let rg = lse_block(tape, beta, mg, x)?.output;
        let ag = tape.slice_cols(route, g, g + 1)?;
        let term = tape.mul_col(rg, ag)?;
        out = Some(match out {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok(Retrieval {
        output: out.expect("at least one group"),
        weights: None,
    })
}

/// `g = σ([x ‖ r] W + b)`, `r̃ = g ⊙ r + (1 − g) ⊙ x`. Returns `(r̃, g)`.
pub fn gate_blend(
    tape: &mut Tape<'_>,
    gate: &GateVars,
    x: Var,
    r: Var,
) -> Result<(Var, Var), AutodiffError> {
    let joined = tape.concat_rows(x, r)?;
    let pre = tape.matmul(joined, gate.weight)?;
    let pre = tape.add_row(pre, gate.bias)?;
    let g = tape.sigmoid(pre);
    let delta = tape.sub(r, x)?;
    let gated = tape.elementwise_mul(g, delta)?;
    let blended = tape.add(x, gated)?;
    Ok((blended, g))
}

// ---- plain (tape-free) convenience entry points ----

fn retrieve_plain(bank: &MemoryBank, kind: RetrievalKind, x: &Mat) -> Result<(Mat, Option<Mat>), MemoryError> {
    bank.validate()?;
    let mut tape = Tape::new();
    let vars = bind_bank(&mut tape, bank, false);
    let xv = tape.constant(x.clone());
    let r = retrieve(&mut tape, &vars, kind, xv)?;
    Ok((
        tape.value(r.output).clone(),
        r.weights.map(|w| tape.value(w).clone()),
    ))
}

fn single(bank: &MemoryBank, kind: RetrievalKind, x: &Array1<f64>) -> Result<Array1<f64>, MemoryError> {
    let q = x.clone().insert_axis(ndarray::Axis(0));
    Ok(retrieve_plain(bank, kind, &q)?.0.row(0).to_owned())
}

/// Flat LSE readout `Mᵀ softmax(β M x)` for one query.
pub fn retrieve_lse(bank: &MemoryBank, x: &Array1<f64>) -> Result<Array1<f64>, MemoryError> {
    single(&MemoryBank { groups: 1, ..bank.clone() }, RetrievalKind::Lse, x)
}

/// Flat Epanechnikov readout for one query.
pub fn retrieve_lsr(bank: &MemoryBank, x: &Array1<f64>) -> Result<Array1<f64>, MemoryError> {
    single(&MemoryBank { groups: 1, ..bank.clone() }, RetrievalKind::Lsr, x)
}

/// Two-stage hierarchical readout for one query.
pub fn retrieve_hier(bank: &MemoryBank, x: &Array1<f64>) -> Result<Array1<f64>, MemoryError> {
    single(bank, RetrievalKind::Hier, x)
}

/// Multi-head readout for one query, each head using `kind`.
pub fn retrieve_multihead(
    bank: &MemoryBank,
    kind: RetrievalKind,
    x: &Array1<f64>,
) -> Result<Array1<f64>, MemoryError> {
    single(bank, kind, x)
}

/// Batched readout with the pattern weights (flat, single-head banks only
/// report weights).
pub fn retrieve_batch(
    bank: &MemoryBank,
    kind: RetrievalKind,
    x: &Mat,
) -> Result<(Mat, Option<Mat>), MemoryError> {
    retrieve_plain(bank, kind, x)
}

/// Raw Epanechnikov kernel values `relu(1 − β/2 ‖x − m_μ‖²)` for one query.
pub fn lsr_kernel(bank: &MemoryBank, x: &Array1<f64>) -> Array1<f64> {
    let beta = bank.beta();
    bank.patterns
        .rows()
        .into_iter()
        .map(|m| {
            let d2: f64 = m.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (1.0 - 0.5 * beta * d2).max(0.0)
        })
        .collect()
}

/// Plain gate evaluation on single vectors. Returns `(r̃, g)`.
pub fn gate_blend_plain(gate: &Gate, x: &Array1<f64>, r: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
    let mut tape = Tape::new();
    let gv = bind_gate(&mut tape, gate, false);
    let xv = tape.constant(x.clone().insert_axis(ndarray::Axis(0)));
    let rv = tape.constant(r.clone().insert_axis(ndarray::Axis(0)));
    let (out, g) = gate_blend(&mut tape, &gv, xv, rv).expect("gate shapes");
    (tape.value(out).row(0).to_owned(), tape.value(g).row(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Array2::from_shape_simple_fn((r, c), || StandardNormal.sample(rng))
    }

    fn randv(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        Array1::from_shape_simple_fn(n, || StandardNormal.sample(rng))
    }

    /// Σ_μ m_μ e^{β m_μᵀx} / Σ e^{β m_μ'ᵀx}, summed directly.
    fn lse_oracle(m: &Mat, beta: f64, x: &Array1<f64>) -> Array1<f64> {
        let scores: Vec<f64> = m.rows().into_iter().map(|r| beta * r.dot(x)).collect();
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut out = Array1::zeros(m.ncols());
        for (row, wi) in m.rows().into_iter().zip(&w) {
            out.scaled_add(wi / z, &row);
        }
        out
    }

    fn lsr_oracle(m: &Mat, beta: f64, x: &Array1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(m.ncols());
        let mut total = 0.0;
        for row in m.rows() {
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
            let k = (1.0 - beta / 2.0 * d2).max(0.0);
            out.scaled_add(k, &row);
            total += k;
        }
        if total > 0.0 {
            out / total
        } else {
            x.clone()
        }
    }

    fn hier_oracle(m: &Mat, beta: f64, groups: usize, x: &Array1<f64>) -> Array1<f64> {
        let per = m.nrows() / groups;
        let mut logits = Vec::new();
        let mut readouts = Vec::new();
        for g in 0..groups {
            let block = m.slice(ndarray::s![g * per..(g + 1) * per, ..]).to_owned();
            let mut c = Array1::zeros(m.ncols());
            for r in block.rows() {
                c += &r;
            }
            c /= per as f64;
            logits.push(beta * c.dot(x));
            readouts.push(lse_oracle(&block, beta, x));
        }
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut out = Array1::zeros(m.ncols());
        for (r, wi) in readouts.iter().zip(&w) {
            out.scaled_add(wi / z, r);
        }
        out
    }

    fn max_abs(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn single_pattern_returns_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = array![[0.3, -1.2, 2.0]];
        for beta in [0.01, 1.0, 40.0] {
            let bank = MemoryBank::flat(m.clone(), beta);
            let r = retrieve_lse(&bank, &randv(&mut rng, 3)).unwrap();
            assert_eq!(r, m.row(0));
        }
    }

    #[test]
    fn vanishing_beta_gives_pattern_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = randn(&mut rng, 6, 4);
        let bank = MemoryBank::new(m.clone(), -30.0, 1, 1).unwrap();
        let r = retrieve_lse(&bank, &randv(&mut rng, 4)).unwrap();
        let mean = m.mean_axis(ndarray::Axis(0)).unwrap();
        assert!(max_abs(&r, &mean) < 1e-6);
    }

    #[test]
    fn lse_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = randn(&mut rng, 5, 3);
            let x = randv(&mut rng, 3);
            let bank = MemoryBank::flat(m.clone(), 1.0);
            let r = retrieve_lse(&bank, &x).unwrap();
            assert!(max_abs(&r, &lse_oracle(&m, 1.0, &x)) < 1e-12);
        }
    }

    #[test]
    fn lsr_isolated_pattern_and_fallback() {
        let beta = 2.0; // support radius √(2/β) = 1
        let m = array![[0.0, 0.0], [3.0, 0.0], [0.0, -2.5]];
        let bank = MemoryBank::flat(m.clone(), beta);
        let hit = retrieve_lsr(&bank, &array![0.0, 0.0]).unwrap();
        assert_eq!(hit, array![0.0, 0.0]);
        let hit = retrieve_lsr(&bank, &array![3.0, 0.0]).unwrap();
        assert_eq!(hit, array![3.0, 0.0]);
        let far = array![10.0, 10.0];
        assert_eq!(retrieve_lsr(&bank, &far).unwrap(), far);
    }

    #[test]
    fn lsr_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut hits = 0;
        for _ in 0..50 {
            let m = randn(&mut rng, 6, 3);
            let x = randv(&mut rng, 3) * 0.5;
            let bank = MemoryBank::flat(m.clone(), 0.5);
            let r = retrieve_lsr(&bank, &x).unwrap();
            let kernel = lsr_kernel(&bank, &x);
            hits += usize::from(kernel.sum() > 0.0);
            assert!(kernel.iter().all(|&k| (0.0..=1.0).contains(&k)));
            assert!(max_abs(&r, &lsr_oracle(&m, 0.5, &x)) < 1e-12);
        }
        assert!(hits > 10, "too few instances inside kernel support");
    }

    #[test]
    fn hier_with_one_group_is_bitwise_lse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = randn(&mut rng, 8, 4);
        let x = randn(&mut rng, 7, 4);
        let bank = MemoryBank::new(m, 0.3, 1, 1).unwrap();
        let (lse, _) = retrieve_batch(&bank, RetrievalKind::Lse, &x).unwrap();
        let (hier, _) = retrieve_batch(&bank, RetrievalKind::Hier, &x).unwrap();
        assert_eq!(lse, hier);
    }

    #[test]
    fn hier_matches_two_stage_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let m = randn(&mut rng, 8, 3);
            let x = randv(&mut rng, 3);
            let bank = MemoryBank::new(m.clone(), 0.0, 2, 1).unwrap();
            let r = retrieve_hier(&bank, &x).unwrap();
            assert!(max_abs(&r, &hier_oracle(&m, 1.0, 2, &x)) < 1e-12);
        }
    }

    #[test]
    fn hier_dominant_group_reduces_to_its_flat_readout() {
        // Two well separated clusters; the query sits on cluster one.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = randn(&mut rng, 8, 3) * 0.1;
        let mut m = noise;
        for i in 0..4 {
            m[[i, 0]] += 10.0;
            m[[i + 4, 0]] -= 10.0;
        }
        let x = array![5.0, 0.0, 0.0];
        let beta = 1.0;
        let bank = MemoryBank::new(m.clone(), 0.0, 2, 1).unwrap();
        let c1: f64 = (0..4).map(|i| m[[i, 0]]).sum::<f64>() / 4.0;
        let c2: f64 = (4..8).map(|i| m[[i, 0]]).sum::<f64>() / 4.0;
        let a1 = 1.0 / (1.0 + (beta * x[0] * (c2 - c1)).exp());
        assert!(a1 > 1.0 - 1e-9);
        let group_one = m.slice(ndarray::s![0..4, ..]).to_owned();
        let r = retrieve_hier(&bank, &x).unwrap();
        assert!(max_abs(&r, &lse_oracle(&group_one, beta, &x)) < 1e-6);
    }

    #[test]
    fn multihead_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = randn(&mut rng, 5, 4);
        let x = randv(&mut rng, 4);
        let one = MemoryBank::new(m.clone(), 0.0, 1, 1).unwrap();
        assert_eq!(
            retrieve_multihead(&one, RetrievalKind::Lse, &x).unwrap(),
            retrieve_lse(&one, &x).unwrap()
        );

        // two heads with block-diagonal patterns
        let mut bd = Array2::zeros((4, 4));
        bd.slice_mut(ndarray::s![0..2, 0..2]).assign(&randn(&mut rng, 2, 2));
        bd.slice_mut(ndarray::s![2..4, 2..4]).assign(&randn(&mut rng, 2, 2));
        let two = MemoryBank::new(bd.clone(), 0.0, 1, 2).unwrap();
        let r = retrieve_multihead(&two, RetrievalKind::Lse, &x).unwrap();
        for h in 0..2 {
            let cols = ndarray::s![.., 2 * h..2 * h + 2];
            let block = bd.slice(cols).to_owned();
            let xh = x.slice(ndarray::s![2 * h..2 * h + 2]).to_owned();
            let expect = lse_oracle(&block, 1.0, &xh);
            let got = r.slice(ndarray::s![2 * h..2 * h + 2]).to_owned();
            assert!(max_abs(&got, &expect) < 1e-12);
        }

        // scalar heads: coordinate j mixes m_μj with softmax(β m_μj x_j)
        let scalar = MemoryBank::new(m.clone(), 0.0, 1, 4).unwrap();
        let r = retrieve_multihead(&scalar, RetrievalKind::Lse, &x).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = m.column(j).to_vec();
            let w: Vec<f64> = col.iter().map(|mj| (mj * x[j]).exp()).collect();
            let z: f64 = w.iter().sum();
            let expect: f64 = col.iter().zip(&w).map(|(a, b)| a * b / z).sum();
            assert!((r[j] - expect).abs() < 1e-12);
        }

        assert_eq!(
            MemoryBank::new(Array2::zeros((4, 64)), 0.0, 1, 3),
            Err(MemoryError::HeadsNotDivisible { dim: 64, heads: 3 })
        );
        assert_eq!(
            MemoryBank::new(Array2::zeros((10, 4)), 0.0, 4, 1),
            Err(MemoryError::GroupsNotDivisible { patterns: 10, groups: 4 })
        );
    }

    #[test]
    fn gate_initial_value_and_limits() {
        let gate = Gate::zeros(3, 2.0);
        let x = array![1.0, -2.0, 0.5];
        let r = array![0.0, 4.0, 0.5];
        let (_, g) = gate_blend_plain(&gate, &x, &r);
        let s2 = 1.0 / (1.0 + (-2.0f64).exp());
        assert!(g.iter().all(|&v| (v - s2).abs() < 1e-15));
        assert!((s2 - 0.8808).abs() < 1e-4);

        let (same, _) = gate_blend_plain(&Gate::random(3, 0.3, &mut ChaCha8Rng::seed_from_u64(1)), &x, &x);
        assert!(max_abs(&same, &x) < 1e-15);

        let open = Gate::zeros(3, 30.0);
        let (out, _) = gate_blend_plain(&open, &x, &r);
        assert!(max_abs(&out, &r) < 1e-9);
    }
}
