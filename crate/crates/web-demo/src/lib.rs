//! WebAssembly bindings for a single static page. Every export takes plain
//! numbers and returns a JSON string (`{"error": ...}` on failure), so the
//! same functions run natively in tests.

use ghn_core::dynamics::Variant;
use ghn_core::graph::{normalized_laplacian, Graph, Split};
use ghn_core::memory::{retrieve_batch, MemoryBank, RetrievalKind};
use ghn_core::theory::{certify_descent, scaled_patterns, Constants, TheoryInstance};
use ndarray::Array2;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(result: Result<Value, String>) -> String {
    result.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

/// Retrieval of one query from a flat pattern bank (`patterns` is row-major
/// `K × dim`). `kind` is `lse` or `lsr`. Returns `{output, weights}`.
#[wasm_bindgen]
pub fn retrieve(patterns: Vec<f64>, dim: usize, query: Vec<f64>, beta: f64, kind: &str) -> String {
    respond((|| {
        if dim == 0 || patterns.len() % dim != 0 || patterns.is_empty() {
            return Err(format!("{} pattern values do not form rows of length {dim}", patterns.len()));
        }
        if query.len() != dim {
            return Err(format!("query has {} values, expected {dim}", query.len()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err("beta must be positive".into());
        }
        let kind = match Variant::parse(kind).and_then(Variant::retrieval) {
            Some(k @ (RetrievalKind::Lse | RetrievalKind::Lsr)) => k,
            _ => return Err(format!("unsupported retrieval `{kind}` (lse | lsr)")),
        };
        let m = Array2::from_shape_vec((patterns.len() / dim, dim), patterns).map_err(|e| e.to_string())?;
        let bank = MemoryBank::flat(m, beta);
        let x = Array2::from_shape_vec((1, dim), query).map_err(|e| e.to_string())?;
        let (out, weights) = retrieve_batch(&bank, kind, &x).map_err(|e| e.to_string())?;
        Ok(json!({
            "output": out.row(0).to_vec(),
            "weights": weights.map(|w| w.row(0).to_vec()),
        }))
    })())
}

/// Gradient descent with `η = 1/L_lip` on a ring of `nodes` nodes holding
/// 2-d states, with four patterns scaled to the requested `β‖M‖²`.
/// Returns constants, per-step energies and gradient norms, the descent
/// certificate, and every node's trajectory.
#[wasm_bindgen]
pub fn descent(product: f64, lambda: f64, nodes: usize, seed: u64, steps: usize) -> String {
    respond((|| {
        if !(3..=64).contains(&nodes) {
            return Err("nodes must lie in 3..=64".into());
        }
        if !(1..=2000).contains(&steps) {
            return Err("steps must lie in 1..=2000".into());
        }
        if !(product > 0.0 && product.is_finite()) {
            return Err("beta*||M||^2 must be positive".into());
        }
        let g = Graph::new(
            Array2::zeros((nodes, 1)),
            (0..nodes).map(|i| (i, (i + 1) % nodes)),
            vec![None; nodes],
            vec![Split::None; nodes],
        )
        .map_err(|e| e.to_string())?;
        let l = normalized_laplacian(&g, true).map_err(|e| e.to_string())?;
        let m = scaled_patterns(seed, 4, 2, product).map_err(|e| e.to_string())?;
        let inst = TheoryInstance::new(m.clone(), 1.0, lambda, l).map_err(|e| e.to_string())?;
        let c = *inst.constants();
        let eta = 1.0 / c.l_lip;
        let x0 = inst.random_start(seed, 1.5);
        let outcome = certify_descent(&inst, &x0, eta, steps).map_err(|e| e.to_string())?;

        let mut x = x0;
        let mut energies = vec![inst.energy(&x).map_err(|e| e.to_string())?];
        let mut paths: Vec<Vec<[f64; 2]>> = x.rows().into_iter().map(|r| vec![[r[0], r[1]]]).collect();
        for _ in 0..steps {
            let grad = inst.gradient(&x).map_err(|e| e.to_string())?;
            x = &x - &(grad * eta);
            energies.push(inst.energy(&x).map_err(|e| e.to_string())?);
            for (path, r) in paths.iter_mut().zip(x.rows()) {
                path.push([r[0], r[1]]);
            }
        }
        Ok(json!({
            "constants": c,
            "eta": eta,
            "energies": energies,
            "grad_norms": outcome.grad_norms,
            "descent": outcome.descent,
            "patterns": m.rows().into_iter().map(|r| [r[0], r[1]]).collect::<Vec<_>>(),
            "paths": paths,
        }))
    })())
}

/// Theory constants and regime for `β`, `‖M‖²_σ`, `λ` and `‖L‖`.
#[wasm_bindgen]
pub fn regime(beta: f64, spectral_norm_m_sq: f64, lambda: f64, laplacian_norm: f64) -> String {
    respond((|| {
        if !(beta > 0.0) || !(spectral_norm_m_sq >= 0.0) || !(laplacian_norm >= 0.0) {
            return Err("beta must be positive; norms must be non-negative".into());
        }
        let c = Constants::new(spectral_norm_m_sq, beta, lambda, laplacian_norm);
        Ok(json!({
            "constants": c,
            "contractive": c.rho < 1.0,
            "strongly_convex": c.mu > 0.0,
        }))
    })())
}
