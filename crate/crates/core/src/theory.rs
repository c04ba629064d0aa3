//! Executable convergence theory for the base dynamics (no gate, no
//! hierarchy, no encoder).
//!
//! Constants:
//!
//! * `L_lip = (β/2)‖M‖² + 1 + 2λ‖L‖` — gradient Lipschitz constant.
//! * `ρ = (β/2)‖M‖² + 2λ‖L‖` — Lipschitz constant of the undamped map.
//! * `μ = 1 − β‖M‖²/2` — strong-convexity modulus when positive.
//!
//! Every certificate records the smallest measured slack; a negative slack
//! beyond the `1e-6` headroom is a failure.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{softmax_rows, Mat};
use crate::dynamics::{energy_base, fixed_point_map, grad_energy_base};
use crate::error::ShapeError;
use crate::rng::{stream, Stream};
use crate::sparse::CsrMatrix;

/// Headroom added to every pass/fail comparison.
pub const HEADROOM: f64 = 1e-6;
/// Half-width of the band around `β‖M‖² = 2` classified as the boundary.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("certificate {name} failed: {detail}")]
    CertificateFailed { name: String, detail: String },
    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

fn frob(a: &Mat) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn frob_sq(a: &Mat) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Largest singular value by power iteration on `MᵀM`, stopping once the
/// relative change of the estimate drops below `tol`.
pub fn spectral_norm(m: &ArrayView2<'_, f64>, tol: f64) -> Result<f64, TheoryError> {
    const CAP: usize = 200_000;
    let d = m.ncols();
    if d == 0 || m.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mut v: Array1<f64> = (0..d)
        .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    v /= v.dot(&v).sqrt();
    let mut estimate = 0.0f64;
    for _ in 0..CAP {
        let w = m.t().dot(&m.dot(&v));
        let rayleigh = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            // start vector in the null space; perturb deterministically
            v = Array1::from_elem(d, 1.0 / (d as f64).sqrt());
            continue;
        }
        v = w / norm;
        if (rayleigh - estimate).abs() <= tol * rayleigh.abs() {
            return Ok(rayleigh.max(0.0).sqrt());
        }
        estimate = rayleigh;
    }
    Err(TheoryError::NonConvergence {
        what: "spectral norm",
        iterations: CAP,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StronglyConvex,
    ConvexBoundary,
    Nonconvex,
}

impl Regime {
    /// Classifies `β‖M‖²_σ` against the threshold 2.
    pub fn classify(product: f64) -> Self {
        if (product - 2.0).abs() <= BOUNDARY_TOL {
            Regime::ConvexBoundary
        } else if product < 2.0 {
            Regime::StronglyConvex
        } else {
            Regime::Nonconvex
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::StronglyConvex => "strongly_convex",
            Regime::ConvexBoundary => "convex_boundary",
            Regime::Nonconvex => "nonconvex",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Constants derived from `(M, β, λ, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub spectral_norm_m_sq: f64,
    pub beta: f64,
    pub lambda: f64,
    pub product: f64,
    pub laplacian_norm: f64,
    pub l_lip: f64,
    pub rho: f64,
    pub mu: f64,
    pub regime: Regime,
}

impl Constants {
    pub fn new(spectral_norm_m_sq: f64, beta: f64, lambda: f64, laplacian_norm: f64) -> Self {
        let product = beta * spectral_norm_m_sq;
        let rho = 0.5 * product + 2.0 * lambda * laplacian_norm;
        Self {
            spectral_norm_m_sq,
            beta,
            lambda,
            product,
            laplacian_norm,
            l_lip: rho + 1.0,
            rho,
            mu: 1.0 - 0.5 * product,
            regime: Regime::classify(product),
        }
    }
}

/// A base-energy instance.
#[derive(Debug, Clone)]
pub struct TheoryInstance {
    pub patterns: Mat,
    pub beta: f64,
    pub lambda: f64,
    pub laplacian: CsrMatrix,
    constants: Constants,
}

impl TheoryInstance {
    pub fn new(patterns: Mat, beta: f64, lambda: f64, laplacian: CsrMatrix) -> Result<Self, TheoryError> {
        if !(lambda >= 0.0) {
            return Err(TheoryError::Precondition(format!(
                "theory routines require lambda >= 0, got {lambda}"
            )));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(TheoryError::Precondition(format!("beta must be positive, got {beta}")));
        }
        if laplacian.shape().0 != laplacian.shape().1 {
            return Err(ShapeError::new("laplacian", laplacian.shape(), laplacian.shape()).into());
        }
        let m_norm = spectral_norm(&patterns.view(), 1e-14)?;
        let (l_norm, _) = laplacian.spectral_norm_symmetric(1e-14, 200_000);
        let constants = Constants::new(m_norm * m_norm, beta, lambda, l_norm);
        Ok(Self {
            patterns,
            beta,
            lambda,
            laplacian,
            constants,
        })
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn num_nodes(&self) -> usize {
        self.laplacian.shape().0
    }

    pub fn dim(&self) -> usize {
        self.patterns.ncols()
    }

    pub fn energy(&self, x: &Mat) -> Result<f64, TheoryError> {
        Ok(energy_base(&x.view(), &self.patterns.view(), self.beta, self.lambda, &self.laplacian)?)
    }

    pub fn gradient(&self, x: &Mat) -> Result<Mat, TheoryError> {
        Ok(grad_energy_base(&x.view(), &self.patterns.view(), self.beta, self.lambda, &self.laplacian)?)
    }

    pub fn map(&self, x: &Mat) -> Result<Mat, TheoryError> {
        Ok(fixed_point_map(&x.view(), &self.patterns.view(), self.beta, self.lambda, &self.laplacian)?)
    }

    /// Standard-normal start of the right shape from a seeded stream.
    pub fn random_start(&self, seed: u64, scale: f64) -> Mat {
        let mut rng = stream(seed, Stream::Theory);
        Array2::from_shape_simple_fn((self.num_nodes(), self.dim()), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
    }

    /// Hessian-vector product `H v`, row-wise
    /// `v_v − β Mᵀ Σ(p_v) M v_v + 2λ (L V)_v` with `p_v = softmax(β M x_v)`.
    pub fn hessian_vector(&self, x: &Mat, v: &Mat) -> Result<Mat, TheoryError> {
        let p = softmax_rows(&x.dot(&self.patterns.t()), self.beta);
        let mv = v.dot(&self.patterns.t()); // rows: M v_v
        let mut sigma_mv = Array2::zeros(mv.raw_dim());
        for ((mut out, pr), u) in sigma_mv.rows_mut().into_iter().zip(p.rows()).zip(mv.rows()) {
            out.assign(&covariance_apply(&pr, &u));
        }
        let curvature = sigma_mv.dot(&self.patterns) * self.beta;
        let lv = self.laplacian.matmul(&v.view())?;
        Ok(v - &curvature + lv * (2.0 * self.lambda))
    }
}

/// `Σ(p) u = p ⊙ u − p (pᵀu)`.
pub fn covariance_apply(p: &ArrayView1<'_, f64>, u: &ArrayView1<'_, f64>) -> Array1<f64> {
    let pu = p.dot(u);
    p.iter().zip(u.iter()).map(|(pi, ui)| pi * ui - pi * pu).collect()
}

/// Dense `Σ(p) = diag(p) − ppᵀ`.
pub fn softmax_covariance(p: &ArrayView1<'_, f64>) -> Mat {
    let k = p.len();
    Array2::from_shape_fn((k, k), |(i, j)| {
        let diag = if i == j { p[i] } else { 0.0 };
        diag - p[i] * p[j]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// One named check with its measured worst-case slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub status: Status,
    /// Smallest `bound − measured` over all checked steps.
    pub slack: Option<f64>,
    pub detail: String,
}

impl Certificate {
    fn judged(name: &str, slack: f64, detail: String) -> Self {
        let status = if slack >= -HEADROOM { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            status,
            slack: Some(slack),
            detail,
        }
    }

    fn skipped(name: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            slack: None,
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    /// Turns a failed certificate into an error.
    pub fn into_result(self) -> Result<Self, TheoryError> {
        if self.status == Status::Fail {
            Err(TheoryError::CertificateFailed {
                name: self.name,
                detail: self.detail,
            })
        } else {
            Ok(self)
        }
    }
}

/// Outcome of a descent run: the per-step certificate, the averaged
/// gradient bound, and the gradient-norm trace.
#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub descent: Certificate,
    pub cesaro: Certificate,
    pub grad_norms: Vec<f64>,
}

/// Runs `steps` of gradient descent with step `η ∈ (0, 2/L_lip)` and checks
/// `E(X_{t+1}) ≤ E(X_t) − η(1 − ηL_lip/2)‖∇E(X_t)‖²` at every step, plus
/// `min_t ‖∇E_t‖² ≤ (E₀ − E_inf)/(cT)` with `E_inf` estimated by continuing
/// the same run ten times longer.
pub fn certify_descent(
    inst: &TheoryInstance,
    x0: &Mat,
    eta: f64,
    steps: usize,
) -> Result<DescentOutcome, TheoryError> {
    let l_lip = inst.constants.l_lip;
    if !(eta > 0.0 && eta < 2.0 / l_lip) {
        return Err(TheoryError::Precondition(format!(
            "step size {eta} outside the open interval (0, {})",
            2.0 / l_lip
        )));
    }
    if steps == 0 {
        return Err(TheoryError::Precondition("descent needs at least one step".into()));
    }
    let c = eta * (1.0 - eta * l_lip / 2.0);
    let mut x = x0.clone();
    let mut e = inst.energy(&x)?;
    let e0 = e;
    let mut worst = f64::INFINITY;
    let mut worst_step = 0;
    let mut grad_norms = Vec::with_capacity(steps);
    for t in 0..steps {
        let g = inst.gradient(&x)?;
        let gsq = frob_sq(&g);
        grad_norms.push(gsq.sqrt());
        x = &x - &(g * eta);
        let next = inst.energy(&x)?;
        let slack = e - c * gsq - next;
        if slack < worst {
            worst = slack;
            worst_step = t;
        }
        e = next;
    }
    let descent = Certificate::judged(
        "descent",
        worst,
        format!("eta={eta:.6e} L_lip={l_lip:.6e} steps={steps} worst_step={worst_step}"),
    );

    let mut tail = x;
    let mut e_inf = e;
    for _ in 0..10 * steps {
        let g = inst.gradient(&tail)?;
        tail = &tail - &(g * eta);
        e_inf = e_inf.min(inst.energy(&tail)?);
    }
    let min_gsq = grad_norms.iter().map(|g| g * g).fold(f64::INFINITY, f64::min);
    let bound = (e0 - e_inf) / (c * steps as f64);
    let cesaro = Certificate::judged(
        "cesaro_gradient_bound",
        bound - min_gsq,
        format!("min_grad_sq={min_gsq:.6e} bound={bound:.6e} E0={e0:.6e} E_inf={e_inf:.6e}"),
    );
    Ok(DescentOutcome {
        descent,
        cesaro,
        grad_norms,
    })
}

/// Iterates `x ← (1−α)x + αT(x)` until the step is below `tol`.
fn run_map(inst: &TheoryInstance, x0: &Mat, alpha: f64, tol: f64, cap: usize) -> Result<Mat, TheoryError> {
    let mut x = x0.clone();
    for _ in 0..cap {
        let next = &x * (1.0 - alpha) + &(inst.map(&x)? * alpha);
        let step = frob(&(&next - &x));
        x = next;
        if step <= tol {
            return Ok(x);
        }
    }
    Err(TheoryError::NonConvergence {
        what: "fixed-point iteration",
        iterations: cap,
    })
}

/// Contraction check for the damped map with `α ∈ (0, 1]` (`α = 1` is the
/// undamped map). Requires `ρ < 1`. Ten seeded starts must reach limits
/// within `1e-6` of each other, and every measured ratio
/// `‖X_{t+1} − X*‖ / ‖X_t − X*‖` must stay below `(1−α) + αρ`.
pub fn certify_contraction(inst: &TheoryInstance, alpha: f64, seed: u64) -> Result<Certificate, TheoryError> {
    let rho = inst.constants.rho;
    if !(rho < 1.0) {
        return Err(TheoryError::Precondition(format!(
            "contraction requires rho < 1, got rho = {rho}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TheoryError::Precondition(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let factor = (1.0 - alpha) + alpha * rho;
    let starts: Vec<Mat> = (0..10)
        .map(|i| inst.random_start(seed.wrapping_mul(31).wrapping_add(i), 2.0))
        .collect();
    let limits = starts
        .iter()
        .map(|s| run_map(inst, s, alpha, 1e-14, 1_000_000))
        .collect::<Result<Vec<_>, _>>()?;

    let mut spread = 0.0f64;
    for i in 0..limits.len() {
        for j in i + 1..limits.len() {
            spread = spread.max(frob(&(&limits[i] - &limits[j])));
        }
    }

    let reference = &limits[0];
    let mut worst_ratio = 0.0f64;
    for start in &starts {
        let mut x = start.clone();
        let mut dist = frob(&(&x - reference));
        for _ in 0..10_000 {
            if dist <= 1e-6 {
                break;
            }
            x = &x * (1.0 - alpha) + &(inst.map(&x)? * alpha);
            let next = frob(&(&x - reference));
            worst_ratio = worst_ratio.max(next / dist);
            dist = next;
        }
    }
    let name = if alpha == 1.0 { "contraction" } else { "damped_contraction" };
    let slack = (factor - worst_ratio).min(1e-6 - spread);
    Ok(Certificate::judged(
        name,
        slack,
        format!("alpha={alpha} rho={rho:.6e} bound={factor:.6e} max_ratio={worst_ratio:.6e} limit_spread={spread:.3e}"),
    ))
}

/// Gradient descent until `‖∇E‖ ≤ tol`.
pub fn minimize(inst: &TheoryInstance, x0: &Mat, eta: f64, tol: f64, cap: usize) -> Result<Mat, TheoryError> {
    let mut x = x0.clone();
    for _ in 0..cap {
        let g = inst.gradient(&x)?;
        if frob(&g) <= tol {
            return Ok(x);
        }
        x = &x - &(g * eta);
    }
    Err(TheoryError::NonConvergence {
        what: "gradient descent to the minimizer",
        iterations: cap,
    })
}

/// Linear-rate envelopes in the strongly convex regime:
/// `‖X_t − X*‖ ≤ (1−ημ)^t ‖X₀ − X*‖` and
/// `E(X_t) − E* ≤ (1−ημ)^t (E(X₀) − E*)`, with `η ∈ (0, 1/L_lip]`.
///
/// Outside the strongly convex regime the certificate is skipped.
pub fn certify_strong_convexity(
    inst: &TheoryInstance,
    x0: &Mat,
    eta: f64,
    steps: usize,
) -> Result<Vec<Certificate>, TheoryError> {
    let c = inst.constants;
    if c.regime != Regime::StronglyConvex {
        let why = format!(
            "beta*||M||^2 = {:.4} places the instance in the {} regime; linear-rate envelopes need beta*||M||^2 < 2",
            c.product, c.regime
        );
        return Ok(vec![
            Certificate::skipped("strong_convexity_iterates", why.clone()),
            Certificate::skipped("strong_convexity_values", why),
        ]);
    }
    if !(eta > 0.0 && eta <= 1.0 / c.l_lip) {
        return Err(TheoryError::Precondition(format!(
            "step size {eta} outside (0, {}]",
            1.0 / c.l_lip
        )));
    }
    let x_star = minimize(inst, x0, 1.0 / c.l_lip, 1e-10, 5_000_000)?;
    let e_star = inst.energy(&x_star)?;
    let rate = 1.0 - eta * c.mu;

    let mut x = x0.clone();
    let d0 = frob(&(&x - &x_star));
    let gap0 = inst.energy(&x)? - e_star;
    let mut worst_iter = f64::INFINITY;
    let mut worst_value = f64::INFINITY;
    let mut envelope = 1.0;
    for _ in 0..steps {
        let g = inst.gradient(&x)?;
        x = &x - &(g * eta);
        envelope *= rate;
        worst_iter = worst_iter.min(envelope * d0 - frob(&(&x - &x_star)));
        worst_value = worst_value.min(envelope * gap0 - (inst.energy(&x)? - e_star));
    }
    let detail = format!("eta={eta:.6e} mu={:.6e} rate={rate:.6e} steps={steps}", c.mu);
    Ok(vec![
        Certificate::judged("strong_convexity_iterates", worst_iter, detail.clone()),
        Certificate::judged("strong_convexity_values", worst_value, detail),
    ])
}

/// `½‖X‖² − ‖M‖√N‖X‖ − Nβ⁻¹ ln K`, checked against `E(X)`.
pub fn coercivity_lower_bound(inst: &TheoryInstance, x: &Mat) -> Result<f64, TheoryError> {
    let n = x.nrows() as f64;
    let k = inst.patterns.nrows() as f64;
    let norm = frob(x);
    let m_norm = inst.constants.spectral_norm_m_sq.sqrt();
    let bound = 0.5 * norm * norm - m_norm * n.sqrt() * norm - n * k.ln() / inst.beta;
    let e = inst.energy(x)?;
    if e < bound - 1e-9 * (1.0 + bound.abs()) {
        return Err(TheoryError::CertificateFailed {
            name: "coercivity".into(),
            detail: format!("energy {e} below bound {bound}"),
        });
    }
    Ok(bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalPoint {
    StrictLocalMin,
    StrictSaddle,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub kind: CriticalPoint,
    /// Estimated smallest Hessian eigenvalue (`None` if the iteration
    /// did not settle).
    pub min_eigenvalue: Option<f64>,
}

/// Smallest Hessian eigenvalue by power iteration on `sI − H` with
/// `s = L_lip ≥ λ_max(H)`.
pub fn min_hessian_eigenvalue(inst: &TheoryInstance, x: &Mat, tol: f64, cap: usize) -> Result<Option<f64>, TheoryError> {
    let shift = inst.constants.l_lip;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = Array2::from_shape_simple_fn(x.raw_dim(), || StandardNormal.sample(&mut rng));
    v /= frob(&v);
    let mut estimate = f64::NAN;
    for _ in 0..cap {
        let w = &v * shift - &inst.hessian_vector(x, &v)?;
        let rayleigh: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        let norm = frob(&w);
        if norm == 0.0 {
            return Ok(Some(shift));
        }
        v = w / norm;
        if (rayleigh - estimate).abs() <= tol * shift {
            return Ok(Some(shift - rayleigh));
        }
        estimate = rayleigh;
    }
    Ok(None)
}

/// Classifies a critical point by the sign of the smallest Hessian
/// eigenvalue. Requires `‖∇E(X)‖ ≤ 1e-8`.
pub fn classify_critical_point(inst: &TheoryInstance, x: &Mat) -> Result<CriticalPointReport, TheoryError> {
    let g = frob(&inst.gradient(x)?);
    if g > 1e-8 {
        return Err(TheoryError::Precondition(format!(
            "not a critical point: gradient norm {g:.3e} exceeds 1e-8"
        )));
    }
    let min_eigenvalue = min_hessian_eigenvalue(inst, x, 1e-13, 1_000_000)?;
    let kind = match min_eigenvalue {
        Some(e) if e > 1e-8 => CriticalPoint::StrictLocalMin,
        Some(e) if e < -1e-8 => CriticalPoint::StrictSaddle,
        _ => CriticalPoint::Inconclusive,
    };
    Ok(CriticalPointReport { kind, min_eigenvalue })
}

/// Constants plus certificates for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    #[serde(flatten)]
    pub constants: Constants,
    pub certificates: Vec<Certificate>,
}

impl TheoryReport {
    pub fn all_passed(&self) -> bool {
        self.certificates.iter().all(|c| c.status != Status::Fail)
    }
}

/// Runs every certificate applicable to the instance's regime.
pub fn verify(inst: &TheoryInstance, seed: u64, steps: usize) -> Result<TheoryReport, TheoryError> {
    let c = *inst.constants();
    let x0 = inst.random_start(seed, 1.0);
    let eta = 1.0 / c.l_lip;
    let mut certificates = Vec::new();
    let descent = certify_descent(inst, &x0, eta, steps)?;
    certificates.push(descent.descent);
    certificates.push(descent.cesaro);
    if c.rho < 1.0 {
        certificates.push(certify_contraction(inst, 1.0, seed)?);
        certificates.push(certify_contraction(inst, 0.5, seed)?);
    } else {
        certificates.push(Certificate::skipped(
            "contraction",
            format!("rho = {:.4} >= 1; Banach argument does not apply", c.rho),
        ));
    }
    certificates.extend(certify_strong_convexity(inst, &x0, eta, steps)?);
    let big = &x0 * (1e3 / frob(&x0).max(f64::MIN_POSITIVE));
    let bound = coercivity_lower_bound(inst, &big)?;
    certificates.push(Certificate::judged(
        "coercivity",
        inst.energy(&big)? - bound,
        format!("||X||_F=1e3 bound={bound:.6e}"),
    ));
    Ok(TheoryReport { constants: c, certificates })
}

/// `β‖M‖²_σ` across trained seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub per_seed: Vec<f64>,
    pub beta_mean: f64,
    pub spectral_norm_m_sq_mean: f64,
    pub product_mean: f64,
    /// Sample standard deviation of the product across seeds; reported as
    /// an extension (`None` with a single seed).
    pub product_std: Option<f64>,
    pub regime: Regime,
}

/// Summarises `(β, ‖M‖²_σ)` pairs from independently trained models.
pub fn operating_point(pairs: &[(f64, f64)]) -> Option<OperatingPoint> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let per_seed: Vec<f64> = pairs.iter().map(|(b, m)| b * m).collect();
    let product_mean = per_seed.iter().sum::<f64>() / n;
    let product_std = (pairs.len() > 1).then(|| {
        (per_seed.iter().map(|p| (p - product_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    Some(OperatingPoint {
        beta_mean: pairs.iter().map(|p| p.0).sum::<f64>() / n,
        spectral_norm_m_sq_mean: pairs.iter().map(|p| p.1).sum::<f64>() / n,
        regime: Regime::classify(product_mean),
        per_seed,
        product_mean,
        product_std,
    })
}

/// Patterns from the `Theory` stream, rescaled so that `β‖M‖²_σ` equals
/// `product` at `β = 1`.
pub fn scaled_patterns(seed: u64, num_patterns: usize, dim: usize, product: f64) -> Result<Mat, TheoryError> {
    let mut rng = stream(seed, Stream::Theory);
    let scale = 1.0 / (dim as f64).sqrt();
    let m: Mat = Array2::from_shape_simple_fn((num_patterns, dim), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    });
    let sigma = spectral_norm(&m.view(), 1e-15)?;
    Ok(m * (product.sqrt() / sigma))
}

/// The instances exercised by `verify-theory`: path, ring and block
/// Laplacians across the strongly convex, boundary and nonconvex regimes.
pub fn bundled_instances(seed: u64) -> Result<Vec<(String, TheoryInstance)>, TheoryError> {
    use crate::graph::{normalized_laplacian, Graph, Split};
    let laplacian = |n: usize, edges: Vec<(usize, usize)>| -> Result<CsrMatrix, TheoryError> {
        let g = Graph::new(Array2::zeros((n, 1)), edges, vec![None; n], vec![Split::None; n])
            .map_err(|e| TheoryError::Precondition(e.to_string()))?;
        normalized_laplacian(&g, true).map_err(|e| TheoryError::Precondition(e.to_string()))
    };
    let path = laplacian(8, (1..8).map(|i| (i - 1, i)).collect())?;
    let ring = laplacian(10, (0..10).map(|i| (i, (i + 1) % 10)).collect())?;
    let blocks = {
        let spec = crate::synthetic::SbmSpec {
            nodes: 24,
            feature_dim: 2,
            avg_degree: 3.0,
            train_per_class: 2,
            val_per_class: 2,
            ..crate::synthetic::SbmSpec::homophilous(seed)
        };
        let g = crate::synthetic::generate(&spec).map_err(|e| TheoryError::Precondition(e.to_string()))?;
        normalized_laplacian(&g, true).map_err(|e| TheoryError::Precondition(e.to_string()))?
    };
    // (name, laplacian, K, d, β‖M‖², λ)
    let table = [
        ("path_convex", path.clone(), 3, 4, 0.5, 0.1),
        ("ring_convex", ring.clone(), 4, 3, 1.0, 0.05),
        ("blocks_convex", blocks.clone(), 5, 4, 1.5, 0.02),
        ("ring_boundary", ring, 4, 3, 2.0, 0.1),
        ("path_nonconvex", path, 6, 4, 4.0, 0.3),
        ("blocks_nonconvex", blocks, 5, 4, 8.0, 0.1),
    ];
    table
        .into_iter()
        .enumerate()
        .map(|(i, (name, l, k, d, product, lambda))| {
            let m = scaled_patterns(seed.wrapping_mul(97).wrapping_add(i as u64), k, d, product)?;
            Ok((name.to_string(), TheoryInstance::new(m, 1.0, lambda, l)?))
        })
        .collect()
}
