//! Convergence certificates for away-steps runs.
//!
//! The certificate layer turns the geometry of an instance into explicit
//! constants: a Hoffman-style conditioning number `θ` of the stacked
//! constraint data, the growth constant `κ` that bounds squared distances by
//! objective suboptimality, the facial distance `Ω` of the polytope, and the
//! per-iteration contraction `α†`. Together they yield a checkable bound
//!
//! ```text
//! f(x^k) - f* ≤ C · (1 - α†)^((k - 1) / 2)
//! ```
//!
//! that [`check_rate_bound`] verifies on recorded traces, plus the error
//! bound `‖x - x*‖² ≤ κ (f(x) - f*)` verified on sampled feasible points by
//! [`check_error_bound`]. [`check_vertex_facet_lemma`] stress-tests the
//! geometric inequality underlying the away-step progress argument.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::objective::{CompositeObjective, ObjectiveError};
use crate::oracle::{self, OracleError};
use crate::polyhedron::{Polytope, PolytopeError};
use crate::solver::{validate_trace, Algorithm, ReductionRule, SolverTrace, TraceError};

/// Hoffman subset enumeration refuses stacked systems with more rows.
pub const HOFFMAN_ROW_CAP: usize = 18;

/// Rank tolerance for the subset independence test.
pub const HOFFMAN_RANK_TOL: f64 = 1e-10;

/// Required duality gap at a reference optimum.
pub const OPT_GAP_TOL: f64 = 1e-10;

/// Additive slack, relative to `C`, allowed when checking the rate bound.
pub const RATE_SLACK: f64 = 1e-9;

/// Additive slack allowed when checking the error bound.
pub const ERROR_BOUND_SLACK: f64 = 1e-9;

/// Additive slack allowed when checking the vertex-facet inequality.
pub const LEMMA_SLACK: f64 = 1e-9;

/// Rejection-sampling budget per sampled premise.
const PREMISE_BUDGET: usize = 10_000;

/// Global attempt cap: `factor * trials` premises may be tried in total.
const PREMISE_ATTEMPT_FACTOR: usize = 200;

#[derive(Debug, Clone, thiserror::Error)]
pub enum CertificateError {
    #[error("stacked system has {rows} rows; subset enumeration is capped at {cap}")]
    TooManyRows { rows: usize, cap: usize },
    #[error("certificates require a quadratic inner function")]
    NonQuadraticInner,
    #[error("rate bounds apply to away-steps traces, not plain conditional gradient")]
    CgTrace,
    #[error("trace failed validation: {0}")]
    Trace(#[from] TraceError),
    #[error(
        "rate bound violated at iteration {iteration}: f - f* = {observed:.6e} > {bound:.6e}"
    )]
    RateBoundViolated {
        iteration: u64,
        observed: f64,
        bound: f64,
    },
    #[error("reference point is not optimal (gap {gap:.3e})")]
    SuboptimalReference { gap: f64 },
    #[error("error bound needs a unique optimum: E must have full column rank")]
    RankDeficientMap,
    #[error("error bound violated at trial {trial}: ‖x - x*‖² = {lhs:.6e} > {rhs:.6e}")]
    ErrorBoundViolated { trial: usize, lhs: f64, rhs: f64 },
    #[error("vertex-facet inequality violated: lhs {lhs:.6e} < rhs {rhs:.6e}")]
    LemmaViolated { lhs: f64, rhs: f64 },
    #[error("could not sample enough admissible premises ({found} of {needed})")]
    PremiseSamplingFailed { needed: usize, found: usize },
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// How the subset conditioning number aggregates the smallest eigenvalue of
/// `B Bᵀ` over independent row subsets `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaVariant {
    /// `θ = max 1 / λ_min(B Bᵀ)`.
    #[default]
    InverseLambdaMin,
    /// `θ = max 1 / sqrt(λ_min(B Bᵀ))`.
    InverseSqrtLambdaMin,
}

/// Hoffman-style conditioning number of a row system: the worst (largest)
/// inverse smallest eigenvalue of `B Bᵀ` over all linearly independent row
/// subsets `B`.
pub fn hoffman_theta(m: &DMatrix<f64>, variant: ThetaVariant) -> Result<f64, CertificateError> {
    hoffman_theta_with(m, variant, HOFFMAN_ROW_CAP, HOFFMAN_RANK_TOL)
}

pub fn hoffman_theta_with(
    m: &DMatrix<f64>,
    variant: ThetaVariant,
    row_cap: usize,
    rank_tol: f64,
) -> Result<f64, CertificateError> {
    let rows = m.nrows();
    let n = m.ncols();
    if rows == 0 || n == 0 {
        return Err(CertificateError::BadInput("empty system".into()));
    }
    if rows > row_cap {
        return Err(CertificateError::TooManyRows {
            rows,
            cap: row_cap,
        });
    }
    let mut best: Option<f64> = None;
    for size in 1..=rows.min(n) {
        for subset in (0..rows).combinations(size) {
            let b = m.select_rows(subset.iter());
            if linalg::rank(&b, rank_tol) < size {
                continue;
            }
            let gram = &b * b.transpose();
            let lam = linalg::sym_eig_min(&gram);
            if lam <= 0.0 {
                // The rank test accepted a subset the eigensolver finds
                // singular; treat it as dependent.
                continue;
            }
            let candidate = match variant {
                ThetaVariant::InverseLambdaMin => 1.0 / lam,
                ThetaVariant::InverseSqrtLambdaMin => 1.0 / lam.sqrt(),
            };
            best = Some(best.map_or(candidate, |b: f64| b.max(candidate)));
        }
    }
    best.ok_or_else(|| CertificateError::BadInput("no independent row subset".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateOptions {
    pub theta_variant: ThetaVariant,
    /// Determines the vertex budget `N`: the full vertex count under the
    /// trivial rule, `n + 1` under Carathéodory reduction.
    pub reduction: ReductionRule,
    pub row_cap: usize,
    pub rank_tol: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            theta_variant: ThetaVariant::default(),
            reduction: ReductionRule::default(),
            row_cap: HOFFMAN_ROW_CAP,
            rank_tol: HOFFMAN_RANK_TOL,
        }
    }
}

/// Instance constants certifying a linear convergence rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateCertificate {
    pub theta: f64,
    pub theta_variant: ThetaVariant,
    /// `κ = θ² (‖b‖ D + 3 G D_E + 2 (G² + 1) / σ_g)`.
    pub kappa: f64,
    /// Facial distance `Ω = ζ / φ` of the polytope.
    pub omega: f64,
    pub diameter: f64,
    pub image_diameter: f64,
    /// `G`: largest gradient norm of the inner function over the image of
    /// the vertex set.
    pub grad_norm_max: f64,
    pub sigma_g: f64,
    /// Curvature constant of the composite objective.
    pub rho: f64,
    /// `C = G D_E + ‖b‖ D`, bounding the objective spread.
    pub upper_bound_c: f64,
    /// Vertex budget `N` entering the contraction.
    pub vertex_budget: f64,
    pub reduction: ReductionRule,
    /// Per-two-iterations contraction `α† = min(Ω² / (8 ρ κ D² N²), 1/2)`.
    pub alpha_dagger: f64,
}

impl RateCertificate {
    /// Suboptimality bound after `k` iterations (1-based).
    pub fn bound_at(&self, k: u64) -> f64 {
        self.upper_bound_c * (1.0 - self.alpha_dagger).powf((k as f64 - 1.0) / 2.0)
    }
}

/// Compute the rate certificate of an instance. Requires a quadratic inner
/// function (the gradient-norm maximum over the set is then exact).
pub fn rate_certificate(
    polytope: &Polytope,
    objective: &CompositeObjective,
    options: &CertificateOptions,
) -> Result<RateCertificate, CertificateError> {
    if objective.dim() != polytope.dim() {
        return Err(CertificateError::BadInput(format!(
            "objective dimension {} does not match polytope dimension {}",
            objective.dim(),
            polytope.dim()
        )));
    }
    let pc = objective.problem_constants(polytope)?;
    if !pc.exact {
        return Err(CertificateError::NonQuadraticInner);
    }
    let gc = polytope.geometric_constants()?;
    let h = polytope.h_form()?;

    // Stack the constraint rows, the map, and the linear term into one
    // system; its subset conditioning feeds the growth constant.
    let n = polytope.dim();
    let e = objective.e();
    let total_rows = h.a_mat.nrows() + e.nrows() + 1;
    let mut stacked = DMatrix::zeros(total_rows, n);
    stacked.rows_mut(0, h.a_mat.nrows()).copy_from(&h.a_mat);
    stacked.rows_mut(h.a_mat.nrows(), e.nrows()).copy_from(e);
    stacked
        .rows_mut(h.a_mat.nrows() + e.nrows(), 1)
        .copy_from(&objective.b().transpose());
    let theta = hoffman_theta_with(
        &stacked,
        options.theta_variant,
        options.row_cap,
        options.rank_tol,
    )?;

    let b_norm = objective.b().norm();
    let g = pc.grad_norm_max;
    let sigma_g = objective.sigma_g();
    let kappa =
        theta * theta * (b_norm * gc.diameter + 3.0 * g * pc.image_diameter
            + 2.0 * (g * g + 1.0) / sigma_g);
    let vertex_budget = match options.reduction {
        ReductionRule::Trivial => polytope.vertex_count()? as f64,
        ReductionRule::Caratheodory => (n + 1) as f64,
    };
    let alpha_dagger = if pc.rho == 0.0 {
        0.5
    } else {
        let denom = 8.0 * pc.rho * kappa * gc.diameter * gc.diameter * vertex_budget
            * vertex_budget;
        (gc.omega * gc.omega / denom).min(0.5)
    };
    Ok(RateCertificate {
        theta,
        theta_variant: options.theta_variant,
        kappa,
        omega: gc.omega,
        diameter: gc.diameter,
        image_diameter: pc.image_diameter,
        grad_norm_max: g,
        sigma_g,
        rho: pc.rho,
        upper_bound_c: pc.upper_bound,
        vertex_budget,
        reduction: options.reduction,
        alpha_dagger,
    })
}

/// Iterations sufficient for the certified bound to fall below `eps`.
pub fn predicted_iterations(cert: &RateCertificate, eps: f64) -> Result<u64, CertificateError> {
    if !(eps > 0.0) {
        return Err(CertificateError::BadInput(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if cert.upper_bound_c <= eps {
        return Ok(1);
    }
    let contraction = -(1.0 - cert.alpha_dagger).ln();
    let k = 1.0 + 2.0 * (cert.upper_bound_c / eps).ln() / contraction;
    Ok(k.ceil() as u64)
}

/// Verify `f(x^k) - f* ≤ C (1 - α†)^((k-1)/2)` for every recorded iterate,
/// with additive slack `RATE_SLACK * C`. Plain conditional gradient traces
/// are rejected: the certificate relies on away steps.
pub fn check_rate_bound(
    trace: &SolverTrace,
    cert: &RateCertificate,
    f_star: f64,
) -> Result<(), CertificateError> {
    if trace.algorithm == Algorithm::Cg {
        return Err(CertificateError::CgTrace);
    }
    validate_trace(trace)?;
    let slack = RATE_SLACK * cert.upper_bound_c;
    for (i, f) in trace.objective_values().iter().enumerate() {
        let k = i as u64 + 1;
        let bound = cert.bound_at(k);
        if f - f_star > bound + slack {
            return Err(CertificateError::RateBoundViolated {
                iteration: k,
                observed: f - f_star,
                bound,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    pub trials: usize,
    /// Largest observed `‖x - x*‖² / (f(x) - f*)`.
    pub max_ratio: f64,
    /// Smallest slack `κ (f - f*) + tol - ‖x - x*‖²` seen.
    pub min_margin: f64,
}

/// Sample feasible points (Dirichlet weights over the vertex set) and check
/// `‖x - x*‖² ≤ κ (f(x) - f*) + ERROR_BOUND_SLACK` at each. The reference
/// `x_star` must be optimal within [`OPT_GAP_TOL`] and the map `E` must have
/// full column rank so the optimum is unique.
pub fn check_error_bound(
    polytope: &Polytope,
    objective: &CompositeObjective,
    cert: &RateCertificate,
    x_star: &DVector<f64>,
    trials: usize,
    seed: u64,
) -> Result<ErrorBoundReport, CertificateError> {
    if linalg::rank(objective.e(), 1e-10) < objective.dim() {
        return Err(CertificateError::RankDeficientMap);
    }
    let grad = objective.grad(x_star)?;
    let ans = oracle::vertex_oracle(polytope, &grad)?;
    let gap = grad.dot(x_star) - ans.value;
    if gap.abs() > OPT_GAP_TOL {
        return Err(CertificateError::SuboptimalReference { gap });
    }
    let f_star = objective.eval(x_star)?;
    let verts = polytope.vertices()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    let mut min_margin = f64::INFINITY;
    for trial in 0..trials {
        // Dirichlet(1, …, 1) via normalized exponentials.
        let mut weights: Vec<f64> = (0..verts.len())
            .map(|_| -(rng.gen_range(0.0f64..1.0).max(f64::MIN_POSITIVE)).ln())
            .collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let mut x = DVector::zeros(polytope.dim());
        for (w, v) in weights.iter().zip(verts) {
            x.axpy(*w, v, 1.0);
        }
        let lhs = (&x - x_star).norm_squared();
        let fx = objective.eval(&x)?;
        let rhs = cert.kappa * (fx - f_star) + ERROR_BOUND_SLACK;
        if lhs > rhs {
            return Err(CertificateError::ErrorBoundViolated { trial, lhs, rhs });
        }
        if fx - f_star > 1e-12 {
            max_ratio = max_ratio.max(lhs / (fx - f_star));
        }
        min_margin = min_margin.min(rhs - lhs);
    }
    Ok(ErrorBoundReport {
        trials,
        max_ratio,
        min_margin,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaReport {
    pub checked: usize,
    /// Smallest observed `lhs - rhs` over all checked premises.
    pub min_slack: f64,
    /// Premises abandoned because no admissible direction was found within
    /// the rejection budget.
    pub skipped: usize,
}

/// Stress-test the vertex-facet inequality: for a vertex subset `U`, a
/// direction `c`, and any `z` with `A_{I(U)} z ≤ 0` and `<c, z> > 0`,
///
/// ```text
/// max_{p ∈ V, u ∈ U} <c, p - u>  ≥  (Ω / |U|) · <c, z> / ‖z‖.
/// ```
///
/// Premises are sampled: random `U` and Gaussian `c`, with `z` drawn by
/// projecting Gaussian samples onto the equality span of opposite active
/// rows and rejection-sampling the remaining inequalities.
pub fn check_vertex_facet_lemma(
    polytope: &Polytope,
    trials: usize,
    seed: u64,
) -> Result<LemmaReport, CertificateError> {
    let verts = polytope.vertices()?;
    let h = polytope.h_form()?;
    let gc = polytope.geometric_constants()?;
    let n = polytope.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut min_slack = f64::INFINITY;
    let mut attempts = 0usize;
    let max_attempts = PREMISE_ATTEMPT_FACTOR * trials.max(1);

    while checked < trials {
        if attempts >= max_attempts {
            return Err(CertificateError::PremiseSamplingFailed {
                needed: trials,
                found: checked,
            });
        }
        attempts += 1;

        let size = rng.gen_range(1..=verts.len().min(n + 2));
        let chosen = index::sample(&mut rng, verts.len(), size);
        let subset: Vec<&DVector<f64>> = chosen.iter().map(|i| &verts[i]).collect();
        let c = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));

        // Rows active at every vertex of U.
        let mut active: Vec<usize> = Vec::new();
        for row in 0..h.a_mat.nrows() {
            let all = subset
                .iter()
                .all(|v| (h.a_vec[row] - h.a_mat.row(row).transpose().dot(v)).abs() <= 1e-9);
            if all {
                active.push(row);
            }
        }

        let z = match sample_admissible_direction(&mut rng, h, &active, &c) {
            Some(z) => z,
            None => {
                skipped += 1;
                continue;
            }
        };

        let max_p = verts
            .iter()
            .map(|v| c.dot(v))
            .fold(f64::NEG_INFINITY, f64::max);
        let min_u = subset
            .iter()
            .map(|v| c.dot(v))
            .fold(f64::INFINITY, f64::min);
        let lhs = max_p - min_u;
        let rhs = gc.omega / size as f64 * c.dot(&z) / z.norm();
        if lhs < rhs - LEMMA_SLACK {
            return Err(CertificateError::LemmaViolated { lhs, rhs });
        }
        min_slack = min_slack.min(lhs - rhs);
        checked += 1;
    }
    Ok(LemmaReport {
        checked,
        min_slack,
        skipped,
    })
}

/// Draw `z` with `A_active z ≤ 0` (within 1e-10) and `<c, z> > 0`. Opposite
/// row pairs in the active set force equalities, so Gaussian samples are
/// first projected onto their common nullspace; otherwise admissible
/// directions can have measure zero.
fn sample_admissible_direction(
    rng: &mut ChaCha8Rng,
    h: &crate::polyhedron::HForm,
    active: &[usize],
    c: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = h.a_mat.ncols();
    // Detect opposite pairs among active rows.
    let mut equality_rows: Vec<DVector<f64>> = Vec::new();
    for (i, &r) in active.iter().enumerate() {
        let ar = h.a_mat.row(r).transpose();
        let nr = ar.norm();
        if nr == 0.0 {
            continue;
        }
        for &s in active.iter().skip(i + 1) {
            let as_ = h.a_mat.row(s).transpose();
            let ns = as_.norm();
            if ns == 0.0 {
                continue;
            }
            if (&ar / nr + &as_ / ns).amax() <= 1e-9 {
                if !equality_rows
                    .iter()
                    .any(|e| (e - &ar / nr).amax() <= 1e-9 || (e + &ar / nr).amax() <= 1e-9)
                {
                    equality_rows.push(ar.clone() / nr);
                }
            }
        }
    }
    // Orthonormalize the equality directions for stable projection.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for e in &equality_rows {
        let mut v = e.clone();
        for b in &basis {
            let p = b.dot(&v);
            v.axpy(-p, b, 1.0);
        }
        let nv = v.norm();
        if nv > 1e-12 {
            basis.push(v / nv);
        }
    }

    for _ in 0..PREMISE_BUDGET {
        let mut z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        for b in &basis {
            let p = b.dot(&z);
            z.axpy(-p, b, 1.0);
        }
        let nz = z.norm();
        if nz <= 1e-12 {
            continue;
        }
        for cand in [1.0f64, -1.0] {
            let zc = &z * cand;
            if c.dot(&zc) <= 0.0 {
                continue;
            }
            let feasible = active.iter().all(|&r| {
                h.a_mat.row(r).transpose().dot(&zc) <= 1e-10 * nz
            });
            if feasible {
                return Some(zc);
            }
        }
    }
    None
}
