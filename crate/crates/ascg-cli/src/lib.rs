//! Instance generation and side-by-side runs for the `ascg` binary.

use ascg_core::objective::{InnerFn, ObjectiveError, QuadraticForm};
use ascg_core::polyhedron::PolytopeError;
use ascg_core::solver::SolverError;
use ascg_core::{
    cg_run, solve, Algorithm, CompositeObjective, Polytope, Problem, ReductionRule, SolverConfig,
    SolverTrace, StepsizeRule,
};
use nalgebra::{DMatrix, DVector};
use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Explicit H-form generation enumerates `C(2n + 2 + 2^n, n+1)` row subsets
/// when validating, so it is capped tightly; the structured kind has no cap.
pub const GENERIC_L1LS_DIM_CAP: usize = 5;

/// Gap thresholds reported by [`compare`].
pub const COARSE_GAP: f64 = 1e-3;
pub const FINE_GAP: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("k and n must be positive (got k = {k}, n = {n})")]
    EmptyShape { k: usize, n: usize },
    #[error("lambda must be finite and nonnegative (got {0})")]
    BadLambda(f64),
    #[error("explicit H-form instances are capped at n = {cap} (got n = {n})")]
    GenericTooLarge { n: usize, cap: usize },
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// An ℓ1-regularized least-squares instance
/// `min ‖B w - c‖² + λ ‖w‖₁` reformulated over the lifted polytope
/// `{(w, t) : w ∈ [-1,1]ⁿ, ‖w‖₁ ≤ t ≤ n}` as
/// `g(E x) + <b, x>` with `E = [B | 0]`, `b = (0, …, 0, λ)`.
#[derive(Debug)]
pub struct L1ls {
    pub problem: Problem,
    /// The design matrix `B` (k × n).
    pub design: DMatrix<f64>,
    /// The measurement vector `c`.
    pub target: DVector<f64>,
    pub lambda: f64,
    /// Sparse ground truth used to synthesize `c`.
    pub true_weights: DVector<f64>,
}

/// Deterministically generate an ℓ1 least-squares instance. Gaussian design
/// (variance `1/k` per entry), a sparse ±[0.5, 1) ground truth on `⌈n/5⌉`
/// coordinates, and 1% Gaussian measurement noise. With `generic` the
/// feasible set is written as an explicit H-form (small `n` only) instead
/// of the structured lifted kind; both describe the same polytope.
pub fn generate_l1ls(
    k: usize,
    n: usize,
    lambda: f64,
    seed: u64,
    generic: bool,
) -> Result<L1ls, GenerateError> {
    if k == 0 || n == 0 {
        return Err(GenerateError::EmptyShape { k, n });
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(GenerateError::BadLambda(lambda));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (k as f64).sqrt();
    let design =
        DMatrix::from_fn(k, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));

    let support_size = n.div_ceil(5).max(1);
    let support = index::sample(&mut rng, n, support_size);
    let mut true_weights = DVector::zeros(n);
    for i in support {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        true_weights[i] = sign * rng.gen_range(0.5..1.0);
    }
    let noise = DVector::from_fn(k, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
    let target = &design * &true_weights + noise;

    let polytope = if generic {
        if n > GENERIC_L1LS_DIM_CAP {
            return Err(GenerateError::GenericTooLarge {
                n,
                cap: GENERIC_L1LS_DIM_CAP,
            });
        }
        let (a_mat, a_vec) = lifted_h_form(n);
        Polytope::generic_h(a_mat, a_vec)?
    } else {
        Polytope::lifted_l1_box(n)?
    };

    let mut e = DMatrix::zeros(k, n + 1);
    e.view_mut((0, 0), (k, n)).copy_from(&design);
    let mut b = DVector::zeros(n + 1);
    b[n] = lambda;
    let objective =
        CompositeObjective::new(e, b, InnerFn::Quadratic(QuadraticForm::least_squares(&target)))?;

    Ok(L1ls {
        problem: Problem {
            polytope,
            objective,
        },
        design,
        target,
        lambda,
        true_weights,
    })
}

/// Rows of the lifted set `{(x, y) : -1 ≤ x ≤ 1, 0 ≤ y ≤ n, ‖x‖₁ ≤ y}`:
/// box faces, the two `y` caps, and one `σᵀx ≤ y` row per sign pattern.
fn lifted_h_form(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let dim = n + 1;
    let rows = 2 * n + 2 + (1usize << n);
    let mut a = DMatrix::zeros(rows, dim);
    let mut rhs = DVector::zeros(rows);
    let mut r = 0;
    for i in 0..n {
        a[(r, i)] = 1.0;
        rhs[r] = 1.0;
        r += 1;
        a[(r, i)] = -1.0;
        rhs[r] = 1.0;
        r += 1;
    }
    a[(r, n)] = 1.0;
    rhs[r] = n as f64;
    r += 1;
    a[(r, n)] = -1.0;
    rhs[r] = 0.0;
    r += 1;
    for mask in 0..(1usize << n) {
        for i in 0..n {
            a[(r, i)] = if (mask >> i) & 1 == 1 { 1.0 } else { -1.0 };
        }
        a[(r, n)] = -1.0;
        rhs[r] = 0.0;
        r += 1;
    }
    (a, rhs)
}

/// One solver variant's results on a shared instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub algorithm: Algorithm,
    pub stepsize: StepsizeRule,
    pub reduction: ReductionRule,
    /// First iteration whose gap fell below [`COARSE_GAP`] / [`FINE_GAP`].
    pub iterations_to_coarse: Option<u64>,
    pub iterations_to_fine: Option<u64>,
    pub iterations_run: u64,
    pub converged: bool,
    pub final_f: f64,
    pub final_gap: f64,
    pub forward_steps: u64,
    pub drop_steps: u64,
    pub max_repr_size: usize,
}

/// First (1-based) iteration at which the recorded gap is at most `tol`,
/// including the terminal row.
pub fn first_iteration_below(trace: &SolverTrace, tol: f64) -> Option<u64> {
    for r in &trace.records {
        if r.fw_gap <= tol {
            return Some(r.iteration);
        }
    }
    if trace.final_gap <= tol {
        return Some(trace.records.len() as u64 + 1);
    }
    None
}

fn summarize(label: &str, algorithm: Algorithm, config: &SolverConfig, trace: &SolverTrace) -> CompareRow {
    CompareRow {
        label: label.to_string(),
        algorithm,
        stepsize: config.stepsize,
        reduction: config.reduction,
        iterations_to_coarse: first_iteration_below(trace, COARSE_GAP),
        iterations_to_fine: first_iteration_below(trace, FINE_GAP),
        iterations_run: trace.records.len() as u64,
        converged: trace.converged,
        final_f: trace.final_f,
        final_gap: trace.final_gap,
        forward_steps: trace.forward_steps,
        drop_steps: trace.drop_steps,
        max_repr_size: trace
            .records
            .iter()
            .map(|r| r.repr_size)
            .max()
            .unwrap_or(1),
    }
}

/// Run the away-steps variants and plain conditional gradient side by side.
pub fn compare(
    problem: &Problem,
    max_iters: usize,
    gap_tol: f64,
) -> Result<Vec<CompareRow>, SolverError> {
    let base = SolverConfig {
        max_iters,
        gap_tol,
        ..SolverConfig::default()
    };
    let mut rows = Vec::new();

    let variants: [(&str, StepsizeRule, ReductionRule); 3] = [
        ("away-steps exact", StepsizeRule::ExactLineSearch, ReductionRule::Trivial),
        (
            "away-steps exact + reduction",
            StepsizeRule::ExactLineSearch,
            ReductionRule::Caratheodory,
        ),
        ("away-steps adaptive", StepsizeRule::Adaptive, ReductionRule::Trivial),
    ];
    for (label, stepsize, reduction) in variants {
        let config = SolverConfig {
            stepsize,
            reduction,
            ..base.clone()
        };
        let trace = solve(&problem.polytope, &problem.objective, config.clone())?;
        rows.push(summarize(label, Algorithm::AwaySteps, &config, &trace));
    }

    let config = base.clone();
    let trace = cg_run(&problem.polytope, &problem.objective, config.clone())?;
    rows.push(summarize(
        "conditional gradient",
        Algorithm::Cg,
        &config,
        &trace,
    ));
    Ok(rows)
}

/// Fixed-width text table of comparison rows.
pub fn render_table(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<30} {:>10} {:>10} {:>8} {:>14} {:>10} {:>7} {:>6} {:>9}\n",
        "variant", "gap<=1e-3", "gap<=1e-6", "iters", "final f", "final gap", "fwd", "drop", "max repr"
    ));
    let fmt_opt = |v: Option<u64>| v.map_or("-".to_string(), |k| k.to_string());
    for r in rows {
        out.push_str(&format!(
            "{:<30} {:>10} {:>10} {:>8} {:>14.6e} {:>10.2e} {:>7} {:>6} {:>9}\n",
            r.label,
            fmt_opt(r.iterations_to_coarse),
            fmt_opt(r.iterations_to_fine),
            r.iterations_run,
            r.final_f,
            r.final_gap,
            r.forward_steps,
            r.drop_steps,
            r.max_repr_size
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_well_shaped() {
        let a = generate_l1ls(4, 6, 0.05, 7, false).unwrap();
        let b = generate_l1ls(4, 6, 0.05, 7, false).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.target, b.target);
        assert_eq!(a.true_weights, b.true_weights);
        assert_eq!(a.problem.polytope.dim(), 7);
        assert_eq!(a.problem.objective.dim(), 7);
        assert_eq!(a.problem.objective.inner_dim(), 4);
        // b carries lambda only on the lifted coordinate.
        let bd = a.problem.objective.b();
        assert_eq!(bd[6], 0.05);
        assert!(bd.rows(0, 6).iter().all(|&v| v == 0.0));
        let c = generate_l1ls(4, 6, 0.05, 8, false).unwrap();
        assert_ne!(a.design, c.design);
    }

    #[test]
    fn generic_and_structured_forms_agree_on_small_instances() {
        let structured = generate_l1ls(3, 3, 0.1, 5, false).unwrap();
        let generic = generate_l1ls(3, 3, 0.1, 5, true).unwrap();

        // Same vertex sets (up to order).
        let sv = structured.problem.polytope.vertices().unwrap();
        let gv = generic.problem.polytope.vertices().unwrap();
        assert_eq!(sv.len(), gv.len());
        for v in sv {
            assert!(
                gv.iter().any(|w| (w - v).amax() < 1e-9),
                "missing vertex {v}"
            );
        }

        // Same optimum from both descriptions.
        let config = SolverConfig {
            gap_tol: 1e-10,
            max_iters: 20_000,
            ..SolverConfig::default()
        };
        let ts = solve(
            &structured.problem.polytope,
            &structured.problem.objective,
            config.clone(),
        )
        .unwrap();
        let tg = solve(
            &generic.problem.polytope,
            &generic.problem.objective,
            config,
        )
        .unwrap();
        assert!(ts.converged && tg.converged);
        assert!((ts.final_f - tg.final_f).abs() < 1e-8);
    }

    #[test]
    fn oversized_generic_requests_are_rejected() {
        assert!(matches!(
            generate_l1ls(3, 8, 0.1, 1, true),
            Err(GenerateError::GenericTooLarge { .. })
        ));
        assert!(matches!(
            generate_l1ls(0, 3, 0.1, 1, false),
            Err(GenerateError::EmptyShape { .. })
        ));
        assert!(matches!(
            generate_l1ls(3, 3, -0.5, 1, false),
            Err(GenerateError::BadLambda(_))
        ));
    }

    #[test]
    fn comparison_covers_all_variants_and_finds_thresholds() {
        let inst = generate_l1ls(4, 5, 0.05, 11, false).unwrap();
        let rows = compare(&inst.problem, 3000, 1e-8).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3].algorithm, Algorithm::Cg);
        for r in &rows {
            if let (Some(c), Some(f)) = (r.iterations_to_coarse, r.iterations_to_fine) {
                assert!(c <= f, "{}: coarse after fine", r.label);
            }
            assert!(r.final_f.is_finite());
        }
        // Away-steps with exact line search must reach the fine gap here.
        assert!(rows[0].iterations_to_fine.is_some());
        let table = render_table(&rows);
        assert!(table.lines().count() == 5);
        assert!(table.contains("conditional gradient"));
    }
}
