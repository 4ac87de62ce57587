//! Composite objectives `f(x) = g(Ex) + <b, x>` with a strongly convex
//! inner function `g`.
//!
//! The quadratic inner form `g(y) = yᵀQy + cᵀy + r` (note: no 1/2 factor) is
//! the serializable workhorse: its strong-convexity and smoothness constants
//! come from the spectrum of `Q`, the curvature constant of `f` from
//! `EᵀQE`, and exact line search has a closed form. Arbitrary inner
//! functions are supported through [`InnerFn::Custom`] for library use.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::polyhedron::{Polytope, PolytopeError};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ObjectiveError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("inner function is not strongly convex (lambda_min(Q) = {lambda_min})")]
    NotStronglyConvex { lambda_min: f64 },
    #[error("objective evaluated to a non-finite value")]
    NonFinite,
    #[error("curvature constant needs a gradient-Lipschitz bound for custom inner functions")]
    MissingSmoothness,
    #[error("custom inner functions cannot be serialized")]
    NotSerializable,
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

/// `g(y) = yᵀQy + cᵀy + r` with `Q` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    q: DMatrix<f64>,
    c: DVector<f64>,
    r: f64,
    sigma: f64,
    smoothness: f64,
}

impl QuadraticForm {
    pub fn new(q: DMatrix<f64>, c: DVector<f64>, r: f64) -> Result<Self, ObjectiveError> {
        if q.nrows() != q.ncols() || q.nrows() != c.len() {
            return Err(ObjectiveError::ShapeMismatch(format!(
                "Q is {}x{}, c has length {}",
                q.nrows(),
                q.ncols(),
                c.len()
            )));
        }
        let q = (&q + q.transpose()) * 0.5;
        let lambda_min = linalg::sym_eig_min(&q);
        if lambda_min <= 0.0 {
            return Err(ObjectiveError::NotStronglyConvex { lambda_min });
        }
        let lambda_max = linalg::sym_eig_max(&q);
        Ok(Self {
            q,
            c,
            r,
            sigma: 2.0 * lambda_min,
            smoothness: 2.0 * lambda_max,
        })
    }

    /// Least-squares inner function `g(y) = ||y - target||^2`.
    pub fn least_squares(target: &DVector<f64>) -> Self {
        let m = target.len();
        Self::new(DMatrix::identity(m, m), -2.0 * target, target.dot(target))
            .expect("identity Q is positive definite")
    }

    pub fn value(&self, y: &DVector<f64>) -> f64 {
        (y.transpose() * &self.q * y)[(0, 0)] + self.c.dot(y) + self.r
    }

    pub fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.q * y * 2.0 + &self.c
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn constant(&self) -> f64 {
        self.r
    }

    /// Strong convexity modulus `2 λ_min(Q)`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Gradient Lipschitz constant `2 λ_max(Q)`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }
}

/// Callable inner function for non-quadratic `g`.
#[derive(Clone)]
pub struct CustomInner {
    pub value: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    /// Strong convexity modulus of `g` (must be positive).
    pub sigma: f64,
    /// Lipschitz constant of the gradient of `g`, if known.
    pub smoothness: Option<f64>,
}

impl std::fmt::Debug for CustomInner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomInner")
            .field("sigma", &self.sigma)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum InnerFn {
    Quadratic(QuadraticForm),
    Custom(CustomInner),
}

impl InnerFn {
    pub fn value(&self, y: &DVector<f64>) -> f64 {
        match self {
            InnerFn::Quadratic(q) => q.value(y),
            InnerFn::Custom(c) => (c.value)(y),
        }
    }

    pub fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            InnerFn::Quadratic(q) => q.gradient(y),
            InnerFn::Custom(c) => (c.gradient)(y),
        }
    }

    /// Strong convexity modulus `sigma_g`; `2 * lambda_min(Q)` for the
    /// quadratic form.
    pub fn sigma(&self) -> f64 {
        match self {
            InnerFn::Quadratic(q) => q.sigma,
            InnerFn::Custom(c) => c.sigma,
        }
    }
}

/// Constants of a (objective, polytope) pair used by the certificates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    /// Curvature constant of `f` over the ambient space.
    pub rho: f64,
    /// `G`: largest gradient norm of `g` over the mapped vertex set.
    pub grad_norm_max: f64,
    /// Largest pairwise vertex distance of the polytope.
    pub diameter: f64,
    /// Largest pairwise distance of mapped vertices.
    pub image_diameter: f64,
    /// `C = G * image_diameter + ||b|| * diameter`, an upper bound on the
    /// objective spread over the feasible set.
    pub upper_bound: f64,
    /// Whether `grad_norm_max` is exact (true for quadratic inner functions,
    /// where the gradient-norm maximum over the set is attained at a vertex).
    pub exact: bool,
}

/// `f(x) = g(Ex) + <b, x>`.
#[derive(Debug, Clone)]
pub struct CompositeObjective {
    e: DMatrix<f64>,
    b: DVector<f64>,
    g: InnerFn,
}

impl CompositeObjective {
    pub fn new(e: DMatrix<f64>, b: DVector<f64>, g: InnerFn) -> Result<Self, ObjectiveError> {
        if e.ncols() != b.len() {
            return Err(ObjectiveError::ShapeMismatch(format!(
                "E is {}x{}, b has length {}",
                e.nrows(),
                e.ncols(),
                b.len()
            )));
        }
        let inner_dim = e.nrows();
        if let InnerFn::Quadratic(q) = &g {
            if q.q.nrows() != inner_dim {
                return Err(ObjectiveError::ShapeMismatch(format!(
                    "E maps into dimension {inner_dim}, Q is {}x{}",
                    q.q.nrows(),
                    q.q.ncols()
                )));
            }
        }
        if g.sigma() <= 0.0 {
            return Err(ObjectiveError::NotStronglyConvex {
                lambda_min: g.sigma() / 2.0,
            });
        }
        Ok(Self { e, b, g })
    }

    /// Convenience constructor for the common quadratic case.
    pub fn quadratic(
        e: DMatrix<f64>,
        b: DVector<f64>,
        q: DMatrix<f64>,
        c: DVector<f64>,
        r: f64,
    ) -> Result<Self, ObjectiveError> {
        Self::new(e, b, InnerFn::Quadratic(QuadraticForm::new(q, c, r)?))
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn inner_dim(&self) -> usize {
        self.e.nrows()
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn inner(&self) -> &InnerFn {
        &self.g
    }

    pub fn quadratic_form(&self) -> Option<&QuadraticForm> {
        match &self.g {
            InnerFn::Quadratic(q) => Some(q),
            InnerFn::Custom(_) => None,
        }
    }

    pub fn sigma_g(&self) -> f64 {
        self.g.sigma()
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        let v = self.g.value(&(&self.e * x)) + self.b.dot(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ObjectiveError::NonFinite)
        }
    }

    /// `∇f(x) = Eᵀ ∇g(Ex) + b`.
    pub fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError> {
        let g = self.e.transpose() * self.g.gradient(&(&self.e * x)) + &self.b;
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(ObjectiveError::NonFinite)
        }
    }

    /// Curvature constant: `2 * lambda_max(EᵀQE)` for quadratic `g`, else
    /// `L_g * ||E||^2`. Zero is legitimate (linear objective along `E X`).
    pub fn lipschitz_rho(&self) -> Result<f64, ObjectiveError> {
        match &self.g {
            InnerFn::Quadratic(q) => {
                let ete = self.e.transpose() * &q.q * &self.e;
                Ok((2.0 * linalg::sym_eig_max(&ete)).max(0.0))
            }
            InnerFn::Custom(c) => {
                let l = c.smoothness.ok_or(ObjectiveError::MissingSmoothness)?;
                let s = linalg::spectral_norm(&self.e);
                Ok(l * s * s)
            }
        }
    }

    /// Vertex-based problem constants. `grad_norm_max` scans the vertex set,
    /// which is exact for quadratic `g` (the norm is convex in `x`) and a
    /// lower bound otherwise (`exact` is false then).
    pub fn problem_constants(&self, p: &Polytope) -> Result<ProblemConstants, ObjectiveError> {
        let verts = p.vertices()?;
        let mut g_max = 0.0f64;
        for v in verts {
            g_max = g_max.max(self.g.gradient(&(&self.e * v)).norm());
        }
        let gc = p.geometric_constants()?;
        let image_diameter = p.image_diameter(&self.e)?;
        let upper_bound = g_max * image_diameter + self.b.norm() * gc.diameter;
        Ok(ProblemConstants {
            rho: self.lipschitz_rho()?,
            grad_norm_max: g_max,
            diameter: gc.diameter,
            image_diameter,
            upper_bound,
            exact: matches!(self.g, InnerFn::Quadratic(_)),
        })
    }

    // ---- JSON spec ---------------------------------------------------------

    pub fn from_spec(spec: &ObjectiveSpec) -> Result<Self, ObjectiveError> {
        let rows = spec.e.len();
        if rows == 0 {
            return Err(ObjectiveError::ShapeMismatch("E must be nonempty".into()));
        }
        let cols = spec.e[0].len();
        if spec.e.iter().any(|r| r.len() != cols) {
            return Err(ObjectiveError::ShapeMismatch("E rows ragged".into()));
        }
        let flat: Vec<f64> = spec.e.iter().flatten().copied().collect();
        let e = DMatrix::from_row_slice(rows, cols, &flat);
        let b = DVector::from_vec(spec.b.clone());
        match &spec.g {
            InnerSpec::Quadratic { q, c, r } => {
                let qrows = q.len();
                if qrows == 0 || q.iter().any(|row| row.len() != qrows) {
                    return Err(ObjectiveError::ShapeMismatch("Q must be square".into()));
                }
                let qflat: Vec<f64> = q.iter().flatten().copied().collect();
                Self::quadratic(
                    e,
                    b,
                    DMatrix::from_row_slice(qrows, qrows, &qflat),
                    DVector::from_vec(c.clone()),
                    *r,
                )
            }
        }
    }

    pub fn to_spec(&self) -> Result<ObjectiveSpec, ObjectiveError> {
        let q = self.quadratic_form().ok_or(ObjectiveError::NotSerializable)?;
        Ok(ObjectiveSpec {
            e: matrix_rows(&self.e),
            b: self.b.iter().copied().collect(),
            g: InnerSpec::Quadratic {
                q: matrix_rows(&q.q),
                c: q.c.iter().copied().collect(),
                r: q.r,
            },
        })
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|r| r.iter().copied().collect())
        .collect()
}

/// JSON form of the objective:
/// `{"E": [[...]], "b": [...], "g": {"type": "quadratic", "Q": ..., "c": ..., "r": ...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub g: InnerSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InnerSpec {
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
        r: f64,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_quadratic(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CompositeObjective {
        let raw = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        // Diagonal shift keeps Q positive definite.
        let q = &raw * raw.transpose() + DMatrix::identity(m, m) * 0.5;
        let c = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        CompositeObjective::quadratic(e, b, q, c, 0.3).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..50 {
            let (m, n) = (2 + trial % 3, 2 + trial % 4);
            let obj = random_quadratic(&mut rng, m, n);
            let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let grad = obj.grad(&x).unwrap();
            let h = 1e-5;
            let mut fd = DVector::zeros(n);
            for i in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                fd[i] = (obj.eval(&xp).unwrap() - obj.eval(&xm).unwrap()) / (2.0 * h);
            }
            let err = (&grad - &fd).norm();
            assert!(
                err <= 1e-5 * (1.0 + grad.norm()),
                "trial {trial}: fd error {err}"
            );
        }
    }

    #[test]
    fn descent_lemma_holds_with_computed_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let obj = random_quadratic(&mut rng, 3, 4);
            let rho = obj.lipschitz_rho().unwrap();
            let x = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let lhs = obj.eval(&y).unwrap();
            let rhs = obj.eval(&x).unwrap()
                + obj.grad(&x).unwrap().dot(&(&y - &x))
                + 0.5 * rho * (&y - &x).norm_squared();
            assert!(lhs <= rhs + 1e-9 * (1.0 + lhs.abs()), "{lhs} > {rhs}");
        }
    }

    #[test]
    fn rho_for_identity_least_squares_is_two() {
        let obj = CompositeObjective::quadratic(
            DMatrix::identity(3, 3),
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            DVector::zeros(3),
            0.0,
        )
        .unwrap();
        assert!((obj.lipschitz_rho().unwrap() - 2.0).abs() < 1e-12);
        assert!((obj.sigma_g() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rho_scales_with_the_map_spectrum() {
        // E = diag(3, 1), g = ||y||^2: rho = 2 * 9 = 18.
        let e = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let obj = CompositeObjective::quadratic(
            e,
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            0.0,
        )
        .unwrap();
        assert!((obj.lipschitz_rho().unwrap() - 18.0).abs() < 1e-10);
    }

    #[test]
    fn indefinite_q_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        let err = QuadraticForm::new(q, DVector::zeros(2), 0.0).unwrap_err();
        assert!(matches!(err, ObjectiveError::NotStronglyConvex { .. }));
    }

    #[test]
    fn custom_inner_needs_smoothness_for_rho() {
        let inner = InnerFn::Custom(CustomInner {
            value: Arc::new(|y: &DVector<f64>| y.norm_squared() + y[0].powi(4)),
            gradient: Arc::new(|y: &DVector<f64>| {
                let mut g = y * 2.0;
                g[0] += 4.0 * y[0].powi(3);
                g
            }),
            sigma: 2.0,
            smoothness: None,
        });
        let obj = CompositeObjective::new(DMatrix::identity(2, 2), DVector::zeros(2), inner).unwrap();
        assert!(matches!(
            obj.lipschitz_rho(),
            Err(ObjectiveError::MissingSmoothness)
        ));
    }

    #[test]
    fn problem_constants_on_the_simplex() {
        // f(x) = ||x - target||^2 over the 3-simplex: G is attained at the
        // vertex farthest from the target.
        let target = DVector::from_vec(vec![0.5, 0.3, 0.2]);
        let obj = CompositeObjective::new(
            DMatrix::identity(3, 3),
            DVector::zeros(3),
            InnerFn::Quadratic(QuadraticForm::least_squares(&target)),
        )
        .unwrap();
        let p = Polytope::simplex(3).unwrap();
        let pc = obj.problem_constants(&p).unwrap();
        let expected_g = (0..3)
            .map(|i| {
                let v = p.vertex_by_id(i).unwrap();
                (2.0 * (&v - &target)).norm()
            })
            .fold(0.0f64, f64::max);
        assert!((pc.grad_norm_max - expected_g).abs() < 1e-12);
        assert!((pc.diameter - 2f64.sqrt()).abs() < 1e-12);
        assert!((pc.image_diameter - 2f64.sqrt()).abs() < 1e-12);
        assert!(pc.exact);
        assert!((pc.upper_bound - expected_g * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spec_round_trip() {
        let obj = CompositeObjective::quadratic(
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, -1.0]),
            DVector::from_vec(vec![0.1, 0.0, -0.2]),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![-1.0, 0.5]),
            2.5,
        )
        .unwrap();
        let json = serde_json::to_string(&obj.to_spec().unwrap()).unwrap();
        assert!(json.contains("\"type\":\"quadratic\""));
        let back = CompositeObjective::from_spec(&serde_json::from_str(&json).unwrap()).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.4, 0.7]);
        assert!((back.eval(&x).unwrap() - obj.eval(&x).unwrap()).abs() < 1e-14);
        assert_eq!(back.grad(&x).unwrap(), obj.grad(&x).unwrap());
    }
}
