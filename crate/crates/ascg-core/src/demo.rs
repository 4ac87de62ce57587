//! Why pushing vertex-oracle answers through a linear map fails.
//!
//! Given a vertex oracle for `X` and a map `E`, a tempting oracle for the
//! image polytope `E X` pulls the direction back (`Eᵀ c`), queries the inner
//! oracle, and pushes the answering vertex forward. The pushed point always
//! minimizes `<c, ·>` over `E X`, but when the pulled-back direction ties on
//! several vertices of `X` it may land strictly inside a face of `E X` —
//! so the construction is not a vertex oracle, and representations built
//! from it are not convex combinations of extreme points.
//!
//! [`mapped_oracle_counterexample`] builds a concrete three-dimensional
//! witness: a direction whose pullback ties on four box vertices, two of
//! which map to an edge midpoint of `E X`.

use nalgebra::{DMatrix, DVector};

use crate::objective::{CompositeObjective, InnerFn, ObjectiveError, QuadraticForm};
use crate::oracle::{self, MappedOracleAnswer, OracleError};
use crate::polyhedron::{Polytope, PolytopeError};
use crate::solver::{solve, SolverConfig, SolverError};

/// Squared hull distance above which a point counts as extreme.
pub const EXTREME_TOL: f64 = 1e-9;

/// Tolerance for identifying coincident mapped points.
const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid input: {0}")]
    BadInput(String),
}

/// Squared distance from `target` to the convex hull of `others`, computed
/// by minimizing `‖W μ - target‖²` over the probability simplex with the
/// away-steps solver itself.
pub fn hull_distance_squared(
    target: &DVector<f64>,
    others: &[DVector<f64>],
) -> Result<f64, DemoError> {
    if others.is_empty() {
        return Err(DemoError::BadInput("hull of an empty set".into()));
    }
    if others.iter().any(|p| p.len() != target.len()) {
        return Err(DemoError::BadInput("mixed dimensions".into()));
    }
    if others.len() == 1 {
        return Ok((&others[0] - target).norm_squared());
    }
    let m = others.len();
    let mut w = DMatrix::zeros(target.len(), m);
    for (j, p) in others.iter().enumerate() {
        w.set_column(j, p);
    }
    let simplex = Polytope::simplex(m)?;
    let objective = CompositeObjective::new(
        w,
        DVector::zeros(m),
        InnerFn::Quadratic(QuadraticForm::least_squares(target)),
    )?;
    let config = SolverConfig {
        gap_tol: 1e-12,
        max_iters: 20_000,
        ..SolverConfig::default()
    };
    let trace = solve(&simplex, &objective, config)?;
    Ok(trace.final_f.max(0.0))
}

/// Extreme points of a finite point set: the points not in the convex hull
/// of the remaining (deduplicated) ones.
pub fn extreme_points(points: &[DVector<f64>]) -> Result<Vec<DVector<f64>>, DemoError> {
    let mut unique: Vec<DVector<f64>> = Vec::new();
    for p in points {
        if !unique.iter().any(|q| (q - p).amax() <= DEDUP_TOL) {
            unique.push(p.clone());
        }
    }
    if unique.len() <= 1 {
        return Ok(unique);
    }
    let mut extremes = Vec::new();
    for (i, p) in unique.iter().enumerate() {
        let others: Vec<DVector<f64>> = unique
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| q.clone())
            .collect();
        if hull_distance_squared(p, &others)? > EXTREME_TOL {
            extremes.push(p.clone());
        }
    }
    Ok(extremes)
}

/// A concrete instance where the pull-back-push-forward construction
/// returns a non-extreme point of the image polytope.
#[derive(Debug)]
pub struct MappedOracleDemo {
    /// The inner polytope `X` (the unit box in three dimensions).
    pub polytope: Polytope,
    pub e: DMatrix<f64>,
    /// Direction in image space.
    pub direction: DVector<f64>,
    /// `Eᵀ direction`; zero entries make the inner oracle tie.
    pub pulled_back: DVector<f64>,
    /// Vertex ids of `X` tied at the pulled-back optimum.
    pub tied_vertex_ids: Vec<u64>,
    /// What the naive construction answers under the library tie-break.
    pub default_answer: MappedOracleAnswer,
    pub default_is_extreme: bool,
    /// A tied vertex whose image is *not* extreme in `E X`.
    pub adversarial_vertex_id: u64,
    pub adversarial_vertex: DVector<f64>,
    pub adversarial_image: DVector<f64>,
    /// Images of all vertices of `X`.
    pub mapped_vertices: Vec<DVector<f64>>,
    /// Extreme points of `E X`, recovered by hull-membership solves.
    pub extreme_images: Vec<DVector<f64>>,
    pub image_diameter: f64,
}

/// Build the witness instance: `X = [-1, 1]³`,
/// `E = [[1,1,1],[1,1,-1],[0,0,2]]`, `c = (-1, 1, 3)`. Then `Eᵀc = (0,0,4)`
/// ties four box vertices; the tied vertex `(1,-1,-1)` maps to the midpoint
/// of an edge of `E X` while the library tie-break happens to answer an
/// extreme point.
pub fn mapped_oracle_counterexample() -> Result<MappedOracleDemo, DemoError> {
    let polytope = Polytope::unit_box(3)?;
    let e = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0, 2.0]);
    let direction = DVector::from_row_slice(&[-1.0, 1.0, 3.0]);
    let pulled_back = e.transpose() * &direction;

    let tied_vertex_ids = oracle::optimal_vertex_set(&polytope, &pulled_back, 1e-12)?;
    let default_answer = oracle::mapped_oracle_naive(&polytope, &e, &direction)?;

    let mapped_vertices: Vec<DVector<f64>> = polytope
        .vertices()?
        .iter()
        .map(|v| &e * v)
        .collect();
    let extreme_images = extreme_points(&mapped_vertices)?;
    let near = |p: &DVector<f64>, q: &DVector<f64>| (p - q).amax() <= DEDUP_TOL;
    let default_is_extreme = extreme_images
        .iter()
        .any(|q| near(&default_answer.image, q));

    let mut adversarial = None;
    for &id in &tied_vertex_ids {
        let v = polytope.vertex_by_id(id)?;
        let image = &e * &v;
        if !extreme_images.iter().any(|q| near(&image, q)) {
            adversarial = Some((id, v, image));
            break;
        }
    }
    let (adversarial_vertex_id, adversarial_vertex, adversarial_image) =
        adversarial.ok_or_else(|| {
            DemoError::BadInput("no tied vertex with a non-extreme image".into())
        })?;

    let image_diameter = polytope.image_diameter(&e)?;
    Ok(MappedOracleDemo {
        polytope,
        e,
        direction,
        pulled_back,
        tied_vertex_ids,
        default_answer,
        default_is_extreme,
        adversarial_vertex_id,
        adversarial_vertex,
        adversarial_image,
        mapped_vertices,
        extreme_images,
        image_diameter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_matches_hand_computation() {
        let demo = mapped_oracle_counterexample().unwrap();
        assert_eq!(
            demo.pulled_back,
            DVector::from_row_slice(&[0.0, 0.0, 4.0])
        );
        assert_eq!(demo.tied_vertex_ids, vec![0, 1, 2, 3]);

        // Library tie-break answers (-1,-1,-1), whose image is extreme.
        assert_eq!(
            demo.default_answer.inner.vertex,
            DVector::from_row_slice(&[-1.0, -1.0, -1.0])
        );
        assert_eq!(
            demo.default_answer.image,
            DVector::from_row_slice(&[-3.0, -1.0, -2.0])
        );
        assert!(demo.default_is_extreme);

        // The adversarial tie maps to an edge midpoint.
        assert_eq!(demo.adversarial_vertex_id, 1);
        assert_eq!(
            demo.adversarial_vertex,
            DVector::from_row_slice(&[1.0, -1.0, -1.0])
        );
        assert_eq!(
            demo.adversarial_image,
            DVector::from_row_slice(&[-1.0, 1.0, -2.0])
        );

        // ext(EX) has exactly four points.
        let expected = [
            [3.0, 1.0, 2.0],
            [1.0, 3.0, -2.0],
            [-1.0, -3.0, 2.0],
            [-3.0, -1.0, -2.0],
        ];
        assert_eq!(demo.extreme_images.len(), 4);
        for want in expected {
            let want = DVector::from_row_slice(&want);
            assert!(
                demo.extreme_images.iter().any(|q| (q - &want).amax() < 1e-9),
                "missing extreme image {want}"
            );
        }
        assert!((demo.image_diameter - 56.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn adversarial_image_still_minimizes_over_the_image_polytope() {
        let demo = mapped_oracle_counterexample().unwrap();
        let best = demo
            .mapped_vertices
            .iter()
            .map(|w| demo.direction.dot(w))
            .fold(f64::INFINITY, f64::min);
        assert!((demo.direction.dot(&demo.adversarial_image) - best).abs() < 1e-12);
        assert!((demo.default_answer.image_value - best).abs() < 1e-12);
    }

    #[test]
    fn hull_membership_classifier_on_a_triangle() {
        let a = DVector::from_row_slice(&[0.0, 0.0]);
        let b = DVector::from_row_slice(&[1.0, 0.0]);
        let c = DVector::from_row_slice(&[0.0, 1.0]);
        let centroid = (&a + &b + &c) / 3.0;
        let midpoint = (&a + &b) / 2.0;
        let pts = vec![a, b, c, centroid.clone(), midpoint.clone()];
        let extremes = extreme_points(&pts).unwrap();
        assert_eq!(extremes.len(), 3);
        assert!(!extremes.iter().any(|q| (q - &centroid).amax() < 1e-9));
        assert!(!extremes.iter().any(|q| (q - &midpoint).amax() < 1e-9));

        let others = &pts[1..3].to_vec();
        let d = hull_distance_squared(&pts[0], others).unwrap();
        // Distance from the origin to the segment between (1,0) and (0,1).
        assert!((d - 0.5).abs() < 1e-9);
    }
}
