//! Vertex linear oracles: exact minimizers of `<c, .>` over the vertex set.
//!
//! Each structured kind has a closed-form oracle; `GenericH` falls back to a
//! scan over the enumerated vertex list. Ties are broken toward the smallest
//! vertex id, so oracle answers are deterministic functions of the input.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::polyhedron::{Polytope, PolytopeError, PolytopeKind};

#[derive(Debug, Clone, thiserror::Error)]
pub enum OracleError {
    #[error("direction has length {got}, polytope dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("direction contains non-finite entries")]
    NonFinite,
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

/// An oracle answer: the chosen vertex, its id, and the attained value
/// `<c, vertex>`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAnswer {
    pub vertex_id: u64,
    pub vertex: DVector<f64>,
    pub value: f64,
}

/// Minimize `<c, v>` over the vertices of `p`; ties go to the smallest
/// vertex id. For the box, coordinates with `c_i = 0` are set to `-1`.
pub fn vertex_oracle(p: &Polytope, c: &DVector<f64>) -> Result<OracleAnswer, OracleError> {
    let n = p.dim();
    if c.len() != n {
        return Err(OracleError::DimensionMismatch {
            expected: n,
            got: c.len(),
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::NonFinite);
    }
    let (id, vertex) = match p.kind() {
        PolytopeKind::Simplex => {
            let mut best = 0usize;
            for i in 1..n {
                if c[i] < c[best] {
                    best = i;
                }
            }
            (best as u64, p.vertex_by_id(best as u64)?)
        }
        PolytopeKind::L1Ball => {
            // Candidate id 2i is +e_i (value c_i), id 2i+1 is -e_i (value -c_i).
            let mut best_id = 0u64;
            let mut best_val = c[0];
            for i in 0..n {
                for (id, val) in [(2 * i as u64, c[i]), (2 * i as u64 + 1, -c[i])] {
                    if val < best_val {
                        best_val = val;
                        best_id = id;
                    }
                }
            }
            (best_id, p.vertex_by_id(best_id)?)
        }
        PolytopeKind::Box => {
            let mut v = DVector::zeros(n);
            let mut id = 0u64;
            for i in 0..n {
                if c[i] < 0.0 {
                    v[i] = 1.0;
                    id |= 1 << i;
                } else {
                    v[i] = -1.0;
                }
            }
            (id, v)
        }
        PolytopeKind::LiftedL1Box => {
            // <c, (x, y)> with y = ||x||_1 separates per coordinate:
            // each x_j contributes min(0, c_j + c_y, -c_j + c_y).
            let d = n - 1;
            let cy = c[d];
            let mut v = DVector::zeros(n);
            let mut id = 0u64;
            let mut pow = 1u64;
            let mut l1 = 0.0f64;
            for j in 0..d {
                // Digit order (-1, 0, +1); first strict minimum wins, so ties
                // prefer the smaller digit.
                let candidates: [(f64, f64); 3] =
                    [(-1.0, -c[j] + cy), (0.0, 0.0), (1.0, c[j] + cy)];
                let mut best = candidates[0];
                for cand in &candidates[1..] {
                    if cand.1 < best.1 {
                        best = *cand;
                    }
                }
                v[j] = best.0;
                l1 += best.0.abs();
                id += pow * (best.0 + 1.0) as u64;
                pow *= 3;
            }
            v[d] = l1;
            (id, v)
        }
        PolytopeKind::GenericH => {
            let verts = p.vertices()?;
            let mut best = 0usize;
            let mut best_val = c.dot(&verts[0]);
            for (i, v) in verts.iter().enumerate().skip(1) {
                let val = c.dot(v);
                if val < best_val {
                    best_val = val;
                    best = i;
                }
            }
            (best as u64, verts[best].clone())
        }
    };
    let value = c.dot(&vertex);
    Ok(OracleAnswer {
        vertex_id: id,
        vertex,
        value,
    })
}

/// All vertex ids whose value is within `tol` of the oracle optimum.
/// Enumeration-backed, so subject to the same caps as [`Polytope::vertices`].
pub fn optimal_vertex_set(
    p: &Polytope,
    c: &DVector<f64>,
    tol: f64,
) -> Result<Vec<u64>, OracleError> {
    let verts = p.vertices()?;
    let best = verts
        .iter()
        .map(|v| c.dot(v))
        .fold(f64::INFINITY, f64::min);
    Ok(verts
        .iter()
        .enumerate()
        .filter(|(_, v)| c.dot(v) <= best + tol)
        .map(|(i, _)| i as u64)
        .collect())
}

/// The answer of the composition-by-mapping construction: pull the direction
/// back through `E`, call the vertex oracle on `X`, and push the vertex
/// forward. The pushed point minimizes `<c, .>` over `E X` but need not be a
/// vertex of `E X` when the pulled-back direction ties on `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedOracleAnswer {
    pub inner: OracleAnswer,
    pub image: DVector<f64>,
    pub image_value: f64,
}

pub fn mapped_oracle_naive(
    p: &Polytope,
    e: &DMatrix<f64>,
    c: &DVector<f64>,
) -> Result<MappedOracleAnswer, OracleError> {
    if e.ncols() != p.dim() {
        return Err(OracleError::DimensionMismatch {
            expected: p.dim(),
            got: e.ncols(),
        });
    }
    if c.len() != e.nrows() {
        return Err(OracleError::DimensionMismatch {
            expected: e.nrows(),
            got: c.len(),
        });
    }
    let pulled = e.transpose() * c;
    let inner = vertex_oracle(p, &pulled)?;
    let image = e * &inner.vertex;
    let image_value = c.dot(&image);
    Ok(MappedOracleAnswer {
        inner,
        image,
        image_value,
    })
}

/// Result of randomized oracle verification.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub trials: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.failures == 0
    }
}

/// Check the closed-form oracle against brute-force enumeration on `trials`
/// standard-normal directions: the answer must match its id's vertex and be
/// within `1e-9` of the enumerated minimum.
pub fn verify_oracle(p: &Polytope, trials: usize, seed: u64) -> Result<OracleReport, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verts = p.vertices()?;
    let n = p.dim();
    let mut failures = 0usize;
    let mut first_failure = None;
    for trial in 0..trials {
        let c = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ans = vertex_oracle(p, &c)?;
        let brute = verts
            .iter()
            .map(|v| c.dot(v))
            .fold(f64::INFINITY, f64::min);
        let id_vertex = &verts[ans.vertex_id as usize];
        let mut problems = Vec::new();
        if (id_vertex - &ans.vertex).amax() > 1e-9 {
            problems.push("vertex does not match its id".to_string());
        }
        if (ans.value - c.dot(&ans.vertex)).abs() > 1e-12 {
            problems.push("reported value inconsistent".to_string());
        }
        if ans.value > brute + 1e-9 {
            problems.push(format!("suboptimal: {} > {brute}", ans.value));
        }
        if !problems.is_empty() {
            failures += 1;
            if first_failure.is_none() {
                first_failure = Some(format!("trial {trial}: {}", problems.join("; ")));
            }
        }
    }
    Ok(OracleReport {
        trials,
        failures,
        first_failure,
    })
}
