//! Compact polyhedra in H-form `{x : Ax <= a}` with vertex access.
//!
//! Four structured families get closed-form vertices, oracles and geometric
//! constants: the probability simplex, the ℓ1 ball, the box `[-1,1]^n`, and
//! the lifted box-with-ℓ1-coupling used by ℓ1-regularized least squares.
//! Everything else goes through `GenericH`, whose vertices are enumerated by
//! brute force over row subsets (capped, see below).
//!
//! The geometric constants follow the facet/vertex geometry of the set:
//! `zeta` is the smallest positive slack `a_i - A_i v` over vertices `v`,
//! `phi` the largest row norm among rows not active at every vertex, and
//! `omega = zeta / phi`. They feed the convergence certificates.

use std::sync::OnceLock;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;

/// Default tolerance deciding whether a row is active at a point.
pub const ACTIVITY_TOL: f64 = 1e-9;
/// Default tolerance for feasibility checks `Ax <= a + tol`.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Two enumerated vertices closer than this (coordinate-wise) are merged.
pub const VERTEX_DEDUP_TOL: f64 = 1e-9;
/// Generic H-form vertex enumeration is combinatorial; refuse above this
/// dimension.
pub const GENERIC_DIM_CAP: usize = 12;
/// Hard bound on the number of row subsets generic enumeration may visit.
pub const ENUMERATION_BUDGET: u128 = 20_000_000;
/// The ℓ1 ball and the lifted coupling set have `2^n` facet rows; only
/// materialize them up to this dimension.
pub const ROW_MATERIALIZE_CAP: usize = 16;
/// Cap on closed-form vertex listings (`2^n` box / `3^n` lifted vertices).
pub const STRUCTURED_VERTEX_CAP: usize = 16;

#[derive(Debug, Clone, thiserror::Error)]
pub enum PolytopeError {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("H-form shape mismatch: A is {rows}x{cols}, n = {n}, a has length {a_len}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        n: usize,
        a_len: usize,
    },
    #[error("vertex enumeration capped at n <= {cap}, got n = {n}")]
    DimensionCapExceeded { n: usize, cap: usize },
    #[error("vertex enumeration would visit {combinations} row subsets (budget {budget})")]
    EnumerationBudgetExceeded { combinations: u128, budget: u128 },
    #[error("polyhedron is unbounded (recession direction found)")]
    UnboundedSet { direction: Vec<f64> },
    #[error("H-form has no vertices (empty or degenerate set)")]
    EmptySet,
    #[error("geometric constants need at least two vertices")]
    DegeneratePolytope,
    #[error("H-form rows not materialized for this kind at n = {n} (cap {cap})")]
    HFormUnavailable { n: usize, cap: usize },
    #[error("vertex id {id} out of range ({count} vertices)")]
    UnknownVertexId { id: u64, count: u64 },
    #[error("bad problem spec: {0}")]
    BadSpec(String),
}

/// The polytope families the solver understands.
///
/// `LiftedL1Box` is `{(x, y) : x in [-1,1]^d, 0 <= y <= d, ||x||_1 <= y}` in
/// ambient dimension `d + 1`; it is the feasible set of the lifted
/// ℓ1-regularized least-squares reformulation and has `3^d` vertices
/// `(x, ||x||_1)` with `x in {-1,0,1}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolytopeKind {
    Simplex,
    L1Ball,
    Box,
    LiftedL1Box,
    GenericH,
}

/// Half-space representation `{x : a_mat x <= a_vec}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HForm {
    pub a_mat: DMatrix<f64>,
    pub a_vec: DVector<f64>,
}

impl HForm {
    pub fn rows(&self) -> usize {
        self.a_mat.nrows()
    }

    /// Slack `a_i - A_i x` of every row at `x`.
    pub fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_vec - &self.a_mat * x
    }
}

/// Geometric constants of the vertex/facet structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricConstants {
    /// Smallest positive slack of a facet row at a vertex.
    pub zeta: f64,
    /// Largest row norm among rows not active at every vertex.
    pub phi: f64,
    /// `zeta / phi`.
    pub omega: f64,
    /// Largest pairwise vertex distance.
    pub diameter: f64,
}

/// Options for [`Polytope::geometric_constants_with`].
#[derive(Debug, Clone, Copy)]
pub struct GeometricOptions {
    /// Drop rows that are active at no vertex before computing `zeta`/`phi`.
    /// Default `false`: rows are taken exactly as given.
    pub drop_redundant_rows: bool,
    pub activity_tol: f64,
}

impl Default for GeometricOptions {
    fn default() -> Self {
        Self {
            drop_redundant_rows: false,
            activity_tol: ACTIVITY_TOL,
        }
    }
}

/// Sorted set of H-form row indices active at a point.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    indices: Vec<usize>,
}

impl ActiveSet {
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.indices.binary_search(&row).is_ok()
    }
}

/// JSON form of a polytope: `{"kind": ..., "n": ..., "A": ..., "a": ...}`
/// with `A`/`a` present only for `generic_h`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolytopeSpec {
    pub kind: PolytopeKind,
    pub n: usize,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a_mat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "a", default, skip_serializing_if = "Option::is_none")]
    pub a_vec: Option<Vec<f64>>,
}

/// A compact polyhedron with lazily cached vertices.
#[derive(Debug, Clone)]
pub struct Polytope {
    kind: PolytopeKind,
    n: usize,
    h: OnceLock<HForm>,
    verts: OnceLock<Vec<DVector<f64>>>,
}

impl Polytope {
    /// Probability simplex `{x >= 0, sum x = 1}` with rows
    /// `[-I; 1ᵀ; -1ᵀ]`.
    pub fn simplex(n: usize) -> Result<Self, PolytopeError> {
        if n == 0 {
            return Err(PolytopeError::ZeroDimension);
        }
        Ok(Self::new(PolytopeKind::Simplex, n))
    }

    /// Unit ℓ1 ball `{||x||_1 <= 1}`.
    pub fn l1_ball(n: usize) -> Result<Self, PolytopeError> {
        if n == 0 {
            return Err(PolytopeError::ZeroDimension);
        }
        Ok(Self::new(PolytopeKind::L1Ball, n))
    }

    /// The box `[-1, 1]^n` with rows `[I; -I]`.
    pub fn unit_box(n: usize) -> Result<Self, PolytopeError> {
        if n == 0 {
            return Err(PolytopeError::ZeroDimension);
        }
        Ok(Self::new(PolytopeKind::Box, n))
    }

    /// Lifted set `{(x, y) : x in [-1,1]^box_dim, 0 <= y <= box_dim,
    /// ||x||_1 <= y}` in ambient dimension `box_dim + 1`.
    pub fn lifted_l1_box(box_dim: usize) -> Result<Self, PolytopeError> {
        if box_dim == 0 {
            return Err(PolytopeError::ZeroDimension);
        }
        Ok(Self::new(PolytopeKind::LiftedL1Box, box_dim + 1))
    }

    /// Generic H-form polytope. Validates shape always; validates
    /// non-emptiness and boundedness when the enumeration budget allows.
    pub fn generic_h(a_mat: DMatrix<f64>, a_vec: DVector<f64>) -> Result<Self, PolytopeError> {
        let n = a_mat.ncols();
        if n == 0 {
            return Err(PolytopeError::ZeroDimension);
        }
        if a_mat.nrows() != a_vec.len() || a_mat.nrows() == 0 {
            return Err(PolytopeError::ShapeMismatch {
                rows: a_mat.nrows(),
                cols: a_mat.ncols(),
                n,
                a_len: a_vec.len(),
            });
        }
        let p = Self::new(PolytopeKind::GenericH, n);
        p.h.set(HForm { a_mat, a_vec }).expect("fresh lock");
        p.validate_generic()?;
        Ok(p)
    }

    fn new(kind: PolytopeKind, n: usize) -> Self {
        Self {
            kind,
            n,
            h: OnceLock::new(),
            verts: OnceLock::new(),
        }
    }

    pub fn kind(&self) -> PolytopeKind {
        self.kind
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Box dimension of the lifted set (`n - 1`), if applicable.
    pub fn lifted_box_dim(&self) -> Option<usize> {
        match self.kind {
            PolytopeKind::LiftedL1Box => Some(self.n - 1),
            _ => None,
        }
    }

    // ---- spec round trip -------------------------------------------------

    pub fn from_spec(spec: &PolytopeSpec) -> Result<Self, PolytopeError> {
        match spec.kind {
            PolytopeKind::Simplex => Self::simplex(spec.n),
            PolytopeKind::L1Ball => Self::l1_ball(spec.n),
            PolytopeKind::Box => Self::unit_box(spec.n),
            PolytopeKind::LiftedL1Box => {
                if spec.n < 2 {
                    return Err(PolytopeError::BadSpec(
                        "lifted_l1_box needs ambient n >= 2".into(),
                    ));
                }
                Self::lifted_l1_box(spec.n - 1)
            }
            PolytopeKind::GenericH => {
                let rows = spec
                    .a_mat
                    .as_ref()
                    .ok_or_else(|| PolytopeError::BadSpec("generic_h needs \"A\"".into()))?;
                let rhs = spec
                    .a_vec
                    .as_ref()
                    .ok_or_else(|| PolytopeError::BadSpec("generic_h needs \"a\"".into()))?;
                let m = rows.len();
                if m == 0 || rows.iter().any(|r| r.len() != spec.n) {
                    return Err(PolytopeError::BadSpec(
                        "\"A\" must be a nonempty m x n matrix".into(),
                    ));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Self::generic_h(
                    DMatrix::from_row_slice(m, spec.n, &flat),
                    DVector::from_vec(rhs.clone()),
                )
            }
        }
    }

    pub fn to_spec(&self) -> PolytopeSpec {
        let (a_mat, a_vec) = match self.kind {
            PolytopeKind::GenericH => {
                let h = self.h.get().expect("generic H-form is set at construction");
                let rows = h
                    .a_mat
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect();
                (Some(rows), Some(h.a_vec.iter().copied().collect()))
            }
            _ => (None, None),
        };
        PolytopeSpec {
            kind: self.kind,
            n: self.n,
            a_mat,
            a_vec,
        }
    }

    // ---- H-form ----------------------------------------------------------

    /// The H-form rows. Structured kinds materialize lazily; the ℓ1 ball and
    /// the lifted set refuse above [`ROW_MATERIALIZE_CAP`] (their row count
    /// is `2^n`).
    pub fn h_form(&self) -> Result<&HForm, PolytopeError> {
        if let Some(h) = self.h.get() {
            return Ok(h);
        }
        let built = self.build_h_form()?;
        let _ = self.h.set(built); // concurrent initialization: first write wins
        Ok(self.h.get().expect("just set"))
    }

    fn build_h_form(&self) -> Result<HForm, PolytopeError> {
        let n = self.n;
        match self.kind {
            PolytopeKind::Simplex => {
                let mut a = DMatrix::zeros(n + 2, n);
                for i in 0..n {
                    a[(i, i)] = -1.0;
                }
                for j in 0..n {
                    a[(n, j)] = 1.0;
                    a[(n + 1, j)] = -1.0;
                }
                let mut rhs = DVector::zeros(n + 2);
                rhs[n] = 1.0;
                rhs[n + 1] = -1.0;
                Ok(HForm { a_mat: a, a_vec: rhs })
            }
            PolytopeKind::Box => {
                let mut a = DMatrix::zeros(2 * n, n);
                for i in 0..n {
                    a[(i, i)] = 1.0;
                    a[(n + i, i)] = -1.0;
                }
                Ok(HForm {
                    a_mat: a,
                    a_vec: DVector::from_element(2 * n, 1.0),
                })
            }
            PolytopeKind::L1Ball => {
                if n > ROW_MATERIALIZE_CAP {
                    return Err(PolytopeError::HFormUnavailable {
                        n,
                        cap: ROW_MATERIALIZE_CAP,
                    });
                }
                let rows = 1usize << n;
                let mut a = DMatrix::zeros(rows, n);
                for i in 0..rows {
                    for j in 0..n {
                        a[(i, j)] = sign_from_bit(i, j);
                    }
                }
                Ok(HForm {
                    a_mat: a,
                    a_vec: DVector::from_element(rows, 1.0),
                })
            }
            PolytopeKind::LiftedL1Box => {
                let d = self.n - 1;
                if d > ROW_MATERIALIZE_CAP {
                    return Err(PolytopeError::HFormUnavailable {
                        n: d,
                        cap: ROW_MATERIALIZE_CAP,
                    });
                }
                // Rows: x_i <= 1 (d), -x_i <= 1 (d), y <= d, -y <= 0,
                // then sigma.x - y <= 0 for each sign pattern sigma.
                let patterns = 1usize << d;
                let rows = 2 * d + 2 + patterns;
                let mut a = DMatrix::zeros(rows, self.n);
                let mut rhs = DVector::zeros(rows);
                for i in 0..d {
                    a[(i, i)] = 1.0;
                    rhs[i] = 1.0;
                    a[(d + i, i)] = -1.0;
                    rhs[d + i] = 1.0;
                }
                a[(2 * d, d)] = 1.0;
                rhs[2 * d] = d as f64;
                a[(2 * d + 1, d)] = -1.0;
                for p in 0..patterns {
                    let r = 2 * d + 2 + p;
                    for j in 0..d {
                        a[(r, j)] = sign_from_bit(p, j);
                    }
                    a[(r, d)] = -1.0;
                }
                Ok(HForm { a_mat: a, a_vec: rhs })
            }
            PolytopeKind::GenericH => unreachable!("generic H-form set at construction"),
        }
    }

    // ---- membership ------------------------------------------------------

    /// Feasibility at tolerance `tol`, using closed forms where available so
    /// it works at any dimension.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.n {
            return false;
        }
        match self.kind {
            PolytopeKind::Simplex => {
                x.iter().all(|&v| v >= -tol) && (x.sum() - 1.0).abs() <= tol
            }
            PolytopeKind::L1Ball => x.iter().map(|v| v.abs()).sum::<f64>() <= 1.0 + tol,
            PolytopeKind::Box => x.amax() <= 1.0 + tol,
            PolytopeKind::LiftedL1Box => {
                let d = self.n - 1;
                let y = x[d];
                let l1: f64 = x.iter().take(d).map(|v| v.abs()).sum();
                x.iter().take(d).all(|&v| v.abs() <= 1.0 + tol)
                    && y >= -tol
                    && y <= d as f64 + tol
                    && l1 <= y + tol
            }
            PolytopeKind::GenericH => {
                let h = self.h.get().expect("generic H-form is set at construction");
                h.slacks(x).iter().all(|&s| s >= -tol)
            }
        }
    }

    // ---- vertices --------------------------------------------------------

    /// Number of vertices, by closed form where possible.
    pub fn vertex_count(&self) -> Result<u64, PolytopeError> {
        match self.kind {
            PolytopeKind::Simplex => Ok(self.n as u64),
            PolytopeKind::L1Ball => Ok(2 * self.n as u64),
            PolytopeKind::Box => {
                if self.n >= 64 {
                    return Err(PolytopeError::DimensionCapExceeded { n: self.n, cap: 63 });
                }
                Ok(1u64 << self.n)
            }
            PolytopeKind::LiftedL1Box => {
                let d = (self.n - 1) as u32;
                3u64.checked_pow(d)
                    .ok_or(PolytopeError::DimensionCapExceeded {
                        n: self.n - 1,
                        cap: 40,
                    })
            }
            PolytopeKind::GenericH => Ok(self.vertices()?.len() as u64),
        }
    }

    /// Vertex for a given id without enumerating the full list.
    ///
    /// Ids are positions in the canonical vertex order: unit vectors for the
    /// simplex (`i -> e_i`), sign-alternating for the ℓ1 ball
    /// (`2i -> +e_i`, `2i+1 -> -e_i`), the binary sign encoding for the box
    /// (bit j set means coordinate j is +1), the ternary encoding for the
    /// lifted set (digit j in {0,1,2} means x_j in {-1,0,+1}), and the index
    /// into the lexicographically sorted enumeration for `GenericH`.
    pub fn vertex_by_id(&self, id: u64) -> Result<DVector<f64>, PolytopeError> {
        let count = self.vertex_count()?;
        if id >= count {
            return Err(PolytopeError::UnknownVertexId { id, count });
        }
        let n = self.n;
        match self.kind {
            PolytopeKind::Simplex => {
                let mut v = DVector::zeros(n);
                v[id as usize] = 1.0;
                Ok(v)
            }
            PolytopeKind::L1Ball => {
                let mut v = DVector::zeros(n);
                let coord = (id / 2) as usize;
                v[coord] = if id % 2 == 0 { 1.0 } else { -1.0 };
                Ok(v)
            }
            PolytopeKind::Box => {
                let mut v = DVector::zeros(n);
                for j in 0..n {
                    v[j] = if (id >> j) & 1 == 1 { 1.0 } else { -1.0 };
                }
                Ok(v)
            }
            PolytopeKind::LiftedL1Box => {
                let d = n - 1;
                let mut v = DVector::zeros(n);
                let mut rest = id;
                let mut l1 = 0.0;
                for j in 0..d {
                    let digit = rest % 3;
                    rest /= 3;
                    v[j] = digit as f64 - 1.0;
                    l1 += v[j].abs();
                }
                v[d] = l1;
                Ok(v)
            }
            PolytopeKind::GenericH => Ok(self.vertices()?[id as usize].clone()),
        }
    }

    /// All vertices, cached after first computation. The cache fill is
    /// compute-then-swap, so concurrent callers agree on the result.
    pub fn vertices(&self) -> Result<&[DVector<f64>], PolytopeError> {
        if let Some(v) = self.verts.get() {
            return Ok(v);
        }
        let computed = self.compute_vertices()?;
        let _ = self.verts.set(computed);
        Ok(self.verts.get().expect("just set"))
    }

    fn compute_vertices(&self) -> Result<Vec<DVector<f64>>, PolytopeError> {
        match self.kind {
            PolytopeKind::Simplex | PolytopeKind::L1Ball => {
                let count = self.vertex_count()?;
                (0..count).map(|id| self.vertex_by_id(id)).collect()
            }
            PolytopeKind::Box => {
                if self.n > STRUCTURED_VERTEX_CAP {
                    return Err(PolytopeError::DimensionCapExceeded {
                        n: self.n,
                        cap: STRUCTURED_VERTEX_CAP,
                    });
                }
                (0..self.vertex_count()?)
                    .map(|id| self.vertex_by_id(id))
                    .collect()
            }
            PolytopeKind::LiftedL1Box => {
                let d = self.n - 1;
                if d > 10 {
                    return Err(PolytopeError::DimensionCapExceeded { n: d, cap: 10 });
                }
                (0..self.vertex_count()?)
                    .map(|id| self.vertex_by_id(id))
                    .collect()
            }
            PolytopeKind::GenericH => self.enumerate_generic(),
        }
    }

    /// Brute-force vertex enumeration for generic H-forms: every row subset
    /// of size n with independent rows contributes its basic solution if
    /// feasible. Results are deduplicated and sorted lexicographically
    /// (vertex id = list index).
    fn enumerate_generic(&self) -> Result<Vec<DVector<f64>>, PolytopeError> {
        let h = self.h.get().expect("generic H-form is set at construction");
        let (m, n) = h.a_mat.shape();
        if n > GENERIC_DIM_CAP {
            return Err(PolytopeError::DimensionCapExceeded {
                n,
                cap: GENERIC_DIM_CAP,
            });
        }
        let combinations = binomial(m as u128, n as u128);
        if combinations > ENUMERATION_BUDGET {
            return Err(PolytopeError::EnumerationBudgetExceeded {
                combinations,
                budget: ENUMERATION_BUDGET,
            });
        }
        let mut found: Vec<DVector<f64>> = Vec::new();
        for subset in (0..m).combinations(n) {
            let basis = h.a_mat.select_rows(subset.iter());
            let rhs = DVector::from_iterator(n, subset.iter().map(|&i| h.a_vec[i]));
            let Some(x) = linalg::solve_square(&basis, &rhs, 1e-10) else {
                continue;
            };
            if h.slacks(&x).iter().any(|&s| s < -FEASIBILITY_TOL) {
                continue;
            }
            if !found
                .iter()
                .any(|v| (v - &x).amax() <= VERTEX_DEDUP_TOL)
            {
                found.push(x);
            }
        }
        if found.is_empty() {
            return Err(PolytopeError::EmptySet);
        }
        found.sort_by(|u, v| {
            for i in 0..n {
                match u[i].total_cmp(&v[i]) {
                    std::cmp::Ordering::Equal => continue,
                    other => return other,
                }
            }
            std::cmp::Ordering::Equal
        });
        Ok(found)
    }

    /// Construction-time validation for generic H-forms: requires at least
    /// one vertex and no recession direction. Skipped (trusted input) when
    /// the subset counts exceed the enumeration budget.
    fn validate_generic(&self) -> Result<(), PolytopeError> {
        let h = self.h.get().expect("set");
        let (m, n) = h.a_mat.shape();
        if n > GENERIC_DIM_CAP || binomial(m as u128, n as u128) > ENUMERATION_BUDGET {
            return Ok(());
        }
        self.vertices()?; // errors on EmptySet

        // Recession cone {z : Az <= 0}. Having a vertex makes it pointed, so
        // it is nonzero iff rank(A) < n or some extreme ray exists; extreme
        // rays come from (n-1)-subsets of rows with a one-dimensional
        // nullspace.
        if linalg::rank(&h.a_mat, 1e-10) < n {
            let dir = linalg::nullspace_direction(&h.a_mat, 1e-10)
                .map(|d| d.iter().copied().collect())
                .unwrap_or_else(|| vec![f64::NAN; n]);
            return Err(PolytopeError::UnboundedSet { direction: dir });
        }
        if n == 1 {
            for z in [1.0f64, -1.0] {
                if h.a_mat.column(0).iter().all(|&aij| aij * z <= FEASIBILITY_TOL) {
                    return Err(PolytopeError::UnboundedSet { direction: vec![z] });
                }
            }
            return Ok(());
        }
        if binomial(m as u128, (n - 1) as u128) > ENUMERATION_BUDGET {
            return Ok(());
        }
        for subset in (0..m).combinations(n - 1) {
            let rows = h.a_mat.select_rows(subset.iter());
            let Some(z) = linalg::nullspace_direction(&rows, 1e-10) else {
                continue;
            };
            for cand in [&z * 1.0, &z * -1.0] {
                let ray_ok = (&h.a_mat * &cand)
                    .iter()
                    .all(|&v| v <= FEASIBILITY_TOL);
                if ray_ok {
                    return Err(PolytopeError::UnboundedSet {
                        direction: cand.iter().copied().collect(),
                    });
                }
            }
        }
        Ok(())
    }

    // ---- active sets -----------------------------------------------------

    /// Rows active at `x` within `tol`.
    pub fn active_set(&self, x: &DVector<f64>, tol: f64) -> Result<ActiveSet, PolytopeError> {
        let h = self.h_form()?;
        let slacks = h.slacks(x);
        Ok(ActiveSet::from_indices(
            slacks
                .iter()
                .enumerate()
                .filter(|(_, &s)| s.abs() <= tol)
                .map(|(i, _)| i)
                .collect(),
        ))
    }

    /// Rows active at every one of `points` within `tol` (the active set of
    /// the vertex set of a face).
    pub fn active_set_of_union(
        &self,
        points: &[DVector<f64>],
        tol: f64,
    ) -> Result<ActiveSet, PolytopeError> {
        let h = self.h_form()?;
        let mut common: Option<Vec<usize>> = None;
        for p in points {
            let slacks = h.slacks(p);
            let act: Vec<usize> = slacks
                .iter()
                .enumerate()
                .filter(|(_, &s)| s.abs() <= tol)
                .map(|(i, _)| i)
                .collect();
            common = Some(match common {
                None => act,
                Some(prev) => prev.into_iter().filter(|i| act.contains(i)).collect(),
            });
        }
        Ok(ActiveSet::from_indices(common.unwrap_or_default()))
    }

    // ---- geometric constants ----------------------------------------------

    pub fn geometric_constants(&self) -> Result<GeometricConstants, PolytopeError> {
        self.geometric_constants_with(GeometricOptions::default())
    }

    /// Closed forms for the structured kinds; brute force over rows and
    /// vertices for `GenericH`. `opts.drop_redundant_rows` only affects the
    /// brute-force path (structured H-forms have no redundant rows).
    pub fn geometric_constants_with(
        &self,
        opts: GeometricOptions,
    ) -> Result<GeometricConstants, PolytopeError> {
        let n = self.n as f64;
        match self.kind {
            PolytopeKind::Simplex => {
                if self.n < 2 {
                    return Err(PolytopeError::DegeneratePolytope);
                }
                Ok(GeometricConstants {
                    zeta: 1.0,
                    phi: 1.0,
                    omega: 1.0,
                    diameter: 2f64.sqrt(),
                })
            }
            PolytopeKind::L1Ball => Ok(GeometricConstants {
                zeta: 2.0,
                phi: n.sqrt(),
                omega: 2.0 / n.sqrt(),
                diameter: 2.0,
            }),
            PolytopeKind::Box => Ok(GeometricConstants {
                zeta: 2.0,
                phi: 1.0,
                omega: 2.0,
                diameter: 2.0 * n.sqrt(),
            }),
            PolytopeKind::LiftedL1Box => {
                let d = (self.n - 1) as f64;
                let phi = (d + 1.0).sqrt();
                Ok(GeometricConstants {
                    zeta: 1.0,
                    phi,
                    omega: 1.0 / phi,
                    diameter: (4.0 * d).max(d * d + d).sqrt(),
                })
            }
            PolytopeKind::GenericH => {
                let h = self.h_form()?.clone();
                let verts = self.vertices()?;
                brute_force_constants(&h, verts, opts)
            }
        }
    }

    /// Largest pairwise vertex distance.
    pub fn diameter(&self) -> Result<f64, PolytopeError> {
        Ok(self.geometric_constants()?.diameter)
    }

    /// Largest pairwise distance between mapped vertices `E v`.
    pub fn image_diameter(&self, e: &DMatrix<f64>) -> Result<f64, PolytopeError> {
        let verts = self.vertices()?;
        if verts.len() < 2 {
            return Err(PolytopeError::DegeneratePolytope);
        }
        let images: Vec<DVector<f64>> = verts.iter().map(|v| e * v).collect();
        let mut best = 0.0f64;
        for i in 0..images.len() {
            for j in i + 1..images.len() {
                best = best.max((&images[i] - &images[j]).norm());
            }
        }
        Ok(best)
    }
}

/// `+1` if bit `j` of `i` is clear, `-1` if set.
fn sign_from_bit(i: usize, j: usize) -> f64 {
    if (i >> j) & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Brute-force geometric constants from an explicit H-form and vertex list.
/// Shared with tests that cross-check the closed forms.
pub(crate) fn brute_force_constants(
    h: &HForm,
    verts: &[DVector<f64>],
    opts: GeometricOptions,
) -> Result<GeometricConstants, PolytopeError> {
    if verts.len() < 2 {
        return Err(PolytopeError::DegeneratePolytope);
    }
    let tol = opts.activity_tol;
    let m = h.rows();
    let slack_table: Vec<DVector<f64>> = verts.iter().map(|v| h.slacks(v)).collect();

    let mut keep: Vec<bool> = vec![true; m];
    if opts.drop_redundant_rows {
        for i in 0..m {
            // Redundant here: active at no vertex. (The maximum of a linear
            // functional over the polytope is attained at a vertex.)
            keep[i] = slack_table.iter().any(|s| s[i] <= tol);
        }
    }

    // Rows active at every vertex never contribute a positive slack and are
    // excluded from phi.
    let mut globally_active = vec![true; m];
    for slacks in &slack_table {
        for i in 0..m {
            if slacks[i] > tol {
                globally_active[i] = false;
            }
        }
    }

    let mut zeta = f64::INFINITY;
    for slacks in &slack_table {
        for i in 0..m {
            if keep[i] && slacks[i] > tol {
                zeta = zeta.min(slacks[i]);
            }
        }
    }
    let mut phi = 0.0f64;
    for i in 0..m {
        if keep[i] && !globally_active[i] {
            phi = phi.max(h.a_mat.row(i).norm());
        }
    }
    if !zeta.is_finite() || phi == 0.0 {
        return Err(PolytopeError::DegeneratePolytope);
    }

    let mut diameter = 0.0f64;
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            diameter = diameter.max((&verts[i] - &verts[j]).norm());
        }
    }
    Ok(GeometricConstants {
        zeta,
        phi,
        omega: zeta / phi,
        diameter,
    })
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex_h(n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let p = Polytope::simplex(n).unwrap();
        let h = p.h_form().unwrap();
        (h.a_mat.clone(), h.a_vec.clone())
    }

    #[test]
    fn closed_form_constants_match_brute_force() {
        for n in 2..=6 {
            for p in [
                Polytope::simplex(n).unwrap(),
                Polytope::l1_ball(n).unwrap(),
                Polytope::unit_box(n).unwrap(),
                Polytope::lifted_l1_box(n).unwrap(),
            ] {
                let closed = p.geometric_constants().unwrap();
                let brute = brute_force_constants(
                    p.h_form().unwrap(),
                    p.vertices().unwrap(),
                    GeometricOptions::default(),
                )
                .unwrap();
                assert!(
                    (closed.zeta - brute.zeta).abs() < 1e-12,
                    "{:?} n={n} zeta {} vs {}",
                    p.kind(),
                    closed.zeta,
                    brute.zeta
                );
                assert!(
                    (closed.phi - brute.phi).abs() < 1e-12,
                    "{:?} n={n} phi {} vs {}",
                    p.kind(),
                    closed.phi,
                    brute.phi
                );
                assert!(
                    (closed.omega - brute.omega).abs() < 1e-12,
                    "{:?} n={n} omega {} vs {}",
                    p.kind(),
                    closed.omega,
                    brute.omega
                );
                assert!(
                    (closed.diameter - brute.diameter).abs() < 1e-12,
                    "{:?} n={n} diameter {} vs {}",
                    p.kind(),
                    closed.diameter,
                    brute.diameter
                );
            }
        }
    }

    #[test]
    fn simplex_active_set_at_unit_vector() {
        let p = Polytope::simplex(3).unwrap();
        let e1 = p.vertex_by_id(0).unwrap();
        let act = p.active_set(&e1, ACTIVITY_TOL).unwrap();
        // Rows: -x1<=0 inactive; -x2<=0, -x3<=0 active; both sum rows active.
        assert_eq!(act.indices(), &[1, 2, 3, 4]);
    }

    #[test]
    fn box_active_set_at_mixed_vertex() {
        let p = Polytope::unit_box(2).unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0]);
        let act = p.active_set(&x, ACTIVITY_TOL).unwrap();
        // Rows ordered (x1<=1, x2<=1, -x1<=1, -x2<=1): active are x1<=1 and
        // -x2<=1.
        assert_eq!(act.indices(), &[0, 3]);
    }

    #[test]
    fn generic_enumeration_recovers_simplex_vertices() {
        let (a, rhs) = simplex_h(3);
        let p = Polytope::generic_h(a, rhs).unwrap();
        let verts = p.vertices().unwrap();
        assert_eq!(verts.len(), 3);
        // Lexicographic order: e3 < e2 < e1.
        assert_eq!(verts[0], DVector::from_vec(vec![0.0, 0.0, 1.0]));
        assert_eq!(verts[1], DVector::from_vec(vec![0.0, 1.0, 0.0]));
        assert_eq!(verts[2], DVector::from_vec(vec![1.0, 0.0, 0.0]));
    }

    #[test]
    fn generic_enumeration_matches_structured_box() {
        let b = Polytope::unit_box(3).unwrap();
        let h = b.h_form().unwrap();
        let g = Polytope::generic_h(h.a_mat.clone(), h.a_vec.clone()).unwrap();
        let mut expected: Vec<DVector<f64>> = b.vertices().unwrap().to_vec();
        expected.sort_by(|u, v| u.iter().partial_cmp(v.iter()).unwrap());
        assert_eq!(g.vertices().unwrap(), expected.as_slice());
        let gc_g = g.geometric_constants().unwrap();
        let gc_b = b.geometric_constants().unwrap();
        assert!((gc_g.omega - gc_b.omega).abs() < 1e-12);
        assert!((gc_g.diameter - gc_b.diameter).abs() < 1e-12);
    }

    #[test]
    fn unbounded_h_form_rejected() {
        // {x : x1 >= 0} in 2D with a second harmless row; unbounded.
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let rhs = DVector::from_vec(vec![0.0, 0.0]);
        match Polytope::generic_h(a, rhs) {
            Err(PolytopeError::UnboundedSet { .. }) => {}
            other => panic!("expected UnboundedSet, got {other:?}"),
        }
        // Halfspace x <= 1 in 1D.
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let rhs = DVector::from_vec(vec![1.0]);
        match Polytope::generic_h(a, rhs) {
            Err(PolytopeError::UnboundedSet { .. }) => {}
            other => panic!("expected UnboundedSet, got {other:?}"),
        }
    }

    #[test]
    fn empty_h_form_rejected() {
        // x <= -1 and -x <= 0 (i.e. x >= 0): empty.
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let rhs = DVector::from_vec(vec![-1.0, 0.0]);
        match Polytope::generic_h(a, rhs) {
            Err(PolytopeError::EmptySet) => {}
            other => panic!("expected EmptySet, got {other:?}"),
        }
    }

    #[test]
    fn redundant_row_flag_changes_phi() {
        // Unit box in 1D plus a far-away redundant row with a big norm.
        let a = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 10.0]);
        let rhs = DVector::from_vec(vec![1.0, 1.0, 100.0]);
        let p = Polytope::generic_h(a, rhs).unwrap();
        let kept = p.geometric_constants().unwrap();
        assert!((kept.phi - 10.0).abs() < 1e-12);
        let dropped = p
            .geometric_constants_with(GeometricOptions {
                drop_redundant_rows: true,
                ..Default::default()
            })
            .unwrap();
        assert!((dropped.phi - 1.0).abs() < 1e-12);
        assert!((dropped.omega - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lifted_vertices_are_box_points_with_their_l1_norm() {
        let p = Polytope::lifted_l1_box(3).unwrap();
        let verts = p.vertices().unwrap();
        assert_eq!(verts.len(), 27);
        for v in verts {
            let l1: f64 = v.iter().take(3).map(|c| c.abs()).sum();
            assert_eq!(v[3], l1);
            assert!(p.contains(v, 1e-12));
        }
        // Every vertex is extreme: its active rows have full rank.
        let h = p.h_form().unwrap();
        for v in verts {
            let act = p.active_set(v, ACTIVITY_TOL).unwrap();
            let rows = h.a_mat.select_rows(act.indices().iter());
            assert_eq!(linalg::rank(&rows, 1e-10), 4, "not extreme: {v:?}");
        }
    }

    #[test]
    fn positive_slacks_never_undercut_zeta() {
        for p in [
            Polytope::simplex(4).unwrap(),
            Polytope::l1_ball(3).unwrap(),
            Polytope::unit_box(4).unwrap(),
            Polytope::lifted_l1_box(3).unwrap(),
        ] {
            let gc = p.geometric_constants().unwrap();
            let h = p.h_form().unwrap();
            for v in p.vertices().unwrap() {
                for s in h.slacks(v).iter() {
                    if *s > ACTIVITY_TOL {
                        assert!(*s >= gc.zeta);
                    }
                }
            }
        }
    }

    #[test]
    fn vertex_ids_round_trip() {
        for p in [
            Polytope::simplex(4).unwrap(),
            Polytope::l1_ball(4).unwrap(),
            Polytope::unit_box(4).unwrap(),
            Polytope::lifted_l1_box(3).unwrap(),
        ] {
            let verts = p.vertices().unwrap();
            for (i, v) in verts.iter().enumerate() {
                assert_eq!(&p.vertex_by_id(i as u64).unwrap(), v);
            }
            assert_eq!(verts.len() as u64, p.vertex_count().unwrap());
        }
    }

    #[test]
    fn spec_round_trip() {
        let p = Polytope::l1_ball(5).unwrap();
        let json = serde_json::to_string(&p.to_spec()).unwrap();
        assert!(json.contains("\"kind\":\"l1_ball\""));
        let back = Polytope::from_spec(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.kind(), PolytopeKind::L1Ball);
        assert_eq!(back.dim(), 5);

        let (a, rhs) = simplex_h(2);
        let g = Polytope::generic_h(a, rhs).unwrap();
        let json = serde_json::to_string(&g.to_spec()).unwrap();
        let back = Polytope::from_spec(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.vertices().unwrap(), g.vertices().unwrap());
    }

    #[test]
    fn image_diameter_of_identity_is_diameter() {
        let p = Polytope::unit_box(3).unwrap();
        let e = DMatrix::<f64>::identity(3, 3);
        let d = p.image_diameter(&e).unwrap();
        assert!((d - p.diameter().unwrap()).abs() < 1e-12);
    }
}
