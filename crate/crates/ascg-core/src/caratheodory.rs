//! Incremental Carathéodory reduction of vertex representations.
//!
//! A point of the feasible set is carried as a convex combination
//! `x = Σ μ_i v_i` over an insertion-ordered list of vertices. Whenever the
//! list becomes affinely dependent (which can only happen right after a new
//! vertex is appended), one convex weight can be driven to zero along the
//! dependence direction without moving `x`, shrinking the list back to at
//! most `n + 1` vertices.
//!
//! [`IrrState`] maintains the factorization incrementally across solver
//! steps: it keeps `W = T · V` where the columns of `V` are the differences
//! `v_i - v_0` against the first (reference) vertex, `T` is a product of row
//! operations, and `W` is kept in column echelon form (the pivot of column
//! `j` sits in row `j`, with exact zeros below). Appending a vertex costs one
//! matrix-vector product plus a rank-one elimination; removing one costs a
//! short band sweep. A full refactorization runs every
//! [`REFACTOR_PERIOD`] reductions to shed accumulated roundoff.
//!
//! [`reduce_full`] is the stand-alone reducer: it refactorizes from scratch,
//! eliminates the first dependent column, and repeats until the list is
//! affinely independent. It shares the weight-transfer rule with
//! [`IrrState`], so on solver-generated updates (where the only dependent
//! column is the newest one) both produce identical weight lists.

use nalgebra::{DMatrix, DVector};

/// Convex weights at or below this value are treated as zero and removed.
pub const WEIGHT_ZERO_TOL: f64 = 1e-12;

/// Relative pivot threshold for declaring a column affinely dependent.
pub const DEP_TOL_SCALE: f64 = 1e-9;

/// Full refactorization runs after this many reduction events.
pub const REFACTOR_PERIOD: u32 = 64;

/// One vertex of the active representation: canonical id, coordinates, and
/// convex weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedVertex {
    pub id: u64,
    pub point: DVector<f64>,
    pub weight: f64,
}

impl WeightedVertex {
    pub fn new(id: u64, point: DVector<f64>, weight: f64) -> Self {
        Self { id, point, weight }
    }
}

/// `Σ μ_i v_i` over the representation. Panics on an empty list.
pub fn reconstruct(entries: &[WeightedVertex]) -> DVector<f64> {
    let mut x = DVector::zeros(entries[0].point.len());
    for e in entries {
        x.axpy(e.weight, &e.point, 1.0);
    }
    x
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum IrrError {
    #[error("representation out of sync with the incremental state")]
    OutOfSync,
    #[error("vertex {0} is not part of the representation")]
    UnknownVertex(u64),
    #[error("entries are affinely dependent (column {col})")]
    Dependent { col: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

/// Structural events recorded by [`IrrState`], in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IrrEvent {
    Reset { id: u64 },
    Added { id: u64 },
    Dropped { id: u64 },
    Reduced { eliminated: Vec<u64> },
    Refactored,
}

/// Result of a weight reduction: the step length along the dependence
/// direction and the ids whose weights reached zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub alpha: f64,
    pub eliminated: Vec<u64>,
}

/// Eliminate below the pivot for columns `start..`, tracking row operations
/// in `t`. Returns `Err(col)` at the first column whose pivot falls under the
/// relative threshold (an affinely dependent column), leaving `w` transformed
/// up to and including that column.
fn echelon_sweep(
    w: &mut DMatrix<f64>,
    t: &mut DMatrix<f64>,
    start: usize,
) -> Result<(), usize> {
    let n = w.nrows();
    let cols = w.ncols();
    for c in start..cols {
        if c >= n {
            return Err(c);
        }
        let scale = w.column(c).amax().max(1.0);
        let mut best = c;
        let mut best_abs = w[(c, c)].abs();
        for r in c + 1..n {
            let a = w[(r, c)].abs();
            if a > best_abs {
                best = r;
                best_abs = a;
            }
        }
        if best_abs <= DEP_TOL_SCALE * scale {
            return Err(c);
        }
        if best != c {
            w.swap_rows(c, best);
            t.swap_rows(c, best);
        }
        for r in c + 1..n {
            let f = w[(r, c)] / w[(c, c)];
            if f != 0.0 {
                // Columns before c are zero in both rows, so the row
                // operation only needs to touch c and later.
                for cc in c + 1..cols {
                    w[(r, cc)] -= f * w[(c, cc)];
                }
                for cc in 0..t.ncols() {
                    t[(r, cc)] -= f * t[(c, cc)];
                }
            }
            w[(r, c)] = 0.0;
        }
    }
    Ok(())
}

/// Back-substitute `W[0..c, 0..c] λ = rhs[0..c]` against the echelon block.
fn back_substitute(w: &DMatrix<f64>, rhs: &DVector<f64>, c: usize) -> DVector<f64> {
    let mut lam = DVector::zeros(c);
    for i in (0..c).rev() {
        let mut s = rhs[i];
        for j in i + 1..c {
            s -= w[(i, j)] * lam[j];
        }
        lam[i] = s / w[(i, i)];
    }
    lam
}

/// Affine dependence vector over the full entry list for a dependent column:
/// `lt[0] = 1 - Σλ`, `lt[j+1] = λ_j` for the independent columns, `-1` at the
/// dependent entry, zero beyond.
fn dependence_vector(lam: &DVector<f64>, dep_entry: usize, len: usize) -> DVector<f64> {
    let mut lt = DVector::zeros(len);
    lt[0] = 1.0 - lam.sum();
    for j in 0..lam.len() {
        lt[j + 1] = lam[j];
    }
    lt[dep_entry] = -1.0;
    lt
}

/// Largest weight transfer along `lt` that keeps all weights nonnegative,
/// signed so the reference weight (entry 0) never decreases to zero: move in
/// the direction that grows (or preserves) entry 0.
fn select_alpha(lt: &DVector<f64>, entries: &[WeightedVertex]) -> f64 {
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for (i, e) in entries.iter().enumerate() {
        if lt[i] < 0.0 {
            upper = upper.min(-e.weight / lt[i]);
        } else if lt[i] > 0.0 {
            lower = lower.max(-e.weight / lt[i]);
        }
    }
    if lt[0] >= 0.0 {
        upper
    } else {
        lower
    }
}

/// Apply `μ += α lt`, then sweep out entries whose weight reached zero.
/// Returns the eliminated ids in list order.
fn apply_transfer(entries: &mut Vec<WeightedVertex>, lt: &DVector<f64>, alpha: f64) -> Vec<u64> {
    for (i, e) in entries.iter_mut().enumerate() {
        e.weight += alpha * lt[i];
    }
    let eliminated: Vec<u64> = entries
        .iter()
        .filter(|e| e.weight <= WEIGHT_ZERO_TOL)
        .map(|e| e.id)
        .collect();
    entries.retain(|e| e.weight > WEIGHT_ZERO_TOL);
    eliminated
}

fn difference_columns(entries: &[WeightedVertex]) -> DMatrix<f64> {
    let n = entries[0].point.len();
    let mut v = DMatrix::zeros(n, entries.len().saturating_sub(1));
    for (j, e) in entries.iter().skip(1).enumerate() {
        v.set_column(j, &(&e.point - &entries[0].point));
    }
    v
}

/// Reduce `entries` in place until the vertex list is affinely independent,
/// eliminating the first dependent column each round. Returns all eliminated
/// ids in elimination order. The first entry acts as the reference: the
/// weight transfer is signed so its weight never gets pushed to zero (it can
/// still be swept if it was already at zero).
pub fn reduce_full(entries: &mut Vec<WeightedVertex>) -> Result<Vec<u64>, IrrError> {
    let mut all = Vec::new();
    if entries.len() <= 1 {
        return Ok(all);
    }
    let n = entries[0].point.len();
    loop {
        if entries.len() <= 1 {
            return Ok(all);
        }
        let mut w = difference_columns(entries);
        let mut t = DMatrix::identity(n, n);
        match echelon_sweep(&mut w, &mut t, 0) {
            Ok(()) => return Ok(all),
            Err(col) => {
                let rhs = w.column(col).into_owned();
                let lam = back_substitute(&w, &rhs, col.min(n));
                let lt = dependence_vector(&lam, col + 1, entries.len());
                let alpha = select_alpha(&lt, entries);
                if !alpha.is_finite() {
                    return Err(IrrError::NumericalBreakdown(
                        "unbounded weight transfer".into(),
                    ));
                }
                let eliminated = apply_transfer(entries, &lt, alpha);
                if eliminated.is_empty() {
                    return Err(IrrError::NumericalBreakdown(
                        "weight transfer eliminated no entry".into(),
                    ));
                }
                all.extend(eliminated);
            }
        }
    }
}

/// Incrementally maintained echelon factorization of the representation.
///
/// Invariants between calls, checkable via [`IrrState::validate`]:
/// `order` mirrors the entry ids in insertion order, `W = T · V` for the
/// difference columns `V` against the reference `order[0]`, and `W` is in
/// column echelon form with exact zeros below each pivot.
#[derive(Debug, Clone)]
pub struct IrrState {
    n: usize,
    order: Vec<u64>,
    w: DMatrix<f64>,
    t: DMatrix<f64>,
    events: Vec<IrrEvent>,
    reductions_since_refactor: u32,
}

impl IrrState {
    /// State for a single-vertex representation.
    pub fn new(n: usize, id: u64) -> Self {
        Self {
            n,
            order: vec![id],
            w: DMatrix::zeros(n, 0),
            t: DMatrix::identity(n, n),
            events: vec![IrrEvent::Reset { id }],
            reductions_since_refactor: 0,
        }
    }

    /// Factorize an existing affinely independent representation.
    pub fn from_entries(entries: &[WeightedVertex]) -> Result<Self, IrrError> {
        if entries.is_empty() {
            return Err(IrrError::Shape("empty representation".into()));
        }
        let n = entries[0].point.len();
        let mut state = Self::new(n, entries[0].id);
        state.events.clear();
        state.rebuild(entries)?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[u64] {
        &self.order
    }

    pub fn reference(&self) -> u64 {
        self.order[0]
    }

    pub fn events(&self) -> &[IrrEvent] {
        &self.events
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// Collapse to a single vertex (a full forward step).
    pub fn reset(&mut self, id: u64) {
        self.order = vec![id];
        self.w = DMatrix::zeros(self.n, 0);
        self.t = DMatrix::identity(self.n, self.n);
        self.reductions_since_refactor = 0;
        self.events.push(IrrEvent::Reset { id });
    }

    fn rebuild(&mut self, entries: &[WeightedVertex]) -> Result<(), IrrError> {
        if entries.iter().any(|e| e.point.len() != self.n) {
            return Err(IrrError::Shape("point dimension changed".into()));
        }
        let mut w = difference_columns(entries);
        let mut t = DMatrix::identity(self.n, self.n);
        echelon_sweep(&mut w, &mut t, 0).map_err(|col| IrrError::Dependent { col })?;
        self.order = entries.iter().map(|e| e.id).collect();
        self.w = w;
        self.t = t;
        Ok(())
    }

    fn refactor(&mut self, entries: &[WeightedVertex]) -> Result<(), IrrError> {
        self.rebuild(entries).map_err(|e| match e {
            IrrError::Dependent { col } => IrrError::NumericalBreakdown(format!(
                "refactorization found a dependent column ({col})"
            )),
            other => other,
        })?;
        self.reductions_since_refactor = 0;
        self.events.push(IrrEvent::Refactored);
        Ok(())
    }

    fn check_sync(&self, entries: &[WeightedVertex]) -> Result<(), IrrError> {
        if entries.len() != self.order.len()
            || entries.iter().zip(&self.order).any(|(e, id)| e.id != *id)
        {
            return Err(IrrError::OutOfSync);
        }
        Ok(())
    }

    /// Band re-echelonization from `start`, falling back to a full
    /// refactorization if a pivot collapses.
    fn band(&mut self, start: usize, entries: &[WeightedVertex]) -> Result<(), IrrError> {
        let mut w = std::mem::replace(&mut self.w, DMatrix::zeros(0, 0));
        let mut t = std::mem::replace(&mut self.t, DMatrix::zeros(0, 0));
        match echelon_sweep(&mut w, &mut t, start) {
            Ok(()) => {
                self.w = w;
                self.t = t;
                Ok(())
            }
            Err(_) => {
                self.w = w;
                self.t = t;
                self.refactor(entries)
            }
        }
    }

    /// Register that the last entry of `entries` was just appended by a
    /// forward step. Detects affine dependence and, if present, transfers
    /// weight along the dependence direction until entries drop out
    /// (modifying `entries` in place).
    pub fn note_added(
        &mut self,
        entries: &mut Vec<WeightedVertex>,
    ) -> Result<Option<Reduction>, IrrError> {
        if entries.len() != self.order.len() + 1 {
            return Err(IrrError::OutOfSync);
        }
        if entries
            .iter()
            .zip(&self.order)
            .any(|(e, id)| e.id != *id)
        {
            return Err(IrrError::OutOfSync);
        }
        let new = entries.last().expect("nonempty");
        let new_id = new.id;
        if self.order.contains(&new_id) {
            return Err(IrrError::OutOfSync);
        }
        if new.point.len() != self.n {
            return Err(IrrError::Shape("point dimension changed".into()));
        }

        let tcol = &self.t * (&new.point - &entries[0].point);
        let c = self.w.ncols();
        let scale = if tcol.is_empty() { 1.0 } else { tcol.amax().max(1.0) };
        let pivot = (c..self.n)
            .map(|r| (r, tcol[r].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let dependent = match pivot {
            None => true,
            Some((_, a)) => a <= DEP_TOL_SCALE * scale,
        };

        if !dependent {
            let (prow, _) = pivot.expect("checked");
            self.append_column(&tcol, prow);
            self.order.push(new_id);
            self.events.push(IrrEvent::Added { id: new_id });
            return Ok(None);
        }

        let lam = back_substitute(&self.w, &tcol, c);
        let lt = dependence_vector(&lam, entries.len() - 1, entries.len());
        let alpha = select_alpha(&lt, entries);
        if !alpha.is_finite() {
            return Err(IrrError::NumericalBreakdown(
                "unbounded weight transfer".into(),
            ));
        }
        let eliminated = apply_transfer(entries, &lt, alpha);
        if eliminated.is_empty() {
            return Err(IrrError::NumericalBreakdown(
                "weight transfer eliminated no entry".into(),
            ));
        }

        if eliminated.contains(&self.order[0]) {
            // The reference only drops out if its weight was already at
            // zero; rebuild outright rather than re-rooting incrementally.
            self.refactor(entries)?;
        } else {
            let mut removed_cols: Vec<usize> = eliminated
                .iter()
                .filter(|id| **id != new_id)
                .map(|id| {
                    self.order
                        .iter()
                        .position(|o| o == id)
                        .expect("eliminated id tracked")
                        - 1
                })
                .collect();
            removed_cols.sort_unstable_by(|a, b| b.cmp(a));
            let min_col = removed_cols.last().copied();
            for q in &removed_cols {
                let w = std::mem::replace(&mut self.w, DMatrix::zeros(0, 0));
                self.w = w.remove_column(*q);
                self.order.remove(*q + 1);
            }
            if let Some(q) = min_col {
                self.band(q, entries)?;
            }
            let new_kept = !eliminated.contains(&new_id);
            if new_kept && !self.order.contains(&new_id) {
                let pos = entries
                    .iter()
                    .position(|e| e.id == new_id)
                    .expect("kept entry present");
                let tcol = &self.t * (&entries[pos].point - &entries[0].point);
                let c = self.w.ncols();
                let scale = tcol.amax().max(1.0);
                let pivot = (c..self.n)
                    .map(|r| (r, tcol[r].abs()))
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                match pivot {
                    Some((prow, a)) if a > DEP_TOL_SCALE * scale => {
                        self.append_column(&tcol, prow);
                        self.order.push(new_id);
                    }
                    // Mathematically unreachable; recover by rebuilding.
                    _ => self.refactor(entries)?,
                }
            }
        }

        self.events.push(IrrEvent::Reduced {
            eliminated: eliminated.clone(),
        });
        self.reductions_since_refactor += 1;
        if self.reductions_since_refactor >= REFACTOR_PERIOD {
            self.refactor(entries)?;
        }
        self.check_sync(entries)?;
        Ok(Some(Reduction { alpha, eliminated }))
    }

    /// Append `tcol` as the last column and eliminate below its pivot.
    fn append_column(&mut self, tcol: &DVector<f64>, pivot_row: usize) {
        let c = self.w.ncols();
        let w = std::mem::replace(&mut self.w, DMatrix::zeros(0, 0));
        let mut w = w.insert_column(c, 0.0);
        w.set_column(c, tcol);
        if pivot_row != c {
            w.swap_rows(c, pivot_row);
            self.t.swap_rows(c, pivot_row);
        }
        for r in c + 1..self.n {
            let f = w[(r, c)] / w[(c, c)];
            if f != 0.0 {
                for cc in 0..self.n {
                    self.t[(r, cc)] -= f * self.t[(c, cc)];
                }
            }
            w[(r, c)] = 0.0;
        }
        self.w = w;
    }

    /// Register that `id` was removed from the representation by a drop
    /// step. `entries` is the list after the removal.
    pub fn note_dropped(
        &mut self,
        entries: &[WeightedVertex],
        id: u64,
    ) -> Result<(), IrrError> {
        let pos = self
            .order
            .iter()
            .position(|o| *o == id)
            .ok_or(IrrError::UnknownVertex(id))?;
        if self.order.len() == 1 {
            return Err(IrrError::NumericalBreakdown(
                "cannot drop the last vertex".into(),
            ));
        }
        if self.order.len() == 2 {
            let survivor = self.order[1 - pos];
            self.order = vec![survivor];
            self.w = DMatrix::zeros(self.n, 0);
            self.t = DMatrix::identity(self.n, self.n);
            self.events.push(IrrEvent::Dropped { id });
            self.check_sync(entries)?;
            return Ok(());
        }
        if pos == 0 {
            // New reference r' = order[1]. The new difference columns are
            // (v_j - v_0) - (v_{r'} - v_0); the subtracted column has its
            // only nonzero entry in row 0, so just row 0 shifts.
            let head = self.w[(0, 0)];
            let cols = self.w.ncols();
            let mut neww = self.w.columns(1, cols - 1).into_owned();
            for c in 0..cols - 1 {
                neww[(0, c)] -= head;
            }
            self.w = neww;
            self.order.remove(0);
            self.band(0, entries)?;
        } else {
            let q = pos - 1;
            let w = std::mem::replace(&mut self.w, DMatrix::zeros(0, 0));
            self.w = w.remove_column(q);
            self.order.remove(pos);
            self.band(q, entries)?;
        }
        self.events.push(IrrEvent::Dropped { id });
        self.check_sync(entries)?;
        Ok(())
    }

    /// Check all structural invariants against the live representation:
    /// id sync, echelon shape, and `‖W - T·V‖_∞ ≤ tol · max(1, ‖V‖_∞)`.
    pub fn validate(&self, entries: &[WeightedVertex], tol: f64) -> Result<(), IrrError> {
        self.check_sync(entries)?;
        if self.w.nrows() != self.n || self.w.ncols() + 1 != self.order.len() {
            return Err(IrrError::Shape(format!(
                "W is {}x{} for {} vertices",
                self.w.nrows(),
                self.w.ncols(),
                self.order.len()
            )));
        }
        for c in 0..self.w.ncols() {
            for r in c + 1..self.n {
                if self.w[(r, c)] != 0.0 {
                    return Err(IrrError::NumericalBreakdown(format!(
                        "nonzero below pivot at ({r}, {c})"
                    )));
                }
            }
        }
        if self.order.len() > 1 {
            let v = difference_columns(entries);
            let tv = &self.t * &v;
            let err = (&self.w - &tv).amax();
            if err > tol * v.amax().max(1.0) {
                return Err(IrrError::NumericalBreakdown(format!(
                    "W - T*V deviates by {err}"
                )));
            }
        }
        Ok(())
    }
}
