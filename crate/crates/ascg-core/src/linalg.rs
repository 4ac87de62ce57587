//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues of a (symmetrized) square matrix, ascending.
fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    debug_assert_eq!(m.nrows(), m.ncols());
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Largest eigenvalue of a symmetric matrix (0.0 for empty input).
pub fn sym_eig_max(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Smallest eigenvalue of a symmetric matrix (0.0 for empty input).
pub fn sym_eig_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    // Work on the smaller Gram matrix.
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    sym_eig_max(&gram).max(0.0).sqrt()
}

/// Numerical rank via row echelon with partial pivoting.
///
/// `tol` is relative to the largest entry magnitude (floored at 1).
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let threshold = tol * scale.max(1.0);
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        // Partial pivot: largest magnitude in this column at or below `rank`.
        let mut pivot_row = rank;
        let mut pivot_val = a[(rank, col)].abs();
        for r in rank + 1..rows {
            let v = a[(r, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val <= threshold {
            continue;
        }
        a.swap_rows(rank, pivot_row);
        for r in rank + 1..rows {
            let factor = a[(r, col)] / a[(rank, col)];
            if factor != 0.0 {
                for c in col..cols {
                    a[(r, c)] -= factor * a[(rank, c)];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Solve a square system `A x = b`, rejecting rank-deficient or inconsistent
/// systems. Returns `None` unless the residual is small relative to the data.
pub fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    debug_assert_eq!(a.nrows(), a.ncols());
    debug_assert_eq!(a.nrows(), b.len());
    if rank(a, tol) < a.ncols() {
        return None;
    }
    let x = a.clone().lu().solve(b)?;
    let residual = (a * &x - b).amax();
    let scale = a.amax().max(b.amax()).max(1.0);
    if residual <= tol.sqrt() * scale {
        Some(x)
    } else {
        None
    }
}

/// Direction spanning the one-dimensional nullspace of `m`, if the nullity is
/// exactly one (decided via the spectrum of `mᵀm` with relative `tol`).
pub fn nullspace_direction(m: &DMatrix<f64>, tol: f64) -> Option<DVector<f64>> {
    let n = m.ncols();
    if n == 0 {
        return None;
    }
    let gram = m.transpose() * m;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.amax().max(1.0);
    let threshold = tol * scale;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let smallest = eig.eigenvalues[order[0]];
    if smallest.abs() > threshold {
        return None; // full column rank, no nullspace
    }
    if n > 1 && eig.eigenvalues[order[1]].abs() <= threshold {
        return None; // nullity >= 2
    }
    let dir = eig.eigenvectors.column(order[0]).into_owned();
    Some(dir.normalize())
}
