//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

/// Largest entry of `|m - m†|`.
pub fn hermiticity_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    eigh(m).0
}

/// Square root of a positive semidefinite matrix. Eigenvalues at rounding
/// level (relative to the largest) are treated as exact zeros, since their
/// square roots would otherwise inject ~1e-8 noise.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = eigh(m);
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = 4.0 * m.nrows() as f64 * f64::EPSILON * top;
    let mut scaled = vecs.clone();
    for (k, v) in vals.iter().enumerate() {
        let r = if *v > floor { v.sqrt() } else { 0.0 };
        scaled.column_mut(k).scale_mut(r);
    }
    scaled * vecs.adjoint()
}

/// Singular values, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn trace_norm(m: &CMat) -> f64 {
    singular_values(m).iter().sum()
}

pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of the column span of `m`, dropping directions whose
/// singular value is below `rel_tol` times the largest.
pub fn column_span(m: &CMat, rel_tol: f64) -> CMat {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return CMat::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return CMat::zeros(rows, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > rel_tol * top)
        .collect();
    let mut out = CMat::zeros(rows, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        out.set_column(dst, &u.column(src));
    }
    out
}

/// Replaces a wide factor `V` (more columns than rows) by a square `R†`
/// with `R†R = VV†`.
fn compress_factor(v: &CMat) -> CMat {
    if v.ncols() <= v.nrows() {
        v.clone()
    } else {
        v.adjoint().qr().r().adjoint()
    }
}

/// Fidelity `‖W†V‖_1` of `ρ = VV†` and `σ = WW†`. Needs no matrix square
/// roots, so rank-deficient states keep full precision.
pub fn fidelity_from_factors(v: &CMat, w: &CMat) -> f64 {
    let (v, w) = (compress_factor(v), compress_factor(w));
    trace_norm(&(w.adjoint() * v))
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}
