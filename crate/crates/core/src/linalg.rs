//! Small dense complex linear algebra: Hermitian spectral functions,
//! principal logarithms, null spaces.
//!
//! Matrices here are tiny (bundle rank, or rank squared for End bundles), so
//! everything is plain `DMatrix<C64>`.

use nalgebra::{DMatrix, DVector};

use crate::{CMat, C64};

pub fn identity(r: usize) -> CMat {
    CMat::identity(r, r)
}

pub fn zeros(r: usize) -> CMat {
    CMat::zeros(r, r)
}

pub fn from_real(m: &DMatrix<f64>) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn frob(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(a: &CMat) -> C64 {
    a.diagonal().iter().copied().sum()
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(a: &CMat) -> (DVector<f64>, CMat) {
    let r = a.nrows();
    if r == 1 {
        return (DVector::from_element(1, a[(0, 0)].re), identity(1));
    }
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(r, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = zeros(r);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// `U diag(f(lambda)) U^*` for Hermitian `a`.
pub fn herm_fn(a: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, u) = herm_eig(a);
    let d = CMat::from_diagonal(&vals.map(|v| C64::new(f(v), 0.0)));
    &u * d * u.adjoint()
}

/// Upper-triangular `C` with `h = C^* C`. Returns `None` if `h` is not
/// positive-definite.
pub fn chol_upper(h: &CMat) -> Option<CMat> {
    nalgebra::Cholesky::new(hermitian_part(h)).map(|c| c.l().adjoint())
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    if a.nrows() == 1 {
        let z = a[(0, 0)];
        return if z.norm() > 0.0 { Some(CMat::from_element(1, 1, z.inv())) } else { None };
    }
    a.clone().try_inverse()
}

/// Eigenvalues of a general complex matrix (complex Schur form).
pub fn eigenvalues(a: &CMat) -> Vec<C64> {
    if a.nrows() == 1 {
        return vec![a[(0, 0)]];
    }
    let schur = nalgebra::Schur::new(a.clone());
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

pub fn expm(a: &CMat) -> CMat {
    a.clone().exp()
}

/// Principal square root by the Denman-Beavers iteration.
fn sqrtm(a: &CMat) -> Option<CMat> {
    let r = a.nrows();
    let mut y = a.clone();
    let mut z = identity(r);
    let half = C64::new(0.5, 0.0);
    for _ in 0..100 {
        let yi = inverse(&y)?;
        let zi = inverse(&z)?;
        let y_next = (&y + &zi) * half;
        let z_next = (&z + &yi) * half;
        let delta = frob(&(&y_next - &y)) / frob(&y_next).max(1e-300);
        y = y_next;
        z = z_next;
        if delta < 1e-15 {
            break;
        }
    }
    Some(y)
}

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// Returns `None` when some eigenvalue lies on the closed negative real axis
/// (relative tolerance `1e-12`), where no principal logarithm exists.
pub fn logm(a: &CMat) -> Option<CMat> {
    let r = a.nrows();
    let scale = max_abs(a).max(1e-300);
    for lam in eigenvalues(a) {
        if lam.re <= 0.0 && lam.im.abs() <= 1e-12 * scale {
            return None;
        }
    }
    let id = identity(r);
    let mut x = a.clone();
    let mut squarings = 0;
    while frob(&(&x - &id)) > 0.2 && squarings < 64 {
        x = sqrtm(&x)?;
        squarings += 1;
    }
    // log X = 2 atanh(Z), Z = (X - I)(X + I)^{-1}
    let z = (&x - &id) * inverse(&(&x + &id))?;
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut sum = z.clone();
    for j in 1..60 {
        term = &term * &z2;
        let add = &term * C64::new(1.0 / (2 * j + 1) as f64, 0.0);
        sum += &add;
        if frob(&add) < 1e-18 * frob(&sum).max(1e-300) {
            break;
        }
    }
    Some(sum * C64::new(2f64.powi(squarings + 1), 0.0))
}

/// Orthonormal basis (columns) of the null space of `a`, using singular
/// values below `tol * max(1, sigma_max)`.
pub fn null_space(a: &CMat, tol: f64) -> CMat {
    let (m, n) = a.shape();
    // pad to at least square so that V is complete
    let padded = if m < n {
        let mut p = CMat::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = nalgebra::SVD::new(padded, false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * smax.max(1.0);
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .collect();
    let mut out = CMat::zeros(n, cols.len());
    for (c, &i) in cols.iter().enumerate() {
        let row = vt.row(i).adjoint();
        out.set_column(c, &row);
    }
    out
}

/// Orthonormal basis of the column space of `a`.
pub fn column_space(a: &CMat, tol: f64) -> CMat {
    let (m, n) = a.shape();
    if n == 0 {
        return CMat::zeros(m, 0);
    }
    let svd = nalgebra::SVD::new(a.clone(), true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol * smax.max(1.0))
        .collect();
    let mut out = CMat::zeros(m, cols.len());
    for (c, &i) in cols.iter().enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

/// Orthogonal projector onto the column span of an orthonormal basis.
pub fn projector(basis: &CMat) -> CMat {
    basis * basis.adjoint()
}

/// Moore-Penrose pseudo-inverse with relative singular value cutoff.
pub fn pinv(a: &CMat, tol: f64) -> CMat {
    let svd = nalgebra::SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.pseudo_inverse(tol * smax.max(1e-300)).expect("svd has u and v")
}

/// Real pseudo-inverse for the real block systems assembled by the solver.
pub fn pinv_real(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let svd = nalgebra::SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.pseudo_inverse(tol * smax.max(1e-300)).expect("svd has u and v")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn logm_inverts_expm_on_jordan_block() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let l = logm(&a).unwrap();
        assert!(frob(&(expm(&l) - &a)) < 1e-13);
        // log of a unipotent matrix is nilpotent: [[0,1],[0,0]]
        assert!((l[(0, 1)] - c(1.0, 0.0)).norm() < 1e-13);
        assert!(l[(0, 0)].norm() < 1e-13);
    }

    #[test]
    fn logm_scalar_and_rotation() {
        let a = CMat::from_element(1, 1, c(2.0, 0.0));
        let l = logm(&a).unwrap();
        assert!((l[(0, 0)].re - 2f64.ln()).abs() < 1e-14);
        let t: f64 = 2.5;
        let rot = CMat::from_row_slice(2, 2, &[c(t.cos(), 0.0), c(-t.sin(), 0.0), c(t.sin(), 0.0), c(t.cos(), 0.0)]);
        let l = logm(&rot).unwrap();
        assert!(frob(&(expm(&l) - &rot)) < 1e-12);
        assert!((l[(1, 0)].re - t).abs() < 1e-12);
    }

    #[test]
    fn logm_rejects_negative_eigenvalue() {
        let a = CMat::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        assert!(logm(&a).is_none());
        let z = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        assert!(logm(&z).is_none());
    }

    #[test]
    fn null_space_of_diagonal_commutant() {
        // [A, diag(1,2)] = 0 has the diagonal matrices as solutions
        let d = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let mut sys = CMat::zeros(4, 4);
        for col in 0..4 {
            let mut e = zeros(2);
            e[(col / 2, col % 2)] = c(1.0, 0.0);
            let img = commutator(&e, &d);
            for row in 0..4 {
                sys[(row, col)] = img[(row / 2, row % 2)];
            }
        }
        assert_eq!(null_space(&sys, 1e-10).ncols(), 2);
    }

    #[test]
    fn herm_fn_matches_direct_square() {
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 0.3), c(0.5, -0.3), c(1.0, 0.0)]);
        let sq = herm_fn(&a, |x| x * x);
        assert!(frob(&(sq - &a * &a)) < 1e-13);
    }
}
