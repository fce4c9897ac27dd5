//! Symmetric eigendecomposition.
//!
//! Matrices up to [`JACOBI_MAX_DIM`] use cyclic Jacobi rotations. Larger ones
//! (Isomap and LLE kernels over thousands of points) are reduced to
//! tridiagonal form by Householder reflections and diagonalised with the
//! implicit QL algorithm, which costs a small constant times n³ instead of
//! one n³ per Jacobi sweep.

use crate::error::{Error, Result};
use crate::numeric::Matrix;

const SYMMETRY_TOLERANCE: f64 = 1e-10;
const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
/// Largest dimension handled by the Jacobi solver.
pub const JACOBI_MAX_DIM: usize = 192;

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`; its largest-magnitude
    /// entry is positive.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.column(j)
    }
}

pub fn eigh_symmetric(a: &Matrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs() / scale);
        }
    }
    if worst > SYMMETRY_TOLERANCE {
        return Err(Error::Asymmetric(worst));
    }
    if !a.is_finite() {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }

    // Work on the exactly symmetrised copy.
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let (diag, v) = if n <= JACOBI_MAX_DIM {
        jacobi(m, a.frobenius_norm())?
    } else {
        tridiagonal_ql(m)?
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut pivot = 0;
        for r in 0..n {
            if v[(r, src)].abs() > v[(pivot, src)].abs() {
                pivot = r;
            }
        }
        let sign = if v[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[(r, dst)] = sign * v[(r, src)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn jacobi(mut m: Matrix, frobenius: f64) -> Result<(Vec<f64>, Matrix)> {
    let n = m.rows();
    let mut v = Matrix::identity(n);
    let threshold = OFF_DIAGONAL_TOLERANCE * frobenius.max(f64::MIN_POSITIVE);
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&m) > threshold {
        return Err(Error::Numerical(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }
    Ok(((0..n).map(|i| m[(i, i)]).collect(), v))
}

/// Householder tridiagonalisation followed by implicit QL with Wilkinson-style
/// shifts (the EISPACK `tred2`/`tql2` pair). Returns unsorted eigenvalues and
/// the eigenvectors as columns.
fn tridiagonal_ql(a: Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    // `v` is used column-major: v[j * n + k] is entry (k, j).
    let mut v: Vec<f64> = a.transpose().into_vec();
    let at = |v: &Vec<f64>, r: usize, c: usize| v[c * n + r];
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    for j in 0..n {
        d[j] = at(&v, n - 1, j);
    }
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = at(&v, i - 1, j);
                v[j * n + i] = 0.0;
                v[i * n + j] = 0.0;
            }
        } else {
            for dk in d[..i].iter_mut() {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = if f > 0.0 { -h.sqrt() } else { h.sqrt() };
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);
            for j in 0..i {
                f = d[j];
                v[i * n + j] = f;
                g = e[j] + at(&v, j, j) * f;
                for k in (j + 1)..i {
                    let vkj = at(&v, k, j);
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (f, g) = (d[j], e[j]);
                for k in j..i {
                    v[j * n + k] -= f * e[k] + g * d[k];
                }
                d[j] = at(&v, i - 1, j);
                v[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[i * n + n - 1] = at(&v, i, i);
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = at(&v, k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += at(&v, k, i + 1) * at(&v, k, j);
                }
                for k in 0..=i {
                    v[j * n + k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = at(&v, n - 1, j);
        v[j * n + n - 1] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;

    // Implicit QL on the tridiagonal (d, e).
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let max_iter = 30 * n.max(1);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::Numerical("QL eigensolver did not converge".into()));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d[(l + 2)..].iter_mut() {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = v.split_at_mut((i + 1) * n);
                    let col_i = &mut lo[i * n..];
                    let col_next = &mut hi[..n];
                    for (a, b) in col_i.iter_mut().zip(col_next.iter_mut()) {
                        let h = *b;
                        *b = s * *a + c * h;
                        *a = c * *a - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    let vectors = Matrix::from_vec(n, n, v)?.transpose();
    Ok((d, vectors))
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing `m[p][q]`.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = m.rows();
    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    fn reconstruction_error(a: &Matrix, e: &SymmetricEigen) -> f64 {
        let lambda = Matrix::from_diag(&e.values);
        let rebuilt = e
            .vectors
            .matmul(&lambda)
            .unwrap()
            .matmul_t(&e.vectors)
            .unwrap();
        a.sub(&rebuilt).unwrap().frobenius_norm() / a.frobenius_norm()
    }

    #[test]
    fn identity_and_diagonal() {
        let e = eigh_symmetric(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let e = eigh_symmetric(&Matrix::from_diag(&[5.0, 2.0, 9.0])).unwrap();
        assert_eq!(e.values, vec![9.0, 5.0, 2.0]);
        assert_eq!(e.vector(0), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn two_by_two_by_hand() {
        // λ² − 4λ + 3 = 0 → λ ∈ {3, 1}
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = eigh_symmetric(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vector(0);
        let v1 = e.vector(1);
        assert!((v0[0] - r).abs() < 1e-12 && (v0[1] - r).abs() < 1e-12);
        // ties in magnitude: the first entry is taken as pivot
        assert!((v1[0] - r).abs() < 1e-12 && (v1[1] + r).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            eigh_symmetric(&Matrix::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(eigh_symmetric(&a), Err(Error::Asymmetric(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_symmetric_reconstructs(n in 1usize..=64, seed in any::<u64>()) {
            let mut rng = Rng::new(seed, 0);
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let x = rng.uniform(-1.0, 1.0);
                    a[(i, j)] = x;
                    a[(j, i)] = x;
                }
            }
            let e = eigh_symmetric(&a).unwrap();
            prop_assert!(reconstruction_error(&a, &e) <= 1e-8);
            let gram = e.vectors.t_matmul(&e.vectors).unwrap();
            prop_assert!(gram.sub(&Matrix::identity(n)).unwrap().max_abs() <= 1e-8);
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            // A·V = V·Λ
            let av = a.matmul(&e.vectors).unwrap();
            let vl = e.vectors.matmul(&Matrix::from_diag(&e.values)).unwrap();
            prop_assert!(av.sub(&vl).unwrap().frobenius_norm() <= 1e-8 * a.frobenius_norm().max(1.0));
        }
    }

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed, 0);
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x = rng.uniform(-1.0, 1.0);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        a
    }

    fn check_decomposition(a: &Matrix, diag: &[f64], v: &Matrix) -> (f64, f64) {
        let n = a.rows();
        let rebuilt = v
            .matmul(&Matrix::from_diag(diag))
            .unwrap()
            .matmul_t(v)
            .unwrap();
        let rec =
            a.sub(&rebuilt).unwrap().frobenius_norm() / a.frobenius_norm().max(f64::MIN_POSITIVE);
        let orth = v
            .t_matmul(v)
            .unwrap()
            .sub(&Matrix::identity(n))
            .unwrap()
            .max_abs();
        (rec, orth)
    }

    #[test]
    fn large_matrices_use_the_tridiagonal_solver() {
        let n = JACOBI_MAX_DIM + 40;
        let a = random_symmetric(n, 77);
        let e = eigh_symmetric(&a).unwrap();
        assert!(reconstruction_error(&a, &e) <= 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let oracle = nalgebra::DMatrix::from_row_slice(n, n, a.as_slice()).symmetric_eigenvalues();
        let mut expected: Vec<f64> = oracle.iter().copied().collect();
        expected.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in e.values.iter().zip(&expected) {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn both_solvers_agree() {
        for (n, seed) in [(1, 1), (2, 2), (7, 3), (30, 4), (64, 5)] {
            let a = random_symmetric(n, seed);
            let (d1, v1) = jacobi(a.clone(), a.frobenius_norm()).unwrap();
            let (d2, v2) = tridiagonal_ql(a.clone()).unwrap();
            for (d, v) in [(&d1, &v1), (&d2, &v2)] {
                let (rec, orth) = check_decomposition(&a, d, v);
                assert!(rec <= 1e-10 && orth <= 1e-10, "n={n}: {rec} {orth}");
            }
            let mut s1 = d1.clone();
            let mut s2 = d2.clone();
            s1.sort_by(f64::total_cmp);
            s2.sort_by(f64::total_cmp);
            for (x, y) in s1.iter().zip(&s2) {
                assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn tridiagonal_solver_handles_degenerate_input() {
        for a in [
            Matrix::zeros(5, 5),
            Matrix::identity(6),
            Matrix::filled(4, 4, 1.0),
        ] {
            let (d, v) = tridiagonal_ql(a.clone()).unwrap();
            let (_, orth) = check_decomposition(&a, &d, &v);
            assert!(orth <= 1e-12);
            let rebuilt = v
                .matmul(&Matrix::from_diag(&d))
                .unwrap()
                .matmul_t(&v)
                .unwrap();
            assert!(a.sub(&rebuilt).unwrap().max_abs() <= 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn tridiagonal_solver_reconstructs(n in 1usize..=48, seed in any::<u64>()) {
            let a = random_symmetric(n, seed);
            let (d, v) = tridiagonal_ql(a.clone()).unwrap();
            let (rec, orth) = check_decomposition(&a, &d, &v);
            prop_assert!(rec <= 1e-8);
            prop_assert!(orth <= 1e-8);
        }
    }
}
