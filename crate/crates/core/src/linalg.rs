//! Dense linear-algebra helpers shared by the fitting and verification code.

use nalgebra::{DMatrix, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

const SVD_MAX_ITER: usize = 10_000;

pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub sigma_max: f64,
}

/// Moore–Penrose pseudo-inverse from a truncated SVD, discarding singular
/// values below `rank_tol · σ_max`.
///
/// The SVD is taken of the triangular factor of a column-pivoted QR of the
/// tall orientation (`Aᵀ Π = Q T` for wide `A`). Pivoting follows the rows of
/// `A`, so `(P A)† = A† Pᵀ` holds to rounding for signed permutations `P`.
pub fn pseudo_inverse(a: &DMatrix<f64>, rank_tol: f64) -> Result<PseudoInverse> {
    if !(rank_tol >= 0.0) {
        return Err(Error::input(format!("rank_tol must be nonnegative, got {rank_tol}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    if a.is_empty() || a.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateData("matrix is identically zero".into()));
    }
    let wide = a.nrows() <= a.ncols();
    let tall = if wide { a.transpose() } else { a.clone() };
    let m = tall.ncols();
    let qr = tall.col_piv_qr();
    let q = qr.q();
    let mut perm = DMatrix::<f64>::identity(m, m);
    qr.p().inv_permute_rows(&mut perm);
    let svd = SVD::try_new(qr.r(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let sigma_max = svd.singular_values.max();
    let cutoff = rank_tol * sigma_max;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    // tall = (Q U) Σ (Π V)ᵀ
    let left = &q * u;
    let right = &perm * v_t.transpose();
    let mut rank = 0;
    let mut pinv = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            if wide {
                pinv += (left.column(i) / s) * right.column(i).transpose();
            } else {
                pinv += (right.column(i) / s) * left.column(i).transpose();
            }
        }
    }
    Ok(PseudoInverse {
        matrix: pinv,
        rank,
        sigma_max,
    })
}

/// Hausdorff distance between two finite point sets in the complex plane.
pub fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let directed = |from: &[Complex64], to: &[Complex64]| {
        from.iter()
            .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Bottleneck distance between two equal-size multisets (exhaustive for up
/// to 8 points, greedy nearest-unused matching beyond that).
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    if a.len() <= 8 {
        let mut perm: Vec<usize> = (0..b.len()).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let cost = a.iter().zip(p).map(|(x, &j)| (x - b[j]).norm()).fold(0.0, f64::max);
            best = best.min(cost);
        });
        return best;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for p in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, q)| (j, (p - q).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("equal sizes");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// `A B A⁻¹` given both `A` and its inverse.
pub fn conjugate(a: &DMatrix<f64>, b: &DMatrix<f64>, a_inv: &DMatrix<f64>) -> DMatrix<f64> {
    a * b * a_inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_pseudo_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let p = pseudo_inverse(&a, 1e-12).unwrap();
        assert_eq!(p.rank, 1);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]) / 25.0;
        assert!((p.matrix - expected).amax() < 1e-15);
    }

    #[test]
    fn wide_matrix_pseudo_inverse_is_right_inverse() {
        let a = DMatrix::from_fn(3, 40, |i, j| ((i * i * 13 + j * j * 7 + i * j) as f64).sin());
        let p = pseudo_inverse(&a, 1e-12).unwrap();
        assert_eq!(p.rank, 3);
        assert!((&a * &p.matrix - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn tall_and_wide_agree_with_penrose_conditions() {
        let a = DMatrix::from_fn(5, 3, |i, j| ((i * i * 13 + j * j * 7 + i * j) as f64).sin());
        for m in [a.clone(), a.transpose()] {
            let p = pseudo_inverse(&m, 1e-12).unwrap().matrix;
            assert!((&m * &p * &m - &m).amax() < 1e-13);
            assert!((&p * &m * &p - &p).amax() < 1e-13);
            assert!(((&m * &p).transpose() - &m * &p).amax() < 1e-13);
            assert!(((&p * &m).transpose() - &p * &m).amax() < 1e-13);
        }
    }

    #[test]
    fn row_permutation_commutes_exactly() {
        let a = DMatrix::from_fn(4, 30, |i, j| ((i * 31 + j * j * 5 + i * j) as f64).cos() * (1.0 + i as f64));
        let mut pa = a.clone();
        pa.swap_rows(0, 2);
        pa.row_mut(1).neg_mut();
        let p = pseudo_inverse(&a, 1e-12).unwrap().matrix;
        let mut expected = p.clone();
        expected.swap_columns(0, 2);
        expected.column_mut(1).neg_mut();
        let got = pseudo_inverse(&pa, 1e-12).unwrap().matrix;
        assert!((got - expected).amax() <= 1e-15 * p.amax());
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        assert!(matches!(pseudo_inverse(&DMatrix::zeros(2, 3), 1e-12), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn distances() {
        let c = |re, im| Complex64::new(re, im);
        let a = [c(1.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)];
        let b = [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 1.0)];
        assert_eq!(hausdorff(&a, &b), 0.0);
        assert!((multiset_distance(&a, &b) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(multiset_distance(&a, &a), 0.0);
        assert!(hausdorff(&a, &[]).is_infinite());
    }
}
