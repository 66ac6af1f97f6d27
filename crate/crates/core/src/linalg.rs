//! Small complex linear-algebra helpers shared by the estimation and
//! precoding stages.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type C64 = Complex64;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;

/// Ridge added to a Hermitian system that fails Cholesky factorization.
pub const SOLVE_RIDGE: f64 = 1e-12;

/// Vector of i.i.d. circularly-symmetric complex normal entries with
/// variance `var` (real and imaginary parts each carry `var / 2`).
pub fn circular_normal<R: Rng + ?Sized>(rng: &mut R, n: usize, var: f64) -> CVec {
    let s = (var / 2.0).sqrt();
    DVector::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(s * re, s * im)
    })
}

/// Inner product `a^H b`.
#[inline]
pub fn inner(a: &CVec, b: &CVec) -> C64 {
    a.dotc(b)
}

/// Orthonormal basis for the span of `columns`, computed by modified
/// Gram-Schmidt with column pivoting. Columns whose residual norm drops
/// below `rel_tol` times the largest input norm are treated as dependent.
pub fn orth_basis(columns: &[CVec], rel_tol: f64) -> Vec<CVec> {
    let mut work: Vec<CVec> = columns.to_vec();
    let max_norm = work.iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    let mut basis: Vec<CVec> = Vec::with_capacity(work.len());
    if max_norm == 0.0 {
        return basis;
    }
    let tol = rel_tol * max_norm;

    while !work.is_empty() {
        let (pivot, pivot_norm) = work
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_norm <= tol {
            break;
        }
        let mut q = work.swap_remove(pivot);
        // second pass against the accepted basis keeps orthogonality at
        // machine precision when columns are nearly dependent
        for b in &basis {
            let c = inner(b, &q);
            q.axpy(-c, b, C64::new(1.0, 0.0));
        }
        let n = q.norm();
        if n <= tol {
            continue;
        }
        q.unscale_mut(n);
        for c in work.iter_mut() {
            let proj = inner(&q, c);
            c.axpy(-proj, &q, C64::new(1.0, 0.0));
        }
        basis.push(q);
    }
    basis
}

/// `(I - U U^H) v` for an orthonormal set `U`, applied twice.
pub fn project_out(v: &CVec, basis: &[CVec]) -> CVec {
    let mut out = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = inner(q, &out);
            out.axpy(-c, q, C64::new(1.0, 0.0));
        }
    }
    out
}

fn ridge(a: &CMat) -> CMat {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max).max(1.0);
    a + CMat::identity(n, n) * C64::new(SOLVE_RIDGE * scale, 0.0)
}

/// Solves `A x = b` for Hermitian positive-definite `A`. Falls back to a
/// ridge-regularized factorization when `A` is numerically singular.
pub fn hermitian_solve(a: &CMat, b: &CVec) -> CVec {
    match a.clone().cholesky() {
        Some(ch) => ch.solve(b),
        None => {
            warn!("singular Hermitian system, solving with {SOLVE_RIDGE:e} ridge");
            match ridge(a).cholesky() {
                Some(ch) => ch.solve(b),
                None => a.clone().lu().solve(b).unwrap_or_else(|| CVec::zeros(b.len())),
            }
        }
    }
}

/// Inverse of a Hermitian positive-definite matrix with the same fallback
/// as [`hermitian_solve`].
pub fn hermitian_inverse(a: &CMat) -> CMat {
    match a.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            warn!("singular Hermitian matrix, inverting with {SOLVE_RIDGE:e} ridge");
            match ridge(a).cholesky() {
                Some(ch) => ch.inverse(),
                None => a
                    .clone()
                    .try_inverse()
                    .unwrap_or_else(|| CMat::zeros(a.nrows(), a.ncols())),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orth_basis_is_orthonormal_and_spans() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cols: Vec<CVec> = (0..4).map(|_| circular_normal(&mut rng, 8, 1.0)).collect();
        let q = orth_basis(&cols, 1e-10);
        assert_eq!(q.len(), 4);
        for i in 0..4 {
            for j in 0..4 {
                let d = inner(&q[i], &q[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
        for c in &cols {
            assert!(project_out(c, &q).norm() < 1e-12 * c.norm());
        }
    }

    #[test]
    fn orth_basis_drops_dependent_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = circular_normal(&mut rng, 6, 1.0);
        let b = circular_normal(&mut rng, 6, 1.0);
        let c = &a * C64::new(2.0, -1.0) + &b * C64::new(0.5, 0.0);
        assert_eq!(orth_basis(&[a, b, c], 1e-10).len(), 2);
        assert!(orth_basis(&[CVec::zeros(3)], 1e-10).is_empty());
    }

    #[test]
    fn solve_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = CMat::from_fn(5, 5, |_, _| circular_normal(&mut rng, 1, 1.0)[0]);
        let a = &x * x.adjoint() + CMat::identity(5, 5);
        let b = circular_normal(&mut rng, 5, 1.0);
        let sol = hermitian_solve(&a, &b);
        assert!((&a * &sol - &b).norm() < 1e-10);
        let inv = hermitian_inverse(&a);
        assert!((&a * inv - CMat::identity(5, 5)).norm() < 1e-10);
    }
}
