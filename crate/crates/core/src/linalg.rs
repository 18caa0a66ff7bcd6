//! Factorizations, Riccati and Lyapunov iterations, symmetric eigenvalues,
//! PSD ordering, rank-one inverse updates and Gaussian sampling.
//!
//! Every covariance-producing routine returns a re-symmetrized matrix.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{ln, sqrt};
use crate::matrix::{Matrix, Vector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

const SYMMETRY_TOL: f64 = 1e-10;

fn check_symmetric(m: &Matrix) -> Result<()> {
    let scale = m.max_abs().max(1.0);
    let asymmetry = m.max_asymmetry();
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Lower-triangular `L` with `L Lᵀ = m`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot drops to
/// `1e-12 · trace(m) / rows` or below.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    let n = m.check_square("cholesky")?;
    check_symmetric(m)?;
    let floor = 1e-12 * m.trace() / n as f64;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot.is_nan() || pivot <= floor || pivot <= 0.0 {
            return Err(Error::NotPositiveDefinite { row: j, pivot });
        }
        let d = sqrt(pivot);
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Cholesky-like factor of a positive *semi*definite matrix: columns whose
/// pivot falls below a relative floor are zeroed instead of rejected.
pub(crate) fn psd_factor(m: &Matrix) -> Matrix {
    let n = m.rows();
    let floor = 1e-12 * m.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot <= floor {
            continue;
        }
        let d = sqrt(pivot);
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    l
}

/// Solves `m x = b` for symmetric positive definite `m`.
pub fn spd_solve(m: &Matrix, b: &Vector) -> Result<Vector> {
    let l = cholesky(m)?;
    let n = l.rows();
    if b.len() != n {
        return Err(Error::dims("spd_solve rhs", n, b.len()));
    }
    // forward: L y = b
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    // backward: Lᵀ x = y
    let mut x = Vector::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// Inverse of a symmetric positive definite matrix via column solves.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let n = m.check_square("spd_inverse")?;
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let col = spd_solve(m, &Vector::basis(n, j, 1.0))?;
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv.symmetrize())
}

fn check_system(p: &Matrix, c: &Vector, gamma: &Matrix, q: &Matrix) -> Result<usize> {
    let d = gamma.check_square("state matrix")?;
    p.check_same_shape(gamma, "error covariance")?;
    q.check_same_shape(gamma, "process noise covariance")?;
    if c.len() != d {
        return Err(Error::dims("action vector", d, c.len()));
    }
    Ok(d)
}

/// One step of the filter Riccati map
/// `Γ P Γᵀ + Q − Γ P c (cᵀ P c + σ)⁻¹ cᵀ P Γᵀ`.
pub fn riccati_step(
    p: &Matrix,
    c: &Vector,
    gamma: &Matrix,
    q: &Matrix,
    noise_var: f64,
) -> Result<Matrix> {
    check_system(p, c, gamma, q)?;
    Ok(riccati_step_unchecked(p, c, gamma, q, noise_var))
}

pub(crate) fn riccati_step_unchecked(
    p: &Matrix,
    c: &Vector,
    gamma: &Matrix,
    q: &Matrix,
    noise_var: f64,
) -> Matrix {
    let pc = p.mul_vec(c);
    let innov = c.dot(&pc) + noise_var;
    let gpc = gamma.mul_vec(&pc);
    let mut out = &gamma.congruence(p) + q;
    let corr = gpc.outer(&gpc).scale(1.0 / innov);
    out = &out - &corr;
    out.symmetrize()
}

/// Fixed point of [`riccati_step`] by plain iteration from `P₀ = Q`.
///
/// Assumes `(Γ, Q^{1/2})` controllable and `(Γ, cᵀ)` detectable; neither is
/// checked, a violation shows up as [`Error::NoConvergence`].
pub fn steady_state_riccati(
    gamma: &Matrix,
    q: &Matrix,
    c: &Vector,
    noise_var: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Matrix> {
    check_system(q, c, gamma, q)?;
    let mut p = q.symmetrize();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = riccati_step_unchecked(&p, c, gamma, q, noise_var);
        residual = (&next - &p).max_abs();
        p = next;
        if residual <= tol {
            return Ok(p);
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Solves `X = Γᵀ X Γ + W` with the doubling iteration
/// `X ← X + Aᵀ X A`, `A ← A²` starting from `X = W`, `A = Γ`.
///
/// Converges iff `ρ(Γ) < 1`; otherwise the budget runs out (or the iterate
/// overflows) and [`Error::NoConvergence`] is returned.
pub fn solve_discrete_lyapunov(
    gamma: &Matrix,
    w: &Matrix,
    tol: f64,
    max_iter: usize,
) -> Result<Matrix> {
    gamma.check_square("lyapunov state matrix")?;
    w.check_same_shape(gamma, "lyapunov forcing")?;
    let mut x = w.symmetrize();
    let mut a = gamma.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let at = a.transpose();
        let incr = at.matmul(&x).matmul(&a);
        x = (&x + &incr).symmetrize();
        a = a.matmul(&a);
        if !x.is_finite() || !a.is_finite() {
            break;
        }
        // the increment shrinks doubly-exponentially once ρ(Γ)<1; confirm on
        // the actual equation before returning
        if incr.max_abs() <= tol * 1e-3 * x.max_abs().max(1.0) {
            let gt = gamma.transpose();
            let fixed = &gt.matmul(&x).matmul(gamma) + w;
            residual = (&x - &fixed).max_abs();
            if residual <= tol {
                return Ok(x);
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Stationary covariance `Z = Γ Z Γᵀ + Q`.
pub fn stationary_covariance(gamma: &Matrix, q: &Matrix) -> Result<Matrix> {
    solve_discrete_lyapunov(&gamma.transpose(), q, DEFAULT_TOL, 200)
}

/// `true` iff the Lyapunov series `Σ (Mᵏ)ᵀ Mᵏ` converges within budget,
/// i.e. every eigenvalue of `m` lies strictly inside the unit circle.
pub fn is_schur_stable(m: &Matrix, tol: f64, max_iter: usize) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.rows();
    solve_discrete_lyapunov(m, &Matrix::identity(n), tol, max_iter).is_ok()
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi
/// rotations until the off-diagonal norm is below `1e-12 · ‖m‖_F`.
pub fn sym_eigenvalues(m: &Matrix) -> Result<alloc::vec::Vec<f64>> {
    let n = m.check_square("symmetric eigenvalues")?;
    check_symmetric(m)?;
    let mut a = m.symmetrize();
    let frob = sqrt(a.as_slice().iter().map(|x| x * x).sum::<f64>());
    let target = 1e-12 * frob;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if sqrt(off) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: alloc::vec::Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

pub fn min_eig_sym(m: &Matrix) -> Result<f64> {
    Ok(sym_eigenvalues(m)?[0])
}

/// `a ⪰ b` in the PSD order, up to `tol`.
pub fn psd_geq(a: &Matrix, b: &Matrix, tol: f64) -> Result<bool> {
    a.check_same_shape(b, "psd_geq")?;
    Ok(min_eig_sym(&(a - b))? >= -tol)
}

/// Rank-one update of an inverse Gram matrix.
///
/// Given `V⁻¹` and `x`, returns `(V + x xᵀ)⁻¹` and `ln det(V + x xᵀ) − ln det V`.
pub fn sherman_morrison_update(v_inv: &Matrix, x: &Vector) -> (Matrix, f64) {
    let vx = v_inv.mul_vec(x);
    let denom = 1.0 + x.dot(&vx);
    let upd = vx.outer(&vx).scale(1.0 / denom);
    ((v_inv - &upd).symmetrize(), ln(denom))
}

/// Draws `mean + L u` with `L Lᵀ = cov` and `u` standard normal.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &Vector, cov: &Matrix, rng: &mut R) -> Vector {
    let l = psd_factor(cov);
    sample_with_factor(mean, &l, rng)
}

pub(crate) fn sample_with_factor<R: Rng + ?Sized>(
    mean: &Vector,
    factor: &Matrix,
    rng: &mut R,
) -> Vector {
    let n = mean.len();
    let mut u = Vector::zeros(n);
    for i in 0..n {
        u[i] = rng.sample(StandardNormal);
    }
    let mut out = mean.clone();
    for i in 0..n {
        let row = factor.row(i);
        out[i] += crate::matrix::dot(&row[..=i], &u.as_slice()[..=i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        assert_eq!(cholesky(&Matrix::scalar(4.0)).unwrap(), Matrix::scalar(2.0));
        let l = cholesky(&m(&[&[4.0, 2.0], &[2.0, 5.0]])).unwrap();
        assert_eq!(l, m(&[&[2.0, 0.0], &[1.0, 2.0]]));
    }

    #[test]
    fn cholesky_rejects_indefinite_and_asymmetric() {
        assert!(matches!(
            cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
        assert!(matches!(
            cholesky(&m(&[&[1.0, 0.5], &[0.0, 1.0]])),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn spd_solve_examples() {
        let x = spd_solve(&Matrix::identity(2), &Vector::from_slice(&[3.0, 4.0])).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 4.0]);
        let x = spd_solve(&Matrix::scalar(2.0), &Vector::from_slice(&[6.0])).unwrap();
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-14);
        let x = spd_solve(
            &m(&[&[4.0, 2.0], &[2.0, 5.0]]),
            &Vector::from_slice(&[10.0, 11.0]),
        )
        .unwrap();
        // 4x + 2y = 10, 2x + 5y = 11
        assert_abs_diff_eq!(x[0], 1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn riccati_step_examples() {
        let p = m(&[&[2.0, 0.3], &[0.3, 1.0]]);
        let q = m(&[&[1.0, 0.1], &[0.1, 0.5]]);
        let c = Vector::from_slice(&[1.0, -1.0]);
        let zero = Matrix::zeros(2, 2);
        assert_eq!(riccati_step(&p, &c, &zero, &q, 1.0).unwrap(), q);

        let gamma = m(&[&[0.5, 0.2], &[0.0, 0.7]]);
        let got = riccati_step(&p, &Vector::zeros(2), &gamma, &q, 1.0).unwrap();
        let want = &gamma.congruence(&p) + &q;
        assert_abs_diff_eq!((&got - &want).max_abs(), 0.0, epsilon = 1e-15);

        let s = riccati_step(
            &Matrix::scalar(1.0),
            &Vector::from_slice(&[1.0]),
            &Matrix::scalar(0.5),
            &Matrix::scalar(1.0),
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 1.125, epsilon = 1e-15);
    }

    #[test]
    fn riccati_step_dimension_mismatch() {
        let err = riccati_step(
            &Matrix::identity(2),
            &Vector::zeros(3),
            &Matrix::identity(2),
            &Matrix::identity(2),
            1.0,
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn steady_state_examples() {
        let q = m(&[&[1.0, 0.2], &[0.2, 2.0]]);
        let p = steady_state_riccati(
            &Matrix::zeros(2, 2),
            &q,
            &Vector::from_slice(&[1.0, 0.0]),
            1.0,
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        assert_eq!(p, q);

        // P² − 0.25 P − 1 = 0
        let root = (0.25 + sqrt(0.0625 + 4.0)) / 2.0;
        let p = steady_state_riccati(
            &Matrix::scalar(0.5),
            &Matrix::scalar(1.0),
            &Vector::from_slice(&[1.0]),
            1.0,
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        assert_abs_diff_eq!(p[(0, 0)], root, epsilon = 1e-9);
        assert_abs_diff_eq!(p[(0, 0)], 1.1327823, epsilon = 1e-7);

        let p = steady_state_riccati(
            &Matrix::scalar(0.9),
            &Matrix::scalar(1.0),
            &Vector::zeros(1),
            1.0,
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0 / (1.0 - 0.81), epsilon = 1e-8);
    }

    #[test]
    fn steady_state_reports_divergence() {
        let err = steady_state_riccati(
            &Matrix::scalar(1.2),
            &Matrix::scalar(1.0),
            &Vector::zeros(1),
            1.0,
            DEFAULT_TOL,
            500,
        );
        assert!(matches!(err, Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn lyapunov_examples() {
        let w = m(&[&[1.0, 0.5], &[0.5, 2.0]]);
        assert_eq!(
            solve_discrete_lyapunov(&Matrix::zeros(2, 2), &w, DEFAULT_TOL, 100).unwrap(),
            w
        );
        let x =
            solve_discrete_lyapunov(&Matrix::scalar(0.5), &Matrix::scalar(1.0), DEFAULT_TOL, 100)
                .unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
        assert!(matches!(
            solve_discrete_lyapunov(&Matrix::scalar(1.0), &Matrix::scalar(1.0), DEFAULT_TOL, 100),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn schur_stability_examples() {
        assert!(is_schur_stable(&Matrix::zeros(3, 3), DEFAULT_TOL, 100));
        assert!(!is_schur_stable(&Matrix::identity(3), DEFAULT_TOL, 100));
        assert!(is_schur_stable(
            &Matrix::diag(&[0.9, 0.9]),
            DEFAULT_TOL,
            100
        ));
        // rotation scaled by 0.99: complex pair of modulus 0.99
        let r = m(&[&[0.0, 0.99], &[-0.99, 0.0]]);
        assert!(is_schur_stable(&r, DEFAULT_TOL, 100));
        assert!(!is_schur_stable(&r.scale(1.02), DEFAULT_TOL, 100));
    }

    #[test]
    fn eigen_examples() {
        assert_eq!(min_eig_sym(&Matrix::identity(4)).unwrap(), 1.0);
        assert_eq!(min_eig_sym(&Matrix::diag(&[3.0, 0.5])).unwrap(), 0.5);
        let e = sym_eigenvalues(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert_abs_diff_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 3.0, epsilon = 1e-12);
        assert!(matches!(
            min_eig_sym(&m(&[&[1.0, 2.0], &[0.0, 1.0]])),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn psd_order_examples() {
        let i = Matrix::identity(2);
        let z = Matrix::zeros(2, 2);
        assert!(psd_geq(&i, &z, 1e-9).unwrap());
        assert!(!psd_geq(&z, &i, 1e-9).unwrap());
        assert!(!psd_geq(&Matrix::diag(&[2.0, 1.0]), &Matrix::diag(&[1.0, 2.0]), 1e-9).unwrap());
        assert!(psd_geq(&i, &Matrix::identity(3), 1e-9).is_err());
    }

    #[test]
    fn sherman_morrison_examples() {
        let (inv, dl) = sherman_morrison_update(&Matrix::scalar(1.0), &Vector::from_slice(&[1.0]));
        assert_abs_diff_eq!(inv[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(dl, core::f64::consts::LN_2, epsilon = 1e-15);

        let v = m(&[&[0.7, 0.1], &[0.1, 0.3]]);
        let (inv, dl) = sherman_morrison_update(&v, &Vector::zeros(2));
        assert_eq!(inv, v);
        assert_eq!(dl, 0.0);

        let (inv, dl) =
            sherman_morrison_update(&Matrix::identity(2), &Vector::from_slice(&[1.0, 1.0]));
        let want = m(&[&[2.0 / 3.0, -1.0 / 3.0], &[-1.0 / 3.0, 2.0 / 3.0]]);
        assert_abs_diff_eq!((&inv - &want).max_abs(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dl, ln(3.0), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_sampling() {
        let mean = Vector::from_slice(&[1.0, -2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_gaussian(&mean, &Matrix::zeros(2, 2), &mut rng), mean);

        let cov = m(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let a = sample_gaussian(&mean, &cov, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_gaussian(&mean, &cov, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let draws: vec::Vec<f64> = (0..n)
            .map(|_| sample_gaussian(&Vector::zeros(1), &Matrix::scalar(1.0), &mut rng)[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }
}
