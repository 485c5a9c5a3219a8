//! Small dense and tridiagonal symmetric eigenvalue routines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 60;

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (`e[i]` couples `i` and `i + 1`), by implicit QL with
/// Wilkinson shifts. Returns them sorted ascending.
pub fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let mut d = d.to_vec();
    let mut e = padded_offdiag(d.len(), e)?;
    ql_implicit(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Eigenvalues and first eigenvector components (as used by Golub-Welsch).
pub fn tridiagonal_eigen_first_row(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    let mut d = d.to_vec();
    let mut e = padded_offdiag(n, e)?;
    let mut z = vec![0.0; n];
    if n > 0 {
        z[0] = 1.0;
    }
    ql_implicit(&mut d, &mut e, Some(&mut z))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok((idx.iter().map(|&i| d[i]).collect(), idx.iter().map(|&i| z[i]).collect()))
}

/// Number of eigenvalues strictly below `x` of the symmetric tridiagonal
/// matrix `(d, e)`, from the signs of the `LDL^T` pivots of `T - x` (Sturm count).
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let coupling = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] / q };
        q = d[i] - x - coupling;
        if q == 0.0 {
            // Perturb a vanishing pivot; it cannot change the count of a strict inequality
            // except on a measure-zero set of `x`.
            q = -f64::EPSILON * (d[i].abs() + x.abs() + f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn padded_offdiag(n: usize, e: &[f64]) -> Result<Vec<f64>> {
    if n > 0 && e.len() + 1 != n {
        return Err(Error::InvalidInput(format!(
            "tridiagonal of size {n} needs {} off-diagonal entries, got {}",
            n - 1,
            e.len()
        )));
    }
    let mut out = e.to_vec();
    out.push(0.0);
    Ok(out)
}

/// `sqrt(a^2 + b^2)`; `hypot` only when the squares leave the normal range.
#[inline]
fn pythag(a: f64, b: f64) -> f64 {
    let s = a * a + b * b;
    if s.is_finite() && s >= f64::MIN_POSITIVE {
        s.sqrt()
    } else {
        a.hypot(b)
    }
}

fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_SWEEPS {
                return Err(Error::Eigen(format!(
                    "implicit QL did not converge for eigenvalue {l} after {MAX_SWEEPS} sweeps"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = pythag(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = pythag(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    let f = z[i + 1];
                    z[i + 1] = s * z[i] + c * f;
                    z[i] = c * z[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigenvalues of a dense symmetric matrix (only the lower triangle is read),
/// via Householder reduction to tridiagonal form followed by implicit QL.
pub fn symmetric_eigenvalues(a: DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entry".into()));
    }
    let (d, e) = householder_tridiagonal(a);
    tridiagonal_eigenvalues(&d, &e)
}

/// Householder tridiagonalization working on the lower triangle, storing the
/// matrix column-major so that each reflector update streams over columns.
fn householder_tridiagonal(mut a: DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut v = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(n);
    for k in 0..n.saturating_sub(2) {
        // Reflector annihilating a[k+2.., k].
        let col = a.column(k);
        let alpha_sq: f64 = col.rows(k + 1, n - k - 1).iter().map(|x| x * x).sum();
        let x0 = col[k + 1];
        d[k] = col[k];
        if alpha_sq - x0 * x0 <= f64::MIN_POSITIVE {
            e[k] = x0;
            continue;
        }
        let alpha = -alpha_sq.sqrt().copysign(x0);
        e[k] = alpha;
        let m = n - k - 1;
        // v = x - alpha e1, H = I - tau v v^T with tau = 2 / |v|^2.
        for i in 0..m {
            v[i] = col[k + 1 + i];
        }
        v[0] -= alpha;
        let vnorm_sq = alpha_sq - x0 * x0 + v[0] * v[0];
        let tau = 2.0 / vnorm_sq;
        // p = tau * A v (A is the trailing block, symmetric, lower triangle stored).
        for i in 0..m {
            w[i] = 0.0;
        }
        for j in 0..m {
            let cj = a.column(k + 1 + j);
            let vj = v[j];
            let mut acc = cj[k + 1 + j] * vj;
            for i in (j + 1)..m {
                let aij = cj[k + 1 + i];
                w[i] += aij * vj;
                acc += aij * v[i];
            }
            w[j] += acc;
        }
        let mut vw = 0.0;
        for i in 0..m {
            w[i] *= tau;
            vw += v[i] * w[i];
        }
        // q = p - (tau/2)(v.p) v ; A <- A - v q^T - q v^T
        let half = 0.5 * tau * vw;
        for i in 0..m {
            w[i] -= half * v[i];
        }
        for j in 0..m {
            let (vj, wj) = (v[j], w[j]);
            let mut cj = a.column_mut(k + 1 + j);
            for i in j..m {
                cj[k + 1 + i] -= v[i] * wj + w[i] * vj;
            }
        }
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2, n - 2)];
        e[n - 2] = a[(n - 1, n - 2)];
    }
    d[n - 1] = a[(n - 1, n - 1)];
    (d, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tridiagonal_toeplitz_spectrum() {
        // Eigenvalues of tridiag(1, 0, 1) are 2 cos(k pi / (n + 1)).
        let n = 50;
        let ev = tridiagonal_eigenvalues(&vec![0.0; n], &vec![1.0; n - 1]).unwrap();
        let mut want: Vec<f64> =
            (1..=n).map(|k| 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos()).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sturm_count_matches_eigenvalues() {
        let d = [0.3, -1.1, 0.8, 0.0, 2.0, -0.4];
        let e = [0.5, 0.9, -0.2, 1.3, 0.7];
        let ev = tridiagonal_eigenvalues(&d, &e).unwrap();
        for x in [-3.0, -1.0, -0.2, 0.0, 0.45, 1.0, 2.5, 4.0] {
            let want = ev.iter().filter(|l| **l < x).count();
            assert_eq!(sturm_count(&d, &e, x), want, "x = {x}");
        }
        assert_eq!(sturm_count(&[], &[], 0.0), 0);
    }

    #[test]
    fn first_row_weights_sum_to_one() {
        let n = 20;
        let (_, z) = tridiagonal_eigen_first_row(&vec![0.3; n], &vec![0.7; n - 1]).unwrap();
        let s: f64 = z.iter().map(|x| x * x).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edge_sizes() {
        assert!(symmetric_eigenvalues(DMatrix::zeros(0, 0)).unwrap().is_empty());
        assert_eq!(symmetric_eigenvalues(DMatrix::from_element(1, 1, 3.0)).unwrap(), vec![3.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let ev = symmetric_eigenvalues(m).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        assert!(tridiagonal_eigenvalues(&[1.0, 2.0], &[]).is_err());
    }

    proptest! {
        #[test]
        fn dense_matches_nalgebra(seed in 0u64..1000, n in 1usize..40) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut m = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    m[(i, j)] = x;
                    m[(j, i)] = x;
                }
            }
            let mut want: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
            want.sort_by(f64::total_cmp);
            let got = symmetric_eigenvalues(m).unwrap();
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() < 1e-11);
            }
        }
    }
}
