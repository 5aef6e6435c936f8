//! Sparse complex matrices and the solvers the propagator needs: CSR with
//! exact Hermiticity checks, a Thomas solve for tridiagonal systems, BiCGSTAB
//! for everything else, and Sturm bisection for the low eigenvalues of real
//! symmetric tridiagonal operators.

use crate::{Complex, Scalar};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("iterative solver did not converge: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },
    #[error("tridiagonal solve hit a zero pivot at row {row}")]
    ZeroPivot { row: usize },
    #[error("dimension mismatch: matrix is {n}, vector is {len}")]
    DimensionMismatch { n: usize, len: usize },
}

/// Compressed sparse row complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex<T>>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Build from (row, col, value) triplets; duplicates are summed in
    /// (row, col) order so assembly is deterministic.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, Complex<T>)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<Complex<T>> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                let k = vals.len() - 1;
                vals[k] += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[Complex<T>]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => Complex::new(T::zero(), T::zero()),
        }
    }

    pub fn matvec_into(&self, x: &[Complex<T>], y: &mut [Complex<T>]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            let mut acc = Complex::new(T::zero(), T::zero());
            for (c, v) in cols.iter().zip(vals) {
                acc += *v * x[*c];
            }
            y[r] = acc;
        }
    }

    pub fn matvec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut y = vec![Complex::new(T::zero(), T::zero()); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `max_{ij} |a_ij − conj(a_ji)|`; zero means exactly Hermitian.
    pub fn hermiticity_defect(&self) -> T {
        let mut defect = T::zero();
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let mirror = self.get(*c, r);
                let d = (*v - mirror.conj()).norm();
                defect = defect.max(d);
            }
        }
        defect
    }

    /// Maximum |row − col| over structural nonzeros.
    pub fn bandwidth(&self) -> usize {
        let mut band = 0usize;
        for r in 0..self.n {
            let (cols, _) = self.row(r);
            for c in cols {
                band = band.max(r.abs_diff(*c));
            }
        }
        band
    }

    pub fn is_tridiagonal(&self) -> bool {
        self.bandwidth() <= 1
    }

    /// Extract (sub, diag, super) diagonals. Entries outside the band are the
    /// caller's responsibility to rule out first.
    #[allow(clippy::type_complexity)]
    pub fn to_tridiagonal(&self) -> (Vec<Complex<T>>, Vec<Complex<T>>, Vec<Complex<T>>) {
        let zero = Complex::new(T::zero(), T::zero());
        let mut sub = vec![zero; self.n];
        let mut diag = vec![zero; self.n];
        let mut sup = vec![zero; self.n];
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if *c == r {
                    diag[r] = *v;
                } else if *c + 1 == r {
                    sub[r] = *v;
                } else if *c == r + 1 {
                    sup[r] = *v;
                }
            }
        }
        (sub, diag, sup)
    }

    /// Real part of `⟨x|A|x⟩` under the plain dot product.
    pub fn expectation(&self, x: &[Complex<T>]) -> T {
        let y = self.matvec(x);
        let mut acc = T::zero();
        for (xi, yi) in x.iter().zip(&y) {
            acc += (xi.conj() * *yi).re;
        }
        acc
    }
}

/// Thomas algorithm for a tridiagonal system; `sub[0]` and `sup[n-1]` unused.
pub fn solve_tridiagonal<T: Scalar>(
    sub: &[Complex<T>],
    diag: &[Complex<T>],
    sup: &[Complex<T>],
    rhs: &[Complex<T>],
) -> Result<Vec<Complex<T>>, LinalgError> {
    let n = diag.len();
    let mut c_star = vec![Complex::new(T::zero(), T::zero()); n];
    let mut d_star = vec![Complex::new(T::zero(), T::zero()); n];
    let tiny = T::lit(1e-300);
    if diag[0].norm() < tiny {
        return Err(LinalgError::ZeroPivot { row: 0 });
    }
    c_star[0] = sup[0] / diag[0];
    d_star[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c_star[i - 1];
        if m.norm() < tiny {
            return Err(LinalgError::ZeroPivot { row: i });
        }
        if i + 1 < n {
            c_star[i] = sup[i] / m;
        }
        d_star[i] = (rhs[i] - sub[i] * d_star[i - 1]) / m;
    }
    let mut x = d_star;
    for i in (0..n - 1).rev() {
        let correction = c_star[i] * x[i + 1];
        x[i] -= correction;
    }
    Ok(x)
}

fn dot<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * *y;
    }
    acc
}

fn norm2<T: Scalar>(a: &[Complex<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

/// Unpreconditioned BiCGSTAB. CN matrices are `I + (small)` so this converges
/// in a handful of iterations; restarts on breakdown.
pub fn bicgstab<T: Scalar>(
    a: &CsrMatrix<T>,
    rhs: &[Complex<T>],
    x0: &[Complex<T>],
    rtol: T,
    max_iter: usize,
) -> Result<Vec<Complex<T>>, LinalgError> {
    let n = a.n();
    if rhs.len() != n {
        return Err(LinalgError::DimensionMismatch { n, len: rhs.len() });
    }
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());
    let bnorm = norm2(rhs).max(T::lit(1e-300));
    let target = rtol * bnorm;

    let mut x = x0.to_vec();
    let mut r = {
        let ax = a.matvec(&x);
        rhs.iter()
            .zip(&ax)
            .map(|(b, v)| *b - *v)
            .collect::<Vec<_>>()
    };
    if norm2(&r) <= target {
        return Ok(x);
    }
    let mut r_hat = r.clone();
    let mut rho = one;
    let mut alpha = one;
    let mut omega = one;
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    let mut last_residual = norm2(&r);

    for iter in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.norm() < T::lit(1e-290) {
            // breakdown: restart with the current residual
            r_hat = r.clone();
            rho = one;
            alpha = one;
            omega = one;
            v.iter_mut().for_each(|z| *z = zero);
            p.iter_mut().for_each(|z| *z = zero);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = a.matvec(&p);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<Complex<T>> = r.iter().zip(&v).map(|(ri, vi)| *ri - alpha * *vi).collect();
        if norm2(&s) <= target {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Ok(x);
        }
        let t = a.matvec(&s);
        let tt = dot(&t, &t);
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        last_residual = norm2(&r);
        if last_residual <= target {
            return Ok(x);
        }
        let _ = iter;
    }
    Err(LinalgError::NoConvergence {
        residual: (last_residual / bnorm).to_f64().unwrap_or(f64::NAN),
        iters: max_iter,
    })
}

/// Lowest `count` eigenvalues of the real symmetric tridiagonal matrix with
/// diagonal `d` and off-diagonal `e` (`e[i]` couples rows i and i+1), by
/// Sturm-sequence bisection.
pub fn lowest_eigenvalues_tridiagonal<T: Scalar>(d: &[T], e: &[T], count: usize) -> Vec<T> {
    let n = d.len();
    assert!(count >= 1 && count <= n);
    // Gershgorin bounds
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for i in 0..n {
        let left = if i > 0 { e[i - 1].abs() } else { T::zero() };
        let right = if i + 1 < n { e[i].abs() } else { T::zero() };
        lo = lo.min(d[i] - left - right);
        hi = hi.max(d[i] + left + right);
    }
    let count_below = |x: T| -> usize {
        // number of eigenvalues strictly below x via the Sturm sequence
        let mut cnt = 0usize;
        let mut q = d[0] - x;
        if q < T::zero() {
            cnt += 1;
        }
        let safe = T::lit(1e-300);
        for i in 1..n {
            let denom = if q.abs() < safe {
                if q >= T::zero() {
                    safe
                } else {
                    -safe
                }
            } else {
                q
            };
            q = d[i] - x - e[i - 1] * e[i - 1] / denom;
            if q < T::zero() {
                cnt += 1;
            }
        }
        cnt
    };
    (0..count)
        .map(|k| {
            let mut a = lo;
            let mut b = hi;
            for _ in 0..200 {
                let mid = (a + b) * T::lit(0.5);
                if mid <= a || mid >= b {
                    break;
                }
                if count_below(mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            (a + b) * T::lit(0.5)
        })
        .collect()
}
