//! The unbiased hidden-variable law `P(λ)`.
//!
//! Three kinds are supported: the binary `±ħ` law, a symmetric log-normal
//! whose magnitude has its median at `ħ`, and an explicit magnitude table.
//! Unbiasedness `P(λ) = P(−λ)` is enforced structurally: only `|λ|` is ever
//! parameterized and the sign is an independent fair coin, so odd moments
//! vanish by pairing rather than by numerical accident.

use crate::rng::Rng;
use crate::Scalar;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionKind<T> {
    /// `λ = ±ħ` with probability ½ each.
    Binary,
    /// `log|λ| ~ Normal(log ħ, σ²)`, sign a fair coin.
    SymmetricLogNormal { sigma: T },
    /// Explicit `(|λ|, weight)` rows, mirrored in sign.
    Table { rows: Vec<(T, T)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaDistribution<T> {
    kind: DistributionKind<T>,
    hbar: T,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HiddenError {
    #[error("hbar must be positive, got {0}")]
    NonPositiveHbar(f64),
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("table row {row}: |lambda| must be strictly positive, got {value}")]
    NonPositiveMagnitude { row: usize, value: f64 },
    #[error("table row {row}: weight must be strictly positive, got {value}")]
    NonPositiveWeight { row: usize, value: f64 },
    #[error("table is empty")]
    EmptyTable,
    #[error("need at least 1 quadrature node")]
    ZeroNodes,
}

impl<T: Scalar> LambdaDistribution<T> {
    pub fn binary(hbar: T) -> Result<Self, HiddenError> {
        check_hbar(hbar)?;
        Ok(LambdaDistribution {
            kind: DistributionKind::Binary,
            hbar,
        })
    }

    pub fn lognormal(hbar: T, sigma: T) -> Result<Self, HiddenError> {
        check_hbar(hbar)?;
        if sigma <= T::zero() {
            return Err(HiddenError::NonPositiveSigma(
                sigma.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(LambdaDistribution {
            kind: DistributionKind::SymmetricLogNormal { sigma },
            hbar,
        })
    }

    /// Table of `(|λ|, weight)` rows; weights are normalized to sum to one.
    pub fn table(hbar: T, rows: Vec<(T, T)>) -> Result<Self, HiddenError> {
        check_hbar(hbar)?;
        if rows.is_empty() {
            return Err(HiddenError::EmptyTable);
        }
        let mut total = T::zero();
        for (i, &(mag, w)) in rows.iter().enumerate() {
            if mag <= T::zero() {
                return Err(HiddenError::NonPositiveMagnitude {
                    row: i,
                    value: mag.to_f64().unwrap_or(f64::NAN),
                });
            }
            if w <= T::zero() {
                return Err(HiddenError::NonPositiveWeight {
                    row: i,
                    value: w.to_f64().unwrap_or(f64::NAN),
                });
            }
            total += w;
        }
        let mut rows: Vec<(T, T)> = rows.into_iter().map(|(m, w)| (m, w / total)).collect();
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(LambdaDistribution {
            kind: DistributionKind::Table { rows },
            hbar,
        })
    }

    pub fn hbar(&self) -> T {
        self.hbar
    }

    pub fn kind(&self) -> &DistributionKind<T> {
        &self.kind
    }

    /// Signed quadrature nodes `(λ_k, w_k)` in ascending λ. Nodes come in
    /// `±|λ|` pairs with equal weights and `Σ w_k = 1`; `n` requests the
    /// number of magnitude nodes for the log-normal and is ignored otherwise.
    pub fn quadrature_nodes(&self, n: usize) -> Result<Vec<(T, T)>, HiddenError> {
        if n == 0 {
            return Err(HiddenError::ZeroNodes);
        }
        let magnitudes: Vec<(T, T)> = match &self.kind {
            DistributionKind::Binary => vec![(self.hbar, T::one())],
            DistributionKind::Table { rows } => rows.clone(),
            DistributionKind::SymmetricLogNormal { sigma } => {
                // Gauss-Legendre in y = log|λ| about log ħ, weighted by the
                // normal density and renormalized. The window is ±8σ: at ±6σ
                // the λ²-weighted tail alone is ~2e-8 and would dominate the
                // second-moment accuracy.
                let (pts, wts) = gauss_legendre::<T>(n);
                let center = self.hbar.ln();
                let half_width = T::lit(8.0) * *sigma;
                let norm = T::one() / (*sigma * (T::lit(2.0) * T::PI()).sqrt());
                let mut rows: Vec<(T, T)> = pts
                    .iter()
                    .zip(&wts)
                    .map(|(&x, &w)| {
                        let y = center + half_width * x;
                        let z = (y - center) / *sigma;
                        let pdf = norm * (-z * z / T::lit(2.0)).exp();
                        (y.exp(), w * half_width * pdf)
                    })
                    .collect();
                let total: T = rows.iter().map(|&(_, w)| w).sum();
                for r in &mut rows {
                    r.1 /= total;
                }
                rows
            }
        };
        let half = T::lit(0.5);
        let mut nodes: Vec<(T, T)> = Vec::with_capacity(2 * magnitudes.len());
        for &(m, w) in magnitudes.iter().rev() {
            nodes.push((-m, w * half));
        }
        for &(m, w) in &magnitudes {
            nodes.push((m, w * half));
        }
        Ok(nodes)
    }

    /// Magnitude nodes `(|λ|_k, w_k)` with `Σ w_k = 1` (the sign pair merged),
    /// ascending in `|λ|`. This is what |λ|-only dynamics consumes.
    pub fn magnitude_nodes(&self, n: usize) -> Result<Vec<(T, T)>, HiddenError> {
        let signed = self.quadrature_nodes(n)?;
        let half = signed.len() / 2;
        Ok(signed[half..].iter().map(|&(l, w)| (l, w + w)).collect())
    }

    /// Quadrature `E[|λ|]`.
    pub fn mean_abs(&self, n: usize) -> Result<T, HiddenError> {
        Ok(self.magnitude_nodes(n)?.iter().map(|&(l, w)| l * w).sum())
    }

    /// Quadrature `E[λ²]`.
    pub fn mean_sq(&self, n: usize) -> Result<T, HiddenError> {
        Ok(self
            .magnitude_nodes(n)?
            .iter()
            .map(|&(l, w)| l * l * w)
            .sum())
    }

    /// Draw `count` signed samples; deterministic for a fixed seed.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<T> {
        let mut rng = Rng::new(seed);
        (0..count).map(|_| self.sample_one(&mut rng)).collect()
    }

    pub fn sample_one(&self, rng: &mut Rng) -> T {
        let sign = T::lit(rng.sign());
        let mag = match &self.kind {
            DistributionKind::Binary => self.hbar,
            DistributionKind::SymmetricLogNormal { sigma } => {
                let z = T::lit(rng.normal());
                self.hbar * (*sigma * z).exp()
            }
            DistributionKind::Table { rows } => {
                let u = T::lit(rng.uniform());
                let mut acc = T::zero();
                let mut chosen = rows[rows.len() - 1].0;
                for &(m, w) in rows {
                    acc += w;
                    if u < acc {
                        chosen = m;
                        break;
                    }
                }
                chosen
            }
        };
        sign * mag
    }
}

fn check_hbar<T: Scalar>(hbar: T) -> Result<(), HiddenError> {
    if hbar <= T::zero() {
        Err(HiddenError::NonPositiveHbar(
            hbar.to_f64().unwrap_or(f64::NAN),
        ))
    } else {
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] via Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre<T: Scalar>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1);
    let mut x = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess
        let guess = (T::PI() * (T::from_usize(i).unwrap() + T::lit(0.75))
            / (T::from_usize(n).unwrap() + T::lit(0.5)))
        .cos();
        let mut z = guess;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() <= T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        let weight = T::lit(2.0) / ((T::one() - z * z) * dp * dp);
        x[i] = -z;
        w[i] = weight;
        x[n - 1 - i] = z;
        w[n - 1 - i] = weight;
    }
    (x, w)
}

fn legendre_with_derivative<T: Scalar>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    if n == 0 {
        return (p0, T::zero());
    }
    for k in 2..=n {
        let kf = T::from_usize(k).unwrap();
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = T::from_usize(n).unwrap() * (x * p1 - p0) / (x * x - T::one());
    (p1, dp)
}
