//! Residual checks of the coupled amplitude/phase equations.
//!
//! A propagated branch must satisfy, up to discretization error, the pair of
//! equations the wave equation was assembled from:
//!
//! * the phase equation with its `λ²` amplitude-curvature correction
//!   `∂_t S + ½g^ij(∂_iS − A_i)(∂_jS − A_j) + V
//!    − (λ²/2)(g^ij ∂_i∂_jR/R + ∂_ig^ij ∂_jR/R) = 0`,
//! * the symmetrized continuity equation
//!   `∂_t Ω + ∂_i(g^ij(∂_jS − A_j)Ω) = 0` with `Ω = |Ψ|²`,
//!
//! plus the algebraic amplitude identity
//! `¼ ∂_iΩ∂_jΩ/Ω² = ½ ∂_i∂_jΩ/Ω − ∂_i∂_jR/R`, which holds for any smooth
//! positive field. All derivatives use the shared second-order stencils, so
//! every residual converges at O(Δx², Δt²) on smooth solutions; failures stay
//! localized and are reported with their grid index.

use crate::dynamics::{ClassicalSystem, DynamicsError};
use crate::fields::{
    gradient, second_derivative, to_polar, ComplexField, FieldError, ScalarField, NODE_FLOOR_REL,
};
use crate::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("field must be strictly positive (node {node} has {value})")]
    NonPositive { node: usize, value: f64 },
    #[error("snapshots live on different grids")]
    GridMismatch,
    #[error("snapshots must be at distinct times (Δt = {dt})")]
    ZeroTimeStep { dt: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Residual values, the node-neighborhood mask, and the amplitude field the
/// residual was extracted from.
///
/// The truncation error of the curvature terms scales with the log-derivative
/// of the amplitude, so in the far tails (`R → 0`) a second-order residual is
/// meaningless even where the node mask passes. `max_abs` therefore takes an
/// explicit relative amplitude floor: the reported maximum runs over nodes
/// with `R ≥ floor_rel · max R`.
#[derive(Debug, Clone)]
pub struct ResidualField<T> {
    pub values: ScalarField<T>,
    pub mask: Vec<bool>,
    pub amplitude: ScalarField<T>,
}

impl<T: Scalar> ResidualField<T> {
    /// Largest |residual| over masked-in nodes at least `margin` nodes from
    /// any box boundary with amplitude at least `floor_rel · max`.
    pub fn max_abs(&self, margin: usize, floor_rel: T) -> T {
        self.worst_node(margin, floor_rel)
            .map(|(_, v)| v)
            .unwrap_or_else(T::zero)
    }

    /// Node of the largest masked residual, with its value.
    pub fn worst_node(&self, margin: usize, floor_rel: T) -> Option<(usize, T)> {
        let grid = self.values.grid();
        let floor = self.amplitude.max_abs() * floor_rel;
        let mut worst: Option<(usize, T)> = None;
        for (flat, &v) in self.values.data().iter().enumerate() {
            if self.mask[flat]
                && !grid.near_boundary(flat, margin)
                && self.amplitude.data()[flat] >= floor
            {
                let a = v.abs();
                if worst.map(|(_, w)| a > w).unwrap_or(true) {
                    worst = Some((flat, a));
                }
            }
        }
        worst
    }
}

/// Residuals of the amplitude identity per index pair `(i ≤ j)`.
pub struct IdentityResidual<T> {
    pub per_pair: Vec<(usize, usize, ScalarField<T>)>,
    pub omega: ScalarField<T>,
}

impl<T: Scalar> IdentityResidual<T> {
    /// Largest |residual| over all pairs, `margin` nodes inside the walls and
    /// restricted to `Ω ≥ floor_rel · max Ω`.
    pub fn max_abs(&self, margin: usize, floor_rel: T) -> T {
        let floor = self.omega.max_abs() * floor_rel;
        let mut max = T::zero();
        for (_, _, field) in &self.per_pair {
            let grid = field.grid();
            for (flat, &v) in field.data().iter().enumerate() {
                if !grid.near_boundary(flat, margin) && self.omega.data()[flat] >= floor {
                    max = max.max(v.abs());
                }
            }
        }
        max
    }
}

/// Check `¼ ∂_iΩ∂_jΩ/Ω² − ½ ∂_i∂_jΩ/Ω + ∂_i∂_jR/R` with `R = √Ω` for every
/// index pair. Exact analytically; the numerical residual is pure stencil
/// truncation and must vanish at O(Δx²).
pub fn identity_check<T: Scalar>(
    omega: &ScalarField<T>,
) -> Result<IdentityResidual<T>, VerifyError> {
    if let Some((node, &value)) = omega
        .data()
        .iter()
        .enumerate()
        .find(|(_, &v)| v <= T::zero())
    {
        return Err(VerifyError::NonPositive {
            node,
            value: value.to_f64().unwrap_or(f64::NAN),
        });
    }
    let grid = omega.grid().clone();
    let dim = grid.dim();
    let r = omega.map(|v| v.sqrt());
    let domega: Vec<ScalarField<T>> = (0..dim)
        .map(|a| gradient(omega, a))
        .collect::<Result<_, _>>()?;
    let mut per_pair = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            let d2_omega = if i == j {
                second_derivative(omega, i)?
            } else {
                gradient(&gradient(omega, i)?, j)?
            };
            let d2_r = if i == j {
                second_derivative(&r, i)?
            } else {
                gradient(&gradient(&r, i)?, j)?
            };
            let mut res = vec![T::zero(); grid.len()];
            for flat in 0..grid.len() {
                let om = omega.data()[flat];
                let lhs =
                    T::lit(0.25) * domega[i].data()[flat] * domega[j].data()[flat] / (om * om);
                let rhs =
                    T::lit(0.5) * d2_omega.data()[flat] / om - d2_r.data()[flat] / r.data()[flat];
                res[flat] = lhs - rhs;
            }
            per_pair.push((i, j, ScalarField::from_data(grid.clone(), res)));
        }
    }
    Ok(IdentityResidual {
        per_pair,
        omega: omega.clone(),
    })
}

/// Polar data of one snapshot with the inter-snapshot alignment applied.
struct AlignedPair<T> {
    r_a: ScalarField<T>,
    r_b: ScalarField<T>,
    s_a: ScalarField<T>,
    s_b: ScalarField<T>,
    mask: Vec<bool>,
}

/// Decompose both snapshots and remove the 2π|λ| branch ambiguity between
/// them by anchoring at the largest-amplitude node. The returned mask keeps
/// nodes whose amplitude clears the node floor in both snapshots, dilated by
/// the stencil radius.
fn aligned_polar<T: Scalar>(
    psi_a: &ComplexField<T>,
    psi_b: &ComplexField<T>,
    lambda_abs: T,
) -> Result<AlignedPair<T>, VerifyError> {
    if psi_a.grid() != psi_b.grid() {
        return Err(VerifyError::GridMismatch);
    }
    let pair_a = to_polar(psi_a, lambda_abs)?;
    let pair_b = to_polar(psi_b, lambda_abs)?;
    let grid = psi_a.grid();

    // anchor at the most reliable node
    let mut anchor = 0usize;
    for (flat, &v) in pair_a.amplitude.data().iter().enumerate() {
        if v > pair_a.amplitude.data()[anchor] {
            anchor = flat;
        }
    }
    let two_pi_lambda = (T::PI() + T::PI()) * lambda_abs;
    let offset = ((pair_a.action.data()[anchor] - pair_b.action.data()[anchor]) / two_pi_lambda)
        .round()
        * two_pi_lambda;
    let s_b = pair_b.action.map(|v| v + offset);

    let floor_a = psi_a.max_abs() * T::lit(NODE_FLOOR_REL);
    let floor_b = psi_b.max_abs() * T::lit(NODE_FLOOR_REL);
    let mut core: Vec<bool> = (0..grid.len())
        .map(|flat| {
            pair_a.amplitude.data()[flat] > floor_a && pair_b.amplitude.data()[flat] > floor_b
        })
        .collect();
    // dilate the invalid set by the stencil radius (2 nodes per axis)
    for _ in 0..2 {
        let snapshot = core.clone();
        for flat in 0..grid.len() {
            if !snapshot[flat] {
                continue;
            }
            'axes: for a in 0..grid.dim() {
                for step in [-1isize, 1] {
                    if let Some(nb) = grid.neighbor(flat, a, step) {
                        if !snapshot[nb] {
                            core[flat] = false;
                            break 'axes;
                        }
                    }
                }
            }
        }
    }
    Ok(AlignedPair {
        r_a: pair_a.amplitude,
        r_b: pair_b.amplitude,
        s_a: pair_a.action,
        s_b,
        mask: core,
    })
}

/// Residual of the phase (Hamilton-Jacobi-with-curvature) equation, centered
/// between two adjacent snapshots.
pub fn hjm_residual<T: Scalar>(
    psi_a: &ComplexField<T>,
    psi_b: &ComplexField<T>,
    dt: T,
    sys: &ClassicalSystem,
    lambda: T,
) -> Result<ResidualField<T>, VerifyError> {
    if dt == T::zero() {
        return Err(VerifyError::ZeroTimeStep { dt: 0.0 });
    }
    let lambda_abs = lambda.abs();
    let aligned = aligned_polar(psi_a, psi_b, lambda_abs)?;
    let grid = psi_a.grid().clone();
    let dim = grid.dim();
    let half = T::lit(0.5);

    let s_mid = aligned.s_a.zip_with(&aligned.s_b, |a, b| half * (a + b))?;
    let r_mid = aligned.r_a.zip_with(&aligned.r_b, |a, b| half * (a + b))?;
    let dt_s: Vec<T> = aligned
        .s_b
        .data()
        .iter()
        .zip(aligned.s_a.data())
        .map(|(b, a)| (*b - *a) / dt)
        .collect();

    let fields = sys.coefficients_on(&grid)?;
    let ds: Vec<ScalarField<T>> = (0..dim)
        .map(|a| gradient(&s_mid, a))
        .collect::<Result<_, _>>()?;
    let lam2 = lambda_abs * lambda_abs;

    let mut res = vec![T::zero(); grid.len()];
    for i in 0..dim {
        for j in 0..dim {
            let g = &fields.metric[i * dim + j];
            // kinetic ½ g^ij (∂_i S − A_i)(∂_j S − A_j)
            for flat in 0..grid.len() {
                let pi = ds[i].data()[flat] - fields.a[i].data()[flat];
                let pj = ds[j].data()[flat] - fields.a[j].data()[flat];
                res[flat] += half * g.data()[flat] * pi * pj;
            }
            // curvature term −(λ²/2)(g^ij ∂_i∂_j R / R + ∂_i g^ij ∂_j R / R)
            let d2_r = if i == j {
                second_derivative(&r_mid, i)?
            } else {
                gradient(&gradient(&r_mid, i)?, j)?
            };
            let dg = gradient(g, i)?;
            let dr_j = gradient(&r_mid, j)?;
            for flat in 0..grid.len() {
                let rr = r_mid.data()[flat];
                if rr > T::zero() {
                    res[flat] -= half
                        * lam2
                        * (g.data()[flat] * d2_r.data()[flat]
                            + dg.data()[flat] * dr_j.data()[flat])
                        / rr;
                }
            }
        }
    }
    for flat in 0..grid.len() {
        res[flat] += dt_s[flat] + fields.v.data()[flat];
    }
    Ok(ResidualField {
        values: ScalarField::from_data(grid, res),
        mask: aligned.mask,
        amplitude: r_mid,
    })
}

/// Residual of the symmetrized continuity equation
/// `∂_tΩ + ∂_i(g^ij(∂_jS − A_j)Ω) = 0`, centered between two snapshots.
pub fn continuity_residual<T: Scalar>(
    psi_a: &ComplexField<T>,
    psi_b: &ComplexField<T>,
    dt: T,
    sys: &ClassicalSystem,
    lambda: T,
) -> Result<ResidualField<T>, VerifyError> {
    if dt == T::zero() {
        return Err(VerifyError::ZeroTimeStep { dt: 0.0 });
    }
    let lambda_abs = lambda.abs();
    let aligned = aligned_polar(psi_a, psi_b, lambda_abs)?;
    let grid = psi_a.grid().clone();
    let dim = grid.dim();
    let half = T::lit(0.5);

    let omega_a = psi_a.density();
    let omega_b = psi_b.density();
    let omega_mid = omega_a.zip_with(&omega_b, |a, b| half * (a + b))?;
    let s_mid = aligned.s_a.zip_with(&aligned.s_b, |a, b| half * (a + b))?;
    let r_mid = aligned.r_a.zip_with(&aligned.r_b, |a, b| half * (a + b))?;

    let fields = sys.coefficients_on(&grid)?;
    let ds: Vec<ScalarField<T>> = (0..dim)
        .map(|a| gradient(&s_mid, a))
        .collect::<Result<_, _>>()?;

    let mut res: Vec<T> = omega_b
        .data()
        .iter()
        .zip(omega_a.data())
        .map(|(b, a)| (*b - *a) / dt)
        .collect();
    for i in 0..dim {
        // flux_i = Σ_j g^ij (∂_j S − A_j) Ω
        let mut flux = vec![T::zero(); grid.len()];
        for j in 0..dim {
            let g = fields.metric[i * dim + j].data();
            for flat in 0..grid.len() {
                flux[flat] += g[flat]
                    * (ds[j].data()[flat] - fields.a[j].data()[flat])
                    * omega_mid.data()[flat];
            }
        }
        let dflux = gradient(&ScalarField::from_data(grid.clone(), flux), i)?;
        for (r, d) in res.iter_mut().zip(dflux.data()) {
            *r += *d;
        }
    }
    Ok(ResidualField {
        values: ScalarField::from_data(grid, res),
        mask: aligned.mask,
        amplitude: r_mid,
    })
}

/// The propagator uses only `|λ|`, so runs at `±λ` from one initial field are
/// bit-identical; this checks exactly that (and returns false when the runs'
/// initial fields already differ, which violates the premise).
pub fn sign_symmetry_check<T: Scalar>(
    run_plus: &[(T, ComplexField<T>)],
    run_minus: &[(T, ComplexField<T>)],
) -> bool {
    if run_plus.len() != run_minus.len() || run_plus.is_empty() {
        return false;
    }
    if !run_plus[0].1.bit_identical(&run_minus[0].1) {
        return false;
    }
    run_plus.iter().zip(run_minus).all(|((ta, pa), (tb, pb))| {
        ta.to_f64().map(f64::to_bits) == tb.to_f64().map(f64::to_bits) && pa.bit_identical(pb)
    })
}
