//! Pointer-based measurement models.
//!
//! The impulsive interaction `H = g·A₁·p₂` correlates the measured quantity
//! with the pointer coordinate `q₂`. For an eigenstate input the pointer
//! packet translates rigidly by `g·(|λ|/ħ)·l·T`, so the full statistics
//! reduce to 1D shifts of the initial pointer state mixed over the Born
//! weights `|c_l|²` and the hidden law `P(λ)`: with the binary law the shift
//! is exactly `g·l·T` and the inferred outcome is certain, while a spread in
//! `|λ|` broadens the inferred-outcome distribution.
//!
//! Position measurement (`H = g·q₁·p̂₂`) is treated as a genuine 2D PDE and
//! compared against the exact classical characteristics, which it must match.

use crate::dynamics::{propagate_with, DiscreteHamiltonian, DynamicsError};
use crate::fields::{Boundary, ComplexField, FieldError, Grid, ScalarField};
use crate::hidden::{HiddenError, LambdaDistribution};
use crate::linalg::CsrMatrix;
use crate::{Complex, Scalar};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("eigen-component weights must satisfy Σ|c|² = 1 (got {sum})")]
    CoefficientsNotNormalized { sum: f64 },
    #[error("pointer state must be normalized (∫|φ₀|² = {norm_sq})")]
    PointerNotNormalized { norm_sq: f64 },
    #[error("pointer grid must be one-dimensional")]
    PointerNotOneDimensional,
    #[error("expected a two-dimensional grid for position measurement")]
    GridNotTwoDimensional,
    #[error("no eigen components supplied")]
    NoEigenComponents,
    #[error("shift {shift} would move the pointer support out of the grid")]
    ShiftExitsGrid { shift: f64 },
    #[error(transparent)]
    Hidden(#[from] HiddenError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Coupling, duration, eigen decomposition of the measured quantity and the
/// initial pointer packet φ₀(q₂).
#[derive(Debug, Clone)]
pub struct MeasurementSetup<T> {
    coupling: T,
    duration: T,
    eigen_components: Vec<(T, Complex<T>)>,
    pointer0: ComplexField<T>,
    dist: LambdaDistribution<T>,
}

impl<T: Scalar> MeasurementSetup<T> {
    pub fn new(
        coupling: T,
        duration: T,
        eigen_components: Vec<(T, Complex<T>)>,
        pointer0: ComplexField<T>,
        dist: LambdaDistribution<T>,
    ) -> Result<Self, MeasurementError> {
        if eigen_components.is_empty() {
            return Err(MeasurementError::NoEigenComponents);
        }
        if pointer0.grid().dim() != 1 {
            return Err(MeasurementError::PointerNotOneDimensional);
        }
        let sum: T = eigen_components.iter().map(|(_, c)| c.norm_sqr()).sum();
        if (sum - T::one()).abs() > T::lit(1e-12) {
            return Err(MeasurementError::CoefficientsNotNormalized {
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }
        let norm_sq = pointer0.norm_sq();
        if (norm_sq - T::one()).abs() > T::lit(1e-6) {
            return Err(MeasurementError::PointerNotNormalized {
                norm_sq: norm_sq.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(MeasurementSetup {
            coupling,
            duration,
            eigen_components,
            pointer0,
            dist,
        })
    }

    pub fn coupling(&self) -> T {
        self.coupling
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    pub fn eigen_components(&self) -> &[(T, Complex<T>)] {
        &self.eigen_components
    }

    pub fn pointer0(&self) -> &ComplexField<T> {
        &self.pointer0
    }

    pub fn dist(&self) -> &LambdaDistribution<T> {
        &self.dist
    }
}

/// Classical pointer reading after the impulsive interaction:
/// `q₂(T) − q₂(0) = g·A₁·T`.
pub fn classical_pointer_shift<T: Scalar>(a1_value: T, g: T, t: T) -> T {
    g * a1_value * t
}

/// Pointer state after measuring the eigenstate `l` on the branch `λ`:
/// `φ₀` translated by `g·(|λ|/ħ)·l·T`. Integer-node shifts are exact; other
/// shifts use local cubic interpolation.
pub fn eigenstate_pointer<T: Scalar>(
    l: T,
    lambda: T,
    setup: &MeasurementSetup<T>,
) -> Result<ComplexField<T>, MeasurementError> {
    let shift = setup.coupling * (lambda.abs() / setup.dist.hbar()) * l * setup.duration;
    shift_field_1d(&setup.pointer0, shift)
}

/// Translate a 1D complex field by `shift`, erroring if the packet support
/// would leave the grid.
pub fn shift_field_1d<T: Scalar>(
    field: &ComplexField<T>,
    shift: T,
) -> Result<ComplexField<T>, MeasurementError> {
    let grid = field.grid();
    if grid.dim() != 1 {
        return Err(MeasurementError::PointerNotOneDimensional);
    }
    let ax = *grid.axis(0);

    // support = where the amplitude is above the node floor
    let floor = field.max_abs() * T::lit(crate::fields::NODE_FLOOR_REL);
    let mut first = None;
    let mut last = 0usize;
    for (i, z) in field.data().iter().enumerate() {
        if z.norm() > floor {
            if first.is_none() {
                first = Some(i);
            }
            last = i;
        }
    }
    let first = first.unwrap_or(0);
    if ax.boundary == Boundary::Box {
        let lo = grid.axis_coord(0, first) + shift;
        let hi = grid.axis_coord(0, last) + shift;
        if lo < ax.min || hi > ax.max {
            return Err(MeasurementError::ShiftExitsGrid {
                shift: shift.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(ComplexField::from_data(
        grid.clone(),
        shifted_values(field, shift),
    ))
}

/// Values of `field(x − shift)`: exact roll on integer-node shifts, 4-point
/// Lagrange cubic otherwise; out-of-grid samples are zero.
fn shifted_values<T: Scalar>(field: &ComplexField<T>, shift: T) -> Vec<Complex<T>> {
    let grid = field.grid();
    let ax = grid.axis(0);
    let dx = grid.spacing(0);
    let n = ax.points;
    let zero = Complex::new(T::zero(), T::zero());
    let steps = shift / dx;
    let rounded = steps.round();
    if (steps - rounded).abs() < T::lit(1e-9) {
        let k = rounded.to_f64().unwrap() as isize;
        return (0..n as isize)
            .map(|i| {
                let j = i - k;
                if (0..n as isize).contains(&j) {
                    field.data()[j as usize]
                } else {
                    zero
                }
            })
            .collect();
    }
    (0..n)
        .map(|i| {
            let x = grid.axis_coord(0, i) - shift;
            let s = (x - ax.min) / dx;
            let j = s.floor().to_f64().unwrap() as isize;
            let t = s - T::from_i64(j as i64).unwrap();
            let at = |k: isize| -> Complex<T> {
                if (0..n as isize).contains(&k) {
                    field.data()[k as usize]
                } else {
                    zero
                }
            };
            let (p0, p1, p2, p3) = (at(j - 1), at(j), at(j + 1), at(j + 2));
            let one = T::one();
            let c0 = -t * (t - one) * (t - T::lit(2.0)) / T::lit(6.0);
            let c1 = (t + one) * (t - one) * (t - T::lit(2.0)) / T::lit(2.0);
            let c2 = -(t + one) * t * (t - T::lit(2.0)) / T::lit(2.0);
            let c3 = (t + one) * t * (t - one) / T::lit(6.0);
            p0 * Complex::new(c0, T::zero())
                + p1 * Complex::new(c1, T::zero())
                + p2 * Complex::new(c2, T::zero())
                + p3 * Complex::new(c3, T::zero())
        })
        .collect()
}

/// One detected peak, associated with an eigenvalue.
#[derive(Debug, Clone, Copy)]
pub struct PeakEntry<T> {
    pub eigenvalue: T,
    /// Density maximum within the peak's basin.
    pub position: T,
    /// Probability mass of the basin.
    pub mass: T,
}

/// Pointer density and the inferred-outcome statistics of `l' = |λ|·l/ħ`.
#[derive(Debug, Clone)]
pub struct PointerStatistics<T> {
    pub pointer_density: ScalarField<T>,
    pub inferred_mean: T,
    pub inferred_variance: T,
    pub peaks: Vec<PeakEntry<T>>,
    /// True when peaks overlap and the per-eigenvalue table is unreliable.
    pub ambiguous: bool,
}

/// Mix the shifted pointer packets over the Born weights `|c_l|²` and the
/// quadrature of `P(λ)`:
/// `ρ(q₂) = Σ_l |c_l|² Σ_k w_k |φ₀(q₂ − g(|λ_k|/ħ) l T)|²`.
pub fn pointer_distribution<T: Scalar>(
    setup: &MeasurementSetup<T>,
    n_lambda_nodes: usize,
) -> Result<PointerStatistics<T>, MeasurementError> {
    let grid = setup.pointer0.grid().clone();
    let nodes = setup.dist.magnitude_nodes(n_lambda_nodes)?;
    let mut density = vec![T::zero(); grid.len()];
    for (l, c) in &setup.eigen_components {
        let born = c.norm_sqr();
        for &(lambda_abs, w) in &nodes {
            let shifted = eigenstate_pointer(*l, lambda_abs, setup)?;
            for (d, z) in density.iter_mut().zip(shifted.data()) {
                *d += born * w * z.norm_sqr();
            }
        }
    }
    let pointer_density = ScalarField::from_data(grid, density);

    // moments of l' = |λ| l / ħ with l ~ |c_l|² and λ ~ P(λ), independent
    let hbar = setup.dist.hbar();
    let l_mean: T = setup
        .eigen_components
        .iter()
        .map(|(l, c)| *l * c.norm_sqr())
        .sum();
    let l_sq_mean: T = setup
        .eigen_components
        .iter()
        .map(|(l, c)| *l * *l * c.norm_sqr())
        .sum();
    let lam_mean: T = nodes.iter().map(|&(l, w)| l * w).sum();
    let lam_sq_mean: T = nodes.iter().map(|&(l, w)| l * l * w).sum();
    let inferred_mean = l_mean * lam_mean / hbar;
    let inferred_variance = l_sq_mean * lam_sq_mean / (hbar * hbar) - inferred_mean * inferred_mean;

    let (peaks, ambiguous) = assign_peaks(setup, &pointer_density, &nodes);

    Ok(PointerStatistics {
        pointer_density,
        inferred_mean,
        inferred_variance,
        peaks,
        ambiguous,
    })
}

/// Watershed segmentation of the 1D pointer density: basins are cut at the
/// local minima between local maxima; each eigenvalue is assigned the basin
/// containing its expected pointer position. Two eigenvalues landing in one
/// basin flag the table as ambiguous.
fn assign_peaks<T: Scalar>(
    setup: &MeasurementSetup<T>,
    density: &ScalarField<T>,
    nodes: &[(T, T)],
) -> (Vec<PeakEntry<T>>, bool) {
    let grid = density.grid();
    let n = grid.len();
    let d = density.data();
    let threshold = density.max_abs() * T::lit(1e-9);

    let mut maxima = Vec::new();
    for i in 0..n {
        let left = if i > 0 { d[i - 1] } else { T::neg_infinity() };
        let right = if i + 1 < n {
            d[i + 1]
        } else {
            T::neg_infinity()
        };
        if d[i] > threshold && d[i] >= left && d[i] > right {
            maxima.push(i);
        }
    }
    // basin boundaries at the minimum between consecutive maxima
    let mut cuts = vec![0usize];
    for w in maxima.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut best = a;
        for i in a..=b {
            if d[i] < d[best] {
                best = i;
            }
        }
        cuts.push(best);
    }
    cuts.push(n);

    let basin_of = |flat: usize| -> usize {
        match cuts.binary_search(&flat) {
            Ok(k) | Err(k) => k.saturating_sub(1).min(cuts.len().saturating_sub(2)),
        }
    };

    let hbar = setup.dist.hbar();
    let lam_mean: T = nodes.iter().map(|&(l, w)| l * w).sum();
    let vol = grid.cell_volume();
    let mut assigned: Vec<usize> = Vec::new();
    let mut ambiguous = maxima.len() < distinct_count(&setup.eigen_components);
    let mut peaks = Vec::new();
    for (l, _) in &setup.eigen_components {
        let expected = setup.coupling * *l * setup.duration * lam_mean / hbar;
        let flat = crate::trajectories::nearest_node(grid, &[expected]);
        let basin = basin_of(flat);
        if assigned.contains(&basin) {
            ambiguous = true;
        }
        assigned.push(basin);
        let (lo, hi) = (cuts[basin], cuts[basin + 1]);
        let mut mass = T::zero();
        let mut peak_at = lo;
        for i in lo..hi {
            mass += grid.trapezoid_weight(i) * d[i];
            if d[i] > d[peak_at] {
                peak_at = i;
            }
        }
        peaks.push(PeakEntry {
            eigenvalue: *l,
            position: grid.axis_coord(0, peak_at),
            mass: mass * vol,
        });
    }
    (peaks, ambiguous)
}

fn distinct_count<T: Scalar>(components: &[(T, Complex<T>)]) -> usize {
    let mut values: Vec<T> = components.iter().map(|(l, _)| *l).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup_by(|a, b| (*a - *b).abs() < T::lit(1e-12));
    values.len()
}

/// The position-measurement interaction `H = g·q₁·p̂₂` on a 2D grid, assembled
/// exactly Hermitian (couplings along `q₂` only, so the row-major matrix is
/// tridiagonal and the Crank-Nicolson solve is direct).
pub fn build_position_measurement_hamiltonian<T: Scalar>(
    grid: &Grid<T>,
    g: T,
    hbar: T,
) -> Result<DiscreteHamiltonian<T>, MeasurementError> {
    if grid.dim() != 2 {
        return Err(MeasurementError::GridNotTwoDimensional);
    }
    let dq2 = grid.spacing(1);
    let points2 = grid.axis(1).points;
    let periodic2 = grid.axis(1).boundary == Boundary::Periodic;
    let mut triplets = Vec::new();
    for flat in 0..grid.len() {
        let i2 = grid.axis_index(1, flat);
        if i2 + 1 < points2 || periodic2 {
            let m = grid.neighbor(flat, 1, 1).unwrap();
            let x1 = grid.axis_coord(0, grid.axis_index(0, flat));
            // H ψ|_n picks up −iħ g x₁ (ψ_{n+E₂} − ψ_{n−E₂})/(2Δ₂)
            let s = -hbar * g * x1 / (T::lit(2.0) * dq2);
            triplets.push((flat, m, Complex::new(T::zero(), s)));
            triplets.push((m, flat, Complex::new(T::zero(), -s)));
        }
    }
    let matrix = CsrMatrix::from_triplets(grid.len(), triplets);
    Ok(DiscreteHamiltonian::from_matrix(
        grid.clone(),
        hbar,
        matrix,
    )?)
}

/// Outcome of the quantum-vs-classical position measurement comparison.
#[derive(Debug, Clone)]
pub struct PositionMeasurementReport<T> {
    /// max |ρ_quantum − ρ_classical| at time T.
    pub max_diff: T,
    /// L1 distance of the two densities at time T.
    pub l1_diff: T,
    /// Advection CFL number max|g·q₁|·dt/Δq₂ of the quantum solve.
    pub cfl: T,
    /// True when the CFL number exceeds 1 (stable but less accurate).
    pub cfl_exceeded: bool,
    pub quantum_density: ScalarField<T>,
    pub classical_density: ScalarField<T>,
}

/// Propagate `Ψ₀ = √ρ₀·e^{iS₀/ħ}` under `g·q₁·p̂₂` and compare `|Ψ(T)|²`
/// against the exact classical characteristics `ρ₀(q₁, q₂ − g·q₁·T)`
/// (sampled with the same local cubic used for pointer shifts).
pub fn position_measurement_check<T: Scalar>(
    rho0: &ScalarField<T>,
    s0: &ScalarField<T>,
    g: T,
    duration: T,
    dt: T,
    hbar: T,
) -> Result<PositionMeasurementReport<T>, MeasurementError> {
    let grid = rho0.grid().clone();
    if grid.dim() != 2 {
        return Err(MeasurementError::GridNotTwoDimensional);
    }
    let psi0 = ComplexField::from_data(
        grid.clone(),
        rho0.data()
            .iter()
            .zip(s0.data())
            .map(|(&r, &s)| {
                let amp = r.max(T::zero()).sqrt();
                let phase = s / hbar;
                Complex::new(amp * phase.cos(), amp * phase.sin())
            })
            .collect(),
    );
    let h = build_position_measurement_hamiltonian(&grid, g, hbar)?;
    let snaps = propagate_with(&psi0, &h, duration, dt, usize::MAX).map_err(|(e, _)| e)?;
    let quantum_density = snaps.last().unwrap().1.density();

    let classical_density = classical_position_density(rho0, g, duration)?;

    let mut max_diff = T::zero();
    let mut l1 = T::zero();
    let vol = grid.cell_volume();
    for (flat, (q, c)) in quantum_density
        .data()
        .iter()
        .zip(classical_density.data())
        .enumerate()
    {
        let d = (*q - *c).abs();
        max_diff = max_diff.max(d);
        l1 += grid.trapezoid_weight(flat) * d;
    }
    l1 *= vol;

    let max_v = grid.axis(0).min.abs().max(grid.axis(0).max.abs()) * g.abs();
    let cfl = max_v * dt / grid.spacing(1);
    Ok(PositionMeasurementReport {
        max_diff,
        l1_diff: l1,
        cfl,
        cfl_exceeded: cfl > T::one(),
        quantum_density,
        classical_density,
    })
}

/// The exact characteristics transport of the position-measurement flow:
/// `ρ(q₁, q₂; T) = ρ₀(q₁, q₂ − g·q₁·T)` (the shear is divergence-free, so
/// the density translates rigidly along each `q₁` row).
pub fn classical_position_density<T: Scalar>(
    rho0: &ScalarField<T>,
    g: T,
    duration: T,
) -> Result<ScalarField<T>, MeasurementError> {
    let grid = rho0.grid().clone();
    if grid.dim() != 2 {
        return Err(MeasurementError::GridNotTwoDimensional);
    }
    let points1 = grid.axis(0).points;
    let points2 = grid.axis(1).points;
    let row_grid = Grid::new(vec![*grid.axis(1)])?;
    let mut out = vec![T::zero(); grid.len()];
    for i1 in 0..points1 {
        let x1 = grid.axis_coord(0, i1);
        let shift = g * x1 * duration;
        let row: Vec<Complex<T>> = (0..points2)
            .map(|i2| Complex::new(rho0.data()[grid.flat_index(&[i1, i2])], T::zero()))
            .collect();
        let row_field = ComplexField::from_data(row_grid.clone(), row);
        for (i2, v) in shifted_values(&row_field, shift).iter().enumerate() {
            out[grid.flat_index(&[i1, i2])] = v.re.max(T::zero());
        }
    }
    Ok(ScalarField::from_data(grid, out))
}
