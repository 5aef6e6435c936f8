//! λ-branch mixtures: ensemble propagation, marginal densities, superposition
//! interference and the double-slit fringe experiment.
//!
//! The propagator depends on `|λ|` only, so sign pairs are merged into one
//! branch with the combined weight (the binary law computes exactly one
//! branch). Branches are kept in ascending `|λ|` and all reductions run in
//! that order, so results do not depend on how work was parallelized.

use crate::dynamics::{build_hamiltonian, propagate_with, ClassicalSystem, DynamicsError};
use crate::fields::{from_polar, ComplexField, FieldError, PolarPair, ScalarField};
use crate::hidden::{HiddenError, LambdaDistribution};
use crate::{Complex, Scalar};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("initial field is not normalized: ∫|ψ|² = {norm_sq}")]
    NotNormalized { norm_sq: f64 },
    #[error("branch |λ| = {lambda_abs} aborted: {source}")]
    BranchAborted {
        lambda_abs: f64,
        source: DynamicsError,
    },
    #[error("the two families carry different λ nodes or weights")]
    MismatchedFamilies,
    #[error("packets overlap too much: ∫|ψ₁||ψ₂| = {overlap:.3e} (need < {limit:.0e})")]
    PacketsOverlap { overlap: f64, limit: f64 },
    #[error(transparent)]
    Hidden(#[from] HiddenError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// One `|λ|` branch of the ensemble.
#[derive(Debug, Clone)]
pub struct Branch<T> {
    pub lambda_abs: T,
    pub weight: T,
    pub psi: ComplexField<T>,
}

/// Weighted set of λ-branches at a common time.
#[derive(Debug, Clone)]
pub struct LambdaEnsemble<T> {
    branches: Vec<Branch<T>>,
    time: T,
}

impl<T: Scalar> LambdaEnsemble<T> {
    pub fn new(branches: Vec<Branch<T>>, time: T) -> Self {
        LambdaEnsemble { branches, time }
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn time(&self) -> T {
        self.time
    }

    /// Marginal position density `ρ(q) = Σ_k w_k |Ψ_k(q)|²`, summed in
    /// ascending-λ order.
    pub fn marginal_density(&self) -> ScalarField<T> {
        let grid = self.branches[0].psi.grid().clone();
        let mut data = vec![T::zero(); grid.len()];
        for b in &self.branches {
            for (d, z) in data.iter_mut().zip(b.psi.data()) {
                *d += b.weight * z.norm_sqr();
            }
        }
        ScalarField::from_data(grid, data)
    }
}

/// Propagate the same normalized initial field on every `|λ|` branch of the
/// distribution (the separable, sign-symmetric initial condition). Returns one
/// ensemble per snapshot time. `threads` > 1 runs branches concurrently; the
/// result is identical at any thread count.
#[allow(clippy::too_many_arguments)]
pub fn propagate_ensemble<T: Scalar>(
    psi0: &ComplexField<T>,
    sys: &ClassicalSystem,
    dist: &LambdaDistribution<T>,
    n_nodes: usize,
    t_final: T,
    dt: T,
    snapshot_every: usize,
    threads: usize,
) -> Result<Vec<LambdaEnsemble<T>>, EnsembleError> {
    let norm_sq = psi0.norm_sq();
    if (norm_sq - T::one()).abs() > T::lit(1e-6) {
        return Err(EnsembleError::NotNormalized {
            norm_sq: norm_sq.to_f64().unwrap_or(f64::NAN),
        });
    }
    let nodes = dist.magnitude_nodes(n_nodes)?;
    let runs = run_branches(psi0, sys, &nodes, t_final, dt, snapshot_every, threads)?;

    let n_snaps = runs[0].1.len();
    let mut out = Vec::with_capacity(n_snaps);
    for s in 0..n_snaps {
        let time = runs[0].1[s].0;
        let branches = runs
            .iter()
            .map(|((lambda_abs, weight), snaps)| Branch {
                lambda_abs: *lambda_abs,
                weight: *weight,
                psi: snaps[s].1.clone(),
            })
            .collect();
        out.push(LambdaEnsemble::new(branches, time));
    }
    Ok(out)
}

type BranchRun<T> = ((T, T), Vec<(T, ComplexField<T>)>);

/// Propagate one field per magnitude node; branch-parallel, ordered results.
fn run_branches<T: Scalar>(
    psi0: &ComplexField<T>,
    sys: &ClassicalSystem,
    nodes: &[(T, T)],
    t_final: T,
    dt: T,
    snapshot_every: usize,
    threads: usize,
) -> Result<Vec<BranchRun<T>>, EnsembleError> {
    let run_one = |&(lambda_abs, weight): &(T, T)| -> Result<BranchRun<T>, EnsembleError> {
        let h = build_hamiltonian(sys, psi0.grid(), lambda_abs).map_err(|source| {
            EnsembleError::BranchAborted {
                lambda_abs: lambda_abs.to_f64().unwrap_or(f64::NAN),
                source,
            }
        })?;
        let snaps = propagate_with(psi0, &h, t_final, dt, snapshot_every).map_err(
            |(source, _partial)| EnsembleError::BranchAborted {
                lambda_abs: lambda_abs.to_f64().unwrap_or(f64::NAN),
                source,
            },
        )?;
        Ok(((lambda_abs, weight), snaps))
    };

    if threads <= 1 || nodes.len() <= 1 {
        return nodes.iter().map(run_one).collect();
    }
    let workers = threads.min(nodes.len());
    let chunk_size = nodes.len().div_ceil(workers);
    let mut results: Vec<Option<Result<BranchRun<T>, EnsembleError>>> =
        (0..nodes.len()).map(|_| None).collect();
    let run_one = &run_one;
    std::thread::scope(|scope| {
        for (slot_chunk, node_chunk) in results.chunks_mut(chunk_size).zip(nodes.chunks(chunk_size))
        {
            scope.spawn(move || {
                for (slot, node) in slot_chunk.iter_mut().zip(node_chunk) {
                    *slot = Some(run_one(node));
                }
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every branch slot filled"))
        .collect()
}

/// Build the analytic λ-family `Ψ_k = R·exp(iS/|λ_k|)` from one amplitude and
/// one action field (the λ-independent-input idealization).
pub fn family_from_polar<T: Scalar>(
    amplitude: &ScalarField<T>,
    action: &ScalarField<T>,
    dist: &LambdaDistribution<T>,
    n_nodes: usize,
) -> Result<LambdaEnsemble<T>, EnsembleError> {
    let nodes = dist.magnitude_nodes(n_nodes)?;
    let branches = nodes
        .into_iter()
        .map(|(lambda_abs, weight)| {
            let pair = PolarPair {
                amplitude: amplitude.clone(),
                action: action.clone(),
                lambda_abs,
            };
            Branch {
                lambda_abs,
                weight,
                psi: from_polar(&pair),
            }
        })
        .collect();
    Ok(LambdaEnsemble::new(branches, T::zero()))
}

/// Superposition density and interference term.
#[derive(Debug, Clone)]
pub struct SuperpositionDensity<T> {
    /// `Σ_k w_k |aΨ₁ₖ + bΨ₂ₖ|²`, renormalized to unit mass.
    pub density: ScalarField<T>,
    /// `density − (|a|²ρ₁ + |b|²ρ₂)`, scaled by the same factor.
    pub interference: ScalarField<T>,
    /// The factor the raw density was divided by.
    pub normalization: T,
}

/// Combine two λ-families with complex coefficients `a`, `b`. The families
/// must carry identical λ nodes and weights (each branch is superposed with
/// its own partner). `a`, `b` need not be normalized; the output density is
/// renormalized once and the factor reported.
pub fn superposition_density<T: Scalar>(
    family1: &LambdaEnsemble<T>,
    family2: &LambdaEnsemble<T>,
    a: Complex<T>,
    b: Complex<T>,
) -> Result<SuperpositionDensity<T>, EnsembleError> {
    if family1.branches.len() != family2.branches.len() {
        return Err(EnsembleError::MismatchedFamilies);
    }
    for (b1, b2) in family1.branches.iter().zip(&family2.branches) {
        let dl = (b1.lambda_abs - b2.lambda_abs).abs();
        let dw = (b1.weight - b2.weight).abs();
        if dl > T::lit(1e-12) || dw > T::lit(1e-12) {
            return Err(EnsembleError::MismatchedFamilies);
        }
        if b1.psi.grid() != b2.psi.grid() {
            return Err(EnsembleError::Field(FieldError::GridMismatch));
        }
    }
    let grid = family1.branches[0].psi.grid().clone();
    let n = grid.len();
    let mut density = vec![T::zero(); n];
    let mut rho1 = vec![T::zero(); n];
    let mut rho2 = vec![T::zero(); n];
    for (b1, b2) in family1.branches.iter().zip(&family2.branches) {
        let w = b1.weight;
        for k in 0..n {
            let z = a * b1.psi.data()[k] + b * b2.psi.data()[k];
            density[k] += w * z.norm_sqr();
            rho1[k] += w * b1.psi.data()[k].norm_sqr();
            rho2[k] += w * b2.psi.data()[k].norm_sqr();
        }
    }
    let a2 = a.norm_sqr();
    let b2 = b.norm_sqr();
    let interference: Vec<T> = (0..n)
        .map(|k| density[k] - (a2 * rho1[k] + b2 * rho2[k]))
        .collect();
    let raw = ScalarField::from_data(grid.clone(), density);
    let z = raw.integrate();
    let density = raw.map(|v| v / z);
    let interference = ScalarField::from_data(grid, interference).map(|v| v / z);
    Ok(SuperpositionDensity {
        density,
        interference,
        normalization: z,
    })
}

/// Two displaced Gaussian packets released toward (or onto) each other.
#[derive(Debug, Clone)]
pub struct DoubleSlitConfig<T> {
    /// Packet centers sit at ±separation.
    pub separation: T,
    /// Initial packet width (amplitude ∝ exp(−x²/4σ²)).
    pub sigma: T,
    /// Phase wavenumber of the packets: packet 1 carries `exp(+ikq)`,
    /// packet 2 `exp(−ikq)` (per-branch momentum is `|λ|k`).
    pub wavenumber: T,
    /// Superposition coefficients.
    pub amp1: Complex<T>,
    pub amp2: Complex<T>,
}

#[derive(Debug, Clone)]
pub struct DoubleSlitReport<T> {
    /// Screen-time intensity `ρ(q, t_final)`, unit mass.
    pub intensity: ScalarField<T>,
    /// `(max − min)/(max + min)` over the central region `|q| ≤ separation`.
    pub visibility: T,
    /// Normalization factor of the raw intensity.
    pub normalization: T,
}

const OVERLAP_LIMIT: f64 = 1e-6;

/// Run the fringe experiment: each packet is propagated separately on every
/// branch (linearity), superposed, and the weighted intensity is reduced in
/// ascending-λ order.
#[allow(clippy::too_many_arguments)]
pub fn double_slit<T: Scalar>(
    config: &DoubleSlitConfig<T>,
    grid: &crate::fields::Grid<T>,
    sys: &ClassicalSystem,
    dist: &LambdaDistribution<T>,
    n_nodes: usize,
    t_final: T,
    dt: T,
    threads: usize,
) -> Result<DoubleSlitReport<T>, EnsembleError> {
    let packet = |center: T, k: T| -> Result<ComplexField<T>, EnsembleError> {
        let raw = ComplexField::from_fn(grid.clone(), |q| {
            let x = q[0] - center;
            let amp = (-(x * x) / (T::lit(4.0) * config.sigma * config.sigma)).exp();
            let phase = k * q[0];
            Complex::new(amp * phase.cos(), amp * phase.sin())
        });
        Ok(crate::fields::normalize(&raw)?)
    };
    let psi1 = packet(-config.separation, config.wavenumber)?;
    let psi2 = packet(config.separation, -config.wavenumber)?;

    // initial overlap must be negligible for the two-packet reading
    let overlap = {
        let vol = grid.cell_volume();
        let mut acc = T::zero();
        for (z1, z2) in psi1.data().iter().zip(psi2.data()) {
            acc += z1.norm() * z2.norm();
        }
        acc * vol
    };
    if overlap >= T::lit(OVERLAP_LIMIT) {
        return Err(EnsembleError::PacketsOverlap {
            overlap: overlap.to_f64().unwrap_or(f64::NAN),
            limit: OVERLAP_LIMIT,
        });
    }

    let nodes = dist.magnitude_nodes(n_nodes)?;
    let runs1 = run_branches(&psi1, sys, &nodes, t_final, dt, usize::MAX, threads)?;
    let runs2 = run_branches(&psi2, sys, &nodes, t_final, dt, usize::MAX, threads)?;

    let n = grid.len();
    let mut intensity = vec![T::zero(); n];
    for (((_, w), s1), ((_, _), s2)) in runs1.iter().zip(&runs2) {
        let f1 = &s1.last().unwrap().1;
        let f2 = &s2.last().unwrap().1;
        for k in 0..n {
            let z = config.amp1 * f1.data()[k] + config.amp2 * f2.data()[k];
            intensity[k] += *w * z.norm_sqr();
        }
    }
    let raw = ScalarField::from_data(grid.clone(), intensity);
    let z = raw.integrate();
    let intensity = raw.map(|v| v / z);
    let visibility = fringe_visibility(&intensity, -config.separation, config.separation);
    Ok(DoubleSlitReport {
        intensity,
        visibility,
        normalization: z,
    })
}

/// `(max − min)/(max + min)` of a 1D profile over `[lo, hi]`.
pub fn fringe_visibility<T: Scalar>(intensity: &ScalarField<T>, lo: T, hi: T) -> T {
    let grid = intensity.grid();
    let mut max = T::neg_infinity();
    let mut min = T::infinity();
    for (flat, &v) in intensity.data().iter().enumerate() {
        let q = grid.axis_coord(0, grid.axis_index(0, flat));
        if q >= lo && q <= hi {
            max = max.max(v);
            min = min.min(v);
        }
    }
    (max - min) / (max + min)
}
