//! Classical baselines: Hamilton trajectories and ensemble transport by the
//! method of characteristics.
//!
//! The canonical equations `q̇^i = g^ij(p_j − A_j)`, `ṗ_i = −∂_i H` are
//! integrated with RK4; coefficient gradients (`∂g`, `∂A`, `∂V`) come from
//! central finite differences of the system expressions. Ensemble transport
//! samples `q₀ ~ ρ₀` (stratified inverse-CDF), sets `p₀ = ∂S₀(q₀)` and pushes
//! every particle through the same integrator step, which is valid up to the
//! first caustic; crossings of a probe lattice of characteristics flag the
//! post-caustic snapshots.

use crate::dynamics::{ClassicalSystem, DynamicsError};
use crate::exprlang::Expression;
use crate::fields::{gradient, FieldError, Grid, ScalarField};
use crate::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassicalError {
    #[error("initial density is not normalized: ∫ρ₀ = {total}")]
    NotNormalized { total: f64 },
    #[error("state became non-finite at t = {time}")]
    StateNaN { time: f64 },
    #[error("snapshot times or grids do not match between the two runs")]
    RunsIncompatible,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalState<T> {
    pub q: Vec<T>,
    pub p: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ClassicalTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<ClassicalState<T>>,
}

/// Evaluate `H(q, p) = ½ g^jk (p−A)_j (p−A)_k + V`.
pub fn hamiltonian_value<T: Scalar>(
    sys: &ClassicalSystem,
    q: &[T],
    p: &[T],
) -> Result<T, ClassicalError> {
    let dim = sys.dim();
    let eval = |e: &Expression| -> Result<T, ClassicalError> {
        e.eval(q, T::zero()).map_err(|err| {
            ClassicalError::Dynamics(DynamicsError::Eval {
                what: "coefficient".into(),
                source: crate::exprlang::GridEvalError::Domain {
                    flat: 0,
                    index: vec![],
                    source: err,
                },
            })
        })
    };
    let mut kin = T::zero();
    let mut pa = vec![T::zero(); dim];
    for (j, slot) in pa.iter_mut().enumerate() {
        *slot = p[j] - eval(&sys.vector_potential()[j])?;
    }
    for j in 0..dim {
        for k in 0..dim {
            kin += eval(sys.metric_entry(j, k))? * pa[j] * pa[k];
        }
    }
    Ok(T::lit(0.5) * kin + eval(sys.scalar_potential())?)
}

/// Phase-space derivative `(q̇, ṗ)` at a point, with coefficient gradients by
/// central differences of the expressions.
fn canonical_rhs<T: Scalar>(
    sys: &ClassicalSystem,
    q: &[T],
    p: &[T],
) -> Result<(Vec<T>, Vec<T>), ClassicalError> {
    let dim = sys.dim();
    let eval_at = |e: &Expression, qq: &[T]| -> Result<T, ClassicalError> {
        e.eval(qq, T::zero()).map_err(|err| {
            ClassicalError::Dynamics(DynamicsError::Eval {
                what: "coefficient".into(),
                source: crate::exprlang::GridEvalError::Domain {
                    flat: 0,
                    index: vec![],
                    source: err,
                },
            })
        })
    };

    // pointwise coefficients
    let mut g = vec![T::zero(); dim * dim];
    let mut a = vec![T::zero(); dim];
    for i in 0..dim {
        a[i] = eval_at(&sys.vector_potential()[i], q)?;
        for j in 0..dim {
            g[i * dim + j] = eval_at(sys.metric_entry(i, j), q)?;
        }
    }
    let pa: Vec<T> = (0..dim).map(|j| p[j] - a[j]).collect();

    // q̇^i = g^ij (p − A)_j
    let mut qdot = vec![T::zero(); dim];
    for i in 0..dim {
        for j in 0..dim {
            qdot[i] += g[i * dim + j] * pa[j];
        }
    }

    // ṗ_i = −[½ ∂_i g^jk (p−A)_j (p−A)_k − g^jk ∂_i A_j (p−A)_k + ∂_i V]
    let cbrt_eps = T::lit(6.055454452393343e-6); // ε^(1/3) for f64
    let mut pdot = vec![T::zero(); dim];
    let mut qp = q.to_vec();
    let mut qm = q.to_vec();
    for i in 0..dim {
        let h = cbrt_eps * (T::one() + q[i].abs());
        qp[i] = q[i] + h;
        qm[i] = q[i] - h;
        let two_h = qp[i] - qm[i];
        let mut acc = T::zero();
        for j in 0..dim {
            let da_j = (eval_at(&sys.vector_potential()[j], &qp)?
                - eval_at(&sys.vector_potential()[j], &qm)?)
                / two_h;
            for k in 0..dim {
                let dg = (eval_at(sys.metric_entry(j, k), &qp)?
                    - eval_at(sys.metric_entry(j, k), &qm)?)
                    / two_h;
                acc += T::lit(0.5) * dg * pa[j] * pa[k];
            }
            let mut gk = T::zero();
            for k in 0..dim {
                gk += g[j * dim + k] * pa[k];
            }
            acc -= da_j * gk;
        }
        let dv =
            (eval_at(sys.scalar_potential(), &qp)? - eval_at(sys.scalar_potential(), &qm)?) / two_h;
        acc += dv;
        pdot[i] = -acc;
        qp[i] = q[i];
        qm[i] = q[i];
    }
    Ok((qdot, pdot))
}

/// One RK4 step of the canonical equations; the single code path every
/// classical integration in this crate goes through.
pub fn hamilton_step<T: Scalar>(
    sys: &ClassicalSystem,
    state: &ClassicalState<T>,
    dt: T,
) -> Result<ClassicalState<T>, ClassicalError> {
    let dim = state.q.len();
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);

    let (k1q, k1p) = canonical_rhs(sys, &state.q, &state.p)?;
    let q2: Vec<T> = (0..dim).map(|i| state.q[i] + k1q[i] * dt * half).collect();
    let p2: Vec<T> = (0..dim).map(|i| state.p[i] + k1p[i] * dt * half).collect();
    let (k2q, k2p) = canonical_rhs(sys, &q2, &p2)?;
    let q3: Vec<T> = (0..dim).map(|i| state.q[i] + k2q[i] * dt * half).collect();
    let p3: Vec<T> = (0..dim).map(|i| state.p[i] + k2p[i] * dt * half).collect();
    let (k3q, k3p) = canonical_rhs(sys, &q3, &p3)?;
    let q4: Vec<T> = (0..dim).map(|i| state.q[i] + k3q[i] * dt).collect();
    let p4: Vec<T> = (0..dim).map(|i| state.p[i] + k3p[i] * dt).collect();
    let (k4q, k4p) = canonical_rhs(sys, &q4, &p4)?;

    let two = T::lit(2.0);
    let q: Vec<T> = (0..dim)
        .map(|i| state.q[i] + (k1q[i] + two * k2q[i] + two * k3q[i] + k4q[i]) * dt * sixth)
        .collect();
    let p: Vec<T> = (0..dim)
        .map(|i| state.p[i] + (k1p[i] + two * k2p[i] + two * k3p[i] + k4p[i]) * dt * sixth)
        .collect();
    Ok(ClassicalState { q, p })
}

/// Integrate the Hamilton equations from `state0` for `t_final` with RK4.
pub fn integrate_hamilton<T: Scalar>(
    state0: &ClassicalState<T>,
    sys: &ClassicalSystem,
    t_final: T,
    dt: T,
) -> Result<ClassicalTrajectory<T>, ClassicalError> {
    let steps = (t_final / dt).round().to_f64().unwrap() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(T::zero());
    states.push(state0.clone());
    let mut state = state0.clone();
    for step in 1..=steps {
        state = hamilton_step(sys, &state, dt)?;
        let t = dt * T::from_usize(step).unwrap();
        if state.q.iter().chain(&state.p).any(|v| !v.is_finite()) {
            return Err(ClassicalError::StateNaN {
                time: t.to_f64().unwrap_or(f64::NAN),
            });
        }
        times.push(t);
        states.push(state.clone());
    }
    Ok(ClassicalTrajectory { times, states })
}

/// Density snapshots (plus caustic flags) from transporting `ρ₀` along
/// classical characteristics.
#[derive(Debug, Clone)]
pub struct ClassicalEnsembleRun<T> {
    pub times: Vec<T>,
    pub densities: Vec<ScalarField<T>>,
    /// Particle positions at each snapshot (same order as `times`).
    pub positions: Vec<Vec<Vec<T>>>,
    /// True from the first snapshot where probe characteristics have crossed.
    pub post_caustic: Vec<bool>,
}

/// Normalized density field from a particle cloud (node-cell histogram).
pub fn density_from_positions<T: Scalar>(grid: &Grid<T>, positions: &[Vec<T>]) -> ScalarField<T> {
    let mut counts = vec![T::zero(); grid.len()];
    for pos in positions {
        counts[crate::trajectories::nearest_node(grid, pos)] += T::one();
    }
    let vol = grid.cell_volume();
    let n = T::from_usize(positions.len().max(1)).unwrap();
    let data: Vec<T> = counts
        .iter()
        .enumerate()
        .map(|(flat, &c)| c / (n * grid.trapezoid_weight(flat) * vol))
        .collect();
    ScalarField::from_data(grid.clone(), data)
}

/// Transport `ρ₀` with momenta `p₀ = ∂S₀(q₀)` along Hamilton characteristics.
#[allow(clippy::too_many_arguments)]
pub fn evolve_classical_ensemble<T: Scalar>(
    rho0: &ScalarField<T>,
    s0: &ScalarField<T>,
    sys: &ClassicalSystem,
    t_final: T,
    dt: T,
    n_particles: usize,
    seed: u64,
    snapshot_every: usize,
) -> Result<ClassicalEnsembleRun<T>, ClassicalError> {
    let grid = rho0.grid().clone();
    let total = rho0.integrate();
    if (total - T::one()).abs() > T::lit(1e-6) {
        return Err(ClassicalError::NotNormalized {
            total: total.to_f64().unwrap_or(f64::NAN),
        });
    }
    let dim = grid.dim();
    let ds: Vec<ScalarField<T>> = (0..dim)
        .map(|a| gradient(s0, a))
        .collect::<Result<_, _>>()?;
    let momentum_at = |q: &[T]| -> Vec<T> { ds.iter().map(|d| d.interpolate(q)).collect() };

    let mut particles: Vec<ClassicalState<T>> =
        crate::trajectories::sample_positions(rho0, n_particles, seed)
            .into_iter()
            .map(|q| {
                let p = momentum_at(&q);
                ClassicalState { q, p }
            })
            .collect();

    // caustic probes: a uniform lattice of characteristics over the grid box
    let probe_count = 33usize;
    let mut probes: Vec<ClassicalState<T>> = probe_lattice(&grid, probe_count)
        .into_iter()
        .map(|q| {
            let p = momentum_at(&q);
            ClassicalState { q, p }
        })
        .collect();

    let steps = (t_final / dt).round().to_f64().unwrap() as usize;
    let cadence = snapshot_every.max(1);
    let mut times = vec![T::zero()];
    let mut densities = vec![density_from_positions(
        &grid,
        &particles.iter().map(|s| s.q.clone()).collect::<Vec<_>>(),
    )];
    let mut positions = vec![particles.iter().map(|s| s.q.clone()).collect::<Vec<_>>()];
    let mut post_caustic = vec![probes_crossed(&grid, &probes, probe_count)];
    let mut crossed = post_caustic[0];

    for step in 1..=steps {
        for s in particles.iter_mut() {
            *s = hamilton_step(sys, s, dt)?;
        }
        for s in probes.iter_mut() {
            *s = hamilton_step(sys, s, dt)?;
        }
        if step % cadence == 0 || step == steps {
            let t = dt * T::from_usize(step).unwrap();
            if particles.iter().any(|s| s.q.iter().any(|v| !v.is_finite())) {
                return Err(ClassicalError::StateNaN {
                    time: t.to_f64().unwrap_or(f64::NAN),
                });
            }
            crossed = crossed || probes_crossed(&grid, &probes, probe_count);
            times.push(t);
            let qs: Vec<Vec<T>> = particles.iter().map(|s| s.q.clone()).collect();
            densities.push(density_from_positions(&grid, &qs));
            positions.push(qs);
            post_caustic.push(crossed);
        }
    }
    Ok(ClassicalEnsembleRun {
        times,
        densities,
        positions,
        post_caustic,
    })
}

fn probe_lattice<T: Scalar>(grid: &Grid<T>, per_axis: usize) -> Vec<Vec<T>> {
    let dim = grid.dim();
    let mut out = Vec::with_capacity(per_axis.pow(dim as u32));
    let total = per_axis.pow(dim as u32);
    for k in 0..total {
        let mut idx = k;
        let mut q = Vec::with_capacity(dim);
        for a in 0..dim {
            let i = idx % per_axis;
            idx /= per_axis;
            let ax = grid.axis(a);
            let frac = (T::from_usize(i).unwrap() + T::lit(0.5)) / T::from_usize(per_axis).unwrap();
            q.push(ax.min + (ax.max - ax.min) * frac);
        }
        out.push(q);
    }
    out
}

/// Neighboring probe characteristics crossing (Jacobian sign flip along any
/// axis line) marks the flow as post-caustic.
fn probes_crossed<T: Scalar>(
    grid: &Grid<T>,
    probes: &[ClassicalState<T>],
    per_axis: usize,
) -> bool {
    let dim = grid.dim();
    for a in 0..dim {
        let stride = per_axis.pow(a as u32);
        for (k, probe) in probes.iter().enumerate() {
            let i = (k / stride) % per_axis;
            if i + 1 < per_axis {
                let neighbor = &probes[k + stride];
                if neighbor.q[a] <= probe.q[a] {
                    return true;
                }
            }
        }
    }
    false
}

/// Gap metrics between a quantum density series and a classical one.
#[derive(Debug, Clone)]
pub struct DivergenceMetrics<T> {
    pub time: T,
    pub l1: T,
    pub mean_gap: Vec<T>,
    pub variance_gap: Vec<T>,
}

/// Compare snapshot-by-snapshot; both series must share grids and times.
pub fn classical_limit_compare<T: Scalar>(
    quantum: &[(T, ScalarField<T>)],
    classical: &[(T, ScalarField<T>)],
) -> Result<Vec<DivergenceMetrics<T>>, ClassicalError> {
    if quantum.len() != classical.len() {
        return Err(ClassicalError::RunsIncompatible);
    }
    let mut out = Vec::with_capacity(quantum.len());
    for ((tq, rq), (tc, rc)) in quantum.iter().zip(classical) {
        if (*tq - *tc).abs() > T::lit(1e-9) || rq.grid() != rc.grid() {
            return Err(ClassicalError::RunsIncompatible);
        }
        let grid = rq.grid();
        let vol = grid.cell_volume();
        let mut l1 = T::zero();
        for (flat, (a, b)) in rq.data().iter().zip(rc.data()).enumerate() {
            l1 += grid.trapezoid_weight(flat) * (*a - *b).abs();
        }
        l1 *= vol;
        let dim = grid.dim();
        let mean_gap: Vec<T> = (0..dim)
            .map(|a| (rq.mean_coord(a) - rc.mean_coord(a)).abs())
            .collect();
        let variance_gap: Vec<T> = (0..dim)
            .map(|a| (rq.variance_coord(a) - rc.variance_coord(a)).abs())
            .collect();
        out.push(DivergenceMetrics {
            time: *tq,
            l1,
            mean_gap,
            variance_gap,
        });
    }
    Ok(out)
}
