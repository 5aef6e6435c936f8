//! Guidance-field particle transport.
//!
//! The effective velocity `v^i = g^ij(∂_j S − A_j)` is extracted from a wave
//! field via local wrapped phase differences (so 1D ring windings are fine;
//! genuine vortices in ≥2D are detected by plaquette circulation and
//! reported). Particles follow the field with RK4 between stored velocity
//! frames, and Born-rule agreement is measured as an L1 histogram distance.

use crate::dynamics::{ClassicalSystem, DynamicsError};
use crate::fields::polar::{valid_mask, wrap_to_pi};
use crate::fields::{Boundary, ComplexField, FieldError, Grid, ScalarField};
use crate::rng::Rng;
use crate::Scalar;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("vortex detected: phase circulation {circulation:.3} on plaquette at node {node} (axes {axis_a}, {axis_b})")]
    Vortex {
        node: usize,
        axis_a: usize,
        axis_b: usize,
        circulation: f64,
    },
    #[error("need at least {need} particles, got {got}")]
    TooFewParticles { need: usize, got: usize },
    #[error("no velocity frames supplied")]
    NoFrames,
    #[error("frames start at t={frame_t} but the ensemble is at t={ensemble_t}")]
    FrameGap { frame_t: f64, ensemble_t: f64 },
    #[error("particle {particle} became non-finite")]
    ParticleNaN { particle: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Particle cloud with its snapshot history.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble<T> {
    positions: Vec<Vec<T>>,
    history: Vec<(T, Vec<Vec<T>>)>,
}

impl<T: Scalar> TrajectoryEnsemble<T> {
    pub fn new(positions: Vec<Vec<T>>, t0: T) -> Self {
        let history = vec![(t0, positions.clone())];
        TrajectoryEnsemble { positions, history }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec<T>] {
        &self.positions
    }

    pub fn time(&self) -> T {
        self.history.last().unwrap().0
    }

    /// Snapshots `(t, positions)`, oldest first.
    pub fn history(&self) -> &[(T, Vec<Vec<T>>)] {
        &self.history
    }
}

/// Draw `n` positions from a (nonnegative) density field by stratified
/// inverse-CDF over the node-cell masses, with uniform jitter inside the
/// selected cell. Stratification keeps histogram noise well below plain
/// Monte-Carlo at the same `n`; the draw stays deterministic per seed.
pub fn sample_positions<T: Scalar>(rho: &ScalarField<T>, n: usize, seed: u64) -> Vec<Vec<T>> {
    let grid = rho.grid();
    let mut cum = Vec::with_capacity(grid.len());
    let mut total = T::zero();
    for (flat, &v) in rho.data().iter().enumerate() {
        let mass = grid.trapezoid_weight(flat) * v.max(T::zero());
        total += mass;
        cum.push(total);
    }
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let u =
            (T::from_usize(i).unwrap() + T::lit(rng.uniform())) / T::from_usize(n).unwrap() * total;
        let flat = match cum.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
            Ok(k) | Err(k) => k.min(grid.len() - 1),
        };
        let mut q = grid.coords(flat);
        for (a, qa) in q.iter_mut().enumerate() {
            let dx = grid.spacing(a);
            let jitter = T::lit(rng.uniform() - 0.5) * dx;
            let ax = grid.axis(a);
            *qa = (*qa + jitter).max(ax.min).min(ax.max);
        }
        out.push(q);
    }
    out
}

/// Effective velocity fields `v^i = Σ_j g^ij (∂_j S − A_j)` with
/// `S = |λ|·arg ψ` taken from local wrapped differences. Nodes where the
/// amplitude is under the node floor get the nearest valid neighbor's value.
pub fn effective_velocity<T: Scalar>(
    psi: &ComplexField<T>,
    sys: &ClassicalSystem,
    lambda_abs: T,
) -> Result<Vec<ScalarField<T>>, TrajectoryError> {
    let grid = psi.grid();
    let dim = grid.dim();
    let n = grid.len();
    let theta: Vec<T> = psi.data().iter().map(|z| z.im.atan2(z.re)).collect();
    let valid = valid_mask(psi);

    detect_vortices(grid, &theta, &valid)?;

    // dS/dq_a at valid nodes; usable[flat] marks nodes whose whole stencil was valid
    let mut ds = vec![vec![T::zero(); n]; dim];
    let mut usable = vec![true; n];
    for axis in 0..dim {
        let dx = grid.spacing(axis);
        let points = grid.axis(axis).points;
        let periodic = grid.axis(axis).boundary == Boundary::Periodic;
        for flat in 0..n {
            if !valid[flat] {
                usable[flat] = false;
                continue;
            }
            let i = grid.axis_index(axis, flat);
            let dtheta = if periodic || (i > 0 && i + 1 < points) {
                let p = grid.neighbor(flat, axis, -1).unwrap();
                let m = grid.neighbor(flat, axis, 1).unwrap();
                if !valid[p] || !valid[m] {
                    usable[flat] = false;
                    continue;
                }
                (wrap_to_pi(theta[m] - theta[flat]) + wrap_to_pi(theta[flat] - theta[p]))
                    / (T::lit(2.0) * dx)
            } else if i == 0 {
                let m1 = grid.neighbor(flat, axis, 1).unwrap();
                let m2 = grid.neighbor(flat, axis, 2).unwrap();
                if !valid[m1] || !valid[m2] {
                    usable[flat] = false;
                    continue;
                }
                let t1 = wrap_to_pi(theta[m1] - theta[flat]);
                let t2 = t1 + wrap_to_pi(theta[m2] - theta[m1]);
                (T::lit(4.0) * t1 - t2) / (T::lit(2.0) * dx)
            } else {
                let p1 = grid.neighbor(flat, axis, -1).unwrap();
                let p2 = grid.neighbor(flat, axis, -2).unwrap();
                if !valid[p1] || !valid[p2] {
                    usable[flat] = false;
                    continue;
                }
                let t1 = wrap_to_pi(theta[flat] - theta[p1]);
                let t2 = t1 + wrap_to_pi(theta[p1] - theta[p2]);
                (T::lit(4.0) * t1 - t2) / (T::lit(2.0) * dx)
            };
            ds[axis][flat] = dtheta * lambda_abs;
        }
    }

    let fields = sys.coefficients_on(grid)?;
    let mut velocity: Vec<Vec<T>> = vec![vec![T::zero(); n]; dim];
    for i in 0..dim {
        for j in 0..dim {
            let g = fields.metric[i * dim + j].data();
            let aj = fields.a[j].data();
            for flat in 0..n {
                velocity[i][flat] += g[flat] * (ds[j][flat] - aj[flat]);
            }
        }
    }

    fill_from_nearest_valid(grid, &mut velocity, &usable);

    Ok(velocity
        .into_iter()
        .map(|col| ScalarField::from_data(grid.clone(), col))
        .collect())
}

fn detect_vortices<T: Scalar>(
    grid: &Grid<T>,
    theta: &[T],
    valid: &[bool],
) -> Result<(), TrajectoryError> {
    let dim = grid.dim();
    let pi = T::PI();
    for a in 0..dim {
        for b in (a + 1)..dim {
            for flat in 0..grid.len() {
                let (Some(n1), Some(n3)) = (grid.neighbor(flat, a, 1), grid.neighbor(flat, b, 1))
                else {
                    continue;
                };
                let Some(n2) = grid.neighbor(n1, b, 1) else {
                    continue;
                };
                if !(valid[flat] && valid[n1] && valid[n2] && valid[n3]) {
                    continue;
                }
                let circ = wrap_to_pi(theta[n1] - theta[flat])
                    + wrap_to_pi(theta[n2] - theta[n1])
                    + wrap_to_pi(theta[n3] - theta[n2])
                    + wrap_to_pi(theta[flat] - theta[n3]);
                if circ.abs() > pi {
                    return Err(TrajectoryError::Vortex {
                        node: flat,
                        axis_a: a,
                        axis_b: b,
                        circulation: circ.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Multi-source BFS: overwrite unusable nodes with the value of the nearest
/// usable node (grid graph distance, deterministic visit order).
fn fill_from_nearest_valid<T: Scalar>(grid: &Grid<T>, columns: &mut [Vec<T>], usable: &[bool]) {
    let n = grid.len();
    if usable.iter().all(|&u| u) {
        return;
    }
    let mut source: Vec<Option<usize>> = usable
        .iter()
        .enumerate()
        .map(|(k, &u)| if u { Some(k) } else { None })
        .collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&k| usable[k]).collect();
    while let Some(cur) = queue.pop_front() {
        for axis in 0..grid.dim() {
            for step in [-1isize, 1] {
                if let Some(nb) = grid.neighbor(cur, axis, step) {
                    if source[nb].is_none() {
                        source[nb] = source[cur];
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    for col in columns.iter_mut() {
        let snapshot = col.clone();
        for k in 0..n {
            if !usable[k] {
                if let Some(src) = source[k] {
                    col[k] = snapshot[src];
                }
            }
        }
    }
}

/// Advect the ensemble through time-indexed velocity frames: RK4 in time with
/// multilinear spatial interpolation and linear interpolation between frames.
/// Box boundaries reflect, periodic axes wrap. Positions are recorded at every
/// frame time.
pub fn advect<T: Scalar>(
    ensemble: &TrajectoryEnsemble<T>,
    frames: &[(T, Vec<ScalarField<T>>)],
    substeps_per_frame: usize,
) -> Result<TrajectoryEnsemble<T>, TrajectoryError> {
    if frames.is_empty() {
        return Err(TrajectoryError::NoFrames);
    }
    let t0 = ensemble.time();
    let gap = (frames[0].0 - t0).abs().to_f64().unwrap_or(f64::NAN);
    if gap > 1e-9 {
        return Err(TrajectoryError::FrameGap {
            frame_t: frames[0].0.to_f64().unwrap_or(f64::NAN),
            ensemble_t: t0.to_f64().unwrap_or(f64::NAN),
        });
    }
    let grid = frames[0].1[0].grid().clone();
    let dim = grid.dim();
    let substeps = substeps_per_frame.max(1);

    let mut out = ensemble.clone();
    for w in frames.windows(2) {
        let (ta, va) = (&w[0].0, &w[0].1);
        let (tb, vb) = (&w[1].0, &w[1].1);
        let span = *tb - *ta;
        let dt = span / T::from_usize(substeps).unwrap();
        // velocity at fractional time θ ∈ [0,1] between the frames
        let vel_at = |x: &[T], theta: T| -> Vec<T> {
            (0..dim)
                .map(|i| {
                    let a = va[i].interpolate(x);
                    let b = vb[i].interpolate(x);
                    a + (b - a) * theta
                })
                .collect()
        };
        for (pid, pos) in out.positions.iter_mut().enumerate() {
            for s in 0..substeps {
                let th0 = T::from_usize(s).unwrap() / T::from_usize(substeps).unwrap();
                let th_half =
                    (T::from_usize(s).unwrap() + T::lit(0.5)) / T::from_usize(substeps).unwrap();
                let th1 = T::from_usize(s + 1).unwrap() / T::from_usize(substeps).unwrap();
                let k1 = vel_at(pos, th0);
                let x2: Vec<T> = pos
                    .iter()
                    .zip(&k1)
                    .map(|(&x, &k)| x + k * dt * T::lit(0.5))
                    .collect();
                let k2 = vel_at(&x2, th_half);
                let x3: Vec<T> = pos
                    .iter()
                    .zip(&k2)
                    .map(|(&x, &k)| x + k * dt * T::lit(0.5))
                    .collect();
                let k3 = vel_at(&x3, th_half);
                let x4: Vec<T> = pos.iter().zip(&k3).map(|(&x, &k)| x + k * dt).collect();
                let k4 = vel_at(&x4, th1);
                for a in 0..dim {
                    let incr = (k1[a] + T::lit(2.0) * k2[a] + T::lit(2.0) * k3[a] + k4[a]) * dt
                        / T::lit(6.0);
                    pos[a] += incr;
                }
                enforce_bounds(&grid, pos);
            }
            if pos.iter().any(|v| !v.is_finite()) {
                return Err(TrajectoryError::ParticleNaN { particle: pid });
            }
        }
        out.history.push((*tb, out.positions.clone()));
    }
    Ok(out)
}

fn enforce_bounds<T: Scalar>(grid: &Grid<T>, pos: &mut [T]) {
    for a in 0..grid.dim() {
        let ax = grid.axis(a);
        let span = ax.max - ax.min;
        match ax.boundary {
            Boundary::Periodic => {
                pos[a] = pos[a] - ((pos[a] - ax.min) / span).floor() * span;
            }
            Boundary::Box => {
                // mirror reflection, repeated until inside
                let mut x = pos[a];
                for _ in 0..64 {
                    if x < ax.min {
                        x = ax.min + (ax.min - x);
                    } else if x > ax.max {
                        x = ax.max - (x - ax.max);
                    } else {
                        break;
                    }
                }
                pos[a] = x.max(ax.min).min(ax.max);
            }
        }
    }
}

/// L1 distance in [0, 2] between the particle histogram (node-cell binning)
/// and the `|ψ|²` cell masses.
pub fn born_distance<T: Scalar>(
    positions: &[Vec<T>],
    psi: &ComplexField<T>,
) -> Result<T, TrajectoryError> {
    if positions.len() < 100 {
        return Err(TrajectoryError::TooFewParticles {
            need: 100,
            got: positions.len(),
        });
    }
    let grid = psi.grid();
    let mut masses: Vec<T> = (0..grid.len())
        .map(|flat| grid.trapezoid_weight(flat) * psi.data()[flat].norm_sqr())
        .collect();
    let total: T = masses.iter().copied().sum();
    for m in &mut masses {
        *m /= total;
    }
    let mut hist = vec![T::zero(); grid.len()];
    let inc = T::one() / T::from_usize(positions.len()).unwrap();
    for pos in positions {
        let flat = nearest_node(grid, pos);
        hist[flat] += inc;
    }
    let mut l1 = T::zero();
    for (h, m) in hist.iter().zip(&masses) {
        l1 += (*h - *m).abs();
    }
    Ok(l1)
}

/// Re-express the cell masses of `|ψ|²` on a coarser box grid with
/// `points_per_axis` nodes per axis (same extents). Each fine node's cell
/// mass is split across coarse cells by interval overlap per axis, so aligned
/// grids do not alias. The result is a complex field whose cell masses equal
/// the aggregated fine-grid masses, suitable as the reference of
/// [`born_distance`] when the statistical binning resolution should be
/// coarser than the propagation grid.
pub fn binned_density_field<T: Scalar>(
    psi: &ComplexField<T>,
    points_per_axis: usize,
) -> Result<ComplexField<T>, FieldError> {
    let fine = psi.grid();
    let dim = fine.dim();
    let axes: Vec<_> = fine
        .axes()
        .iter()
        .map(|ax| crate::fields::AxisSpec {
            min: ax.min,
            max: ax.max,
            points: points_per_axis,
            boundary: ax.boundary,
        })
        .collect();
    let coarse = Grid::new(axes)?;
    let half = T::lit(0.5);

    // per-axis: fine index -> [(coarse index, overlap fraction); ≤2]
    let mut splits: Vec<Vec<Vec<(usize, T)>>> = Vec::with_capacity(dim);
    for a in 0..dim {
        let ax = fine.axis(a);
        let df = fine.spacing(a);
        let dc = coarse.spacing(a);
        let mut axis_split = Vec::with_capacity(ax.points);
        for i in 0..ax.points {
            let x = fine.axis_coord(a, i);
            let mut lo = x - half * df;
            let mut hi = x + half * df;
            if ax.boundary == Boundary::Box {
                lo = lo.max(ax.min);
                hi = hi.min(ax.max);
            }
            let width = hi - lo;
            // coarse cells are [center − dc/2, center + dc/2]
            let first = ((lo - (coarse.axis(a).min - half * dc)) / dc)
                .floor()
                .to_f64()
                .map(|v| (v.max(0.0) as usize).min(points_per_axis - 1))
                .unwrap_or(0);
            let mut parts = Vec::with_capacity(2);
            let mut k = first;
            loop {
                let c = coarse.axis_coord(a, k);
                let cell_lo = c - half * dc;
                let cell_hi = c + half * dc;
                let overlap = (hi.min(cell_hi) - lo.max(cell_lo)).max(T::zero());
                if overlap > T::zero() {
                    parts.push((k, overlap / width));
                }
                if cell_hi >= hi || k + 1 >= points_per_axis {
                    break;
                }
                k += 1;
            }
            axis_split.push(parts);
        }
        splits.push(axis_split);
    }

    let mut masses = vec![T::zero(); coarse.len()];
    let fine_vol = fine.cell_volume();
    for (flat, z) in psi.data().iter().enumerate() {
        let mass = fine.trapezoid_weight(flat) * z.norm_sqr() * fine_vol;
        if mass == T::zero() {
            continue;
        }
        // tensor product of the per-axis splits
        let mut targets: Vec<(usize, T)> = vec![(0, T::one())];
        for a in 0..dim {
            let i = fine.axis_index(a, flat);
            let mut next = Vec::with_capacity(targets.len() * 2);
            for &(base, frac) in &targets {
                for &(k, part) in &splits[a][i] {
                    next.push((base + k * coarse.stride(a), frac * part));
                }
            }
            targets = next;
        }
        for (target, frac) in targets {
            masses[target] += mass * frac;
        }
    }
    let coarse_vol = coarse.cell_volume();
    let data: Vec<crate::Complex<T>> = masses
        .iter()
        .enumerate()
        .map(|(flat, &m)| {
            let w = coarse.trapezoid_weight(flat);
            crate::Complex::new((m / (w * coarse_vol)).max(T::zero()).sqrt(), T::zero())
        })
        .collect();
    Ok(ComplexField::from_data(coarse, data))
}

/// Flat index of the node whose cell contains `pos`.
pub fn nearest_node<T: Scalar>(grid: &Grid<T>, pos: &[T]) -> usize {
    let mut flat = 0usize;
    for a in 0..grid.dim() {
        let ax = grid.axis(a);
        let dx = grid.spacing(a);
        let span = ax.max - ax.min;
        let mut x = pos[a];
        if ax.boundary == Boundary::Periodic {
            x = x - ((x - ax.min) / span).floor() * span;
        }
        let i = ((x - ax.min) / dx)
            .round()
            .to_f64()
            .map(|v| v.max(0.0) as usize)
            .unwrap_or(0);
        let i = match ax.boundary {
            Boundary::Box => i.min(ax.points - 1),
            Boundary::Periodic => i % ax.points,
        };
        flat += i * grid.stride(a);
    }
    flat
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::propagate;
    use crate::exprlang::{parse_expression, Expression};
    use crate::fields::normalize;
    use crate::Complex;

    fn plane_wave(grid: &Grid<f64>, k: f64) -> ComplexField<f64> {
        ComplexField::from_fn(grid.clone(), |q| {
            Complex::new((k * q[0]).cos(), (k * q[0]).sin())
        })
    }

    #[test]
    fn plane_wave_velocity_is_k_over_m() {
        let (k, mass) = (2.0, 1.5);
        let grid = Grid::line(-5.0f64, 5.0, 201).unwrap();
        let psi = plane_wave(&grid, k);
        let sys = ClassicalSystem::free(1, mass);
        let v = effective_velocity(&psi, &sys, 1.0).unwrap();
        for (i, &vi) in v[0].data().iter().enumerate() {
            assert!((vi - k / mass).abs() < 1e-9, "node {i}: {vi}");
        }
    }

    #[test]
    fn real_gaussian_velocity_is_zero() {
        let grid = Grid::line(-6.0f64, 6.0, 201).unwrap();
        let psi = ComplexField::from_fn(grid, |q| Complex::new((-q[0] * q[0] / 2.0).exp(), 0.0));
        let sys = ClassicalSystem::free(1, 1.0);
        let v = effective_velocity(&psi, &sys, 1.0).unwrap();
        assert!(v[0].data().iter().all(|&vi| vi.abs() < 1e-12));
    }

    #[test]
    fn minimal_coupling_shifts_velocity() {
        let (k, a_const, mass) = (2.0, 0.7, 1.0);
        let grid = Grid::line(-5.0f64, 5.0, 201).unwrap();
        let psi = plane_wave(&grid, k);
        let sys = ClassicalSystem::new(
            1,
            vec![Expression::constant(1.0 / mass)],
            vec![Expression::constant(a_const)],
            Expression::constant(0.0),
        )
        .unwrap();
        let v = effective_velocity(&psi, &sys, 1.0).unwrap();
        for &vi in v[0].data() {
            assert!((vi - (k - a_const) / mass).abs() < 1e-9);
        }
    }

    #[test]
    fn velocity_scales_with_lambda() {
        // S = |λ|·arg ψ, so the same phase pattern carries more action at larger |λ|
        let grid = Grid::line(-5.0f64, 5.0, 201).unwrap();
        let psi = plane_wave(&grid, 1.0);
        let sys = ClassicalSystem::free(1, 1.0);
        let v1 = effective_velocity(&psi, &sys, 1.0).unwrap();
        let v2 = effective_velocity(&psi, &sys, 2.0).unwrap();
        for (a, b) in v1[0].data().iter().zip(v2[0].data()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_velocity_translates_exactly() {
        let grid = Grid::line(0.0f64, 10.0, 51).unwrap();
        let v = 1.25;
        let frames: Vec<(f64, Vec<ScalarField<f64>>)> = (0..=4)
            .map(|k| {
                (
                    k as f64 * 0.5,
                    vec![ScalarField::from_fn(grid.clone(), |_| v)],
                )
            })
            .collect();
        let ens = TrajectoryEnsemble::new(vec![vec![1.0], vec![2.5]], 0.0);
        let out = advect(&ens, &frames, 4).unwrap();
        assert!((out.positions()[0][0] - (1.0 + v * 2.0)).abs() < 1e-12);
        assert!((out.positions()[1][0] - (2.5 + v * 2.0)).abs() < 1e-12);
        assert_eq!(out.history().len(), 5);
    }

    #[test]
    fn coherent_state_mean_follows_classical_oscillation() {
        let q0 = 1.0;
        let grid = Grid::line(-8.0f64, 8.0, 513).unwrap();
        let psi0 = normalize(&ComplexField::from_fn(grid.clone(), |q| {
            let x = q[0] - q0;
            Complex::new((-x * x / 2.0).exp(), 0.0)
        }))
        .unwrap();
        let coords = vec!["q1".to_string()];
        let sys =
            ClassicalSystem::with_potential(1, 1.0, parse_expression("q1^2/2", &coords).unwrap());
        let period = std::f64::consts::TAU;
        let snaps = propagate(&psi0, &sys, 1.0, period, period / 4096.0, 16).unwrap();
        let frames: Vec<(f64, Vec<ScalarField<f64>>)> = snaps
            .iter()
            .map(|(t, psi)| (*t, effective_velocity(psi, &sys, 1.0).unwrap()))
            .collect();
        let n = 2000;
        let ens = TrajectoryEnsemble::new(sample_positions(&psi0.density(), n, 42), 0.0);
        let out = advect(&ens, &frames, 1).unwrap();
        for (t, positions) in out.history().iter().step_by(32) {
            let mean: f64 = positions.iter().map(|p| p[0]).sum::<f64>() / n as f64;
            let expected = q0 * t.cos();
            assert!(
                (mean - expected).abs() < 1e-3 + 3.0 * (0.5f64 / n as f64).sqrt(),
                "t={t}: mean {mean} vs {expected}"
            );
        }
    }

    #[test]
    fn equivariance_for_free_gaussian() {
        // the same run must pass at two grid resolutions
        equivariance_case(481);
        equivariance_case(241);
    }

    fn equivariance_case(points: usize) {
        let grid = Grid::line(-12.0f64, 12.0, points).unwrap();
        let psi0 = normalize(&ComplexField::from_fn(grid.clone(), |q| {
            Complex::new((-q[0] * q[0] / 2.0).exp(), 0.0)
        }))
        .unwrap();
        let sys = ClassicalSystem::free(1, 1.0);
        let snaps = propagate(&psi0, &sys, 1.0, 1.0, 1e-3, 50).unwrap();
        let frames: Vec<(f64, Vec<ScalarField<f64>>)> = snaps
            .iter()
            .map(|(t, psi)| (*t, effective_velocity(psi, &sys, 1.0).unwrap()))
            .collect();
        let n = 10_000;
        let ens = TrajectoryEnsemble::new(sample_positions(&psi0.density(), n, 7), 0.0);
        let out = advect(&ens, &frames, 1).unwrap();
        // compare each recorded snapshot against the matching wave snapshot,
        // binned at a resolution where 10⁴ samples resolve the density
        for ((t, positions), (ts, psi)) in out.history().iter().zip(snaps.iter()) {
            assert_eq!(t, ts);
            let reference = binned_density_field(psi, 97).unwrap();
            let d = born_distance(positions, &reference).unwrap();
            assert!(d < 0.05, "{points} points, t={t}: born distance {d}");
        }
    }

    #[test]
    fn born_distance_detects_concentration() {
        let grid = Grid::line(-5.0f64, 5.0, 101).unwrap();
        let psi = normalize(&ComplexField::from_fn(grid, |q| {
            Complex::new((-q[0] * q[0] / 2.0).exp(), 0.0)
        }))
        .unwrap();
        let all_at_origin = vec![vec![0.0]; 500];
        let d = born_distance(&all_at_origin, &psi).unwrap();
        assert!(d > 1.5, "distance {d}");
    }

    #[test]
    fn born_distance_shrinks_with_sample_size() {
        let grid = Grid::line(-6.0f64, 6.0, 121).unwrap();
        let psi = normalize(&ComplexField::from_fn(grid, |q| {
            Complex::new((-q[0] * q[0] / 2.0).exp(), 0.0)
        }))
        .unwrap();
        let rho = psi.density();
        let d_small = born_distance(&sample_positions(&rho, 400, 3), &psi).unwrap();
        let d_large = born_distance(&sample_positions(&rho, 40_000, 3), &psi).unwrap();
        assert!(d_large < d_small, "{d_large} !< {d_small}");
        assert!(d_large < 0.06, "{d_large}");
    }

    #[test]
    fn too_few_particles_is_an_error() {
        let grid = Grid::line(-1.0f64, 1.0, 11).unwrap();
        let psi = normalize(&ComplexField::from_fn(grid, |_| Complex::new(1.0, 0.0))).unwrap();
        assert!(matches!(
            born_distance(&vec![vec![0.0]; 99], &psi),
            Err(TrajectoryError::TooFewParticles { got: 99, .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let grid = Grid::line(-3.0f64, 3.0, 61).unwrap();
        let rho = ScalarField::from_fn(grid, |q| (-q[0] * q[0]).exp());
        assert_eq!(
            sample_positions(&rho, 50, 11),
            sample_positions(&rho, 50, 11)
        );
    }

    #[test]
    fn vortex_is_detected_in_two_dimensions() {
        // even point count keeps the core off the nodes, so the plaquette
        // containing it has four phase-defined corners
        let axis = crate::fields::AxisSpec {
            min: -2.0,
            max: 2.0,
            points: 40,
            boundary: Boundary::Box,
        };
        let grid = Grid::new(vec![axis, axis]).unwrap();
        // ψ = (x + iy): a unit-winding vortex at the origin
        let psi = ComplexField::from_fn(grid, |q| Complex::new(q[0], q[1]));
        let sys = ClassicalSystem::free(2, 1.0);
        let err = effective_velocity(&psi, &sys, 1.0).unwrap_err();
        assert!(matches!(err, TrajectoryError::Vortex { .. }));
    }

    #[test]
    fn periodic_ring_winding_is_allowed() {
        // a winding plane wave on a ring is a fine velocity field (v = k/m)
        let points = 64;
        let grid = Grid::new(vec![crate::fields::AxisSpec {
            min: 0.0,
            max: std::f64::consts::TAU,
            points,
            boundary: Boundary::Periodic,
        }])
        .unwrap();
        let psi = plane_wave(&grid, 1.0);
        let sys = ClassicalSystem::free(1, 1.0);
        let v = effective_velocity(&psi, &sys, 1.0).unwrap();
        for &vi in v[0].data() {
            assert!((vi - 1.0).abs() < 1e-9);
        }
    }
}
