//! Polar `(R, S)` decomposition of a complex field: `Ψ = R·exp(iS/|λ|)`.
//!
//! `S` carries action units, so the raw phase is scaled by `|λ|`. The phase is
//! unwrapped by a lexicographic sweep from the grid origin; at nodes where
//! `R` falls below the node floor the phase is carried over from the nearest
//! valid neighbor on the sweep path. On periodic axes a nonzero loop residue
//! means the phase is genuinely multivalued (a vortex or winding mode) and is
//! reported as an error rather than silently patched.

use super::{ComplexField, FieldError, Grid, ScalarField, NODE_FLOOR_REL};
use crate::{Complex, Scalar};

/// Amplitude/phase pair with the `|λ|` that scales the phase into action units.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPair<T> {
    pub amplitude: ScalarField<T>,
    pub action: ScalarField<T>,
    pub lambda_abs: T,
}

impl<T: Scalar> PolarPair<T> {
    pub fn grid(&self) -> &Grid<T> {
        self.amplitude.grid()
    }
}

pub(crate) fn wrap_to_pi<T: Scalar>(x: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut y = x % two_pi;
    if y > pi {
        y -= two_pi;
    } else if y < -pi {
        y += two_pi;
    }
    y
}

/// Decompose `psi` into `(R, S)` with `S = |λ|·unwrapped_arg(ψ)`.
pub fn to_polar<T: Scalar>(
    psi: &ComplexField<T>,
    lambda_abs: T,
) -> Result<PolarPair<T>, FieldError> {
    assert!(lambda_abs > T::zero(), "lambda_abs must be positive");
    let grid = psi.grid().clone();
    let n = grid.len();
    let floor = psi.max_abs() * T::lit(NODE_FLOOR_REL);

    let raw: Vec<T> = psi.data().iter().map(|z| z.im.atan2(z.re)).collect();
    let amp: Vec<T> = psi.data().iter().map(|z| z.norm()).collect();
    let valid: Vec<bool> = amp.iter().map(|&r| r > floor).collect();

    check_loop_residues(&grid, &raw, &valid)?;

    // Lexicographic sweep: each node unwraps against an already-visited
    // neighbor (the -1 neighbor along the last axis with nonzero index).
    // `anchor` tracks the raw phase of the nearest valid node on the path.
    let mut unwrapped = vec![T::zero(); n];
    let mut anchor = vec![T::zero(); n];
    unwrapped[0] = raw[0];
    anchor[0] = raw[0];
    for flat in 1..n {
        let mut reference = None;
        for a in (0..grid.dim()).rev() {
            if grid.axis_index(a, flat) > 0 {
                reference = Some(flat - grid.stride(a));
                break;
            }
        }
        let r = reference.expect("every node after the origin has a visited neighbor");
        if valid[flat] {
            unwrapped[flat] = unwrapped[r] + wrap_to_pi(raw[flat] - anchor[r]);
            anchor[flat] = raw[flat];
        } else {
            unwrapped[flat] = unwrapped[r];
            anchor[flat] = anchor[r];
        }
    }

    let action: Vec<T> = unwrapped.iter().map(|&th| th * lambda_abs).collect();
    Ok(PolarPair {
        amplitude: ScalarField::from_data(grid.clone(), amp),
        action: ScalarField::from_data(grid, action),
        lambda_abs,
    })
}

/// Reconstruct `Ψ = R·exp(iS/|λ|)`.
pub fn from_polar<T: Scalar>(pair: &PolarPair<T>) -> ComplexField<T> {
    let grid = pair.amplitude.grid().clone();
    let inv = T::one() / pair.lambda_abs;
    let data = pair
        .amplitude
        .data()
        .iter()
        .zip(pair.action.data())
        .map(|(&r, &s)| {
            let th = s * inv;
            Complex::new(r * th.cos(), r * th.sin())
        })
        .collect();
    ComplexField::from_data(grid, data)
}

/// Sum of wrapped phase increments around every fully-valid periodic ring.
/// A residue beyond π/2 is a genuine winding and fails the unwrap.
fn check_loop_residues<T: Scalar>(
    grid: &Grid<T>,
    raw: &[T],
    valid: &[bool],
) -> Result<(), FieldError> {
    for a in 0..grid.dim() {
        if grid.axis(a).boundary != super::Boundary::Periodic {
            continue;
        }
        let points = grid.axis(a).points;
        for start in grid.line_starts(a) {
            let mut residue = T::zero();
            let mut all_valid = true;
            let mut cur = start;
            for _ in 0..points {
                let next = grid.neighbor(cur, a, 1).unwrap();
                if !valid[cur] || !valid[next] {
                    all_valid = false;
                    break;
                }
                residue += wrap_to_pi(raw[next] - raw[cur]);
                cur = next;
            }
            if all_valid && residue.abs() > T::FRAC_PI_2() {
                return Err(FieldError::UnwrapLoop {
                    axis: a,
                    line_start: start,
                    residue: residue.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
    }
    Ok(())
}

/// Node mask used by residual checks and velocity extraction: true where the
/// amplitude is above the node floor.
pub(crate) fn valid_mask<T: Scalar>(psi: &ComplexField<T>) -> Vec<bool> {
    let floor = psi.max_abs() * T::lit(NODE_FLOOR_REL);
    psi.data().iter().map(|z| z.norm() > floor).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{normalize, AxisSpec, Boundary};

    fn line(min: f64, max: f64, points: usize) -> Grid<f64> {
        Grid::line(min, max, points).unwrap()
    }

    #[test]
    fn plane_wave_on_box_grid() {
        let grid = line(0.0, 10.0, 101);
        let psi = ComplexField::from_fn(grid.clone(), |q| Complex::new(q[0].cos(), q[0].sin()));
        let pair = to_polar(&psi, 1.0).unwrap();
        for i in 0..grid.len() {
            let q = grid.axis_coord(0, i);
            assert!((pair.amplitude.data()[i] - 1.0).abs() < 1e-12);
            assert!((pair.action.data()[i] - q).abs() < 1e-10, "node {i}");
        }
    }

    #[test]
    fn real_positive_field_has_zero_action() {
        let grid = line(-5.0, 5.0, 64);
        let psi = ComplexField::from_fn(grid, |q| Complex::new((-q[0] * q[0]).exp(), 0.0));
        let pair = to_polar(&psi, 1.0).unwrap();
        assert!(pair.action.data().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn action_scales_with_lambda() {
        let grid = line(0.0, 4.0, 41);
        let psi = ComplexField::from_fn(grid.clone(), |q| Complex::new(q[0].cos(), q[0].sin()));
        let pair = to_polar(&psi, 2.0).unwrap();
        for i in 0..grid.len() {
            let q = grid.axis_coord(0, i);
            assert!((pair.action.data()[i] - 2.0 * q).abs() < 1e-10);
        }
    }

    #[test]
    fn from_polar_unit_constant() {
        let grid = line(0.0, 1.0, 8);
        let pair = PolarPair {
            amplitude: ScalarField::from_fn(grid.clone(), |_| 1.0),
            action: ScalarField::zeros(grid),
            lambda_abs: 1.0,
        };
        let psi = from_polar(&pair);
        for z in psi.data() {
            assert!((z - Complex::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn roundtrip_within_tolerance() {
        let grid = line(-6.0, 6.0, 201);
        let psi = normalize(&ComplexField::from_fn(grid.clone(), |q| {
            let r = (-q[0] * q[0] / 2.0).exp();
            let s = 1.7 * q[0] + 0.3 * q[0] * q[0];
            Complex::new(r * s.cos(), r * s.sin())
        }))
        .unwrap();
        let pair = to_polar(&psi, 1.0).unwrap();
        let back = from_polar(&pair);
        let floor = 1e-12 * psi.max_abs();
        for (a, b) in psi.data().iter().zip(back.data()) {
            if a.norm() > floor {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_with_linear_phase_matches_closed_form() {
        let grid = line(-8.0, 8.0, 257);
        let (k, hbar) = (2.5, 1.0);
        let pair = PolarPair {
            amplitude: ScalarField::from_fn(grid.clone(), |q| (-q[0] * q[0] / 4.0).exp()),
            action: ScalarField::from_fn(grid.clone(), |q| k * q[0]),
            lambda_abs: hbar,
        };
        let psi = from_polar(&pair);
        for i in 0..grid.len() {
            let q = grid.axis_coord(0, i);
            let expect = Complex::new(0.0, k * q / hbar).exp() * (-q * q / 4.0).exp();
            assert!((psi.data()[i] - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn phase_does_not_change_norm() {
        let grid = line(-7.0, 7.0, 301);
        let pair = PolarPair {
            amplitude: ScalarField::from_fn(grid.clone(), |q| (-q[0] * q[0] / 2.0).exp()),
            action: ScalarField::from_fn(grid.clone(), |q| (3.0 * q[0]).sin() * 2.0),
            lambda_abs: 0.7,
        };
        let psi = from_polar(&pair);
        let r_sq = pair.amplitude.map(|r| r * r).integrate();
        assert!((psi.norm_sq() - r_sq).abs() < 1e-12);
    }

    #[test]
    fn winding_mode_on_periodic_axis_is_rejected() {
        let grid = Grid::new(vec![AxisSpec {
            min: 0.0,
            max: std::f64::consts::TAU,
            points: 64,
            boundary: Boundary::Periodic,
        }])
        .unwrap();
        // e^{iq} has winding number 1 around the ring: S would be multivalued.
        let psi = ComplexField::from_fn(grid, |q| Complex::new(q[0].cos(), q[0].sin()));
        let err = to_polar(&psi, 1.0).unwrap_err();
        assert!(matches!(err, FieldError::UnwrapLoop { axis: 0, .. }));
    }

    #[test]
    fn phase_carried_through_amplitude_node() {
        let grid = line(-4.0, 4.0, 161);
        // amplitude dips to ~0 at q=0; constant phase elsewhere
        let psi = ComplexField::from_fn(grid.clone(), |q| {
            let r = q[0].abs().powi(3).min(1.0);
            Complex::new(0.0, r) // phase π/2 where defined
        });
        let pair = to_polar(&psi, 1.0).unwrap();
        let half_pi = std::f64::consts::FRAC_PI_2;
        for i in 0..grid.len() {
            assert!(
                (pair.action.data()[i] - half_pi).abs() < 1e-10,
                "node {i}: {}",
                pair.action.data()[i]
            );
        }
    }
}
