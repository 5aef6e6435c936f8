//! Uniform tensor-product grids, scalar/complex fields, stencils and quadrature.
//!
//! Grids are row-major with the **last axis fastest**. Fields are immutable
//! values after construction; every operation allocates its output, so fields
//! can be shared freely across workers.

pub(crate) mod polar;
pub mod snapshot;

pub use polar::{from_polar, to_polar, PolarPair};

use crate::{Complex, Scalar};
use thiserror::Error;

/// Hard cap on grid size so a typo in a config cannot OOM the host.
pub const MAX_NODES: usize = 1 << 26;

/// Fraction of `max|ψ|` below which a node is treated as a phase singularity.
pub const NODE_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Dirichlet-zero walls just outside the first/last node.
    Box,
    /// Wrap-around; node `points-1` neighbors node `0`.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec<T> {
    pub min: T,
    pub max: T,
    pub points: usize,
    pub boundary: Boundary,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("axis {axis}: need at least 3 points, got {points}")]
    TooFewPoints { axis: usize, points: usize },
    #[error("axis {axis}: max must exceed min")]
    EmptyAxis { axis: usize },
    #[error("grid has {nodes} nodes, exceeding the budget of {max}")]
    GridTooLarge { nodes: usize, max: usize },
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field norm is zero; cannot normalize")]
    ZeroNorm,
    #[error("non-finite value at node {flat}")]
    NonFinite { flat: usize },
    #[error(
        "phase unwrap failure on periodic axis {axis}: loop residue {residue:.3e} (winding detected at line starting at node {line_start})"
    )]
    UnwrapLoop {
        axis: usize,
        line_start: usize,
        residue: f64,
    },
}

/// Uniform tensor-product grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    axes: Vec<AxisSpec<T>>,
    /// Row-major strides; last axis has stride 1.
    strides: Vec<usize>,
    len: usize,
}

impl<T: Scalar> Grid<T> {
    pub fn new(axes: Vec<AxisSpec<T>>) -> Result<Self, FieldError> {
        assert!(!axes.is_empty(), "grid needs at least one axis");
        let mut len = 1usize;
        for (a, ax) in axes.iter().enumerate() {
            if ax.points < 3 {
                return Err(FieldError::TooFewPoints {
                    axis: a,
                    points: ax.points,
                });
            }
            if ax.max <= ax.min {
                return Err(FieldError::EmptyAxis { axis: a });
            }
            len = len.saturating_mul(ax.points);
        }
        if len > MAX_NODES {
            return Err(FieldError::GridTooLarge {
                nodes: len,
                max: MAX_NODES,
            });
        }
        let mut strides = vec![1usize; axes.len()];
        for a in (0..axes.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].points;
        }
        Ok(Grid { axes, strides, len })
    }

    /// 1D box grid shorthand.
    pub fn line(min: T, max: T, points: usize) -> Result<Self, FieldError> {
        Grid::new(vec![AxisSpec {
            min,
            max,
            points,
            boundary: Boundary::Box,
        }])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[AxisSpec<T>] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &AxisSpec<T> {
        &self.axes[a]
    }

    pub fn stride(&self, a: usize) -> usize {
        self.strides[a]
    }

    /// Node spacing. Periodic axes treat `max` as the wrap point, so the last
    /// node sits one spacing before it.
    pub fn spacing(&self, a: usize) -> T {
        let ax = &self.axes[a];
        let span = ax.max - ax.min;
        match ax.boundary {
            Boundary::Box => span / T::from_usize(ax.points - 1).unwrap(),
            Boundary::Periodic => span / T::from_usize(ax.points).unwrap(),
        }
    }

    pub fn axis_coord(&self, a: usize, i: usize) -> T {
        self.axes[a].min + self.spacing(a) * T::from_usize(i).unwrap()
    }

    pub fn axis_index(&self, a: usize, flat: usize) -> usize {
        (flat / self.strides[a]) % self.axes[a].points
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| self.axis_index(a, flat)).collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords_into(&self, flat: usize, out: &mut [T]) {
        for a in 0..self.dim() {
            out[a] = self.axis_coord(a, self.axis_index(a, flat));
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.coords_into(flat, &mut out);
        out
    }

    /// Flat index of the neighbor `step` nodes away along `a`, or `None` when
    /// it would leave a box axis. Periodic axes wrap.
    pub fn neighbor(&self, flat: usize, a: usize, step: isize) -> Option<usize> {
        let n = self.axes[a].points as isize;
        let i = self.axis_index(a, flat) as isize;
        let j = i + step;
        let j = match self.axes[a].boundary {
            Boundary::Box => {
                if j < 0 || j >= n {
                    return None;
                }
                j
            }
            Boundary::Periodic => j.rem_euclid(n),
        };
        Some((flat as isize + (j - i) * self.strides[a] as isize) as usize)
    }

    /// Volume of one grid cell, `∏_a Δx_a`.
    pub fn cell_volume(&self) -> T {
        (0..self.dim()).fold(T::one(), |acc, a| acc * self.spacing(a))
    }

    /// Trapezoidal quadrature weight of a node (1 in the interior, halved at
    /// each box endpoint it touches; periodic axes weigh every node equally).
    pub fn trapezoid_weight(&self, flat: usize) -> T {
        let mut w = T::one();
        let half = T::lit(0.5);
        for a in 0..self.dim() {
            if self.axes[a].boundary == Boundary::Box {
                let i = self.axis_index(a, flat);
                if i == 0 || i == self.axes[a].points - 1 {
                    w *= half;
                }
            }
        }
        w
    }

    /// True if the multi-index is within `margin` nodes of any box boundary.
    pub fn near_boundary(&self, flat: usize, margin: usize) -> bool {
        for a in 0..self.dim() {
            if self.axes[a].boundary == Boundary::Box {
                let i = self.axis_index(a, flat);
                if i < margin || i + margin >= self.axes[a].points {
                    return true;
                }
            }
        }
        false
    }

    /// Start nodes of every grid line along axis `a`.
    pub fn line_starts(&self, a: usize) -> Vec<usize> {
        (0..self.len)
            .filter(|&flat| self.axis_index(a, flat) == 0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid<T>,
    data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<T> {
    grid: Grid<T>,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> ScalarField<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        let data = vec![T::zero(); grid.len()];
        ScalarField { grid, data }
    }

    pub fn from_data(grid: Grid<T>, data: Vec<T>) -> Self {
        assert_eq!(grid.len(), data.len());
        ScalarField { grid, data }
    }

    pub fn from_fn(grid: Grid<T>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let mut q = vec![T::zero(); grid.dim()];
        let data = (0..grid.len())
            .map(|flat| {
                grid.coords_into(flat, &mut q);
                f(&q)
            })
            .collect();
        ScalarField { grid, data }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        Ok(ScalarField {
            grid: self.grid.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Trapezoidal integral over the grid.
    pub fn integrate(&self) -> T {
        let vol = self.grid.cell_volume();
        let mut acc = T::zero();
        for (flat, &v) in self.data.iter().enumerate() {
            acc += self.grid.trapezoid_weight(flat) * v;
        }
        acc * vol
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Mean of coordinate `a` under this field as a density.
    pub fn mean_coord(&self, a: usize) -> T {
        let vol = self.grid.cell_volume();
        let mut acc = T::zero();
        for (flat, &v) in self.data.iter().enumerate() {
            let q = self.grid.axis_coord(a, self.grid.axis_index(a, flat));
            acc += self.grid.trapezoid_weight(flat) * v * q;
        }
        acc * vol
    }

    /// Variance of coordinate `a` under this field as a density.
    pub fn variance_coord(&self, a: usize) -> T {
        let mean = self.mean_coord(a);
        let vol = self.grid.cell_volume();
        let mut acc = T::zero();
        for (flat, &v) in self.data.iter().enumerate() {
            let q = self.grid.axis_coord(a, self.grid.axis_index(a, flat)) - mean;
            acc += self.grid.trapezoid_weight(flat) * v * q * q;
        }
        acc * vol
    }

    /// Multilinear interpolation at `point`; box axes clamp, periodic wrap.
    pub fn interpolate(&self, point: &[T]) -> T {
        let dim = self.grid.dim();
        debug_assert_eq!(point.len(), dim);
        let mut base = vec![0usize; dim];
        let mut frac = vec![T::zero(); dim];
        for a in 0..dim {
            let ax = self.grid.axis(a);
            let dx = self.grid.spacing(a);
            let span = ax.max - ax.min;
            let mut x = point[a];
            if ax.boundary == Boundary::Periodic {
                x = x - (((x - ax.min) / span).floor()) * span;
            }
            let s = (x - ax.min) / dx;
            let max_cell = match ax.boundary {
                Boundary::Box => ax.points - 2,
                Boundary::Periodic => ax.points - 1,
            };
            let i = s
                .floor()
                .to_f64()
                .map(|v| (v.max(0.0) as usize).min(max_cell))
                .unwrap_or(0);
            base[a] = i;
            frac[a] = (s - T::from_usize(i).unwrap()).max(T::zero()).min(T::one());
        }
        // accumulate over the 2^dim cell corners
        let mut acc = T::zero();
        for corner in 0..(1usize << dim) {
            let mut w = T::one();
            let mut flat = 0usize;
            for a in 0..dim {
                let hi = (corner >> a) & 1 == 1;
                let idx = if hi {
                    let j = base[a] + 1;
                    if j >= self.grid.axis(a).points {
                        // periodic wrap (box never lands here: base ≤ points-2)
                        0
                    } else {
                        j
                    }
                } else {
                    base[a]
                };
                w *= if hi { frac[a] } else { T::one() - frac[a] };
                flat += idx * self.grid.stride(a);
            }
            acc += w * self.data[flat];
        }
        acc
    }
}

impl<T: Scalar> ComplexField<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        let data = vec![Complex::new(T::zero(), T::zero()); grid.len()];
        ComplexField { grid, data }
    }

    pub fn from_data(grid: Grid<T>, data: Vec<Complex<T>>) -> Self {
        assert_eq!(grid.len(), data.len());
        ComplexField { grid, data }
    }

    pub fn from_fn(grid: Grid<T>, mut f: impl FnMut(&[T]) -> Complex<T>) -> Self {
        let mut q = vec![T::zero(); grid.dim()];
        let data = (0..grid.len())
            .map(|flat| {
                grid.coords_into(flat, &mut q);
                f(&q)
            })
            .collect();
        ComplexField { grid, data }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn abs_field(&self) -> ScalarField<T> {
        ScalarField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }

    pub fn density(&self) -> ScalarField<T> {
        ScalarField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|z| z.norm_sqr()).collect(),
        }
    }

    /// Trapezoidal `∫|ψ|²`.
    pub fn norm_sq(&self) -> T {
        let vol = self.grid.cell_volume();
        let mut acc = T::zero();
        for (flat, z) in self.data.iter().enumerate() {
            acc += self.grid.trapezoid_weight(flat) * z.norm_sqr();
        }
        acc * vol
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn scale(&self, factor: Complex<T>) -> Self {
        ComplexField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&z| z * factor).collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn linear_combination(
        &self,
        a: Complex<T>,
        other: &Self,
        b: Complex<T>,
    ) -> Result<Self, FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        Ok(ComplexField {
            grid: self.grid.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| x * a + y * b)
                .collect(),
        })
    }

    pub fn has_non_finite(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
    }

    /// Exact (bitwise) equality of the raw data and grid.
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| {
                a.re.to_f64().map(f64::to_bits) == b.re.to_f64().map(f64::to_bits)
                    && a.im.to_f64().map(f64::to_bits) == b.im.to_f64().map(f64::to_bits)
            })
    }
}

/// Scale `psi` so `∫|ψ|² = 1`.
pub fn normalize<T: Scalar>(psi: &ComplexField<T>) -> Result<ComplexField<T>, FieldError> {
    let n2 = psi.norm_sq();
    if n2 <= T::zero() {
        return Err(FieldError::ZeroNorm);
    }
    let s = T::one() / n2.sqrt();
    Ok(psi.scale(Complex::new(s, T::zero())))
}

/// Second-order first derivative along `axis`: central in the interior,
/// one-sided at box boundaries, wrap-around on periodic axes.
pub fn gradient<T: Scalar>(f: &ScalarField<T>, axis: usize) -> Result<ScalarField<T>, FieldError> {
    let grid = f.grid();
    if axis >= grid.dim() {
        return Err(FieldError::AxisOutOfRange {
            axis,
            dim: grid.dim(),
        });
    }
    let dx = grid.spacing(axis);
    let two_dx = T::lit(2.0) * dx;
    let n = grid.axis(axis).points;
    let stride = grid.stride(axis) as isize;
    let periodic = grid.axis(axis).boundary == Boundary::Periodic;
    let mut out = vec![T::zero(); grid.len()];
    let d = f.data();
    let three = T::lit(3.0);
    for flat in 0..grid.len() {
        let i = grid.axis_index(axis, flat);
        let v = if periodic {
            let prev = grid.neighbor(flat, axis, -1).unwrap();
            let next = grid.neighbor(flat, axis, 1).unwrap();
            (d[next] - d[prev]) / two_dx
        } else if i == 0 {
            // -3f0 + 4f1 - f2, grouped as differences so constants cancel exactly
            let f0 = d[flat];
            let f1 = d[(flat as isize + stride) as usize];
            let f2 = d[(flat as isize + 2 * stride) as usize];
            (three * (f1 - f0) + (f1 - f2)) / two_dx
        } else if i == n - 1 {
            let f0 = d[flat];
            let f1 = d[(flat as isize - stride) as usize];
            let f2 = d[(flat as isize - 2 * stride) as usize];
            (three * (f0 - f1) + (f2 - f1)) / two_dx
        } else {
            let prev = (flat as isize - stride) as usize;
            let next = (flat as isize + stride) as usize;
            (d[next] - d[prev]) / two_dx
        };
        out[flat] = v;
    }
    Ok(ScalarField::from_data(grid.clone(), out))
}

/// Second-order second derivative along `axis` (shares the boundary policy of
/// [`gradient`]; box boundaries use the 4-point one-sided stencil).
pub fn second_derivative<T: Scalar>(
    f: &ScalarField<T>,
    axis: usize,
) -> Result<ScalarField<T>, FieldError> {
    let grid = f.grid();
    if axis >= grid.dim() {
        return Err(FieldError::AxisOutOfRange {
            axis,
            dim: grid.dim(),
        });
    }
    let dx = grid.spacing(axis);
    let dx2 = dx * dx;
    let n = grid.axis(axis).points;
    let stride = grid.stride(axis) as isize;
    let periodic = grid.axis(axis).boundary == Boundary::Periodic;
    let mut out = vec![T::zero(); grid.len()];
    let d = f.data();
    let at = |flat: usize, off: isize| d[(flat as isize + off * stride) as usize];
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    // all stencils grouped as differences so constant fields give exact zero
    for flat in 0..grid.len() {
        let i = grid.axis_index(axis, flat);
        let v = if periodic {
            let prev = grid.neighbor(flat, axis, -1).unwrap();
            let next = grid.neighbor(flat, axis, 1).unwrap();
            ((d[next] - d[flat]) - (d[flat] - d[prev])) / dx2
        } else if i == 0 {
            if n >= 4 {
                // 2f0 - 5f1 + 4f2 - f3
                (two * (at(flat, 0) - at(flat, 1)) - three * (at(flat, 1) - at(flat, 2))
                    + (at(flat, 2) - at(flat, 3)))
                    / dx2
            } else {
                ((at(flat, 0) - at(flat, 1)) - (at(flat, 1) - at(flat, 2))) / dx2
            }
        } else if i == n - 1 {
            if n >= 4 {
                (two * (at(flat, 0) - at(flat, -1)) - three * (at(flat, -1) - at(flat, -2))
                    + (at(flat, -2) - at(flat, -3)))
                    / dx2
            } else {
                ((at(flat, 0) - at(flat, -1)) - (at(flat, -1) - at(flat, -2))) / dx2
            }
        } else {
            ((at(flat, 1) - at(flat, 0)) - (at(flat, 0) - at(flat, -1))) / dx2
        };
        out[flat] = v;
    }
    Ok(ScalarField::from_data(grid.clone(), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(min: f64, max: f64, points: usize) -> Grid<f64> {
        Grid::line(min, max, points).unwrap()
    }

    fn periodic(min: f64, max: f64, points: usize) -> Grid<f64> {
        Grid::new(vec![AxisSpec {
            min,
            max,
            points,
            boundary: Boundary::Periodic,
        }])
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(
            Grid::line(0.0, 1.0, 2),
            Err(FieldError::TooFewPoints { .. })
        ));
        assert!(matches!(
            Grid::line(1.0, 1.0, 5),
            Err(FieldError::EmptyAxis { .. })
        ));
        let huge = Grid::new(vec![
            AxisSpec {
                min: 0.0,
                max: 1.0,
                points: 1 << 14,
                boundary: Boundary::Box,
            },
            AxisSpec {
                min: 0.0,
                max: 1.0,
                points: 1 << 14,
                boundary: Boundary::Box,
            },
        ]);
        assert!(matches!(huge, Err(FieldError::GridTooLarge { .. })));
    }

    #[test]
    fn indexing_roundtrip() {
        let grid = Grid::new(vec![
            AxisSpec {
                min: 0.0,
                max: 1.0,
                points: 4,
                boundary: Boundary::Box,
            },
            AxisSpec {
                min: -1.0,
                max: 1.0,
                points: 5,
                boundary: Boundary::Periodic,
            },
        ])
        .unwrap();
        assert_eq!(grid.len(), 20);
        for flat in 0..grid.len() {
            let idx = grid.multi_index(flat);
            assert_eq!(grid.flat_index(&idx), flat);
        }
        // last axis is fastest
        assert_eq!(grid.stride(0), 5);
        assert_eq!(grid.stride(1), 1);
    }

    #[test]
    fn periodic_spacing_excludes_wrap_node() {
        let grid = periodic(0.0, 2.0 * std::f64::consts::PI, 8);
        assert!((grid.spacing(0) - std::f64::consts::PI / 4.0).abs() < 1e-15);
        let last = grid.axis_coord(0, 7);
        assert!(last < 2.0 * std::f64::consts::PI);
        assert_eq!(grid.neighbor(7, 0, 1), Some(0));
    }

    #[test]
    fn gradient_of_linear_field_is_exact_inside() {
        let grid = line(0.0, 1.0, 11);
        let f = ScalarField::from_fn(grid.clone(), |q| q[0]);
        let g = gradient(&f, 0).unwrap();
        for i in 1..10 {
            assert!(
                (g.data()[i] - 1.0).abs() < 1e-13,
                "node {i}: {}",
                g.data()[i]
            );
        }
        // one-sided boundary stencils are exact on linear fields too
        assert!((g.data()[0] - 1.0).abs() < 1e-13);
        assert!((g.data()[10] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let grid = line(-2.0, 3.0, 9);
        let f = ScalarField::from_fn(grid, |_| 4.25);
        let g = gradient(&f, 0).unwrap();
        assert!(g.data().iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn gradient_second_order_on_periodic_sine() {
        let err_at = |n: usize| {
            let grid = periodic(0.0, 2.0 * std::f64::consts::PI, n);
            let f = ScalarField::from_fn(grid.clone(), |q| q[0].sin());
            let g = gradient(&f, 0).unwrap();
            let mut max_err = 0.0f64;
            for i in 0..n {
                let q = grid.axis_coord(0, i);
                max_err = max_err.max((g.data()[i] - q.cos()).abs());
            }
            max_err
        };
        let e1 = err_at(64);
        let e2 = err_at(128);
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gradient_axis_out_of_range() {
        let grid = line(0.0, 1.0, 5);
        let f = ScalarField::zeros(grid);
        assert!(matches!(
            gradient(&f, 1),
            Err(FieldError::AxisOutOfRange { axis: 1, dim: 1 })
        ));
    }

    #[test]
    fn gradient_is_linear() {
        let grid = line(-1.0, 1.0, 33);
        let f = ScalarField::from_fn(grid.clone(), |q| (q[0] * 3.0).sin());
        let g = ScalarField::from_fn(grid.clone(), |q| q[0] * q[0]);
        let (a, b) = (2.5, -1.25);
        let combo = f.zip_with(&g, |x, y| a * x + b * y).unwrap();
        let lhs = gradient(&combo, 0).unwrap();
        let df = gradient(&f, 0).unwrap();
        let dg = gradient(&g, 0).unwrap();
        for i in 0..grid.len() {
            let rhs = a * df.data()[i] + b * dg.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_scales_by_half_when_norm_sq_is_four() {
        let grid = line(0.0, 1.0, 5);
        // constant 2 on [0,1]: ∫|ψ|² = 4
        let psi = ComplexField::from_fn(grid, |_| Complex::new(2.0, 0.0));
        let out = normalize(&psi).unwrap();
        assert!((out.data()[2].re - 1.0).abs() < 1e-12);
        assert!((out.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_leaves_normalized_gaussian_unchanged() {
        let grid = line(-10.0, 10.0, 201);
        let raw = ComplexField::from_fn(grid, |q| Complex::new((-q[0] * q[0] / 2.0).exp(), 0.0));
        let once = normalize(&raw).unwrap();
        let twice = normalize(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((once.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_zero_field_is_error() {
        let grid = line(0.0, 1.0, 5);
        let psi = ComplexField::zeros(grid);
        assert!(matches!(normalize(&psi), Err(FieldError::ZeroNorm)));
    }

    #[test]
    fn second_derivative_of_quadratic() {
        let grid = line(-1.0, 1.0, 21);
        let f = ScalarField::from_fn(grid.clone(), |q| q[0] * q[0]);
        let d2 = second_derivative(&f, 0).unwrap();
        for i in 0..grid.len() {
            assert!(
                (d2.data()[i] - 2.0).abs() < 1e-10,
                "node {i}: {}",
                d2.data()[i]
            );
        }
    }

    #[test]
    fn interpolation_constant_velocity_is_exact() {
        let grid = line(0.0, 1.0, 11);
        let f = ScalarField::from_fn(grid, |q| 3.0 * q[0] + 1.0);
        // multilinear interpolation is exact on linear functions
        for &x in &[0.0, 0.05, 0.131, 0.5, 0.97, 1.0] {
            assert!((f.interpolate(&[x]) - (3.0 * x + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_periodic_wraps() {
        let grid = periodic(0.0, 1.0, 10);
        let f = ScalarField::from_fn(grid, |q| (std::f64::consts::TAU * q[0]).cos());
        let inside = f.interpolate(&[0.05]);
        let wrapped = f.interpolate(&[1.05]);
        assert!((inside - wrapped).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // linearity holds for arbitrary node data, to machine precision
            #[test]
            fn gradient_is_linear_on_arbitrary_data(
                f_data in proptest::collection::vec(-10.0f64..10.0, 33),
                g_data in proptest::collection::vec(-10.0f64..10.0, 33),
                a in -5.0f64..5.0,
                b in -5.0f64..5.0,
            ) {
                let grid = Grid::line(-2.0f64, 2.0, 33).unwrap();
                let f = ScalarField::from_data(grid.clone(), f_data);
                let g = ScalarField::from_data(grid.clone(), g_data);
                let combo = f.zip_with(&g, |x, y| a * x + b * y).unwrap();
                let lhs = gradient(&combo, 0).unwrap();
                let df = gradient(&f, 0).unwrap();
                let dg = gradient(&g, 0).unwrap();
                for i in 0..grid.len() {
                    let rhs = a * df.data()[i] + b * dg.data()[i];
                    let scale = 1.0 + lhs.data()[i].abs().max(rhs.abs());
                    prop_assert!((lhs.data()[i] - rhs).abs() < 1e-11 * scale);
                }
            }

            // the phase never contributes to the norm
            #[test]
            fn polar_reconstruction_preserves_amplitude_norm(
                coeffs in proptest::collection::vec(-1.5f64..1.5, 4),
                lambda_abs in 0.3f64..3.0,
            ) {
                let grid = Grid::line(-5.0f64, 5.0, 101).unwrap();
                let amplitude = ScalarField::from_fn(grid.clone(), |q| {
                    (-q[0] * q[0] / 2.0).exp() + 0.05
                });
                let action = ScalarField::from_fn(grid.clone(), |q| {
                    coeffs[0]
                        + coeffs[1] * q[0]
                        + coeffs[2] * (q[0] * 0.7).sin()
                        + coeffs[3] * q[0] * q[0] * 0.1
                });
                let pair = PolarPair { amplitude: amplitude.clone(), action, lambda_abs };
                let psi = from_polar(&pair);
                let r_sq = amplitude.map(|r| r * r).integrate();
                prop_assert!((psi.norm_sq() - r_sq).abs() < 1e-12 * r_sq.max(1.0));
                // smooth bounded-gradient phases round-trip through to_polar
                let back = to_polar(&psi, lambda_abs).unwrap();
                let re = from_polar(&back);
                let floor = 1e-12 * psi.max_abs();
                for (x, y) in psi.data().iter().zip(re.data()) {
                    if x.norm() > floor {
                        prop_assert!((x - y).norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn mean_and_variance_of_gaussian_density() {
        let grid = line(-12.0, 12.0, 401);
        let sigma: f64 = 1.3;
        let mu = 0.7;
        let rho = ScalarField::from_fn(grid, |q| {
            let z: f64 = (q[0] - mu) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        });
        assert!((rho.integrate() - 1.0).abs() < 1e-10);
        assert!((rho.mean_coord(0) - mu).abs() < 1e-10);
        assert!((rho.variance_coord(0) - sigma * sigma).abs() < 1e-8);
    }
}
