//! Hamiltonian assembly and wave propagation for one `|λ|` branch.
//!
//! The operator is the sandwich form
//! `H = ½(−i|λ|∂_i − A_i) g^ij(q) (−i|λ|∂_j − A_j) + V`
//! discretized so the assembled matrix is Hermitian *exactly* (bitwise):
//! every off-diagonal coupling is computed once per unordered node pair and
//! written to both triangles, with real kinetic/metric parts and purely
//! imaginary vector-potential parts. Time stepping is Crank–Nicolson, which
//! preserves the discrete norm up to the linear-solve residual.
//!
//! Kinetic diagonal-axis terms use the flux form with half-node averaged
//! `g^aa` (so constant-metric systems reduce to the textbook Laplacian row);
//! mixed `i≠j` terms use symmetrized central differences. Box walls are
//! Dirichlet ghosts just outside the grid.

use crate::exprlang::{Expression, GridEvalError};
use crate::fields::{ComplexField, FieldError, Grid, ScalarField};
use crate::linalg::{bicgstab, solve_tridiagonal, CsrMatrix, LinalgError};
use crate::{Complex, Scalar};
use thiserror::Error;

/// Relative residual the Crank-Nicolson linear solves are held to (f64;
/// wider-epsilon scalars fall back to a multiple of their machine epsilon).
pub const CN_SOLVE_RTOL: f64 = 1e-12;
/// Residual bound every accepted CN step must satisfy (f64 scale).
pub const CN_RESIDUAL_BOUND: f64 = 1e-10;

fn cn_solve_rtol<T: Scalar>() -> T {
    T::lit(CN_SOLVE_RTOL).max(T::epsilon() * T::lit(10.0))
}

fn cn_residual_bound<T: Scalar>() -> T {
    T::lit(CN_RESIDUAL_BOUND).max(T::epsilon() * T::lit(100.0))
}

/// Classical system: inverse metric `g^ij(q)` (mass convention folded in),
/// vector potential `A_i(q)` and scalar potential `V(q)`, all as expressions
/// over the coordinates `q1..qN`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSystem {
    dim: usize,
    metric_inverse: Vec<Expression>,
    vector_potential: Vec<Expression>,
    scalar_potential: Expression,
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("metric entry ({i},{j}) is not identical to ({j},{i})")]
    MetricNotSymmetric { i: usize, j: usize },
    #[error("expected {expected} expressions for {what}, got {got}")]
    WrongCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("system dimension {sys} does not match grid dimension {grid}")]
    DimensionMismatch { sys: usize, grid: usize },
    #[error("metric is not positive-definite at node {node}")]
    MetricNotPositiveDefinite { node: usize },
    #[error("coefficient {what} is not finite at node {node}")]
    CoefficientNaN { what: String, node: usize },
    #[error("lambda must be nonzero")]
    ZeroLambda,
    #[error("dt {dt} does not divide t_final {t_final} within rounding")]
    TimeStepMismatch { dt: f64, t_final: f64 },
    #[error("assembled operator lost Hermiticity (defect {defect:.3e})")]
    AsymmetricAssembly { defect: f64 },
    #[error("Crank-Nicolson residual {residual:.3e} exceeds {bound:.1e} at step {step}")]
    ResidualTooLarge {
        residual: f64,
        bound: f64,
        step: usize,
    },
    #[error("propagation produced a non-finite value at t={time}; last good snapshot retained")]
    NumericalAbort { time: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("evaluating {what}: {source}")]
    Eval { what: String, source: GridEvalError },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl ClassicalSystem {
    /// `metric_inverse` is row-major N×N; symmetry of the expressions is
    /// required, positive-definiteness is checked against each grid later.
    pub fn new(
        dim: usize,
        metric_inverse: Vec<Expression>,
        vector_potential: Vec<Expression>,
        scalar_potential: Expression,
    ) -> Result<Self, DynamicsError> {
        if metric_inverse.len() != dim * dim {
            return Err(DynamicsError::WrongCount {
                what: "metric_inverse",
                expected: dim * dim,
                got: metric_inverse.len(),
            });
        }
        if vector_potential.len() != dim {
            return Err(DynamicsError::WrongCount {
                what: "vector_potential",
                expected: dim,
                got: vector_potential.len(),
            });
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if metric_inverse[i * dim + j].ast() != metric_inverse[j * dim + i].ast() {
                    return Err(DynamicsError::MetricNotSymmetric { i, j });
                }
            }
        }
        Ok(ClassicalSystem {
            dim,
            metric_inverse,
            vector_potential,
            scalar_potential,
        })
    }

    /// Flat-metric free particle of mass `m` in `dim` dimensions.
    pub fn free(dim: usize, mass: f64) -> Self {
        let mut metric = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                metric.push(Expression::constant(if i == j { 1.0 / mass } else { 0.0 }));
            }
        }
        ClassicalSystem {
            dim,
            metric_inverse: metric,
            vector_potential: vec![Expression::constant(0.0); dim],
            scalar_potential: Expression::constant(0.0),
        }
    }

    /// Flat metric of mass `m` with a scalar potential.
    pub fn with_potential(dim: usize, mass: f64, potential: Expression) -> Self {
        let mut sys = Self::free(dim, mass);
        sys.scalar_potential = potential;
        sys
    }

    pub fn with_vector_potential(mut self, a: Vec<Expression>) -> Result<Self, DynamicsError> {
        if a.len() != self.dim {
            return Err(DynamicsError::WrongCount {
                what: "vector_potential",
                expected: self.dim,
                got: a.len(),
            });
        }
        self.vector_potential = a;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric_inverse(&self) -> &[Expression] {
        &self.metric_inverse
    }

    pub fn vector_potential(&self) -> &[Expression] {
        &self.vector_potential
    }

    pub fn scalar_potential(&self) -> &Expression {
        &self.scalar_potential
    }

    pub fn metric_entry(&self, i: usize, j: usize) -> &Expression {
        &self.metric_inverse[i * self.dim + j]
    }

    /// Pointwise `g^ij` at a coordinate.
    pub fn metric_at<T: Scalar>(&self, q: &[T]) -> Result<Vec<T>, DynamicsError> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for e in &self.metric_inverse {
            out.push(e.eval(q, T::zero()).map_err(|err| DynamicsError::Eval {
                what: "metric_inverse".into(),
                source: GridEvalError::Domain {
                    flat: 0,
                    index: vec![],
                    source: err,
                },
            })?);
        }
        Ok(out)
    }

    /// Evaluate all coefficient fields on a grid (at t = 0; coefficients are
    /// taken time-independent during a run).
    pub fn coefficients_on<T: Scalar>(
        &self,
        grid: &Grid<T>,
    ) -> Result<SystemFields<T>, DynamicsError> {
        let eval = |e: &Expression, what: &str| -> Result<ScalarField<T>, DynamicsError> {
            e.evaluate_on_grid(grid, T::zero())
                .map_err(|source| DynamicsError::Eval {
                    what: what.into(),
                    source,
                })
        };
        let mut metric = Vec::with_capacity(self.dim * self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                metric.push(eval(
                    self.metric_entry(i, j),
                    &format!("g^{}{}", i + 1, j + 1),
                )?);
            }
        }
        let mut a = Vec::with_capacity(self.dim);
        for (i, e) in self.vector_potential.iter().enumerate() {
            a.push(eval(e, &format!("A_{}", i + 1))?);
        }
        let v = eval(&self.scalar_potential, "V")?;

        // positive-definiteness at every node, by Cholesky on the small block
        let n = self.dim;
        for flat in 0..grid.len() {
            let mut m = vec![T::zero(); n * n];
            for k in 0..n * n {
                m[k] = metric[k].data()[flat];
            }
            if !cholesky_ok(&m, n) {
                return Err(DynamicsError::MetricNotPositiveDefinite { node: flat });
            }
        }
        Ok(SystemFields { metric, a, v })
    }
}

/// Coefficient fields of a system evaluated on a grid.
pub struct SystemFields<T> {
    /// Row-major `g^ij` fields.
    pub metric: Vec<ScalarField<T>>,
    pub a: Vec<ScalarField<T>>,
    pub v: ScalarField<T>,
}

fn cholesky_ok<T: Scalar>(m: &[T], n: usize) -> bool {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= T::zero() {
                    return false;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    true
}

/// Discretized Hermitian Hamiltonian on a grid at a fixed `|λ|`.
#[derive(Debug, Clone)]
pub struct DiscreteHamiltonian<T> {
    grid: Grid<T>,
    lambda_abs: T,
    matrix: CsrMatrix<T>,
    tridiagonal: bool,
}

impl<T: Scalar> DiscreteHamiltonian<T> {
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn lambda_abs(&self) -> T {
        self.lambda_abs
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn is_tridiagonal(&self) -> bool {
        self.tridiagonal
    }

    /// Wrap an externally assembled Hermitian matrix (e.g. the measurement
    /// interaction `g·q₁·p̂₂`). The exact-Hermiticity contract still applies.
    pub fn from_matrix(
        grid: Grid<T>,
        lambda_abs: T,
        matrix: CsrMatrix<T>,
    ) -> Result<Self, DynamicsError> {
        if lambda_abs <= T::zero() {
            return Err(DynamicsError::ZeroLambda);
        }
        let defect = matrix.hermiticity_defect();
        if defect > T::zero() {
            return Err(DynamicsError::AsymmetricAssembly {
                defect: defect.to_f64().unwrap_or(f64::NAN),
            });
        }
        let tridiagonal = matrix.is_tridiagonal();
        Ok(DiscreteHamiltonian {
            grid,
            lambda_abs,
            matrix,
            tridiagonal,
        })
    }

    /// Plain-l2 energy expectation `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn energy(&self, psi: &ComplexField<T>) -> T {
        let x = psi.data();
        let num = self.matrix.expectation(x);
        let den: T = x.iter().map(|z| z.norm_sqr()).sum();
        num / den
    }

    /// If the operator is real symmetric tridiagonal (1D, A = 0), return its
    /// `(diagonal, off-diagonal)` for eigenvalue work.
    pub fn to_real_symmetric_tridiagonal(&self) -> Option<(Vec<T>, Vec<T>)> {
        if !self.tridiagonal {
            return None;
        }
        let n = self.matrix.n();
        let (sub, diag, sup) = self.matrix.to_tridiagonal();
        let mut d = Vec::with_capacity(n);
        let mut e = Vec::with_capacity(n - 1);
        for i in 0..n {
            if diag[i].im != T::zero() {
                return None;
            }
            d.push(diag[i].re);
        }
        for i in 0..n - 1 {
            if sup[i].im != T::zero() || (sup[i] - sub[i + 1]).norm() != T::zero() {
                return None;
            }
            e.push(sup[i].re);
        }
        Some((d, e))
    }
}

/// Assemble the sandwich-ordered Hamiltonian on `grid` at `|λ| = lambda_abs`.
pub fn build_hamiltonian<T: Scalar>(
    sys: &ClassicalSystem,
    grid: &Grid<T>,
    lambda_abs: T,
) -> Result<DiscreteHamiltonian<T>, DynamicsError> {
    if lambda_abs <= T::zero() {
        return Err(DynamicsError::ZeroLambda);
    }
    if sys.dim() != grid.dim() {
        return Err(DynamicsError::DimensionMismatch {
            sys: sys.dim(),
            grid: grid.dim(),
        });
    }
    let fields = sys.coefficients_on(grid)?;
    for (k, f) in fields.metric.iter().enumerate() {
        if let Some(node) = f.data().iter().position(|v| !v.is_finite()) {
            return Err(DynamicsError::CoefficientNaN {
                what: format!("g (entry {k})"),
                node,
            });
        }
    }

    let dim = grid.dim();
    let n = grid.len();
    let lam2 = lambda_abs * lambda_abs;
    let half = T::lit(0.5);

    // b_a = Σ_j g^aj A_j
    let mut b: Vec<Vec<T>> = Vec::with_capacity(dim);
    for a in 0..dim {
        let mut col = vec![T::zero(); n];
        for j in 0..dim {
            let g = fields.metric[a * dim + j].data();
            let aj = fields.a[j].data();
            for (k, c) in col.iter_mut().enumerate() {
                *c += g[k] * aj[k];
            }
        }
        b.push(col);
    }

    let mut triplets: Vec<(usize, usize, Complex<T>)> = Vec::new();

    // diagonal: V + ½ Σ_ij A_i g^ij A_j
    for flat in 0..n {
        let mut diag = fields.v.data()[flat];
        let mut aga = T::zero();
        for i in 0..dim {
            aga += fields.a[i].data()[flat] * b[i][flat];
        }
        diag += half * aga;
        if !diag.is_finite() {
            return Err(DynamicsError::CoefficientNaN {
                what: "V + A·g·A/2".into(),
                node: flat,
            });
        }
        triplets.push((flat, flat, Complex::new(diag, T::zero())));
    }

    // kinetic, diagonal axes: flux form with half-node averaged g^aa
    for axis in 0..dim {
        let dx = grid.spacing(axis);
        let kin = lam2 / (T::lit(2.0) * dx * dx);
        let g = fields.metric[axis * dim + axis].data();
        let points = grid.axis(axis).points;
        let periodic = grid.axis(axis).boundary == crate::fields::Boundary::Periodic;
        for flat in 0..n {
            let i = grid.axis_index(axis, flat);
            // edge to +1 neighbor (owner is the lower node; wrap edge owned by last node)
            if i + 1 < points || periodic {
                let m = grid.neighbor(flat, axis, 1).unwrap();
                let gm = half * (g[flat] + g[m]);
                let w = kin * gm;
                triplets.push((flat, flat, Complex::new(w, T::zero())));
                triplets.push((m, m, Complex::new(w, T::zero())));
                triplets.push((flat, m, Complex::new(-w, T::zero())));
                triplets.push((m, flat, Complex::new(-w, T::zero())));
            }
            // Dirichlet ghost edges at box walls: diagonal term only
            if !periodic && (i == 0 || i + 1 == points) {
                let w = kin * g[flat];
                triplets.push((flat, flat, Complex::new(w, T::zero())));
            }
        }
    }

    // kinetic, mixed axes: symmetrized central differences
    for ai in 0..dim {
        for aj in (ai + 1)..dim {
            let g = fields.metric[ai * dim + aj].data();
            if g.iter().all(|&v| v == T::zero()) {
                continue;
            }
            let scale = lam2 / (T::lit(8.0) * grid.spacing(ai) * grid.spacing(aj));
            for flat in 0..n {
                // (+,+) direction
                if let (Some(ni), Some(nj)) =
                    (grid.neighbor(flat, ai, 1), grid.neighbor(flat, aj, 1))
                {
                    if let Some(m) = grid.neighbor(ni, aj, 1) {
                        let w = -scale * (g[ni] + g[nj]);
                        triplets.push((flat, m, Complex::new(w, T::zero())));
                        triplets.push((m, flat, Complex::new(w, T::zero())));
                    }
                }
                // (+,-) direction
                if let (Some(ni), Some(pj)) =
                    (grid.neighbor(flat, ai, 1), grid.neighbor(flat, aj, -1))
                {
                    if let Some(m) = grid.neighbor(ni, aj, -1) {
                        let w = scale * (g[ni] + g[pj]);
                        triplets.push((flat, m, Complex::new(w, T::zero())));
                        triplets.push((m, flat, Complex::new(w, T::zero())));
                    }
                }
            }
        }
    }

    // vector-potential terms: (i|λ|/2)[∂_a(b_a ψ) + b_a ∂_a ψ], central
    for axis in 0..dim {
        if b[axis].iter().all(|&v| v == T::zero()) {
            continue;
        }
        let dx = grid.spacing(axis);
        let scale = lambda_abs / (T::lit(4.0) * dx);
        let points = grid.axis(axis).points;
        let periodic = grid.axis(axis).boundary == crate::fields::Boundary::Periodic;
        for flat in 0..n {
            let i = grid.axis_index(axis, flat);
            if i + 1 < points || periodic {
                let m = grid.neighbor(flat, axis, 1).unwrap();
                let s = scale * (b[axis][flat] + b[axis][m]);
                triplets.push((flat, m, Complex::new(T::zero(), s)));
                triplets.push((m, flat, Complex::new(T::zero(), -s)));
            }
        }
    }

    let matrix = CsrMatrix::from_triplets(n, triplets);
    let defect = matrix.hermiticity_defect();
    if defect > T::zero() {
        return Err(DynamicsError::AsymmetricAssembly {
            defect: defect.to_f64().unwrap_or(f64::NAN),
        });
    }
    let tridiagonal = matrix.is_tridiagonal();
    Ok(DiscreteHamiltonian {
        grid: grid.clone(),
        lambda_abs,
        matrix,
        tridiagonal,
    })
}

/// One Crank-Nicolson step: solve `(1 + i dt H / 2|λ|) ψ' = (1 − i dt H / 2|λ|) ψ`.
pub fn step_crank_nicolson<T: Scalar>(
    psi: &ComplexField<T>,
    h: &DiscreteHamiltonian<T>,
    dt: T,
) -> Result<ComplexField<T>, DynamicsError> {
    step_cn_inner(psi, h, dt, 0)
}

fn step_cn_inner<T: Scalar>(
    psi: &ComplexField<T>,
    h: &DiscreteHamiltonian<T>,
    dt: T,
    step: usize,
) -> Result<ComplexField<T>, DynamicsError> {
    assert_eq!(
        psi.grid(),
        &h.grid,
        "field must live on the operator's grid"
    );
    let alpha = dt / (T::lit(2.0) * h.lambda_abs);
    let i_alpha = Complex::new(T::zero(), alpha);
    let n = h.matrix.n();

    // rhs = (1 - iαH) ψ
    let hpsi = h.matrix.matvec(psi.data());
    let rhs: Vec<Complex<T>> = psi
        .data()
        .iter()
        .zip(&hpsi)
        .map(|(p, hp)| *p - i_alpha * *hp)
        .collect();

    let solution = if h.tridiagonal {
        let (sub, diag, sup) = h.matrix.to_tridiagonal();
        let one = Complex::new(T::one(), T::zero());
        let a_sub: Vec<_> = sub.iter().map(|&z| i_alpha * z).collect();
        let a_diag: Vec<_> = diag.iter().map(|&z| one + i_alpha * z).collect();
        let a_sup: Vec<_> = sup.iter().map(|&z| i_alpha * z).collect();
        solve_tridiagonal(&a_sub, &a_diag, &a_sup, &rhs)?
    } else {
        // CSR for (1 + iαH)
        let mut triplets = Vec::with_capacity(h.matrix.nnz() + n);
        for r in 0..n {
            let (cols, vals) = h.matrix.row(r);
            for (c, v) in cols.iter().zip(vals) {
                triplets.push((r, *c, i_alpha * *v));
            }
            triplets.push((r, r, Complex::new(T::one(), T::zero())));
        }
        let a = CsrMatrix::from_triplets(n, triplets);
        bicgstab(&a, &rhs, psi.data(), cn_solve_rtol::<T>(), 10_000)?
    };

    // enforce the residual contract on the accepted step
    let residual = {
        let hx = h.matrix.matvec(&solution);
        let mut num = T::zero();
        let mut den = T::zero();
        for k in 0..n {
            let ax = solution[k] + i_alpha * hx[k];
            num += (rhs[k] - ax).norm_sqr();
            den += rhs[k].norm_sqr();
        }
        (num / den.max(T::lit(1e-300))).sqrt()
    };
    let bound = cn_residual_bound::<T>();
    if residual > bound {
        return Err(DynamicsError::ResidualTooLarge {
            residual: residual.to_f64().unwrap_or(f64::NAN),
            bound: bound.to_f64().unwrap_or(f64::NAN),
            step,
        });
    }
    Ok(ComplexField::from_data(psi.grid().clone(), solution))
}

/// Propagation output: snapshot times and fields, including t = 0 and t_final.
pub type Snapshots<T> = Vec<(T, ComplexField<T>)>;

/// Propagate `psi0` under `sys` for the branch `λ` (only `|λ|` enters).
/// Snapshots are taken at `snapshot_every`-step cadence plus both endpoints.
/// On a numerical abort the snapshots collected so far are returned alongside
/// the error.
pub fn propagate<T: Scalar>(
    psi0: &ComplexField<T>,
    sys: &ClassicalSystem,
    lambda: T,
    t_final: T,
    dt: T,
    snapshot_every: usize,
) -> Result<Snapshots<T>, (DynamicsError, Snapshots<T>)> {
    let h = match build_hamiltonian(sys, psi0.grid(), lambda.abs()) {
        Ok(h) => h,
        Err(e) => return Err((e, Vec::new())),
    };
    propagate_with(psi0, &h, t_final, dt, snapshot_every)
}

/// Propagate with a pre-assembled operator (shared across branch sweeps).
pub fn propagate_with<T: Scalar>(
    psi0: &ComplexField<T>,
    h: &DiscreteHamiltonian<T>,
    t_final: T,
    dt: T,
    snapshot_every: usize,
) -> Result<Snapshots<T>, (DynamicsError, Snapshots<T>)> {
    let steps_f = (t_final / dt).to_f64().unwrap_or(f64::NAN);
    let steps = steps_f.round() as usize;
    if steps == 0 || (steps_f - steps as f64).abs() > 1e-6 * steps_f.max(1.0) {
        return Err((
            DynamicsError::TimeStepMismatch {
                dt: dt.to_f64().unwrap_or(f64::NAN),
                t_final: t_final.to_f64().unwrap_or(f64::NAN),
            },
            Vec::new(),
        ));
    }
    let cadence = snapshot_every.max(1);
    let mut snapshots: Snapshots<T> = vec![(T::zero(), psi0.clone())];
    let mut psi = psi0.clone();
    for step in 1..=steps {
        psi = match step_cn_inner(&psi, h, dt, step) {
            Ok(next) => next,
            Err(e) => return Err((e, snapshots)),
        };
        let t = dt * T::from_usize(step).unwrap();
        if psi.has_non_finite().is_some() {
            return Err((
                DynamicsError::NumericalAbort {
                    time: t.to_f64().unwrap_or(f64::NAN),
                },
                snapshots,
            ));
        }
        if step % cadence == 0 || step == steps {
            snapshots.push((t, psi.clone()));
        }
    }
    Ok(snapshots)
}
