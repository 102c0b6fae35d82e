//! Fiber conformal measures, Ruelle–Perron–Frobenius eigendata of the base
//! and full operators, and the identities tying them together.
//!
//! A fiber measure `ν_{x,n}` is never stored as weights: it integrates `ψ`
//! as `𝓛_x^n ψ(σ) / 𝓛_x^n 1(σ)` for the anchor `σ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, DEFAULT_CAPACITY};
use crate::error::{Error, Result};
use crate::phi::{Anchor, PhiSolver, DEFAULT_TAU};
use crate::transfer::{
    full_operator_on_fiber, BaseOperator, FullOperator, GridFn, GridFn2D, SparseOp,
};

/// Default stopping tolerance on the log-eigenvalue change.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-10;
/// Default iteration cap for power iteration.
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// `ν_{x,n}` as a functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberMeasure {
    pub x: BasePoint,
    pub n: usize,
    pub anchor: Anchor,
}

impl FiberMeasure {
    pub fn new(x: BasePoint, n: usize, anchor: Anchor) -> Result<Self> {
        if x.capacity() < n {
            return Err(Error::CapacityExhausted {
                needed: n,
                available: x.capacity(),
            });
        }
        Ok(Self { x, n, anchor })
    }

    /// `∫ψ dν_{x,n}` for each function, sharing the cascade of `1`.
    pub fn integrate_many(&self, solver: &PhiSolver, fns: &[GridFn]) -> Result<Vec<f64>> {
        let orbit = self.x.orbit(self.n)?;
        let mut one = GridFn::constant(solver.grid, 1.0)?;
        let mut cur = fns.to_vec();
        for xk in &orbit[..self.n] {
            let s = solver.stencil(xk.value())?;
            one = s.apply(&one, false)?;
            for f in cur.iter_mut() {
                *f = s.apply(f, false)?;
            }
        }
        cur.iter().map(|f| self.anchor.ratio(f, &one)).collect()
    }

    pub fn integrate(&self, solver: &PhiSolver, psi: &GridFn) -> Result<f64> {
        Ok(self.integrate_many(solver, std::slice::from_ref(psi))?[0])
    }
}

/// `∫ψ dν_{x,n}` with the solver's anchor.
pub fn fiber_integrate(solver: &PhiSolver, x: &BasePoint, psi: &GridFn, n: usize) -> Result<f64> {
    FiberMeasure::new(x.clone(), n, solver.anchor)?.integrate(solver, psi)
}

/// `|∫𝓛_xψ dν_{fx,n} − e^{Φ(x)} ∫ψ dν_{x,n+1}|` for each `ψ`.
///
/// With `A = 𝓛_x^{n+1}ψ`, `B = 𝓛_x^{n+1}1` and `C = 𝓛_{fx}^n 1` at the anchor,
/// the two sides are `A/C` and `e^{Φ(x)} A/B`.
pub fn eigen_equation_residuals(
    solver: &PhiSolver,
    x: &BasePoint,
    phi_x: f64,
    fns: &[GridFn],
    n: usize,
) -> Result<Vec<f64>> {
    if x.capacity() < n + 1 {
        return Err(Error::CapacityExhausted {
            needed: n + 1,
            available: x.capacity(),
        });
    }
    let orbit = x.orbit(n + 1)?;
    let one = GridFn::constant(solver.grid, 1.0)?;
    let first = solver.stencil(orbit[0].value())?;
    let mut a: Vec<GridFn> = fns
        .iter()
        .map(|f| first.apply(f, false))
        .collect::<Result<_>>()?;
    let mut b = first.apply(&one, false)?;
    let mut c = one;
    for xk in &orbit[1..=n] {
        let s = solver.stencil(xk.value())?;
        for f in a.iter_mut() {
            *f = s.apply(f, false)?;
        }
        b = s.apply(&b, false)?;
        c = s.apply(&c, false)?;
    }
    let lam = phi_x.exp();
    a.iter()
        .map(|f| {
            let lhs = solver.anchor.ratio(f, &c)?;
            let rhs = lam * solver.anchor.ratio(f, &b)?;
            Ok((lhs - rhs).abs())
        })
        .collect()
}

pub fn eigen_equation_residual(
    solver: &PhiSolver,
    x: &BasePoint,
    phi_x: f64,
    psi: &GridFn,
    n: usize,
) -> Result<f64> {
    Ok(eigen_equation_residuals(solver, x, phi_x, std::slice::from_ref(psi), n)?[0])
}

/// Eigentriple of a discretized transfer operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpfSolution {
    pub log_eigenvalue: f64,
    /// `(N_X, N_Y)`; `N_Y = 1` for the base operator.
    pub dims: (usize, usize),
    /// Positive, normalized so that `Σ h_i ν_i = 1`.
    pub eigenfunction: Vec<f64>,
    /// Nonnegative node weights summing to 1.
    pub weights: Vec<f64>,
    pub residual: f64,
    pub adjoint_residual: f64,
    pub iterations: usize,
}

impl RpfSolution {
    /// Base eigenfunction `ĥ` at an arbitrary point (periodic linear interpolation).
    pub fn base_eval(&self, x: f64) -> f64 {
        let n = self.dims.0;
        let p = crate::base::wrap_unit(x) * n as f64;
        let i0 = (p.floor() as usize).min(n - 1);
        let t = p - i0 as f64;
        (1.0 - t) * self.eigenfunction[i0] + t * self.eigenfunction[(i0 + 1) % n]
    }

    /// `h(x, ·)` of a full solution on the fiber grid.
    pub fn fiber_at(&self, x: f64) -> Result<GridFn> {
        let (nx, ny) = self.dims;
        GridFn2D::new(nx, ny, self.eigenfunction.clone(), 0.0).map(|g| g.fiber_at(x))
    }

    /// `μ` weights `h_i ν_i` (they sum to 1).
    pub fn equilibrium_weights(&self) -> Vec<f64> {
        self.eigenfunction
            .iter()
            .zip(&self.weights)
            .map(|(h, w)| h * w)
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let (nx, ny) = self.dims;
        writeln!(w, "x,y,eigenfunction,weight")?;
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                writeln!(
                    w,
                    "{:.14e},{:.14e},{:.14e},{:.14e}",
                    i as f64 / nx as f64,
                    j as f64 / ny as f64,
                    self.eigenfunction[k],
                    self.weights[k]
                )?;
            }
        }
        Ok(())
    }
}

struct PowerResult {
    log_lambda: f64,
    vector: Vec<f64>,
    iterations: usize,
}

/// Power iteration on a nonnegative matrix, normalizing to unit sup norm.
/// Stops when both the log-eigenvalue change and the vector change are at
/// most `tol`.
fn power_iterate(op: &SparseOp, transpose: bool, tol: f64, max_iter: usize) -> Result<PowerResult> {
    let n = op.dim();
    let mut v = vec![1.0; n];
    let mut w = vec![0.0; n];
    let mut log_lambda = f64::NAN;
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        if transpose {
            op.apply_transpose(&v, &mut w);
        } else {
            op.apply(&v, &mut w);
        }
        let norm = w.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NoConvergence {
                iterations: it,
                last_change: f64::NAN,
            });
        }
        w.iter_mut().for_each(|x| *x /= norm);
        let new_log = norm.ln();
        let dv = v
            .iter()
            .zip(&w)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let dl = (new_log - log_lambda).abs();
        change = dl.max(dv);
        log_lambda = new_log;
        std::mem::swap(&mut v, &mut w);
        if dl <= tol && dv <= tol {
            return Ok(PowerResult {
                log_lambda,
                vector: v,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_change: change,
    })
}

fn residual(op: &SparseOp, transpose: bool, v: &[f64], log_lambda: f64) -> f64 {
    let mut w = vec![0.0; v.len()];
    if transpose {
        op.apply_transpose(v, &mut w);
    } else {
        op.apply(v, &mut w);
    }
    let lam = log_lambda.exp();
    let scale = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    w.iter()
        .zip(v)
        .fold(0.0f64, |a, (x, y)| a.max((x / lam - y).abs()))
        / scale
}

/// Right and left Perron vectors with joint normalization.
pub fn solve_operator(
    op: &SparseOp,
    dims: (usize, usize),
    tol: f64,
    max_iter: usize,
) -> Result<RpfSolution> {
    let right = power_iterate(op, false, tol, max_iter)?;
    let left = power_iterate(op, true, tol, max_iter)?;
    let mut nu = left.vector;
    if nu.iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidArgument(
            "negative eigenmeasure weight".into(),
        ));
    }
    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|w| *w /= total);
    let mut h = right.vector;
    let pairing: f64 = h.iter().zip(&nu).map(|(a, b)| a * b).sum();
    h.iter_mut().for_each(|x| *x /= pairing);
    let res = residual(op, false, &h, right.log_lambda);
    let adj = residual(op, true, &nu, right.log_lambda);
    Ok(RpfSolution {
        log_eigenvalue: right.log_lambda,
        dims,
        eigenfunction: h,
        weights: nu,
        residual: res,
        adjoint_residual: adj,
        iterations: right.iterations.max(left.iterations),
    })
}

/// Eigendata of `𝓛_Φ` for precomputed `Φ` at the preimage nodes.
pub fn rpf_base_solve(op: &BaseOperator, tol: f64, max_iter: usize) -> Result<RpfSolution> {
    solve_operator(&op.op, (op.nx, 1), tol, max_iter)
}

/// `𝓛_Φ` on `N_X` nodes with `Φ` computed by `solver` to `phi_tol`.
pub fn build_base_operator(solver: &PhiSolver, nx: usize, phi_tol: f64) -> Result<BaseOperator> {
    BaseOperator::build(nx, DEFAULT_CAPACITY, |x| {
        Ok(solver.compute(x, phi_tol, DEFAULT_TAU)?.value)
    })
}

/// Eigendata of the full operator `𝓛_φ` on an `N_X × N_Y` grid.
pub fn rpf_full_solve(op: &FullOperator, tol: f64, max_iter: usize) -> Result<RpfSolution> {
    if op.nx * op.ny > 1 << 20 {
        return Err(Error::InvalidArgument(
            "N_X N_Y must not exceed 2^20".into(),
        ));
    }
    solve_operator(&op.op, (op.nx, op.ny), tol, max_iter)
}

/// Largest `|∫(𝓛_φΨ)(x,·) dν_{x,n} − Σ_{x̄} e^{Φ(x̄)} ∫Ψ(x̄,·) dν_{x̄,n}|`
/// over the sampled `x`.
pub fn intertwine_residual(
    solver: &PhiSolver,
    psi: &GridFn2D,
    xs: &[BasePoint],
    n: usize,
    phi_eval: impl Fn(&BasePoint) -> Result<f64> + Sync,
) -> Result<f64> {
    if psi.dims().1 != solver.grid {
        return Err(Error::InvalidArgument("fiber grid mismatch".into()));
    }
    let res = xs
        .par_iter()
        .map(|x| {
            let image = full_operator_on_fiber(&solver.sys, psi, x.value());
            let lhs = fiber_integrate(solver, x, &image, n)?;
            let mut rhs = 0.0;
            for xb in x.preimages() {
                let fiber = psi.fiber_at(xb.value());
                rhs += phi_eval(&xb)?.exp() * fiber_integrate(solver, &xb, &fiber, n)?;
            }
            Ok((lhs - rhs).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}

/// `∫ψ(x,·) h(x,·) dν_{x,n} / ĥ(x)`: the conditional measure `μ_x` applied to `ψ`.
pub fn conditional_integrate(
    solver: &PhiSolver,
    x: &BasePoint,
    psi: &GridFn,
    full: &RpfSolution,
    base: &RpfSolution,
    n: usize,
) -> Result<f64> {
    Ok(conditional_integrate_many(solver, x, std::slice::from_ref(psi), full, base, n)?[0])
}

pub fn conditional_integrate_many(
    solver: &PhiSolver,
    x: &BasePoint,
    fns: &[GridFn],
    full: &RpfSolution,
    base: &RpfSolution,
    n: usize,
) -> Result<Vec<f64>> {
    if full.dims.1 != solver.grid {
        return Err(Error::InvalidArgument("fiber grid mismatch".into()));
    }
    let hb = base.base_eval(x.value());
    if !(hb > 0.0) {
        return Err(Error::NonPositive { node: 0, value: hb });
    }
    let h = full.fiber_at(x.value())?;
    let weighted = fns
        .iter()
        .map(|f| {
            GridFn::new(
                f.values()
                    .iter()
                    .zip(h.values())
                    .map(|(a, b)| a * b)
                    .collect(),
                f.log_offset(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let vals = FiberMeasure::new(x.clone(), n, solver.anchor)?.integrate_many(solver, &weighted)?;
    Ok(vals.into_iter().map(|v| v / hb).collect())
}

/// `∫Ψ dμ` two ways: from the full solution's weights, and as
/// `Σ_j ĥ_j ν̂_j ∫Ψ(x_j,·) dμ_{x_j}` over the base nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisintegrationCheck {
    pub direct: f64,
    pub iterated: f64,
}

pub fn disintegration_check(
    solver: &PhiSolver,
    psi: &GridFn2D,
    full: &RpfSolution,
    base: &RpfSolution,
    n: usize,
) -> Result<DisintegrationCheck> {
    if psi.dims() != full.dims {
        return Err(Error::InvalidArgument("grid mismatch".into()));
    }
    let scale = psi.log_offset().exp();
    let direct: f64 = full
        .equilibrium_weights()
        .iter()
        .zip(psi.values())
        .map(|(w, v)| w * v * scale)
        .sum();
    let nb = base.dims.0;
    let mu_hat = base.equilibrium_weights();
    let parts = (0..nb)
        .into_par_iter()
        .map(|j| {
            let x = BasePoint::dyadic(j, nb, DEFAULT_CAPACITY)?;
            let v = conditional_integrate(solver, &x, &psi.fiber_at(x.value()), full, base, n)?;
            Ok(mu_hat[j] * v)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DisintegrationCheck {
        direct,
        iterated: parts.iter().sum(),
    })
}

/// `|ν_x(ψ) − ν_{x'}(ψ)|` for `x' = x + 2^{-k}`, one entry per `k`.
pub fn measure_continuity_probe(
    solver: &PhiSolver,
    psi: &GridFn,
    x: &BasePoint,
    ks: &[usize],
    n: usize,
) -> Result<Vec<(f64, f64)>> {
    let base = fiber_integrate(solver, x, psi, n)?;
    ks.iter()
        .map(|&k| {
            let xp = x.add_dyadic(k)?;
            let v = fiber_integrate(solver, &xp, psi, n)?;
            Ok((0.5f64.powi(k as i32), (v - base).abs()))
        })
        .collect()
}
