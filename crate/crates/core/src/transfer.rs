//! Grid representations of observables and the fiberwise, full and base
//! transfer operators.
//!
//! Every operator is assembled once into a sparse stencil (interpolation
//! weights times `e^φ` at the preimages) and then applied as many times as
//! needed. Results are renormalized to unit sup norm after each application;
//! the scale lives in `log_offset`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{wrap_unit, BasePoint};
use crate::error::{Error, Result};
use crate::skew::SkewProduct;

/// Smallest admissible grid size.
pub const MIN_GRID: usize = 16;
/// Default fiber grid size.
pub const DEFAULT_FIBER_GRID: usize = 512;

fn check_grid(n: usize) -> Result<()> {
    if n < MIN_GRID || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "grid size must be a power of two >= {MIN_GRID}, got {n}"
        )));
    }
    Ok(())
}

/// Position of `y` in node units: `(i0, frac)` with `y·n = i0 + frac`.
#[inline]
fn locate(y: f64, n: usize) -> (usize, f64) {
    let p = wrap_unit(y) * n as f64;
    let i0 = p.floor();
    let frac = p - i0;
    let i0 = i0 as usize;
    if i0 >= n {
        (0, 0.0)
    } else {
        (i0, frac)
    }
}

/// A periodic function on the circle sampled at `j/N`, represented as
/// `e^{log_offset} · interp(values)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    values: Vec<f64>,
    log_offset: f64,
}

impl GridFn {
    pub fn new(values: Vec<f64>, log_offset: f64) -> Result<Self> {
        check_grid(values.len())?;
        Ok(Self { values, log_offset })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n], 0.0)
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_grid(n)?;
        let h = 1.0 / n as f64;
        Ok(Self {
            values: (0..n).map(|j| f(j as f64 * h)).collect(),
            log_offset: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.len() as f64
    }

    /// Interpolated shape (without the `e^{log_offset}` factor).
    #[inline]
    pub fn interp(&self, y: f64) -> f64 {
        let n = self.len();
        let (i0, t) = locate(y, n);
        let i1 = (i0 + 1) & (n - 1);
        (1.0 - t) * self.values[i0] + t * self.values[i1]
    }

    /// The represented function at `y`.
    pub fn eval(&self, y: f64) -> f64 {
        self.log_offset.exp() * self.interp(y)
    }

    /// Represented value at node `j`, in log form.
    pub fn log_value_at(&self, j: usize) -> f64 {
        self.log_offset + self.values[j].ln()
    }

    /// Node values including the offset.
    pub fn denormalized(&self) -> Vec<f64> {
        let s = self.log_offset.exp();
        self.values.iter().map(|v| v * s).collect()
    }

    /// Integral against Lebesgue measure (exact for the linear interpolant).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            log_offset: self.log_offset,
        }
    }

    /// Rescales so that `max|values| = 1`; a zero function is left as is.
    pub fn renormalize(&mut self) {
        let m = self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if m > 0.0 && m.is_finite() {
            self.values.iter_mut().for_each(|v| *v /= m);
            self.log_offset += m.ln();
        }
    }

    /// Every `N/m`-th node.
    pub fn downsample(&self, m: usize) -> Result<Self> {
        check_grid(m)?;
        let n = self.len();
        if m > n {
            return Err(Error::InvalidArgument(format!(
                "cannot downsample {n} nodes to {m}"
            )));
        }
        let step = n / m;
        Ok(Self {
            values: (0..m).map(|j| self.values[j * step]).collect(),
            log_offset: self.log_offset,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node,value,log_offset")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(
                w,
                "{:.14e},{:.14e},{:.14e}",
                self.node(j),
                v,
                self.log_offset
            )?;
        }
        Ok(())
    }
}

/// A function on the torus sampled at `(i/N_X, j/N_Y)`, stored row-major in `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFn2D {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    log_offset: f64,
}

impl GridFn2D {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>, log_offset: f64) -> Result<Self> {
        check_grid(nx)?;
        check_grid(ny)?;
        if values.len() != nx * ny {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        Ok(Self {
            nx,
            ny,
            values,
            log_offset,
        })
    }

    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        check_grid(nx)?;
        check_grid(ny)?;
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let values = (0..nx * ny)
            .map(|k| f((k / ny) as f64 * hx, (k % ny) as f64 * hy))
            .collect();
        Ok(Self {
            nx,
            ny,
            values,
            log_offset: 0.0,
        })
    }

    pub fn constant(nx: usize, ny: usize, c: f64) -> Result<Self> {
        Self::new(nx, ny, vec![c; nx * ny], 0.0)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.ny + iy]
    }

    /// Bilinear interpolation of the shape.
    pub fn interp(&self, x: f64, y: f64) -> f64 {
        let (ix, tx) = locate(x, self.nx);
        let (iy, ty) = locate(y, self.ny);
        let ix1 = (ix + 1) & (self.nx - 1);
        let iy1 = (iy + 1) & (self.ny - 1);
        (1.0 - tx) * ((1.0 - ty) * self.at(ix, iy) + ty * self.at(ix, iy1))
            + tx * ((1.0 - ty) * self.at(ix1, iy) + ty * self.at(ix1, iy1))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.log_offset.exp() * self.interp(x, y)
    }

    /// The restriction `Ψ(x, ·)` on the fiber grid, linear in `x` between rows.
    pub fn fiber_at(&self, x: f64) -> GridFn {
        let (ix, tx) = locate(x, self.nx);
        let ix1 = (ix + 1) & (self.nx - 1);
        let values = (0..self.ny)
            .map(|iy| (1.0 - tx) * self.at(ix, iy) + tx * self.at(ix1, iy))
            .collect();
        GridFn {
            values,
            log_offset: self.log_offset,
        }
    }

    pub fn renormalize(&mut self) {
        let m = self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if m > 0.0 && m.is_finite() {
            self.values.iter_mut().for_each(|v| *v /= m);
            self.log_offset += m.ln();
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,value,log_offset")?;
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                writeln!(
                    w,
                    "{:.14e},{:.14e},{:.14e},{:.14e}",
                    ix as f64 / self.nx as f64,
                    iy as f64 / self.ny as f64,
                    self.at(ix, iy),
                    self.log_offset
                )?;
            }
        }
        Ok(())
    }
}

/// `𝓛_x` on a fixed fiber grid: for each output node the two preimages,
/// their interpolation cell and their weight `e^{φ(x, ȳ)}`.
#[derive(Clone, Debug)]
pub struct FiberStencil {
    n: usize,
    // two entries per output node, neutral branch first
    cell: Vec<u32>,
    frac: Vec<f64>,
    weight: Vec<f64>,
}

impl FiberStencil {
    pub fn build(sys: &SkewProduct, x: f64, n: usize) -> Result<Self> {
        check_grid(n)?;
        let mut cell = Vec::with_capacity(2 * n);
        let mut frac = Vec::with_capacity(2 * n);
        let mut weight = Vec::with_capacity(2 * n);
        for j in 0..n {
            let t = j as f64 / n as f64;
            for yb in sys.family.inverse_branches_at(x, t) {
                let (i0, f) = locate(yb, n);
                cell.push(i0 as u32);
                frac.push(f);
                weight.push(sys.weight(x, yb));
            }
        }
        Ok(Self {
            n,
            cell,
            frac,
            weight,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized application to raw node values.
    pub fn apply_values(&self, input: &[f64], out: &mut [f64]) {
        let mask = self.n - 1;
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for e in 2 * j..2 * j + 2 {
                let i0 = self.cell[e] as usize;
                let t = self.frac[e];
                acc += self.weight[e] * ((1.0 - t) * input[i0] + t * input[(i0 + 1) & mask]);
            }
            *o = acc;
        }
    }

    /// `𝓛_x ψ`, renormalized. With `require_positive` every interpolated
    /// value of `ψ` at a preimage must be positive.
    pub fn apply(&self, psi: &GridFn, require_positive: bool) -> Result<GridFn> {
        if psi.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "function has {} nodes, stencil {}",
                psi.len(),
                self.n
            )));
        }
        if require_positive {
            let mask = self.n - 1;
            for e in 0..self.cell.len() {
                let i0 = self.cell[e] as usize;
                let t = self.frac[e];
                let v = (1.0 - t) * psi.values[i0] + t * psi.values[(i0 + 1) & mask];
                if !(v > 0.0) {
                    return Err(Error::NonPositive { node: i0, value: v });
                }
            }
        }
        let mut out = GridFn {
            values: vec![0.0; self.n],
            log_offset: psi.log_offset,
        };
        self.apply_values(&psi.values, &mut out.values);
        out.renormalize();
        Ok(out)
    }

    /// The two branch terms `e^{φ(x,ȳ_k)} ψ(ȳ_k)` at output node `j`.
    pub fn branch_terms(&self, psi: &GridFn, j: usize) -> [f64; 2] {
        let mask = self.n - 1;
        let term = |e: usize| {
            let i0 = self.cell[e] as usize;
            let t = self.frac[e];
            self.weight[e] * ((1.0 - t) * psi.values[i0] + t * psi.values[(i0 + 1) & mask])
        };
        [term(2 * j), term(2 * j + 1)]
    }
}

/// Stencils keyed by the base coordinate, shared across cascades whose
/// orbits meet (all dyadic orbits end at the fixed point 0).
#[derive(Debug, Default)]
pub struct StencilCache {
    grid: usize,
    map: RwLock<HashMap<u64, Arc<FiberStencil>>>,
}

impl StencilCache {
    pub fn new(grid: usize) -> Result<Self> {
        check_grid(grid)?;
        Ok(Self {
            grid,
            map: RwLock::new(HashMap::new()),
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn get(&self, sys: &SkewProduct, x: f64) -> Result<Arc<FiberStencil>> {
        let key = x.to_bits();
        if let Some(s) = self.map.read().expect("stencil cache poisoned").get(&key) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(FiberStencil::build(sys, x, self.grid)?);
        self.map
            .write()
            .expect("stencil cache poisoned")
            .insert(key, Arc::clone(&s));
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("stencil cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `𝓛_x ψ` on the grid of `ψ`.
pub fn apply_fiber_operator(
    sys: &SkewProduct,
    x: &BasePoint,
    psi: &GridFn,
    require_positive: bool,
) -> Result<GridFn> {
    if x.capacity() < 1 {
        return Err(Error::CapacityExhausted {
            needed: 1,
            available: 0,
        });
    }
    FiberStencil::build(sys, x.value(), psi.len())?.apply(psi, require_positive)
}

/// `𝓛_x^n ψ = 𝓛_{f^{n-1}x} ∘ ... ∘ 𝓛_x ψ`.
pub fn iterate_cascade(sys: &SkewProduct, x: &BasePoint, psi: &GridFn, n: usize) -> Result<GridFn> {
    let orbit = x.orbit(n)?;
    let mut cur = psi.clone();
    for xk in &orbit[..n] {
        cur = FiberStencil::build(sys, xk.value(), psi.len())?.apply(&cur, false)?;
    }
    Ok(cur)
}

/// Several functions pushed along the same orbit with shared stencils.
pub fn iterate_cascade_many(
    sys: &SkewProduct,
    cache: &StencilCache,
    x: &BasePoint,
    fns: &[GridFn],
    n: usize,
) -> Result<Vec<GridFn>> {
    let orbit = x.orbit(n)?;
    let mut cur = fns.to_vec();
    for xk in &orbit[..n] {
        let s = cache.get(sys, xk.value())?;
        for f in cur.iter_mut() {
            *f = s.apply(f, false)?;
        }
    }
    Ok(cur)
}

/// A nonnegative sparse matrix in compressed-row form.
#[derive(Clone, Debug)]
pub struct SparseOp {
    n: usize,
    row_ptr: Vec<u32>,
    col: Vec<u32>,
    coef: Vec<f64>,
}

impl SparseOp {
    fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut coef = Vec::new();
        row_ptr.push(0);
        for r in rows {
            for (c, w) in r {
                if w != 0.0 {
                    col.push(c);
                    coef.push(w);
                }
            }
            row_ptr.push(col.len() as u32);
        }
        Self {
            n,
            row_ptr,
            col,
            coef,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.coef.len()
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[i] as usize, self.row_ptr[i + 1] as usize);
            *o = self.col[a..b]
                .iter()
                .zip(&self.coef[a..b])
                .map(|(&c, &w)| w * v[c as usize])
                .sum();
        }
    }

    /// `out = Aᵀ v`.
    pub fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            let (a, b) = (self.row_ptr[i] as usize, self.row_ptr[i + 1] as usize);
            for (&c, &w) in self.col[a..b].iter().zip(&self.coef[a..b]) {
                out[c as usize] += w * vi;
            }
        }
    }

    /// Row sums, i.e. `A 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        let ones = vec![1.0; self.n];
        let mut out = vec![0.0; self.n];
        self.apply(&ones, &mut out);
        out
    }
}

/// The full operator `𝓛_φ` on an `N_X × N_Y` torus grid: four preimages
/// per node, each interpolated bilinearly.
#[derive(Clone, Debug)]
pub struct FullOperator {
    pub nx: usize,
    pub ny: usize,
    pub op: SparseOp,
}

impl FullOperator {
    pub fn build(sys: &SkewProduct, nx: usize, ny: usize) -> Result<Self> {
        check_grid(nx)?;
        check_grid(ny)?;
        if nx * ny > 1 << 22 {
            return Err(Error::InvalidArgument(format!(
                "grid {nx} x {ny} is too large"
            )));
        }
        let rows: Vec<Vec<(u32, f64)>> = (0..nx * ny)
            .into_par_iter()
            .map(|k| full_row(sys, nx, ny, k / ny, k % ny))
            .collect();
        Ok(Self {
            nx,
            ny,
            op: SparseOp::from_rows(rows),
        })
    }

    /// `𝓛_φ Ψ`, renormalized.
    pub fn apply(&self, psi: &GridFn2D) -> Result<GridFn2D> {
        if psi.dims() != (self.nx, self.ny) {
            return Err(Error::InvalidArgument("grid mismatch".into()));
        }
        let mut out = GridFn2D {
            nx: self.nx,
            ny: self.ny,
            values: vec![0.0; self.nx * self.ny],
            log_offset: psi.log_offset,
        };
        self.op.apply(&psi.values, &mut out.values);
        out.renormalize();
        Ok(out)
    }
}

fn full_row(sys: &SkewProduct, nx: usize, ny: usize, ix: usize, iy: usize) -> Vec<(u32, f64)> {
    let y = iy as f64 / ny as f64;
    let mut row = Vec::with_capacity(16);
    for b in 0..2 {
        // (x + b)/2 sits on a node or halfway between two
        let half = ix + b * nx;
        let xb = half as f64 / (2 * nx) as f64;
        let (cx, tx) = if half.is_multiple_of(2) {
            ((half / 2) % nx, 0.0)
        } else {
            ((half / 2) % nx, 0.5)
        };
        let cx1 = (cx + 1) % nx;
        for yb in sys.family.inverse_branches_at(xb, y) {
            let w = sys.weight(xb, yb);
            let (cy, ty) = locate(yb, ny);
            let cy1 = (cy + 1) % ny;
            for (jx, wx) in [(cx, 1.0 - tx), (cx1, tx)] {
                for (jy, wy) in [(cy, 1.0 - ty), (cy1, ty)] {
                    row.push(((jx * ny + jy) as u32, w * wx * wy));
                }
            }
        }
    }
    row
}

/// `𝓛_φ Ψ` on the grid of `Ψ`.
pub fn apply_full_operator(sys: &SkewProduct, psi: &GridFn2D) -> Result<GridFn2D> {
    let (nx, ny) = psi.dims();
    FullOperator::build(sys, nx, ny)?.apply(psi)
}

/// `(𝓛_φ Ψ)(x, ·)` on the fiber grid of `Ψ`, for an arbitrary base point `x`.
pub fn full_operator_on_fiber(sys: &SkewProduct, psi: &GridFn2D, x: f64) -> GridFn {
    let (_, ny) = psi.dims();
    let scale = psi.log_offset;
    let values = (0..ny)
        .map(|iy| {
            let y = iy as f64 / ny as f64;
            (0..2)
                .map(|b| {
                    let xb = (x + b as f64) / 2.0;
                    sys.family
                        .inverse_branches_at(xb, y)
                        .iter()
                        .map(|&yb| sys.weight(xb, yb) * psi.interp(xb, yb))
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    let mut out = GridFn {
        values,
        log_offset: scale,
    };
    out.renormalize();
    out
}

/// The base operator `𝓛_Φ ξ(x) = Σ_{x̄ ∈ f⁻¹x} e^{Φ(x̄)} ξ(x̄)` on `N_X`
/// nodes. The preimages of node `i` are the points `(i + b N_X) / (2 N_X)`.
#[derive(Clone, Debug)]
pub struct BaseOperator {
    pub nx: usize,
    /// `Φ` at `j / (2 N_X)`, `j < 2 N_X`.
    pub phi_preimages: Vec<f64>,
    pub op: SparseOp,
}

impl BaseOperator {
    pub fn from_values(nx: usize, phi_preimages: Vec<f64>) -> Result<Self> {
        check_grid(nx)?;
        if phi_preimages.len() != 2 * nx {
            return Err(Error::InvalidArgument(format!(
                "need {} preimage values, got {}",
                2 * nx,
                phi_preimages.len()
            )));
        }
        let rows = (0..nx)
            .map(|i| {
                let mut row = Vec::with_capacity(4);
                for b in 0..2 {
                    let j = i + b * nx;
                    let w = phi_preimages[j].exp();
                    if j.is_multiple_of(2) {
                        row.push((((j / 2) % nx) as u32, w));
                    } else {
                        row.push((((j / 2) % nx) as u32, 0.5 * w));
                        row.push((((j / 2 + 1) % nx) as u32, 0.5 * w));
                    }
                }
                row
            })
            .collect();
        Ok(Self {
            nx,
            phi_preimages,
            op: SparseOp::from_rows(rows),
        })
    }

    /// Builds the operator by evaluating `Φ` at the `2 N_X` dyadic preimage nodes.
    pub fn build(
        nx: usize,
        capacity: usize,
        phi_eval: impl Fn(&BasePoint) -> Result<f64> + Sync,
    ) -> Result<Self> {
        check_grid(nx)?;
        let vals = (0..2 * nx)
            .into_par_iter()
            .map(|j| phi_eval(&BasePoint::dyadic(j, 2 * nx, capacity)?))
            .collect::<Result<Vec<f64>>>()?;
        Self::from_values(nx, vals)
    }

    pub fn apply(&self, xi: &GridFn) -> Result<GridFn> {
        if xi.len() != self.nx {
            return Err(Error::InvalidArgument("grid mismatch".into()));
        }
        let mut out = GridFn {
            values: vec![0.0; self.nx],
            log_offset: xi.log_offset,
        };
        self.op.apply(&xi.values, &mut out.values);
        out.renormalize();
        Ok(out)
    }
}

/// `𝓛_Φ ξ` with `Φ` evaluated at the preimage nodes of `ξ`'s grid.
pub fn apply_base_operator(
    phi_eval: impl Fn(&BasePoint) -> Result<f64> + Sync,
    xi: &GridFn,
    capacity: usize,
) -> Result<GridFn> {
    BaseOperator::build(xi.len(), capacity, phi_eval)?.apply(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::MpFamily;
    use crate::potential::{TrigPotential, TrigTerm};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    fn sys_const(c: f64) -> SkewProduct {
        SkewProduct::new(MpFamily::default(), TrigPotential::constant(c))
    }

    fn sys_default() -> SkewProduct {
        SkewProduct::new(MpFamily::default(), TrigPotential::default())
    }

    fn one(n: usize) -> GridFn {
        GridFn::constant(n, 1.0).unwrap()
    }

    fn smooth(n: usize, k: f64, phase: f64) -> GridFn {
        GridFn::from_fn(n, |y| 1.5 + (2.0 * PI * k * y + phase).cos()).unwrap()
    }

    #[test]
    fn grid_size_checked() {
        assert!(GridFn::constant(8, 1.0).is_err());
        assert!(GridFn::constant(48, 1.0).is_err());
        assert!(GridFn::constant(64, 1.0).is_ok());
    }

    #[test]
    fn constant_images() {
        let x = BasePoint::parse("1011001").unwrap();
        let out = apply_fiber_operator(&sys_const(0.0), &x, &one(64), true).unwrap();
        assert!(out.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((out.log_offset() - LN_2).abs() < 1e-15);
        let out = apply_fiber_operator(&sys_const(0.3), &x, &one(64), true).unwrap();
        assert!((out.log_offset() - (LN_2 + 0.3)).abs() < 1e-14);
    }

    #[test]
    fn two_branch_hand_evaluation() {
        let fam = MpFamily::new(1.0, 0.0, 0.1, 1e-13).unwrap();
        let pot = TrigPotential::new(vec![TrigTerm::from((0, 1, 0.01))], 0.0);
        let sys = SkewProduct::new(fam, pot);
        let out = apply_fiber_operator(&sys, &BasePoint::zero(4), &one(64), false).unwrap();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        let expect = 0.01f64.exp() + (0.01 * (2.0 * PI * golden).cos()).exp();
        assert!((out.eval(0.0) - expect).abs() < 1e-13);
    }

    #[test]
    fn cascade_examples() {
        let x = BasePoint::parse("0110100111").unwrap();
        let out = iterate_cascade(&sys_const(0.0), &x, &one(32), 5).unwrap();
        assert!((out.log_offset() - 5.0 * LN_2).abs() < 1e-13);
        assert!(out.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let psi = smooth(32, 1.0, 0.2);
        assert_eq!(iterate_cascade(&sys_default(), &x, &psi, 0).unwrap(), psi);
    }

    #[test]
    fn cascade_composition() {
        let sys = sys_default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = BasePoint::random(&mut rng, 64);
        let psi = smooth(128, 2.0, 0.7);
        let whole = iterate_cascade(&sys, &x, &psi, 9).unwrap();
        let part = iterate_cascade(&sys, &x, &psi, 4).unwrap();
        let split = iterate_cascade(&sys, &x.forward(4).unwrap(), &part, 5).unwrap();
        for j in 0..128 {
            let (a, b) = (whole.values()[j], split.values()[j]);
            assert!((a - b).abs() < 1e-13);
        }
        assert!((whole.log_offset() - split.log_offset()).abs() < 1e-13);
    }

    #[test]
    fn cascade_needs_capacity() {
        let x = BasePoint::zero(3);
        assert!(iterate_cascade(&sys_default(), &x, &one(16), 4).is_err());
        assert!(
            apply_fiber_operator(&sys_default(), &BasePoint::zero(0), &one(16), false).is_err()
        );
    }

    #[test]
    fn nonpositive_rejected_under_cone_semantics() {
        let psi = GridFn::from_fn(32, |y| (2.0 * PI * y).cos()).unwrap();
        let x = BasePoint::zero(4);
        assert!(matches!(
            apply_fiber_operator(&sys_default(), &x, &psi, true),
            Err(Error::NonPositive { .. })
        ));
        assert!(apply_fiber_operator(&sys_default(), &x, &psi, false).is_ok());
    }

    #[test]
    fn nodewise_delta_pairing() {
        // at a node the grid value is the branch sum itself
        let sys = sys_default();
        let x = BasePoint::parse("110101").unwrap();
        let psi = smooth(64, 3.0, 0.1);
        let st = FiberStencil::build(&sys, x.value(), 64).unwrap();
        let out = st.apply(&psi, true).unwrap();
        for j in [0, 5, 17, 63] {
            let y = j as f64 / 64.0;
            let direct: f64 = sys
                .family
                .inverse_branches(&x, y)
                .iter()
                .map(|&yb| sys.weight(x.value(), yb) * psi.interp(yb))
                .sum();
            assert!((out.eval(y) - direct).abs() < 1e-13 * direct);
            let terms = st.branch_terms(&psi, j);
            assert!((terms[0] + terms[1] - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn full_operator_constants() {
        let psi = GridFn2D::constant(16, 32, 1.0).unwrap();
        let out = apply_full_operator(&sys_const(0.0), &psi).unwrap();
        assert!((out.log_offset() - 4f64.ln()).abs() < 1e-14);
        assert!(out.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let out = apply_full_operator(&sys_const(-0.2), &psi).unwrap();
        assert!((out.log_offset() - (4f64.ln() - 0.2)).abs() < 1e-14);
    }

    #[test]
    fn full_operator_is_linear() {
        let sys = sys_default();
        let op = FullOperator::build(&sys, 16, 32).unwrap();
        let a =
            GridFn2D::from_fn(16, 32, |x, y| 1.0 + 0.3 * (2.0 * PI * (x + 2.0 * y)).sin()).unwrap();
        let b = GridFn2D::from_fn(16, 32, |x, y| 2.0 + (2.0 * PI * x).cos() * y).unwrap();
        let sum = GridFn2D::new(
            16,
            32,
            a.values()
                .iter()
                .zip(b.values())
                .map(|(p, q)| p + q)
                .collect(),
            0.0,
        )
        .unwrap();
        let den = |g: &GridFn2D| {
            let s = g.log_offset().exp();
            g.values().iter().map(|v| v * s).collect::<Vec<_>>()
        };
        let (ia, ib, is) = (
            den(&op.apply(&a).unwrap()),
            den(&op.apply(&b).unwrap()),
            den(&op.apply(&sum).unwrap()),
        );
        for k in 0..16 * 32 {
            assert!((ia[k] + ib[k] - is[k]).abs() < 1e-12 * is[k].abs().max(1.0));
        }
    }

    #[test]
    fn full_operator_row_matches_fiber_formula() {
        let sys = sys_default();
        let psi = GridFn2D::from_fn(32, 64, |x, y| {
            1.2 + (2.0 * PI * x).sin() * (2.0 * PI * y).cos()
        })
        .unwrap();
        let out = apply_full_operator(&sys, &psi).unwrap();
        let fib = full_operator_on_fiber(&sys, &psi, 5.0 / 32.0);
        for iy in 0..64 {
            let a = out.log_offset().exp() * out.at(5, iy);
            let b = fib.eval(iy as f64 / 64.0);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let op = FullOperator::build(&sys_default(), 16, 16).unwrap().op;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..256).map(|_| rng.gen()).collect();
        let v: Vec<f64> = (0..256).map(|_| rng.gen()).collect();
        let (mut au, mut atv) = (vec![0.0; 256], vec![0.0; 256]);
        op.apply(&u, &mut au);
        op.apply_transpose(&v, &mut atv);
        let l: f64 = au.iter().zip(&v).map(|(a, b)| a * b).sum();
        let r: f64 = u.iter().zip(&atv).map(|(a, b)| a * b).sum();
        assert!((l - r).abs() < 1e-12 * l.abs());
    }

    #[test]
    fn base_operator_constants() {
        let xi = GridFn::constant(32, 1.0).unwrap();
        let out = apply_base_operator(|_| Ok(LN_2), &xi, 64).unwrap();
        assert!((out.log_offset() - 4f64.ln()).abs() < 1e-14);
        let out = apply_base_operator(|_| Ok(0.0), &xi, 64).unwrap();
        assert!((out.log_offset() - LN_2).abs() < 1e-14);
        assert!(out.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn base_operator_preimage_nodes() {
        // Φ recorded at the node it was evaluated on
        let op = BaseOperator::build(16, 64, |x| Ok(x.value())).unwrap();
        for (j, v) in op.phi_preimages.iter().enumerate() {
            assert_eq!(*v, j as f64 / 32.0);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        one(16).write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("node,value,log_offset\n"));
        assert_eq!(s.lines().count(), 17);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn positivity_and_monotonicity(seed in any::<u64>()) {
            let sys = sys_default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = BasePoint::random(&mut rng, 16);
            let a: Vec<f64> = (0..64).map(|_| rng.gen_range(0.01..1.0)).collect();
            let b: Vec<f64> = a.iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
            let st = FiberStencil::build(&sys, x.value(), 64).unwrap();
            let (mut la, mut lb) = (vec![0.0; 64], vec![0.0; 64]);
            st.apply_values(&a, &mut la);
            st.apply_values(&b, &mut lb);
            for j in 0..64 {
                prop_assert!(la[j] > 0.0);
                prop_assert!(la[j] <= lb[j]);
            }
        }
    }
}
