//! The transverse potential `Φ(x) = lim Φ_n(x)` with
//! `Φ_n(x) = log ⟨𝓛_x^{n+1} 1, σ⟩ − log ⟨𝓛_{fx}^n 1, σ⟩`.
//!
//! Both cascades run along the orbit of `fx` with shared stencils, since
//! `𝓛_x^{n+1} 1 = 𝓛_{fx}^n (𝓛_x 1)`; one pass produces the whole sequence.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::BasePoint;
use crate::error::{Error, Result};
use crate::skew::SkewProduct;
use crate::stats::{linear_fit, median};
use crate::transfer::{FiberStencil, GridFn, StencilCache};

/// Hard cap on the cascade depth.
pub const MAX_DEPTH: usize = 200;
/// Prior contraction rate used before calibration.
pub const DEFAULT_TAU: f64 = 0.9;
/// Increments at or below this are treated as roundoff.
pub const INCREMENT_FLOOR: f64 = 1e-13;
/// Digits of a base point used as its cache key.
pub const KEY_DIGITS: usize = 64;

/// The probability measure `σ` on the fiber used to pair cascades.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// `δ_y`; `y` must be a grid node.
    Node(f64),
    /// Uniform weights on the nodes.
    Uniform,
}

impl Default for Anchor {
    fn default() -> Self {
        Anchor::Node(0.5)
    }
}

impl Anchor {
    fn node_index(y: f64, n: usize) -> Result<usize> {
        let p = y * n as f64;
        let j = p.round();
        if (p - j).abs() > 1e-9 || !(0.0..n as f64).contains(&j) {
            return Err(Error::InvalidArgument(format!(
                "anchor {y} is not a node of the {n}-point grid"
            )));
        }
        Ok(j as usize)
    }

    /// `log ⟨g, σ⟩`.
    pub fn log_pairing(&self, g: &GridFn) -> Result<f64> {
        match *self {
            Anchor::Node(y) => {
                let j = Self::node_index(y, g.len())?;
                Ok(g.log_value_at(j))
            }
            Anchor::Uniform => Ok(g.log_offset() + g.mean().ln()),
        }
    }

    /// `⟨g, σ⟩ / ⟨h, σ⟩` for two functions with their offsets.
    pub fn ratio(&self, g: &GridFn, h: &GridFn) -> Result<f64> {
        let (num, den) = match *self {
            Anchor::Node(y) => {
                let j = Self::node_index(y, g.len())?;
                (g.values()[j], h.values()[j])
            }
            Anchor::Uniform => (g.mean(), h.mean()),
        };
        Ok(num / den * (g.log_offset() - h.log_offset()).exp())
    }
}

/// One converged evaluation of `Φ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub value: f64,
    pub n_used: usize,
    pub bound: f64,
    /// `Φ_n + (Φ_n − Φ_{n−1}) τ/(1 − τ)`; reported beside `value`, never in
    /// place of it.
    pub extrapolated: f64,
}

/// Evaluates `Φ_n` on a fixed fiber grid.
#[derive(Debug)]
pub struct PhiSolver {
    pub sys: SkewProduct,
    pub grid: usize,
    pub anchor: Anchor,
    cache: Option<StencilCache>,
}

impl PhiSolver {
    pub fn new(sys: SkewProduct, grid: usize, anchor: Anchor) -> Result<Self> {
        let probe = GridFn::constant(grid, 1.0)?;
        anchor.log_pairing(&probe)?;
        Ok(Self {
            sys,
            grid,
            anchor,
            cache: None,
        })
    }

    /// Keeps every stencil it builds. Worth it when orbits revisit the same
    /// base coordinates, as dyadic grid points do.
    pub fn with_stencil_cache(mut self) -> Result<Self> {
        self.cache = Some(StencilCache::new(self.grid)?);
        Ok(self)
    }

    pub fn with_anchor(&self, anchor: Anchor) -> Result<Self> {
        Self::new(self.sys.clone(), self.grid, anchor)
    }

    pub(crate) fn stencil(&self, x: f64) -> Result<Arc<FiberStencil>> {
        match &self.cache {
            Some(c) => c.get(&self.sys, x),
            None => Ok(Arc::new(FiberStencil::build(&self.sys, x, self.grid)?)),
        }
    }

    fn check_depth(x: &BasePoint, n: usize) -> Result<()> {
        if x.capacity() < n + 1 {
            return Err(Error::CapacityExhausted {
                needed: n + 1,
                available: x.capacity(),
            });
        }
        Ok(())
    }

    /// `Φ_0, ..., Φ_{n_max}` for each anchor, from one pair of cascades.
    pub fn sequences(
        &self,
        x: &BasePoint,
        n_max: usize,
        anchors: &[Anchor],
    ) -> Result<Vec<Vec<f64>>> {
        Self::check_depth(x, n_max)?;
        let orbit = x.orbit(n_max + 1)?;
        let one = GridFn::constant(self.grid, 1.0)?;
        let mut long = self.stencil(orbit[0].value())?.apply(&one, false)?;
        let mut short = one;
        let mut out = vec![Vec::with_capacity(n_max + 1); anchors.len()];
        for k in 0..=n_max {
            if k > 0 {
                let s = self.stencil(orbit[k].value())?;
                long = s.apply(&long, false)?;
                short = s.apply(&short, false)?;
            }
            for (seq, a) in out.iter_mut().zip(anchors) {
                seq.push(a.log_pairing(&long)? - a.log_pairing(&short)?);
            }
        }
        Ok(out)
    }

    /// `Φ_0, ..., Φ_{n_max}` for the solver's anchor.
    pub fn sequence(&self, x: &BasePoint, n_max: usize) -> Result<Vec<f64>> {
        Ok(self.sequences(x, n_max, &[self.anchor])?.remove(0))
    }

    pub fn phi_n(&self, x: &BasePoint, n: usize) -> Result<f64> {
        Ok(*self
            .sequence(x, n)?
            .last()
            .expect("sequence has n + 1 terms"))
    }

    /// Iterates until two consecutive increments are at most `tol (1 − τ)`.
    pub fn compute(&self, x: &BasePoint, tol: f64, tau: f64) -> Result<PhiValue> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be > 0, got {tol}"
            )));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!("tau {tau} not in (0, 1)")));
        }
        let limit = MAX_DEPTH.min(x.capacity().saturating_sub(1));
        let orbit = x.orbit(x.capacity())?;
        let one = GridFn::constant(self.grid, 1.0)?;
        let mut long = self.stencil(orbit[0].value())?.apply(&one, false)?;
        let mut short = one;
        let mut prev = self.anchor.log_pairing(&long)? - self.anchor.log_pairing(&short)?;
        let threshold = tol * (1.0 - tau);
        let mut quiet = 0;
        let mut last_inc = f64::INFINITY;
        for k in 1..=limit {
            let s = self.stencil(orbit[k].value())?;
            long = s.apply(&long, false)?;
            short = s.apply(&short, false)?;
            let cur = self.anchor.log_pairing(&long)? - self.anchor.log_pairing(&short)?;
            let inc = cur - prev;
            last_inc = inc.abs();
            prev = cur;
            quiet = if last_inc <= threshold { quiet + 1 } else { 0 };
            if quiet == 2 {
                let floor = f64::EPSILON * cur.abs().max(1.0);
                return Ok(PhiValue {
                    value: cur,
                    n_used: k,
                    bound: last_inc.max(floor) / (1.0 - tau),
                    extrapolated: cur + inc * tau / (1.0 - tau),
                });
            }
        }
        Err(Error::NoConvergence {
            iterations: limit,
            last_change: last_inc,
        })
    }
}

/// Geometric fit `|Φ_n − Φ_{n_max}| ≈ C τ^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFit {
    pub tau: f64,
    pub c1: f64,
    pub r2: f64,
    pub points: usize,
    pub n_range: (usize, usize),
}

/// Least-squares fit of `log|Φ_n − Φ_{n_max}|` against `n` for `n` in
/// `range`, keeping terms above [`INCREMENT_FLOOR`].
pub fn fit_sequence(seq: &[f64], range: (usize, usize)) -> Result<ConvergenceFit> {
    let n_max = seq.len() - 1;
    let limit = seq[n_max];
    let (lo, hi) = (range.0, range.1.min(n_max.saturating_sub(1)));
    let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..=hi)
        .filter_map(|n| {
            let e = (seq[n] - limit).abs();
            (e > INCREMENT_FLOOR).then(|| (n as f64, e.ln()))
        })
        .unzip();
    if xs.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} usable terms in n = {lo}..={hi}",
            xs.len()
        )));
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(ConvergenceFit {
        tau: fit.slope.exp(),
        c1: fit.intercept.exp(),
        r2: fit.r2,
        points: xs.len(),
        n_range: (lo, hi),
    })
}

/// Computes `Φ_0..Φ_{n_max}` at `x` and fits the geometric rate over `n ≥ 5`.
pub fn fit_convergence_rate(
    solver: &PhiSolver,
    x: &BasePoint,
    n_max: usize,
) -> Result<ConvergenceFit> {
    if n_max < 15 {
        return Err(Error::InvalidArgument(format!(
            "n_max must be >= 15, got {n_max}"
        )));
    }
    let seq = solver.sequence(x, n_max)?;
    fit_sequence(&seq, (5, n_max))
}

/// Pooled calibration of `τ` and of a constant `C₁` that dominates
/// `|Φ_n^σ − Φ_m^{σ'}| ≤ C₁ τ^{min(n,m)}` for the sampled anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tau: f64,
    pub c1: f64,
    pub min_r2: f64,
    pub fits: Vec<ConvergenceFit>,
}

/// Fits each point's sequence over `range`, takes the largest `τ`, and sets
/// `C₁` to twice the smallest envelope constant of `|Φ_n^σ − Φ|` over both
/// anchors (twice, by the triangle inequality through the limit). Terms at
/// the roundoff floor do not enter the envelope.
pub fn calibrate(
    solver: &PhiSolver,
    points: &[BasePoint],
    n_max: usize,
    range: (usize, usize),
) -> Result<Calibration> {
    let anchors = [solver.anchor, Anchor::Uniform];
    let runs = points
        .par_iter()
        .map(|x| solver.sequences(x, n_max, &anchors))
        .collect::<Result<Vec<_>>>()?;
    let fits = runs
        .iter()
        .map(|r| fit_sequence(&r[0], range))
        .collect::<Result<Vec<_>>>()?;
    let tau = fits.iter().map(|f| f.tau).fold(0.0, f64::max);
    let min_r2 = fits.iter().map(|f| f.r2).fold(1.0, f64::min);
    if !(tau < 1.0) {
        return Err(Error::DegenerateFit(format!("fitted tau {tau} >= 1")));
    }
    let mut env = 0.0f64;
    for r in &runs {
        let limit = r[0][n_max];
        for seq in r {
            for (n, v) in seq
                .iter()
                .enumerate()
                .take(range.1.min(n_max) + 1)
                .skip(range.0)
            {
                let e = (v - limit).abs();
                if e > INCREMENT_FLOOR {
                    env = env.max(e / tau.powi(n as i32));
                }
            }
        }
    }
    Ok(Calibration {
        tau,
        c1: 2.0 * env,
        min_r2,
        fits,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiEntry {
    pub value: f64,
    pub n_used: usize,
    pub bound: f64,
}

/// Cached `Φ` values keyed by the leading digits of the base point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhiTable {
    pub config_hash: String,
    pub tau_emp: f64,
    #[serde(rename = "C1_emp")]
    pub c1_emp: f64,
    pub tol: f64,
    pub entries: BTreeMap<String, PhiEntry>,
}

impl PhiTable {
    pub fn new(config_hash: impl Into<String>, tol: f64, tau_emp: f64, c1_emp: f64) -> Self {
        Self {
            config_hash: config_hash.into(),
            tau_emp,
            c1_emp,
            tol,
            entries: BTreeMap::new(),
        }
    }

    pub fn key(x: &BasePoint) -> String {
        x.prefix_string(KEY_DIGITS)
    }

    pub fn get(&self, x: &BasePoint) -> Option<&PhiEntry> {
        self.entries.get(&Self::key(x))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Computes the missing points in parallel and inserts them in one batch.
    pub fn fill(&mut self, solver: &PhiSolver, points: &[BasePoint]) -> Result<()> {
        let todo: Vec<&BasePoint> = points.iter().filter(|x| self.get(x).is_none()).collect();
        let (tol, tau) = (self.tol, self.tau_emp);
        let computed = todo
            .par_iter()
            .map(|x| solver.compute(x, tol, tau).map(|v| (Self::key(x), v)))
            .collect::<Result<Vec<_>>>()?;
        for (k, v) in computed {
            self.entries.insert(
                k,
                PhiEntry {
                    value: v.value,
                    n_used: v.n_used,
                    bound: v.bound,
                },
            );
        }
        Ok(())
    }

    /// Cached value, or a fresh computation (not inserted).
    pub fn value(&self, solver: &PhiSolver, x: &BasePoint) -> Result<f64> {
        match self.get(x) {
            Some(e) => Ok(e.value),
            None => Ok(solver.compute(x, self.tol, self.tau_emp)?.value),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    /// Loads a cache file; a missing file or a hash mismatch yields `None`.
    pub fn load(path: &Path, config_hash: &str) -> Result<Option<Self>> {
        if !path.exists() {
            return Ok(None);
        }
        let f = std::fs::File::open(path)?;
        let t: Self = serde_json::from_reader(std::io::BufReader::new(f))?;
        Ok((t.config_hash == config_hash).then_some(t))
    }
}

/// Median `|Φ(x) − Φ(x + δ)|` at one dyadic scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleStat {
    pub k: usize,
    pub delta: f64,
    pub median_diff: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub exponent_emp: f64,
    pub seminorm_emp: f64,
    pub r2: f64,
    pub degenerate: bool,
    pub scales: Vec<ScaleStat>,
}

/// Fits `median |Φ(x) − Φ(x + 2^{-k})| ≈ C 2^{-k a}` over the given `k`.
pub fn estimate_holder(
    solver: &PhiSolver,
    ks: &[usize],
    pairs_per_scale: usize,
    tol: f64,
    seed: u64,
) -> Result<HolderEstimate> {
    if ks.is_empty() || ks.iter().any(|&k| !(4..=12).contains(&k)) {
        return Err(Error::InvalidArgument(
            "scales must be 2^-k with 4 <= k <= 12".into(),
        ));
    }
    if pairs_per_scale == 0 {
        return Err(Error::InvalidArgument(
            "pairs_per_scale must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::with_capacity(ks.len() * pairs_per_scale);
    for &k in ks {
        for _ in 0..pairs_per_scale {
            let x = BasePoint::random(&mut rng, crate::base::DEFAULT_CAPACITY);
            let xp = x.add_dyadic(k)?;
            jobs.push((k, x, xp));
        }
    }
    let diffs = jobs
        .par_iter()
        .map(|(k, x, xp)| {
            let a = solver.compute(x, tol, DEFAULT_TAU)?.value;
            let b = solver.compute(xp, tol, DEFAULT_TAU)?.value;
            Ok((*k, (a - b).abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scales: Vec<ScaleStat> = ks
        .iter()
        .map(|&k| {
            let d: Vec<f64> = diffs
                .iter()
                .filter(|(kk, _)| *kk == k)
                .map(|p| p.1)
                .collect();
            ScaleStat {
                k,
                delta: 0.5f64.powi(k as i32),
                median_diff: median(&d),
                ratio: f64::NAN,
            }
        })
        .collect();
    let degenerate = scales.iter().any(|s| !(s.median_diff > 10.0 * tol));
    if degenerate || scales.len() < 2 {
        return Ok(HolderEstimate {
            exponent_emp: 0.0,
            seminorm_emp: 0.0,
            r2: 0.0,
            degenerate: true,
            scales,
        });
    }
    let xs: Vec<f64> = scales.iter().map(|s| s.delta.ln()).collect();
    let ys: Vec<f64> = scales.iter().map(|s| s.median_diff.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    for s in scales.iter_mut() {
        s.ratio = s.median_diff / s.delta.powf(fit.slope);
    }
    Ok(HolderEstimate {
        exponent_emp: fit.slope,
        seminorm_emp: fit.intercept.exp(),
        r2: fit.r2,
        degenerate: false,
        scales,
    })
}

/// Shape of `𝓛_x^n 1` against `e^{S_nΦ(x)}` at one depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichStat {
    pub n: usize,
    /// `log inf_y 𝓛_x^n 1(y) − S_nΦ(x)`.
    pub log_inf: f64,
    /// `log sup_y 𝓛_x^n 1(y) − S_nΦ(x)`.
    pub log_sup: f64,
}

/// [`SandwichStat`] for `n = 1..=n_max`, with `Φ` along the orbit computed to `tol`.
pub fn sandwich_profile(
    solver: &PhiSolver,
    x: &BasePoint,
    n_max: usize,
    tol: f64,
) -> Result<Vec<SandwichStat>> {
    let orbit = x.orbit(n_max)?;
    let phis = orbit[..n_max]
        .par_iter()
        .map(|xk| Ok(solver.compute(xk, tol, DEFAULT_TAU)?.value))
        .collect::<Result<Vec<f64>>>()?;
    let mut cur = GridFn::constant(solver.grid, 1.0)?;
    let mut s_n = 0.0;
    let mut out = Vec::with_capacity(n_max);
    for (k, xk) in orbit[..n_max].iter().enumerate() {
        cur = solver.stencil(xk.value())?.apply(&cur, true)?;
        s_n += phis[k];
        let base = cur.log_offset() - s_n;
        out.push(SandwichStat {
            n: k + 1,
            log_inf: base + cur.min().ln(),
            log_sup: base + cur.max().ln(),
        });
    }
    Ok(out)
}
