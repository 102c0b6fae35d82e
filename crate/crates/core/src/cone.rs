//! Hölder cones `Λ_K = {ψ > 0 : |ψ|_α ≤ K inf ψ}` on the fiber circle, their
//! Hilbert projective metric and the contraction of `𝓛_x` on them.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base::{circle_distance, BasePoint};
use crate::error::{Error, Result};
use crate::hypotheses::FIBER_DIAMETER;
use crate::skew::SkewProduct;
use crate::transfer::{FiberStencil, GridFn};

/// Default grid for the triple scan.
pub const DEFAULT_THETA_GRID: usize = 64;
/// Largest grid accepted by the triple scan.
pub const MAX_THETA_GRID: usize = 128;
/// Target points used by [`preimage_tents`] in sampled diameter estimates.
pub const PROBE_TARGETS: usize = 16;
/// Largest grid accepted by the pair scan.
pub const MAX_SEMINORM_GRID: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha: f64,
}

impl ConeParams {
    /// Requires `K ≥ diam(Y)^{-α}` and `α ∈ (0, 1]`.
    pub fn new(k: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha {alpha} not in (0, 1]"
            )));
        }
        let k_min = FIBER_DIAMETER.powf(-alpha);
        if !(k >= k_min) {
            return Err(Error::InvalidArgument(format!("K = {k} is below {k_min}")));
        }
        Ok(Self { k, alpha })
    }
}

/// Shape seminorm `max |ψ_i − ψ_j| / d(y_i, y_j)^α` over node pairs.
fn shape_seminorm(v: &[f64], alpha: f64) -> f64 {
    let n = v.len();
    let mut best = 0.0f64;
    // pairs at the same offset share the distance
    for off in 1..=n / 2 {
        let scale = (off as f64 / n as f64).powf(-alpha);
        let mut m = 0.0f64;
        for i in 0..n {
            m = m.max((v[(i + off) % n] - v[i]).abs());
        }
        best = best.max(m * scale);
    }
    best
}

/// Grid lower bound for `|ψ|_α`.
pub fn holder_seminorm(psi: &GridFn, alpha: f64) -> Result<f64> {
    if psi.len() > MAX_SEMINORM_GRID {
        return Err(Error::InvalidArgument(format!(
            "seminorm scan limited to {MAX_SEMINORM_GRID} nodes"
        )));
    }
    Ok(shape_seminorm(psi.values(), alpha) * psi.log_offset().exp())
}

/// `|ψ|_α / inf ψ` on the grid, or `None` when `ψ` has a nonpositive node.
pub fn cone_ratio(psi: &GridFn, alpha: f64) -> Option<f64> {
    let min = psi.min();
    if !(min > 0.0) {
        return None;
    }
    Some(shape_seminorm(psi.values(), alpha) / min)
}

pub fn in_cone(psi: &GridFn, cone: &ConeParams) -> bool {
    cone_ratio(psi, cone.alpha).is_some_and(|r| r <= cone.k)
}

fn prepare(psi: &GridFn, cone: &ConeParams, n_theta: usize) -> Result<Vec<f64>> {
    if n_theta > MAX_THETA_GRID {
        return Err(Error::InvalidArgument(format!(
            "triple scan limited to {MAX_THETA_GRID} nodes"
        )));
    }
    let d = if psi.len() > n_theta {
        psi.downsample(n_theta)?
    } else {
        psi.clone()
    };
    let v = d.values().to_vec();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NonPositive {
            node: v.iter().position(|x| !(*x > 0.0)).unwrap_or(0),
            value: min,
        });
    }
    let semi = shape_seminorm(&v, cone.alpha);
    if semi > cone.k * min {
        return Err(Error::ConeViolation {
            seminorm: semi,
            bound: cone.k * min,
        });
    }
    Ok(v)
}

/// `(A, B)` of the Hilbert metric on `Λ_K`: the extreme values over node
/// triples `z₁ ≠ z₂` of
/// `(K d(z₁,z₂)^α ψ(z₃) − (ψ(z₁) − ψ(z₂))) / (K d(z₁,z₂)^α φ(z₃) − (φ(z₁) − φ(z₂)))`
/// together with the pointwise ratios `ψ(z₃)/φ(z₃)`.
fn hilbert_bounds(phi: &[f64], psi: &[f64], cone: &ConeParams) -> Result<(f64, f64)> {
    let n = phi.len();
    let mut a = f64::INFINITY;
    let mut b = 0.0f64;
    for i in 0..n {
        let r = psi[i] / phi[i];
        a = a.min(r);
        b = b.max(r);
    }
    for off in 1..=n / 2 {
        let kd = cone.k * (off as f64 / n as f64).powf(cone.alpha);
        for i in 0..n {
            let j = (i + off) % n;
            let dpsi = psi[i] - psi[j];
            let dphi = phi[i] - phi[j];
            // both orders (z₁, z₂) and (z₂, z₁)
            for s in [1.0, -1.0] {
                for z in 0..n {
                    let den = kd * phi[z] - s * dphi;
                    if !(den > 0.0) {
                        return Err(Error::NonPositiveDenominator);
                    }
                    let r = (kd * psi[z] - s * dpsi) / den;
                    a = a.min(r);
                    b = b.max(r);
                }
            }
        }
        // off = n/2 visits each unordered pair twice; harmless for min/max
    }
    Ok((a, b))
}

/// `Θ(φ, ψ) = log(B/A)` on `Λ_K`, after downsampling both to `n_theta` nodes.
pub fn hilbert_distance(
    phi: &GridFn,
    psi: &GridFn,
    cone: &ConeParams,
    n_theta: usize,
) -> Result<f64> {
    let p = prepare(phi, cone, n_theta)?;
    let q = prepare(psi, cone, n_theta)?;
    if p.len() != q.len() {
        return Err(Error::InvalidArgument("grid mismatch".into()));
    }
    let (a, b) = hilbert_bounds(&p, &q, cone)?;
    if !(a > 0.0) {
        return Err(Error::NonPositiveDenominator);
    }
    Ok((b / a).ln().max(0.0))
}

/// `log max_{i,j} φ_i ψ_j / (ψ_i φ_j)`: the dual formula restricted to point
/// masses, a lower bound for `Θ`.
pub fn atomic_dual_bound(phi: &GridFn, psi: &GridFn) -> f64 {
    let r: Vec<f64> = phi
        .values()
        .iter()
        .zip(psi.values())
        .map(|(a, b)| b / a)
        .collect();
    let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    (hi / lo).ln()
}

/// Random elements of `Λ_K` on an `n`-node grid.
///
/// Even draws are trigonometric, `1 + Σ a_k cos(2πky + θ_k)` with
/// `Σ|a_k| ≤ 1/2` and `Σ 2πk|a_k| ≤ K/4`. Odd draws are tents
/// `1 + max(0, h − s·d(y, c))` of slope `s = 0.95 K` and log-uniform height
/// up to the largest one keeping `inf ψ = 1`; these sit near the extreme
/// rays of the cone, so the images span most of the image diameter.
pub fn cone_samples(
    n: usize,
    cone: &ConeParams,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GridFn>> {
    (0..count)
        .map(|i| {
            if i % 2 == 0 {
                trig_sample(n, cone, rng)
            } else {
                tent_sample(n, cone, rng)
            }
        })
        .collect()
}

fn trig_sample(n: usize, cone: &ConeParams, rng: &mut ChaCha8Rng) -> Result<GridFn> {
    let modes = rng.gen_range(1..=4usize);
    let mut terms: Vec<(f64, f64, f64)> = (1..=modes)
        .map(|k| {
            (
                k as f64,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let l1: f64 = terms.iter().map(|t| t.1.abs()).sum();
    let lip: f64 = terms.iter().map(|t| 2.0 * PI * t.0 * t.1.abs()).sum();
    // α ≤ 1 and d ≤ 1/2, so the Lipschitz sum also bounds the α-seminorm
    let lip_alpha = lip * FIBER_DIAMETER.powf(1.0 - cone.alpha);
    let size = rng.gen_range(0.2..1.0);
    let scale = size * (0.5 / l1).min(cone.k / 4.0 / lip_alpha);
    for t in terms.iter_mut() {
        t.1 *= scale;
    }
    GridFn::from_fn(n, |y| {
        1.0 + terms
            .iter()
            .map(|&(k, a, th)| a * (2.0 * PI * k * y + th).cos())
            .sum::<f64>()
    })
}

fn tent_sample(n: usize, cone: &ConeParams, rng: &mut ChaCha8Rng) -> Result<GridFn> {
    let c: f64 = rng.gen();
    // Lipschitz constant s gives α-seminorm at most s · (1/2)^{1-α}
    let s = 0.95 * cone.k / FIBER_DIAMETER.powf(1.0 - cone.alpha);
    // the support stays shorter than the circle, so inf ψ = 1
    let h_max = 0.95 * s * FIBER_DIAMETER;
    let h = rng.gen_range(0.5f64.ln()..h_max.max(1.0).ln()).exp();
    GridFn::from_fn(n, |y| 1.0 + (h - s * circle_distance(y, c)).max(0.0))
}

/// Extreme elements adapted to `𝓛_x`: for each of `targets` evenly spaced
/// points `t`, the function `1 + max_k max(0, h − s·d(y, ȳ_k))` peaked at
/// both preimages `ȳ_k` of `t`, with slope `s = 0.95 K`. Their images are
/// concentrated near `t`, which makes them far apart in `Θ`.
pub fn preimage_tents(
    sys: &SkewProduct,
    x: f64,
    cone: &ConeParams,
    n: usize,
    targets: usize,
) -> Result<Vec<GridFn>> {
    let s = 0.95 * cone.k / FIBER_DIAMETER.powf(1.0 - cone.alpha);
    // two supports of length 2h/s must leave part of the circle uncovered
    let h_max = s / 4.0;
    let mut out = Vec::with_capacity(2 * targets);
    for frac in [0.5, 0.85] {
        let h = (frac * h_max).max(0.5);
        for i in 0..targets {
            let pre = sys.family.inverse_branches_at(x, i as f64 / targets as f64);
            out.push(GridFn::from_fn(n, |y| {
                1.0 + pre
                    .iter()
                    .map(|&c| (h - s * circle_distance(y, c)).max(0.0))
                    .fold(0.0, f64::max)
            })?);
        }
    }
    Ok(out)
}

/// Image diameter of `𝓛_x` on sampled cone elements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    #[serde(rename = "M_emp")]
    pub m_emp: f64,
    pub tau: f64,
    pub zeta_emp: f64,
    pub zeta_analytic: f64,
    pub samples: usize,
}

/// Pushes cone samples through `𝓛_x` and measures the images.
///
/// Fails with a cone-escape error when some image has
/// `|𝓛ψ|_α > ζ' K inf 𝓛ψ`, `ζ' = min(1, 1.05 ζ)`.
pub fn image_diameter(
    sys: &SkewProduct,
    x: &BasePoint,
    cone: &ConeParams,
    samples: &[GridFn],
    zeta_analytic: f64,
    n_theta: usize,
) -> Result<(ContractionReport, Vec<GridFn>)> {
    if samples.len() < 20 {
        return Err(Error::InvalidArgument(format!(
            "at least 20 cone samples required, got {}",
            samples.len()
        )));
    }
    if x.capacity() < 1 {
        return Err(Error::CapacityExhausted {
            needed: 1,
            available: 0,
        });
    }
    let stencil = FiberStencil::build(sys, x.value(), samples[0].len())?;
    let limit = (1.05 * zeta_analytic).min(1.0);
    let mut zeta_emp = 0.0f64;
    let mut images = Vec::with_capacity(samples.len());
    for s in samples {
        if !in_cone(s, cone) {
            return Err(Error::ConeViolation {
                seminorm: shape_seminorm(s.values(), cone.alpha),
                bound: cone.k * s.min(),
            });
        }
        let img = stencil.apply(s, true)?;
        let ratio = cone_ratio(&img, cone.alpha).ok_or(Error::NonPositive {
            node: 0,
            value: img.min(),
        })? / cone.k;
        if ratio > limit {
            return Err(Error::ConeEscape { ratio, limit });
        }
        zeta_emp = zeta_emp.max(ratio);
        images.push(img);
    }
    let mut m_emp = 0.0f64;
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            m_emp = m_emp.max(hilbert_distance(&images[i], &images[j], cone, n_theta)?);
        }
    }
    Ok((
        ContractionReport {
            m_emp,
            tau: (m_emp / 4.0).tanh(),
            zeta_emp,
            zeta_analytic,
            samples: samples.len(),
        },
        images,
    ))
}

/// Image diameter over `count` random samples plus the preimage tents.
pub fn image_diameter_sampled(
    sys: &SkewProduct,
    x: &BasePoint,
    cone: &ConeParams,
    grid: usize,
    count: usize,
    zeta_analytic: f64,
    n_theta: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = cone_samples(grid, cone, count, &mut rng)?;
    samples.extend(preimage_tents(sys, x.value(), cone, grid, PROBE_TARGETS)?);
    Ok(image_diameter(sys, x, cone, &samples, zeta_analytic, n_theta)?.0)
}
