//! Measured expansion constants of the skew product and the standing
//! inequalities that the cone-contraction and word-counting arguments need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base::{circle_distance, wrap_unit};
use crate::error::{Error, Result};
use crate::fiber::{paired_inverse_at, MpFamily, FIBER_DEGREE, NEUTRAL_BRANCHES};

/// Diameter of the circle `R/Z` in its quotient metric.
pub const FIBER_DIAMETER: f64 = 0.5;
/// Degree of the doubling map.
pub const BASE_DEGREE: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    pub d: usize,
    pub dhat: usize,
    pub dbar: usize,
    pub q: usize,
    pub gamma: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub alpha: f64,
    pub eps_phi: f64,
    pub s: f64,
    pub zeta: f64,
    pub theta: f64,
    pub iota: f64,
    pub c: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub constants: HypothesisConstants,
    pub checks: Vec<InequalityCheck>,
    pub samples: usize,
    pub pair_distance: f64,
    pub passed: bool,
}

impl HypothesisReport {
    pub fn first_failure(&self) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

impl HypothesisConstants {
    /// Fills the derived constants from `γ`, `L` and the user choices.
    ///
    /// `c` is the log-space midpoint of the admissible interval:
    /// `e^{-2c} = sqrt(γ^{-(1-ι)} L^ι)`. It is `0` when the interval is empty.
    pub fn from_measured(
        gamma: f64,
        l: f64,
        alpha: f64,
        eps_phi: f64,
        iota: f64,
        eps: f64,
    ) -> Self {
        let d = FIBER_DEGREE;
        let q = NEUTRAL_BRANCHES;
        let df = d as f64;
        let qf = q as f64;
        let s = eps_phi.exp() * ((df - qf) * gamma.powf(-alpha) + qf * l.powf(alpha)) / df;
        let zeta = s + 2.0 * s * eps_phi * FIBER_DIAMETER.powf(alpha);
        let theta = qf * eps.exp() * eps_phi.exp() / df;
        let avg = averaging_base(gamma, l, iota);
        let c = if avg > 0.0 && avg < 1.0 {
            -avg.ln() / 4.0
        } else {
            0.0
        };
        Self {
            d,
            dhat: BASE_DEGREE,
            dbar: d * BASE_DEGREE,
            q,
            gamma,
            l,
            alpha,
            eps_phi,
            s,
            zeta,
            theta,
            iota,
            c,
            eps,
        }
    }

    pub fn checks(&self) -> Vec<InequalityCheck> {
        let log_gap = (self.d as f64).ln() - (self.q as f64).ln();
        let avg = averaging_base(self.gamma, self.l, self.iota);
        let e2c = (-2.0 * self.c).exp();
        vec![
            check("gamma > 1", self.gamma, 1.0, self.gamma > 1.0),
            check("L >= 1", self.l, 1.0, self.l >= 1.0),
            check("s < 1", self.s, 1.0, self.s < 1.0),
            check("zeta < 1", self.zeta, 1.0, self.zeta < 1.0),
            check("theta < 1", self.theta, 1.0, self.theta < 1.0),
            check(
                "gamma^-(1-iota) L^iota < e^-2c",
                avg,
                e2c,
                avg > 0.0 && avg < e2c,
            ),
            check("e^-2c < 1", e2c, 1.0, e2c < 1.0),
            check(
                "0 < eps_phi < log d - log q",
                self.eps_phi,
                log_gap,
                self.eps_phi > 0.0 && self.eps_phi < log_gap,
            ),
        ]
    }

    pub fn report(self, samples: usize, pair_distance: f64) -> HypothesisReport {
        let checks = self.checks();
        let passed = checks.iter().all(|c| c.passed);
        HypothesisReport {
            constants: self,
            checks,
            samples,
            pair_distance,
            passed,
        }
    }
}

fn averaging_base(gamma: f64, l: f64, iota: f64) -> f64 {
    gamma.powf(-(1.0 - iota)) * l.powf(iota)
}

fn check(name: &str, lhs: f64, rhs: f64, passed: bool) -> InequalityCheck {
    InequalityCheck {
        name: name.to_string(),
        lhs,
        rhs,
        passed,
    }
}

/// Sampling parameters for [`estimate_constants`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingOptions {
    pub samples: usize,
    pub pair_distance: f64,
    pub seed: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            samples: 20_000,
            pair_distance: 1e-4,
            seed: 0x5eed,
        }
    }
}

/// Raw sampled bounds: minimal expansion off the neutral band and maximal
/// inverse Lipschitz ratio on it.
pub fn sample_expansion(fam: &MpFamily, opts: &SamplingOptions) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut gamma = f64::INFINITY;
    let mut l_sup = 0.0f64;
    let delta = opts.pair_distance;
    for _ in 0..opts.samples {
        let u: f64 = rng.gen();
        let t: f64 = rng.gen();
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (c, s) = (angle.cos(), angle.sin());
        let norm = c.abs() + s.abs();
        let (du, dt) = (delta * c / norm, delta * s / norm);
        let d_img = du.abs() + dt.abs();
        let t2 = wrap_unit(t + dt);
        for b in 0..BASE_DEGREE {
            // base preimages paired by continuation of the unwrapped segment
            let xb = wrap_unit((u + b as f64) / 2.0);
            let xb2 = wrap_unit((u + du + b as f64) / 2.0);
            let dx = circle_distance(xb, xb2);
            for (y, y2) in paired_inverse_at(fam, xb, t, xb2, t2) {
                let d_pre = dx + circle_distance(y, y2);
                if d_pre == 0.0 {
                    continue;
                }
                if fam.in_neutral_region(y) || fam.in_neutral_region(y2) {
                    l_sup = l_sup.max(d_pre / d_img);
                } else {
                    gamma = gamma.min(d_img / d_pre);
                }
            }
        }
    }
    (gamma, l_sup)
}

/// Estimates `γ` and `L` by sampling and evaluates every standing inequality.
/// Fails with the first violated inequality.
pub fn estimate_constants(
    fam: &MpFamily,
    alpha: f64,
    eps_phi: f64,
    iota: f64,
    eps: f64,
    opts: &SamplingOptions,
) -> Result<HypothesisReport> {
    let report = estimate_constants_exploratory(fam, alpha, eps_phi, iota, eps, opts)?;
    if let Some(bad) = report.first_failure() {
        return Err(Error::HypothesisViolated(format!(
            "{} (lhs {:.6}, rhs {:.6})",
            bad.name, bad.lhs, bad.rhs
        )));
    }
    Ok(report)
}

/// As [`estimate_constants`], but returns the report even when an
/// inequality fails.
pub fn estimate_constants_exploratory(
    fam: &MpFamily,
    alpha: f64,
    eps_phi: f64,
    iota: f64,
    eps: f64,
    opts: &SamplingOptions,
) -> Result<HypothesisReport> {
    if opts.samples < 1000 {
        return Err(Error::InvalidArgument(format!(
            "at least 1000 samples required, got {}",
            opts.samples
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} not in (0, 1]"
        )));
    }
    if !(iota > 0.0 && iota < 1.0) {
        return Err(Error::InvalidArgument(format!("iota {iota} not in (0, 1)")));
    }
    let (gamma, l_sup) = sample_expansion(fam, opts);
    let constants =
        HypothesisConstants::from_measured(gamma, l_sup.max(1.0), alpha, eps_phi, iota, eps);
    Ok(constants.report(opts.samples, opts.pair_distance))
}
