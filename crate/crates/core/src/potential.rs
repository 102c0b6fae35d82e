//! Potentials on the torus as finite trigonometric sums, Birkhoff sums along
//! orbits of the skew product, and the smallness condition the cone
//! arguments rely on.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::base::{circle_distance, BasePoint};
use crate::error::{Error, Result};
use crate::hypotheses::HypothesisConstants;
use crate::skew::SkewProduct;

/// One term `amplitude * cos(2π (kx x + ky y))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(i32, i32, f64)", into = "(i32, i32, f64)")]
pub struct TrigTerm {
    pub kx: i32,
    pub ky: i32,
    pub amplitude: f64,
}

impl From<(i32, i32, f64)> for TrigTerm {
    fn from((kx, ky, amplitude): (i32, i32, f64)) -> Self {
        Self { kx, ky, amplitude }
    }
}

impl From<TrigTerm> for (i32, i32, f64) {
    fn from(t: TrigTerm) -> Self {
        (t.kx, t.ky, t.amplitude)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigPotential {
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
    #[serde(default)]
    pub constant: f64,
}

impl Default for TrigPotential {
    /// `0.005 cos(2πx) + 0.005 cos(2πy)`.
    fn default() -> Self {
        Self {
            terms: vec![TrigTerm::from((1, 0, 0.005)), TrigTerm::from((0, 1, 0.005))],
            constant: 0.0,
        }
    }
}

impl TrigPotential {
    /// The value of a potential without nonconstant terms.
    pub fn as_constant(&self) -> Option<f64> {
        let mut c = self.constant;
        for t in &self.terms {
            if t.kx == 0 && t.ky == 0 {
                c += t.amplitude;
            } else if t.amplitude != 0.0 {
                return None;
            }
        }
        Some(c)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn new(terms: Vec<TrigTerm>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.amplitude == 0.0 || (t.kx == 0 && t.ky == 0))
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms.iter().fold(self.constant, |acc, t| {
            acc + t.amplitude * (2.0 * PI * (f64::from(t.kx) * x + f64::from(t.ky) * y)).cos()
        })
    }

    /// `Σ|a|`.
    pub fn total_amplitude(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude.abs()).sum()
    }

    /// Upper bound for the Lipschitz seminorm in the L1 metric on the torus.
    pub fn lipschitz_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| 2.0 * PI * t.amplitude.abs() * f64::from(t.kx.abs() + t.ky.abs()))
            .sum()
    }

    /// Crude bound on `sup φ - inf φ`.
    pub fn oscillation_bound(&self) -> f64 {
        2.0 * self.total_amplitude()
    }

    /// `φ + c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            terms: self.terms.clone(),
            constant: self.constant + c,
        }
    }
}

/// `S_n φ(x, y) = Σ_{k=0}^{n-1} φ(F^k(x, y))`.
pub fn birkhoff_sum(sys: &SkewProduct, x: &BasePoint, y: f64, n: usize) -> Result<f64> {
    if n > x.capacity() {
        return Err(Error::CapacityExhausted {
            needed: n,
            available: x.capacity(),
        });
    }
    let mut sum = 0.0;
    let mut xk = x.clone();
    let mut yk = y;
    for _ in 0..n {
        sum += sys.potential.eval(xk.value(), yk);
        let (nx, ny) = sys.step(&xk, yk)?;
        xk = nx;
        yk = ny;
    }
    Ok(sum)
}

/// Grid measurements and verdicts for the smallness condition
/// `sup φ - inf φ < ε_φ` and `|e^φ|_α < ε_φ e^{inf φ}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionPReport {
    pub grid: usize,
    pub sup: f64,
    pub inf: f64,
    pub exp_seminorm: f64,
    pub eps_phi: f64,
    pub oscillation_ok: bool,
    pub seminorm_ok: bool,
    pub eps_range_ok: bool,
    pub passed: bool,
}

/// Grid estimate of `sup φ`, `inf φ` and `|e^φ|_α` on an `n x n` torus grid.
pub fn grid_measurements(phi: &TrigPotential, alpha: f64, n: usize) -> (f64, f64, f64) {
    let h = 1.0 / n as f64;
    let vals: Vec<f64> = (0..n * n)
        .map(|idx| phi.eval((idx / n) as f64 * h, (idx % n) as f64 * h))
        .collect();
    let sup = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inf = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let ev: Vec<f64> = vals.iter().map(|v| v.exp()).collect();
    // node pairs differ by a fixed offset (a, b); the distance depends on it only
    let mut semi = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            if a == 0 && b == 0 {
                continue;
            }
            let d = circle_distance(a as f64 * h, 0.0) + circle_distance(b as f64 * h, 0.0);
            let scale = d.powf(alpha).recip();
            let mut best = 0.0f64;
            for i in 0..n {
                let row = i * n;
                let row2 = ((i + a) % n) * n;
                for j in 0..n {
                    let diff = (ev[row2 + (j + b) % n] - ev[row + j]).abs();
                    best = best.max(diff);
                }
            }
            semi = semi.max(best * scale);
        }
    }
    (sup, inf, semi)
}

/// Checks the smallness condition on a 128 x 128 grid.
pub fn check_condition_p(phi: &TrigPotential, constants: &HypothesisConstants) -> ConditionPReport {
    check_condition_p_on_grid(phi, constants, 128)
}

pub fn check_condition_p_on_grid(
    phi: &TrigPotential,
    constants: &HypothesisConstants,
    grid: usize,
) -> ConditionPReport {
    let (sup, inf, exp_seminorm) = grid_measurements(phi, constants.alpha, grid);
    let eps = constants.eps_phi;
    let oscillation_ok = sup - inf < eps;
    let seminorm_ok = exp_seminorm < eps * inf.exp();
    let upper = (constants.d as f64).ln() - (constants.q as f64).ln();
    let eps_range_ok = eps > 0.0 && eps < upper;
    ConditionPReport {
        grid,
        sup,
        inf,
        exp_seminorm,
        eps_phi: eps,
        oscillation_ok,
        seminorm_ok,
        eps_range_ok,
        passed: oscillation_ok && seminorm_ok && eps_range_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::MpFamily;
    use crate::hypotheses::HypothesisConstants;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn y_cosine(a: f64) -> TrigPotential {
        TrigPotential::new(vec![TrigTerm::from((0, 1, a))], 0.0)
    }

    fn constants_with(eps_phi: f64) -> HypothesisConstants {
        HypothesisConstants::from_measured(1.2, 1.0, 1.0, eps_phi, 0.99, 0.06)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(TrigPotential::constant(0.3).eval(0.2, 0.9), 0.3);
        let phi = y_cosine(0.01);
        assert!((phi.eval(0.4, 0.0) - 0.01).abs() < 1e-17);
        assert!(phi.eval(0.4, 0.25).abs() < 1e-17);
    }

    #[test]
    fn birkhoff_examples() {
        let sys = SkewProduct::new(MpFamily::default(), TrigPotential::constant(0.2));
        let x = BasePoint::from_rational(1, 3, 64).unwrap();
        assert!((birkhoff_sum(&sys, &x, 0.3, 5).unwrap() - 1.0).abs() < 1e-15);

        let sys = SkewProduct::new(MpFamily::default(), y_cosine(0.01));
        assert_eq!(
            birkhoff_sum(&sys, &x, 0.3, 1).unwrap(),
            sys.potential.eval(x.value(), 0.3)
        );
        // y = 0 is fixed by every fiber map, so the orbit is (x_k, 0)
        let s3 = birkhoff_sum(&sys, &x, 0.0, 3).unwrap();
        assert!((s3 - 0.03).abs() < 1e-15);
        // generic start: explicit 3-step orbit
        let fam = MpFamily::default();
        let mut y = 0.41;
        let mut expect = 0.0;
        for k in 0..3 {
            let xk = x.forward(k).unwrap();
            expect += 0.01 * (2.0 * PI * y).cos();
            y = fam.forward(&xk, y);
        }
        assert!((birkhoff_sum(&sys, &x, 0.41, 3).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn birkhoff_needs_capacity() {
        let sys = SkewProduct::new(MpFamily::default(), y_cosine(0.01));
        assert!(birkhoff_sum(&sys, &BasePoint::zero(3), 0.1, 4).is_err());
    }

    #[test]
    fn zero_potential_passes() {
        for eps in [0.01, 0.3, 0.69] {
            let r =
                check_condition_p_on_grid(&TrigPotential::constant(0.0), &constants_with(eps), 32);
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn large_potential_fails_oscillation() {
        let phi = TrigPotential::new(
            vec![TrigTerm::from((1, 0, 0.5)), TrigTerm::from((0, 1, 0.5))],
            0.0,
        );
        let r = check_condition_p_on_grid(&phi, &constants_with(0.01), 32);
        assert!(!r.oscillation_ok);
        assert!(r.sup - r.inf >= 1.0 - 1e-12);
    }

    #[test]
    fn eps_range_against_log_two() {
        let zero = TrigPotential::constant(0.0);
        assert!(check_condition_p_on_grid(&zero, &constants_with(0.6), 16).eps_range_ok);
        assert!(!check_condition_p_on_grid(&zero, &constants_with(0.7), 16).eps_range_ok);
    }

    #[test]
    fn seminorm_grows_under_refinement() {
        let phi = TrigPotential::default();
        let s16 = grid_measurements(&phi, 1.0, 16).2;
        let s32 = grid_measurements(&phi, 1.0, 32).2;
        let s64 = grid_measurements(&phi, 1.0, 64).2;
        assert!(s16 <= s32 + 1e-15 && s32 <= s64 + 1e-15);
        assert!(s64 <= phi.lipschitz_bound() * phi.oscillation_bound().exp());
    }

    #[test]
    fn default_potential_satisfies_condition() {
        let r = check_condition_p(&TrigPotential::default(), &constants_with(0.035));
        assert!(r.passed, "{r:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn birkhoff_cocycle(seed in any::<u64>(), y in 0.0f64..1.0, n in 0usize..12, m in 0usize..12) {
            let sys = SkewProduct::new(MpFamily::default(), TrigPotential::default());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = BasePoint::random(&mut rng, 64);
            let whole = birkhoff_sum(&sys, &x, y, n + m).unwrap();
            let (xn, yn) = sys.iterate(&x, y, n).unwrap();
            let split = birkhoff_sum(&sys, &x, y, n).unwrap() + birkhoff_sum(&sys, &xn, yn, m).unwrap();
            prop_assert!((whole - split).abs() <= 1e-12);
        }
    }
}
