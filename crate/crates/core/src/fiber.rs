//! Manneville–Pomeau fiber maps `g_x(y) = y + y^{p(x)+1} mod 1`.
//!
//! The exponent varies with the base point through the one-harmonic profile
//! `p(x) = p0 + p1 (1 - cos 2πx) / 2`. Each `g_x` has two monotone branches:
//! `[0, c_x)` (the neutral branch, containing the indifferent fixed point 0)
//! and `[c_x, 1)`, where `c_x + c_x^{p(x)+1} = 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::base::{circle_distance, wrap_unit, BasePoint};
use crate::error::{Error, Result};

/// Fiber degree.
pub const FIBER_DEGREE: usize = 2;
/// Number of branches whose images meet the neutral region.
pub const NEUTRAL_BRANCHES: usize = 1;

const MAX_NEWTON_STEPS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpFamily {
    pub p0: f64,
    pub p1: f64,
    #[serde(rename = "deltaA", alias = "delta_a")]
    pub delta_a: f64,
    #[serde(default = "default_root_tol")]
    pub root_tol: f64,
}

fn default_root_tol() -> f64 {
    1e-13
}

impl Default for MpFamily {
    fn default() -> Self {
        Self {
            p0: 0.5,
            p1: 0.5,
            delta_a: 0.1,
            root_tol: default_root_tol(),
        }
    }
}

impl MpFamily {
    pub fn new(p0: f64, p1: f64, delta_a: f64, root_tol: f64) -> Result<Self> {
        let fam = Self {
            p0,
            p1,
            delta_a,
            root_tol,
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0.is_finite()) {
            return Err(Error::Config(format!("p0 must be > 0, got {}", self.p0)));
        }
        if !(self.p1 >= 0.0 && self.p1.is_finite()) {
            return Err(Error::Config(format!("p1 must be >= 0, got {}", self.p1)));
        }
        if !(self.root_tol > 0.0) {
            return Err(Error::Config("root_tol must be > 0".into()));
        }
        // c_p increases with p, so the smallest boundary sits at p0
        let c_min = boundary_for_exponent(self.p0, self.root_tol);
        if !(self.delta_a > 0.0 && self.delta_a < c_min) {
            return Err(Error::Config(format!(
                "deltaA must lie in (0, {c_min}), got {}",
                self.delta_a
            )));
        }
        Ok(())
    }

    /// `p(x)` at a base coordinate.
    #[inline]
    pub fn exponent_at(&self, x: f64) -> f64 {
        self.p0 + self.p1 * (1.0 - (2.0 * PI * x).cos()) / 2.0
    }

    pub fn exponent(&self, x: &BasePoint) -> f64 {
        self.exponent_at(x.value())
    }

    /// Lipschitz constant of the exponent profile in `x`.
    pub fn exponent_lipschitz(&self) -> f64 {
        PI * self.p1
    }

    #[inline]
    pub fn forward_at(&self, x: f64, y: f64) -> f64 {
        map_with_exponent(self.exponent_at(x), y)
    }

    /// `g_x(y)`.
    pub fn forward(&self, x: &BasePoint, y: f64) -> f64 {
        self.forward_at(x.value(), y)
    }

    /// `g_x'(y) = 1 + (p(x)+1) y^{p(x)}`.
    pub fn derivative_at(&self, x: f64, y: f64) -> f64 {
        let p = self.exponent_at(x);
        1.0 + (p + 1.0) * y.powf(p)
    }

    pub fn branch_boundary_at(&self, x: f64) -> f64 {
        boundary_for_exponent(self.exponent_at(x), self.root_tol)
    }

    /// The split point `c_x` between the two monotone branches.
    pub fn branch_boundary(&self, x: &BasePoint) -> f64 {
        self.branch_boundary_at(x.value())
    }

    #[inline]
    pub fn inverse_branches_at(&self, x: f64, t: f64) -> [f64; 2] {
        inverse_for_exponent(self.exponent_at(x), t, self.root_tol)
    }

    /// The two preimages of `t` under `g_x`, neutral branch first.
    pub fn inverse_branches(&self, x: &BasePoint, t: f64) -> [f64; 2] {
        self.inverse_branches_at(x.value(), t)
    }

    /// Membership in the neutral band `|y| < deltaA (mod 1)`.
    pub fn in_neutral_region(&self, y: f64) -> bool {
        circle_distance(y, 0.0) < self.delta_a
    }
}

#[inline]
fn map_with_exponent(p: f64, y: f64) -> f64 {
    wrap_unit(y + y.powf(p + 1.0))
}

/// Solves `y + y^{p+1} = target` for `y` in `[0, hi]`, `target <= hi + hi^{p+1}`.
///
/// The left side is increasing and convex on `[0, 1]`, so Newton started to
/// the right of the root decreases monotonically onto it. The iterate is kept
/// inside the bracket `[lo, hi]`; a bisection step replaces any Newton step
/// that would leave it.
fn solve_branch(p: f64, target: f64, tol: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut y = target.min(1.0);
    for _ in 0..MAX_NEWTON_STEPS {
        let yp = y.powf(p);
        let f = y + y * yp - target;
        if f > 0.0 {
            hi = y;
        } else if f < 0.0 {
            lo = y;
        } else {
            return y;
        }
        let df = 1.0 + (p + 1.0) * yp;
        let mut next = y - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - y).abs();
        y = next;
        if step <= tol || hi - lo <= tol {
            break;
        }
    }
    y
}

fn boundary_for_exponent(p: f64, tol: f64) -> f64 {
    solve_branch(p, 1.0, tol)
}

#[inline]
fn inverse_for_exponent(p: f64, t: f64, tol: f64) -> [f64; 2] {
    let y1 = solve_branch(p, t, tol);
    let y2 = solve_branch(p, t + 1.0, tol);
    [y1, y2]
}

/// Preimages of `t` under `g_x` and of `t'` under `g_{x'}`, paired by
/// continuation along the short arc from `t` to `t'`: each preimage of `t`
/// is matched with the nearest preimage of `t'`.
pub fn paired_inverse_at(fam: &MpFamily, x: f64, t: f64, xp: f64, tp: f64) -> [(f64, f64); 2] {
    let a = fam.inverse_branches_at(x, t);
    let b = fam.inverse_branches_at(xp, tp);
    let straight = circle_distance(a[0], b[0]) + circle_distance(a[1], b[1]);
    let crossed = circle_distance(a[0], b[1]) + circle_distance(a[1], b[0]);
    if straight <= crossed {
        [(a[0], b[0]), (a[1], b[1])]
    } else {
        [(a[0], b[1]), (a[1], b[0])]
    }
}

/// All `d^n` preimages of a fiber point under `g_x^n`, level by level.
///
/// `levels[k]` lives on the fiber over `f^k x` and has `2^{n-k}` entries;
/// `levels[n] == [y]`. The node of level `k` with index `j` has children
/// `2j` (neutral branch) and `2j + 1` on level `k - 1`. A leaf index `i`
/// encodes the word `w_1 ... w_n` with `w_i = bit (i-1) of index + 1`, so
/// letter `w_n` is the branch taken at the top of the tree.
#[derive(Clone, Debug)]
pub struct PreimageTree {
    pub orbit: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
}

impl PreimageTree {
    pub fn build(fam: &MpFamily, x: &BasePoint, y: f64, n: usize) -> Result<Self> {
        let orbit: Vec<f64> = x.orbit(n)?.iter().map(BasePoint::value).collect();
        let mut levels = vec![Vec::new(); n + 1];
        levels[n] = vec![y];
        for k in (0..n).rev() {
            let above = &levels[k + 1];
            let mut here = Vec::with_capacity(above.len() * 2);
            for &t in above {
                let [a, b] = fam.inverse_branches_at(orbit[k], t);
                here.push(a);
                here.push(b);
            }
            levels[k] = here;
        }
        Ok(Self { orbit, levels })
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaves(&self) -> &[f64] {
        &self.levels[0]
    }

    /// `g_x^k` of the leaf with index `leaf`.
    pub fn node(&self, leaf: usize, k: usize) -> f64 {
        self.levels[k][leaf >> k]
    }

    /// The word (letters in `1..=d`) labelling a leaf.
    pub fn word(&self, leaf: usize) -> Vec<u8> {
        (0..self.depth())
            .map(|i| ((leaf >> i) & 1) as u8 + 1)
            .collect()
    }
}

/// Preimage trees of the same fiber point over two base points, paired by
/// word label.
pub fn paired_preimage_trees(
    fam: &MpFamily,
    x: &BasePoint,
    xp: &BasePoint,
    y: f64,
    n: usize,
) -> Result<(PreimageTree, PreimageTree)> {
    Ok((
        PreimageTree::build(fam, x, y, n)?,
        PreimageTree::build(fam, xp, y, n)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_exponent() -> MpFamily {
        // p(0) = p0 = 1 and p1 = 0 makes every fiber map y + y^2
        MpFamily::new(1.0, 0.0, 0.1, 1e-13).unwrap()
    }

    #[test]
    fn forward_examples() {
        let fam = MpFamily::default();
        let x = BasePoint::parse("0110").unwrap();
        assert_eq!(fam.forward(&x, 0.0), 0.0);
        let one = unit_exponent();
        assert!((one.forward(&x, 0.5) - 0.75).abs() < 1e-15);
        assert!((one.forward(&x, 0.7) - 0.19).abs() < 1e-14);
    }

    #[test]
    fn boundary_for_quadratic() {
        let fam = unit_exponent();
        let x = BasePoint::zero(8);
        let c = fam.branch_boundary(&x);
        assert!((c - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
        assert!(fam.forward(&x, c) < 1e-12 || fam.forward(&x, c) > 1.0 - 1e-12);
    }

    #[test]
    fn boundary_grows_with_exponent() {
        let c1 = boundary_for_exponent(1.0, 1e-13);
        let c8 = boundary_for_exponent(8.0, 1e-13);
        // bisection oracle for p = 8
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + mid.powf(9.0) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((c8 - lo).abs() < 1e-12);
        assert!(c8 > c1);
    }

    #[test]
    fn inverse_examples_quadratic() {
        let fam = unit_exponent();
        let x = BasePoint::zero(8);
        let [a, b] = fam.inverse_branches(&x, 0.0);
        assert_eq!(a, 0.0);
        assert!((b - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
        let [a, b] = fam.inverse_branches(&x, 0.75);
        assert!((a - 0.5).abs() < 1e-12);
        assert!((b - (8f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MpFamily::new(0.0, 0.5, 0.1, 1e-13).is_err());
        assert!(MpFamily::new(0.5, -0.1, 0.1, 1e-13).is_err());
        assert!(MpFamily::new(0.5, 0.5, 0.7, 1e-13).is_err());
        assert!(MpFamily::new(0.5, 0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn derivative_is_one_only_at_zero() {
        let fam = MpFamily::default();
        assert_eq!(fam.derivative_at(0.3, 0.0), 1.0);
        assert!(fam.derivative_at(0.3, 1e-6) > 1.0);
    }

    #[test]
    fn tree_counts_and_coincidence() {
        let fam = MpFamily::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = BasePoint::random(&mut rng, 64);
        let (a, b) = paired_preimage_trees(&fam, &x, &x, 0.37, 2).unwrap();
        assert_eq!(a.leaves(), b.leaves());
        let t = PreimageTree::build(&fam, &x, 0.37, 3).unwrap();
        assert_eq!(t.leaves().len(), 8);
        let mut words: Vec<_> = (0..8).map(|i| t.word(i)).collect();
        words.sort();
        words.dedup();
        assert_eq!(words.len(), 8);
        // every leaf maps back to the root
        let orbit = x.orbit(3).unwrap();
        for i in 0..8 {
            let mut y = t.leaves()[i];
            for xk in orbit.iter().take(3) {
                y = fam.forward(xk, y);
            }
            assert!(circle_distance(y, 0.37) < 1e-11);
        }
    }

    proptest! {
        #[test]
        fn inverse_branches_invert(x in 0.0f64..1.0, t in 0.0f64..1.0) {
            let fam = MpFamily::default();
            let c = fam.branch_boundary_at(x);
            let [a, b] = fam.inverse_branches_at(x, t);
            prop_assert!(a < c + 1e-12 && b >= c - 1e-12);
            prop_assert!(a <= b);
            for y in [a, b] {
                prop_assert!(circle_distance(fam.forward_at(x, y), t) <= 10.0 * fam.root_tol);
            }
        }

        #[test]
        fn map_is_monotone(x in 0.0f64..1.0, y in 0.0f64..0.999) {
            let fam = MpFamily::default();
            let p = fam.exponent_at(x);
            let h = 1e-3;
            prop_assert!(y + y.powf(p + 1.0) < (y + h) + (y + h).powf(p + 1.0));
        }
    }
}
