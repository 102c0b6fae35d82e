//! Good and bad branch words of fiber preimage trees.
//!
//! Letters are `1..=d`; letter `i` is the branch taken at depth `i` counted
//! from the deepest preimage, so windows `n − jm < i ≤ n` sit next to the
//! root of the tree. Letters `≤ q` are neutral.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{circle_distance, BasePoint};
use crate::error::{Error, Result};
use crate::fiber::{paired_preimage_trees, PreimageTree};
use crate::hypotheses::HypothesisConstants;
use crate::skew::SkewProduct;
use crate::stats::linear_fit;

/// Largest `d^n` enumerated exhaustively.
pub const MAX_ENUMERATION: u64 = 1 << 24;
/// Largest tree depth for mass and contraction estimates with `d = 2`.
pub const MAX_TREE_DEPTH: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    letters: Vec<u8>,
    d: u8,
}

impl Word {
    pub fn new(letters: Vec<u8>, d: u8) -> Result<Self> {
        if letters.is_empty() || d == 0 {
            return Err(Error::InvalidArgument("empty word or alphabet".into()));
        }
        if let Some(&l) = letters.iter().find(|&&l| l == 0 || l > d) {
            return Err(Error::InvalidArgument(format!(
                "letter {l} outside 1..={d}"
            )));
        }
        Ok(Self { letters, d })
    }

    /// The word with base-`d` digits of `index`, least significant first.
    pub fn from_index(mut index: u64, n: usize, d: u8) -> Result<Self> {
        let letters = (0..n)
            .map(|_| {
                let l = (index % d as u64) as u8 + 1;
                index /= d as u64;
                l
            })
            .collect();
        Self::new(letters, d)
    }

    pub fn letters(&self) -> &[u8] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn alphabet(&self) -> u8 {
        self.d
    }

    /// Number of neutral letters (`≤ q`).
    pub fn neutral_count(&self, q: u8) -> usize {
        self.letters.iter().filter(|&&l| l <= q).count()
    }

    pub fn is_good(&self, m: usize, iota: f64, q: u8) -> bool {
        is_good_letters(&self.letters, m, iota, q)
    }
}

/// Every trailing window of length `jm ≤ n` holds at most `ι·jm` neutral letters.
pub fn is_good_letters(letters: &[u8], m: usize, iota: f64, q: u8) -> bool {
    let n = letters.len();
    if m == 0 {
        return true;
    }
    let mut neutral = 0usize;
    for (len, &l) in letters.iter().rev().enumerate().map(|(i, l)| (i + 1, l)) {
        if l <= q {
            neutral += 1;
        }
        if len % m == 0 && len <= n && neutral as f64 > iota * len as f64 {
            return false;
        }
    }
    true
}

/// Validates the `is_good` parameter ranges.
pub fn check_word_params(m: usize, iota: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if !(iota > 0.0 && iota < 1.0) {
        return Err(Error::InvalidArgument(format!("iota {iota} not in (0, 1)")));
    }
    Ok(())
}

fn in_i(k: usize, n: usize, iota: f64) -> bool {
    k as f64 >= iota * n as f64
}

/// `#I(ι, n)` by enumerating all `d^n` words.
pub fn count_i_exhaustive(iota: f64, n: usize, q: u8, d: u8) -> Result<u64> {
    let total = (d as u64)
        .checked_pow(n as u32)
        .filter(|&t| t <= MAX_ENUMERATION)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("{d}^{n} words exceed the enumeration limit"))
        })?;
    Ok((0..total)
        .into_par_iter()
        .filter(|&idx| {
            let mut i = idx;
            let mut k = 0;
            for _ in 0..n {
                if ((i % d as u64) as u8) < q {
                    k += 1;
                }
                i /= d as u64;
            }
            in_i(k, n, iota)
        })
        .count() as u64)
}

/// `#I(ι, n) = Σ_{k ≥ ιn} C(n,k) q^k (d−q)^{n−k}`.
pub fn count_i_binomial(iota: f64, n: usize, q: u8, d: u8) -> Result<u128> {
    if q > d || n > 120 {
        return Err(Error::InvalidArgument("binomial count out of range".into()));
    }
    let (q, r) = (q as u128, (d - q) as u128);
    let mut binom = 1u128;
    let mut sum = 0u128;
    for k in 0..=n {
        if k > 0 {
            binom = binom * (n - k + 1) as u128 / k as u128;
        }
        if in_i(k, n, iota) {
            let term = binom
                .checked_mul(q.pow(k as u32))
                .and_then(|t| t.checked_mul(r.pow((n - k) as u32)))
                .ok_or_else(|| Error::InvalidArgument("binomial count overflow".into()))?;
            sum += term;
        }
    }
    Ok(sum)
}

/// `(1/n) log #I(ι, n)` for each `n`; `-∞` where the set is empty.
pub fn growth_rates(iota: f64, ns: &[usize], q: u8, d: u8) -> Result<Vec<(usize, f64)>> {
    ns.iter()
        .map(|&n| {
            let c = count_i_binomial(iota, n, q, d)?;
            Ok((n, (c as f64).ln() / n as f64))
        })
        .collect()
}

/// Good and bad totals over a preimage tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassSplit {
    pub n: usize,
    pub m: usize,
    pub iota: f64,
    pub good_count: u64,
    pub bad_count: u64,
    pub good_mass: f64,
    pub bad_mass: f64,
}

impl MassSplit {
    /// `Σ_𝓑 / Σ_𝓖`.
    pub fn ratio(&self) -> Result<f64> {
        if self.good_count == 0 {
            return Err(Error::EmptyGoodSet);
        }
        Ok(self.bad_mass / self.good_mass)
    }
}

/// `S_nφ` along the forward orbit of every leaf, indexed like the leaves.
/// Sums are relative to their maximum.
pub fn leaf_birkhoff_sums(
    sys: &SkewProduct,
    x: &BasePoint,
    tree: &PreimageTree,
) -> Result<Vec<f64>> {
    let n = tree.depth();
    let orbit = x.orbit(n)?;
    // top-down: a level-k node adds φ(f^k x, node) to its parent's sum
    let mut sums = vec![0.0];
    for k in (0..n).rev() {
        let xk = orbit[k].value();
        let level = &tree.levels[k];
        sums = (0..level.len())
            .map(|j| sums[j >> 1] + sys.potential.eval(xk, level[j]))
            .collect();
    }
    let top = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(sums.into_iter().map(|s| s - top).collect())
}

/// Splits the Birkhoff mass of the depth-`n` tree of `y` over `x`.
pub fn mass_split(
    sys: &SkewProduct,
    x: &BasePoint,
    y: f64,
    n: usize,
    m: usize,
    iota: f64,
) -> Result<MassSplit> {
    check_word_params(m, iota)?;
    if n == 0 || n > MAX_TREE_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "depth {n} not in 1..={MAX_TREE_DEPTH}"
        )));
    }
    let tree = PreimageTree::build(&sys.family, x, y, n)?;
    let sums = leaf_birkhoff_sums(sys, x, &tree)?;
    let q = crate::fiber::NEUTRAL_BRANCHES as u8;
    let mut split = MassSplit {
        n,
        m,
        iota,
        good_count: 0,
        bad_count: 0,
        good_mass: 0.0,
        bad_mass: 0.0,
    };
    for (leaf, s) in sums.iter().enumerate() {
        let w = s.exp();
        if is_good_letters(&tree.word(leaf), m, iota, q) {
            split.good_count += 1;
            split.good_mass += w;
        } else {
            split.bad_count += 1;
            split.bad_mass += w;
        }
    }
    Ok(split)
}

/// `Σ_{𝓑} e^{S_nφ} / Σ_{𝓖} e^{S_nφ}` over the depth-`n` preimage tree.
pub fn bad_mass_ratio(
    sys: &SkewProduct,
    x: &BasePoint,
    y: f64,
    n: usize,
    m: usize,
    constants: &HypothesisConstants,
) -> Result<f64> {
    mass_split(sys, x, y, n, m, constants.iota)?.ratio()
}

/// Geometric fit of the bad-mass ratio over `m` at fixed `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadMassDecay {
    pub base: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub theta: f64,
    pub splits: Vec<MassSplit>,
}

pub fn bad_mass_decay(
    sys: &SkewProduct,
    x: &BasePoint,
    y: f64,
    n: usize,
    ms: &[usize],
    constants: &HypothesisConstants,
) -> Result<BadMassDecay> {
    let splits = ms
        .iter()
        .map(|&m| mass_split(sys, x, y, n, m, constants.iota))
        .collect::<Result<Vec<_>>>()?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in &splits {
        let r = s.ratio()?;
        if r > 0.0 {
            xs.push(s.m as f64);
            ys.push(r.ln());
        }
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(BadMassDecay {
        base: fit.slope.exp(),
        prefactor: fit.intercept.exp(),
        r2: fit.r2,
        theta: constants.theta,
        splits,
    })
}

/// Backward contraction along good branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionFit {
    /// Slope of `−log(D_k / D_n)` against `n − k`, pooled over good words.
    pub rate_emp: f64,
    pub prefactor: f64,
    pub r2: f64,
    /// `2c` from the constants.
    pub two_c: f64,
    /// Smallest `Q ≥ 1` with `D_k ≤ Q^m e^{−2c(n−k)} D_n` for every good word and `k`.
    pub q_emp: f64,
    pub good_words: usize,
    pub degenerate: bool,
}

/// Product distances `D_k = d((f^k x, ȳ_k), (f^k x', ȳ'_k))` between paired
/// partial preimages along good words, compared with `D_n = d(f^n x, f^n x')`.
pub fn good_branch_contraction(
    sys: &SkewProduct,
    x: &BasePoint,
    xp: &BasePoint,
    y: f64,
    n: usize,
    m: usize,
    constants: &HypothesisConstants,
) -> Result<ContractionFit> {
    check_word_params(m, constants.iota)?;
    if n == 0 || n > MAX_TREE_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "depth {n} not in 1..={MAX_TREE_DEPTH}"
        )));
    }
    let (ta, tb) = paired_preimage_trees(&sys.family, x, xp, y, n)?;
    let oa = x.orbit(n)?;
    let ob = xp.orbit(n)?;
    let dx: Vec<f64> = oa
        .iter()
        .zip(&ob)
        .map(|(a, b)| circle_distance(a.value(), b.value()))
        .collect();
    let dn = dx[n];
    let two_c = 2.0 * constants.c;
    let q = crate::fiber::NEUTRAL_BRANCHES as u8;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut log_q = 0.0f64;
    let mut good = 0;
    for leaf in 0..ta.leaves().len() {
        if !is_good_letters(&ta.word(leaf), m, constants.iota, q) {
            continue;
        }
        good += 1;
        if dn == 0.0 {
            continue;
        }
        for k in 0..n {
            let dk = dx[k] + circle_distance(ta.node(leaf, k), tb.node(leaf, k));
            if dk == 0.0 {
                continue;
            }
            let gap = (n - k) as f64;
            let l = (dk / dn).ln();
            xs.push(gap);
            ys.push(-l);
            log_q = log_q.max((l + two_c * gap) / m as f64);
        }
    }
    if good == 0 {
        return Err(Error::EmptyGoodSet);
    }
    if xs.len() < 2 {
        return Ok(ContractionFit {
            rate_emp: 0.0,
            prefactor: 0.0,
            r2: 0.0,
            two_c,
            q_emp: 1.0,
            good_words: good,
            degenerate: true,
        });
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(ContractionFit {
        rate_emp: fit.slope,
        prefactor: (-fit.intercept).exp(),
        r2: fit.r2,
        two_c,
        q_emp: log_q.exp(),
        good_words: good,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::MpFamily;
    use crate::potential::TrigPotential;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w(l: &[u8]) -> Word {
        Word::new(l.to_vec(), 2).unwrap()
    }

    fn constants(iota: f64) -> HypothesisConstants {
        HypothesisConstants::from_measured(1.2, 1.0, 1.0, 0.035, iota, 0.06)
    }

    #[test]
    fn word_validation() {
        assert!(Word::new(vec![], 2).is_err());
        assert!(Word::new(vec![1, 3], 2).is_err());
        assert_eq!(Word::from_index(0b110, 3, 2).unwrap().letters(), &[1, 2, 2]);
    }

    #[test]
    fn good_word_examples() {
        assert!(w(&[2; 9]).is_good(1, 0.1, 1));
        assert!(w(&[2; 9]).is_good(4, 0.5, 1));
        assert!(!w(&[1, 1]).is_good(2, 0.5, 1));
        let good: Vec<Vec<u8>> = (0..4)
            .map(|i| Word::from_index(i, 2, 2).unwrap())
            .filter(|w| w.is_good(2, 0.5, 1))
            .map(|w| w.letters().to_vec())
            .collect();
        assert_eq!(good, vec![vec![2, 1], vec![1, 2], vec![2, 2]]);
    }

    #[test]
    fn windows_sit_at_the_end() {
        // the trailing window of length 2 is neutral
        assert!(!w(&[2, 2, 1, 1]).is_good(2, 0.5, 1));
        assert!(w(&[1, 1, 2, 2]).is_good(2, 0.5, 1));
        assert!(w(&[1, 2, 2, 1]).is_good(2, 0.5, 1));
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_i_exhaustive(0.5, 2, 1, 2).unwrap(), 3);
        assert_eq!(count_i_binomial(0.5, 2, 1, 2).unwrap(), 3);
        assert_eq!(count_i_binomial(0.0, 10, 1, 2).unwrap(), 1024);
        assert_eq!(count_i_exhaustive(0.0, 10, 1, 3).unwrap(), 59049);
        // any positive ι needs at least one neutral letter
        assert_eq!(count_i_binomial(1e-9, 10, 1, 2).unwrap(), 1024 - 1);
    }

    #[test]
    fn exhaustive_matches_binomial_at_sixteen() {
        for iota in [0.1, 0.5, 0.75, 0.9, 0.99] {
            assert_eq!(
                count_i_exhaustive(iota, 16, 1, 2).unwrap() as u128,
                count_i_binomial(iota, 16, 1, 2).unwrap()
            );
        }
    }

    #[test]
    fn enumeration_limit() {
        assert!(count_i_exhaustive(0.5, 25, 1, 2).is_err());
    }

    #[test]
    fn growth_near_one() {
        let rates = growth_rates(0.99, &[50, 100, 120], 1, 2).unwrap();
        for (_, r) in rates {
            assert!(r <= 0.06 + 0.05);
        }
    }

    #[test]
    fn zero_potential_ratio_from_counts() {
        let sys = SkewProduct::new(MpFamily::default(), TrigPotential::constant(0.0));
        let x = BasePoint::random(&mut ChaCha8Rng::seed_from_u64(3), 64);
        let n = 8;
        let s = mass_split(&sys, &x, 0.3, n, n, 0.5).unwrap();
        let bad = (0..256u64)
            .filter(|&i| !Word::from_index(i, n, 2).unwrap().is_good(n, 0.5, 1))
            .count() as f64;
        assert!((s.ratio().unwrap() - bad / (256.0 - bad)).abs() < 1e-12);
        let vac = mass_split(&sys, &x, 0.3, n, n + 1, 0.5).unwrap();
        assert_eq!(vac.bad_count, 0);
        assert_eq!(vac.ratio().unwrap(), 0.0);
    }

    #[test]
    fn birkhoff_sums_match_forward_orbits() {
        let sys = SkewProduct::new(MpFamily::default(), TrigPotential::default());
        let x = BasePoint::random(&mut ChaCha8Rng::seed_from_u64(4), 64);
        let tree = PreimageTree::build(&sys.family, &x, 0.6, 6).unwrap();
        let sums = leaf_birkhoff_sums(&sys, &x, &tree).unwrap();
        let direct: Vec<f64> = tree
            .leaves()
            .iter()
            .map(|&y| crate::potential::birkhoff_sum(&sys, &x, y, 6).unwrap())
            .collect();
        let top = direct.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in sums.iter().zip(&direct) {
            assert!((a - (b - top)).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_mass_decays() {
        let sys = SkewProduct::new(MpFamily::default(), TrigPotential::default());
        let x = BasePoint::random(&mut ChaCha8Rng::seed_from_u64(5), 64);
        let c = constants(0.99);
        let fit = bad_mass_decay(&sys, &x, 0.4, 14, &[1, 2, 3, 4, 5, 6, 7, 8], &c).unwrap();
        assert!(fit.base <= c.theta + 0.1, "{fit:?}");
    }

    #[test]
    fn identical_points_are_degenerate() {
        let sys = SkewProduct::new(MpFamily::default(), TrigPotential::default());
        let x = BasePoint::random(&mut ChaCha8Rng::seed_from_u64(6), 64);
        let f = good_branch_contraction(&sys, &x, &x, 0.2, 8, 2, &constants(0.99)).unwrap();
        assert!(f.degenerate);
    }

    #[test]
    fn good_branches_contract() {
        let sys = SkewProduct::new(MpFamily::default(), TrigPotential::default());
        let c = constants(0.99);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let x = BasePoint::random(&mut rng, 64);
            let xp = x.add_dyadic(20).unwrap();
            let f = good_branch_contraction(&sys, &x, &xp, 0.35, 10, 3, &c).unwrap();
            assert!(!f.degenerate);
            assert!(f.rate_emp >= f.two_c && f.two_c > 0.0, "{f:?}");
            assert!(f.q_emp.is_finite() && f.q_emp >= 1.0);
        }
    }

    proptest! {
        #[test]
        fn partition_counts(n in 1usize..10, m in 1usize..6, iota in 0.05f64..0.95) {
            let total = 1u64 << n;
            let good = (0..total).filter(|&i| Word::from_index(i, n, 2).unwrap().is_good(m, iota, 1)).count() as u64;
            let sys = SkewProduct::new(MpFamily::default(), TrigPotential::constant(0.0));
            let s = mass_split(&sys, &BasePoint::zero(16), 0.5, n, m, iota).unwrap();
            prop_assert_eq!(s.good_count, good);
            prop_assert_eq!(s.good_count + s.bad_count, total);
        }

        #[test]
        fn binomial_matches_enumeration(n in 1usize..12, iota in 0.0f64..1.0, d in 2u8..4) {
            prop_assert_eq!(
                count_i_exhaustive(iota, n, 1, d).unwrap() as u128,
                count_i_binomial(iota, n, 1, d).unwrap()
            );
        }
    }
}
