//! Experiment drivers shared by the command-line tool and the test suites.
//!
//! Each driver measures; verdicts against [`thresholds`] are applied by
//! [`verify`] and by the callers.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, DEFAULT_CAPACITY};
use crate::cone::{cone_samples, hilbert_distance, image_diameter, preimage_tents, PROBE_TARGETS};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::hypotheses::{estimate_constants_exploratory, HypothesisConstants, HypothesisReport};
use crate::phi::{
    calibrate, estimate_holder, fit_sequence, sandwich_profile, Anchor, Calibration,
    ConvergenceFit, HolderEstimate, PhiSolver, PhiTable, SandwichStat, DEFAULT_TAU,
    INCREMENT_FLOOR,
};
use crate::potential::{check_condition_p, ConditionPReport, TrigPotential};
use crate::rpf::{
    build_base_operator, conditional_integrate, disintegration_check, eigen_equation_residuals,
    intertwine_residual, rpf_base_solve, rpf_full_solve, RpfSolution,
};
use crate::transfer::{BaseOperator, FullOperator, GridFn, GridFn2D};
use crate::words::{
    bad_mass_decay, count_i_binomial, count_i_exhaustive, good_branch_contraction, BadMassDecay,
    ContractionFit,
};

/// Pass thresholds of the verification suite.
pub mod thresholds {
    pub const CLOSED_FORM_PHI: f64 = 1e-9;
    pub const CLOSED_FORM_LAMBDA: f64 = 1e-8;
    pub const MIN_R2: f64 = 0.98;
    pub const CONTRACTION_SLACK: f64 = 1e-8;
    pub const EIGEN_RESIDUAL: f64 = 1e-6;
    pub const EIGEN_DROP: f64 = 3.0;
    /// Residuals below this are not expected to decrease further.
    pub const ROUNDOFF: f64 = 1e-12;
    pub const PRESSURE_GAP: f64 = 5e-3;
    pub const PRESSURE_REFINEMENT: f64 = 1.5;
    pub const INTERTWINE: f64 = 1e-4;
    pub const FIBER_MASS: f64 = 1e-5;
    pub const TWO_ROUTE: f64 = 1e-3;
    pub const BAD_MASS_BASE_SLACK: f64 = 0.1;
    pub const HOLDER_SPREAD: f64 = 2.0;
}

/// Independent random streams derived from one seed.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn random_points(count: usize, rng: &mut ChaCha8Rng) -> Vec<BasePoint> {
    (0..count)
        .map(|_| BasePoint::random(rng, DEFAULT_CAPACITY))
        .collect()
}

/// `1 + Σ_{k≤3} a_k cos(2πky + θ_k)` with `Σ|a_k| ≤ 1/2`.
pub fn random_fiber_functions(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<GridFn>> {
    (0..count)
        .map(|_| {
            let terms: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)))
                .collect();
            let l1: f64 = terms.iter().map(|t| t.0.abs()).sum();
            let scale = 0.5 / l1;
            GridFn::from_fn(n, |y| {
                1.0 + terms
                    .iter()
                    .enumerate()
                    .map(|(k, &(a, th))| scale * a * (2.0 * PI * (k + 1) as f64 * y + th).cos())
                    .sum::<f64>()
            })
        })
        .collect()
}

/// `1 + Σ a_{jk} cos(2π(jx + ky) + θ_{jk})` over `0 ≤ j, k ≤ 2`, `Σ|a| ≤ 1/2`.
pub fn random_product_functions(
    nx: usize,
    ny: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GridFn2D>> {
    (0..count)
        .map(|_| {
            let terms: Vec<(f64, f64, f64, f64)> = (0..3)
                .flat_map(|j| (0..3).map(move |k| (j as f64, k as f64)))
                .filter(|&(j, k)| j + k > 0.0)
                .map(|(j, k)| (j, k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)))
                .collect();
            let l1: f64 = terms.iter().map(|t| t.2.abs()).sum();
            let scale = 0.5 / l1;
            GridFn2D::from_fn(nx, ny, |x, y| {
                1.0 + terms
                    .iter()
                    .map(|&(j, k, a, th)| scale * a * (2.0 * PI * (j * x + k * y) + th).cos())
                    .sum::<f64>()
            })
        })
        .collect()
}

fn solver(cfg: &ExperimentConfig, grid: usize) -> Result<PhiSolver> {
    PhiSolver::new(
        cfg.system(),
        grid,
        Anchor::Node(cfg.experiments.anchor_node),
    )
}

/// Hypothesis constants and the smallness condition on the potential.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesesOutcome {
    pub hypotheses: HypothesisReport,
    pub condition_p: ConditionPReport,
}

impl HypothesesOutcome {
    pub fn passed(&self) -> bool {
        self.hypotheses.passed && self.condition_p.passed
    }
}

pub fn check_hypotheses(cfg: &ExperimentConfig) -> Result<HypothesesOutcome> {
    let c = &cfg.constants;
    let hypotheses = estimate_constants_exploratory(
        &cfg.fiber_family,
        c.alpha,
        c.eps_phi,
        c.iota,
        c.eps,
        &cfg.sampling,
    )?;
    let condition_p = check_condition_p(&cfg.potential, &hypotheses.constants);
    Ok(HypothesesOutcome {
        hypotheses,
        condition_p,
    })
}

fn constants(cfg: &ExperimentConfig) -> Result<HypothesisConstants> {
    Ok(check_hypotheses(cfg)?.hypotheses.constants)
}

/// Closed forms for a constant potential.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosedFormReport {
    pub c: f64,
    pub phi_max_error: f64,
    pub base_log_lambda: f64,
    pub full_log_lambda: f64,
    pub expected_log_lambda: f64,
    pub seconds: f64,
}

impl ClosedFormReport {
    pub fn passed(&self) -> bool {
        self.phi_max_error <= thresholds::CLOSED_FORM_PHI
            && (self.base_log_lambda - self.expected_log_lambda).abs()
                <= thresholds::CLOSED_FORM_LAMBDA
            && (self.full_log_lambda - self.expected_log_lambda).abs()
                <= thresholds::CLOSED_FORM_LAMBDA
    }
}

/// Replaces the potential by `φ ≡ c` and checks `Φ = log 2 + c` at `points`
/// random base points and both log-eigenvalues against `log 4 + c`.
pub fn closed_forms(cfg: &ExperimentConfig, c: f64, points: usize) -> Result<ClosedFormReport> {
    let t = Instant::now();
    let mut cfg = cfg.clone();
    cfg.potential = TrigPotential::constant(c);
    let g = &cfg.grids;
    let s = solver(&cfg, g.ny)?;
    let xs = random_points(points, &mut rng(cfg.seed, 1));
    let expected_phi = 2f64.ln() + c;
    let errs = xs
        .par_iter()
        .map(|x| Ok((s.compute(x, cfg.tolerances.phi, DEFAULT_TAU)?.value - expected_phi).abs()))
        .collect::<Result<Vec<f64>>>()?;
    let sc = solver(&cfg, g.ny)?.with_stencil_cache()?;
    let base = rpf_base_solve(
        &build_base_operator(&sc, g.nx_base, cfg.tolerances.phi)?,
        cfg.tolerances.eigen,
        cfg.tolerances.max_iter,
    )?;
    let full = rpf_full_solve(
        &FullOperator::build(&cfg.system(), g.nx, g.ny)?,
        cfg.tolerances.eigen,
        cfg.tolerances.max_iter,
    )?;
    Ok(ClosedFormReport {
        c,
        phi_max_error: errs.into_iter().fold(0.0, f64::max),
        base_log_lambda: base.log_eigenvalue,
        full_log_lambda: full.log_eigenvalue,
        expected_log_lambda: 4f64.ln() + c,
        seconds: t.elapsed().as_secs_f64(),
    })
}

/// Convergence of `Φ_n` and its independence of the anchor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhiConvergenceReport {
    pub calibration: Calibration,
    pub fits: Vec<ConvergenceFit>,
    pub tau_emp: f64,
    #[serde(rename = "C1_emp")]
    pub c1_emp: f64,
    pub min_r2: f64,
    /// Largest `|Φ_n^{δ_y} − Φ_n^{unif}| − (C₁τ^n + floor)` over `n ≥ 10`; `≤ 0` passes.
    pub anchor_excess: f64,
    /// `(point, n, Φ_n^{δ_y}, Φ_n^{unif})`.
    pub sequences: Vec<(usize, usize, f64, f64)>,
}

impl PhiConvergenceReport {
    pub fn passed(&self) -> bool {
        self.tau_emp < 1.0 && self.min_r2 >= thresholds::MIN_R2 && self.anchor_excess <= 0.0
    }
}

/// Calibrates `τ` and `C₁` on one set of points and checks them on another.
pub fn phi_convergence(cfg: &ExperimentConfig) -> Result<PhiConvergenceReport> {
    let e = &cfg.experiments;
    let s = solver(cfg, cfg.grids.ny)?;
    let cal_points = random_points(e.points, &mut rng(cfg.seed, 2));
    let points = random_points(e.points, &mut rng(cfg.seed, 3));
    let calibration = calibrate(&s, &cal_points, e.phi_n_max, e.phi_fit_range)?;
    let (tau, c1) = (calibration.tau, calibration.c1);
    let anchors = [s.anchor, Anchor::Uniform];
    let runs = points
        .par_iter()
        .map(|x| s.sequences(x, e.phi_n_max, &anchors))
        .collect::<Result<Vec<_>>>()?;
    let fits = runs
        .iter()
        .map(|r| fit_sequence(&r[0], e.phi_fit_range))
        .collect::<Result<Vec<_>>>()?;
    let mut excess = f64::NEG_INFINITY;
    let mut sequences = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        for n in 0..=e.phi_n_max {
            sequences.push((i, n, r[0][n], r[1][n]));
            if n >= 10 {
                let diff = (r[0][n] - r[1][n]).abs();
                excess = excess.max(diff - (c1 * tau.powi(n as i32) + INCREMENT_FLOOR));
            }
        }
    }
    Ok(PhiConvergenceReport {
        tau_emp: fits.iter().map(|f| f.tau).fold(0.0, f64::max),
        min_r2: fits.iter().map(|f| f.r2).fold(1.0, f64::min),
        c1_emp: c1,
        calibration,
        fits,
        anchor_excess: excess,
        sequences,
    })
}

/// Fills a `Φ` table at random points plus the base-grid preimage nodes.
pub fn build_phi_table(cfg: &ExperimentConfig, existing: Option<PhiTable>) -> Result<PhiTable> {
    let e = &cfg.experiments;
    let s = solver(cfg, cfg.grids.ny)?.with_stencil_cache()?;
    let mut table = match existing {
        Some(t) => t,
        None => {
            let cal = calibrate(
                &s,
                &random_points(e.points, &mut rng(cfg.seed, 2)),
                e.phi_n_max,
                e.phi_fit_range,
            )?;
            PhiTable::new(cfg.hash(), cfg.tolerances.phi, cal.tau, cal.c1)
        }
    };
    let m = 2 * cfg.grids.nx_base;
    let mut pts = (0..m)
        .map(|j| BasePoint::dyadic(j, m, DEFAULT_CAPACITY))
        .collect::<Result<Vec<_>>>()?;
    pts.extend(random_points(e.points, &mut rng(cfg.seed, 3)));
    table.fill(&s, &pts)?;
    Ok(table)
}

/// Per-point cone diameter and the pairwise contraction check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConePointReport {
    pub x: BasePoint,
    #[serde(rename = "M_emp")]
    pub m_emp: f64,
    pub tau: f64,
    pub zeta_emp: f64,
    pub zeta_analytic: f64,
    pub samples: usize,
    /// Largest `Θ(𝓛φ,𝓛ψ) − tanh(M/4) Θ(φ,ψ)` over the pairs.
    pub worst_slack: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeReport {
    pub points: Vec<ConePointReport>,
}

impl ConeReport {
    pub fn m_emp(&self) -> f64 {
        self.points.iter().map(|p| p.m_emp).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.zeta_emp < 1.0 && p.worst_slack <= thresholds::CONTRACTION_SLACK)
    }
}

/// At each of `points` base points: `2·pairs` random cone elements plus the
/// preimage tents give `M_emp`; consecutive random elements form the pairs.
pub fn cone_contraction(cfg: &ExperimentConfig, points: usize, pairs: usize) -> Result<ConeReport> {
    let cone = cfg.cone()?;
    let zeta = constants(cfg)?.zeta;
    let sys = cfg.system();
    let grid = cfg.grids.ny;
    let n_theta = cfg.grids.n_theta;
    let mut r = rng(cfg.seed, 4);
    let xs = random_points(points, &mut r);
    let seeds: Vec<u64> = (0..points).map(|_| r.gen()).collect();
    let reports = xs
        .par_iter()
        .zip(seeds)
        .map(|(x, seed)| {
            let mut samples =
                cone_samples(grid, &cone, 2 * pairs, &mut ChaCha8Rng::seed_from_u64(seed))?;
            samples.extend(preimage_tents(&sys, x.value(), &cone, grid, PROBE_TARGETS)?);
            let (rep, images) = image_diameter(&sys, x, &cone, &samples, zeta, n_theta)?;
            let mut worst = f64::NEG_INFINITY;
            for i in 0..pairs {
                let before =
                    hilbert_distance(&samples[2 * i], &samples[2 * i + 1], &cone, n_theta)?;
                let after = hilbert_distance(&images[2 * i], &images[2 * i + 1], &cone, n_theta)?;
                worst = worst.max(after - rep.tau * before);
            }
            Ok(ConePointReport {
                x: x.clone(),
                m_emp: rep.m_emp,
                tau: rep.tau,
                zeta_emp: rep.zeta_emp,
                zeta_analytic: rep.zeta_analytic,
                samples: rep.samples,
                worst_slack: worst,
                pairs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConeReport { points: reports })
}

/// Eigen-equation residuals at two depths.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenReport {
    pub depths: (usize, usize),
    /// `(point, function, residual at the smaller depth, residual at the larger)`.
    pub rows: Vec<(usize, usize, f64, f64)>,
    pub max_shallow: f64,
    pub max_deep: f64,
}

impl EigenReport {
    /// The drop is only required while the shallow residual is above roundoff.
    pub fn passed(&self) -> bool {
        self.max_deep <= thresholds::EIGEN_RESIDUAL
            && (self.max_deep * thresholds::EIGEN_DROP <= self.max_shallow
                || self.max_shallow <= thresholds::ROUNDOFF)
    }
}

pub fn eigen_residuals(cfg: &ExperimentConfig) -> Result<EigenReport> {
    let e = &cfg.experiments;
    let s = solver(cfg, cfg.grids.ny)?;
    let mut r = rng(cfg.seed, 5);
    let xs = random_points(e.points, &mut r);
    let fns = random_fiber_functions(cfg.grids.ny, e.test_functions, &mut r)?;
    let (n1, n2) = (e.measure_depth / 2, e.measure_depth);
    let per_point = xs
        .par_iter()
        .map(|x| {
            let phi = s
                .compute(x, cfg.tolerances.phi.min(1e-13), DEFAULT_TAU)?
                .value;
            Ok((
                eigen_equation_residuals(&s, x, phi, &fns, n1)?,
                eigen_equation_residuals(&s, x, phi, &fns, n2)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, (a, b)) in per_point.iter().enumerate() {
        for j in 0..fns.len() {
            rows.push((i, j, a[j], b[j]));
        }
    }
    Ok(EigenReport {
        depths: (n1, n2),
        max_shallow: rows.iter().map(|r| r.2).fold(0.0, f64::max),
        max_deep: rows.iter().map(|r| r.3).fold(0.0, f64::max),
        rows,
    })
}

/// Eigendata of `𝓛_Φ` on the base grid, reading `Φ` from `table` when given.
pub fn solve_base(cfg: &ExperimentConfig, table: Option<&PhiTable>) -> Result<RpfSolution> {
    let g = &cfg.grids;
    let t = &cfg.tolerances;
    let sc = solver(cfg, g.ny)?.with_stencil_cache()?;
    let op = match table {
        Some(tab) => BaseOperator::build(g.nx_base, DEFAULT_CAPACITY, |x| tab.value(&sc, x))?,
        None => build_base_operator(&sc, g.nx_base, t.phi)?,
    };
    rpf_base_solve(&op, t.eigen, t.max_iter)
}

/// Full and base eigendata on the configured grids.
pub fn solve_both(
    cfg: &ExperimentConfig,
    table: Option<&PhiTable>,
) -> Result<(RpfSolution, RpfSolution)> {
    let g = &cfg.grids;
    let t = &cfg.tolerances;
    let full = rpf_full_solve(
        &FullOperator::build(&cfg.system(), g.nx, g.ny)?,
        t.eigen,
        t.max_iter,
    )?;
    Ok((full, solve_base(cfg, table)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PressureReport {
    #[serde(rename = "P_phi")]
    pub p_phi: f64,
    #[serde(rename = "P_Phi")]
    pub p_big_phi: f64,
    pub gap: f64,
    pub nx: usize,
    pub ny: usize,
    pub nx_base: usize,
    pub seconds: f64,
}

/// `P(φ) = log λ` against `P(Φ) = log λ̂`.
pub fn pressure(cfg: &ExperimentConfig, table: Option<&PhiTable>) -> Result<PressureReport> {
    let t = Instant::now();
    let (full, base) = solve_both(cfg, table)?;
    Ok(PressureReport {
        p_phi: full.log_eigenvalue,
        p_big_phi: base.log_eigenvalue,
        gap: (full.log_eigenvalue - base.log_eigenvalue).abs(),
        nx: cfg.grids.nx,
        ny: cfg.grids.ny,
        nx_base: cfg.grids.nx_base,
        seconds: t.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PressureRefinement {
    pub coarse: PressureReport,
    pub fine: PressureReport,
    pub shrink: f64,
}

impl PressureRefinement {
    pub fn passed(&self) -> bool {
        self.coarse.gap <= thresholds::PRESSURE_GAP
            && self.shrink >= thresholds::PRESSURE_REFINEMENT
    }
}

/// The pressure gap on the configured grids and on grids twice as fine.
pub fn pressure_refinement(cfg: &ExperimentConfig) -> Result<PressureRefinement> {
    let coarse = pressure(cfg, None)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.grids.nx *= 2;
    fine_cfg.grids.ny *= 2;
    fine_cfg.grids.nx_base *= 2;
    fine_cfg.validate()?;
    let fine = pressure(&fine_cfg, None)?;
    Ok(PressureRefinement {
        shrink: coarse.gap / fine.gap,
        coarse,
        fine,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntertwineReport {
    pub depth: usize,
    /// Largest residual per test function.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

impl IntertwineReport {
    pub fn passed(&self) -> bool {
        self.max_residual <= thresholds::INTERTWINE
    }
}

pub fn intertwine(cfg: &ExperimentConfig, functions: usize) -> Result<IntertwineReport> {
    let e = &cfg.experiments;
    let s = solver(cfg, cfg.grids.ny)?;
    let mut r = rng(cfg.seed, 6);
    let xs = random_points(e.points, &mut r);
    let psis = random_product_functions(cfg.grids.nx, cfg.grids.ny, functions, &mut r)?;
    let tol = cfg.tolerances.phi;
    let residuals = psis
        .iter()
        .map(|p| {
            intertwine_residual(&s, p, &xs, e.measure_depth, |x| {
                Ok(s.compute(x, tol, DEFAULT_TAU)?.value)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntertwineReport {
        depth: e.measure_depth,
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
        residuals,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisintegrationReport {
    /// `μ_x(Y)` at the sampled points.
    pub fiber_masses: Vec<f64>,
    pub mass_worst: f64,
    /// `(direct, iterated)` per test function.
    pub two_route: Vec<(f64, f64)>,
    pub two_route_worst: f64,
}

impl DisintegrationReport {
    pub fn passed(&self) -> bool {
        self.mass_worst <= thresholds::FIBER_MASS && self.two_route_worst <= thresholds::TWO_ROUTE
    }
}

pub fn disintegration(
    cfg: &ExperimentConfig,
    functions: usize,
    table: Option<&PhiTable>,
) -> Result<DisintegrationReport> {
    let e = &cfg.experiments;
    let (full, base) = solve_both(cfg, table)?;
    let s = solver(cfg, cfg.grids.ny)?.with_stencil_cache()?;
    let mut r = rng(cfg.seed, 7);
    let xs = random_points(e.points, &mut r);
    let one = GridFn::constant(cfg.grids.ny, 1.0)?;
    let fiber_masses = xs
        .iter()
        .map(|x| conditional_integrate(&s, x, &one, &full, &base, e.measure_depth))
        .collect::<Result<Vec<_>>>()?;
    let psis = random_product_functions(cfg.grids.nx, cfg.grids.ny, functions, &mut r)?;
    let two_route = psis
        .iter()
        .map(|p| {
            disintegration_check(&s, p, &full, &base, e.measure_depth)
                .map(|d| (d.direct, d.iterated))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DisintegrationReport {
        mass_worst: fiber_masses
            .iter()
            .map(|m| (m - 1.0).abs())
            .fold(0.0, f64::max),
        fiber_masses,
        two_route_worst: two_route
            .iter()
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        two_route,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WordsReport {
    /// `(n, ι, exhaustive, binomial)`.
    pub counts: Vec<(usize, f64, u64, u128)>,
    pub decay: BadMassDecay,
    pub contraction: Vec<ContractionFit>,
    pub sandwich: Vec<SandwichStat>,
    #[serde(rename = "M_emp")]
    pub m_emp: f64,
    /// Largest `|log(𝓛^n 1 e^{−S_nΦ})|` over the profile.
    pub sandwich_worst: f64,
}

impl WordsReport {
    pub fn counts_agree(&self) -> bool {
        self.counts.iter().all(|c| c.2 as u128 == c.3)
    }

    pub fn decay_ok(&self) -> bool {
        self.decay.base <= self.decay.theta + thresholds::BAD_MASS_BASE_SLACK
    }

    pub fn sandwich_ok(&self) -> bool {
        self.sandwich_worst <= self.m_emp
    }

    pub fn passed(&self) -> bool {
        self.counts_agree() && self.decay_ok() && self.sandwich_ok()
    }
}

/// Word counting for `n ≤ count_depth`, bad-mass decay, good-branch
/// contraction, and the sandwich profile against `m_emp`.
pub fn words(cfg: &ExperimentConfig, count_depth: usize, m_emp: f64) -> Result<WordsReport> {
    let e = &cfg.experiments;
    let c = constants(cfg)?;
    let sys = cfg.system();
    let mut counts = Vec::new();
    for n in 1..=count_depth {
        for iota in [0.25, 0.5, 0.75, 0.9, c.iota] {
            counts.push((
                n,
                iota,
                count_i_exhaustive(iota, n, 1, 2)?,
                count_i_binomial(iota, n, 1, 2)?,
            ));
        }
    }
    let mut r = rng(cfg.seed, 8);
    let x = BasePoint::random(&mut r, DEFAULT_CAPACITY);
    let y = e.word_fiber_point;
    let decay = bad_mass_decay(&sys, &x, y, e.word_depth, &e.word_ms, &c)?;
    let contraction = (0..e.points.min(5))
        .map(|_| {
            let x = BasePoint::random(&mut r, DEFAULT_CAPACITY);
            let xp = x.add_dyadic(20)?;
            good_branch_contraction(
                &sys,
                &x,
                &xp,
                y,
                e.word_depth.min(12),
                e.word_ms[0].max(2),
                &c,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let s = solver(cfg, cfg.grids.ny)?;
    let sandwich = sandwich_profile(&s, &x, e.sandwich_depth, cfg.tolerances.phi)?;
    let sandwich_worst = sandwich
        .iter()
        .map(|st| st.log_inf.abs().max(st.log_sup.abs()))
        .fold(0.0, f64::max);
    Ok(WordsReport {
        counts,
        decay,
        contraction,
        sandwich,
        m_emp,
        sandwich_worst,
    })
}

/// Per-scale spread of `|ΔΦ| / δ^a` around its median.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderReport {
    pub estimate: HolderEstimate,
    pub median_ratio: f64,
    /// Largest `max(r/median, median/r)` over the scales.
    pub spread: f64,
}

impl HolderReport {
    pub fn passed(&self) -> bool {
        !self.estimate.degenerate
            && self.estimate.exponent_emp > 0.0
            && self.spread <= thresholds::HOLDER_SPREAD
    }
}

pub fn holder(cfg: &ExperimentConfig) -> Result<HolderReport> {
    let e = &cfg.experiments;
    let s = solver(cfg, cfg.grids.ny)?;
    let estimate = estimate_holder(
        &s,
        &e.holder_scales,
        e.holder_pairs,
        cfg.tolerances.phi,
        cfg.seed,
    )?;
    let ratios: Vec<f64> = estimate.scales.iter().map(|s| s.ratio).collect();
    let median_ratio = crate::stats::median(&ratios);
    let spread = ratios
        .iter()
        .map(|r| (r / median_ratio).max(median_ratio / r))
        .fold(0.0, f64::max);
    Ok(HolderReport {
        estimate,
        median_ratio,
        spread: if spread.is_nan() {
            f64::INFINITY
        } else {
            spread
        },
    })
}

/// One verdict of the verification suite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed,
        detail,
    }
}

/// Runs every check on the configured system. A numerical failure inside a
/// check is reported as a failed check.
pub fn verify(cfg: &ExperimentConfig) -> Vec<CheckOutcome> {
    let e = &cfg.experiments;
    let mut out = Vec::new();
    let mut push = |name: &str, r: Result<(bool, String)>| {
        out.push(match r {
            Ok((p, d)) => outcome(name, p, d),
            Err(err) => outcome(name, false, format!("error: {err}")),
        })
    };
    push(
        "hypotheses",
        check_hypotheses(cfg).map(|h| {
            let first = h
                .hypotheses
                .first_failure()
                .map(|c| c.name.clone())
                .unwrap_or_default();
            (
                h.passed(),
                format!(
                    "zeta {:.6} theta {:.6} condition_p {} {first}",
                    h.hypotheses.constants.zeta, h.hypotheses.constants.theta, h.condition_p.passed
                ),
            )
        }),
    );
    let constant = cfg.potential.as_constant();
    if let Some(c) = constant {
        push(
            "closed_forms",
            closed_forms(cfg, c, e.points).map(|r| {
                (
                    r.passed(),
                    format!(
                        "phi err {:.3e} base {:.14e} full {:.14e}",
                        r.phi_max_error, r.base_log_lambda, r.full_log_lambda
                    ),
                )
            }),
        );
    } else {
        push(
            "phi_convergence",
            phi_convergence(cfg).map(|r| {
                (
                    r.passed(),
                    format!(
                        "tau {:.4} r2 {:.4} anchor excess {:.3e}",
                        r.tau_emp, r.min_r2, r.anchor_excess
                    ),
                )
            }),
        );
    }
    let cone = cone_contraction(cfg, e.points.min(5), e.cone_pairs);
    let m_emp = cone.as_ref().map(|c| c.m_emp()).unwrap_or(f64::NAN);
    push(
        "cone_contraction",
        cone.map(|c| (c.passed(), format!("M_emp {:.4}", c.m_emp()))),
    );
    push(
        "eigen_equation",
        eigen_residuals(cfg).map(|r| {
            (
                r.passed(),
                format!("{:.3e} -> {:.3e}", r.max_shallow, r.max_deep),
            )
        }),
    );
    push(
        "pressure",
        pressure(cfg, None).map(|r| {
            (
                r.gap <= thresholds::PRESSURE_GAP,
                format!("gap {:.3e}", r.gap),
            )
        }),
    );
    push(
        "intertwining",
        intertwine(cfg, 5).map(|r| (r.passed(), format!("{:.3e}", r.max_residual))),
    );
    push(
        "disintegration",
        disintegration(cfg, 5, None).map(|r| {
            (
                r.passed(),
                format!(
                    "mass {:.3e} two-route {:.3e}",
                    r.mass_worst, r.two_route_worst
                ),
            )
        }),
    );
    push(
        "words",
        words(cfg, e.word_depth, m_emp).map(|r| {
            (
                r.passed(),
                format!(
                    "base {:.4} theta {:.4} sandwich {:.4}",
                    r.decay.base, r.decay.theta, r.sandwich_worst
                ),
            )
        }),
    );
    if constant.is_none() {
        push(
            "holder",
            holder(cfg).map(|r| {
                (
                    r.passed(),
                    format!(
                        "exponent {:.4} spread {:.4}",
                        r.estimate.exponent_emp, r.spread
                    ),
                )
            }),
        );
    }
    out
}

/// Maps an error to the exit status of the command-line tool.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::HypothesisViolated(_) => 1,
        _ => 3,
    }
}
