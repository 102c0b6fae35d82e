use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use skewprod::config::ExperimentConfig;
use skewprod::experiments::{self as exp, exit_code};
use skewprod::phi::PhiTable;
use skewprod::rpf::{rpf_full_solve, RpfSolution};
use skewprod::transfer::FullOperator;
use skewprod::{Error, Result};

#[derive(Parser)]
#[command(
    name = "skewprod",
    version,
    about = "Transfer operators and equilibrium states of a doubling-map skew product"
)]
struct Cli {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Φ table cache file.
    #[arg(long, global = true)]
    phi_cache: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Expansion constants, standing inequalities and the potential's smallness.
    CheckHypotheses,
    /// Φ table and convergence sequences.
    ComputePhi,
    /// Hölder exponent of Φ.
    Holder,
    /// Cone image diameters and pairwise contraction.
    Cones,
    /// Eigen-equation residuals of the fiber measures.
    FiberMeasures,
    RpfBase,
    RpfFull,
    /// P(φ) against P(Φ).
    Pressure,
    Intertwine,
    Words,
    /// Every check; exits 1 when one fails.
    Verify,
}

struct Run {
    cfg: ExperimentConfig,
    hash: String,
    out: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let doc = json!({ "config_hash": self.hash, "seed": self.cfg.seed, "result": value });
        let mut w = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        Ok(())
    }

    fn csv(&self, name: &str, header: &str) -> Result<BufWriter<File>> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        writeln!(w, "# config_hash={} seed={}", self.hash, self.cfg.seed)?;
        writeln!(w, "{header}")?;
        Ok(w)
    }

    fn phi_table(&self) -> Result<Option<PhiTable>> {
        match &self.cfg.phi_cache {
            Some(p) => PhiTable::load(p, &self.hash),
            None => Ok(None),
        }
    }
}

fn e(x: f64) -> String {
    format!("{x:.14e}")
}

#[derive(Serialize)]
struct RpfSummary {
    log_eigenvalue: f64,
    dims: (usize, usize),
    residual: f64,
    adjoint_residual: f64,
    iterations: usize,
    eigenfunction_min: f64,
    eigenfunction_max: f64,
}

impl From<&RpfSolution> for RpfSummary {
    fn from(s: &RpfSolution) -> Self {
        Self {
            log_eigenvalue: s.log_eigenvalue,
            dims: s.dims,
            residual: s.residual,
            adjoint_residual: s.adjoint_residual,
            iterations: s.iterations,
            eigenfunction_min: s
                .eigenfunction
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min),
            eigenfunction_max: s
                .eigenfunction
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn write_solution(run: &Run, name: &str, sol: &RpfSolution) -> Result<()> {
    let mut w = run.csv(&format!("{name}.csv"), "x,y,eigenfunction,weight")?;
    let (nx, ny) = sol.dims;
    for i in 0..nx {
        for j in 0..ny {
            let k = i * ny + j;
            writeln!(
                w,
                "{},{},{},{}",
                e(i as f64 / nx as f64),
                e(j as f64 / ny as f64),
                e(sol.eigenfunction[k]),
                e(sol.weights[k])
            )?;
        }
    }
    run.json(&format!("{name}.json"), &RpfSummary::from(sol))
}

/// Returns whether every check passed.
fn dispatch(cmd: Command, run: &Run) -> Result<bool> {
    let cfg = &run.cfg;
    match cmd {
        Command::CheckHypotheses => {
            let r = exp::check_hypotheses(cfg)?;
            run.json("hypotheses.json", &r)?;
            if let Some(f) = r.hypotheses.first_failure() {
                eprintln!("hypothesis violated: {} ({} vs {})", f.name, f.lhs, f.rhs);
            }
            Ok(r.passed())
        }
        Command::ComputePhi => {
            let table = exp::build_phi_table(cfg, run.phi_table()?)?;
            let path = cfg
                .phi_cache
                .clone()
                .unwrap_or_else(|| run.path("phi_table.json"));
            table.save(&path)?;
            let r = exp::phi_convergence(cfg)?;
            let mut w = run.csv("phi_convergence.csv", "point,n,phi_node,phi_uniform")?;
            for &(i, n, a, b) in &r.sequences {
                writeln!(w, "{i},{n},{},{}", e(a), e(b))?;
            }
            run.json(
                "phi_convergence.json",
                &json!({
                    "tau_emp": r.tau_emp,
                    "C1_emp": r.c1_emp,
                    "min_r2": r.min_r2,
                    "anchor_excess": r.anchor_excess,
                    "fits": r.fits,
                    "table_entries": table.len(),
                }),
            )?;
            Ok(r.passed())
        }
        Command::Holder => {
            let r = exp::holder(cfg)?;
            let mut w = run.csv("holder.csv", "k,delta,median_diff,ratio")?;
            for s in &r.estimate.scales {
                writeln!(
                    w,
                    "{},{},{},{}",
                    s.k,
                    e(s.delta),
                    e(s.median_diff),
                    e(s.ratio)
                )?;
            }
            run.json("holder.json", &r)?;
            Ok(r.passed())
        }
        Command::Cones => {
            let r = exp::cone_contraction(cfg, cfg.experiments.points, cfg.experiments.cone_pairs)?;
            run.json("cones.json", &r)?;
            Ok(r.passed())
        }
        Command::FiberMeasures => {
            let r = exp::eigen_residuals(cfg)?;
            let (n1, n2) = r.depths;
            let mut w = run.csv(
                "fiber_measures.csv",
                &format!("point,function,residual_n{n1},residual_n{n2}"),
            )?;
            for &(i, j, a, b) in &r.rows {
                writeln!(w, "{i},{j},{},{}", e(a), e(b))?;
            }
            run.json("fiber_measures.json", &json!({ "depths": r.depths, "max_shallow": r.max_shallow, "max_deep": r.max_deep }))?;
            Ok(r.passed())
        }
        Command::RpfBase => {
            let table = run.phi_table()?;
            let base = exp::solve_base(cfg, table.as_ref())?;
            write_solution(run, "rpf_base", &base)?;
            Ok(true)
        }
        Command::RpfFull => {
            let g = &cfg.grids;
            let op = FullOperator::build(&cfg.system(), g.nx, g.ny)?;
            let sol = rpf_full_solve(&op, cfg.tolerances.eigen, cfg.tolerances.max_iter)?;
            write_solution(run, "rpf_full", &sol)?;
            Ok(true)
        }
        Command::Pressure => {
            let table = run.phi_table()?;
            let r = exp::pressure(cfg, table.as_ref())?;
            run.json("pressure.json", &r)?;
            println!(
                "P_phi {} P_Phi {} gap {}",
                e(r.p_phi),
                e(r.p_big_phi),
                e(r.gap)
            );
            Ok(r.gap <= exp::thresholds::PRESSURE_GAP)
        }
        Command::Intertwine => {
            let r = exp::intertwine(cfg, 5)?;
            run.json("intertwine.json", &r)?;
            Ok(r.passed())
        }
        Command::Words => {
            let m_emp = exp::cone_contraction(cfg, 1, cfg.experiments.cone_pairs)?.m_emp();
            let r = exp::words(cfg, cfg.experiments.word_depth, m_emp)?;
            let mut w = run.csv("words.csv", "n,m,iota,good_count,bad_count,mass_ratio")?;
            for s in &r.decay.splits {
                let ratio = s.ratio().map(e).unwrap_or_else(|_| "inf".into());
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    s.n,
                    s.m,
                    e(s.iota),
                    s.good_count,
                    s.bad_count,
                    ratio
                )?;
            }
            run.json("words.json", &r)?;
            Ok(r.passed())
        }
        Command::Verify => {
            let outcomes = exp::verify(cfg);
            for o in &outcomes {
                println!(
                    "{} {}: {}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.detail
                );
            }
            run.json("verify.json", &outcomes)?;
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = &cli.phi_cache {
        cfg.phi_cache = Some(p.clone());
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let run = Run {
        hash: cfg.hash(),
        out: cfg.output_dir.clone(),
        cfg,
    };
    dispatch(cli.command, &run)
}

fn report_error(err: &Error, code: i32) {
    let record = json!({ "error": err.kind(), "message": err.to_string(), "exit_code": code });
    eprintln!("{record}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            let code = exit_code(&err);
            report_error(&err, code);
            ExitCode::from(code as u8)
        }
    }
}
