//! Experiment configuration: one JSON file, hashed into every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cone::{ConeParams, MAX_THETA_GRID};
use crate::error::{Error, Result};
use crate::fiber::MpFamily;
use crate::hypotheses::SamplingOptions;
use crate::potential::TrigPotential;
use crate::skew::SkewProduct;
use crate::transfer::MIN_GRID;

/// User choices entering the derived constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsInput {
    pub alpha: f64,
    pub eps_phi: f64,
    pub iota: f64,
    pub eps: f64,
}

impl Default for ConstantsInput {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            eps_phi: 0.035,
            iota: 0.99,
            eps: 0.06,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    #[serde(rename = "N_X")]
    pub nx: usize,
    #[serde(rename = "N_Y")]
    pub ny: usize,
    /// Base grid for `𝓛_Φ`.
    #[serde(rename = "N_X_base")]
    pub nx_base: usize,
    #[serde(rename = "N_Theta")]
    pub n_theta: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            nx: 256,
            ny: 256,
            nx_base: 512,
            n_theta: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Target accuracy of `Φ`.
    pub phi: f64,
    /// Power-iteration stopping tolerance.
    pub eigen: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            phi: 1e-12,
            eigen: 1e-12,
            max_iter: 10_000,
        }
    }
}

/// Knobs of the individual experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentKnobs {
    /// Base points per sampled experiment.
    pub points: usize,
    /// Largest `n` of `Φ_n` sequences.
    pub phi_n_max: usize,
    /// Fit window for the convergence rate.
    pub phi_fit_range: (usize, usize),
    /// Fiber node used as the point-mass anchor.
    pub anchor_node: f64,
    /// Cascade depth for fiber measures.
    pub measure_depth: usize,
    pub test_functions: usize,
    #[serde(rename = "K")]
    pub cone_k: f64,
    pub cone_pairs: usize,
    pub holder_scales: Vec<usize>,
    pub holder_pairs: usize,
    pub word_depth: usize,
    pub word_ms: Vec<usize>,
    pub word_fiber_point: f64,
    pub sandwich_depth: usize,
}

impl Default for ExperimentKnobs {
    fn default() -> Self {
        Self {
            points: 10,
            phi_n_max: 40,
            phi_fit_range: (5, 35),
            anchor_node: 0.5,
            measure_depth: 30,
            test_functions: 10,
            cone_k: 50.0,
            cone_pairs: 50,
            holder_scales: (4..=12).collect(),
            holder_pairs: 16,
            word_depth: 16,
            word_ms: (1..=8).collect(),
            word_fiber_point: 0.4,
            sandwich_depth: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub fiber_family: MpFamily,
    pub potential: TrigPotential,
    pub constants: ConstantsInput,
    pub grids: Grids,
    pub tolerances: Tolerances,
    pub sampling: SamplingOptions,
    pub experiments: ExperimentKnobs,
    pub seed: u64,
    pub phi_cache: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fiber_family: MpFamily::default(),
            potential: TrigPotential::default(),
            constants: ConstantsInput::default(),
            grids: Grids::default(),
            tolerances: Tolerances::default(),
            sampling: SamplingOptions::default(),
            experiments: ExperimentKnobs::default(),
            seed: 1,
            phi_cache: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn bad(msg: String) -> Error {
    Error::Config(msg)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.fiber_family
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        let c = &self.constants;
        if !(c.alpha > 0.0 && c.alpha <= 1.0) {
            return Err(bad(format!("alpha {} not in (0, 1]", c.alpha)));
        }
        if !(c.eps_phi > 0.0) || !(c.eps > 0.0) {
            return Err(bad("eps_phi and eps must be positive".into()));
        }
        if !(c.iota > 0.0 && c.iota < 1.0) {
            return Err(bad(format!("iota {} not in (0, 1)", c.iota)));
        }
        let g = &self.grids;
        for (name, v) in [("N_X", g.nx), ("N_Y", g.ny), ("N_X_base", g.nx_base)] {
            if v < MIN_GRID {
                return Err(bad(format!("{name} = {v} is below {MIN_GRID}")));
            }
        }
        if g.nx * g.ny > 1 << 20 {
            return Err(bad("N_X N_Y must not exceed 2^20".into()));
        }
        if !g.nx_base.is_power_of_two() {
            return Err(bad("N_X_base must be a power of two".into()));
        }
        if g.n_theta < 8 || g.n_theta > MAX_THETA_GRID {
            return Err(bad(format!("N_Theta must lie in 8..={MAX_THETA_GRID}")));
        }
        let t = &self.tolerances;
        if !(t.phi > 0.0 && t.eigen > 0.0) || t.max_iter == 0 {
            return Err(bad("tolerances must be positive".into()));
        }
        if self.sampling.samples < 1000 || !(self.sampling.pair_distance > 0.0) {
            return Err(bad(
                "sampling needs >= 1000 samples and a positive pair distance".into(),
            ));
        }
        let e = &self.experiments;
        if e.points == 0 || e.test_functions == 0 || e.cone_pairs == 0 || e.holder_pairs == 0 {
            return Err(bad("experiment counts must be positive".into()));
        }
        if e.phi_n_max < 15 || e.phi_n_max > 100 {
            return Err(bad("phi_n_max must lie in 15..=100".into()));
        }
        if e.phi_fit_range.0 >= e.phi_fit_range.1 {
            return Err(bad("phi_fit_range must be increasing".into()));
        }
        if e.measure_depth == 0
            || e.measure_depth > 60
            || e.sandwich_depth == 0
            || e.sandwich_depth > 60
        {
            return Err(bad("measure and sandwich depths must lie in 1..=60".into()));
        }
        if e.word_depth == 0 || e.word_depth > crate::words::MAX_TREE_DEPTH || e.word_ms.len() < 2 {
            return Err(bad(
                "word_depth must lie in 1..=20 with at least two m values".into(),
            ));
        }
        if e.holder_scales.len() < 2 || e.holder_scales.iter().any(|k| !(4..=12).contains(k)) {
            return Err(bad(
                "holder_scales must hold at least two k in 4..=12".into()
            ));
        }
        if !(0.0..1.0).contains(&e.word_fiber_point) {
            return Err(bad("word_fiber_point must lie in [0, 1)".into()));
        }
        ConeParams::new(e.cone_k, c.alpha).map_err(|e| bad(e.to_string()))?;
        crate::phi::Anchor::Node(e.anchor_node)
            .log_pairing(&crate::transfer::GridFn::constant(g.ny, 1.0)?)
            .map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, in hex. Output and cache paths
    /// do not enter.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.phi_cache = None;
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn system(&self) -> SkewProduct {
        SkewProduct::new(self.fiber_family.clone(), self.potential.clone())
    }

    pub fn cone(&self) -> Result<ConeParams> {
        ConeParams::new(self.experiments.cone_k, self.constants.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn round_trip_and_hash() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.hash(), c.hash());
        let mut d = c.clone();
        d.seed += 1;
        assert_ne!(d.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        d.seed -= 1;
        d.output_dir = PathBuf::from("elsewhere");
        assert_eq!(d.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            ExperimentConfig::from_json("{"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_json(r#"{"unknown": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"grids": {"N_Y": 8}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"constants": {"iota": 1.5}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiments": {"K": 1.0}}"#).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"fiber_family": {"p0": -1, "p1": 0, "deltaA": 0.1}}"#
        )
        .is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = ExperimentConfig::from_json(r#"{"grids": {"N_X": 64}}"#).unwrap();
        assert_eq!(c.grids.nx, 64);
        assert_eq!(c.grids.ny, 256);
    }
}
