//! Run configuration: map, potential, observable and every numeric knob used
//! by the command-line front end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Atom, Branch, MarkovMap};
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::statistics::Observable;

/// Largest cylinder depth accepted from a configuration.
pub const MAX_DEPTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Doubling,
    Tripling,
    /// `x -> m x mod 1`.
    LinearFull { m: usize },
    GoldenMean,
    Benchmark { delta0: f64 },
    Custom { atoms: Vec<Atom>, branches: Vec<Branch>, bad: usize, delta0: f64 },
}

impl MapSpec {
    pub fn build(&self) -> Result<MarkovMap> {
        match self {
            MapSpec::Doubling => Ok(MarkovMap::doubling()),
            MapSpec::Tripling => Ok(MarkovMap::tripling()),
            MapSpec::LinearFull { m } => {
                if *m < 2 {
                    return Err(Error::Config("linear_full needs m >= 2".into()));
                }
                Ok(MarkovMap::linear_full(*m))
            }
            MapSpec::GoldenMean => Ok(MarkovMap::golden_mean()),
            MapSpec::Benchmark { delta0 } => MarkovMap::benchmark(*delta0),
            MapSpec::Custom { atoms, branches, bad, delta0 } => MarkovMap::new(atoms.clone(), branches.clone(), *bad, *delta0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative change at which power iteration stops.
    pub power: f64,
    pub power_max_iter: usize,
    /// Step size at which the variational scan stops refining.
    pub scan_refine: f64,
    /// Kolmogorov–Smirnov acceptance threshold.
    pub ks: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { power: 1e-12, power_max_iter: 200_000, scan_refine: 1e-12, ks: 0.02 }
    }
}

fn default_eps_list() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapSpec,
    pub potential: Potential,
    /// Observable for the statistics commands.
    pub observable: Observable,
    /// Cylinder depth of the discretized operator.
    pub depth: usize,
    /// Depth cap for enumerations of hyperbolic cylinders.
    pub depth_cap: usize,
    /// Grid nodes per atom for cone and Lasota–Yorke checks.
    pub grid_per_atom: usize,
    pub gamma: f64,
    /// Hyperbolicity constant; defaults to the value giving equality in the expansion condition.
    pub c: Option<f64>,
    /// Frequency threshold of the second route; without it that route is not checked.
    pub gamma0: Option<f64>,
    /// Cone parameter.
    pub l: Option<f64>,
    /// Target contraction factor of the cone.
    pub theta0: Option<f64>,
    pub seed: u64,
    /// Length of the counting used for the exponential rate in the hypothesis check.
    pub count_n: usize,
    /// Largest correlation lag.
    pub n_max: usize,
    /// Orbit length for the Monte-Carlo correlation estimator; quadrature when absent.
    pub orbit_length: Option<usize>,
    /// Green–Kubo cutoff.
    pub cutoff: usize,
    pub clt_n: usize,
    pub clt_samples: usize,
    pub ldp_rho: f64,
    pub ldp_n: Vec<usize>,
    /// Cylinder depth of the exact large-deviation recursion.
    pub ldp_depth: usize,
    pub eps_list: Vec<f64>,
    /// Quadrature nodes of the noise.
    pub noise_nodes: usize,
    /// Random pairs and iterations for the cone contraction experiment.
    pub cone_pairs: usize,
    pub cone_iters: usize,
    pub scan_max_grid: usize,
    pub tolerances: Tolerances,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            map: MapSpec::Doubling,
            potential: Potential::zero(),
            observable: Observable::Sine { frequency: 1 },
            depth: 10,
            depth_cap: 14,
            grid_per_atom: 64,
            gamma: 0.9,
            c: None,
            gamma0: None,
            l: None,
            theta0: None,
            seed: 0,
            count_n: 12,
            n_max: 8,
            orbit_length: None,
            cutoff: 8,
            clt_n: 10_000,
            clt_samples: 10_000,
            ldp_rho: 0.2,
            ldp_n: vec![50, 100, 150, 200, 250, 300, 350, 400],
            ldp_depth: 2,
            eps_list: default_eps_list(),
            noise_nodes: 33,
            cone_pairs: 50,
            cone_iters: 8,
            scan_max_grid: 20_000,
            tolerances: Tolerances::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.depth == 0 || self.depth > MAX_DEPTH {
            return bad("depth must lie in 1..=20");
        }
        if self.depth_cap == 0 || self.depth_cap > MAX_DEPTH {
            return bad("depth_cap must lie in 1..=20");
        }
        if self.grid_per_atom < 2 {
            return bad("grid_per_atom must be at least 2");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0,1)");
        }
        if matches!(self.c, Some(c) if !(c > 0.0)) {
            return bad("c must be positive");
        }
        if matches!(self.gamma0, Some(g) if !(g > 0.0 && g < 1.0)) {
            return bad("gamma0 must lie in (0,1)");
        }
        if matches!(self.l, Some(l) if !(l > 0.0)) {
            return bad("l must be positive");
        }
        if matches!(self.theta0, Some(t) if !(t > 0.0 && t < 1.0)) {
            return bad("theta0 must lie in (0,1)");
        }
        let t = &self.tolerances;
        if !(t.power > 0.0 && t.scan_refine > 0.0 && t.ks > 0.0) || t.power_max_iter == 0 {
            return bad("tolerances must be positive");
        }
        if self.ldp_depth < 2 || self.ldp_depth > MAX_DEPTH {
            return bad("ldp_depth must lie in 2..=20");
        }
        if !(self.ldp_rho > 0.0) {
            return bad("ldp_rho must be positive");
        }
        if self.eps_list.iter().any(|e| !(*e >= 0.0)) {
            return bad("noise levels must be nonnegative");
        }
        if self.noise_nodes < 9 || self.noise_nodes.is_multiple_of(2) {
            return bad("noise_nodes must be odd and at least 9");
        }
        if self.count_n == 0 || self.cutoff == 0 || self.clt_n == 0 || self.clt_samples < 2 {
            return bad("counts must be positive");
        }
        Ok(())
    }

    pub fn build_map(&self) -> Result<MarkovMap> {
        let m = self.map.build()?;
        self.potential.check(&m)?;
        Ok(m)
    }

    pub fn power_options(&self) -> crate::linalg::PowerOptions {
        crate::linalg::PowerOptions {
            tol: self.tolerances.power,
            max_iter: self.tolerances.power_max_iter,
            ..Default::default()
        }
    }

    pub fn scan_options(&self) -> crate::equilibrium::ScanOptions {
        crate::equilibrium::ScanOptions {
            max_grid: self.scan_max_grid,
            refine_tol: self.tolerances.scan_refine,
            depth: self.depth.min(8),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), c.to_json());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"map": {"kind": "benchmark", "delta0": 0.1}, "depth": 6}"#).unwrap();
        assert_eq!(c.depth, 6);
        assert_eq!(c.gamma, 0.9);
        assert_eq!(c.build_map().unwrap().num_atoms(), 3);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_json(r#"{"depth": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"tolerances": {"power": 0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"unknown": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"noise_nodes": 10}"#).is_err());
    }

    #[test]
    fn custom_map() {
        let text = r#"{"map": {"kind": "custom", "bad": 0, "delta0": 0,
            "atoms": [{"left": 0, "right": 0.5}, {"left": 0.5, "right": 1}],
            "branches": [{"affine": {"slope": 2, "intercept": 0}}, {"affine": {"slope": 2, "intercept": -1}}]}}"#;
        let c = RunConfig::from_json(text).unwrap();
        assert_eq!(c.build_map().unwrap().degree(), Some(2));
    }
}
