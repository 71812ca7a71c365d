//! Cones of positive Hölder functions, their projective metric, and the
//! Lasota–Yorke constants that make the normalized operator a strict contraction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::MarkovMap;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::linalg::SparseMatrix;
use crate::potential::Potential;

/// Default number of `z` samples in the cone metric.
pub const DEFAULT_Z_SAMPLES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeMembership {
    pub inside: bool,
    /// `L inf g - |||g|||`.
    pub margin: f64,
}

/// Membership of `g` in `{g > 0 : |||g||| <= L inf g}`.
pub fn in_cone(g: &GridFunction, l: f64, alpha: f64) -> ConeMembership {
    let inf = g.inf();
    let margin = l * inf - g.seminorm(alpha);
    ConeMembership { inside: inf > 0.0 && margin >= 0.0, margin }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeDistance {
    pub psi: f64,
    pub a: f64,
    pub b: f64,
}

/// Projective distance `log(B/A)` between `g` and `h` in the cone of parameter `l`,
/// with `A` and `B` the extreme ratios over same-atom node pairs, `z` samples and
/// pointwise ratios.
pub fn cone_metric(g: &GridFunction, h: &GridFunction, l: f64, alpha: f64, z_samples: usize) -> Result<ConeDistance> {
    if g.grid != h.grid {
        return Err(Error::contract("functions live on different grids"));
    }
    let grid = &g.grid;
    let total = grid.len();
    let mut zs: Vec<usize> = if z_samples >= total {
        (0..total).collect()
    } else {
        (0..z_samples).map(|k| k * (total - 1) / (z_samples - 1).max(1)).collect()
    };
    let argext = |v: &[f64], max: bool| {
        let mut best = 0;
        for i in 1..v.len() {
            if (max && v[i] > v[best]) || (!max && v[i] < v[best]) {
                best = i;
            }
        }
        best
    };
    let ratio: Vec<f64> = g.values.iter().zip(&h.values).map(|(a, b)| a / b).collect();
    for v in [&g.values, &h.values, &ratio] {
        zs.push(argext(v, true));
        zs.push(argext(v, false));
    }
    zs.sort_unstable();
    zs.dedup();

    let mut a = f64::INFINITY;
    let mut b = f64::NEG_INFINITY;
    for (&gv, &hv) in g.values.iter().zip(&h.values) {
        if !(hv > 0.0) {
            return Err(Error::contract("second function is not positive"));
        }
        a = a.min(gv / hv);
        b = b.max(gv / hv);
    }
    let n = grid.per_atom();
    for atom in 0..grid.num_atoms() {
        let base = atom * n;
        for i in 0..n {
            let (_, xi) = grid.node(base + i);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (_, xj) = grid.node(base + j);
                let delta = l * (xi - xj).abs().powf(alpha);
                let dg = g.values[base + i] - g.values[base + j];
                let dh = h.values[base + i] - h.values[base + j];
                for &z in &zs {
                    let den = delta * h.values[z] - dh;
                    if !(den > 0.0) {
                        return Err(Error::contract("second function is not in the interior of the cone"));
                    }
                    let r = (delta * g.values[z] - dg) / den;
                    a = a.min(r);
                    b = b.max(r);
                }
            }
        }
    }
    if !(a > 0.0) {
        return Err(Error::contract("first function is not in the cone"));
    }
    Ok(ConeDistance { psi: (b / a).ln(), a, b })
}

/// Constants of the Lasota–Yorke inequality `|||L~g||| <= theta |||g||| + c ||g||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyConstants {
    pub theta: f64,
    pub c: f64,
    pub alpha: f64,
    /// Largest number of good preimage branches over atoms.
    pub p: usize,
    /// Largest number of bad preimage branches over atoms.
    pub q: usize,
}

pub fn lasota_yorke_constants(map: &MarkovMap, potential: &Potential, lambda: f64) -> Result<LyConstants> {
    let alpha = potential.alpha;
    let good = map.sigma1().powf(-alpha);
    let bad_c = (0..map.num_bad())
        .map(|a| map.inverse_contraction(a))
        .fold(1.0 + map.delta0(), f64::max);
    let bad = bad_c.powf(alpha);
    let emax = potential.max_value(map).exp();
    let mut worst = 0.0f64;
    let (mut pmax, mut qmax) = (0, 0);
    for j in 0..map.num_atoms() {
        let p = (map.num_bad()..map.num_atoms()).filter(|&a| map.allowed(a, j)).count();
        let q = (0..map.num_bad()).filter(|&a| map.allowed(a, j)).count();
        pmax = pmax.max(p);
        qmax = qmax.max(q);
        worst = worst.max(p as f64 * good + q as f64 * bad);
    }
    let theta = emax * worst / lambda;
    let c = potential.exp_seminorm(map) * worst / lambda;
    if theta >= 1.0 {
        return Err(Error::hypothesis("(e.epsilon3)", format!("contraction factor {theta} is not below 1")));
    }
    Ok(LyConstants { theta, c, alpha, p: pmax, q: qmax })
}

/// Measured slack `theta |||g||| + c ||g|| - |||L~g|||` on the grid.
pub fn lasota_yorke_slack(op: &SparseMatrix, ly: &LyConstants, g: &GridFunction) -> f64 {
    let out = crate::grid::apply_grid(op, g);
    ly.theta * g.seminorm(ly.alpha) + ly.c * g.sup_abs() - out.seminorm(ly.alpha)
}

/// Geometry entering the cone estimates: number of atoms, maximal atom
/// diameter and Hölder exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeGeometry {
    pub d: usize,
    pub eps: f64,
    pub alpha: f64,
}

impl ConeGeometry {
    pub fn of(map: &MarkovMap, alpha: f64) -> Self {
        ConeGeometry { d: map.num_atoms(), eps: map.max_atom_length(), alpha }
    }

    fn spread(&self) -> f64 {
        self.d as f64 * self.eps.powf(self.alpha)
    }
}

/// Smallest cone parameter for which `theta L + c (1 + L d eps^alpha) <= theta0 L`.
pub fn minimal_cone_parameter(theta: f64, c: f64, theta0: f64, geom: ConeGeometry) -> Result<f64> {
    if !(theta < theta0 && theta0 < 1.0) {
        return Err(Error::contract("need theta < theta0 < 1"));
    }
    let room = theta0 - theta - c * geom.spread();
    if !(room > 0.0) {
        return Err(Error::hypothesis(
            "(e.epsilon3)",
            format!("no cone parameter works: theta0 - theta = {} <= c d eps^alpha = {}", theta0 - theta, c * geom.spread()),
        ));
    }
    Ok(c / room)
}

/// Factor `sigma` with `L~(cone_L) inside cone_{sigma L}`.
pub fn invariance_factor(theta: f64, c: f64, max_phi: f64, l: f64, theta0: f64, geom: ConeGeometry) -> Result<f64> {
    let lmin = minimal_cone_parameter(theta, c, theta0, geom)?;
    if l < lmin {
        return Err(Error::contract(format!("cone parameter {l} is below the admissible minimum {lmin}")));
    }
    let sigma = theta0 * max_phi.exp();
    if sigma >= 1.0 {
        return Err(Error::hypothesis("(e.epsilon3)", format!("invariance factor {sigma} is not below 1")));
    }
    Ok(sigma)
}

/// Bound on the diameter of `cone_{sigma L}` inside `cone_L`.
pub fn diameter_bound(sigma: f64, l: f64, d: usize, eps: f64, alpha: f64) -> f64 {
    2.0 * ((1.0 + sigma) / (1.0 - sigma)).ln() + 2.0 * (1.0 + sigma * l * d as f64 * eps.powf(alpha)).ln()
}

/// Birkhoff contraction coefficient `tanh(Delta/4)`.
pub fn contraction_rate(delta: f64) -> f64 {
    if delta.is_infinite() {
        1.0
    } else {
        (delta / 4.0).tanh()
    }
}

/// Bound `(e^psi - 1) ||v||` on the norm gap between cone elements at distance `psi`.
pub fn norm_gap_bound(psi: f64, v_norm: f64) -> f64 {
    psi.exp_m1() * v_norm
}

/// All cone constants for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSetup {
    pub ly: LyConstants,
    pub theta0: f64,
    pub l: f64,
    pub sigma: f64,
    pub diameter: f64,
    pub rate: f64,
    pub geometry: ConeGeometry,
}

impl ConeSetup {
    /// `theta0` defaults to `0.9 + 0.1 theta`; `l` defaults to twice the admissible minimum, at least 1.
    pub fn new(map: &MarkovMap, potential: &Potential, lambda: f64, theta0: Option<f64>, l: Option<f64>) -> Result<Self> {
        let ly = lasota_yorke_constants(map, potential, lambda)?;
        let theta0 = theta0.unwrap_or(0.9 + 0.1 * ly.theta);
        let geometry = ConeGeometry::of(map, potential.alpha);
        let lmin = minimal_cone_parameter(ly.theta, ly.c, theta0, geometry)?;
        let l = l.unwrap_or((2.0 * lmin).max(1.0));
        let osc = potential.oscillation(map);
        let sigma = invariance_factor(ly.theta, ly.c, osc, l, theta0, geometry)?;
        let diameter = diameter_bound(sigma, l, geometry.d, geometry.eps, geometry.alpha);
        Ok(ConeSetup { ly, theta0, l, sigma, diameter, rate: contraction_rate(diameter), geometry })
    }
}

/// A random continuous function in the cone of parameter `l`, built from a
/// few Fourier modes around the constant 1.
pub fn random_cone_function<R: Rng>(grid: &Grid, l: f64, alpha: f64, rng: &mut R) -> GridFunction {
    let modes: Vec<(f64, f64, f64)> = (1..=4)
        .map(|k| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU), k as f64))
        .collect();
    let wave = GridFunction::from_fn(grid, |_, x| {
        modes.iter().map(|(a, p, k)| a * (std::f64::consts::TAU * k * x + p).sin()).sum()
    });
    let amp: f64 = modes.iter().map(|m| m.0.abs()).sum();
    let s = wave.seminorm(alpha).max(1e-300);
    let frac = rng.gen_range(0.05..0.95);
    let r = frac * l;
    let t = r / (s + r * amp);
    GridFunction {
        grid: grid.clone(),
        values: wave.values.iter().map(|w| 1.0 + t * w).collect(),
    }
}

/// One iterate of a pair of cone functions under the normalized grid operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionStep {
    pub pair: usize,
    /// Iterate index, starting at 1.
    pub step: usize,
    pub psi: f64,
    /// `psi` divided by the previous `psi`; `None` once the previous distance is negligible.
    pub ratio: Option<f64>,
    /// Sup-norm distance of the normalized iterate from the fixed density.
    pub trace: f64,
    /// `(e^psi - 1) ||h||` with `psi` the distance to the fixed density.
    pub trace_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionExperiment {
    pub setup: ConeSetup,
    /// Initial distance of each pair, measured in the cone of parameter `l`.
    pub initial_psi: Vec<f64>,
    pub steps: Vec<ContractionStep>,
}

impl ContractionExperiment {
    pub fn max_initial_psi(&self) -> f64 {
        self.initial_psi.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_ratio(&self) -> f64 {
        self.steps.iter().filter_map(|s| s.ratio).fold(0.0, f64::max)
    }

    /// Largest `trace - trace_bound`; nonpositive when the trace is dominated.
    pub fn worst_trace_excess(&self) -> f64 {
        self.steps.iter().map(|s| s.trace - s.trace_bound).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Draw `pairs` random pairs in the cone of parameter `sigma L`, measure their
/// distance in the cone of parameter `L`, and follow both the pairwise distance
/// and the distance to the fixed density under `iters` applications of the
/// normalized grid operator.
pub fn contraction_experiment(
    map: &MarkovMap,
    potential: &Potential,
    lambda: f64,
    grid: &Grid,
    setup: &ConeSetup,
    pairs: usize,
    iters: usize,
    seed: u64,
) -> Result<ContractionExperiment> {
    use rand::SeedableRng;
    let alpha = potential.alpha;
    let l = setup.l;
    let op = crate::grid::grid_transfer_matrix(map, potential, lambda, grid)?;
    let spec = crate::grid::grid_spectrum(map, potential, lambda, grid)?;
    let fixed = GridFunction { grid: grid.clone(), values: spec.h.clone() };
    let nu = &spec.nu;
    let fixed_mass = fixed.dot(nu);
    let fixed_norm = fixed.sup_abs();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut initial_psi = Vec::with_capacity(pairs);
    let mut steps = Vec::with_capacity(pairs * iters);
    for pair in 0..pairs {
        let mut g = random_cone_function(grid, setup.sigma * l, alpha, &mut rng);
        let mut h = random_cone_function(grid, setup.sigma * l, alpha, &mut rng);
        let mut psi = cone_metric(&g, &h, l, alpha, DEFAULT_Z_SAMPLES)?.psi;
        initial_psi.push(psi);
        for step in 1..=iters {
            g = crate::grid::apply_grid(&op, &g);
            h = crate::grid::apply_grid(&op, &h);
            let next = cone_metric(&g, &h, l, alpha, DEFAULT_Z_SAMPLES)?.psi;
            let ratio = (psi > 1e-10).then(|| next / psi);
            psi = next;
            let gn = g.scaled(fixed_mass / g.dot(nu));
            let to_fixed = cone_metric(&gn, &fixed, l, alpha, DEFAULT_Z_SAMPLES)?.psi;
            steps.push(ContractionStep {
                pair,
                step,
                psi,
                ratio,
                trace: gn.sup_distance(&fixed),
                trace_bound: norm_gap_bound(to_fixed, fixed_norm),
            });
        }
    }
    Ok(ContractionExperiment { setup: *setup, initial_psi, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(&MarkovMap::doubling(), 32).unwrap()
    }

    #[test]
    fn cone_membership_examples() {
        let g = grid();
        let one = GridFunction::constant(&g, 1.0);
        let m = in_cone(&one, 3.0, 1.0);
        assert!(m.inside && m.margin == 3.0);
        let lin = GridFunction::from_fn(&g, |_, x| 1.0 + x);
        assert!(!in_cone(&lin, 0.5, 1.0).inside);
        let m = in_cone(&lin, 2.0, 1.0);
        assert!(m.inside && (m.margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_is_projective() {
        let g = grid();
        let h = GridFunction::from_fn(&g, |_, x| 2.0 + (6.0 * x).sin() * 0.2);
        assert!(cone_metric(&h, &h, 5.0, 1.0, 64).unwrap().psi.abs() < 1e-14);
        assert!(cone_metric(&h.scaled(2.0), &h, 5.0, 1.0, 64).unwrap().psi.abs() < 1e-14);
    }

    #[test]
    fn ly_constants_examples() {
        let d = MarkovMap::doubling();
        let ly = lasota_yorke_constants(&d, &Potential::zero(), 2.0).unwrap();
        assert!((ly.theta - 0.5).abs() < 1e-15);
        let b = MarkovMap::benchmark(0.1).unwrap();
        let ly = lasota_yorke_constants(&b, &Potential::zero(), 3.0).unwrap();
        assert!((ly.theta - (2.0 / 9.0 + 1.1 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn invariance_factor_examples() {
        let geom = ConeGeometry { d: 2, eps: 0.5, alpha: 1.0 };
        assert!((invariance_factor(0.5, 0.0, 0.0, 1.0, 0.6, geom).unwrap() - 0.6).abs() < 1e-15);
        assert!((invariance_factor(0.5, 0.0, 1.5f64.ln(), 1.0, 0.6, geom).unwrap() - 0.9).abs() < 1e-15);
        assert!(matches!(invariance_factor(0.5, 0.0, 2f64.ln(), 1.0, 0.6, geom), Err(Error::Hypothesis { .. })));
    }

    #[test]
    fn diameter_and_rate_examples() {
        let delta = diameter_bound(0.5, 2.0, 1, 1.0, 1.0);
        assert!((delta - 36f64.ln()).abs() < 1e-14);
        assert!((contraction_rate(delta) - 0.7142857142857143).abs() < 1e-12);
        assert_eq!(contraction_rate(0.0), 0.0);
        assert_eq!(contraction_rate(f64::INFINITY), 1.0);
        assert!((norm_gap_bound(2f64.ln(), 3.0) - 3.0).abs() < 1e-15);
    }
}
