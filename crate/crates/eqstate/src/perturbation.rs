//! Transfer operators of randomly translated maps `f_w = f + w mod 1`, with
//! `w` uniform on `[-eps, eps]` and replaced by a midpoint quadrature.
//!
//! Translation after the map gives `L_eps = A_eps o L`, where `A_eps` averages
//! a function over translates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::LyConstants;
use crate::dynamics::MarkovMap;
use crate::error::{Error, Result};
use crate::grid::{apply_grid, grid_transfer_matrix, Grid, GridFunction};
use crate::linalg::{leading_spectrum, LinearOperator, PowerOptions, SparseMatrix, SpectralData};
use crate::potential::Potential;
use crate::transfer::{CylinderModel, CylinderSystem};

/// Default half-count `m` of the `2m+1` quadrature nodes.
pub const DEFAULT_HALF_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub eps: f64,
    /// Number of quadrature nodes; odd, so that `w = 0` is a node.
    pub nodes: usize,
}

impl NoiseModel {
    pub fn new(eps: f64, nodes: usize) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::contract("noise amplitude must be a finite nonnegative number"));
        }
        if nodes < 8 || nodes.is_multiple_of(2) {
            return Err(Error::contract("need an odd number of at least 9 quadrature nodes"));
        }
        Ok(NoiseModel { eps, nodes })
    }

    pub fn with_default_nodes(eps: f64) -> Result<Self> {
        Self::new(eps, 2 * DEFAULT_HALF_NODES + 1)
    }

    /// Midpoint nodes `-eps + (j + 1/2) 2 eps / N`.
    pub fn offsets(&self) -> Vec<f64> {
        let n = self.nodes as f64;
        (0..self.nodes).map(|j| -self.eps + (j as f64 + 0.5) * 2.0 * self.eps / n).collect()
    }

    /// Factor by which the averaging multiplies the Fourier mode `e^{2 pi i m x}`.
    pub fn damping(&self, m: u32) -> f64 {
        let w = std::f64::consts::TAU * f64::from(m);
        self.offsets().iter().map(|o| (w * o).cos()).sum::<f64>() / self.nodes as f64
    }

    /// Every translated map keeps its full branches when `eps` is below half the shortest atom.
    pub fn check(&self, map: &MarkovMap) -> Result<()> {
        let limit = 0.5 * map.min_atom_length();
        if self.eps >= limit {
            return Err(Error::contract(format!("noise amplitude {} breaks the branch structure (limit {limit})", self.eps)));
        }
        Ok(())
    }
}

fn wrap(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// `(1/N) sum_j (L g)(x - w_j)`.
pub fn perturbed_transfer_apply<G: Fn(f64) -> f64>(
    map: &MarkovMap,
    potential: &Potential,
    noise: &NoiseModel,
    g: G,
    x: f64,
) -> Result<f64> {
    noise.check(map)?;
    if noise.eps == 0.0 {
        return crate::transfer::apply_transfer(map, potential, g, x);
    }
    let mut s = 0.0;
    for w in noise.offsets() {
        s += crate::transfer::apply_transfer(map, potential, &g, wrap(x - w))?;
    }
    Ok(s / noise.nodes as f64)
}

/// Worst-case branch counts over points reachable by the noise:
/// `max_x (p(x) sigma1^-alpha + q(x) (1+delta0)^alpha)` with images dilated by `eps`.
fn dilated_worst(map: &MarkovMap, eps: f64, good: f64, bad: f64) -> (f64, usize, usize) {
    let d = map.num_atoms();
    // image of each branch as a union of atom intervals
    let mut pieces: Vec<(usize, f64, f64)> = Vec::new();
    for a in 0..d {
        for j in 0..d {
            if map.allowed(a, j) {
                let at = map.atoms()[j];
                pieces.push((a, at.left - eps, at.right + eps));
            }
        }
    }
    let mut probes: Vec<f64> = Vec::new();
    for &(_, l, r) in &pieces {
        for t in [l, r] {
            probes.push(wrap(t));
        }
    }
    probes.sort_by(f64::total_cmp);
    let mut mids: Vec<f64> = probes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    mids.extend(probes.iter().copied());
    let covers = |x: f64, l: f64, r: f64| (-1..=1).any(|s| {
        let y = x + s as f64;
        y >= l && y <= r
    });
    let mut best = (0.0f64, 0, 0);
    for x in mids {
        let mut branches = vec![false; d];
        for &(a, l, r) in &pieces {
            if covers(x, l, r) {
                branches[a] = true;
            }
        }
        let q = (0..map.num_bad()).filter(|&a| branches[a]).count();
        let p = (map.num_bad()..d).filter(|&a| branches[a]).count();
        let v = p as f64 * good + q as f64 * bad;
        if v > best.0 {
            best = (v, p, q);
        }
    }
    best
}

/// Lasota–Yorke constants of the averaged operator. Translations leave
/// derivatives unchanged, so only the branch counts can grow with `eps`.
pub fn perturbed_ly_constants(map: &MarkovMap, potential: &Potential, lambda: f64, noise: &NoiseModel) -> Result<LyConstants> {
    noise.check(map)?;
    let base = crate::cones::lasota_yorke_constants(map, potential, lambda)?;
    if noise.eps == 0.0 {
        return Ok(base);
    }
    let alpha = potential.alpha;
    let good = map.sigma1().powf(-alpha);
    let bad = (0..map.num_bad())
        .map(|a| map.inverse_contraction(a))
        .fold(1.0 + map.delta0(), f64::max)
        .powf(alpha);
    let (worst, p, q) = dilated_worst(map, noise.eps, good, bad);
    let emax = potential.max_value(map).exp();
    let theta = emax * worst / lambda;
    let c = potential.exp_seminorm(map) * worst / lambda;
    if theta >= 1.0 {
        return Err(Error::hypothesis("(e.epsilon3)", format!("perturbed contraction factor {theta} is not below 1")));
    }
    Ok(LyConstants { theta, c, alpha, p, q })
}

/// Translation averaging on cylinder functions: each function is read as
/// piecewise constant on the cylinders and averaged back over each cylinder.
#[derive(Debug, Clone)]
pub struct CylinderAveraging {
    /// Cylinder indices ordered by position.
    order: Vec<usize>,
    /// Left endpoints in position order followed by 1.
    bounds: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    offsets: Vec<f64>,
}

impl CylinderAveraging {
    pub fn new(system: &CylinderSystem, noise: &NoiseModel) -> Result<Self> {
        let n = system.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| system.interval(a).0.total_cmp(&system.interval(b).0));
        let lo: Vec<f64> = (0..n).map(|i| system.interval(i).0).collect();
        let hi: Vec<f64> = (0..n).map(|i| system.interval(i).1).collect();
        if (0..n).any(|i| !(hi[i] > lo[i])) {
            return Err(Error::Numerical("a cylinder has zero width; averaging is undefined".into()));
        }
        let mut bounds: Vec<f64> = order.iter().map(|&i| lo[i]).collect();
        bounds.push(1.0);
        Ok(CylinderAveraging { order, bounds, lo, hi, offsets: noise.offsets() })
    }

    /// Cumulative integral of a density given per cylinder (position order) at the bounds.
    fn cumulative(&self, density: &[f64]) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.bounds.len());
        let mut acc = 0.0;
        c.push(0.0);
        for (k, &i) in self.order.iter().enumerate() {
            acc += density[i] * (self.bounds[k + 1] - self.bounds[k]);
            c.push(acc);
        }
        c
    }

    fn eval_cumulative(&self, cum: &[f64], density: &[f64], x: f64) -> f64 {
        let total = *cum.last().unwrap();
        let fl = x.floor();
        let y = x - fl;
        let k = (self.bounds.partition_point(|&b| b <= y).max(1) - 1).min(self.order.len() - 1);
        fl * total + cum[k] + density[self.order[k]] * (y - self.bounds[k])
    }

    /// `(A g)(w) = (1/N) sum_j (1/|w|) int_w g(x - w_j) dx`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let cum = self.cumulative(g);
        let n = self.offsets.len() as f64;
        (0..g.len())
            .into_par_iter()
            .map(|i| {
                let w = self.hi[i] - self.lo[i];
                let s: f64 = self
                    .offsets
                    .iter()
                    .map(|o| self.eval_cumulative(&cum, g, self.hi[i] - o) - self.eval_cumulative(&cum, g, self.lo[i] - o))
                    .sum();
                s / (n * w)
            })
            .collect()
    }

    /// Adjoint on cylinder masses: `(A^T m)(w') = (1/N) sum_j m((w' + w_j))` with
    /// each mass spread uniformly over its cylinder.
    pub fn apply_transpose(&self, m: &[f64]) -> Vec<f64> {
        let density: Vec<f64> = (0..m.len()).map(|i| m[i] / (self.hi[i] - self.lo[i])).collect();
        let cum = self.cumulative(&density);
        let n = self.offsets.len() as f64;
        (0..m.len())
            .into_par_iter()
            .map(|i| {
                let s: f64 = self
                    .offsets
                    .iter()
                    .map(|o| {
                        self.eval_cumulative(&cum, &density, self.hi[i] + o) - self.eval_cumulative(&cum, &density, self.lo[i] + o)
                    })
                    .sum();
                s / n
            })
            .collect()
    }
}

/// `A_eps o M` on cylinder functions.
pub struct PerturbedCylinderOperator<'a> {
    pub matrix: &'a SparseMatrix,
    pub averaging: CylinderAveraging,
}

impl LinearOperator for PerturbedCylinderOperator<'_> {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let y = self.matrix.mul(x);
        out.copy_from_slice(&self.averaging.apply(&y));
    }

    fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        let y = self.averaging.apply_transpose(x);
        self.matrix.apply_transpose(&y, out);
    }
}

/// Leading spectral data of the averaged cylinder operator.
pub fn perturbed_spectrum(map: &MarkovMap, model: &CylinderModel, noise: &NoiseModel) -> Result<SpectralData> {
    noise.check(map)?;
    if noise.eps == 0.0 {
        return Ok(model.spectral.clone());
    }
    let op = PerturbedCylinderOperator { matrix: &model.matrix, averaging: CylinderAveraging::new(&model.system, noise)? };
    let mut s = leading_spectrum(&op, PowerOptions { tol: 1e-12, max_iter: 200_000, gap_iter: 0 })?;
    s.depth = model.system.depth();
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub eps: f64,
    /// `int |h_eps - h| dnu` with `h_eps` rescaled to `int h_eps dnu = 1`.
    pub l1: f64,
    /// Wasserstein distance between the two equilibrium measures.
    pub w1: f64,
    pub lambda_eps: f64,
    pub theta_eps: f64,
}

/// Distance of the perturbed densities from the deterministic one for each noise level.
pub fn stability_curve(
    map: &MarkovMap,
    potential: &Potential,
    model: &CylinderModel,
    eps_list: &[f64],
    nodes: usize,
) -> Result<Vec<StabilityPoint>> {
    let h = &model.spectral.h;
    let nu = &model.spectral.nu;
    let mu = model.mu();
    let mut out = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let noise = NoiseModel::new(eps, nodes)?;
        let ly = perturbed_ly_constants(map, potential, model.lambda(), &noise)?;
        let s = perturbed_spectrum(map, model, &noise)?;
        let scale: f64 = s.h.iter().zip(nu).map(|(a, b)| a * b).sum();
        let l1: f64 = (0..h.len()).map(|i| (s.h[i] / scale - h[i]).abs() * nu[i]).sum();
        let mu_eps: Vec<f64> = s.h.iter().zip(&s.nu).map(|(a, b)| a * b).collect();
        out.push(StabilityPoint { eps, l1, w1: wasserstein(&model.system, &mu, &mu_eps), lambda_eps: s.lambda, theta_eps: ly.theta });
    }
    Ok(out)
}

/// `int_0^1 |F_a - F_b| dx` for cylinder masses spread uniformly over the cylinders.
pub fn wasserstein(system: &CylinderSystem, a: &[f64], b: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let mut order: Vec<usize> = (0..system.len()).collect();
    order.sort_by(|&x, &y| system.interval(x).0.total_cmp(&system.interval(y).0));
    let mut d0 = 0.0;
    let mut total = 0.0;
    for i in order {
        let w = system.width(i);
        let d1 = d0 + a[i] / sa - b[i] / sb;
        // integral of |linear from d0 to d1| over width w
        total += if d0 * d1 >= 0.0 {
            0.5 * w * (d0.abs() + d1.abs())
        } else {
            0.5 * w * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
        };
        d0 = d1;
    }
    total
}

/// Translation averaging on grid functions, as a sparse matrix.
pub fn grid_averaging_matrix(grid: &Grid, noise: &NoiseModel) -> Result<SparseMatrix> {
    let w = 1.0 / noise.nodes as f64;
    let offs = noise.offsets();
    let mut trip = Vec::with_capacity(grid.len() * offs.len() * 2);
    for r in 0..grid.len() {
        let (_, x) = grid.node(r);
        for o in &offs {
            let y = wrap(x - o);
            let b = grid.atom_of(y);
            for (c, s) in grid.stencil(b, y) {
                if s != 0.0 {
                    trip.push((r, c, w * s));
                }
            }
        }
    }
    SparseMatrix::from_triplets(grid.len(), trip)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDistance {
    /// `sup_g sup_x lambda^{-n} |L_eps^n g - L^n g| / (||g|| + |||g|||)` for `n = 1..=N`.
    pub defects: Vec<f64>,
    /// Least-squares envelope `c theta^n`, when all defects are positive.
    pub envelope: Option<(f64, f64)>,
}

/// Distance between iterates of the averaged and deterministic normalized operators on a test bank.
pub fn operator_distance(
    map: &MarkovMap,
    potential: &Potential,
    lambda: f64,
    noise: &NoiseModel,
    n_max: usize,
    bank: &[GridFunction],
) -> Result<OperatorDistance> {
    noise.check(map)?;
    if bank.is_empty() {
        return Err(Error::contract("empty test bank"));
    }
    let grid = &bank[0].grid;
    let l = grid_transfer_matrix(map, potential, lambda, grid)?;
    let avg = if noise.eps == 0.0 { None } else { Some(grid_averaging_matrix(grid, noise)?) };
    let alpha = potential.alpha;
    let mut defects = vec![0.0f64; n_max];
    for g in bank {
        let norm = g.sup_abs() + g.seminorm(alpha);
        let mut a = g.clone();
        let mut b = g.clone();
        for d in defects.iter_mut() {
            a = apply_grid(&l, &a);
            b = apply_grid(&l, &b);
            if let Some(m) = &avg {
                b = apply_grid(m, &b);
            }
            *d = d.max(a.sup_distance(&b) / norm);
        }
    }
    let envelope = if defects.iter().all(|&d| d > 0.0) && defects.len() >= 2 {
        let m = defects.len() as f64;
        let xs: Vec<f64> = (1..=defects.len()).map(|n| n as f64).collect();
        let ys: Vec<f64> = defects.iter().map(|d| d.ln()).collect();
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        Some(((sy - slope * sx) / m).exp()).map(|c| (c, slope.exp()))
    } else {
        None
    };
    Ok(OperatorDistance { defects, envelope })
}
