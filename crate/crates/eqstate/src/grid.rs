//! Functions sampled on uniform per-atom grids, read by linear interpolation.
//!
//! Each atom carries `per_atom` nodes including both endpoints, so an
//! interpolant is Lipschitz inside each atom and its seminorm for exponent 1
//! is attained between consecutive nodes.

use crate::dynamics::MarkovMap;
use crate::error::{Error, Result};
use crate::linalg::{power_iteration, subdominant_ratio, LinearOperator, SparseMatrix, SpectralData};
use crate::potential::Potential;
use crate::transfer::CylinderModel;

/// Default number of nodes per atom.
pub const DEFAULT_NODES_PER_ATOM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lefts: Vec<f64>,
    rights: Vec<f64>,
    per_atom: usize,
}

impl Grid {
    pub fn new(map: &MarkovMap, per_atom: usize) -> Result<Self> {
        if per_atom < 2 {
            return Err(Error::contract("need at least two nodes per atom"));
        }
        Ok(Grid {
            lefts: map.atoms().iter().map(|a| a.left).collect(),
            rights: map.atoms().iter().map(|a| a.right).collect(),
            per_atom,
        })
    }

    pub fn len(&self) -> usize {
        self.lefts.len() * self.per_atom
    }

    pub fn is_empty(&self) -> bool {
        self.lefts.is_empty()
    }

    pub fn per_atom(&self) -> usize {
        self.per_atom
    }

    pub fn num_atoms(&self) -> usize {
        self.lefts.len()
    }

    pub fn spacing(&self, atom: usize) -> f64 {
        (self.rights[atom] - self.lefts[atom]) / (self.per_atom - 1) as f64
    }

    /// Atom and position of node `r`.
    pub fn node(&self, r: usize) -> (usize, f64) {
        let a = r / self.per_atom;
        let m = r % self.per_atom;
        let x = if m + 1 == self.per_atom {
            self.rights[a]
        } else {
            self.lefts[a] + self.spacing(a) * m as f64
        };
        (a, x)
    }

    /// Interpolation stencil of `x` in the closure of `atom`: `(node, weight)` pairs.
    pub fn stencil(&self, atom: usize, x: f64) -> [(usize, f64); 2] {
        let n = self.per_atom;
        let t = ((x - self.lefts[atom]) / self.spacing(atom)).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let fr = (t - i as f64).clamp(0.0, 1.0);
        let base = atom * n + i;
        [(base, 1.0 - fr), (base + 1, fr)]
    }

    pub fn atom_of(&self, x: f64) -> usize {
        let k = self.lefts.partition_point(|&l| l <= x);
        k.saturating_sub(1)
    }
}

/// A grid together with node values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    /// Sample `f(atom, x)` at every node.
    pub fn from_fn<F: Fn(usize, f64) -> f64>(grid: &Grid, f: F) -> Self {
        let values = (0..grid.len())
            .map(|r| {
                let (a, x) = grid.node(r);
                f(a, x)
            })
            .collect();
        GridFunction { grid: grid.clone(), values }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        GridFunction { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn eval_in_atom(&self, atom: usize, x: f64) -> f64 {
        let s = self.grid.stencil(atom, x);
        s[0].1 * self.values[s[0].0] + s[1].1 * self.values[s[1].0]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_in_atom(self.grid.atom_of(x), x)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Hölder seminorm within atoms measured on node pairs.
    pub fn seminorm(&self, alpha: f64) -> f64 {
        let n = self.grid.per_atom;
        let mut best = 0.0f64;
        for a in 0..self.grid.num_atoms() {
            let v = &self.values[a * n..(a + 1) * n];
            let h = self.grid.spacing(a);
            if alpha == 1.0 {
                for m in 0..n - 1 {
                    best = best.max((v[m + 1] - v[m]).abs() / h);
                }
            } else {
                for i in 0..n {
                    for j in i + 1..n {
                        best = best.max((v[j] - v[i]).abs() / (h * (j - i) as f64).powf(alpha));
                    }
                }
            }
        }
        best
    }

    pub fn scaled(&self, s: f64) -> Self {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.values.iter().zip(weights).map(|(a, b)| a * b).sum()
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Matrix of the normalized operator `L / lambda` acting on grid interpolants,
/// resampled at the nodes.
pub fn grid_transfer_matrix(map: &MarkovMap, potential: &Potential, lambda: f64, grid: &Grid) -> Result<SparseMatrix> {
    potential.check(map)?;
    let mut trip = Vec::with_capacity(grid.len() * 2 * map.max_degree());
    for r in 0..grid.len() {
        let (j, x) = grid.node(r);
        for (a, y) in map.preimages_into(j, x)? {
            let w = potential.eval_in_atom(a, y).exp() / lambda;
            for (c, s) in grid.stencil(a, y) {
                if s != 0.0 {
                    trip.push((r, c, w * s));
                }
            }
        }
    }
    SparseMatrix::from_triplets(grid.len(), trip)
}

/// Apply a grid operator matrix to a grid function.
pub fn apply_grid(matrix: &SparseMatrix, g: &GridFunction) -> GridFunction {
    GridFunction { grid: g.grid.clone(), values: matrix.mul(&g.values) }
}

/// Node weights of `nu`: each cylinder spreads its mass uniformly and every
/// node collects the mass falling in its half-spacing cell.
pub fn node_weights(grid: &Grid, model: &CylinderModel) -> Vec<f64> {
    let sys = &model.system;
    let nu = &model.spectral.nu;
    let n = grid.per_atom;
    let mut w = vec![0.0; grid.len()];
    for i in 0..sys.len() {
        let a = sys.first_symbol(i);
        let (lo, hi) = sys.interval(i);
        let width = hi - lo;
        let h = grid.spacing(a);
        let left = grid.lefts[a];
        if width <= 0.0 {
            let m = (((lo - left) / h).round() as usize).min(n - 1);
            w[a * n + m] += nu[i];
            continue;
        }
        let m0 = (((lo - left) / h + 0.5).floor().max(0.0) as usize).min(n - 1);
        let m1 = (((hi - left) / h + 0.5).floor().max(0.0) as usize).min(n - 1);
        for m in m0..=m1 {
            let c0 = if m == 0 { left } else { left + h * (m as f64 - 0.5) };
            let c1 = if m + 1 == n { grid.rights[a] } else { left + h * (m as f64 + 0.5) };
            let ov = (hi.min(c1) - lo.max(c0)).max(0.0);
            w[a * n + m] += nu[i] * ov / width;
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Leading spectral data of the grid operator; its subdominant ratio measures
/// the mixing rate for Lipschitz observables.
///
/// The left vector may vanish on nodes outside every interpolation stencil,
/// so it is found by plain normalized iteration rather than with brackets.
pub fn grid_spectrum(map: &MarkovMap, potential: &Potential, lambda: f64, grid: &Grid) -> Result<SpectralData> {
    let m = grid_transfer_matrix(map, potential, lambda, grid)?;
    let (bracket, mut h, it_r) = power_iteration(&m, false, 1e-11, 200_000)?;
    let scale = 0.5 * (bracket.0 + bracket.1);
    let n = m.dim();
    let mut nu = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    let mut it_l = 0;
    loop {
        it_l += 1;
        m.apply_transpose(&nu, &mut w);
        let s: f64 = w.iter().sum();
        let mut change = 0.0f64;
        for i in 0..n {
            let v = w[i] / s;
            change = change.max((v - nu[i]).abs());
            nu[i] = v;
        }
        if change < 1e-14 {
            break;
        }
        if it_l >= 200_000 {
            return Err(Error::Convergence("left grid vector did not settle".into()));
        }
    }
    let hn: f64 = h.iter().zip(&nu).map(|(a, b)| a * b).sum();
    h.iter_mut().for_each(|x| *x /= hn);
    let lam = scale * lambda;
    let gap = subdominant_ratio(&m, scale, &h, &nu, 2000);
    Ok(SpectralData {
        lambda: lam,
        pressure: lam.ln(),
        h,
        nu,
        gap,
        bracket: (bracket.0 * lambda, bracket.1 * lambda),
        left_bracket: (lam, lam),
        iterations: it_r.max(it_l),
        depth: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_exact_for_affine_functions() {
        let m = MarkovMap::benchmark(0.1).unwrap();
        let g = Grid::new(&m, 17).unwrap();
        let f = GridFunction::from_fn(&g, |_, x| 2.0 * x + 1.0);
        for x in [0.0, 0.1, 0.333, 0.5, 0.99] {
            assert!((f.eval(x) - (2.0 * x + 1.0)).abs() < 1e-14);
        }
        assert!((f.seminorm(1.0) - 2.0).abs() < 1e-12);
        assert!((f.seminorm(0.5) - 2.0 * (1.0 / 3.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_operator_preserves_constants_for_zero_potential() {
        let m = MarkovMap::benchmark(0.1).unwrap();
        let g = Grid::new(&m, 16).unwrap();
        let op = grid_transfer_matrix(&m, &Potential::zero(), 3.0, &g).unwrap();
        let one = GridFunction::constant(&g, 1.0);
        let out = apply_grid(&op, &one);
        assert!(out.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn node_weights_are_a_probability_vector() {
        let m = MarkovMap::benchmark(0.1).unwrap();
        let model = CylinderModel::new(&m, &Potential::zero(), 6).unwrap();
        let g = Grid::new(&m, 32).unwrap();
        let w = node_weights(&g, &model);
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
