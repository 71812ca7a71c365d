//! Transfer operators on cylinder functions.
//!
//! A depth-`n` cylinder function is a vector indexed by admissible words of
//! length `n`, stored in lexicographic order. The potential is collocated at
//! cylinder midpoints, which makes the operator act exactly on this space.

use serde::{Deserialize, Serialize};

use crate::dynamics::MarkovMap;
use crate::error::{Error, Result};
use crate::linalg::{leading_spectrum, LinearOperator, PowerOptions, SparseMatrix, SpectralData};
use crate::potential::Potential;
use crate::symbolic::{self, hyperbolic_cylinders, DEFAULT_DEPTH_CAP};

/// Largest number of cylinders a system may hold.
pub const MAX_CYLINDERS: usize = 1 << 23;

/// Admissible words of a fixed length with their cylinder intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderSystem {
    depth: usize,
    d: usize,
    codes: Vec<u64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl CylinderSystem {
    pub fn new(map: &MarkovMap, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::contract("depth must be positive"));
        }
        let d = map.num_atoms();
        if (depth as f64) * (d as f64).log2() > 62.0 {
            return Err(Error::contract("depth too large for word encoding"));
        }
        let mut codes: Vec<u64> = (0..d as u64).collect();
        let mut lo: Vec<f64> = map.atoms().iter().map(|a| a.left).collect();
        let mut hi: Vec<f64> = map.atoms().iter().map(|a| a.right).collect();
        let mut place = 1u64;
        for _ in 1..depth {
            let first_div = place;
            place *= d as u64;
            let mut nc = Vec::with_capacity(codes.len() * map.max_degree());
            let mut nl = Vec::with_capacity(nc.capacity());
            let mut nh = Vec::with_capacity(nc.capacity());
            for a in 0..d {
                for k in 0..codes.len() {
                    let first = (codes[k] / first_div) as usize;
                    if !map.allowed(a, first) {
                        continue;
                    }
                    let y0 = map.inverse_branch(a, lo[k])?;
                    let y1 = map.inverse_branch(a, hi[k])?;
                    nc.push(a as u64 * place + codes[k]);
                    nl.push(y0.min(y1));
                    nh.push(y0.max(y1));
                }
            }
            if nc.len() > MAX_CYLINDERS {
                return Err(Error::contract(format!("more than {MAX_CYLINDERS} cylinders at this depth")));
            }
            codes = nc;
            lo = nl;
            hi = nh;
        }
        Ok(CylinderSystem { depth, d, codes, lo, hi })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn alphabet(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.lo[i], self.hi[i])
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    /// Midpoint of cylinder `i`, used as its representative.
    pub fn rep(&self, i: usize) -> f64 {
        0.5 * (self.lo[i] + self.hi[i])
    }

    pub fn max_width(&self) -> f64 {
        (0..self.len()).map(|i| self.width(i)).fold(0.0, f64::max)
    }

    pub fn first_symbol(&self, i: usize) -> usize {
        (self.codes[i] / self.place(self.depth - 1)) as usize
    }

    fn place(&self, k: usize) -> u64 {
        (self.d as u64).pow(k as u32)
    }

    pub fn word(&self, i: usize) -> Vec<usize> {
        let mut c = self.codes[i];
        let mut w = vec![0; self.depth];
        for k in (0..self.depth).rev() {
            w[k] = (c % self.d as u64) as usize;
            c /= self.d as u64;
        }
        w
    }

    pub fn encode(&self, word: &[usize]) -> u64 {
        word.iter().fold(0u64, |acc, &s| acc * self.d as u64 + s as u64)
    }

    pub fn index_of_code(&self, code: u64) -> Option<usize> {
        self.codes.binary_search(&code).ok()
    }

    pub fn index_of(&self, word: &[usize]) -> Option<usize> {
        if word.len() != self.depth {
            return None;
        }
        self.index_of_code(self.encode(word))
    }

    /// Index range of the depth-`n` cylinders refining a shorter word.
    pub fn prefix_range(&self, prefix: &[usize]) -> std::ops::Range<usize> {
        let m = prefix.len().min(self.depth);
        let scale = self.place(self.depth - m);
        let p = self.encode(&prefix[..m]);
        self.code_range(p * scale, (p + 1) * scale)
    }

    fn code_range(&self, lo: u64, hi: u64) -> std::ops::Range<usize> {
        let a = self.codes.partition_point(|&c| c < lo);
        let b = self.codes.partition_point(|&c| c < hi);
        a..b
    }

    /// Index of some cylinder whose first `depth-1` symbols equal the last
    /// `depth-1` symbols of cylinder `i`.
    pub fn shifted_index(&self, i: usize) -> usize {
        if self.depth == 1 {
            return i;
        }
        let tail = self.codes[i] % self.place(self.depth - 1);
        let start = tail * self.d as u64;
        let r = self.code_range(start, start + self.d as u64);
        r.start
    }

    /// Cylinders `w'` with `w'_0..w'_{n-2} = w_1..w_{n-1}`: the possible next
    /// states of cylinder `i` along an orbit.
    pub fn successors(&self, i: usize) -> std::ops::Range<usize> {
        if self.depth == 1 {
            return 0..self.len();
        }
        let tail = self.codes[i] % self.place(self.depth - 1);
        let start = tail * self.d as u64;
        self.code_range(start, start + self.d as u64)
    }

    /// Index of the cylinder containing `x`.
    pub fn locate(&self, map: &MarkovMap, x: f64) -> Result<usize> {
        let w = symbolic::itinerary(map, x, self.depth)?;
        self.index_of(&w).ok_or(Error::Inadmissible(w))
    }

    /// Groups of consecutive indices sharing a prefix of length `m`.
    pub fn prefix_groups(&self, m: usize) -> Vec<(u64, std::ops::Range<usize>)> {
        let scale = self.place(self.depth - m);
        let mut out: Vec<(u64, std::ops::Range<usize>)> = Vec::new();
        for (i, &c) in self.codes.iter().enumerate() {
            let p = c / scale;
            match out.last_mut() {
                Some((q, r)) if *q == p => r.end = i + 1,
                _ => out.push((p, i..i + 1)),
            }
        }
        out
    }
}

/// Transfer matrix on depth-`n` cylinder functions:
/// `M[w][w'] = exp(phi(rep w'))` when `w' = a w_0 ... w_{n-2}`.
pub fn transfer_matrix(map: &MarkovMap, potential: &Potential, system: &CylinderSystem) -> Result<SparseMatrix> {
    potential.check(map)?;
    let d = system.d as u64;
    let top = system.place(system.depth - 1);
    let mut trip = Vec::with_capacity(system.len() * map.max_degree());
    for i in 0..system.len() {
        let c = system.codes[i];
        let w0 = system.first_symbol(i);
        for a in 0..map.num_atoms() {
            if !map.allowed(a, w0) {
                continue;
            }
            let pc = a as u64 * top + c / d;
            let j = system
                .index_of_code(pc)
                .ok_or_else(|| Error::Numerical("predecessor cylinder missing".into()))?;
            trip.push((i, j, potential.eval_in_atom(a, system.rep(j)).exp()));
        }
    }
    SparseMatrix::from_triplets(system.len(), trip)
}

/// Cylinder system, its transfer matrix and leading spectral data.
#[derive(Debug, Clone)]
pub struct CylinderModel {
    pub system: CylinderSystem,
    pub matrix: SparseMatrix,
    pub spectral: SpectralData,
}

impl CylinderModel {
    pub fn new(map: &MarkovMap, potential: &Potential, depth: usize) -> Result<Self> {
        Self::with_options(map, potential, depth, PowerOptions::default())
    }

    pub fn with_options(map: &MarkovMap, potential: &Potential, depth: usize, opts: PowerOptions) -> Result<Self> {
        let system = CylinderSystem::new(map, depth)?;
        let matrix = transfer_matrix(map, potential, &system)?;
        let mut spectral = leading_spectrum(&matrix, opts)?;
        spectral.depth = depth;
        Ok(CylinderModel { system, matrix, spectral })
    }

    pub fn lambda(&self) -> f64 {
        self.spectral.lambda
    }

    /// Equilibrium weights `h * nu` on cylinders.
    pub fn mu(&self) -> Vec<f64> {
        self.spectral.h.iter().zip(&self.spectral.nu).map(|(a, b)| a * b).collect()
    }

    /// Apply the normalized operator `M / lambda` to a cylinder function.
    pub fn apply_normalized(&self, g: &[f64]) -> Vec<f64> {
        let mut out = self.matrix.mul(g);
        let l = self.lambda();
        out.iter_mut().for_each(|x| *x /= l);
        out
    }

    /// Collocate a function at cylinder representatives.
    pub fn sample<F: Fn(usize, f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.system.len())
            .map(|i| f(self.system.first_symbol(i), self.system.rep(i)))
            .collect()
    }

    /// Integral of a cylinder function against `nu`.
    pub fn integrate_nu(&self, g: &[f64]) -> f64 {
        g.iter().zip(&self.spectral.nu).map(|(a, b)| a * b).sum()
    }
}

/// Pointwise transfer operator `sum_{f(y)=x} exp(phi(y)) g(y)`.
pub fn apply_transfer<G: Fn(f64) -> f64>(map: &MarkovMap, potential: &Potential, g: G, x: f64) -> Result<f64> {
    let j = map.atom_of(x)?;
    let mut s = 0.0;
    for (a, y) in map.preimages_into(j, x)? {
        s += potential.eval_in_atom(a, y).exp() * g(y);
    }
    Ok(s)
}

/// One step of a density power iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub sup_change: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Result of iterating the normalized operator on the constant function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTrace {
    pub lambda: f64,
    pub h: Vec<f64>,
    pub trace: Vec<TraceStep>,
}

/// Iterate `g -> M g / lambda_t` from `g = 1` until the sup change falls below `tol`.
///
/// `lambda_t` is the midpoint of the current Collatz–Wielandt bracket. The
/// returned density is normalized against `nu` when given, else by its mean.
pub fn power_iterate_density(matrix: &SparseMatrix, nu: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<DensityTrace> {
    let n = matrix.dim();
    let mut g = vec![1.0; n];
    let mut w = vec![0.0; n];
    let mut trace = Vec::new();
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        matrix.apply(&g, &mut w);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            let r = w[i] / g[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if !(lo > 0.0) {
            return Err(Error::Numerical("density iteration left the positive cone".into()));
        }
        lambda = 0.5 * (lo + hi);
        let mut change = 0.0f64;
        for i in 0..n {
            let v = w[i] / lambda;
            change = change.max((v - g[i]).abs());
            g[i] = v;
        }
        trace.push(TraceStep { iteration: it, sup_change: change, lower: lo, upper: hi });
        if change <= tol && (hi - lo) <= tol * hi {
            let norm = match nu {
                Some(nu) => g.iter().zip(nu).map(|(a, b)| a * b).sum::<f64>(),
                None => g.iter().sum::<f64>() / n as f64,
            };
            g.iter_mut().for_each(|x| *x /= norm);
            return Ok(DensityTrace { lambda, h: g, trace });
        }
    }
    Err(Error::Convergence(format!("density iteration did not settle in {max_iter} steps (lambda ~ {lambda})")))
}

/// Worst relative error of the Jacobian identity `nu(f C) = int_C lambda e^{-phi} dnu`
/// over all words of length at most the model depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub max_rel_error: f64,
    pub words_checked: usize,
}

pub fn jacobian_check(map: &MarkovMap, potential: &Potential, model: &CylinderModel) -> Result<JacobianReport> {
    let sys = &model.system;
    let nu = &model.spectral.nu;
    let lambda = model.lambda();
    let n = sys.len();
    let mut ps_nu = vec![0.0; n + 1];
    let mut ps_q = vec![0.0; n + 1];
    for i in 0..n {
        let q = lambda * (-potential.eval_in_atom(sys.first_symbol(i), sys.rep(i))).exp() * nu[i];
        ps_nu[i + 1] = ps_nu[i] + nu[i];
        ps_q[i + 1] = ps_q[i] + q;
    }
    let atom_mass: Vec<f64> = (0..map.num_atoms())
        .map(|a| {
            let r = sys.prefix_range(&[a]);
            ps_nu[r.end] - ps_nu[r.start]
        })
        .collect();
    let d = sys.d as u64;
    let mut worst = 0.0f64;
    let mut count = 0;
    for m in 1..=sys.depth {
        for (prefix, r) in sys.prefix_groups(m) {
            let rhs = ps_q[r.end] - ps_q[r.start];
            let lhs = if m == 1 {
                let a = prefix as usize;
                (0..map.num_atoms()).filter(|&j| map.allowed(a, j)).map(|j| atom_mass[j]).sum()
            } else {
                let tail = prefix % d.pow(m as u32 - 1);
                let scale = d.pow((sys.depth - m + 1) as u32);
                let rr = sys.code_range(tail * scale, (tail + 1) * scale);
                ps_nu[rr.end] - ps_nu[rr.start]
            };
            if rhs > 0.0 {
                worst = worst.max((lhs - rhs).abs() / rhs);
            }
            count += 1;
        }
    }
    Ok(JacobianReport { max_rel_error: worst, words_checked: count })
}

/// Partition sums over certified hyperbolic cylinders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSums {
    pub n: usize,
    pub cylinders: usize,
    /// `sum exp(sup_C S_n phi)` over hyperbolic cylinders.
    pub z: f64,
    /// `lambda^{-n} z`.
    pub normalized: f64,
    /// `sum exp(S_n phi(y))` over hyperbolic preimages `y` of the point.
    pub g: f64,
    /// `lambda^{-n} g`.
    pub g_normalized: f64,
}

pub fn partition_sums(
    map: &MarkovMap,
    potential: &Potential,
    lambda: f64,
    n: usize,
    c: f64,
    x: f64,
) -> Result<PartitionSums> {
    let words = hyperbolic_cylinders(map, n, c, DEFAULT_DEPTH_CAP)?;
    let semi = potential.seminorm(map);
    let alpha = potential.alpha;
    let target = map.atom_of(x)?;
    let mut z = 0.0;
    let mut g = 0.0;
    for w in &words {
        let mut sup = 0.0;
        for k in 0..n {
            let (lo, hi) = symbolic::cylinder_interval(map, &w[k..])?;
            let mid = 0.5 * (lo + hi);
            sup += potential.eval_in_atom(w[k], mid) + semi * (0.5 * (hi - lo)).powf(alpha);
        }
        z += sup.exp();
        let last = w[n - 1];
        if map.allowed(last, target) {
            let mut y = x;
            let mut s = 0.0;
            for &a in w.iter().rev() {
                y = map.inverse_branch(a, y)?;
                s += potential.eval_in_atom(a, y);
            }
            g += s.exp();
        }
    }
    let scale = lambda.powi(n as i32);
    Ok(PartitionSums {
        n,
        cylinders: words.len(),
        z,
        normalized: z / scale,
        g,
        g_normalized: g / scale,
    })
}

/// Sup over `points` of `|L^n g - L^n (pi_n g)| / lambda^n`, where `pi_n`
/// replaces `g` by its `nu`-average on each `n`-cylinder.
pub fn finite_rank_defect<G: Fn(f64) -> f64>(
    map: &MarkovMap,
    potential: &Potential,
    model: &CylinderModel,
    n: usize,
    g: G,
    points: &[f64],
) -> Result<f64> {
    let sys = &model.system;
    if n == 0 || n > sys.depth() {
        return Err(Error::contract("need 1 <= n <= model depth"));
    }
    let nu = &model.spectral.nu;
    let mut avg = std::collections::HashMap::new();
    for (prefix, r) in sys.prefix_groups(n) {
        let mut m = 0.0;
        let mut s = 0.0;
        for i in r {
            m += nu[i];
            s += nu[i] * g(sys.rep(i));
        }
        avg.insert(prefix, if m > 0.0 { s / m } else { 0.0 });
    }
    let d = map.num_atoms() as u64;
    let scale = model.lambda().powi(n as i32);
    let mut worst = 0.0f64;
    for &x in points {
        let target = map.atom_of(x)?;
        // (point, first symbol of the word built so far, code, birkhoff sum)
        let mut layer: Vec<(f64, usize, u64, f64)> = vec![(x, target, 0, 0.0)];
        for k in 0..n {
            let mut next = Vec::with_capacity(layer.len() * map.max_degree());
            for &(z, first, code, s) in &layer {
                for a in 0..map.num_atoms() {
                    if !map.allowed(a, first) {
                        continue;
                    }
                    let y = map.inverse_branch(a, z)?;
                    next.push((y, a, a as u64 * d.pow(k as u32) + code, s + potential.eval_in_atom(a, y)));
                }
            }
            layer = next;
        }
        let mut diff = 0.0;
        for &(y, _, code, s) in &layer {
            let a = avg.get(&code).copied().unwrap_or(0.0);
            diff += s.exp() * (g(y) - a);
        }
        worst = worst.max((diff / scale).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_shift() -> (MarkovMap, Potential) {
        (MarkovMap::doubling(), Potential::per_atom(vec![0.0, 2f64.ln()]))
    }

    #[test]
    fn cylinder_system_matches_direct_intervals() {
        let m = MarkovMap::benchmark(0.1).unwrap();
        let sys = CylinderSystem::new(&m, 4).unwrap();
        assert_eq!(sys.len(), 81);
        for i in [0, 7, 40, 80] {
            let (lo, hi) = symbolic::cylinder_interval(&m, &sys.word(i)).unwrap();
            let (a, b) = sys.interval(i);
            assert!((lo - a).abs() < 1e-15 && (hi - b).abs() < 1e-15);
        }
        let total: f64 = (0..sys.len()).map(|i| sys.width(i)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_shift_matrix_and_spectrum() {
        let (m, p) = two_shift();
        let sys = CylinderSystem::new(&m, 1).unwrap();
        let mat = transfer_matrix(&m, &p, &sys).unwrap();
        assert_eq!(mat.to_dense(), vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        let model = CylinderModel::new(&m, &p, 6).unwrap();
        assert!((model.lambda() - 3.0).abs() < 3e-12);
    }

    #[test]
    fn golden_mean_transfer_matrix() {
        let m = MarkovMap::golden_mean();
        let sys = CylinderSystem::new(&m, 1).unwrap();
        let mat = transfer_matrix(&m, &Potential::zero(), &sys).unwrap();
        assert_eq!(mat.to_dense(), vec![vec![1.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn pointwise_transfer() {
        let d = MarkovMap::doubling();
        assert_eq!(apply_transfer(&d, &Potential::zero(), |_| 1.0, 0.3).unwrap(), 2.0);
        let (m, p) = two_shift();
        assert!((apply_transfer(&m, &p, |_| 1.0, 0.7).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn locate_and_prefix_range() {
        let m = MarkovMap::doubling();
        let sys = CylinderSystem::new(&m, 3).unwrap();
        let i = sys.locate(&m, 0.3).unwrap();
        assert_eq!(sys.word(i), vec![0, 1, 0]);
        assert_eq!(sys.prefix_range(&[1]), 4..8);
        assert_eq!(sys.word(sys.shifted_index(i)), vec![1, 0, 0]);
    }

    #[test]
    fn density_iteration_two_shift() {
        let (m, p) = two_shift();
        let model = CylinderModel::new(&m, &p, 4).unwrap();
        let tr = power_iterate_density(&model.matrix, Some(&model.spectral.nu), 1e-13, 1000).unwrap();
        assert!((tr.lambda - 3.0).abs() < 1e-12);
        assert!(tr.h.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn doubling_partition_sums() {
        let d = MarkovMap::doubling();
        for n in 1..=6 {
            let s = partition_sums(&d, &Potential::zero(), 2.0, n, 0.1, 0.3).unwrap();
            assert_eq!(s.z, 2f64.powi(n as i32));
            assert!(s.g <= s.z + 1e-12);
        }
    }
}
