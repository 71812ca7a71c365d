//! One-dimensional Markov maps of the circle.
//!
//! The unit interval `[0,1)` is split into half-open atoms. Each atom carries
//! a monotone branch defined on its closure; the branch value is read modulo 1.
//! The first `bad` atoms are the ones where the map may fail to expand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EDGE_TOL: f64 = 1e-12;

/// A monotone branch on one atom, evaluated on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `slope * x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// `c0 + c1 x + c2 x^2`
    Quadratic { c0: f64, c1: f64, c2: f64 },
}

impl Branch {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Branch::Affine { slope, intercept } => slope * x + intercept,
            Branch::Quadratic { c0, c1, c2 } => c0 + x * (c1 + c2 * x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Branch::Affine { slope, .. } => slope,
            Branch::Quadratic { c1, c2, .. } => c1 + 2.0 * c2 * x,
        }
    }

    /// Solve `value(y) = t` for `y` in `[lo, hi]`.
    fn solve(&self, t: f64, lo: f64, hi: f64) -> Option<f64> {
        let tol = 1e-10 * (1.0 + (hi - lo));
        let y = match *self {
            Branch::Affine { slope, intercept } => (t - intercept) / slope,
            Branch::Quadratic { c0, c1, c2 } => {
                if c2 == 0.0 {
                    (t - c0) / c1
                } else {
                    let c = c0 - t;
                    let disc = c1 * c1 - 4.0 * c2 * c;
                    if disc < 0.0 {
                        return None;
                    }
                    let s = disc.sqrt();
                    let q = -0.5 * (c1 + c1.signum() * s);
                    let candidates = [q / c2, if q != 0.0 { c / q } else { f64::NAN }];
                    let mut best = None;
                    for r in candidates {
                        if r.is_finite() && r >= lo - tol && r <= hi + tol {
                            best = Some(r);
                            break;
                        }
                    }
                    let mut y = best?;
                    for _ in 0..3 {
                        let d = self.derivative(y);
                        if d == 0.0 {
                            break;
                        }
                        y -= (self.value(y) - t) / d;
                    }
                    y
                }
            }
        };
        if y.is_finite() && y >= lo - tol && y <= hi + tol {
            Some(y.clamp(lo, hi))
        } else {
            None
        }
    }
}

/// A half-open atom `[left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub left: f64,
    pub right: f64,
}

impl Atom {
    pub fn length(&self) -> f64 {
        self.right - self.left
    }
}

/// A Markov map of the circle with finitely many monotone branches.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMap {
    atoms: Vec<Atom>,
    branches: Vec<Branch>,
    bad: usize,
    delta0: f64,
    shifts: Vec<f64>,
    increasing: Vec<bool>,
    transitions: Vec<Vec<bool>>,
    min_degree: usize,
    max_degree: usize,
}

impl MarkovMap {
    /// Build a map, checking the partition, monotonicity and the Markov property.
    pub fn new(atoms: Vec<Atom>, branches: Vec<Branch>, bad: usize, delta0: f64) -> Result<Self> {
        let d = atoms.len();
        if d == 0 || branches.len() != d {
            return Err(Error::InvalidMap("need one branch per atom".into()));
        }
        if bad > d {
            return Err(Error::InvalidMap("more bad atoms than atoms".into()));
        }
        if !(delta0 >= 0.0) {
            return Err(Error::InvalidMap("delta0 must be nonnegative".into()));
        }
        if atoms[0].left != 0.0 || atoms[d - 1].right != 1.0 {
            return Err(Error::InvalidMap("atoms must cover [0,1)".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.right > a.left) {
                return Err(Error::InvalidMap(format!("atom {i} is empty")));
            }
            if i + 1 < d && atoms[i + 1].left != a.right {
                return Err(Error::InvalidMap(format!("atoms {i} and {} are not adjacent", i + 1)));
            }
        }
        let mut shifts = Vec::with_capacity(d);
        let mut increasing = Vec::with_capacity(d);
        let mut transitions = vec![vec![false; d]; d];
        for (i, (a, b)) in atoms.iter().zip(&branches).enumerate() {
            let dl = b.derivative(a.left);
            let dr = b.derivative(a.right);
            if dl == 0.0 || dr == 0.0 || dl.signum() != dr.signum() {
                return Err(Error::InvalidMap(format!("branch {i} is not strictly monotone")));
            }
            let inc = dl > 0.0;
            let (v0, v1) = (b.value(a.left), b.value(a.right));
            let (lo, hi) = if inc { (v0, v1) } else { (v1, v0) };
            let shift = (lo + EDGE_TOL).floor();
            let (lo, hi) = (lo - shift, hi - shift);
            if hi > 1.0 + EDGE_TOL {
                return Err(Error::InvalidMap(format!("image of atom {i} wraps past 1")));
            }
            let start = boundary_index(&atoms, lo)
                .ok_or_else(|| Error::InvalidMap(format!("image of atom {i} does not start on a boundary")))?;
            let end = boundary_index(&atoms, hi)
                .ok_or_else(|| Error::InvalidMap(format!("image of atom {i} does not end on a boundary")))?;
            if end <= start {
                return Err(Error::InvalidMap(format!("image of atom {i} is degenerate")));
            }
            for j in start..end {
                transitions[i][j] = true;
            }
            shifts.push(shift);
            increasing.push(inc);
        }
        let col: Vec<usize> = (0..d)
            .map(|j| (0..d).filter(|&i| transitions[i][j]).count())
            .collect();
        let min_degree = *col.iter().min().unwrap();
        let max_degree = *col.iter().max().unwrap();
        if min_degree == 0 {
            return Err(Error::InvalidMap("some atom has no preimage".into()));
        }
        Ok(MarkovMap {
            atoms,
            branches,
            bad,
            delta0,
            shifts,
            increasing,
            transitions,
            min_degree,
            max_degree,
        })
    }

    /// The doubling map `x -> 2x mod 1`.
    pub fn doubling() -> Self {
        Self::linear_full(2)
    }

    /// The tripling map `x -> 3x mod 1`.
    pub fn tripling() -> Self {
        Self::linear_full(3)
    }

    /// `x -> m x mod 1` with the natural partition into `m` atoms.
    pub fn linear_full(m: usize) -> Self {
        let mf = m as f64;
        let atoms = (0..m)
            .map(|i| Atom {
                left: i as f64 / mf,
                right: if i + 1 == m { 1.0 } else { (i + 1) as f64 / mf },
            })
            .collect();
        let branches = (0..m)
            .map(|i| Branch::Affine {
                slope: mf,
                intercept: -(i as f64),
            })
            .collect();
        Self::new(atoms, branches, 0, 0.0).expect("linear full-branch map is valid")
    }

    /// The golden-mean map: both branches have slope equal to the golden ratio
    /// and the second atom maps onto the first only.
    pub fn golden_mean() -> Self {
        let a = (5f64.sqrt() - 1.0) / 2.0;
        let g = 1.0 / a;
        let atoms = vec![Atom { left: 0.0, right: a }, Atom { left: a, right: 1.0 }];
        let branches = vec![
            Branch::Affine { slope: g, intercept: 0.0 },
            Branch::Affine { slope: g, intercept: -1.0 },
        ];
        Self::new(atoms, branches, 0, 0.0).expect("golden-mean map is valid")
    }

    /// Three-atom benchmark with a weakly contracting fixed point at 0.
    ///
    /// Atom 0 carries `x/(1+delta0) + b x^2`, chosen so that the branch maps
    /// `[0,1/3]` onto `[0,1]`; atoms 1 and 2 carry `3x mod 1`.
    pub fn benchmark(delta0: f64) -> Result<Self> {
        if !(delta0 > 0.0) {
            return Err(Error::contract("benchmark requires delta0 > 0"));
        }
        let b = benchmark_curvature(delta0);
        let third = 1.0 / 3.0;
        let atoms = vec![
            Atom { left: 0.0, right: third },
            Atom { left: third, right: 2.0 * third },
            Atom { left: 2.0 * third, right: 1.0 },
        ];
        let branches = vec![
            Branch::Quadratic { c0: 0.0, c1: 1.0 / (1.0 + delta0), c2: b },
            Branch::Affine { slope: 3.0, intercept: -1.0 },
            Branch::Affine { slope: 3.0, intercept: -2.0 },
        ];
        Self::new(atoms, branches, 1, delta0)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Number of bad atoms; they are the first ones.
    pub fn num_bad(&self) -> usize {
        self.bad
    }

    pub fn is_bad(&self, atom: usize) -> bool {
        atom < self.bad
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn transitions(&self) -> &[Vec<bool>] {
        &self.transitions
    }

    pub fn allowed(&self, from: usize, to: usize) -> bool {
        self.transitions[from][to]
    }

    pub fn is_increasing(&self, atom: usize) -> bool {
        self.increasing[atom]
    }

    /// Number of preimages of every point, if it is constant.
    pub fn degree(&self) -> Option<usize> {
        (self.min_degree == self.max_degree).then_some(self.max_degree)
    }

    pub fn min_degree(&self) -> usize {
        self.min_degree
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn min_atom_length(&self) -> f64 {
        self.atoms.iter().map(Atom::length).fold(f64::INFINITY, f64::min)
    }

    pub fn max_atom_length(&self) -> f64 {
        self.atoms.iter().map(Atom::length).fold(0.0, f64::max)
    }

    /// Index of the atom containing `x`.
    pub fn atom_of(&self, x: f64) -> Result<usize> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::contract(format!("point {x} outside [0,1)")));
        }
        Ok(self.atoms.partition_point(|a| a.left <= x) - 1)
    }

    /// Evaluate the map at `x` in `[0,1)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let i = self.atom_of(x)?;
        Ok(self.eval_in_atom(i, x))
    }

    /// Evaluate the branch of `atom` at `x` (closure of the atom allowed).
    pub fn eval_in_atom(&self, atom: usize, x: f64) -> f64 {
        let mut y = self.branches[atom].value(x) - self.shifts[atom];
        if y >= 1.0 {
            y -= 1.0;
        }
        if y < 0.0 {
            y = if y > -EDGE_TOL { 0.0 } else { y + 1.0 };
        }
        if y >= 1.0 {
            y = 0.0;
        }
        y
    }

    /// Derivative at an interior point. On an interior atom boundary the
    /// value is returned only if both one-sided derivatives agree.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let i = self.atom_of(x)?;
        let right = self.branches[i].derivative(x);
        if i > 0 && x == self.atoms[i].left {
            let left = self.branches[i - 1].derivative(x);
            if (left - right).abs() > 1e-12 * left.abs().max(right.abs()) {
                return Err(Error::Boundary { x, left, right });
            }
        }
        Ok(right)
    }

    /// Derivative of the branch of `atom` at `x` in its closure.
    pub fn derivative_in_atom(&self, atom: usize, x: f64) -> f64 {
        self.branches[atom].derivative(x)
    }

    /// Infimum and supremum of `|f'|` over the closure of `atom`.
    pub fn derivative_bounds(&self, atom: usize) -> (f64, f64) {
        let a = self.atoms[atom];
        let l = self.branches[atom].derivative(a.left).abs();
        let r = self.branches[atom].derivative(a.right).abs();
        (l.min(r), l.max(r))
    }

    /// `sup |f'|^{-1}` over `atom`: the worst-case inverse contraction.
    pub fn inverse_contraction(&self, atom: usize) -> f64 {
        1.0 / self.derivative_bounds(atom).0
    }

    /// Minimal expansion over good atoms (infinite if every atom is bad).
    pub fn sigma1(&self) -> f64 {
        (self.bad..self.num_atoms())
            .map(|i| self.derivative_bounds(i).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimal `|f'|` over the whole circle.
    pub fn min_derivative(&self) -> f64 {
        (0..self.num_atoms())
            .map(|i| self.derivative_bounds(i).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Inverse of the branch of `atom` at `x`, where `x` lies in the closure
    /// of an atom contained in the image of `atom`.
    pub fn inverse_branch(&self, atom: usize, x: f64) -> Result<f64> {
        let a = self.atoms[atom];
        self.branches[atom]
            .solve(x + self.shifts[atom], a.left, a.right)
            .ok_or(Error::RootFinding { atom, target: x })
    }

    /// Preimages of `x` that land in the atoms mapping onto `target`, where
    /// `x` is in the closure of atom `target`.
    pub fn preimages_into(&self, target: usize, x: f64) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::with_capacity(self.max_degree);
        for a in 0..self.num_atoms() {
            if self.transitions[a][target] {
                out.push((a, self.inverse_branch(a, x)?));
            }
        }
        Ok(out)
    }

    /// All preimages of `x`, sorted increasingly.
    pub fn preimages(&self, x: f64) -> Result<Vec<f64>> {
        let j = self.atom_of(x)?;
        let mut ys: Vec<f64> = self.preimages_into(j, x)?.into_iter().map(|(_, y)| y).collect();
        ys.sort_by(f64::total_cmp);
        Ok(ys)
    }

    /// Transition matrix as 0/1 entries.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        self.transitions
            .iter()
            .map(|row| row.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    /// Smallest `N` such that every entry of `T^N` is positive, if any.
    pub fn primitivity_index(&self) -> Option<usize> {
        let d = self.num_atoms();
        let t = &self.transitions;
        let mut reach: Vec<Vec<bool>> = t.clone();
        let limit = d * d + 1;
        for n in 1..=limit {
            if reach.iter().all(|r| r.iter().all(|&b| b)) {
                return Some(n);
            }
            let mut next = vec![vec![false; d]; d];
            for i in 0..d {
                for k in 0..d {
                    if reach[i][k] {
                        for j in 0..d {
                            if t[k][j] {
                                next[i][j] = true;
                            }
                        }
                    }
                }
            }
            reach = next;
        }
        None
    }
}

/// Curvature of the first benchmark branch so that it maps `[0,1/3]` onto `[0,1]`.
pub fn benchmark_curvature(delta0: f64) -> f64 {
    9.0 * (1.0 - 1.0 / (3.0 * (1.0 + delta0)))
}

fn boundary_index(atoms: &[Atom], t: f64) -> Option<usize> {
    if (t - 1.0).abs() <= EDGE_TOL {
        return Some(atoms.len());
    }
    atoms.iter().position(|a| (a.left - t).abs() <= EDGE_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_eval_and_preimages() {
        let m = MarkovMap::doubling();
        assert_eq!(m.eval(0.3).unwrap(), 0.6);
        assert_eq!(m.preimages(0.5).unwrap(), vec![0.25, 0.75]);
        assert_eq!(m.degree(), Some(2));
    }

    #[test]
    fn tripling_preimages_of_zero() {
        let m = MarkovMap::tripling();
        let p = m.preimages(0.0).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p[0] - 0.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn benchmark_fixed_points_and_slopes() {
        let m = MarkovMap::benchmark(0.1).unwrap();
        assert_eq!(m.eval(0.0).unwrap(), 0.0);
        assert!((m.eval(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((m.derivative(0.0).unwrap() - 1.0 / 1.1).abs() < 1e-15);
        assert_eq!(m.degree(), Some(3));
        assert_eq!(m.sigma1(), 3.0);
        assert!(matches!(m.derivative(1.0 / 3.0), Err(Error::Boundary { .. })));
    }

    #[test]
    fn doubling_boundary_is_not_ambiguous() {
        let m = MarkovMap::doubling();
        assert_eq!(m.derivative(0.5).unwrap(), 2.0);
    }

    #[test]
    fn golden_mean_has_variable_degree() {
        let m = MarkovMap::golden_mean();
        assert_eq!(m.degree(), None);
        assert_eq!((m.min_degree(), m.max_degree()), (1, 2));
        assert_eq!(m.primitivity_index(), Some(2));
    }

    #[test]
    fn rejects_non_markov_image() {
        let atoms = vec![Atom { left: 0.0, right: 0.5 }, Atom { left: 0.5, right: 1.0 }];
        let branches = vec![
            Branch::Affine { slope: 1.5, intercept: 0.0 },
            Branch::Affine { slope: 2.0, intercept: -1.0 },
        ];
        assert!(matches!(MarkovMap::new(atoms, branches, 0, 0.0), Err(Error::InvalidMap(_))));
    }

    #[test]
    fn out_of_range_point_is_a_contract_error() {
        let m = MarkovMap::doubling();
        assert!(matches!(m.eval(1.0), Err(Error::Contract(_))));
        assert!(matches!(m.eval(-0.1), Err(Error::Contract(_))));
    }
}
