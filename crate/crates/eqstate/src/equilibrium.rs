//! Equilibrium states: the measure `h nu`, its g-function and entropy, and
//! free energies of competing Markov measures.

use serde::{Deserialize, Serialize};

use crate::dynamics::MarkovMap;
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::symbolic;
use crate::transfer::{CylinderModel, CylinderSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumMeasure {
    /// Mass of each cylinder of the model.
    pub weights: Vec<f64>,
    /// `max_v |mu(f^{-1} C_v) - mu(C_v)|` over cylinders one level up.
    pub invariance_defect: f64,
}

pub fn equilibrium_measure(model: &CylinderModel) -> EquilibriumMeasure {
    let mu = model.mu();
    let total: f64 = mu.iter().sum();
    let weights: Vec<f64> = mu.iter().map(|m| m / total).collect();
    let sys = &model.system;
    let mut defect = 0.0f64;
    if sys.depth() > 1 {
        let d = sys.alphabet() as u64;
        let tail_mod = d.pow(sys.depth() as u32 - 1);
        let mut pre = std::collections::HashMap::new();
        for (p, r) in sys.prefix_groups(sys.depth() - 1) {
            pre.insert(p, r.map(|i| weights[i]).sum::<f64>());
        }
        let mut back: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
        for (i, &c) in sys.codes().iter().enumerate() {
            *back.entry(c % tail_mod).or_insert(0.0) += weights[i];
        }
        for (v, m) in &pre {
            let b = back.get(v).copied().unwrap_or(0.0);
            defect = defect.max((b - m).abs());
        }
    }
    EquilibriumMeasure { weights, invariance_defect: defect }
}

/// Value of the g-function on every cylinder of the model:
/// `lambda^{-1} e^{phi} h / (h o f)`.
pub fn g_values(potential: &Potential, model: &CylinderModel) -> Vec<f64> {
    let sys = &model.system;
    let h = &model.spectral.h;
    let l = model.lambda();
    (0..sys.len())
        .map(|i| {
            let phi = potential.eval_in_atom(sys.first_symbol(i), sys.rep(i));
            phi.exp() * h[i] / (l * h[sys.shifted_index(i)])
        })
        .collect()
}

/// The g-function at a point, with `h` and `phi` read on the cylinder of the point.
pub fn g_function(map: &MarkovMap, potential: &Potential, model: &CylinderModel, x: f64) -> Result<f64> {
    let sys = &model.system;
    let i = sys.locate(map, x)?;
    let w = sys.word(i);
    let mut tail = w[1..].to_vec();
    let fx = map.eval(x)?;
    let last = symbolic::itinerary(map, fx, sys.depth())?;
    tail.push(*last.last().unwrap());
    let j = sys.index_of(&tail).unwrap_or_else(|| sys.shifted_index(i));
    let phi = potential.eval_in_atom(w[0], sys.rep(i));
    Ok(phi.exp() * model.spectral.h[i] / (model.lambda() * model.spectral.h[j]))
}

/// `sum_{f(y)=x} g(y)`, which equals one for a g-function.
pub fn g_sum(map: &MarkovMap, potential: &Potential, model: &CylinderModel, x: f64) -> Result<f64> {
    let mut s = 0.0;
    for y in map.preimages(x)? {
        s += g_function(map, potential, model, y)?;
    }
    Ok(s)
}

/// Ratio `nu(C_w) / exp(S_n phi(x) - n P)` at the midpoint of a hyperbolic cylinder.
pub fn weak_gibbs_ratio(map: &MarkovMap, potential: &Potential, model: &CylinderModel, word: &[usize], c: f64) -> Result<f64> {
    let n = word.len();
    if n == 0 || n > model.system.depth() {
        return Err(Error::contract("word length must lie in 1..=depth"));
    }
    if !is_hyperbolic_word(map, word, c) {
        return Err(Error::contract(format!("word {word:?} is not a certified hyperbolic cylinder")));
    }
    let r = model.system.prefix_range(word);
    let mass: f64 = model.spectral.nu[r].iter().sum();
    let (lo, hi) = symbolic::cylinder_interval(map, word)?;
    let mut x = 0.5 * (lo + hi);
    let mut s = 0.0;
    for (k, &a) in word.iter().enumerate() {
        s += potential.eval_in_atom(a, x);
        if k + 1 < n {
            x = map.eval_in_atom(a, x);
        }
    }
    Ok(mass / (s - n as f64 * model.spectral.pressure).exp())
}

/// Tail condition of certified hyperbolic cylinders.
pub fn is_hyperbolic_word(map: &MarkovMap, word: &[usize], c: f64) -> bool {
    let mut acc = 0.0;
    for (j, &a) in word.iter().rev().enumerate() {
        acc += map.inverse_contraction(a).ln();
        if acc > -2.0 * c * (j + 1) as f64 + 1e-12 {
            return false;
        }
    }
    symbolic::is_admissible(map, word)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub entropy: f64,
    pub potential_integral: f64,
    pub pressure: f64,
    /// `entropy + potential_integral - pressure`.
    pub identity_defect: f64,
}

/// Entropy `-int log g dmu` together with the free-energy identity.
pub fn rokhlin_entropy(potential: &Potential, model: &CylinderModel) -> EntropyReport {
    let mu = equilibrium_measure(model).weights;
    let g = g_values(potential, model);
    let sys = &model.system;
    let mut entropy = 0.0;
    let mut integral = 0.0;
    for i in 0..sys.len() {
        if mu[i] > 0.0 {
            entropy -= mu[i] * g[i].ln();
        }
        integral += mu[i] * potential.eval_in_atom(sys.first_symbol(i), sys.rep(i));
    }
    let pressure = model.spectral.pressure;
    EntropyReport {
        entropy,
        potential_integral: integral,
        pressure,
        identity_defect: entropy + integral - pressure,
    }
}

/// Extreme values of `d mu / d nu` over cylinders.
pub fn measure_equivalence_diagnostic(model: &CylinderModel) -> (f64, f64) {
    let h = &model.spectral.h;
    (
        h.iter().copied().fold(f64::INFINITY, f64::min),
        h.iter().copied().fold(0.0, f64::max),
    )
}

/// Worst defect of `int_{f^{-1}C} u dmu = int_{f^{-1}C} (P u) o f dmu` over
/// cylinders `C` one level up, where `P u = sum g u` over preimages.
pub fn conditional_expectation_check(potential: &Potential, model: &CylinderModel, u: &[f64]) -> f64 {
    let sys = &model.system;
    let mu = equilibrium_measure(model).weights;
    let g = g_values(potential, model);
    let d = sys.alphabet() as u64;
    let tail_mod = d.pow(sys.depth() as u32 - 1);
    let mut lhs: std::collections::HashMap<u64, (f64, f64, f64)> = std::collections::HashMap::new();
    for (i, &c) in sys.codes().iter().enumerate() {
        let e = lhs.entry(c % tail_mod).or_insert((0.0, 0.0, 0.0));
        e.0 += mu[i] * u[i];
        e.1 += g[i] * u[i];
        e.2 += mu[i];
    }
    let mut worst = 0.0f64;
    for (_, (direct, pu, mass)) in lhs {
        worst = worst.max((direct - mass * pu).abs());
    }
    worst
}

/// A stationary Markov measure of memory one and its free energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCandidate {
    pub transition: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    pub entropy: f64,
    pub potential_integral: f64,
    /// `entropy + potential_integral`.
    pub value: f64,
}

/// Stationary vector of a stochastic matrix by Gaussian elimination.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = p.len();
    // Solve pi (P - I) = 0 with sum pi = 1: rows of A are columns of P - I, last row replaced by ones.
    let mut a = vec![vec![0.0; d + 1]; d];
    for i in 0..d {
        for j in 0..d {
            a[i][j] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..d {
        a[d - 1][j] = 1.0;
    }
    a[d - 1][d] = 1.0;
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-14 {
            return Err(Error::Numerical("transition matrix has no unique stationary vector".into()));
        }
        a.swap(col, piv);
        for r in 0..d {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=d {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    let pi: Vec<f64> = (0..d).map(|i| (a[i][d] / a[i][i]).max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|x| x / s).collect())
}

/// Cylinder weights of a memory-one Markov measure.
pub fn markov_cylinder_weights(system: &CylinderSystem, p: &[Vec<f64>], pi: &[f64]) -> Vec<f64> {
    (0..system.len())
        .map(|i| {
            let w = system.word(i);
            let mut m = pi[w[0]];
            for k in 1..w.len() {
                m *= p[w[k - 1]][w[k]];
            }
            m
        })
        .collect()
}

/// Free energy of a memory-one Markov measure. Atom-constant potentials are
/// integrated exactly; others on the cylinders of `system`.
pub fn markov_free_energy(
    map: &MarkovMap,
    potential: &Potential,
    p: &[Vec<f64>],
    system: Option<&CylinderSystem>,
) -> Result<MarkovCandidate> {
    let d = map.num_atoms();
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 && !map.allowed(i, j) {
                return Err(Error::contract("transition outside the Markov structure"));
            }
        }
    }
    let pi = stationary_distribution(p)?;
    let mut entropy = 0.0;
    for i in 0..d {
        for j in 0..d {
            let v = p[i][j];
            if v > 0.0 {
                entropy -= pi[i] * v * v.ln();
            }
        }
    }
    let integral = match (&potential.form, system) {
        (crate::potential::PotentialForm::Zero | crate::potential::PotentialForm::PerAtom { .. }, _) | (_, None) => {
            (0..d).map(|i| pi[i] * potential.eval_in_atom(i, 0.5 * (map.atoms()[i].left + map.atoms()[i].right))).sum()
        }
        (_, Some(sys)) => {
            let w = markov_cylinder_weights(sys, p, &pi);
            (0..sys.len())
                .map(|i| w[i] * potential.eval_in_atom(sys.first_symbol(i), sys.rep(i)))
                .sum()
        }
    };
    Ok(MarkovCandidate {
        transition: p.to_vec(),
        stationary: pi,
        entropy,
        potential_integral: integral,
        value: entropy + integral,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Largest number of coarse grid points.
    pub max_grid: usize,
    /// Step size at which the local refinement stops.
    pub refine_tol: f64,
    /// Cylinder depth used for potentials that are not atom-constant.
    pub depth: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { max_grid: 20_000, refine_tol: 1e-12, depth: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub best: Option<MarkovCandidate>,
    /// Coarse grid: flattened transition rows and free energy.
    pub samples: Vec<(Vec<f64>, f64)>,
    pub resolution: usize,
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Maximize the free energy over memory-one Markov measures compatible with
/// the transitions, subject to `feasible`, by a simplex grid followed by
/// pattern search around the best point.
pub fn constrained_scan<F: Fn(&MarkovCandidate) -> bool>(
    map: &MarkovMap,
    potential: &Potential,
    opts: ScanOptions,
    feasible: F,
) -> Result<ScanResult> {
    maximize_markov(map, potential, opts, |c| feasible(c).then_some(c.value))
}

/// Maximize `objective` over memory-one Markov measures; `None` marks a
/// candidate as excluded. Samples record the objective.
pub fn maximize_markov<F: Fn(&MarkovCandidate) -> Option<f64>>(
    map: &MarkovMap,
    potential: &Potential,
    opts: ScanOptions,
    objective: F,
) -> Result<ScanResult> {
    let d = map.num_atoms();
    let succ: Vec<Vec<usize>> = (0..d).map(|i| (0..d).filter(|&j| map.allowed(i, j)).collect()).collect();
    let system = if potential.is_atom_constant() {
        None
    } else {
        Some(CylinderSystem::new(map, opts.depth)?)
    };
    let count_for = |res: usize| -> f64 { succ.iter().map(|s| binom(res + s.len() - 1, s.len() - 1)).product() };
    let mut res = 1;
    while count_for(res + 1) <= opts.max_grid as f64 && res < 1000 {
        res += 1;
    }
    let row_options: Vec<Vec<Vec<f64>>> = succ
        .iter()
        .map(|s| {
            compositions(res, s.len())
                .into_iter()
                .map(|c| {
                    let mut row = vec![0.0; d];
                    for (k, &j) in s.iter().enumerate() {
                        row[j] = c[k] as f64 / res as f64;
                    }
                    row
                })
                .collect()
        })
        .collect();
    let evaluate = |p: &[Vec<f64>]| -> Option<(MarkovCandidate, f64)> {
        let c = markov_free_energy(map, potential, p, system.as_ref()).ok()?;
        let v = objective(&c)?;
        Some((c, v))
    };
    let mut samples = Vec::new();
    let mut best: Option<(MarkovCandidate, f64)> = None;
    let mut idx = vec![0usize; d];
    loop {
        let p: Vec<Vec<f64>> = (0..d).map(|i| row_options[i][idx[i]].clone()).collect();
        if let Some((c, v)) = evaluate(&p) {
            samples.push((p.concat(), v));
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((c, v));
            }
        }
        let mut k = 0;
        loop {
            if k == d {
                break;
            }
            idx[k] += 1;
            if idx[k] < row_options[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    if let Some(mut cur) = best.clone() {
        // elementary moves: shift mass from a to b within row i
        let mut moves: Vec<(usize, usize, usize)> = Vec::new();
        for (i, row) in succ.iter().enumerate() {
            for &a in row {
                for &b in row {
                    if a != b {
                        moves.push((i, a, b));
                    }
                }
            }
        }
        let shift = |p: &[Vec<f64>], mv: &[(usize, usize, usize)], step: f64| -> Option<Vec<Vec<f64>>> {
            let mut q = p.to_vec();
            for &(i, a, b) in mv {
                if q[i][a] < step {
                    return None;
                }
                q[i][a] -= step;
                q[i][b] += step;
            }
            Some(q)
        };
        let mut step = 1.0 / res as f64;
        while step >= opts.refine_tol {
            let mut improved = false;
            for mv in &moves {
                if let Some(c) = shift(&cur.0.transition, &[*mv], step).and_then(|p| evaluate(&p)) {
                    if c.1 > cur.1 {
                        cur = c;
                        improved = true;
                    }
                }
            }
            if !improved {
                // paired moves in two rows follow curved constraint boundaries
                for (x, m1) in moves.iter().enumerate() {
                    for m2 in &moves[x + 1..] {
                        if m1.0 == m2.0 {
                            continue;
                        }
                        if let Some(c) = shift(&cur.0.transition, &[*m1, *m2], step).and_then(|p| evaluate(&p)) {
                            if c.1 > cur.1 {
                                cur = c;
                                improved = true;
                            }
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = Some(cur);
    }
    Ok(ScanResult { best: best.map(|b| b.0), samples, resolution: res })
}

/// Unconstrained free-energy maximization over memory-one Markov measures.
pub fn variational_scan(map: &MarkovMap, potential: &Potential, opts: ScanOptions) -> Result<ScanResult> {
    constrained_scan(map, potential, opts, |_| true)
}

/// `int log(g / g_eta) d eta` for an invariant measure `eta` given on the model's cylinders.
pub fn jensen_gap(potential: &Potential, model: &CylinderModel, eta: &[f64]) -> Result<f64> {
    let sys = &model.system;
    if eta.len() != sys.len() {
        return Err(Error::contract("measure has the wrong length"));
    }
    let g = g_values(potential, model);
    let mut pre = std::collections::HashMap::new();
    if sys.depth() > 1 {
        for (p, r) in sys.prefix_groups(sys.depth() - 1) {
            pre.insert(p, r.map(|i| eta[i]).sum::<f64>());
        }
    }
    let d = sys.alphabet() as u64;
    let tail_mod = d.pow(sys.depth() as u32 - 1);
    let mut gap = 0.0;
    for (i, &c) in sys.codes().iter().enumerate() {
        if eta[i] <= 0.0 {
            continue;
        }
        let cond = if sys.depth() > 1 {
            eta[i] / pre.get(&(c % tail_mod)).copied().unwrap_or(f64::NAN)
        } else {
            eta[i]
        };
        gap += eta[i] * (g[i] / cond).ln();
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_shift() -> (MarkovMap, Potential) {
        (MarkovMap::doubling(), Potential::per_atom(vec![0.0, 2f64.ln()]))
    }

    #[test]
    fn bernoulli_equilibrium() {
        let (m, p) = two_shift();
        let model = CylinderModel::new(&m, &p, 5).unwrap();
        let eq = equilibrium_measure(&model);
        let a: f64 = eq.weights[model.system.prefix_range(&[0])].iter().sum();
        assert!((a - 1.0 / 3.0).abs() < 1e-12);
        assert!(eq.invariance_defect < 1e-14);
        let g = g_values(&p, &model);
        assert!((g[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((g[model.system.len() - 1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_g_is_half() {
        let m = MarkovMap::doubling();
        let model = CylinderModel::new(&m, &Potential::zero(), 4).unwrap();
        for x in [0.1, 0.37, 0.8] {
            assert!((g_function(&m, &Potential::zero(), &model, x).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn bernoulli_entropy() {
        let (m, p) = two_shift();
        let model = CylinderModel::new(&m, &p, 3).unwrap();
        let e = rokhlin_entropy(&p, &model);
        let h = -(1.0f64 / 3.0 * (1.0f64 / 3.0).ln() + 2.0 / 3.0 * (2.0f64 / 3.0).ln());
        assert!((e.entropy - h).abs() < 1e-12);
        assert!(e.identity_defect.abs() < 1e-12);
    }

    #[test]
    fn stationary_vector() {
        let pi = stationary_distribution(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_shift_scan_maximum() {
        let (m, p) = two_shift();
        let r = variational_scan(&m, &p, ScanOptions::default()).unwrap();
        let b = r.best.unwrap();
        assert!((b.value - 3f64.ln()).abs() < 1e-12);
        assert!((b.stationary[0] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn hyperbolic_word_rule() {
        let b = MarkovMap::benchmark(0.1).unwrap();
        assert!(is_hyperbolic_word(&b, &[0, 1], 1.05f64.ln() / 4.0));
        assert!(!is_hyperbolic_word(&b, &[1, 0], 1.05f64.ln() / 4.0));
    }
}
