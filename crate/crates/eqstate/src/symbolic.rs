//! Symbolic dynamics: itineraries, cylinders, word counting, Pliss times and
//! hyperbolic times.
//!
//! Symbols are 0-based atom indices. Text output elsewhere prints them 1-based.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dynamics::MarkovMap;
use crate::error::{Error, Result};
use crate::potential::Potential;

/// Default depth cap for cylinder enumeration.
pub const DEFAULT_DEPTH_CAP: usize = 14;

/// Atom indices of `x, f(x), ..., f^{n-1}(x)`.
pub fn itinerary(map: &MarkovMap, x: f64, n: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(n);
    let mut y = x;
    for k in 0..n {
        let a = map.atom_of(y)?;
        out.push(a);
        if k + 1 < n {
            y = map.eval_in_atom(a, y);
        }
    }
    Ok(out)
}

/// True when consecutive symbols of `word` are allowed transitions.
pub fn is_admissible(map: &MarkovMap, word: &[usize]) -> bool {
    word.iter().all(|&s| s < map.num_atoms()) && word.windows(2).all(|w| map.allowed(w[0], w[1]))
}

/// Closure `[lo, hi]` of the cylinder of `word`.
pub fn cylinder_interval(map: &MarkovMap, word: &[usize]) -> Result<(f64, f64)> {
    if word.is_empty() {
        return Ok((0.0, 1.0));
    }
    if !is_admissible(map, word) {
        return Err(Error::Inadmissible(word.to_vec()));
    }
    let last = map.atoms()[*word.last().unwrap()];
    let (mut lo, mut hi) = (last.left, last.right);
    for &s in word[..word.len() - 1].iter().rev() {
        let a = map.inverse_branch(s, lo)?;
        let b = map.inverse_branch(s, hi)?;
        lo = a.min(b);
        hi = a.max(b);
    }
    Ok((lo, hi))
}

/// All admissible words of length `n`, in lexicographic order.
pub fn admissible_words(map: &MarkovMap, n: usize) -> Vec<Vec<usize>> {
    let d = map.num_atoms();
    let mut words: Vec<Vec<usize>> = if n == 0 { vec![vec![]] } else { (0..d).map(|a| vec![a]).collect() };
    for _ in 1..n {
        let mut next = Vec::with_capacity(words.len() * map.max_degree());
        for w in &words {
            let last = *w.last().unwrap();
            for b in 0..d {
                if map.allowed(last, b) {
                    let mut v = w.clone();
                    v.push(b);
                    next.push(v);
                }
            }
        }
        words = next;
    }
    words
}

/// Number of words over `p` good and `q` bad symbols with more than `gamma n`
/// bad symbols, and its exponential rate `log(count)/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequentCount {
    #[serde(serialize_with = "ser_big", deserialize_with = "de_big")]
    pub count: BigUint,
    pub rate: f64,
}

fn ser_big<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn de_big<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BigUint, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

/// Smallest integer strictly greater than `gamma * n`.
pub fn frequency_threshold(gamma: f64, n: usize) -> usize {
    let t = gamma * n as f64;
    let r = t.round();
    let base = if (t - r).abs() <= 1e-9 * (1.0 + t.abs()) { r } else { t.floor() };
    (base as i64 + 1).max(0) as usize
}

/// Natural logarithm of a big unsigned integer.
pub fn big_ln(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    let s = bits.saturating_sub(64);
    let top = (x >> s).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + s as f64 * std::f64::consts::LN_2
}

pub fn count_frequent_words(p: u32, q: u32, gamma: f64, n: usize) -> Result<FrequentCount> {
    if p + q < 2 {
        return Err(Error::contract("need p + q >= 2"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::contract("gamma must lie in [0,1]"));
    }
    if n == 0 {
        return Err(Error::contract("n must be positive"));
    }
    let bp = BigUint::from(p);
    let bq = BigUint::from(q);
    // dp[r] = number of words of the current length with r bad symbols
    let mut dp = vec![BigUint::zero(); n + 1];
    dp[0] = BigUint::from(1u32);
    for len in 0..n {
        for r in (0..=len + 1).rev() {
            let mut v = &dp[r] * &bp;
            if r > 0 {
                v += &dp[r - 1] * &bq;
            }
            dp[r] = v;
        }
    }
    let start = frequency_threshold(gamma, n);
    let mut count = BigUint::zero();
    for item in dp.iter().skip(start) {
        count += item;
    }
    let rate = big_ln(&count) / n as f64;
    Ok(FrequentCount { count, rate })
}

/// Upper bound on the exponential growth rate of frequently-bad words,
/// valid for every `gamma >= kk/(kk+1)`.
pub fn stirling_rate_bound(p: u32, q: u32, kk: u64) -> Result<f64> {
    if kk == 0 {
        return Err(Error::contract("kk must be positive"));
    }
    if p + q < 2 {
        return Err(Error::contract("need p + q >= 2"));
    }
    let k = kk as f64;
    Ok((1.0 + 1.0 / k).ln() + (1.0 + k).ln() / k + f64::from(p).ln() / (k + 1.0) + f64::from(q).ln())
}

/// Largest `kk` with `kk/(kk+1) <= gamma`, if any.
pub fn stirling_order(gamma: f64) -> Option<u64> {
    if !(0.5..1.0).contains(&gamma) {
        return None;
    }
    let kk = (gamma / (1.0 - gamma) + 1e-12).floor() as u64;
    (kk >= 1).then_some(kk)
}

/// Selected times of a Pliss selection together with the guaranteed density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlissResult {
    /// 1-based indices.
    pub indices: Vec<usize>,
    pub theta: f64,
}

/// Indices `m` (1-based) such that every tail sum of `b - c1` ending at `m` is nonnegative.
pub fn record_times(b: &[f64], c1: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut s = 0.0;
    let mut best = 0.0;
    for (i, &v) in b.iter().enumerate() {
        s += v - c1;
        if s >= best {
            best = s;
            out.push(i + 1);
        }
    }
    out
}

pub fn pliss_times(b: &[f64], a: f64, c1: f64, c2: f64) -> Result<PlissResult> {
    if b.is_empty() {
        return Err(Error::contract("empty sequence"));
    }
    if !(c1 > 0.0 && c2 > c1 && a >= c2) {
        return Err(Error::contract("need 0 < c1 < c2 <= A"));
    }
    if let Some(v) = b.iter().find(|&&v| !(v <= a)) {
        return Err(Error::contract(format!("entry {v} exceeds A = {a}")));
    }
    let total: f64 = b.iter().sum();
    let n = b.len() as f64;
    if total < c2 * n {
        return Err(Error::contract(format!("sum {total} is below c2 * n = {}", c2 * n)));
    }
    Ok(PlissResult {
        indices: record_times(b, c1),
        theta: (c2 - c1) / (a - c1),
    })
}

/// Hyperbolic times `m <= n` of `x`: for every `1 <= j <= m` the product of
/// the last `j` inverse derivatives along the first `m` iterates is at most
/// `exp(-2 c j)`.
pub fn hyperbolic_times(map: &MarkovMap, x: f64, n: usize, c: f64) -> Result<Vec<usize>> {
    if !(c > 0.0) {
        return Err(Error::contract("c must be positive"));
    }
    let mut logs = Vec::with_capacity(n);
    let mut y = x;
    for k in 0..n {
        logs.push(map.derivative(y)?.abs().ln());
        if k + 1 < n {
            y = map.eval(y)?;
        }
    }
    Ok(record_times(&logs, 2.0 * c))
}

/// Words of length `n` whose cylinders are certified hyperbolic using the
/// worst-case inverse derivative on each atom.
pub fn hyperbolic_cylinders(map: &MarkovMap, n: usize, c: f64, depth_cap: usize) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::contract("n must be positive"));
    }
    if n > depth_cap {
        return Err(Error::contract(format!("depth {n} exceeds cap {depth_cap}")));
    }
    let d = map.num_atoms();
    let logs: Vec<f64> = (0..d).map(|a| map.inverse_contraction(a).ln()).collect();
    let mut out = Vec::new();
    // Build words from the last symbol backwards, pruning on the tail condition.
    let mut word = vec![0usize; n];
    fn rec(
        map: &MarkovMap,
        logs: &[f64],
        c: f64,
        pos: usize,
        acc: f64,
        word: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let n = word.len();
        let j = n - pos;
        for s in 0..logs.len() {
            if pos < n - 1 && !map.allowed(s, word[pos + 1]) {
                continue;
            }
            let tot = acc + logs[s];
            if tot > -2.0 * c * j as f64 + 1e-12 {
                continue;
            }
            word[pos] = s;
            if pos == 0 {
                out.push(word.clone());
            } else {
                rec(map, logs, c, pos - 1, tot, word, out);
            }
        }
    }
    rec(map, &logs, c, n - 1, 0.0, &mut word, &mut out);
    out.sort();
    Ok(out)
}

/// Contraction, distortion and Gibbs constants for hyperbolic cylinders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionConstants {
    /// Contraction constant of inverse branches at hyperbolic times.
    pub contraction: f64,
    /// Radius of the neighborhoods where inverse branches are defined.
    pub delta: f64,
    /// Bounded-distortion constant for Birkhoff sums.
    pub distortion: f64,
    /// Weak-Gibbs constant.
    pub gibbs: f64,
}

pub fn contraction_and_distortion_constants(map: &MarkovMap, potential: &Potential, c: f64) -> Result<DistortionConstants> {
    if !(c > 0.0) {
        return Err(Error::contract("c must be positive"));
    }
    let alpha = potential.alpha;
    let contraction: f64 = 1.0;
    let distortion = potential.seminorm(map) * contraction.powf(alpha) / (1.0 - (-c * alpha).exp());
    let gibbs = (distortion * map.max_atom_length().powf(alpha)).exp();
    Ok(DistortionConstants {
        contraction,
        delta: map.min_atom_length(),
        distortion,
        gibbs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn itineraries() {
        let d = MarkovMap::doubling();
        assert_eq!(itinerary(&d, 0.0, 4).unwrap(), vec![0, 0, 0, 0]);
        assert_eq!(itinerary(&d, 1.0 / 3.0, 4).unwrap(), vec![0, 1, 0, 1]);
        let b = MarkovMap::benchmark(0.1).unwrap();
        assert_eq!(itinerary(&b, 0.5, 3).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn doubling_cylinders() {
        let d = MarkovMap::doubling();
        assert_eq!(cylinder_interval(&d, &[0, 0]).unwrap(), (0.0, 0.25));
        assert_eq!(cylinder_interval(&d, &[1, 0]).unwrap(), (0.5, 0.75));
    }

    #[test]
    fn inadmissible_cylinder() {
        let g = MarkovMap::golden_mean();
        assert!(matches!(cylinder_interval(&g, &[1, 1]), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn counting_examples() {
        assert_eq!(count_frequent_words(1, 1, 0.5, 4).unwrap().count, BigUint::from(5u32));
        assert_eq!(count_frequent_words(1, 1, 0.99, 4).unwrap().count, BigUint::from(1u32));
        assert_eq!(count_frequent_words(2, 1, 0.9, 20).unwrap().count, BigUint::from(41u32));
        let z = count_frequent_words(2, 0, 0.5, 10).unwrap();
        assert!(z.count.is_zero());
        assert_eq!(z.rate, f64::NEG_INFINITY);
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(frequency_threshold(0.5, 4), 3);
        assert_eq!(frequency_threshold(0.9, 20), 19);
        assert_eq!(frequency_threshold(0.99, 4), 4);
    }

    #[test]
    fn stirling_examples() {
        assert!((stirling_rate_bound(2, 1, 1).unwrap() - (4.0 * 2f64.sqrt()).ln()).abs() < 1e-14);
        assert!(stirling_rate_bound(1, 1, 1_000_000).unwrap() <= 3e-5);
        assert_eq!(stirling_order(0.9), Some(9));
        assert_eq!(stirling_order(0.4), None);
    }

    #[test]
    fn pliss_examples() {
        let r = pliss_times(&[1.0, 1.0, 1.0, 1.0], 1.0, 0.25, 0.5).unwrap();
        assert_eq!(r.indices, vec![1, 2, 3, 4]);
        let r = pliss_times(&[1.0, 1.0, 0.0, 1.0], 1.0, 0.25, 0.5).unwrap();
        assert_eq!(r.indices, vec![1, 2, 4]);
        assert!((r.theta - 1.0 / 3.0).abs() < 1e-15);
        let r = pliss_times(&[0.5, 0.5], 1.0, 0.25, 0.5).unwrap();
        assert_eq!(r.indices, vec![1, 2]);
    }

    #[test]
    fn pliss_contract_errors() {
        assert!(pliss_times(&[1.0], 1.0, 0.5, 0.25).is_err());
        assert!(pliss_times(&[2.0], 1.0, 0.25, 0.5).is_err());
        assert!(pliss_times(&[0.1, 0.1], 1.0, 0.25, 0.5).is_err());
    }

    #[test]
    fn hyperbolic_time_examples() {
        let d = MarkovMap::doubling();
        assert_eq!(hyperbolic_times(&d, 0.1234, 10, 0.3).unwrap(), (1..=10).collect::<Vec<_>>());
        let b = MarkovMap::benchmark(0.1).unwrap();
        assert_eq!(hyperbolic_times(&b, 0.5, 5, 0.5).unwrap(), vec![1, 2, 3, 4, 5]);
        assert!(hyperbolic_times(&b, 0.0, 10, 0.01).unwrap().is_empty());
    }

    #[test]
    fn hyperbolic_cylinder_examples() {
        let d = MarkovMap::doubling();
        assert_eq!(hyperbolic_cylinders(&d, 3, 0.1, DEFAULT_DEPTH_CAP).unwrap().len(), 8);
        let b = MarkovMap::benchmark(0.1).unwrap();
        assert_eq!(hyperbolic_cylinders(&b, 1, 0.01, DEFAULT_DEPTH_CAP).unwrap(), vec![vec![1], vec![2]]);
        let c = 1.05f64.ln() / 4.0;
        let two = hyperbolic_cylinders(&b, 2, c, DEFAULT_DEPTH_CAP).unwrap();
        assert!(two.contains(&vec![0, 1]));
        assert!(!two.contains(&vec![1, 0]));
    }

    #[test]
    fn distortion_constants() {
        let d = MarkovMap::doubling();
        let p1 = Potential::linear(0.0, 1.0);
        let k1 = contraction_and_distortion_constants(&d, &p1, 0.3).unwrap();
        assert!((k1.distortion - 1.0 / (1.0 - (-0.3f64).exp())).abs() < 1e-14);
        let p2 = Potential::linear(0.0, 2.0);
        let k2 = contraction_and_distortion_constants(&d, &p2, 0.3).unwrap();
        assert!((k2.gibbs - k1.gibbs * k1.gibbs).abs() < 1e-12 * k2.gibbs);
    }
}
