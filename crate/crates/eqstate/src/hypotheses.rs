//! Standing hypotheses and restrictions on the constants for a (map, potential) pair.

use serde::{Deserialize, Serialize};

use crate::dynamics::MarkovMap;
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::symbolic;

/// Slacks closer to zero than this are reported as exactly zero.
pub const SLACK_SNAP: f64 = 1e-12;

/// Points per region used to sample `|f'|` for the volume-expansion constants.
pub const DERIVATIVE_SAMPLES: usize = 10_000;

/// Where the frequent-visit growth rate `c0` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSource {
    /// Exact count of frequently-bad words of length `n`.
    Counting { n: usize },
    /// Closed-form Stirling bound for `kk = floor(gamma/(1-gamma))`.
    Stirling,
}

impl Default for RateSource {
    fn default() -> Self {
        RateSource::Counting { n: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub name: String,
    pub pass: bool,
    /// `rhs - lhs` for conditions of the form `lhs < rhs` or `lhs <= rhs`.
    pub slack: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
    pub detail: String,
}

impl ConditionRecord {
    fn new(name: &str, lhs: f64, rhs: f64, strict: bool, detail: impl Into<String>) -> Self {
        let mut slack = rhs - lhs;
        if slack.abs() < SLACK_SNAP {
            slack = 0.0;
        }
        let pass = if strict { slack > 0.0 } else { slack >= 0.0 };
        ConditionRecord { name: name.into(), pass, slack, lhs, rhs, strict, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    pub gamma: f64,
    pub c: f64,
    pub c0: f64,
    pub c0_source: RateSource,
    /// Largest oscillation allowed by every restriction on `eps0(f)` that was evaluated.
    pub eps0_budget: f64,
    pub oscillation: f64,
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub alpha: f64,
    pub delta0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub big_m1: f64,
    pub big_m2: f64,
    pub beta: Option<f64>,
    pub gamma0: Option<f64>,
    pub rho: Option<f64>,
    pub h_top: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub records: Vec<ConditionRecord>,
    pub constants: HypothesisConstants,
    /// All conditions needed for the uniformly-contracting-volume route pass.
    pub route_a: bool,
    /// All conditions of the volume-expanding route pass; `None` without `gamma0`.
    pub route_b: Option<bool>,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn record(&self, name: &str) -> Option<&ConditionRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// First failing condition of route A.
    pub fn first_failure(&self) -> Option<&ConditionRecord> {
        self.records.iter().find(|r| ROUTE_A.contains(&r.name.as_str()) && !r.pass)
    }
}

const ROUTE_A: [&str; 7] = ["(H1)", "(H2)", "(H3)", "(e.4)", "(e.4) c>0", "(e.epsilon2)", "(e.epsilon3)"];

/// Options of [`verify_hypotheses`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Defaults to the value making (e.4) an equality.
    pub c: Option<f64>,
    pub gamma0: Option<f64>,
    pub rate: RateSource,
}

/// `c` for which (e.4) holds with equality.
pub fn equality_c(map: &MarkovMap, gamma: f64) -> f64 {
    -0.25 * e4_lhs(map, gamma).ln()
}

fn e4_lhs(map: &MarkovMap, gamma: f64) -> f64 {
    let s1 = map.sigma1();
    if map.num_bad() == 0 {
        // No bad atom can be visited, so every orbit expands at rate sigma1.
        return 1.0 / s1;
    }
    (1.0 + map.delta0()).powf(gamma) * s1.powf(-(1.0 - gamma))
}

/// Spectral radius of the 0/1 transition matrix.
pub fn topological_entropy(map: &MarkovMap) -> Result<f64> {
    let m = crate::linalg::SparseMatrix::from_dense(&map.transition_matrix())?;
    let (bracket, _, _) = crate::linalg::power_iteration(&m, false, 1e-14, 100_000)?;
    Ok((0.5 * (bracket.0 + bracket.1)).ln())
}

fn sampled_log_derivatives(map: &MarkovMap, atom: usize) -> Vec<f64> {
    let a = map.atoms()[atom];
    (0..DERIVATIVE_SAMPLES)
        .map(|i| {
            let x = a.left + (i as f64 + 0.5) / DERIVATIVE_SAMPLES as f64 * a.length();
            map.derivative_in_atom(atom, x).abs().ln()
        })
        .collect()
}

pub fn verify_hypotheses(map: &MarkovMap, potential: &Potential, gamma: f64, opts: VerifyOptions) -> Result<HypothesisReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::contract("gamma must lie in (0,1)"));
    }
    potential.check(map)?;
    let osc = potential.oscillation(map);
    if !osc.is_finite() {
        return Err(Error::Config("potential oscillation is not finite".into()));
    }
    let mut notes = Vec::new();
    let q = map.num_bad();
    let p = map.num_atoms() - q;
    let k = map.degree().unwrap_or_else(|| map.min_degree());
    let alpha = potential.alpha;
    let delta0 = map.delta0();
    let sigma1 = map.sigma1();
    let mut records = Vec::new();

    // (H1): expansion on good atoms, bounded contraction, transitivity, k > q.
    let worst_contraction = (0..map.num_atoms()).map(|a| map.inverse_contraction(a)).fold(0.0, f64::max);
    let mut h1_slack = (sigma1 - 1.0).min(1.0 + delta0 - worst_contraction).min(k as f64 - q as f64);
    let mut h1_detail = format!(
        "sigma1 = {sigma1}, max |f'|^-1 = {worst_contraction}, 1+delta0 = {}, k = {k}, q = {q}",
        1.0 + delta0
    );
    if map.degree().is_none() {
        h1_slack = -1.0;
        h1_detail.push_str(&format!("; degree varies between {} and {}", map.min_degree(), map.max_degree()));
    }
    if map.primitivity_index().is_none() {
        h1_slack = -1.0;
        h1_detail.push_str("; transition matrix is not primitive");
    }
    let mut h1 = ConditionRecord::new("(H1)", 0.0, h1_slack, false, h1_detail);
    h1.pass = h1.slack >= 0.0 && map.degree().is_some() && map.primitivity_index().is_some() && sigma1 > 1.0 && k > q;
    records.push(h1);

    // (e.4)
    let lhs4 = e4_lhs(map, gamma);
    let c = opts.c.unwrap_or_else(|| equality_c(map, gamma));
    if q == 0 {
        notes.push("no bad atoms: (e.4) is read as sigma1^-1 <= e^{-4c}".into());
    }
    records.push(ConditionRecord::new(
        "(e.4)",
        lhs4,
        (-4.0 * c).exp(),
        false,
        format!("(1+delta0)^gamma sigma1^-(1-gamma) = {lhs4}, c = {c}"),
    ));
    records.push(ConditionRecord::new("(e.4) c>0", 0.0, c, true, "the constant c must be positive"));

    // c0 = c_gamma
    let c0 = match opts.rate {
        RateSource::Counting { n } => symbolic::count_frequent_words(p as u32, q as u32, gamma, n)?.rate,
        RateSource::Stirling => {
            let kk = symbolic::stirling_order(gamma)
                .ok_or_else(|| Error::Config("the Stirling bound needs gamma >= 1/2".into()))?;
            symbolic::stirling_rate_bound(p as u32, q as u32, kk)?
        }
    };
    let c0 = if c0.is_finite() { c0.max(0.0) } else { 0.0 };
    let log_k = (k as f64).ln();

    records.push(ConditionRecord::new(
        "(e.epsilon2)",
        osc,
        log_k - c0,
        true,
        format!("oscillation {osc} against log k - c0 = {} - {c0}", log_k),
    ));
    let mix = (k - q) as f64 / k as f64 * sigma1.powf(-alpha) + q as f64 / k as f64 * (1.0 + delta0).powf(alpha);
    let lhs3 = osc.exp() * mix;
    records.push(ConditionRecord::new("(e.epsilon3)", lhs3, 1.0, true, format!("e^osc ((k-q)/k sigma1^-alpha + q/k (1+delta0)^alpha) = {lhs3}")));
    records.push(ConditionRecord::new("(H3)", 0.0, log_k, true, "one-dimensional: the (d-1)-th exterior power is trivial"));

    // (H4) and the volume constants.
    let sigma2 = map.min_derivative();
    let mut v_logs = Vec::new();
    for a in 0..q {
        v_logs.extend(sampled_log_derivatives(map, a).into_iter().filter(|&l| l < sigma1.ln()));
    }
    let mut outside = Vec::new();
    for a in q..map.num_atoms() {
        outside.extend(sampled_log_derivatives(map, a));
    }
    let (m1, m2) = if v_logs.is_empty() {
        (None, None)
    } else {
        (
            Some(v_logs.iter().copied().fold(f64::INFINITY, f64::min)),
            Some(v_logs.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        )
    };
    let big_m1 = outside.iter().copied().fold(f64::INFINITY, f64::min);
    let big_m2 = outside.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let beta = m1.zip(m2).map(|(a, b)| b - a);
    let mut h4 = ConditionRecord::new(
        "(H4)",
        q as f64,
        sigma2,
        true,
        format!("min |f'| = {sigma2} against q = {q}; W = bad atoms"),
    );
    if let Some(m2v) = m2 {
        let sep = big_m1 - m2v;
        if sep <= 0.0 {
            h4.pass = false;
            h4.slack = h4.slack.min(sep);
        }
        h4.detail.push_str(&format!("; M1 - m2 = {sep}, beta = m2 - m1 = {}", beta.unwrap_or(0.0)));
    } else {
        h4.detail.push_str("; the weakly expanding set V is empty");
    }
    records.push(h4);

    let h_top = topological_entropy(map)?;
    let mut budget = (log_k - c0).min(-mix.ln());
    let mut rho = None;
    let mut route_b = None;
    if let Some(g0) = opts.gamma0 {
        if !(g0 > 0.0 && g0 < gamma) {
            return Err(Error::Config("gamma0 must lie in (0, gamma)".into()));
        }
        match (m1, m2) {
            (Some(m1v), Some(m2v)) => {
                let x = g0 * m1v + (1.0 - g0) * big_m1 - (1.0 + delta0).ln();
                let y = gamma * m2v + (1.0 - gamma) * big_m2;
                records.push(ConditionRecord::new("(e.5)", y, x, true, format!("gamma m2 + (1-gamma) M2 = {y}, gamma0 m1 + (1-gamma0) M1 - log(1+delta0) = {x}")));
                let r = if x > 0.0 { y / x } else { f64::NAN };
                let bound = (1.0 - r) * h_top;
                records.push(ConditionRecord::new("(e.epsilon1)", osc, bound, true, format!("rho = {r}, h_top = {h_top}")));
                if bound.is_finite() {
                    budget = budget.min(bound);
                }
                rho = Some(r).filter(|v| v.is_finite());
            }
            _ => notes.push("(e.5) and (e.epsilon1) need a nonempty weakly expanding set; not evaluated".into()),
        }
        let names = ["(H1)", "(H2)", "(H4)", "(e.4)", "(e.4) c>0", "(e.epsilon2)", "(e.epsilon3)", "(e.5)", "(e.epsilon1)"];
        route_b = Some(names.iter().all(|n| records.iter().find(|r| r.name == *n).map_or(*n == "(H2)", |r| r.pass)));
    }
    records.insert(1, ConditionRecord::new("(H2)", osc, budget, true, format!("oscillation {osc} against eps0 budget {budget}")));
    if let Some(b) = route_b.as_mut() {
        *b = *b && records[1].pass;
    }

    let route_a = ROUTE_A.iter().all(|n| records.iter().any(|r| r.name == *n && r.pass));
    Ok(HypothesisReport {
        records,
        constants: HypothesisConstants {
            gamma,
            c,
            c0,
            c0_source: opts.rate,
            eps0_budget: budget,
            oscillation: osc,
            k,
            p,
            q,
            alpha,
            delta0,
            sigma1,
            sigma2,
            m1,
            m2,
            big_m1,
            big_m2,
            beta,
            gamma0: opts.gamma0,
            rho,
            h_top,
        },
        route_a,
        route_b,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_passes_everything() {
        let r = verify_hypotheses(
            &MarkovMap::doubling(),
            &Potential::zero(),
            0.9,
            VerifyOptions { c: Some(0.05), gamma0: Some(0.5), ..Default::default() },
        )
        .unwrap();
        assert!(r.route_a, "{:#?}", r.records);
        let e4 = r.record("(e.4)").unwrap();
        assert!((e4.slack - ((-0.2f64).exp() - 0.5)).abs() < 1e-15);
        assert!(r.constants.m1.is_none());
    }

    #[test]
    fn benchmark_equality_case() {
        let b = MarkovMap::benchmark(0.1).unwrap();
        let r = verify_hypotheses(&b, &Potential::zero(), 0.9, VerifyOptions::default()).unwrap();
        let e4 = r.record("(e.4)").unwrap();
        assert_eq!(e4.slack, 0.0);
        assert!(e4.pass);
        assert!((r.constants.c - 0.25 * (0.1 * 3f64.ln() - 0.9 * 1.1f64.ln())).abs() < 1e-15);
        assert!(r.route_a);
        // gamma = 0.95 leaves no positive c
        let r = verify_hypotheses(&b, &Potential::zero(), 0.95, VerifyOptions::default()).unwrap();
        assert!(!r.record("(e.4) c>0").unwrap().pass);
    }

    #[test]
    fn large_oscillation_fails_counting_budget() {
        let b = MarkovMap::benchmark(0.1).unwrap();
        let pot = Potential::per_atom(vec![0.0, 3f64.ln(), 0.0]);
        let r = verify_hypotheses(&b, &pot, 0.9, VerifyOptions::default()).unwrap();
        let rec = r.record("(e.epsilon2)").unwrap();
        assert!(!rec.pass);
        assert!((r.constants.c0 - 25f64.ln() / 12.0).abs() < 1e-12);
        assert_eq!(r.first_failure().unwrap().name, "(H2)");
    }

    #[test]
    fn volume_constants_on_benchmark() {
        let b = MarkovMap::benchmark(0.1).unwrap();
        let r = verify_hypotheses(&b, &Potential::zero(), 0.9, VerifyOptions { gamma0: Some(0.5), ..Default::default() }).unwrap();
        let k = r.constants.clone();
        assert!((k.big_m1 - 3f64.ln()).abs() < 1e-12);
        assert!(k.m1.unwrap() < k.m2.unwrap() && k.m2.unwrap() < 3f64.ln());
        assert!(!r.record("(H4)").unwrap().pass);
        assert!((k.h_top - 3f64.ln()).abs() < 1e-12);
    }
}
