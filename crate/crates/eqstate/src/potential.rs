//! Hölder potentials on the circle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::MarkovMap;
use crate::error::{Error, Result};

/// Closed forms supported for a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialForm {
    Zero,
    /// Constant on each atom.
    PerAtom { values: Vec<f64> },
    /// `intercept + slope * x`
    Linear { intercept: f64, slope: f64 },
    /// `intercept + amplitude * cos(2 pi frequency x)`
    Cosine { amplitude: f64, frequency: u32, intercept: f64 },
    /// `scale * |x - center|^alpha`
    Power { scale: f64, center: f64 },
}

/// A potential together with its Hölder exponent and an additive constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub form: PotentialForm,
    pub alpha: f64,
    #[serde(default)]
    pub shift: f64,
}

impl Potential {
    pub fn new(form: PotentialForm, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::contract("Hölder exponent must lie in (0,1]"));
        }
        if let PotentialForm::Power { .. } = form {
            // fine for any center; the seminorm bound below is exact for alpha <= 1
        }
        Ok(Potential { form, alpha, shift: 0.0 })
    }

    pub fn zero() -> Self {
        Potential { form: PotentialForm::Zero, alpha: 1.0, shift: 0.0 }
    }

    pub fn per_atom(values: Vec<f64>) -> Self {
        Potential { form: PotentialForm::PerAtom { values }, alpha: 1.0, shift: 0.0 }
    }

    pub fn linear(intercept: f64, slope: f64) -> Self {
        Potential { form: PotentialForm::Linear { intercept, slope }, alpha: 1.0, shift: 0.0 }
    }

    /// Same potential plus the constant `t`.
    pub fn shifted(&self, t: f64) -> Self {
        let mut p = self.clone();
        p.shift += t;
        p
    }

    /// Same potential shifted so that its infimum is zero.
    pub fn normalized(&self, map: &MarkovMap) -> Self {
        self.shifted(-self.min_value(map))
    }

    /// True when the potential is constant on every atom.
    pub fn is_atom_constant(&self) -> bool {
        matches!(self.form, PotentialForm::Zero | PotentialForm::PerAtom { .. })
    }

    pub fn check(&self, map: &MarkovMap) -> Result<()> {
        if let PotentialForm::PerAtom { values } = &self.form {
            if values.len() != map.num_atoms() {
                return Err(Error::contract(format!(
                    "potential has {} atom values, map has {} atoms",
                    values.len(),
                    map.num_atoms()
                )));
            }
        }
        Ok(())
    }

    /// Value at `x`, where `x` is in the closure of `atom`.
    pub fn eval_in_atom(&self, atom: usize, x: f64) -> f64 {
        let v = match &self.form {
            PotentialForm::Zero => 0.0,
            PotentialForm::PerAtom { values } => values[atom],
            PotentialForm::Linear { intercept, slope } => intercept + slope * x,
            PotentialForm::Cosine { amplitude, frequency, intercept } => {
                intercept + amplitude * (2.0 * PI * f64::from(*frequency) * x).cos()
            }
            PotentialForm::Power { scale, center } => scale * (x - center).abs().powf(self.alpha),
        };
        v + self.shift
    }

    pub fn eval(&self, map: &MarkovMap, x: f64) -> Result<f64> {
        Ok(self.eval_in_atom(map.atom_of(x)?, x))
    }

    pub fn min_value(&self, map: &MarkovMap) -> f64 {
        self.range(map).0
    }

    pub fn max_value(&self, map: &MarkovMap) -> f64 {
        self.range(map).1
    }

    pub fn oscillation(&self, map: &MarkovMap) -> f64 {
        let (lo, hi) = self.range(map);
        hi - lo
    }

    fn range(&self, map: &MarkovMap) -> (f64, f64) {
        let (lo, hi) = match &self.form {
            PotentialForm::Zero => (0.0, 0.0),
            PotentialForm::PerAtom { values } => (
                values.iter().copied().fold(f64::INFINITY, f64::min),
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            PotentialForm::Linear { intercept, slope } => {
                let e = intercept + slope;
                (intercept.min(e), intercept.max(e))
            }
            PotentialForm::Cosine { amplitude, frequency, intercept } => {
                if *frequency == 0 {
                    (intercept + amplitude, intercept + amplitude)
                } else {
                    (intercept - amplitude.abs(), intercept + amplitude.abs())
                }
            }
            PotentialForm::Power { scale, center } => {
                let near = if (0.0..=1.0).contains(center) { 0.0 } else { center.abs().min((1.0 - center).abs()) };
                let far = center.abs().max((1.0 - center).abs());
                let a = scale * near.powf(self.alpha);
                let b = scale * far.powf(self.alpha);
                (a.min(b), a.max(b))
            }
        };
        let _ = map;
        (lo + self.shift, hi + self.shift)
    }

    /// Bound on the Hölder seminorm within atoms.
    pub fn seminorm(&self, map: &MarkovMap) -> f64 {
        let diam = map.max_atom_length();
        let stretch = diam.powf(1.0 - self.alpha);
        match &self.form {
            PotentialForm::Zero | PotentialForm::PerAtom { .. } => 0.0,
            PotentialForm::Linear { slope, .. } => slope.abs() * stretch,
            PotentialForm::Cosine { amplitude, frequency, .. } => {
                2.0 * PI * f64::from(*frequency) * amplitude.abs() * stretch
            }
            PotentialForm::Power { scale, .. } => scale.abs(),
        }
    }

    /// Bound on the Hölder seminorm of `exp(phi)` within atoms.
    pub fn exp_seminorm(&self, map: &MarkovMap) -> f64 {
        self.max_value(map).exp() * self.seminorm(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_atom_values_and_oscillation() {
        let m = MarkovMap::doubling();
        let p = Potential::per_atom(vec![0.0, 2f64.ln()]);
        assert_eq!(p.eval(&m, 0.25).unwrap(), 0.0);
        assert_eq!(p.eval(&m, 0.75).unwrap(), 2f64.ln());
        assert_eq!(p.oscillation(&m), 2f64.ln());
        assert_eq!(p.seminorm(&m), 0.0);
    }

    #[test]
    fn normalization_sets_infimum_to_zero() {
        let m = MarkovMap::benchmark(0.1).unwrap();
        let p = Potential::linear(-2.0, 0.5).normalized(&m);
        assert!(p.min_value(&m).abs() < 1e-15);
        assert!((p.max_value(&m) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cosine_range() {
        let m = MarkovMap::doubling();
        let p = Potential::new(PotentialForm::Cosine { amplitude: -0.3, frequency: 2, intercept: 1.0 }, 1.0).unwrap();
        assert!((p.oscillation(&m) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_exponent() {
        assert!(Potential::new(PotentialForm::Zero, 1.5).is_err());
        assert!(Potential::new(PotentialForm::Zero, 0.0).is_err());
    }
}
