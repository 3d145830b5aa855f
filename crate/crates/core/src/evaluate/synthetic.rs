use serde::{Deserialize, Serialize};

use super::{Evaluator, Gaussian, PredictionDistribution, ProbabilisticEvaluator};
use crate::error::{Error, Result};
use crate::geometry::{CstParams, FlowConditions};

/// Fixed predictive spreads per coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigmas {
    pub cd: f64,
    pub cl: f64,
    pub cm: f64,
}

impl Default for Sigmas {
    /// Epistemic spreads reported for the trained Bayesian surrogates.
    fn default() -> Self {
        Self {
            cd: 0.0011,
            cl: 0.024,
            cm: 0.012,
        }
    }
}

impl Sigmas {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("cd", self.cd), ("cl", self.cl), ("cm", self.cm)] {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::Config(format!(
                    "sigma_{name} must be a finite value ≥ 0, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic evaluator plus Gaussian noise: the mean is the base
/// prediction, the spread is the configured sigma.
pub struct SyntheticProbabilistic<E> {
    base: E,
    sigmas: Sigmas,
}

impl<E: Evaluator> SyntheticProbabilistic<E> {
    pub fn new(base: E, sigmas: Sigmas) -> Result<Self> {
        sigmas.validate()?;
        Ok(Self { base, sigmas })
    }

    pub fn sigmas(&self) -> Sigmas {
        self.sigmas
    }
}

pub fn synthetic_probabilistic<E: Evaluator>(base: E, sigmas: Sigmas) -> Result<SyntheticProbabilistic<E>> {
    SyntheticProbabilistic::new(base, sigmas)
}

impl<E: Evaluator> ProbabilisticEvaluator for SyntheticProbabilistic<E> {
    fn name(&self) -> String {
        format!(
            "synthetic({},{},{})[{}]",
            self.sigmas.cd,
            self.sigmas.cl,
            self.sigmas.cm,
            self.base.name()
        )
    }

    fn predict(&self, cst: &CstParams, flow: &FlowConditions) -> Result<PredictionDistribution> {
        let p = self.base.evaluate(cst, flow)?;
        Ok(PredictionDistribution {
            cd: Gaussian::new(p.cd, self.sigmas.cd)?,
            cl: Gaussian::new(p.cl, self.sigmas.cl)?,
            cm: Gaussian::new(p.cm, self.sigmas.cm)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{AnalyticModel, Metric};
    use crate::risk::empirical_cvar;

    fn symmetric() -> CstParams {
        let u = [0.13, 0.14, 0.19, 0.19, 0.2];
        CstParams::new(u, [u[1], u[2], u[3], u[4]])
    }

    #[test]
    fn zero_sigma_degenerates_to_base() {
        let s = SyntheticProbabilistic::new(
            AnalyticModel::default(),
            Sigmas {
                cd: 0.0,
                cl: 0.0,
                cm: 0.0,
            },
        )
        .unwrap();
        let flow = FlowConditions::default();
        let d = s.predict(&symmetric(), &flow).unwrap();
        let base = AnalyticModel::default().evaluate(&symmetric(), &flow).unwrap();
        assert_eq!(d.mean(), base);
        assert!(d.draw(Metric::Cl, 10, 1).iter().all(|&v| v == base.cl));
    }

    #[test]
    fn default_sigmas_on_symmetric_section() {
        let s = SyntheticProbabilistic::new(AnalyticModel::default(), Sigmas::default()).unwrap();
        let d = s.predict(&symmetric(), &FlowConditions::new(0.6, 0.0, 6.3e6)).unwrap();
        assert_eq!(d.cl.mean, 0.0);
        assert_eq!(d.cl.std, 0.024);
        assert_eq!(d.cd.std, 0.0011);
        assert_eq!(d.cm.std, 0.012);
    }

    #[test]
    fn tail_mean_of_draws_is_below_mean() {
        let s = SyntheticProbabilistic::new(AnalyticModel::default(), Sigmas::default()).unwrap();
        let d = s.predict(&symmetric(), &FlowConditions::default()).unwrap();
        let draws = d.draw(Metric::Cl, 200, 9);
        let tail = empirical_cvar(&draws, 0.7).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(tail.tail_mean <= mean);
    }

    #[test]
    fn negative_sigma_is_config_error() {
        let r = SyntheticProbabilistic::new(
            AnalyticModel::default(),
            Sigmas {
                cd: 0.0,
                cl: -0.1,
                cm: 0.0,
            },
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
