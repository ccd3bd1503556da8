use crate::error::{Error, Result};
use crate::Orientation;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Linear model estimating radiologist error counts from BLEU-2 and RadGraph F1.
/// Lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadCliqCoefficients {
    pub weight_bleu2: f64,
    pub weight_radgraph: f64,
    pub intercept: f64,
}

impl RadCliqCoefficients {
    pub const fn orientation(&self) -> Orientation {
        Orientation::LowerBetter
    }
}

impl Default for RadCliqCoefficients {
    /// Placeholder until calibrated with [`fit_radcliq`]: more overlap means
    /// fewer estimated errors.
    fn default() -> Self {
        Self {
            weight_bleu2: -1.0,
            weight_radgraph: -1.0,
            intercept: 0.0,
        }
    }
}

pub fn radcliq(bleu2: f64, radgraph_f1: f64, coeffs: &RadCliqCoefficients) -> f64 {
    coeffs.weight_bleu2 * bleu2 + coeffs.weight_radgraph * radgraph_f1 + coeffs.intercept
}

/// Least-squares fit of the coefficients on `(bleu2, radgraph_f1, error_count)`
/// samples.
pub fn fit_radcliq(samples: &[(f64, f64, f64)]) -> Result<RadCliqCoefficients> {
    if samples.len() < 3 {
        return Err(Error::TooFewObservations {
            required: 3,
            actual: samples.len(),
        });
    }
    let x = DMatrix::from_fn(samples.len(), 3, |i, j| match j {
        0 => samples[i].0,
        1 => samples[i].1,
        _ => 1.0,
    });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.2));
    let w = x
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::InvalidParameter(format!("RadCliQ fit failed: {e}")))?;
    Ok(RadCliqCoefficients {
        weight_bleu2: w[0],
        weight_radgraph: w[1],
        intercept: w[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_model() {
        let c = RadCliqCoefficients {
            weight_bleu2: 0.0,
            weight_radgraph: 0.0,
            intercept: 2.5,
        };
        assert_eq!(radcliq(0.3, 0.9, &c), 2.5);
        assert_eq!(c.orientation(), Orientation::LowerBetter);
    }

    #[test]
    fn linear_arithmetic() {
        let c = RadCliqCoefficients {
            weight_bleu2: 1.0,
            weight_radgraph: -1.0,
            intercept: 0.0,
        };
        assert!((radcliq(0.5, 0.25, &c) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn affine_scaling() {
        let c = RadCliqCoefficients {
            weight_bleu2: -2.0,
            weight_radgraph: 0.7,
            intercept: 0.0,
        };
        for alpha in [0.1, 0.5, 3.0] {
            let lhs = radcliq(alpha * 0.4, alpha * 0.6, &c);
            assert!((lhs - alpha * radcliq(0.4, 0.6, &c)).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_recovers_exact_plane() {
        let truth = RadCliqCoefficients {
            weight_bleu2: -3.0,
            weight_radgraph: -1.5,
            intercept: 4.0,
        };
        let samples: Vec<_> = (0..20)
            .map(|i| {
                let b = (i as f64 * 0.37) % 1.0;
                let r = (i as f64 * 0.61) % 1.0;
                (b, r, radcliq(b, r, &truth))
            })
            .collect();
        let fit = fit_radcliq(&samples).unwrap();
        assert!((fit.weight_bleu2 - truth.weight_bleu2).abs() < 1e-9);
        assert!((fit.weight_radgraph - truth.weight_radgraph).abs() < 1e-9);
        assert!((fit.intercept - truth.intercept).abs() < 1e-9);
    }
}
