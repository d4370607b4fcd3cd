//! The streaming unit and the thresholding operator used inside the
//! weighted MSE estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One regressor vector and its desired output.
///
/// For affine models the last regressor entry is the constant 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub d: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, d: f64) -> Result<Self> {
        if let Some(&bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "regressor",
                value: bad,
            });
        }
        if !d.is_finite() {
            return Err(Error::NonFinite {
                what: "desired output",
                value: d,
            });
        }
        Ok(Self { x, d })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Checks that every sample of a stream shares one dimension and returns it.
pub fn stream_dim(samples: &[Sample]) -> Result<usize> {
    let first = samples.first().ok_or(Error::EmptyStream)?;
    let r = first.dim();
    if r == 0 {
        return Err(Error::param("x", "regressor must have at least one entry"));
    }
    for s in samples {
        if s.dim() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: s.dim(),
            });
        }
    }
    Ok(r)
}

/// Maps `y` into `[-1, 1]`.
pub fn clamp_unit(y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::NonFinite {
            what: "clamp_unit input",
            value: y,
        });
    }
    Ok(y.clamp(-1.0, 1.0))
}
