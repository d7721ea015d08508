//! Separable regularizers and their proximal operators.
//!
//! Every regularizer here applies the same scalar function `g_i` to each
//! coordinate, so the vector prox is just the scalar prox mapped over the
//! components. The scalar prox solves
//!
//! ```text
//! argmin_u  ½(u − v)² + κ·g_i(u)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The per-coordinate convex function shared by every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeparableRegularizer {
    Zero,
    /// `λ|u|`
    L1 {
        lambda: f64,
    },
    /// Indicator of `[lo, hi]`; either end may be infinite.
    Box {
        lo: f64,
        hi: f64,
    },
}

impl SeparableRegularizer {
    pub fn l1(lambda: f64) -> Result<Self> {
        let reg = SeparableRegularizer::L1 { lambda };
        reg.validate()?;
        Ok(reg)
    }

    pub fn boxed(lo: f64, hi: f64) -> Result<Self> {
        let reg = SeparableRegularizer::Box { lo, hi };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SeparableRegularizer::Zero => Ok(()),
            SeparableRegularizer::L1 { lambda } => {
                if lambda.is_finite() && lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidRegularizer(format!(
                        "l1 weight must be finite and nonnegative, got {lambda}"
                    )))
                }
            }
            SeparableRegularizer::Box { lo, hi } => {
                if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                    Err(Error::InvalidRegularizer(format!(
                        "box bounds must satisfy lo <= hi, got [{lo}, {hi}]"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// `g_i(u)`; `+∞` outside the box for indicators.
    pub fn value_at(&self, u: f64) -> f64 {
        match *self {
            SeparableRegularizer::Zero => 0.0,
            SeparableRegularizer::L1 { lambda } => lambda * u.abs(),
            SeparableRegularizer::Box { lo, hi } => {
                if u >= lo && u <= hi {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `Σ_i g_i(x_i)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            SeparableRegularizer::Zero => 0.0,
            SeparableRegularizer::L1 { lambda } => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            SeparableRegularizer::Box { .. } => {
                if x.iter().all(|&u| self.value_at(u) == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Scalar prox without argument checks; `kappa` must be nonnegative.
    #[inline]
    pub(crate) fn prox_unchecked(&self, v: f64, kappa: f64) -> f64 {
        match *self {
            SeparableRegularizer::Zero => v,
            SeparableRegularizer::L1 { lambda } => soft_threshold(v, kappa * lambda),
            SeparableRegularizer::Box { lo, hi } => v.max(lo).min(hi),
        }
    }
}

/// `sign(v)·max(|v| − t, 0)`. The tie `|v| = t` maps to exactly zero.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Componentwise proximal operator for a single coordinate.
pub fn prox_coordinate(reg: &SeparableRegularizer, v: f64, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("prox argument"));
    }
    Ok(reg.prox_unchecked(v, kappa))
}

/// Full-vector proximal operator `P_{κg}(y)`.
pub fn prox_full(reg: &SeparableRegularizer, y: &[f64], kappa: f64) -> Result<Vec<f64>> {
    check_kappa(kappa)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prox argument"));
    }
    Ok(y.iter().map(|&v| reg.prox_unchecked(v, kappa)).collect())
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa >= 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeKappa(kappa))
    }
}
