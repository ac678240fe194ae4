use crate::error::{Error, Result};

/// Floor applied before taking logarithms.
pub const ENTROPY_FLOOR: f64 = 1e-12;

/// Legendre potential used by the projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MirrorMap {
    /// Unnormalized negative entropy `sum x log x - x`.
    Entropy { floor: f64 },
    /// `||x||^2 / 2`.
    Euclidean,
}

impl Default for MirrorMap {
    fn default() -> Self {
        MirrorMap::Entropy {
            floor: ENTROPY_FLOOR,
        }
    }
}

impl MirrorMap {
    pub fn potential(&self, x: &[f64]) -> f64 {
        match *self {
            MirrorMap::Entropy { .. } => x
                .iter()
                .map(|&v| if v > 0.0 { v * v.ln() - v } else { 0.0 })
                .sum(),
            MirrorMap::Euclidean => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
        }
    }

    /// `grad Phi(x)`.
    #[inline]
    pub fn grad(&self, x: f64) -> f64 {
        match *self {
            MirrorMap::Entropy { floor } => x.max(floor).ln(),
            MirrorMap::Euclidean => x,
        }
    }

    /// `grad Phi*(y)`, the inverse of [`Self::grad`].
    #[inline]
    pub fn grad_conj(&self, y: f64) -> f64 {
        match *self {
            MirrorMap::Entropy { .. } => y.exp(),
            MirrorMap::Euclidean => y,
        }
    }

    /// `D_Phi(x, y)`.
    pub fn divergence(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match *self {
            MirrorMap::Entropy { .. } => kl_divergence(x, y),
            MirrorMap::Euclidean => {
                if x.len() != y.len() {
                    return Err(Error::ShapeMismatch("divergence arguments differ".into()));
                }
                Ok(0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            }
        }
    }
}

/// Generalized KL divergence `sum x log(x/y) - x + y` with `0 log 0 = 0`.
/// Returns `+inf` when `x_i > 0 = y_i`.
pub fn kl_divergence(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch("divergence arguments differ".into()));
    }
    let mut total = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        if a < 0.0 || b < 0.0 {
            return Err(Error::Domain(format!(
                "divergence needs nonnegative arguments, got {a}, {b}"
            )));
        }
        if a > 0.0 {
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += a * (a / b).ln() - a + b;
        } else {
            total += b;
        }
    }
    Ok(total)
}
