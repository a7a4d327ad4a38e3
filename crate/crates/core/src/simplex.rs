//! Weight vectors on the capped simplex `{p : sum p = 1, 0 <= p <= a}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum p = 1` for a vector to count as a simplex point.
pub const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    values: Vec<f64>,
    caps: Vec<f64>,
}

impl SimplexWeights {
    /// Validates `values` against `caps`; both must be the same length.
    pub fn new(values: Vec<f64>, caps: Vec<f64>) -> Result<Self> {
        validate_caps(&caps)?;
        if values.len() != caps.len() {
            return Err(Error::IndexMismatch { expected: caps.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        if let Some(i) = values.iter().zip(&caps).position(|(v, a)| *v < 0.0 || *v > *a) {
            return Err(Error::InvalidArgument(format!(
                "weight {} at position {i} is outside [0, {}]",
                values[i], caps[i]
            )));
        }
        Ok(Self { values, caps })
    }

    /// The uniform point `1/m` with unit caps.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyIndexSet);
        }
        Self::new(vec![1.0 / m as f64; m], vec![1.0; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Checks that caps are finite, nonnegative and sum to at least one.
pub fn validate_caps(caps: &[f64]) -> Result<()> {
    if caps.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    if caps.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::InvalidArgument("caps must be finite and nonnegative".into()));
    }
    let cap_sum: f64 = caps.iter().sum();
    if cap_sum < 1.0 - SUM_TOL {
        return Err(Error::EmptyFeasibleSet { cap_sum });
    }
    Ok(())
}

fn is_feasible(v: &[f64], caps: &[f64]) -> bool {
    let sum: f64 = v.iter().sum();
    (sum - 1.0).abs() <= SUM_TOL
        && v.iter().zip(caps).all(|(x, a)| *x >= 0.0 && *x <= *a)
}

fn shifted_mass(v: &[f64], caps: &[f64], tau: f64) -> f64 {
    v.iter().zip(caps).map(|(x, a)| (x - tau).clamp(0.0, *a)).sum()
}

/// Euclidean projection onto `{x : sum x = 1, 0 <= x <= caps}`.
///
/// The projection is `x_i = clamp(v_i - tau, 0, a_i)` for the shift `tau` that
/// restores unit mass. `tau` is bracketed by bisection over the sorted
/// breakpoints `{v_i - a_i, v_i}` and then solved exactly on the final linear
/// piece. Already-feasible input is returned unchanged.
pub fn project_capped_simplex(v: &[f64], caps: &[f64]) -> Result<SimplexWeights> {
    validate_caps(caps)?;
    if v.len() != caps.len() {
        return Err(Error::IndexMismatch { expected: caps.len(), got: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if is_feasible(v, caps) {
        return Ok(SimplexWeights { values: v.to_vec(), caps: caps.to_vec() });
    }

    let mut breakpoints: Vec<f64> = v.iter().zip(caps).flat_map(|(x, a)| [x - a, *x]).collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    // mass(bp[lo]) >= 1 >= mass(bp[hi]); mass is nonincreasing in tau.
    let mut lo = 0;
    let mut hi = breakpoints.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if shifted_mass(v, caps, breakpoints[mid]) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (t_lo, t_hi) = (breakpoints[lo], breakpoints[hi]);
    let mass_lo = shifted_mass(v, caps, t_lo);
    let tau = if mass_lo <= 1.0 {
        t_lo
    } else {
        let probe = 0.5 * (t_lo + t_hi);
        let free = v
            .iter()
            .zip(caps)
            .filter(|(x, a)| *x - *a < probe && probe < **x)
            .count();
        if free == 0 {
            t_lo
        } else {
            t_lo + (mass_lo - 1.0) / free as f64
        }
    };
    let values = v.iter().zip(caps).map(|(x, a)| (x - tau).clamp(0.0, *a)).collect();
    Ok(SimplexWeights { values, caps: caps.to_vec() })
}

/// Projection of the uniform vector onto the capped simplex. Every node with a
/// positive cap receives positive weight.
pub fn capped_barycenter(caps: &[f64]) -> Result<SimplexWeights> {
    let m = caps.len().max(1);
    project_capped_simplex(&vec![1.0 / m as f64; caps.len()], caps)
}
