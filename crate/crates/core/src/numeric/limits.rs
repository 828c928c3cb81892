use serde::{Deserialize, Serialize};

/// A real number or a signed infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extended {
    Finite(f64),
    PosInf,
    NegInf,
}

impl Extended {
    pub fn value(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::PosInf => f64::INFINITY,
            Extended::NegInf => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            Extended::PosInf
        } else if v == f64::NEG_INFINITY {
            Extended::NegInf
        } else {
            Extended::Finite(v)
        }
    }
}

impl std::fmt::Display for Extended {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::PosInf => write!(f, "inf"),
            Extended::NegInf => write!(f, "-inf"),
        }
    }
}

/// Estimate the limit of a sequence of samples taken ever closer to a
/// boundary (e.g. at successive decades).
///
/// Finite when the last two samples agree to `rel` (or are both below `abs`
/// in magnitude), or when the differences shrink geometrically, in which case
/// the Aitken-extrapolated value is returned. Monotone samples whose
/// differences do not shrink are reported as the matching infinity.
pub fn probe_limit(values: &[f64], rel: f64, abs: f64) -> Result<Extended, String> {
    let n = values.len();
    if n < 3 {
        return Err("need at least three samples".into());
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(format!("NaN sample in {values:?}"));
    }
    let last = values[n - 1];
    if last.is_infinite() {
        let monotone = values.windows(2).all(|w| if last > 0.0 { w[1] >= w[0] } else { w[1] <= w[0] });
        if monotone {
            return Ok(Extended::from_f64(last));
        }
        return Err(format!("non-monotone samples reaching infinity: {values:?}"));
    }
    if values.iter().any(|v| v.is_infinite()) {
        return Err(format!("infinite sample before a finite one: {values:?}"));
    }
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let dl = d[d.len() - 1];
    let dp = d[d.len() - 2];
    let prev = values[n - 2];
    let ratio = if dp != 0.0 { dl / dp } else { 0.0 };
    let geometric = dl * dp > 0.0 && ratio.abs() < 0.9;
    let aitken = if geometric { last + dl * ratio / (1.0 - ratio) } else { last };
    if (last.abs() <= abs && prev.abs() <= abs) || dl == 0.0 {
        return Ok(Extended::Finite(last));
    }
    if dl.abs() <= rel * last.abs() {
        return Ok(Extended::Finite(aitken));
    }
    if geometric {
        // require the earlier differences to shrink as well
        let shrinking = d.windows(2).rev().take(2).all(|w| w[1].abs() < w[0].abs() && w[1] * w[0] > 0.0);
        if shrinking {
            return Ok(Extended::Finite(aitken));
        }
    }
    let same_sign = d.iter().rev().take(3).all(|x| x.signum() == dl.signum() && *x != 0.0);
    let growing = d.windows(2).rev().take(2).all(|w| w[1].abs() >= 0.95 * w[0].abs());
    if same_sign && growing {
        return Ok(if dl > 0.0 { Extended::PosInf } else { Extended::NegInf });
    }
    Err(format!("samples did not stabilize: {values:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_tail_is_extrapolated() {
        let v: Vec<f64> = (0..5).map(|k| 2.0 + 0.3 * 0.1f64.powi(k)).collect();
        let l = probe_limit(&v, 1e-12, 1e-300).unwrap().finite().unwrap();
        assert!((l - 2.0).abs() < 1e-14);
    }

    #[test]
    fn power_divergence() {
        let v: Vec<f64> = (1..6).map(|k| -(10f64.powi(k))).collect();
        assert_eq!(probe_limit(&v, 1e-4, 1e-10).unwrap(), Extended::NegInf);
    }

    #[test]
    fn logarithmic_divergence() {
        let v: Vec<f64> = (1..6).map(|k| (10f64.powi(k)).ln()).collect();
        assert_eq!(probe_limit(&v, 1e-4, 1e-10).unwrap(), Extended::PosInf);
    }

    #[test]
    fn oscillation_rejected() {
        assert!(probe_limit(&[1.0, -1.0, 1.0, -1.0], 1e-4, 1e-10).is_err());
    }

    #[test]
    fn tiny_values_are_zero() {
        assert_eq!(probe_limit(&[1e-11, 1e-12, 1e-13], 1e-4, 1e-10).unwrap(), Extended::Finite(1e-13));
    }
}
