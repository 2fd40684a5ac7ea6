use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the next temperature is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TemperSchedule {
    /// Strictly increasing from 0 to 1.
    Fixed { temperatures: Vec<f64> },
    /// Each increment keeps the conditional ESS at `ess_fraction · K`.
    Adaptive {
        #[serde(default = "default_fraction")]
        ess_fraction: f64,
    },
}

fn default_fraction() -> f64 {
    0.5
}

impl Default for TemperSchedule {
    fn default() -> Self {
        TemperSchedule::Adaptive { ess_fraction: default_fraction() }
    }
}

impl TemperSchedule {
    pub fn fixed(temperatures: Vec<f64>) -> Result<Self> {
        let s = TemperSchedule::Fixed { temperatures };
        s.validate(2)?;
        Ok(s)
    }

    /// `n` evenly spaced temperatures from 0 to 1 inclusive.
    pub fn linear(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSchedule("need at least two temperatures".into()));
        }
        let mut t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        t[n - 1] = 1.0;
        Self::fixed(t)
    }

    /// 0 followed by `n - 1` geometrically spaced temperatures ending at 1.
    pub fn geometric(n: usize, first: f64) -> Result<Self> {
        if n < 2 || !(first > 0.0 && first <= 1.0) {
            return Err(Error::InvalidSchedule("geometric schedule needs n ≥ 2 and 0 < first ≤ 1".into()));
        }
        let mut t = vec![0.0];
        if n == 2 {
            t.push(1.0);
        } else {
            let ratio = (1.0 / first).powf(1.0 / (n - 2) as f64);
            t.extend((0..n - 1).map(|i| first * ratio.powi(i as i32)));
            t[n - 1] = 1.0;
        }
        Self::fixed(t)
    }

    pub fn adaptive(ess_fraction: f64) -> Self {
        TemperSchedule::Adaptive { ess_fraction }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            TemperSchedule::Fixed { temperatures: t } => {
                if t.len() < 2 {
                    return Err(Error::InvalidSchedule("need at least two temperatures".into()));
                }
                if t[0] != 0.0 || *t.last().unwrap() != 1.0 {
                    return Err(Error::InvalidSchedule("temperatures must start at 0 and end at 1".into()));
                }
                if t.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidSchedule("temperatures must be strictly increasing".into()));
                }
                Ok(())
            }
            TemperSchedule::Adaptive { ess_fraction } => {
                let ess_min = ess_fraction * k as f64;
                if !(ess_min > 1.0 && *ess_fraction <= 1.0) {
                    return Err(Error::InvalidSchedule(format!("adaptive ESS target {ess_min} must lie in (1, {k}]")));
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_validation() {
        assert!(TemperSchedule::fixed(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(TemperSchedule::fixed(vec![0.1, 1.0]).is_err());
        assert!(TemperSchedule::fixed(vec![0.0, 0.9]).is_err());
        assert!(TemperSchedule::fixed(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TemperSchedule::fixed(vec![1.0]).is_err());
    }

    #[test]
    fn adaptive_validation() {
        assert!(TemperSchedule::adaptive(0.5).validate(64).is_ok());
        assert!(TemperSchedule::adaptive(1.0).validate(64).is_ok());
        assert!(TemperSchedule::adaptive(0.01).validate(64).is_err());
        assert!(TemperSchedule::adaptive(1.5).validate(64).is_err());
    }

    #[test]
    fn generated_ladders_are_valid() {
        for n in 2..30 {
            TemperSchedule::linear(n).unwrap();
            TemperSchedule::geometric(n, 1e-4).unwrap();
        }
    }

    #[test]
    fn toml_shape() {
        let s: TemperSchedule = toml::from_str("mode = \"fixed\"\ntemperatures = [0.0, 0.25, 1.0]").unwrap();
        assert_eq!(s, TemperSchedule::Fixed { temperatures: vec![0.0, 0.25, 1.0] });
        let a: TemperSchedule = toml::from_str("mode = \"adaptive\"").unwrap();
        assert_eq!(a, TemperSchedule::adaptive(0.5));
    }
}
