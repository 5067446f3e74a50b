use alloc::format;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positive-definite kernels used to compare high-dimensional outcomes.
/// A `gamma` of `None` means `1 / dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `aᵀb`
    Linear,
    /// `(γ aᵀb + 1)³`
    Polynomial {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    /// `exp(−γ ‖a − b‖²)`
    Rbf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    /// `aᵀb / (‖a‖ ‖b‖)`
    Cosine,
}

pub const POLYNOMIAL_DEGREE: i32 = 3;

impl Kernel {
    pub const fn polynomial() -> Self {
        Kernel::Polynomial { gamma: None }
    }

    pub const fn rbf() -> Self {
        Kernel::Rbf { gamma: None }
    }

    /// Linear, polynomial, rbf and cosine with default parameters.
    pub const fn battery() -> [Kernel; 4] {
        [
            Kernel::Linear,
            Kernel::polynomial(),
            Kernel::rbf(),
            Kernel::Cosine,
        ]
    }

    pub const fn name(&self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Polynomial { .. } => "polynomial",
            Kernel::Rbf { .. } => "rbf",
            Kernel::Cosine => "cosine",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Polynomial { gamma: Some(g) } | Kernel::Rbf { gamma: Some(g) }
                if !(*g > 0.0) =>
            {
                Err(Error::Config(format!(
                    "kernel gamma must be positive, got {g}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn gamma(gamma: Option<f64>, dim: usize) -> f64 {
        gamma.unwrap_or(1.0 / dim as f64)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Polynomial { gamma: Some(g) } | Kernel::Rbf { gamma: Some(g) } => {
                write!(f, "{}(gamma={g})", self.name())
            }
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    /// Accepts `linear`, `cosine`, `polynomial`, `rbf`, or `rbf:<gamma>` / `polynomial:<gamma>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, gamma) = match s.split_once(':') {
            Some((n, g)) => {
                let g: f64 = g
                    .parse()
                    .map_err(|_| Error::Config(format!("bad kernel gamma in `{s}`")))?;
                (n, Some(g))
            }
            None => (s, None),
        };
        let k = match (name, gamma) {
            ("linear", None) => Kernel::Linear,
            ("cosine", None) => Kernel::Cosine,
            ("polynomial", gamma) => Kernel::Polynomial { gamma },
            ("rbf", gamma) => Kernel::Rbf { gamma },
            _ => return Err(Error::Config(format!("unknown kernel `{s}`"))),
        };
        k.validate()?;
        Ok(k)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Input(format!(
            "kernel arguments have dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `k(a, b)`.
pub fn kernel_eval(kernel: &Kernel, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let dim = a.len();
    Ok(match *kernel {
        Kernel::Linear => dot(a, b),
        Kernel::Polynomial { gamma } => libm::pow(
            Kernel::gamma(gamma, dim) * dot(a, b) + 1.0,
            f64::from(POLYNOMIAL_DEGREE),
        ),
        Kernel::Rbf { gamma } => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            libm::exp(-Kernel::gamma(gamma, dim) * d2)
        }
        Kernel::Cosine => {
            let (na, nb) = (libm::sqrt(dot(a, a)), libm::sqrt(dot(b, b)));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::Domain(
                    "cosine kernel is undefined for a zero vector".into(),
                ));
            }
            dot(a, b) / (na * nb)
        }
    })
}

/// Squared RKHS distance `k(a,a) + k(b,b) − 2k(a,b)` and whether rounding
/// pushed it below zero (in which case 0 is returned).
pub fn kte_distance_checked(kernel: &Kernel, a: &[f64], b: &[f64]) -> Result<(f64, bool)> {
    let d = (kernel_eval(kernel, a, a)? + kernel_eval(kernel, b, b)?)
        - 2.0 * kernel_eval(kernel, a, b)?;
    if d < 0.0 {
        Ok((0.0, true))
    } else {
        Ok((d, false))
    }
}

/// Kernelized treatment effect between two outcomes.
pub fn kte_distance(kernel: &Kernel, a: &[f64], b: &[f64]) -> Result<f64> {
    kte_distance_checked(kernel, a, b).map(|(d, _)| d)
}
