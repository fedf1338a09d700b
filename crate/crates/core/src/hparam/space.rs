use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Cam,
    HaS,
    ACoL,
    Spg,
    Adl,
    CutMix,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Cam,
        Method::HaS,
        Method::ACoL,
        Method::Spg,
        Method::Adl,
        Method::CutMix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cam => "CAM",
            Method::HaS => "HaS",
            Method::ACoL => "ACoL",
            Method::Spg => "SPG",
            Method::Adl => "ADL",
            Method::CutMix => "CutMix",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Sampling distribution of one hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// `exp(Uniform[ln lo, ln hi])`.
    LogUniform {
        lo: f64,
        hi: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Uniform choice among integer values.
    Categorical(Vec<i64>),
    /// `Uniform[v, hi]` where `v` is the already sampled value of `lower`.
    DependentUniform {
        lower: &'static str,
        hi: f64,
    },
    /// `1 / Uniform(0, scale] - offset`.
    ReciprocalUniform {
        scale: f64,
        offset: f64,
    },
}

/// Sampled value: integers for categorical dimensions, reals otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
}

impl ParamValue {
    pub fn as_f64(self) -> f64 {
        match self {
            ParamValue::Int(v) => v as f64,
            ParamValue::Real(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: &'static str,
    pub distribution: Distribution,
}

impl Dimension {
    const fn new(name: &'static str, distribution: Distribution) -> Self {
        Self { name, distribution }
    }
}

pub const LEARNING_RATE: &str = "learning_rate";
pub const SCOREMAP_RESOLUTION: &str = "scoremap_resolution";

/// Search space of one method: the shared learning-rate and resolution
/// dimensions followed by the method's own.
#[derive(Debug, Clone, PartialEq)]
pub struct HparamSpace {
    method: Method,
    dimensions: Vec<Dimension>,
}

fn unit(name: &'static str) -> Dimension {
    Dimension::new(name, Distribution::Uniform { lo: 0.0, hi: 1.0 })
}

fn upper_of(name: &'static str, lower: &'static str) -> Dimension {
    Dimension::new(name, Distribution::DependentUniform { lower, hi: 1.0 })
}

impl HparamSpace {
    pub fn for_method(method: Method) -> Self {
        let mut dimensions = vec![
            Dimension::new(LEARNING_RATE, Distribution::LogUniform { lo: 1e-5, hi: 1.0 }),
            Dimension::new(SCOREMAP_RESOLUTION, Distribution::Categorical(vec![14, 28])),
        ];
        match method {
            Method::Cam => {}
            Method::HaS => {
                dimensions.push(unit("drop_rate"));
                // Continuous; turning it into a grid size is the trainer's job.
                dimensions.push(unit("drop_area"));
            }
            Method::ACoL => dimensions.push(unit("erasing_threshold")),
            Method::Spg => {
                for (lower, upper) in [
                    ("threshold_low_b1", "threshold_high_b1"),
                    ("threshold_low_b2", "threshold_high_b2"),
                    ("threshold_low_c", "threshold_high_c"),
                ] {
                    dimensions.push(unit(lower));
                    dimensions.push(upper_of(upper, lower));
                }
            }
            Method::Adl => {
                dimensions.push(unit("drop_rate"));
                dimensions.push(unit("erasing_threshold"));
            }
            Method::CutMix => {
                dimensions.push(Dimension::new(
                    "size_prior",
                    Distribution::ReciprocalUniform {
                        scale: 2.0,
                        offset: 0.5,
                    },
                ));
                dimensions.push(unit("mix_rate"));
            }
        }
        Self { method, dimensions }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    /// Whether `value` lies in the declared support of dimension `name`,
    /// given the other values of the same trial.
    pub fn in_support(&self, name: &str, value: ParamValue, trial: &impl Fn(&str) -> Option<ParamValue>) -> bool {
        let Some(dim) = self.dimension(name) else {
            return false;
        };
        match (&dim.distribution, value) {
            (Distribution::LogUniform { lo, hi } | Distribution::Uniform { lo, hi }, ParamValue::Real(v)) => {
                (*lo..=*hi).contains(&v)
            }
            (Distribution::Categorical(options), ParamValue::Int(v)) => options.contains(&v),
            (Distribution::DependentUniform { lower, hi }, ParamValue::Real(v)) => {
                trial(lower).is_some_and(|lo| (lo.as_f64()..=*hi).contains(&v))
            }
            // 1/u - offset over u in (0, scale] spans [1/scale - offset, inf).
            (Distribution::ReciprocalUniform { scale, offset }, ParamValue::Real(v)) => {
                v.is_finite() && v >= 1.0 / scale - offset
            }
            _ => false,
        }
    }
}
