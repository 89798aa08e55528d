//! Weighting schemes and their parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub const DEFAULT_MW_DELTA: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Ipw,
    Att,
    Atc,
    Trim,
    Trunc,
    Ow,
    Mw,
    Ew,
    Bw,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Ipw => "IPW",
            SchemeKind::Att => "ATT",
            SchemeKind::Atc => "ATC",
            SchemeKind::Trim => "TRIM",
            SchemeKind::Trunc => "TRUNC",
            SchemeKind::Ow => "OW",
            SchemeKind::Mw => "MW",
            SchemeKind::Ew => "EW",
            SchemeKind::Bw => "BW",
        }
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "IPW" | "ATE" => SchemeKind::Ipw,
            "ATT" => SchemeKind::Att,
            "ATC" => SchemeKind::Atc,
            "TRIM" => SchemeKind::Trim,
            "TRUNC" => SchemeKind::Trunc,
            "OW" => SchemeKind::Ow,
            "MW" => SchemeKind::Mw,
            "EW" => SchemeKind::Ew,
            "BW" => SchemeKind::Bw,
            _ => return Err(Error::UnknownScheme(s.to_owned())),
        })
    }
}

/// Optional parameters as supplied by a caller, before validation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SchemeParams {
    pub alpha: Option<f64>,
    pub nu: Option<f64>,
    pub delta: Option<f64>,
}

/// A selection function g with its parameters. Construct through
/// [`validate_scheme`] or [`FromStr`] to get the domain checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    Ipw,
    Att,
    Atc,
    Trim { alpha: f64 },
    Trunc { alpha: f64 },
    Ow,
    Mw { delta: f64 },
    Ew,
    Bw { nu: f64 },
}

fn check_alpha(a: f64) -> Result<f64> {
    if a > 0.0 && a < 0.5 {
        Ok(a)
    } else {
        Err(Error::ParamOutOfRange {
            param: "alpha",
            value: a,
            range: "(0, 0.5)",
        })
    }
}

pub fn validate_scheme(kind: SchemeKind, params: SchemeParams) -> Result<WeightScheme> {
    let name = kind.name();
    let reject = |present: Option<f64>, param: &'static str| match present {
        Some(_) => Err(Error::ExtraneousParam {
            scheme: name,
            param,
        }),
        None => Ok(()),
    };
    let need = |present: Option<f64>, param: &'static str| {
        present.ok_or(Error::MissingParam {
            scheme: name,
            param,
        })
    };
    match kind {
        SchemeKind::Trim | SchemeKind::Trunc => {
            reject(params.nu, "nu")?;
            reject(params.delta, "delta")?;
            let alpha = check_alpha(need(params.alpha, "alpha")?)?;
            Ok(if kind == SchemeKind::Trim {
                WeightScheme::Trim { alpha }
            } else {
                WeightScheme::Trunc { alpha }
            })
        }
        SchemeKind::Bw => {
            reject(params.alpha, "alpha")?;
            reject(params.delta, "delta")?;
            let nu = need(params.nu, "nu")?;
            if !(nu >= 2.0 && nu.is_finite()) {
                return Err(Error::ParamOutOfRange {
                    param: "nu",
                    value: nu,
                    range: "[2, inf)",
                });
            }
            Ok(WeightScheme::Bw { nu })
        }
        SchemeKind::Mw => {
            reject(params.alpha, "alpha")?;
            reject(params.nu, "nu")?;
            let delta = params.delta.unwrap_or(DEFAULT_MW_DELTA);
            if !(delta > 0.0 && delta < 0.5) {
                return Err(Error::ParamOutOfRange {
                    param: "delta",
                    value: delta,
                    range: "(0, 0.5)",
                });
            }
            Ok(WeightScheme::Mw { delta })
        }
        _ => {
            reject(params.alpha, "alpha")?;
            reject(params.nu, "nu")?;
            reject(params.delta, "delta")?;
            Ok(match kind {
                SchemeKind::Ipw => WeightScheme::Ipw,
                SchemeKind::Att => WeightScheme::Att,
                SchemeKind::Atc => WeightScheme::Atc,
                SchemeKind::Ow => WeightScheme::Ow,
                SchemeKind::Ew => WeightScheme::Ew,
                _ => unreachable!(),
            })
        }
    }
}

impl WeightScheme {
    pub fn kind(&self) -> SchemeKind {
        match self {
            WeightScheme::Ipw => SchemeKind::Ipw,
            WeightScheme::Att => SchemeKind::Att,
            WeightScheme::Atc => SchemeKind::Atc,
            WeightScheme::Trim { .. } => SchemeKind::Trim,
            WeightScheme::Trunc { .. } => SchemeKind::Trunc,
            WeightScheme::Ow => SchemeKind::Ow,
            WeightScheme::Mw { .. } => SchemeKind::Mw,
            WeightScheme::Ew => SchemeKind::Ew,
            WeightScheme::Bw { .. } => SchemeKind::Bw,
        }
    }

    /// MW with the default smoothing band.
    pub fn mw() -> Self {
        WeightScheme::Mw {
            delta: DEFAULT_MW_DELTA,
        }
    }

    pub fn estimand_label(&self) -> &'static str {
        match self {
            WeightScheme::Ipw => "ATE",
            WeightScheme::Att => "ATT",
            WeightScheme::Atc => "ATC",
            WeightScheme::Trim { .. } => "OSATE",
            WeightScheme::Trunc { .. } => "truncated-population WATE",
            _ => "equipoise",
        }
    }

    /// (a, b) with g = a + b·e, for the three affine schemes.
    pub fn affine_ab(&self) -> Option<(f64, f64)> {
        match self {
            WeightScheme::Ipw => Some((1.0, 0.0)),
            WeightScheme::Att => Some((0.0, 1.0)),
            WeightScheme::Atc => Some((1.0, -1.0)),
            _ => None,
        }
    }

    /// True when the weights are differentiable in β, so a sandwich exists.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, WeightScheme::Trim { .. } | WeightScheme::Trunc { .. })
    }

    pub fn is_equipoise(&self) -> bool {
        matches!(
            self,
            WeightScheme::Ow | WeightScheme::Mw { .. } | WeightScheme::Ew | WeightScheme::Bw { .. }
        )
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightScheme::Trim { alpha } => write!(f, "TRIM({alpha})"),
            WeightScheme::Trunc { alpha } => write!(f, "TRUNC({alpha})"),
            WeightScheme::Bw { nu } => write!(f, "BW({nu})"),
            WeightScheme::Mw { delta } if *delta != DEFAULT_MW_DELTA => write!(f, "MW({delta})"),
            other => f.write_str(other.kind().name()),
        }
    }
}

/// Accepts `OW`, `TRIM(0.1)`, `BW(11)`, `MW(0.002)` and so on.
impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.find('(') {
            Some(open) => {
                let close = s
                    .strip_suffix(')')
                    .ok_or_else(|| Error::UnknownScheme(s.to_owned()))?;
                let arg: f64 = close[open + 1..]
                    .trim()
                    .parse()
                    .map_err(|_| Error::UnknownScheme(s.to_owned()))?;
                (&s[..open], Some(arg))
            }
            None => (s, None),
        };
        let kind: SchemeKind = head.parse()?;
        let mut params = SchemeParams::default();
        match kind {
            SchemeKind::Trim | SchemeKind::Trunc => params.alpha = arg,
            SchemeKind::Bw => params.nu = arg,
            SchemeKind::Mw => params.delta = arg,
            _ if arg.is_some() => {
                return Err(Error::ExtraneousParam {
                    scheme: kind.name(),
                    param: "argument",
                })
            }
            _ => {}
        }
        validate_scheme(kind, params)
    }
}

impl Serialize for WeightScheme {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}
