//! Known-variance and information-criterion penalty shapes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    Aic,
    Bic,
    BirgeMassart,
    Lebarbier,
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(PenaltyKind::Aic),
            "bic" => Ok(PenaltyKind::Bic),
            "bm" | "birge-massart" | "birgemassart" => Ok(PenaltyKind::BirgeMassart),
            "lebarbier" => Ok(PenaltyKind::Lebarbier),
            other => Err(Error::Config(format!("unknown penalty kind `{other}`"))),
        }
    }
}

/// Arguments for [`classical_penalty`]. Each kind reads only what it needs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyArgs {
    pub dim: Option<usize>,
    pub n: Option<f64>,
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub sigma2: Option<f64>,
}

fn need<T>(v: Option<T>, what: &str, kind: PenaltyKind) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("{kind:?} penalty requires `{what}`")))
}

/// AIC `2d`, BIC `d ln n`, Birge-Massart `4d[4 + ln(p/d)] sigma2` and
/// Lebarbier `(q+1)(2 ln(n/(q+1)) + 5) sigma2`.
pub fn classical_penalty(kind: PenaltyKind, args: &PenaltyArgs) -> Result<f64> {
    match kind {
        PenaltyKind::Aic => Ok(2.0 * need(args.dim, "dim", kind)? as f64),
        PenaltyKind::Bic => {
            let d = need(args.dim, "dim", kind)? as f64;
            Ok(d * need(args.n, "n", kind)?.ln())
        }
        PenaltyKind::BirgeMassart => {
            let d = need(args.dim, "dim", kind)?;
            let p = need(args.p, "p", kind)?;
            let s2 = need(args.sigma2, "sigma2", kind)?;
            if d == 0 {
                return Ok(0.0);
            }
            Ok(4.0 * d as f64 * (4.0 + (p as f64 / d as f64).ln()) * s2)
        }
        PenaltyKind::Lebarbier => {
            let q1 = (need(args.q, "q", kind)? + 1) as f64;
            let n = need(args.n, "n", kind)?;
            let s2 = need(args.sigma2, "sigma2", kind)?;
            Ok(q1 * (2.0 * (n / q1).ln() + 5.0) * s2)
        }
    }
}
