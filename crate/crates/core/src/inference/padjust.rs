//! Multiple-testing adjustment of p-values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PAdjust {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "bonferroni")]
    Bonferroni,
    #[serde(rename = "holm")]
    Holm,
    #[serde(rename = "BH")]
    BH,
    #[serde(rename = "BY")]
    BY,
}

impl PAdjust {
    pub fn id(self) -> &'static str {
        match self {
            PAdjust::None => "none",
            PAdjust::Bonferroni => "bonferroni",
            PAdjust::Holm => "holm",
            PAdjust::BH => "BH",
            PAdjust::BY => "BY",
        }
    }
}

impl std::str::FromStr for PAdjust {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PAdjust::None),
            "bonferroni" => Ok(PAdjust::Bonferroni),
            "holm" => Ok(PAdjust::Holm),
            "bh" | "fdr" => Ok(PAdjust::BH),
            "by" => Ok(PAdjust::BY),
            _ => Err(Error::param(format!("unknown p-value adjustment '{s}'"))),
        }
    }
}

/// Adjusted p-values in input order. NaN entries are passed through and do
/// not count towards `m`.
pub fn p_adjust(p: &[f64], method: PAdjust) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !v.is_nan() && !(0.0..=1.0).contains(*v)) {
        return Err(Error::Inference(format!("p-value {bad} outside [0, 1]")));
    }
    let idx: Vec<usize> = (0..p.len()).filter(|&i| !p[i].is_nan()).collect();
    let m = idx.len();
    let mf = m as f64;
    let mut out = p.to_vec();
    if m == 0 {
        return Ok(out);
    }
    let mut order = idx.clone();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    match method {
        PAdjust::None => {}
        PAdjust::Bonferroni => {
            for &i in &idx {
                out[i] = (mf * p[i]).min(1.0);
            }
        }
        PAdjust::Holm => {
            let mut running = 0.0f64;
            for (r, &i) in order.iter().enumerate() {
                running = running.max(((mf - r as f64) * p[i]).min(1.0));
                out[i] = running;
            }
        }
        PAdjust::BH | PAdjust::BY => {
            let c = if method == PAdjust::BY { (1..=m).map(|k| 1.0 / k as f64).sum::<f64>() } else { 1.0 };
            let mut running = 1.0f64;
            for (r, &i) in order.iter().enumerate().rev() {
                running = running.min((c * mf * p[i] / (r + 1) as f64).min(1.0));
                out[i] = running;
            }
        }
    }
    Ok(out)
}
