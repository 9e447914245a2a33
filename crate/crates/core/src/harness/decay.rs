//! Exponential versus power-law fits of the remainder.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;

/// Fewest samples a decay fit accepts.
pub const MIN_DECAY_SAMPLES: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayModel {
    /// `log y` linear in `t`.
    #[serde(rename = "exp")]
    Exponential,
    /// `log y` linear in `log t`.
    Power,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub model: DecayModel,
    /// `−slope` of the requested model: `δ̃` or the power `s`.
    pub rate: f64,
    /// `R²` of the requested model.
    pub goodness: f64,
    pub exponential: LineFit,
    pub power: LineFit,
    pub window: (f64, f64),
    pub samples: usize,
    /// False when a later sample exceeds an earlier one by more than a
    /// factor of two.
    pub monotone: bool,
}

impl DecayReport {
    /// `R²(exp) − R²(power)`.
    pub fn exponential_advantage(&self) -> f64 {
        self.exponential.r_squared - self.power.r_squared
    }
}

fn line(points: &[(f64, f64)]) -> Result<LineFit> {
    let (slope, intercept, r_squared) =
        linear_fit(points).ok_or_else(|| Error::insufficient("degenerate decay fit"))?;
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Fit `values(times)` by both models; non-positive samples are skipped.
pub fn fit_decay(times: &[f64], values: &[f64], model: DecayModel) -> Result<DecayReport> {
    if times.len() != values.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    let mut pairs: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t > 0.0 && **v > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pairs.len() < MIN_DECAY_SAMPLES {
        return Err(Error::insufficient(format!(
            "decay fit needs {MIN_DECAY_SAMPLES} positive samples, got {}",
            pairs.len()
        )));
    }
    let exponential = line(&pairs.iter().map(|&(t, v)| (t, v.ln())).collect::<Vec<_>>())?;
    let power = line(&pairs.iter().map(|&(t, v)| (t.ln(), v.ln())).collect::<Vec<_>>())?;
    let chosen = match model {
        DecayModel::Exponential => exponential,
        DecayModel::Power => power,
    };
    let mut monotone = true;
    let mut smallest = f64::INFINITY;
    for &(_, v) in &pairs {
        if v > 2.0 * smallest {
            monotone = false;
        }
        smallest = smallest.min(v);
    }
    Ok(DecayReport {
        model,
        rate: -chosen.slope,
        goodness: chosen.r_squared,
        exponential,
        power,
        window: (pairs[0].0, pairs[pairs.len() - 1].0),
        samples: pairs.len(),
        monotone,
    })
}

/// One row per fit: `label,model,rate,goodness,r2_exp,r2_power,t_start,t_end,samples,monotone`.
pub fn write_slope_table<W: Write>(rows: &[(String, DecayReport)], mut w: W) -> Result<()> {
    writeln!(w, "label,model,rate,goodness,r2_exp,r2_power,t_start,t_end,samples,monotone")?;
    for (label, r) in rows {
        let model = match r.model {
            DecayModel::Exponential => "exp",
            DecayModel::Power => "power",
        };
        writeln!(
            w,
            "{label},{model},{:e},{:e},{:e},{:e},{},{},{},{}",
            r.rate, r.goodness, r.exponential.r_squared, r.power.r_squared, r.window.0, r.window.1, r.samples, r.monotone
        )?;
    }
    Ok(())
}
