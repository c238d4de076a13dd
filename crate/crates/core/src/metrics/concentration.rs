use serde::Serialize;

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Population shares `p` and contributor shares `m` over the same regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationInput {
    p: Vec<f64>,
    m: Vec<f64>,
}

impl ConcentrationInput {
    pub fn new(p: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        if p.len() != m.len() {
            return Err(Error::validation(format!(
                "population shares ({}) and contributor shares ({}) differ in length",
                p.len(),
                m.len()
            )));
        }
        if p.len() < 2 {
            return Err(Error::validation("concentration needs at least two regions"));
        }
        if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::validation(format!("population share {x} is not positive")));
        }
        if let Some(x) = m.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::validation(format!("contributor share {x} is negative")));
        }
        for (name, v) in [("population", &p), ("contributor", &m)] {
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::validation(format!("{name} shares sum to {s}, not 1")));
            }
        }
        Ok(ConcentrationInput { p, m })
    }

    /// Normalises raw populations and contributor counts into shares.
    pub fn from_counts(populations: &[f64], counts: &[f64]) -> Result<Self> {
        let tp: f64 = populations.iter().sum();
        let tm: f64 = counts.iter().sum();
        if !(tm > 0.0) {
            return Err(Error::validation("no contributors to distribute"));
        }
        if !(tp > 0.0) {
            return Err(Error::validation("total population is not positive"));
        }
        Self::new(
            populations.iter().map(|x| x / tp).collect(),
            counts.iter().map(|x| x / tm).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn p_min(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationResult {
    pub gc: f64,
    pub gc_max: f64,
    pub agc: f64,
}

/// Σ|m_i − p_i|.
///
/// Evaluated as twice the sum of positive parts, which equals the absolute
/// sum when both share vectors sum to one and keeps the single-region
/// extreme exact: all mass on region j gives 2(1 − p_j).
pub fn gc(input: &ConcentrationInput) -> f64 {
    let excess: f64 = input
        .p
        .iter()
        .zip(&input.m)
        .map(|(p, m)| (m - p).max(0.0))
        .sum();
    2.0 * excess
}

pub fn agc(input: &ConcentrationInput) -> ConcentrationResult {
    let gc_max = 2.0 * (1.0 - input.p_min());
    // Share sums are only checked to a tolerance, so rounding may overshoot
    // the bound by a hair.
    let gc = gc(input).min(gc_max);
    ConcentrationResult {
        gc,
        gc_max,
        agc: gc / gc_max,
    }
}
