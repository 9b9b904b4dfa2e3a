//! Least-squares power-law fits on log–log data.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub half_width: f64,
    pub points: usize,
}

impl SlopeFit {
    pub fn low(&self) -> f64 {
        self.slope - self.half_width
    }

    pub fn high(&self) -> f64 {
        self.slope + self.half_width
    }
}

/// Fits `log e = slope · log h + intercept`. Needs at least three points; the
/// interval uses Student's t with `n − 2` degrees of freedom.
pub fn fit_loglog(h: &[f64], e: &[f64]) -> Result<SlopeFit> {
    let n = h.len().min(e.len());
    if n < 3 {
        return Err(Error::InsufficientPoints { usable: n });
    }
    let x: Vec<f64> = h[..n].iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e[..n].iter().map(|v| v.ln()).collect();
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidInput("step grid needs at least two distinct values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = nf - 2.0;
    let se = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::InvalidInput(e.to_string()))?.inverse_cdf(0.975);
    Ok(SlopeFit { slope, intercept, half_width: t * se, points: n })
}
