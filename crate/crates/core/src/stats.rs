use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for a single value.
    pub std: f64,
    /// `100 std / |mean|`, absent when the mean is 0.
    pub rsd_percent: Option<f64>,
    pub count: usize,
}

impl Summary {
    /// A single observation carries no spread information.
    pub fn is_degenerate(&self) -> bool {
        self.count == 1
    }
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let rsd_percent = (mean != 0.0).then(|| 100.0 * std / mean.abs());
    Ok(Summary {
        mean,
        std,
        rsd_percent,
        count: n,
    })
}
