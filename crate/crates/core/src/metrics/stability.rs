use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean and population standard deviation of a score across a sweep axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub axis: String,
    pub points: Vec<(String, f64)>,
    pub mean: f64,
    pub std: f64,
}

pub fn stability_summary(axis: &str, points: &[(String, f64)]) -> Result<StabilitySummary> {
    if points.len() < 2 {
        return Err(Error::Data(format!(
            "a stability summary needs at least 2 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let var = points.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
    Ok(StabilitySummary {
        axis: axis.to_string(),
        points: points.to_vec(),
        mean,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<(String, f64)> {
        v.iter().enumerate().map(|(i, &x)| (i.to_string(), x)).collect()
    }

    #[test]
    fn summaries() {
        assert_eq!(stability_summary("k", &pts(&[3.0, 3.0, 3.0])).unwrap().std, 0.0);
        let s = stability_summary("k", &pts(&[1.0, 4.0])).unwrap();
        assert_eq!((s.mean, s.std), (2.5, 1.5));
        assert!(stability_summary("k", &pts(&[1.0])).is_err());
    }
}
