use serde::{Deserialize, Serialize};

use super::LabelMap;
use crate::{Error, Result};

/// Clamped linear ramp from brain coverage to loss weight:
/// `w = max(w_min, min(1, coverage / tau))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageWeighting {
    pub tau: f64,
    pub w_min: f64,
}

impl Default for CoverageWeighting {
    fn default() -> Self {
        CoverageWeighting { tau: 0.2, w_min: 0.05 }
    }
}

impl CoverageWeighting {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(0.0..=1.0).contains(&self.w_min) {
            return Err(Error::Config(format!(
                "coverage weighting needs tau > 0 and w_min in [0,1], got tau={} w_min={}",
                self.tau, self.w_min
            )));
        }
        Ok(())
    }

    pub fn weight_for_coverage(&self, coverage: f64) -> f64 {
        (coverage / self.tau).min(1.0).max(self.w_min)
    }
}

pub fn brain_coverage(mask: &LabelMap) -> Result<f64> {
    if !mask.is_binary() {
        return Err(Error::Contract("brain mask must be binary (values 0/1)".into()));
    }
    let on = mask.data.iter().filter(|&&v| v == 1).count();
    Ok(on as f64 / mask.data.len() as f64)
}

pub fn brain_coverage_weight(mask: &LabelMap, params: &CoverageWeighting) -> Result<f32> {
    Ok(params.weight_for_coverage(brain_coverage(mask)?) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(on: usize) -> LabelMap {
        let mut data = vec![0u16; 224 * 224];
        data[..on].fill(1);
        LabelMap::new(224, 224, data).unwrap()
    }

    #[test]
    fn ramp_values() {
        let p = CoverageWeighting::default();
        assert_eq!(brain_coverage_weight(&mask(224 * 224), &p).unwrap(), 1.0);
        assert_eq!(brain_coverage_weight(&mask(0), &p).unwrap(), 0.05);
        assert_eq!(p.weight_for_coverage(0.1), 0.5);
    }

    #[test]
    fn non_binary_rejected() {
        let mut m = mask(3);
        m.data[10] = 2;
        assert!(matches!(
            brain_coverage_weight(&m, &CoverageWeighting::default()),
            Err(Error::Contract(_))
        ));
    }
}
