use crate::{Error, Result};

/// Intersection and marginal sizes of a predicted and a reference mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OverlapCounts {
    pub intersection: u64,
    pub pred: u64,
    pub gt: u64,
}

impl OverlapCounts {
    pub fn from_binary(pred: &[u16], gt: &[u16]) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::shape(
                "overlap",
                format!("prediction has {} pixels, reference {}", pred.len(), gt.len()),
            ));
        }
        let mut c = OverlapCounts::default();
        for (&p, &g) in pred.iter().zip(gt) {
            if p > 1 || g > 1 {
                return Err(Error::Contract("overlap metrics need binary masks".into()));
            }
            c.add(p == 1, g == 1);
        }
        Ok(c)
    }

    #[inline]
    pub fn add(&mut self, p: bool, g: bool) {
        self.intersection += u64::from(p && g);
        self.pred += u64::from(p);
        self.gt += u64::from(g);
    }

    pub fn merge(&mut self, other: &OverlapCounts) {
        self.intersection += other.intersection;
        self.pred += other.pred;
        self.gt += other.gt;
    }

    /// Both masks empty.
    pub fn is_empty(&self) -> bool {
        self.pred == 0 && self.gt == 0
    }

    /// `2|P∩G| / (|P|+|G|)`; 1 when both are empty.
    pub fn dice(&self) -> f64 {
        if self.is_empty() {
            1.0
        } else {
            2.0 * self.intersection as f64 / (self.pred + self.gt) as f64
        }
    }

    /// `|P∩G| / |P∪G|`; 1 when both are empty.
    pub fn iou(&self) -> f64 {
        if self.is_empty() {
            1.0
        } else {
            self.intersection as f64 / (self.pred + self.gt - self.intersection) as f64
        }
    }
}

pub fn dice_score(pred: &[u16], gt: &[u16]) -> Result<f64> {
    Ok(OverlapCounts::from_binary(pred, gt)?.dice())
}

pub fn iou_score(pred: &[u16], gt: &[u16]) -> Result<f64> {
    Ok(OverlapCounts::from_binary(pred, gt)?.iou())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        // 2x2 grid, row-major: P = {(0,0),(0,1)}, G = {(0,1),(1,1)}
        let p = [1, 1, 0, 0];
        let g = [0, 1, 0, 1];
        assert_eq!(dice_score(&p, &g).unwrap(), 0.5);
        assert_eq!(iou_score(&p, &g).unwrap(), 1.0 / 3.0);
        assert_eq!(dice_score(&g, &g).unwrap(), 1.0);
        assert_eq!(dice_score(&[0, 0, 0, 0], &g).unwrap(), 0.0);
        assert_eq!(dice_score(&[0, 0], &[0, 0]).unwrap(), 1.0);
        assert!(matches!(dice_score(&[2, 0], &[0, 0]), Err(Error::Contract(_))));
    }
}
