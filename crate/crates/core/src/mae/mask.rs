use serde::{Deserialize, Serialize};

use crate::nnkit::Rng;
use crate::{Error, Result};

/// Visible/masked split of the patch tokens of one image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub visible: Vec<usize>,
    pub masked: Vec<usize>,
}

impl MaskPlan {
    pub fn all_visible(t: usize) -> Self {
        MaskPlan {
            visible: (0..t).collect(),
            masked: Vec::new(),
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.visible.len() + self.masked.len()
    }

    /// Checks sortedness, disjointness and coverage of `[0, t)`.
    pub fn validate(&self, t: usize) -> Result<()> {
        let sorted = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        let mut seen = vec![false; t];
        let mut ok = sorted(&self.visible) && sorted(&self.masked) && self.num_tokens() == t;
        for &i in self.visible.iter().chain(&self.masked) {
            if !ok || i >= t || seen[i] {
                ok = false;
                break;
            }
            seen[i] = true;
        }
        if !ok {
            return Err(Error::Contract(format!("mask plan is not a sorted partition of 0..{t}")));
        }
        Ok(())
    }

    /// For each token position, its row in `visible ++ masked` order.
    pub fn restore_index(&self) -> Vec<usize> {
        let mut idx = vec![0; self.num_tokens()];
        for (row, &t) in self.visible.iter().chain(&self.masked).enumerate() {
            idx[t] = row;
        }
        idx
    }
}

/// Uniformly random split keeping `round(t·(1-ratio))` tokens visible.
pub fn random_mask(t: usize, ratio: f64, rng: &mut Rng) -> Result<MaskPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Contract(format!("mask ratio {ratio} must lie in (0,1)")));
    }
    let keep = ((t as f64) * (1.0 - ratio)).round() as usize;
    let mut visible = rng.choose_indices(t, keep.min(t));
    visible.sort_unstable();
    let mut is_visible = vec![false; t];
    for &i in &visible {
        is_visible[i] = true;
    }
    let masked = (0..t).filter(|&i| !is_visible[i]).collect();
    Ok(MaskPlan { visible, masked })
}
