//! Overlap metrics, per-region reports and stability summaries.

mod overlap;
mod region;
mod stability;

pub use overlap::{dice_score, iou_score, OverlapCounts};
pub use region::{
    multiclass_report, region_preset, score_volumes, MulticlassReport, RegionAccumulator, RegionReport, Scoring,
    MRBRAINS_REGIONS, NACC_REGIONS, SKULL_STRIP_REGIONS,
};
pub use stability::{stability_summary, StabilitySummary};
