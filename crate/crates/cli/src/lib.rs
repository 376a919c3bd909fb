//! Experiment orchestration for the `maefuse` command: configuration,
//! checkpoints, synthetic datasets, the pretrain / classify / segment
//! pipelines and report emission.

pub mod checkpoint;
pub mod config;
mod error;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use config::{ExperimentConfig, Task};
pub use error::{CliError, Result};
pub use pipeline::{run_classify, run_pretrain, run_segment, RunOutcome};

/// Worker count after applying the `MAEFUSE_THREADS` cap.
pub fn capped_workers(requested: usize, cap: Option<&str>) -> usize {
    let requested = requested.max(1);
    match cap.and_then(|c| c.trim().parse::<usize>().ok()) {
        Some(c) if c >= 1 => requested.min(c),
        _ => requested,
    }
}

/// Loads a config for `task`, applies `--workers`, and runs the pipeline.
pub fn run_task(task: Task, config: &std::path::Path, overrides: &[String], workers: Option<usize>) -> Result<RunOutcome> {
    let mut cfg = ExperimentConfig::load(config, overrides, task)?;
    let requested = workers.unwrap_or(cfg.workers);
    cfg.workers = capped_workers(requested, std::env::var("MAEFUSE_THREADS").ok().as_deref());
    match task {
        Task::Pretrain => run_pretrain(&cfg),
        Task::Classify => run_classify(&cfg),
        Task::Segment => run_segment(&cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_cap() {
        assert_eq!(capped_workers(8, Some("2")), 2);
        assert_eq!(capped_workers(1, Some("4")), 1);
        assert_eq!(capped_workers(3, None), 3);
        assert_eq!(capped_workers(3, Some("zero")), 3);
        assert_eq!(capped_workers(0, None), 1);
    }
}
