//! Per-window analysis: clustering, score, heatmap. Pure and synchronous so
//! the live service, the in-process simulator and replay share it.

use std::sync::Arc;
use std::time::Instant;

use gazeclass_core::scoring::{score_window_statistical_with_null, StatisticalScoring};
use gazeclass_core::stats::{null_distribution, NullDistribution};
use gazeclass_core::{dbscan, score_window, AttentionScore, Distribution, GazeError, HeatmapGrid, ScoreStrategy};

use crate::config::SessionConfig;

/// Session-lifetime analysis settings. The statistical strategy's null
/// distribution depends only on the config, so it is built once.
#[derive(Debug, Clone)]
pub struct Analyzer {
    cfg: SessionConfig,
    statistical: Option<(StatisticalScoring, Arc<NullDistribution<f64>>)>,
}

impl Analyzer {
    pub fn new(cfg: SessionConfig) -> Result<Self, GazeError> {
        let statistical = match cfg.scoring.strategy {
            ScoreStrategy::Density => None,
            ScoreStrategy::Statistical => {
                let s = cfg.scoring.statistical(cfg.seed);
                let null = null_distribution(&s.randomization)?;
                Some((s, Arc::new(null)))
            }
        };
        Ok(Self { cfg, statistical })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Scores one window. Never fails: an analysis error yields a zero score
    /// with `degraded` set.
    pub fn process(&self, d: &Distribution) -> WindowOutcome {
        let started = Instant::now();
        let heatmap = HeatmapGrid::from_points(
            &d.points,
            self.cfg.heatmap.rows,
            self.cfg.heatmap.cols,
            d.window_start,
            d.window_end,
        );
        let strategy = self.cfg.scoring.strategy;
        let scored = if d.is_empty() {
            Ok(AttentionScore::zero(strategy))
        } else {
            match &self.statistical {
                None => dbscan(&d.coords(), &self.cfg.clustering.params()).map(|c| score_window(&c, d.len())),
                Some((s, null)) => score_window_statistical_with_null(d, s, null),
            }
        };
        let (score, error) = match scored {
            Ok(s) => (s, None),
            Err(e) => (AttentionScore::zero(strategy), Some(e.to_string())),
        };
        WindowOutcome {
            score: AttentionScore {
                n_points: d.len(),
                ..score.with_window(d.window_start, d.window_end)
            },
            heatmap,
            error,
            compute_ms: started.elapsed().as_secs_f64() * 1000.0,
        }
    }
}

impl Analyzer {
    /// Outcome for a window whose analysis could not complete.
    pub fn failed(&self, d: &Distribution, reason: impl Into<String>) -> WindowOutcome {
        WindowOutcome {
            score: AttentionScore {
                n_points: d.len(),
                ..AttentionScore::zero(self.cfg.scoring.strategy).with_window(d.window_start, d.window_end)
            },
            heatmap: HeatmapGrid::from_points(
                &d.points,
                self.cfg.heatmap.rows,
                self.cfg.heatmap.cols,
                d.window_start,
                d.window_end,
            ),
            error: Some(reason.into()),
            compute_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WindowOutcome {
    pub score: AttentionScore<f64>,
    pub heatmap: HeatmapGrid,
    /// Why the score was forced to zero, if it was.
    pub error: Option<String>,
    pub compute_ms: f64,
}

impl WindowOutcome {
    pub fn degraded(&self) -> bool {
        self.error.is_some()
    }
}
