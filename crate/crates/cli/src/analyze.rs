//! Offline analyses of a session record, written as plot-ready tables.
//!
//! Every table covers the pooled distribution (all admitted points in the
//! record) and then each window rebuilt from the ingest lines. Output is a
//! pure function of the record and the options.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gazeclass_core::clustering::{dbscan, EpsSource, Label};
use gazeclass_core::stats::{conclude, null_distribution, random_focus_diff, random_focus_diff_against, RandomizationConfig};
use gazeclass_core::{cohesiveness, Distribution, GazeDistribution, HeatmapGrid};
use gazeclass_server::record::Record;
use gazeclass_server::replay::{replay, windows_of};
use serde::Serialize;

/// Pooled clustering is skipped above this many points; the per-window
/// tables are always produced.
pub const POOLED_DBSCAN_LIMIT: usize = 50_000;

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub cohesiveness: bool,
    pub randomization: bool,
    pub dbscan: bool,
    pub heatmap: bool,
    pub score_series: bool,
    /// Overrides the record's seed for the randomization test.
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub sample_size: Option<usize>,
    pub histogram_bins: usize,
}

impl AnalyzeOptions {
    pub fn all() -> Self {
        Self {
            cohesiveness: true,
            randomization: true,
            dbscan: true,
            heatmap: true,
            score_series: true,
            histogram_bins: 50,
            ..Self::default()
        }
    }

    pub fn any(&self) -> bool {
        self.cohesiveness || self.randomization || self.dbscan || self.heatmap || self.score_series
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot write table: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Gaze(#[from] gazeclass_core::GazeError),
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeSummary {
    pub session: String,
    pub points: usize,
    pub windows: usize,
    pub corrupt_lines: usize,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, AnalyzeError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|source| AnalyzeError::Io { path, source })?;
        self.files.push(name.to_owned());
        Ok(BufWriter::new(f))
    }

    fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>, AnalyzeError> {
        Ok(csv::Writer::from_writer(self.create(name)?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), AnalyzeError> {
        let path = self.dir.join(name);
        let mut w = self.create(name)?;
        let io = |source| AnalyzeError::Io { path: path.clone(), source };
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
        w.flush().map_err(io)
    }
}

fn io_err(dir: &Path) -> impl Fn(std::io::Error) -> AnalyzeError + '_ {
    move |source| AnalyzeError::Io {
        path: dir.to_owned(),
        source,
    }
}

/// A distribution with the label it gets in the tables.
struct Scoped<'a> {
    scope: &'static str,
    index: Option<u64>,
    d: &'a Distribution,
}

#[derive(Serialize)]
struct CohesivenessRow {
    scope: &'static str,
    index: Option<u64>,
    start_ms: u64,
    end_ms: u64,
    n_points: usize,
    cohesiveness: Option<f64>,
}

#[derive(Serialize)]
struct RandomizationReport {
    n_points: usize,
    focus_cohesiveness: f64,
    /// `recorded` when the record carries the reference sample, else `seeded`.
    reference: &'static str,
    random_focus_diff: f64,
    trials: usize,
    sample_size: usize,
    seed: u64,
    alpha: f64,
    null_mean: f64,
    null_std: f64,
    z: f64,
    p: f64,
    empirical_tail: f64,
    reject_null: bool,
}

#[derive(Serialize)]
struct HistogramRow {
    abs_diff_lower: f64,
    abs_diff_upper: f64,
    count: usize,
}

#[derive(Serialize)]
struct DbscanRow {
    scope: &'static str,
    index: Option<u64>,
    start_ms: u64,
    end_ms: u64,
    n_points: usize,
    eps: Option<f64>,
    eps_source: &'static str,
    min_samples: usize,
    n_clusters: usize,
    noise: usize,
    /// Cluster sizes, largest first, `;`-separated.
    cluster_sizes: String,
}

#[derive(Serialize)]
struct LabelRow {
    x: f64,
    y: f64,
    /// Cluster id, `-1` for noise.
    label: i64,
}

#[derive(Serialize)]
struct KdistRow {
    rank: usize,
    distance: f64,
}

#[derive(Serialize)]
struct HeatmapEntry {
    scope: &'static str,
    index: Option<u64>,
    start_ms: u64,
    end_ms: u64,
    rows: usize,
    cols: usize,
    counts: Vec<u32>,
}

#[derive(Serialize)]
struct ScoreRow {
    index: u64,
    start_ms: u64,
    end_ms: u64,
    score: f64,
    n_points: usize,
    n_clusters: usize,
    alert: bool,
    degraded: bool,
}

pub fn analyze(record: &Record, opts: &AnalyzeOptions, dir: &Path) -> Result<AnalyzeSummary, AnalyzeError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg = record.config;
    let pooled = GazeDistribution::pooled(
        record
            .points()
            .map(|(t, s, [x, y])| gazeclass_core::GazePoint::new(gazeclass_core::StudentRef(s), t, x, y))
            .collect(),
    );
    let windows = windows_of(record);
    let stride = cfg.window.stride_ms;
    let mut all = vec![Scoped {
        scope: "pooled",
        index: None,
        d: &pooled,
    }];
    all.extend(windows.iter().map(|d| Scoped {
        scope: "window",
        index: Some(d.window_start / stride),
        d,
    }));
    let mut out = Out { dir, files: Vec::new() };
    let mut notes = Vec::new();

    if opts.cohesiveness {
        let mut w = out.csv("cohesiveness.csv")?;
        for s in &all {
            w.serialize(CohesivenessRow {
                scope: s.scope,
                index: s.index,
                start_ms: s.d.window_start,
                end_ms: s.d.window_end,
                n_points: s.d.len(),
                cohesiveness: s.d.cohesiveness().ok(),
            })?;
        }
        w.flush().map_err(io_err(dir))?;
    }

    if opts.randomization {
        if pooled.is_empty() {
            notes.push("randomization test skipped: record has no points".into());
        } else {
            let defaults = RandomizationConfig::default();
            let rc = RandomizationConfig {
                trials: opts.trials.unwrap_or(cfg.scoring.trials),
                sample_size: opts.sample_size.unwrap_or(cfg.scoring.sample_size),
                seed: opts.seed.unwrap_or(cfg.seed),
                alpha: defaults.alpha,
            };
            rc.validate()?;
            let coords = pooled.coords();
            let (reference, diff) = match record.reference_sample() {
                Some(r) => ("recorded", random_focus_diff_against(&coords, r)?),
                None => ("seeded", random_focus_diff(&coords, &rc)?),
            };
            let null = null_distribution::<f64>(&rc)?;
            let hist = null.abs_histogram(opts.histogram_bins.max(1));
            let r = conclude(diff, rc.alpha, null)?;
            out.json(
                "randomization.json",
                &RandomizationReport {
                    n_points: pooled.len(),
                    focus_cohesiveness: pooled.cohesiveness()?,
                    reference,
                    random_focus_diff: r.random_focus_diff,
                    trials: rc.trials,
                    sample_size: rc.sample_size,
                    seed: rc.seed,
                    alpha: rc.alpha,
                    null_mean: r.null.mean,
                    null_std: r.null.std,
                    z: r.z,
                    p: r.p,
                    empirical_tail: r.empirical_tail,
                    reject_null: r.reject_null,
                },
            )?;
            let mut w = out.csv("null_histogram.csv")?;
            for (lo, hi, count) in hist {
                w.serialize(HistogramRow {
                    abs_diff_lower: lo,
                    abs_diff_upper: hi,
                    count,
                })?;
            }
            w.flush().map_err(io_err(dir))?;
        }
    }

    if opts.dbscan {
        let params = cfg.clustering.params();
        let mut w = out.csv("dbscan.csv")?;
        let mut pooled_result = None;
        for s in &all {
            if s.scope == "pooled" && s.d.len() > POOLED_DBSCAN_LIMIT {
                notes.push(format!(
                    "pooled clustering skipped: {} points exceeds {POOLED_DBSCAN_LIMIT}",
                    s.d.len()
                ));
                continue;
            }
            let c = dbscan(&s.d.coords(), &params)?;
            let empty = s.d.is_empty();
            w.serialize(DbscanRow {
                scope: s.scope,
                index: s.index,
                start_ms: s.d.window_start,
                end_ms: s.d.window_end,
                n_points: s.d.len(),
                eps: (!empty).then_some(c.eps_used),
                eps_source: match c.eps_source {
                    _ if empty => "none",
                    EpsSource::Fixed => "fixed",
                    EpsSource::Elbow { .. } => "elbow",
                    EpsSource::Fallback => "fallback",
                },
                min_samples: c.min_samples_used,
                n_clusters: c.n_clusters(),
                noise: c.noise_count,
                cluster_sizes: c.cluster_sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
            })?;
            if s.scope == "pooled" {
                pooled_result = Some(c);
            }
        }
        w.flush().map_err(io_err(dir))?;
        if let Some(c) = pooled_result {
            let mut w = out.csv("labels.csv")?;
            for (p, l) in pooled.points.iter().zip(&c.labels) {
                w.serialize(LabelRow {
                    x: p.x,
                    y: p.y,
                    label: match l {
                        Label::Noise => -1,
                        Label::Cluster(i) => *i as i64,
                    },
                })?;
            }
            w.flush().map_err(io_err(dir))?;
            let mut w = out.csv("kdist.csv")?;
            for (rank, &distance) in c.kdist_curve.iter().enumerate() {
                w.serialize(KdistRow { rank, distance })?;
            }
            w.flush().map_err(io_err(dir))?;
        }
    }

    if opts.heatmap {
        let grids: Vec<_> = all
            .iter()
            .map(|s| {
                let g = HeatmapGrid::from_points(&s.d.points, cfg.heatmap.rows, cfg.heatmap.cols, s.d.window_start, s.d.window_end);
                HeatmapEntry {
                    scope: s.scope,
                    index: s.index,
                    start_ms: s.d.window_start,
                    end_ms: s.d.window_end,
                    rows: g.rows,
                    cols: g.cols,
                    counts: g.counts,
                }
            })
            .collect();
        out.json("heatmaps.json", &grids)?;
    }

    if opts.score_series {
        let report = replay(record)?;
        let mut w = out.csv("scores.csv")?;
        for (index, e) in &report.events {
            w.serialize(ScoreRow {
                index: *index,
                start_ms: e.start_ms,
                end_ms: e.end_ms,
                score: e.score,
                n_points: e.n_points,
                n_clusters: e.n_clusters,
                alert: e.alert,
                degraded: e.degraded,
            })?;
        }
        w.flush().map_err(io_err(dir))?;
    }

    Ok(AnalyzeSummary {
        session: record.session.clone(),
        points: pooled.len(),
        windows: windows.len(),
        corrupt_lines: record.corrupt.len(),
        files: out.files,
        notes,
    })
}

/// Cohesiveness of the pooled record; the quickest sanity check of a fixture.
pub fn pooled_cohesiveness(record: &Record) -> Option<f64> {
    let coords: Vec<[f64; 2]> = record.points().map(|(_, _, p)| p).collect();
    cohesiveness(&coords).ok()
}
