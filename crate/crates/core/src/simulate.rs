//! Synthetic classroom gaze.
//!
//! A [`ScenarioScript`] is a timeline of focus segments plus a roster of
//! student profiles. Attentive students look at the active focus point with
//! isotropic Gaussian error whose variance is set from the profile's target
//! MSE; distracted students look anywhere on screen uniformly; intermittent
//! students switch between the two as a two-state Markov chain.
//!
//! The screen is split into a 3x3 grid of focus regions numbered row-major
//! from the top-left (1..=9); each region's focus point is its cell centre.
//!
//! Generation is a pure function of the script: student `s` draws from RNG
//! stream `SIMULATOR_BASE + s` of the script seed, so students can be
//! generated in any order or in parallel.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::metrics::mean_squared_distance;
use crate::rng::{stream_rng, SIMULATOR_BASE};
use crate::scalar::Scalar;

const GRID_CENTERS: [f64; 3] = [1.0 / 6.0, 0.5, 5.0 / 6.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct FocusRegion(u8);

impl FocusRegion {
    pub fn new(id: u8) -> Result<Self> {
        if (1..=9).contains(&id) {
            Ok(Self(id))
        } else {
            Err(GazeError::config("region", format!("{id} is not in 1..=9")))
        }
    }

    pub fn all() -> impl Iterator<Item = FocusRegion> {
        (1..=9).map(FocusRegion)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn row(self) -> usize {
        usize::from(self.0 - 1) / 3
    }

    pub fn col(self) -> usize {
        usize::from(self.0 - 1) % 3
    }

    pub fn focus_point(self) -> [f64; 2] {
        [GRID_CENTERS[self.col()], GRID_CENTERS[self.row()]]
    }
}

impl TryFrom<u8> for FocusRegion {
    type Error = GazeError;
    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FocusRegion> for u8 {
    fn from(r: FocusRegion) -> u8 {
        r.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Region(FocusRegion),
    /// Students split between two regions; `ratio` of the roster looks at `a`.
    Split { a: FocusRegion, b: FocusRegion, ratio: f64 },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_ms: u64,
    pub focus: Focus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Attentive,
    Distracted,
    Intermittent,
}

pub const DEFAULT_MSE: f64 = 0.07;
pub const GLASSES_MSE: f64 = 0.12;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 30.0;
pub const DEFAULT_SWITCH_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentProfile {
    pub behavior: Behavior,
    /// Expected squared distance of attentive gaze from the focus point.
    pub mse_target: f64,
    pub sample_rate_hz: f64,
    /// Intermittent only: attentive -> distracted transitions per second.
    pub lapse_rate_per_s: f64,
    /// Intermittent only: distracted -> attentive transitions per second.
    pub recover_rate_per_s: f64,
}

impl Default for StudentProfile {
    fn default() -> Self {
        Self {
            behavior: Behavior::Attentive,
            mse_target: DEFAULT_MSE,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            lapse_rate_per_s: DEFAULT_SWITCH_RATE,
            recover_rate_per_s: DEFAULT_SWITCH_RATE,
        }
    }
}

impl StudentProfile {
    pub fn attentive() -> Self {
        Self::default()
    }

    pub fn distracted() -> Self {
        Self {
            behavior: Behavior::Distracted,
            ..Self::default()
        }
    }

    pub fn intermittent() -> Self {
        Self {
            behavior: Behavior::Intermittent,
            ..Self::default()
        }
    }

    /// Attentive student whose gaze estimate is degraded by glasses.
    pub fn glasses() -> Self {
        Self {
            mse_target: GLASSES_MSE,
            ..Self::default()
        }
    }

    /// Per-axis standard deviation giving `E[dx^2 + dy^2] = mse_target`.
    pub fn sigma(&self) -> f64 {
        (self.mse_target / 2.0).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mse_target > 0.0 && self.mse_target.is_finite()) {
            return Err(GazeError::config("mse_target", "must be positive"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz <= 1000.0) {
            return Err(GazeError::config("sample_rate_hz", "must lie in (0, 1000]"));
        }
        if self.lapse_rate_per_s < 0.0 || self.recover_rate_per_s < 0.0 {
            return Err(GazeError::config("lapse_rate_per_s", "rates must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    #[serde(default = "one")]
    pub count: usize,
    #[serde(flatten)]
    pub profile: StudentProfile,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    #[serde(default)]
    pub seed: u64,
    pub timeline: Vec<Segment>,
    pub roster: Vec<RosterEntry>,
}

impl ScenarioScript {
    /// `students` identical profiles following `timeline`.
    pub fn uniform_class(seed: u64, students: usize, profile: StudentProfile, timeline: Vec<Segment>) -> Self {
        Self {
            seed,
            timeline,
            roster: vec![RosterEntry {
                count: students,
                profile,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeline.is_empty() {
            return Err(GazeError::config("timeline", "needs at least one segment"));
        }
        for seg in &self.timeline {
            if seg.duration_ms == 0 {
                return Err(GazeError::config("duration_ms", "segments must have positive duration"));
            }
            if let Focus::Split { ratio, .. } = seg.focus {
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(GazeError::config("ratio", format!("{ratio} is outside (0, 1)")));
                }
            }
        }
        if self.student_count() == 0 {
            return Err(GazeError::config("roster", "no students"));
        }
        self.roster.iter().try_for_each(|r| r.profile.validate())
    }

    pub fn duration_ms(&self) -> u64 {
        self.timeline.iter().map(|s| s.duration_ms).sum()
    }

    pub fn student_count(&self) -> usize {
        self.roster.iter().map(|r| r.count).sum()
    }

    /// Profiles in student order.
    pub fn students(&self) -> Vec<StudentProfile> {
        self.roster
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.profile, r.count))
            .collect()
    }

    pub fn focus_at(&self, t_ms: u64) -> Option<Focus> {
        let mut end = 0;
        for seg in &self.timeline {
            end += seg.duration_ms;
            if t_ms < end {
                return Some(seg.focus);
            }
        }
        None
    }

    /// Focus point student `s` is asked to look at under `focus`.
    pub fn target_for(&self, focus: Focus, student: usize) -> Option<[f64; 2]> {
        match focus {
            Focus::Region(r) => Some(r.focus_point()),
            Focus::Split { a, b, ratio } => {
                let on_a = (ratio * self.student_count() as f64).round() as usize;
                Some(if student < on_a { a.focus_point() } else { b.focus_point() })
            }
            Focus::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample<T> {
    pub t_ms: u64,
    pub x: T,
    pub y: T,
    /// Whether the student was attending to a focus point for this sample.
    pub attending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentStream<T> {
    pub student: usize,
    pub profile: StudentProfile,
    pub samples: Vec<RawSample<T>>,
}

/// Raw (pre-admission) gaze estimates for every student, time-ordered per
/// student.
pub fn generate_stream<T: Scalar>(script: &ScenarioScript) -> Result<Vec<StudentStream<T>>> {
    script.validate()?;
    Ok(script
        .students()
        .into_iter()
        .enumerate()
        .map(|(s, profile)| generate_student(script, s, profile))
        .collect())
}

fn generate_student<T: Scalar>(script: &ScenarioScript, s: usize, profile: StudentProfile) -> StudentStream<T> {
    let mut rng = stream_rng(script.seed, SIMULATOR_BASE + s as u64);
    let noise = Normal::new(0.0, profile.sigma()).expect("validated sigma");
    let dt_s = 1.0 / profile.sample_rate_hz;
    let lapse = 1.0 - (-profile.lapse_rate_per_s * dt_s).exp();
    let recover = 1.0 - (-profile.recover_rate_per_s * dt_s).exp();
    let total = script.duration_ms();
    let mut attentive = profile.behavior != Behavior::Distracted;
    let mut samples = Vec::new();
    for j in 0u64.. {
        let t_ms = (j as f64 * 1000.0 * dt_s).round() as u64;
        if t_ms >= total {
            break;
        }
        if profile.behavior == Behavior::Intermittent && j > 0 {
            let u: f64 = rng.random();
            attentive = if attentive { u >= lapse } else { u < recover };
        }
        let focus = script.focus_at(t_ms).expect("t within timeline");
        let target = if attentive { script.target_for(focus, s) } else { None };
        let (x, y) = match target {
            Some([fx, fy]) => (fx + noise.sample(&mut rng), fy + noise.sample(&mut rng)),
            None => (rng.random::<f64>(), rng.random::<f64>()),
        };
        samples.push(RawSample {
            t_ms,
            x: T::lit(x),
            y: T::lit(y),
            attending: target.is_some(),
        });
    }
    StudentStream {
        student: s,
        profile,
        samples,
    }
}

/// One client upload: the samples buffered since the previous flush.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub send_at_ms: u64,
    pub samples: Vec<RawSample<T>>,
}

/// Client-side batching: flush on every multiple of `flush_ms`, or as soon as
/// `max_points` samples are buffered.
pub fn batch_samples<T: Scalar>(samples: &[RawSample<T>], flush_ms: u64, max_points: usize) -> Vec<Batch<T>> {
    let mut out = Vec::new();
    let mut buf: Vec<RawSample<T>> = Vec::new();
    let mut deadline = flush_ms;
    for s in samples {
        while s.t_ms >= deadline {
            if !buf.is_empty() {
                out.push(Batch {
                    send_at_ms: deadline,
                    samples: std::mem::take(&mut buf),
                });
            }
            deadline += flush_ms;
        }
        buf.push(*s);
        if buf.len() >= max_points {
            out.push(Batch {
                send_at_ms: s.t_ms,
                samples: std::mem::take(&mut buf),
            });
        }
    }
    if !buf.is_empty() {
        out.push(Batch {
            send_at_ms: deadline,
            samples: buf,
        });
    }
    out
}

/// Mean squared error of gaze estimates against a focus point.
pub fn measure_mse<T: Scalar>(points: &[[T; 2]], focus: FocusRegion) -> Result<T> {
    let [fx, fy] = focus.focus_point();
    mean_squared_distance(points, [T::lit(fx), T::lit(fy)])
}
