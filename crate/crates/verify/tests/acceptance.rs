//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! FAIL. Oracles here are computed independently of the library where the
//! criterion allows it.

#[path = "../../core/tests/common/reference.rs"]
mod reference;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gazeclass_core::clustering::{dbscan, find_elbow, ClusteringParams};
use gazeclass_core::rng::{stream_rng, uniform_points};
use gazeclass_core::simulate::{generate_stream, Focus, FocusRegion, ScenarioScript, Segment, StudentProfile};
use gazeclass_core::stats::{null_distribution, random_focus_diff_against, randomization_test_with_null, RandomizationConfig};
use gazeclass_core::{admit, cohesiveness, Admission};
use gazeclass_server::driver::{run_in_process, run_over_network, ScenarioSummary};
use gazeclass_server::http::serve;
use gazeclass_server::{Record, ScaledClock, ServerConfig, Service, SessionConfig};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use reference::{partition, reference_dbscan};

const STUDENTS: usize = 31;
const STRIDE_MS: u64 = 2_000;
const WINDOW_MS: u64 = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .expect("runtime");
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("uniform-cohesiveness", Box::new(uniform_cohesiveness)),
        ("fixture-replication", Box::new(fixture_replication)),
        ("randomization-at-scale", Box::new(randomization_at_scale)),
        ("dbscan-oracle", Box::new(dbscan_oracle)),
        ("cluster-shape", Box::new(cluster_shape)),
        ("elbow-detection", Box::new(elbow_detection)),
        ("score-separation", Box::new(score_separation)),
        ("end-to-end-alerting", Box::new(|| rt.block_on(end_to_end_alerting()))),
        ("throughput", Box::new(|| rt.block_on(throughput()))),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let t0 = Instant::now();
        let o = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} {name}: {} [{:.2}s]", o.detail, t0.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(t0: Instant, limit: Duration) -> (bool, String) {
    let e = t0.elapsed();
    (e < limit, format!("{:.2}s of {:.0}s budget", e.as_secs_f64(), limit.as_secs_f64()))
}

fn uniform_cohesiveness() -> Outcome {
    let t0 = Instant::now();
    let pts: Vec<[f64; 2]> = uniform_points(&mut stream_rng(0, 0), 5000);
    let c = cohesiveness(&pts).unwrap();
    let (fast, budget) = within(t0, Duration::from_secs(1));
    let err = (c - 1.0 / 6.0).abs();
    outcome(err <= 0.01 && fast, format!("c = {c:.6}, |c - 1/6| = {err:.6} (tol 0.01), {budget}"))
}

/// Recorded focus-region fixture: the gaze points and the uniform reference
/// sample the printed values were computed from.
fn fixture_path() -> PathBuf {
    std::env::var_os("GAZECLASS_FIXTURE")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/focus_region.ndjson"))
}

fn fixture_replication() -> Outcome {
    const COHESIVENESS: f64 = 0.07365995468797122;
    const DIFF: f64 = 0.09657548999609998;
    let path = fixture_path();
    if !path.exists() {
        return outcome(false, format!("fixture {} not present; cannot replicate", path.display()));
    }
    let t0 = Instant::now();
    let record = match Record::open(&path) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("fixture unreadable: {e}")),
    };
    let pts: Vec<[f64; 2]> = record.points().map(|(_, _, p)| p).collect();
    let Some(reference) = record.reference_sample() else {
        return outcome(false, "fixture has no reference sample");
    };
    let c = cohesiveness(&pts).unwrap();
    let d = random_focus_diff_against(&pts, reference).unwrap();
    let (fast, budget) = within(t0, Duration::from_secs(1));
    outcome(
        c == COHESIVENESS && d == DIFF && fast,
        format!("cohesiveness {c:?} (want {COHESIVENESS:?}), diff {d:?} (want {DIFF:?}), {budget}"),
    )
}

fn region(id: u8) -> FocusRegion {
    FocusRegion::new(id).unwrap()
}

fn class(seed: u64, profile: StudentProfile, timeline: Vec<Segment>) -> ScenarioScript {
    ScenarioScript::uniform_class(seed, STUDENTS, profile, timeline)
}

fn segment(ms: u64, focus: Focus) -> Segment {
    Segment { duration_ms: ms, focus }
}

/// Admitted coordinates of a one-window script.
fn window_points(script: &ScenarioScript) -> Vec<[f64; 2]> {
    generate_stream::<f64>(script)
        .unwrap()
        .iter()
        .flat_map(|s| s.samples.iter())
        .filter_map(|p| match admit(p.x, p.y) {
            Admission::Accepted { x, y, .. } => Some([x, y]),
            Admission::Dropped(_) => None,
        })
        .collect()
}

fn randomization_at_scale() -> Outcome {
    let t0 = Instant::now();
    let cfg = RandomizationConfig {
        trials: 5000,
        sample_size: 5000,
        seed: 0,
        alpha: 0.05,
    };
    let null = null_distribution::<f64>(&cfg).unwrap();
    let mut worst_p: f64 = 0.0;
    let mut all_reject = true;
    for r in FocusRegion::all() {
        let pts = window_points(&class(u64::from(r.id()), StudentProfile::attentive(), vec![segment(WINDOW_MS, Focus::Region(r))]));
        let res = randomization_test_with_null(&pts, &cfg, null.clone()).unwrap();
        all_reject &= res.reject_null && res.p < 0.001;
        worst_p = worst_p.max(res.p);
    }
    let uniform_windows = 40;
    let rejected = (0..uniform_windows)
        .filter(|&s| {
            let pts = window_points(&class(1000 + s, StudentProfile::attentive(), vec![segment(WINDOW_MS, Focus::None)]));
            randomization_test_with_null(&pts, &cfg, null.clone()).unwrap().reject_null
        })
        .count();
    let rate = rejected as f64 / uniform_windows as f64;
    let (fast, budget) = within(t0, Duration::from_secs(60));
    outcome(
        all_reject && rate <= 0.10 && fast,
        format!(
            "9/9 attentive regions rejected: {all_reject} (max p {worst_p:.2e}), uniform reject rate {rate:.3} ({rejected}/{uniform_windows}, max 0.10), {budget}"
        ),
    )
}

/// Mixed instance: a few Gaussian blobs of varying spread over uniform noise.
fn instance(seed: u64) -> Vec<[f64; 2]> {
    let mut rng = stream_rng(seed, 500);
    let n_blobs = rng.random_range(0..4);
    let mut pts = Vec::new();
    for _ in 0..n_blobs {
        let c = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
        let sigma = rng.random_range(0.01..0.08);
        let d = Normal::new(0.0, sigma).unwrap();
        for _ in 0..rng.random_range(20..150) {
            pts.push([c[0] + d.sample(&mut rng), c[1] + d.sample(&mut rng)]);
        }
    }
    let n_uniform = rng.random_range(10..200);
    pts.extend(uniform_points::<f64, _>(&mut rng, n_uniform));
    pts.truncate(500);
    pts
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Brute-force dynamic eps: k-th nearest other point with k = max(1, m/3),
/// knee of the sorted curve by maximum normalized gap below the chord, and
/// the 90th nearest-rank percentile when no positive knee exists.
fn reference_eps(pts: &[[f64; 2]], min_samples: usize) -> f64 {
    let k = (min_samples / 3).max(1);
    let mut curve: Vec<f64> = (0..pts.len())
        .map(|i| {
            let mut d: Vec<f64> = (0..pts.len()).filter(|&j| j != i).map(|j| dist(pts[i], pts[j])).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    curve.sort_by(f64::total_cmp);
    let n = curve.len();
    let (lo, hi) = (curve[0], curve[n - 1]);
    if hi > lo {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, &v) in curve.iter().enumerate() {
            let gap = i as f64 / (n - 1) as f64 - (v - lo) / (hi - lo);
            if gap > best.0 {
                best = (gap, i);
            }
        }
        if curve[best.1] > 0.0 {
            return curve[best.1];
        }
    }
    let p = curve[((0.9 * n as f64).ceil() as usize).clamp(1, n) - 1];
    if p > 0.0 {
        p
    } else {
        1e-6
    }
}

fn dbscan_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut mismatches = Vec::new();
    for seed in 0..100 {
        let pts = instance(seed);
        let mut rng = stream_rng(seed, 501);
        let min_samples: usize = rng.random_range(3..30);
        let (params, eps) = if seed % 2 == 0 {
            let m = if pts.len() < 2 * min_samples {
                (pts.len() / 6).max(5)
            } else {
                min_samples
            };
            (ClusteringParams::dynamic(min_samples), reference_eps(&pts, m))
        } else {
            let eps = rng.random_range(0.01..0.1);
            (ClusteringParams::fixed(min_samples, eps), eps)
        };
        let r = dbscan(&pts, &params).unwrap();
        let want = reference_dbscan(&pts, eps, r.min_samples_used);
        if r.eps_used != eps || r.partition() != partition(&want) {
            mismatches.push(seed);
        }
    }
    let (fast, budget) = within(t0, Duration::from_secs(30));
    outcome(
        mismatches.is_empty() && fast,
        format!("100 instances, eps and partition mismatches at seeds {mismatches:?}, {budget}"),
    )
}

fn cluster_shape() -> Outcome {
    let params = SessionConfig::default().clustering.params();
    let run = |profile: StudentProfile, seed: u64, focus: Focus| {
        let pts = window_points(&class(seed, profile, vec![segment(WINDOW_MS, focus)]));
        let r = dbscan(&pts, &params).unwrap();
        let largest = r.cluster_sizes.first().copied().unwrap_or(0) as f64 / pts.len() as f64;
        (r.n_clusters(), largest)
    };
    let seeds = 0..5u64;
    let single: Vec<(usize, f64)> = seeds.clone().map(|s| run(StudentProfile::attentive(), s, Focus::Region(region(5)))).collect();
    let split: Vec<usize> = seeds
        .clone()
        .map(|s| {
            run(StudentProfile::attentive(), s, Focus::Split { a: region(1), b: region(9), ratio: 0.5 }).0
        })
        .collect();
    let uniform: Vec<usize> = seeds.map(|s| run(StudentProfile::attentive(), s, Focus::None).0).collect();
    let glasses: Vec<usize> = FocusRegion::all()
        .map(|r| run(StudentProfile::glasses(), u64::from(r.id()), Focus::Region(r)).0)
        .collect();
    let single_ok = single.iter().all(|&(n, f)| n == 1 && f >= 0.80);
    let split_ok = split.iter().all(|&n| n == 2);
    let uniform_ok = uniform.iter().all(|&n| n == 0);
    let over = glasses.iter().filter(|&&n| n > 1).count();
    let fmt_single: Vec<String> = single.iter().map(|(n, f)| format!("{n}@{f:.3}")).collect();
    outcome(
        single_ok && split_ok && uniform_ok && over <= 2,
        format!(
            "single focus clusters@largest-fraction {fmt_single:?} (want 1@>=0.80), split {split:?} (want 2), uniform {uniform:?} (want 0), glasses sweep {glasses:?} (>1 in {over} regions, max 2)"
        ),
    )
}

fn elbow_detection() -> Outcome {
    let linear: Vec<f64> = (0..=100)
        .map(|i| {
            let i = f64::from(i);
            if i <= 80.0 {
                0.01 * i
            } else {
                0.8 + 0.2 * (i - 80.0)
            }
        })
        .collect();
    let linear_knee = find_elbow(&linear).unwrap().index;

    let a = 5.0f64;
    let n = 1000;
    let exp: Vec<f64> = (0..n).map(|i| (a * i as f64 / (n - 1) as f64).exp() - 1.0).collect();
    let x = find_elbow(&exp).unwrap().index as f64 / (n - 1) as f64;
    // Maximizer of x - (e^{ax} - 1)/(e^a - 1), solved numerically.
    let deriv = |x: f64| 1.0 - a * (a * x).exp() / (a.exp() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let knee = 0.5 * (lo + hi);
    let rel = (x - knee).abs() / knee;
    outcome(
        linear_knee == 80 && rel <= 0.02,
        format!("piecewise knee index {linear_knee} (want 80), exponential knee {x:.4} vs {knee:.4} (rel err {rel:.4}, max 0.02)"),
    )
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn score_separation() -> Outcome {
    // 48 s gives windows ending at 10 s, 12 s, ..., 48 s.
    let ms = 48_000;
    let mut rows = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let mean_score = |focus: Focus| {
            let s = run_in_process(&class(seed, StudentProfile::attentive(), vec![segment(ms, focus)]), SessionConfig::default(), None).unwrap();
            assert_eq!(s.events.len(), 20, "seed {seed}: {} windows", s.events.len());
            mean(&s.scores())
        };
        let att = mean_score(Focus::Region(region(5)));
        let split = mean_score(Focus::Split { a: region(1), b: region(9), ratio: 0.5 });
        let uni = mean_score(Focus::None);
        ok &= att - split >= 0.15 && split - uni >= 0.15;
        rows.push(format!("{att:.3}>{split:.3}>{uni:.3}"));
    }
    outcome(ok, format!("attentive>split>uniform means per seed {rows:?}, min gap 0.15"))
}

async fn start(time_scale: f64) -> String {
    let mut cfg = ServerConfig::default();
    cfg.server.time_scale = time_scale;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let service = Service::new(cfg, Arc::new(ScaledClock::new(time_scale)));
    tokio::spawn(serve(listener, service, std::future::pending()));
    format!("http://{addr}")
}

fn leaks(s: &ScenarioSummary) -> usize {
    let wire = serde_json::to_string(&s.events).unwrap();
    s.tokens.iter().filter(|t| wire.contains(t.as_str())).count()
}

async fn end_to_end_alerting() -> Outcome {
    let scale = 10.0;
    let base = start(scale).await;
    let t0 = Instant::now();
    let transition = 30_000;
    let drop = class(
        41,
        StudentProfile::attentive(),
        vec![segment(transition, Focus::Region(region(5))), segment(30_000, Focus::None)],
    );
    let steady = class(42, StudentProfile::attentive(), vec![segment(60_000, Focus::Region(region(5)))]);
    let cfg = SessionConfig::default();
    let a = match run_over_network(&base, &drop, &cfg, scale).await {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("transition run failed: {e}")),
    };
    let b = match run_over_network(&base, &steady, &cfg, scale).await {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("attentive run failed: {e}")),
    };
    let alert_ends: Vec<u64> = a.alerts().map(|e| e.end_ms).collect();
    // The first window containing only distracted gaze ends one window
    // length after the transition; three strides of slack follow it.
    let timely = alert_ends.len() == 1
        && alert_ends[0] > transition
        && alert_ends[0] <= transition + WINDOW_MS + 3 * STRIDE_MS;
    let steady_alerts = b.alerts().count();
    let leaked = leaks(&a) + leaks(&b);
    let simulated = (drop.duration_ms() + steady.duration_ms()) as f64 / 1000.0;
    outcome(
        timely && steady_alerts == 0 && leaked == 0 && simulated <= 120.0,
        format!(
            "transition alerts at window ends {alert_ends:?} (want one in ({transition}, {}]), attentive alerts {steady_alerts}, tokens leaked {leaked}, {simulated:.0}s simulated in {:.1}s",
            transition + WINDOW_MS + 3 * STRIDE_MS,
            t0.elapsed().as_secs_f64()
        ),
    )
}

async fn throughput() -> Outcome {
    let scale = 5.0;
    let base = start(scale).await;
    let minutes = 5;
    let script = class(
        77,
        StudentProfile::attentive(),
        vec![segment(minutes * 60_000, Focus::Region(region(5)))],
    );
    let s = match run_over_network(&base, &script, &SessionConfig::default(), scale).await {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let expected = ((script.duration_ms() - WINDOW_MS) / STRIDE_MS + 1) as usize;
    outcome(
        s.events.len() == expected && s.skipped_windows == 0 && s.failed_clients == 0 && s.latency.p99_ms < 250.0,
        format!(
            "{} students x 30 Hz for {minutes} min: {} windows (want {expected}), skipped {}, failed clients {}, latency p50 {:.1} ms p99 {:.1} ms max {:.1} ms (p99 limit 250)",
            s.students,
            s.events.len(),
            s.skipped_windows,
            s.failed_clients,
            s.latency.p50_ms,
            s.latency.p99_ms,
            s.latency.max_ms
        ),
    )
}
