//! Brute-force DBSCAN used as an oracle.
//!
//! Shares no code with the library: neighbour counts come from a full
//! pairwise scan, and clusters from repeated min-label propagation between
//! core points until a fixed point is reached.

#![allow(dead_code)]

pub const NOISE: usize = usize::MAX;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Returns a label per point (`NOISE` for noise). Labels are the smallest
/// core index in each cluster.
pub fn reference_dbscan(points: &[[f64; 2]], eps: f64, min_samples: usize) -> Vec<usize> {
    let n = points.len();
    let within = |i: usize, j: usize| dist(points[i], points[j]) <= eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_samples)
        .collect();

    let mut label: Vec<usize> = (0..n).map(|i| if core[i] { i } else { NOISE }).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if !core[i] {
                continue;
            }
            for j in 0..n {
                if i != j && core[j] && within(i, j) {
                    let m = label[i].min(label[j]);
                    if label[i] != m || label[j] != m {
                        label[i] = m;
                        label[j] = m;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    (0..n)
        .map(|i| {
            if core[i] {
                label[i]
            } else {
                (0..n)
                    .filter(|&j| core[j] && within(i, j))
                    .map(|j| label[j])
                    .next()
                    .unwrap_or(NOISE)
            }
        })
        .collect()
}

/// Partition as sorted member lists, noise excluded.
pub fn partition(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            groups.entry(l).or_default().push(i);
        }
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}
