//! Uniform-grid spatial index over 2-D points.

use crate::scalar::Scalar;

/// Euclidean distance. Every neighborhood test in the clustering code goes
/// through this one function so an `eps` taken from a k-distance compares
/// equal to the pair distance it came from.
#[inline]
pub fn distance<T: Scalar>(a: &[T; 2], b: &[T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Points bucketed into square cells, stored in CSR form.
#[derive(Debug, Clone)]
pub struct GridIndex<T> {
    origin: [T; 2],
    cell: T,
    cols: usize,
    rows: usize,
    starts: Vec<usize>,
    members: Vec<u32>,
}

impl<T: Scalar> GridIndex<T> {
    /// Builds a grid with the requested cell size, enlarged if needed so the
    /// grid has at most about `4 * n` cells.
    pub fn build(points: &[[T; 2]], cell: T) -> Self {
        let n = points.len().max(1);
        let (mut lo, mut hi) = ([T::infinity(); 2], [T::neg_infinity(); 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if points.is_empty() {
            lo = [T::zero(); 2];
            hi = [T::zero(); 2];
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let max_side = T::from_count(2 * (n as f64).sqrt().ceil() as usize + 1);
        let mut cell = if cell > T::zero() { cell } else { T::one() };
        if extent / cell > max_side {
            cell = extent / max_side;
        }
        if !(cell > T::zero()) {
            cell = T::one();
        }
        let span = |a: usize| ((hi[a] - lo[a]) / cell).floor().to_usize().unwrap_or(0) + 1;
        let (cols, rows) = (span(0), span(1));

        let mut counts = vec![0usize; cols * rows + 1];
        let cell_ids: Vec<usize> = points
            .iter()
            .map(|p| {
                let (cx, cy) = Self::coords_of(lo, cell, cols, rows, p);
                cy * cols + cx
            })
            .collect();
        for &c in &cell_ids {
            counts[c + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut members = vec![0u32; points.len()];
        for (i, &c) in cell_ids.iter().enumerate() {
            members[fill[c]] = i as u32;
            fill[c] += 1;
        }
        Self {
            origin: lo,
            cell,
            cols,
            rows,
            starts: counts,
            members,
        }
    }

    fn coords_of(origin: [T; 2], cell: T, cols: usize, rows: usize, p: &[T; 2]) -> (usize, usize) {
        let c = |v: T, o: T, lim: usize| {
            ((v - o) / cell)
                .floor()
                .to_usize()
                .unwrap_or(0)
                .min(lim - 1)
        };
        (c(p[0], origin[0], cols), c(p[1], origin[1], rows))
    }

    pub fn cell_size(&self) -> T {
        self.cell
    }

    fn cell_members(&self, cx: usize, cy: usize) -> &[u32] {
        let c = cy * self.cols + cx;
        &self.members[self.starts[c]..self.starts[c + 1]]
    }

    /// Calls `f` for every cell at Chebyshev distance exactly `ring` from
    /// the cell `(cx, cy)`. Returns `false` if the ring lies fully outside.
    fn for_ring(&self, cx: usize, cy: usize, ring: usize, mut f: impl FnMut(&[u32])) -> bool {
        let (cx, cy, r) = (cx as isize, cy as isize, ring as isize);
        let (cols, rows) = (self.cols as isize, self.rows as isize);
        if cx - r < 0 && cy - r < 0 && cx + r >= cols && cy + r >= rows && ring > 0 {
            return false;
        }
        for y in (cy - r)..=(cy + r) {
            if y < 0 || y >= rows {
                continue;
            }
            let on_edge = y == cy - r || y == cy + r;
            let step = if on_edge || r == 0 { 1 } else { 2 * r };
            let mut x = cx - r;
            while x <= cx + r {
                if x >= 0 && x < cols {
                    f(self.cell_members(x as usize, y as usize));
                }
                x += step;
            }
        }
        true
    }

    /// Indices of all points within `radius` (inclusive) of `q`.
    pub fn within(&self, points: &[[T; 2]], q: &[T; 2], radius: T, out: &mut Vec<u32>) {
        out.clear();
        let (cx, cy) = Self::coords_of(self.origin, self.cell, self.cols, self.rows, q);
        let rings = (radius / self.cell).ceil().to_usize().unwrap_or(0);
        for ring in 0..=rings {
            self.for_ring(cx, cy, ring, |m| {
                out.extend(m.iter().copied().filter(|&j| distance(&points[j as usize], q) <= radius));
            });
        }
    }

    /// Distance from point `i` to its `k`-th nearest other point.
    pub fn kth_neighbor_distance(&self, points: &[[T; 2]], i: usize, k: usize, scratch: &mut Vec<T>) -> T {
        scratch.clear();
        let q = &points[i];
        let (cx, cy) = Self::coords_of(self.origin, self.cell, self.cols, self.rows, q);
        let mut ring = 0;
        loop {
            let inside = self.for_ring(cx, cy, ring, |m| {
                scratch.extend(
                    m.iter()
                        .filter(|&&j| j as usize != i)
                        .map(|&j| distance(&points[j as usize], q)),
                );
            });
            if scratch.len() >= k {
                let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
                let kth = *kth;
                if kth <= T::from_count(ring) * self.cell || !inside {
                    return kth;
                }
            }
            if !inside {
                // Fewer than k other points exist; callers check this up front.
                return T::infinity();
            }
            ring += 1;
        }
    }
}
