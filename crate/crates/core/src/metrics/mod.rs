//! Distance kernels between equal-length scalar sequences: Lp norms,
//! dynamic time warping with path recovery and the discrete Fréchet distance.
//!
//! The ground distance between samples is `|x_i − y_j|`. Warping paths use
//! 1-based `(i, j)` indices.

pub mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    L1,
    L2,
    Dtw,
    Frechet,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 4] = [DistanceKind::L1, DistanceKind::L2, DistanceKind::Dtw, DistanceKind::Frechet];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::L1 => "l1",
            DistanceKind::L2 => "l2",
            DistanceKind::Dtw => "dtw",
            DistanceKind::Frechet => "frechet",
        }
    }

    pub fn distance(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            DistanceKind::L1 => lp_distance(x, y, Norm::L1),
            DistanceKind::L2 => lp_distance(x, y, Norm::L2),
            DistanceKind::Dtw => {
                check_pair(x, y)?;
                Ok(dtw_cost(x, y))
            }
            DistanceKind::Frechet => {
                check_pair(x, y)?;
                Ok(frechet_cost(x, y, f64::INFINITY))
            }
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(DistanceKind::L1),
            "l2" => Ok(DistanceKind::L2),
            "dtw" => Ok(DistanceKind::Dtw),
            "frechet" | "fréchet" => Ok(DistanceKind::Frechet),
            _ => Err(invalid(format!("unknown metric {s:?} (expected l1, l2, dtw or frechet)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

fn check_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    Ok(())
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    check_len(x, y)?;
    if x.is_empty() {
        return Err(invalid("sequences must be non-empty"));
    }
    Ok(())
}

pub fn lp_distance(x: &[f64], y: &[f64], p: Norm) -> Result<f64> {
    check_len(x, y)?;
    let diffs = x.iter().zip(y).map(|(a, b)| a - b);
    Ok(match p {
        Norm::L1 => diffs.map(f64::abs).sum(),
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpingPath {
    pub steps: Vec<(usize, usize)>,
}

impl WarpingPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn diagonal(n: usize) -> Self {
        Self {
            steps: (1..=n).map(|i| (i, i)).collect(),
        }
    }

    /// Sum of ground distances along the path, accumulated from the start.
    pub fn cost(&self, x: &[f64], y: &[f64]) -> f64 {
        self.steps
            .iter()
            .fold(0.0, |acc, &(i, j)| acc + (x[i - 1] - y[j - 1]).abs())
    }
}

/// Boundary, monotonicity and continuity for an `n × n` alignment.
pub fn validate_path(path: &WarpingPath, n: usize) -> bool {
    let steps = &path.steps;
    if n == 0 || steps.first() != Some(&(1, 1)) || steps.last() != Some(&(n, n)) {
        return false;
    }
    if steps.len() < n || steps.len() > 2 * n - 1 {
        return false;
    }
    steps.windows(2).all(|w| {
        let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
        di <= 1 && dj <= 1 && di + dj > 0
    })
}

/// Optimal DTW cost and a path attaining it. Among co-optimal predecessors
/// the backtrack prefers the diagonal, then `(i−1, j)`, then `(i, j−1)`.
pub fn dtw_distance(x: &[f64], y: &[f64]) -> Result<(f64, WarpingPath)> {
    check_pair(x, y)?;
    let n = x.len();
    let mut d = vec![0.0; n * n];
    let at = |i: usize, j: usize| i * n + j;
    for i in 0..n {
        for j in 0..n {
            let g = (x[i] - y[j]).abs();
            d[at(i, j)] = match (i, j) {
                (0, 0) => g,
                (0, _) => d[at(0, j - 1)] + g,
                (_, 0) => d[at(i - 1, 0)] + g,
                _ => d[at(i - 1, j - 1)].min(d[at(i - 1, j)]).min(d[at(i, j - 1)]) + g,
            };
        }
    }

    let (mut i, mut j) = (n - 1, n - 1);
    let mut steps = vec![(n, n)];
    while (i, j) != (0, 0) {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let (diag, up, left) = (d[at(i - 1, j - 1)], d[at(i - 1, j)], d[at(i, j - 1)]);
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        steps.push((i + 1, j + 1));
    }
    steps.reverse();
    Ok((d[at(n - 1, n - 1)], WarpingPath { steps }))
}

/// DTW cost with two rolling rows; bit-identical to [`dtw_distance`].
/// Callers must pass equal-length, non-empty slices.
pub fn dtw_cost(x: &[f64], y: &[f64]) -> f64 {
    dtw_cost_bounded(x, y, f64::INFINITY).unwrap_or(f64::INFINITY)
}

/// Like [`dtw_cost`], but gives up with `None` once every cell of a row
/// exceeds `bound`, which proves the final cost does too.
pub fn dtw_cost_bounded(x: &[f64], y: &[f64], bound: f64) -> Option<f64> {
    debug_assert!(x.len() == y.len() && !x.is_empty());
    let n = y.len();
    let mut prev = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &yj in y {
        acc += (x[0] - yj).abs();
        prev.push(acc);
    }
    let mut cur = vec![0.0; n];
    for &xi in &x[1..] {
        let mut left = prev[0] + (xi - y[0]).abs();
        cur[0] = left;
        let mut row_min = left;
        for j in 1..n {
            left = prev[j - 1].min(prev[j]).min(left) + (xi - y[j]).abs();
            cur[j] = left;
            row_min = row_min.min(left);
        }
        if row_min > bound {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Some(prev[n - 1])
}

const LANES: usize = 4;

/// DTW costs of one query against many references, four at a time. The
/// lanes are independent, so each result matches [`dtw_cost`] bit for bit
/// while more arithmetic stays in flight.
pub fn dtw_cost_lanes(x: &[f64], ys: &[&[f64]]) -> Vec<f64> {
    lanes(x, ys, |best, g| best + g, dtw_cost)
}

/// Fréchet counterpart of [`dtw_cost_lanes`].
pub fn frechet_cost_lanes(x: &[f64], ys: &[&[f64]]) -> Vec<f64> {
    lanes(x, ys, f64::max, |x, y| frechet_cost(x, y, f64::INFINITY))
}

/// Shared rolling-row recurrence `D(i,j) = step(min(D(i−1,j−1), D(i−1,j), D(i,j−1)), g(i,j))`.
#[inline(always)]
fn lanes(x: &[f64], ys: &[&[f64]], step: impl Fn(f64, f64) -> f64 + Copy, single: fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(ys.len());
    let mut prev = vec![[0.0; LANES]; n];
    let mut cur = vec![[0.0; LANES]; n];
    let mut ycol = vec![[0.0; LANES]; n];
    for chunk in ys.chunks(LANES) {
        if chunk.len() < LANES {
            out.extend(chunk.iter().map(|y| single(x, y)));
            continue;
        }
        debug_assert!(chunk.iter().all(|y| y.len() == n) && n > 0);
        for (j, col) in ycol.iter_mut().enumerate() {
            *col = std::array::from_fn(|l| chunk[l][j]);
        }
        let mut acc: [f64; LANES] = std::array::from_fn(|l| (x[0] - ycol[0][l]).abs());
        prev[0] = acc;
        for j in 1..n {
            for l in 0..LANES {
                acc[l] = step(acc[l], (x[0] - ycol[j][l]).abs());
            }
            prev[j] = acc;
        }
        for &xi in &x[1..] {
            let mut left = [0.0; LANES];
            for l in 0..LANES {
                left[l] = step(prev[0][l], (xi - ycol[0][l]).abs());
            }
            cur[0] = left;
            for j in 1..n {
                let (p0, p1, yj) = (prev[j - 1], prev[j], ycol[j]);
                for l in 0..LANES {
                    left[l] = step(p0[l].min(p1[l]).min(left[l]), (xi - yj[l]).abs());
                }
                cur[j] = left;
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        out.extend_from_slice(&prev[n - 1]);
    }
    out
}

/// Discrete Fréchet distance: the smallest achievable maximum ground distance
/// over all admissible couplings.
pub fn frechet_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    Ok(frechet_cost(x, y, f64::INFINITY))
}

fn frechet_cost(x: &[f64], y: &[f64], bound: f64) -> f64 {
    let n = y.len();
    let mut prev = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    for &yj in y {
        acc = acc.max((x[0] - yj).abs());
        prev.push(acc);
    }
    let mut cur = vec![0.0; n];
    for &xi in &x[1..] {
        let mut left = prev[0].max((xi - y[0]).abs());
        cur[0] = left;
        let mut row_min = left;
        for j in 1..n {
            left = prev[j - 1].min(prev[j]).min(left).max((xi - y[j]).abs());
            cur[j] = left;
            row_min = row_min.min(left);
        }
        if row_min > bound {
            return f64::INFINITY;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lp_examples() {
        assert_eq!(lp_distance(&[0.0, 3.0], &[4.0, 3.0], Norm::L2).unwrap(), 4.0);
        assert_eq!(lp_distance(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], Norm::L1).unwrap(), 4.0);
        assert_eq!(lp_distance(&[1.5, -2.0], &[1.5, -2.0], Norm::L1).unwrap(), 0.0);
        assert!(lp_distance(&[1.0], &[1.0, 2.0], Norm::L1).is_err());
    }

    #[test]
    fn dtw_small_fixture() {
        let (cost, path) = dtw_distance(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(path.steps, vec![(1, 1), (2, 1), (3, 2), (3, 3)]);
    }

    #[test]
    fn dtw_identity_is_diagonal() {
        let x = [3.0, -1.0, 4.0, 1.0, 5.0];
        let (cost, path) = dtw_distance(&x, &x).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(path, WarpingPath::diagonal(5));
    }

    #[test]
    fn dtw_rejects_bad_input() {
        assert!(dtw_distance(&[], &[]).is_err());
        assert!(dtw_distance(&[1.0], &[1.0, 2.0]).is_err());
        assert!(frechet_distance(&[], &[]).is_err());
        assert!(DistanceKind::Dtw.distance(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn single_sample() {
        assert_eq!(dtw_distance(&[2.0], &[-1.5]).unwrap().0, 3.5);
        assert_eq!(frechet_distance(&[2.0], &[-1.5]).unwrap(), 3.5);
    }

    #[test]
    fn frechet_example() {
        assert_eq!(frechet_distance(&[0.0, 2.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn path_validation_examples() {
        assert!(validate_path(&WarpingPath::diagonal(3), 3));
        let off = WarpingPath {
            steps: vec![(1, 2), (2, 3), (3, 3)],
        };
        assert!(!validate_path(&off, 3));
        let jump = WarpingPath {
            steps: vec![(1, 1), (2, 2), (4, 3), (4, 4)],
        };
        assert!(!validate_path(&jump, 4));
        let stall = WarpingPath {
            steps: vec![(1, 1), (1, 1), (2, 2)],
        };
        assert!(!validate_path(&stall, 2));
        assert!(!validate_path(&WarpingPath { steps: vec![] }, 0));
    }

    #[test]
    fn time_shift_robustness_on_test_pulse() {
        // Raised-cosine pulse of width 40 in 200 samples, shifted by up to n/10.
        let n = 200;
        let pulse: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 - 80.0;
                if (0.0..40.0).contains(&t) {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * t / 40.0).cos()
                } else {
                    0.0
                }
            })
            .collect();
        for k in 1..=n / 10 {
            let shifted: Vec<f64> = (0..n).map(|i| pulse[(i + n - k) % n]).collect();
            let dtw = dtw_cost(&pulse, &shifted);
            let l1 = lp_distance(&pulse, &shifted, Norm::L1).unwrap();
            assert!(dtw <= 0.05 * l1, "k={k}: dtw {dtw} l1 {l1}");
        }
    }

    fn pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1..=max_len).prop_flat_map(|n| {
            (
                prop::collection::vec(-50i32..50, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
                prop::collection::vec(-50i32..50, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            )
        })
    }

    fn real_pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1..=max_len).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e3f64..1e3, n),
                prop::collection::vec(-1e3f64..1e3, n),
            )
        })
    }

    proptest! {
        #[test]
        fn kernels_agree((x, y) in real_pair(40)) {
            let (cost, path) = dtw_distance(&x, &y).unwrap();
            prop_assert_eq!(dtw_cost(&x, &y), cost);
            prop_assert_eq!(path.cost(&x, &y), cost);
            prop_assert!(validate_path(&path, x.len()));
            let ys = vec![y.as_slice(), x.as_slice(), y.as_slice(), x.as_slice(), y.as_slice()];
            let lanes = dtw_cost_lanes(&x, &ys);
            prop_assert_eq!(lanes, vec![cost, 0.0, cost, 0.0, cost]);
            let fr = frechet_distance(&x, &y).unwrap();
            prop_assert_eq!(frechet_cost_lanes(&x, &ys), vec![fr, 0.0, fr, 0.0, fr]);
            prop_assert_eq!(dtw_cost_bounded(&x, &y, cost), Some(cost));
        }

        #[test]
        fn symmetric((x, y) in real_pair(30)) {
            prop_assert_eq!(dtw_cost(&x, &y), dtw_cost(&y, &x));
            prop_assert_eq!(frechet_distance(&x, &y).unwrap(), frechet_distance(&y, &x).unwrap());
        }

        #[test]
        fn identity(x in prop::collection::vec(-1e3f64..1e3, 1..30)) {
            for kind in DistanceKind::ALL {
                prop_assert_eq!(kind.distance(&x, &x).unwrap(), 0.0);
            }
        }

        #[test]
        fn bounds((x, y) in real_pair(30)) {
            let n = x.len();
            let max_ground = x.iter().flat_map(|a| y.iter().map(move |b| (a - b).abs())).fold(0.0, f64::max);
            let dtw = dtw_cost(&x, &y);
            let fr = frechet_distance(&x, &y).unwrap();
            prop_assert!(dtw <= (2 * n - 1) as f64 * max_ground);
            prop_assert!(fr <= max_ground);
            prop_assert!(dtw >= (x[0] - y[0]).abs());
            prop_assert!(dtw >= (x[n - 1] - y[n - 1]).abs());
            prop_assert!(fr >= (x[0] - y[0]).abs());
        }

        #[test]
        fn scale_equivariance((x, y) in pair(20), c in prop::sample::select(vec![0.5, 2.0, 3.0, -4.0, 0.25, 7.0])) {
            let sx: Vec<f64> = x.iter().map(|v| c * v).collect();
            let sy: Vec<f64> = y.iter().map(|v| c * v).collect();
            prop_assert_eq!(dtw_cost(&sx, &sy), c.abs() * dtw_cost(&x, &y));
            prop_assert_eq!(frechet_distance(&sx, &sy).unwrap(), c.abs() * frechet_distance(&x, &y).unwrap());
        }

        #[test]
        fn early_abandon_is_sound((x, y) in real_pair(30), frac in 0.0f64..2.0) {
            let cost = dtw_cost(&x, &y);
            match dtw_cost_bounded(&x, &y, cost * frac) {
                Some(c) => prop_assert_eq!(c, cost),
                None => prop_assert!(cost > cost * frac),
            }
        }
    }
}
