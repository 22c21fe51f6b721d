//! Exhaustive reference implementations for small inputs. They enumerate
//! every admissible warping path, so their cost grows exponentially with `n`.

use crate::error::{invalid, Result};

pub const MAX_DTW_ORACLE_LEN: usize = 12;
pub const MAX_FRECHET_ORACLE_LEN: usize = 8;

fn check(x: &[f64], y: &[f64], max: usize) -> Result<()> {
    if x.len() != y.len() || x.is_empty() {
        return Err(invalid(format!("need equal non-empty lengths, got {} and {}", x.len(), y.len())));
    }
    if x.len() > max {
        return Err(invalid(format!("oracle refuses n = {} (limit {max})", x.len())));
    }
    Ok(())
}

/// Visits every path from (0,0) to (n−1,n−1), folding ground distances with
/// `step`, and returns the smallest final value.
fn enumerate(x: &[f64], y: &[f64], step: fn(f64, f64) -> f64) -> f64 {
    fn walk(x: &[f64], y: &[f64], i: usize, j: usize, acc: f64, step: fn(f64, f64) -> f64) -> f64 {
        let n = x.len();
        if i == n - 1 && j == n - 1 {
            return acc;
        }
        let mut best = f64::INFINITY;
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            let (a, b) = (i + di, j + dj);
            if a < n && b < n {
                best = best.min(walk(x, y, a, b, step(acc, (x[a] - y[b]).abs()), step));
            }
        }
        best
    }
    walk(x, y, 0, 0, (x[0] - y[0]).abs(), step)
}

/// Minimum summed ground distance over all warping paths, `n ≤ 12`.
pub fn brute_force_dtw(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y, MAX_DTW_ORACLE_LEN)?;
    Ok(enumerate(x, y, |acc, g| acc + g))
}

/// Minimum over couplings of the maximum ground distance, `n ≤ 8`.
pub fn brute_force_frechet(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y, MAX_FRECHET_ORACLE_LEN)?;
    Ok(enumerate(x, y, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(brute_force_dtw(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(brute_force_dtw(&[4.0], &[1.5]).unwrap(), 2.5);
        assert_eq!(brute_force_dtw(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(brute_force_frechet(&[0.0, 2.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn refuses_large_or_mismatched() {
        assert!(brute_force_dtw(&[0.0; 13], &[0.0; 13]).is_err());
        assert!(brute_force_frechet(&[0.0; 9], &[0.0; 9]).is_err());
        assert!(brute_force_dtw(&[0.0; 2], &[0.0; 3]).is_err());
        assert!(brute_force_dtw(&[], &[]).is_err());
    }
}
