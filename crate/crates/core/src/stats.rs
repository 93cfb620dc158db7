//! Small statistics shared by the map and scatter analyses. All accumulation
//! is in f64.

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population z-scores. Fails on fewer than two values or zero variance.
pub fn zscores(xs: &[f32]) -> Result<Vec<f64>> {
    let xs: Vec<f64> = xs.iter().map(|&x| f64::from(x)).collect();
    if xs.len() < 2 {
        return Err(Error::DegenerateScores("z-scores need at least two values".into()));
    }
    let m = mean(&xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::DegenerateScores("zero variance".into()));
    }
    let sd = var.sqrt();
    Ok(xs.iter().map(|x| (x - m) / sd).collect())
}

/// `(rank - 1) / (n - 1)` with 1-based average ranks for ties. A single value
/// maps to 0.5.
pub fn rank_normalize(xs: &[f32]) -> Vec<f64> {
    let n = xs.len();
    if n == 1 {
        return vec![0.5];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j share the average of 1-based ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks.iter().map(|r| (r - 1.0) / (n - 1) as f64).collect()
}

/// Pearson correlation, clamped to [-1, 1].
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidParameter("correlation needs paired values".into()));
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateScores("correlation needs at least two points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0f64, 0f64, 0f64);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateScores("zero variance on an axis".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscore_basics() {
        let z = zscores(&[1.0, 2.0, 3.0]).unwrap();
        let sd = (2.0f64 / 3.0).sqrt();
        assert!((z[0] + 1.0 / sd).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
        assert!(zscores(&[4.0, 4.0]).is_err());
        assert!(zscores(&[4.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(rank_normalize(&[0.3, 0.1, 0.2]), vec![1.0, 0.0, 0.5]);
        // ranks 1, 2.5, 2.5, 4
        let r = rank_normalize(&[0.0, 0.5, 0.5, 1.0]);
        assert_eq!(r, vec![0.0, 0.5, 0.5, 1.0]);
        assert_eq!(rank_normalize(&[0.7, 0.7]), vec![0.5, 0.5]);
        assert_eq!(rank_normalize(&[9.0]), vec![0.5]);
    }

    #[test]
    fn pearson_fixed_points() {
        // Reference computed by hand:
        // x = 1..10, y = [2, 4, 5, 4, 5, 7, 8, 9, 10, 12]
        // mean x 5.5, mean y 6.6, Sxy 83.0, Sxx 82.5, Syy 88.4
        // r = 83 / sqrt(82.5 * 88.4) = 0.971908...
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y = [2.0, 4.0, 5.0, 4.0, 5.0, 7.0, 8.0, 9.0, 10.0, 12.0];
        let r = pearson(&x, &y).unwrap();
        assert!((r - 83.0 / (82.5f64 * 88.4).sqrt()).abs() < 1e-12);
        assert!((r - 0.971908).abs() < 1e-6);
        assert_eq!(pearson(&x, &x).unwrap(), 1.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &neg).unwrap(), -1.0);
        assert!(pearson(&x, &[1.0; 10]).is_err());
    }
}
