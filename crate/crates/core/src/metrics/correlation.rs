use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A correlation value. `degenerate` marks a constant input, for which the
/// value is defined as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("correlation of lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Shape("correlation needs at least 2 values".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Shape("correlation of non-finite values".into()));
    }
    Ok(())
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Correlation {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    if da == 0.0 || db == 0.0 {
        return Correlation { value: 0.0, degenerate: true };
    }
    Correlation { value: (num / (da * db).sqrt()).clamp(-1.0, 1.0), degenerate: false }
}

/// Pearson correlation of the raw values.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Correlation> {
    check(a, b)?;
    Ok(pearson_unchecked(a, b))
}

/// Spearman rank correlation of `|a|` and `|b|`, average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Correlation> {
    check(a, b)?;
    let abs = |x: &[f64]| x.iter().map(|v| v.abs()).collect::<Vec<_>>();
    Ok(pearson_unchecked(&average_ranks(&abs(a)), &average_ranks(&abs(b))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_reversed() {
        let a = [0.1, 0.5, 0.3, 0.9];
        assert_eq!(spearman(&a, &a).unwrap().value, 1.0);
        let b = [0.9, 0.3, 0.5, 0.1];
        assert_eq!(spearman(&a, &b).unwrap().value, -1.0);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn constant_is_degenerate() {
        let c = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c, Correlation { value: 0.0, degenerate: true });
        assert!(pearson(&[2.0; 4], &[2.0; 4]).unwrap().degenerate);
    }

    #[test]
    fn absolute_values_are_ranked() {
        assert_eq!(spearman(&[-3.0, 1.0, 2.0], &[3.0, 1.0, 2.0]).unwrap().value, 1.0);
    }

    #[test]
    fn bad_lengths() {
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }
}
