use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Pearson correlation, or 0 when either column has zero variance.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Mean absolute pairwise Pearson correlation between the columns of `x`:
/// `1 / (d (d - 1)) * sum_{i != j} |rho(x_i, x_j)|`.
///
/// Constant columns contribute zero.
pub fn corr_metric(x: &Matrix) -> Result<f64> {
    let d = x.cols();
    if d < 2 {
        return Err(Error::invalid(format!("corr_metric needs at least 2 columns, got {d}")));
    }
    if x.rows() == 0 {
        return Err(Error::invalid("corr_metric needs at least one row"));
    }
    let cols: Vec<Vec<f64>> = (0..d).map(|c| x.column(c)).collect();
    let mut pairs = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            pairs.push(pearson(&cols[i], &cols[j]).abs());
        }
    }
    // summing in sorted order makes the result independent of column order
    pairs.sort_by(f64::total_cmp);
    Ok(2.0 * pairs.iter().sum::<f64>() / (d * (d - 1)) as f64)
}

/// Average ranks (ties share the mean rank), 1-based.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("spearman needs two equal-length samples of size >= 2"));
    }
    Ok(pearson(&ranks(x), &ranks(y)))
}
