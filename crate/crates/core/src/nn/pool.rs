use super::Matrix;
use crate::error::{Error, Result};

/// Winning row of every `(group, column)` cell; `None` for empty groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolTape {
    argmax: Vec<Option<usize>>,
    groups: usize,
    cols: usize,
    rows: usize,
}

impl PoolTape {
    pub fn argmax(&self, group: usize, col: usize) -> Option<usize> {
        self.argmax[group * self.cols + col]
    }

    /// All winners, group-major.
    pub fn winners(&self) -> &[Option<usize>] {
        &self.argmax
    }
}

/// Elementwise max over consecutive row groups of `messages`.
///
/// Group `g` covers rows `offsets[g]..offsets[g + 1]`. Empty groups pool to
/// zero. Ties go to the lowest row.
pub fn max_pool(messages: &Matrix, offsets: &[usize]) -> Result<(Matrix, PoolTape)> {
    if offsets.is_empty() || offsets[offsets.len() - 1] != messages.rows() || offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Shape {
            context: "max-pool groups",
            expected: format!("nondecreasing offsets ending at {}", messages.rows()),
            actual: format!("{offsets:?}"),
        });
    }
    let groups = offsets.len() - 1;
    let cols = messages.cols();
    let mut out = Matrix::zeros(groups, cols);
    let mut argmax = vec![None; groups * cols];
    for g in 0..groups {
        let (lo, hi) = (offsets[g], offsets[g + 1]);
        if lo == hi {
            continue;
        }
        let best = out.row_mut(g);
        best.copy_from_slice(messages.row(lo));
        let arg = &mut argmax[g * cols..(g + 1) * cols];
        arg.fill(Some(lo));
        for r in lo + 1..hi {
            for (c, &m) in messages.row(r).iter().enumerate() {
                if m > best[c] {
                    best[c] = m;
                    arg[c] = Some(r);
                }
            }
        }
    }
    Ok((
        out,
        PoolTape {
            argmax,
            groups,
            cols,
            rows: messages.rows(),
        },
    ))
}

/// Routes each pooled gradient to the row that won the max.
pub fn max_pool_backward(tape: &PoolTape, upstream: &Matrix) -> Result<Matrix> {
    if upstream.rows() != tape.groups || upstream.cols() != tape.cols {
        return Err(Error::Shape {
            context: "max-pool upstream gradient",
            expected: format!("{}x{}", tape.groups, tape.cols),
            actual: format!("{}x{}", upstream.rows(), upstream.cols()),
        });
    }
    let mut d = Matrix::zeros(tape.rows, tape.cols);
    for g in 0..tape.groups {
        for c in 0..tape.cols {
            if let Some(r) = tape.argmax(g, c) {
                let cur = d.get(r, c);
                d.set(r, c, cur + upstream.get(g, c));
            }
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_groups_and_zero_fills_empty_ones() {
        let m = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 2.0], vec![-1.0, -2.0]]).unwrap();
        let (out, tape) = max_pool(&m, &[0, 2, 2, 3]).unwrap();
        assert_eq!(out.row(0), &[3.0, 5.0]);
        assert_eq!(out.row(1), &[0.0, 0.0]);
        assert_eq!(out.row(2), &[-1.0, -2.0]);
        assert_eq!(tape.argmax(0, 0), Some(1));
        assert_eq!(tape.argmax(0, 1), Some(0));
        assert_eq!(tape.argmax(1, 0), None);
    }

    #[test]
    fn ties_go_to_lowest_row() {
        let m = Matrix::from_rows(&[vec![2.0], vec![2.0], vec![2.0]]).unwrap();
        let (_, tape) = max_pool(&m, &[0, 3]).unwrap();
        assert_eq!(tape.argmax(0, 0), Some(0));
        let d = max_pool_backward(&tape, &Matrix::from_rows(&[vec![1.5]]).unwrap()).unwrap();
        assert_eq!(d.data(), &[1.5, 0.0, 0.0]);
    }

    #[test]
    fn duplicate_rows_do_not_change_the_max() {
        let m = Matrix::from_rows(&[vec![0.3, -1.0], vec![0.7, -4.0]]).unwrap();
        let dup = m.vstack(&Matrix::from_rows(&[vec![0.7, -4.0]]).unwrap()).unwrap();
        assert_eq!(max_pool(&m, &[0, 2]).unwrap().0, max_pool(&dup, &[0, 3]).unwrap().0);
    }

    #[test]
    fn bad_offsets_are_rejected() {
        let m = Matrix::zeros(3, 1);
        assert!(max_pool(&m, &[0, 2]).is_err());
        assert!(max_pool(&m, &[0, 2, 1, 3]).is_err());
        assert!(max_pool(&m, &[]).is_err());
    }
}
