/// Indices of the rows kept when thinning `rows` to at most `max_points`:
/// the rows are split into equal buckets and each bucket keeps the rows
/// holding the minimum and maximum of every column in `cols`, so peaks
/// survive. First and last rows are always kept.
pub fn decimate(rows: &[Vec<f64>], cols: &[usize], max_points: usize) -> Vec<usize> {
    let n = rows.len();
    if n <= max_points || n <= 2 {
        return (0..n).collect();
    }
    let per_bucket = (2 * cols.len()).max(1);
    let buckets = ((max_points.saturating_sub(2)) / per_bucket).max(1);
    let mut keep = vec![0, n - 1];
    for b in 0..buckets {
        let lo = 1 + b * (n - 2) / buckets;
        let hi = 1 + (b + 1) * (n - 2) / buckets;
        if lo >= hi {
            continue;
        }
        for &c in cols {
            let (mut imin, mut imax) = (lo, lo);
            for i in lo..hi {
                if rows[i][c] < rows[imin][c] {
                    imin = i;
                }
                if rows[i][c] > rows[imax][c] {
                    imax = i;
                }
            }
            keep.push(imin);
            keep.push(imax);
        }
    }
    keep.sort_unstable();
    keep.dedup();
    keep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_extremes_and_limit() {
        let rows: Vec<Vec<f64>> = (0..100_000)
            .map(|i| {
                let t = i as f64 * 1e-3;
                vec![t, (7.0 * t).sin() + if i == 54_321 { 5.0 } else { 0.0 }]
            })
            .collect();
        let k = decimate(&rows, &[1], 5000);
        assert!(k.len() <= 5000);
        assert!(k.contains(&54_321));
        assert_eq!((k[0], *k.last().unwrap()), (0, 99_999));
        assert!(k.windows(2).all(|w| w[0] < w[1]));
        let short: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        assert_eq!(decimate(&short, &[0], 5000).len(), 10);
    }
}
