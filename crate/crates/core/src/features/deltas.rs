use crate::error::{Error, Result};

/// Regression half-width used for LFCC deltas.
pub const DELTA_WINDOW: usize = 2;

/// Regression deltas along the time axis of a `rows x cols` row-major
/// matrix: `d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)`, with frame
/// indices clamped at the edges.
pub fn deltas(values: &[f64], rows: usize, cols: usize, window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::invalid("delta window must be at least 1"));
    }
    if rows == 0 || cols == 0 || values.is_empty() {
        return Err(Error::invalid("deltas of an empty matrix"));
    }
    if values.len() != rows * cols {
        return Err(Error::shape(format!(
            "deltas: {} values for a {rows}x{cols} matrix",
            values.len()
        )));
    }
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let last = cols as isize - 1;
    let at = |row: &[f64], t: isize| row[t.clamp(0, last) as usize];
    let mut out = vec![0.0; values.len()];
    for (src, dst) in values.chunks(cols).zip(out.chunks_mut(cols)) {
        for (t, d) in dst.iter_mut().enumerate() {
            let t = t as isize;
            let num: f64 = (1..=window as isize)
                .map(|n| n as f64 * (at(src, t + n) - at(src, t - n)))
                .sum();
            *d = num / denom;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rows_have_zero_delta() {
        let d = deltas(&[3.0; 12], 2, 6, 2).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_has_slope_delta_inside() {
        let row: Vec<f64> = (0..10).map(|t| 0.5 * t as f64 - 1.0).collect();
        let d = deltas(&row, 1, 10, 2).unwrap();
        for &v in &d[2..8] {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn fewer_frames_than_window_still_defined() {
        let d = deltas(&[1.0, 4.0], 1, 2, 3).unwrap();
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(deltas(&[], 0, 0, 2).is_err());
        assert!(deltas(&[1.0], 1, 1, 0).is_err());
        assert!(deltas(&[1.0, 2.0], 1, 3, 1).is_err());
    }
}
