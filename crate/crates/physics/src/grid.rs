use ndarray::Array2;

/// `n` equidistant points on `[lo, hi]` as an `n × 1` column.
pub fn uniform_points(lo: f64, hi: f64, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, 1), |(i, _)| {
        if n == 1 {
            0.5 * (lo + hi)
        } else if i == n - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

/// `n × n` tensor grid on the unit square, `n² × 2`, row `ix * n + iy`.
pub fn tensor_grid(n: usize) -> Array2<f64> {
    let step = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    Array2::from_shape_fn((n * n, 2), |(p, c)| {
        let idx = if c == 0 { p / n } else { p % n };
        idx as f64 * step
    })
}
