//! Small dense vector helpers. Problem sizes here are d <= 30, so plain
//! slices are enough and keep the hot loops allocation free.

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// y += a * x
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Row-major matrix times vector.
pub fn mat_vec(data: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(data.len(), rows * cols);
    (0..rows)
        .map(|i| dot(&data[i * cols..(i + 1) * cols], x))
        .collect()
}

/// Row-major matrix transpose times vector.
pub fn mat_t_vec(data: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(data.len(), rows * cols);
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        axpy(x[i], &data[i * cols..(i + 1) * cols], &mut out);
    }
    out
}
