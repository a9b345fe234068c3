//! Fixed-rule quadrature helpers shared by the kernel checks and the risk harness.

/// Composite Simpson nodes and weights on `[a, b]`. `n` is rounded up to an odd count ≥ 3.
pub fn simpson(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = if n < 3 { 3 } else if n % 2 == 0 { n + 1 } else { n };
    if a == b {
        return (vec![a], vec![0.0]);
    }
    let h = (b - a) / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
    let weights = (0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (nodes, weights)
}

/// Composite trapezoid nodes and weights on `[a, b]` with `n ≥ 2` equally spaced points.
pub fn trapezoid(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(2);
    let h = (b - a) / (n - 1) as f64;
    let nodes = (0..n).map(|i| a + h * i as f64).collect();
    let weights = (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect();
    (nodes, weights)
}

/// `x * ln(y)` with the convention `0 * ln(0) = 0`.
#[inline]
pub fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}
