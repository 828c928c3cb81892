//! Quadrature, bracketed root finding and limit probing.

pub mod limits;
pub mod quad;
pub mod roots;
pub mod sum;

pub use limits::{probe_limit, Extended};
pub use quad::{integrate, QuadConfig, Quadrature};
pub use roots::{bisect, golden_max};
pub use sum::NeumaierSum;

/// `n` log-spaced points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(a > 0.0 && b > a && n >= 2);
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                a
            } else if i == n - 1 {
                b
            } else {
                (la + (lb - la) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}
