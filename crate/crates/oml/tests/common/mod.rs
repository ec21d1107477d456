//! Shared helpers for the integration suites. The finite-difference
//! routines here are the independent oracle the gradient checks compare
//! against; they must stay independent of the library's gradient code.

use ndarray::Array1;

/// Central finite differences of a scalar function.
pub fn fd_grad(f: impl Fn(&Array1<f64>) -> f64, w: &Array1<f64>, eps: f64) -> Array1<f64> {
    let mut g = Array1::zeros(w.len());
    let mut p = w.clone();
    for i in 0..w.len() {
        p[i] = w[i] + eps;
        let hi = f(&p);
        p[i] = w[i] - eps;
        let lo = f(&p);
        p[i] = w[i];
        g[i] = (hi - lo) / (2.0 * eps);
    }
    g
}

pub fn norm(a: &Array1<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
