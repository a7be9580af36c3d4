//! Helpers shared by the integration suites.

#![allow(dead_code)]

use genac_core::SeqModel;

/// Central finite differences of `f` with respect to every model parameter.
pub fn fd_grad(model: &SeqModel, h: f64, f: impl Fn(&SeqModel) -> f64) -> Vec<f64> {
    let mut m = model.clone();
    (0..model.param_count())
        .map(|i| {
            let x = m.params()[i];
            m.params_mut()[i] = x + h;
            let up = f(&m);
            m.params_mut()[i] = x - h;
            let down = f(&m);
            m.params_mut()[i] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-8 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}
