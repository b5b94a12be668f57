//! Central-difference gradient oracle.
//!
//! The numeric side uses only `predict` and loss values, never `backward`,
//! so it stays an independent check on the reverse-mode implementation.

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::tensor::Tensor;

/// Scalar loss over the network output, together with its gradient with
/// respect to that output.
pub type LossFn<'a> = dyn Fn(&Tensor) -> Result<(f64, Tensor)> + 'a;

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error over every weight and bias.
    pub max_rel_err: f64,
    /// Human-readable location of the worst parameter.
    pub worst: String,
    /// Number of parameters compared.
    pub checked: usize,
    /// Whether the worst error was within the requested tolerance.
    pub within_tol: bool,
}

/// Relative error with a floor so near-zero pairs compare absolutely.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-8)
}

/// Worst relative error between two flat gradient vectors.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Compares every analytic parameter gradient of `mlp` on `batch` against a
/// central difference `(L(θ+h) − L(θ−h)) / 2h`.
pub fn finite_diff_check(
    mlp: &mut Mlp,
    batch: &Tensor,
    loss: &LossFn,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::Parameter(format!("step h must be in (0, 1e-3], got {}", h)));
    }

    // Analytic gradients.
    let out = mlp.forward(batch)?;
    let (_, out_grad) = loss(&out)?;
    mlp.backward(&out_grad)?;
    let analytic: Vec<Vec<f64>> = mlp
        .layers()
        .iter()
        .flat_map(|l| {
            [
                l.weights().grad().expect("populated by backward").to_vec(),
                l.bias().grad().expect("populated by backward").to_vec(),
            ]
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
        within_tol: true,
    };

    let layer_count = mlp.layers().len();
    for li in 0..layer_count {
        for (pi, kind) in ["weights", "bias"].iter().enumerate() {
            let len = {
                let layer = &mlp.layers()[li];
                if pi == 0 {
                    layer.weights().len()
                } else {
                    layer.bias().len()
                }
            };
            for idx in 0..len {
                let numeric = {
                    let eval = |mlp: &mut Mlp, delta: f64| -> Result<f64> {
                        {
                            let layer = &mut mlp.layers_mut()[li];
                            let t = if pi == 0 { &mut layer.weights } else { &mut layer.bias };
                            t.data_mut()[idx] += delta;
                        }
                        let out = mlp.predict(batch)?;
                        let (l, _) = loss(&out)?;
                        {
                            let layer = &mut mlp.layers_mut()[li];
                            let t = if pi == 0 { &mut layer.weights } else { &mut layer.bias };
                            t.data_mut()[idx] -= delta;
                        }
                        Ok(l)
                    };
                    let plus = eval(mlp, h)?;
                    let minus = eval(mlp, -h)?;
                    (plus - minus) / (2.0 * h)
                };
                let a = analytic[li * 2 + pi][idx];
                let e = rel_err(a, numeric);
                report.checked += 1;
                if e > report.max_rel_err {
                    report.max_rel_err = e;
                    report.worst = format!("layer {} {} [{}]", li, kind, idx);
                }
            }
        }
    }

    report.within_tol = report.max_rel_err <= tol;
    mlp.reset_training_state();
    Ok(report)
}
