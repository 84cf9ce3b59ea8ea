use ndarray::Array1;

use crate::error::{Error, Result};

pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

const P_FLOOR: f64 = 1e-12;

/// `−(1−p)^γ · ln p` for `p = probs[label]`, with `p` clamped at 1e-12.
pub fn focal_loss(probs: &Array1<f64>, label: usize, gamma: f64) -> Result<f64> {
    let p = *probs
        .get(label)
        .ok_or_else(|| Error::ShapeMismatch(format!("label {label} outside {} classes", probs.len())))?;
    let p = p.max(P_FLOOR);
    Ok(-(1.0 - p).powf(gamma) * p.ln())
}

/// Gradient of the focal loss with respect to the softmax logits.
pub fn focal_loss_grad_logits(probs: &Array1<f64>, label: usize, gamma: f64) -> Array1<f64> {
    let p = probs[label].max(P_FLOOR);
    let q = 1.0 - p;
    let mut dl_dp = -q.powf(gamma) / p;
    if gamma != 0.0 {
        dl_dp += gamma * q.powf(gamma - 1.0) * p.ln();
    }
    let mut out = Array1::zeros(probs.len());
    for j in 0..probs.len() {
        let delta = if j == label { 1.0 } else { 0.0 };
        out[j] = dl_dp * p * (delta - probs[j]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gamma_two_at_half() {
        let p = array![0.5, 0.25, 0.25];
        let l = focal_loss(&p, 0, 2.0).unwrap();
        assert!((l - 0.25 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn certain_label_has_zero_loss() {
        assert_eq!(focal_loss(&array![0.0, 1.0, 0.0], 1, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_label() {
        assert!(focal_loss(&array![0.5, 0.5], 2, 2.0).is_err());
    }

    #[test]
    fn logit_gradient_matches_finite_difference() {
        let z = array![0.3, -1.2, 0.8];
        let sm = |z: &Array1<f64>| {
            let e = z.mapv(f64::exp);
            let s = e.sum();
            e / s
        };
        for gamma in [0.0, 1.0, 2.0] {
            let g = focal_loss_grad_logits(&sm(&z), 1, gamma);
            for j in 0..3 {
                let h = 1e-6;
                let mut zp = z.clone();
                zp[j] += h;
                let mut zm = z.clone();
                zm[j] -= h;
                let n = (focal_loss(&sm(&zp), 1, gamma).unwrap() - focal_loss(&sm(&zm), 1, gamma).unwrap()) / (2.0 * h);
                assert!((n - g[j]).abs() < 1e-7, "gamma {gamma} j {j}: {n} vs {}", g[j]);
            }
        }
    }
}
