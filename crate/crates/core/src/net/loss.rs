//! Weighted focal binary cross-entropy over heatmaps.
//!
//! Per-pixel term with prediction q (clamped) and target y:
//! `-[(1-q)^2 * y * ln(q) + q^2 * (1-y) * ln(1-q)]`.
//! The squared factors down-weight confident pixels so the sparse ball
//! region dominates the gradient.

use crate::error::{Error, Result};
use crate::net::{HeatmapStack, sigmoid_strict};

/// Clamp bound applied to predictions inside the loss.
pub const Q_CLAMP: f64 = 1e-7;

/// Scalar loss with per-slice breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Mean per-pixel term over all slices.
    pub total: f64,
    /// Mean per-pixel term of each slice.
    pub per_slice: Vec<f64>,
    /// Number of per-pixel terms contributing to `total`.
    pub pixel_count: usize,
}

pub(crate) fn wbce_term(pred: f64, y: f64) -> f64 {
    let q = pred.clamp(Q_CLAMP, 1.0 - Q_CLAMP);
    -((1.0 - q) * (1.0 - q) * y * q.ln() + q * q * (1.0 - y) * (1.0 - q).ln())
}

/// Loss between a predicted stack (values in (0, 1)) and a ground-truth
/// stack (values in [0, 1]).
pub fn wbce_loss(pred: &HeatmapStack, target: &HeatmapStack) -> Result<LossReport> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} slices, target has {}",
            pred.len(),
            target.len()
        )));
    }
    let mut per_slice = Vec::with_capacity(pred.len());
    let mut total = 0.0;
    let mut pixel_count = 0;
    for t in 0..pred.len() {
        let p = pred.map(t);
        let g = target.map(t);
        if p.dim() != g.dim() {
            return Err(Error::ShapeMismatch(format!(
                "slice {t}: prediction {:?} vs target {:?}",
                p.dim(),
                g.dim()
            )));
        }
        let sum: f64 = p.iter().zip(g.iter()).map(|(&q, &y)| wbce_term(q, y)).sum();
        per_slice.push(sum / p.len() as f64);
        total += sum;
        pixel_count += p.len();
    }
    Ok(LossReport {
        total: total / pixel_count as f64,
        per_slice,
        pixel_count,
    })
}

/// Exact derivative of the per-pixel term with respect to the pre-sigmoid
/// logit `z`, with `q = sigmoid(z)`. Zero where the clamp saturates.
pub fn wbce_grad_logit(z: f64, y: f64) -> f64 {
    let q = sigmoid_strict(z);
    if q <= Q_CLAMP || q >= 1.0 - Q_CLAMP {
        return 0.0;
    }
    let dterm_dq = -(y * (-2.0 * (1.0 - q) * q.ln() + (1.0 - q) * (1.0 - q) / q)
        + (1.0 - y) * (2.0 * q * (1.0 - q).ln() - q * q / (1.0 - q)));
    dterm_dq * q * (1.0 - q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn stack(vals: &[f64]) -> HeatmapStack {
        HeatmapStack::from_maps(vec![Array2::from_shape_vec((1, vals.len()), vals.to_vec())
            .unwrap()])
        .unwrap()
    }

    #[test]
    fn exact_hit_limit_is_near_zero() {
        let report = wbce_loss(&stack(&[1.0 - 1e-9]), &stack(&[1.0])).unwrap();
        assert!(report.total < 1e-6);
    }

    #[test]
    fn half_prediction_positive_target() {
        // oracle: 0.25 * ln 2
        let expected = 0.17328679513998632;
        let report = wbce_loss(&stack(&[0.5]), &stack(&[1.0])).unwrap();
        assert!((report.total - expected).abs() < 1e-15);
    }

    #[test]
    fn half_prediction_is_symmetric_in_target() {
        let pos = wbce_loss(&stack(&[0.5]), &stack(&[1.0])).unwrap();
        let neg = wbce_loss(&stack(&[0.5]), &stack(&[0.0])).unwrap();
        assert_eq!(pos.total, neg.total);
    }

    #[test]
    fn total_is_mean_of_per_pixel_terms() {
        let pred = HeatmapStack::from_maps(vec![
            Array2::from_elem((2, 2), 0.3),
            Array2::from_elem((2, 2), 0.8),
        ])
        .unwrap();
        let target = HeatmapStack::from_maps(vec![
            Array2::from_elem((2, 2), 1.0),
            Array2::from_elem((2, 2), 0.0),
        ])
        .unwrap();
        let report = wbce_loss(&pred, &target).unwrap();
        assert_eq!(report.pixel_count, 8);
        let manual = (4.0 * wbce_term(0.3, 1.0) + 4.0 * wbce_term(0.8, 0.0)) / 8.0;
        assert!((report.total - manual).abs() < 1e-15);
        assert!((report.per_slice[0] - wbce_term(0.3, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let pred = stack(&[0.5, 0.5]);
        let target = stack(&[1.0]);
        assert!(wbce_loss(&pred, &target).is_err());
    }

    #[test]
    fn logit_gradient_matches_central_differences() {
        // 50 random (logit, target) pairs, rel err < 1e-4
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..50 {
            let z = rng.gen_range(-6.0..6.0);
            let y = if rng.gen_bool(0.3) {
                rng.gen_range(0.0..1.0)
            } else {
                f64::from(rng.gen_bool(0.5) as u8)
            };
            let analytic = wbce_grad_logit(z, y);
            let up = wbce_term(sigmoid_strict(z + h), y);
            let dn = wbce_term(sigmoid_strict(z - h), y);
            let fd = (up - dn) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-4, "z={z} y={y}: analytic {analytic} vs fd {fd}");
        }
    }

    #[test]
    fn gradient_is_zero_in_clamped_region() {
        assert_eq!(wbce_grad_logit(40.0, 0.0), 0.0);
        assert_eq!(wbce_grad_logit(-40.0, 1.0), 0.0);
    }
}
