use crate::error::{Error, Result};
use crate::nn::ParamVector;

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Weighted average `Σ α_i w_i`, accumulated in the given client order.
pub fn aggregate(updates: &[(ParamVector, f64)]) -> Result<ParamVector> {
    let (first, rest) = updates
        .split_first()
        .ok_or_else(|| Error::EmptyDataset("no client updates to aggregate".into()))?;
    let total: f64 = updates.iter().map(|(_, a)| a).sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE || updates.iter().any(|(_, a)| *a < 0.0) {
        return Err(Error::WeightSum(total));
    }
    let mut acc: Vec<f64> = first.0.data().iter().map(|v| first.1 * v).collect();
    for (w, a) in rest {
        if w.len() != acc.len() {
            return Err(Error::LengthMismatch {
                context: "client update".into(),
                expected: acc.len(),
                actual: w.len(),
            });
        }
        for (s, v) in acc.iter_mut().zip(w.data()) {
            *s += a * v;
        }
    }
    first.0.with_data(acc)
}

/// `M_i / Σ_j M_j`.
pub fn size_proportional_weights(sizes: &[usize]) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    sizes.iter().map(|&m| m as f64 / total as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerParams;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::flatten(&[Some(LayerParams {
            weights: v[..v.len() - 1].to_vec(),
            biases: vec![v[v.len() - 1]],
        })])
    }

    #[test]
    fn single_client_is_identity() {
        let w = pv(&[1.5, -0.0, 3.25]);
        let out = aggregate(&[(w.clone(), 1.0)]).unwrap();
        assert!(out.data().iter().zip(w.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn two_clients_average() {
        let out = aggregate(&[(pv(&[2.0, 0.0]), 0.5), (pv(&[4.0, 2.0]), 0.5)]).unwrap();
        assert_eq!(out.data(), &[3.0, 1.0]);
    }

    #[test]
    fn identical_updates_are_fixed_points() {
        let w = pv(&[0.1, 0.2, 0.3]);
        let alphas = size_proportional_weights(&[3, 5, 2]);
        let ups: Vec<_> = alphas.iter().map(|&a| (w.clone(), a)).collect();
        let out = aggregate(&ups).unwrap();
        for (a, b) in out.data().iter().zip(w.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_weights_are_rejected() {
        assert!(matches!(
            aggregate(&[(pv(&[1.0, 1.0]), 0.5), (pv(&[1.0, 1.0]), 0.4)]),
            Err(Error::WeightSum(_))
        ));
        assert!(aggregate(&[(pv(&[1.0, 1.0]), 0.5), (pv(&[1.0, 1.0, 1.0]), 0.5)]).is_err());
        assert!(aggregate(&[]).is_err());
    }
}
