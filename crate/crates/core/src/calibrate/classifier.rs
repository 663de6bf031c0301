//! Camera-type classification from the mid-encoder class token.

use std::collections::BTreeMap;

use crate::nncore::Tensor;

/// Logistic-regression camera-type classifier: `sigmoid(w·x + b) > 0.5`
/// flags a frame as fisheye. Operates on the class-token feature taken after
/// the split layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraClassifier {
    pub weight: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl CameraClassifier {
    pub fn zeros(dim: usize) -> CameraClassifier {
        CameraClassifier { weight: vec![0.0; dim], bias: 0.0 }
    }

    /// Pre-sigmoid score `w·x + b`.
    pub fn score(&self, features: &[f64]) -> f64 {
        assert_eq!(features.len(), self.weight.len(), "feature width mismatch");
        self.weight.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    /// Fisheye probability.
    pub fn probability(&self, features: &[f64]) -> f64 {
        sigmoid(self.score(features))
    }

    /// Full-batch gradient descent on the logistic loss until the gradient
    /// is negligible or the iteration budget runs out.
    pub fn fit(
        features: &[Vec<f64>],
        fisheye: &[bool],
        learning_rate: f64,
        max_iters: usize,
    ) -> CameraClassifier {
        assert_eq!(features.len(), fisheye.len(), "one label per feature row");
        assert!(!features.is_empty(), "cannot fit on an empty set");
        let dim = features[0].len();
        let n = features.len() as f64;
        let mut model = CameraClassifier::zeros(dim);
        for _ in 0..max_iters {
            let mut grad_w = vec![0.0; dim];
            let mut grad_b = 0.0;
            for (x, &y) in features.iter().zip(fisheye) {
                let err = model.probability(x) - if y { 1.0 } else { 0.0 };
                for (g, xi) in grad_w.iter_mut().zip(x) {
                    *g += err * xi;
                }
                grad_b += err;
            }
            let norm: f64 = grad_w
                .iter()
                .chain(std::iter::once(&grad_b))
                .map(|g| (g / n) * (g / n))
                .sum::<f64>()
                .sqrt();
            if norm < 1e-9 {
                break;
            }
            for (w, g) in model.weight.iter_mut().zip(&grad_w) {
                *w -= learning_rate * g / n;
            }
            model.bias -= learning_rate * grad_b / n;
        }
        model
    }

    /// Fraction of rows classified correctly.
    pub fn accuracy(&self, features: &[Vec<f64>], fisheye: &[bool]) -> f64 {
        let right = features
            .iter()
            .zip(fisheye)
            .filter(|(x, &y)| classify_camera(x, self) == y)
            .count();
        right as f64 / features.len() as f64
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        vec![
            (
                "classifier.weight".to_string(),
                Tensor::new(vec![1, self.weight.len()], self.weight.clone()),
            ),
            ("classifier.bias".to_string(), Tensor::new(vec![1, 1], vec![self.bias])),
        ]
    }

    pub fn from_named(tensors: &BTreeMap<String, Tensor>) -> Result<CameraClassifier, String> {
        let w = tensors.get("classifier.weight").ok_or("missing tensor classifier.weight")?;
        let b = tensors.get("classifier.bias").ok_or("missing tensor classifier.bias")?;
        if w.rows() != 1 || b.numel() != 1 {
            return Err("classifier tensors misshapen".into());
        }
        Ok(CameraClassifier { weight: w.data().to_vec(), bias: b.data()[0] })
    }
}

/// Camera-type decision for one frame: true (fisheye) iff the fisheye
/// probability exceeds one half.
pub fn classify_camera(class_features: &[f64], classifier: &CameraClassifier) -> bool {
    classifier.probability(class_features) > 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_classifier_with_positive_bias_says_fisheye() {
        let c = CameraClassifier { weight: vec![0.0; 4], bias: 0.5 };
        assert!(classify_camera(&[1.0, -2.0, 3.0, 0.0], &c));
        let c = CameraClassifier { weight: vec![0.0; 4], bias: -0.5 };
        assert!(!classify_camera(&[1.0, -2.0, 3.0, 0.0], &c));
    }

    #[test]
    fn decision_equals_score_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = CameraClassifier {
            weight: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bias: 0.1,
        };
        for _ in 0..200 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert_eq!(classify_camera(&x, &c), c.score(&x) > 0.0);
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fit_separates_a_linearly_separable_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..200 {
            let y = rng.gen_bool(0.5);
            let shift = if y { 1.0 } else { -1.0 };
            xs.push(vec![
                shift + rng.gen_range(-0.4..0.4),
                rng.gen_range(-1.0..1.0),
                0.3 * shift + rng.gen_range(-0.2..0.2),
            ]);
            ys.push(y);
        }
        let model = CameraClassifier::fit(&xs[..150], &ys[..150], 0.5, 5000);
        assert_eq!(model.accuracy(&xs[150..], &ys[150..]), 1.0);
    }

    #[test]
    fn named_tensors_round_trip() {
        let c = CameraClassifier { weight: vec![0.25, -1.5, 3.0], bias: -0.75 };
        let map: BTreeMap<String, Tensor> = c.named_tensors().into_iter().collect();
        let back = CameraClassifier::from_named(&map).unwrap();
        assert_eq!(c, back);
        assert!(CameraClassifier::from_named(&BTreeMap::new()).is_err());
    }
}
