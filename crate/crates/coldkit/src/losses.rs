//! Numeric alignment objectives: the stage-1 MSE + cosine loss with its
//! analytic gradient, and the stage-2 cross-entropy. Both terms of the
//! stage-1 loss are batch-averaged; the MSE denominator is N*d.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("batch shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in batch")]
    NonFinite,
    #[error("negative weight: alpha and beta must be >= 0")]
    NegativeWeight,
    #[error("zero-norm vector in row {row}: cosine term undefined")]
    ZeroNormVector { row: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// Projected vectors `v` with their target embeddings `v_hat`, plus the
/// MSE/cosine mixing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    vectors: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    alpha: f64,
    beta: f64,
}

impl EmbeddingBatch {
    pub fn new(
        vectors: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        alpha: f64,
        beta: f64,
    ) -> Result<Self, LossError> {
        if vectors.is_empty() || vectors.len() != targets.len() {
            return Err(LossError::ShapeMismatch(format!(
                "{} vector row(s) vs {} target row(s)",
                vectors.len(),
                targets.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(LossError::ShapeMismatch("zero-dimensional rows".into()));
        }
        for (v, t) in vectors.iter().zip(&targets) {
            if v.len() != dim || t.len() != dim {
                return Err(LossError::ShapeMismatch(format!(
                    "row lengths {} and {} differ from {}",
                    v.len(),
                    t.len(),
                    dim
                )));
            }
            if v.iter().chain(t).any(|x| !x.is_finite()) {
                return Err(LossError::NonFinite);
            }
        }
        if alpha < 0.0 || beta < 0.0 || !alpha.is_finite() || !beta.is_finite() {
            return Err(LossError::NegativeWeight);
        }
        Ok(Self {
            vectors,
            targets,
            alpha,
            beta,
        })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rows(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    /// Same batch with replaced vectors; used by finite-difference checks.
    pub fn with_vectors(&self, vectors: Vec<Vec<f64>>) -> Result<Self, LossError> {
        Self::new(vectors, self.targets.clone(), self.alpha, self.beta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_norms(batch: &EmbeddingBatch) -> Result<(), LossError> {
    if batch.beta > 0.0 {
        for (row, (v, t)) in batch.vectors.iter().zip(&batch.targets).enumerate() {
            if dot(v, v) == 0.0 || dot(t, t) == 0.0 {
                return Err(LossError::ZeroNormVector { row });
            }
        }
    }
    Ok(())
}

/// alpha * mean over batch and dims of (v - v_hat)^2
/// + beta * mean over batch of (1 - cos(v_i, v_hat_i)).
pub fn stage1_loss(batch: &EmbeddingBatch) -> Result<f64, LossError> {
    check_norms(batch)?;
    let n = batch.rows() as f64;
    let d = batch.dim() as f64;

    let mut squared_sum = 0.0;
    let mut cosine_sum = 0.0;
    for (v, t) in batch.vectors.iter().zip(&batch.targets) {
        squared_sum += v.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if batch.beta > 0.0 {
            cosine_sum += 1.0 - dot(v, t) / (dot(v, v) * dot(t, t)).sqrt();
        }
    }
    Ok(batch.alpha * squared_sum / (n * d) + batch.beta * cosine_sum / n)
}

/// Analytic gradient of [`stage1_loss`] with respect to the vectors:
/// per row, 2*alpha*(v - v_hat)/(N*d) minus the beta-weighted cosine
/// derivative (v_hat/(|v||v_hat|) - cos * v/|v|^2)/N.
pub fn stage1_loss_grad(batch: &EmbeddingBatch) -> Result<Vec<Vec<f64>>, LossError> {
    check_norms(batch)?;
    let n = batch.rows() as f64;
    let d = batch.dim() as f64;

    let mut grad = Vec::with_capacity(batch.rows());
    for (v, t) in batch.vectors.iter().zip(&batch.targets) {
        let mut row = vec![0.0; v.len()];
        for (g, (a, b)) in row.iter_mut().zip(v.iter().zip(t)) {
            *g = 2.0 * batch.alpha * (a - b) / (n * d);
        }
        if batch.beta > 0.0 {
            let vv = dot(v, v);
            let tt = dot(t, t);
            let vt = dot(v, t);
            let norm_product = (vv * tt).sqrt();
            let cosine = vt / norm_product;
            for (k, g) in row.iter_mut().enumerate() {
                let dcos = t[k] / norm_product - cosine * v[k] / vv;
                *g -= batch.beta * dcos / n;
            }
        }
        grad.push(row);
    }
    Ok(grad)
}

/// A ground-truth/predicted distribution pair over one vocabulary.
/// Predicted entries are floored at 1e-12 so the log stays finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDistribution {
    truth: Vec<f64>,
    predicted: Vec<f64>,
}

pub const PREDICTED_FLOOR: f64 = 1e-12;

impl ProbDistribution {
    pub fn new(truth: Vec<f64>, predicted: Vec<f64>) -> Result<Self, LossError> {
        if truth.is_empty() || truth.len() != predicted.len() {
            return Err(LossError::InvalidDistribution(format!(
                "lengths {} and {} must match and be nonzero",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.iter().any(|&y| y < 0.0 || !y.is_finite()) {
            return Err(LossError::InvalidDistribution(
                "truth entries must be finite and non-negative".into(),
            ));
        }
        if predicted.iter().any(|&y| y <= 0.0 || !y.is_finite()) {
            return Err(LossError::InvalidDistribution(
                "predicted entries must be finite and strictly positive".into(),
            ));
        }
        for (name, dist) in [("truth", &truth), ("predicted", &predicted)] {
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(LossError::InvalidDistribution(format!(
                    "{name} sums to {sum}, expected 1"
                )));
            }
        }
        let predicted = predicted.iter().map(|&y| y.max(PREDICTED_FLOOR)).collect();
        Ok(Self { truth, predicted })
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn vocab_size(&self) -> usize {
        self.truth.len()
    }
}

/// -sum_i y_i ln(y_hat_i), natural log.
pub fn cross_entropy(dist: &ProbDistribution) -> f64 {
    dist.truth
        .iter()
        .zip(&dist.predicted)
        .map(|(&y, &p)| if y == 0.0 { 0.0 } else { -y * p.ln() })
        .sum()
}

/// Gradient of [`cross_entropy`] with respect to the predicted entries:
/// -y_i / y_hat_i.
pub fn cross_entropy_grad(dist: &ProbDistribution) -> Vec<f64> {
    dist.truth
        .iter()
        .zip(&dist.predicted)
        .map(|(&y, &p)| -y / p)
        .collect()
}
