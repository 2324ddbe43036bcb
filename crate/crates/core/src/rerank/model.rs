//! A one-hidden-layer feed-forward scorer trained with binary
//! cross-entropy.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rerank::samples::{FeatureVector, FEATURES};

pub const DEFAULT_HIDDEN: usize = 32;

/// Logistic output of `w2 · relu(W1 x̂ + b1) + b2`, where `x̂` is the
/// standardized feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub layers: [usize; 3],
    /// `hidden × FEATURES`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y log σ(z) + (1-y) log(1-σ(z))]` without overflow.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl ScorerModel {
    /// All-zero parameters and identity standardization.
    pub fn zeros(hidden: usize) -> Self {
        Self {
            layers: [FEATURES, hidden, 1],
            w1: vec![0.0; hidden * FEATURES],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            mean: vec![0.0; FEATURES],
            std: vec![1.0; FEATURES],
        }
    }

    /// He-initialized hidden layer, small output layer.
    pub fn random<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(hidden);
        let s1 = (2.0 / FEATURES as f64).sqrt();
        let s2 = (1.0 / hidden as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = s1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
        m.b1.iter_mut().for_each(|b| *b = 0.01);
        m.w2.iter_mut().for_each(|w| *w = s2 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
        m
    }

    pub fn hidden(&self) -> usize {
        self.layers[1]
    }

    /// Sets the standardization from sample moments; constant features
    /// keep unit scale.
    pub fn fit_standardization(&mut self, xs: &[FeatureVector]) {
        let n = xs.len().max(1) as f64;
        for j in 0..FEATURES {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = xs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            self.mean[j] = mean;
            self.std[j] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
    }

    fn standardize(&self, x: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; FEATURES];
        for j in 0..FEATURES {
            out[j] = (x[j] - self.mean[j]) / self.std[j];
        }
        out
    }

    fn logit_with_hidden(&self, x: &FeatureVector, h: &mut [f64]) -> f64 {
        let x = self.standardize(x);
        let mut z = self.b2;
        for (i, hi) in h.iter_mut().enumerate() {
            let row = &self.w1[i * FEATURES..(i + 1) * FEATURES];
            let a = self.b1[i] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
            *hi = a.max(0.0);
            z += self.w2[i] * *hi;
        }
        z
    }

    pub fn logit(&self, x: &FeatureVector) -> f64 {
        let mut h = vec![0.0; self.hidden()];
        self.logit_with_hidden(x, &mut h)
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Parameters flattened as `w1, b1, w2, b2`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        let (a, b) = (self.w1.len(), self.b1.len());
        self.w1.copy_from_slice(&p[..a]);
        self.b1.copy_from_slice(&p[a..a + b]);
        self.w2.copy_from_slice(&p[a + b..a + 2 * b]);
        self.b2 = p[a + 2 * b];
    }

    /// Mean BCE over the batch and its gradient with respect to
    /// [`params`](Self::params).
    pub fn loss_and_gradient(&self, xs: &[FeatureVector], ys: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(xs.len(), ys.len());
        let hdim = self.hidden();
        let (a, b) = (self.w1.len(), self.b1.len());
        let mut g = vec![0.0; self.num_params()];
        let mut h = vec![0.0; hdim];
        let mut loss = 0.0;
        let n = xs.len().max(1) as f64;
        for (x, &y) in xs.iter().zip(ys) {
            let z = self.logit_with_hidden(x, &mut h);
            loss += bce_with_logit(z, y);
            let dz = (sigmoid(z) - y) / n;
            let xs_ = self.standardize(x);
            for i in 0..hdim {
                g[a + b + i] += dz * h[i];
                if h[i] > 0.0 {
                    let dh = dz * self.w2[i];
                    g[a + i] += dh;
                    for j in 0..FEATURES {
                        g[i * FEATURES + j] += dh * xs_[j];
                    }
                }
            }
            g[a + 2 * b] += dz;
        }
        (loss / n, g)
    }

    pub fn loss(&self, xs: &[FeatureVector], ys: &[f64]) -> f64 {
        let n = xs.len().max(1) as f64;
        xs.iter()
            .zip(ys)
            .map(|(x, &y)| bce_with_logit(self.logit(x), y))
            .sum::<f64>()
            / n
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().chain(&self.mean).chain(&self.std).all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.layers[0] != FEATURES || self.layers[2] != 1 || h == 0 {
            return Err(Error::validation(format!("unsupported layer sizes {:?}", self.layers)));
        }
        if self.w1.len() != h * FEATURES
            || self.b1.len() != h
            || self.w2.len() != h
            || self.mean.len() != FEATURES
            || self.std.len() != FEATURES
        {
            return Err(Error::validation("parameter shapes do not match layer sizes"));
        }
        if !self.is_finite() || self.std.iter().any(|&s| s <= 0.0) {
            return Err(Error::validation("non-finite parameters or non-positive scale"));
        }
        Ok(())
    }
}

/// Either a trained network or the identity passthrough that returns the
/// predictor's own score.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Network(ScorerModel),
    Passthrough,
}

impl Scorer {
    pub fn score(&self, x: &FeatureVector) -> f64 {
        match self {
            Scorer::Network(m) => m.predict(x),
            Scorer::Passthrough => x[0],
        }
    }
}

/// On-disk form of a trained scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedScorer {
    pub model: ScorerModel,
    pub seed: u64,
    pub config: crate::rerank::train::TrainConfig,
    pub learning_rate_used: f64,
    pub restarts: usize,
}

impl SavedScorer {
    pub fn write(&self, path: &Path) -> Result<()> {
        crate::ingest::store::write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s: Self = crate::ingest::store::read_json(path)?;
        s.model.validate()?;
        Ok(s)
    }
}
