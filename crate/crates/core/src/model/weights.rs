use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::window::bias_table_len;
use super::ModelConfig;
use crate::error::{ensure, Error, Result};
use crate::numerics::{Real, Tensor};

/// Name and shape of every learnable tensor, in canonical (serialisation) order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let c = cfg.channels;
    let ci = cfg.image_channels;
    let hidden = c * cfg.mlp_ratio;
    let table = bias_table_len(cfg.frames(), cfg.window);
    let mut specs = vec![("embed.weight".to_string(), vec![9 * ci, c]), ("embed.bias".to_string(), vec![c])];
    if cfg.uses_feature_blocks() {
        for r in 0..cfg.feature_depth {
            for conv in ["conv1", "conv2"] {
                specs.push((format!("feat{r}.{conv}.weight"), vec![9 * c, c]));
                specs.push((format!("feat{r}.{conv}.bias"), vec![c]));
            }
        }
    }
    for b in 0..cfg.blocks {
        let p = |s: &str| format!("block{b}.{s}");
        specs.extend([
            (p("norm1.gamma"), vec![c]),
            (p("norm1.beta"), vec![c]),
            (p("attn.wq"), vec![c, c]),
            (p("attn.wk"), vec![c, c]),
            (p("attn.wv"), vec![c, c]),
            (p("attn.proj.weight"), vec![c, c]),
            (p("attn.proj.bias"), vec![c]),
            (p("attn.rel_bias"), vec![cfg.heads, table]),
            (p("norm2.gamma"), vec![c]),
            (p("norm2.beta"), vec![c]),
            (p("mlp.fc1.weight"), vec![c, hidden]),
            (p("mlp.fc1.bias"), vec![hidden]),
            (p("mlp.fc2.weight"), vec![hidden, c]),
            (p("mlp.fc2.bias"), vec![c]),
        ]);
    }
    let out = ci * cfg.scale * cfg.scale;
    specs.push(("recon.weight".to_string(), vec![9 * c, out]));
    specs.push(("recon.bias".to_string(), vec![out]));
    specs
}

/// Every learnable tensor of a model, in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<T: Real = f32> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> ModelWeights<T> {
    /// Builds weights from tensors listed in canonical order, checking names and shapes.
    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let specs = param_specs(cfg);
        ensure!(
            specs.len() == tensors.len(),
            Config,
            "config expects {} tensors, got {}",
            specs.len(),
            tensors.len()
        );
        let mut entries = Vec::with_capacity(specs.len());
        for ((name, shape), t) in specs.into_iter().zip(tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Config(format!("{name}: expected shape {shape:?}, got {:?}", t.shape())));
            }
            entries.push((name, t));
        }
        Ok(Self { entries })
    }

    /// Initialisation: normal(0, 0.02) for attention/MLP matrices and the
    /// relative bias, uniform(±1/√fan_in) for convolutions, unit LayerNorm
    /// gains, zero biases, and a reconstruction convolution scaled down so the
    /// untrained model stays close to its bicubic skip.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let tensors = param_specs(cfg)
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data: Vec<T> = if name.ends_with("gamma") {
                    vec![T::one(); n]
                } else if name.ends_with("bias") && !name.ends_with("rel_bias") || name.ends_with("beta") {
                    vec![T::zero(); n]
                } else if name.starts_with("block") {
                    (0..n).map(|_| T::lit(normal.sample(rng))).collect()
                } else {
                    let bound = 1.0 / (shape[0] as f64).sqrt();
                    let bound = if name.starts_with("recon") { 0.1 * bound } else { bound };
                    let dist = Uniform::new_inclusive(-bound, bound);
                    (0..n).map(|_| T::lit(dist.sample(rng))).collect()
                };
                Tensor::new(&shape, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_tensors(cfg, tensors)
    }

    /// Rebuilds weights from a flat parameter vector in canonical order.
    pub fn unflatten(cfg: &ModelConfig, flat: &[T]) -> Result<Self> {
        let specs = param_specs(cfg);
        let total: usize = specs.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        ensure!(flat.len() == total, Config, "config expects {} parameters, got {}", total, flat.len());
        let mut at = 0;
        let mut tensors = Vec::with_capacity(specs.len());
        for (_, shape) in &specs {
            let n: usize = shape.iter().product();
            tensors.push(Tensor::new(shape, flat[at..at + n].to_vec())?);
            at += n;
        }
        Self::from_tensors(cfg, tensors)
    }

    /// Checks that names and shapes are those `cfg` prescribes.
    pub fn check_config(&self, cfg: &ModelConfig) -> Result<()> {
        let specs = param_specs(cfg);
        ensure!(
            specs.len() == self.entries.len(),
            Config,
            "config expects {} tensors, weights hold {}",
            specs.len(),
            self.entries.len()
        );
        for ((name, shape), (have, t)) in specs.iter().zip(&self.entries) {
            ensure!(
                name == have && t.shape() == shape.as_slice(),
                Config,
                "weights do not match config at {}",
                name
            );
        }
        Ok(())
    }

    pub fn entries(&self) -> &[(String, Tensor<T>)] {
        &self.entries
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelWeights<U> {
        ModelWeights { entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect() }
    }

    /// All parameters concatenated in canonical order.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors().flat_map(|t| t.data().iter().copied()).collect()
    }
}
