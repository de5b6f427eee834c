//! Fully convolutional detector/descriptor network.
//!
//! A stride-1 trunk of dilated 3x3 convolutions feeds a three-layer tail
//! (depthwise separable by default). The tail output gives three per-pixel
//! maps at input resolution: unit-norm descriptors, a reliability score and
//! a repeatability score. Both scores are read from 1x1 convolutions of the
//! squared tail response, each squashed by a two-way softmax.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ConvGeometry, Graph, Var};
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Smallest accepted input height and width.
pub const MIN_INPUT_SIZE: usize = 16;

/// Layer layout of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackboneConfig {
    /// Channels of the descriptor map, which is also the tail width.
    pub descriptor_dim: usize,
    /// Output channels of each trunk layer.
    pub channel_widths: Vec<usize>,
    /// Dilation of each trunk layer; same length as `channel_widths`.
    pub dilations: Vec<usize>,
    /// Dilation of the three tail layers.
    pub tail_dilation: usize,
    /// Depthwise separable tail when true, plain 3x3 convolutions otherwise.
    pub use_dsc_tail: bool,
    pub input_channels: usize,
}

impl BackboneConfig {
    /// Small preset used for tests and CPU training.
    pub fn desk() -> Self {
        BackboneConfig {
            descriptor_dim: 32,
            channel_widths: vec![8, 8, 16, 16, 32],
            dilations: vec![1, 1, 2, 2, 4],
            tail_dilation: 4,
            use_dsc_tail: true,
            input_channels: 3,
        }
    }

    /// L2-Net widths with 128-d descriptors.
    pub fn full() -> Self {
        BackboneConfig {
            descriptor_dim: 128,
            channel_widths: vec![32, 32, 64, 64, 128, 128],
            dilations: vec![1, 1, 2, 2, 4, 4],
            tail_dilation: 8,
            use_dsc_tail: true,
            input_channels: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::InvalidArgument { op: "network config", detail });
        if self.descriptor_dim < 2 {
            return bad(format!("descriptor_dim {} < 2", self.descriptor_dim));
        }
        if self.channel_widths.is_empty() || self.channel_widths.contains(&0) {
            return bad(format!("channel widths {:?} must be non-empty and >= 1", self.channel_widths));
        }
        if self.dilations.len() != self.channel_widths.len() {
            return bad(format!(
                "{} dilations for {} trunk layers",
                self.dilations.len(),
                self.channel_widths.len()
            ));
        }
        if self.dilations.contains(&0) || self.tail_dilation == 0 {
            return bad("dilations must be >= 1".to_string());
        }
        if self.input_channels == 0 {
            return bad("input_channels must be >= 1".to_string());
        }
        Ok(())
    }

    /// Shapes of all parameters in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut cin = self.input_channels;
        for (i, &w) in self.channel_widths.iter().enumerate() {
            out.push((format!("trunk.{i}.weight"), vec![w, cin, 3, 3]));
            out.push((format!("trunk.{i}.bias"), vec![w]));
            cin = w;
        }
        let d = self.descriptor_dim;
        for i in 0..3 {
            if self.use_dsc_tail {
                out.push((format!("tail.{i}.depthwise"), vec![cin, 1, 3, 3]));
                out.push((format!("tail.{i}.pointwise"), vec![d, cin, 1, 1]));
            } else {
                out.push((format!("tail.{i}.weight"), vec![d, cin, 3, 3]));
            }
            out.push((format!("tail.{i}.bias"), vec![d]));
            cin = d;
        }
        for head in ["s", "r"] {
            out.push((format!("head.{head}.weight"), vec![2, d, 1, 1]));
            out.push((format!("head.{head}.bias"), vec![2]));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// A named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Network parameters together with their layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    config: BackboneConfig,
    params: Vec<Param>,
}

/// Output maps of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps {
    /// `[D, H, W]`, unit norm per pixel.
    pub descriptors: Tensor,
    /// `[1, H, W]` in `[0, 1]`.
    pub reliability: Tensor,
    /// `[1, H, W]` in `[0, 1]`.
    pub repeatability: Tensor,
}

/// Graph handles of the three output maps.
#[derive(Clone, Copy, Debug)]
pub struct MapVars {
    pub descriptors: Var,
    pub reliability: Var,
    pub repeatability: Var,
}

impl MapVars {
    pub fn values(&self, g: &Graph) -> FeatureMaps {
        FeatureMaps {
            descriptors: g.value(self.descriptors).clone(),
            reliability: g.value(self.reliability).clone(),
            repeatability: g.value(self.repeatability).clone(),
        }
    }
}

impl Network {
    /// He-uniform weights drawn from a seeded stream; biases start at zero.
    pub fn new(config: BackboneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let value = if name.ends_with("bias") {
                    Tensor::zeros(shape)
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let bound = math::sqrt(6.0 / fan_in as f64);
                    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
                };
                Param { name, value }
            })
            .collect();
        Ok(Network { config, params })
    }

    /// Rebuilds from named tensors, checking every name and shape against `config`.
    pub fn from_params(config: BackboneConfig, params: Vec<Param>) -> Result<Self> {
        config.validate()?;
        let shapes = config.parameter_shapes();
        if shapes.len() != params.len() {
            return Err(Error::InvalidArgument {
                op: "network",
                detail: format!("expected {} parameters, got {}", shapes.len(), params.len()),
            });
        }
        for ((name, shape), p) in shapes.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::InvalidArgument {
                    op: "network",
                    detail: format!("expected {name} {shape:?}, got {} {:?}", p.name, p.value.shape()),
                });
            }
        }
        Ok(Network { config, params })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Records the parameters on `g`, as leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { g.leaf(p.value.clone()) } else { g.constant(p.value.clone()) })
            .collect()
    }

    /// Builds the forward pass of `image` `[C, H, W]` on `g` using bound parameters.
    pub fn forward_on(&self, g: &mut Graph, params: &[Var], image: Var) -> Result<MapVars> {
        let cfg = &self.config;
        match *g.shape(image) {
            [c, h, w] if c == cfg.input_channels => {
                if h < MIN_INPUT_SIZE || w < MIN_INPUT_SIZE {
                    return Err(Error::InvalidArgument {
                        op: "forward",
                        detail: format!("input {h}x{w} is smaller than {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}"),
                    });
                }
            }
            ref s => {
                return Err(Error::InvalidArgument {
                    op: "forward",
                    detail: format!("expected [{}, H, W] input, got {s:?}", cfg.input_channels),
                })
            }
        }
        let mut it = params.iter().copied();
        let mut next = || it.next().expect("parameter list matches the config");

        let mut x = g.add_scalar(image, -0.5);
        for &dil in &cfg.dilations {
            let (wt, b) = (next(), next());
            x = g.conv2d(x, wt, ConvGeometry::same(3, dil))?;
            x = g.bias_add(x, b)?;
            x = g.relu(x);
        }
        let geom = ConvGeometry::same(3, cfg.tail_dilation);
        for i in 0..3 {
            x = if cfg.use_dsc_tail {
                let (dw, pw) = (next(), next());
                g.depthwise_separable_conv2d(x, dw, pw, geom)?
            } else {
                let wt = next();
                g.conv2d(x, wt, geom)?
            };
            let b = next();
            x = g.bias_add(x, b)?;
            if i < 2 {
                x = g.relu(x);
            }
        }
        let descriptors = g.l2_normalize(x)?;
        let squared = g.square(x);
        let mut score = |g: &mut Graph| -> Result<Var> {
            let (wt, b) = (next(), next());
            let logits = g.conv2d(squared, wt, ConvGeometry::UNIT)?;
            let logits = g.bias_add(logits, b)?;
            let p = g.softmax_channels(logits)?;
            g.slice_channels(p, 0, 1)
        };
        let reliability = score(g)?;
        let repeatability = score(g)?;
        Ok(MapVars { descriptors, reliability, repeatability })
    }

    /// Inference on one image.
    pub fn forward(&self, image: &Tensor) -> Result<FeatureMaps> {
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let img = g.constant(image.clone());
        Ok(self.forward_on(&mut g, &params, img)?.values(&g))
    }

    /// The same parameters applied to both images.
    pub fn forward_pair(&self, a: &Tensor, b: &Tensor) -> Result<(FeatureMaps, FeatureMaps)> {
        Ok((self.forward(a)?, self.forward(b)?))
    }
}
