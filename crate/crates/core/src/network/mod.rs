//! Straight-line conv/relu/pool networks, the built-in `tinyvgg` reference
//! network, and feature extraction at tap layers.

pub mod geometry;
pub mod weights;

use serde::{Deserialize, Serialize};

use crate::engine::activation::{maxpool2, relu};
use crate::engine::conv::{conv2d, output_len};
use crate::engine::tensor::{Kernel, Tensor};
use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

pub use geometry::{rf_project, AxisStep, RfGeom};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        name: String,
        kh: usize,
        kw: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    /// 2×2 max pooling, stride 2.
    Pool,
}

impl LayerSpec {
    pub fn conv(name: impl Into<String>, c_in: usize, c_out: usize) -> Self {
        LayerSpec::Conv {
            name: name.into(),
            kh: 3,
            kw: 3,
            c_in,
            c_out,
            stride: 1,
            pad: 1,
        }
    }

    /// Spatial geometry `(kh, kw, stride, pad)`; `None` for pointwise layers.
    pub fn window(&self) -> Option<(usize, usize, usize, usize)> {
        match *self {
            LayerSpec::Conv { kh, kw, stride, pad, .. } => Some((kh, kw, stride, pad)),
            LayerSpec::Pool => Some((2, 2, 2, 0)),
            LayerSpec::Relu => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// Layer indices whose outputs are the feature maps, finest first.
    pub taps: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>, taps: Vec<usize>) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            layers,
            taps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one tap".into()));
        }
        if self.taps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("taps must be strictly increasing".into()));
        }
        if *self.taps.last().unwrap() >= self.layers.len() {
            return Err(Error::InvalidArgument("tap refers to a missing layer".into()));
        }
        let mut channels: Option<usize> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            if let LayerSpec::Conv {
                name,
                kh,
                kw,
                c_in,
                c_out,
                stride,
                ..
            } = layer
            {
                if kh % 2 == 0 || kw % 2 == 0 || *stride == 0 || *c_in == 0 || *c_out == 0 {
                    return Err(Error::InvalidArgument(format!("layer {i} ({name}) has invalid geometry")));
                }
                if let Some(c) = channels {
                    if c != *c_in {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i} ({name}) expects {c_in} input channels, previous conv produces {c}"
                        )));
                    }
                }
                channels = Some(*c_out);
            }
        }
        Ok(())
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    /// Input channel count of the first convolution.
    pub fn input_channels(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            LayerSpec::Conv { c_in, .. } => Some(*c_in),
            _ => None,
        })
    }

    /// Channel count at each tap.
    pub fn tap_channels(&self) -> Vec<usize> {
        self.taps
            .iter()
            .map(|&t| {
                self.layers[..=t]
                    .iter()
                    .rev()
                    .find_map(|l| match l {
                        LayerSpec::Conv { c_out, .. } => Some(*c_out),
                        _ => None,
                    })
                    .or(self.input_channels())
                    .unwrap_or(1)
            })
            .collect()
    }

    /// Product of the strides up to the deepest tap. Inputs whose height and
    /// width are multiples of this run through every pooling layer cleanly.
    pub fn pooling_factor(&self) -> usize {
        let last = *self.taps.last().unwrap();
        self.layers[..=last]
            .iter()
            .filter_map(|l| l.window().map(|(_, _, s, _)| s))
            .product()
    }

    pub fn conv_names(&self) -> Vec<&str> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv { name, .. } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// Three VGG-style blocks of `[conv, relu, conv, relu, pool]` with 8, 16 and
/// 32 channels, tapped at the second relu of each block.
pub fn build_tinyvgg() -> NetworkSpec {
    let mut layers = Vec::new();
    let mut taps = Vec::new();
    let mut c_in = 3;
    for (b, &width) in [8usize, 16, 32].iter().enumerate() {
        layers.push(LayerSpec::conv(format!("block{}_conv1", b + 1), c_in, width));
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::conv(format!("block{}_conv2", b + 1), width, width));
        layers.push(LayerSpec::Relu);
        taps.push(layers.len() - 1);
        layers.push(LayerSpec::Pool);
        c_in = width;
    }
    NetworkSpec::new("tinyvgg", layers, taps).expect("tinyvgg spec is valid")
}

/// A network spec with one kernel per convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    kernels: Vec<Kernel>,
    /// For each layer, the index into `kernels` if it is a convolution.
    conv_index: Vec<Option<usize>>,
}

impl Network {
    pub fn new(spec: NetworkSpec, kernels: Vec<Kernel>) -> Result<Self> {
        spec.validate()?;
        let mut conv_index = Vec::with_capacity(spec.layers.len());
        let mut n = 0;
        for layer in &spec.layers {
            if let LayerSpec::Conv {
                name,
                kh,
                kw,
                c_in,
                c_out,
                ..
            } = layer
            {
                let k = kernels.get(n).ok_or_else(|| {
                    Error::InvalidArgument(format!("missing kernel for layer {name}"))
                })?;
                if k.shape() != (*kh, *kw, *c_in, *c_out) {
                    return Err(Error::shape((*kh, *kw, *c_in, *c_out), k.shape()));
                }
                conv_index.push(Some(n));
                n += 1;
            } else {
                conv_index.push(None);
            }
        }
        if n != kernels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} kernels supplied for {n} convolution layers",
                kernels.len()
            )));
        }
        Ok(Self {
            spec,
            kernels,
            conv_index,
        })
    }

    /// Deterministic He-uniform initialization from `seed`: each weight is
    /// drawn from `[-sqrt(6 / fan_in), sqrt(6 / fan_in))` in storage order,
    /// layer by layer; biases are zero.
    pub fn seeded(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = XorShift64Star::new(seed);
        let kernels = spec
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv {
                    kh, kw, c_in, c_out, ..
                } => Some((*kh, *kw, *c_in, *c_out)),
                _ => None,
            })
            .map(|(kh, kw, c_in, c_out)| {
                let bound = (6.0 / (kh * kw * c_in) as f32).sqrt();
                let w = (0..kh * kw * c_in * c_out).map(|_| rng.symmetric(bound)).collect();
                Kernel::new(kh, kw, c_in, c_out, w, vec![0.0; c_out])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec, kernels)
    }

    pub fn tinyvgg(seed: u64) -> Self {
        Self::seeded(build_tinyvgg(), seed).expect("tinyvgg initialization")
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn kernel_for_layer(&self, layer: usize) -> Option<&Kernel> {
        self.conv_index.get(layer).copied().flatten().map(|i| &self.kernels[i])
    }

    pub fn tap_count(&self) -> usize {
        self.spec.taps.len()
    }

    pub fn tap_layer(&self, tap: usize) -> Result<usize> {
        self.spec.taps.get(tap).copied().ok_or(Error::TapOutOfRange {
            tap,
            count: self.spec.taps.len(),
        })
    }

    pub fn pooling_factor(&self) -> usize {
        self.spec.pooling_factor()
    }

    pub fn apply_layer(&self, layer: usize, x: &Tensor) -> Result<Tensor> {
        match &self.spec.layers[layer] {
            LayerSpec::Conv { stride, pad, .. } => {
                conv2d(x, self.kernel_for_layer(layer).unwrap(), *stride, *pad)
            }
            LayerSpec::Relu => Ok(relu(x)),
            LayerSpec::Pool => maxpool2(x),
        }
    }

    /// Outputs of layers `0..=last`.
    pub fn forward_layers(&self, x: &Tensor, last: usize) -> Result<Vec<Tensor>> {
        let mut acts: Vec<Tensor> = Vec::with_capacity(last + 1);
        for layer in 0..=last {
            let next = self.apply_layer(layer, acts.last().unwrap_or(x))?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Runs layers `from..=to` starting from an activation of layer `from - 1`.
    pub fn forward_range(&self, x: &Tensor, from: usize, to: usize) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in from..=to {
            cur = self.apply_layer(layer, &cur)?;
        }
        Ok(cur)
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let (h, w, c) = image.shape();
        let multiple = self.pooling_factor();
        if h % multiple != 0 || w % multiple != 0 {
            return Err(Error::BadDimensions { h, w, multiple });
        }
        if let Some(expected) = self.spec.input_channels() {
            if c != expected {
                return Err(Error::shape((h, w, expected), image.shape()));
            }
        }
        Ok(())
    }

    /// Feature map at a single tap.
    pub fn forward_tap(&self, image: &Tensor, tap: usize) -> Result<Tensor> {
        let layer = self.tap_layer(tap)?;
        self.check_input(image)?;
        self.forward_range(image, 0, layer)
    }

    /// Runs the network up to the deepest tap and keeps every tap's output
    /// together with its receptive-field geometry.
    pub fn forward_collect(&self, image: &Tensor) -> Result<FeatureHierarchy> {
        self.check_input(image)?;
        let last = *self.spec.taps.last().unwrap();
        let mut maps = Vec::with_capacity(self.spec.taps.len());
        let mut cur = image.clone();
        let mut next_tap = 0;
        for layer in 0..=last {
            cur = self.apply_layer(layer, &cur)?;
            if self.spec.taps[next_tap] == layer {
                maps.push(cur.clone());
                next_tap += 1;
            }
        }
        let geoms = geometry::tap_geometries(&self.spec, image.height(), image.width())?;
        Ok(FeatureHierarchy {
            image_shape: (image.height(), image.width()),
            maps,
            geoms,
        })
    }
}

/// Feature maps at every tap (finest first) plus, per tap, the geometry
/// linking it to the previous tap (or to the image for tap 0).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHierarchy {
    pub image_shape: (usize, usize),
    pub maps: Vec<Tensor>,
    pub geoms: Vec<RfGeom>,
}

impl FeatureHierarchy {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn deepest(&self) -> usize {
        self.maps.len() - 1
    }
}

/// Spatial output size of a network prefix for a given input size, or `None`
/// if some layer cannot be applied.
pub fn output_size(spec: &NetworkSpec, last: usize, h: usize, w: usize) -> Option<(usize, usize)> {
    let (mut h, mut w) = (h, w);
    for layer in &spec.layers[..=last] {
        match layer {
            LayerSpec::Pool if h % 2 != 0 || w % 2 != 0 => return None,
            _ => {}
        }
        if let Some((kh, kw, s, p)) = layer.window() {
            h = output_len(h, kh, s, p)?;
            w = output_len(w, kw, s, p)?;
            if h == 0 || w == 0 {
                return None;
            }
        }
    }
    Some((h, w))
}
