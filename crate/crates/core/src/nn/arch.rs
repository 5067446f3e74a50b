use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Height × width × channels of an image-like tensor, stored in HWC order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }
}

/// One convolution: square kernel, zero "same"-style padding of `kernel_size / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel_size: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl ConvLayer {
    pub const fn new(kernel_size: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            kernel_size,
            out_channels,
            stride,
        }
    }

    pub const fn padding(&self) -> usize {
        self.kernel_size / 2
    }

    /// Output shape for a given input, or `None` when the layer collapses it.
    pub fn output_shape(&self, input: Shape) -> Option<Shape> {
        let pad = self.padding();
        let span = |n: usize| {
            let padded = n + 2 * pad;
            (padded >= self.kernel_size).then(|| (padded - self.kernel_size) / self.stride + 1)
        };
        Some(Shape::new(
            span(input.height)?,
            span(input.width)?,
            self.out_channels,
        ))
    }
}

/// Elementwise nonlinearity applied after every convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 2] = [Activation::Relu, Activation::Tanh];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    /// The relu derivative at 0 is 0.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Conv stack → global average pool → dense head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub input_shape: Shape,
    pub conv_layers: Vec<ConvLayer>,
    pub num_classes: usize,
}

/// Dimensions of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorLayout {
    pub dims: Vec<usize>,
    pub offset: usize,
}

impl TensorLayout {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl ArchitectureSpec {
    /// 16×16×1 input, three 3×3 stride-2 convolutions with 8 channels.
    pub fn desk_default(num_classes: usize) -> Self {
        Self {
            input_shape: Shape::new(16, 16, 1),
            conv_layers: alloc::vec![ConvLayer::new(3, 8, 2); 3],
            num_classes,
        }
    }

    pub fn with_input(mut self, input_shape: Shape) -> Self {
        self.input_shape = input_shape;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.input_shape.is_empty() {
            return Err(Error::Config("input shape has a zero dimension".into()));
        }
        if self.conv_layers.is_empty() {
            return Err(Error::Config(
                "architecture needs at least one conv layer".into(),
            ));
        }
        let mut shape = self.input_shape;
        for (i, layer) in self.conv_layers.iter().enumerate() {
            if layer.kernel_size == 0 || layer.stride == 0 || layer.out_channels == 0 {
                return Err(Error::Config(format!(
                    "conv layer {i} has a zero-sized field"
                )));
            }
            shape = layer
                .output_shape(shape)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Config(format!("conv layer {i} produces an empty output")))?;
        }
        Ok(())
    }

    /// Input shape of each conv layer followed by the final feature shape.
    pub fn shapes(&self) -> Vec<Shape> {
        let mut out = Vec::with_capacity(self.conv_layers.len() + 1);
        let mut shape = self.input_shape;
        out.push(shape);
        for layer in &self.conv_layers {
            shape = layer.output_shape(shape).unwrap_or(Shape::new(0, 0, 0));
            out.push(shape);
        }
        out
    }

    pub fn feature_channels(&self) -> usize {
        self.conv_layers
            .last()
            .map_or(self.input_shape.channels, |l| l.out_channels)
    }

    /// Per-tensor layout: conv weights `[out, k, k, in]`, conv biases `[out]`,
    /// then dense weights `[classes, features]` and dense biases `[classes]`.
    pub fn param_layout(&self) -> Vec<TensorLayout> {
        let mut dims: Vec<Vec<usize>> = Vec::new();
        let mut in_ch = self.input_shape.channels;
        for layer in &self.conv_layers {
            dims.push(alloc::vec![
                layer.out_channels,
                layer.kernel_size,
                layer.kernel_size,
                in_ch
            ]);
            dims.push(alloc::vec![layer.out_channels]);
            in_ch = layer.out_channels;
        }
        dims.push(alloc::vec![self.num_classes, in_ch]);
        dims.push(alloc::vec![self.num_classes]);
        let mut offset = 0;
        dims.into_iter()
            .map(|d| {
                let t = TensorLayout { dims: d, offset };
                offset += t.len();
                t
            })
            .collect()
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let mut in_ch = self.input_shape.channels;
        let mut total = 0;
        for layer in &self.conv_layers {
            total += layer.kernel_size * layer.kernel_size * in_ch * layer.out_channels
                + layer.out_channels;
            in_ch = layer.out_channels;
        }
        total + in_ch * self.num_classes + self.num_classes
    }
}
