//! Layered model representation and the synthetic FC / CONV sweep generators.
//!
//! Convolutions are stride 1 with same padding, so every output spatial
//! position is visited once per filter. Bias terms are excluded from both MAC
//! and weight accounting, which keeps the FC identity `macs == weight bytes`
//! exact at one byte per weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One weight layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerSpec {
    FullyConnected {
        inputs: u64,
        outputs: u64,
    },
    Convolution {
        in_channels: u64,
        filters: u64,
        kernel_h: u64,
        kernel_w: u64,
        in_h: u64,
        in_w: u64,
    },
}

impl LayerSpec {
    pub fn fc(inputs: u64, outputs: u64) -> Self {
        LayerSpec::FullyConnected { inputs, outputs }
    }

    /// Square-kernel convolution over a square input.
    pub fn conv(in_channels: u64, filters: u64, kernel: u64, input: u64) -> Self {
        LayerSpec::Convolution {
            in_channels,
            filters,
            kernel_h: kernel,
            kernel_w: kernel,
            in_h: input,
            in_w: input,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let ok = match *self {
            LayerSpec::FullyConnected { inputs, outputs } => inputs >= 1 && outputs >= 1,
            LayerSpec::Convolution {
                in_channels,
                filters,
                kernel_h,
                kernel_w,
                in_h,
                in_w,
            } => [in_channels, filters, kernel_h, kernel_w, in_h, in_w]
                .iter()
                .all(|&v| v >= 1),
        };
        if ok {
            Ok(())
        } else {
            Err("all dimensions must be at least 1".into())
        }
    }

    /// Multiply-accumulate operations for one inference.
    pub fn macs(&self) -> u64 {
        match *self {
            LayerSpec::FullyConnected { inputs, outputs } => inputs * outputs,
            LayerSpec::Convolution {
                in_channels,
                filters,
                kernel_h,
                kernel_w,
                in_h,
                in_w,
            } => in_channels * in_h * in_w * filters * kernel_h * kernel_w,
        }
    }

    pub fn weight_count(&self) -> u64 {
        match *self {
            LayerSpec::FullyConnected { inputs, outputs } => inputs * outputs,
            LayerSpec::Convolution {
                in_channels,
                filters,
                kernel_h,
                kernel_w,
                ..
            } => in_channels * filters * kernel_h * kernel_w,
        }
    }

    pub fn weight_bytes(&self, bytes_per_weight: u64) -> u64 {
        self.weight_count() * bytes_per_weight
    }

    /// Activation bytes consumed (int8 elements).
    pub fn input_bytes(&self) -> u64 {
        match *self {
            LayerSpec::FullyConnected { inputs, .. } => inputs,
            LayerSpec::Convolution {
                in_channels,
                in_h,
                in_w,
                ..
            } => in_channels * in_h * in_w,
        }
    }

    /// Activation bytes produced (int8 elements).
    pub fn output_bytes(&self) -> u64 {
        match *self {
            LayerSpec::FullyConnected { outputs, .. } => outputs,
            LayerSpec::Convolution {
                filters, in_h, in_w, ..
            } => in_h * in_w * filters,
        }
    }

    fn feeds(&self, next: &LayerSpec) -> std::result::Result<(), String> {
        match (*self, *next) {
            (
                LayerSpec::FullyConnected { outputs, .. },
                LayerSpec::FullyConnected { inputs, .. },
            ) if outputs != inputs => Err(format!("{outputs} outputs feed {inputs} inputs")),
            (
                LayerSpec::Convolution {
                    filters, in_h, in_w, ..
                },
                LayerSpec::Convolution {
                    in_channels,
                    in_h: nh,
                    in_w: nw,
                    ..
                },
            ) => {
                if filters != in_channels {
                    Err(format!("{filters} filters feed {in_channels} input channels"))
                } else if (in_h, in_w) != (nh, nw) {
                    Err(format!("{in_h}x{in_w} output feeds {nh}x{nw} input"))
                } else {
                    Ok(())
                }
            }
            (a, b) if a.output_bytes() != b.input_bytes() => Err(format!(
                "{} output elements feed {} input elements",
                a.output_bytes(),
                b.input_bytes()
            )),
            _ => Ok(()),
        }
    }
}

fn default_bytes_per_weight() -> u64 {
    1
}

/// An ordered stack of layers. One byte per weight models int8 quantization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub layers: Vec<LayerSpec>,
    #[serde(default = "default_bytes_per_weight")]
    pub bytes_per_weight: u64,
}

impl ModelSpec {
    pub fn new(id: impl Into<String>, layers: Vec<LayerSpec>, bytes_per_weight: u64) -> Result<Self> {
        let model = ModelSpec {
            id: id.into(),
            layers,
            bytes_per_weight,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config(format!("model {} has no layers", self.id)));
        }
        if self.bytes_per_weight == 0 {
            return Err(Error::Config("bytes_per_weight must be at least 1".into()));
        }
        for (index, layer) in self.layers.iter().enumerate() {
            layer
                .validate()
                .map_err(|reason| Error::InvalidLayer { index, reason })?;
        }
        for (index, pair) in self.layers.windows(2).enumerate() {
            pair[0]
                .feeds(&pair[1])
                .map_err(|reason| Error::ShapeMismatch { index, reason })?;
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn macs(&self) -> u64 {
        self.layers.iter().map(LayerSpec::macs).sum()
    }

    pub fn layer_weight_bytes(&self, index: usize) -> u64 {
        self.layers[index].weight_bytes(self.bytes_per_weight)
    }

    pub fn weight_bytes(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| l.weight_bytes(self.bytes_per_weight))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fc,
    Conv,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fc" => Ok(ModelKind::Fc),
            "conv" => Ok(ModelKind::Conv),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A parametric family of synthetic models.
///
/// For FC sweeps the parameter is the hidden width `n`; a model has
/// `layer_count` weight matrices: `I→n`, `layer_count − 2` of `n→n`, `n→O`.
/// For CONV sweeps the parameter is the filter count `f` of every layer.
/// Fields belonging to the other kind are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: ModelKind,
    pub layer_count: u64,
    pub param_min: u64,
    pub param_max: u64,
    pub param_step: u64,
    #[serde(default)]
    pub input_size: u64,
    #[serde(default)]
    pub output_size: u64,
    #[serde(default)]
    pub in_channels: u64,
    #[serde(default)]
    pub in_h: u64,
    #[serde(default)]
    pub in_w: u64,
    #[serde(default)]
    pub kernel_h: u64,
    #[serde(default)]
    pub kernel_w: u64,
    #[serde(default = "default_bytes_per_weight")]
    pub bytes_per_weight: u64,
}

impl SweepConfig {
    /// Five FC matrices, 64 inputs, 10 outputs, n = 100..2640 step 40.
    pub fn fc_default() -> Self {
        SweepConfig {
            kind: ModelKind::Fc,
            layer_count: 5,
            param_min: 100,
            param_max: 2640,
            param_step: 40,
            input_size: 64,
            output_size: 10,
            in_channels: 0,
            in_h: 0,
            in_w: 0,
            kernel_h: 0,
            kernel_w: 0,
            bytes_per_weight: 1,
        }
    }

    /// Five 3×3 CONV layers over a 3-channel 64×64 input, f = 32..702 step 10.
    pub fn conv_default() -> Self {
        SweepConfig {
            kind: ModelKind::Conv,
            layer_count: 5,
            param_min: 32,
            param_max: 702,
            param_step: 10,
            input_size: 0,
            output_size: 0,
            in_channels: 3,
            in_h: 64,
            in_w: 64,
            kernel_h: 3,
            kernel_w: 3,
            bytes_per_weight: 1,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Fc => Self::fc_default(),
            ModelKind::Conv => Self::conv_default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.param_min > self.param_max {
            return bad("param_min must not exceed param_max");
        }
        if self.param_step < 1 {
            return bad("param_step must be at least 1");
        }
        if self.param_min < 1 {
            return bad("param_min must be at least 1");
        }
        if self.bytes_per_weight < 1 {
            return bad("bytes_per_weight must be at least 1");
        }
        match self.kind {
            ModelKind::Fc => {
                if self.layer_count < 2 {
                    return bad("FC sweeps need at least 2 layers (input and output matrices)");
                }
                if self.input_size < 1 || self.output_size < 1 {
                    return bad("FC sweeps need input_size and output_size of at least 1");
                }
            }
            ModelKind::Conv => {
                if self.layer_count < 1 {
                    return bad("CONV sweeps need at least 1 layer");
                }
                if [self.in_channels, self.in_h, self.in_w, self.kernel_h, self.kernel_w]
                    .contains(&0)
                {
                    return bad("CONV sweeps need in_channels, in_h, in_w and kernel dims of at least 1");
                }
            }
        }
        Ok(())
    }

    /// Parameter values: inclusive of `param_min`, `param_max` only when aligned to the step.
    pub fn params(&self) -> impl Iterator<Item = u64> {
        let (min, max, step) = (self.param_min, self.param_max, self.param_step.max(1));
        let count = if min > max { 0 } else { (max - min) / step + 1 };
        (0..count).map(move |i| min + i * step)
    }

    pub fn model_id(&self, param: u64) -> String {
        match self.kind {
            ModelKind::Fc => format!("fc-n{param}"),
            ModelKind::Conv => format!("conv-f{param}"),
        }
    }
}

pub fn build_fc_model(config: &SweepConfig, n: u64) -> Result<ModelSpec> {
    if config.kind != ModelKind::Fc {
        return Err(Error::Config("build_fc_model needs an FC sweep config".into()));
    }
    config.validate()?;
    if n < 1 {
        return Err(Error::Config("node count must be at least 1".into()));
    }
    let hidden = config.layer_count as usize - 2;
    let mut layers = Vec::with_capacity(config.layer_count as usize);
    layers.push(LayerSpec::fc(config.input_size, n));
    layers.extend(std::iter::repeat_n(LayerSpec::fc(n, n), hidden));
    layers.push(LayerSpec::fc(n, config.output_size));
    ModelSpec::new(config.model_id(n), layers, config.bytes_per_weight)
}

pub fn build_conv_model(config: &SweepConfig, f: u64) -> Result<ModelSpec> {
    if config.kind != ModelKind::Conv {
        return Err(Error::Config("build_conv_model needs a CONV sweep config".into()));
    }
    config.validate()?;
    if f < 1 {
        return Err(Error::Config("filter count must be at least 1".into()));
    }
    let layers = (0..config.layer_count)
        .map(|i| LayerSpec::Convolution {
            in_channels: if i == 0 { config.in_channels } else { f },
            filters: f,
            kernel_h: config.kernel_h,
            kernel_w: config.kernel_w,
            in_h: config.in_h,
            in_w: config.in_w,
        })
        .collect();
    ModelSpec::new(config.model_id(f), layers, config.bytes_per_weight)
}

pub fn build_model(config: &SweepConfig, param: u64) -> Result<ModelSpec> {
    match config.kind {
        ModelKind::Fc => build_fc_model(config, param),
        ModelKind::Conv => build_conv_model(config, param),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: u64,
    pub model: ModelSpec,
}

pub fn enumerate_sweep(config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    config
        .params()
        .map(|param| {
            Ok(SweepPoint {
                param,
                model: build_model(config, param)?,
            })
        })
        .collect()
}

/// Closed-form MAC count of the FC sweep model: `I·n + (L−2)·n² + O·n`.
pub fn fc_sweep_macs(config: &SweepConfig, n: u64) -> u64 {
    config.input_size * n + (config.layer_count - 2) * n * n + config.output_size * n
}

/// Closed-form MAC count of the CONV sweep model: `W·H·f·Fw·Fh·(C + f·(L−1))`.
pub fn conv_sweep_macs(config: &SweepConfig, f: u64) -> u64 {
    config.in_w
        * config.in_h
        * f
        * config.kernel_w
        * config.kernel_h
        * (config.in_channels + f * (config.layer_count - 1))
}
