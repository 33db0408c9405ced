//! Layer-accurate DNN workload profiles.
//!
//! Each digital twin's inference task is described by per-layer FLOP counts
//! and forward-output sizes. Splitting a model at partition point `l` leaves
//! layers `1..=l` on the gateway (the prefix) and layers `l+1..=L` on the
//! access point (the suffix); the bits crossing the link are the forward
//! output of layer `l`.
//!
//! FLOP and output-size formulas per layer kind:
//!
//! ```text
//! convolution      flops = 2 * Bs * Ci * Hf * Wf * Co * Ho * Wo
//!                  bits  = Sf * Bs * Co * Ho * Wo
//! pooling          flops = Bs * Ci * Hi * Wi
//!                  bits  = Sf * Bs * Co * Ho * Wo      (Co = Ci)
//! fully connected  flops = 2 * Bs * Si * So
//!                  bits  = Sf * Bs * So
//! ```
//!
//! The fully-connected output size is scaled by the precision `Sf` like the
//! other kinds so every `o` is in bits (the uplink rate divides bits by
//! bits/s). All counts are exact in f64 for the integer dimensions used here.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Geometry of one DNN layer, sufficient to evaluate its FLOPs and forward
/// output size. Pooling stores its output dims explicitly and inherits
/// `c_out = c_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Convolution {
        batch: u64,
        precision_bits: u64,
        c_in: u64,
        h_in: u64,
        w_in: u64,
        c_out: u64,
        h_out: u64,
        w_out: u64,
        h_f: u64,
        w_f: u64,
    },
    Pooling {
        batch: u64,
        precision_bits: u64,
        c_in: u64,
        h_in: u64,
        w_in: u64,
        h_out: u64,
        w_out: u64,
    },
    FullyConnected {
        batch: u64,
        precision_bits: u64,
        s_in: u64,
        s_out: u64,
    },
}

impl LayerSpec {
    fn check(&self) -> Result<()> {
        let dims: Vec<(&str, u64)> = match *self {
            LayerSpec::Convolution {
                batch,
                precision_bits,
                c_in,
                h_in,
                w_in,
                c_out,
                h_out,
                w_out,
                h_f,
                w_f,
            } => vec![
                ("batch", batch),
                ("precision_bits", precision_bits),
                ("c_in", c_in),
                ("h_in", h_in),
                ("w_in", w_in),
                ("c_out", c_out),
                ("h_out", h_out),
                ("w_out", w_out),
                ("h_f", h_f),
                ("w_f", w_f),
            ],
            LayerSpec::Pooling {
                batch,
                precision_bits,
                c_in,
                h_in,
                w_in,
                h_out,
                w_out,
            } => vec![
                ("batch", batch),
                ("precision_bits", precision_bits),
                ("c_in", c_in),
                ("h_in", h_in),
                ("w_in", w_in),
                ("h_out", h_out),
                ("w_out", w_out),
            ],
            LayerSpec::FullyConnected {
                batch,
                precision_bits,
                s_in,
                s_out,
            } => vec![
                ("batch", batch),
                ("precision_bits", precision_bits),
                ("s_in", s_in),
                ("s_out", s_out),
            ],
        };
        for (name, v) in dims {
            if v == 0 {
                return Err(SimError::InvalidLayerSpec(format!(
                    "{name} must be >= 1"
                )));
            }
        }
        Ok(())
    }
}

/// FLOPs for one forward pass of the layer.
pub fn flops_of_layer(spec: &LayerSpec) -> Result<f64> {
    spec.check()?;
    Ok(match *spec {
        LayerSpec::Convolution {
            batch,
            c_in,
            c_out,
            h_out,
            w_out,
            h_f,
            w_f,
            ..
        } => 2.0 * (batch * c_in * h_f * w_f * c_out * h_out * w_out) as f64,
        LayerSpec::Pooling {
            batch, c_in, h_in, w_in, ..
        } => (batch * c_in * h_in * w_in) as f64,
        LayerSpec::FullyConnected {
            batch, s_in, s_out, ..
        } => 2.0 * (batch * s_in * s_out) as f64,
    })
}

/// Forward-output size of the layer in bits.
pub fn output_bits_of_layer(spec: &LayerSpec) -> Result<f64> {
    spec.check()?;
    Ok(match *spec {
        LayerSpec::Convolution {
            batch,
            precision_bits,
            c_out,
            h_out,
            w_out,
            ..
        } => (precision_bits * batch * c_out * h_out * w_out) as f64,
        LayerSpec::Pooling {
            batch,
            precision_bits,
            c_in,
            h_out,
            w_out,
            ..
        } => (precision_bits * batch * c_in * h_out * w_out) as f64,
        LayerSpec::FullyConnected {
            batch,
            precision_bits,
            s_out,
            ..
        } => (precision_bits * batch * s_out) as f64,
    })
}

/// One layer's evaluated workload numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    /// FLOPs per data point.
    pub flops: f64,
    /// Forward-output bits per data point.
    pub output_bits: f64,
}

/// A model as an ordered sequence of layer profiles with cached prefix sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub layers: Vec<LayerProfile>,
    /// cum_flops[l] = FLOPs of layers 1..=l, so cum_flops[0] = 0.
    cum_flops: Vec<f64>,
}

impl ModelProfile {
    pub fn from_specs(name: &str, specs: &[LayerSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(SimError::InvalidLayerSpec(format!(
                "model {name}: at least one layer required"
            )));
        }
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            layers.push(LayerProfile {
                flops: flops_of_layer(spec)?,
                output_bits: output_bits_of_layer(spec)?,
            });
        }
        Ok(Self::from_layers(name, layers))
    }

    pub fn from_layers(name: &str, layers: Vec<LayerProfile>) -> Self {
        let mut cum = Vec::with_capacity(layers.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for layer in &layers {
            acc += layer.flops;
            cum.push(acc);
        }
        Self {
            name: name.to_string(),
            layers,
            cum_flops: cum,
        }
    }

    /// Number of layers L.
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn total_flops(&self) -> f64 {
        self.cum_flops[self.len()]
    }

    /// FLOPs of layers 1..=l. `l = 0` is the empty prefix; valid range is
    /// 0..=L.
    pub fn prefix_flops(&self, l: usize) -> Result<f64> {
        self.cum_flops
            .get(l)
            .copied()
            .ok_or(SimError::PartitionOutOfRange {
                dt: usize::MAX,
                l,
                max: self.len(),
            })
    }

    /// FLOPs of layers l+1..=L.
    pub fn suffix_flops(&self, l: usize) -> Result<f64> {
        Ok(self.total_flops() - self.prefix_flops(l)?)
    }

    /// Forward-output bits at partition point l (output of layer l),
    /// valid for l in 1..=L.
    pub fn output_bits(&self, l: usize) -> Result<f64> {
        if l == 0 || l > self.len() {
            return Err(SimError::PartitionOutOfRange {
                dt: usize::MAX,
                l,
                max: self.len(),
            });
        }
        Ok(self.layers[l - 1].output_bits)
    }
}

/// Built-in model presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// VGG-11 on 3x32x32 input: 8 conv + 5 pool + 3 fc = 16 layers.
    Vgg11Cifar10,
    /// Compact CNN on 1x28x28 input: 2 conv + 2 pool + 2 fc = 6 layers.
    CnnFashionMnist,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Preset> {
        match name {
            "vgg11_cifar10" => Ok(Preset::Vgg11Cifar10),
            "cnn_fashion_mnist" => Ok(Preset::CnnFashionMnist),
            other => Err(SimError::Config(format!("unknown model preset: {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Vgg11Cifar10 => "vgg11_cifar10",
            Preset::CnnFashionMnist => "cnn_fashion_mnist",
        }
    }
}

/// Convolution helper for preset tables: 3x3 kernel, stride 1, padding 1
/// (spatial size preserved).
fn conv3(batch: u64, sf: u64, c_in: u64, c_out: u64, hw: u64) -> LayerSpec {
    LayerSpec::Convolution {
        batch,
        precision_bits: sf,
        c_in,
        h_in: hw,
        w_in: hw,
        c_out,
        h_out: hw,
        w_out: hw,
        h_f: 3,
        w_f: 3,
    }
}

/// 2x2 max-pool, stride 2 (spatial size halved).
fn pool2(batch: u64, sf: u64, c: u64, hw_in: u64) -> LayerSpec {
    LayerSpec::Pooling {
        batch,
        precision_bits: sf,
        c_in: c,
        h_in: hw_in,
        w_in: hw_in,
        h_out: hw_in / 2,
        w_out: hw_in / 2,
    }
}

fn fc(batch: u64, sf: u64, s_in: u64, s_out: u64) -> LayerSpec {
    LayerSpec::FullyConnected {
        batch,
        precision_bits: sf,
        s_in,
        s_out,
    }
}

/// Builds a preset model profile at the given batch size and precision.
pub fn build_preset(preset: Preset, batch: u64, precision_bits: u64) -> Result<ModelProfile> {
    if batch == 0 {
        return Err(SimError::InvalidLayerSpec("batch must be >= 1".into()));
    }
    if precision_bits == 0 {
        return Err(SimError::InvalidLayerSpec(
            "precision_bits must be >= 1".into(),
        ));
    }
    let (b, sf) = (batch, precision_bits);
    let specs: Vec<LayerSpec> = match preset {
        Preset::Vgg11Cifar10 => vec![
            conv3(b, sf, 3, 64, 32),
            pool2(b, sf, 64, 32),
            conv3(b, sf, 64, 128, 16),
            pool2(b, sf, 128, 16),
            conv3(b, sf, 128, 256, 8),
            conv3(b, sf, 256, 256, 8),
            pool2(b, sf, 256, 8),
            conv3(b, sf, 256, 512, 4),
            conv3(b, sf, 512, 512, 4),
            pool2(b, sf, 512, 4),
            conv3(b, sf, 512, 512, 2),
            conv3(b, sf, 512, 512, 2),
            pool2(b, sf, 512, 2),
            fc(b, sf, 512, 4096),
            fc(b, sf, 4096, 4096),
            fc(b, sf, 4096, 10),
        ],
        Preset::CnnFashionMnist => vec![
            conv3(b, sf, 1, 32, 28),
            pool2(b, sf, 32, 28),
            conv3(b, sf, 32, 64, 14),
            pool2(b, sf, 64, 14),
            fc(b, sf, 64 * 7 * 7, 128),
            fc(b, sf, 128, 10),
        ],
    };
    ModelProfile::from_specs(preset.name(), &specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vgg() -> ModelProfile {
        build_preset(Preset::Vgg11Cifar10, 1, 32).unwrap()
    }

    fn cnn() -> ModelProfile {
        build_preset(Preset::CnnFashionMnist, 1, 32).unwrap()
    }

    #[test]
    fn conv_flops_fixture() {
        let spec = conv3(1, 32, 3, 64, 32);
        assert_eq!(flops_of_layer(&spec).unwrap(), 3_538_944.0);
    }

    #[test]
    fn pool_flops_fixture() {
        let spec = pool2(1, 32, 64, 32);
        assert_eq!(flops_of_layer(&spec).unwrap(), 65_536.0);
    }

    #[test]
    fn fc_unit_dims() {
        let spec = fc(1, 32, 1, 1);
        assert_eq!(flops_of_layer(&spec).unwrap(), 2.0);
    }

    #[test]
    fn conv_output_bits_fixture() {
        let spec = conv3(1, 32, 3, 64, 32);
        assert_eq!(output_bits_of_layer(&spec).unwrap(), 2_097_152.0);
    }

    #[test]
    fn fc_output_bits_fixture() {
        let spec = fc(1, 32, 4096, 10);
        assert_eq!(output_bits_of_layer(&spec).unwrap(), 320.0);
    }

    #[test]
    fn pool_output_bits_unit() {
        let spec = LayerSpec::Pooling {
            batch: 1,
            precision_bits: 1,
            c_in: 1,
            h_in: 2,
            w_in: 2,
            h_out: 1,
            w_out: 1,
        };
        assert_eq!(output_bits_of_layer(&spec).unwrap(), 1.0);
    }

    #[test]
    fn zero_dimension_rejected() {
        let spec = fc(1, 32, 0, 10);
        assert!(flops_of_layer(&spec).is_err());
        assert!(build_preset(Preset::Vgg11Cifar10, 0, 32).is_err());
    }

    #[test]
    fn vgg11_preset_shape() {
        let m = vgg();
        assert_eq!(m.len(), 16);
        // Frozen per-layer FLOPs of the canonical VGG-11 on 3x32x32.
        let expect_flops = [
            3_538_944.0,
            65_536.0,
            37_748_736.0,
            32_768.0,
            37_748_736.0,
            75_497_472.0,
            16_384.0,
            37_748_736.0,
            75_497_472.0,
            8_192.0,
            18_874_368.0,
            18_874_368.0,
            2_048.0,
            4_194_304.0,
            33_554_432.0,
            81_920.0,
        ];
        for (i, &want) in expect_flops.iter().enumerate() {
            assert_eq!(m.layers[i].flops, want, "layer {}", i + 1);
        }
        assert_eq!(m.total_flops(), 343_484_416.0);
        // Frozen forward-output bits at each partition point.
        let expect_bits = [
            2_097_152.0,
            524_288.0,
            1_048_576.0,
            262_144.0,
            524_288.0,
            524_288.0,
            131_072.0,
            262_144.0,
            262_144.0,
            65_536.0,
            65_536.0,
            65_536.0,
            16_384.0,
            131_072.0,
            131_072.0,
            320.0,
        ];
        for (i, &want) in expect_bits.iter().enumerate() {
            assert_eq!(m.layers[i].output_bits, want, "layer {}", i + 1);
        }
    }

    #[test]
    fn cnn_preset_shape() {
        let m = cnn();
        assert_eq!(m.len(), 6);
        let expect_flops = [
            451_584.0,
            25_088.0,
            7_225_344.0,
            12_544.0,
            802_816.0,
            2_560.0,
        ];
        for (i, &want) in expect_flops.iter().enumerate() {
            assert_eq!(m.layers[i].flops, want, "layer {}", i + 1);
        }
        assert_eq!(m.total_flops(), 8_519_936.0);
        let expect_bits = [
            802_816.0,
            200_704.0,
            401_408.0,
            100_352.0,
            4_096.0,
            320.0,
        ];
        for (i, &want) in expect_bits.iter().enumerate() {
            assert_eq!(m.layers[i].output_bits, want, "layer {}", i + 1);
        }
    }

    #[test]
    fn prefix_suffix_sums() {
        let m = ModelProfile::from_layers(
            "toy",
            vec![
                LayerProfile { flops: 2.0, output_bits: 8.0 },
                LayerProfile { flops: 3.0, output_bits: 8.0 },
                LayerProfile { flops: 5.0, output_bits: 8.0 },
            ],
        );
        assert_eq!(m.prefix_flops(0).unwrap(), 0.0);
        assert_eq!(m.prefix_flops(2).unwrap(), 5.0);
        assert_eq!(m.prefix_flops(3).unwrap(), m.total_flops());
        assert_eq!(m.suffix_flops(2).unwrap(), 5.0);
        assert!(m.prefix_flops(4).is_err());
        assert!(m.output_bits(0).is_err());
    }

    #[test]
    fn prefix_suffix_partition_all_points() {
        for m in [vgg(), cnn()] {
            let mut prev = -1.0;
            for l in 0..=m.len() {
                let p = m.prefix_flops(l).unwrap();
                let s = m.suffix_flops(l).unwrap();
                assert_eq!(p + s, m.total_flops());
                assert!(p >= prev, "prefix must be nondecreasing");
                prev = p;
            }
            for l in 1..=m.len() {
                assert!(m.output_bits(l).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn preset_parse_round_trip() {
        for p in [Preset::Vgg11Cifar10, Preset::CnnFashionMnist] {
            assert_eq!(Preset::parse(p.name()).unwrap(), p);
        }
        assert!(Preset::parse("resnet50").is_err());
    }
}
