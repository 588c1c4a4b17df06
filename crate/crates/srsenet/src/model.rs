//! The SrSENet model: a residual-learning stage of SE-gated residual blocks
//! over 3x3x`width` features, followed by a transposed-convolution upscale
//! head whose (kernel, stride, padding) triple is fixed by the upscale rate.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::ops::{self, raw, Conv2dParams, ConvTranspose2dParams, DenseParams};
use crate::tensor::{Scalar, Tensor};

/// Upscale rate -> (kernel, stride, padding) of the transposed upscale head.
pub fn upscale_triple(rate: usize) -> Option<(usize, usize, usize)> {
    match rate {
        2 => Some((4, 2, 1)),
        4 => Some((8, 4, 2)),
        8 => Some((16, 8, 4)),
        _ => None,
    }
}

/// Receptive field of `depth` stacked 3x3 blocks: `2*depth + 1` per side.
pub fn receptive_field(depth: usize) -> usize {
    2 * depth + 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrSeNetConfig {
    pub depth: usize,
    pub width: usize,
    pub upscale: usize,
    pub se_enabled: bool,
    pub input_channels: usize,
    /// SE bottleneck reduction ratio (distinct from the upscale rate).
    pub reduction: usize,
    pub leaky_slope: f64,
}

impl Default for SrSeNetConfig {
    fn default() -> Self {
        SrSeNetConfig {
            depth: 8,
            width: 64,
            upscale: 4,
            se_enabled: true,
            input_channels: 1,
            reduction: 16,
            leaky_slope: 0.2,
        }
    }
}

impl SrSeNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::invalid("config", "depth must be >= 1"));
        }
        if upscale_triple(self.upscale).is_none() {
            return Err(Error::invalid(
                "config",
                format!("unsupported upscale rate {} (supported: 2, 4, 8)", self.upscale),
            ));
        }
        if self.se_enabled && (self.reduction == 0 || !self.width.is_multiple_of(self.reduction)) {
            return Err(Error::invalid(
                "config",
                format!("width {} not divisible by reduction ratio {}", self.width, self.reduction),
            ));
        }
        if self.input_channels != 1 && self.input_channels != 3 {
            return Err(Error::invalid("config", "input_channels must be 1 or 3"));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::invalid("config", "leaky_slope must be in [0,1)"));
        }
        Ok(())
    }
}

/// Squeeze-and-excitation gate: pool -> FC bottleneck -> sigmoid -> rescale.
#[derive(Clone, Debug)]
pub struct SeLayerParams<T> {
    pub fc1: DenseParams<T>,
    pub fc2: DenseParams<T>,
    pub reduction: usize,
}

#[derive(Clone, Debug)]
pub struct SrSeBlockParams<T> {
    pub conv1: Conv2dParams<T>,
    pub conv2: Conv2dParams<T>,
    /// Absent in the ablated (SE-free) variant.
    pub se: Option<SeLayerParams<T>>,
}

#[derive(Clone, Debug)]
pub struct SrSeNet<T> {
    pub head: Conv2dParams<T>,
    pub blocks: Vec<SrSeBlockParams<T>>,
    pub upscale_head: ConvTranspose2dParams<T>,
    pub config: SrSeNetConfig,
}

/// Outputs of one forward pass, as tape handles.
pub struct ForwardVars {
    pub f0: Var,
    pub block_outputs: Vec<Var>,
    pub residual: Var,
    pub base: Var,
    pub sr: Var,
}

struct BoundConv {
    w: Var,
    b: Var,
}

struct BoundDense {
    w: Var,
    b: Var,
}

struct BoundSe {
    fc1: BoundDense,
    fc2: BoundDense,
}

struct BoundBlock {
    conv1: BoundConv,
    conv2: BoundConv,
    se: Option<BoundSe>,
}

/// The model's parameters registered as trainable leaves on one tape, in the
/// same order as [`SrSeNet::param_entries`].
pub struct BoundNet {
    head: BoundConv,
    blocks: Vec<BoundBlock>,
    upscale: BoundConv,
    vars: Vec<Var>,
}

impl BoundNet {
    pub fn param_vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Per-component parameter counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub head: usize,
    /// (conv, se) scalars per block.
    pub blocks: Vec<(usize, usize)>,
    pub upscale: usize,
    pub total: usize,
}

fn he_conv<T: Scalar>(
    rng: &mut ChaCha20Rng,
    shape: [usize; 4],
    fan_in: usize,
) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).unwrap();
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn dense_params<T: Scalar>(rng: &mut ChaCha20Rng, cin: usize, cout: usize) -> DenseParams<T> {
    DenseParams {
        weight: he_conv(rng, [1, cout, 1, cin], cin),
        bias: Tensor::zeros([1, cout, 1, 1]),
    }
}

/// Builds a network with zero-mean Gaussian weights of variance `2/fan_in`
/// and zero biases; bit-reproducible for a given seed.
pub fn build_srsenet<T: Scalar>(config: &SrSeNetConfig, seed: u64) -> Result<SrSeNet<T>> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let c = config.width;
    let conv = |rng: &mut ChaCha20Rng, cin: usize, cout: usize| Conv2dParams {
        weight: he_conv(rng, [cout, cin, 3, 3], cin * 9),
        bias: Tensor::zeros([1, cout, 1, 1]),
        stride: 1,
        padding: 1,
    };
    let head = conv(&mut rng, config.input_channels, c);
    let mut blocks = Vec::with_capacity(config.depth);
    for _ in 0..config.depth {
        let conv1 = conv(&mut rng, c, c);
        let conv2 = conv(&mut rng, c, c);
        let se = if config.se_enabled {
            let mid = c / config.reduction;
            Some(SeLayerParams {
                fc1: dense_params(&mut rng, c, mid),
                fc2: dense_params(&mut rng, mid, c),
                reduction: config.reduction,
            })
        } else {
            None
        };
        blocks.push(SrSeBlockParams { conv1, conv2, se });
    }
    let (k, s, p) = upscale_triple(config.upscale).unwrap();
    let upscale_head = ConvTranspose2dParams {
        weight: he_conv(&mut rng, [c, config.input_channels, k, k], c * k * k),
        bias: Tensor::zeros([1, config.input_channels, 1, 1]),
        stride: s,
        padding: p,
    };
    Ok(SrSeNet { head, blocks, upscale_head, config: config.clone() })
}

/// `z = gap(u); s = sigmoid(fc2(relu(fc1(z)))); u * s`, without a tape.
/// `gate_override` replaces the computed gate (test hook for the ablation
/// equivalence check).
fn se_forward_raw<T: Scalar>(
    u: &Tensor<T>,
    p: &SeLayerParams<T>,
    gate_override: Option<T>,
) -> Result<Tensor<T>> {
    let [n, c, _, _] = u.shape();
    let gate = match gate_override {
        Some(g) => Tensor::filled([n, c, 1, 1], g),
        None => {
            let z = raw::global_avg_pool(u)?;
            let a = raw::leaky_relu(&raw::dense(&z, &p.fc1.weight, &p.fc1.bias)?, 0.0)?;
            raw::sigmoid(&raw::dense(&a, &p.fc2.weight, &p.fc2.bias)?)
        }
    };
    raw::mul_channelwise(u, &gate)
}

fn block_forward_raw<T: Scalar>(
    x: &Tensor<T>,
    p: &SrSeBlockParams<T>,
    slope: f64,
    gate_override: Option<T>,
) -> Result<Tensor<T>> {
    let t = raw::conv2d(x, &p.conv1.weight, Some(&p.conv1.bias), p.conv1.stride, p.conv1.padding)?;
    let t = raw::leaky_relu(&t, slope)?;
    let t = raw::conv2d(&t, &p.conv2.weight, Some(&p.conv2.bias), p.conv2.stride, p.conv2.padding)?;
    let t = match &p.se {
        Some(se) => se_forward_raw(&t, se, gate_override)?,
        None => t,
    };
    raw::add(&t, x)
}

impl<T: Scalar> SrSeNet<T> {
    fn check_io(&self, lr: [usize; 4], base: [usize; 4]) -> Result<()> {
        let [n, c, h, w] = lr;
        let r = self.config.upscale;
        if c != self.config.input_channels {
            return Err(Error::ShapeMismatch {
                op: "srsenet_forward",
                expected: [n, self.config.input_channels, h, w],
                got: lr,
            });
        }
        if base != [n, c, r * h, r * w] {
            return Err(Error::ShapeMismatch {
                op: "srsenet_forward",
                expected: [n, c, r * h, r * w],
                got: base,
            });
        }
        Ok(())
    }

    /// Inference without gradient recording.
    pub fn infer(&self, lr: &Tensor<T>, base: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_io(lr.shape(), base.shape())?;
        let slope = self.config.leaky_slope;
        let f0 = raw::leaky_relu(
            &raw::conv2d(lr, &self.head.weight, Some(&self.head.bias), 1, self.head.padding)?,
            slope,
        )?;
        let mut x = f0.clone();
        let mut last = f0.clone();
        for block in &self.blocks {
            last = block_forward_raw(&x, block, slope, None)?;
            x = raw::add(&last, &f0)?;
        }
        let residual = raw::conv_transpose2d(
            &last,
            &self.upscale_head.weight,
            Some(&self.upscale_head.bias),
            self.upscale_head.stride,
            self.upscale_head.padding,
        )?;
        raw::add(base, &residual)
    }

    /// Registers every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &Tape<T>) -> BoundNet {
        let mut vars = Vec::new();
        let mut leaf = |t: &Tensor<T>| {
            let v = tape.leaf(t.clone(), true);
            vars.push(v);
            v
        };
        let head = BoundConv { w: leaf(&self.head.weight), b: leaf(&self.head.bias) };
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let conv1 = BoundConv { w: leaf(&block.conv1.weight), b: leaf(&block.conv1.bias) };
            let conv2 = BoundConv { w: leaf(&block.conv2.weight), b: leaf(&block.conv2.bias) };
            let se = block.se.as_ref().map(|se| BoundSe {
                fc1: BoundDense { w: leaf(&se.fc1.weight), b: leaf(&se.fc1.bias) },
                fc2: BoundDense { w: leaf(&se.fc2.weight), b: leaf(&se.fc2.bias) },
            });
            blocks.push(BoundBlock { conv1, conv2, se });
        }
        let upscale =
            BoundConv { w: leaf(&self.upscale_head.weight), b: leaf(&self.upscale_head.bias) };
        BoundNet { head, blocks, upscale, vars }
    }

    /// Recorded forward pass: `f0 = lrelu(head(lr))`; each block sees its
    /// predecessor's output plus the short connection from `f0`; the last
    /// block output feeds the upscale head; `sr = base + residual`.
    pub fn forward_on_tape(
        &self,
        tape: &Tape<T>,
        bound: &BoundNet,
        lr: Var,
        base: Var,
    ) -> Result<ForwardVars> {
        self.check_io(tape.shape(lr), tape.shape(base))?;
        let slope = self.config.leaky_slope;
        let pad = self.head.padding;
        let f0 = ops::tape::leaky_relu(
            tape,
            ops::tape::conv2d(tape, lr, bound.head.w, bound.head.b, 1, pad)?,
            slope,
        )?;
        let mut x = f0;
        let mut last = f0;
        let mut block_outputs = Vec::with_capacity(self.blocks.len());
        for (block, bb) in self.blocks.iter().zip(&bound.blocks) {
            let t = ops::tape::conv2d(tape, x, bb.conv1.w, bb.conv1.b, 1, block.conv1.padding)?;
            let t = ops::tape::leaky_relu(tape, t, slope)?;
            let t = ops::tape::conv2d(tape, t, bb.conv2.w, bb.conv2.b, 1, block.conv2.padding)?;
            let t = match &bb.se {
                Some(se) => {
                    let z = ops::tape::global_avg_pool(tape, t)?;
                    let a = ops::tape::dense(tape, z, se.fc1.w, se.fc1.b)?;
                    let a = ops::tape::leaky_relu(tape, a, 0.0)?;
                    let s = ops::tape::sigmoid(tape, ops::tape::dense(tape, a, se.fc2.w, se.fc2.b)?)?;
                    ops::tape::mul_channelwise(tape, t, s)?
                }
                None => t,
            };
            last = ops::tape::add(tape, t, x)?;
            block_outputs.push(last);
            x = ops::tape::add(tape, last, f0)?;
        }
        let residual = ops::tape::conv_transpose2d(
            tape,
            last,
            bound.upscale.w,
            bound.upscale.b,
            self.upscale_head.stride,
            self.upscale_head.padding,
        )?;
        let sr = ops::tape::add(tape, base, residual)?;
        Ok(ForwardVars { f0, block_outputs, residual, base, sr })
    }

    /// Named parameter tensors in a fixed, checkpoint-stable order.
    pub fn param_entries(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        out.push(("head.weight".to_string(), &self.head.weight));
        out.push(("head.bias".to_string(), &self.head.bias));
        for (i, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.conv1.weight"), &block.conv1.weight));
            out.push((format!("block{i}.conv1.bias"), &block.conv1.bias));
            out.push((format!("block{i}.conv2.weight"), &block.conv2.weight));
            out.push((format!("block{i}.conv2.bias"), &block.conv2.bias));
            if let Some(se) = &block.se {
                out.push((format!("block{i}.se.fc1.weight"), &se.fc1.weight));
                out.push((format!("block{i}.se.fc1.bias"), &se.fc1.bias));
                out.push((format!("block{i}.se.fc2.weight"), &se.fc2.weight));
                out.push((format!("block{i}.se.fc2.bias"), &se.fc2.bias));
            }
        }
        out.push(("upscale.weight".to_string(), &self.upscale_head.weight));
        out.push(("upscale.bias".to_string(), &self.upscale_head.bias));
        out
    }

    /// Mutable parameter tensors, same order as [`Self::param_entries`].
    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        for block in &mut self.blocks {
            out.push(&mut block.conv1.weight);
            out.push(&mut block.conv1.bias);
            out.push(&mut block.conv2.weight);
            out.push(&mut block.conv2.bias);
            if let Some(se) = &mut block.se {
                out.push(&mut se.fc1.weight);
                out.push(&mut se.fc1.bias);
                out.push(&mut se.fc2.weight);
                out.push(&mut se.fc2.bias);
            }
        }
        out.push(&mut self.upscale_head.weight);
        out.push(&mut self.upscale_head.bias);
        out
    }

    pub fn param_count(&self) -> ParamCount {
        let head = self.head.weight.len() + self.head.bias.len();
        let blocks: Vec<(usize, usize)> = self
            .blocks
            .iter()
            .map(|b| {
                let conv = b.conv1.weight.len()
                    + b.conv1.bias.len()
                    + b.conv2.weight.len()
                    + b.conv2.bias.len();
                let se = b
                    .se
                    .as_ref()
                    .map(|se| {
                        se.fc1.weight.len()
                            + se.fc1.bias.len()
                            + se.fc2.weight.len()
                            + se.fc2.bias.len()
                    })
                    .unwrap_or(0);
                (conv, se)
            })
            .collect();
        let upscale = self.upscale_head.weight.len() + self.upscale_head.bias.len();
        let total = head + upscale + blocks.iter().map(|(c, s)| c + s).sum::<usize>();
        ParamCount { head, blocks, upscale, total }
    }

    pub fn zero_parameters(&mut self) {
        for t in self.param_tensors_mut() {
            for v in t.data_mut() {
                *v = T::zero();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SrSeNetConfig {
        SrSeNetConfig {
            depth: 2,
            width: 8,
            upscale: 2,
            se_enabled: true,
            input_channels: 1,
            reduction: 4,
            leaky_slope: 0.2,
        }
    }

    fn rand_tensor(seed: u64, shape: [usize; 4]) -> Tensor<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn upscale_triples() {
        assert_eq!(upscale_triple(2), Some((4, 2, 1)));
        assert_eq!(upscale_triple(4), Some((8, 4, 2)));
        assert_eq!(upscale_triple(8), Some((16, 8, 4)));
        assert_eq!(upscale_triple(3), None);
    }

    #[test]
    fn receptive_field_formula() {
        assert_eq!(receptive_field(8), 17);
        assert_eq!(receptive_field(0), 1);
        assert_eq!(receptive_field(20), 41);
    }

    #[test]
    fn zero_se_weights_halve_the_input() {
        // All-zero SE weights give sigmoid(0) = 0.5 on every channel.
        let se = SeLayerParams::<f64> {
            fc1: DenseParams { weight: Tensor::zeros([1, 2, 1, 8]), bias: Tensor::zeros([1, 2, 1, 1]) },
            fc2: DenseParams { weight: Tensor::zeros([1, 8, 1, 2]), bias: Tensor::zeros([1, 8, 1, 1]) },
            reduction: 4,
        };
        let u = rand_tensor(7, [1, 8, 3, 3]);
        let y = se_forward_raw(&u, &se, None).unwrap();
        for (a, b) in y.data().iter().zip(u.data()) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        // and zero input with zero biases stays zero
        let z = se_forward_raw(&Tensor::zeros([1, 8, 3, 3]), &se, None).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn se_gate_is_strictly_attenuating() {
        let net = build_srsenet::<f64>(&tiny_config(), 5).unwrap();
        let se = net.blocks[0].se.as_ref().unwrap();
        let u = rand_tensor(8, [1, 8, 4, 4]);
        let y = se_forward_raw(&u, se, None).unwrap();
        assert!(y.max_abs() < u.max_abs());
        // every gate strictly in (0,1): |y| < |u| elementwise where u != 0
        for (a, b) in y.data().iter().zip(u.data()) {
            if *b != 0.0 {
                assert!(a.abs() < b.abs());
                assert!(a.abs() > 0.0);
            }
        }
    }

    #[test]
    fn zero_residual_branch_is_identity() {
        let mut net = build_srsenet::<f64>(&tiny_config(), 3).unwrap();
        for block in &mut net.blocks {
            for t in [&mut block.conv1.weight, &mut block.conv1.bias, &mut block.conv2.weight, &mut block.conv2.bias] {
                for v in t.data_mut() {
                    *v = 0.0;
                }
            }
        }
        let x = rand_tensor(9, [1, 8, 5, 5]);
        let y = block_forward_raw(&x, &net.blocks[0], 0.2, None).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn ablated_identity_convs_double_positive_input() {
        // k=3 kernels with center 1 act as identity; skip adds x once more.
        let mut eye = Tensor::<f64>::zeros([8, 8, 3, 3]);
        for c in 0..8 {
            let idx = eye.index(c, c, 1, 1);
            eye.data_mut()[idx] = 1.0;
        }
        let block = SrSeBlockParams {
            conv1: Conv2dParams { weight: eye.clone(), bias: Tensor::zeros([1, 8, 1, 1]), stride: 1, padding: 1 },
            conv2: Conv2dParams { weight: eye, bias: Tensor::zeros([1, 8, 1, 1]), stride: 1, padding: 1 },
            se: None,
        };
        let x = rand_tensor(10, [1, 8, 4, 4]).map(f64::abs);
        let y = block_forward_raw(&x, &block, 0.2, None).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_override_matches_ablated_block() {
        let net = build_srsenet::<f64>(&tiny_config(), 4).unwrap();
        let mut ablated = net.blocks[0].clone();
        ablated.se = None;
        let x = rand_tensor(11, [1, 8, 5, 5]);
        let with_unit_gates = block_forward_raw(&x, &net.blocks[0], 0.2, Some(1.0)).unwrap();
        let without_se = block_forward_raw(&x, &ablated, 0.2, None).unwrap();
        assert_eq!(with_unit_gates.data(), without_se.data());
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_srsenet::<f32>(&tiny_config(), 42).unwrap();
        let b = build_srsenet::<f32>(&tiny_config(), 42).unwrap();
        for ((_, ta), (_, tb)) in a.param_entries().iter().zip(b.param_entries()) {
            assert_eq!(ta.data(), tb.data());
        }
        let c = build_srsenet::<f32>(&tiny_config(), 43).unwrap();
        assert_ne!(a.head.weight.data(), c.head.weight.data());
    }

    #[test]
    fn default_config_parameter_counts() {
        let cfg = SrSeNetConfig::default();
        let net = build_srsenet::<f32>(&cfg, 0).unwrap();
        let counts = net.param_count();
        assert_eq!(counts.head, 64 * 9 + 64);
        for (_, se) in &counts.blocks {
            // fc1 64*4+4, fc2 4*64+64
            assert_eq!(*se, 260 + 320);
        }
        let se_total: usize = counts.blocks.iter().map(|(_, s)| s).sum();
        assert_eq!(se_total, 4640);

        let ablated = build_srsenet::<f32>(&SrSeNetConfig { se_enabled: false, ..cfg }, 0).unwrap();
        assert_eq!(counts.total - ablated.param_count().total, 4640);
    }

    #[test]
    fn doubling_depth_doubles_block_subtotal() {
        let cfg = tiny_config();
        let single: usize = build_srsenet::<f32>(&cfg, 0)
            .unwrap()
            .param_count()
            .blocks
            .iter()
            .map(|(c, s)| c + s)
            .sum();
        let double: usize = build_srsenet::<f32>(&SrSeNetConfig { depth: 4, ..cfg }, 0)
            .unwrap()
            .param_count()
            .blocks
            .iter()
            .map(|(c, s)| c + s)
            .sum();
        assert_eq!(double, 2 * single);
    }

    #[test]
    fn zero_weights_reproduce_the_base_image() {
        let mut net = build_srsenet::<f64>(&tiny_config(), 1).unwrap();
        net.zero_parameters();
        let lr = rand_tensor(12, [1, 1, 6, 6]);
        let base = rand_tensor(13, [1, 1, 12, 12]);
        let sr = net.infer(&lr, &base).unwrap();
        assert_eq!(sr.data(), base.data());
    }

    #[test]
    fn forward_extent_law() {
        let cfg = SrSeNetConfig { upscale: 4, ..tiny_config() };
        let net = build_srsenet::<f64>(&cfg, 2).unwrap();
        let lr = rand_tensor(14, [1, 1, 24, 24]);
        let base = rand_tensor(15, [1, 1, 96, 96]);
        let sr = net.infer(&lr, &base).unwrap();
        assert_eq!(sr.shape(), [1, 1, 96, 96]);
        // mismatched base is rejected
        assert!(net.infer(&lr, &rand_tensor(16, [1, 1, 95, 95])).is_err());
    }

    #[test]
    fn tape_forward_matches_infer() {
        let net = build_srsenet::<f64>(&tiny_config(), 21).unwrap();
        let lr = rand_tensor(22, [2, 1, 6, 6]);
        let base = rand_tensor(23, [2, 1, 12, 12]);
        let plain = net.infer(&lr, &base).unwrap();
        let tape = Tape::new();
        let bound = net.bind(&tape);
        let lrv = tape.leaf(lr, false);
        let basev = tape.leaf(base, false);
        let fwd = net.forward_on_tape(&tape, &bound, lrv, basev).unwrap();
        assert_eq!(tape.value(fwd.sr).data(), plain.data());
    }
}
