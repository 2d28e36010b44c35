//! Encoder–decoder network for de-aliasing undersampled B-scans.
//!
//! Channel table for `depth = D`, `c_0 = in_channels`, `c_i = base·2^(i−1)`:
//!
//! | block        | conv1            | conv2                              |
//! |--------------|------------------|------------------------------------|
//! | `down{i}`    | `c_{i−1} → c_i`  | `c_i → c_i` (skip, then 2×2 pool)  |
//! | `up{i}`      | `2·c_i → c_i`    | `c_i → c_{i−1}` (`c_1 → c_1` at i=1) |
//! | `final.conv` | `c_1 → out`      |                                    |
//!
//! The decoder starts from the pooled output of the deepest down-block; each
//! up-block upsamples ×2, concatenates `[skip_i, upsampled]` and applies its
//! two convolutions. Every convolution except the head is followed by a Leaky
//! ReLU; the head is linear.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::NormMeta;
use crate::error::{invalid, shape_err};
use crate::nn::{self, Param, Pooled, Scalar, Tensor};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub depth: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            base_channels: 48,
            in_channels: 2,
            out_channels: 1,
        }
    }
}

/// Name and channel counts of one convolution in the channel table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, 3, 3]
    }

    pub fn param_count(&self) -> usize {
        (9 * self.in_channels + 1) * self.out_channels
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(invalid!("all network config fields must be >= 1: {self:?}"));
        }
        if self.depth > 16 {
            return Err(invalid!("depth {} is unreasonably large", self.depth));
        }
        Ok(())
    }

    /// `c_level`; level 0 is the input.
    pub fn channels(&self, level: usize) -> usize {
        if level == 0 {
            self.in_channels
        } else {
            self.base_channels << (level - 1)
        }
    }

    /// Spatial sizes must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.depth
    }

    /// All convolutions in parameter order: down-blocks shallow to deep,
    /// up-blocks deep to shallow, then the head.
    pub fn conv_specs(&self) -> Vec<ConvSpec> {
        let spec = |name: String, i: usize, o: usize| ConvSpec {
            name,
            in_channels: i,
            out_channels: o,
        };
        let mut specs = Vec::with_capacity(4 * self.depth + 1);
        for i in 1..=self.depth {
            specs.push(spec(format!("down{i}.conv1"), self.channels(i - 1), self.channels(i)));
            specs.push(spec(format!("down{i}.conv2"), self.channels(i), self.channels(i)));
        }
        for i in (1..=self.depth).rev() {
            let c = self.channels(i);
            let out = if i > 1 { self.channels(i - 1) } else { c };
            specs.push(spec(format!("up{i}.conv1"), 2 * c, c));
            specs.push(spec(format!("up{i}.conv2"), c, out));
        }
        specs.push(spec(String::from("final.conv"), self.channels(1), self.out_channels));
        specs
    }

    pub fn param_count(&self) -> usize {
        self.conv_specs().iter().map(ConvSpec::param_count).sum()
    }
}

/// One 3×3 convolution's weight `[Cout,Cin,3,3]` and bias `[Cout]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T = f32> {
    pub name: String,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNetModel<T = f32> {
    config: UNetConfig,
    layers: Vec<ConvLayer<T>>,
}

/// One standardized training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    /// `[2, P, P]`: real and imaginary parts of the undersampled reconstruction.
    pub input: Tensor<f32>,
    /// `[1, P, P]`: ground-truth amplitude.
    pub target: Tensor<f32>,
    pub norm_meta: NormMeta,
}

/// Activations kept by [`UNetModel::forward_train`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    conv_inputs: Vec<Tensor<T>>,
    // pre-activation outputs; None for the linear head
    preacts: Vec<Option<Tensor<T>>>,
    pools: Vec<Pooled<T>>,
    upsample_shapes: Vec<[usize; 4]>,
}

impl<T: Scalar> UNetModel<T> {
    /// Fresh model with He-uniform weights and zero biases drawn from `seed`.
    pub fn build(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .conv_specs()
            .into_iter()
            .map(|s| {
                let weight = nn::he_init(&s.weight_shape(), 9 * s.in_channels, &mut rng)?;
                Ok(ConvLayer {
                    weight: Param::new(weight),
                    bias: Param::new(Tensor::zeros(&[s.out_channels])),
                    name: s.name,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, layers })
    }

    /// Assembles a model from stored tensors, checking names and shapes
    /// against the channel table. Errors name the first offending tensor.
    pub fn from_tensors(config: UNetConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let specs = config.conv_specs();
        if tensors.len() != 2 * specs.len() {
            return Err(shape_err!(
                "expected {} tensors for {config:?}, found {}",
                2 * specs.len(),
                tensors.len()
            ));
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::with_capacity(specs.len());
        for s in specs {
            let mut take = |suffix: &str, shape: &[usize]| -> Result<Tensor<T>> {
                let expected = format!("{}.{suffix}", s.name);
                let (name, t) = it.next().expect("length checked above");
                if name != expected {
                    return Err(shape_err!("tensor {name}: expected {expected} at this position"));
                }
                if t.shape() != shape {
                    return Err(shape_err!(
                        "tensor {name}: shape {:?} does not match expected {shape:?}",
                        t.shape()
                    ));
                }
                Ok(t)
            };
            let weight = take("weight", &s.weight_shape())?;
            let bias = take("bias", &[s.out_channels])?;
            layers.push(ConvLayer {
                name: s.name,
                weight: Param::new(weight),
                bias: Param::new(bias),
            });
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    /// `(name, tensor)` for every weight and bias in file order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    (format!("{}.weight", l.name), &l.weight.value),
                    (format!("{}.bias", l.name), &l.bias.value),
                ]
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.value.len() + l.bias.value.len())
            .sum()
    }

    /// Same weights in another precision (optimizer state is not carried over).
    pub fn cast<U: Scalar>(&self) -> UNetModel<U> {
        UNetModel {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    name: l.name.clone(),
                    weight: Param::new(l.weight.value.cast()),
                    bias: Param::new(l.bias.value.cast()),
                })
                .collect(),
        }
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.weight.zero_grad();
            l.bias.zero_grad();
        }
    }

    fn down_index(&self, level: usize, conv: usize) -> usize {
        2 * (level - 1) + conv
    }

    fn up_index(&self, level: usize, conv: usize) -> usize {
        2 * self.config.depth + 2 * (self.config.depth - level) + conv
    }

    fn head_index(&self) -> usize {
        4 * self.config.depth
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.config.in_channels {
            return Err(shape_err!(
                "network expects {} input channels, got {c}",
                self.config.in_channels
            ));
        }
        let d = self.config.divisor();
        if h % d != 0 || w % d != 0 {
            return Err(shape_err!(
                "input {h}x{w} is not divisible by 2^{} = {d}",
                self.config.depth
            ));
        }
        x.ensure_finite("network input")
    }

    fn conv(&self, index: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        let l = &self.layers[index];
        nn::conv2d(x, &l.weight.value, &l.bias.value)
    }

    /// Inference pass; keeps only the skip tensors alive.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let depth = self.config.depth;
        let mut skips = Vec::with_capacity(depth);
        let mut h = x.clone();
        for level in 1..=depth {
            h = nn::leaky_relu(&self.conv(self.down_index(level, 0), &h)?);
            h = nn::leaky_relu(&self.conv(self.down_index(level, 1), &h)?);
            let pooled = nn::maxpool2(&h)?.output;
            skips.push(core::mem::replace(&mut h, pooled));
        }
        for level in (1..=depth).rev() {
            let up = nn::upsample_bilinear2(&h)?;
            let skip = skips.pop().expect("one skip per level");
            let cat = nn::concat_channels(&skip, &up)?;
            drop((skip, up));
            h = nn::leaky_relu(&self.conv(self.up_index(level, 0), &cat)?);
            h = nn::leaky_relu(&self.conv(self.up_index(level, 1), &h)?);
        }
        self.conv(self.head_index(), &h)
    }

    /// Forward pass that records every activation needed by [`Self::backward`].
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardTrace<T>)> {
        self.check_input(x)?;
        let depth = self.config.depth;
        let n_layers = self.layers.len();
        let mut trace = ForwardTrace {
            conv_inputs: Vec::with_capacity(n_layers),
            preacts: Vec::with_capacity(n_layers),
            pools: Vec::with_capacity(depth),
            upsample_shapes: Vec::with_capacity(depth),
        };
        // Layers execute in parameter order, so trace slots line up with layer indices.
        let conv_act = |model: &Self, index: usize, x: Tensor<T>, trace: &mut ForwardTrace<T>| {
            let pre = model.conv(index, &x)?;
            let act = nn::leaky_relu(&pre);
            trace.conv_inputs.push(x);
            trace.preacts.push(Some(pre));
            Ok::<_, crate::Error>(act)
        };
        let mut skips = Vec::with_capacity(depth);
        let mut h = x.clone();
        for level in 1..=depth {
            h = conv_act(self, self.down_index(level, 0), h, &mut trace)?;
            h = conv_act(self, self.down_index(level, 1), h, &mut trace)?;
            let pooled = nn::maxpool2(&h)?;
            skips.push(core::mem::replace(&mut h, pooled.output.clone()));
            trace.pools.push(pooled);
        }
        for level in (1..=depth).rev() {
            trace.upsample_shapes.push(h.dims4().map(|(b, c, hh, ww)| [b, c, hh, ww])?);
            let up = nn::upsample_bilinear2(&h)?;
            let cat = nn::concat_channels(&skips[level - 1], &up)?;
            h = conv_act(self, self.up_index(level, 0), cat, &mut trace)?;
            h = conv_act(self, self.up_index(level, 1), h, &mut trace)?;
        }
        let out = self.conv(self.head_index(), &h)?;
        trace.conv_inputs.push(h);
        trace.preacts.push(None);
        Ok((out, trace))
    }

    fn conv_backward(&mut self, index: usize, trace: &ForwardTrace<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let grad_pre = match &trace.preacts[index] {
            Some(pre) => nn::leaky_relu_backward(pre, &grad)?,
            None => grad,
        };
        let layer = &mut self.layers[index];
        let grads = nn::conv2d_backward(&trace.conv_inputs[index], &layer.weight.value, &grad_pre)?;
        for (acc, g) in layer.weight.grad.data_mut().iter_mut().zip(grads.weight.data()) {
            *acc += *g;
        }
        for (acc, g) in layer.bias.grad.data_mut().iter_mut().zip(grads.bias.data()) {
            *acc += *g;
        }
        Ok(grads.input)
    }

    /// Accumulates parameter gradients for `grad_out = ∂loss/∂output` and
    /// returns `∂loss/∂input`.
    pub fn backward(&mut self, trace: &ForwardTrace<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let depth = self.config.depth;
        let mut g = self.conv_backward(self.head_index(), trace, grad_out.clone())?;
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..depth).map(|_| None).collect();
        for (k, level) in (1..=depth).enumerate() {
            g = self.conv_backward(self.up_index(level, 1), trace, g)?;
            g = self.conv_backward(self.up_index(level, 0), trace, g)?;
            let skip_channels = self.config.channels(level);
            let (g_skip, g_up) = nn::split_channels(&g, skip_channels)?;
            skip_grads[level - 1] = Some(g_skip);
            // upsample shapes were recorded deepest level first
            let shape = trace.upsample_shapes[depth - 1 - k];
            g = nn::upsample_bilinear2_backward(&g_up, shape)?;
        }
        for level in (1..=depth).rev() {
            let mut gs = nn::maxpool2_backward(&trace.pools[level - 1], &g)?;
            let skip = skip_grads[level - 1].take().expect("filled by decoder pass");
            for (a, b) in gs.data_mut().iter_mut().zip(skip.data()) {
                *a += *b;
            }
            g = self.conv_backward(self.down_index(level, 1), trace, gs)?;
            g = self.conv_backward(self.down_index(level, 0), trace, g)?;
        }
        Ok(g)
    }

    pub fn adam_step(&mut self, learning_rate: f64) -> Result<()> {
        for l in &mut self.layers {
            l.weight.adam_step(learning_rate);
            l.bias.adam_step(learning_rate);
            l.weight.value.ensure_finite("adam update")?;
            l.bias.value.ensure_finite("adam update")?;
        }
        Ok(())
    }

    /// Forward, L1 loss, backward and one Adam update on stacked tensors.
    /// Returns the loss before the update.
    pub fn train_step_tensors(&mut self, input: &Tensor<T>, target: &Tensor<T>, learning_rate: f64) -> Result<f64> {
        self.zero_grad();
        let (pred, trace) = self.forward_train(input)?;
        let (loss, grad) = nn::l1_loss(&pred, target)?;
        self.backward(&trace, &grad)?;
        self.adam_step(learning_rate)?;
        Ok(loss)
    }

    /// [`Self::train_step_tensors`] on a batch of samples.
    pub fn train_step(&mut self, batch: &[TrainSample], learning_rate: f64) -> Result<f64> {
        let (input, target) = stack_batch(batch)?;
        self.train_step_tensors(&input.cast(), &target.cast(), learning_rate)
    }
}

/// Stacks samples into `[B,2,P,P]` inputs and `[B,1,P,P]` targets.
pub fn stack_batch(batch: &[TrainSample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    if batch.is_empty() {
        return Err(invalid!("training batch is empty"));
    }
    let inputs: Vec<&Tensor<f32>> = batch.iter().map(|s| &s.input).collect();
    let targets: Vec<&Tensor<f32>> = batch.iter().map(|s| &s.target).collect();
    Ok((Tensor::stack(&inputs)?, Tensor::stack(&targets)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn full_scale_channel_progression() {
        let cfg = UNetConfig::default();
        let downs: Vec<usize> = (1..=5).map(|i| cfg.channels(i)).collect();
        assert_eq!(downs, vec![48, 96, 192, 384, 768]);
        let specs = cfg.conv_specs();
        assert_eq!(specs.len(), 21);
        assert_eq!(specs[0].name, "down1.conv1");
        assert_eq!(specs[10].name, "up5.conv1");
        assert_eq!((specs[10].in_channels, specs[10].out_channels), (1536, 768));
        assert_eq!(specs[19].name, "up1.conv2");
        assert_eq!((specs[19].in_channels, specs[19].out_channels), (48, 48));
        assert_eq!(specs[20].name, "final.conv");
    }

    #[test]
    fn hand_counted_tiny_config() {
        // five convs: 1→1, 1→1, 2→1, 1→1, 1→1 → 10 + 10 + 19 + 10 + 10
        let cfg = UNetConfig {
            depth: 1,
            base_channels: 1,
            in_channels: 1,
            out_channels: 1,
        };
        assert_eq!(cfg.param_count(), 59);
        let m = UNetModel::<f32>::build(cfg, 0).unwrap();
        assert_eq!(m.param_count(), 59);
    }

    #[test]
    fn concat_width_is_twice_the_skip() {
        for depth in 1..=5 {
            for base in [1, 3, 16] {
                let cfg = UNetConfig {
                    depth,
                    base_channels: base,
                    in_channels: 2,
                    out_channels: 1,
                };
                for s in cfg.conv_specs().iter().filter(|s| s.name.ends_with("conv1") && s.name.starts_with("up")) {
                    let level: usize = s.name[2..s.name.find('.').unwrap()].parse().unwrap();
                    assert_eq!(s.in_channels, 2 * cfg.channels(level));
                }
            }
        }
    }

    #[test]
    fn forward_shape_and_divisibility() {
        let cfg = UNetConfig {
            depth: 2,
            base_channels: 4,
            in_channels: 2,
            out_channels: 1,
        };
        let m = UNetModel::<f32>::build(cfg, 1).unwrap();
        let y = m.forward(&Tensor::full(&[1, 2, 8, 8], 0.3)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 8, 8]);
        assert!(matches!(
            m.forward(&Tensor::zeros(&[1, 2, 6, 8])),
            Err(crate::Error::Shape(_))
        ));
        assert!(m.forward(&Tensor::zeros(&[1, 3, 8, 8])).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let cfg = UNetConfig {
            depth: 2,
            base_channels: 3,
            in_channels: 2,
            out_channels: 1,
        };
        let mut m = UNetModel::<f64>::build(cfg, 4).unwrap();
        for l in m.layers_mut() {
            l.weight.value.fill(0.0);
            l.bias.value.fill(0.0);
        }
        let x = Tensor::from_vec(&[1, 2, 4, 4], (0..32).map(|v| v as f64 - 9.0).collect()).unwrap();
        assert!(m.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_forward_matches_inference() {
        let cfg = UNetConfig {
            depth: 2,
            base_channels: 2,
            in_channels: 2,
            out_channels: 1,
        };
        let m = UNetModel::<f64>::build(cfg, 11).unwrap();
        let x = Tensor::from_vec(&[2, 2, 8, 4], (0..128).map(|v| ((v * 37) % 17) as f64 / 8.0 - 1.0).collect()).unwrap();
        let (a, _) = m.forward_train(&x).unwrap();
        assert_eq!(a, m.forward(&x).unwrap());
    }

    #[test]
    fn same_seed_same_weights() {
        let cfg = UNetConfig::default();
        let small = UNetConfig { depth: 2, ..cfg };
        assert_eq!(UNetModel::<f32>::build(small, 9).unwrap(), UNetModel::<f32>::build(small, 9).unwrap());
        assert_ne!(UNetModel::<f32>::build(small, 9).unwrap(), UNetModel::<f32>::build(small, 10).unwrap());
    }

    #[test]
    fn from_tensors_names_first_mismatch() {
        let cfg16 = UNetConfig { depth: 2, base_channels: 16, ..UNetConfig::default() };
        let cfg48 = UNetConfig { base_channels: 48, ..cfg16 };
        let m = UNetModel::<f32>::build(cfg16, 0).unwrap();
        let tensors = m.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        let err = UNetModel::<f32>::from_tensors(cfg48, tensors).unwrap_err();
        assert!(format!("{err}").contains("down1.conv1.weight"), "{err}");
        let tensors = m.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        assert_eq!(UNetModel::<f32>::from_tensors(cfg16, tensors).unwrap(), m);
    }

    #[test]
    fn empty_batch_rejected() {
        let mut m = UNetModel::<f32>::build(UNetConfig { depth: 1, base_channels: 1, ..UNetConfig::default() }, 0).unwrap();
        assert!(m.train_step(&[], 1e-3).is_err());
        let _ = vec![0u8];
    }
}
