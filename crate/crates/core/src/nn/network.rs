use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvGeom};
use super::optim::ParamGroup;
use super::tensor::Tensor;
use crate::activations::{Activation, ActivationFamily, ActivationKind};
use crate::basis::MexicanHatBasis;
use crate::{Error, Result};

/// L2 coefficient applied to APLU slopes.
pub const APLU_L2: f64 = 0.001;

const CHECKPOINT_FORMAT: &str = "actens-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { out_channels: usize, kernel: usize, stride: usize },
    MaxPool { kernel: usize },
    Dense { out: usize },
    Activation,
    Flatten,
}

/// Input shape plus the layer stack. The last layer must be the dense output
/// layer; its width is the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Two conv/activation/pool stages followed by the output layer.
    pub fn small_cnn(input: [usize; 3], classes: usize) -> Self {
        use LayerSpec::*;
        NetworkSpec {
            input,
            layers: vec![
                Conv2d { out_channels: 6, kernel: 3, stride: 1 },
                Activation,
                MaxPool { kernel: 2 },
                Conv2d { out_channels: 12, kernel: 3, stride: 1 },
                Activation,
                MaxPool { kernel: 2 },
                Flatten,
                Dense { out: classes },
            ],
        }
    }

    /// Fully connected network with one activation after every hidden layer.
    pub fn mlp(input: [usize; 3], hidden: &[usize], classes: usize) -> Self {
        let mut layers = vec![LayerSpec::Flatten];
        for &h in hidden {
            layers.push(LayerSpec::Dense { out: h });
            layers.push(LayerSpec::Activation);
        }
        layers.push(LayerSpec::Dense { out: classes });
        NetworkSpec { input, layers }
    }

    /// Picks [`small_cnn`](Self::small_cnn) for images large enough to survive
    /// both conv/pool stages, otherwise a one-hidden-layer MLP.
    pub fn default_for(input: [usize; 3], classes: usize) -> Self {
        if input[1] >= 10 && input[2] >= 10 {
            Self::small_cnn(input, classes)
        } else {
            Self::mlp(input, &[32], classes)
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match self.layers.last() {
            Some(LayerSpec::Dense { out }) => Some(*out),
            _ => None,
        }
    }

    /// Checks shapes chain and activation placement; returns the output
    /// shape of every layer.
    pub fn validate(&self) -> Result<Vec<[usize; 3]>> {
        if self.input.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("empty input shape {:?}", self.input)));
        }
        if self.classes().is_none() {
            return Err(Error::config("the last layer must be a dense output layer"));
        }
        let last = self.layers.len() - 1;
        let mut shape = self.input;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let next_is_act = matches!(self.layers.get(i + 1), Some(LayerSpec::Activation));
            shape = match *layer {
                LayerSpec::Conv2d { out_channels, kernel, stride } => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::config(format!("layer {i}: zero conv parameter")));
                    }
                    if kernel > shape[1] || kernel > shape[2] {
                        return Err(Error::config(format!(
                            "layer {i}: kernel {kernel} larger than input {shape:?}"
                        )));
                    }
                    if !next_is_act {
                        return Err(Error::config(format!(
                            "layer {i}: conv2d must be followed by an activation"
                        )));
                    }
                    ConvGeom { in_shape: shape, out_channels, kernel, stride }.out_shape()
                }
                LayerSpec::MaxPool { kernel } => {
                    if kernel == 0 || kernel > shape[1] || kernel > shape[2] {
                        return Err(Error::config(format!(
                            "layer {i}: pool kernel {kernel} does not fit {shape:?}"
                        )));
                    }
                    layers::pool_out_shape(shape, kernel)
                }
                LayerSpec::Dense { out } => {
                    if out == 0 {
                        return Err(Error::config(format!("layer {i}: dense width 0")));
                    }
                    if i != last && !next_is_act {
                        return Err(Error::config(format!(
                            "layer {i}: hidden dense layer must be followed by an activation"
                        )));
                    }
                    [out, 1, 1]
                }
                LayerSpec::Activation => {
                    let after_linear = i > 0
                        && matches!(
                            self.layers[i - 1],
                            LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. }
                        );
                    if !after_linear {
                        return Err(Error::config(format!(
                            "layer {i}: activation must follow a conv2d or dense layer"
                        )));
                    }
                    shape
                }
                LayerSpec::Flatten => [element_count(shape, i)?, 1, 1],
            };
            element_count(shape, i)?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Learnable values the spec needs with `per_channel` activation
    /// parameters, or an error when the count overflows.
    pub fn param_count(&self, per_channel: usize) -> Result<usize> {
        let shapes = self.validate()?;
        let overflow = || Error::config("network is too large");
        let mut total = 0usize;
        let mut in_shape = self.input;
        for (layer, out_shape) in self.layers.iter().zip(&shapes) {
            let n = match *layer {
                LayerSpec::Conv2d { out_channels, kernel, .. } => in_shape[0]
                    .checked_mul(kernel)
                    .and_then(|v| v.checked_mul(kernel))
                    .and_then(|v| v.checked_add(1))
                    .and_then(|v| v.checked_mul(out_channels)),
                LayerSpec::Dense { out } => element_count(in_shape, 0)?
                    .checked_add(1)
                    .and_then(|v| v.checked_mul(out)),
                LayerSpec::Activation => in_shape[0].checked_mul(per_channel),
                LayerSpec::MaxPool { .. } | LayerSpec::Flatten => Some(0),
            };
            total = n.and_then(|n| total.checked_add(n)).ok_or_else(overflow)?;
            in_shape = *out_shape;
        }
        Ok(total)
    }
}

fn element_count(shape: [usize; 3], layer: usize) -> Result<usize> {
    shape[0]
        .checked_mul(shape[1])
        .and_then(|v| v.checked_mul(shape[2]))
        .ok_or_else(|| Error::config(format!("layer {layer}: shape {shape:?} is too large")))
}

/// Where one group's values live inside a channel's parameter block.
#[derive(Debug, Clone)]
struct Slot {
    group: usize,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone)]
enum Layer {
    Conv { geom: ConvGeom, weight: usize, bias: usize },
    Pool { in_shape: [usize; 3], kernel: usize },
    Dense { fan_in: usize, out: usize, weight: usize, bias: usize },
    Act { shape: [usize; 3], slots: Vec<Slot> },
    Flatten,
}

/// Values kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    inputs: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    activation: Activation,
    seed: u64,
    layers: Vec<Layer>,
    groups: Vec<ParamGroup>,
}

impl Network {
    /// Builds and initialises a network.
    ///
    /// Conv and dense weights are drawn uniformly from
    /// `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]` with zero biases, from a
    /// stream that does not depend on the activation family, so two
    /// networks with the same seed differ only in their activation.
    pub fn new(spec: NetworkSpec, family: ActivationFamily, seed: u64) -> Result<Self> {
        let shapes = spec.validate()?;
        let activation = Activation::new(family)?;
        let mut weight_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut act_rng = ChaCha8Rng::seed_from_u64(seed);
        act_rng.set_stream(1);

        let mut groups = Vec::new();
        let mut layers_out = Vec::with_capacity(spec.layers.len());
        let mut in_shape = spec.input;
        for (i, (layer, &out_shape)) in spec.layers.iter().zip(&shapes).enumerate() {
            let built = match *layer {
                LayerSpec::Conv2d { out_channels, kernel, stride } => {
                    let geom = ConvGeom { in_shape, out_channels, kernel, stride };
                    let fan_in = in_shape[0] * kernel * kernel;
                    let w = he_uniform(&mut weight_rng, fan_in, geom.weight_len());
                    groups.push(ParamGroup::new(format!("conv{i}.weight"), w));
                    groups.push(ParamGroup::new(format!("conv{i}.bias"), vec![0.0; out_channels]));
                    Layer::Conv { geom, weight: groups.len() - 2, bias: groups.len() - 1 }
                }
                LayerSpec::MaxPool { kernel } => Layer::Pool { in_shape, kernel },
                LayerSpec::Dense { out } => {
                    let fan_in: usize = in_shape.iter().product();
                    let w = he_uniform(&mut weight_rng, fan_in, fan_in * out);
                    groups.push(ParamGroup::new(format!("dense{i}.weight"), w));
                    groups.push(ParamGroup::new(format!("dense{i}.bias"), vec![0.0; out]));
                    Layer::Dense { fan_in, out, weight: groups.len() - 2, bias: groups.len() - 1 }
                }
                LayerSpec::Activation => {
                    let slots = activation_groups(&activation, i, in_shape[0], &mut act_rng, &mut groups);
                    Layer::Act { shape: in_shape, slots }
                }
                LayerSpec::Flatten => Layer::Flatten,
            };
            layers_out.push(built);
            in_shape = out_shape;
        }
        Ok(Network { spec, activation, seed, layers: layers_out, groups })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn family(&self) -> &ActivationFamily {
        self.activation.family()
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn classes(&self) -> usize {
        self.spec.classes().expect("validated at construction")
    }

    pub fn param_groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn param_groups_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.groups
    }

    pub fn param_count(&self) -> usize {
        self.groups.iter().map(ParamGroup::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.groups.iter_mut().for_each(ParamGroup::zero_grad);
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        let per: usize = self.spec.input.iter().product();
        let shape = batch.shape();
        let ok = match shape {
            [_, c, h, w] => [*c, *h, *w] == self.spec.input,
            [_, f] => *f == per,
            _ => false,
        };
        if !ok || batch.batch() == 0 {
            return Err(Error::config(format!(
                "batch shape {shape:?} does not match network input {:?}",
                self.spec.input
            )));
        }
        Ok(())
    }

    /// Runs the network and returns `(logits, cache)`; logits have shape
    /// `(batch, classes)`.
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(batch)?;
        let n = batch.batch();
        let mut x = batch.data().to_vec();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut argmax = Vec::new();
        for layer in &self.layers {
            let y = match layer {
                Layer::Conv { geom, weight, bias } => layers::conv_forward(
                    geom,
                    &x,
                    n,
                    &self.groups[*weight].values,
                    &self.groups[*bias].values,
                ),
                Layer::Pool { in_shape, kernel } => {
                    let (y, arg) = layers::maxpool_forward(*in_shape, *kernel, &x, n);
                    argmax.push(arg);
                    y
                }
                Layer::Dense { fan_in, out, weight, bias } => layers::dense_forward(
                    &x,
                    n,
                    *fan_in,
                    *out,
                    &self.groups[*weight].values,
                    &self.groups[*bias].values,
                ),
                Layer::Act { shape, slots } => self.act_forward(*shape, slots, &x, n),
                Layer::Flatten => x.clone(),
            };
            inputs.push(std::mem::replace(&mut x, y));
        }
        let logits = Tensor::from_parts(vec![n, self.classes()], x);
        Ok((logits, ForwardCache { batch: n, inputs, argmax }))
    }

    /// Sum of every group's L2 penalty.
    pub fn l2_penalty(&self) -> f64 {
        self.groups.iter().map(ParamGroup::l2_penalty).sum()
    }

    /// Mean softmax cross-entropy plus L2 penalties. Zeroes and then fills
    /// every gradient buffer.
    pub fn loss_and_backward(&mut self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        let classes = self.classes();
        if labels.len() != batch.shape()[0] {
            return Err(Error::config(format!(
                "{} labels for a batch of {}",
                labels.len(),
                batch.shape()[0]
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::validation(format!("label {l} out of range for {classes} classes")));
        }
        let (logits, cache) = self.forward(batch)?;
        let n = labels.len();
        let mut probs = logits.into_data();
        softmax_in_place(&mut probs, classes);
        let mut loss = 0.0;
        for (b, &l) in labels.iter().enumerate() {
            loss -= probs[b * classes + l].max(f64::MIN_POSITIVE).ln();
        }
        loss /= n as f64;
        loss += self.l2_penalty();
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: 0, batch: 0, loss });
        }
        let mut dlogits = probs;
        for (b, &l) in labels.iter().enumerate() {
            dlogits[b * classes + l] -= 1.0;
        }
        let inv = 1.0 / n as f64;
        dlogits.iter_mut().for_each(|d| *d *= inv);
        self.zero_grad();
        self.backward(&cache, dlogits);
        for g in &mut self.groups {
            g.add_l2_grad();
        }
        Ok(loss)
    }

    /// Loss only (no gradient work).
    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        let classes = self.classes();
        let (logits, _) = self.forward(batch)?;
        let mut probs = logits.into_data();
        softmax_in_place(&mut probs, classes);
        let data: f64 = labels
            .iter()
            .enumerate()
            .map(|(b, &l)| -probs[b * classes + l].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>();
        Ok(data / labels.len() as f64 + self.l2_penalty())
    }

    fn backward(&mut self, cache: &ForwardCache, dlogits: Vec<f64>) {
        let n = cache.batch;
        let mut grad = dlogits;
        let mut pool_idx = cache.argmax.len();
        let layer_list = std::mem::take(&mut self.layers);
        for (li, layer) in layer_list.iter().enumerate().rev() {
            let input = &cache.inputs[li];
            grad = match layer {
                Layer::Conv { geom, weight, bias } => {
                    let (w, b) = (*weight, *bias);
                    let wv = std::mem::take(&mut self.groups[w].values);
                    let mut dw = std::mem::take(&mut self.groups[w].grads);
                    let din = layers::conv_backward(
                        geom,
                        input,
                        n,
                        &wv,
                        &grad,
                        &mut dw,
                        &mut self.groups[b].grads,
                    );
                    self.groups[w].values = wv;
                    self.groups[w].grads = dw;
                    din
                }
                Layer::Pool { .. } => {
                    pool_idx -= 1;
                    layers::maxpool_backward(&cache.argmax[pool_idx], &grad, input.len())
                }
                Layer::Dense { fan_in, out, weight, bias } => {
                    let (w, b) = (*weight, *bias);
                    let wv = std::mem::take(&mut self.groups[w].values);
                    let mut dw = std::mem::take(&mut self.groups[w].grads);
                    let din = layers::dense_backward(
                        input,
                        n,
                        *fan_in,
                        *out,
                        &wv,
                        &grad,
                        &mut dw,
                        &mut self.groups[b].grads,
                    );
                    self.groups[w].values = wv;
                    self.groups[w].grads = dw;
                    din
                }
                Layer::Act { shape, slots } => self.act_backward(*shape, slots, input, &grad, n),
                Layer::Flatten => grad,
            };
        }
        self.layers = layer_list;
    }

    /// Per-channel parameter blocks gathered from the slot groups.
    fn gather_blocks(&self, channels: usize, slots: &[Slot]) -> Vec<f64> {
        let pc = self.activation.param_count();
        let mut blocks = vec![0.0; channels * pc];
        for s in slots {
            let vals = &self.groups[s.group].values;
            for ch in 0..channels {
                blocks[ch * pc + s.offset..][..s.len].copy_from_slice(&vals[ch * s.len..][..s.len]);
            }
        }
        blocks
    }

    fn act_forward(&self, shape: [usize; 3], slots: &[Slot], x: &[f64], n: usize) -> Vec<f64> {
        let act = &self.activation;
        let pc = act.param_count();
        let [c, h, w] = shape;
        let plane = h * w;
        if pc == 0 {
            return x.iter().map(|&v| act.forward(v, &[])).collect();
        }
        let blocks = self.gather_blocks(c, slots);
        let mut y = Vec::with_capacity(x.len());
        for b in 0..n {
            for ch in 0..c {
                let p = &blocks[ch * pc..(ch + 1) * pc];
                let xs = &x[(b * c + ch) * plane..][..plane];
                y.extend(xs.iter().map(|&v| act.forward(v, p)));
            }
        }
        y
    }

    fn act_backward(
        &mut self,
        shape: [usize; 3],
        slots: &[Slot],
        x: &[f64],
        dout: &[f64],
        n: usize,
    ) -> Vec<f64> {
        let pc = self.activation.param_count();
        let [c, h, w] = shape;
        let plane = h * w;
        let blocks = self.gather_blocks(c, slots);
        let mut dblocks = vec![0.0; c * pc];
        let mut din = vec![0.0; x.len()];
        let act = &self.activation;
        for b in 0..n {
            for ch in 0..c {
                let p = &blocks[ch * pc..(ch + 1) * pc];
                let dp = &mut dblocks[ch * pc..(ch + 1) * pc];
                let start = (b * c + ch) * plane;
                for i in start..start + plane {
                    let (_, dx) = act.accumulate(x[i], p, dout[i], dp);
                    din[i] = dx * dout[i];
                }
            }
        }
        for s in slots {
            let grads = &mut self.groups[s.group].grads;
            for ch in 0..c {
                for k in 0..s.len {
                    grads[ch * s.len + k] += dblocks[ch * pc + s.offset + k];
                }
            }
        }
        din
    }

    // -- checkpoints --------------------------------------------------------

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            spec: self.spec.clone(),
            family: self.family().clone(),
            seed: self.seed,
            basis: self.activation.basis().cloned(),
            groups: self.groups.clone(),
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::validation(format!("unsupported checkpoint format `{}`", ck.format)));
        }
        // Reject before allocating anything the stored values cannot back.
        ck.family.validate()?;
        let stored: usize = ck.groups.iter().map(|g| g.values.len()).sum();
        let needed = ck.spec.param_count(ck.family.param_count())?;
        if stored != needed {
            return Err(Error::validation(format!(
                "checkpoint stores {stored} values, its spec needs {needed}"
            )));
        }
        let mut net = Network::new(ck.spec, ck.family, ck.seed)?;
        if ck.basis.as_ref() != net.activation.basis() {
            return Err(Error::validation("checkpoint basis does not match its activation family"));
        }
        if ck.groups.len() != net.groups.len() {
            return Err(Error::validation(format!(
                "checkpoint has {} parameter groups, network needs {}",
                ck.groups.len(),
                net.groups.len()
            )));
        }
        for (have, want) in ck.groups.into_iter().zip(&mut net.groups) {
            if have.name != want.name || have.values.len() != want.values.len() {
                return Err(Error::validation(format!(
                    "checkpoint group `{}` ({} values) does not match `{}` ({} values)",
                    have.name,
                    have.values.len(),
                    want.name,
                    want.values.len()
                )));
            }
            if have.values.iter().any(|v| !v.is_finite())
                || !(have.lr_scale.is_finite() && have.lr_scale > 0.0)
                || !(have.l2_coeff.is_finite() && have.l2_coeff >= 0.0)
            {
                return Err(Error::validation(format!("group `{}` has invalid values", have.name)));
            }
            want.values = have.values;
            want.lr_scale = have.lr_scale;
            want.l2_coeff = have.l2_coeff;
        }
        Ok(net)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    spec: NetworkSpec,
    family: ActivationFamily,
    seed: u64,
    basis: Option<MexicanHatBasis>,
    groups: Vec<ParamGroup>,
}

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Creates the parameter groups of one activation layer. APLU gets separate
/// slope and breakpoint groups (both at `1 / max_input` relative learning
/// rate, L2 on the slopes only); other learnable families get one group.
fn activation_groups(
    act: &Activation,
    layer: usize,
    channels: usize,
    rng: &mut ChaCha8Rng,
    groups: &mut Vec<ParamGroup>,
) -> Vec<Slot> {
    let family = act.family();
    let pc = act.param_count();
    if pc == 0 {
        return Vec::new();
    }
    let blocks: Vec<Vec<f64>> = (0..channels).map(|_| act.init_params(rng)).collect();
    let take = |offset: usize, len: usize| -> Vec<f64> {
        blocks.iter().flat_map(|b| b[offset..offset + len].iter().copied()).collect()
    };
    match family.kind {
        ActivationKind::Aplu => {
            let n = family.aplu_hinge_count;
            let scale = 1.0 / family.max_input;
            groups.push(
                ParamGroup::new(format!("act{layer}.a"), take(0, n))
                    .with_lr_scale(scale)
                    .with_l2(APLU_L2),
            );
            groups.push(ParamGroup::new(format!("act{layer}.b"), take(n, n)).with_lr_scale(scale));
            let a = groups.len() - 2;
            vec![Slot { group: a, offset: 0, len: n }, Slot { group: a + 1, offset: n, len: n }]
        }
        _ => {
            groups.push(ParamGroup::new(format!("act{layer}.{}", family.label()), take(0, pc)));
            vec![Slot { group: groups.len() - 1, offset: 0, len: pc }]
        }
    }
}

pub(crate) fn softmax_in_place(data: &mut [f64], classes: usize) {
    for row in data.chunks_exact_mut(classes) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind::*;

    fn fam(kind: ActivationKind) -> ActivationFamily {
        ActivationFamily::new(kind, 1.0)
    }

    fn set(net: &mut Network, name: &str, values: Vec<f64>) {
        let g = net.groups.iter_mut().find(|g| g.name == name).unwrap();
        assert_eq!(g.values.len(), values.len());
        g.values = values;
    }

    #[test]
    fn dense_identity_relu() {
        let spec = NetworkSpec {
            input: [3, 1, 1],
            layers: vec![LayerSpec::Dense { out: 3 }, LayerSpec::Activation, LayerSpec::Dense { out: 3 }],
        };
        let mut net = Network::new(spec, fam(Relu), 1).unwrap();
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        set(&mut net, "dense0.weight", eye.clone());
        set(&mut net, "dense2.weight", eye);
        let x = Tensor::new(vec![1, 3], vec![1.0, -1.0, 2.0]).unwrap();
        let (y, _) = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn conv_then_pool() {
        let spec = NetworkSpec {
            input: [1, 2, 2],
            layers: vec![
                LayerSpec::Conv2d { out_channels: 1, kernel: 1, stride: 1 },
                LayerSpec::Activation,
                LayerSpec::MaxPool { kernel: 2 },
                LayerSpec::Dense { out: 1 },
            ],
        };
        let mut net = Network::new(spec, fam(Relu), 1).unwrap();
        set(&mut net, "conv0.weight", vec![2.0]);
        set(&mut net, "dense3.weight", vec![1.0]);
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(net.forward(&x).unwrap().0.data(), &[8.0]);
    }

    #[test]
    fn placement_rules() {
        let bad = NetworkSpec {
            input: [1, 4, 4],
            layers: vec![LayerSpec::Conv2d { out_channels: 1, kernel: 3, stride: 1 }, LayerSpec::Flatten, LayerSpec::Dense { out: 2 }],
        };
        assert!(bad.validate().is_err());
        let bad = NetworkSpec { input: [4, 1, 1], layers: vec![LayerSpec::Dense { out: 3 }, LayerSpec::Dense { out: 2 }] };
        assert!(bad.validate().is_err());
        let bad = NetworkSpec { input: [4, 1, 1], layers: vec![LayerSpec::Flatten] };
        assert!(bad.validate().is_err());
        let bad = NetworkSpec { input: [1, 2, 2], layers: vec![LayerSpec::Conv2d { out_channels: 1, kernel: 3, stride: 1 }, LayerSpec::Activation, LayerSpec::Dense { out: 2 }] };
        assert!(bad.validate().is_err());
        assert!(NetworkSpec::small_cnn([1, 16, 16], 10).validate().is_ok());
        assert!(NetworkSpec::mlp([2, 1, 1], &[4, 4], 2).validate().is_ok());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = Network::new(NetworkSpec::mlp([2, 1, 1], &[3], 2), fam(Relu), 0).unwrap();
        let x = Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(matches!(net.forward(&x), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let mut net = Network::new(NetworkSpec::mlp([2, 1, 1], &[3], 4), fam(Relu), 0).unwrap();
        for g in net.param_groups_mut() {
            g.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, -3.0, 0.5]).unwrap();
        let loss = net.loss_and_backward(&x, &[0, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        // Output bias gradient is mean(softmax(0) - onehot).
        let db = &net.param_groups().iter().find(|g| g.name == "dense3.bias").unwrap().grads;
        assert_eq!(db, &vec![(0.25 - 1.0 + 0.25) / 2.0, 0.25, 0.25, (0.25 + 0.25 - 1.0) / 2.0]);
    }

    #[test]
    fn aplu_groups_and_penalty() {
        let fam = ActivationFamily::aplu(2, 255.0);
        let mut net = Network::new(NetworkSpec::mlp([2, 1, 1], &[3], 2), fam, 0).unwrap();
        let a = net.param_groups().iter().position(|g| g.name == "act2.a").unwrap();
        let b = net.param_groups().iter().position(|g| g.name == "act2.b").unwrap();
        assert_eq!(net.param_groups()[a].lr_scale, 1.0 / 255.0);
        assert_eq!(net.param_groups()[b].lr_scale, 1.0 / 255.0);
        assert_eq!(net.param_groups()[a].l2_coeff, 0.001);
        assert_eq!(net.param_groups()[b].l2_coeff, 0.0);
        for g in net.param_groups_mut() {
            g.values.iter_mut().for_each(|v| *v = 0.0);
        }
        net.param_groups_mut()[a].values = vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
        let x = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let loss = net.loss_and_backward(&x, &[0]).unwrap();
        assert!((loss - (2f64.ln() + 0.00025)).abs() < 1e-15);
        // Zero weights upstream of the activation: only the penalty reaches a_1.
        assert!((net.param_groups()[a].grads[0] - 0.001).abs() < 1e-18);
    }

    #[test]
    fn weights_independent_of_family() {
        let spec = NetworkSpec::small_cnn([1, 12, 12], 3);
        let relu = Network::new(spec.clone(), fam(Relu), 9).unwrap();
        let aplu = Network::new(spec, ActivationFamily::aplu(5, 1.0), 9).unwrap();
        let w = |n: &Network, name: &str| n.param_groups().iter().find(|g| g.name == name).unwrap().values.clone();
        for name in ["conv0.weight", "conv3.weight", "dense7.weight"] {
            assert_eq!(w(&relu, name), w(&aplu, name));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let fam = ActivationFamily::melu(4, 255.0);
        let mut net = Network::new(NetworkSpec::small_cnn([1, 10, 10], 3), fam, 42).unwrap();
        net.param_groups_mut()[0].values[0] = 0.1 + 0.2;
        let text = net.to_json();
        let back = Network::from_json(&text).unwrap();
        assert_eq!(back.param_groups(), net.param_groups());
        assert_eq!(back.to_json(), text);
        assert!(Network::from_json("{}").is_err());
        let tampered = text.replacen("actens-checkpoint-v1", "other", 1);
        assert!(Network::from_json(&tampered).is_err());
    }
}
