//! Layer stacks: a serializable structural description ([`ModelSpec`]) and the
//! parameterized network built from it ([`Network`]).

use serde::{Deserialize, Serialize};

use super::activation::{relu, relu_backward, sigmoid, sigmoid_backward};
use super::conv::{Conv2d, KERNEL};
use super::dense::Dense;
use super::dropout::{Dropout, DropoutMask, Mode};
use super::pool::{maxpool2x2_backward, maxpool2x2_forward, PoolIndices};
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize },
    Relu,
    MaxPool2x2,
    Flatten,
    Dense { in_features: usize, out_features: usize },
    Dropout { rate: f64 },
    Sigmoid,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => out_channels * in_channels * KERNEL * KERNEL + out_channels,
            LayerSpec::Dense {
                in_features,
                out_features,
            } => in_features * out_features + out_features,
            _ => 0,
        }
    }

    /// Output extents (without the batch axis) for the given input extents.
    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::shape(format!("{self:?} cannot consume per-sample shape {input:?}"));
        match (*self, input) {
            (
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                },
                &[c, h, w],
            ) if c == in_channels => Ok(vec![out_channels, h, w]),
            (LayerSpec::MaxPool2x2, &[c, h, w]) if h % 2 == 0 && w % 2 == 0 => Ok(vec![c, h / 2, w / 2]),
            (LayerSpec::Flatten, dims) => Ok(vec![dims.iter().product()]),
            (
                LayerSpec::Dense {
                    in_features,
                    out_features,
                },
                &[f],
            ) if f == in_features => Ok(vec![out_features]),
            (LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Dropout { .. }, dims) => Ok(dims.to_vec()),
            _ => Err(bad()),
        }
    }
}

/// Input geometry plus the ordered layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[channels, height, width]` of one sample.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

pub const DEFAULT_IMAGE_SIZE: usize = 128;

impl ModelSpec {
    /// The pneumonia classifier at 128x128.
    pub fn standard() -> Self {
        Self::classifier(DEFAULT_IMAGE_SIZE)
    }

    /// The same architecture for a square grayscale input of side `size`
    /// (must be divisible by 4); smaller sizes are used for gradient checks.
    pub fn classifier(size: usize) -> Self {
        Self::classifier_with_dropout(size, 0.5)
    }

    pub fn classifier_with_dropout(size: usize, dropout: f64) -> Self {
        let pooled = size / 4;
        ModelSpec {
            input: [1, size, size],
            layers: vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 64,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2x2,
                LayerSpec::Conv2d {
                    in_channels: 64,
                    out_channels: 128,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2x2,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 128 * pooled * pooled,
                    out_features: 128,
                },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: dropout },
                LayerSpec::Dense {
                    in_features: 128,
                    out_features: 1,
                },
                LayerSpec::Sigmoid,
            ],
        }
    }

    /// Per-sample shapes: the input followed by every layer's output.
    pub fn shape_trace(&self) -> Result<Vec<Vec<usize>>> {
        let mut trace = vec![self.input.to_vec()];
        for layer in &self.layers {
            let next = layer.output_dims(trace.last().expect("non-empty"))?;
            trace.push(next);
        }
        Ok(trace)
    }

    /// Checks the stack composes and ends in one sigmoid probability.
    pub fn validate(&self) -> Result<()> {
        if self.input.contains(&0) {
            return Err(Error::shape(format!(
                "input extents must be positive: {:?}",
                self.input
            )));
        }
        let trace = self.shape_trace()?;
        if trace.last().map(Vec::as_slice) != Some(&[1]) || self.layers.last() != Some(&LayerSpec::Sigmoid) {
            return Err(Error::shape("model must end in a single sigmoid unit"));
        }
        for layer in &self.layers {
            if let LayerSpec::Dropout { rate } = layer {
                Dropout::new(*rate)?;
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Shapes of every parameter tensor, in [`Network::params`] order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(|l| match *l {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                } => {
                    vec![vec![out_channels, in_channels, KERNEL, KERNEL], vec![out_channels]]
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    vec![vec![in_features, out_features], vec![out_features]]
                }
                _ => vec![],
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Layer<T> {
    Conv2d(Conv2d<T>),
    Relu,
    MaxPool2x2,
    Flatten,
    Dense(Dense<T>),
    Dropout(Dropout),
    Sigmoid,
}

/// What each layer needs from the forward pass to run its backward pass.
#[derive(Debug, Clone)]
enum Record<T> {
    Conv { input: Tensor<T> },
    Relu { output: Tensor<T> },
    Pool { indices: PoolIndices },
    Flatten { dims: Vec<usize> },
    Dense { input: Tensor<T> },
    Dropout { mask: DropoutMask<T> },
    Sigmoid { output: Tensor<T> },
}

/// Activations retained by a train-mode forward pass. Eval-mode passes
/// produce an empty cache that backward rejects.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    records: Vec<Record<T>>,
    mode: Mode,
}

impl<T> Cache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dropout masks drawn during the pass, in layer order.
    pub fn dropout_masks(&self) -> Vec<&DropoutMask<T>> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Dropout { mask } => Some(mask),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: ModelSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights and zero biases drawn from `rng` in layer order.
    pub fn init(spec: ModelSpec, rng: &mut Prng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                Ok(match *l {
                    LayerSpec::Conv2d {
                        in_channels,
                        out_channels,
                    } => Layer::Conv2d(Conv2d::init(in_channels, out_channels, rng)?),
                    LayerSpec::Dense {
                        in_features,
                        out_features,
                    } => Layer::Dense(Dense::init(in_features, out_features, rng)?),
                    ref other => Self::stateless(other)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Network { spec, layers })
    }

    /// Rebuilds a network from explicit parameter tensors in [`Network::params`] order.
    pub fn from_params(spec: ModelSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.param_shapes();
        if params.len() != expected.len() {
            return Err(Error::shape(format!(
                "model needs {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (i, (p, dims)) in params.iter().zip(&expected).enumerate() {
            if p.dims() != dims.as_slice() {
                return Err(Error::shape(format!(
                    "parameter {i} must be {dims:?}, got {}",
                    p.shape()
                )));
            }
        }
        let mut params = params.into_iter();
        let mut take = || params.next().expect("count checked");
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                Ok(match l {
                    LayerSpec::Conv2d { .. } => Layer::Conv2d(Conv2d::new(take(), take())?),
                    LayerSpec::Dense { .. } => Layer::Dense(Dense::new(take(), take())?),
                    other => Self::stateless(other)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Network { spec, layers })
    }

    fn stateless(spec: &LayerSpec) -> Result<Layer<T>> {
        Ok(match *spec {
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::MaxPool2x2 => Layer::MaxPool2x2,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(rate)?),
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. } => unreachable!("parameterized layer"),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv2d(c) => vec![c.weights(), c.bias()],
                Layer::Dense(d) => vec![d.weights(), d.bias()],
                _ => vec![],
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Conv2d(c) => c.params_mut().into_iter().collect(),
                Layer::Dense(d) => d.params_mut().into_iter().collect(),
                _ => vec![],
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Element-type conversion of every parameter.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let params = self.params().into_iter().map(Tensor::cast).collect();
        Network::from_params(self.spec.clone(), params).expect("same spec")
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let ok = input.dims().len() == 4 && input.dims()[1..] == self.spec.input;
        if !ok {
            let [c, h, w] = self.spec.input;
            return Err(Error::shape(format!(
                "model expects [B, {c}, {h}, {w}], got {}",
                input.shape()
            )));
        }
        Ok(())
    }

    /// Runs the stack on `[B, C, H, W]`, returning `[B, 1]` probabilities and,
    /// in train mode, the cache for [`Network::backward`]. `rng` drives dropout
    /// and is untouched in eval mode.
    pub fn forward(&self, input: &Tensor<T>, mode: Mode, rng: &mut Prng) -> Result<(Tensor<T>, Cache<T>)> {
        self.check_input(input)?;
        let train = mode == Mode::Train;
        let mut records = Vec::with_capacity(if train { self.layers.len() } else { 0 });
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv2d(conv) => {
                    let y = conv.forward(&x)?;
                    if train {
                        records.push(Record::Conv { input: x });
                    }
                    y
                }
                Layer::Relu => {
                    let y = relu(&x);
                    if train {
                        records.push(Record::Relu { output: y.clone() });
                    }
                    y
                }
                Layer::MaxPool2x2 => {
                    let (y, indices) = maxpool2x2_forward(&x)?;
                    if train {
                        records.push(Record::Pool { indices });
                    }
                    y
                }
                Layer::Flatten => {
                    let dims = x.dims().to_vec();
                    let batch = dims[0];
                    let width = x.numel() / batch;
                    if train {
                        records.push(Record::Flatten { dims });
                    }
                    x.reshape(&[batch, width])?
                }
                Layer::Dense(dense) => {
                    let y = dense.forward(&x)?;
                    if train {
                        records.push(Record::Dense { input: x });
                    }
                    y
                }
                Layer::Dropout(d) => {
                    let (y, mask) = d.forward(&x, mode, rng)?;
                    if train {
                        records.push(Record::Dropout { mask });
                    }
                    y
                }
                Layer::Sigmoid => {
                    let y = sigmoid(&x);
                    if train {
                        records.push(Record::Sigmoid { output: y.clone() });
                    }
                    y
                }
            };
        }
        Ok((x, Cache { records, mode }))
    }

    /// Eval-mode forward pass.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        // Eval mode never draws from the generator.
        let mut unused = Prng::new(0);
        Ok(self.forward(input, Mode::Eval, &mut unused)?.0)
    }

    /// Backpropagates `grad_output` (d loss / d probabilities, `[B, 1]`) through
    /// the cached pass. Returns one gradient per parameter, in `params()` order.
    pub fn backward(&self, cache: &Cache<T>, grad_output: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if cache.mode != Mode::Train || cache.records.len() != self.layers.len() {
            return Err(Error::State(
                "backward requires the cache of a train-mode forward pass".into(),
            ));
        }
        let mut grads: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_output.clone();
        for (i, (layer, record)) in self.layers.iter().zip(&cache.records).enumerate().rev() {
            g = match (layer, record) {
                (Layer::Conv2d(conv), Record::Conv { input }) => {
                    let cg = conv.backward_with(input, &g, i > 0)?;
                    grads.push(cg.bias);
                    grads.push(cg.weights);
                    match cg.input {
                        Some(gi) => gi,
                        None => break,
                    }
                }
                (Layer::Relu, Record::Relu { output }) => relu_backward(output, &g)?,
                (Layer::MaxPool2x2, Record::Pool { indices }) => maxpool2x2_backward(indices, &g)?,
                (Layer::Flatten, Record::Flatten { dims }) => g.reshape(dims)?,
                (Layer::Dense(dense), Record::Dense { input }) => {
                    let dg = dense.backward(input, &g)?;
                    grads.push(dg.bias);
                    grads.push(dg.weights);
                    dg.input
                }
                (Layer::Dropout(_), Record::Dropout { mask }) => Dropout::backward(mask, &g)?,
                (Layer::Sigmoid, Record::Sigmoid { output }) => sigmoid_backward(output, &g)?,
                _ => return Err(Error::State("cache does not match network layers".into())),
            };
        }
        grads.reverse();
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_shape_trace() {
        let trace = ModelSpec::standard().shape_trace().unwrap();
        let expected: Vec<Vec<usize>> = vec![
            vec![1, 128, 128],
            vec![64, 128, 128],
            vec![64, 128, 128],
            vec![64, 64, 64],
            vec![128, 64, 64],
            vec![128, 64, 64],
            vec![128, 32, 32],
            vec![131072],
            vec![128],
            vec![128],
            vec![128],
            vec![1],
            vec![1],
        ];
        assert_eq!(trace, expected);
    }

    #[test]
    fn standard_parameter_count() {
        // Independent count: (k*k*in + 1) * out per conv, (in + 1) * out per dense.
        let count = |k: usize, i: usize, o: usize| (k * k * i + 1) * o;
        let independent = count(3, 1, 64) + count(3, 64, 128) + count(1, 131_072, 128) + count(1, 128, 1);
        assert_eq!(independent, 640 + 73_856 + 16_777_344 + 129);
        assert_eq!(ModelSpec::standard().param_count(), independent);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = ModelSpec::classifier(16);
        spec.layers.pop();
        assert!(spec.validate().is_err());
        assert!(ModelSpec::classifier(18).validate().is_err());
        assert!(ModelSpec::classifier_with_dropout(16, 1.0).validate().is_err());
    }

    #[test]
    fn small_network_runs_and_is_deterministic_in_eval() {
        let mut rng = Prng::new(1);
        let net = Network::<f32>::init(ModelSpec::classifier(8), &mut rng).unwrap();
        assert_eq!(net.param_count(), ModelSpec::classifier(8).param_count());
        let x = Tensor::from_vec(&[3, 1, 8, 8], (0..192).map(|_| rng.uniform(0.0, 1.0) as f32).collect()).unwrap();
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        assert_eq!(a.dims(), &[3, 1]);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn eval_cache_cannot_backprop() {
        let mut rng = Prng::new(1);
        let net = Network::<f64>::init(ModelSpec::classifier(4), &mut rng).unwrap();
        let x = Tensor::zeros(&[1, 1, 4, 4]).unwrap();
        let (_, cache) = net.forward(&x, Mode::Eval, &mut rng).unwrap();
        let g = Tensor::full(&[1, 1], 1.0).unwrap();
        assert!(matches!(net.backward(&cache, &g), Err(Error::State(_))));
    }

    #[test]
    fn zero_upstream_zero_param_grads() {
        let mut rng = Prng::new(2);
        let net = Network::<f64>::init(ModelSpec::classifier(8), &mut rng).unwrap();
        let x = Tensor::full(&[2, 1, 8, 8], 0.5).unwrap();
        let (_, cache) = net.forward(&x, Mode::Train, &mut rng).unwrap();
        let grads = net.backward(&cache, &Tensor::zeros(&[2, 1]).unwrap()).unwrap();
        assert_eq!(grads.len(), net.params().len());
        for (g, p) in grads.iter().zip(net.params()) {
            assert_eq!(g.shape(), p.shape());
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let net = Network::<f32>::init(ModelSpec::classifier(8), &mut Prng::new(0)).unwrap();
        assert!(matches!(
            net.predict(&Tensor::zeros(&[1, 1, 16, 16]).unwrap()),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            net.predict(&Tensor::zeros(&[1, 8, 8]).unwrap()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn from_params_round_trip() {
        let net = Network::<f32>::init(ModelSpec::classifier(8), &mut Prng::new(4)).unwrap();
        let params = net.params().into_iter().cloned().collect();
        let rebuilt = Network::from_params(net.spec().clone(), params).unwrap();
        let x = Tensor::full(&[1, 1, 8, 8], 0.25).unwrap();
        assert_eq!(net.predict(&x).unwrap(), rebuilt.predict(&x).unwrap());
        let mut wrong: Vec<Tensor<f32>> = net.params().into_iter().cloned().collect();
        wrong.pop();
        assert!(Network::from_params(net.spec().clone(), wrong).is_err());
    }
}
