//! Small from-scratch backbones (MLP and a LeNet-style conv net) with
//! explicit forward/backward and SGD-with-momentum. The feature extractor
//! produces the penultimate activations consumed by the granular-ball layer;
//! a single dense classifier maps features to logits.

pub mod checkpoint;
pub mod layers;
pub mod loss;

use crate::matrix::Matrix;
use crate::rng::SeededRng;

pub use layers::{ConvLayer, DenseLayer, LayerSpec};
pub use loss::{accuracy, softmax_cross_entropy, LossError};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Relu,
    Conv5x5(ConvLayer),
    MaxPool2x2 { ch: usize, in_h: usize, in_w: usize },
    Flatten,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                input: d.input,
                output: d.output,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Conv5x5(c) => LayerSpec::Conv5x5 {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                in_h: c.in_h,
                in_w: c.in_w,
            },
            Layer::MaxPool2x2 { ch, in_h, in_w } => LayerSpec::MaxPool2x2 {
                ch: *ch,
                in_h: *in_h,
                in_w: *in_w,
            },
            Layer::Flatten => LayerSpec::Flatten,
        }
    }
}

/// Per-layer forward cache: the input, plus pooling argmax where needed.
pub enum Cache {
    Input(Matrix),
    Pool { input_cols: usize, argmax: Vec<usize> },
    None,
}

/// Weight/bias gradients for one parametric layer.
#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Gradients for a full model, mirroring its parametric layers in order.
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub feature: Vec<Option<ParamGrads>>,
    pub classifier: ParamGrads,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backbone {
    Mlp,
    Lenet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub feature_layers: Vec<Layer>,
    pub classifier: DenseLayer,
}

impl Model {
    /// 2 -> 32 -> 32 feature extractor for 2-D synthetic data.
    pub fn mlp(input_dim: usize, num_classes: usize, rng: &mut SeededRng) -> Self {
        let feature_layers = vec![
            Layer::Dense(DenseLayer::init(input_dim, 32, rng)),
            Layer::Relu,
            Layer::Dense(DenseLayer::init(32, 32, rng)),
            Layer::Relu,
        ];
        Self {
            feature_layers,
            classifier: DenseLayer::init(32, num_classes, rng),
        }
    }

    /// LeNet-style conv net for 3x32x32 images: conv5x5/pool twice, then a
    /// dense feature head.
    pub fn lenet(num_classes: usize, rng: &mut SeededRng) -> Self {
        let feature_layers = vec![
            Layer::Conv5x5(ConvLayer::init(3, 6, 32, 32, rng)),
            Layer::Relu,
            Layer::MaxPool2x2 { ch: 6, in_h: 28, in_w: 28 },
            Layer::Conv5x5(ConvLayer::init(6, 16, 14, 14, rng)),
            Layer::Relu,
            Layer::MaxPool2x2 { ch: 16, in_h: 10, in_w: 10 },
            Layer::Flatten,
            Layer::Dense(DenseLayer::init(16 * 5 * 5, 32, rng)),
            Layer::Relu,
        ];
        Self {
            feature_layers,
            classifier: DenseLayer::init(32, num_classes, rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.input
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.output
    }

    /// Penultimate activations plus per-layer caches for backward.
    pub fn features_forward(&self, images: &Matrix) -> (Matrix, Vec<Cache>) {
        let mut x = images.clone();
        let mut caches = Vec::with_capacity(self.feature_layers.len());
        for layer in &self.feature_layers {
            let (y, cache) = match layer {
                Layer::Dense(d) => (d.forward(&x), Cache::Input(x)),
                Layer::Relu => (layers::relu_forward(&x), Cache::Input(x)),
                Layer::Conv5x5(c) => (c.forward(&x), Cache::Input(x)),
                Layer::MaxPool2x2 { ch, in_h, in_w } => {
                    let (y, argmax) = layers::maxpool2x2_forward(&x, *ch, *in_h, *in_w);
                    (
                        y,
                        Cache::Pool {
                            input_cols: x.cols(),
                            argmax,
                        },
                    )
                }
                Layer::Flatten => (x.clone(), Cache::None),
            };
            caches.push(cache);
            x = y;
        }
        (x, caches)
    }

    pub fn classifier_forward(&self, features: &Matrix) -> Matrix {
        self.classifier.forward(features)
    }

    /// Backprop through the classifier: returns the gradient wrt features
    /// plus the classifier's parameter gradients.
    pub fn classifier_backward(
        &self,
        features: &Matrix,
        dlogits: &Matrix,
    ) -> (Matrix, ParamGrads) {
        let (dx, dw, db) = self.classifier.backward(features, dlogits);
        (dx, ParamGrads { w: dw, b: db })
    }

    /// Backprop the feature extractor given dLoss/dFeatures and the caches
    /// from the matching forward call.
    pub fn features_backward(
        &self,
        caches: &[Cache],
        dfeatures: &Matrix,
    ) -> Vec<Option<ParamGrads>> {
        assert_eq!(caches.len(), self.feature_layers.len(), "stale cache");
        let mut grads: Vec<Option<ParamGrads>> = Vec::with_capacity(caches.len());
        let mut dy = dfeatures.clone();
        for (layer, cache) in self.feature_layers.iter().zip(caches).rev() {
            let grad = match (layer, cache) {
                (Layer::Dense(d), Cache::Input(x)) => {
                    let (dx, dw, db) = d.backward(x, &dy);
                    dy = dx;
                    Some(ParamGrads { w: dw, b: db })
                }
                (Layer::Relu, Cache::Input(x)) => {
                    dy = layers::relu_backward(x, &dy);
                    None
                }
                (Layer::Conv5x5(c), Cache::Input(x)) => {
                    let (dx, dw, db) = c.backward(x, &dy);
                    dy = dx;
                    Some(ParamGrads { w: dw, b: db })
                }
                (Layer::MaxPool2x2 { .. }, Cache::Pool { input_cols, argmax }) => {
                    dy = layers::maxpool2x2_backward(&dy, argmax, *input_cols);
                    None
                }
                (Layer::Flatten, Cache::None) => None,
                _ => panic!("cache does not match layer"),
            };
            grads.push(grad);
        }
        grads.reverse();
        grads
    }

    /// All parameters as one flat vector (feature layers in order, then the
    /// classifier; weights before biases). Used by gradient checks and the
    /// checkpoint format.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.feature_layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(&d.w);
                    out.extend_from_slice(&d.b);
                }
                Layer::Conv5x5(c) => {
                    out.extend_from_slice(&c.w);
                    out.extend_from_slice(&c.b);
                }
                _ => {}
            }
        }
        out.extend_from_slice(&self.classifier.w);
        out.extend_from_slice(&self.classifier.b);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut pos = 0;
        let mut take = |buf: &mut [f64]| {
            buf.copy_from_slice(&flat[pos..pos + buf.len()]);
            pos += buf.len();
        };
        for layer in &mut self.feature_layers {
            match layer {
                Layer::Dense(d) => {
                    take(&mut d.w);
                    take(&mut d.b);
                }
                Layer::Conv5x5(c) => {
                    take(&mut c.w);
                    take(&mut c.b);
                }
                _ => {}
            }
        }
        take(&mut self.classifier.w);
        take(&mut self.classifier.b);
        assert_eq!(pos, flat.len(), "flat parameter length mismatch");
    }

    /// Gradients flattened in the same order as `params_flat`.
    pub fn grads_flat(&self, grads: &ModelGrads) -> Vec<f64> {
        let mut out = Vec::new();
        for (layer, g) in self.feature_layers.iter().zip(&grads.feature) {
            match (layer, g) {
                (Layer::Dense(_), Some(pg)) | (Layer::Conv5x5(_), Some(pg)) => {
                    out.extend_from_slice(&pg.w);
                    out.extend_from_slice(&pg.b);
                }
                _ => {}
            }
        }
        out.extend_from_slice(&grads.classifier.w);
        out.extend_from_slice(&grads.classifier.b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params_flat().len()
    }
}

/// SGD with momentum: v <- mu*v - lr*g, theta <- theta + v.
#[derive(Clone, Debug)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(learning_rate: f64, momentum: f64, model: &Model) -> Self {
        assert!(learning_rate >= 0.0);
        assert!((0.0..1.0).contains(&momentum));
        Self {
            learning_rate,
            momentum,
            velocity: vec![0.0; model.param_count()],
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn set_velocity(&mut self, v: Vec<f64>) {
        assert_eq!(v.len(), self.velocity.len());
        self.velocity = v;
    }

    pub fn step(&mut self, model: &mut Model, grads: &ModelGrads) {
        let g = model.grads_flat(grads);
        assert_eq!(g.len(), self.velocity.len(), "gradient shape mismatch");
        let mut params = model.params_flat();
        for i in 0..g.len() {
            self.velocity[i] = self.momentum * self.velocity[i] - self.learning_rate * g[i];
            params[i] += self.velocity[i];
        }
        model.set_params_flat(&params);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_mlp(seed: u64) -> Model {
        Model::mlp(2, 3, &mut SeededRng::new(seed))
    }

    fn batch(seed: u64, n: usize, dim: usize) -> (Matrix, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.next_normal()).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_index(3)).collect();
        (Matrix::from_rows(&rows), labels)
    }

    fn full_loss(model: &Model, x: &Matrix, labels: &[usize]) -> f64 {
        let (f, _) = model.features_forward(x);
        let logits = model.classifier_forward(&f);
        softmax_cross_entropy(&logits, labels).unwrap().0
    }

    fn full_grads(model: &Model, x: &Matrix, labels: &[usize]) -> ModelGrads {
        let (f, caches) = model.features_forward(x);
        let logits = model.classifier_forward(&f);
        let (_, dlogits) = softmax_cross_entropy(&logits, labels).unwrap();
        let (dfeat, cgrads) = model.classifier_backward(&f, &dlogits);
        let fgrads = model.features_backward(&caches, &dfeat);
        ModelGrads {
            feature: fgrads,
            classifier: cgrads,
        }
    }

    #[test]
    fn zero_params_give_zero_features() {
        let mut model = tiny_mlp(1);
        model.set_params_flat(&vec![0.0; model.param_count()]);
        let (x, _) = batch(2, 4, 2);
        let (f, _) = model.features_forward(&x);
        assert!(f.data().iter().all(|&v| v == 0.0));
        let logits = model.classifier_forward(&f);
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn params_flat_round_trips() {
        let model = tiny_mlp(3);
        let flat = model.params_flat();
        let mut other = tiny_mlp(4);
        other.set_params_flat(&flat);
        assert_eq!(other.params_flat(), flat);
    }

    #[test]
    fn end_to_end_mlp_gradient_matches_finite_differences() {
        let model = tiny_mlp(5);
        let (x, labels) = batch(6, 5, 2);
        let analytic = model.grads_flat(&full_grads(&model, &x, &labels));
        let base = model.params_flat();
        let eps = 1e-6;
        for i in (0..base.len()).step_by(7) {
            let mut m = model.clone();
            let mut p = base.clone();
            p[i] += eps;
            m.set_params_flat(&p);
            let lp = full_loss(&m, &x, &labels);
            p[i] = base[i] - eps;
            m.set_params_flat(&p);
            let lm = full_loss(&m, &x, &labels);
            let fd = (lp - lm) / (2.0 * eps);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-7);
            assert!(
                ((fd - analytic[i]) / denom).abs() < 1e-5,
                "param {i}: fd={fd} analytic={}",
                analytic[i]
            );
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut model = tiny_mlp(7);
        let before = model.params_flat();
        let (x, labels) = batch(8, 4, 2);
        let grads = full_grads(&model, &x, &labels);
        let mut opt = SgdMomentum::new(0.0, 0.9, &model);
        opt.step(&mut model, &grads);
        assert_eq!(model.params_flat(), before);
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut model = tiny_mlp(9);
        let before = model.params_flat();
        let (x, labels) = batch(10, 4, 2);
        let grads = full_grads(&model, &x, &labels);
        let g = model.grads_flat(&grads);
        let mut opt = SgdMomentum::new(0.1, 0.0, &model);
        opt.step(&mut model, &grads);
        let after = model.params_flat();
        for i in 0..before.len() {
            assert!((after[i] - (before[i] - 0.1 * g[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let mut model = tiny_mlp(11);
        let (x, labels) = batch(12, 4, 2);
        let grads = full_grads(&model, &x, &labels);
        let g = model.grads_flat(&grads);
        let mut opt = SgdMomentum::new(0.1, 0.5, &model);
        opt.step(&mut model, &grads);
        // second step with the same gradient: v = 0.5*(-0.1 g) - 0.1 g
        opt.step(&mut model, &grads);
        let v = opt.velocity();
        for i in 0..g.len() {
            assert!((v[i] - (-0.15 * g[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn lenet_shapes_compose() {
        let mut rng = SeededRng::new(13);
        let model = Model::lenet(10, &mut rng);
        let x = Matrix::zeros(2, 3 * 32 * 32);
        let (f, _) = model.features_forward(&x);
        assert_eq!(f.cols(), 32);
        let logits = model.classifier_forward(&f);
        assert_eq!(logits.cols(), 10);
    }

    #[test]
    fn lenet_gradient_spot_check() {
        // small conv stack exercised through the same code path
        let mut rng = SeededRng::new(14);
        let model = Model {
            feature_layers: vec![
                Layer::Conv5x5(ConvLayer::init(1, 2, 8, 8, &mut rng)),
                Layer::Relu,
                Layer::MaxPool2x2 { ch: 2, in_h: 4, in_w: 4 },
                Layer::Flatten,
                Layer::Dense(DenseLayer::init(8, 4, &mut rng)),
            ],
            classifier: DenseLayer::init(4, 3, &mut rng),
        };
        let (x, labels) = batch(15, 3, 64);
        let analytic = model.grads_flat(&full_grads(&model, &x, &labels));
        let base = model.params_flat();
        let eps = 1e-6;
        for i in (0..base.len()).step_by(11) {
            let mut m = model.clone();
            let mut p = base.clone();
            p[i] += eps;
            m.set_params_flat(&p);
            let lp = full_loss(&m, &x, &labels);
            p[i] = base[i] - eps;
            m.set_params_flat(&p);
            let lm = full_loss(&m, &x, &labels);
            let fd = (lp - lm) / (2.0 * eps);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-7);
            assert!(
                ((fd - analytic[i]) / denom).abs() < 1e-5,
                "param {i}: fd={fd} analytic={}",
                analytic[i]
            );
        }
    }
}
