use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::body_model::ModelDims;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::synth::{FeatureDims, KeypointObservation};

/// Feature blocks in output order.
pub const FEATURE_BODY: usize = 0;
pub const FEATURE_FACE: usize = 1;
pub const FEATURE_LEFT_HAND: usize = 2;
pub const FEATURE_RIGHT_HAND: usize = 3;

/// Sizes of every layer of the regressor.
///
/// A tanh trunk feeds a linear parameter head and three tanh feature heads
/// (body, face, hand). The hand head emits the left and right hand features
/// side by side. Each feature head is followed by an affine adapter to the
/// expert's feature width; both hands share the hand adapter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub params: usize,
    /// Head widths before the adapters: body, face, hand (per hand).
    pub feature_internal: [usize; 3],
    /// Adapter output widths: body, face, hand.
    pub feature_out: [usize; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layer {
    rows: usize,
    cols: usize,
    offset: usize,
}

impl Layer {
    fn len(&self) -> usize {
        self.rows * self.cols + self.rows
    }

    fn weights<'a, T>(&self, w: &'a [T]) -> &'a [T] {
        &w[self.offset..self.offset + self.rows * self.cols]
    }

    fn bias<'a, T>(&self, w: &'a [T]) -> &'a [T] {
        &w[self.offset + self.rows * self.cols..self.offset + self.len()]
    }
}

struct Layers {
    hidden: Vec<Layer>,
    param_head: Layer,
    /// body, face, hand
    heads: [Layer; 3],
    adapters: [Layer; 3],
    total: usize,
}

impl Architecture {
    pub fn new(dims: &ModelDims, features: FeatureDims, hidden: Vec<usize>, feature_internal: [usize; 3]) -> Self {
        Architecture {
            input: input_len(dims),
            hidden,
            params: dims.param_count(),
            feature_internal,
            feature_out: [features.body, features.face, features.hand],
        }
    }

    /// Two hidden layers of 64 and small feature heads.
    pub fn toy(dims: &ModelDims, features: FeatureDims) -> Self {
        Self::new(dims, features, vec![64, 64], [16, 8, 8])
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.input, self.params]
            .into_iter()
            .chain(self.hidden.iter().copied())
            .chain(self.feature_internal)
            .chain(self.feature_out);
        for n in all {
            if n == 0 {
                return Err(Error::Configuration("every layer width must be at least 1".into()));
            }
        }
        if self.hidden.is_empty() {
            return Err(Error::Configuration("at least one hidden layer is required".into()));
        }
        Ok(())
    }

    fn layers(&self) -> Layers {
        let mut offset = 0;
        let mut make = |rows: usize, cols: usize| {
            let l = Layer { rows, cols, offset };
            offset += l.len();
            l
        };
        let mut prev = self.input;
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for &h in &self.hidden {
            hidden.push(make(h, prev));
            prev = h;
        }
        let [ib, ifc, ih] = self.feature_internal;
        let [ob, ofc, oh] = self.feature_out;
        let param_head = make(self.params, prev);
        let heads = [make(ib, prev), make(ifc, prev), make(2 * ih, prev)];
        let adapters = [make(ob, ib), make(ofc, ifc), make(oh, ih)];
        Layers {
            hidden,
            param_head,
            heads,
            adapters,
            total: offset,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.layers().total
    }

    pub fn feature_len(&self, block: usize) -> usize {
        self.feature_out[block.min(2)]
    }
}

/// Network weights as one contiguous vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    pub arch: Architecture,
    weights: Vec<T>,
}

/// Everything the network emits for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct Output<T> {
    /// Flat full-body parameters in `ParamLayout` order.
    pub params: Vec<T>,
    /// Adapted features: body, face, left hand, right hand.
    pub features: [Vec<T>; 4],
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    input: Vec<T>,
    hidden: Vec<Vec<T>>,
    heads: [Vec<T>; 3],
}

fn affine<T: Real>(layer: &Layer, w: &[T], x: &[T], out: &mut Vec<T>) {
    let wm = layer.weights(w);
    let b = layer.bias(w);
    out.clear();
    for r in 0..layer.rows {
        let row = &wm[r * layer.cols..(r + 1) * layer.cols];
        let mut acc = b[r];
        for (a, v) in row.iter().zip(x) {
            acc += *a * *v;
        }
        out.push(acc);
    }
}

/// Accumulates the gradient of one affine layer into `grad` and returns
/// the gradient with respect to its input (if requested).
fn affine_backward<T: Real>(layer: &Layer, w: &[T], x: &[T], gy: &[T], grad: &mut [T], want_input: bool) -> Vec<T> {
    let wm = layer.weights(w);
    let mut gx = if want_input { vec![T::zero(); layer.cols] } else { Vec::new() };
    let (gw, gb) = grad[layer.offset..layer.offset + layer.len()].split_at_mut(layer.rows * layer.cols);
    for r in 0..layer.rows {
        let g = gy[r];
        if g == T::zero() {
            continue;
        }
        gb[r] += g;
        let row_g = &mut gw[r * layer.cols..(r + 1) * layer.cols];
        for (a, v) in row_g.iter_mut().zip(x) {
            *a += g * *v;
        }
        if want_input {
            let row = &wm[r * layer.cols..(r + 1) * layer.cols];
            for (a, v) in gx.iter_mut().zip(row) {
                *a += g * *v;
            }
        }
    }
    gx
}

impl<T: Real> ModelState<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let n = arch.weight_count();
        Ok(ModelState {
            arch,
            weights: vec![T::zero(); n],
        })
    }

    /// Gaussian weights with variance 1/fan-in, zero biases. The parameter
    /// head starts at a tenth of that scale so initial predictions sit near
    /// the rest pose.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut state = Self::zeros(arch)?;
        let layers = state.arch.layers();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |l: &Layer, gain: f64, w: &mut [T]| {
            let n = Normal::new(0.0, gain / (l.cols as f64).sqrt()).expect("valid sigma");
            for x in &mut w[l.offset..l.offset + l.rows * l.cols] {
                *x = T::lit(n.sample(&mut rng));
            }
        };
        for l in &layers.hidden {
            fill(l, 1.0, &mut state.weights);
        }
        fill(&layers.param_head, 0.1, &mut state.weights);
        for l in layers.heads.iter().chain(&layers.adapters) {
            fill(l, 1.0, &mut state.weights);
        }
        Ok(state)
    }

    pub fn from_flat(arch: Architecture, weights: Vec<T>) -> Result<Self> {
        arch.validate()?;
        if weights.len() != arch.weight_count() {
            return Err(Error::Configuration(format!(
                "architecture needs {} weights, got {}",
                arch.weight_count(),
                weights.len()
            )));
        }
        Ok(ModelState { arch, weights })
    }

    pub fn flatten(&self) -> &[T] {
        &self.weights
    }

    pub fn flatten_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn into_flat(self) -> Vec<T> {
        self.weights
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn forward(&self, input: &[T]) -> Result<Output<T>> {
        self.forward_cached(input).map(|(o, _)| o)
    }

    pub fn forward_cached(&self, input: &[T]) -> Result<(Output<T>, ForwardCache<T>)> {
        if input.len() != self.arch.input {
            return Err(Error::Configuration(format!(
                "network expects {} inputs, got {}",
                self.arch.input,
                input.len()
            )));
        }
        let layers = self.arch.layers();
        let w = &self.weights;
        let mut hidden = Vec::with_capacity(layers.hidden.len());
        let mut x = input.to_vec();
        for l in &layers.hidden {
            let mut y = Vec::with_capacity(l.rows);
            affine(l, w, &x, &mut y);
            y.iter_mut().for_each(|v| *v = v.tanh());
            hidden.push(y.clone());
            x = y;
        }
        let mut params = Vec::with_capacity(layers.param_head.rows);
        affine(&layers.param_head, w, &x, &mut params);

        let mut heads: [Vec<T>; 3] = Default::default();
        for (h, l) in heads.iter_mut().zip(&layers.heads) {
            affine(l, w, &x, h);
            h.iter_mut().for_each(|v| *v = v.tanh());
        }
        let ih = self.arch.feature_internal[2];
        let mut features: [Vec<T>; 4] = Default::default();
        affine(&layers.adapters[0], w, &heads[0], &mut features[0]);
        affine(&layers.adapters[1], w, &heads[1], &mut features[1]);
        affine(&layers.adapters[2], w, &heads[2][..ih], &mut features[2]);
        affine(&layers.adapters[2], w, &heads[2][ih..], &mut features[3]);
        Ok((
            Output { params, features },
            ForwardCache {
                input: input.to_vec(),
                hidden,
                heads,
            },
        ))
    }

    /// Gradient of a loss with respect to every weight, given its gradient
    /// with respect to the outputs. Empty feature gradients count as zero.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_params: &[T], grad_features: &[Vec<T>; 4]) -> Vec<T> {
        let layers = self.arch.layers();
        let w = &self.weights;
        let mut grad = vec![T::zero(); layers.total];
        let last = cache.hidden.last().expect("at least one hidden layer");
        let mut g_last = affine_backward(&layers.param_head, w, last, grad_params, &mut grad, true);

        let ih = self.arch.feature_internal[2];
        for block in 0..3 {
            let (g_head_act, has) = match block {
                2 => {
                    let mut g = vec![T::zero(); 2 * ih];
                    let mut any = false;
                    for (side, gf) in [&grad_features[2], &grad_features[3]].into_iter().enumerate() {
                        if gf.is_empty() {
                            continue;
                        }
                        any = true;
                        let x = &cache.heads[2][side * ih..(side + 1) * ih];
                        let gx = affine_backward(&layers.adapters[2], w, x, gf, &mut grad, true);
                        for (a, b) in g[side * ih..(side + 1) * ih].iter_mut().zip(gx) {
                            *a += b;
                        }
                    }
                    (g, any)
                }
                _ => {
                    let gf = &grad_features[block];
                    if gf.is_empty() {
                        (Vec::new(), false)
                    } else {
                        let gx = affine_backward(&layers.adapters[block], w, &cache.heads[block], gf, &mut grad, true);
                        (gx, true)
                    }
                }
            };
            if !has {
                continue;
            }
            let g_pre: Vec<T> = g_head_act
                .iter()
                .zip(&cache.heads[block])
                .map(|(g, a)| *g * (T::one() - *a * *a))
                .collect();
            let gx = affine_backward(&layers.heads[block], w, last, &g_pre, &mut grad, true);
            for (a, b) in g_last.iter_mut().zip(gx) {
                *a += b;
            }
        }

        for k in (0..layers.hidden.len()).rev() {
            let act = &cache.hidden[k];
            let g_pre: Vec<T> = g_last.iter().zip(act).map(|(g, a)| *g * (T::one() - *a * *a)).collect();
            let x = if k == 0 { &cache.input } else { &cache.hidden[k - 1] };
            g_last = affine_backward(&layers.hidden[k], w, x, &g_pre, &mut grad, k > 0);
        }
        grad
    }
}

/// Trailing inputs after the per-keypoint triples.
pub const GLOBAL_INPUTS: usize = 3;

pub fn input_len(dims: &ModelDims) -> usize {
    3 * dims.keypoint_count() + GLOBAL_INPUTS
}

/// Network input for one observation. With `(ū, v̄)` the centroid and `s`
/// the RMS spread of the detected keypoints (confidence > 0), each keypoint
/// becomes `((u − ū)/s, (v − v̄)/s, c)`, missing ones are zeros, and three
/// globals follow: `((ū − cx)/s, (v̄ − cy)/s, ln(f/s))`.
pub fn encode_observation<T: Real>(obs: &KeypointObservation, focal_length: f64, principal_point: [f64; 2]) -> Vec<T> {
    let seen: Vec<[f64; 2]> = obs.keypoints.iter().filter(|k| k.confidence > 0.0).map(|k| k.position).collect();
    let mut out = Vec::with_capacity(3 * obs.keypoints.len() + GLOBAL_INPUTS);
    if seen.is_empty() {
        out.resize(3 * obs.keypoints.len() + GLOBAL_INPUTS, T::zero());
        return out;
    }
    let n = seen.len() as f64;
    let cu = seen.iter().map(|p| p[0]).sum::<f64>() / n;
    let cv = seen.iter().map(|p| p[1]).sum::<f64>() / n;
    let spread = (seen.iter().map(|p| (p[0] - cu).powi(2) + (p[1] - cv).powi(2)).sum::<f64>() / n).sqrt();
    // a single keypoint has no spread; fall back to the focal length
    let s = if spread > 0.0 { spread } else { focal_length };
    for k in &obs.keypoints {
        if k.confidence > 0.0 {
            out.push(T::lit((k.position[0] - cu) / s));
            out.push(T::lit((k.position[1] - cv) / s));
            out.push(T::lit(k.confidence));
        } else {
            out.extend([T::zero(); 3]);
        }
    }
    out.push(T::lit((cu - principal_point[0]) / s));
    out.push(T::lit((cv - principal_point[1]) / s));
    out.push(T::lit((focal_length / s).ln()));
    out
}
