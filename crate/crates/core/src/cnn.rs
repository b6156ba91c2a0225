//! The convolutional network class: a stack of zero-padded convolutional
//! layers with ReLU, a max-pooling layer over valid window positions, and a
//! one-hidden-layer head, plus linear ensembles of truncated networks.

use crate::error::{CoreError, Result};
use crate::grid::ImageGrid;
use crate::loss::truncate;

/// Architecture of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    /// Channels per convolutional layer; `channels.len()` is the number of
    /// convolutional layers.
    pub channels: Vec<usize>,
    /// Filter window side per convolutional layer, same length as `channels`.
    pub filter_sizes: Vec<usize>,
    /// Width of the scalar head network.
    pub head_width: usize,
    /// Truncation level applied to each component before mixing.
    pub beta: f64,
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.filter_sizes.len() {
            return Err(CoreError::Config(format!(
                "need equal nonempty channels/filter_sizes, got {}/{}",
                self.channels.len(),
                self.filter_sizes.len()
            )));
        }
        if self.channels.iter().any(|&k| k == 0) {
            return Err(CoreError::Config("channel counts must be >= 1".into()));
        }
        if self.filter_sizes.iter().any(|&m| m == 0) {
            return Err(CoreError::Config("filter sizes must be >= 1".into()));
        }
        if self.head_width == 0 {
            return Err(CoreError::Config("head width must be >= 1".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(CoreError::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn conv_layers(&self) -> usize {
        self.channels.len()
    }

    /// Flat index of the pooling mix weight for channel s of the last layer.
    pub fn out_weight_index(&self, s: usize) -> usize {
        self.layout().out(s)
    }

    /// Flat index of the head output offset.
    pub fn head_offset_index(&self) -> usize {
        self.layout().head_offset()
    }

    /// Flat indices (outer, slope, bias) of head unit i.
    pub fn head_unit_indices(&self, i: usize) -> (usize, usize, usize) {
        self.layout().head_unit(i)
    }

    /// Checks that every filter window fits inside a d1 x d2 image and that
    /// the pooling range is nonempty.
    pub fn validate_for_image(&self, d1: usize, d2: usize) -> Result<()> {
        self.validate()?;
        let min_side = d1.min(d2);
        if let Some(&m) = self.filter_sizes.iter().find(|&&m| m > min_side) {
            return Err(CoreError::Config(format!(
                "filter size {m} exceeds min image side {min_side}"
            )));
        }
        Ok(())
    }

    /// Number of scalar parameters of one network with this architecture.
    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    pub(crate) fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

/// Offsets of the weight groups inside the flat parameter vector of one
/// network. Order: per conv layer r (filters, then biases), then pooling
/// output weights, then the head (offset, then per unit: outer, slope, bias).
#[derive(Debug, Clone)]
pub(crate) struct ParamLayout {
    pub conv_w: Vec<usize>,
    pub conv_b: Vec<usize>,
    pub out_w: usize,
    pub head: usize,
    pub total: usize,
    channels: Vec<usize>,
    filter_sizes: Vec<usize>,
}

impl ParamLayout {
    fn new(cfg: &CnnConfig) -> Self {
        let l1 = cfg.conv_layers();
        let mut conv_w = Vec::with_capacity(l1);
        let mut conv_b = Vec::with_capacity(l1);
        let mut off = 0usize;
        let mut prev_k = 1usize;
        for r in 0..l1 {
            let m = cfg.filter_sizes[r];
            let k = cfg.channels[r];
            conv_w.push(off);
            off += m * m * prev_k * k;
            conv_b.push(off);
            off += k;
            prev_k = k;
        }
        let out_w = off;
        off += *cfg.channels.last().unwrap();
        let head = off;
        off += 1 + 3 * cfg.head_width;
        ParamLayout {
            conv_w,
            conv_b,
            out_w,
            head,
            total: off,
            channels: cfg.channels.clone(),
            filter_sizes: cfg.filter_sizes.clone(),
        }
    }

    /// Filter weight index: layer r (0-based), taps t1,t2 (0-based), input
    /// channel s1, output channel s2.
    #[inline]
    pub fn w(&self, r: usize, t1: usize, t2: usize, s1: usize, s2: usize) -> usize {
        let m = self.filter_sizes[r];
        let prev_k = if r == 0 { 1 } else { self.channels[r - 1] };
        debug_assert!(t1 < m && t2 < m && s1 < prev_k && s2 < self.channels[r]);
        self.conv_w[r] + (((t1 * m) + t2) * prev_k + s1) * self.channels[r] + s2
    }

    #[inline]
    pub fn b(&self, r: usize, s2: usize) -> usize {
        self.conv_b[r] + s2
    }

    #[inline]
    pub fn out(&self, s: usize) -> usize {
        self.out_w + s
    }

    /// Head output offset w_0^(1).
    #[inline]
    pub fn head_offset(&self) -> usize {
        self.head
    }

    /// Head unit i (0-based): (outer weight, inner slope, inner bias).
    #[inline]
    pub fn head_unit(&self, i: usize) -> (usize, usize, usize) {
        let base = self.head + 1 + 3 * i;
        (base, base + 1, base + 2)
    }
}

/// All weights of one network, stored flat (see `ParamLayout`).
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub data: Vec<f64>,
}

impl CnnParams {
    pub fn zeros(cfg: &CnnConfig) -> Self {
        CnnParams {
            data: vec![0.0; cfg.param_count()],
        }
    }

    pub fn from_vec(cfg: &CnnConfig, data: Vec<f64>) -> Result<Self> {
        if data.len() != cfg.param_count() {
            return Err(CoreError::Shape(format!(
                "expected {} params, got {}",
                cfg.param_count(),
                data.len()
            )));
        }
        Ok(CnnParams { data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Per layer r and channel s2, a d1 x d2 grid of post-ReLU feature values.
/// Layer 0 holds the input pixels.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    pub d1: usize,
    pub d2: usize,
    /// `layers[r]` has `channels_r * d1 * d2` entries; channel-major, then
    /// the image layout of `ImageGrid`.
    pub layers: Vec<Vec<f64>>,
}

impl FeatureStack {
    #[inline]
    pub fn get(&self, r: usize, s: usize, i: usize, j: usize) -> f64 {
        self.layers[r][s * self.d1 * self.d2 + (i - 1) * self.d2 + (j - 1)]
    }
}

/// Everything produced by one forward pass, including the intermediates that
/// the analytic backward pass consumes.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Head output g(pool value).
    pub value: f64,
    /// The max-pooled channel mix.
    pub pool_value: f64,
    /// First (row-major over (i,j)) position attaining the pool max, 1-based.
    pub pool_argmax: (usize, usize),
    /// Post-ReLU feature grids, layer 0 = input.
    pub features: FeatureStack,
    /// Pre-activation grids per conv layer (same indexing as features,
    /// starting at layer 1 -> index 0).
    pub preacts: Vec<Vec<f64>>,
    /// Head pre-activations w_{i,1}x + w_{i,0} per unit.
    pub head_preacts: Vec<f64>,
}

/// Reusable buffers for forward/backward passes in hot loops.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    pub(crate) feats: Vec<Vec<f64>>,
    pub(crate) pres: Vec<Vec<f64>>,
    pub(crate) heads: Vec<f64>,
}

/// Forward results that matter for the backward pass; grids live in Scratch.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RawForward {
    pub value: f64,
    pub pool_value: f64,
    pub pool_argmax: (usize, usize),
}

/// Forward evaluation of one network on an image.
pub fn cnn_forward(cfg: &CnnConfig, params: &CnnParams, x: &ImageGrid) -> Result<ForwardTrace> {
    cfg.validate_for_image(x.d1(), x.d2())?;
    if params.data.len() != cfg.param_count() {
        return Err(CoreError::Shape(format!(
            "params len {} != expected {}",
            params.data.len(),
            cfg.param_count()
        )));
    }
    let mut scratch = Scratch::default();
    let raw = forward_into(cfg, &params.data, x, &mut scratch);
    let d1 = x.d1();
    let d2 = x.d2();
    let mut layers = Vec::with_capacity(cfg.conv_layers() + 1);
    layers.push(x.pixels().to_vec());
    layers.extend(scratch.feats.iter().cloned());
    Ok(ForwardTrace {
        value: raw.value,
        pool_value: raw.pool_value,
        pool_argmax: raw.pool_argmax,
        features: FeatureStack { d1, d2, layers },
        preacts: scratch.pres.clone(),
        head_preacts: scratch.heads.clone(),
    })
}

/// Forward pass writing intermediates into reusable scratch buffers.
pub(crate) fn forward_into(
    cfg: &CnnConfig,
    theta: &[f64],
    x: &ImageGrid,
    scratch: &mut Scratch,
) -> RawForward {
    let layout = cfg.layout();
    let d1 = x.d1();
    let d2 = x.d2();
    let grid = d1 * d2;
    let l1 = cfg.conv_layers();

    scratch.feats.resize(l1, Vec::new());
    scratch.pres.resize(l1, Vec::new());
    for r in 0..l1 {
        let k = cfg.channels[r];
        scratch.feats[r].clear();
        scratch.feats[r].resize(k * grid, 0.0);
        scratch.pres[r].clear();
        scratch.pres[r].resize(k * grid, 0.0);
    }

    for r in 0..l1 {
        let m = cfg.filter_sizes[r];
        let k = cfg.channels[r];
        let prev_k = if r == 0 { 1 } else { cfg.channels[r - 1] };
        // split borrows: previous feature layer vs current
        let (prev_slice, feats_r, pres_r) = if r == 0 {
            let (feats_r, rest) = scratch.feats.split_first_mut().unwrap();
            let _ = rest;
            (x.pixels(), feats_r, &mut scratch.pres[0])
        } else {
            let (before, after) = scratch.feats.split_at_mut(r);
            (
                before[r - 1].as_slice(),
                &mut after[0],
                &mut scratch.pres[r],
            )
        };
        for s2 in 0..k {
            let bias = theta[layout.b(r, s2)];
            for i in 1..=d1 {
                for j in 1..=d2 {
                    let mut acc = bias;
                    // taps reaching outside the grid are dropped (zero padding)
                    for t1 in 0..m {
                        let ii = i + t1;
                        if ii > d1 {
                            break;
                        }
                        for t2 in 0..m {
                            let jj = j + t2;
                            if jj > d2 {
                                break;
                            }
                            let pos = (ii - 1) * d2 + (jj - 1);
                            for s1 in 0..prev_k {
                                acc += theta[layout.w(r, t1, t2, s1, s2)]
                                    * prev_slice[s1 * grid + pos];
                            }
                        }
                    }
                    let pos = (i - 1) * d2 + (j - 1);
                    pres_r[s2 * grid + pos] = acc;
                    feats_r[s2 * grid + pos] = if acc > 0.0 { acc } else { 0.0 };
                }
            }
        }
    }

    // Max pooling over positions where a window of the last filter size fits,
    // first argmax in row-major order over (i, j).
    let m_last = cfg.filter_sizes[l1 - 1];
    let k_last = cfg.channels[l1 - 1];
    let last = &scratch.feats[l1 - 1];
    let mut pool_value = f64::NEG_INFINITY;
    let mut pool_argmax = (1usize, 1usize);
    for i in 1..=(d1 - m_last + 1) {
        for j in 1..=(d2 - m_last + 1) {
            let pos = (i - 1) * d2 + (j - 1);
            let mut v = 0.0;
            for s in 0..k_last {
                v += theta[layout.out(s)] * last[s * grid + pos];
            }
            if v > pool_value {
                pool_value = v;
                pool_argmax = (i, j);
            }
        }
    }

    // Head: g(z) = sum_i w_i^(1) relu(w_{i,1}^(0) z + w_{i,0}^(0)) + w_0^(1).
    scratch.heads.clear();
    let mut value = theta[layout.head_offset()];
    for u in 0..cfg.head_width {
        let (outer, slope, bias) = layout.head_unit(u);
        let pre = theta[slope] * pool_value + theta[bias];
        scratch.heads.push(pre);
        if pre > 0.0 {
            value += theta[outer] * pre;
        }
    }
    RawForward {
        value,
        pool_value,
        pool_argmax,
    }
}

/// Scalar forward value of one network given its flat parameter slice.
/// Panics on shape mismatch; intended for hot loops over validated layouts.
pub fn forward_probe(cfg: &CnnConfig, theta: &[f64], x: &ImageGrid) -> f64 {
    assert_eq!(theta.len(), cfg.param_count());
    let mut scratch = Scratch::default();
    forward_into(cfg, theta, x, &mut scratch).value
}

/// Outer weights plus K component parameter vectors (flat, each of length
/// `CnnConfig::param_count`), with the initialization snapshot kept for the
/// distance-one ball projection.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleParams {
    pub w: Vec<f64>,
    pub thetas: Vec<f64>,
    pub theta0: Vec<f64>,
}

impl EnsembleParams {
    pub fn component_count(&self) -> usize {
        self.w.len()
    }

    pub fn component(&self, per: usize, k: usize) -> &[f64] {
        &self.thetas[k * per..(k + 1) * per]
    }

    pub fn validate(&self, cfg: &CnnConfig) -> Result<()> {
        let per = cfg.param_count();
        if self.thetas.len() != per * self.w.len() || self.theta0.len() != self.thetas.len() {
            return Err(CoreError::Config(format!(
                "ensemble layout mismatch: K={}, per-component={}, thetas={}, theta0={}",
                self.w.len(),
                per,
                self.thetas.len(),
                self.theta0.len()
            )));
        }
        Ok(())
    }
}

/// Weighted sum of truncated component values.
pub fn ensemble_eval(cfg: &CnnConfig, ens: &EnsembleParams, x: &ImageGrid) -> Result<f64> {
    ens.validate(cfg)?;
    cfg.validate_for_image(x.d1(), x.d2())?;
    let per = cfg.param_count();
    let mut scratch = Scratch::default();
    let mut acc = 0.0;
    for k in 0..ens.component_count() {
        if ens.w[k] == 0.0 {
            continue;
        }
        let raw = forward_into(cfg, ens.component(per, k), x, &mut scratch);
        acc += ens.w[k] * truncate(cfg.beta, raw.value);
    }
    Ok(acc)
}

/// Upper bound on |f| over [0,1] images for weights bounded by `b`, derived
/// from the per-layer growth bound of the feature maps.
pub fn cnn_output_bound(cfg: &CnnConfig, b: f64) -> f64 {
    let k_max = *cfg.channels.iter().max().unwrap() as f64;
    let m_max = *cfg.filter_sizes.iter().max().unwrap() as f64;
    let l1 = cfg.conv_layers() as f64;
    let o_max = (k_max * (m_max * m_max + 1.0) * b.max(1.0)).powf(l1);
    let pool = k_max * b * o_max;
    cfg.head_width as f64 * b * (b * pool + b) + b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn one_layer_cfg(m: usize, beta: f64) -> CnnConfig {
        CnnConfig {
            channels: vec![1],
            filter_sizes: vec![m],
            head_width: 1,
            beta,
        }
    }

    /// Head that forwards its input: one unit, outer 1, slope 1, bias 0.
    fn identity_head(cfg: &CnnConfig, params: &mut CnnParams) {
        let layout = cfg.layout();
        let (outer, slope, bias) = layout.head_unit(0);
        params.data[outer] = 1.0;
        params.data[slope] = 1.0;
        params.data[bias] = 0.0;
    }

    #[test]
    fn bias_only_network_collapses_to_bias() {
        // all conv weights 0, bias b > 0, out weight 1, identity head
        let cfg = one_layer_cfg(1, 10.0);
        let mut params = CnnParams::zeros(&cfg);
        let layout = cfg.layout();
        params.data[layout.b(0, 0)] = 0.8;
        params.data[layout.out(0)] = 1.0;
        identity_head(&cfg, &mut params);
        let x = ImageGrid::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let t = cnn_forward(&cfg, &params, &x).unwrap();
        assert!((t.pool_value - 0.8).abs() < 1e-15);
        assert!((t.value - 0.8).abs() < 1e-15);
    }

    #[test]
    fn identity_filter_with_max_pool_returns_max_pixel() {
        let cfg = one_layer_cfg(1, 10.0);
        let mut params = CnnParams::zeros(&cfg);
        let layout = cfg.layout();
        params.data[layout.w(0, 0, 0, 0, 0)] = 1.0;
        params.data[layout.out(0)] = 1.0;
        identity_head(&cfg, &mut params);
        let x = ImageGrid::new(2, 2, vec![0.1, 0.9, 0.3, 0.4]).unwrap();
        let t = cnn_forward(&cfg, &params, &x).unwrap();
        assert!((t.value - 0.9).abs() < 1e-15);
        assert_eq!(t.pool_argmax, (1, 2));
    }

    #[test]
    fn hand_evaluated_two_by_two_filter() {
        // 2x2 image, single 2x2 all-ones filter, zero bias: the only valid
        // pool position sees the full pixel sum.
        let cfg = one_layer_cfg(2, 10.0);
        let mut params = CnnParams::zeros(&cfg);
        let layout = cfg.layout();
        for t1 in 0..2 {
            for t2 in 0..2 {
                params.data[layout.w(0, t1, t2, 0, 0)] = 1.0;
            }
        }
        params.data[layout.out(0)] = 1.0;
        identity_head(&cfg, &mut params);
        let x = ImageGrid::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let t = cnn_forward(&cfg, &params, &x).unwrap();
        assert_eq!(t.pool_argmax, (1, 1));
        assert!((t.features.get(1, 0, 1, 1) - 1.0).abs() < 1e-15);
        assert!((t.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn padding_keeps_grid_size_and_features_nonnegative() {
        let cfg = CnnConfig {
            channels: vec![3, 2],
            filter_sizes: vec![2, 2],
            head_width: 2,
            beta: 5.0,
        };
        let mut rng = rng_from_seed(5);
        let mut params = CnnParams::zeros(&cfg);
        for v in params.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let x = ImageGrid::random(4, 3, &mut rng);
        let t = cnn_forward(&cfg, &params, &x).unwrap();
        for (r, layer) in t.features.layers.iter().enumerate() {
            let k = if r == 0 { 1 } else { cfg.channels[r - 1] };
            assert_eq!(layer.len(), k * 4 * 3, "layer {r} size");
            assert!(layer.iter().all(|&v| v >= 0.0), "layer {r} has negatives");
        }
    }

    #[test]
    fn pool_is_monotone_in_argmax_channel_value() {
        let cfg = CnnConfig {
            channels: vec![2],
            filter_sizes: vec![2],
            head_width: 1,
            beta: 5.0,
        };
        let mut rng = rng_from_seed(11);
        for _ in 0..20 {
            let mut params = CnnParams::zeros(&cfg);
            for v in params.data.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            identity_head(&cfg, &mut params);
            let x = ImageGrid::random(4, 4, &mut rng);
            let t = cnn_forward(&cfg, &params, &x).unwrap();
            let layout = cfg.layout();
            // bump an out weight in the direction of its feature value at the argmax
            let (i, j) = t.pool_argmax;
            let sign = if t.features.get(1, 0, i, j) >= 0.0 { 1.0 } else { -1.0 };
            let mut bumped = params.clone();
            bumped.data[layout.out(0)] += 0.1 * sign;
            let t2 = cnn_forward(&cfg, &bumped, &x).unwrap();
            assert!(
                t2.pool_value >= t.pool_value - 1e-12,
                "pool decreased: {} -> {}",
                t.pool_value,
                t2.pool_value
            );
        }
    }

    #[test]
    fn ensemble_examples() {
        let cfg = one_layer_cfg(1, 5.0);
        let per = cfg.param_count();
        // all weights zero -> 0
        let ens = EnsembleParams {
            w: vec![0.0; 3],
            thetas: vec![0.0; 3 * per],
            theta0: vec![0.0; 3 * per],
        };
        let x = ImageGrid::new(1, 1, vec![0.5]).unwrap();
        assert_eq!(ensemble_eval(&cfg, &ens, &x).unwrap(), 0.0);

        // constant-value components via head offset
        let layout = cfg.layout();
        let constant = |c: f64| {
            let mut p = CnnParams::zeros(&cfg);
            p.data[layout.head_offset()] = c;
            p.data
        };
        // K = 1, w = 1, component value 7, beta 5 -> 5
        let ens = EnsembleParams {
            w: vec![1.0],
            thetas: constant(7.0),
            theta0: vec![0.0; per],
        };
        assert!((ensemble_eval(&cfg, &ens, &x).unwrap() - 5.0).abs() < 1e-15);

        // K = 2, w = (0.3, 0.2), values (2, -4), beta 3 -> 0.0
        let cfg3 = CnnConfig { beta: 3.0, ..cfg.clone() };
        let mut thetas = constant(2.0);
        thetas.extend(constant(-4.0));
        let ens = EnsembleParams {
            w: vec![0.3, 0.2],
            thetas,
            theta0: vec![0.0; 2 * per],
        };
        assert!((ensemble_eval(&cfg3, &ens, &x).unwrap() - 0.0).abs() < 1e-15);
    }

    #[test]
    fn ensemble_rejects_k_mismatch() {
        let cfg = one_layer_cfg(1, 5.0);
        let per = cfg.param_count();
        let ens = EnsembleParams {
            w: vec![0.0; 2],
            thetas: vec![0.0; per], // wrong: should be 2*per
            theta0: vec![0.0; per],
        };
        let x = ImageGrid::new(1, 1, vec![0.5]).unwrap();
        assert!(ensemble_eval(&cfg, &ens, &x).is_err());
    }

    #[test]
    fn ensemble_is_linear_in_outer_weights() {
        let cfg = CnnConfig {
            channels: vec![2],
            filter_sizes: vec![2],
            head_width: 2,
            beta: 2.0,
        };
        let per = cfg.param_count();
        let mut rng = rng_from_seed(3);
        let k = 3usize;
        let thetas: Vec<f64> = (0..k * per).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = ImageGrid::random(3, 3, &mut rng);
        for _ in 0..20 {
            let wa: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..0.4)).collect();
            let wb: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..0.4)).collect();
            let lambda: f64 = rng.gen_range(0.0..1.0);
            let mix: Vec<f64> = wa
                .iter()
                .zip(&wb)
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect();
            let eval = |w: Vec<f64>| {
                ensemble_eval(
                    &cfg,
                    &EnsembleParams {
                        w,
                        thetas: thetas.clone(),
                        theta0: vec![0.0; k * per],
                    },
                    &x,
                )
                .unwrap()
            };
            let va = eval(wa);
            let vb = eval(wb);
            let vm = eval(mix);
            assert!((vm - (lambda * va + (1.0 - lambda) * vb)).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_bounded_by_beta_for_subunit_mass() {
        let cfg = CnnConfig {
            channels: vec![2],
            filter_sizes: vec![2],
            head_width: 2,
            beta: 1.5,
        };
        let per = cfg.param_count();
        let mut rng = rng_from_seed(9);
        for _ in 0..20 {
            let k = 4usize;
            let mut w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum();
            if s > 1.0 {
                for v in w.iter_mut() {
                    *v /= s;
                }
            }
            let thetas: Vec<f64> = (0..k * per).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = ImageGrid::random(3, 3, &mut rng);
            let v = ensemble_eval(
                &cfg,
                &EnsembleParams {
                    w,
                    thetas,
                    theta0: vec![0.0; k * per],
                },
                &x,
            )
            .unwrap();
            assert!(v.abs() <= cfg.beta + 1e-12);
        }
    }
}
