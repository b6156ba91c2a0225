//! Projected stochastic gradient descent over ensembles: random
//! initialization, per-pass permutations, alternating projections, outer
//! weight averaging, and the sign classifier.

use crate::cnn::{CnnConfig, EnsembleParams};
use crate::error::{CoreError, Result};
use crate::grad::{grad_ensemble_into, GradBundle, GradWorkspace};
use crate::grid::ImageGrid;
use crate::loss::logistic_loss;
use crate::project::{project_a_into, project_b_into};
use crate::synthetic::LabeledSample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Ensemble size.
    pub k: usize,
    /// Optional block structure with k = n_blocks * block_size.
    pub n_blocks: Option<usize>,
    pub block_size: Option<usize>,
    /// Total SGD steps; must be a multiple of the sample count.
    pub steps: usize,
    /// Stepsize; 1/steps reproduces the schedule the analysis uses.
    pub lambda: f64,
    /// Squared-mass cap of the outer weights.
    pub alpha: f64,
    /// Truncation level; must match the network config.
    pub beta: f64,
    /// Sup-norm bound of the random initialization.
    pub init_bound: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults for n training samples: K = 64, B = 1, t = 10n,
    /// alpha = 1/8, lambda = 1/t.
    pub fn desk_scale(n: usize, beta: f64, seed: u64) -> Self {
        let steps = 10 * n;
        TrainConfig {
            k: 64,
            n_blocks: None,
            block_size: None,
            steps,
            lambda: 1.0 / steps as f64,
            alpha: 0.125,
            beta,
            init_bound: 1.0,
            seed,
        }
    }

    pub fn validate(&self, cfg: &CnnConfig, n_samples: usize) -> Result<()> {
        if self.k == 0 {
            return Err(CoreError::Config("ensemble size must be >= 1".into()));
        }
        if let (Some(nb), Some(bs)) = (self.n_blocks, self.block_size) {
            if nb * bs != self.k {
                return Err(CoreError::Config(format!(
                    "k = {} but n_blocks * block_size = {}",
                    self.k,
                    nb * bs
                )));
            }
        }
        if n_samples == 0 {
            return Err(CoreError::Config("empty training set".into()));
        }
        if self.steps == 0 || self.steps % n_samples != 0 {
            return Err(CoreError::Config(format!(
                "steps = {} must be a positive multiple of n = {}",
                self.steps, n_samples
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(CoreError::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CoreError::Config(format!("alpha must lie in [0,1], got {}", self.alpha)));
        }
        if (self.beta - cfg.beta).abs() > 1e-12 {
            return Err(CoreError::Config(format!(
                "truncation level mismatch: train {} vs network {}",
                self.beta, cfg.beta
            )));
        }
        Ok(())
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone)]
pub struct StepDiag {
    pub loss: f64,
    pub w_mass: f64,
    /// Pre-projection outer iterate left the feasible set this step.
    pub proj_a_active: bool,
    /// The parameter iterate was pulled back to the distance-one ball.
    pub proj_b_active: bool,
}

/// Training trace; `w_snapshots` is filled only when requested.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub steps: Vec<StepDiag>,
    pub w_snapshots: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Average of the outer-weight iterates w^(0) .. w^(steps-1).
    pub w_avg: Vec<f64>,
    /// Final parameters; `w` holds the last outer iterate.
    pub ens: EnsembleParams,
    pub trace: TrainTrace,
}

/// Draw each component's parameters iid uniform on [-B, B] coordinatewise,
/// zero the outer weights, and snapshot the initialization.
pub fn init_params(cfg: &CnnConfig, train: &TrainConfig, rng: &mut ChaCha12Rng) -> EnsembleParams {
    let per = cfg.param_count();
    let b = train.init_bound;
    let thetas: Vec<f64> = if b == 0.0 {
        vec![0.0; train.k * per]
    } else {
        (0..train.k * per).map(|_| rng.gen_range(-b..=b)).collect()
    };
    EnsembleParams {
        w: vec![0.0; train.k],
        theta0: thetas.clone(),
        thetas,
    }
}

/// Run the full training procedure.
pub fn sgd_train(
    data: &[LabeledSample],
    cfg: &CnnConfig,
    train: &TrainConfig,
    rng: &mut ChaCha12Rng,
) -> Result<TrainResult> {
    sgd_train_with_options(data, cfg, train, rng, false)
}

/// As `sgd_train`, optionally recording every outer-weight iterate.
pub fn sgd_train_with_options(
    data: &[LabeledSample],
    cfg: &CnnConfig,
    train: &TrainConfig,
    rng: &mut ChaCha12Rng,
    record_w_snapshots: bool,
) -> Result<TrainResult> {
    train.validate(cfg, data.len())?;
    cfg.validate_for_image(data[0].x.d1(), data[0].x.d2())?;
    let n = data.len();
    let mut ens = init_params(cfg, train, rng);
    let per = cfg.param_count();
    let mut w_sum = vec![0.0; train.k];
    let mut ws = GradWorkspace::default();
    let mut bundle = GradBundle {
        d_w: vec![0.0; train.k],
        d_theta: vec![0.0; train.k * per],
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut trace = TrainTrace::default();
    trace.steps.reserve(train.steps);

    for t in 0..train.steps {
        if t % n == 0 {
            perm.shuffle(rng);
        }
        let sample = &data[perm[t % n]];

        // averaging covers the iterates before each update, starting at w^(0)
        for (acc, &wv) in w_sum.iter_mut().zip(&ens.w) {
            *acc += wv;
        }
        if record_w_snapshots {
            trace.w_snapshots.push(ens.w.clone());
        }

        let f_val = grad_ensemble_into(cfg, &ens, &sample.x, sample.y, &mut ws, &mut bundle)?;
        let loss = logistic_loss(sample.y as f64 * f_val)?;

        for k in 0..train.k {
            ens.w[k] -= train.lambda * bundle.d_w[k];
        }
        let pre_mass: f64 = ens.w.iter().sum();
        let pre_sq: f64 = ens.w.iter().map(|v| v * v).sum();
        let pre_neg = ens.w.iter().any(|&v| v < 0.0);
        project_a_into(&mut ens.w, train.alpha)?;
        let proj_a_active = pre_neg || pre_mass > 1.0 || pre_sq > train.alpha;

        for (tv, &gv) in ens.thetas.iter_mut().zip(&bundle.d_theta) {
            *tv -= train.lambda * gv;
        }
        let pre_dist2: f64 = ens
            .thetas
            .iter()
            .zip(&ens.theta0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        project_b_into(&mut ens.thetas, &ens.theta0)?;
        let proj_b_active = pre_dist2 > 1.0;

        debug_assert!(ens.w.iter().all(|&v| v >= 0.0));
        debug_assert!(ens.w.iter().sum::<f64>() <= 1.0 + 1e-12);
        debug_assert!(ens.w.iter().map(|v| v * v).sum::<f64>() <= train.alpha + 1e-12);

        trace.steps.push(StepDiag {
            loss,
            w_mass: ens.w.iter().sum(),
            proj_a_active,
            proj_b_active,
        });
    }

    let w_avg: Vec<f64> = w_sum.iter().map(|v| v / train.steps as f64).collect();
    Ok(TrainResult { w_avg, ens, trace })
}

/// Sign classifier with sign(0) = +1.
pub fn classify(cfg: &CnnConfig, w_avg: &[f64], final_params: &EnsembleParams, x: &ImageGrid) -> Result<i8> {
    let ens = EnsembleParams {
        w: w_avg.to_vec(),
        thetas: final_params.thetas.clone(),
        theta0: final_params.theta0.clone(),
    };
    let v = crate::cnn::ensemble_eval(cfg, &ens, x)?;
    Ok(if v >= 0.0 { 1 } else { -1 })
}

/// Evaluator bundling the trained estimate; avoids recloning per image.
pub struct TrainedClassifier<'a> {
    pub cfg: &'a CnnConfig,
    pub ens: EnsembleParams,
}

impl<'a> TrainedClassifier<'a> {
    pub fn new(cfg: &'a CnnConfig, w_avg: &[f64], result: &TrainResult) -> Self {
        TrainedClassifier {
            cfg,
            ens: EnsembleParams {
                w: w_avg.to_vec(),
                thetas: result.ens.thetas.clone(),
                theta0: result.ens.theta0.clone(),
            },
        }
    }

    pub fn score(&self, x: &ImageGrid) -> Result<f64> {
        crate::cnn::ensemble_eval(self.cfg, &self.ens, x)
    }

    pub fn label(&self, x: &ImageGrid) -> Result<i8> {
        Ok(if self.score(x)? >= 0.0 { 1 } else { -1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn tiny_cfg() -> CnnConfig {
        CnnConfig {
            channels: vec![2],
            filter_sizes: vec![2],
            head_width: 2,
            beta: 2.0,
        }
    }

    fn tiny_data(n: usize, seed: u64) -> Vec<LabeledSample> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|i| LabeledSample {
                x: ImageGrid::random(3, 3, &mut rng),
                y: if i % 2 == 0 { 1 } else { -1 },
            })
            .collect()
    }

    fn tiny_train(n: usize) -> TrainConfig {
        TrainConfig {
            k: 3,
            n_blocks: None,
            block_size: None,
            steps: 2 * n,
            lambda: 0.05,
            alpha: 0.5,
            beta: 2.0,
            init_bound: 1.0,
            seed: 42,
        }
    }

    #[test]
    fn init_respects_bound_and_zero_edge() {
        let cfg = tiny_cfg();
        let mut train = tiny_train(4);
        let mut rng = rng_from_seed(1);
        let ens = init_params(&cfg, &train, &mut rng);
        assert!(ens.thetas.iter().all(|&v| v.abs() <= train.init_bound));
        assert!(ens.w.iter().all(|&v| v == 0.0));
        assert_eq!(ens.theta0, ens.thetas);

        train.init_bound = 0.0;
        let ens = init_params(&cfg, &train, &mut rng);
        assert!(ens.thetas.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = tiny_cfg();
        let train = tiny_train(4);
        let a = init_params(&cfg, &train, &mut rng_from_seed(42));
        let b = init_params(&cfg, &train, &mut rng_from_seed(42));
        assert_eq!(a.thetas, b.thetas);
    }

    #[test]
    fn zero_stepsize_freezes_everything() {
        let cfg = tiny_cfg();
        let data = tiny_data(4, 7);
        let mut train = tiny_train(4);
        train.steps = 4;
        train.lambda = 0.0;
        let mut rng = rng_from_seed(9);
        let init_check = init_params(&cfg, &train, &mut rng_from_seed(9));
        let res = sgd_train(&data, &cfg, &train, &mut rng).unwrap();
        assert!(res.w_avg.iter().all(|&v| v == 0.0));
        assert_eq!(res.ens.thetas, init_check.thetas);
    }

    #[test]
    fn single_step_average_is_initial_iterate() {
        let cfg = tiny_cfg();
        let data = tiny_data(1, 3);
        let mut train = tiny_train(1);
        train.k = 1;
        train.steps = 1;
        let mut rng = rng_from_seed(5);
        let res = sgd_train(&data, &cfg, &train, &mut rng).unwrap();
        assert_eq!(res.w_avg, vec![0.0]);
    }

    #[test]
    fn equal_seeds_give_bitwise_identical_results() {
        let cfg = tiny_cfg();
        let data = tiny_data(4, 11);
        let train = tiny_train(4);
        let a = sgd_train(&data, &cfg, &train, &mut rng_from_seed(42)).unwrap();
        let b = sgd_train(&data, &cfg, &train, &mut rng_from_seed(42)).unwrap();
        assert_eq!(a.w_avg, b.w_avg);
        assert_eq!(a.ens.thetas, b.ens.thetas);
    }

    #[test]
    fn divisibility_violation_is_rejected() {
        let cfg = tiny_cfg();
        let data = tiny_data(3, 1);
        let mut train = tiny_train(3);
        train.steps = 4;
        assert!(sgd_train(&data, &cfg, &train, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn iterates_stay_feasible_and_average_matches_snapshots() {
        let cfg = tiny_cfg();
        let data = tiny_data(4, 13);
        let mut train = tiny_train(4);
        train.lambda = 0.3; // push hard enough that projections engage
        let mut rng = rng_from_seed(21);
        let res = sgd_train_with_options(&data, &cfg, &train, &mut rng, true).unwrap();
        assert_eq!(res.trace.w_snapshots.len(), train.steps);
        let mut mean = vec![0.0; train.k];
        for snap in &res.trace.w_snapshots {
            assert!(snap.iter().all(|&v| v >= 0.0));
            assert!(snap.iter().sum::<f64>() <= 1.0 + 1e-12);
            assert!(snap.iter().map(|v| v * v).sum::<f64>() <= train.alpha + 1e-12);
            for (m, &v) in mean.iter_mut().zip(snap) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= train.steps as f64;
        }
        for (a, b) in mean.iter().zip(&res.w_avg) {
            assert!((a - b).abs() < 1e-15);
        }
        // final theta feasible
        let dist2: f64 = res
            .ens
            .thetas
            .iter()
            .zip(&res.ens.theta0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(dist2 <= 1.0 + 1e-12);
    }

    #[test]
    fn classify_sign_convention() {
        let cfg = tiny_cfg();
        let per = cfg.param_count();
        let layout = cfg.layout();
        let constant = |c: f64| {
            let mut d = vec![0.0; per];
            d[layout.head_offset()] = c;
            d
        };
        let x = ImageGrid::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        for (c, expect) in [(0.3, 1i8), (-0.3, -1), (0.0, 1)] {
            let ens = EnsembleParams {
                w: vec![1.0],
                thetas: constant(c),
                theta0: vec![0.0; per],
            };
            let got = classify(&cfg, &[1.0], &ens, &x).unwrap();
            assert_eq!(got, expect, "value {c}");
        }
    }

    #[test]
    fn zero_network_exists_in_init_domain() {
        // all head output weights zero forces f identically zero
        let cfg = tiny_cfg();
        let per = cfg.param_count();
        let layout = cfg.layout();
        let mut rng = rng_from_seed(33);
        let mut theta: Vec<f64> = (0..per).map(|_| rng.gen_range(-1.0..1.0)).collect();
        theta[layout.head_offset()] = 0.0;
        for u in 0..cfg.head_width {
            let (outer, _, _) = layout.head_unit(u);
            theta[outer] = 0.0;
        }
        let params = crate::cnn::CnnParams::from_vec(&cfg, theta).unwrap();
        for _ in 0..100 {
            let x = ImageGrid::random(3, 3, &mut rng);
            let t = crate::cnn::cnn_forward(&cfg, &params, &x).unwrap();
            assert_eq!(t.value, 0.0);
        }
    }
}
