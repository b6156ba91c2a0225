//! Labeled synthetic image data whose a-posteriori class-1 probability is a
//! hierarchical max-pooling model, plus Bayes references, exact excess-risk
//! evaluation and surrogate-risk comparisons.

use crate::error::{CoreError, Result};
use crate::grid::ImageGrid;
use crate::hierarchy::{eval_maxpool_model, HierarchicalModel};
use crate::loss::logistic_loss;
use crate::rng::substream;
use rand::Rng;

/// Cap used in place of +/- infinity for the optimal logit where eta hits
/// 0 or 1; the clamped risk contribution is below every test tolerance.
pub const LOGIT_CAP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: ImageGrid,
    pub y: i8,
}

/// Marginal distribution of the pixels.
#[derive(Debug, Clone, PartialEq)]
pub enum PixelLaw {
    /// iid Uniform[0,1] pixels.
    IidUniform,
    /// Bilinear interpolation of a coarse random grid; produces spatially
    /// smooth images.
    BlockwiseSmooth { coarse: usize },
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub d1: usize,
    pub d2: usize,
    pub model: HierarchicalModel,
    pub pixel_law: PixelLaw,
    pub n: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CoreError::Config("sample count must be >= 1".into()));
        }
        if self.model.window_side() > self.d1.min(self.d2) {
            return Err(CoreError::Config(format!(
                "model window {} exceeds image {}x{}",
                self.model.window_side(),
                self.d1,
                self.d2
            )));
        }
        if let PixelLaw::BlockwiseSmooth { coarse } = self.pixel_law {
            if coarse < 2 {
                return Err(CoreError::Config("coarse grid must be >= 2".into()));
            }
        }
        Ok(())
    }
}

/// Draw one image from the pixel law.
pub fn sample_image(law: &PixelLaw, d1: usize, d2: usize, rng: &mut impl Rng) -> ImageGrid {
    match law {
        PixelLaw::IidUniform => ImageGrid::random(d1, d2, rng),
        PixelLaw::BlockwiseSmooth { coarse } => {
            let c = *coarse;
            let grid: Vec<f64> = (0..c * c).map(|_| rng.gen::<f64>()).collect();
            ImageGrid::from_fn(d1, d2, |i, j| {
                let u = if d1 == 1 { 0.0 } else { (i - 1) as f64 / (d1 - 1) as f64 } * (c - 1) as f64;
                let v = if d2 == 1 { 0.0 } else { (j - 1) as f64 / (d2 - 1) as f64 } * (c - 1) as f64;
                let (iu, iv) = (u.floor().min((c - 2) as f64), v.floor().min((c - 2) as f64));
                let (fu, fv) = (u - iu, v - iv);
                let (a, b) = (iu as usize, iv as usize);
                let g = |r: usize, s: usize| grid[r * c + s];
                g(a, b) * (1.0 - fu) * (1.0 - fv)
                    + g(a + 1, b) * fu * (1.0 - fv)
                    + g(a, b + 1) * (1.0 - fu) * fv
                    + g(a + 1, b + 1) * fu * fv
            })
            .expect("interpolated pixels stay in [0,1]")
        }
    }
}

/// The a-posteriori probability of class 1.
pub fn posterior(model: &HierarchicalModel, x: &ImageGrid) -> Result<f64> {
    eval_maxpool_model(model, x)
}

/// Draw n labeled samples: X from the pixel law, Y = +1 with probability
/// eta(X). Deterministic per seed; each sample uses its own substream so the
/// set does not depend on evaluation order.
pub fn sample_dataset(gen: &GeneratorConfig) -> Result<Vec<LabeledSample>> {
    gen.validate()?;
    let mut out = Vec::with_capacity(gen.n);
    for idx in 0..gen.n {
        let mut rng = substream(gen.seed, &[0x5a11, idx as u64]);
        let x = sample_image(&gen.pixel_law, gen.d1, gen.d2, &mut rng);
        let eta = posterior(&gen.model, &x)?;
        let y = if rng.gen::<f64>() < eta { 1 } else { -1 };
        out.push(LabeledSample { x, y });
    }
    Ok(out)
}

/// Bayes classifier: +1 iff eta(x) >= 1/2 (inclusive threshold).
pub fn bayes_decide(model: &HierarchicalModel, x: &ImageGrid) -> Result<i8> {
    Ok(if posterior(model, x)? >= 0.5 { 1 } else { -1 })
}

/// Misclassification regret of a classifier against the Bayes rule.
#[derive(Debug, Clone, Copy)]
pub struct RegretEstimate {
    /// (1/m) sum_x |2 eta(x) - 1| 1{classifier(x) != bayes(x)}: the exact
    /// conditional excess risk given the test points.
    pub exact: f64,
    /// Plain Monte-Carlo estimate from sampled labels.
    pub monte_carlo: f64,
}

/// Exact-eta excess misclassification risk over a test set, with a naive
/// label-sampling estimate alongside (`mc_trials` label draws per point).
pub fn empirical_regret<C>(
    mut classifier: C,
    model: &HierarchicalModel,
    test_x: &[ImageGrid],
    mc_trials: usize,
    mc_seed: u64,
) -> Result<RegretEstimate>
where
    C: FnMut(&ImageGrid) -> Result<i8>,
{
    if test_x.is_empty() {
        return Err(CoreError::Config("empty test set".into()));
    }
    let mut exact = 0.0;
    let mut mc_gap = 0.0;
    for (idx, x) in test_x.iter().enumerate() {
        let eta = posterior(model, x)?;
        let bayes = if eta >= 0.5 { 1i8 } else { -1 };
        let label = classifier(x)?;
        if label != bayes {
            exact += (2.0 * eta - 1.0).abs();
        }
        if mc_trials > 0 {
            let mut rng = substream(mc_seed, &[0x4c6b, idx as u64]);
            for _ in 0..mc_trials {
                let y: i8 = if rng.gen::<f64>() < eta { 1 } else { -1 };
                if label != y {
                    mc_gap += 1.0;
                }
                if bayes != y {
                    mc_gap -= 1.0;
                }
            }
        }
    }
    let m = test_x.len() as f64;
    Ok(RegretEstimate {
        exact: exact / m,
        monte_carlo: if mc_trials > 0 {
            mc_gap / (m * mc_trials as f64)
        } else {
            0.0
        },
    })
}

/// Monte-Carlo probability that max(eta/(1-eta), (1-eta)/eta) > n^{1/4};
/// eta in {0,1} counts as satisfying the condition.
pub fn margin_condition_mc(
    model: &HierarchicalModel,
    n: f64,
    trials: usize,
    law: &PixelLaw,
    d1: usize,
    d2: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(CoreError::Config("trials must be >= 1".into()));
    }
    let threshold = n.powf(0.25);
    let mut hits = 0usize;
    for t in 0..trials {
        let mut rng = substream(seed, &[0x3a66, t as u64]);
        let x = sample_image(law, d1, d2, &mut rng);
        let eta = posterior(model, &x)?;
        let ratio = if eta <= 0.0 || eta >= 1.0 {
            f64::INFINITY
        } else {
            (eta / (1.0 - eta)).max((1.0 - eta) / eta)
        };
        if ratio > threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Both sides of the surrogate comparison: excess misclassification risk of
/// sign(f) on the left, sqrt(2) * sqrt(excess logistic risk of f) on the
/// right, evaluated pointwise with the known eta.
///
/// The comparison constant comes from the modulus of the logistic loss:
/// log 2 - entropy(eta) >= 2 (eta - 1/2)^2, which is tight as eta -> 1/2,
/// so sqrt(2) is the smallest admissible factor (a point mass at eta = 0.8
/// with f -> 0- already exceeds any smaller one).
pub fn surrogate_gap_check<F>(
    mut score: F,
    model: &HierarchicalModel,
    test_x: &[ImageGrid],
) -> Result<(f64, f64)>
where
    F: FnMut(&ImageGrid) -> f64,
{
    if test_x.is_empty() {
        return Err(CoreError::Config("empty test set".into()));
    }
    let mut excess_misclass = 0.0;
    let mut excess_logistic = 0.0;
    for x in test_x {
        let eta = posterior(model, x)?;
        let f = score(x);
        let bayes = if eta >= 0.5 { 1.0 } else { -1.0 };
        let label = if f >= 0.0 { 1.0 } else { -1.0 };
        if label != bayes {
            excess_misclass += (2.0 * eta - 1.0).abs();
        }
        let opt_logit = if eta <= 0.0 {
            -LOGIT_CAP
        } else if eta >= 1.0 {
            LOGIT_CAP
        } else {
            (eta / (1.0 - eta)).ln().clamp(-LOGIT_CAP, LOGIT_CAP)
        };
        let risk = |g: f64| -> Result<f64> {
            Ok(eta * logistic_loss(g)? + (1.0 - eta) * logistic_loss(-g)?)
        };
        excess_logistic += risk(f)? - risk(opt_logit)?;
    }
    let m = test_x.len() as f64;
    let lhs = excess_misclass / m;
    let rhs = 2.0f64.sqrt() * (excess_logistic.max(0.0) / m).sqrt();
    Ok((lhs, rhs))
}
