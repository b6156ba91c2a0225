//! Experiment configuration: one TOML document drives every command.

use opcnn_core::cnn::CnnConfig;
use opcnn_core::hierarchy::{HierarchicalModel, Node, NodeKind};
use opcnn_core::schedule::{scaled_architecture, ScheduleConstants};
use opcnn_core::synthetic::PixelLaw;
use opcnn_core::train::TrainConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub generator: GeneratorSection,
    pub architecture: ArchitectureSection,
    pub train: TrainSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub d1: usize,
    pub d2: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_pixel_law")]
    pub pixel_law: String,
    #[serde(default = "default_coarse")]
    pub coarse: usize,
    pub model: ModelSection,
}

fn default_pixel_law() -> String {
    "iid-uniform".into()
}

fn default_coarse() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub level: usize,
    pub node: String,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda_node")]
    pub lambda: f64,
    #[serde(default = "default_z0")]
    pub z0: [f64; 4],
}

fn default_gamma() -> f64 {
    4.0
}

fn default_lambda_node() -> f64 {
    1.0
}

fn default_z0() -> [f64; 4] {
    [1.0, 1.0, 1.0, 1.0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSection {
    /// "schedule" derives the architecture from n; "explicit" reads it
    /// verbatim from this section.
    pub mode: String,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_level")]
    pub level: usize,
    #[serde(default = "default_c3")]
    pub c3: f64,
    #[serde(default = "default_c5")]
    pub c5: f64,
    #[serde(default = "default_c6")]
    pub c6: f64,
    #[serde(default = "default_c7")]
    pub c7: usize,
    #[serde(default)]
    pub channels: Vec<usize>,
    #[serde(default)]
    pub filters: Vec<usize>,
    #[serde(default)]
    pub head_width: usize,
    #[serde(default)]
    pub beta: f64,
}

fn default_p() -> f64 {
    2.0
}
fn default_level() -> usize {
    1
}
fn default_c3() -> f64 {
    1.0
}
fn default_c5() -> f64 {
    1.0
}
fn default_c6() -> f64 {
    1.0
}
fn default_c7() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_k")]
    pub k: usize,
    /// Total steps are `steps_per_sample * n`.
    #[serde(default = "default_steps_per_sample")]
    pub steps_per_sample: usize,
    /// Absent: a schedule in the total step count t (see `lambda_mode`).
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Multiplier on the stepsize schedule when `lambda` is absent.
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    /// "inverse-t" (the analysis schedule) or "inverse-sqrt-t".
    #[serde(default = "default_lambda_mode")]
    pub lambda_mode: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_init_bound")]
    pub init_bound: f64,
    pub seed: u64,
}

fn default_k() -> usize {
    64
}
fn default_steps_per_sample() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.125
}
fn default_lambda_scale() -> f64 {
    1.0
}
fn default_lambda_mode() -> String {
    "inverse-t".into()
}
fn default_init_bound() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    #[serde(default = "default_mc_trials")]
    pub mc_trials: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_test_n() -> usize {
    400
}
fn default_mc_trials() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub n_values: Vec<usize>,
    #[serde(default = "default_sweep_seeds")]
    pub seeds: usize,
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    /// Refuse architectures whose parameter count exceeds this cap.
    #[serde(default = "default_param_cap")]
    pub param_cap: usize,
}

fn default_sweep_seeds() -> usize {
    10
}
fn default_param_cap() -> usize {
    2_000_000
}

impl ModelSection {
    pub fn build(&self) -> Result<HierarchicalModel, String> {
        let kind = match self.node.as_str() {
            "mean" => NodeKind::Mean,
            "smooth-max" => NodeKind::SmoothMax { gamma: self.gamma },
            "product" => NodeKind::Product,
            "bump-detector" => NodeKind::BumpDetector {
                lambda: self.lambda,
                z0: self.z0,
            },
            other => return Err(format!("unknown node kind '{other}'")),
        };
        Ok(HierarchicalModel::uniform(self.level, Node::new(kind)))
    }

    pub fn descriptor(&self) -> String {
        format!("{}-l{}", self.node, self.level)
    }
}

impl GeneratorSection {
    pub fn pixel_law(&self) -> Result<PixelLaw, String> {
        match self.pixel_law.as_str() {
            "iid-uniform" => Ok(PixelLaw::IidUniform),
            "blockwise-smooth" => Ok(PixelLaw::BlockwiseSmooth { coarse: self.coarse }),
            other => Err(format!("unknown pixel law '{other}'")),
        }
    }
}

impl ArchitectureSection {
    pub fn schedule_constants(&self) -> ScheduleConstants {
        ScheduleConstants {
            c3: self.c3,
            c5: self.c5,
            c6: self.c6,
            c7: self.c7,
        }
    }

    /// The architecture for a given sample size.
    pub fn build(&self, n: usize) -> Result<CnnConfig, String> {
        match self.mode.as_str() {
            "schedule" => Ok(scaled_architecture(
                n,
                self.p,
                self.level,
                &self.schedule_constants(),
            )),
            "explicit" => {
                if self.channels.is_empty() || self.channels.len() != self.filters.len() {
                    return Err("explicit mode needs matching channels/filters".into());
                }
                Ok(CnnConfig {
                    channels: self.channels.clone(),
                    filter_sizes: self.filters.clone(),
                    head_width: self.head_width.max(1),
                    beta: self.beta,
                })
            }
            other => Err(format!("unknown architecture mode '{other}'")),
        }
    }
}

impl TrainSection {
    pub fn build(&self, n: usize, beta: f64, seed: u64) -> TrainConfig {
        let steps = self.steps_per_sample * n;
        let lambda = self.lambda.unwrap_or_else(|| match self.lambda_mode.as_str() {
            "inverse-sqrt-t" => self.lambda_scale / (steps as f64).sqrt(),
            _ => self.lambda_scale / steps as f64,
        });
        TrainConfig {
            k: self.k,
            n_blocks: None,
            block_size: None,
            steps,
            lambda,
            alpha: self.alpha,
            beta,
            init_bound: self.init_bound,
            seed,
        }
    }
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec, String> {
    toml::from_str(text).map_err(|e| format!("config parse error: {e}"))
}
