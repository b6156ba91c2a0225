//! Command implementations: dataset generation, training, evaluation and
//! the rate sweep, all writing deterministic artifacts.

use crate::config::ExperimentSpec;
use crate::manifest::write_manifest;
use opcnn_core::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use opcnn_core::cnn::EnsembleParams;
use opcnn_core::dataset::{read_dataset, write_dataset, DatasetHeader};
use opcnn_core::rng::substream;
use opcnn_core::synthetic::{empirical_regret, sample_image, GeneratorConfig, LabeledSample};
use opcnn_core::train::{sgd_train, TrainedClassifier};
use opcnn_core::ImageGrid;
use rayon::prelude::*;
use std::fs;
use std::path::Path;
use std::time::Instant;

pub type AnyError = Box<dyn std::error::Error + Send + Sync>;
pub type Result<T> = std::result::Result<T, AnyError>;

fn generator_config(spec: &ExperimentSpec, seed: u64, n: usize) -> Result<GeneratorConfig> {
    Ok(GeneratorConfig {
        d1: spec.generator.d1,
        d2: spec.generator.d2,
        model: spec.generator.model.build()?,
        pixel_law: spec.generator.pixel_law()?,
        n,
        seed,
    })
}

/// `generate`: sample the configured dataset and write it with a manifest.
pub fn run_generate(spec: &ExperimentSpec, config_text: &str, out: &Path, seed_override: Option<u64>) -> Result<()> {
    fs::create_dir_all(out)?;
    let seed = seed_override.unwrap_or(spec.generator.seed);
    let gen = generator_config(spec, seed, spec.generator.n)?;
    let data = opcnn_core::synthetic::sample_dataset(&gen)?;
    let header = DatasetHeader {
        d1: gen.d1,
        d2: gen.d2,
        n: gen.n,
        seed,
        model_descriptor: spec.generator.model.descriptor(),
    };
    let mut file = fs::File::create(out.join("dataset.csv"))?;
    write_dataset(&mut file, &header, &data)?;
    write_manifest(out, config_text, &[("generate-seed", seed)])?;
    println!("wrote {} samples to {}", gen.n, out.join("dataset.csv").display());
    Ok(())
}

/// `train`: read the dataset (or sample it), run projected SGD, write the
/// checkpoint and the per-step trace.
pub fn run_train(spec: &ExperimentSpec, config_text: &str, out: &Path, seed_override: Option<u64>) -> Result<()> {
    fs::create_dir_all(out)?;
    let dataset_path = out.join("dataset.csv");
    let data: Vec<LabeledSample> = if dataset_path.exists() {
        let mut f = fs::File::open(&dataset_path)?;
        let (_, samples) = read_dataset(&mut f)?;
        samples
    } else {
        let gen = generator_config(spec, spec.generator.seed, spec.generator.n)?;
        opcnn_core::synthetic::sample_dataset(&gen)?
    };
    let n = data.len();
    let cnn = spec.architecture.build(n)?;
    let seed = seed_override.unwrap_or(spec.train.seed);
    let train = spec.train.build(n, cnn.beta, seed);
    let mut rng = opcnn_core::rng::rng_from_seed(seed);
    let start = Instant::now();
    let result = sgd_train(&data, &cnn, &train, &mut rng)?;
    let elapsed = start.elapsed();

    let (rng_seed, rng_word_pos, rng_stream) = Checkpoint::capture_rng(&rng);
    let ck = Checkpoint {
        cnn,
        train,
        w_avg: result.w_avg.clone(),
        ens: result.ens.clone(),
        rng_seed,
        rng_word_pos,
        rng_stream,
    };
    let mut file = fs::File::create(out.join("checkpoint.txt"))?;
    write_checkpoint(&mut file, &ck)?;

    let mut trace = String::from("step,loss,w_mass,proj_a_active,proj_b_active\n");
    for (t, s) in result.trace.steps.iter().enumerate() {
        trace.push_str(&format!(
            "{},{:.17e},{:.17e},{},{}\n",
            t, s.loss, s.w_mass, s.proj_a_active as u8, s.proj_b_active as u8
        ));
    }
    fs::write(out.join("train_trace.csv"), trace)?;
    write_manifest(out, config_text, &[("train-seed", seed)])?;
    println!(
        "trained {} steps in {:.1}s; checkpoint at {}",
        result.trace.steps.len(),
        elapsed.as_secs_f64(),
        out.join("checkpoint.txt").display()
    );
    Ok(())
}

/// `evaluate`: load the checkpoint, draw a fresh test set, report the
/// misclassification rate and both regret estimates.
pub fn run_evaluate(spec: &ExperimentSpec, config_text: &str, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut f = fs::File::open(out.join("checkpoint.txt"))?;
    let ck = read_checkpoint(&mut f)?;
    let eval_seed = seed_override.unwrap_or(spec.evaluate.seed);
    let model = spec.generator.model.build()?;
    let law = spec.generator.pixel_law()?;
    let test_x: Vec<ImageGrid> = (0..spec.evaluate.test_n)
        .map(|i| {
            let mut rng = substream(eval_seed, &[0xe7a1, i as u64]);
            sample_image(&law, spec.generator.d1, spec.generator.d2, &mut rng)
        })
        .collect();
    let ens = EnsembleParams {
        w: ck.w_avg.clone(),
        thetas: ck.ens.thetas.clone(),
        theta0: ck.ens.theta0.clone(),
    };
    let cnn = ck.cnn.clone();
    let regret = empirical_regret(
        |x| {
            let v = opcnn_core::ensemble_eval(&cnn, &ens, x)?;
            Ok(if v >= 0.0 { 1 } else { -1 })
        },
        &model,
        &test_x,
        spec.evaluate.mc_trials,
        eval_seed ^ 0x5eed,
    )?;
    // misclassification rate against sampled labels
    let mut errs = 0usize;
    for (i, x) in test_x.iter().enumerate() {
        let mut rng = substream(eval_seed, &[0x1abe1, i as u64]);
        let eta = opcnn_core::synthetic::posterior(&model, x)?;
        let y: i8 = if rng.gen_bool(eta.clamp(0.0, 1.0)) { 1 } else { -1 };
        let v = opcnn_core::ensemble_eval(&cnn, &ens, x)?;
        if (if v >= 0.0 { 1 } else { -1 }) != y {
            errs += 1;
        }
    }
    let rows = format!(
        "test_n,error_rate,exact_regret,mc_regret\n{},{:.17e},{:.17e},{:.17e}\n",
        test_x.len(),
        errs as f64 / test_x.len() as f64,
        regret.exact,
        regret.monte_carlo
    );
    fs::write(out.join("eval.csv"), rows)?;
    write_manifest(out, config_text, &[("evaluate-seed", eval_seed)])?;
    println!(
        "exact regret {:.5}, mc regret {:.5}",
        regret.exact, regret.monte_carlo
    );
    Ok(())
}

/// One sweep cell result.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n: usize,
    pub seed: usize,
    pub regret: f64,
    pub mc_regret: f64,
    pub train_loss: f64,
    pub wallclock_ms: u128,
}

/// Run the full rate sweep; cells are independent and execute in a worker
/// pool, merged in (n, seed) order.
pub fn rate_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    let n_values = &spec.sweep.n_values;
    if n_values.is_empty() {
        return Err("sweep.n_values is empty".into());
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err("sweep.n_values must be strictly increasing".into());
    }
    // refuse infeasible architectures up front
    for &n in n_values {
        let cnn = spec.architecture.build(n)?;
        let params = cnn.param_count() * spec.train.k;
        if params > spec.sweep.param_cap {
            return Err(format!(
                "architecture for n = {n} needs {params} parameters, above the cap {}",
                spec.sweep.param_cap
            )
            .into());
        }
    }
    let cells: Vec<(usize, usize)> = n_values
        .iter()
        .flat_map(|&n| (0..spec.sweep.seeds).map(move |s| (n, s)))
        .collect();
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(n, rep)| sweep_cell(spec, n, rep))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.n, r.seed));
    Ok(rows)
}

fn sweep_cell(spec: &ExperimentSpec, n: usize, rep: usize) -> Result<SweepRow> {
    let start = Instant::now();
    // common random numbers across the n grid: one replication shares its
    // data stream (datasets are nested in n), its initialization and its
    // test points at every n, so the trend isolates the sample-size effect
    let data_seed = splitmix_pair(spec.generator.seed, 0, rep as u64);
    let gen = generator_config(spec, data_seed, n)?;
    let data = opcnn_core::synthetic::sample_dataset(&gen)?;
    let cnn = spec.architecture.build(n)?;
    let train_seed = splitmix_pair(spec.train.seed, 0, rep as u64);
    let train = spec.train.build(n, cnn.beta, train_seed);
    let mut rng = opcnn_core::rng::rng_from_seed(train_seed);
    let result = sgd_train(&data, &cnn, &train, &mut rng)?;

    // mean loss over the final pass
    let steps = result.trace.steps.len();
    let last_pass = &result.trace.steps[steps - n.min(steps)..];
    let train_loss = last_pass.iter().map(|s| s.loss).sum::<f64>() / last_pass.len() as f64;

    let model = spec.generator.model.build()?;
    let law = spec.generator.pixel_law()?;
    let test_seed = splitmix_pair(spec.generator.seed ^ 0x7e57, 0, rep as u64);
    let test_x: Vec<ImageGrid> = (0..spec.sweep.test_n)
        .map(|i| {
            let mut r = substream(test_seed, &[i as u64]);
            sample_image(&law, spec.generator.d1, spec.generator.d2, &mut r)
        })
        .collect();
    let classifier = TrainedClassifier::new(&cnn, &result.w_avg, &result);
    let regret = empirical_regret(
        |x| classifier.label(x),
        &model,
        &test_x,
        4,
        test_seed ^ 0xa1,
    )?;
    Ok(SweepRow {
        n,
        seed: rep,
        regret: regret.exact,
        mc_regret: regret.monte_carlo,
        train_loss,
        wallclock_ms: start.elapsed().as_millis(),
    })
}

fn splitmix_pair(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic CSV of the sweep (timing excluded; it goes to a sidecar).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n,seed,empirical_regret,mc_regret,train_loss\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e},{:.17e}\n",
            r.n, r.seed, r.regret, r.mc_regret, r.train_loss
        ));
    }
    out
}

/// Median regret per n plus the fitted log-log слope.
pub fn sweep_summary(rows: &[SweepRow]) -> (Vec<(usize, f64)>, f64) {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut medians = Vec::new();
    for &n in &ns {
        let mut vals: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.regret).collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        let m = if vals.len() % 2 == 1 {
            vals[vals.len() / 2]
        } else {
            0.5 * (vals[vals.len() / 2 - 1] + vals[vals.len() / 2])
        };
        medians.push((n, m));
    }
    // least-squares slope of log median vs log n (regret floored away from 0)
    let pts: Vec<(f64, f64)> = medians
        .iter()
        .map(|&(n, m)| ((n as f64).ln(), m.max(1e-6).ln()))
        .collect();
    let mean_x: f64 = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let mean_y: f64 = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (medians, slope)
}

/// `rate-sweep`: run and write the CSV artifacts.
pub fn run_rate_sweep(spec: &ExperimentSpec, config_text: &str, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let rows = rate_sweep(spec)?;
    fs::write(out.join("sweep.csv"), sweep_csv(&rows))?;
    let mut timing = String::from("n,seed,wallclock_ms\n");
    for r in &rows {
        timing.push_str(&format!("{},{},{}\n", r.n, r.seed, r.wallclock_ms));
    }
    fs::write(out.join("sweep_timing.csv"), timing)?;
    let (medians, slope) = sweep_summary(&rows);
    let mut summary = String::from("n,median_regret\n");
    for (n, m) in &medians {
        summary.push_str(&format!("{},{:.17e}\n", n, m));
    }
    summary.push_str(&format!("slope,{:.17e}\n", slope));
    fs::write(out.join("sweep_summary.csv"), summary)?;
    write_manifest(
        out,
        config_text,
        &[
            ("generator-seed", spec.generator.seed),
            ("train-seed", spec.train.seed),
        ],
    )?;
    for (n, m) in &medians {
        println!("n = {n}: median exact regret {m:.5}");
    }
    println!("log-log slope: {slope:.4}");
    Ok(())
}

use rand::Rng;
