//! The `bounds` command: formula values with empirical counterparts for the
//! configured architecture, written as CSV bound reports.

use crate::config::ExperimentSpec;
use crate::manifest::write_manifest;
use crate::runner::Result;
use opcnn_core::bounds::{
    empirical_lipschitz, grad_sup_bound, lipschitz_bound, lipschitz_bound_log, rademacher_mc,
    vc_structural_bound, BoundReport,
};
use opcnn_core::cnn::{CnnParams, EnsembleParams};
use opcnn_core::grad::grad_ensemble;
use opcnn_core::grid::ImageGrid;
use opcnn_core::rng::rng_from_seed;
use rand::Rng;
use std::fs;
use std::path::Path;

pub fn run_bounds(spec: &ExperimentSpec, config_text: &str, out: &Path, seed_override: Option<u64>) -> Result<()> {
    fs::create_dir_all(out)?;
    let seed = seed_override.unwrap_or(spec.train.seed);
    let cnn = spec.architecture.build(spec.generator.n)?;
    let b = spec.train.init_bound.max(1.0);
    let mut rng = rng_from_seed(seed);
    let per = cnn.param_count();

    // empirical parameter-Lipschitz ratio over random pairs
    let mut worst_ratio = 0.0f64;
    for _ in 0..20 {
        let mut theta = CnnParams::zeros(&cnn);
        for v in theta.data.iter_mut() {
            *v = rng.gen_range(-b..b);
        }
        let mut bar = theta.clone();
        for v in bar.data.iter_mut() {
            *v = (*v + rng.gen_range(-0.3..0.3)).clamp(-b, b);
        }
        let images: Vec<ImageGrid> = (0..6)
            .map(|_| ImageGrid::random(spec.generator.d1, spec.generator.d2, &mut rng))
            .collect();
        worst_ratio = worst_ratio.max(empirical_lipschitz(&cnn, &theta, &bar, &images)?);
    }

    // empirical gradient sup over random ensembles
    let mut worst_grad = 0.0f64;
    for _ in 0..20 {
        let k_count = 2usize;
        let mut w: Vec<f64> = (0..k_count).map(|_| rng.gen_range(0.0..0.5)).collect();
        let mass: f64 = w.iter().sum();
        if mass > 1.0 {
            for v in w.iter_mut() {
                *v /= mass;
            }
        }
        let thetas: Vec<f64> = (0..k_count * per).map(|_| rng.gen_range(-b..b)).collect();
        let ens = EnsembleParams {
            w,
            theta0: thetas.clone(),
            thetas,
        };
        let x = ImageGrid::random(spec.generator.d1, spec.generator.d2, &mut rng);
        let y = if rng.gen::<bool>() { 1 } else { -1 };
        let g = grad_ensemble(&cnn, &ens, &x, y)?;
        worst_grad = worst_grad.max(g.d_theta.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    // small Monte-Carlo estimate of the truncated-class Rademacher term
    let images: Vec<ImageGrid> = (0..32)
        .map(|_| ImageGrid::random(spec.generator.d1, spec.generator.d2, &mut rng))
        .collect();
    let rad = rademacher_mc(&cnn, b, &images, cnn.beta, 4, 3, seed ^ 0x7ada)?;

    let (vc, _unspecified_constant) = vc_structural_bound(
        cnn.conv_layers().max(2),
        cnn.head_width.max(2),
    );
    let reports = vec![
        BoundReport {
            name: "parameter-lipschitz".into(),
            formula_value: lipschitz_bound(&cnn, b),
            empirical_value: Some(worst_ratio),
        },
        BoundReport {
            name: "parameter-lipschitz-log".into(),
            formula_value: lipschitz_bound_log(&cnn, b),
            empirical_value: None,
        },
        BoundReport {
            name: "gradient-sup".into(),
            formula_value: grad_sup_bound(&cnn, b),
            empirical_value: Some(worst_grad),
        },
        BoundReport {
            name: "vc-structural-constant-unspecified".into(),
            formula_value: vc,
            empirical_value: None,
        },
        BoundReport {
            name: "rademacher-cap".into(),
            formula_value: cnn.beta,
            empirical_value: Some(rad),
        },
    ];
    let mut csv = String::from("name,formula_value,empirical_value,margin\n");
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
        if let Some(m) = r.margin() {
            if m < 0.0 {
                return Err(format!("bound '{}' violated: margin {m}", r.name).into());
            }
        }
        println!(
            "{}: formula {:.6e}{}",
            r.name,
            r.formula_value,
            match r.empirical_value {
                Some(e) => format!(", empirical {e:.6e}"),
                None => String::new(),
            }
        );
    }
    fs::write(out.join("bounds.csv"), csv)?;
    write_manifest(out, config_text, &[("bounds-seed", seed)])?;
    Ok(())
}
