//! Named verification suites aggregating the numeric invariants of the
//! library modules. Each check records its tolerance and measured value;
//! the process exits nonzero if any check fails.

use opcnn_core::bounds::{empirical_lipschitz, grad_sup_bound, lipschitz_bound};
use opcnn_core::cnn::{cnn_forward, CnnConfig, CnnParams, EnsembleParams};
use opcnn_core::gadgets::{
    build_indicator_net, build_mult_net, build_square_net, build_test_net, build_trunc_net,
    indicator_weight_bound, mult_error_bound, square_error_bound, square_weight_bound,
    trunc_weight_bound,
};
use opcnn_core::grad::{finite_diff_grad, grad_ensemble};
use opcnn_core::grid::ImageGrid;
use opcnn_core::loss::logistic_loss;
use opcnn_core::project::{project_a, project_a_exact_oracle, project_a_grid_oracle, project_b};
use opcnn_core::rng::{rng_from_seed, substream};
use opcnn_core::sgd_bound::{averaged_iterate_check, random_family};
use opcnn_core::taylor::{build_taylor_net, TaylorBuild, TaylorConfig};
use rand::Rng;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    pub measured: f64,
    pub pass: bool,
}

impl Check {
    fn leq(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            tolerance,
            measured,
            pass: measured <= tolerance,
        }
    }

    fn is_true(name: impl Into<String>, ok: bool) -> Self {
        Check {
            name: name.into(),
            tolerance: 0.0,
            measured: if ok { 0.0 } else { 1.0 },
            pass: ok,
        }
    }
}

pub fn run_suite(name: &str) -> Result<Vec<Check>, String> {
    match name {
        "gadgets" => Ok(gadget_suite()),
        "gradients" => Ok(gradient_suite()),
        "projections" => Ok(projection_suite()),
        "bounds" => Ok(bounds_suite()),
        "lemma1" => Ok(averaged_iterate_suite()),
        "taylor" => Ok(taylor_suite()),
        other => Err(format!(
            "unknown suite '{other}' (expected gadgets|gradients|projections|bounds|lemma1|taylor)"
        )),
    }
}

pub fn print_report(suite: &str, checks: &[Check]) -> bool {
    let mut all = true;
    for c in checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {suite}/{}: measured {:.6e} (tolerance {:.6e})",
            c.name, c.measured, c.tolerance
        );
        all &= c.pass;
    }
    all
}

// ---------------------------------------------------------------- gadgets

pub fn gadget_suite() -> Vec<Check> {
    let mut checks = Vec::new();
    let mut rng = rng_from_seed(0x9ad9e75);
    for r in 2..=8usize {
        for a in [1.0f64, 2.0] {
            let sq = build_square_net(r, a).unwrap();
            let mut worst = 0.0f64;
            for k in 0..=10_000 {
                let x = -a + 2.0 * a * k as f64 / 10_000.0;
                worst = worst.max((sq.eval(&[x]).unwrap() - x * x).abs());
            }
            checks.push(Check::leq(
                format!("square-error-R{r}-a{a}"),
                worst,
                square_error_bound(r, a),
            ));
            checks.push(Check::leq(
                format!("square-weights-R{r}-a{a}"),
                sq.weight_stats().sup_norm,
                square_weight_bound(a),
            ));

            let mult = build_mult_net(r, a).unwrap();
            let mut worst = 0.0f64;
            for _ in 0..10_000 {
                let x = rng.gen_range(-a..a);
                let y = rng.gen_range(-a..a);
                worst = worst.max((mult.eval(&[x, y]).unwrap() - x * y).abs());
            }
            checks.push(Check::leq(
                format!("mult-error-R{r}-a{a}"),
                worst,
                mult_error_bound(r, a),
            ));
            checks.push(Check::leq(
                format!("mult-weights-R{r}-a{a}"),
                mult.weight_stats().sup_norm,
                4.0 * a * a,
            ));
            checks.push(Check::is_true(
                format!("mult-zero-offset-R{r}-a{a}"),
                mult.weight_stats().output_offset == 0.0,
            ));
        }
        // box gadgets at this sharpness
        let rr = 2.0 + r as f64; // R parameter of the box gadgets
        let lo = vec![0.0, 0.1];
        let hi = vec![1.0, 0.9];
        let ind = build_indicator_net(&lo, &hi, rr).unwrap();
        let gate = 1.5f64.min(rr);
        let test = build_test_net(&lo, &hi, gate, rr).unwrap();
        let mut ind_exact = 0.0f64;
        let mut ind_dev = 0.0f64;
        let mut test_exact = 0.0f64;
        let mut test_dev = 0.0f64;
        for _ in 0..4000 {
            let x = vec![rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5)];
            let inside = (lo[0]..hi[0]).contains(&x[0]) && (lo[1]..hi[1]).contains(&x[1]);
            let fringe = x
                .iter()
                .zip(lo.iter().zip(&hi))
                .any(|(v, (l, h))| (v - l).abs() < 1.0 / rr || (v - h).abs() < 1.0 / rr);
            let vi = ind.eval(&x).unwrap();
            let vt = test.eval(&x).unwrap();
            let want = if inside { 1.0 } else { 0.0 };
            if !fringe {
                ind_exact = ind_exact.max((vi - want).abs());
                test_exact = test_exact.max((vt - gate * want).abs());
            }
            ind_dev = ind_dev.max((vi - want).abs());
            test_dev = test_dev.max((vt - gate * want).abs());
        }
        checks.push(Check::leq(format!("indicator-exact-R{rr}"), ind_exact, 1e-12));
        checks.push(Check::leq(format!("indicator-deviation-R{rr}"), ind_dev, 1.0 + 1e-12));
        checks.push(Check::leq(
            format!("indicator-weights-R{rr}"),
            ind.weight_stats().sup_norm,
            indicator_weight_bound(&lo, &hi, rr),
        ));
        checks.push(Check::leq(format!("test-exact-R{rr}"), test_exact, 1e-12));
        checks.push(Check::leq(
            format!("test-deviation-R{rr}"),
            test_dev,
            gate.abs() + 1e-12,
        ));
        checks.push(Check::leq(
            format!("test-weights-R{rr}"),
            test.weight_stats().sup_norm,
            rr * rr,
        ));

        let trunc = build_trunc_net(rr, 5).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..4000 {
            let z: f64 = rng.gen_range(0.0..6.0);
            if (z - z.round()).abs() < 1.0 / rr {
                continue;
            }
            worst = worst.max((trunc.eval(&[z]).unwrap() - z.floor()).abs());
        }
        checks.push(Check::leq(format!("trunc-floor-R{rr}"), worst, 1e-12));
        checks.push(Check::leq(
            format!("trunc-weights-R{rr}"),
            trunc.weight_stats().sup_norm,
            trunc_weight_bound(rr, 5),
        ));
        checks.push(Check::is_true(
            format!("trunc-zero-offset-R{rr}"),
            trunc.weight_stats().output_offset == 0.0,
        ));
    }
    checks
}

// -------------------------------------------------------------- gradients

/// Smallest distance to any one-sided kink of the per-sample loss: ReLU
/// pre-activations, the truncation margins, and the pool's top-two gap.
fn kink_margin(cfg: &CnnConfig, ens: &EnsembleParams, x: &ImageGrid) -> f64 {
    let per = cfg.param_count();
    let mut margin = f64::INFINITY;
    for k in 0..ens.component_count() {
        let params = CnnParams::from_vec(cfg, ens.component(per, k).to_vec()).unwrap();
        let t = cnn_forward(cfg, &params, x).unwrap();
        for layer in &t.preacts {
            for &p in layer {
                margin = margin.min(p.abs());
            }
        }
        for &p in &t.head_preacts {
            margin = margin.min(p.abs());
        }
        margin = margin.min((t.value.abs() - cfg.beta).abs());
        // top-two pooled values
        let l1 = cfg.conv_layers();
        let m_last = cfg.filter_sizes[l1 - 1];
        let k_last = cfg.channels[l1 - 1];
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for i in 1..=(x.d1() - m_last + 1) {
            for j in 1..=(x.d2() - m_last + 1) {
                let mut v = 0.0;
                for s in 0..k_last {
                    v += out_weight(cfg, &params, s) * t.features.get(l1, s, i, j);
                }
                if v > best {
                    second = best;
                    best = v;
                } else if v > second {
                    second = v;
                }
            }
        }
        if second.is_finite() {
            margin = margin.min(best - second);
        }
    }
    margin
}

fn out_weight(cfg: &CnnConfig, params: &CnnParams, s: usize) -> f64 {
    params.data[cfg.out_weight_index(s)]
}

pub fn gradient_suite() -> Vec<Check> {
    let mut checks = Vec::new();
    let mut worst_rel = 0.0f64;
    let mut instances = 0usize;
    let mut attempts = 0usize;
    let mut rng = rng_from_seed(0x96ad);
    while instances < 100 && attempts < 5000 {
        attempts += 1;
        let d1 = rng.gen_range(2..=6);
        let d2 = rng.gen_range(2..=6);
        let l1 = rng.gen_range(1..=2usize);
        let filter = rng.gen_range(1..=2usize).min(d1.min(d2));
        let cfg = CnnConfig {
            channels: (0..l1).map(|_| rng.gen_range(1..=3)).collect(),
            filter_sizes: vec![filter; l1],
            head_width: rng.gen_range(1..=4),
            beta: rng.gen_range(0.5..2.5),
        };
        let k_count = rng.gen_range(1..=4usize);
        let per = cfg.param_count();
        let mut w: Vec<f64> = (0..k_count).map(|_| rng.gen_range(0.0..0.5)).collect();
        let mass: f64 = w.iter().sum();
        if mass > 1.0 {
            for v in w.iter_mut() {
                *v /= mass;
            }
        }
        let thetas: Vec<f64> = (0..k_count * per).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ens = EnsembleParams {
            w,
            theta0: thetas.clone(),
            thetas,
        };
        let x = ImageGrid::random(d1, d2, &mut rng);
        if kink_margin(&cfg, &ens, &x) < 1e-3 {
            continue;
        }
        let y: i8 = if rng.gen::<bool>() { 1 } else { -1 };
        let g = grad_ensemble(&cfg, &ens, &x, y).unwrap();
        let loss = |theta: &[f64]| {
            let e2 = EnsembleParams {
                w: ens.w.clone(),
                thetas: theta.to_vec(),
                theta0: ens.theta0.clone(),
            };
            let f = opcnn_core::ensemble_eval(&cfg, &e2, &x).unwrap();
            logistic_loss(y as f64 * f).unwrap()
        };
        let fd = finite_diff_grad(loss, &ens.thetas, 1e-5).unwrap();
        let num: f64 = g
            .d_theta
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-10);
        worst_rel = worst_rel.max(num / den);
        // outer weights against the closed form via finite differences
        let loss_w = |w: &[f64]| {
            let e2 = EnsembleParams {
                w: w.to_vec(),
                thetas: ens.thetas.clone(),
                theta0: ens.theta0.clone(),
            };
            let f = opcnn_core::ensemble_eval(&cfg, &e2, &x).unwrap();
            logistic_loss(y as f64 * f).unwrap()
        };
        let fd_w = finite_diff_grad(loss_w, &ens.w, 1e-5).unwrap();
        let numw: f64 = g
            .d_w
            .iter()
            .zip(&fd_w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let denw: f64 = fd_w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-10);
        worst_rel = worst_rel.max(numw / denw);
        instances += 1;
    }
    checks.push(Check::is_true("gradient-instances-100", instances == 100));
    checks.push(Check::leq("gradient-relative-error", worst_rel, 1e-4));
    checks
}

// ------------------------------------------------------------ projections

pub fn projection_suite() -> Vec<Check> {
    let mut rng = rng_from_seed(0x4a11);
    let mut worst_point = 0.0f64;
    let mut worst_value = 0.0f64;
    let mut worst_idem = 0.0f64;
    let mut worst_expand = 0.0f64;
    let mut feasible_all = true;
    for trial in 0..100 {
        let dim = 1 + trial % 3;
        let alpha = [0.25f64, 0.5, 1.0][(trial / 3) % 3];
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..1.5)).collect();
        let p = project_a(&w, alpha).unwrap();
        feasible_all &= p.iter().all(|&v| v >= 0.0)
            && p.iter().sum::<f64>() <= 1.0 + 1e-12
            && p.iter().map(|v| v * v).sum::<f64>() <= alpha + 1e-12;
        let exact = project_a_exact_oracle(&w, alpha);
        let d: f64 = p
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst_point = worst_point.max(d);
        let grid = project_a_grid_oracle(&w, alpha, 0.005);
        let dist = |v: &[f64]| {
            v.iter()
                .zip(&w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        worst_value = worst_value.max(dist(&p) - dist(&grid));
        let pp = project_a(&p, alpha).unwrap();
        worst_idem = worst_idem.max(
            p.iter()
                .zip(&pp)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
        // nonexpansiveness on a random pair
        let u: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..1.5)).collect();
        let pu = project_a(&u, alpha).unwrap();
        let din: f64 = w
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let dout: f64 = p
            .iter()
            .zip(&pu)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst_expand = worst_expand.max(dout - din);
        // distance-one ball projection invariants on flat vectors
        let theta0: Vec<f64> = (0..dim + 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..dim + 2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pb = project_b(&t, &theta0).unwrap();
        let pbb = project_b(&pb, &theta0).unwrap();
        worst_idem = worst_idem.max(
            pb.iter()
                .zip(&pbb)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    vec![
        Check::is_true("projection-exact-feasibility", feasible_all),
        Check::leq("projection-distance-to-exact-oracle", worst_point, 1e-3),
        Check::leq("projection-value-vs-grid-oracle", worst_value, 1e-3),
        Check::leq("projection-idempotence", worst_idem, 1e-10),
        Check::leq("projection-nonexpansiveness", worst_expand, 1e-10),
    ]
}

// ----------------------------------------------------- averaged iterates

pub fn averaged_iterate_suite() -> Vec<Check> {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..50u64 {
        let (fam, u0, u_star) = random_family(5, 200, seed);
        let sides = averaged_iterate_check(&fam, &u0, &u_star, 1.0);
        worst = worst.max(sides.lhs - sides.rhs);
    }
    vec![Check::leq(
        "averaged-iterate-inequality-gap",
        worst,
        1e-9,
    )]
}

// ----------------------------------------------------------------- bounds

pub fn bounds_suite() -> Vec<Check> {
    let mut rng = rng_from_seed(0xb0b);
    let mut worst_lip_margin = f64::NEG_INFINITY;
    let mut worst_grad_margin = f64::NEG_INFINITY;
    for _ in 0..50 {
        let cfg = CnnConfig {
            channels: vec![rng.gen_range(1..=2); rng.gen_range(1..=2)],
            filter_sizes: vec![rng.gen_range(1..=2); 1],
            head_width: rng.gen_range(1..=3),
            beta: 2.0,
        };
        let cfg = CnnConfig {
            filter_sizes: vec![cfg.filter_sizes[0]; cfg.channels.len()],
            ..cfg
        };
        let b = 1.0;
        let per = cfg.param_count();
        let mut theta = CnnParams::zeros(&cfg);
        for v in theta.data.iter_mut() {
            *v = rng.gen_range(-b..b);
        }
        let mut bar = theta.clone();
        for v in bar.data.iter_mut() {
            *v = (*v + rng.gen_range(-0.4..0.4)).clamp(-b, b);
        }
        let images: Vec<ImageGrid> = (0..8).map(|_| ImageGrid::random(4, 4, &mut rng)).collect();
        let ratio = empirical_lipschitz(&cfg, &theta, &bar, &images).unwrap();
        worst_lip_margin = worst_lip_margin.max(ratio - lipschitz_bound(&cfg, b));

        let k_count = 2usize;
        let mut w: Vec<f64> = (0..k_count).map(|_| rng.gen_range(0.0..0.5)).collect();
        let mass: f64 = w.iter().sum();
        if mass > 1.0 {
            for v in w.iter_mut() {
                *v /= mass;
            }
        }
        let thetas: Vec<f64> = (0..k_count * per).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ens = EnsembleParams {
            w,
            theta0: thetas.clone(),
            thetas,
        };
        let x = ImageGrid::random(4, 4, &mut rng);
        let y = if rng.gen::<bool>() { 1 } else { -1 };
        let g = grad_ensemble(&cfg, &ens, &x, y).unwrap();
        let sup = g.d_theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst_grad_margin = worst_grad_margin.max(sup - grad_sup_bound(&cfg, b));
    }
    vec![
        Check::leq("lipschitz-bound-margin", worst_lip_margin, 0.0),
        Check::leq("gradient-sup-bound-margin", worst_grad_margin, 0.0),
    ]
}

// ----------------------------------------------------------------- taylor

fn sine_build(m: usize) -> TaylorBuild {
    build_taylor_net(&TaylorConfig {
        a: 1.0,
        m,
        q: 1,
        p: 2.0,
        c_hoelder: 1.0,
        dim: 1,
        shift: vec![0.0],
        derivative_oracle: Arc::new(|x: &[f64], l: &[usize]| {
            (x[0] + l[0] as f64 * std::f64::consts::FRAC_PI_2).sin()
        }),
    })
    .unwrap()
}

pub fn taylor_suite() -> Vec<Check> {
    let mut checks = Vec::new();
    let mut sups = Vec::new();
    for m in [2usize, 3, 4] {
        let build = sine_build(m);
        let mut rng = substream(0x7a71, &[m as u64]);
        let mut worst_pair = 0.0f64;
        let mut worst_err = 0.0f64;
        let mut count = 0usize;
        while count < 400 {
            let x = vec![rng.gen_range(-1.0..0.999_999)];
            if build.interior_margin(&x) < 2.0 * build.fringe() {
                continue;
            }
            count += 1;
            let net = build.deep_net.eval(&x).unwrap();
            let rec = build.recursion_oracle(&x).unwrap();
            let direct = build.direct_taylor(&x).unwrap();
            worst_pair = worst_pair.max((net - rec).abs()).max((rec - direct).abs());
            worst_err = worst_err.max((net - x[0].sin()).abs());
        }
        checks.push(Check::leq(
            format!("taylor-three-way-agreement-M{m}"),
            worst_pair,
            1e-6,
        ));
        sups.push(worst_err);
    }
    checks.push(Check::is_true(
        "taylor-error-strictly-decreasing",
        sups[0] > sups[1] && sups[1] > sups[2],
    ));
    checks
}
