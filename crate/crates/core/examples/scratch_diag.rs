// scratch: diagnose the SGD mixture on the bump task
use opcnn_core::cnn::{forward_probe, ensemble_eval, EnsembleParams};
use opcnn_core::hierarchy::{HierarchicalModel, Node, NodeKind};
use opcnn_core::loss::truncate;
use opcnn_core::rng::rng_from_seed;
use opcnn_core::schedule::{scaled_architecture, ScheduleConstants};
use opcnn_core::synthetic::{posterior, sample_dataset, GeneratorConfig, PixelLaw};
use opcnn_core::train::{init_params, sgd_train, TrainConfig};

fn main() {
    let n = 2000usize;
    let model = HierarchicalModel::uniform(1, Node::new(NodeKind::BumpDetector { lambda: 1.0, z0: [1.0; 4] }));
    let gen = GeneratorConfig { d1: 4, d2: 4, model: model.clone(), pixel_law: PixelLaw::IidUniform, n, seed: 42 };
    let data = sample_dataset(&gen).unwrap();
    let consts = ScheduleConstants { c3: 1.0, c5: 0.25, c6: 1.0, c7: 8 };
    let cnn = scaled_architecture(n, 6.0, 1, &consts);
    println!("arch: L1={} k={:?} L2={} beta={:.2}", cnn.conv_layers(), cnn.channels[0], cnn.head_width, cnn.beta);
    let train = TrainConfig { k: 64, n_blocks: None, block_size: None, steps: 10 * n, lambda: 1.0, alpha: 0.125, beta: cnn.beta, init_bound: 1.0, seed: 7 };
    let mut rng = rng_from_seed(7);
    let res = sgd_train(&data, &cnn, &train, &mut rng).unwrap();
    // loss per pass
    for pass in [0usize, 1, 4, 9] {
        let sl = &res.trace.steps[pass * n..(pass + 1) * n];
        let mean: f64 = sl.iter().map(|s| s.loss).sum::<f64>() / n as f64;
        println!("pass {pass}: mean loss {mean:.4}");
    }
    let wsum: f64 = res.w_avg.iter().sum();
    let wsq: f64 = res.w_avg.iter().map(|v| v * v).sum();
    let wmax = res.w_avg.iter().cloned().fold(0.0f64, f64::max);
    let nnz = res.w_avg.iter().filter(|&&v| v > 1e-6).count();
    println!("w_avg: mass {wsum:.4} sq {wsq:.4} max {wmax:.4} nnz {nnz}");
    // final-weight (unaveraged) comparison
    let wsum_f: f64 = res.ens.w.iter().sum();
    println!("w_final mass {wsum_f:.4}");
    // score stats + regret on test
    let test = GeneratorConfig { n: 2000, seed: 999, ..gen.clone() };
    let tdata = sample_dataset(&test).unwrap();
    for (name, w) in [("avg", res.w_avg.clone()), ("final", res.ens.w.clone())] {
        let ens = EnsembleParams { w, thetas: res.ens.thetas.clone(), theta0: res.ens.theta0.clone() };
        let mut regret = 0.0;
        let mut pos = 0usize;
        for s in &tdata {
            let score = ensemble_eval(&cnn, &ens, &s.x).unwrap();
            if score >= 0.0 { pos += 1; }
            let eta = posterior(&model, &s.x).unwrap();
            let bayes = if eta >= 0.5 { 1 } else { -1 };
            let lab = if score >= 0.0 { 1 } else { -1 };
            if lab != bayes { regret += (2.0 * eta - 1.0).abs(); }
        }
        println!("{name}: regret {:.4}, P(score>=0) {:.3}", regret / tdata.len() as f64, pos as f64 / tdata.len() as f64);
    }
    // oracle single feature
    let per = cnn.param_count();
    let etas: Vec<f64> = tdata.iter().map(|s| posterior(&model, &s.x).unwrap()).collect();
    let mut best = (0usize, 0.0f64, 0.0f64);
    for k in 0..64 {
        let f: Vec<f64> = tdata.iter().map(|s| truncate(cnn.beta, forward_probe(&cnn, res.ens.component(per, k), &s.x))).collect();
        // best threshold by sweep
        let mut idx: Vec<usize> = (0..f.len()).collect();
        idx.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
        // try classifier sign(f - t) for t at each midpoint, measure regret
        let total_pos_regret: f64 = etas.iter().map(|e| (1.0 - 2.0 * e).max(0.0)).sum();
        let mut cur = total_pos_regret; // t = -inf: all classified +1
        let mut best_t = f64::NEG_INFINITY;
        let mut best_r = cur;
        for &i in &idx {
            // moving threshold above f[i]: sample i becomes -1
            let e = etas[i];
            if e >= 0.5 { cur += 2.0 * e - 1.0; } else { cur -= 1.0 - 2.0 * e; }
            if cur < best_r { best_r = cur; best_t = f[i]; }
        }
        let r = best_r / tdata.len() as f64;
        if best.1 == 0.0 || r < best.1 { best = (k, r, best_t); }
    }
    println!("best single feature {} with threshold {:.3}: regret {:.4}", best.0, best.2, best.1);
}
