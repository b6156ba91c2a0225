// scratch: attainable ceiling of the constrained random-feature mixture
use opcnn_core::cnn::{forward_probe, CnnConfig, EnsembleParams};
use opcnn_core::hierarchy::{HierarchicalModel, Node, NodeKind};
use opcnn_core::loss::{logistic_loss_deriv, truncate};
use opcnn_core::project::project_a_into;
use opcnn_core::rng::rng_from_seed;
use opcnn_core::schedule::{scaled_architecture, ScheduleConstants};
use opcnn_core::synthetic::{posterior, sample_dataset, GeneratorConfig, PixelLaw};
use opcnn_core::train::{init_params, TrainConfig};

fn main() {
    let n = 2000usize;
    let model = HierarchicalModel::uniform(1, Node::new(NodeKind::BumpDetector { lambda: 1.0, z0: [1.0; 4] }));
    let gen = GeneratorConfig { d1: 4, d2: 4, model: model.clone(), pixel_law: PixelLaw::IidUniform, n, seed: 42 };
    let data = sample_dataset(&gen).unwrap();
    for (c7, c5) in [(4usize, 0.5f64), (8, 0.5), (8, 1.0)] {
        let consts = ScheduleConstants { c3: 1.0, c5, c6: 0.5, c7 };
        let cnn: CnnConfig = scaled_architecture(n, 6.0, 1, &consts);
        let train = TrainConfig { k: 64, n_blocks: None, block_size: None, steps: 10 * n, lambda: 0.25, alpha: 0.125, beta: cnn.beta, init_bound: 1.0, seed: 7 };
        let mut rng = rng_from_seed(7);
        let ens: EnsembleParams = init_params(&cnn, &train, &mut rng);
        let per = cnn.param_count();
        // feature matrix
        let feats: Vec<Vec<f64>> = data.iter().map(|s| {
            (0..64).map(|k| truncate(cnn.beta, forward_probe(&cnn, ens.component(per, k), &s.x))).collect()
        }).collect();
        // full-batch projected GD on the mixture weights
        let mut w = vec![0.0f64; 64];
        for it in 0..3000 {
            let mut g = vec![0.0f64; 64];
            for (s, f) in data.iter().zip(&feats) {
                let score: f64 = w.iter().zip(f).map(|(a, b)| a * b).sum();
                let d = logistic_loss_deriv(s.y as f64 * score) * s.y as f64;
                for (gi, fi) in g.iter_mut().zip(f) { *gi += d * fi; }
            }
            let step = 2.0 / (n as f64);
            for (wi, gi) in w.iter_mut().zip(&g) { *wi -= step * gi; }
            project_a_into(&mut w, train.alpha).unwrap();
            let _ = it;
        }
        // exact regret on a fresh test set
        let test = GeneratorConfig { n: 2000, seed: 999, ..gen.clone() };
        let test_data = sample_dataset(&test).unwrap();
        let mut regret = 0.0;
        for s in &test_data {
            let f: Vec<f64> = (0..64).map(|k| truncate(cnn.beta, forward_probe(&cnn, ens.component(per, k), &s.x))).collect();
            let score: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
            let label = if score >= 0.0 { 1 } else { -1 };
            let eta = posterior(&model, &s.x).unwrap();
            let bayes = if eta >= 0.5 { 1 } else { -1 };
            if label != bayes { regret += (2.0 * eta - 1.0).abs(); }
        }
        println!("c7={c7} c5={c5}: L1={} L2={} ceiling regret = {:.4}, w mass {:.3}, ||w||^2 {:.4}",
            cnn.conv_layers(), cnn.head_width, regret / test_data.len() as f64,
            w.iter().sum::<f64>(), w.iter().map(|v| v*v).sum::<f64>());
    }
}
