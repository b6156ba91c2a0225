// scratch: feature/target correlation of random init ensembles
use opcnn_core::cnn::{forward_probe, EnsembleParams};
use opcnn_core::hierarchy::{HierarchicalModel, Node, NodeKind};
use opcnn_core::loss::truncate;
use opcnn_core::rng::rng_from_seed;
use opcnn_core::schedule::{scaled_architecture, ScheduleConstants};
use opcnn_core::synthetic::{posterior, sample_dataset, GeneratorConfig, PixelLaw};
use opcnn_core::train::{init_params, TrainConfig};

fn main() {
    let n = 1500usize;
    let model = HierarchicalModel::uniform(1, Node::new(NodeKind::BumpDetector { lambda: 1.0, z0: [1.0; 4] }));
    for law_name in ["iid", "smooth2", "smooth3"] {
        let law = match law_name {
            "iid" => PixelLaw::IidUniform,
            "smooth2" => PixelLaw::BlockwiseSmooth { coarse: 2 },
            _ => PixelLaw::BlockwiseSmooth { coarse: 3 },
        };
        let gen = GeneratorConfig { d1: 4, d2: 4, model: model.clone(), pixel_law: law, n, seed: 42 };
        let data = sample_dataset(&gen).unwrap();
        let etas: Vec<f64> = data.iter().map(|s| posterior(&model, &s.x).unwrap()).collect();
        let target: Vec<f64> = etas.iter().map(|e| 2.0 * e - 1.0).collect();
        let pos = etas.iter().filter(|&&e| e >= 0.5).count();
        for (c5, c6, c7) in [(0.25f64, 1.0f64, 8usize), (0.5, 0.5, 4)] {
            let consts = ScheduleConstants { c3: 1.0, c5, c6, c7 };
            let cnn = scaled_architecture(n, 6.0, 1, &consts);
            let train = TrainConfig { k: 64, n_blocks: None, block_size: None, steps: 10, lambda: 0.1, alpha: 0.125, beta: cnn.beta, init_bound: 1.0, seed: 7 };
            let mut rng = rng_from_seed(7);
            let ens: EnsembleParams = init_params(&cnn, &train, &mut rng);
            let per = cnn.param_count();
            let mut best = 0.0f64;
            let mut sum_abs = 0.0f64;
            for k in 0..64 {
                let f: Vec<f64> = data.iter().map(|s| truncate(cnn.beta, forward_probe(&cnn, ens.component(per, k), &s.x))).collect();
                let mf = f.iter().sum::<f64>() / n as f64;
                let mt = target.iter().sum::<f64>() / n as f64;
                let cov: f64 = f.iter().zip(&target).map(|(a, b)| (a - mf) * (b - mt)).sum();
                let vf: f64 = f.iter().map(|a| (a - mf) * (a - mf)).sum();
                let vt: f64 = target.iter().map(|b| (b - mt) * (b - mt)).sum();
                let corr = cov / (vf.sqrt() * vt.sqrt()).max(1e-12);
                best = best.max(corr.abs());
                sum_abs += corr.abs();
            }
            println!("{law_name} c5={c5} c7={c7}: L1={} P(+1)={:.2} max|corr|={:.3} mean|corr|={:.3}",
                cnn.conv_layers(), pos as f64 / n as f64, best, sum_abs / 64.0);
        }
    }
}
