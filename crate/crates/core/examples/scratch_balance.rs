// scratch: find the bump sharpness balancing E[eta] at 1/2
use opcnn_core::hierarchy::{HierarchicalModel, Node, NodeKind};
use opcnn_core::rng::rng_from_seed;
use opcnn_core::synthetic::{posterior, sample_image, PixelLaw};

fn main() {
    let mut rng = rng_from_seed(3);
    for lam in [0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0] {
        let model = HierarchicalModel::uniform(1, Node::new(NodeKind::BumpDetector { lambda: lam, z0: [1.0; 4] }));
        let n = 40000;
        let mut mean_eta = 0.0;
        let mut pos = 0usize;
        let mut margin = 0.0;
        let mut cneg = 0.0;
        let mut cpos = 0.0;
        for _ in 0..n {
            let x = sample_image(&PixelLaw::IidUniform, 4, 4, &mut rng);
            let eta = posterior(&model, &x).unwrap();
            mean_eta += eta;
            margin += (2.0 * eta - 1.0).abs();
            if eta >= 0.5 { pos += 1; cneg += 2.0 * eta - 1.0; } else { cpos += 1.0 - 2.0 * eta; }
        }
        println!("lambda {lam}: E[eta] = {:.4}, P(+1) = {:.3}, E|2eta-1| = {:.3}, const regrets ({:.3}, {:.3})",
            mean_eta / n as f64, pos as f64 / n as f64, margin / n as f64, cneg / n as f64, cpos / n as f64);
    }
}
