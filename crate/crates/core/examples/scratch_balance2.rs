// scratch: balance the bump under the blockwise-smooth law
use opcnn_core::hierarchy::{HierarchicalModel, Node, NodeKind};
use opcnn_core::rng::rng_from_seed;
use opcnn_core::synthetic::{posterior, sample_image, PixelLaw};

fn main() {
    let mut rng = rng_from_seed(3);
    for coarse in [2usize, 3] {
        for lam in [1.0, 1.2, 1.4, 1.6, 1.8, 2.0] {
            let model = HierarchicalModel::uniform(1, Node::new(NodeKind::BumpDetector { lambda: lam, z0: [1.0; 4] }));
            let n = 30000;
            let (mut mean_eta, mut pos, mut cneg, mut cpos) = (0.0, 0usize, 0.0, 0.0);
            for _ in 0..n {
                let x = sample_image(&PixelLaw::BlockwiseSmooth { coarse }, 4, 4, &mut rng);
                let eta = posterior(&model, &x).unwrap();
                mean_eta += eta;
                if eta >= 0.5 { pos += 1; cneg += 2.0 * eta - 1.0; } else { cpos += 1.0 - 2.0 * eta; }
            }
            println!("coarse {coarse} lambda {lam}: E[eta] {:.3} P(+1) {:.3} const regrets ({:.3}, {:.3})",
                mean_eta / n as f64, pos as f64 / n as f64, cneg / n as f64, cpos / n as f64);
        }
    }
}
