// scratch: model statistics for candidate sweep models
use opcnn_core::hierarchy::{HierarchicalModel, Node, NodeKind};
use opcnn_core::synthetic::{sample_image, posterior, PixelLaw};
use opcnn_core::rng::rng_from_seed;

fn main() {
    let mut rng = rng_from_seed(1);
    for (name, lambda, z0) in [
        ("bump l=1.0 z0=1", 1.0, [1.0f64; 4]),
        ("bump l=0.75 z0=1", 0.75, [1.0f64; 4]),
        ("bump l=1.5 z0=1", 1.5, [1.0f64; 4]),
        ("bump l=2.0 z0=(1,0,1,0)", 2.0, [1.0, 0.0, 1.0, 0.0]),
    ] {
        let model = HierarchicalModel::uniform(1, Node::new(NodeKind::BumpDetector{lambda, z0}));
        let law = PixelLaw::IidUniform;
        let mut pos = 0usize; let mut margin = 0.0; let mut eta0 = 0usize; let mut const_neg = 0.0; let mut const_pos = 0.0;
        let n = 20000;
        for _ in 0..n {
            let x = sample_image(&law, 4, 4, &mut rng);
            let eta = posterior(&model, &x).unwrap();
            if eta >= 0.5 { pos += 1; const_neg += 2.0*eta - 1.0; } else { const_pos += 1.0 - 2.0*eta; }
            if eta <= 0.0 { eta0 += 1; }
            margin += (2.0*eta - 1.0).abs();
        }
        println!("{name}: P(bayes=+1) = {:.3}, E|2eta-1| = {:.3}, eta==0 frac {:.3}, regret(const -1) = {:.3}, regret(const +1) = {:.3}",
            pos as f64/n as f64, margin/n as f64, eta0 as f64/n as f64, const_neg/n as f64, const_pos/n as f64);
    }
}
