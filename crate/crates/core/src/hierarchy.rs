//! Hierarchical max-pooling models: a level-l recursive composition of
//! 4-ary node functions evaluated on 2^l x 2^l windows, maximized over all
//! window positions of the image.

use crate::error::{CoreError, Result};
use crate::grid::ImageGrid;

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Built-in 4-ary node functions mapping into [0,1], each with an
/// analytically known Lipschitz constant on [-2,2]^4 (Euclidean metric).
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// clamp01 of the arithmetic mean; Lipschitz 1/2.
    Mean,
    /// Rescaled log-sum-exp: (lse_gamma(z) + 2) / (4 + ln(4)/gamma),
    /// clamped; Lipschitz 1 / (4 + ln(4)/gamma).
    SmoothMax { gamma: f64 },
    /// clamp01 of the product of the four inputs; Lipschitz 16 on [-2,2]^4.
    Product,
    /// clamp01(1 - lambda * ||z - z0||^2); Lipschitz 2 * lambda * diam,
    /// diam = sup ||z - z0|| over [-2,2]^4.
    BumpDetector { lambda: f64, z0: [f64; 4] },
}

/// One node of the hierarchy: a base map into [0,1] plus an additive offset
/// used by perturbation experiments (offset 0 keeps the [0,1] range).
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub offset: f64,
    /// Smoothness descriptor (p, C): the node is (p, C)-smooth with C at
    /// least the Lipschitz constant below.
    pub smoothness_p: f64,
}

impl Node {
    pub fn new(kind: NodeKind) -> Self {
        Node {
            kind,
            offset: 0.0,
            smoothness_p: 2.0,
        }
    }

    pub fn eval(&self, z: [f64; 4]) -> f64 {
        let base = match &self.kind {
            NodeKind::Mean => clamp01((z[0] + z[1] + z[2] + z[3]) / 4.0),
            NodeKind::SmoothMax { gamma } => {
                let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + z.iter().map(|v| ((v - m) * gamma).exp()).sum::<f64>().ln() / gamma;
                clamp01((lse + 2.0) / (4.0 + 4.0f64.ln() / gamma))
            }
            NodeKind::Product => clamp01(z[0] * z[1] * z[2] * z[3]),
            NodeKind::BumpDetector { lambda, z0 } => {
                let d2: f64 = z.iter().zip(z0).map(|(a, b)| (a - b) * (a - b)).sum();
                clamp01(1.0 - lambda * d2)
            }
        };
        base + self.offset
    }

    /// Certified Lipschitz constant on [-2,2]^4.
    pub fn lipschitz(&self) -> f64 {
        match &self.kind {
            NodeKind::Mean => 0.5,
            NodeKind::SmoothMax { gamma } => 1.0 / (4.0 + 4.0f64.ln() / gamma),
            NodeKind::Product => 16.0,
            NodeKind::BumpDetector { lambda, z0 } => {
                // sup of 2*lambda*||z - z0|| over the cube
                let diam2: f64 = z0
                    .iter()
                    .map(|&c| {
                        let lo = (c + 2.0) * (c + 2.0);
                        let hi = (c - 2.0) * (c - 2.0);
                        lo.max(hi)
                    })
                    .sum();
                2.0 * lambda * diam2.sqrt()
            }
        }
    }

    pub fn perturbed(&self, delta: f64) -> Node {
        Node {
            offset: self.offset + delta,
            ..self.clone()
        }
    }
}

/// A level-l hierarchy: `nodes[k-1]` holds the 4^(l-k) nodes of level k.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel {
    level: usize,
    nodes: Vec<Vec<Node>>,
}

impl HierarchicalModel {
    pub fn new(level: usize, nodes: Vec<Vec<Node>>) -> Result<Self> {
        if level == 0 {
            return Err(CoreError::Config("level must be >= 1".into()));
        }
        if nodes.len() != level {
            return Err(CoreError::Config(format!(
                "expected {} node levels, got {}",
                level,
                nodes.len()
            )));
        }
        for (k, lv) in nodes.iter().enumerate() {
            let expect = 4usize.pow((level - k - 1) as u32);
            if lv.len() != expect {
                return Err(CoreError::Config(format!(
                    "level {} needs {} nodes, got {}",
                    k + 1,
                    expect,
                    lv.len()
                )));
            }
        }
        Ok(HierarchicalModel { level, nodes })
    }

    /// Same node at every position.
    pub fn uniform(level: usize, node: Node) -> Self {
        let nodes = (0..level)
            .map(|k| vec![node.clone(); 4usize.pow((level - k - 1) as u32)])
            .collect();
        HierarchicalModel { level, nodes }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn window_side(&self) -> usize {
        1 << self.level
    }

    pub fn node(&self, k: usize, s: usize) -> &Node {
        &self.nodes[k - 1][s - 1]
    }

    pub fn nodes(&self) -> &Vec<Vec<Node>> {
        &self.nodes
    }

    /// Replace every node g by g + delta.
    pub fn perturbed(&self, delta: f64) -> Self {
        HierarchicalModel {
            level: self.level,
            nodes: self
                .nodes
                .iter()
                .map(|lv| lv.iter().map(|n| n.perturbed(delta)).collect())
                .collect(),
        }
    }

    /// Largest certified node Lipschitz constant.
    pub fn max_lipschitz(&self) -> f64 {
        self.nodes
            .iter()
            .flatten()
            .map(|n| n.lipschitz())
            .fold(0.0, f64::max)
    }
}

/// Evaluate the level-l recursion on a 2^l x 2^l patch (row-major, first
/// index slowest). Quadrant order: child 4(s-1)+1 reads the low/low block,
/// 4(s-1)+2 the low/high block, 4(s-1)+3 the high/low block, 4s high/high.
pub fn eval_hierarchy(model: &HierarchicalModel, patch: &[f64]) -> Result<f64> {
    let side = model.window_side();
    if patch.len() != side * side {
        return Err(CoreError::Shape(format!(
            "patch must be {side}x{side}, got {} values",
            patch.len()
        )));
    }
    Ok(eval_rec(model, model.level, 1, patch, side, 0, 0))
}

fn eval_rec(
    model: &HierarchicalModel,
    k: usize,
    s: usize,
    patch: &[f64],
    stride: usize,
    row0: usize,
    col0: usize,
) -> f64 {
    if k == 0 {
        return patch[row0 * stride + col0];
    }
    let h = 1usize << (k - 1);
    let z = [
        eval_rec(model, k - 1, 4 * (s - 1) + 1, patch, stride, row0, col0),
        eval_rec(model, k - 1, 4 * (s - 1) + 2, patch, stride, row0, col0 + h),
        eval_rec(model, k - 1, 4 * (s - 1) + 3, patch, stride, row0 + h, col0),
        eval_rec(model, k - 1, 4 * s, patch, stride, row0 + h, col0 + h),
    ];
    model.node(k, s).eval(z)
}

/// Exhaustive max of the hierarchy value over every window position.
pub fn eval_maxpool_model(model: &HierarchicalModel, x: &ImageGrid) -> Result<f64> {
    let side = model.window_side();
    if side > x.d1().min(x.d2()) {
        return Err(CoreError::Shape(format!(
            "window {side} exceeds image {}x{}",
            x.d1(),
            x.d2()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    let mut patch = vec![0.0; side * side];
    for i in 1..=(x.d1() - side + 1) {
        for j in 1..=(x.d2() - side + 1) {
            for a in 0..side {
                for b in 0..side {
                    patch[a * side + b] = x.get(i + a, j + b);
                }
            }
            let v = eval_rec(model, model.level, 1, &patch, side, 0, 0);
            if v > best {
                best = v;
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn mean_model(level: usize) -> HierarchicalModel {
        HierarchicalModel::uniform(level, Node::new(NodeKind::Mean))
    }

    #[test]
    fn level_one_mean_is_patch_mean() {
        let m = mean_model(1);
        let v = eval_hierarchy(&m, &[0.2, 0.4, 0.6, 0.8]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn level_two_mean_is_overall_mean() {
        let m = mean_model(2);
        let mut rng = rng_from_seed(2);
        let patch: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
        let v = eval_hierarchy(&m, &patch).unwrap();
        let mean: f64 = patch.iter().sum::<f64>() / 16.0;
        assert!((v - mean).abs() < 1e-12, "{v} vs {mean}");
    }

    #[test]
    fn constant_patch_is_fixed_point_of_mean() {
        let m = mean_model(2);
        let v = eval_hierarchy(&m, &vec![0.37; 16]).unwrap();
        assert!((v - 0.37).abs() < 1e-15);
    }

    #[test]
    fn wrong_patch_size_is_rejected() {
        let m = mean_model(1);
        assert!(eval_hierarchy(&m, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn maxpool_constant_image() {
        let m = mean_model(1);
        let x = ImageGrid::new(3, 3, vec![0.4; 9]).unwrap();
        assert!((eval_maxpool_model(&m, &x).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn maxpool_matches_direct_loop_on_4x4() {
        let m = mean_model(1);
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let x = ImageGrid::random(4, 4, &mut rng);
            let got = eval_maxpool_model(&m, &x).unwrap();
            // brute force over all 9 window positions
            let mut best = f64::NEG_INFINITY;
            for i in 1..=3 {
                for j in 1..=3 {
                    let mean =
                        (x.get(i, j) + x.get(i, j + 1) + x.get(i + 1, j) + x.get(i + 1, j + 1))
                            / 4.0;
                    best = best.max(mean);
                }
            }
            assert!((got - best).abs() < 1e-15);
        }
    }

    #[test]
    fn bright_block_dominates() {
        // single bright 2x2 block of ones, everything else 0
        let x = ImageGrid::from_fn(5, 5, |i, j| {
            if (2..=3).contains(&i) && (3..=4).contains(&j) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let m = mean_model(1);
        assert!((eval_maxpool_model(&m, &x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn translation_leaves_max_unchanged() {
        let m = mean_model(1);
        let block = |di: usize, dj: usize| {
            ImageGrid::from_fn(6, 6, move |i, j| {
                if (2 + di..=3 + di).contains(&i) && (2 + dj..=3 + dj).contains(&j) {
                    0.9
                } else {
                    0.1
                }
            })
            .unwrap()
        };
        let v0 = eval_maxpool_model(&m, &block(0, 0)).unwrap();
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            let v = eval_maxpool_model(&m, &block(di, dj)).unwrap();
            assert!((v - v0).abs() < 1e-15);
        }
    }

    #[test]
    fn nodes_map_into_unit_interval_on_extended_cube() {
        let nodes = [
            Node::new(NodeKind::Mean),
            Node::new(NodeKind::SmoothMax { gamma: 4.0 }),
            Node::new(NodeKind::Product),
            Node::new(NodeKind::BumpDetector {
                lambda: 1.0,
                z0: [1.0, 1.0, 1.0, 1.0],
            }),
        ];
        let mut rng = rng_from_seed(8);
        for node in &nodes {
            for _ in 0..1000 {
                let z = [
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ];
                let v = node.eval(z);
                assert!((0.0..=1.0).contains(&v), "{node:?} gave {v}");
            }
        }
    }

    #[test]
    fn empirical_lipschitz_never_exceeds_certificate() {
        let nodes = [
            Node::new(NodeKind::Mean),
            Node::new(NodeKind::SmoothMax { gamma: 4.0 }),
            Node::new(NodeKind::Product),
            Node::new(NodeKind::BumpDetector {
                lambda: 0.5,
                z0: [0.5, 0.5, 0.5, 0.5],
            }),
        ];
        let mut rng = rng_from_seed(13);
        for node in &nodes {
            let c = node.lipschitz();
            for _ in 0..2000 {
                let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
                let b: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
                let dist: f64 = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if dist < 1e-9 {
                    continue;
                }
                let ratio = (node.eval(a) - node.eval(b)).abs() / dist;
                assert!(ratio <= c + 1e-9, "{node:?}: ratio {ratio} > C {c}");
            }
        }
    }
}
