//! Embedding of hierarchical compositions of feedforward networks into the
//! convolutional class: the resulting CNN evaluates every node network at
//! every window position, gathers quadrant values with filters of size 2^k,
//! carries completed node values as nonnegative channel pairs, and recovers
//! the hierarchy's max over window positions through the pooling layer.

use crate::cnn::{CnnConfig, CnnParams};
use crate::error::{CoreError, Result};
use crate::ffnet::FeedForwardNet;

/// Quadrant tap offsets (first-index, second-index) of child m at level k.
fn quadrant_offset(k: usize, child: usize) -> (usize, usize) {
    let h = 1usize << (k - 1);
    match child {
        0 => (0, 0),
        1 => (0, h),
        2 => (h, 0),
        3 => (h, h),
        _ => unreachable!(),
    }
}

/// Builds a CNN in the convolutional class computing
/// max over window positions of the composed node networks.
///
/// `g_nets[k-1]` holds the 4^(l-k) node networks of level k, all with the
/// same hidden depth, four inputs and one output.
pub fn cnn_from_ffnets(g_nets: &[Vec<FeedForwardNet>], level: usize) -> Result<(CnnConfig, CnnParams)> {
    if level == 0 || g_nets.len() != level {
        return Err(CoreError::Config(format!(
            "expected {level} levels of node networks, got {}",
            g_nets.len()
        )));
    }
    let l_net = g_nets[0]
        .first()
        .ok_or_else(|| CoreError::Config("empty node level".into()))?
        .depth();
    let mut r_net = 0usize;
    for (k, lv) in g_nets.iter().enumerate() {
        let expect = 4usize.pow((level - k - 1) as u32);
        if lv.len() != expect {
            return Err(CoreError::Config(format!(
                "level {} needs {} node nets, got {}",
                k + 1,
                expect,
                lv.len()
            )));
        }
        for net in lv {
            if net.depth() != l_net {
                return Err(CoreError::Config(
                    "node networks must share their hidden depth".into(),
                ));
            }
            if net.input_dim() != 4 || net.output_dim() != 1 {
                return Err(CoreError::Config(
                    "node networks must map four inputs to one output".into(),
                ));
            }
            r_net = r_net.max(net.widths()[1..].iter().copied().max().unwrap_or(0));
        }
    }
    if l_net == 0 {
        return Err(CoreError::Config("node networks need >= 1 hidden layer".into()));
    }

    let four_l = 4usize.pow(level as u32);
    let conv_layers = (four_l - 1) / 3 * l_net + level;
    let channels_per_layer = (2 * four_l + 4) / 3 + r_net;

    // channel regions: 0 carries the input; completed node pairs alternate
    // between two fixed regions across levels; the working region follows
    let region_a = 1usize;
    let size_a = 2 * 4usize.pow((level - 1) as u32);
    let region_b = region_a + size_a;
    let size_b = if level >= 2 {
        2 * 4usize.pow((level - 2) as u32)
    } else {
        0
    };
    let work = region_b + size_b;
    if work + r_net > channels_per_layer {
        return Err(CoreError::Config(format!(
            "channel budget exceeded: need {} have {}",
            work + r_net,
            channels_per_layer
        )));
    }
    let pair_region = |k: usize| if k % 2 == 1 { region_a } else { region_b };

    // filter schedule: block k uses windows of size 2^k
    let mut filter_sizes = Vec::with_capacity(conv_layers);
    for k in 1..=level {
        let block_len = 4usize.pow((level - k) as u32) * l_net + 1;
        filter_sizes.extend(std::iter::repeat(1usize << k).take(block_len));
    }
    debug_assert_eq!(filter_sizes.len(), conv_layers);

    let cfg = CnnConfig {
        channels: vec![channels_per_layer; conv_layers],
        filter_sizes,
        head_width: 2,
        beta: 1e9,
    };
    let mut params = CnnParams::zeros(&cfg);
    let layout = cfg.layout();

    // helper: identity-carry a channel through layer r (0-based)
    let carry = |params: &mut CnnParams, r: usize, ch: usize| {
        params.data[layout.w(r, 0, 0, ch, ch)] = 1.0;
    };

    let mut block_start = 0usize; // 0-based index of the block's first layer
    for k in 1..=level {
        let nodes = 4usize.pow((level - k) as u32);
        let block_len = nodes * l_net + 1;
        let in_base = pair_region(k - 1); // meaningful for k >= 2
        let out_base = pair_region(k);

        for r_off in 0..block_len {
            let r = block_start + r_off;
            // carries: input channel during block 1, incoming pairs (k >= 2),
            // and out-region pairs only once they exist (the regions are
            // reused across levels, so earlier carries would revive stale
            // values)
            if k == 1 {
                carry(&mut params, r, 0);
            }
            if k >= 2 {
                for c in 0..2 * 4 * nodes {
                    carry(&mut params, r, in_base + c);
                }
            }
            for s in 0..nodes {
                if r_off > (s + 1) * l_net {
                    carry(&mut params, r, out_base + 2 * s);
                    carry(&mut params, r, out_base + 2 * s + 1);
                }
            }
        }

        for s in 0..nodes {
            let net = &g_nets[k - 1][s];
            let widths = net.widths();
            let mats = net.layers();
            for t in 1..=l_net {
                let r = block_start + s * l_net + (t - 1);
                let mat = &mats[t - 1];
                let rows = widths[t];
                for i in 0..rows {
                    let out_ch = work + i;
                    params.data[layout.b(r, out_ch)] = mat.at(i, 0);
                    if t == 1 {
                        // read quadrant inputs
                        for m in 0..4usize {
                            let (dt1, dt2) = quadrant_offset(k, m);
                            let v = mat.at(i, m + 1);
                            if k == 1 {
                                params.data[layout.w(r, dt1, dt2, 0, out_ch)] = v;
                            } else {
                                let child = 4 * s + m;
                                params.data[layout.w(r, dt1, dt2, in_base + 2 * child, out_ch)] = v;
                                params.data
                                    [layout.w(r, dt1, dt2, in_base + 2 * child + 1, out_ch)] = -v;
                            }
                        }
                    } else {
                        for j in 0..widths[t - 1] {
                            params.data[layout.w(r, 0, 0, work + j, out_ch)] = mat.at(i, j + 1);
                        }
                    }
                }
            }
            // output pair created in the following layer; for s+1 < nodes it
            // coincides with the next node's first hidden layer
            let r = block_start + (s + 1) * l_net;
            let out_mat = mats.last().unwrap();
            let last_w = widths[l_net];
            for (pair, sign) in [(0usize, 1.0f64), (1, -1.0)] {
                let ch = out_base + 2 * s + pair;
                params.data[layout.b(r, ch)] = sign * out_mat.at(0, 0);
                for j in 0..last_w {
                    params.data[layout.w(r, 0, 0, work + j, ch)] = sign * out_mat.at(0, j + 1);
                }
            }
        }
        block_start += block_len;
    }

    // pooling mix: +pair - pair of the level-l result
    let final_base = pair_region(level);
    params.data[layout.out(final_base)] = 1.0;
    params.data[layout.out(final_base + 1)] = -1.0;
    // identity head: relu(z) - relu(-z)
    let (o1, s1, _) = layout.head_unit(0);
    params.data[o1] = 1.0;
    params.data[s1] = 1.0;
    let (o2, s2, _) = layout.head_unit(1);
    params.data[o2] = -1.0;
    params.data[s2] = -1.0;

    Ok((cfg, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::cnn_forward;
    use crate::ffnet::Mat;
    use crate::grid::ImageGrid;
    use crate::hierarchy::{eval_maxpool_model, HierarchicalModel, Node, NodeKind};
    use crate::rng::rng_from_seed;

    /// One-hidden-layer net computing the mean of four nonnegative inputs.
    fn mean_net() -> FeedForwardNet {
        let mut l0 = Mat::zeros(1, 5);
        for c in 1..=4 {
            l0.set(0, c, 0.25);
        }
        let mut out = Mat::zeros(1, 2);
        out.set(0, 1, 1.0);
        FeedForwardNet::new(4, vec![l0, out]).unwrap()
    }

    #[test]
    fn level_one_mean_embedding_matches_maxpool_model() {
        let (cfg, params) = cnn_from_ffnets(&[vec![mean_net()]], 1).unwrap();
        assert_eq!(cfg.channels[0], 4 + 1); // (2*4+4)/3 + r_net
        let model = HierarchicalModel::uniform(1, Node::new(NodeKind::Mean));
        let mut rng = rng_from_seed(4);
        for _ in 0..100 {
            let x = ImageGrid::random(4, 4, &mut rng);
            let want = eval_maxpool_model(&model, &x).unwrap();
            let got = cnn_forward(&cfg, &params, &x).unwrap().value;
            assert!((want - got).abs() <= 1e-9, "{want} vs {got}");
        }
    }

    #[test]
    fn constant_image_hits_fixed_point() {
        let (cfg, params) = cnn_from_ffnets(&[vec![mean_net()]], 1).unwrap();
        let x = ImageGrid::new(5, 5, vec![0.42; 25]).unwrap();
        let got = cnn_forward(&cfg, &params, &x).unwrap().value;
        assert!((got - 0.42).abs() < 1e-12);
    }

    #[test]
    fn level_two_mean_embedding_matches_on_larger_images() {
        let nets = vec![vec![mean_net(); 4], vec![mean_net()]];
        let (cfg, params) = cnn_from_ffnets(&nets, 2).unwrap();
        assert_eq!(cfg.conv_layers(), 5 + 2);
        assert_eq!(cfg.filter_sizes, vec![2, 2, 2, 2, 2, 4, 4]);
        let model = HierarchicalModel::uniform(2, Node::new(NodeKind::Mean));
        let mut rng = rng_from_seed(5);
        for _ in 0..25 {
            let x = ImageGrid::random(5, 6, &mut rng);
            let want = eval_maxpool_model(&model, &x).unwrap();
            let got = cnn_forward(&cfg, &params, &x).unwrap().value;
            assert!((want - got).abs() <= 1e-9, "{want} vs {got}");
        }
    }

    #[test]
    fn asymmetric_nodes_exercise_quadrant_order() {
        // node net computing 0.5*z1 + 0.3*z2 + 0.15*z3 + 0.05*z4 (all
        // nonnegative inputs, so one hidden layer suffices)
        let mut l0 = Mat::zeros(1, 5);
        l0.set(0, 1, 0.5);
        l0.set(0, 2, 0.3);
        l0.set(0, 3, 0.15);
        l0.set(0, 4, 0.05);
        let mut out = Mat::zeros(1, 2);
        out.set(0, 1, 1.0);
        let net = FeedForwardNet::new(4, vec![l0, out]).unwrap();
        let (cfg, params) = cnn_from_ffnets(&[vec![net.clone()]], 1).unwrap();
        let mut rng = rng_from_seed(6);
        for _ in 0..50 {
            let x = ImageGrid::random(3, 3, &mut rng);
            // direct evaluation of the same weighted hierarchy
            let mut want = f64::NEG_INFINITY;
            for i in 1..=2 {
                for j in 1..=2 {
                    let v = 0.5 * x.get(i, j)
                        + 0.3 * x.get(i, j + 1)
                        + 0.15 * x.get(i + 1, j)
                        + 0.05 * x.get(i + 1, j + 1);
                    want = want.max(v);
                }
            }
            let got = cnn_forward(&cfg, &params, &x).unwrap().value;
            assert!((want - got).abs() <= 1e-12, "{want} vs {got}");
        }
    }

    #[test]
    fn mismatched_depths_are_rejected() {
        let a = mean_net();
        let b = {
            // two hidden layers
            let mut l0 = Mat::zeros(1, 5);
            for c in 1..=4 {
                l0.set(0, c, 0.25);
            }
            let mut l1 = Mat::zeros(1, 2);
            l1.set(0, 1, 1.0);
            let mut out = Mat::zeros(1, 2);
            out.set(0, 1, 1.0);
            FeedForwardNet::new(4, vec![l0, l1, out]).unwrap()
        };
        assert!(cnn_from_ffnets(&[vec![a, b, mean_net(), mean_net()], vec![mean_net()]], 2).is_err());
    }
}
