//! Analytic gradients of the per-sample logistic loss of an ensemble, with
//! one-sided subgradient conventions: relu'(z) = 1 iff z >= 0, the truncation
//! derivative is 1 iff |z| <= beta, and the pooling max routes its gradient
//! to the first argmax found in the forward pass.

use crate::cnn::{forward_into, CnnConfig, EnsembleParams, RawForward, Scratch};
use crate::error::{CoreError, Result};
use crate::grid::ImageGrid;
use crate::loss::{relu_gate, truncate, truncate_gate};

/// Gradients with respect to the outer weights and the flat component
/// parameter vector (same layout as `EnsembleParams::thetas`).
#[derive(Debug, Clone)]
pub struct GradBundle {
    pub d_w: Vec<f64>,
    pub d_theta: Vec<f64>,
}

/// Reusable buffers for repeated gradient evaluations.
#[derive(Debug, Default)]
pub struct GradWorkspace {
    scratch: Scratch,
    values: Vec<f64>,
    grads: Vec<Vec<f64>>,
}

/// Gradient of phi(y * f_{(w,theta)}(x)) at the given ensemble.
pub fn grad_ensemble(
    cfg: &CnnConfig,
    ens: &EnsembleParams,
    x: &ImageGrid,
    y: i8,
) -> Result<GradBundle> {
    let mut ws = GradWorkspace::default();
    let mut out = GradBundle {
        d_w: vec![0.0; ens.component_count()],
        d_theta: vec![0.0; ens.thetas.len()],
    };
    grad_ensemble_into(cfg, ens, x, y, &mut ws, &mut out)?;
    Ok(out)
}

/// In-place variant used by the training loop. Also returns the ensemble
/// value f_{(w,theta)}(x).
pub fn grad_ensemble_into(
    cfg: &CnnConfig,
    ens: &EnsembleParams,
    x: &ImageGrid,
    y: i8,
    ws: &mut GradWorkspace,
    out: &mut GradBundle,
) -> Result<f64> {
    if y != 1 && y != -1 {
        return Err(CoreError::Domain(format!("label must be -1 or 1, got {y}")));
    }
    ens.validate(cfg)?;
    cfg.validate_for_image(x.d1(), x.d2())?;
    let per = cfg.param_count();
    let k_count = ens.component_count();
    out.d_w.resize(k_count, 0.0);
    out.d_theta.resize(k_count * per, 0.0);
    let yf = y as f64;

    // Forward every component once, recording values; grids are recomputed
    // per component in the backward loop to keep the workspace small.
    ws.values.clear();
    let mut f_ens = 0.0;
    for k in 0..k_count {
        let raw = forward_into(cfg, ens.component(per, k), x, &mut ws.scratch);
        ws.values.push(raw.value);
        f_ens += ens.w[k] * truncate(cfg.beta, raw.value);
    }

    // phi'(z) = -1/(1+e^z) at z = y*f
    let phi_prime = crate::loss::logistic_loss_deriv(yf * f_ens);

    for k in 0..k_count {
        out.d_w[k] = phi_prime * yf * truncate(cfg.beta, ws.values[k]);
        let gate = truncate_gate(cfg.beta, ws.values[k]);
        let coeff = phi_prime * yf * ens.w[k] * gate;
        let dst = &mut out.d_theta[k * per..(k + 1) * per];
        if coeff == 0.0 {
            dst.fill(0.0);
            continue;
        }
        let raw = forward_into(cfg, ens.component(per, k), x, &mut ws.scratch);
        backward_component(
            cfg,
            ens.component(per, k),
            x,
            &raw,
            &ws.scratch,
            &mut ws.grads,
            coeff,
            dst,
        );
    }
    Ok(f_ens)
}

/// Backprop through head, pooling (frozen argmax route) and the conv stack
/// for one component; writes coeff * d f_theta / d theta into `dst`.
#[allow(clippy::too_many_arguments)]
fn backward_component(
    cfg: &CnnConfig,
    theta: &[f64],
    x: &ImageGrid,
    raw: &RawForward,
    scratch: &Scratch,
    grads: &mut Vec<Vec<f64>>,
    coeff: f64,
    dst: &mut [f64],
) {
    dst.fill(0.0);
    let layout = cfg.layout();
    let d1 = x.d1();
    let d2 = x.d2();
    let grid = d1 * d2;
    let l1 = cfg.conv_layers();
    let z = raw.pool_value;

    // Head.
    dst[layout.head_offset()] = coeff;
    let mut dz = 0.0;
    for u in 0..cfg.head_width {
        let (outer, slope, bias) = layout.head_unit(u);
        let pre = scratch.heads[u];
        let g = relu_gate(pre);
        dst[outer] = coeff * pre.max(0.0);
        dst[slope] = coeff * theta[outer] * g * z;
        dst[bias] = coeff * theta[outer] * g;
        dz += theta[outer] * g * theta[slope];
    }
    let dz = coeff * dz;

    // Pooling: gradient enters only at the forward argmax position.
    let (pi, pj) = raw.pool_argmax;
    let pos_argmax = (pi - 1) * d2 + (pj - 1);
    let k_last = cfg.channels[l1 - 1];
    grads.resize(l1, Vec::new());
    for r in 0..l1 {
        grads[r].clear();
        grads[r].resize(cfg.channels[r] * grid, 0.0);
    }
    for s in 0..k_last {
        dst[layout.out(s)] = dz * scratch.feats[l1 - 1][s * grid + pos_argmax];
        grads[l1 - 1][s * grid + pos_argmax] = dz * theta[layout.out(s)];
    }

    // Conv stack, top down.
    for r in (0..l1).rev() {
        let m = cfg.filter_sizes[r];
        let k = cfg.channels[r];
        let prev_k = if r == 0 { 1 } else { cfg.channels[r - 1] };
        let (g_now, g_prev_opt): (&[f64], Option<&mut Vec<f64>>) = if r == 0 {
            let (first, _) = grads.split_first_mut().unwrap();
            (first.as_slice(), None)
        } else {
            let (before, after) = grads.split_at_mut(r);
            (after[0].as_slice(), Some(&mut before[r - 1]))
        };
        let prev_feats: &[f64] = if r == 0 {
            x.pixels()
        } else {
            &scratch.feats[r - 1]
        };
        let mut g_prev = g_prev_opt;
        for s2 in 0..k {
            for i in 1..=d1 {
                for j in 1..=d2 {
                    let pos = (i - 1) * d2 + (j - 1);
                    let up = g_now[s2 * grid + pos];
                    if up == 0.0 {
                        continue;
                    }
                    let delta = up * relu_gate(scratch.pres[r][s2 * grid + pos]);
                    if delta == 0.0 {
                        continue;
                    }
                    dst[layout.b(r, s2)] += delta;
                    for t1 in 0..m {
                        let ii = i + t1;
                        if ii > d1 {
                            break;
                        }
                        for t2 in 0..m {
                            let jj = j + t2;
                            if jj > d2 {
                                break;
                            }
                            let ppos = (ii - 1) * d2 + (jj - 1);
                            for s1 in 0..prev_k {
                                dst[layout.w(r, t1, t2, s1, s2)] +=
                                    delta * prev_feats[s1 * grid + ppos];
                                if let Some(gp) = g_prev.as_deref_mut() {
                                    gp[s1 * grid + ppos] +=
                                        delta * theta[layout.w(r, t1, t2, s1, s2)];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Central finite differences of a scalar function of a flat vector.
pub fn finite_diff_grad(
    loss_fn: impl Fn(&[f64]) -> f64,
    point: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(CoreError::Precondition(format!("step h must be > 0, got {h}")));
    }
    let mut p = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = loss_fn(&p);
        p[i] = orig - h;
        let fm = loss_fn(&p);
        p[i] = orig;
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::logistic_loss;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn finite_diff_on_quadratic() {
        let g = finite_diff_grad(|v| v.iter().map(|x| x * x).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_on_constant_is_zero() {
        let g = finite_diff_grad(|_| 3.5, &[0.3, -0.7, 2.0], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_diff_of_logistic_at_zero() {
        let g = finite_diff_grad(|v| logistic_loss(v[0]).unwrap(), &[0.0], 1e-5).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-9, "got {}", g[0]);
    }

    fn tiny_setup(seed: u64) -> (CnnConfig, EnsembleParams, ImageGrid) {
        let cfg = CnnConfig {
            channels: vec![2],
            filter_sizes: vec![2],
            head_width: 2,
            beta: 3.0,
        };
        let per = cfg.param_count();
        let mut rng = rng_from_seed(seed);
        let k = 2usize;
        let thetas: Vec<f64> = (0..k * per).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ens = EnsembleParams {
            w: vec![0.4, 0.3],
            thetas: thetas.clone(),
            theta0: thetas,
        };
        let x = ImageGrid::random(3, 3, &mut rng);
        (cfg, ens, x)
    }

    #[test]
    fn outer_gradient_closed_form_at_zero_ensemble_value() {
        // w = 0 gives f = 0, so d_w[j] = -y * T_beta f_j / 2 exactly.
        let (cfg, mut ens, x) = tiny_setup(17);
        ens.w = vec![0.0, 0.0];
        let per = cfg.param_count();
        let g = grad_ensemble(&cfg, &ens, &x, 1).unwrap();
        for k in 0..2 {
            let t = crate::cnn::cnn_forward(
                &cfg,
                &crate::cnn::CnnParams::from_vec(&cfg, ens.component(per, k).to_vec()).unwrap(),
                &x,
            )
            .unwrap();
            let expect = -truncate(cfg.beta, t.value) / 2.0;
            assert!((g.d_w[k] - expect).abs() < 1e-14);
        }
        // and every saturated/zero-weight component has zero theta gradient
        assert!(g.d_theta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_component_gets_zero_theta_gradient() {
        let (cfg, mut ens, x) = tiny_setup(23);
        // inflate component 1 far past the truncation level via head offset
        let per = cfg.param_count();
        let layout = cfg.layout();
        ens.thetas[per + layout.head_offset()] = 100.0;
        let g = grad_ensemble(&cfg, &ens, &x, -1).unwrap();
        assert!(g.d_theta[per..2 * per].iter().all(|&v| v == 0.0));
        assert!(g.d_theta[..per].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn outer_gradient_norm_bound() {
        let (cfg, ens, x) = tiny_setup(29);
        for y in [-1i8, 1] {
            let g = grad_ensemble(&cfg, &ens, &x, y).unwrap();
            let norm2: f64 = g.d_w.iter().map(|v| v * v).sum();
            let bound = ens.w.len() as f64 * cfg.beta * cfg.beta;
            assert!(norm2 <= bound + 1e-12);
        }
    }

    #[test]
    fn analytic_matches_finite_differences_on_random_instance() {
        let (cfg, ens, x) = tiny_setup(31);
        let per = cfg.param_count();
        let g = grad_ensemble(&cfg, &ens, &x, 1).unwrap();
        let loss = |theta: &[f64]| {
            let e2 = EnsembleParams {
                w: ens.w.clone(),
                thetas: theta.to_vec(),
                theta0: ens.theta0.clone(),
            };
            let f = crate::cnn::ensemble_eval(&cfg, &e2, &x).unwrap();
            logistic_loss(f).unwrap()
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
        assert!(num / den < 1e-4, "relative error {}", num / den);
        assert_eq!(g.d_theta.len(), 2 * per);
    }
}
