//! Euclidean projections onto the outer-weight constraint set and the
//! distance-one ball around the parameter initialization.
//!
//! The outer-weight set is the intersection of the nonnegative orthant, the
//! halfspace sum(w) <= 1 and the ball ||w||_2^2 <= alpha. Each piece has a
//! closed-form projection; the intersection is handled by Dykstra's
//! alternating scheme, which converges to the exact Euclidean projection for
//! intersections of convex sets.

use crate::error::{CoreError, Result};

const DYKSTRA_TOL: f64 = 1e-10;
const DYKSTRA_MAX_ROUNDS: usize = 10_000;

fn proj_orthant(w: &mut [f64]) {
    for v in w.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn proj_mass_halfspace(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    if s > 1.0 {
        let shift = (s - 1.0) / w.len() as f64;
        for v in w.iter_mut() {
            *v -= shift;
        }
    }
}

fn proj_ball(w: &mut [f64], radius: f64) {
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius {
        let scale = if norm > 0.0 { radius / norm } else { 0.0 };
        for v in w.iter_mut() {
            *v *= scale;
        }
    }
}

/// Euclidean projection onto {w >= 0, sum w <= 1, ||w||^2 <= alpha}.
pub fn project_a(w: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let mut out = w.to_vec();
    project_a_into(&mut out, alpha)?;
    Ok(out)
}

/// In-place variant of `project_a`.
pub fn project_a_into(w: &mut [f64], alpha: f64) -> Result<()> {
    if alpha < 0.0 {
        return Err(CoreError::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    let n = w.len();
    let radius = alpha.sqrt();
    // Dykstra increments for the two non-cone sets; the orthant is a cone but
    // the standard scheme keeps an increment per set regardless.
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut prev = w.to_vec();
    for _ in 0..DYKSTRA_MAX_ROUNDS {
        for i in 0..n {
            w[i] += p[i];
        }
        let before: Vec<f64> = w.to_vec();
        proj_orthant(w);
        for i in 0..n {
            p[i] = before[i] - w[i];
        }

        for i in 0..n {
            w[i] += q[i];
        }
        let before: Vec<f64> = w.to_vec();
        proj_mass_halfspace(w);
        for i in 0..n {
            q[i] = before[i] - w[i];
        }

        for i in 0..n {
            w[i] += r[i];
        }
        let before: Vec<f64> = w.to_vec();
        proj_ball(w, radius);
        for i in 0..n {
            r[i] = before[i] - w[i];
        }

        let delta = w
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if delta < DYKSTRA_TOL {
            break;
        }
        prev.copy_from_slice(w);
    }
    // Exact feasibility clamp: nonnegativity first, then the two scalings,
    // which preserve nonnegativity and do not re-break each other.
    proj_orthant(w);
    let s: f64 = w.iter().sum();
    if s > 1.0 {
        for v in w.iter_mut() {
            *v /= s;
        }
    }
    let n2: f64 = w.iter().map(|v| v * v).sum();
    if n2 > alpha {
        let scale = (alpha / n2).sqrt();
        for v in w.iter_mut() {
            *v *= scale;
        }
    }
    Ok(())
}

/// Projection onto the ball of radius one around `theta0` (flat vectors).
pub fn project_b(theta: &[f64], theta0: &[f64]) -> Result<Vec<f64>> {
    let mut out = theta.to_vec();
    project_b_into(&mut out, theta0)?;
    Ok(out)
}

/// In-place variant of `project_b`.
pub fn project_b_into(theta: &mut [f64], theta0: &[f64]) -> Result<()> {
    if theta.len() != theta0.len() {
        return Err(CoreError::Shape(format!(
            "length mismatch {} vs {}",
            theta.len(),
            theta0.len()
        )));
    }
    let dist2: f64 = theta
        .iter()
        .zip(theta0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if dist2 > 1.0 {
        let scale = 1.0 / dist2.sqrt();
        for (t, &t0) in theta.iter_mut().zip(theta0) {
            *t = t0 + (*t - t0) * scale;
        }
    }
    Ok(())
}

/// Exact projection by active-set enumeration, for dim <= 3: every
/// combination of zeroed coordinates and active mass/ball constraints has a
/// closed-form candidate; the feasible candidate closest to w is the
/// projection. Independent of the alternating scheme.
pub fn project_a_exact_oracle(w: &[f64], alpha: f64) -> Vec<f64> {
    let n = w.len();
    assert!((1..=3).contains(&n));
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |cand: Vec<f64>| {
        if cand.iter().any(|v| !(v.is_finite()) || *v < -1e-9) {
            return;
        }
        let cand: Vec<f64> = cand.iter().map(|v| v.max(0.0)).collect();
        if cand.iter().sum::<f64>() > 1.0 + 1e-9 {
            return;
        }
        if cand.iter().map(|v| v * v).sum::<f64>() > alpha + 1e-9 {
            return;
        }
        let d: f64 = cand.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, cand));
        }
    };
    for mask in 0..(1u32 << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        let m = free.len();
        let embed = |xf: &[f64]| {
            let mut full = vec![0.0; n];
            for (slot, &i) in free.iter().enumerate() {
                full[i] = xf[slot];
            }
            full
        };
        if m == 0 {
            consider(vec![0.0; n]);
            continue;
        }
        let wf: Vec<f64> = free.iter().map(|&i| w[i]).collect();
        let s: f64 = wf.iter().sum();
        let qq: f64 = wf.iter().map(|v| v * v).sum();
        // inactive mass and ball
        consider(embed(&wf));
        // mass active
        let shifted: Vec<f64> = wf.iter().map(|v| v - (s - 1.0) / m as f64).collect();
        consider(embed(&shifted));
        // ball active
        if qq > 0.0 {
            let t = alpha.sqrt() / qq.sqrt();
            consider(embed(&wf.iter().map(|v| v * t).collect::<Vec<_>>()));
        }
        // mass and ball active: x = a w + b 1 with sum = 1, norm^2 = alpha
        let denom = qq - s * s / m as f64;
        let inner = alpha - 1.0 / m as f64;
        if denom > 1e-15 && inner >= 0.0 {
            for sign in [1.0f64, -1.0] {
                let a = sign * (inner / denom).sqrt();
                let b = (1.0 - a * s) / m as f64;
                consider(embed(&wf.iter().map(|v| a * v + b).collect::<Vec<_>>()));
            }
        }
    }
    best.expect("the origin is always feasible").1
}

/// Exhaustive grid search for the closest feasible point, used as an oracle
/// for `project_a` in low dimensions. The grid localizes the attained
/// distance to step accuracy; the argmin itself can slide along a curved
/// active boundary, so point comparisons should use the exact oracle.
pub fn project_a_grid_oracle(w: &[f64], alpha: f64, step: f64) -> Vec<f64> {
    let n = w.len();
    assert!(n >= 1 && n <= 3, "oracle only supports dim <= 3");
    let ticks = (1.0 / step).round() as usize;
    let mut best = vec![0.0; n];
    let mut best_d = f64::INFINITY;
    let mut point = vec![0.0; n];
    fn recurse(
        dim: usize,
        n: usize,
        ticks: usize,
        step: f64,
        alpha: f64,
        w: &[f64],
        point: &mut Vec<f64>,
        best: &mut Vec<f64>,
        best_d: &mut f64,
    ) {
        if dim == n {
            let mass: f64 = point.iter().sum();
            if mass > 1.0 + 1e-12 {
                return;
            }
            let sq: f64 = point.iter().map(|v| v * v).sum();
            if sq > alpha + 1e-12 {
                return;
            }
            let d: f64 = point.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < *best_d {
                *best_d = d;
                best.copy_from_slice(point);
            }
            return;
        }
        for t in 0..=ticks {
            point[dim] = t as f64 * step;
            // prune: partial mass already infeasible
            if point[..=dim].iter().sum::<f64>() > 1.0 + 1e-12 {
                break;
            }
            recurse(dim + 1, n, ticks, step, alpha, w, point, best, best_d);
        }
    }
    recurse(0, n, ticks, step, alpha, w, &mut point, &mut best, &mut best_d);
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn feasible(w: &[f64], alpha: f64) -> bool {
        w.iter().all(|&v| v >= 0.0)
            && w.iter().sum::<f64>() <= 1.0 + 1e-12
            && w.iter().map(|v| v * v).sum::<f64>() <= alpha + 1e-12
    }

    #[test]
    fn feasible_point_is_unchanged() {
        let w = vec![0.2, 0.3];
        let p = project_a(&w, 0.5).unwrap();
        assert!(p.iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn two_zero_projects_to_one_zero() {
        // frozen from the 401x401 grid oracle at step 0.005 (alpha = 1)
        let p = project_a(&[2.0, 0.0], 1.0).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-9, "{p:?}");
        assert!(p[1].abs() < 1e-9, "{p:?}");
        let oracle = project_a_grid_oracle(&[2.0, 0.0], 1.0, 0.005);
        let d: f64 = p
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(d <= 1e-3 + 0.005, "distance to oracle {d}");
    }

    #[test]
    fn negative_point_projects_to_origin() {
        for alpha in [0.1, 0.5, 1.0] {
            let p = project_a(&[-1.0, -1.0], alpha).unwrap();
            assert!(p[0].abs() < 1e-12 && p[1].abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_negative_alpha() {
        assert!(project_a(&[0.1], -0.5).is_err());
    }

    #[test]
    fn matches_exact_and_grid_oracles_on_random_inputs() {
        let mut rng = rng_from_seed(77);
        for trial in 0..60 {
            let dim = 1 + trial % 3;
            let alpha = [0.25f64, 0.5, 1.0][(trial / 3) % 3];
            let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..1.5)).collect();
            let p = project_a(&w, alpha).unwrap();
            assert!(feasible(&p, alpha), "infeasible output {p:?}");
            // point accuracy against the exact active-set oracle
            let exact = project_a_exact_oracle(&w, alpha);
            let d: f64 = p
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(d <= 1e-3, "d = {d} for {w:?} alpha {alpha}");
            // attained distance no worse than the brute-force grid's best
            let grid = project_a_grid_oracle(&w, alpha, 0.005);
            let dist = |v: &[f64]| {
                v.iter()
                    .zip(&w)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            };
            assert!(dist(&p) <= dist(&grid) + 1e-3, "{} vs {}", dist(&p), dist(&grid));
        }
    }

    #[test]
    fn project_b_examples() {
        let theta0 = vec![1.0, 1.0];
        // identical
        let p = project_b(&theta0, &theta0).unwrap();
        assert_eq!(p, theta0);
        // distance 2 -> midpoint
        let theta = vec![3.0, 1.0];
        let p = project_b(&theta, &theta0).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
        // interior unchanged
        let theta = vec![1.5, 1.0];
        let p = project_b(&theta, &theta0).unwrap();
        assert_eq!(p, theta);
        // length mismatch
        assert!(project_b(&[1.0], &theta0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn project_a_idempotent_feasible_nonexpansive(
            xs in proptest::collection::vec(-1.5f64..1.5, 1..6),
            ys in proptest::collection::vec(-1.5f64..1.5, 1..6),
            alpha in 0.05f64..1.0,
        ) {
            let n = xs.len().min(ys.len());
            let x = &xs[..n];
            let y = &ys[..n];
            let px = project_a(x, alpha).unwrap();
            let py = project_a(y, alpha).unwrap();
            prop_assert!(feasible(&px, alpha));
            let ppx = project_a(&px, alpha).unwrap();
            let drift: f64 = px.iter().zip(&ppx).map(|(a,b)| (a-b).abs()).fold(0.0, f64::max);
            prop_assert!(drift < 1e-10, "not idempotent: {drift}");
            let d_in: f64 = x.iter().zip(y).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt();
            let d_out: f64 = px.iter().zip(&py).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt();
            prop_assert!(d_out <= d_in + 1e-9, "expansive: {d_out} > {d_in}");
        }

        #[test]
        fn project_b_idempotent_nonexpansive(
            t in proptest::collection::vec(-3.0f64..3.0, 4),
            u in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let theta0 = vec![0.25, -0.5, 1.0, 0.0];
            let pt = project_b(&t, &theta0).unwrap();
            let pu = project_b(&u, &theta0).unwrap();
            let dist0: f64 = pt.iter().zip(&theta0).map(|(a,b)| (a-b)*(a-b)).sum::<f64>();
            prop_assert!(dist0 <= 1.0 + 1e-12);
            let ppt = project_b(&pt, &theta0).unwrap();
            let drift: f64 = pt.iter().zip(&ppt).map(|(a,b)| (a-b).abs()).fold(0.0, f64::max);
            prop_assert!(drift < 1e-10);
            let d_in: f64 = t.iter().zip(&u).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt();
            let d_out: f64 = pt.iter().zip(&pu).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt();
            prop_assert!(d_out <= d_in + 1e-9);
        }
    }
}
