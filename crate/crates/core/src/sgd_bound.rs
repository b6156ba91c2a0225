//! Numeric check of the averaged-iterate inequality for projected SGD.
//!
//! For convex differentiable F and per-step objectives F_t with bounded
//! gradients on a closed convex set A, the projected iteration
//! u_{t+1} = Proj_A(u_t - lambda * grad F_t(u_t, v_t)) with lambda = 1/T
//! satisfies
//!
//!   (1/T) sum_t F(u_t, v_t)
//!     <= F(u*, v_0) + (1/T) sum_{t>=1} |F(u*, v_t) - F(u*, v_0)|
//!        + ||u* - u_0||^2 / 2 + D^2 / (2T)
//!        + (1/T) sum_t <grad F(u_t,v_t) - grad F_t(u_t,v_t), u_t - u*>.
//!
//! This module runs the iteration verbatim on a supplied family and returns
//! both sides, so tests can assert lhs <= rhs.

use crate::rng::rng_from_seed;
use rand::Rng;

/// A convex quadratic u |-> 0.5 * (u - c)' diag(q) (u - c) + b with q >= 0.
#[derive(Debug, Clone)]
pub struct ConvexQuadratic {
    pub curvature: Vec<f64>,
    pub center: Vec<f64>,
    pub offset: f64,
}

impl ConvexQuadratic {
    pub fn value(&self, u: &[f64]) -> f64 {
        0.5 * u
            .iter()
            .zip(&self.center)
            .zip(&self.curvature)
            .map(|((u, c), q)| q * (u - c) * (u - c))
            .sum::<f64>()
            + self.offset
    }

    pub fn grad(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.center)
            .zip(&self.curvature)
            .map(|((u, c), q)| q * (u - c))
            .collect()
    }

    /// sup over the ball of radius r of the gradient norm.
    pub fn grad_bound_on_ball(&self, r: f64) -> f64 {
        let qmax = self.curvature.iter().fold(0.0f64, |a, &b| a.max(b));
        let cnorm = self.center.iter().map(|v| v * v).sum::<f64>().sqrt();
        qmax * (r + cnorm)
    }
}

/// Outcome of one inequality check.
#[derive(Debug, Clone, Copy)]
pub struct InequalitySides {
    pub lhs: f64,
    pub rhs: f64,
}

fn project_ball(u: &mut [f64], r: f64) {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > r {
        let s = r / norm;
        for v in u.iter_mut() {
            *v *= s;
        }
    }
}

/// Run the projected iteration for the family `per_step` against the mean
/// objective, on the centered ball of radius `radius`, starting at `u0`.
/// `u_star` is any point of the constraint set. Returns both sides of the
/// inequality, with every term evaluated exactly (including the
/// inner-product residual).
pub fn averaged_iterate_check(
    per_step: &[ConvexQuadratic],
    u0: &[f64],
    u_star: &[f64],
    radius: f64,
) -> InequalitySides {
    let t_total = per_step.len();
    let lambda = 1.0 / t_total as f64;
    let mean_value = |u: &[f64]| -> f64 {
        per_step.iter().map(|f| f.value(u)).sum::<f64>() / t_total as f64
    };
    let mean_grad = |u: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        for f in per_step {
            for (gi, v) in g.iter_mut().zip(f.grad(u)) {
                *gi += v;
            }
        }
        for gi in g.iter_mut() {
            *gi /= t_total as f64;
        }
        g
    };

    let d_bound = per_step
        .iter()
        .map(|f| f.grad_bound_on_ball(radius))
        .fold(0.0f64, f64::max);

    // the iteration must start inside the constraint set
    let mut start = u0.to_vec();
    project_ball(&mut start, radius);
    let mut u = start.clone();
    let mut lhs_sum = 0.0;
    let mut residual_sum = 0.0;
    for f_t in per_step {
        lhs_sum += mean_value(&u);
        let g_mean = mean_grad(&u);
        let g_t = f_t.grad(&u);
        residual_sum += g_mean
            .iter()
            .zip(&g_t)
            .zip(u.iter().zip(u_star))
            .map(|((gm, gt), (ui, us))| (gm - gt) * (ui - us))
            .sum::<f64>();
        for (ui, gi) in u.iter_mut().zip(&g_t) {
            *ui -= lambda * gi;
        }
        project_ball(&mut u, radius);
    }

    let dist0: f64 = start
        .iter()
        .zip(u_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let lhs = lhs_sum / t_total as f64;
    // the v-sequence plays no role for this family: F(u*, v_t) = F(u*, v_0)
    let rhs = mean_value(u_star)
        + dist0 / 2.0
        + d_bound * d_bound / (2.0 * t_total as f64)
        + residual_sum / t_total as f64;
    InequalitySides { lhs, rhs }
}

/// Random convex-quadratic family in the given dimension.
pub fn random_family(dim: usize, steps: usize, seed: u64) -> (Vec<ConvexQuadratic>, Vec<f64>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let fam: Vec<ConvexQuadratic> = (0..steps)
        .map(|_| ConvexQuadratic {
            curvature: (0..dim).map(|_| rng.gen_range(0.0..2.0)).collect(),
            center: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            offset: rng.gen_range(0.0..1.0),
        })
        .collect();
    let u0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let u_star: Vec<f64> = {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        project_ball(&mut v, 1.0);
        v
    };
    (fam, u0, u_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_quadratic_with_optimum_at_origin() {
        // F_t = F = ||u||^2, u* = 0: zero residual, rhs keeps ||u0||^2/2
        let fam: Vec<ConvexQuadratic> = (0..50)
            .map(|_| ConvexQuadratic {
                curvature: vec![2.0, 2.0],
                center: vec![0.0, 0.0],
                offset: 0.0,
            })
            .collect();
        let u0 = vec![0.6, -0.3];
        let sides = averaged_iterate_check(&fam, &u0, &[0.0, 0.0], 1.0);
        assert!(sides.lhs <= sides.rhs + 1e-9);
        let dist_half: f64 = u0.iter().map(|v| v * v).sum::<f64>() / 2.0;
        assert!(sides.rhs >= dist_half);
    }

    #[test]
    fn fifty_random_families_satisfy_the_inequality() {
        for seed in 0..50u64 {
            let (fam, u0, u_star) = random_family(5, 200, seed);
            let sides = averaged_iterate_check(&fam, &u0, &u_star, 1.0);
            assert!(
                sides.lhs <= sides.rhs + 1e-9,
                "violated at seed {seed}: lhs {} rhs {}",
                sides.lhs,
                sides.rhs
            );
        }
    }

    #[test]
    fn constant_objectives_reduce_to_distance_term() {
        let fam: Vec<ConvexQuadratic> = (0..20)
            .map(|i| ConvexQuadratic {
                curvature: vec![0.0, 0.0],
                center: vec![0.0, 0.0],
                offset: 0.3 + 0.01 * i as f64,
            })
            .collect();
        let u0 = vec![0.5, 0.5];
        let u_star = vec![-0.2, 0.1];
        let sides = averaged_iterate_check(&fam, &u0, &u_star, 1.0);
        let dist2: f64 = u0
            .iter()
            .zip(&u_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!((sides.lhs - sides.rhs + dist2 / 2.0).abs() < 1e-12);
    }
}
