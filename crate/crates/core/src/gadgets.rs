//! Explicit ReLU network gadgets with printed error bounds and weight
//! certificates: identity, tooth, square, two-input and d-input products,
//! polynomial evaluation, box indicators, gated box tests, and the floor
//! network. Every builder returns the exact construction whose bounds the
//! tests assert.

use crate::error::{CoreError, Result};
use crate::ffnet::{identity_net, FeedForwardNet, Mat};

/// The tooth map g(x) = 2x on [0,1/2], 2(1-x) on (1/2,1]:
/// g(x) = 2 relu(x) - 4 relu(x - 1/2) + 2 relu(x - 1).
pub fn build_tooth_net() -> FeedForwardNet {
    let mut l0 = Mat::zeros(3, 2);
    l0.set(0, 1, 1.0);
    l0.set(1, 0, -0.5);
    l0.set(1, 1, 1.0);
    l0.set(2, 0, -1.0);
    l0.set(2, 1, 1.0);
    let mut out = Mat::zeros(1, 4);
    out.set(0, 1, 2.0);
    out.set(0, 2, -4.0);
    out.set(0, 3, 2.0);
    FeedForwardNet::new(1, vec![l0, out]).expect("tooth net shapes")
}

/// The identity gadget relu(z) - relu(-z).
pub fn build_identity_net() -> FeedForwardNet {
    identity_net(1, 1)
}

/// Piecewise-linear interpolation of x^2 on [0,1] with 2^R+1 breakpoints,
/// S_R(x) = x - sum_s g_s(x)/4^s, as a width-7 depth-R network with every
/// weight bounded by one. Exact at the breakpoints k/2^R; the error peaks at
/// cell midpoints with value exactly 4^{-R-1}.
pub fn build_square_unit_net(r_depth: usize) -> FeedForwardNet {
    assert!(r_depth >= 1);
    // channels per hidden layer: 0,1 id pair of x; 2,3,4 tooth rail holding
    // the scaled iterate; 5,6 accumulator pair (one step behind).
    let mut layers = Vec::with_capacity(r_depth + 1);
    let mut l1 = Mat::zeros(7, 2);
    l1.set(0, 1, 1.0);
    l1.set(1, 1, -1.0);
    l1.set(2, 1, 1.0); // relu(x)
    l1.set(3, 0, -0.5);
    l1.set(3, 1, 1.0); // relu(x - 1/2)
    l1.set(4, 0, -1.0);
    l1.set(4, 1, 1.0); // relu(x - 1)
    layers.push(l1);
    for i in 2..=r_depth {
        // scaled iterate of the previous layer: t = u1/2 - u2 + u3/2
        let h = 4.0f64.powi(-(i as i32 - 1));
        let mut m = Mat::zeros(7, 8);
        // id pair
        m.set(0, 1, 1.0);
        m.set(0, 2, -1.0);
        m.set(1, 1, -1.0);
        m.set(1, 2, 1.0);
        // tooth rail reading t
        for (row, shift) in [(2usize, 0.0f64), (3, h / 2.0), (4, h)] {
            m.set(row, 0, -shift);
            m.set(row, 3, 0.5);
            m.set(row, 4, -1.0);
            m.set(row, 5, 0.5);
        }
        // accumulator pair: A_i = (c+ - c-) - t
        for (row, sign) in [(5usize, 1.0f64), (6, -1.0)] {
            m.set(row, 3, -0.5 * sign);
            m.set(row, 4, 1.0 * sign);
            m.set(row, 5, -0.5 * sign);
            m.set(row, 6, 1.0 * sign);
            m.set(row, 7, -1.0 * sign);
        }
        layers.push(m);
    }
    // output: x + A_R - t_R
    let mut out = Mat::zeros(1, 8);
    out.set(0, 1, 1.0);
    out.set(0, 2, -1.0);
    out.set(0, 3, -0.5);
    out.set(0, 4, 1.0);
    out.set(0, 5, -0.5);
    out.set(0, 6, 1.0);
    out.set(0, 7, -1.0);
    layers.push(out);
    FeedForwardNet::new(1, layers).expect("unit square net shapes")
}

/// Square approximation on [-a, a]: |net(x) - x^2| <= a^2 4^{-R}, width 9,
/// sup weight 4a^2, input-layer weights bounded by one.
pub fn build_square_net(r_depth: usize, a: f64) -> Result<FeedForwardNet> {
    if r_depth < 1 {
        return Err(CoreError::Precondition("square net needs R >= 1".into()));
    }
    if a < 1.0 {
        return Err(CoreError::Precondition(format!("square net needs a >= 1, got {a}")));
    }
    // unit net evaluated at x/(2a) + 1/2, plus an identity rail
    let unit = build_square_unit_net(r_depth).affine_in(&[vec![1.0 / (2.0 * a)]], &[0.5])?;
    let id = identity_net(1, r_depth);
    let stacked = FeedForwardNet::stack(&[unit, id])?;
    stacked.affine_out(&[vec![4.0 * a * a, -2.0 * a]], &[-a * a])
}

/// Product approximation on [-a, a]^2 via the square-difference identity:
/// error <= 2 a^2 4^{-R}, zero output offset, width 18, sup weight 4a^2.
pub fn build_mult_net(r_depth: usize, a: f64) -> Result<FeedForwardNet> {
    if r_depth < 1 || a < 1.0 {
        return Err(CoreError::Precondition(format!(
            "mult net needs R >= 1 and a >= 1, got R={r_depth}, a={a}"
        )));
    }
    // squares with half-width 2a so the sum/difference stays in range
    let plus = build_square_net(r_depth, 2.0 * a)?.affine_in(&[vec![1.0, 1.0]], &[0.0])?;
    let minus = build_square_net(r_depth, 2.0 * a)?.affine_in(&[vec![1.0, -1.0]], &[0.0])?;
    let stacked = FeedForwardNet::stack(&[plus, minus])?;
    stacked.affine_out(&[vec![0.25, -0.25]], &[0.0])
}

/// Smallest admissible depth parameter for the d-input product.
pub fn multd_min_depth(d: usize, a: f64) -> f64 {
    (2.0 * 4.0f64.powi(2 * d as i32) * a.powi(2 * d as i32)).log(4.0)
}

/// d-input product network: a binary tree of pairwise products padded with
/// constant-one inputs, every pairwise block built for the enlarged range
/// [-4^d a^d, 4^d a^d]. Error <= 4^{4d+1} a^{4d} d 4^{-R}; zero output
/// offset; sup weight <= 4^{2d+1} a^{2d}.
pub fn build_multd_net(r_depth: usize, d: usize, a: f64) -> Result<FeedForwardNet> {
    if d < 1 {
        return Err(CoreError::Precondition("need d >= 1".into()));
    }
    if a < 1.0 {
        return Err(CoreError::Precondition(format!("need a >= 1, got {a}")));
    }
    if (r_depth as f64) < multd_min_depth(d, a) {
        return Err(CoreError::Precondition(format!(
            "depth parameter {} below threshold {:.6}",
            r_depth,
            multd_min_depth(d, a)
        )));
    }
    let q = if d == 1 {
        1
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as usize // ceil(log2 d)
    };
    let slots = 1usize << q;
    let range = 4.0f64.powi(d as i32) * a.powi(d as i32);

    // level 1: pair up the padded inputs (x_1..x_d, 1, ..., 1)
    let mut level: Vec<FeedForwardNet> = Vec::with_capacity(slots / 2);
    for p in 0..slots / 2 {
        let mult = build_mult_net(r_depth, range)?;
        let mut amat = vec![vec![0.0; d]; 2];
        let mut bvec = vec![0.0; 2];
        for (slot_in_pair, slot) in [2 * p, 2 * p + 1].into_iter().enumerate() {
            if slot < d {
                amat[slot_in_pair][slot] = 1.0;
            } else {
                bvec[slot_in_pair] = 1.0;
            }
        }
        level.push(mult.affine_in(&amat, &bvec)?);
    }
    let mut tree = FeedForwardNet::stack(&level)?;
    let mut width = slots / 2;
    while width > 1 {
        let mut next: Vec<FeedForwardNet> = Vec::with_capacity(width / 2);
        for p in 0..width / 2 {
            let mult = build_mult_net(r_depth, range)?;
            next.push(mult.select_inputs(&[2 * p, 2 * p + 1], width)?);
        }
        let layer = FeedForwardNet::stack(&next)?;
        tree = FeedForwardNet::chain(&layer, &tree)?;
        width /= 2;
    }
    Ok(tree)
}

/// All exponent vectors of total degree <= n over dim variables in graded
/// lexicographic order.
pub fn monomial_exponents(dim: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=n {
        let mut stack = vec![(Vec::new(), total)];
        while let Some((prefix, rest)) = stack.pop() {
            if prefix.len() == dim {
                if rest == 0 {
                    out.push(prefix);
                }
                continue;
            }
            // push in reverse so the lexicographically largest leading
            // exponent is generated first
            let remaining = dim - prefix.len();
            if remaining == 1 {
                let mut p = prefix;
                p.push(rest);
                out.push(p);
                continue;
            }
            for e in (0..=rest).rev() {
                let mut p = prefix.clone();
                p.push(e);
                stack.push((p, rest - e));
            }
        }
    }
    // the stack reverses order within a degree; sort stably by (degree, lex desc)
    out.sort_by(|x, y| {
        let dx: usize = x.iter().sum();
        let dy: usize = y.iter().sum();
        dx.cmp(&dy).then_with(|| y.cmp(x))
    });
    out
}

/// Smallest admissible depth parameter for the polynomial network.
pub fn poly_min_depth(n: usize, a: f64) -> f64 {
    multd_min_depth(n + 1, a)
}

/// Network computing p(x, y) = sum_i r_i y_i m_i(x) over the monomials
/// m_1..m_B of degree <= n in graded lexicographic order. Inputs: x (dim),
/// then y_1..y_B. Error <= sum_i |r_i| * (d-input product bound for n+1
/// factors); zero output offset.
pub fn build_poly_net(
    r_depth: usize,
    n: usize,
    dim: usize,
    coefficients: &[f64],
) -> Result<FeedForwardNet> {
    let monomials = monomial_exponents(dim, n);
    if coefficients.len() != monomials.len() {
        return Err(CoreError::Shape(format!(
            "need {} coefficients, got {}",
            monomials.len(),
            coefficients.len()
        )));
    }
    if (r_depth as f64) < poly_min_depth(n, 1.0) {
        return Err(CoreError::Precondition(format!(
            "depth parameter {} below threshold {:.6}",
            r_depth,
            poly_min_depth(n, 1.0)
        )));
    }
    let b_count = monomials.len();
    let total_in = dim + b_count;
    let factors = n + 1;
    let mut parts = Vec::with_capacity(b_count);
    for (i, expo) in monomials.iter().enumerate() {
        let prod = build_multd_net(r_depth, factors, 1.0)?;
        // slots: y_i first, then the monomial factors, then constant ones
        let mut amat = vec![vec![0.0; total_in]; factors];
        let mut bvec = vec![0.0; factors];
        amat[0][dim + i] = 1.0;
        let mut slot = 1usize;
        for (var, &e) in expo.iter().enumerate() {
            for _ in 0..e {
                amat[slot][var] = 1.0;
                slot += 1;
            }
        }
        for pad in slot..factors {
            bvec[pad] = 1.0;
        }
        parts.push(prod.affine_in(&amat, &bvec)?);
    }
    let stacked = FeedForwardNet::stack(&parts)?;
    stacked.affine_out(&[coefficients.to_vec()], &[0.0])
}

/// Box indicator: exactly 1_{[a,b)} outside the 1/R-fringe of the box
/// faces, and within [0,1] everywhere. Requires b_i - a_i >= 2/R.
pub fn build_indicator_net(a_vec: &[f64], b_vec: &[f64], r: f64) -> Result<FeedForwardNet> {
    let d = a_vec.len();
    if b_vec.len() != d || d == 0 {
        return Err(CoreError::Shape("indicator box dims mismatch".into()));
    }
    if !(r > 0.0) {
        return Err(CoreError::Precondition("need R > 0".into()));
    }
    for i in 0..d {
        if b_vec[i] - a_vec[i] < 2.0 / r {
            return Err(CoreError::Precondition(format!(
                "box too thin on axis {i}: width {} < 2/R = {}",
                b_vec[i] - a_vec[i],
                2.0 / r
            )));
        }
    }
    let mut l0 = Mat::zeros(2 * d, d + 1);
    for i in 0..d {
        l0.set(2 * i, 0, a_vec[i] + 1.0 / r);
        l0.set(2 * i, i + 1, -1.0);
        l0.set(2 * i + 1, 0, -b_vec[i] + 1.0 / r);
        l0.set(2 * i + 1, i + 1, 1.0);
    }
    let mut l1 = Mat::zeros(1, 2 * d + 1);
    l1.set(0, 0, 1.0);
    for c in 1..=2 * d {
        l1.set(0, c, -r);
    }
    let mut out = Mat::zeros(1, 2);
    out.set(0, 1, 1.0);
    FeedForwardNet::new(d, vec![l0, l1, out])
}

/// Gated box test taking (x, a, b, s) as inputs: equals s * 1_{[a,b)}(x)
/// outside the 1/R-fringe and deviates by at most |s| anywhere. Two hidden
/// layers, sup weight R^2.
pub fn build_test_net_inputs(d: usize, r: f64) -> Result<FeedForwardNet> {
    if d == 0 || !(r > 0.0) {
        return Err(CoreError::Precondition("need d >= 1 and R > 0".into()));
    }
    let input_dim = 3 * d + 1;
    let mut l0 = Mat::zeros(2 * d + 2, input_dim + 1);
    for i in 0..d {
        // relu(a_i + 1/R - x_i)
        l0.set(2 * i, 0, 1.0 / r);
        l0.set(2 * i, 1 + d + i, 1.0);
        l0.set(2 * i, 1 + i, -1.0);
        // relu(x_i - b_i + 1/R)
        l0.set(2 * i + 1, 0, 1.0 / r);
        l0.set(2 * i + 1, 1 + i, 1.0);
        l0.set(2 * i + 1, 1 + 2 * d + i, -1.0);
    }
    // identity pair on s
    l0.set(2 * d, 1 + 3 * d, 1.0);
    l0.set(2 * d + 1, 1 + 3 * d, -1.0);
    let mut l1 = Mat::zeros(2, 2 * d + 3);
    for (row, sign) in [(0usize, 1.0f64), (1, -1.0)] {
        for c in 1..=2 * d {
            l1.set(row, c, -r * r);
        }
        l1.set(row, 2 * d + 1, sign);
        l1.set(row, 2 * d + 2, -sign);
    }
    let mut out = Mat::zeros(1, 3);
    out.set(0, 1, 1.0);
    out.set(0, 2, -1.0);
    FeedForwardNet::new(input_dim, vec![l0, l1, out])
}

/// Box test with the box and gate baked in as constants; input is x alone.
pub fn build_test_net(a_vec: &[f64], b_vec: &[f64], s: f64, r: f64) -> Result<FeedForwardNet> {
    let d = a_vec.len();
    if b_vec.len() != d || d == 0 {
        return Err(CoreError::Shape("test box dims mismatch".into()));
    }
    if s.abs() > r {
        return Err(CoreError::Precondition(format!("need |s| <= R, got |{s}| > {r}")));
    }
    for i in 0..d {
        if b_vec[i] - a_vec[i] < 2.0 / r {
            return Err(CoreError::Precondition(format!(
                "box too thin on axis {i}"
            )));
        }
    }
    let net = build_test_net_inputs(d, r)?;
    // (x, a, b, s) <- (x baked constants)
    let mut amat = vec![vec![0.0; d]; 3 * d + 1];
    let mut bvec = vec![0.0; 3 * d + 1];
    for i in 0..d {
        amat[i][i] = 1.0;
        bvec[d + i] = a_vec[i];
        bvec[2 * d + i] = b_vec[i];
    }
    bvec[3 * d] = s;
    net.affine_in(&amat, &bvec)
}

/// Floor network: sum of B saturated step gadgets. Equals floor(z) when
/// z lies in [0, B+1) at distance >= 1/R from every integer; no output
/// offset; the non-offset input weights are exactly +/-1.
pub fn build_trunc_net(r: f64, b_steps: usize) -> Result<FeedForwardNet> {
    if !(r > 0.0) || b_steps == 0 {
        return Err(CoreError::Precondition("need R > 0 and B >= 1".into()));
    }
    let mut l0 = Mat::zeros(2 * b_steps, 2);
    for j in 1..=b_steps {
        l0.set(2 * (j - 1), 0, -(j as f64));
        l0.set(2 * (j - 1), 1, 1.0);
        l0.set(2 * (j - 1) + 1, 0, -(j as f64) - 1.0 / r);
        l0.set(2 * (j - 1) + 1, 1, 1.0);
    }
    let mut out = Mat::zeros(1, 2 * b_steps + 1);
    for j in 0..b_steps {
        out.set(0, 2 * j + 1, r);
        out.set(0, 2 * j + 2, -r);
    }
    FeedForwardNet::new(1, vec![l0, out])
}

/// Printed error bound of the square gadget.
pub fn square_error_bound(r_depth: usize, a: f64) -> f64 {
    a * a * 4.0f64.powi(-(r_depth as i32))
}

/// Printed error bound of the two-input product gadget.
pub fn mult_error_bound(r_depth: usize, a: f64) -> f64 {
    2.0 * a * a * 4.0f64.powi(-(r_depth as i32))
}

/// Printed error bound of the d-input product gadget.
pub fn multd_error_bound(r_depth: usize, d: usize, a: f64) -> f64 {
    4.0f64.powi(4 * d as i32 + 1) * a.powi(4 * d as i32) * d as f64
        * 4.0f64.powi(-(r_depth as i32))
}

/// Printed sup-norm bound of the square gadget's weights.
pub fn square_weight_bound(a: f64) -> f64 {
    4.0 * a * a
}

/// Printed sup-norm bound of the d-input product gadget's weights.
pub fn multd_weight_bound(d: usize, a: f64) -> f64 {
    4.0 * 4.0f64.powi(2 * d as i32) * a.powi(2 * d as i32)
}

/// Printed sup-norm bound of the indicator gadget's weights.
pub fn indicator_weight_bound(a_vec: &[f64], b_vec: &[f64], r: f64) -> f64 {
    let an = a_vec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bn = b_vec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (an + 1.0 / r).max(bn + 1.0 / r).max(r)
}

/// Printed sup-norm bound of the floor gadget's weights.
pub fn trunc_weight_bound(r: f64, b_steps: usize) -> f64 {
    r.max(b_steps as f64 + 1.0 / r)
}
