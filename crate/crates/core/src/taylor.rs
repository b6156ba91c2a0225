//! Deep piecewise-Taylor approximation networks.
//!
//! The construction partitions [-a,a)^d into M^d coarse cubes, each split
//! into M^d fine cubes visited by a serpentine walk. A state-machine network
//! locates the coarse cube of x, loads the Taylor coefficients and an encoded
//! digit stream of integer corrections, then walks the fine cubes, advancing
//! the coefficients by one-step Taylor shifts plus decoded corrections, and
//! captures the coefficients and corner of the fine cube containing x. A
//! polynomial gadget finally evaluates the Taylor polynomial at x.
//!
//! Alongside the network, the same recursion is provided in plain arithmetic
//! (an independent oracle), together with the direct coefficient-walk
//! formula, a tensor B-spline weight network, a boundary check network, and
//! the gated product net approximating weight(x) * f(x).

use crate::error::{CoreError, Result};
use crate::ffnet::{identity_net, FeedForwardNet, Mat, WeightStats};
use crate::gadgets::{
    build_indicator_net, build_mult_net, build_multd_net, build_test_net_inputs,
    build_trunc_net, monomial_exponents,
};
use std::sync::Arc;

pub type DerivativeOracle = Arc<dyn Fn(&[f64], &[usize]) -> f64 + Send + Sync>;

/// Configuration of one piecewise-Taylor construction.
#[derive(Clone)]
pub struct TaylorConfig {
    /// Domain half-width (>= 1); the partition covers [-a,a)^d + shift.
    pub a: f64,
    /// Grid parameter; M^d coarse cubes, M^{2d} fine cubes.
    pub m: usize,
    /// Taylor degree.
    pub q: usize,
    /// Smoothness exponent p = q + s, s in (0,1].
    pub p: f64,
    /// Hoelder constant of the target's q-th partials.
    pub c_hoelder: f64,
    pub dim: usize,
    /// Domain origin offset per coordinate (used by shifted partitions).
    pub shift: Vec<f64>,
    /// Returns the partial derivative of the target for a multi-index with
    /// |l|_1 <= q at a point.
    pub derivative_oracle: DerivativeOracle,
}

impl std::fmt::Debug for TaylorConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TaylorConfig")
            .field("a", &self.a)
            .field("m", &self.m)
            .field("q", &self.q)
            .field("p", &self.p)
            .field("dim", &self.dim)
            .field("shift", &self.shift)
            .finish()
    }
}

/// Everything produced by the builder.
pub struct TaylorBuild {
    pub cfg: TaylorConfig,
    /// The Taylor-evaluating network itself (reliable on cell interiors).
    pub deep_net: FeedForwardNet,
    /// Tensor B-spline weight network.
    pub weight_net: FeedForwardNet,
    /// 1 near fine-cell boundaries, 0 deep inside cells.
    pub check_net: FeedForwardNet,
    /// Gated product approximating weight(x) * f(x) everywhere.
    pub wf_net: FeedForwardNet,
    /// Stats over the assembled product network.
    pub certificate: WeightStats,
    /// Reported growth rate c with sup-norm <= e^{c (p+1) M^d}.
    pub growth_rate: f64,
    /// Whether the printed size condition on M held (with unit constants).
    pub size_condition_ok: bool,
    // ----- data shared by the arithmetic oracles -----
    lidx: Vec<Vec<usize>>,
    lfact: Vec<f64>,
    walk: Vec<Vec<usize>>,
    walk_pos: Vec<usize>,
    digits: Vec<Vec<Vec<i64>>>,
    b_enc: Vec<Vec<f64>>,
    dvals: Vec<Vec<f64>>,
    base: f64,
    ceil_ed: f64,
    c36: f64,
    fine_h: f64,
    coarse_h: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product::<f64>().max(1.0)
}

fn multi_factorial(l: &[usize]) -> f64 {
    l.iter().map(|&e| factorial(e)).product()
}

/// Serpentine enumeration of {0..m-1}^dim: consecutive entries differ in
/// exactly one coordinate by +/-1.
fn serpentine(dim: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * m);
        for (block, prefix) in out.iter().enumerate() {
            let forward = block % 2 == 0;
            for step in 0..m {
                let digit = if forward { step } else { m - 1 - step };
                let mut v = prefix.clone();
                v.push(digit);
                next.push(v);
            }
        }
        out = next;
    }
    // entries were built prefix-major; reorder so the LAST axis is the
    // serpentine-fastest one by construction above
    out
}

impl TaylorBuild {
    /// Lower-left corner of coarse cube j (0-based walk order shared with
    /// the fine walk's relative offsets).
    fn coarse_corner(&self, j: usize) -> Vec<f64> {
        let d = self.cfg.dim;
        (0..d)
            .map(|k| -self.cfg.a + self.cfg.shift[k] + self.walk[j][k] as f64 * self.coarse_h)
            .collect()
    }

    /// The exact recursion: the six state families evolved step by step in
    /// plain arithmetic, independent of the network.
    pub fn recursion_oracle(&self, x: &[f64]) -> Result<f64> {
        let d = self.cfg.dim;
        if x.len() != d {
            return Err(CoreError::Shape("point dim mismatch".into()));
        }
        let steps = self.walk.len();
        let nl = self.lidx.len();
        let phi1 = x.to_vec();
        let mut phi2 = vec![0.0; d];
        let mut phi3 = vec![0.0; nl];
        let mut phi4 = vec![0.0; nl];
        // phase 1: locate the coarse cube, load coefficients and digits
        for j in 0..steps {
            let corner = self.coarse_corner(j);
            let inside = (0..d).all(|k| {
                phi1[k] >= corner[k] && phi1[k] < corner[k] + self.coarse_h
            });
            if inside {
                for k in 0..d {
                    phi2[k] += corner[k];
                }
                for v in 0..nl {
                    phi3[v] += self.dvals[j][v];
                    phi4[v] += self.b_enc[j][v];
                }
            }
        }
        // phase 2: walk the fine cubes
        let mut phi5 = vec![0.0; d];
        let mut phi6 = vec![0.0; nl];
        for j in 0..steps {
            // capture first: the membership test reads the pre-update state
            let inside = (0..d).all(|k| {
                phi1[k] >= phi2[k] && phi1[k] < phi2[k] + self.fine_h
            });
            if inside {
                for k in 0..d {
                    phi5[k] += phi2[k];
                }
                for v in 0..nl {
                    phi6[v] += phi3[v];
                }
            }
            if j + 1 < steps {
                let shift: Vec<f64> = (0..d)
                    .map(|k| (self.walk[j + 1][k] as f64 - self.walk[j][k] as f64) * self.fine_h)
                    .collect();
                let mut next3 = vec![0.0; nl];
                for (vi, l) in self.lidx.iter().enumerate() {
                    let mut acc = 0.0;
                    for s in &self.lidx {
                        let total: usize = l.iter().zip(s).map(|(a, b)| a + b).sum();
                        if total > self.cfg.q {
                            continue;
                        }
                        let sum_idx: Vec<usize> =
                            l.iter().zip(s).map(|(a, b)| a + b).collect();
                        let pos = self.lidx.iter().position(|m| *m == sum_idx).unwrap();
                        let mut pow = 1.0;
                        for (k, &e) in s.iter().enumerate() {
                            for _ in 0..e {
                                pow *= shift[k];
                            }
                        }
                        acc += phi3[pos] / multi_factorial(s) * pow;
                    }
                    let scaled = self.base * phi4[vi];
                    let digit = scaled.floor();
                    let correction = (digit - self.ceil_ed - 2.0) * self.unit(l);
                    next3[vi] = acc + correction;
                }
                for (vi, _l) in self.lidx.iter().enumerate() {
                    let scaled = self.base * phi4[vi];
                    phi4[vi] = scaled - scaled.floor();
                }
                phi3 = next3;
                for k in 0..d {
                    phi2[k] += shift[k];
                }
            }
        }
        // final polynomial
        let mut out = 0.0;
        for (vi, l) in self.lidx.iter().enumerate() {
            let mut pow = 1.0;
            for (k, &e) in l.iter().enumerate() {
                for _ in 0..e {
                    pow *= phi1[k] - phi5[k];
                }
            }
            out += phi6[vi] / self.lfact[vi] * pow;
        }
        Ok(out)
    }

    /// Correction unit for multi-index l.
    fn unit(&self, l: &[usize]) -> f64 {
        let norm: usize = l.iter().sum();
        self.c36 * self.fine_h.powf(self.cfg.p - norm as f64)
    }

    /// Locate the fine cube of x: (coarse walk position, fine walk step).
    fn locate(&self, x: &[f64]) -> Result<(usize, usize)> {
        let d = self.cfg.dim;
        let m = self.cfg.m;
        let mut coarse_idx = vec![0usize; d];
        let mut fine_idx = vec![0usize; d];
        for k in 0..d {
            let t = x[k] + self.cfg.a - self.cfg.shift[k];
            if t < 0.0 || t >= 2.0 * self.cfg.a {
                return Err(CoreError::Domain(format!(
                    "coordinate {k} outside the partition domain"
                )));
            }
            let c = (t / self.coarse_h).floor().min((m - 1) as f64) as usize;
            coarse_idx[k] = c;
            let rem = t - c as f64 * self.coarse_h;
            fine_idx[k] = (rem / self.fine_h).floor().min((m - 1) as f64) as usize;
        }
        let coarse_step = self.walk_position(&coarse_idx);
        let fine_step = self.walk_position(&fine_idx);
        Ok((coarse_step, fine_step))
    }

    fn walk_position(&self, idx: &[usize]) -> usize {
        let m = self.cfg.m;
        let mut linear = 0usize;
        for &v in idx {
            linear = linear * m + v;
        }
        self.walk_pos[linear]
    }

    /// Direct coefficient-walk evaluation: locate the fine cube, advance the
    /// stored coefficients along the walk with the recorded corrections, and
    /// evaluate the Taylor polynomial.
    pub fn direct_taylor(&self, x: &[f64]) -> Result<f64> {
        let (coarse, fine) = self.locate(x)?;
        let nl = self.lidx.len();
        let mut est: Vec<f64> = self.dvals[coarse].clone();
        for step in 0..fine {
            let shift: Vec<f64> = (0..self.cfg.dim)
                .map(|k| {
                    (self.walk[step + 1][k] as f64 - self.walk[step][k] as f64) * self.fine_h
                })
                .collect();
            let mut next = vec![0.0; nl];
            for (vi, l) in self.lidx.iter().enumerate() {
                let mut acc = 0.0;
                for s in &self.lidx {
                    let total: usize = l.iter().zip(s).map(|(a, b)| a + b).sum();
                    if total > self.cfg.q {
                        continue;
                    }
                    let sum_idx: Vec<usize> = l.iter().zip(s).map(|(a, b)| a + b).collect();
                    let pos = self.lidx.iter().position(|m| *m == sum_idx).unwrap();
                    let mut pow = 1.0;
                    for (k, &e) in s.iter().enumerate() {
                        for _ in 0..e {
                            pow *= shift[k];
                        }
                    }
                    acc += est[pos] / multi_factorial(s) * pow;
                }
                next[vi] = acc + self.digits[coarse][vi][step] as f64 * self.unit(l);
            }
            est = next;
        }
        let corner: Vec<f64> = {
            let cc = self.coarse_corner(coarse);
            (0..self.cfg.dim)
                .map(|k| cc[k] + self.walk[fine][k] as f64 * self.fine_h)
                .collect()
        };
        let mut out = 0.0;
        for (vi, l) in self.lidx.iter().enumerate() {
            let mut pow = 1.0;
            for (k, &e) in l.iter().enumerate() {
                for _ in 0..e {
                    pow *= x[k] - corner[k];
                }
            }
            out += est[vi] / self.lfact[vi] * pow;
        }
        Ok(out)
    }

    /// Exact tensor B-spline weight centered in the fine cube of x.
    pub fn exact_weight(&self, x: &[f64]) -> Result<f64> {
        let (coarse, fine) = self.locate(x)?;
        let cc = self.coarse_corner(coarse);
        let mut w = 1.0;
        for k in 0..self.cfg.dim {
            let c = cc[k] + self.walk[fine][k] as f64 * self.fine_h;
            let u = 1.0 - (2.0 / self.fine_h) * (c + self.fine_h / 2.0 - x[k]).abs();
            w *= u.max(0.0);
        }
        Ok(w)
    }

    /// Distance from x to the nearest fine-cell boundary.
    pub fn interior_margin(&self, x: &[f64]) -> f64 {
        let mut margin = f64::INFINITY;
        for k in 0..self.cfg.dim {
            let t = x[k] + self.cfg.a - self.cfg.shift[k];
            let r = (t / self.fine_h).fract() * self.fine_h;
            margin = margin.min(r.min(self.fine_h - r));
        }
        margin
    }

    /// Fringe width inside which the gadgets are allowed to be inexact.
    pub fn fringe(&self) -> f64 {
        1.0 / (self.cfg.m as f64).powf(2.0 * self.cfg.p + 2.0)
    }
}

fn check_envelope(cfg: &TaylorConfig) -> Result<()> {
    if !(cfg.dim == 1 || cfg.dim == 2) {
        return Err(CoreError::UnsupportedScale(format!(
            "dim {} outside the supported envelope",
            cfg.dim
        )));
    }
    if cfg.q > 2 {
        return Err(CoreError::UnsupportedScale(format!(
            "degree {} outside the supported envelope",
            cfg.q
        )));
    }
    if !(2..=4).contains(&cfg.m) {
        return Err(CoreError::UnsupportedScale(format!(
            "grid parameter {} outside 2..=4",
            cfg.m
        )));
    }
    let ceil_ed = (std::f64::consts::E.powi(cfg.dim as i32)).ceil();
    let base = 4.0 + 2.0 * ceil_ed;
    let steps = (cfg.m as f64).powi(cfg.dim as i32);
    // the digit stream must stay resolvable in f64 arithmetic
    if base.powf(steps) > 2.0f64.powi(40) {
        return Err(CoreError::UnsupportedScale(format!(
            "digit stream base^{{M^d}} = {base}^{steps} exceeds the float-safe range"
        )));
    }
    if cfg.shift.len() != cfg.dim {
        return Err(CoreError::Shape("shift length must match dim".into()));
    }
    if cfg.a < 1.0 {
        return Err(CoreError::Precondition("need a >= 1".into()));
    }
    if cfg.p < cfg.q as f64 || cfg.p > cfg.q as f64 + 1.0 {
        return Err(CoreError::Precondition(format!(
            "p = {} must lie in ({}, {}]",
            cfg.p,
            cfg.q,
            cfg.q + 1
        )));
    }
    Ok(())
}

/// Build the full construction.
pub fn build_taylor_net(cfg: &TaylorConfig) -> Result<TaylorBuild> {
    check_envelope(cfg)?;
    let d = cfg.dim;
    let m = cfg.m;
    let nl_indices = monomial_exponents(d, cfg.q);
    let nl = nl_indices.len();
    let lfact: Vec<f64> = nl_indices.iter().map(|l| multi_factorial(l)).collect();
    let ceil_ed = (std::f64::consts::E.powi(d as i32)).ceil();
    let base = 4.0 + 2.0 * ceil_ed;
    let steps = m.pow(d as u32);
    let coarse_h = 2.0 * cfg.a / m as f64;
    let fine_h = coarse_h / m as f64;
    let c36 = cfg.c_hoelder * (d as f64).powf(cfg.p);
    let walk = serpentine(d, m);
    let mut walk_pos = vec![0usize; steps];
    for (pos, idx) in walk.iter().enumerate() {
        let mut linear = 0usize;
        for &v in idx {
            linear = linear * m + v;
        }
        walk_pos[linear] = pos;
    }

    // ---- derivative tables and digit streams per coarse cube ----
    let oracle = &cfg.derivative_oracle;
    let mut dvals = Vec::with_capacity(steps);
    let mut digits: Vec<Vec<Vec<i64>>> = Vec::with_capacity(steps);
    let mut b_enc: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut f_norm = cfg.a;
    let mut digit_overflow = false;
    for coarse in 0..steps {
        let corner0: Vec<f64> = (0..d)
            .map(|k| -cfg.a + cfg.shift[k] + walk[coarse][k] as f64 * coarse_h)
            .collect();
        let vals0: Vec<f64> = nl_indices.iter().map(|l| oracle(&corner0, l)).collect();
        for &v in &vals0 {
            f_norm = f_norm.max(v.abs());
        }
        // walk the fine cubes, recording rounded corrections
        let mut est = vals0.clone();
        let mut cube_digits: Vec<Vec<i64>> = vec![Vec::with_capacity(steps); nl];
        for step in 0..steps - 1 {
            let shift: Vec<f64> = (0..d)
                .map(|k| (walk[step + 1][k] as f64 - walk[step][k] as f64) * fine_h)
                .collect();
            let corner: Vec<f64> = (0..d)
                .map(|k| corner0[k] + walk[step + 1][k] as f64 * fine_h)
                .collect();
            let mut next = vec![0.0; nl];
            for (vi, l) in nl_indices.iter().enumerate() {
                let mut adv = 0.0;
                for s in &nl_indices {
                    let total: usize = l.iter().zip(s).map(|(a, b)| a + b).sum();
                    if total > cfg.q {
                        continue;
                    }
                    let sum_idx: Vec<usize> = l.iter().zip(s).map(|(a, b)| a + b).collect();
                    let pos = nl_indices.iter().position(|w| *w == sum_idx).unwrap();
                    let mut pow = 1.0;
                    for (k, &e) in s.iter().enumerate() {
                        for _ in 0..e {
                            pow *= shift[k];
                        }
                    }
                    adv += est[pos] / multi_factorial(s) * pow;
                }
                let truth = oracle(&corner, l);
                f_norm = f_norm.max(truth.abs());
                let norm: usize = l.iter().sum();
                let unit = c36 * fine_h.powf(cfg.p - norm as f64);
                let mut b = ((truth - adv) / unit).round();
                let cap = ceil_ed + 1.0;
                if b.abs() > cap {
                    digit_overflow = true;
                    b = b.clamp(-cap, cap);
                }
                cube_digits[vi].push(b as i64);
                next[vi] = adv + b * unit;
            }
            est = next;
        }
        // encode: digit_k = b_k + ceil(e^d) + 2 for the real steps, one
        // neutral pad digit keeps the final floor extraction off integers
        let enc: Vec<f64> = (0..nl)
            .map(|vi| {
                let mut acc = 0.0;
                for (k, &b) in cube_digits[vi].iter().enumerate() {
                    acc += (b as f64 + ceil_ed + 2.0) * base.powi(-(k as i32 + 1));
                }
                acc += (ceil_ed + 2.0) * base.powi(-(steps as i32));
                acc
            })
            .collect();
        digits.push(cube_digits);
        b_enc.push(enc);
        dvals.push(vals0);
    }

    // printed size condition with unit constants
    let size_condition_ok = !digit_overflow
        && (m as f64).powf(2.0 * cfg.p)
            >= 2.0f64.powi(4 * (cfg.q as i32 + 1) + 1)
                * (6.0 + 2.0 * ceil_ed).powi(4 * (cfg.q as i32 + 1))
                * f_norm.max(cfg.a).powi(4 * (cfg.q as i32 + 1));

    // ---- the state machine network ----
    // state: [phi1 d | phi2 d | phi3 nl | phi4 nl | phi5 d | phi6 nl |
    //         s1 1 | tpend 1 | tacc 1]
    let d_state = 3 * d + 3 * nl + 3;
    let o_phi1 = 0;
    let o_phi2 = d;
    let o_phi3 = 2 * d;
    let o_phi4 = 2 * d + nl;
    let o_phi5 = 2 * d + 2 * nl;
    let o_phi6 = 3 * d + 2 * nl;
    let o_s1 = 3 * d + 3 * nl;
    let o_tpend = o_s1 + 1;
    let o_tacc = o_s1 + 2;

    let b_m = (m as f64).powf(2.0 * cfg.p + 2.0);
    let delta = 1.0 / b_m;

    // embedding: x -> initial state
    let mut embed = Mat::zeros(d_state, d + 1);
    for k in 0..d {
        embed.set(o_phi1 + k, k + 1, 1.0);
    }
    let mut machine = FeedForwardNet::new(d, vec![embed])?;

    // phase 1 blocks
    for j in 0..steps {
        let corner: Vec<f64> = (0..d)
            .map(|k| -cfg.a + cfg.shift[k] + walk[j][k] as f64 * coarse_h)
            .collect();
        let hi: Vec<f64> = corner.iter().map(|c| c + coarse_h).collect();
        let ind_full =
            build_indicator_net(&corner, &hi, b_m)?.select_inputs(&sel(o_phi1, d), d_state)?;
        let shrunk_lo: Vec<f64> = corner.iter().map(|c| c + delta).collect();
        let shrunk_hi: Vec<f64> = hi.iter().map(|c| c - delta).collect();
        let ind_shrunk = build_indicator_net(&shrunk_lo, &shrunk_hi, b_m)?
            .select_inputs(&sel(o_phi1, d), d_state)?;
        let id = identity_net(d_state, 2);
        let block_in = FeedForwardNet::stack(&[ind_full, ind_shrunk, id])?;
        // outputs: [ind, ind_shrunk, state...]
        let width = 2 + d_state;
        let mut amat = vec![vec![0.0; width]; d_state];
        let bvec = vec![0.0; d_state];
        for r in 0..d_state {
            amat[r][2 + r] = 1.0; // identity pass-through
        }
        for k in 0..d {
            amat[o_phi2 + k][0] = corner[k];
        }
        for v in 0..nl {
            amat[o_phi3 + v][0] = dvals[j][v];
            amat[o_phi4 + v][0] = b_enc[j][v];
        }
        amat[o_s1][1] = 1.0;
        let block = block_in.affine_out(&amat, &bvec)?;
        machine = FeedForwardNet::chain(&block, &machine)?;
    }

    // phase 2 blocks
    for j in 0..steps {
        let mut parts: Vec<FeedForwardNet> = Vec::new();
        // 0: full-state identity
        parts.push(identity_net(d_state, 2).select_inputs(&sel(0, d_state), d_state)?);
        // floor gadgets per coefficient (j < steps-1)
        let is_last = j + 1 == steps;
        let r_trunc = base.powi((steps - 1 - j) as i32);
        if !is_last {
            for v in 0..nl {
                let trunc = build_trunc_net(r_trunc.max(2.0), base as usize)?;
                let scaled =
                    trunc.affine_in(&[vec![base]], &[0.0])?.pad_depth(2)?;
                parts.push(scaled.select_inputs(&[o_phi4 + v], d_state)?);
            }
        }
        // capture tests for the corner and each coefficient
        let test = build_test_net_inputs(d, b_m)?;
        for k in 0..d {
            parts.push(capture_test(&test, d, d_state, o_phi1, o_phi2, o_phi2 + k, fine_h)?);
        }
        for v in 0..nl {
            parts.push(capture_test(&test, d, d_state, o_phi1, o_phi2, o_phi3 + v, fine_h)?);
        }
        // strip test: x in the delta-shrunk fine box, gate constant one
        parts.push(strip_test(d, d_state, o_phi1, o_phi2, fine_h, delta, b_m)?);
        // pending-gate relu
        parts.push(gate_relu(d_state, o_tpend)?);

        let stacked = FeedForwardNet::stack(&parts)?;
        // output map
        let n_out = stacked.output_dim();
        let mut col = 0usize;
        let c_state = col;
        col += d_state;
        let c_trunc = col;
        if !is_last {
            col += nl;
        }
        let c_test5 = col;
        col += d;
        let c_test6 = col;
        col += nl;
        let c_strip = col;
        col += 1;
        let c_gate = col;
        col += 1;
        debug_assert_eq!(col, n_out);

        let mut amat = vec![vec![0.0; n_out]; d_state];
        let mut bvec = vec![0.0; d_state];
        // phi1 carried
        for k in 0..d {
            amat[o_phi1 + k][c_state + o_phi1 + k] = 1.0;
        }
        // phi2 carried (+ shift when not last)
        let shift: Vec<f64> = if is_last {
            vec![0.0; d]
        } else {
            (0..d)
                .map(|k| (walk[j + 1][k] as f64 - walk[j][k] as f64) * fine_h)
                .collect()
        };
        for k in 0..d {
            amat[o_phi2 + k][c_state + o_phi2 + k] = 1.0;
            bvec[o_phi2 + k] = shift[k];
        }
        // phi3: Taylor advance plus decoded correction
        for (vi, l) in nl_indices.iter().enumerate() {
            if is_last {
                amat[o_phi3 + vi][c_state + o_phi3 + vi] = 1.0;
                continue;
            }
            for s in &nl_indices {
                let total: usize = l.iter().zip(s).map(|(a, b)| a + b).sum();
                if total > cfg.q {
                    continue;
                }
                let sum_idx: Vec<usize> = l.iter().zip(s).map(|(a, b)| a + b).collect();
                let pos = nl_indices.iter().position(|w| *w == sum_idx).unwrap();
                let mut pow = 1.0;
                for (k, &e) in s.iter().enumerate() {
                    for _ in 0..e {
                        pow *= shift[k];
                    }
                }
                amat[o_phi3 + vi][c_state + o_phi3 + pos] += pow / multi_factorial(s);
            }
            let norm: usize = l.iter().sum();
            let unit = c36 * fine_h.powf(cfg.p - norm as f64);
            amat[o_phi3 + vi][c_trunc + vi] = unit;
            bvec[o_phi3 + vi] = -(ceil_ed + 2.0) * unit;
        }
        // phi4: base * phi4 - floor
        for vi in 0..nl {
            if is_last {
                amat[o_phi4 + vi][c_state + o_phi4 + vi] = 1.0;
            } else {
                amat[o_phi4 + vi][c_state + o_phi4 + vi] = base;
                amat[o_phi4 + vi][c_trunc + vi] = -1.0;
            }
        }
        // phi5 / phi6 accumulate the gated captures
        for k in 0..d {
            amat[o_phi5 + k][c_state + o_phi5 + k] = 1.0;
            amat[o_phi5 + k][c_test5 + k] = 1.0;
        }
        for v in 0..nl {
            amat[o_phi6 + v][c_state + o_phi6 + v] = 1.0;
            amat[o_phi6 + v][c_test6 + v] = 1.0;
        }
        // s1 carried; tpend refreshed; tacc accumulates the previous gate
        amat[o_s1][c_state + o_s1] = 1.0;
        amat[o_tpend][c_strip] = 1.0;
        amat[o_tpend][c_state + o_s1] = 1.0;
        bvec[o_tpend] = -1.0;
        amat[o_tacc][c_state + o_tacc] = 1.0;
        amat[o_tacc][c_gate] = 1.0;

        let block = stacked.affine_out(&amat, &bvec)?;
        machine = FeedForwardNet::chain(&block, &machine)?;
    }

    // finishing block: absorb the last pending gate into tacc
    {
        let id = identity_net(d_state, 2).select_inputs(&sel(0, d_state), d_state)?;
        let gate = gate_relu(d_state, o_tpend)?;
        let stacked = FeedForwardNet::stack(&[id, gate])?;
        let n_out = d_state + 1;
        let mut amat = vec![vec![0.0; n_out]; d_state];
        let bvec = vec![0.0; d_state];
        for r in 0..d_state {
            amat[r][r] = 1.0;
        }
        amat[o_tacc][d_state] = 1.0;
        let block = stacked.affine_out(&amat, &bvec)?;
        machine = FeedForwardNet::chain(&block, &machine)?;
    }

    // reduce to the head interface: [phi1 d | phi5 d | phi6 nl | check 1]
    // check = relu(1 - tacc) computed by one extra hidden layer
    {
        let id = identity_net(d_state, 1).select_inputs(&sel(0, d_state), d_state)?;
        let mut comp = Mat::zeros(1, d_state + 1);
        comp.set(0, 0, 1.0);
        comp.set(0, o_tacc + 1, -1.0);
        let mut out = Mat::zeros(1, 2);
        out.set(0, 1, 1.0);
        let check_head = FeedForwardNet::new(d_state, vec![comp, out])?;
        let stacked = FeedForwardNet::stack(&[id, check_head])?;
        let n_out = d_state + 1;
        let head_dim = 2 * d + nl + 1;
        let mut amat = vec![vec![0.0; n_out]; head_dim];
        let bvec = vec![0.0; head_dim];
        for k in 0..d {
            amat[k][o_phi1 + k] = 1.0;
            amat[d + k][o_phi5 + k] = 1.0;
        }
        for v in 0..nl {
            amat[2 * d + v][o_phi6 + v] = 1.0;
        }
        amat[2 * d + nl][d_state] = 1.0;
        let block = stacked.affine_out(&amat, &bvec)?;
        machine = FeedForwardNet::chain(&block, &machine)?;
    }
    let head_dim = 2 * d + nl + 1;

    // ---- heads ----
    // Polynomial head over (z = phi1 - phi5, y = phi6). Products are built
    // per term with ranges matching the actual factor magnitudes: monomial
    // factors are cell-local (|z| <= fine_h), only the coefficient gate
    // needs the worst-case range, keeping float cancellation negligible.
    let range_y = 2.0 * f_norm.max(cfg.a) * std::f64::consts::E.powi(steps as i32 - 1)
        + base * (steps as f64 - 1.0) * std::f64::consts::E.powi(steps as i32 - 2);
    let b_mp = ((m as f64).powf(2.0 * cfg.p + 4.0 * d as f64 * (cfg.q as f64 + 1.0))
        * std::f64::consts::E.powf(4.0 * (cfg.q as f64 + 1.0) * (steps as f64 - 1.0)))
    .log(4.0)
    .ceil() as usize
        + 8;
    let deep_head = taylor_poly_head(&nl_indices, d, nl, head_dim, range_y.max(1.0), b_mp)?;

    // weight head: per-axis hats at the captured corner, multiplied
    let hat_scale = 2.0 / fine_h; // M^2 / a
    let mut hat_l0 = Mat::zeros(3 * d, head_dim + 1);
    for k in 0..d {
        for (t, off) in [(0usize, 0.0f64), (1, fine_h / 2.0), (2, fine_h)] {
            hat_l0.set(3 * k + t, 0, -hat_scale * off);
            hat_l0.set(3 * k + t, 1 + k, hat_scale);
            hat_l0.set(3 * k + t, 1 + d + k, -hat_scale);
        }
    }
    let mut hat_out = Mat::zeros(d, 3 * d + 1);
    for k in 0..d {
        hat_out.set(k, 1 + 3 * k, 1.0);
        hat_out.set(k, 2 + 3 * k, -2.0);
        hat_out.set(k, 3 + 3 * k, 1.0);
    }
    let hats = FeedForwardNet::new(head_dim, vec![hat_l0, hat_out])?;
    let r_w = ((m as f64).powf(2.0 * cfg.p)).log(4.0).ceil() as usize + 8;
    let multd = build_multd_net(r_w, d, 1.0)?;
    let weight_head = FeedForwardNet::chain(&multd, &hats)?;

    // check head: pass-through of the check output
    let check_head = {
        let mut out = Mat::zeros(1, head_dim + 1);
        out.set(0, 1 + 2 * d + nl, 1.0);
        FeedForwardNet::new(head_dim, vec![out])?
    };

    // synchronize head depths and stack
    let depth = deep_head.depth().max(weight_head.depth()).max(1);
    let deep_head_p = deep_head.pad_depth(depth)?;
    let weight_head_p = weight_head.pad_depth(depth)?;
    let check_head_p = check_head.pad_depth(depth)?;
    let heads = FeedForwardNet::stack(&[deep_head_p, weight_head_p, check_head_p])?;
    let headed = FeedForwardNet::chain(&heads, &machine)?;

    let deep_net = FeedForwardNet::chain(
        &selector(3, 0),
        &headed,
    )?;
    let weight_net = FeedForwardNet::chain(&selector(3, 1), &headed)?;
    let check_net = FeedForwardNet::chain(&selector(3, 2), &headed)?;

    // gated product: relu-gate the deep value with the boundary check, then
    // multiply with the weight
    let b_true = 1.0
        + (f_norm * std::f64::consts::E.powi(steps as i32 - 1)
            + base * (steps as f64 - 1.0) * std::f64::consts::E.powi(steps as i32 - 2))
            * std::f64::consts::E.powf(2.0 * cfg.a * d as f64);
    let mut gate_l0 = Mat::zeros(4, 4);
    // inputs: [deep, weight, check]
    gate_l0.set(0, 1, 1.0);
    gate_l0.set(0, 3, -b_true);
    gate_l0.set(1, 1, -1.0);
    gate_l0.set(1, 3, -b_true);
    gate_l0.set(2, 2, 1.0);
    gate_l0.set(3, 2, -1.0);
    let mut gate_out = Mat::zeros(2, 5);
    gate_out.set(0, 1, 1.0);
    gate_out.set(0, 2, -1.0);
    gate_out.set(1, 3, 1.0);
    gate_out.set(1, 4, -1.0);
    let gate = FeedForwardNet::new(3, vec![gate_l0, gate_out])?;
    let gated = FeedForwardNet::chain(&gate, &headed)?;
    let r_mult = ((2.0 * b_true * b_true).log(4.0).ceil() as usize)
        + ((m as f64).powf(2.0 * cfg.p)).log(4.0).ceil() as usize
        + 10;
    let mult = build_mult_net(r_mult, b_true.max(1.0))?;
    let wf_net = FeedForwardNet::chain(&mult, &gated)?;

    let certificate = wf_net.weight_stats();
    let growth_rate =
        certificate.sup_norm.max(1.0).ln() / ((cfg.p + 1.0) * steps as f64);

    Ok(TaylorBuild {
        cfg: cfg.clone(),
        deep_net,
        weight_net,
        check_net,
        wf_net,
        certificate,
        growth_rate,
        size_condition_ok,
        lidx: nl_indices,
        lfact,
        walk,
        walk_pos,
        digits,
        b_enc,
        dvals,
        base,
        ceil_ed,
        c36,
        fine_h,
        coarse_h,
    })
}

fn sel(start: usize, len: usize) -> Vec<usize> {
    (start..start + len).collect()
}

/// Single-output selector over an n-dim input.
fn selector(n: usize, idx: usize) -> FeedForwardNet {
    let mut out = Mat::zeros(1, n + 1);
    out.set(0, 1 + idx, 1.0);
    FeedForwardNet::new(n, vec![out]).expect("selector")
}

/// Capture gadget: test net over (x = phi1, a = phi2, b = phi2 + h, s =
/// state[s_slot]).
fn capture_test(
    test: &FeedForwardNet,
    d: usize,
    d_state: usize,
    o_phi1: usize,
    o_phi2: usize,
    s_slot: usize,
    fine_h: f64,
) -> Result<FeedForwardNet> {
    let mut amat = vec![vec![0.0; d_state]; 3 * d + 1];
    let mut bvec = vec![0.0; 3 * d + 1];
    for k in 0..d {
        amat[k][o_phi1 + k] = 1.0;
        amat[d + k][o_phi2 + k] = 1.0;
        amat[2 * d + k][o_phi2 + k] = 1.0;
        bvec[2 * d + k] = fine_h;
    }
    amat[3 * d][s_slot] = 1.0;
    test.affine_in(&amat, &bvec)
}

/// Strip test: x in [phi2 + delta, phi2 + h - delta) with gate one.
fn strip_test(
    d: usize,
    d_state: usize,
    o_phi1: usize,
    o_phi2: usize,
    fine_h: f64,
    delta: f64,
    r: f64,
) -> Result<FeedForwardNet> {
    let test = build_test_net_inputs(d, r)?;
    let mut amat = vec![vec![0.0; d_state]; 3 * d + 1];
    let mut bvec = vec![0.0; 3 * d + 1];
    for k in 0..d {
        amat[k][o_phi1 + k] = 1.0;
        amat[d + k][o_phi2 + k] = 1.0;
        bvec[d + k] = delta;
        amat[2 * d + k][o_phi2 + k] = 1.0;
        bvec[2 * d + k] = fine_h - delta;
    }
    bvec[3 * d] = 1.0;
    test.affine_in(&amat, &bvec)
}

/// relu of one state slot, as a depth-2 part.
fn gate_relu(d_state: usize, slot: usize) -> Result<FeedForwardNet> {
    let mut l0 = Mat::zeros(1, d_state + 1);
    l0.set(0, 1 + slot, 1.0);
    let mut out = Mat::zeros(1, 2);
    out.set(0, 1, 1.0);
    FeedForwardNet::new(d_state, vec![l0, out])?.pad_depth(2)
}

/// Taylor-polynomial head reading [phi1 (d), phi5 (d), phi6 (nl), check]:
/// computes sum_l phi6[l]/l! * (phi1 - phi5)^l. Each term gates its
/// monomial (built from unit-range products of the cell-local offsets) with
/// the coefficient through one wide-range product.
fn taylor_poly_head(
    lidx: &[Vec<usize>],
    d: usize,
    nl: usize,
    head_dim: usize,
    range_y: f64,
    r_depth: usize,
) -> Result<FeedForwardNet> {
    let mut parts: Vec<FeedForwardNet> = Vec::with_capacity(nl);
    let mut depth_needed = 1usize;
    let mut raw_parts: Vec<FeedForwardNet> = Vec::with_capacity(nl);
    for (vi, l) in lidx.iter().enumerate() {
        // inputs of the part: the full head vector; z_k = phi1[k] - phi5[k]
        let z_row = |k: usize| {
            let mut row = vec![0.0; head_dim];
            row[k] = 1.0;
            row[d + k] = -1.0;
            row
        };
        let y_row = {
            let mut row = vec![0.0; head_dim];
            row[2 * d + vi] = 1.0;
            row
        };
        let deg: usize = l.iter().sum();
        let part = if deg == 0 {
            // y * 1 carried exactly
            identity_net(1, 1).affine_in(&[y_row.clone()], &[0.0])?
        } else {
            // monomial factors in walk order
            let mut factors: Vec<usize> = Vec::new();
            for (k, &e) in l.iter().enumerate() {
                for _ in 0..e {
                    factors.push(k);
                }
            }
            let mono_net: FeedForwardNet = if factors.len() == 1 {
                identity_net(1, 1).affine_in(&[z_row(factors[0])], &[0.0])?
            } else {
                // pairwise products at unit range (|z| <= fine_h <= 2)
                let mut net =
                    build_mult_net(r_depth, 2.0)?.affine_in(&[z_row(factors[0]), z_row(factors[1])], &[0.0, 0.0])?;
                for &extra in &factors[2..] {
                    let pair = build_mult_net(r_depth, 2.0)?;
                    // (previous product, z_extra): widen the net to also
                    // forward z_extra alongside the product
                    let zline = identity_net(1, net.depth()).affine_in(&[z_row(extra)], &[0.0])?;
                    let two = FeedForwardNet::stack(&[net, zline])?;
                    net = FeedForwardNet::chain(&pair, &two)?;
                }
                net
            };
            // gate with the coefficient at the wide range
            let gate_mult = build_mult_net(r_depth, range_y + 2.0)?;
            let y_line = identity_net(1, mono_net.depth()).affine_in(&[y_row], &[0.0])?;
            let pair = FeedForwardNet::stack(&[y_line, mono_net])?;
            FeedForwardNet::chain(&gate_mult, &pair)?
        };
        depth_needed = depth_needed.max(part.depth());
        raw_parts.push(part);
    }
    for part in raw_parts {
        parts.push(part.pad_depth(depth_needed)?);
    }
    let stacked = FeedForwardNet::stack(&parts)?;
    let coeffs: Vec<f64> = lidx.iter().map(|l| 1.0 / multi_factorial(l)).collect();
    stacked.affine_out(&[coeffs], &[0.0])
}

/// Sum of shifted gated-product networks; on interior points the shifted
/// B-spline weights form a partition of unity so the sum approximates the
/// target itself.
pub struct ShiftedCombination {
    pub builds: Vec<TaylorBuild>,
}

impl ShiftedCombination {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for b in &self.builds {
            acc += b.wf_net.eval(x)?;
        }
        Ok(acc)
    }

    /// Exact shifted weights summed (the partition-of-unity identity).
    pub fn exact_weight_sum(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for b in &self.builds {
            acc += b.exact_weight(x)?;
        }
        Ok(acc)
    }
}

/// Combine the 2^d builds on shifted partitions into one evaluator.
pub fn shifted_partition_combine(builds: Vec<TaylorBuild>) -> Result<ShiftedCombination> {
    let d = builds
        .first()
        .ok_or_else(|| CoreError::Config("no builds supplied".into()))?
        .cfg
        .dim;
    if builds.len() != 1 << d {
        return Err(CoreError::Config(format!(
            "need 2^{d} shifted builds, got {}",
            builds.len()
        )));
    }
    Ok(ShiftedCombination { builds })
}

/// The 2^d shift vectors (0 or -h/2 per coordinate) for a configuration.
pub fn partition_shifts(dim: usize, a: f64, m: usize) -> Vec<Vec<f64>> {
    let fine_h = 2.0 * a / (m * m) as f64;
    (0..(1usize << dim))
        .map(|mask| {
            (0..dim)
                .map(|k| {
                    if mask & (1 << k) != 0 {
                        -fine_h / 2.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}
