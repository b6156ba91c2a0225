//! Explicit layered ReLU networks with affine output, plus the combinators
//! used to assemble larger constructions: stacking (shared input, parallel
//! blocks), chaining (merge the output layer of one net into the input layer
//! of the next, adding no extra layer), affine input/output maps and
//! identity rails for depth padding.

use crate::dataset::fmt_f64;
use crate::error::{CoreError, Result};
use std::io::{BufRead, BufReader, Read, Write};

/// Dense matrix with an offset column: column 0 is the constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// y = M * [1; x]
    fn apply(&self, x: &[f64], y: &mut Vec<f64>) {
        debug_assert_eq!(x.len() + 1, self.cols);
        y.clear();
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = row[0];
            for (w, v) in row[1..].iter().zip(x) {
                acc += w * v;
            }
            y.push(acc);
        }
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    fn max_abs_skip_offset(&self) -> f64 {
        let mut m = 0.0f64;
        for r in 0..self.rows {
            for c in 1..self.cols {
                m = m.max(self.at(r, c).abs());
            }
        }
        m
    }
}

/// A ReLU network with `depth()` hidden layers and an affine output layer.
/// `layers[l]` maps layer l to layer l+1 (ReLU applied except after the
/// last matrix). Networks may have several outputs internally; the public
/// builders all return single-output nets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    input_dim: usize,
    layers: Vec<Mat>,
}

/// Weight extremes used by the composition-rule checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats {
    /// max |v| over every layer including offsets.
    pub sup_norm: f64,
    /// Constant term of the (single) output row.
    pub output_offset: f64,
    /// max |v| over the first matrix (offsets included).
    pub input_layer_sup: f64,
    /// max |v| over the output matrix (offsets included).
    pub output_layer_sup: f64,
}

impl FeedForwardNet {
    pub fn new(input_dim: usize, layers: Vec<Mat>) -> Result<Self> {
        if layers.is_empty() {
            return Err(CoreError::Config("need at least the output layer".into()));
        }
        let mut expect = input_dim;
        for (i, m) in layers.iter().enumerate() {
            if m.cols != expect + 1 {
                return Err(CoreError::Shape(format!(
                    "layer {i}: expected {} cols, got {}",
                    expect + 1,
                    m.cols
                )));
            }
            expect = m.rows;
        }
        Ok(FeedForwardNet { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().rows
    }

    /// Number of hidden layers.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// Widths k_0 .. k_L (input and every hidden layer).
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        for m in &self.layers[..self.layers.len() - 1] {
            w.push(m.rows);
        }
        w
    }

    pub fn layers(&self) -> &[Mat] {
        &self.layers
    }

    pub fn eval_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(CoreError::Shape(format!(
                "input dim {} != expected {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, m) in self.layers.iter().enumerate() {
            m.apply(&cur, &mut next);
            if i != last {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Scalar evaluation; the net must have exactly one output.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if self.output_dim() != 1 {
            return Err(CoreError::Shape(format!(
                "net has {} outputs",
                self.output_dim()
            )));
        }
        Ok(self.eval_vec(x)?[0])
    }

    pub fn weight_stats(&self) -> WeightStats {
        let out = self.layers.last().unwrap();
        WeightStats {
            sup_norm: self.layers.iter().map(Mat::max_abs).fold(0.0, f64::max),
            output_offset: out.at(0, 0),
            input_layer_sup: self.layers[0].max_abs(),
            output_layer_sup: out.max_abs(),
        }
    }

    /// max |v| over the output matrix, offsets excluded.
    pub fn output_layer_sup_no_offset(&self) -> f64 {
        self.layers.last().unwrap().max_abs_skip_offset()
    }

    /// max |v| over the input matrix, offsets excluded.
    pub fn input_layer_sup_no_offset(&self) -> f64 {
        self.layers[0].max_abs_skip_offset()
    }

    /// Multi-output nets with a zero offset on every output row.
    pub fn output_offsets_zero(&self) -> bool {
        let out = self.layers.last().unwrap();
        (0..out.rows).all(|r| out.at(r, 0) == 0.0)
    }

    /// Stack nets side by side over a shared input: hidden widths add,
    /// outputs concatenate. All nets must have equal input dim and depth.
    pub fn stack(nets: &[FeedForwardNet]) -> Result<FeedForwardNet> {
        let first = nets
            .first()
            .ok_or_else(|| CoreError::Config("stack of zero nets".into()))?;
        let depth = first.depth();
        let input_dim = first.input_dim;
        for n in nets {
            if n.depth() != depth || n.input_dim != input_dim {
                return Err(CoreError::Shape(
                    "stacked nets must share input dim and depth".into(),
                ));
            }
        }
        let mut layers = Vec::with_capacity(depth + 1);
        for l in 0..=depth {
            let rows: usize = nets.iter().map(|n| n.layers[l].rows).sum();
            let in_shared = l == 0;
            let cols = if in_shared {
                input_dim + 1
            } else {
                nets.iter().map(|n| n.layers[l].cols - 1).sum::<usize>() + 1
            };
            let mut m = Mat::zeros(rows, cols);
            let mut row0 = 0usize;
            let mut col0 = 1usize;
            for n in nets {
                let src = &n.layers[l];
                for r in 0..src.rows {
                    m.set(row0 + r, 0, src.at(r, 0));
                    for c in 1..src.cols {
                        let dst_c = if in_shared { c } else { col0 + (c - 1) };
                        m.set(row0 + r, dst_c, src.at(r, c));
                    }
                }
                row0 += src.rows;
                if !in_shared {
                    col0 += src.layers_cols();
                }
            }
            layers.push(m);
        }
        FeedForwardNet::new(input_dim, layers)
    }

    /// g after f: feeds f's outputs into g's inputs by merging g's first
    /// matrix with f's output matrix. Depth adds.
    pub fn chain(g: &FeedForwardNet, f: &FeedForwardNet) -> Result<FeedForwardNet> {
        if g.input_dim != f.output_dim() {
            return Err(CoreError::Shape(format!(
                "chain: inner outputs {} != outer inputs {}",
                f.output_dim(),
                g.input_dim
            )));
        }
        let f_out = f.layers.last().unwrap();
        let g_in = &g.layers[0];
        let mut merged = Mat::zeros(g_in.rows, f_out.cols);
        for r in 0..g_in.rows {
            let mut off = g_in.at(r, 0);
            for j in 0..f_out.rows {
                off += g_in.at(r, j + 1) * f_out.at(j, 0);
            }
            merged.set(r, 0, off);
            for c in 1..f_out.cols {
                let mut acc = 0.0;
                for j in 0..f_out.rows {
                    acc += g_in.at(r, j + 1) * f_out.at(j, c);
                }
                merged.set(r, c, acc);
            }
        }
        let mut layers: Vec<Mat> = f.layers[..f.layers.len() - 1].to_vec();
        layers.push(merged);
        layers.extend(g.layers[1..].iter().cloned());
        FeedForwardNet::new(f.input_dim, layers)
    }

    /// Replace the outputs by A * out + b (absorbed into the output layer).
    pub fn affine_out(&self, a: &[Vec<f64>], b: &[f64]) -> Result<FeedForwardNet> {
        let old = self.layers.last().unwrap();
        let m = a.len();
        if b.len() != m || a.iter().any(|row| row.len() != old.rows) {
            return Err(CoreError::Shape("affine_out shape mismatch".into()));
        }
        let mut out = Mat::zeros(m, old.cols);
        for r in 0..m {
            for c in 0..old.cols {
                let mut acc = if c == 0 { b[r] } else { 0.0 };
                for j in 0..old.rows {
                    acc += a[r][j] * old.at(j, c);
                }
                out.set(r, c, acc);
            }
        }
        let mut layers = self.layers[..self.layers.len() - 1].to_vec();
        layers.push(out);
        FeedForwardNet::new(self.input_dim, layers)
    }

    /// Pre-compose with x -> A x + b (absorbed into the input layer).
    pub fn affine_in(&self, a: &[Vec<f64>], b: &[f64]) -> Result<FeedForwardNet> {
        let old = &self.layers[0];
        if a.len() != self.input_dim || b.len() != self.input_dim {
            return Err(CoreError::Shape("affine_in shape mismatch".into()));
        }
        let new_dim = a[0].len();
        if a.iter().any(|row| row.len() != new_dim) {
            return Err(CoreError::Shape("ragged affine_in matrix".into()));
        }
        let mut m = Mat::zeros(old.rows, new_dim + 1);
        for r in 0..old.rows {
            let mut off = old.at(r, 0);
            for j in 0..self.input_dim {
                off += old.at(r, j + 1) * b[j];
            }
            m.set(r, 0, off);
            for c in 0..new_dim {
                let mut acc = 0.0;
                for j in 0..self.input_dim {
                    acc += old.at(r, j + 1) * a[j][c];
                }
                m.set(r, c + 1, acc);
            }
        }
        let mut layers = vec![m];
        layers.extend(self.layers[1..].iter().cloned());
        FeedForwardNet::new(new_dim, layers)
    }

    /// Pre-compose with a coordinate selection: input i of `self` reads
    /// coordinate `select[i]` of a `total`-dimensional input.
    pub fn select_inputs(&self, select: &[usize], total: usize) -> Result<FeedForwardNet> {
        if select.len() != self.input_dim {
            return Err(CoreError::Shape("selection length mismatch".into()));
        }
        let a: Vec<Vec<f64>> = select
            .iter()
            .map(|&s| {
                let mut row = vec![0.0; total];
                row[s] = 1.0;
                row
            })
            .collect();
        self.affine_in(&a, &vec![0.0; self.input_dim])
    }

    /// Append `extra` identity layers after the hidden stack so the net
    /// reaches the requested depth without changing its function.
    pub fn pad_depth(&self, target_depth: usize) -> Result<FeedForwardNet> {
        if target_depth < self.depth() {
            return Err(CoreError::Shape(format!(
                "cannot shrink depth {} to {}",
                self.depth(),
                target_depth
            )));
        }
        let mut net = self.clone();
        if target_depth > net.depth() {
            let id = identity_net(net.output_dim(), target_depth - net.depth());
            net = FeedForwardNet::chain(&id, &net)?;
        }
        Ok(net)
    }
}

impl Mat {
    fn layers_cols(&self) -> usize {
        self.cols - 1
    }
}

/// The signed identity carried through `depth` hidden layers: each value v
/// travels as the pair (relu(v), relu(-v)).
pub fn identity_net(dim: usize, depth: usize) -> FeedForwardNet {
    assert!(depth >= 1);
    let mut layers = Vec::with_capacity(depth + 1);
    // first layer: pairs from the raw input
    let mut first = Mat::zeros(2 * dim, dim + 1);
    for i in 0..dim {
        first.set(2 * i, i + 1, 1.0);
        first.set(2 * i + 1, i + 1, -1.0);
    }
    layers.push(first);
    for _ in 1..depth {
        let mut m = Mat::zeros(2 * dim, 2 * dim + 1);
        for i in 0..dim {
            m.set(2 * i, 2 * i + 1, 1.0);
            m.set(2 * i, 2 * i + 2, -1.0);
            m.set(2 * i + 1, 2 * i + 1, -1.0);
            m.set(2 * i + 1, 2 * i + 2, 1.0);
        }
        layers.push(m);
    }
    let mut out = Mat::zeros(dim, 2 * dim + 1);
    for i in 0..dim {
        out.set(i, 2 * i + 1, 1.0);
        out.set(i, 2 * i + 2, -1.0);
    }
    layers.push(out);
    FeedForwardNet::new(dim, layers).expect("identity net shapes")
}

/// Merge the outer net with k parallel part nets of equal depth over a
/// shared input; the parts' outputs feed the outer net's k inputs.
pub fn compose_nets(outer: &FeedForwardNet, parts: &[FeedForwardNet]) -> Result<FeedForwardNet> {
    if outer.input_dim() != parts.len() {
        return Err(CoreError::Shape(format!(
            "outer reads {} inputs but {} parts given",
            outer.input_dim(),
            parts.len()
        )));
    }
    let stacked = FeedForwardNet::stack(parts)?;
    FeedForwardNet::chain(outer, &stacked)
}

/// Exact weight maxima; mirrors `FeedForwardNet::weight_stats`.
pub fn net_weight_stats(net: &FeedForwardNet) -> WeightStats {
    net.weight_stats()
}

const NET_MAGIC: &str = "ffnet v1";

/// Plain-text serialization: depth, widths, then row-major layer matrices
/// with 17 significant digits. Round-trips without loss.
pub fn write_net(out: &mut impl Write, net: &FeedForwardNet) -> Result<()> {
    let mut buf = String::new();
    use std::fmt::Write as _;
    writeln!(buf, "{NET_MAGIC}").expect("string write");
    writeln!(buf, "input_dim {}", net.input_dim()).expect("string write");
    writeln!(buf, "layers {}", net.layers.len()).expect("string write");
    for m in &net.layers {
        write!(buf, "layer {} {}", m.rows, m.cols).expect("string write");
        for v in &m.data {
            write!(buf, " {}", fmt_f64(*v)).expect("string write");
        }
        buf.push('\n');
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_net(input: &mut impl Read) -> Result<FeedForwardNet> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| CoreError::Parse("truncated net file".into()))?
            .map_err(CoreError::from)
    };
    if next()? != NET_MAGIC {
        return Err(CoreError::Parse("bad net magic".into()));
    }
    let input_dim: usize = parse_tail(&next()?, "input_dim")?;
    let layer_count: usize = parse_tail(&next()?, "layers")?;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let line = next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("layer") {
            return Err(CoreError::Parse("expected 'layer' line".into()));
        }
        let rows: usize = parse_field(parts.next())?;
        let cols: usize = parse_field(parts.next())?;
        let data: Vec<f64> = parts
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| CoreError::Parse(format!("'{v}': {e}")))
            })
            .collect::<Result<_>>()?;
        if data.len() != rows * cols {
            return Err(CoreError::Parse(format!(
                "layer needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        layers.push(Mat { rows, cols, data });
    }
    FeedForwardNet::new(input_dim, layers)
}

fn parse_tail<T: std::str::FromStr>(line: &str, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let rest = line
        .strip_prefix(key)
        .ok_or_else(|| CoreError::Parse(format!("expected '{key}'")))?;
    rest.trim()
        .parse::<T>()
        .map_err(|e| CoreError::Parse(format!("'{line}': {e}")))
}

fn parse_field<T: std::str::FromStr>(v: Option<&str>) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let v = v.ok_or_else(|| CoreError::Parse("missing field".into()))?;
    v.parse::<T>()
        .map_err(|e| CoreError::Parse(format!("'{v}': {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_net(input: usize, depth: usize, width: usize, seed: u64) -> FeedForwardNet {
        let mut rng = rng_from_seed(seed);
        let mut layers = Vec::new();
        let mut prev = input;
        for _ in 0..depth {
            let mut m = Mat::zeros(width, prev + 1);
            for v in m.data.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            layers.push(m);
            prev = width;
        }
        let mut out = Mat::zeros(1, prev + 1);
        for v in out.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        layers.push(out);
        FeedForwardNet::new(input, layers).unwrap()
    }

    #[test]
    fn identity_net_reproduces_signed_values() {
        let id = identity_net(1, 3);
        for z in [-3.0, -0.5, 0.0, 0.7, 10.0] {
            assert!((id.eval(&[z]).unwrap() - z).abs() < 1e-15);
        }
        let id2 = identity_net(3, 2);
        let v = id2.eval_vec(&[0.3, -1.7, 2.2]).unwrap();
        assert_eq!(v, vec![0.3, -1.7, 2.2]);
    }

    #[test]
    fn chain_adds_depth_and_preserves_values() {
        let f = random_net(2, 3, 4, 1);
        let g = random_net(1, 2, 3, 2);
        let h = FeedForwardNet::chain(&g, &f).unwrap();
        assert_eq!(h.depth(), 5);
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let inner = f.eval(&x).unwrap();
            let want = g.eval(&[inner]).unwrap();
            let got = h.eval(&x).unwrap();
            assert!((want - got).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_with_identity_outer_is_identity() {
        let g = random_net(2, 2, 5, 4);
        let outer = identity_net(1, 1);
        let c = compose_nets(&outer, &[g.clone()]).unwrap();
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            assert!((c.eval(&x).unwrap() - g.eval(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn composition_is_associative_in_evaluation() {
        let h = random_net(1, 2, 3, 6);
        let g = random_net(1, 2, 3, 7);
        let f = random_net(1, 2, 3, 8);
        let left = FeedForwardNet::chain(&f, &FeedForwardNet::chain(&g, &h).unwrap()).unwrap();
        let right = FeedForwardNet::chain(&FeedForwardNet::chain(&f, &g).unwrap(), &h).unwrap();
        let mut rng = rng_from_seed(9);
        for _ in 0..50 {
            let x = [rng.gen_range(-2.0..2.0)];
            let a = left.eval(&x).unwrap();
            let b = right.eval(&x).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn stack_concatenates_outputs() {
        let a = random_net(2, 2, 3, 10);
        let b = random_net(2, 2, 4, 11);
        let s = FeedForwardNet::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.output_dim(), 2);
        let x = [0.2, -0.4];
        let v = s.eval_vec(&x).unwrap();
        assert!((v[0] - a.eval(&x).unwrap()).abs() < 1e-14);
        assert!((v[1] - b.eval(&x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn pad_depth_keeps_function() {
        let f = random_net(2, 1, 4, 12);
        let p = f.pad_depth(4).unwrap();
        assert_eq!(p.depth(), 4);
        let mut rng = rng_from_seed(13);
        for _ in 0..20 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            assert!((f.eval(&x).unwrap() - p.eval(&x).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn serialization_round_trip_is_lossless() {
        let f = random_net(3, 2, 5, 14);
        let mut buf = Vec::new();
        write_net(&mut buf, &f).unwrap();
        let g = read_net(&mut buf.as_slice()).unwrap();
        assert_eq!(f, g);
        let mut buf2 = Vec::new();
        write_net(&mut buf2, &g).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn zero_weight_net_returns_output_offset() {
        let mut out = Mat::zeros(1, 3);
        out.set(0, 0, 0.7);
        let layers = vec![Mat::zeros(2, 2), out];
        let net = FeedForwardNet::new(1, layers).unwrap();
        assert_eq!(net.eval(&[5.0]).unwrap(), 0.7);
        assert_eq!(net.weight_stats().output_offset, 0.7);
    }
}
