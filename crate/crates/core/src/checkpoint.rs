//! Versioned checkpoint files holding the network config, training config,
//! flat weight arrays (17 significant digits, lossless for f64) and the RNG
//! state. Round-trips bitwise.

use crate::cnn::{CnnConfig, EnsembleParams};
use crate::dataset::fmt_f64;
use crate::error::{CoreError, Result};
use crate::train::TrainConfig;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

const MAGIC: &str = "opcnn-checkpoint v1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub cnn: CnnConfig,
    pub train: TrainConfig,
    pub w_avg: Vec<f64>,
    pub ens: EnsembleParams,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub rng_stream: u64,
}

impl Checkpoint {
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::from_seed(self.rng_seed);
        rng.set_stream(self.rng_stream);
        rng.set_word_pos(self.rng_word_pos);
        rng
    }

    pub fn capture_rng(rng: &ChaCha12Rng) -> ([u8; 32], u128, u64) {
        (rng.get_seed(), rng.get_word_pos(), rng.get_stream())
    }
}

fn write_floats(buf: &mut String, name: &str, values: &[f64]) {
    write!(buf, "{name} {}", values.len()).expect("string write");
    for v in values {
        write!(buf, " {}", fmt_f64(*v)).expect("string write");
    }
    buf.push('\n');
}

pub fn write_checkpoint(out: &mut impl Write, ck: &Checkpoint) -> Result<()> {
    let mut buf = String::new();
    writeln!(buf, "{MAGIC}").expect("string write");
    writeln!(
        buf,
        "cnn channels={} filters={} head_width={} beta={}",
        join_usize(&ck.cnn.channels),
        join_usize(&ck.cnn.filter_sizes),
        ck.cnn.head_width,
        fmt_f64(ck.cnn.beta)
    )
    .expect("string write");
    writeln!(
        buf,
        "train k={} n_blocks={} block_size={} steps={} lambda={} alpha={} beta={} init_bound={} seed={}",
        ck.train.k,
        ck.train.n_blocks.map_or("-".into(), |v| v.to_string()),
        ck.train.block_size.map_or("-".into(), |v| v.to_string()),
        ck.train.steps,
        fmt_f64(ck.train.lambda),
        fmt_f64(ck.train.alpha),
        fmt_f64(ck.train.beta),
        fmt_f64(ck.train.init_bound),
        ck.train.seed
    )
    .expect("string write");
    writeln!(
        buf,
        "rng seed={} word_pos={} stream={}",
        hex(&ck.rng_seed),
        ck.rng_word_pos,
        ck.rng_stream
    )
    .expect("string write");
    write_floats(&mut buf, "w_avg", &ck.w_avg);
    write_floats(&mut buf, "w", &ck.ens.w);
    write_floats(&mut buf, "thetas", &ck.ens.thetas);
    write_floats(&mut buf, "theta0", &ck.ens.theta0);
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<Checkpoint> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let magic = next_line(&mut lines)?;
    if magic != MAGIC {
        return Err(CoreError::Parse(format!("unexpected magic '{magic}'")));
    }
    let cnn_line = next_line(&mut lines)?;
    let cnn = parse_cnn(&cnn_line)?;
    let train_line = next_line(&mut lines)?;
    let train = parse_train(&train_line)?;
    let rng_line = next_line(&mut lines)?;
    let (rng_seed, rng_word_pos, rng_stream) = parse_rng(&rng_line)?;
    let w_avg = parse_floats(&next_line(&mut lines)?, "w_avg")?;
    let w = parse_floats(&next_line(&mut lines)?, "w")?;
    let thetas = parse_floats(&next_line(&mut lines)?, "thetas")?;
    let theta0 = parse_floats(&next_line(&mut lines)?, "theta0")?;
    Ok(Checkpoint {
        cnn,
        train,
        w_avg,
        ens: EnsembleParams { w, thetas, theta0 },
        rng_seed,
        rng_word_pos,
        rng_stream,
    })
}

fn next_line(lines: &mut impl Iterator<Item = std::io::Result<String>>) -> Result<String> {
    lines
        .next()
        .ok_or_else(|| CoreError::Parse("truncated checkpoint".into()))?
        .map_err(CoreError::from)
}

fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split_kv<'a>(line: &'a str, prefix: &str) -> Result<Vec<(&'a str, &'a str)>> {
    let rest = line
        .strip_prefix(prefix)
        .ok_or_else(|| CoreError::Parse(format!("expected '{prefix}' line")))?;
    rest.split_whitespace()
        .map(|f| {
            f.split_once('=')
                .ok_or_else(|| CoreError::Parse(format!("bad field '{f}'")))
        })
        .collect()
}

fn parse_cnn(line: &str) -> Result<CnnConfig> {
    let mut channels = Vec::new();
    let mut filters = Vec::new();
    let mut head_width = 0usize;
    let mut beta = 0.0;
    for (k, v) in split_kv(line, "cnn ")? {
        match k {
            "channels" => channels = parse_usize_list(v)?,
            "filters" => filters = parse_usize_list(v)?,
            "head_width" => head_width = parse_num(v)?,
            "beta" => beta = parse_num(v)?,
            _ => return Err(CoreError::Parse(format!("unknown cnn field '{k}'"))),
        }
    }
    Ok(CnnConfig {
        channels,
        filter_sizes: filters,
        head_width,
        beta,
    })
}

fn parse_train(line: &str) -> Result<TrainConfig> {
    let mut t = TrainConfig {
        k: 0,
        n_blocks: None,
        block_size: None,
        steps: 0,
        lambda: 0.0,
        alpha: 0.0,
        beta: 0.0,
        init_bound: 0.0,
        seed: 0,
    };
    for (k, v) in split_kv(line, "train ")? {
        match k {
            "k" => t.k = parse_num(v)?,
            "n_blocks" => t.n_blocks = parse_opt(v)?,
            "block_size" => t.block_size = parse_opt(v)?,
            "steps" => t.steps = parse_num(v)?,
            "lambda" => t.lambda = parse_num(v)?,
            "alpha" => t.alpha = parse_num(v)?,
            "beta" => t.beta = parse_num(v)?,
            "init_bound" => t.init_bound = parse_num(v)?,
            "seed" => t.seed = parse_num(v)?,
            _ => return Err(CoreError::Parse(format!("unknown train field '{k}'"))),
        }
    }
    Ok(t)
}

fn parse_rng(line: &str) -> Result<([u8; 32], u128, u64)> {
    let mut seed = [0u8; 32];
    let mut word_pos = 0u128;
    let mut stream = 0u64;
    for (k, v) in split_kv(line, "rng ")? {
        match k {
            "seed" => seed = unhex(v)?,
            "word_pos" => word_pos = parse_num(v)?,
            "stream" => stream = parse_num(v)?,
            _ => return Err(CoreError::Parse(format!("unknown rng field '{k}'"))),
        }
    }
    Ok((seed, word_pos, stream))
}

fn parse_floats(line: &str, name: &str) -> Result<Vec<f64>> {
    let mut parts = line.split_whitespace();
    let tag = parts
        .next()
        .ok_or_else(|| CoreError::Parse("empty array line".into()))?;
    if tag != name {
        return Err(CoreError::Parse(format!("expected '{name}', got '{tag}'")));
    }
    let count: usize = parse_num(
        parts
            .next()
            .ok_or_else(|| CoreError::Parse("missing count".into()))?,
    )?;
    let values: Vec<f64> = parts.map(parse_num).collect::<Result<_>>()?;
    if values.len() != count {
        return Err(CoreError::Parse(format!(
            "{name}: expected {count} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| CoreError::Parse(format!("'{v}': {e}")))
}

fn parse_opt(v: &str) -> Result<Option<usize>> {
    if v == "-" {
        Ok(None)
    } else {
        Ok(Some(parse_num(v)?))
    }
}

fn parse_usize_list(v: &str) -> Result<Vec<usize>> {
    v.split(',').map(parse_num).collect()
}

fn hex(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 {
        return Err(CoreError::Parse("rng seed must be 64 hex chars".into()));
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char)
            .to_digit(16)
            .ok_or_else(|| CoreError::Parse("bad hex".into()))?;
        let lo = (chunk[1] as char)
            .to_digit(16)
            .ok_or_else(|| CoreError::Parse("bad hex".into()))?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Ok(out)
}
