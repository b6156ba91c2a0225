//! Dataset file format: one header line, then one CSV line per sample with
//! the label followed by the pixels (first image index varies slowest).

use crate::error::{CoreError, Result};
use crate::grid::ImageGrid;
use crate::synthetic::LabeledSample;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

/// 17 significant digits: lossless decimal round trip for f64.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header metadata carried by a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub d1: usize,
    pub d2: usize,
    pub n: usize,
    pub seed: u64,
    pub model_descriptor: String,
}

pub fn write_dataset(
    out: &mut impl Write,
    header: &DatasetHeader,
    samples: &[LabeledSample],
) -> Result<()> {
    if samples.len() != header.n {
        return Err(CoreError::Config(format!(
            "header says n = {}, got {} samples",
            header.n,
            samples.len()
        )));
    }
    let mut buf = String::new();
    writeln!(
        buf,
        "d1={},d2={},n={},seed={},model={}",
        header.d1, header.d2, header.n, header.seed, header.model_descriptor
    )
    .expect("string write");
    for s in samples {
        if s.x.d1() != header.d1 || s.x.d2() != header.d2 {
            return Err(CoreError::Shape("sample dims disagree with header".into()));
        }
        write!(buf, "{}", s.y).expect("string write");
        for &p in s.x.pixels() {
            write!(buf, ",{}", fmt_f64(p)).expect("string write");
        }
        buf.push('\n');
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_dataset(input: &mut impl Read) -> Result<(DatasetHeader, Vec<LabeledSample>)> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let head_line = lines
        .next()
        .ok_or_else(|| CoreError::Parse("empty dataset file".into()))??;
    let mut d1 = None;
    let mut d2 = None;
    let mut n = None;
    let mut seed = None;
    let mut model = String::new();
    for field in head_line.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| CoreError::Parse(format!("bad header field '{field}'")))?;
        match key {
            "d1" => d1 = Some(parse_usize(value)?),
            "d2" => d2 = Some(parse_usize(value)?),
            "n" => n = Some(parse_usize(value)?),
            "seed" => {
                seed = Some(
                    value
                        .parse::<u64>()
                        .map_err(|e| CoreError::Parse(format!("seed: {e}")))?,
                )
            }
            "model" => model = value.to_string(),
            other => return Err(CoreError::Parse(format!("unknown header key '{other}'"))),
        }
    }
    let header = DatasetHeader {
        d1: d1.ok_or_else(|| CoreError::Parse("missing d1".into()))?,
        d2: d2.ok_or_else(|| CoreError::Parse("missing d2".into()))?,
        n: n.ok_or_else(|| CoreError::Parse("missing n".into()))?,
        seed: seed.ok_or_else(|| CoreError::Parse("missing seed".into()))?,
        model_descriptor: model,
    };
    let mut samples = Vec::with_capacity(header.n);
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let y: i8 = parts
            .next()
            .ok_or_else(|| CoreError::Parse("missing label".into()))?
            .parse()
            .map_err(|e| CoreError::Parse(format!("label: {e}")))?;
        if y != 1 && y != -1 {
            return Err(CoreError::Parse(format!("label must be -1 or 1, got {y}")));
        }
        let pixels: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|e| CoreError::Parse(format!("pixel: {e}")))
            })
            .collect::<Result<_>>()?;
        samples.push(LabeledSample {
            x: ImageGrid::new(header.d1, header.d2, pixels)?,
            y,
        });
    }
    if samples.len() != header.n {
        return Err(CoreError::Parse(format!(
            "header says n = {}, file holds {}",
            header.n,
            samples.len()
        )));
    }
    Ok((header, samples))
}

fn parse_usize(v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|e| CoreError::Parse(format!("{v}: {e}")))
}
