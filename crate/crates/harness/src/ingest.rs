//! CSV input and output for tensor series.
//!
//! Long form, one cell per line, 1-based `t` and indices:
//!
//! ```text
//! t,i1,i2,value
//! 1,1,1,0.25
//! ```
//!
//! Wide form, one observation per line with entries first-mode-fastest,
//! shape given on a comment line:
//!
//! ```text
//! # dims: 2,2
//! t,v1,v2,v3,v4
//! 1,0.25,1.5,-3,0
//! ```
//!
//! A `# dims:` line is optional in long form; without it each mode size is
//! the largest index seen. Missing cells are errors, never imputed.

use std::path::Path;

use tenrank_core::tensor::MAX_ORDER;
use tenrank_core::{Tensor, TensorSeries};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsvLayout {
    /// Long form when the last header column is `value`, wide otherwise.
    #[default]
    Auto,
    Long,
    Wide,
}

impl std::str::FromStr for CsvLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(CsvLayout::Auto),
            "long" => Ok(CsvLayout::Long),
            "wide" => Ok(CsvLayout::Wide),
            other => Err(Error::input(format!("unknown csv layout '{other}'"))),
        }
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, layout: CsvLayout) -> Result<TensorSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, layout).map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

struct Parsed {
    dims: Option<Vec<usize>>,
    header: Vec<String>,
    /// `(line number, fields)`.
    rows: Vec<(usize, Vec<String>)>,
}

fn split(text: &str) -> Result<Parsed> {
    let mut dims = None;
    let mut header = None;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(spec) = comment.trim().strip_prefix("dims:") {
                if dims.is_some() {
                    return Err(Error::input(format!("line {line_no}: second '# dims:' line")));
                }
                dims = Some(parse_dims(spec, line_no)?);
            }
            continue;
        }
        let fields: Vec<String> = trimmed.split(',').map(|f| f.trim().to_string()).collect();
        if header.is_none() {
            header = Some(fields);
        } else {
            rows.push((line_no, fields));
        }
    }
    let header = header.ok_or_else(|| Error::input("no header row"))?;
    Ok(Parsed { dims, header, rows })
}

fn parse_dims(spec: &str, line_no: usize) -> Result<Vec<usize>> {
    let dims = spec
        .split(',')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::input(format!("line {line_no}: bad dims '{}'", spec.trim())))?;
    if dims.is_empty() || dims.len() > MAX_ORDER || dims.contains(&0) {
        return Err(Error::input(format!("line {line_no}: bad dims '{}'", spec.trim())));
    }
    Ok(dims)
}

fn parse_index(s: &str, what: &str, line_no: usize) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(Error::input(format!(
            "line {line_no}: {what} must be a positive integer, got '{s}'"
        ))),
    }
}

fn parse_value(s: &str, line_no: usize) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::input(format!("line {line_no}: bad value '{s}'")))?;
    if !v.is_finite() {
        return Err(Error::input(format!("line {line_no}: non-finite value '{s}'")));
    }
    Ok(v)
}

pub fn parse_csv(text: &str, layout: CsvLayout) -> Result<TensorSeries> {
    let parsed = split(text)?;
    let long = match layout {
        CsvLayout::Long => true,
        CsvLayout::Wide => false,
        CsvLayout::Auto => parsed
            .header
            .last()
            .is_some_and(|h| h.eq_ignore_ascii_case("value")),
    };
    if long {
        parse_long(parsed)
    } else {
        parse_wide(parsed)
    }
}

/// 1-based `(i1, …, iK)` of a first-mode-fastest linear index.
fn one_based(mut lin: usize, dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .map(|&d| {
            let i = lin % d;
            lin /= d;
            i + 1
        })
        .collect()
}

fn fmt_index(idx: &[usize]) -> String {
    let parts: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
    format!("({})", parts.join(", "))
}

/// Assemble observations, failing on the first unset cell.
fn assemble(dims: Vec<usize>, cells: Vec<Option<f64>>, t: usize) -> Result<TensorSeries> {
    let d: usize = dims.iter().product();
    if let Some(pos) = cells.iter().position(Option::is_none) {
        return Err(Error::input(format!(
            "missing cell at t={}, index {}",
            pos / d + 1,
            fmt_index(&one_based(pos % d, &dims))
        )));
    }
    let values: Vec<f64> = cells.into_iter().map(|c| c.expect("checked")).collect();
    let obs = (0..t)
        .map(|s| Tensor::new(dims.clone(), values[s * d..(s + 1) * d].to_vec()))
        .collect::<tenrank_core::Result<Vec<_>>>()?;
    Ok(TensorSeries::new(obs)?)
}

fn parse_long(p: Parsed) -> Result<TensorSeries> {
    let ncol = p.header.len();
    if ncol < 3 || !p.header[0].eq_ignore_ascii_case("t") {
        return Err(Error::input("long form needs a header 't,i1,...,iK,value'"));
    }
    let k = ncol - 2;
    if k > MAX_ORDER {
        return Err(Error::input(format!("order {k} exceeds {MAX_ORDER}")));
    }
    if let Some(d) = &p.dims {
        if d.len() != k {
            return Err(Error::input(format!(
                "'# dims:' has {} entries but the header has {k} index columns",
                d.len()
            )));
        }
    }
    let mut entries = Vec::with_capacity(p.rows.len());
    for (line_no, f) in &p.rows {
        if f.len() != ncol {
            return Err(Error::input(format!(
                "line {line_no}: ragged row with {} fields, expected {ncol}",
                f.len()
            )));
        }
        let t = parse_index(&f[0], "t", *line_no)?;
        let idx = f[1..=k]
            .iter()
            .map(|s| parse_index(s, "index", *line_no))
            .collect::<Result<Vec<_>>>()?;
        entries.push((*line_no, t, idx, parse_value(&f[ncol - 1], *line_no)?));
    }
    if entries.is_empty() {
        return Err(Error::input("no data rows"));
    }
    let dims = match p.dims {
        Some(d) => d,
        None => (0..k)
            .map(|m| entries.iter().map(|e| e.2[m]).max().expect("non-empty"))
            .collect(),
    };
    let t_max = entries.iter().map(|e| e.1).max().expect("non-empty");
    let d: usize = dims.iter().product();
    let mut cells = vec![None; t_max * d];
    for (line_no, t, idx, v) in entries {
        if let Some(m) = idx.iter().zip(&dims).position(|(i, d)| i > d) {
            return Err(Error::input(format!(
                "line {line_no}: index {} of mode {} exceeds its size {}",
                idx[m],
                m + 1,
                dims[m]
            )));
        }
        let lin = idx.iter().zip(&dims).rev().fold(0, |acc, (i, d)| acc * d + (i - 1));
        let slot = &mut cells[(t - 1) * d + lin];
        if slot.is_some() {
            return Err(Error::input(format!(
                "line {line_no}: duplicate cell t={t}, index {}",
                fmt_index(&idx)
            )));
        }
        *slot = Some(v);
    }
    assemble(dims, cells, t_max)
}

fn parse_wide(p: Parsed) -> Result<TensorSeries> {
    let dims = p
        .dims
        .ok_or_else(|| Error::input("wide form needs a '# dims: d1,d2,...' line"))?;
    let d: usize = dims.iter().product();
    let ncol = d + 1;
    if p.header.len() != ncol || !p.header[0].eq_ignore_ascii_case("t") {
        return Err(Error::input(format!(
            "wide header must be 't' followed by {d} value columns, got {} columns",
            p.header.len()
        )));
    }
    if p.rows.is_empty() {
        return Err(Error::input("no data rows"));
    }
    let mut by_t: Vec<(usize, usize, &Vec<String>)> = Vec::with_capacity(p.rows.len());
    for (line_no, f) in &p.rows {
        if f.len() != ncol {
            return Err(Error::input(format!(
                "line {line_no}: ragged row with {} fields, expected {ncol}",
                f.len()
            )));
        }
        by_t.push((parse_index(&f[0], "t", *line_no)?, *line_no, f));
    }
    let t_max = by_t.iter().map(|r| r.0).max().expect("non-empty");
    let mut cells = vec![None; t_max * d];
    let mut seen = vec![false; t_max];
    for (t, line_no, f) in by_t {
        if std::mem::replace(&mut seen[t - 1], true) {
            return Err(Error::input(format!("line {line_no}: duplicate observation t={t}")));
        }
        for (lin, s) in f[1..].iter().enumerate() {
            if !s.is_empty() {
                cells[(t - 1) * d + lin] = Some(parse_value(s, line_no)?);
            }
        }
    }
    assemble(dims, cells, t_max)
}

/// Long-form text with a `# dims:` line, so trailing sizes survive a round trip.
pub fn to_long_csv(series: &TensorSeries) -> String {
    let dims = series.dims();
    let mut s = dims_line(dims);
    s.push('t');
    for m in 1..=dims.len() {
        s.push_str(&format!(",i{m}"));
    }
    s.push_str(",value\n");
    for (t, x) in series.iter().enumerate() {
        for (lin, v) in x.data().iter().enumerate() {
            s.push_str(&(t + 1).to_string());
            for i in one_based(lin, dims) {
                s.push_str(&format!(",{i}"));
            }
            s.push_str(&format!(",{v:?}\n"));
        }
    }
    s
}

pub fn to_wide_csv(series: &TensorSeries) -> String {
    let mut s = dims_line(series.dims());
    s.push('t');
    for j in 1..=series.entries_per_obs() {
        s.push_str(&format!(",v{j}"));
    }
    s.push('\n');
    for (t, x) in series.iter().enumerate() {
        s.push_str(&(t + 1).to_string());
        for v in x.data() {
            s.push_str(&format!(",{v:?}"));
        }
        s.push('\n');
    }
    s
}

fn dims_line(dims: &[usize]) -> String {
    let parts: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    format!("# dims: {}\n", parts.join(","))
}

/// Read a series from `.tfms` (binary) or `.csv`.
pub fn load_series(path: impl AsRef<Path>, layout: CsvLayout) -> Result<TensorSeries> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("csv") => ingest_csv(path, layout),
        _ => tenrank_core::io::load(path).map_err(|e| match e {
            tenrank_core::Error::Io(source) => Error::io(path, source),
            other => Error::Input(format!("{}: {other}", path.display())),
        }),
    }
}
