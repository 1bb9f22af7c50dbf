//! CSV input and output for training and test data.
//!
//! Training files have a header `x1..xd,y[,cov_1..cov_p]`; test files
//! `x1..xd[,cov_1..cov_p]`. Extra columns are ignored.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::LocationSet;
use crate::inference::{RegressionData, TestData};

struct Columns {
    coords: Vec<usize>,
    y: Option<usize>,
    covs: Vec<usize>,
}

fn numbered(headers: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    let mut found: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(col, h)| {
            h.trim()
                .strip_prefix(prefix)
                .and_then(|rest| rest.parse::<usize>().ok())
                .map(|k| (k, col))
        })
        .collect();
    found.sort_unstable();
    for (expect, &(k, _)) in (1..).zip(&found) {
        if k != expect {
            return Err(Error::Parse(format!("column {prefix}{expect} missing")));
        }
    }
    Ok(found.into_iter().map(|(_, c)| c).collect())
}

fn columns(headers: &csv::StringRecord, need_y: bool) -> Result<Columns> {
    let coords = numbered(headers, "x")?;
    if coords.is_empty() {
        return Err(Error::Parse("no coordinate columns x1..xd".into()));
    }
    let y = headers.iter().position(|h| h.trim() == "y");
    if need_y && y.is_none() {
        return Err(Error::Parse("no response column y".into()));
    }
    Ok(Columns {
        coords,
        y,
        covs: numbered(headers, "cov_")?,
    })
}

fn parse(field: Option<&str>, line: usize, name: &str) -> Result<f64> {
    let s = field.ok_or_else(|| Error::Parse(format!("line {line}: missing {name}")))?;
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse {name} value {s:?}")))
}

struct Table {
    coords: Vec<f64>,
    y: Vec<f64>,
    covs: Vec<f64>,
    dim: usize,
    p: usize,
}

fn read_table<R: Read>(reader: R, need_y: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let cols = columns(rdr.headers()?, need_y)?;
    let mut t = Table {
        coords: Vec::new(),
        y: Vec::new(),
        covs: Vec::new(),
        dim: cols.coords.len(),
        p: cols.covs.len(),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        for &c in &cols.coords {
            t.coords.push(parse(rec.get(c), line, "coordinate")?);
        }
        if let (true, Some(c)) = (need_y, cols.y) {
            t.y.push(parse(rec.get(c), line, "y")?);
        }
        for &c in &cols.covs {
            t.covs.push(parse(rec.get(c), line, "covariate")?);
        }
    }
    Ok(t)
}

fn covariates(t: &Table) -> DMatrix<f64> {
    let n = t.coords.len() / t.dim;
    DMatrix::from_row_slice(n, t.p, &t.covs)
}

pub fn read_training_csv<R: Read>(reader: R) -> Result<RegressionData> {
    let t = read_table(reader, true)?;
    let x = covariates(&t);
    let loc = LocationSet::from_flat(t.dim, t.coords)?;
    RegressionData::new(x, t.y, loc)
}

pub fn read_test_csv<R: Read>(reader: R) -> Result<TestData> {
    let t = read_table(reader, false)?;
    let x = covariates(&t);
    let loc = LocationSet::from_flat(t.dim, t.coords)?;
    TestData::new(x, loc)
}

/// Reads a single numeric column by name, e.g. held-out truth values.
pub fn read_column<R: Read>(reader: R, name: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse(format!("no column {name}")))?;
    rdr.records()
        .enumerate()
        .map(|(row, rec)| parse(rec?.get(col), row + 2, name))
        .collect()
}

fn header(dim: usize, y: bool, p: usize, extra: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = (1..=dim).map(|j| format!("x{j}")).collect();
    if y {
        h.push("y".into());
    }
    h.extend((1..=p).map(|j| format!("cov_{j}")));
    h.extend(extra.iter().map(|s| s.to_string()));
    h
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes training data, optionally with extra named columns (e.g. the
/// simulated spatial effect).
pub fn write_training_csv<W: Write>(writer: W, data: &RegressionData, extra: &[(&str, &[f64])]) -> Result<()> {
    write_rows(writer, &data.locations, Some(&data.y), &data.x, extra)
}

pub fn write_test_csv<W: Write>(writer: W, test: &TestData, extra: &[(&str, &[f64])]) -> Result<()> {
    write_rows(writer, &test.locations, None, &test.x, extra)
}

fn write_rows<W: Write>(
    writer: W,
    loc: &LocationSet,
    y: Option<&[f64]>,
    x: &DMatrix<f64>,
    extra: &[(&str, &[f64])],
) -> Result<()> {
    let n = loc.len();
    if let Some((name, col)) = extra.iter().find(|(_, c)| c.len() != n) {
        return Err(Error::Misaligned(format!("column {name} has {} rows, expected {n}", col.len())));
    }
    let mut w = csv::Writer::from_writer(writer);
    let names: Vec<&str> = extra.iter().map(|(n, _)| *n).collect();
    w.write_record(header(loc.dim(), y.is_some(), x.ncols(), &names))?;
    for i in 0..n {
        let mut rec: Vec<String> = loc.point(i).iter().map(|v| fmt(*v)).collect();
        if let Some(y) = y {
            rec.push(fmt(y[i]));
        }
        rec.extend((0..x.ncols()).map(|j| fmt(x[(i, j)])));
        rec.extend(extra.iter().map(|(_, c)| fmt(c[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parameter draws read back from `iteration,beta_0..,sigma2,theta_*` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRows {
    pub iteration: Vec<usize>,
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub theta: Vec<[f64; 2]>,
}

pub fn read_params_csv<R: Read>(reader: R) -> Result<ParamRows> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let it = find("iteration").ok_or_else(|| Error::Parse("no iteration column".into()))?;
    let s2 = find("sigma2").ok_or_else(|| Error::Parse("no sigma2 column".into()))?;
    let betas: Vec<usize> = (0..)
        .map_while(|j| find(&format!("beta_{j}")))
        .collect();
    let thetas: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("theta_"))
        .map(|(c, _)| c)
        .collect();
    if thetas.len() != 2 {
        return Err(Error::Parse(format!("expected 2 theta columns, found {}", thetas.len())));
    }
    let mut out = ParamRows {
        iteration: Vec::new(),
        beta: Vec::new(),
        sigma2: Vec::new(),
        theta: Vec::new(),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let iteration = rec
            .get(it)
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("line {line}: bad iteration")))?;
        out.iteration.push(iteration);
        out.beta.push(betas.iter().map(|&c| parse(rec.get(c), line, "beta")).collect::<Result<_>>()?);
        out.sigma2.push(parse(rec.get(s2), line, "sigma2")?);
        out.theta.push([parse(rec.get(thetas[0]), line, "theta")?, parse(rec.get(thetas[1]), line, "theta")?]);
    }
    Ok(out)
}

/// Reads `iteration,location_index,value` rows into per-iteration vectors,
/// in order of first appearance.
pub fn read_draws_csv<R: Read>(reader: R) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out: Vec<(usize, Vec<f64>)> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let field = |c: usize| -> Result<usize> {
            rec.get(c)
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Parse(format!("line {line}: bad index")))
        };
        let (it, idx) = (field(0)?, field(1)?);
        let v = parse(rec.get(2), line, "value")?;
        if out.last().map(|d| d.0) != Some(it) {
            out.push((it, Vec::new()));
        }
        let draw = &mut out.last_mut().expect("pushed above").1;
        if idx != draw.len() {
            return Err(Error::Parse(format!("line {line}: location {idx} out of order")));
        }
        draw.push(v);
    }
    Ok(out)
}
