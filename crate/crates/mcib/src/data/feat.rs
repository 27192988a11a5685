//! MCIB-FEAT v1: a text-based feature file with an explicit header.
//!
//! Line 1: `MCIB-FEAT v1; n=<rows>; C=<classes>; d0=<int>; d1=<int>; d2=<int>; tokens=<int>`
//! Each record: the label, then the three modality blocks as comma-separated
//! decimals in declared order (token-major within a block). Lines starting
//! with `#` are comments; the file is UTF-8.

use std::fmt::Write as _;
use std::path::Path;

use crate::diff::Tensor;
use crate::error::{Error, Result};

use super::{Dataset, ModalityBundle};

const MAGIC: &str = "MCIB-FEAT v1";

pub fn save_features(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MAGIC}; n={}; C={}; d0={}; d1={}; d2={}; tokens={}",
        dataset.len(),
        dataset.n_classes,
        dataset.dims[0],
        dataset.dims[1],
        dataset.dims[2],
        dataset.tokens
    );
    for bundle in &dataset.bundles {
        let _ = write!(out, "{}", bundle.y);
        for x in &bundle.x {
            for v in x.data() {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_features(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_features(&text)
}

pub fn parse_features(text: &str) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::data("feature file is empty, expected a header"))?;
    let (n, n_classes, dims, tokens) = parse_header(header)?;

    let per_modality: Vec<usize> = dims.iter().map(|&d| d * tokens).collect();
    let row_values: usize = per_modality.iter().sum();

    let mut bundles = Vec::with_capacity(n);
    for (line_no, line) in lines {
        let row = bundles.len();
        if row >= n {
            return Err(Error::data(format!(
                "row {row} (line {}): header declares n={n} but more records follow",
                line_no + 1
            )));
        }
        let mut fields = line.split(',');
        let label_field = fields.next().unwrap_or("");
        let y: usize = label_field.trim().parse().map_err(|_| {
            Error::data(format!(
                "row {row} (line {}): bad label '{label_field}'",
                line_no + 1
            ))
        })?;
        if y >= n_classes {
            return Err(Error::data(format!(
                "row {row} (line {}): label {y} out of range for C={n_classes}",
                line_no + 1
            )));
        }
        let mut values = Vec::with_capacity(row_values);
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::data(format!(
                    "row {row} (line {}): bad value '{f}'",
                    line_no + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "row {row} (line {}): non-finite value",
                    line_no + 1
                )));
            }
            values.push(v);
        }
        if values.len() != row_values {
            return Err(Error::data(format!(
                "row {row} (line {}): expected {row_values} values \
                 (tokens={tokens} x dims {dims:?}), got {}",
                line_no + 1,
                values.len()
            )));
        }
        let mut offset = 0;
        let mut x = Vec::with_capacity(3);
        for (m, &count) in per_modality.iter().enumerate() {
            let t = Tensor::new(tokens, dims[m], values[offset..offset + count].to_vec())?;
            offset += count;
            x.push(t);
        }
        let x: [Tensor; 3] = x.try_into().expect("three blocks");
        bundles.push(ModalityBundle { x, y });
    }
    if bundles.len() != n {
        return Err(Error::data(format!(
            "header declares n={n} but file holds {} records",
            bundles.len()
        )));
    }
    Ok(Dataset {
        ids: (0..n as u64).collect(),
        bundles,
        n_classes,
        dims,
        tokens,
    })
}

fn parse_header(header: &str) -> Result<(usize, usize, [usize; 3], usize)> {
    let mut parts = header.split(';').map(str::trim);
    let magic = parts.next().unwrap_or("");
    if magic != MAGIC {
        return Err(Error::data(format!(
            "bad header magic '{magic}', expected '{MAGIC}'"
        )));
    }
    let mut n = None;
    let mut c = None;
    let mut dims = [None; 3];
    let mut tokens = None;
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::data(format!("bad header field '{part}'")))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("bad header value in '{part}'")))?;
        match key.trim() {
            "n" => n = Some(value),
            "C" => c = Some(value),
            "d0" => dims[0] = Some(value),
            "d1" => dims[1] = Some(value),
            "d2" => dims[2] = Some(value),
            "tokens" => tokens = Some(value),
            other => return Err(Error::data(format!("unknown header field '{other}'"))),
        }
    }
    let n = n.ok_or_else(|| Error::data("header missing n"))?;
    let c = c.ok_or_else(|| Error::data("header missing C"))?;
    if c < 2 {
        return Err(Error::data("header C must be at least 2"));
    }
    let tokens = tokens.ok_or_else(|| Error::data("header missing tokens"))?;
    if tokens == 0 {
        return Err(Error::data("header tokens must be positive"));
    }
    let dims = [
        dims[0].ok_or_else(|| Error::data("header missing d0"))?,
        dims[1].ok_or_else(|| Error::data("header missing d1"))?,
        dims[2].ok_or_else(|| Error::data("header missing d2"))?,
    ];
    if dims.contains(&0) {
        return Err(Error::data("header dims must be positive"));
    }
    Ok((n, c, dims, tokens))
}
