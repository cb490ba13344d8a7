//! Observation/feature trajectories and their CSV form.
//!
//! CSV columns are `t,x_0..x_{Dx-1}` optionally followed by
//! `z_0..z_{Dz-1},mask`. Rows run over `t = 1..T`; when features are present
//! an extra `t = 0` row carries `z_0` with empty observation cells. Missing
//! observations are written as `nan`, the mask as `1` (observed) / `0`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `T × D_x`.
    pub x: Tensor,
    /// `(T+1) × D_z`, row 0 is `z_0`.
    pub z: Option<Tensor>,
    /// Length `T`, `true` where `x_t` is observed.
    pub mask: Option<Vec<bool>>,
}

impl Trajectory {
    pub fn observed(x: Tensor) -> Self {
        Self {
            x,
            z: None,
            mask: None,
        }
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_observed(&self, t: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[t])
    }

    /// `z_1..z_T` without the initial feature.
    pub fn features(&self) -> Option<Tensor> {
        self.z.as_ref().map(|z| z.slice_rows(1, z.rows()))
    }

    pub fn check(&self) -> Result<()> {
        let t = self.len();
        if t == 0 {
            return Err(Error::contract("trajectory must have at least one step"));
        }
        if let Some(z) = &self.z {
            if z.rows() != t + 1 {
                return Err(Error::dim("Trajectory", &[t + 1, z.cols()], z.shape()));
            }
        }
        if let Some(m) = &self.mask {
            if m.len() != t {
                return Err(Error::dim("Trajectory mask", &[t], &[m.len()]));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        self.check()?;
        let dx = self.x.cols();
        let dz = self.z.as_ref().map_or(0, Tensor::cols);
        let mut header = vec!["t".to_string()];
        header.extend((0..dx).map(|i| format!("x_{i}")));
        if self.z.is_some() {
            header.extend((0..dz).map(|i| format!("z_{i}")));
            header.push("mask".into());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::format("trajectory csv", e.to_string());
        w.write_record(&header).map_err(csv_err)?;

        if let Some(z) = &self.z {
            let mut rec = vec!["0".to_string()];
            rec.extend(std::iter::repeat_n(String::new(), dx));
            rec.extend(z.row(0).iter().map(fmt_value));
            rec.push(String::new());
            w.write_record(&rec).map_err(csv_err)?;
        }
        for t in 0..self.len() {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(self.x.row(t).iter().map(fmt_value));
            if let Some(z) = &self.z {
                rec.extend(z.row(t + 1).iter().map(fmt_value));
                rec.push(if self.is_observed(t) { "1" } else { "0" }.into());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::format("trajectory csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::format("trajectory csv", m);
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.get(0) != Some("t") {
            return Err(bad("first column must be `t`".into()));
        }
        let dx = header.iter().filter(|h| h.starts_with("x_")).count();
        let dz = header.iter().filter(|h| h.starts_with("z_")).count();
        let has_mask = header.iter().any(|h| h == "mask");
        let expected = 1 + dx + dz + usize::from(has_mask);
        if dx == 0 || header.len() != expected || (dz > 0) != has_mask {
            return Err(bad(format!("unexpected header {header:?}")));
        }

        let mut x_rows = Vec::new();
        let mut z_rows = Vec::new();
        let mut mask = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let at = |m: &str| bad(format!("row {}: {m}", line + 1));
            let t: usize = rec[0].trim().parse().map_err(|_| at("bad t"))?;
            let parse_cols = |range: std::ops::Range<usize>| {
                range
                    .map(|i| parse_value(&rec[i]).ok_or_else(|| at(&format!("bad value `{}`", &rec[i]))))
                    .collect::<Result<Vec<f64>>>()
            };
            if t == 0 {
                if dz == 0 || !z_rows.is_empty() {
                    return Err(at("unexpected t = 0 row"));
                }
                z_rows.push(parse_cols(1 + dx..1 + dx + dz)?);
                continue;
            }
            if t != x_rows.len() + 1 {
                return Err(at("rows must be ordered by t"));
            }
            x_rows.push(parse_cols(1..1 + dx)?);
            if dz > 0 {
                if z_rows.is_empty() {
                    return Err(at("missing t = 0 row"));
                }
                z_rows.push(parse_cols(1 + dx..1 + dx + dz)?);
                mask.push(match rec[expected - 1].trim() {
                    "1" => true,
                    "0" => false,
                    other => return Err(at(&format!("bad mask `{other}`"))),
                });
            }
        }
        let traj = Trajectory {
            x: Tensor::from_rows(&x_rows)?,
            z: (dz > 0).then(|| Tensor::from_rows(&z_rows)).transpose()?,
            mask: (dz > 0).then_some(mask),
        };
        traj.check()?;
        Ok(traj)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&read_to_string(path)?)
    }
}

/// Shortest round-trip decimal form; NaN is written as `nan`.
pub(crate) fn fmt_value(v: &f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:?}")
    }
}

pub(crate) fn parse_value(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// Writes a plain matrix as CSV with the given column prefix (`x`, `z`, ...).
pub fn matrix_to_csv(m: &Tensor, prefix: &str) -> String {
    let mut out = std::iter::once("t".to_string())
        .chain((0..m.cols()).map(|i| format!("{prefix}_{i}")))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for t in 0..m.rows() {
        out.push_str(&(t + 1).to_string());
        for v in m.row(t) {
            out.push(',');
            out.push_str(&fmt_value(v));
        }
        out.push('\n');
    }
    out
}

/// Reads a matrix written by [`matrix_to_csv`].
pub fn matrix_from_csv(text: &str) -> Result<Tensor> {
    let bad = |m: String| Error::format("matrix csv", m);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let width = r.headers().map_err(|e| bad(e.to_string()))?.len();
    if width < 2 {
        return Err(bad("need a `t` column and at least one value column".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = (1..width)
            .map(|j| parse_value(&rec[j]).ok_or_else(|| bad(format!("row {}: bad value `{}`", i + 1, &rec[j]))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Tensor::from_rows(&rows)
}
