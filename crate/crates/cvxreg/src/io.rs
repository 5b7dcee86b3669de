//! File formats: dataset/query CSV, the cvxreg-model-v1 JSON schema,
//! convergence-trace CSV and cross-validation CSV.
//!
//! Every float is written in decimal with 17 significant digits, which
//! round-trips IEEE-754 doubles exactly; reading back a file this module
//! wrote reproduces the original bits.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalValue;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{Dataset, FitMeta, PwaModel, StandardizationInfo, VariantTag};
use crate::select::CvResult;
use crate::smoothing::{ProxKind, SmoothModel, SmoothingCertificate};
use crate::solver::ConvergenceTrace;

/// 17 significant digits: the shortest width that is exact for every f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

// ---------------------------------------------------------------------------
// dataset CSV

/// Writes `x1,...,xd,y` rows.
pub fn write_dataset_csv<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    let d = data.d();
    let mut header = String::new();
    for k in 0..d {
        header.push_str(&format!("x{},", k + 1));
    }
    header.push('y');
    writeln!(w, "{}", header)?;
    for i in 0..data.n() {
        let mut line = String::new();
        for v in data.x.row(i) {
            line.push_str(&fmt_f64(*v));
            line.push(',');
        }
        line.push_str(&fmt_f64(data.y[i]));
        writeln!(w, "{}", line)?;
    }
    Ok(())
}

fn parse_float(tok: &str, line_no: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::Input(format!("line {}: cannot parse {:?} as a number", line_no, tok)))?;
    if !v.is_finite() {
        return Err(Error::Input(format!("line {}: non-finite value {:?}", line_no, tok)));
    }
    Ok(v)
}

/// Reads a dataset CSV: header row, then one row per observation; the last
/// column (named `y`) is the response. No missing values are accepted.
pub fn read_dataset_csv<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Input("empty CSV".into()))??;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    if cols.len() < 2 {
        return Err(Error::Input("CSV needs at least one covariate column and y".into()));
    }
    if cols.last() != Some(&"y") {
        return Err(Error::Input(format!(
            "last CSV column must be named 'y', found {:?}",
            cols.last().unwrap_or(&"")
        )));
    }
    let d = cols.len() - 1;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        if line.trim().is_empty() {
            return Err(Error::Input(format!("line {}: empty row", line_no)));
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != d + 1 {
            return Err(Error::Input(format!(
                "line {}: expected {} fields, found {}",
                line_no,
                d + 1,
                toks.len()
            )));
        }
        for tok in &toks[..d] {
            xs.push(parse_float(tok, line_no)?);
        }
        ys.push(parse_float(toks[d], line_no)?);
    }
    let n = ys.len();
    if n == 0 {
        return Err(Error::Input("CSV has a header but no data rows".into()));
    }
    Dataset::new(Mat::from_vec(xs, n, d), ys)
}

/// Reads query points: either d covariate columns, or a full dataset CSV
/// whose trailing y column is ignored.
pub fn read_query_csv<R: BufRead>(r: R, d: usize) -> Result<Mat> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Input("empty CSV".into()))??;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    let with_y = cols.len() == d + 1 && cols.last() == Some(&"y");
    if !(cols.len() == d || with_y) {
        return Err(Error::Input(format!(
            "query CSV has {} columns, model expects {} covariates",
            cols.len(),
            d
        )));
    }
    let mut xs: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        let toks: Vec<&str> = line.split(',').collect();
        let want = if with_y { d + 1 } else { d };
        if toks.len() != want {
            return Err(Error::Input(format!(
                "line {}: expected {} fields, found {}",
                line_no,
                want,
                toks.len()
            )));
        }
        for tok in &toks[..d] {
            xs.push(parse_float(tok, line_no)?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Input("query CSV has no rows".into()));
    }
    Ok(Mat::from_vec(xs, n, d))
}

/// Writes predictions, one per row; queries outside the hull of a canonical
/// evaluation emit the literal string `outside_hull`.
pub fn write_predictions_csv<W: Write>(mut w: W, preds: &[CanonicalValue]) -> Result<()> {
    writeln!(w, "pred")?;
    for p in preds {
        match p {
            CanonicalValue::Value(v) => writeln!(w, "{}", fmt_f64(*v))?,
            CanonicalValue::OutsideHull => writeln!(w, "outside_hull")?,
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// model JSON (schema cvxreg-model-v1)

pub const MODEL_SCHEMA: &str = "cvxreg-model-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothMeta {
    pub prox: ProxKind,
    pub tau: f64,
    pub bias_offset: f64,
    pub certificate: SmoothingCertificate,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    n: usize,
    d: usize,
    theta: Vec<f64>,
    /// row-major n x d
    xi: Vec<f64>,
    /// row-major n x d
    anchors: Vec<f64>,
    variant: VariantTag,
    standardization: Option<StandardizationInfo>,
    fit_meta: Option<FitMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    smooth: Option<SmoothMeta>,
}

struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{:.16e}", value)
    }
}

/// Serializes a model (optionally with its smoothing block) to pretty-stable
/// JSON with 17-significant-digit floats.
pub fn model_to_json(model: &PwaModel, smooth: Option<&SmoothMeta>) -> Result<String> {
    let n = model.n();
    let d = model.d();
    for v in model.theta.iter().chain(model.xi.as_slice()).chain(model.anchors.as_slice()) {
        if !v.is_finite() {
            return Err(Error::Numerical("refusing to serialize a non-finite model".into()));
        }
    }
    let file = ModelFile {
        schema: MODEL_SCHEMA.to_string(),
        n,
        d,
        theta: model.theta.clone(),
        xi: model.xi.as_slice().to_vec(),
        anchors: model.anchors.as_slice().to_vec(),
        variant: model.variant.clone(),
        standardization: model.standardization.clone(),
        fit_meta: model.fit_meta.clone(),
        smooth: smooth.cloned(),
    };
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits17);
    file.serialize(&mut ser).map_err(|e| Error::Input(format!("JSON encode failed: {}", e)))?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

/// Parses and validates a cvxreg-model-v1 document.
pub fn model_from_json(text: &str) -> Result<(PwaModel, Option<SmoothMeta>)> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Input(format!("bad model JSON: {}", e)))?;
    if file.schema != MODEL_SCHEMA {
        return Err(Error::Input(format!(
            "unsupported schema {:?} (expected {:?})",
            file.schema, MODEL_SCHEMA
        )));
    }
    let n = file.n;
    let d = file.d;
    if n == 0 || d == 0 {
        return Err(Error::Input("model must have n >= 1 and d >= 1".into()));
    }
    if file.theta.len() != n || file.xi.len() != n * d || file.anchors.len() != n * d {
        return Err(Error::Input("model arrays do not match the declared shape".into()));
    }
    if file
        .theta
        .iter()
        .chain(file.xi.iter())
        .chain(file.anchors.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Input("non-finite entry in model arrays".into()));
    }
    if let Some(info) = &file.standardization {
        if info.x_center.len() != d || info.x_scale.len() != d {
            return Err(Error::Input("standardization arrays do not match d".into()));
        }
        if info.x_scale.iter().any(|s| !(*s > 0.0)) || !(info.y_scale > 0.0) {
            return Err(Error::Input("standardization scales must be positive".into()));
        }
    }
    if let Some(sp) = &file.variant.monotone {
        if sp.len() != d {
            return Err(Error::Input("sign pattern length does not match d".into()));
        }
    }
    if let Some(l) = file.variant.lipschitz {
        if !(l > 0.0) {
            return Err(Error::Input("stored Lipschitz bound must be positive".into()));
        }
    }
    if let Some(sm) = &file.smooth {
        if !(sm.tau > 0.0) || !sm.tau.is_finite() || !sm.bias_offset.is_finite() {
            return Err(Error::Input("bad smoothing block".into()));
        }
    }
    let model = PwaModel {
        theta: file.theta,
        xi: Mat::from_vec(file.xi, n, d),
        anchors: Mat::from_vec(file.anchors, n, d),
        variant: file.variant,
        standardization: file.standardization,
        fit_meta: file.fit_meta,
    };
    Ok((model, file.smooth))
}

/// Rebuilds the evaluable smooth surrogate from a model and its stored
/// smoothing block (the pieces are derived from theta/xi/anchors).
pub fn smooth_from_meta(model: &PwaModel, meta: &SmoothMeta) -> Result<SmoothModel> {
    let (mut smooth, _) =
        crate::smoothing::make_smooth(model, meta.prox, crate::smoothing::Budget::Tau(meta.tau))?;
    smooth.bias_offset = meta.bias_offset;
    Ok(smooth)
}

// ---------------------------------------------------------------------------
// trace and CV CSV

pub fn write_trace_csv<W: Write>(mut w: W, trace: &ConvergenceTrace) -> Result<()> {
    writeln!(w, "iter,objective,primal_feas,theta_grad,wall_time_s")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.iter,
            fmt_f64(r.objective),
            fmt_f64(r.primal_feas),
            fmt_f64(r.theta_grad),
            fmt_f64(r.wall_time_s)
        )?;
    }
    Ok(())
}

fn fmt_l(l: f64) -> String {
    if l.is_finite() {
        fmt_f64(l)
    } else {
        "inf".to_string()
    }
}

pub fn write_cv_csv<W: Write>(mut w: W, cv: &CvResult) -> Result<()> {
    writeln!(w, "L,mean_err,se,chosen")?;
    for i in 0..cv.grid.len() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_l(cv.grid[i]),
            fmt_f64(cv.mean_err[i]),
            fmt_f64(cv.se[i]),
            if i == cv.chosen_index { 1 } else { 0 }
        )?;
    }
    Ok(())
}

pub fn write_risk_csv<W: Write>(mut w: W, rows: &[crate::select::RiskRow]) -> Result<()> {
    writeln!(w, "L,mean_risk,mean_training_error")?;
    for r in rows {
        writeln!(w, "{},{},{}", fmt_l(r.l), fmt_f64(r.mean_risk), fmt_f64(r.mean_training_error))?;
    }
    Ok(())
}
