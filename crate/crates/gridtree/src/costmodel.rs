//! Closed-form cost predictions for the two grid evaluation orders and a
//! least-squares harness that fits measured transcript counters against the
//! models' dominant exponents.

use serde::Serialize;

use crate::error::CostError;
use crate::partynet::CostCounters;

/// Quantities entering the cost expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostParams {
    /// Number of horizontal groups.
    pub h: u64,
    /// Number of vertical groups.
    pub v: u64,
    /// Number of tuples in the data set.
    pub tuples: u64,
    /// Number of attributes.
    pub attrs: u64,
    /// Number of class values.
    pub class_values: u64,
    /// Maximal number of values for an attribute.
    pub max_attr_values: u64,
    /// Encryption key length in bits.
    pub key_bits: u64,
    /// Taylor series length.
    pub taylor_terms: u64,
}

impl CostParams {
    /// Total party count `k = h * v`.
    pub fn parties(&self) -> u64 {
        self.h * self.v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostPrediction {
    pub computation: f64,
    pub communication: f64,
}

fn log2(x: u64) -> f64 {
    (x.max(2) as f64).log2()
}

/// Merge horizontally, develop vertically: per attribute, unions over the
/// `h` parties of each group dominate. Unit constants.
pub fn predict_hmerge(p: &CostParams) -> CostPrediction {
    let r = p.attrs as f64;
    let v = p.v as f64;
    let d = p.class_values as f64;
    let m = p.max_attr_values as f64;
    let h2 = (p.h * p.h) as f64;
    let t = p.key_bits as f64;
    let tuples = p.tuples as f64;
    CostPrediction {
        computation: r * (v + d + m) * h2 * tuples * t * t * t,
        communication: r * (v + d) * h2 * tuples * t,
    }
}

/// Merge vertically, develop horizontally: per attribute,
/// `1 + d + m + d*m` counts must each be merged per layer through the
/// intersection-size protocol, then summed and pushed through x·ln(x). The
/// bracketed secure-sum terms of the model are additive and can be toggled
/// for sensitivity checks.
pub fn predict_vmerge(p: &CostParams, include_bracketed: bool) -> CostPrediction {
    let r = p.attrs as f64;
    let d = p.class_values as f64;
    let m = p.max_attr_values as f64;
    let vals = 1.0 + d + m + d * m;
    let h = p.h as f64;
    let v2 = (p.v * p.v) as f64;
    let t = p.key_bits as f64;
    let n = p.taylor_terms as f64;
    let tuples = p.tuples as f64;
    let logt = log2(p.tuples);
    let bracket = if include_bracketed { h * logt } else { 0.0 };
    CostPrediction {
        computation: r * h * vals * v2 * tuples * t * t * t
            + r * vals * logt
            + r * logt
            + bracket,
        communication: r * h * vals * v2 * tuples * t
            + r * vals * n * logt * t
            + r * logt * t
            + bracket,
    }
}

/// One measured run.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub params: CostParams,
    pub counters: CostCounters,
}

/// Least-squares slope of ln(measured) against ln(param).
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<f64, CostError> {
    if points.len() < 4 {
        return Err(CostError::FitError(format!(
            "need at least 4 measurement points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return Err(CostError::FitError("measurements must be positive".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(CostError::FitError("swept parameter does not vary".into()));
    }
    Ok((n * sxy - sx * sy) / denom)
}

type ParamGetter = fn(&CostParams) -> u64;

/// Which single parameter a sweep varies.
fn swept_field(points: &[SweepPoint]) -> Result<(&'static str, Vec<f64>), CostError> {
    let fields: [(&'static str, ParamGetter); 4] = [
        ("h", |p| p.h),
        ("v", |p| p.v),
        ("tuples", |p| p.tuples),
        ("attrs", |p| p.attrs),
    ];
    let mut varying = Vec::new();
    for (name, get) in fields {
        let first = get(&points[0].params);
        if points.iter().any(|pt| get(&pt.params) != first) {
            varying.push((
                name,
                points.iter().map(|pt| get(&pt.params) as f64).collect(),
            ));
        }
    }
    match varying.len() {
        1 => Ok(varying.pop().unwrap()),
        0 => Err(CostError::FitError("no parameter varies".into())),
        _ => Err(CostError::FitError(
            "more than one parameter varies across the sweep".into(),
        )),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepFit {
    pub strategy: String,
    pub swept: String,
    pub exponent_bytes: f64,
    pub points: Vec<SweepPoint>,
    pub predicted_communication: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchedComparison {
    pub params: CostParams,
    pub hmerge_bytes: u64,
    pub vmerge_bytes: u64,
    /// Which strategy moved fewer bytes at the matched configuration.
    pub verdict: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub hmerge: SweepFit,
    pub vmerge: SweepFit,
    pub matched: MatchedComparison,
}

fn fit_sweep(strategy: &str, points: &[SweepPoint]) -> Result<SweepFit, CostError> {
    let (swept, xs) = swept_field(points)?;
    let ys: Vec<f64> = points.iter().map(|p| p.counters.bytes as f64).collect();
    let pairs: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
    let exponent = fit_exponent(&pairs)?;
    let predicted = points
        .iter()
        .map(|p| match strategy {
            "grid-hmerge" => predict_hmerge(&p.params).communication,
            _ => predict_vmerge(&p.params, true).communication,
        })
        .collect();
    Ok(SweepFit {
        strategy: strategy.to_string(),
        swept: swept.to_string(),
        exponent_bytes: exponent,
        points: points.to_vec(),
        predicted_communication: predicted,
    })
}

/// Fit both sweeps and compare the strategies at a matched configuration.
pub fn fit_and_compare(
    hmerge_points: &[SweepPoint],
    vmerge_points: &[SweepPoint],
    matched: (&SweepPoint, &SweepPoint),
) -> Result<CostReport, CostError> {
    let hmerge = fit_sweep("grid-hmerge", hmerge_points)?;
    let vmerge = fit_sweep("grid-vmerge", vmerge_points)?;
    let (mh, mv) = matched;
    if mh.params != mv.params {
        return Err(CostError::FitError(
            "matched comparison needs identical parameters".into(),
        ));
    }
    let verdict = if mh.counters.bytes < mv.counters.bytes {
        "hmerge-cheaper"
    } else {
        "vmerge-cheaper"
    };
    Ok(CostReport {
        hmerge,
        vmerge,
        matched: MatchedComparison {
            params: mh.params,
            hmerge_bytes: mh.counters.bytes,
            vmerge_bytes: mv.counters.bytes,
            verdict: verdict.to_string(),
        },
    })
}

/// Plain-text table of a report.
pub fn render_table(report: &CostReport) -> String {
    let mut out = String::new();
    for fit in [&report.hmerge, &report.vmerge] {
        out.push_str(&format!(
            "{} sweep over {} -> byte exponent {:.3}\n",
            fit.strategy, fit.swept, fit.exponent_bytes
        ));
        out.push_str("  point  bytes       messages    model-comm\n");
        for (pt, model) in fit.points.iter().zip(&fit.predicted_communication) {
            let x = match fit.swept.as_str() {
                "h" => pt.params.h,
                "v" => pt.params.v,
                "tuples" => pt.params.tuples,
                _ => pt.params.attrs,
            };
            out.push_str(&format!(
                "  {:>5}  {:>10}  {:>10}  {:>10.3e}\n",
                x, pt.counters.bytes, pt.counters.messages, model
            ));
        }
    }
    out.push_str(&format!(
        "matched {}x{}: hmerge {} bytes vs vmerge {} bytes -> {}\n",
        report.matched.params.v,
        report.matched.params.h,
        report.matched.hmerge_bytes,
        report.matched.vmerge_bytes,
        report.matched.verdict
    ));
    out
}
