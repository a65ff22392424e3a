//! Report, CSV and SVG emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::network::{delay_profile, gamma_tf, RadioGraph, RateReport, Scheduling, Weights};
use crate::optimize::{CodesignSolution, OracleResult};
use crate::scheduler::ScheduleSearchResult;
use crate::synthesis::{ControllerStructure, StepResponse};

/// 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000e0".into();
    }
    format!("{x:.16e}")
}

/// Quote a field if RFC 4180 requires it.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\r', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_line(out: &mut String, fields: &[String]) {
    let line: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
    out.push_str(&line.join(","));
    out.push_str("\r\n");
}

/// Step traces with columns `k,r,u,y,e`.
pub fn trace_csv(resp: &StepResponse, amplitude: f64) -> String {
    let mut out = String::new();
    csv_line(&mut out, &["k", "r", "u", "y", "e"].map(String::from));
    for k in 0..resp.y.len() {
        csv_line(
            &mut out,
            &[
                k.to_string(),
                fmt_f64(amplitude),
                fmt_f64(resp.u[k]),
                fmt_f64(resp.y[k]),
                fmt_f64(amplitude - resp.y[k]),
            ],
        );
    }
    out
}

fn join_u32(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

pub fn ranking_csv(res: &ScheduleSearchResult) -> String {
    let mut out = String::new();
    csv_line(
        &mut out,
        &[
            "rank", "schedule", "period", "delays_r", "delays_o", "l2", "optimal", "overshoot_y", "overshoot_u",
            "max_rate_hz", "source", "encoding", "note",
        ]
        .map(String::from),
    );
    for (i, r) in res.ranking.iter().enumerate() {
        let (oy, ou, rate) = match &r.solution {
            Some(s) => (
                fmt_f64(s.metrics.overshoot_y),
                fmt_f64(s.metrics.overshoot_u),
                fmt_f64(
                    s.rates_o
                        .as_ref()
                        .map_or(s.rates_r.max_rate(), |o| o.max_rate().max(s.rates_r.max_rate())),
                ),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        csv_line(
            &mut out,
            &[
                (i + 1).to_string(),
                r.name.clone(),
                r.period.to_string(),
                join_u32(&r.delays_r),
                join_u32(&r.delays_o),
                if r.l2.is_finite() { fmt_f64(r.l2) } else { "inf".into() },
                r.optimal.to_string(),
                oy,
                ou,
                rate,
                if r.from_oracle { "oracle" } else { "two_stage" }.into(),
                r.encoding.clone(),
                r.error.clone().unwrap_or_default(),
            ],
        );
    }
    out
}

pub fn sweep_csv(sweep: &BTreeMap<String, Vec<(f64, f64)>>) -> String {
    let mut out = String::new();
    csv_line(&mut out, &["schedule", "rate_bound_hz", "l2"].map(String::from));
    for (name, pts) in sweep {
        for &(b, v) in pts {
            csv_line(
                &mut out,
                &[name.clone(), fmt_f64(b), if v.is_finite() { fmt_f64(v) } else { "inf".into() }],
            );
        }
    }
    out
}

/// Minimal static line plot.
pub fn svg_plot(title: &str, series: &[(&str, &[f64], &str)]) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(0).max(2);
    let finite = series.iter().flat_map(|s| s.1.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let x = |k: usize| pad + (w - 2.0 * pad) * k as f64 / (n - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, xml_escape(title));
    let y0 = y(0.0);
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="gray"/>"#, w - pad);
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{:.2}" stroke="gray"/>"#, h - pad);
    let _ = writeln!(s, r#"<text x="4" y="{:.2}" font-family="sans-serif" font-size="10">{}</text>"#, y(hi) + 4.0, short(hi));
    let _ = writeln!(s, r#"<text x="4" y="{:.2}" font-family="sans-serif" font-size="10">{}</text>"#, y(lo), short(lo));
    for (i, (name, data, color)) in series.iter().enumerate() {
        let pts: Vec<String> = data
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(k, &v)| format!("{:.2},{:.2}", x(k), y(v)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = pad + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            w - pad - 60.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn short(v: f64) -> String {
    format!("{v:.3}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfReport {
    /// Ascending powers of `z`.
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub period: usize,
    pub schedule: Vec<Vec<String>>,
    pub delays: Vec<u32>,
    pub gamma: BTreeMap<u32, f64>,
    pub paths: BTreeMap<u32, Vec<String>>,
    pub transfer_function: TfReport,
    /// Frame length `period * slot_duration` in seconds.
    pub total_delay_s: f64,
    pub rates: Option<RateReport>,
}

pub fn network_report(
    g: &RadioGraph,
    sched: &Scheduling,
    w: &Weights,
    rates: Option<RateReport>,
) -> crate::error::Result<NetworkReport> {
    let prof = delay_profile(g, sched, w)?;
    let tf = gamma_tf(&prof.gamma, sched.frame_duration())?;
    Ok(NetworkReport {
        period: sched.period(),
        schedule: sched
            .slots()
            .iter()
            .map(|s| s.iter().map(|&e| g.edge_label(e)).collect())
            .collect(),
        delays: prof.delays.clone(),
        gamma: prof.gamma.clone(),
        paths: prof
            .paths_by_delay
            .iter()
            .map(|(d, ps)| (*d, ps.iter().map(|p| p.label(g)).collect()))
            .collect(),
        transfer_function: TfReport {
            num: tf.num.coeffs().to_vec(),
            den: tf.den.coeffs().to_vec(),
        },
        total_delay_s: sched.frame_duration(),
        rates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub controllability: Option<NetworkReport>,
    pub observability: Option<NetworkReport>,
    pub solution: Option<CodesignSolution>,
    pub oracle: Option<OracleResult>,
    pub ranking: Option<ScheduleSearchResult>,
    pub sweep: Option<BTreeMap<String, Vec<(f64, f64)>>>,
    pub plateau_hz: Option<BTreeMap<String, Option<f64>>>,
}

impl RunReport {
    pub fn new(command: &str, hash: &str, config: serde_json::Value) -> Self {
        RunReport {
            command: command.into(),
            config_hash: hash.into(),
            config,
            controllability: None,
            observability: None,
            solution: None,
            oracle: None,
            ranking: None,
            sweep: None,
            plateau_hz: None,
        }
    }
}

/// Everything needed to replay a designed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub config_hash: String,
    pub model: u8,
    pub schedule_r: Scheduling,
    pub schedule_o: Option<Scheduling>,
    pub controller: ControllerStructure,
    pub weights_r: Weights,
    pub weights_o: Option<Weights>,
    pub l2: f64,
}
