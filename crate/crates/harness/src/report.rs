//! CSV rendering of experiment results.

use std::fmt::Write as _;

use mimo_mc::OpCounter;

pub const CSV_HEADER: &str =
    "classifier,snr_db,ccr,ccr_ci95,ser,frames,layers,dist_ops,exp_ops,log_ops";

/// One CSV row: a classifier (or detector) at one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub classifier: String,
    pub snr_db: f64,
    pub ccr: f64,
    pub ccr_ci95: f64,
    pub ser: Option<f64>,
    pub frames: u64,
    pub layers: u64,
    pub ops: OpCounter,
}

/// Formats like C's `%.6g`.
pub fn fmt_g(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp) as usize, v);
        strip_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip_zeros(mantissa), sign, exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// 95% normal-approximation half-width of a binomial proportion.
pub fn binomial_ci95(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

pub fn render_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let ser = r.ser.map(fmt_g).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.classifier,
            fmt_g(r.snr_db),
            fmt_g(r.ccr),
            fmt_g(r.ccr_ci95),
            ser,
            r.frames,
            r.layers,
            r.ops.distances,
            r.ops.exps,
            r.ops.logs
        )
        .expect("writing to a String");
    }
    out
}

/// Parses a CSV produced by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing or unexpected header".into());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(format!("expected 10 fields: {line}"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s}: {e}"));
            let int = |s: &str| s.parse::<u64>().map_err(|e| format!("{s}: {e}"));
            Ok(MetricRow {
                classifier: f[0].to_string(),
                snr_db: num(f[1])?,
                ccr: num(f[2])?,
                ccr_ci95: num(f[3])?,
                ser: if f[4].is_empty() {
                    None
                } else {
                    Some(num(f[4])?)
                },
                frames: int(f[5])?,
                layers: int(f[6])?,
                ops: OpCounter {
                    distances: int(f[7])?,
                    exps: int(f[8])?,
                    logs: int(f[9])?,
                },
            })
        })
        .collect()
}
