//! CSV rendering of experiment results.

use std::fmt::Write as _;
use std::path::Path;

use super::{CoverageResult, ExperimentOutput, RateResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    /// Wide table: one row per `(d, n)`, one column per `ε` (coverage), or
    /// one row per curve point (rates).
    CsvTable,
    /// Long form for plotting; rate files carry one extra fit row per curve.
    PlotData,
}

/// `printf("%.{sig}g")`: shortest of fixed or exponent notation, trailing
/// zeros stripped.
pub fn format_sig(x: f64, sig: usize) -> String {
    let sig = sig.max(1);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn num(x: f64) -> String {
    format_sig(x, 17)
}

pub fn render(result: &ExperimentOutput, format: OutputFormat) -> String {
    match (result, format) {
        (ExperimentOutput::Coverage(c), OutputFormat::CsvTable) => coverage_table(c),
        (ExperimentOutput::Coverage(c), OutputFormat::PlotData) => coverage_plot(c),
        (ExperimentOutput::Rate(r), OutputFormat::CsvTable) => rate_table(r),
        (ExperimentOutput::Rate(r), OutputFormat::PlotData) => rate_plot(r),
    }
}

pub fn emit(result: &ExperimentOutput, path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render(result, format)).map_err(|e| Error::io(path, e))
}

fn coverage_table(c: &CoverageResult) -> String {
    let mut eps: Vec<f64> = Vec::new();
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for cell in &c.cells {
        if !eps.contains(&cell.eps) {
            eps.push(cell.eps);
        }
        if !rows.contains(&(cell.d, cell.n)) {
            rows.push((cell.d, cell.n));
        }
    }
    let mut out = String::from("d,n");
    for e in &eps {
        write!(out, ",eps={}", num(*e)).unwrap();
    }
    out.push('\n');
    for (d, n) in rows {
        write!(out, "{d},{n}").unwrap();
        for e in &eps {
            let cell = c.cells.iter().find(|x| x.d == d && x.n == n && x.eps == *e);
            match cell {
                Some(x) => write!(out, ",{}", num(x.coverage)).unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn coverage_plot(c: &CoverageResult) -> String {
    let mut out = String::from("d,eps,n,m,truth,hits,evaluated,excluded,coverage,mean_half_width\n");
    for x in &c.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            x.d,
            num(x.eps),
            x.n,
            x.m,
            num(x.truth),
            x.hits,
            x.evaluated,
            x.excluded,
            num(x.coverage),
            num(x.mean_half_width)
        )
        .unwrap();
    }
    out
}

fn rate_table(r: &RateResult) -> String {
    let mut out = String::from("curve,d,eps,n,mean,sd,evaluated,excluded\n");
    for c in &r.curves {
        for p in &c.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.label,
                c.d,
                num(c.eps),
                p.n,
                num(p.mean),
                num(p.sd),
                p.evaluated,
                p.excluded
            )
            .unwrap();
        }
    }
    out
}

/// `row` is `point` for `(ln n, ln|mean|)` pairs and `fit` for the line.
fn rate_plot(r: &RateResult) -> String {
    let mut out = String::from("curve,d,eps,row,x,y,slope,intercept,slope_se\n");
    for c in &r.curves {
        let prefix = format!("{},{},{}", c.label, c.d, num(c.eps));
        for p in &c.points {
            writeln!(out, "{prefix},point,{},{},,,", num((p.n as f64).ln()), num(p.mean.abs().ln())).unwrap();
        }
        if let Some(f) = c.fit {
            writeln!(out, "{prefix},fit,,,{},{},{}", num(f.slope), num(f.intercept), num(f.slope_se)).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{CoverageCell, ExperimentKind, RateCurve, RatePoint};
    use super::*;

    #[test]
    fn sig_formatting_matches_printf() {
        assert_eq!(format_sig(0.1, 17), "0.10000000000000001");
        assert_eq!(format_sig(1.0, 17), "1");
        assert_eq!(format_sig(3.548026, 6), "3.54803");
        assert_eq!(format_sig(1e-5, 6), "1e-05");
        assert_eq!(format_sig(123456789.0, 6), "1.23457e+08");
        assert_eq!(format_sig(-0.00012345, 3), "-0.000123");
        assert_eq!(format_sig(100000.0, 6), "100000");
        assert_eq!(format_sig(1e300, 17), "1.0000000000000001e+300");
        assert_eq!(format_sig(f64::NAN, 6), "nan");
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [std::f64::consts::PI, 1.0 / 3.0, 2.2250738585072014e-308, -7.1e-12, 0.95] {
            assert_eq!(format_sig(x, 17).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn empty_results_are_header_only() {
        let cov = ExperimentOutput::Coverage(CoverageResult::default());
        assert_eq!(render(&cov, OutputFormat::CsvTable), "d,n\n");
        assert_eq!(render(&cov, OutputFormat::PlotData).lines().count(), 1);
        let rate =
            ExperimentOutput::Rate(RateResult { kind: ExperimentKind::BiasRate, curves: vec![], scenarios: vec![] });
        assert_eq!(render(&rate, OutputFormat::CsvTable), "curve,d,eps,n,mean,sd,evaluated,excluded\n");
        assert_eq!(render(&rate, OutputFormat::PlotData).lines().count(), 1);
    }

    #[test]
    fn coverage_table_is_wide() {
        let cell = |eps: f64, n: usize, coverage: f64| CoverageCell {
            d: 2,
            eps,
            n,
            m: n,
            truth: 1.0,
            hits: 0,
            evaluated: 0,
            excluded: 0,
            coverage,
            mean_half_width: 0.0,
        };
        let c = CoverageResult {
            cells: vec![cell(2.0, 100, 0.95), cell(5.0, 100, 0.94), cell(2.0, 250, 0.5), cell(5.0, 250, 0.25)],
            scenarios: vec![],
        };
        let text = render(&ExperimentOutput::Coverage(c), OutputFormat::CsvTable);
        assert_eq!(text, "d,n,eps=2,eps=5\n2,100,0.94999999999999996,0.93999999999999995\n2,250,0.5,0.25\n");
    }

    #[test]
    fn rate_plot_has_fit_rows() {
        let points: Vec<RatePoint> = [10, 100]
            .iter()
            .map(|&n| RatePoint { n, mean: 1.0 / n as f64, sd: 0.0, evaluated: 1, excluded: 0 })
            .collect();
        let fit = super::super::fit_log_log(&points);
        let r = RateResult {
            kind: ExperimentKind::BiasRate,
            curves: vec![RateCurve { label: "bias".into(), d: 1, eps: 1.0, points, fit }],
            scenarios: vec![],
        };
        let text = render(&ExperimentOutput::Rate(r), OutputFormat::PlotData);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        let fit_row = lines[3].strip_prefix("bias,1,1,fit,,,").unwrap();
        let slope: f64 = fit_row.split(',').next().unwrap().parse().unwrap();
        assert!((slope + 1.0).abs() < 1e-12);
        assert!(lines[1].starts_with("bias,1,1,point,"));
    }
}
