//! CSV, JSON and plot-data output.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conditions::ConditionReport;
use crate::exclusion::{trend_rows, Exclusion, ParameterCell, SampleOutcome, SweepRecord, TrendRow};
use crate::lemmas::LemmaReport;
use crate::orbit::{DistortionLadder, OrbitTrace};
use crate::returns::Decomposition;

pub const ARTIFACT: &str = "circlemap";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const VACUOUS: &str = "n/a(vacuous)";

/// Shortest round-trip rendering.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// `#`-prefixed lines naming the artifact version and embedding the config JSON.
pub fn comment_header(config_json: &str) -> String {
    format!("# {ARTIFACT} {VERSION}\n# config: {config_json}\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub artifact: String,
    pub version: String,
    pub config: serde_json::Value,
}

impl Header {
    pub fn new(config_json: &str) -> Self {
        Self {
            artifact: ARTIFACT.to_string(),
            version: VERSION.to_string(),
            config: serde_json::from_str(config_json).unwrap_or(serde_json::Value::Null),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordsFile {
    pub header: Header,
    pub records: Vec<SweepRecord>,
}

pub fn records_json(records: &[SweepRecord], config_json: &str) -> String {
    let file = RecordsFile {
        header: Header::new(config_json),
        records: records.to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("records serialize") + "\n"
}

pub fn parse_records(text: &str) -> serde_json::Result<RecordsFile> {
    serde_json::from_str(text)
}

pub fn trend_csv(rows: &[TrendRow], config_json: &str) -> String {
    let mut s = comment_header(config_json);
    s.push_str("L,n,fraction,stderr,paper_bound\n");
    for r in rows {
        let bound = r.paper_bound.map_or_else(|| VACUOUS.to_string(), fmt_f64);
        let _ = writeln!(s, "{},{},{},{},{}", fmt_f64(r.l), r.n, fmt_f64(r.fraction), fmt_f64(r.stderr), bound);
    }
    s
}

/// One row per sample; failure columns are empty for survivors.
pub fn survivors_csv(outcomes: &[SampleOutcome], config_json: &str) -> String {
    let mut s = comment_header(config_json);
    s.push_str("a,first_failure_step,condition,critical_point\n");
    for o in outcomes {
        let (step, cond, crit) = match o.exclusion {
            Some(e) => (e.step.to_string(), e.reason.label().to_string(), e.critical_index.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(s, "{},{step},{cond},{crit}", fmt_f64(o.a));
    }
    s
}

fn exclusion_cols(e: Option<Exclusion>) -> String {
    e.map_or_else(|| ",".to_string(), |e| format!("{},{}", e.step, e.reason.label()))
}

/// Bisection leaves with the verdicts at both endpoints and the midpoint.
pub fn cells_csv(cells: &[ParameterCell], config_json: &str) -> String {
    let mut s = comment_header(config_json);
    s.push_str("lo,hi,depth,unresolved,mid_step,mid_condition,lo_step,lo_condition,hi_step,hi_condition\n");
    for c in cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt_f64(c.lo),
            fmt_f64(c.hi),
            c.depth,
            c.unresolved,
            exclusion_cols(c.representative.exclusion),
            exclusion_cols(c.lo_exclusion),
            exclusion_cols(c.hi_exclusion)
        );
    }
    s
}

/// Gnuplot-ready `n fraction stderr` columns.
pub fn survival_dat(record: &SweepRecord, config_json: &str) -> String {
    let mut s = comment_header(config_json);
    let _ = writeln!(s, "# L = {}\n# n fraction stderr", fmt_f64(record.l));
    for (n, (f, e)) in record.survivor_fraction.iter().zip(&record.stderr).enumerate() {
        let _ = writeln!(s, "{n} {} {}", fmt_f64(*f), fmt_f64(*e));
    }
    s
}

pub fn trend_dat(rows: &[TrendRow], config_json: &str) -> String {
    let mut s = comment_header(config_json);
    s.push_str("# L fraction stderr paper_bound\n");
    for r in rows {
        let bound = r.paper_bound.map_or_else(|| "NaN".to_string(), fmt_f64);
        let _ = writeln!(s, "{} {} {} {}", fmt_f64(r.l), fmt_f64(r.fraction), fmt_f64(r.stderr), bound);
    }
    s
}

pub fn summary_table(records: &[SweepRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>12} {:>6} {:>8} {:>10} {:>10} {:>14} {:>8}",
        "L", "n_max", "mode", "fraction", "stderr", "paper_bound", "profile"
    );
    for r in records {
        let bound = r.paper_bound.map_or_else(|| VACUOUS.to_string(), |b| format!("{b:.6}"));
        let _ = writeln!(
            s,
            "{:>12} {:>6} {:>8} {:>10.6} {:>10.6} {:>14} {:>8}",
            fmt_f64(r.l),
            r.n_max,
            r.mode.label(),
            r.final_fraction(),
            r.final_stderr(),
            bound,
            r.profile.kind.label()
        );
    }
    s
}

pub fn orbit_csv(trace: &OrbitTrace, ladder: Option<&DistortionLadder>, config_json: &str) -> String {
    let mut s = comment_header(config_json);
    s.push_str("i,c_i,log_deriv,sign,dist,d_i,D_{i+1}\n");
    for i in 0..=trace.horizon() {
        let (d, big_d) = match ladder {
            Some(l) if i < l.horizon() => (fmt_f64(l.d(i)), fmt_f64(l.big_d(i + 1))),
            _ => (String::new(), String::new()),
        };
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{d},{big_d}",
            fmt_f64(trace.points[i]),
            fmt_f64(trace.log_deriv[i]),
            trace.signs[i],
            fmt_f64(trace.dist[i])
        );
    }
    s
}

pub fn returns_csv(decompositions: &[(usize, Decomposition)], config_json: &str) -> String {
    let mut s = comment_header(config_json);
    s.push_str("critical_point,time,bound_to,depth,depth_index,bound_period,kind,essential\n");
    for (c, d) in decompositions {
        for e in &d.events {
            let _ = writeln!(
                s,
                "{c},{},{},{},{},{},{},{}",
                e.time,
                e.bound_to,
                fmt_f64(e.depth),
                e.depth_index,
                e.bound_period,
                e.kind.label(),
                e.essential
            );
        }
    }
    s
}

/// JSON lines, one per report.
pub fn condition_lines(reports: &[ConditionReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

pub fn lemma_json(report: &LemmaReport, config_json: &str) -> String {
    #[derive(Serialize)]
    struct File<'a> {
        header: Header,
        report: &'a LemmaReport,
    }
    serde_json::to_string_pretty(&File {
        header: Header::new(config_json),
        report,
    })
    .expect("lemma report serializes")
        + "\n"
}

pub fn violations_csv(report: &LemmaReport, config_json: &str) -> String {
    let mut s = comment_header(config_json);
    s.push_str("lemma,trial,clause,hard,a,theta,offset,n,critical_point,lhs,rhs\n");
    for v in &report.violations {
        let i = &v.inputs;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            report.lemma_id,
            i.trial,
            v.clause,
            v.hard,
            fmt_f64(i.a),
            fmt_opt(i.theta.map(fmt_f64)),
            fmt_opt(i.offset.map(fmt_f64)),
            i.n,
            fmt_opt(i.critical_index),
            fmt_f64(v.lhs),
            fmt_f64(v.rhs)
        );
    }
    s
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn l_tag(l: f64) -> String {
    fmt_f64(l).replace('.', "p").replace('+', "")
}

/// Writes `trend.csv`, `records.json`, `trend.dat` and one `survival_L*.dat` per record,
/// plus `survivors.csv` when outcomes are given.
pub fn emit_report(
    dir: &Path,
    records: &[SweepRecord],
    outcomes: Option<&[SampleOutcome]>,
    config_json: &str,
) -> io::Result<Vec<PathBuf>> {
    let rows = trend_rows(records);
    let mut written = vec![
        write_file(dir, "trend.csv", &trend_csv(&rows, config_json))?,
        write_file(dir, "records.json", &records_json(records, config_json))?,
        write_file(dir, "trend.dat", &trend_dat(&rows, config_json))?,
    ];
    for r in records {
        written.push(write_file(dir, &format!("survival_L{}.dat", l_tag(r.l)), &survival_dat(r, config_json))?);
    }
    if let Some(o) = outcomes {
        written.push(write_file(dir, "survivors.csv", &survivors_csv(o, config_json))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{ConstantsProfile, ProfileSpec};
    use crate::exclusion::ExclusionMode;

    fn record(bound: Option<f64>) -> SweepRecord {
        SweepRecord {
            l: 1000.0,
            profile: ConstantsProfile::from_k0(44.0, 1e3, &ProfileSpec::empirical(0.01, 0.005, 0.001)).unwrap(),
            n_max: 2,
            mode: ExclusionMode::Mc,
            strict: false,
            survivor_fraction: vec![0.9, 0.8, 0.7000000000000001],
            stderr: vec![0.01, 0.01, 0.01],
            samples: Some(1000),
            cells: None,
            seed: 1,
            paper_bound: bound,
        }
    }

    #[test]
    fn single_record_single_row() {
        let csv = trend_csv(&trend_rows(&[record(None)]), "{}");
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].ends_with(VACUOUS));
        assert!(csv.starts_with("# circlemap "));
    }

    #[test]
    fn fractions_pass_through_exactly() {
        let r = record(Some(0.5));
        let csv = trend_csv(&trend_rows(std::slice::from_ref(&r)), "{}");
        let row = csv.lines().last().unwrap();
        let frac: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(frac.to_bits(), r.final_fraction().to_bits());
    }

    #[test]
    fn records_round_trip() {
        let recs = vec![record(Some(0.25)), record(None)];
        let text = records_json(&recs, r#"{"seed":1}"#);
        let back = parse_records(&text).unwrap();
        assert_eq!(back.records, recs);
        assert_eq!(back.header.config["seed"], 1);
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1e-300, 123456.789, 2.0f64.sqrt()] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
