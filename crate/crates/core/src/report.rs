//! CSV rows: one per run, scenario labels followed by the flattened report.

use std::io::{Read, Write};

use thiserror::Error;

use crate::lre::RxPolicy;
use crate::metrics::{EventCounters, RunReport};
use crate::scenario::{Direction, EnvKind, ScenarioConfig, Scheme};

/// Bumped whenever the column set changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: &[&str] = &[
    "schema",
    "direction",
    "traffic",
    "environment",
    "scheme",
    "d_th",
    "rx_policy",
    "seed",
    "generated",
    "measured",
    "delivered",
    "lost_overrun",
    "lost_retry_limit",
    "lost_reorder_skip",
    "in_flight",
    "d_mean_us",
    "d_std_us",
    "d_min_us",
    "d_p95_us",
    "d_p99_us",
    "d_p99_5_us",
    "d_p99_9_us",
    "d_max_us",
    "dq_mean_us",
    "dt_mean_us",
    "dr_mean_us",
    "p_gt_dmin",
    "p_gt_1ms",
    "p_gt_10ms",
    "p_gt_100ms",
    "p_lost",
    "q1_mean",
    "q2_mean",
    "air_attempts",
    "max_attempts",
    "duplicates",
    "late_copies",
    "scrubbed",
    "abort_requests",
    "aborted",
    "overflowed_copies",
    "collisions",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unexpected CSV header")]
    Header,
    #[error("row {row}: bad value `{value}` in column `{column}`")]
    Field {
        row: usize,
        column: &'static str,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub direction: Direction,
    pub traffic: String,
    pub environment: EnvKind,
    pub scheme: Scheme,
    pub d_th: u32,
    pub rx_policy: RxPolicy,
    pub seed: u64,
    pub report: RunReport,
}

impl ReportRow {
    pub fn new(cfg: &ScenarioConfig, report: RunReport) -> Self {
        Self {
            direction: cfg.traffic.direction,
            traffic: cfg.traffic.profile().label(),
            environment: cfg.environment.kind,
            scheme: cfg.lre.scheme,
            d_th: cfg.lre.d_th,
            rx_policy: cfg.effective_rx_policy(),
            seed: cfg.run.seed,
            report,
        }
    }
}

/// Shortest representation that parses back to the same value, padded to
/// at least six significant digits.
pub fn format_ratio(x: f64) -> String {
    let mut s = format!("{x}");
    if !x.is_finite() {
        return s;
    }
    let sig = s
        .trim_start_matches('-')
        .trim_start_matches(['0', '.'])
        .chars()
        .filter(char::is_ascii_digit)
        .count();
    if sig >= 6 {
        return s;
    }
    if !s.contains('.') {
        s.push('.');
    }
    let pad = if x == 0.0 { 6 - (s.len() - 2) } else { 6 - sig };
    s.extend(std::iter::repeat('0').take(pad));
    s
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_ratio(v: Option<f64>) -> String {
    v.map(format_ratio).unwrap_or_default()
}

fn rx_name(p: RxPolicy) -> &'static str {
    match p {
        RxPolicy::Ordered => "ordered",
        RxPolicy::Unordered => "unordered",
    }
}

fn fields(row: &ReportRow) -> Vec<String> {
    let r = &row.report;
    let c = &r.counters;
    let q = |k: usize| r.q_mean.get(k).map(|&v| format!("{v}")).unwrap_or_default();
    vec![
        SCHEMA_VERSION.to_string(),
        row.direction.to_string(),
        row.traffic.clone(),
        row.environment.to_string(),
        row.scheme.to_string(),
        row.d_th.to_string(),
        rx_name(row.rx_policy).to_string(),
        row.seed.to_string(),
        r.generated.to_string(),
        r.measured.to_string(),
        r.delivered.to_string(),
        r.lost_overrun.to_string(),
        r.lost_retry_limit.to_string(),
        r.lost_reorder_skip.to_string(),
        r.in_flight.to_string(),
        opt(r.d_mean),
        opt(r.d_std),
        opt(r.d_min),
        opt(r.d_p95),
        opt(r.d_p99),
        opt(r.d_p99_5),
        opt(r.d_p99_9),
        opt(r.d_max),
        opt(r.dq_mean),
        opt(r.dt_mean),
        opt(r.dr_mean),
        opt_ratio(r.p_gt_dmin),
        opt_ratio(r.p_gt_1ms),
        opt_ratio(r.p_gt_10ms),
        opt_ratio(r.p_gt_100ms),
        opt_ratio(r.p_lost),
        q(0),
        q(1),
        c.air_attempts.to_string(),
        c.max_attempts.to_string(),
        c.duplicates.to_string(),
        c.late_copies.to_string(),
        c.scrubbed.to_string(),
        c.abort_requests.to_string(),
        c.aborted.to_string(),
        c.overflowed_copies.to_string(),
        c.collisions.to_string(),
    ]
}

pub fn write_csv<W: Write>(out: W, rows: &[ReportRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for row in rows {
        w.write_record(fields(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ReportRow]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

struct Cells<'a> {
    rec: &'a csv::StringRecord,
    row: usize,
    i: usize,
}

impl Cells<'_> {
    fn raw(&mut self) -> (&'static str, &str) {
        let col = COLUMNS[self.i];
        let v = self.rec.get(self.i).unwrap_or("");
        self.i += 1;
        (col, v)
    }

    fn parse<T: std::str::FromStr>(&mut self) -> Result<T, ReportError> {
        let row = self.row;
        let (column, v) = self.raw();
        v.parse().map_err(|_| ReportError::Field {
            row,
            column,
            value: v.to_string(),
        })
    }

    fn parse_opt<T: std::str::FromStr>(&mut self) -> Result<Option<T>, ReportError> {
        if self.rec.get(self.i).unwrap_or("").is_empty() {
            self.i += 1;
            return Ok(None);
        }
        self.parse().map(Some)
    }

    fn with<T>(&mut self, f: impl Fn(&str) -> Option<T>) -> Result<T, ReportError> {
        let row = self.row;
        let (column, v) = self.raw();
        f(v).ok_or_else(|| ReportError::Field {
            row,
            column,
            value: v.to_string(),
        })
    }
}

fn parse_row(rec: &csv::StringRecord, row: usize) -> Result<ReportRow, ReportError> {
    let mut c = Cells { rec, row, i: 0 };
    c.with(|v| (v == SCHEMA_VERSION.to_string()).then_some(()))?;
    let direction = c.with(|v| match v {
        "uplink" => Some(Direction::Uplink),
        "downlink" => Some(Direction::Downlink),
        _ => None,
    })?;
    let traffic = c.raw().1.to_string();
    let environment = c.with(|v| match v {
        "benign" => Some(EnvKind::Benign),
        "hostile" => Some(EnvKind::Hostile),
        _ => None,
    })?;
    let scheme = c.with(|v| v.parse().ok())?;
    let d_th = c.parse()?;
    let rx_policy = c.with(|v| match v {
        "ordered" => Some(RxPolicy::Ordered),
        "unordered" => Some(RxPolicy::Unordered),
        _ => None,
    })?;
    let seed = c.parse()?;
    let mut r = RunReport {
        generated: c.parse()?,
        measured: c.parse()?,
        delivered: c.parse()?,
        lost_overrun: c.parse()?,
        lost_retry_limit: c.parse()?,
        lost_reorder_skip: c.parse()?,
        in_flight: c.parse()?,
        d_mean: c.parse_opt()?,
        d_std: c.parse_opt()?,
        d_min: c.parse_opt()?,
        d_p95: c.parse_opt()?,
        d_p99: c.parse_opt()?,
        d_p99_5: c.parse_opt()?,
        d_p99_9: c.parse_opt()?,
        d_max: c.parse_opt()?,
        dq_mean: c.parse_opt()?,
        dt_mean: c.parse_opt()?,
        dr_mean: c.parse_opt()?,
        p_gt_dmin: c.parse_opt()?,
        p_gt_1ms: c.parse_opt()?,
        p_gt_10ms: c.parse_opt()?,
        p_gt_100ms: c.parse_opt()?,
        p_lost: c.parse_opt()?,
        q_mean: Vec::new(),
        counters: EventCounters::default(),
    };
    for _ in 0..2 {
        if let Some(q) = c.parse_opt()? {
            r.q_mean.push(q);
        }
    }
    r.counters = EventCounters {
        air_attempts: c.parse()?,
        max_attempts: c.parse()?,
        duplicates: c.parse()?,
        late_copies: c.parse()?,
        scrubbed: c.parse()?,
        abort_requests: c.parse()?,
        aborted: c.parse()?,
        overflowed_copies: c.parse()?,
        collisions: c.parse()?,
    };
    Ok(ReportRow {
        direction,
        traffic,
        environment,
        scheme,
        d_th,
        rx_policy,
        seed,
        report: r,
    })
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ReportRow>, ReportError> {
    let mut rd = csv::Reader::from_reader(input);
    if rd.headers()?.iter().ne(COLUMNS.iter().copied()) {
        return Err(ReportError::Header);
    }
    rd.records()
        .enumerate()
        .map(|(i, rec)| parse_row(&rec?, i + 1))
        .collect()
}

/// Plot-ready summary of a threshold sweep: one line per (scheme, d_th).
pub fn write_sweep_csv<W: Write>(out: W, rows: &[ReportRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scheme", "d_th", "d_mean_us", "dq_mean_us", "dt_mean_us", "dr_mean_us", "d_p95_us",
        "d_p99_us", "d_p99_9_us", "q_mean", "p_lost",
    ])?;
    for row in rows {
        let r = &row.report;
        let q = if r.q_mean.is_empty() {
            String::new()
        } else {
            format!("{}", r.q_mean.iter().sum::<f64>() / r.q_mean.len() as f64)
        };
        w.write_record([
            row.scheme.to_string(),
            row.d_th.to_string(),
            opt(r.d_mean),
            opt(r.dq_mean),
            opt(r.dt_mean),
            opt(r.dr_mean),
            opt(r.d_p95),
            opt(r.d_p99),
            opt(r.d_p99_9),
            q,
            opt_ratio(r.p_lost),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> ReportRow {
        ReportRow {
            direction: Direction::Downlink,
            traffic: "e(0.5)".into(),
            environment: EnvKind::Hostile,
            scheme: Scheme::Dcf,
            d_th: 0,
            rx_policy: RxPolicy::Unordered,
            seed: 7,
            report: RunReport {
                generated: 1000,
                measured: 950,
                delivered: 717,
                lost_overrun: 200,
                lost_retry_limit: 33,
                lost_reorder_skip: 0,
                in_flight: 0,
                d_mean: Some(1234.5678),
                d_std: Some(1.0 / 3.0),
                d_min: Some(38),
                d_p95: Some(5000),
                d_p99: Some(9000),
                d_p99_5: Some(9500),
                d_p99_9: Some(9900),
                d_max: Some(12000),
                dq_mean: Some(1000.0),
                dt_mean: Some(234.5678),
                dr_mean: Some(0.0),
                p_gt_dmin: Some(0.9),
                p_gt_1ms: Some(0.5),
                p_gt_10ms: Some(0.3),
                p_gt_100ms: Some(0.25),
                p_lost: Some(0.245),
                q_mean: vec![470.25],
                counters: EventCounters {
                    air_attempts: 2000,
                    max_attempts: 7,
                    ..Default::default()
                },
            },
        }
    }

    #[test]
    fn ratio_formatting() {
        assert_eq!(format_ratio(0.245), "0.245000");
        assert_eq!(format_ratio(0.0), "0.000000");
        assert_eq!(format_ratio(1.0), "1.00000");
        assert_eq!(format_ratio(4.21e-5), "0.0000421000");
        assert_eq!(format_ratio(1.0 / 3.0), "0.3333333333333333");
        for x in [0.245, 4.21e-5, 1.0 / 7.0, 0.5] {
            assert_eq!(format_ratio(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn one_row_gives_two_lines() {
        let text = to_csv_string(&[sample_row()]);
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains(",0.245000,"));
    }

    #[test]
    fn round_trip() {
        let mut empty = sample_row();
        empty.report.d_mean = None;
        empty.report.d_p99 = None;
        empty.report.q_mean = vec![1.5, 2.25];
        let rows = vec![sample_row(), empty];
        let text = to_csv_string(&rows);
        assert_eq!(read_csv(text.as_bytes()).unwrap(), rows);
        assert_eq!(to_csv_string(&rows), text);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(matches!(
            read_csv("a,b\n1,2\n".as_bytes()),
            Err(ReportError::Header)
        ));
    }

    #[test]
    fn bad_cell_is_located() {
        let text = to_csv_string(&[sample_row()]).replace(",717,", ",x,");
        let err = read_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("delivered"), "{err}");
    }
}
