use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wired_core::report::{self, ReportRow};
use wired_core::scenario::{self, ScenarioConfig};
use wired_core::traffic::SourceProfile;

#[derive(Parser)]
#[command(name = "wired", version, about = "Redundant Wi-Fi link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Run the cartesian product of the given axes.
    Matrix(MatrixArgs),
    /// Check a configuration without running it.
    Validate(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any value, e.g. `--set lre.capacity=500`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Generated packets.
    #[arg(long)]
    packets: Option<u64>,
    /// Receive policy: ordered or unordered.
    #[arg(long)]
    rx_policy: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// dcf, basic, rda-q or rda-r.
    #[arg(long)]
    scheme: Option<String>,
    /// benign or hostile.
    #[arg(long)]
    env: Option<String>,
    /// c(1), e(1) or e(0.5).
    #[arg(long)]
    traffic: Option<String>,
    /// uplink or downlink.
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    d_th: Option<u32>,
    /// Append the result row to this CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated schemes.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<String>,
    /// Comma-separated environments.
    #[arg(long, value_delimiter = ',')]
    env: Vec<String>,
    /// Comma-separated traffic profiles.
    #[arg(long, value_delimiter = ',')]
    traffic: Vec<String>,
    /// Comma-separated directions.
    #[arg(long, value_delimiter = ',')]
    direction: Vec<String>,
    /// Sweep one key over `a..b` (inclusive) or `x,y,z`, e.g. `d_th=0..7`.
    #[arg(long)]
    sweep: Vec<String>,
    /// Write all result rows here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the plot-ready threshold sweep summary here.
    #[arg(long)]
    figure: Option<PathBuf>,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

fn expand_key(key: &str) -> String {
    match key {
        "d_th" => "lre.d_th".into(),
        "seed" => "run.seed".into(),
        "scheme" => "lre.scheme".into(),
        "capacity" => "lre.capacity".into(),
        "packets" => "run.packets".into(),
        k => k.into(),
    }
}

fn set(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<()> {
    cfg.apply_override(&format!("{}={}", expand_key(key), value))?;
    Ok(())
}

fn set_traffic(cfg: &mut ScenarioConfig, label: &str) -> Result<()> {
    let Some(p) = SourceProfile::from_label(label) else {
        bail!("unknown traffic profile `{label}` (c(1), e(1), e(0.5))");
    };
    cfg.traffic.set_profile(p);
    Ok(())
}

fn base_config(c: &CommonArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ScenarioConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    for o in &c.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = c.seed {
        cfg.run.seed = seed;
    }
    if let Some(n) = c.packets {
        cfg.run.packets = n;
    }
    if let Some(p) = &c.rx_policy {
        set(&mut cfg, "lre.rx_policy", p)?;
    }
    Ok(cfg)
}

fn sweep_values(arg: &str) -> Result<(String, Vec<String>)> {
    let Some((key, vals)) = arg.split_once('=') else {
        bail!("invalid sweep `{arg}`: expected key=a..b or key=x,y");
    };
    let values = if let Some((a, b)) = vals.split_once("..") {
        let (a, b): (i64, i64) = (
            a.trim().parse().context("sweep range start")?,
            b.trim().parse().context("sweep range end")?,
        );
        if a > b {
            bail!("empty sweep range `{vals}`");
        }
        (a..=b).map(|v| v.to_string()).collect()
    } else {
        vals.split(',').map(|v| v.trim().to_string()).collect()
    };
    Ok((key.trim().to_string(), values))
}

/// Expands `cfg` along one axis; an empty value list keeps it as is.
fn expand(
    cfgs: Vec<ScenarioConfig>,
    values: &[String],
    apply: impl Fn(&mut ScenarioConfig, &str) -> Result<()>,
) -> Result<Vec<ScenarioConfig>> {
    if values.is_empty() {
        return Ok(cfgs);
    }
    let mut out = Vec::with_capacity(cfgs.len() * values.len());
    for cfg in cfgs {
        for v in values {
            let mut c = cfg.clone();
            apply(&mut c, v)?;
            out.push(c);
        }
    }
    Ok(out)
}

fn write_config_echo(out: &Path, text: &str) -> Result<()> {
    let mut path = out.as_os_str().to_owned();
    path.push(".config.toml");
    fs::write(&path, text).with_context(|| format!("writing {}", Path::new(&path).display()))
}

fn append_rows(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let existing = fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    let text = report::to_csv_string(rows);
    let body = if existing {
        let header = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .lines()
            .next()
            .unwrap_or_default()
            .to_string();
        if header != report::COLUMNS.join(",") {
            bail!("{} has a different column set", path.display());
        }
        text.split_once('\n').map(|(_, rest)| rest.to_string()).unwrap_or_default()
    } else {
        text
    };
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    f.write_all(body.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn ms(v: Option<f64>) -> String {
    v.map(|x| format!("{:.3}", x / 1000.0)).unwrap_or_else(|| "-".into())
}

fn ms_int(v: Option<u64>) -> String {
    ms(v.map(|x| x as f64))
}

fn permille(v: Option<f64>) -> String {
    v.map(|x| format!("{:.4}", x * 1000.0)).unwrap_or_else(|| "-".into())
}

fn print_table(rows: &[ReportRow]) -> io::Result<()> {
    let mut o = io::stdout().lock();
    writeln!(
        o,
        "{:<9} {:<8} {:<7} {:<6} {:>4} {:>9} {:>9} {:>9} {:>9} {:>10} {:>8} {:>8}",
        "dir", "env", "traffic", "scheme", "d_th", "mean[ms]", "p99[ms]", "p99.9[ms]", "max[ms]",
        "lost[‰]", "q1", "q2"
    )?;
    for row in rows {
        let r = &row.report;
        let q = |k: usize| {
            r.q_mean
                .get(k)
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into())
        };
        writeln!(
            o,
            "{:<9} {:<8} {:<7} {:<6} {:>4} {:>9} {:>9} {:>9} {:>9} {:>10} {:>8} {:>8}",
            row.direction.to_string(),
            row.environment.to_string(),
            row.traffic,
            row.scheme.to_string(),
            row.d_th,
            ms(r.d_mean),
            ms_int(r.d_p99),
            ms_int(r.d_p99_9),
            ms_int(r.d_max),
            permille(r.p_lost),
            q(0),
            q(1),
        )?;
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(s) = &a.scheme {
        set(&mut cfg, "lre.scheme", s)?;
    }
    if let Some(e) = &a.env {
        set(&mut cfg, "environment.kind", e)?;
    }
    if let Some(t) = &a.traffic {
        set_traffic(&mut cfg, t)?;
    }
    if let Some(d) = &a.direction {
        set(&mut cfg, "traffic.direction", d)?;
    }
    if let Some(d) = a.d_th {
        cfg.lre.d_th = d;
    }
    cfg.validate()?;
    if let Some(out) = &a.out {
        // fail on an unwritable path before spending time simulating
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(out)
            .with_context(|| format!("opening {}", out.display()))?;
    }
    let result = scenario::run(&cfg)?;
    let row = ReportRow::new(&cfg, result.report);
    print_table(std::slice::from_ref(&row))?;
    if let Some(out) = &a.out {
        append_rows(out, std::slice::from_ref(&row))?;
        write_config_echo(out, &cfg.to_toml())?;
    }
    Ok(())
}

fn cmd_matrix(a: MatrixArgs) -> Result<()> {
    let base = base_config(&a.common)?;
    let mut cfgs = vec![base.clone()];
    cfgs = expand(cfgs, &a.env, |c, v| set(c, "environment.kind", v))?;
    cfgs = expand(cfgs, &a.traffic, set_traffic)?;
    cfgs = expand(cfgs, &a.direction, |c, v| set(c, "traffic.direction", v))?;
    cfgs = expand(cfgs, &a.scheme, |c, v| set(c, "lre.scheme", v))?;
    let mut echo = base.to_toml();
    for s in &a.sweep {
        let (key, values) = sweep_values(s)?;
        cfgs = expand(cfgs, &values, |c, v| set(c, &key, v))?;
    }
    for (axis, vals) in [
        ("environment", &a.env),
        ("traffic", &a.traffic),
        ("direction", &a.direction),
        ("scheme", &a.scheme),
        ("sweep", &a.sweep),
    ] {
        if !vals.is_empty() {
            echo.push_str(&format!("# matrix {axis}: {}\n", vals.join(" ")));
        }
    }
    for (i, c) in cfgs.iter().enumerate() {
        c.validate().with_context(|| format!("matrix entry {}", i + 1))?;
    }
    for path in [&a.out, &a.figure].into_iter().flatten() {
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    }

    let results = if a.sequential {
        scenario::run_matrix_sequential(&cfgs)?
    } else {
        scenario::run_matrix(&cfgs)?
    };
    let rows: Vec<ReportRow> = cfgs
        .iter()
        .zip(results)
        .map(|(c, r)| ReportRow::new(c, r.report))
        .collect();
    print_table(&rows)?;
    if let Some(out) = &a.out {
        let f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
        report::write_csv(f, &rows)?;
        write_config_echo(out, &echo)?;
    }
    if let Some(fig) = &a.figure {
        let f = fs::File::create(fig).with_context(|| format!("creating {}", fig.display()))?;
        report::write_sweep_csv(f, &rows)?;
    }
    Ok(())
}

fn cmd_validate(c: CommonArgs) -> Result<()> {
    let cfg = base_config(&c)?;
    cfg.validate()?;
    println!("configuration is valid");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Matrix(a) => cmd_matrix(a),
        Command::Validate(c) => cmd_validate(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
