use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sparsemap::binder::{map_with_retries, MapOptions, MapOutcome};
use sparsemap::frontend::{block_features, build_sdfg, generate_block, SparseBlock};
use sparsemap::model::{CgraConfig, Mapping, Metrics, Schedule, Sdfg};
use sparsemap::report::{placement_dot, schedule_dot, ReportRow};
use sparsemap::validator::validate;

#[derive(Parser)]
#[command(name = "sparsemap", version, about = "Map sparse CNN blocks onto a streaming CGRA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw random sparse blocks and print their features.
    Generate(GenerateArgs),
    /// Schedule and bind blocks, reporting one row per block.
    Map(MapArgs),
    /// Check mapping files produced by `map --mappings`.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short, long)]
    n: usize,
    #[arg(short, long)]
    m: usize,
    /// Probability that a weight is pruned.
    #[arg(short, long)]
    zero_probability: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct MapArgs {
    /// Block JSON files.
    #[arg(required = true)]
    blocks: Vec<PathBuf>,
    /// TOML file with the machine description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fixed adder trees, no association-aware reading placement, no multicast.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    no_aiba: bool,
    #[arg(long)]
    no_mulci: bool,
    #[arg(long)]
    no_ridat: bool,
    #[arg(long, default_value_t = 16)]
    max_ii: u32,
    #[arg(long)]
    mis_seeds: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV report here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Directory for one mapping file per mapped block.
    #[arg(long)]
    mappings: Option<PathBuf>,
    /// Directory for schedule and placement DOT files.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct MappingFile {
    block: String,
    method: String,
    config: CgraConfig,
    metrics: Metrics,
    sdfg: Sdfg,
    schedule: Schedule,
    mapping: Mapping,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    block: &'a str,
    method: &'a str,
    #[serde(rename = "MII")]
    mii: u32,
    #[serde(rename = "II_0")]
    ii0: String,
    #[serde(rename = "|C|")]
    cops: u32,
    #[serde(rename = "|M|")]
    mcids: u32,
    success: bool,
    #[serde(rename = "II")]
    ii: String,
    #[serde(rename = "S")]
    speedup: &'a str,
}

impl<'a> From<&'a ReportRow> for CsvRow<'a> {
    fn from(r: &'a ReportRow) -> Self {
        CsvRow {
            block: &r.block,
            method: &r.method,
            mii: r.mii,
            ii0: r.ii0.map_or_else(|| "-".into(), |v| v.to_string()),
            cops: r.cops,
            mcids: r.mcids,
            success: r.success,
            ii: r.ii.map_or_else(|| "Failed".into(), |v| v.to_string()),
            speedup: r.speedup.as_deref().unwrap_or("-"),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate(a) => generate(&a).map(|_| ExitCode::SUCCESS),
        Command::Map(a) => map(&a).map(|_| ExitCode::SUCCESS),
        Command::Validate(a) => check(&a),
    }
}

fn generate(a: &GenerateArgs) -> Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<16} {:>8} {:>6} {:>5} {:>5} {:>5} {:>5}", "block", "sparsity", "shape", "V_OP", "V_R", "V_W", "N_FG4")?;
    for i in 0..a.count {
        let block = generate_block(a.n, a.m, a.zero_probability, a.seed + i)?;
        block.save(&a.out.join(format!("{}.json", block.name)))?;
        let f = block_features(&block)?;
        writeln!(
            out,
            "{:<16} {:>7.1}% {:>6} {:>5} {:>5} {:>5} {:>5}",
            f.name,
            100.0 * f.sparsity,
            f.shape,
            f.ops,
            f.reads,
            f.writes,
            f.n_fg4
        )?;
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<CgraConfig> {
    let Some(path) = path else { return Ok(CgraConfig::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: CgraConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn options(a: &MapArgs) -> (MapOptions, String) {
    let mut opts = if a.baseline { MapOptions::baseline(a.max_ii) } else { MapOptions::default() };
    opts.scheduler.max_ii = a.max_ii;
    let mut method = String::from(if a.baseline { "baseline" } else { "sparsemap" });
    if !a.baseline {
        for (off, flag, name) in [
            (a.no_aiba, &mut opts.scheduler.enable_aiba, "-no-aiba"),
            (a.no_mulci, &mut opts.scheduler.enable_mulci, "-no-mulci"),
            (a.no_ridat, &mut opts.scheduler.enable_ridat, "-no-ridat"),
        ] {
            if off {
                *flag = false;
                method.push_str(name);
            }
        }
    }
    if let Some(s) = a.mis_seeds {
        opts.binder.mis_seeds = s;
    }
    opts.binder.seed = a.seed;
    (opts, method)
}

fn map(a: &MapArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let (opts, method) = options(a);
    let blocks = a.blocks.iter().map(|p| Ok(SparseBlock::load(p)?)).collect::<Result<Vec<_>>>()?;
    let mut results: Vec<(SparseBlock, Sdfg, MapOutcome)> = blocks
        .into_par_iter()
        .map(|block| {
            let sdfg = build_sdfg(&block)?;
            let out = map_with_retries(&sdfg, &cfg, &opts)?;
            Ok((block, sdfg, out))
        })
        .collect::<Result<_>>()?;
    results.sort_by(|x, y| x.0.name.cmp(&y.0.name));
    let rows: Vec<ReportRow> = results.iter().map(|(b, _, out)| ReportRow::new(&b.name, &method, &out.metrics)).collect();

    let sink: Box<dyn Write> = match &a.csv {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in &rows {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    if let Some(p) = &a.json {
        fs::write(p, serde_json::to_string_pretty(&rows)?).with_context(|| format!("writing {}", p.display()))?;
    }
    for dir in [&a.mappings, &a.dot].into_iter().flatten() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    for (block, _, out) in &results {
        let Some(m) = &out.mapped else { continue };
        if let Some(dir) = &a.mappings {
            let file = MappingFile {
                block: block.name.clone(),
                method: method.clone(),
                config: cfg,
                metrics: out.metrics.clone(),
                sdfg: m.sdfg.clone(),
                schedule: m.schedule.clone(),
                mapping: m.mapping.clone(),
            };
            fs::write(dir.join(format!("{}.{method}.json", block.name)), serde_json::to_string(&file)?)?;
        }
        if let Some(dir) = &a.dot {
            fs::write(dir.join(format!("{}.{method}.sched.dot", block.name)), schedule_dot(&m.sdfg, &m.schedule))?;
            let tec = placement_dot(&m.sdfg, &m.mapping, &cfg, m.schedule.ii);
            fs::write(dir.join(format!("{}.{method}.tec.dot", block.name)), tec)?;
        }
    }
    Ok(())
}

fn check(a: &ValidateArgs) -> Result<ExitCode> {
    let mut ok = true;
    for path in &a.files {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: MappingFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let report = validate(&file.sdfg, &file.config, &file.schedule, &file.mapping);
        if file.metrics.final_ii != Some(file.schedule.ii) {
            bail!("{}: metrics report II {:?} but the schedule has II {}", path.display(), file.metrics.final_ii, file.schedule.ii);
        }
        let agrees = report.agrees_with(&file.metrics);
        let legal = report.is_legal();
        println!(
            "{}: {} ({} violations, |C| {}, |M| {}, II {}{})",
            path.display(),
            if legal && agrees { "legal" } else { "illegal" },
            report.violations.len(),
            report.cops,
            report.mcids,
            file.schedule.ii,
            if agrees { "" } else { ", counts disagree with the report row" }
        );
        if !legal {
            println!("{}", report.to_json());
        }
        ok &= legal && agrees;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
