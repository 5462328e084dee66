//! Command implementations behind the CLI surface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gru_pfg::baselines::VariantKind;
use gru_pfg::data::io::{load_panel, write_panel};
use gru_pfg::data::synth::{gen_synthetic, SynthConfig};
use gru_pfg::data::split;
use gru_pfg::metrics::{MetricsReport, PRECISION_LEVELS};
use gru_pfg::train::{checkpoint, evaluate, model_grad_check, train};
use gru_pfg::{Error, Result};
use rayon::prelude::*;

use crate::config;
use crate::manifest::Manifest;

/// Fixed output filenames under `--out-dir`.
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MONTHLY_FILE: &str = "monthly.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const LOAD_REPORT_FILE: &str = "load_report.txt";
pub const ABLATION_FILE: &str = "ablation.csv";

/// Threshold for `gradcheck` to exit cleanly.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub stocks: usize,
    pub days: usize,
    pub groups: usize,
    pub signal: f64,
    pub noise: f64,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let started = Instant::now();
    let seed = config::seed_override()?.unwrap_or(args.seed);
    let cfg = SynthConfig {
        num_stocks: args.stocks,
        num_days: args.days,
        num_groups: args.groups,
        signal_strength: args.signal,
        noise_sigma: args.noise,
        seed,
    };
    let panel = gen_synthetic::<f64>(&cfg)?;
    write_panel(&panel, &args.out)?;

    let mut manifest = Manifest::new("synth");
    manifest.push("seed", seed);
    manifest.push("stocks", args.stocks);
    manifest.push("days", args.days);
    manifest.push("groups", args.groups);
    manifest.push("signal", args.signal);
    manifest.push("noise", args.noise);
    manifest.push("output.panel", args.out.display());
    manifest.push("wall_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
    manifest.write(&manifest_path_for(&args.out))?;

    println!(
        "wrote {} dates x {} stocks to {}",
        panel.num_days(),
        args.stocks,
        args.out.display()
    );
    Ok(())
}

/// Manifest path for single-file outputs: `<out>.manifest.txt`.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.txt");
    out.with_file_name(name)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub panel: PathBuf,
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let settings = config::load(args.config.as_deref())?;
    std::fs::create_dir_all(&args.out_dir)?;

    let (panel, load_report) = load_panel::<f64>(&args.panel)?;
    load_report.write_to(&args.out_dir.join(LOAD_REPORT_FILE))?;
    let (train_panel, valid_panel, _) = split(&panel, &settings.split)?;

    let (model, log) = train(settings.kind, &train_panel, &valid_panel, &settings.train)?;

    let checkpoint_path = args.out_dir.join(CHECKPOINT_FILE);
    checkpoint::save(&model, &checkpoint_path)?;
    let log_path = args.out_dir.join(TRAIN_LOG_FILE);
    log.write_csv(&log_path)?;

    let mut manifest = Manifest::new("train");
    manifest.push("seed", settings.train.seed);
    manifest.push_config(&settings.snapshot());
    manifest.push_input("panel", &args.panel)?;
    if let Some(cfg) = &args.config {
        manifest.push_input("config", cfg)?;
    }
    manifest.push("output.checkpoint", checkpoint_path.display());
    manifest.push("output.train_log", log_path.display());
    manifest.push("wall_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
    manifest.write(&args.out_dir.join(MANIFEST_FILE))?;

    println!(
        "trained {} for {} epochs (best epoch {}, valid IC {:.6}, stopped: {}); \
         checkpoint at {}",
        settings.kind,
        log.epochs.len(),
        log.best_epoch,
        log.best_valid_ic,
        log.stopping_reason,
        checkpoint_path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for SplitChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitChoice::Train => "train",
            SplitChoice::Valid => "valid",
            SplitChoice::Test => "test",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub panel: PathBuf,
    pub checkpoint: PathBuf,
    pub split: SplitChoice,
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
}

pub fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    let settings = config::load(args.config.as_deref())?;
    std::fs::create_dir_all(&args.out_dir)?;

    let (panel, load_report) = load_panel::<f64>(&args.panel)?;
    load_report.write_to(&args.out_dir.join(LOAD_REPORT_FILE))?;
    let (train_panel, valid_panel, test_panel) = split(&panel, &settings.split)?;
    let chosen = match args.split {
        SplitChoice::Train => train_panel,
        SplitChoice::Valid => valid_panel,
        SplitChoice::Test => test_panel,
    };

    let model = checkpoint::load::<f64>(&args.checkpoint)?;
    let report = evaluate(&model, &chosen)?;

    let metrics_path = args.out_dir.join(METRICS_FILE);
    report.write_metrics_csv(&metrics_path)?;
    let monthly_path = args.out_dir.join(MONTHLY_FILE);
    report.write_monthly_csv(&monthly_path)?;

    let mut manifest = Manifest::new("eval");
    manifest.push("split", args.split);
    manifest.push_config(&settings.snapshot());
    manifest.push_input("panel", &args.panel)?;
    manifest.push_input("checkpoint", &args.checkpoint)?;
    if let Some(cfg) = &args.config {
        manifest.push_input("config", cfg)?;
    }
    manifest.push("output.metrics", metrics_path.display());
    manifest.push("output.monthly", monthly_path.display());
    manifest.push("wall_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
    manifest.write(&args.out_dir.join(MANIFEST_FILE))?;

    println!("{report}");
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GradcheckArgs {
    pub stocks: usize,
    pub dims: usize,
    pub seed: u64,
    pub kind: VariantKind,
}

/// Returns the worst relative error; the caller turns values above
/// [`GRADCHECK_TOLERANCE`] into a nonzero exit.
pub fn gradcheck_cmd(args: &GradcheckArgs) -> Result<f64> {
    let seed = config::seed_override()?.unwrap_or(args.seed);
    let worst = model_grad_check::<f64>(args.kind, args.stocks, args.dims, seed, 1)?;

    let mut manifest = Manifest::new("gradcheck");
    manifest.push("kind", args.kind);
    manifest.push("stocks", args.stocks);
    manifest.push("dims", args.dims);
    manifest.push("seed", seed);
    manifest.push("max_rel_error", worst);
    print!("{}", manifest.render());
    println!("max relative error: {worst:e}");
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct AblateArgs {
    pub panel: PathBuf,
    pub config: Option<PathBuf>,
    pub variants: String,
    pub seeds: String,
    pub out_dir: PathBuf,
}

/// Across-seed aggregation of one variant's test metrics.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: VariantKind,
    pub ic: (f64, f64),
    pub rank_ic: (f64, f64),
    pub precision: BTreeMap<usize, (f64, f64)>,
    pub seeds: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn aggregate_rows(cells: &[(VariantKind, u64, MetricsReport)]) -> Vec<AblationRow> {
    let mut variants: Vec<VariantKind> = Vec::new();
    for (kind, _, _) in cells {
        if !variants.contains(kind) {
            variants.push(*kind);
        }
    }
    variants
        .into_iter()
        .map(|variant| {
            let reports: Vec<&MetricsReport> = cells
                .iter()
                .filter(|(k, _, _)| *k == variant)
                .map(|(_, _, r)| r)
                .collect();
            let ics: Vec<f64> = reports.iter().map(|r| r.ic_mean).collect();
            let rank_ics: Vec<f64> = reports.iter().map(|r| r.rank_ic_mean).collect();
            let mut precision = BTreeMap::new();
            for n in PRECISION_LEVELS {
                let vals: Vec<f64> = reports
                    .iter()
                    .map(|r| r.precision.get(&n).map_or(f64::NAN, |p| p.0))
                    .collect();
                precision.insert(n, mean_std(&vals));
            }
            AblationRow {
                variant,
                ic: mean_std(&ics),
                rank_ic: mean_std(&rank_ics),
                precision,
                seeds: reports.len(),
            }
        })
        .collect()
}

/// Rows = variants, columns = IC, Rank IC, Precision@{3,5,10,30}, with the
/// across-seed standard deviation in parentheses.
pub fn render_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:>16} {:>16} {:>16} {:>16} {:>16} {:>16}\n",
        "variant", "IC", "Rank IC", "P@3", "P@5", "P@10", "P@30"
    ));
    for row in rows {
        let cell = |m: f64, s: f64, digits: usize| format!("{m:.digits$} ({s:.digits$})");
        out.push_str(&format!(
            "{:<22} {:>16} {:>16} {:>16} {:>16} {:>16} {:>16}\n",
            row.variant.to_string(),
            cell(row.ic.0, row.ic.1, 4),
            cell(row.rank_ic.0, row.rank_ic.1, 4),
            cell(row.precision[&3].0, row.precision[&3].1, 2),
            cell(row.precision[&5].0, row.precision[&5].1, 2),
            cell(row.precision[&10].0, row.precision[&10].1, 2),
            cell(row.precision[&30].0, row.precision[&30].1, 2),
        ));
    }
    out
}

fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let mut out = String::from(
        "variant,seeds,ic,ic_std,rank_ic,rank_ic_std,p3,p3_std,p5,p5_std,p10,p10_std,p30,p30_std\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            row.variant, row.seeds, row.ic.0, row.ic.1, row.rank_ic.0, row.rank_ic.1
        ));
        for n in PRECISION_LEVELS {
            out.push_str(&format!(",{},{}", row.precision[&n].0, row.precision[&n].1));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| Error::Spec(format!("bad {what} entry {s:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Spec(format!("empty {what} list")));
    }
    Ok(items)
}

pub fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let started = Instant::now();
    let settings = config::load(args.config.as_deref())?;
    let variants: Vec<VariantKind> = parse_list("variant", &args.variants)?;
    let seeds: Vec<u64> = parse_list("seed", &args.seeds)?;
    std::fs::create_dir_all(&args.out_dir)?;

    let (panel, load_report) = load_panel::<f64>(&args.panel)?;
    load_report.write_to(&args.out_dir.join(LOAD_REPORT_FILE))?;
    let (train_panel, valid_panel, test_panel) = split(&panel, &settings.split)?;

    // independent (variant, seed) cells, evaluated in parallel, merged in
    // the deterministic (variant, seed) order of this list
    let cell_specs: Vec<(VariantKind, u64)> = variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();

    let cells: Vec<(VariantKind, u64, MetricsReport)> = cell_specs
        .par_iter()
        .map(|&(kind, seed)| -> Result<_> {
            let cell_dir = args
                .out_dir
                .join("cells")
                .join(format!("{kind}-seed{seed}"));
            std::fs::create_dir_all(&cell_dir)?;
            let cell_config = gru_pfg::train::TrainConfig {
                seed,
                ..settings.train.clone()
            };
            let (model, log) = train(kind, &train_panel, &valid_panel, &cell_config)?;
            checkpoint::save(&model, &cell_dir.join(CHECKPOINT_FILE))?;
            log.write_csv(&cell_dir.join(TRAIN_LOG_FILE))?;
            let report = evaluate(&model, &test_panel)?;
            report.write_metrics_csv(&cell_dir.join(METRICS_FILE))?;
            report.write_monthly_csv(&cell_dir.join(MONTHLY_FILE))?;
            Ok((kind, seed, report))
        })
        .collect::<Result<_>>()?;

    let rows = aggregate_rows(&cells);
    write_ablation_csv(&rows, &args.out_dir.join(ABLATION_FILE))?;
    let table = render_ablation_table(&rows);

    let mut manifest = Manifest::new("ablate");
    manifest.push("variants", &args.variants);
    manifest.push("seeds", &args.seeds);
    manifest.push_config(&settings.snapshot());
    manifest.push_input("panel", &args.panel)?;
    if let Some(cfg) = &args.config {
        manifest.push_input("config", cfg)?;
    }
    manifest.push("output.ablation", args.out_dir.join(ABLATION_FILE).display());
    manifest.push("wall_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
    manifest.write(&args.out_dir.join(MANIFEST_FILE))?;

    print!("{table}");
    Ok(())
}
