use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saleval::analysis::{compare_models, EvalConfig};
use saleval::archplan::{check_expectations, plan_network};
use saleval::eval::{ground_truths, run_eval};
use saleval::gtgen::BlurSpec;
use saleval::io;
use saleval::metrics::Metric;
use saleval::Error;

/// Saliency-map evaluation toolkit.
#[derive(Parser)]
#[command(name = "saleval", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blur pooled fixations into ground-truth density maps.
    Gtgen(GtgenArgs),
    /// Score model maps against ground truth for every image in a manifest.
    Eval(EvalArgs),
    /// Combine report CSVs into a Markdown comparison table.
    Compare(CompareArgs),
    /// Correlate classification accuracy with a saliency metric.
    Correlate(CorrelateArgs),
    /// Print the channel/resolution plan of a block specification.
    Archplan(ArchplanArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MapFormat {
    Fbm,
    Csv,
}

#[derive(Args)]
struct GtgenArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "fbm")]
    format: MapFormat,
    /// Blur sigma in degrees of visual angle.
    #[arg(long, default_value_t = 1.0)]
    sigma_degrees: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Report CSV path; the Markdown aggregate and metadata are written beside it.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated model names; defaults to every model in the manifest.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    splits: usize,
    #[arg(long, default_value_t = 32)]
    emd_max_side: usize,
    /// Solve EMD at full resolution.
    #[arg(long)]
    no_emd_downsample: bool,
    #[arg(long, default_value = "all")]
    metrics: String,
    #[arg(long, default_value_t = 1.0)]
    sigma_degrees: f64,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// Report CSVs produced by `eval`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Reference row listed first and excluded from best markers.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, default_value_t = 3)]
    decimals: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateArgs {
    /// CSV with header `model,top1,score`.
    input: PathBuf,
    #[arg(long, default_value = "KL")]
    metric: String,
    /// Write scatter points with the fitted line.
    #[arg(long)]
    scatter: Option<PathBuf>,
}

#[derive(Args)]
struct ArchplanArgs {
    spec: PathBuf,
    /// Upsampling layers in the readout head.
    #[arg(long, default_value_t = 0)]
    readout_layers: usize,
    /// Expected values to check the plan against.
    #[arg(long)]
    expect: Option<PathBuf>,
}

/// Process exit status: 0 success, 1 fatal error, 2 partial result.
enum Outcome {
    Done,
    Partial,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gtgen(a) => gtgen(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare(a),
        Command::Correlate(a) => correlate(a),
        Command::Archplan(a) => archplan(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn create_dir(dir: &Path) -> saleval::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })
}

fn gtgen(a: GtgenArgs) -> saleval::Result<Outcome> {
    let manifest = io::load_manifest(&a.manifest)?;
    let spec = BlurSpec {
        sigma_degrees: a.sigma_degrees,
        ..BlurSpec::default()
    };
    spec.validate()?;
    create_dir(&a.out_dir)?;
    let ext = match a.format {
        MapFormat::Fbm => "fbm",
        MapFormat::Csv => "csv",
    };
    let mut failed = 0;
    for (id, gt) in ground_truths(&manifest, &spec, a.jobs)? {
        match gt {
            Ok(map) => io::write_map(&a.out_dir.join(format!("{id}.{ext}")), &map)?,
            Err(e) => {
                eprintln!("{id}: {e}");
                failed += 1;
            }
        }
    }
    println!(
        "wrote {} ground-truth maps to {}",
        manifest.entries().len() - failed,
        a.out_dir.display()
    );
    Ok(if failed > 0 { Outcome::Partial } else { Outcome::Done })
}

fn eval(a: EvalArgs) -> saleval::Result<Outcome> {
    let metrics = if a.metrics.eq_ignore_ascii_case("all") {
        Metric::ALL.to_vec()
    } else {
        Metric::parse_list(&a.metrics)?
    };
    let cfg = EvalConfig {
        seed: a.seed,
        splits: a.splits,
        emd_max_side: a.emd_max_side,
        emd_downsample: !a.no_emd_downsample,
        metrics,
        sigma_degrees: a.sigma_degrees,
    };
    let manifest = io::load_manifest(&a.manifest)?;
    let report = run_eval(&manifest, &a.models, &cfg, a.jobs)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    io::write_report(&a.out, &report, a.jobs)?;
    let failed = report.records().iter().filter(|r| r.score.is_none()).count();
    println!(
        "{} records ({} flagged, {} failed) written to {}",
        report.records().len(),
        report.flagged_count(),
        failed,
        a.out.display()
    );
    Ok(if failed > 0 { Outcome::Partial } else { Outcome::Done })
}

fn compare(a: CompareArgs) -> saleval::Result<Outcome> {
    let reports = a
        .reports
        .iter()
        .map(|p| io::read_report(p))
        .collect::<saleval::Result<Vec<_>>>()?;
    let table = compare_models(&reports, a.baseline.as_deref())?;
    let md = table.to_markdown(a.decimals);
    match &a.out {
        Some(p) => io::write_text(p, &md)?,
        None => print!("{md}"),
    }
    Ok(Outcome::Done)
}

fn correlate(a: CorrelateArgs) -> saleval::Result<Outcome> {
    let study = io::read_study(&a.input, &a.metric)?;
    let p = study.pearson()?;
    println!("metric: {}", study.metric);
    println!("n: {}", p.n);
    println!("r: {:.6}", p.r);
    println!("t: {:.6}", p.t);
    println!("p: {:.6e}", p.p);
    if let Some(path) = &a.scatter {
        io::write_text(path, &io::scatter_csv(&study))?;
    }
    Ok(Outcome::Done)
}

fn archplan(a: ArchplanArgs) -> saleval::Result<Outcome> {
    let spec = io::load_arch_spec(&a.spec)?;
    let plan = plan_network(&spec, a.readout_layers)?;
    print!("{}", plan.to_markdown());
    if let Some(path) = &a.expect {
        let exp = io::load_expectations(path)?;
        let report = check_expectations(&plan, &exp);
        println!();
        print!("{}", report.render());
        let flagged = report.flagged().count();
        if !report.passed() {
            return Err(Error::InvalidSpec(format!(
                "plan does not match {}",
                path.display()
            )));
        }
        println!(
            "all expectations met ({flagged} known discrepanc{} flagged)",
            if flagged == 1 { "y" } else { "ies" }
        );
    }
    Ok(Outcome::Done)
}
