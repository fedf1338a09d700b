use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wsol_eval::baselines::{center_gaussian, GaussianSpec};
use wsol_eval::box_metrics::TauSelection;
use wsol_eval::dataset::{check_disjoint, load_manifest, write_scoremap_raw};
use wsol_eval::hparam::{
    filter_converged, rank_transfer, read_results, sample_trials, select_best, write_trials, HparamSpace, Method,
    DEFAULT_TRIALS,
};
use wsol_eval::lemma::check_equivalence;
use wsol_eval::pipeline::{
    box_curve_over, evaluate_manifest, load_box_records, load_mask_records, mask_curve, Curve, EvalConfig, Metric,
    ResizeOrder,
};
use wsol_eval::scoremap::{Connectivity, Normalization, ThresholdSpec, DEFAULT_GRID_SPACING};
use wsol_eval::Error;

#[derive(Parser)]
#[command(
    name = "wsol-eval",
    version,
    about = "Evaluate WSOL score maps and run protocol tooling"
)]
struct Cli {
    /// Worker threads for image-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Split manifest (JSON Lines).
    #[arg(long)]
    manifest: PathBuf,
    /// Directory with `<image_id>.wsm`, `<image_id>.png` or `<image_id>` files.
    #[arg(long)]
    scoremaps: PathBuf,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Threshold spacing in GRID mode.
    #[arg(long, default_value_t = DEFAULT_GRID_SPACING, conflicts_with = "exact_thresholds")]
    grid: f64,
    /// Use every distinct score value as a threshold.
    #[arg(long)]
    exact_thresholds: bool,
    #[arg(long, default_value = "8", value_parser = ["4", "8"])]
    connectivity: String,
    #[arg(long, default_value = "minmax", value_parser = ["minmax", "max", "none"])]
    normalize: String,
    #[arg(long, default_value = "calibrate-first", value_parser = ["calibrate-first", "resize-first"])]
    resize_order: String,
    /// How MaxBoxAccV2 picks thresholds across IoU levels.
    #[arg(long, value_enum, default_value_t = TauArg::PerDelta)]
    tau_selection: TauArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum TauArg {
    PerDelta,
    Shared,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Maxboxacc,
    Maxboxaccv2,
    Pxap,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveKind {
    /// Largest-component box accuracy per IoU threshold.
    Boxacc,
    /// All-components box accuracy per IoU threshold.
    Boxaccv2,
    /// Pixel precision-recall.
    Pr,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a metric and print the report as JSON.
    Evaluate {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_enum)]
        metric: MetricArg,
        /// Also write the underlying curve as CSV.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the full accuracy or precision-recall curve as CSV.
    Curve {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_enum)]
        kind: CurveKind,
        /// Destination (default: stdout).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample hyperparameter trials as JSON Lines.
    SampleHparams {
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Kendall tau between the metric rankings of two result files.
    RankTransfer {
        a: PathBuf,
        b: PathBuf,
        /// Drop trials that failed to converge in either file.
        #[arg(long)]
        converged_only: bool,
    },
    /// Share of non-converged trials and the best converged trial.
    SelectBest {
        results: PathBuf,
        /// Treat smaller metric values as better.
        #[arg(long)]
        lower_is_better: bool,
    },
    /// Exhaustively compare the perfect-threshold and posterior-ratio predicates.
    Lemma {
        #[arg(long, default_value_t = 5)]
        max_cues: usize,
        #[arg(long, default_value_t = 9)]
        posterior_grid: usize,
    },
    /// Write a center-gaussian score map for every manifest entry.
    CenterBaseline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Report image ids shared between split manifests.
    CheckSplits {
        #[arg(required = true, num_args = 2..)]
        manifests: Vec<PathBuf>,
    },
}

impl EvalArgs {
    fn config(&self) -> Result<EvalConfig, Error> {
        Ok(EvalConfig {
            thresholds: if self.exact_thresholds {
                ThresholdSpec::Exact
            } else {
                ThresholdSpec::Grid(self.grid)
            },
            connectivity: Connectivity::from_number(self.connectivity.parse().expect("validated by clap"))?,
            normalization: self.normalize.parse::<Normalization>()?,
            resize_order: self.resize_order.parse::<ResizeOrder>()?,
            deltas: self.delta.clone(),
            tau_selection: match self.tau_selection {
                TauArg::PerDelta => TauSelection::PerDelta,
                TauArg::Shared => TauSelection::Shared,
            },
        })
    }
}

/// 1 for metric preconditions that only show up while evaluating, 2 for
/// everything the user can fix in the inputs or flags.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Uncalibratable(_) | Error::NoForeground => 1,
        _ => 2,
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_error(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_out(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Error> {
    let shown = path.unwrap_or(Path::new("<stdout>"));
    let mut out = open_output(path)?;
    f(&mut out).and_then(|_| out.flush()).map_err(|e| io_error(shown, e))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Evaluate { eval, metric, output } => {
            let metric = match metric {
                MetricArg::Maxboxacc => Metric::MaxBoxAcc,
                MetricArg::Maxboxaccv2 => Metric::MaxBoxAccV2,
                MetricArg::Pxap => Metric::PxAp,
            };
            let config = eval.config()?;
            let manifest = load_manifest(&eval.manifest)?;
            let (report, curve) = evaluate_manifest(&manifest, &eval.scoremaps, metric, &config)?;
            if let Some(path) = output.as_deref() {
                write_out(Some(path), |w| curve.write_csv(w))?;
            }
            write_out(None, |w| {
                serde_json::to_writer_pretty(&mut *w, &report)?;
                writeln!(w)
            })
        }
        Command::Curve { eval, kind, output } => {
            let config = eval.config()?;
            let manifest = load_manifest(&eval.manifest)?;
            let curve = match kind {
                CurveKind::Boxacc | CurveKind::Boxaccv2 => {
                    let metric = if matches!(kind, CurveKind::Boxacc) {
                        Metric::MaxBoxAcc
                    } else {
                        Metric::MaxBoxAccV2
                    };
                    // Curves may span several IoU levels under either rule.
                    let deltas = match &config.deltas {
                        Some(d) => d.clone(),
                        None => config.deltas_for(metric)?,
                    };
                    let records = load_box_records(&manifest, &eval.scoremaps, &config)?;
                    Curve::BoxAcc(box_curve_over(&records, metric, &deltas, &config)?)
                }
                CurveKind::Pr => {
                    let records = load_mask_records(&manifest, &eval.scoremaps, &config)?;
                    Curve::Pr(mask_curve(&records, &config)?)
                }
            };
            write_out(output.as_deref(), |w| curve.write_csv(w))
        }
        Command::SampleHparams {
            method,
            n,
            seed,
            output,
        } => {
            let trials = sample_trials(&HparamSpace::for_method(method), n, seed)?;
            write_out(output.as_deref(), |w| write_trials(&trials, w))
        }
        Command::RankTransfer { a, b, converged_only } => {
            let (tau, n) = rank_transfer(&read_results(&a)?, &read_results(&b)?, converged_only)?;
            write_out(None, |w| writeln!(w, "kendall_tau,{tau:.12}\nn_trials,{n}"))
        }
        Command::SelectBest {
            results,
            lower_is_better,
        } => {
            let all = read_results(&results)?;
            let (_, ratio) = filter_converged(&all)?;
            let best = select_best(&all, !lower_is_better)?;
            write_out(None, |w| {
                writeln!(w, "non_converged_ratio,{ratio:.6}")?;
                writeln!(w, "best_trial_id,{}", best.trial_id())?;
                writeln!(w, "best_metric_value,{}", best.metric_value())
            })
        }
        Command::Lemma {
            max_cues,
            posterior_grid,
        } => {
            let report = check_equivalence(max_cues, posterior_grid)?;
            write_out(None, |w| {
                writeln!(
                    w,
                    "checked {} cue worlds (up to {max_cues} cues, posterior grid of {posterior_grid})",
                    report.worlds
                )?;
                writeln!(
                    w,
                    "{} disagreements (strict posterior-ratio boundary)",
                    report.disagreements
                )?;
                writeln!(
                    w,
                    "{} disagreements under the inclusive boundary",
                    report.inclusive_disagreements
                )?;
                if let Some(world) = &report.first_counterexample {
                    writeln!(w, "first counterexample:")?;
                    for c in world.cues() {
                        writeln!(
                            w,
                            "  {} prior={} posterior={} {}",
                            c.name,
                            c.prior,
                            c.posterior,
                            if c.foreground { "fg" } else { "bg" }
                        )?;
                    }
                }
                Ok(())
            })
        }
        Command::CenterBaseline {
            manifest,
            output,
            sigma,
        } => {
            let manifest = load_manifest(&manifest)?;
            fs::create_dir_all(&output).map_err(|e| io_error(&output, e))?;
            for entry in &manifest.entries {
                let map = center_gaussian(&GaussianSpec::new(entry.height, entry.width, sigma)?);
                write_scoremap_raw(&map, output.join(format!("{}.wsm", entry.image_id)))?;
            }
            write_out(None, |w| {
                writeln!(w, "wrote {} score maps to {}", manifest.entries.len(), output.display())
            })
        }
        Command::CheckSplits { manifests } => {
            let splits = manifests.iter().map(load_manifest).collect::<Result<Vec<_>, _>>()?;
            let report = check_disjoint(&splits);
            write_out(None, |w| {
                for o in &report {
                    let names: Vec<&str> = o.splits.iter().map(|s| s.name()).collect();
                    writeln!(w, "{} in {}", o.image_id, names.join(","))?;
                }
                writeln!(w, "{} shared image ids", report.len())
            })?;
            if report.is_empty() {
                Ok(())
            } else {
                Err(Error::InvalidArgument("splits are not disjoint".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| run(cli.command))),
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
