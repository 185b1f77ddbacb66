use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rcid::baselines::ArimaxOrder;
use rcid::error::ErrorClass;
use rcid::estimators::{PriorConfig, TrainingConfig};
use rcid::fleet::{
    analytic_coeffs, cluster_by_elbow, cluster_homes, read_metadata_file, representative,
    synth_fleet, write_fleet, Clustering, FleetConfig, HomeMetadata, DEFAULT_FLAT_THRESHOLD_PCT,
    DEFAULT_RESTARTS,
};
use rcid::harness::{
    run_experiment, ExperimentConfig, FitSettings, FittedModel, LibraryKey, ModelKind, ModelLibrary,
};
use rcid::rcnet::{
    build_state_space, difference_coefficients, discretize, initial_state, simulate_state_space,
    RcParams,
};
use rcid::timeseries::{
    derive_controls, impute, read_controls_file, read_trace_file, write_trace, ControlSeries, Trace,
};
use rcid::{Error, Result, SAMPLES_PER_DAY, STEP_SECONDS};

#[derive(Parser)]
#[command(
    name = "rcid",
    version,
    about = "Grey-box RC thermal models from thermostat traces"
)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fleet (config: fleet JSON) into --out.
    Synth,
    /// Validate and impute a trace CSV, writing the normalized trace.
    Ingest {
        trace: PathBuf,
        #[arg(long, default_value = "home")]
        home_id: String,
        /// Keep gaps instead of imputing them.
        #[arg(long)]
        no_impute: bool,
    },
    /// Fit one model to one home's trace (config: fit settings JSON).
    Fit {
        trace: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "bnn_rc")]
        model: String,
        /// Use only the first N days of the trace.
        #[arg(long)]
        days: Option<usize>,
    },
    /// Forward-simulate RcParams over an input CSV (t_out,k_heat,k_cool).
    Simulate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        /// Initial indoor temperature; the first outdoor value if omitted.
        #[arg(long)]
        t_in: Option<f64>,
    },
    /// Difference-equation coefficients of RcParams at the 5-minute step.
    Coeffs {
        #[arg(long)]
        params: PathBuf,
        /// Zero-order hold on the HVAC inputs, as the synthetic generator applies them.
        #[arg(long)]
        mixed_hold: bool,
    },
    /// Cluster homes on metadata.
    Cluster {
        metadata: PathBuf,
        /// Fixed cluster count; the elbow rule picks one otherwise.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long, default_value_t = DEFAULT_FLAT_THRESHOLD_PCT)]
        threshold: f64,
    },
    /// Retrain a stored model on a target home's data.
    Transfer {
        #[arg(long)]
        model: PathBuf,
        trace: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Retraining budget: the first N days of the target trace.
        #[arg(long, default_value_t = 1)]
        days: usize,
    },
    /// Run an experiment (config: experiment JSON). --out overrides its output directory.
    Experiment,
    /// Manage a directory of pre-trained models.
    Library {
        #[arg(long)]
        store: PathBuf,
        #[command(subcommand)]
        action: LibraryAction,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, default_value = "home")]
    home_id: String,
    /// Recorded equipment states (k_heat,k_cool); derived from setpoints if omitted.
    #[arg(long)]
    controls: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LibraryAction {
    List,
    Put {
        #[arg(long)]
        cluster: usize,
        #[arg(long)]
        season: String,
        #[arg(long)]
        model: PathBuf,
    },
    Get {
        #[arg(long)]
        cluster: usize,
        #[arg(long)]
        season: String,
        #[arg(long)]
        kind: String,
    },
    /// Model for a home known only by floor area and year built.
    Lookup {
        #[arg(long)]
        clustering: PathBuf,
        #[arg(long)]
        floor_area: f64,
        #[arg(long)]
        year_built: i32,
        #[arg(long)]
        season: String,
        #[arg(long)]
        kind: String,
    },
}

/// Fit settings file for `fit` and `transfer`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitFile {
    order: usize,
    arimax_order: ArimaxOrder,
    prior: PriorConfig,
    training: TrainingConfig,
}

impl Default for FitFile {
    fn default() -> Self {
        FitFile {
            order: 2,
            arimax_order: ArimaxOrder::default(),
            prior: PriorConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn config_or_default<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
) -> Result<T> {
    path.as_deref().map_or_else(|| Ok(T::default()), read_json)
}

/// Writes to `--out` when given, stdout otherwise.
fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn load_home(trace: &Path, data: &DataArgs) -> Result<(Trace, ControlSeries)> {
    let mut t = read_trace_file(trace, &data.home_id)?;
    if t.has_missing() {
        t = impute(&t)?;
    }
    let controls = match &data.controls {
        Some(p) => read_controls_file(p)?,
        None => derive_controls(&t)?,
    };
    if controls.len() != t.len() {
        return Err(Error::Shape("controls and trace differ in length".into()));
    }
    Ok((t, controls))
}

fn first_days(
    trace: &Trace,
    controls: &ControlSeries,
    days: usize,
) -> Result<(Trace, ControlSeries)> {
    let n = (days * SAMPLES_PER_DAY).min(trace.len());
    let c = ControlSeries {
        k_heat: controls.k_heat[..n].to_vec(),
        k_cool: controls.k_cool[..n].to_vec(),
        conflicts: controls
            .conflicts
            .iter()
            .copied()
            .filter(|&i| i < n)
            .collect(),
    };
    Ok((trace.window(0, n)?, c))
}

fn settings(f: FitFile) -> FitSettings {
    FitSettings {
        order: f.order,
        arimax_order: f.arimax_order,
        prior: f.prior,
        training: f.training,
    }
}

fn report_fit(model: &FittedModel, trace: &Trace, controls: &ControlSeries) {
    match model.evaluate(trace, controls) {
        Ok(e) => eprintln!(
            "in-sample one-step RMSE {:.4} °F over {} samples",
            e.rmse, e.samples
        ),
        Err(e) => eprintln!("in-sample RMSE unavailable: {e}"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth => {
            let cfg: FleetConfig = config_or_default(&cli.config)?;
            let out = cli
                .out
                .ok_or_else(|| Error::Config("synth needs --out <dir>".into()))?;
            let fleet = synth_fleet(&cfg, cli.seed)?;
            let m = write_fleet(&fleet, &out)?;
            eprintln!("wrote {} homes to {}", m.homes.len(), out.display());
        }
        Command::Ingest {
            trace,
            home_id,
            no_impute,
        } => {
            let mut t = read_trace_file(&trace, &home_id)?;
            let missing = t.has_missing();
            if missing && !no_impute {
                t = impute(&t)?;
            }
            let long = t.long_gap().iter().filter(|g| **g).count();
            eprintln!(
                "{}: {} samples from {}; gaps {}; long-gap samples {long}",
                t.home_id(),
                t.len(),
                t.start(),
                if missing { "filled" } else { "none" },
            );
            let mut buf = Vec::new();
            write_trace(&t, &mut buf)?;
            emit(&cli.out, &String::from_utf8(buf).expect("utf-8 csv"))?;
        }
        Command::Fit {
            trace,
            data,
            model,
            days,
        } => {
            let kind = ModelKind::parse(&model)?;
            let s = settings(config_or_default(&cli.config)?);
            let (t, c) = load_home(&trace, &data)?;
            let (t, c) = match days {
                Some(d) => first_days(&t, &c, d)?,
                None => (t, c),
            };
            let fitted = FittedModel::fit(kind, &t, &c, &s, cli.seed)?;
            report_fit(&fitted, &t, &c);
            emit(&cli.out, &serde_json::to_string_pretty(&fitted)?)?;
        }
        Command::Simulate {
            params,
            inputs,
            t_in,
        } => {
            let p: RcParams = read_json(&params)?;
            p.validate()?;
            let mut reader = csv::Reader::from_path(&inputs)?;
            let mut u = Vec::new();
            for row in reader.deserialize() {
                let (t_out, k_heat, k_cool): (f64, f64, f64) = row?;
                u.push([t_out, k_heat, k_cool]);
            }
            let first = u.first().ok_or(Error::EmptyInput)?;
            let ss = build_state_space(&p)?;
            let ds = discretize(&ss, STEP_SECONDS)?;
            let x0 = initial_state(p.order, t_in.unwrap_or(first[0]), first[0]);
            let y = simulate_state_space(&ds, &ss, &u, &x0)?;
            let mut text = String::from("t_in\n");
            for v in y {
                text.push_str(&format!("{v}\n"));
            }
            emit(&cli.out, &text)?;
        }
        Command::Coeffs { params, mixed_hold } => {
            let p: RcParams = read_json(&params)?;
            let dc = if mixed_hold {
                analytic_coeffs(&p)?
            } else {
                let ss = build_state_space(&p)?;
                difference_coefficients(&discretize(&ss, STEP_SECONDS)?, &ss)?
            };
            emit(&cli.out, &serde_json::to_string_pretty(&dc)?)?;
        }
        Command::Cluster {
            metadata,
            k,
            k_max,
            threshold,
        } => {
            let homes = read_metadata_file(&metadata)?;
            let (text, clustering) = match k {
                Some(k) => {
                    let c = cluster_homes(&homes, k, cli.seed, DEFAULT_RESTARTS)?;
                    (serde_json::to_string_pretty(&c)?, c)
                }
                None => {
                    let r = cluster_by_elbow(&homes, k_max, cli.seed, threshold)?;
                    let note = if r.flat {
                        ""
                    } else {
                        " (curve never flattened)"
                    };
                    eprintln!("selected k = {}{note}", r.k);
                    (serde_json::to_string_pretty(&r)?, r.clustering)
                }
            };
            for c in 0..clustering.k {
                eprintln!(
                    "cluster {c}: {} homes, representative {}",
                    clustering.members(c).len(),
                    representative(&clustering, c, &homes)?
                );
            }
            emit(&cli.out, &text)?;
        }
        Command::Transfer {
            model,
            trace,
            data,
            days,
        } => {
            let source: FittedModel = read_json(&model)?;
            let s = settings(config_or_default(&cli.config)?);
            let (t, c) = load_home(&trace, &data)?;
            let (t, c) = first_days(&t, &c, days)?;
            let fitted = source.retrain(&t, &c, &s, cli.seed)?;
            report_fit(&fitted, &t, &c);
            emit(&cli.out, &serde_json::to_string_pretty(&fitted)?)?;
        }
        Command::Experiment => {
            let path = cli
                .config
                .ok_or_else(|| Error::Config("experiment needs --config <file>".into()))?;
            let mut cfg = ExperimentConfig::load(&path)?;
            if cli.out.is_some() {
                cfg.output = cli.out;
            }
            let report = run_experiment(&cfg)?;
            for s in &report.summaries {
                println!(
                    "{:<12} {:<12} {:<8} {:>3}d  n={:<4} mean {:.4}  median {:.4}  IQR {:.4}  outliers {}",
                    s.model.as_str(),
                    s.scenario.as_str(),
                    s.method.as_str(),
                    s.train_days,
                    s.count,
                    s.mean,
                    s.median,
                    s.iqr,
                    s.outliers.len()
                );
            }
            for e in &report.exclusions {
                eprintln!("excluded {} (seed {}): {}", e.home_id, e.seed, e.reason);
            }
        }
        Command::Library { store, action } => {
            let lib = ModelLibrary::open(store)?;
            match action {
                LibraryAction::List => {
                    let mut text = String::new();
                    for k in lib.list()? {
                        text.push_str(&format!("{}\t{}\t{}\n", k.cluster, k.season, k.kind));
                    }
                    emit(&cli.out, &text)?;
                }
                LibraryAction::Put {
                    cluster,
                    season,
                    model,
                } => {
                    let bytes = std::fs::read(&model)?;
                    let m: FittedModel = serde_json::from_slice(&bytes)?;
                    let key = LibraryKey {
                        cluster,
                        season,
                        kind: m.kind(),
                    };
                    let path = lib.put_bytes(&key, &bytes)?;
                    eprintln!("stored {key} at {}", path.display());
                }
                LibraryAction::Get {
                    cluster,
                    season,
                    kind,
                } => {
                    let key = LibraryKey {
                        cluster,
                        season,
                        kind: ModelKind::parse(&kind)?,
                    };
                    let bytes = lib.get_bytes(&key)?;
                    match &cli.out {
                        Some(p) => std::fs::write(p, &bytes)?,
                        None => std::io::stdout().lock().write_all(&bytes)?,
                    }
                }
                LibraryAction::Lookup {
                    clustering,
                    floor_area,
                    year_built,
                    season,
                    kind,
                } => {
                    let clustering: Clustering = read_json(&clustering)?;
                    let home = HomeMetadata {
                        home_id: "query".into(),
                        floor_area,
                        year_built,
                        province: None,
                        city: None,
                    };
                    home.validate()?;
                    let m = lib.for_home(&home, &clustering, &season, ModelKind::parse(&kind)?)?;
                    emit(&cli.out, &serde_json::to_string_pretty(&m)?)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Convergence => 3,
            })
        }
    }
}
