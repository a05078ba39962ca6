use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use shiftem::em::{self, EmConfig};
use shiftem::experiment::{self, build_model, repeat_data, ExperimentConfig};
use shiftem::kiiveri::{kiiveri_adapt, target_only_init};
use shiftem::metrics::{mean_sd, metrics};
use shiftem::theory::{self, TheoryReport};
use shiftem::{io, DagSpec, Error, ObservedData, Result, SemParams};

#[derive(Parser)]
#[command(name = "shiftem", version, about = "Impute a systematically missing node under domain shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdaptMethod {
    FirstOrderEm,
    KiiveriEm,
}

#[derive(Subcommand)]
enum Command {
    /// Sample source/target data for a synthetic scenario.
    Generate {
        /// Experiment config (the scenario and sample sizes are used).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit every mechanism on fully observed source data.
    Fit {
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapt the target mechanism to target-domain data.
    Adapt {
        #[command(flatten)]
        target: TargetArgs,
        /// EM settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "first-order-em")]
        method: AdaptMethod,
        /// For kiiveri-em: start from the given parameters instead of a
        /// target-only initialization.
        #[arg(long)]
        from_params: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Impute the target node from its conditional mean.
    Impute {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score imputations against held-out truth.
    Evaluate {
        /// Single-column truth CSV.
        #[arg(long)]
        truth: PathBuf,
        /// Single-column predictions CSV.
        #[arg(long)]
        predicted: PathBuf,
        /// Source data; its target column sets the standardization.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        target_node: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run a full comparison from a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Also write scatter.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Curvature, Lipschitz, Louis and contraction diagnostics.
    TheoryCheck {
        /// Synthetic experiment config; evaluated at the true target
        /// parameters, with an EM run from the source fit for contraction.
        #[arg(long, conflicts_with_all = ["dag", "params", "target_data"])]
        config: Option<PathBuf>,
        #[arg(long)]
        dag: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        target_data: Option<PathBuf>,
        #[arg(long)]
        target_node: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 256)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

#[derive(Args)]
struct TargetArgs {
    #[arg(long)]
    dag: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// Target-domain CSV without (or with an empty) target column.
    #[arg(long)]
    target_data: PathBuf,
    #[arg(long)]
    target_node: String,
}

struct Loaded {
    dag: Arc<DagSpec>,
    params: SemParams,
    observed: ObservedData,
}

impl TargetArgs {
    fn load(&self) -> Result<Loaded> {
        let dag = Arc::new(DagSpec::load_json(&self.dag)?);
        let t = dag.index_of(&self.target_node)?;
        let params = SemParams::load_json(dag.clone(), &self.params)?;
        let observed = io::read_target_csv(&self.target_data, &dag, t)?;
        Ok(Loaded { dag, params, observed })
    }
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::config(
            format!("{}:{}:{}", path.display(), e.line(), e.column()),
            e.to_string(),
        )
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { config, seed, out } => generate(&config, seed, &out),
        Command::Fit { dag, source, out } => {
            let dag = Arc::new(DagSpec::load_json(&dag)?);
            let data = io::read_source_csv(&source, &dag)?;
            let params = shiftem::fit_dag_source(dag, &data)?;
            ensure_dir(&out)?;
            let path = out.join("params.json");
            params.save_json(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Adapt {
            target,
            config,
            method,
            from_params,
            out,
        } => {
            let l = target.load()?;
            let cfg: EmConfig = match config {
                Some(p) => load_json(&p)?,
                None => EmConfig::default(),
            };
            cfg.validate()?;
            let (params, trace) = match method {
                AdaptMethod::FirstOrderEm => em::adapt(&l.params, &l.observed, &cfg)?,
                AdaptMethod::KiiveriEm => {
                    let init = if from_params {
                        l.params.clone()
                    } else {
                        target_only_init(&l.params, &l.observed)?
                    };
                    kiiveri_adapt(&init, &l.observed, &cfg)?
                }
            };
            ensure_dir(&out)?;
            let path = out.join("params.json");
            params.save_json(&path)?;
            println!("wrote {}", path.display());
            let trace_path = out.join("trace.csv");
            trace.write_csv(std::fs::File::create(&trace_path)?)?;
            println!("wrote {}", trace_path.display());
            println!(
                "{} iterations ({:?}); sigma2[{}] = {:.6}",
                trace.iterations(),
                trace.termination,
                l.dag.name(l.observed.target()),
                params.variance(l.observed.target())
            );
            Ok(())
        }
        Command::Impute { target, out } => {
            let l = target.load()?;
            let imputed = em::impute_adapted(&l.params, &l.observed)?;
            ensure_dir(&out)?;
            let path = out.join("imputed.csv");
            io::write_vector_csv(&path, l.dag.name(l.observed.target()), &imputed)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Evaluate {
            truth,
            predicted,
            source,
            dag,
            target_node,
            out,
            format,
        } => {
            let dag = DagSpec::load_json(&dag)?;
            let t = dag.index_of(&target_node)?;
            let src = io::read_source_csv(&source, &dag)?;
            let (mu, sd) = mean_sd(&src.column(t).clone_owned());
            let truth = io::read_vector_csv(&truth, None)?;
            let pred = io::read_vector_csv(&predicted, None)?;
            let s = metrics(&truth, &pred, mu, sd)?;
            println!("{:>10} {:>10} {:>10}", "MAE", "RMSE", "R2");
            println!("{:>10.4} {:>10.4} {:>10.4}", s.mae, s.rmse, s.r2);
            if let Some(out) = out {
                ensure_dir(&out)?;
                match format {
                    Format::Json => write(&out.join("metrics.json"), &serde_json::to_string_pretty(&s)?)?,
                    Format::Csv => write(
                        &out.join("metrics.csv"),
                        &format!("mae,rmse,r2\n{},{},{}\n", s.mae, s.rmse, s.r2),
                    )?,
                }
            }
            Ok(())
        }
        Command::Experiment {
            config,
            seed,
            out,
            format,
            svg,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = experiment::run_experiment(&cfg)?;
            print!("{}", report.summary_table());
            if let Some(out) = out {
                ensure_dir(&out)?;
                match format {
                    Format::Csv => write(&out.join("report.csv"), &report.to_csv()?)?,
                    Format::Json => write(&out.join("report.json"), &report.to_json()?)?,
                }
                if !report.scatter.is_empty() {
                    write(&out.join("scatter.csv"), &report.scatter_csv()?)?;
                    if svg {
                        write(&out.join("scatter.svg"), &report.scatter_svg())?;
                    }
                }
            }
            Ok(())
        }
        Command::TheoryCheck {
            config,
            dag,
            params,
            target_data,
            target_node,
            radius,
            probes,
            seed,
            out,
            format,
        } => {
            let report = match config {
                Some(cfg) => theory_from_config(&cfg, radius, probes, seed)?,
                None => {
                    let missing = |what: &str| Error::config(what, "required without --config");
                    let l = TargetArgs {
                        dag: dag.ok_or_else(|| missing("--dag"))?,
                        params: params.ok_or_else(|| missing("--params"))?,
                        target_data: target_data.ok_or_else(|| missing("--target-data"))?,
                        target_node: target_node.clone().ok_or_else(|| missing("--target-node"))?,
                    }
                    .load()?;
                    theory::theory_report(&l.params, &l.observed, true, radius, probes, seed, None)?
                }
            };
            print!("{}", theory_table(&report));
            if let Some(out) = out {
                ensure_dir(&out)?;
                match format {
                    Format::Json => write(&out.join("theory.json"), &serde_json::to_string_pretty(&report)?)?,
                    Format::Csv => write(&out.join("theory.csv"), &theory_csv(&report))?,
                }
            }
            Ok(())
        }
    }
}

fn generate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let model = build_model(&cfg.scenario)?
        .ok_or_else(|| Error::config("scenario.kind", "generate needs a synthetic scenario"))?;
    let data = repeat_data(&cfg, Some(&model), 0)?;
    ensure_dir(out)?;
    let dag = &model.dag;
    let t = model.target;
    dag.save_json(&out.join("dag.json"))?;
    model.source_params.save_json(&out.join("source_params.json"))?;
    model.target_params.save_json(&out.join("target_params.json"))?;
    io::write_matrix_csv(&out.join("source.csv"), dag.names(), &data.source)?;
    io::write_observed_csv(&out.join("target.csv"), dag, &data.observed)?;
    if let Some(truth) = &data.truth {
        io::write_vector_csv(&out.join("truth.csv"), dag.name(t), truth)?;
    }
    println!(
        "target node {}; wrote dag.json, source_params.json, target_params.json, source.csv ({} rows), target.csv ({} rows), truth.csv to {}",
        dag.name(t),
        data.source.nrows(),
        data.observed.n(),
        out.display()
    );
    Ok(())
}

fn theory_from_config(path: &Path, radius: f64, probes: usize, seed: u64) -> Result<TheoryReport> {
    let cfg = ExperimentConfig::load(path)?;
    let model = build_model(&cfg.scenario)?
        .ok_or_else(|| Error::config("scenario.kind", "theory-check needs a synthetic scenario"))?;
    let data = repeat_data(&cfg, Some(&model), 0)?;
    let t = model.target;
    let fit = shiftem::fit_dag_source(model.dag.clone(), &data.source)?;
    // Evaluate at the true target mechanism with everything else frozen at
    // the source fit, which is the point the EM iterates approach.
    let mut reference = fit.clone();
    let parents = model.target_params.parent_coefficients(t);
    reference.set_mechanism(
        t,
        parents.as_slice(),
        model.target_params.intercept(t),
        model.target_params.variance(t),
    )?;
    let em_cfg = experiment::effective_em_config(&cfg, Some(&model), &model.dag, t);
    let (_, trace) = em::adapt(&fit, &data.observed, &em_cfg)?;
    theory::theory_report(&reference, &data.observed, em_cfg.include_intercept, radius, probes, seed, Some(&trace))
}

fn theory_table(r: &TheoryReport) -> String {
    let c = &r.curvature;
    let i = &r.information;
    let mut rows: Vec<(String, String)> = vec![
        ("target".into(), r.target.clone()),
        ("n".into(), r.n.to_string()),
        ("radius".into(), r.radius.to_string()),
        ("lambda".into(), format!("{:.6e}", c.lambda)),
        ("mu".into(), format!("{:.6e}", c.mu)),
        ("schur_ok".into(), c.schur_ok.to_string()),
        ("gamma_bound".into(), format!("{:.6e}", r.gamma_bound)),
        ("kappa_bound".into(), c.kappa.map_or("-".into(), |k| format!("{k:.6e}"))),
        ("louis_residual".into(), format!("{:.3e}", i.residual)),
        ("louis_residual_plain".into(), format!("{:.3e}", i.residual_plain)),
        ("min_eig_i_miss".into(), format!("{:.3e}", i.min_eig_i_miss)),
        ("min_eig_comp_minus_obs".into(), format!("{:.3e}", i.min_eig_comp_minus_obs)),
        ("roundoff_suspect".into(), i.roundoff_suspect.to_string()),
    ];
    if let Some(k) = &r.contraction {
        rows.push(("kappa_hat".into(), format!("{:.4}", k.kappa)));
        rows.push(("floor".into(), format!("{:.3e}", k.floor)));
        rows.push(("pre_plateau".into(), k.pre_plateau.to_string()));
    }
    if let Some(b) = r.bound_consistent {
        rows.push(("kappa_hat_within_bound".into(), b.to_string()));
    } else if r.contraction.is_some() {
        rows.push(("kappa_hat_within_bound".into(), "bound vacuous (informational)".into()));
    }
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<w$}  {v}\n")).collect()
}

fn theory_csv(r: &TheoryReport) -> String {
    let mut s = String::from("quantity,value\n");
    for line in theory_table(r).lines() {
        if let Some((k, v)) = line.split_once("  ") {
            s.push_str(&format!("{},{}\n", k.trim(), v.trim()));
        }
    }
    s
}
