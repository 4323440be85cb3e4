//! `austen`: build Austen plots from prediction files.
//!
//! Exit status is 0 on success, 2 for input or schema problems and 3 for
//! numerical or degenerate-data failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use austen::io::{self, GridSpec, RunConfig};
use austen::models::intercept_only_groups;
use austen::simulator::simulate;
use austen::{
    bias, bias_contour, bootstrap_band, build_plot_data, calibrate_groups, crossfit_predictions,
    leave_group_out_predictions, r2_par, render_svg, tau_hat, BootstrapConfig, CovariateInfluence, Error,
    Estimand, FitConfig, GroupSpec, Labels, LeaveOutPredictions, PredictionFrame, SensitivityParams,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "austen", version, about = "Sensitivity analysis for unobserved confounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset from the sensitivity model.
    Simulate {
        /// Simulation config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-fit the reference models and write prediction files.
    Fit {
        /// Dataset CSV with header `y,t,<covariates...>`.
        dataset: PathBuf,
        /// Fit config (JSON); defaults apply when absent.
        #[arg(long)]
        fit_config: Option<PathBuf>,
        /// Covariate groups (JSON) to refit without.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the bias contour, calibration dots and optional band; write
    /// plot.json, plot.svg and band.json.
    Plot {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bias induced by a confounder with the given influence.
    Bias {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        alpha: f64,
        #[arg(long, conflicts_with = "delta", required_unless_present = "delta")]
        r2: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value = "ate")]
        estimand: Estimand,
    },
    /// Influence of observed covariate groups.
    Calibrate {
        #[command(flatten)]
        inputs: Inputs,
        /// Directory for calibration.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Inputs {
    /// Prediction file, then leave-out files.
    paths: Vec<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Leave-out file as NAME=PATH, or PATH (name taken from the file stem).
    #[arg(long = "leave-out")]
    leave_out: Vec<String>,
}

#[derive(Args)]
struct RunFlags {
    /// Defaults to |tau_hat|.
    #[arg(long)]
    target_bias: Option<f64>,
    #[arg(long, default_value = "ate")]
    estimand: Estimand,
    /// start,stop,count
    #[arg(long, value_parser = parse_grid)]
    alpha_grid: Option<GridSpec>,
    /// Bootstrap replicates; no band without it.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run config (JSON); its settings override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [start, stop, count] = parts.as_slice() else {
        return Err(format!("expected start,stop,count; got `{s}`"));
    };
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    let spec = GridSpec {
        start: num(start)?,
        stop: num(stop)?,
        count: count.parse().map_err(|e| format!("`{count}`: {e}"))?,
    };
    spec.to_grid().map_err(|e| e.to_string())?;
    Ok(spec)
}

impl RunFlags {
    fn resolve(&self) -> austen::Result<RunConfig> {
        let mut cfg = RunConfig {
            target_bias: self.target_bias,
            estimand: self.estimand,
            alpha_grid: self.alpha_grid,
            ..RunConfig::default()
        };
        if let Some(replicates) = self.bootstrap {
            let defaults = BootstrapConfig::default();
            cfg.bootstrap = Some(BootstrapConfig {
                replicates,
                level: self.level.unwrap_or(defaults.level),
                seed: self.seed.unwrap_or(defaults.seed),
                ..defaults
            });
        }
        if let Some(path) = &self.config {
            let file = io::read_config(path)?;
            cfg.estimand = file.estimand;
            cfg.target_bias = file.target_bias.or(cfg.target_bias);
            cfg.alpha_grid = file.alpha_grid.or(cfg.alpha_grid);
            cfg.bootstrap = file.bootstrap.or(cfg.bootstrap);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Inputs {
    fn load(&self) -> austen::Result<(PredictionFrame, Vec<LeaveOutPredictions>)> {
        let mut positional = self.paths.iter();
        let predictions = match &self.predictions {
            Some(p) => p.clone(),
            None => positional
                .next()
                .cloned()
                .ok_or_else(|| Error::InvalidInput("no prediction file given".into()))?,
        };
        let frame = io::read_predictions(&predictions)?;
        if frame.clipped_rows() > 0 {
            eprintln!(
                "warning: {}: clipped {} propensities into [1e-6, 1 - 1e-6]",
                predictions.display(),
                frame.clipped_rows()
            );
        }
        let mut specs: Vec<(String, PathBuf)> = positional
            .map(|p| (io::group_from_path(p), p.clone()))
            .collect();
        for arg in &self.leave_out {
            specs.push(match arg.split_once('=') {
                Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
                _ => (io::group_from_path(Path::new(arg)), PathBuf::from(arg)),
            });
        }
        let mut leave_outs = Vec::with_capacity(specs.len());
        for (name, path) in specs {
            let lo = io::read_leave_out(&path, &name)?;
            if lo.clipped_rows() > 0 {
                eprintln!(
                    "warning: {}: clipped {} leave-out propensities",
                    path.display(),
                    lo.clipped_rows()
                );
            }
            leave_outs.push(lo);
        }
        Ok((frame, leave_outs))
    }
}

fn create_dir(path: &Path) -> austen::Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        file: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> austen::Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        file: path.to_path_buf(),
        source: e,
    })
}

fn cmd_simulate(config: &Path, out: &Path) -> austen::Result<()> {
    let cfg = io::read_sim_config(config)?;
    let sample = simulate(&cfg)?;
    create_dir(out)?;
    io::write_dataset(out.join("dataset.csv"), &sample.dataset()?)?;
    io::write_predictions(out.join("oracle_predictions.csv"), &sample.oracle_frame()?)?;
    io::write_json(out.join("truth.json"), &sample.truth)?;
    let tr = &sample.truth;
    eprintln!(
        "simulated n={} ATE={} bias(ATE)={} r2_par={}",
        tr.n, tr.ate, tr.bias_ate, tr.r2_par
    );
    Ok(())
}

fn cmd_fit(dataset: &Path, fit_config: Option<&Path>, groups: Option<&Path>, out: &Path) -> austen::Result<()> {
    let data = io::read_dataset(dataset)?;
    let cfg = match fit_config {
        Some(p) => io::read_fit_config(p)?,
        None => FitConfig::default(),
    };
    let groups = match groups {
        Some(p) => io::read_group_spec(p)?,
        None => GroupSpec::default(),
    };
    groups.validate(&data)?;
    for name in intercept_only_groups(&data, &groups) {
        eprintln!("warning: group `{name}` removes every covariate; its refits are intercept-only");
    }
    let fit = crossfit_predictions(&data, &cfg)?;
    let leave_outs = leave_group_out_predictions(&data, &cfg, &groups)?;
    create_dir(out)?;
    io::write_predictions(out.join("predictions.csv"), &fit.frame)?;
    for lo in &leave_outs {
        io::write_leave_out(out.join(format!("{}{}.csv", io::LEAVE_OUT_PREFIX, lo.group())), lo)?;
    }
    if fit.frame.clipped_rows() > 0 {
        eprintln!("warning: clipped {} fitted propensities", fit.frame.clipped_rows());
    }
    Ok(())
}

fn cmd_plot(inputs: &Inputs, run: &RunFlags, out: &Path) -> austen::Result<()> {
    let cfg = run.resolve()?;
    let (frame, leave_outs) = inputs.load()?;
    let tau = tau_hat(&frame, cfg.estimand)?;
    let target = match cfg.target_bias {
        Some(t) => t,
        None if tau != 0.0 => tau.abs(),
        None => {
            return Err(Error::InvalidInput(
                "tau_hat is 0, so the default target bias is 0; pass --target-bias".into(),
            ))
        }
    };
    let grid = cfg.grid()?;
    let curve = bias_contour(target, &frame, cfg.estimand, &grid)?;
    let dots = calibrate_groups(&frame, &leave_outs)?;
    for d in dots.iter().filter(|d| d.clipped) {
        eprintln!(
            "warning: group `{}` has negative raw influence (alpha {}, R² {}); shown at 0",
            d.group, d.alpha_raw, d.r2_raw
        );
    }
    let band = match &cfg.bootstrap {
        Some(b) => Some(bootstrap_band(&frame, &leave_outs, target, cfg.estimand, &grid, b)?),
        None => None,
    };
    if let Some(b) = &band {
        if b.redraws > 0 {
            eprintln!("warning: {} bootstrap resamples redrawn after losing a treatment arm", b.redraws);
        }
    }
    let labels = Labels::for_curve(&curve);
    let data = build_plot_data(curve, dots, band.clone(), labels)?;
    if data.feasible_region_empty {
        eprintln!("warning: no alpha on the grid reaches the target bias with partial R² <= 1");
    }
    create_dir(out)?;
    io::write_json(out.join("plot.json"), &data)?;
    write_text(&out.join("plot.svg"), &render_svg(&data)?)?;
    if let Some(b) = &band {
        io::write_json(out.join("band.json"), b)?;
    }
    eprintln!("tau_hat ({}) = {tau}", cfg.estimand);
    eprintln!("target bias = {target}");
    Ok(())
}

fn cmd_bias(inputs: &Inputs, alpha: f64, r2: Option<f64>, delta: Option<f64>, estimand: Estimand) -> austen::Result<()> {
    let (frame, _) = inputs.load()?;
    let params = match (r2, delta) {
        (Some(r2), _) => SensitivityParams::with_r2(alpha, r2)?,
        (None, Some(d)) => SensitivityParams::with_delta(alpha, d)?,
        (None, None) => return Err(Error::InvalidInput("give --r2 or --delta".into())),
    };
    let b = bias(&params, &frame, estimand)?;
    let d = params.delta(&frame)?;
    let r = r2_par(&params, &frame)?;
    println!("bias\t{b}");
    println!("delta\t{d}");
    println!("r2\t{r}");
    Ok(())
}

fn cmd_calibrate(inputs: &Inputs, out: Option<&Path>) -> austen::Result<()> {
    let (frame, leave_outs) = inputs.load()?;
    let dots: Vec<CovariateInfluence> = calibrate_groups(&frame, &leave_outs)?;
    println!("group\talpha_hat\tr2_hat\talpha_raw\tr2_raw\tclipped");
    for d in &dots {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            d.group, d.alpha_hat, d.r2_hat, d.alpha_raw, d.r2_raw, d.clipped
        );
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        io::write_json(dir.join("calibration.json"), &dots)?;
    }
    Ok(())
}

fn run(cli: Cli) -> austen::Result<()> {
    match cli.command {
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Fit {
            dataset,
            fit_config,
            groups,
            out,
        } => cmd_fit(&dataset, fit_config.as_deref(), groups.as_deref(), &out),
        Command::Plot { inputs, run, out } => cmd_plot(&inputs, &run, &out),
        Command::Bias {
            inputs,
            alpha,
            r2,
            delta,
            estimand,
        } => cmd_bias(&inputs, alpha, r2, delta, estimand),
        Command::Calibrate { inputs, out } => cmd_calibrate(&inputs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
