use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lvssm_cli::{
    run_compare, run_features, run_fit, run_rolling, run_segments, run_simulate, run_wcc,
    CliResult, RunConfig,
};

/// Latent-variable state-space modeling pipeline for multimodal driving
/// sessions: feature extraction, change-point segmentation, EM model
/// fitting and comparison, rolling refits, and windowed cross-correlation.
#[derive(Parser)]
#[command(name = "lvssm", version, about)]
struct Cli {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the raw sensor CSVs.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Random seed recorded in every output.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Builtin model (`base` | `two_latent`) or path to a spec JSON.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Timestep restructuring stride in seconds.
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Participant identifier for cross-participant tables.
    #[arg(long, global = true)]
    participant: Option<String>,
    /// EM iteration cap.
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// EM convergence tolerance on the -2LL change.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Polish the EM optimum with a quasi-Newton pass.
    #[arg(long, global = true)]
    refine: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build features.csv and bcp.csv from the raw sensor tables.
    Features {
        /// Gaze-entropy window length in seconds.
        #[arg(long)]
        gte_window_s: Option<f64>,
        /// Change-point sampler iterations.
        #[arg(long)]
        bcp_iterations: Option<usize>,
        /// Change-point sampler burn-in.
        #[arg(long)]
        bcp_burnin: Option<usize>,
    },
    /// Fit the configured model and report estimates with uncertainty.
    Fit,
    /// Fit base and two-latent models and compare their -2LL.
    Compare,
    /// Refit the model over sliding windows.
    Rolling {
        /// Window length in seconds.
        #[arg(long)]
        window_s: Option<f64>,
        /// Step between windows in seconds.
        #[arg(long)]
        step_s: Option<f64>,
        /// Disable warm-starting consecutive windows.
        #[arg(long)]
        no_warm_start: bool,
    },
    /// Segment at rare heart-rate events and fit each segment.
    Segments {
        /// Minimum segment length in seconds.
        #[arg(long)]
        min_len_s: Option<f64>,
        /// Rare-event threshold multiplier on the HR standard deviation.
        #[arg(long)]
        threshold_k: Option<f64>,
        /// Change-probability floor for rare events.
        #[arg(long)]
        prob_floor: Option<f64>,
    },
    /// Windowed cross-correlation of the rolling transition coefficients.
    Wcc {
        #[arg(long)]
        wcc_window: Option<usize>,
        #[arg(long)]
        wcc_window_inc: Option<usize>,
        #[arg(long)]
        wcc_max_lag: Option<usize>,
        #[arg(long)]
        wcc_lag_inc: Option<usize>,
    },
    /// Generate a synthetic session's raw sensor tables.
    Simulate {
        /// Session length in seconds.
        #[arg(long)]
        duration_s: Option<usize>,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &cli.data_dir {
        cfg.data_dir = v.clone();
    }
    if let Some(v) = &cli.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = &cli.model {
        cfg.model = v.clone();
    }
    if let Some(v) = cli.stride {
        if v == 0 {
            return Err("stride must be >= 1".into());
        }
        cfg.stride = v;
    }
    if let Some(v) = cli.workers {
        cfg.workers = v;
    }
    if let Some(v) = &cli.participant {
        cfg.participant = v.clone();
    }
    if let Some(v) = cli.max_iter {
        cfg.fit.max_iter = v;
    }
    if let Some(v) = cli.tol {
        cfg.fit.tol = v;
    }
    if cli.refine {
        cfg.fit.refine = true;
    }
    match &cli.command {
        Command::Features {
            gte_window_s,
            bcp_iterations,
            bcp_burnin,
        } => {
            if let Some(v) = gte_window_s {
                cfg.gte.window_s = *v;
            }
            if let Some(v) = bcp_iterations {
                cfg.bcp.iterations = *v;
            }
            if let Some(v) = bcp_burnin {
                cfg.bcp.burnin = *v;
            }
        }
        Command::Rolling {
            window_s,
            step_s,
            no_warm_start,
        } => {
            if let Some(v) = window_s {
                cfg.rolling.window_s = *v;
            }
            if let Some(v) = step_s {
                cfg.rolling.step_s = *v;
            }
            if *no_warm_start {
                cfg.rolling.warm_start = false;
            }
        }
        Command::Segments {
            min_len_s,
            threshold_k,
            prob_floor,
        } => {
            if let Some(v) = min_len_s {
                cfg.segments.min_len_s = *v;
            }
            if let Some(v) = threshold_k {
                cfg.bcp.threshold_k = *v;
            }
            if let Some(v) = prob_floor {
                cfg.bcp.prob_floor = *v;
            }
        }
        Command::Wcc {
            wcc_window,
            wcc_window_inc,
            wcc_max_lag,
            wcc_lag_inc,
        } => {
            if let Some(v) = wcc_window {
                cfg.wcc.window = *v;
            }
            if let Some(v) = wcc_window_inc {
                cfg.wcc.window_inc = *v;
            }
            if let Some(v) = wcc_max_lag {
                cfg.wcc.max_lag = *v;
            }
            if let Some(v) = wcc_lag_inc {
                cfg.wcc.lag_inc = *v;
            }
        }
        Command::Simulate { duration_s } => {
            if let Some(v) = duration_s {
                cfg.simulate.duration_s = *v;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn dispatch(command: &Command, cfg: &RunConfig) -> CliResult<()> {
    if cfg.workers > 0 {
        // A failure here just means a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global();
    }
    match command {
        Command::Features { .. } => run_features(cfg),
        Command::Fit => run_fit(cfg),
        Command::Compare => run_compare(cfg),
        Command::Rolling { .. } => run_rolling(cfg),
        Command::Segments { .. } => run_segments(cfg),
        Command::Wcc { .. } => run_wcc(cfg),
        Command::Simulate { .. } => run_simulate(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("configuration error: {msg}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
