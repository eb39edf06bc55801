//! Pipeline commands: simulate -> features -> fit/compare/rolling ->
//! segments/wcc. Every command writes its artifacts plus a run manifest
//! carrying the configuration hash and seed; outputs are byte-identical
//! across reruns with the same configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use lvssm_core::analysis::{
    participant_summary, rolling_fit, segment_fit, transition_coefficient_wcc, RefitOptions,
    RollingFitEntry, RollingFitSeries,
};
use lvssm_core::changepoint::{bcp, rare_events, BcpParams, BcpResult, SegmentBoundaries};
use lvssm_core::error::Error as CoreError;
use lvssm_core::estimation::{
    fit, fit_pair, prepare_sequences, standard_errors, FitOptions,
};
use lvssm_core::features::{
    assemble_feature_table, bin_gaze, imu_activity, windowed_gte, AoiGrid, FeatureSeries,
    INPUT_COLUMNS, OBSERVATION_COLUMNS,
};
use lvssm_core::model::{build_base_spec, build_two_latent_spec, ModelSpec};
use lvssm_core::synthetic::{generate_session, SyntheticConfig};
use lvssm_core::timeseries::{
    aggregate_seconds, fill_missing_linear, lag_restructure, load_csv, resample_uniform_with_len,
    standardize, write_csv, CsvSchema, SecondAggregate, TimeSeriesTable,
};

use crate::config::RunConfig;

/// CLI failure: configuration problems map to exit code 2, data problems
/// to 3, numerical failures to 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(CoreError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.category() {
                lvssm_core::ErrorCategory::Data => 3,
                lvssm_core::ErrorCategory::Numerical => 4,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", cfg.out_dir.display())))
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

/// Generic deterministic CSV writer for non-table outputs, with the
/// configuration hash as a leading comment.
fn write_rows(
    path: &Path,
    hash: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> CliResult<()> {
    let file = File::create(path).map_err(|e| {
        CliError::Core(CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })
    })?;
    let mut out = BufWriter::new(file);
    let io_err = |e: std::io::Error| {
        CliError::Core(CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })
    };
    writeln!(out, "# config={hash}").map_err(io_err)?;
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for row in rows {
        writeln!(out, "{}", row.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    std::fs::write(path, text + "\n").map_err(|e| {
        CliError::Core(CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}

fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    outputs: &[&str],
    metrics: serde_json::Value,
) -> CliResult<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "outputs": outputs,
        "metrics": metrics,
    });
    write_json(&out_path(cfg, &format!("{command}_manifest.json")), &manifest)
}

fn resolve_spec(cfg: &RunConfig, model: &str) -> CliResult<ModelSpec> {
    let observations: Vec<String> = OBSERVATION_COLUMNS.iter().map(|s| s.to_string()).collect();
    let inputs: Vec<String> = INPUT_COLUMNS.iter().map(|s| s.to_string()).collect();
    match model {
        "two_latent" => Ok(build_two_latent_spec(&observations, &inputs)?),
        "base" => Ok(build_base_spec(&observations, &inputs)?),
        path => {
            let resolved = if Path::new(path).is_absolute() {
                PathBuf::from(path)
            } else {
                cfg.data_dir.join(path)
            };
            let text = std::fs::read_to_string(&resolved).map_err(|e| {
                CliError::Config(format!("cannot read model spec {}: {e}", resolved.display()))
            })?;
            Ok(ModelSpec::from_config_json(&text)?)
        }
    }
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions {
        max_iter: cfg.fit.max_iter,
        tol: cfg.fit.tol,
        refine: cfg.fit.refine,
        seed: cfg.seed,
        starts: cfg.fit.starts.max(1),
        init: None,
        variance_floor: 1e-8,
    }
}

// -------------------------------------------------------------------
// simulate

pub fn run_simulate(cfg: &RunConfig) -> CliResult<()> {
    ensure_out_dir(cfg)?;
    std::fs::create_dir_all(&cfg.data_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", cfg.data_dir.display())))?;
    let synth = SyntheticConfig {
        duration_s: cfg.simulate.duration_s,
        ..Default::default()
    };
    let session = generate_session(&synth, cfg.seed)?;
    let hash = cfg.hash();
    let meta: Vec<(&str, &str)> = vec![("config", hash.as_str())];
    write_csv(&session.hr, cfg.data_dir.join("hr.csv"), &meta)?;
    write_csv(&session.gaze, cfg.data_dir.join("gaze.csv"), &meta)?;
    write_csv(&session.aus, cfg.data_dir.join("aus.csv"), &meta)?;
    write_csv(&session.imu, cfg.data_dir.join("imu.csv"), &meta)?;
    write_csv(&session.objects, cfg.data_dir.join("objects.csv"), &meta)?;
    write_csv(&session.latents, out_path(cfg, "latents.csv"), &meta)?;
    write_manifest(
        cfg,
        "simulate",
        &[
            "hr.csv",
            "gaze.csv",
            "aus.csv",
            "imu.csv",
            "objects.csv",
            "latents.csv",
        ],
        json!({
            "duration_s": cfg.simulate.duration_s,
            "hr_rows": session.hr.len(),
            "gaze_rows": session.gaze.len(),
        }),
    )
}

// -------------------------------------------------------------------
// features

fn raw_table(cfg: &RunConfig, file: &str, schema: &CsvSchema) -> CliResult<TimeSeriesTable> {
    let path = cfg.data_dir.join(file);
    Ok(load_csv(&path, schema)?)
}

/// Fit a column to the common grid length: truncate or pad with missing.
fn to_grid(mut col: Vec<f64>, rows: usize) -> Vec<f64> {
    col.truncate(rows);
    while col.len() < rows {
        col.push(f64::NAN);
    }
    col
}

/// Complete an input column: interpolate gaps, then snap near-binary
/// values back onto {0, 1}.
fn complete_indicator(col: Vec<f64>, rows: usize) -> CliResult<Vec<f64>> {
    let filled = fill_missing_linear(&to_grid(col, rows))?;
    Ok(filled
        .into_iter()
        .map(|v| if v > 0.5 { 1.0 } else { 0.0 })
        .collect())
}

pub fn run_features(cfg: &RunConfig) -> CliResult<()> {
    ensure_out_dir(cfg)?;
    let hr_raw = raw_table(cfg, "hr.csv", &CsvSchema::with_columns("t", &["hr"]))?;
    let gaze_raw = raw_table(
        cfg,
        "gaze.csv",
        &CsvSchema::with_columns("t", &["gaze_x", "gaze_y"]),
    )?;
    let aus_raw = raw_table(
        cfg,
        "aus.csv",
        &CsvSchema::with_columns("t", &["au1", "au2", "au6", "au7", "au12", "au15", "au25"]),
    )?;
    let imu_raw = raw_table(
        cfg,
        "imu.csv",
        &CsvSchema::with_columns(
            "t",
            &["accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z"],
        ),
    )?;
    let objects_raw = raw_table(cfg, "objects.csv", &CsvSchema::with_columns("t", &["road_users"]))?;

    // Common 1 Hz grid over the span covered by every source.
    let t_end = [&hr_raw, &gaze_raw, &aus_raw, &imu_raw, &objects_raw]
        .iter()
        .map(|t| *t.timestamps().last().unwrap())
        .fold(f64::INFINITY, f64::min);
    let rows = (t_end.max(0.0) + 1e-9).floor() as usize + 1;
    if rows < 3 {
        return Err(CliError::Core(CoreError::TooShort { need: 3, got: rows }));
    }

    // Heart rate at 1 Hz, gaps interpolated for the change-point model.
    let hr_1hz = resample_uniform_with_len(&hr_raw, 1.0, rows)?;
    let hr = fill_missing_linear(hr_1hz.column("hr")?)?;
    let bcp_params = BcpParams {
        iterations: cfg.bcp.iterations,
        burnin: cfg.bcp.burnin,
        p0: cfg.bcp.p0,
        w0: cfg.bcp.w0,
    };
    let bcp_result = bcp(&hr, &bcp_params, cfg.seed)?;

    // Gaze transition entropy over sliding windows, then onto the grid.
    let gaze_x = gaze_raw.column("gaze_x")?;
    let gaze_y = gaze_raw.column("gaze_y")?;
    let grid = AoiGrid::from_samples(gaze_x, gaze_y, cfg.gte.grid_rows, cfg.gte.grid_cols)?;
    let aoi = bin_gaze(gaze_x, gaze_y, &grid)?;
    let gaze_ts = gaze_raw.timestamps();
    let dt = {
        let mut diffs: Vec<f64> = gaze_ts.windows(2).map(|w| w[1] - w[0]).collect();
        diffs.sort_by(f64::total_cmp);
        diffs
            .get(diffs.len() / 2)
            .copied()
            .filter(|d| *d > 0.0)
            .ok_or_else(|| CoreError::InvalidArgument("gaze timestamps degenerate".into()))?
    };
    let window = ((cfg.gte.window_s / dt).round() as usize).max(2);
    let step = ((cfg.gte.step_s / dt).round() as usize).max(1);
    let gte_windows = windowed_gte(&aoi, grid.n_cells(), window, step)?;
    let gte_table = {
        let mut ts = Vec::with_capacity(gte_windows.len());
        let mut vals = Vec::with_capacity(gte_windows.len());
        for (end_idx, v) in gte_windows {
            ts.push(gaze_ts[end_idx]);
            vals.push(v.unwrap_or(f64::NAN));
        }
        TimeSeriesTable::new(ts, vec!["gte".into()], vec![vals])?
    };
    let gte = to_grid(
        resample_uniform_with_len(&gte_table, 1.0, rows)?
            .column("gte")?
            .to_vec(),
        rows,
    );

    // Facial action units resampled onto the grid.
    let aus_1hz = resample_uniform_with_len(&aus_raw, 1.0, rows)?;

    // Hand-movement indicator from the wrist IMU.
    let imu_table = imu_activity(
        imu_raw.timestamps(),
        [
            imu_raw.column("accel_x")?,
            imu_raw.column("accel_y")?,
            imu_raw.column("accel_z")?,
        ],
        [
            imu_raw.column("gyro_x")?,
            imu_raw.column("gyro_y")?,
            imu_raw.column("gyro_z")?,
        ],
    )?;
    let hand_activity = complete_indicator(imu_table.column("hand_activity")?.to_vec(), rows)?;

    // Road users averaged per second.
    let (_, road_col) = aggregate_seconds(
        objects_raw.timestamps(),
        objects_raw.column("road_users")?,
        SecondAggregate::Mean,
    )?;
    let road_users = fill_missing_linear(&to_grid(road_col, rows))?;

    let features = assemble_feature_table(FeatureSeries {
        hr: &hr,
        bcp_mean: &bcp_result.posterior_mean,
        bcp_prob: &bcp_result.change_prob,
        au: vec![
            ("au1", aus_1hz.column("au1")?),
            ("au2", aus_1hz.column("au2")?),
            ("au6", aus_1hz.column("au6")?),
            ("au7", aus_1hz.column("au7")?),
            ("au12", aus_1hz.column("au12")?),
            ("au15", aus_1hz.column("au15")?),
            ("au25", aus_1hz.column("au25")?),
        ],
        gte: &gte,
        road_users: &road_users,
        hand_activity: &hand_activity,
    })?;

    let hash = cfg.hash();
    write_csv(
        &features,
        out_path(cfg, "features.csv"),
        &[("config", hash.as_str())],
    )?;
    let bcp_table = TimeSeriesTable::new(
        (0..rows).map(|i| i as f64).collect(),
        vec!["posterior_mean".into(), "change_prob".into()],
        vec![bcp_result.posterior_mean.clone(), bcp_result.change_prob.clone()],
    )
    .map_err(CliError::Core)?;
    write_csv(
        &bcp_table,
        out_path(cfg, "bcp.csv"),
        &[("config", hash.as_str())],
    )?;

    // Column statistics for the provenance sidecar.
    let mut stats = serde_json::Map::new();
    for name in features.names() {
        let col = features.column(name)?;
        let present: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
        let mean = present.iter().sum::<f64>() / present.len().max(1) as f64;
        let sd = if present.len() > 1 {
            (present.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (present.len() as f64 - 1.0))
                .sqrt()
        } else {
            0.0
        };
        stats.insert(
            name.clone(),
            json!({"mean": mean, "sd": sd, "missing": col.len() - present.len()}),
        );
    }
    write_manifest(
        cfg,
        "features",
        &["features.csv", "bcp.csv"],
        json!({"rows": rows, "columns": features.n_columns(), "column_stats": stats}),
    )
}

// -------------------------------------------------------------------
// shared fitting plumbing

struct PreparedData {
    table_std: TimeSeriesTable,
    record: lvssm_core::timeseries::StandardizationRecord,
}

fn load_features(cfg: &RunConfig) -> CliResult<PreparedData> {
    let path = out_path(cfg, "features.csv");
    let mut table = load_csv(&path, &CsvSchema::all("t"))?;
    if table.detect_uniform().is_none() {
        return Err(CliError::Core(CoreError::InvalidArgument(format!(
            "{} is not on a uniform grid",
            path.display()
        ))));
    }
    let columns: Vec<String> = table.names().to_vec();
    let (table_std, record) = standardize(&table, &columns)?;
    Ok(PreparedData { table_std, record })
}

fn standardization_json(record: &lvssm_core::timeseries::StandardizationRecord) -> serde_json::Value {
    let entries: Vec<serde_json::Value> = record
        .entries()
        .iter()
        .map(|(name, mean, sd)| json!({"column": name, "mean": mean, "sd": sd}))
        .collect();
    json!({ "columns": entries })
}

// -------------------------------------------------------------------
// fit

pub fn run_fit(cfg: &RunConfig) -> CliResult<()> {
    ensure_out_dir(cfg)?;
    let prepared = load_features(cfg)?;
    let spec = resolve_spec(cfg, &cfg.model)?;
    let rs = lag_restructure(&prepared.table_std, cfg.stride)?;
    let data = prepare_sequences(&rs, &spec)?;
    let mut result = fit(&spec, &data, &fit_options(cfg))?;
    if result.converged {
        let intervals = standard_errors(&result, &data)?;
        result.apply_intervals(&intervals);
    }
    std::fs::write(out_path(cfg, "fit_report.json"), result.report_json() + "\n").map_err(
        |e| {
            CliError::Core(CoreError::Io {
                path: "fit_report.json".into(),
                source: e,
            })
        },
    )?;
    write_json(
        &out_path(cfg, "standardization.json"),
        &standardization_json(&prepared.record),
    )?;
    write_manifest(
        cfg,
        "fit",
        &["fit_report.json", "standardization.json"],
        json!({
            "model": cfg.model,
            "minus_two_ll": result.minus_two_ll,
            "converged": result.converged,
            "iterations": result.iterations,
            "free_parameters": result.labels.len(),
        }),
    )
}

// -------------------------------------------------------------------
// compare

pub fn run_compare(cfg: &RunConfig) -> CliResult<()> {
    ensure_out_dir(cfg)?;
    let prepared = load_features(cfg)?;
    let base_spec = resolve_spec(cfg, "base")?;
    let alt_spec = resolve_spec(cfg, "two_latent")?;
    let rs = lag_restructure(&prepared.table_std, cfg.stride)?;
    let base_data = prepare_sequences(&rs, &base_spec)?;
    let (base_fit, alt_fit, comparison) = fit_pair(&base_spec, &alt_spec, &base_data, &fit_options(cfg))?;

    std::fs::write(out_path(cfg, "fit_base.json"), base_fit.report_json() + "\n")
        .map_err(|e| CliError::Core(CoreError::Io { path: "fit_base.json".into(), source: e }))?;
    std::fs::write(
        out_path(cfg, "fit_two_latent.json"),
        alt_fit.report_json() + "\n",
    )
    .map_err(|e| CliError::Core(CoreError::Io { path: "fit_two_latent.json".into(), source: e }))?;
    write_json(
        &out_path(cfg, "compare.json"),
        &serde_json::to_value(&comparison).expect("comparison serializes"),
    )?;

    let hash = cfg.hash();
    let mut outputs = vec!["fit_base.json", "fit_two_latent.json", "compare.json"];
    let summary_ok = base_fit.converged && alt_fit.converged;
    if summary_ok {
        let summary = participant_summary(&cfg.participant, &base_fit, &alt_fit)?;
        write_rows(
            &out_path(cfg, "fig4_association.csv"),
            &hash,
            &["participant", "normalized_association", "delta_ll"],
            &[vec![
                summary.participant.clone(),
                fmt_cell(summary.normalized_association),
                fmt_cell(summary.delta_ll),
            ]],
        )?;
        write_rows(
            &out_path(cfg, "fig5_input_effects.csv"),
            &hash,
            &[
                "participant",
                "road_to_stress",
                "road_to_workload",
                "hand_to_stress",
                "hand_to_workload",
            ],
            &[vec![
                summary.participant.clone(),
                fmt_cell(summary.road_to_stress),
                fmt_cell(summary.road_to_workload),
                fmt_cell(summary.hand_to_stress),
                fmt_cell(summary.hand_to_workload),
            ]],
        )?;
        write_rows(
            &out_path(cfg, "fig6_transitions.csv"),
            &hash,
            &["participant", "b1", "b4"],
            &[vec![
                summary.participant.clone(),
                fmt_cell(summary.b1),
                fmt_cell(summary.b4),
            ]],
        )?;
        outputs.extend([
            "fig4_association.csv",
            "fig5_input_effects.csv",
            "fig6_transitions.csv",
        ]);
    }
    write_manifest(
        cfg,
        "compare",
        &outputs,
        json!({
            "base_minus_two_ll": comparison.base_minus_two_ll,
            "alt_minus_two_ll": comparison.alt_minus_two_ll,
            "delta_ll": comparison.delta_ll,
            "preferred": comparison.preferred,
            "both_converged": summary_ok,
        }),
    )
}

// -------------------------------------------------------------------
// rolling

fn refit_options(cfg: &RunConfig) -> RefitOptions {
    RefitOptions {
        stride: cfg.stride,
        fit: fit_options(cfg),
        warm_start: cfg.rolling.warm_start,
    }
}

pub fn run_rolling(cfg: &RunConfig) -> CliResult<()> {
    ensure_out_dir(cfg)?;
    let prepared = load_features(cfg)?;
    let spec = resolve_spec(cfg, &cfg.model)?;
    let series = rolling_fit(
        &prepared.table_std,
        &spec,
        cfg.rolling.window_s,
        cfg.rolling.step_s,
        &refit_options(cfg),
    )?;
    let rolling_table = TimeSeriesTable::new(
        series.entries.iter().map(|e| e.start_s).collect(),
        vec![
            "window_end".into(),
            "b1".into(),
            "b4".into(),
            "q2".into(),
            "minus_two_ll".into(),
            "converged".into(),
        ],
        vec![
            series.entries.iter().map(|e| e.end_s).collect(),
            series.entries.iter().map(|e| e.b1).collect(),
            series.entries.iter().map(|e| e.b4).collect(),
            series.entries.iter().map(|e| e.q2).collect(),
            series.entries.iter().map(|e| e.minus_two_ll).collect(),
            series
                .entries
                .iter()
                .map(|e| if e.converged { 1.0 } else { 0.0 })
                .collect(),
        ],
    )
    .map_err(CliError::Core)?;
    let hash = cfg.hash();
    write_csv(
        &rolling_table,
        out_path(cfg, "rolling.csv"),
        &[("config", hash.as_str())],
    )?;
    let n_converged = series.entries.iter().filter(|e| e.converged).count();
    write_manifest(
        cfg,
        "rolling",
        &["rolling.csv"],
        json!({
            "windows": series.entries.len(),
            "converged_windows": n_converged,
            "window_s": cfg.rolling.window_s,
            "step_s": cfg.rolling.step_s,
        }),
    )
}

// -------------------------------------------------------------------
// segments

pub fn run_segments(cfg: &RunConfig) -> CliResult<()> {
    ensure_out_dir(cfg)?;
    let path = out_path(cfg, "features.csv");
    let mut features = load_csv(&path, &CsvSchema::all("t"))?;
    features.detect_uniform();
    let hr = fill_missing_linear(features.column("hr")?)?;
    let bcp_params = BcpParams {
        iterations: cfg.bcp.iterations,
        burnin: cfg.bcp.burnin,
        p0: cfg.bcp.p0,
        w0: cfg.bcp.w0,
    };
    let bcp_result: BcpResult = bcp(&hr, &bcp_params, cfg.seed)?;
    let boundaries: SegmentBoundaries =
        rare_events(&hr, &bcp_result, cfg.bcp.threshold_k, cfg.bcp.prob_floor)?;

    let prepared = load_features(cfg)?;
    let spec = resolve_spec(cfg, &cfg.model)?;
    let min_len = cfg.segments.min_len_s.max(1.0) as usize;
    let fits = segment_fit(&prepared.table_std, &spec, &boundaries, min_len, &refit_options(cfg))?;

    let hash = cfg.hash();
    let rows: Vec<Vec<String>> = fits
        .iter()
        .map(|s| {
            vec![
                s.start_row.to_string(),
                s.end_row.to_string(),
                fmt_cell(s.fit.estimate("B.b1").unwrap_or(f64::NAN)),
                fmt_cell(s.fit.estimate("B.b4").unwrap_or(f64::NAN)),
                fmt_cell(s.fit.estimate("Q.q2").unwrap_or(f64::NAN)),
                fmt_cell(s.fit.minus_two_ll),
                (s.fit.converged as u8).to_string(),
            ]
        })
        .collect();
    write_rows(
        &out_path(cfg, "fig7_segments.csv"),
        &hash,
        &[
            "segment_start_s",
            "segment_end_s",
            "b1",
            "b4",
            "q2",
            "minus_two_ll",
            "converged",
        ],
        &rows,
    )?;
    write_manifest(
        cfg,
        "segments",
        &["fig7_segments.csv"],
        json!({
            "boundaries": boundaries.indices,
            "threshold_k": cfg.bcp.threshold_k,
            "prob_floor": cfg.bcp.prob_floor,
            "segments": fits.len(),
        }),
    )
}

// -------------------------------------------------------------------
// wcc

pub fn run_wcc(cfg: &RunConfig) -> CliResult<()> {
    ensure_out_dir(cfg)?;
    let path = out_path(cfg, "rolling.csv");
    let rolling_table = load_csv(&path, &CsvSchema::all("t"))?;
    let entries: Vec<RollingFitEntry> = (0..rolling_table.len())
        .map(|i| RollingFitEntry {
            start_s: rolling_table.timestamps()[i],
            end_s: rolling_table.column("window_end").unwrap()[i],
            b1: rolling_table.column("b1").unwrap()[i],
            b4: rolling_table.column("b4").unwrap()[i],
            q2: rolling_table.column("q2").unwrap()[i],
            minus_two_ll: rolling_table.column("minus_two_ll").unwrap()[i],
            converged: rolling_table.column("converged").unwrap()[i] > 0.5,
        })
        .collect();
    let series = RollingFitSeries {
        window_s: cfg.rolling.window_s,
        step_s: cfg.rolling.step_s,
        entries,
    };
    let (matrix, peaks, lag_zero) = match transition_coefficient_wcc(
        &series,
        cfg.wcc.window,
        cfg.wcc.window_inc,
        cfg.wcc.max_lag,
        cfg.wcc.lag_inc,
    ) {
        Ok(v) => v,
        Err(e) => return Err(CliError::Core(e)),
    };

    let hash = cfg.hash();
    let start_time = |idx: usize| series.entries[idx].start_s;
    let mut wcc_rows = Vec::new();
    for (row, &w_start) in matrix.window_starts.iter().enumerate() {
        for (col, &lag) in matrix.lags.iter().enumerate() {
            wcc_rows.push(vec![
                fmt_cell(start_time(w_start)),
                lag.to_string(),
                fmt_cell(matrix.value(row, col)),
            ]);
        }
    }
    write_rows(
        &out_path(cfg, "fig8_wcc.csv"),
        &hash,
        &["window_start_s", "lag", "r"],
        &wcc_rows,
    )?;
    let peak_rows: Vec<Vec<String>> = peaks
        .window_starts
        .iter()
        .zip(&peaks.peaks)
        .map(|(&w_start, p)| match p {
            Some(p) => vec![
                fmt_cell(start_time(w_start)),
                p.lag.to_string(),
                fmt_cell(p.r),
                (p.interior as u8).to_string(),
            ],
            None => vec![fmt_cell(start_time(w_start)), String::new(), String::new(), String::new()],
        })
        .collect();
    write_rows(
        &out_path(cfg, "fig8_peaks.csv"),
        &hash,
        &["window_start_s", "peak_lag", "peak_r", "interior"],
        &peak_rows,
    )?;
    let cc_rows: Vec<Vec<String>> = lag_zero
        .iter()
        .map(|(idx, r)| vec![fmt_cell(start_time(*idx)), fmt_cell(*r)])
        .collect();
    write_rows(
        &out_path(cfg, "fig8_crosscorr.csv"),
        &hash,
        &["window_start_s", "r0"],
        &cc_rows,
    )?;
    write_manifest(
        cfg,
        "wcc",
        &["fig8_wcc.csv", "fig8_peaks.csv", "fig8_crosscorr.csv"],
        json!({
            "wcc_windows": matrix.n_windows(),
            "lags": matrix.n_lags(),
        }),
    )
}
