use std::path::{Path, PathBuf};

use anglesizer_core::analytics::{
    daily_report, grouped_to_csv, grouped_to_text, mean_relative_error, participants, GroupBy,
};
use anglesizer_core::engine::{run_measurement, EngineError, Measurement};
use anglesizer_core::model::{ConfigFile, FeedbackKind, GestureKind, Unit};
use anglesizer_core::oracle::{
    default_pose_frames, gen_palm_trace_with_tilt, gen_pose_trace, gen_rotation_trace,
    gen_touch_trace, PoseTraceParams, HOLD_FRAMES,
};
use anglesizer_core::teaching::{parse_tasks, run_assessment, AssessmentRecord};
use anglesizer_core::trace_io::{
    load_trace, read_session_log, save_trace, LogError, LogRecord, SessionLog, TraceDocument, TraceError,
};
use anglesizer_service::ServerConfig;

use crate::{AssessArgs, Failure, GenTraceArgs, ReplayArgs, ReportArgs, ServeArgs};

const LOG_FILE: &str = "anglesizer-log.jsonl";
const PALM_HOLD_FRAMES: usize = HOLD_FRAMES + 10;

macro_rules! outln {
    ($out:expr, $($arg:tt)*) => {{
        use std::fmt::Write as _;
        let _ = writeln!($out, $($arg)*);
    }};
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write as _;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush());
}

fn default_log_path() -> PathBuf {
    match std::env::var_os("ANGLESIZER_LOG_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(LOG_FILE),
        _ => PathBuf::from(LOG_FILE),
    }
}

fn env_err(what: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> Failure {
    move |e| Failure::Environment(format!("{what}: {e}"))
}

fn read_trace(path: &Path) -> Result<TraceDocument, Failure> {
    load_trace(path).map_err(|e| match e {
        TraceError::Io(io) => Failure::Environment(format!("cannot read {}: {io}", path.display())),
        other => Failure::Usage(format!("{}: {other}", path.display())),
    })
}

pub fn gen_trace(args: &GenTraceArgs, config: &ConfigFile) -> Result<(), Failure> {
    let g = args.gesture;
    let value = match (g.unit(), args.value_cm, args.value_deg) {
        (Unit::Centimeters, Some(v), None) | (Unit::Degrees, None, Some(v)) => v,
        (Unit::Centimeters, ..) => return Err(Failure::Usage(format!("{g} takes --value-cm"))),
        (Unit::Degrees, ..) => return Err(Failure::Usage(format!("{g} takes --value-deg"))),
    };
    if args.noise != 0.0 && matches!(g, GestureKind::TwoHands | GestureKind::BodyRotation) {
        return Err(Failure::Usage(format!("--noise is not supported for {g}")));
    }
    let profile = &config.profile;
    let doc = match g {
        GestureKind::OneFinger | GestureKind::TwoFingers => gen_touch_trace(
            value,
            profile,
            g == GestureKind::TwoFingers,
            args.noise,
            args.seed,
        ),
        GestureKind::OneHand => {
            let params = PoseTraceParams {
                distance_cm: value,
                n_frames: args.frames.unwrap_or_else(|| default_pose_frames(value)),
                jitter_m: args.noise,
                outlier_count: args.outliers,
                outlier_mag_m: args.outlier_mag,
                seed: args.seed,
                three_axis: args.three_axis,
            };
            gen_pose_trace(&params, profile)
        }
        GestureKind::TwoHands => {
            gen_palm_trace_with_tilt(value, profile, PALM_HOLD_FRAMES, args.tilt, args.seed)
        }
        GestureKind::BodyRotation => {
            gen_rotation_trace(value, args.start_yaw, args.rate, args.seed, profile)
        }
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}-{value}.trace.jsonl", g.label())));
    save_trace(&doc, &out).map_err(env_err(format!("cannot write {}", out.display())))?;
    println!("wrote {} ({} frames)", out.display(), doc.frames.len());
    if let Some(gt) = &doc.ground_truth {
        println!(
            "ground truth: {} ({})",
            gt.gesture.format_value(gt.value),
            gt.gesture
        );
    }
    println!("seed: {}", args.seed);
    Ok(())
}

fn engine_failure(e: &EngineError) -> &'static str {
    match e {
        EngineError::NoActivation(_) => "NoActivation",
        EngineError::NeverStable(_) => "NeverStable",
        _ => "EngineError",
    }
}

fn describe(m: &Measurement) -> String {
    let r = &m.result;
    let mut out = String::new();
    outln!(out, "gesture: {}", r.gesture);
    outln!(out, "value: {}", r.gesture.format_value(r.value));
    outln!(out, "raw: {:.4}", r.raw_value);
    if let Some(signed) = r.signed_rotation_deg {
        outln!(out, "signed rotation: {signed:.1} deg");
    }
    outln!(
        out,
        "time: {} ms to {} ms, {} frames",
        r.started_ms,
        r.ended_ms,
        r.frames_processed
    );
    let mut codes = Vec::new();
    for w in &r.warnings {
        if !codes.contains(&w.code) {
            codes.push(w.code);
        }
    }
    if codes.is_empty() {
        outln!(out, "warnings: none");
    } else {
        outln!(out, "warnings:");
        for code in codes {
            outln!(out, "  {code:?}: {}", r.warning_count(code));
        }
    }
    outln!(out, "feedback:");
    for e in &m.events {
        let what = match &e.kind {
            FeedbackKind::BeepCorrect => "beep correct".to_string(),
            FeedbackKind::BeepError => "beep error".to_string(),
            FeedbackKind::Speech { text } => format!("speech {text:?}"),
            FeedbackKind::Vibration {
                amplitude,
                duration_ms,
            } => format!("vibration {amplitude:.2} for {duration_ms} ms"),
        };
        outln!(out, "  {:>7} ms  {what}", e.t_ms);
    }
    out
}

pub fn replay(args: &ReplayArgs, config: &ConfigFile) -> Result<(), Failure> {
    let doc = read_trace(&args.trace)?;
    let gesture = args
        .gesture
        .or_else(|| doc.ground_truth.as_ref().map(|gt| gt.gesture))
        .ok_or_else(|| Failure::Usage("trace header names no gesture; pass --gesture".into()))?;
    match run_measurement(&doc, gesture, &config.engine) {
        Ok(m) if args.json => {
            emit(&(serde_json::to_string_pretty(&m).expect("measurement serializes") + "\n"));
            Ok(())
        }
        Ok(m) => {
            emit(&describe(&m));
            Ok(())
        }
        Err(e) => Err(Failure::Measurement(format!("{}: {e}", engine_failure(&e)))),
    }
}

fn trace_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries =
        std::fs::read_dir(dir).map_err(env_err(format!("cannot list {}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(env_err(dir.display()))?.path();
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(".trace.jsonl"))
        {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn assess(args: &AssessArgs, config: &ConfigFile) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.tasks)
        .map_err(env_err(format!("cannot read {}", args.tasks.display())))?;
    let tasks =
        parse_tasks(&text).map_err(|e| Failure::Usage(format!("{}: {e}", args.tasks.display())))?;
    let traces = trace_files(&args.trace_dir)?;
    if let Some((i, task)) = tasks.iter().enumerate().nth(traces.len()) {
        return Err(Failure::Usage(format!(
            "no trace for task {} ({} {})",
            i + 1,
            task.gesture,
            task.gesture.format_value(task.value)
        )));
    }
    if traces.len() > tasks.len() {
        return Err(Failure::Usage(format!(
            "{} tasks but {} traces",
            tasks.len(),
            traces.len()
        )));
    }

    let mut results = Vec::with_capacity(tasks.len());
    for (i, (task, path)) in tasks.iter().zip(&traces).enumerate() {
        let doc = read_trace(path)?;
        let m = run_measurement(&doc, task.gesture, &config.engine).map_err(|e| {
            Failure::Measurement(format!(
                "task {} ({}): {}: {e}",
                i + 1,
                path.display(),
                engine_failure(&e)
            ))
        })?;
        results.push(m.result);
    }
    let records = run_assessment(&tasks, &results, &args.participant, args.day)
        .map_err(|e| Failure::Usage(e.to_string()))?;

    let log_path = args.log.clone().unwrap_or_else(default_log_path);
    let mut log = SessionLog::open(&log_path)
        .map_err(|e| Failure::Environment(format!("{}: {e}", log_path.display())))?;
    for r in &records {
        log.append(&LogRecord::Assessment(r.clone()))
            .map_err(|e| Failure::Environment(format!("{}: {e}", log_path.display())))?;
    }

    let mut out = String::new();
    for (task, r) in tasks.iter().zip(&records) {
        outln!(
            out,
            "{:>13} task {:>9} result {:>9} relative error {:.3}",
            task.gesture.label(),
            task.gesture.format_value(task.value),
            task.gesture.format_value(r.result),
            r.relative_error
        );
    }
    if !records.is_empty() {
        for s in mean_relative_error(&records, GroupBy::Gesture).expect("non-empty") {
            if let anglesizer_core::analytics::GroupKey::Gesture(g) = s.key {
                outln!(
                    out,
                    "{:>13} mean relative error {:.3} (n={})",
                    g.label(),
                    s.mean,
                    s.n
                );
            }
        }
        let overall = &mean_relative_error(&records, GroupBy::None).expect("non-empty")[0];
        outln!(out, "overall mean relative error: {:.3}", overall.mean);
    }
    outln!(
        out,
        "appended {} records to {}",
        records.len(),
        log_path.display()
    );
    emit(&out);
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    let path = args.log.clone().unwrap_or_else(default_log_path);
    let log = read_session_log(&path).map_err(|e| match e {
        LogError::IoFailure(_) => Failure::Environment(format!("{}: {e}", path.display())),
        LogError::Malformed { .. } => Failure::Usage(format!("{}: {e}", path.display())),
    })?;
    let records: Vec<AssessmentRecord> = log
        .into_iter()
        .filter_map(|r| match r {
            LogRecord::Assessment(a) => Some(a),
            LogRecord::Feedback(_) => None,
        })
        .filter(|r| {
            args.participant
                .as_ref()
                .is_none_or(|p| &r.participant == p)
        })
        .collect();
    if records.is_empty() {
        println!("no assessment records in {}", path.display());
        return Ok(());
    }
    let mut out = String::new();
    for (i, p) in participants(&records).iter().enumerate() {
        let mine: Vec<AssessmentRecord> = records
            .iter()
            .filter(|r| &r.participant == p)
            .cloned()
            .collect();
        match args.group_by {
            Some(by) => {
                let stats = mean_relative_error(&mine, by.into()).expect("non-empty");
                if args.csv {
                    out.push_str(&grouped_to_csv(p, &stats, i == 0));
                } else {
                    out.push_str(&grouped_to_text(p, &stats));
                }
            }
            None => {
                let report = daily_report(&mine, p);
                if args.csv {
                    let csv = report.to_csv();
                    let body = if i == 0 {
                        csv.as_str()
                    } else {
                        csv.split_once('\n').map_or("", |(_, rest)| rest)
                    };
                    out.push_str(body);
                } else {
                    out.push_str(&report.to_text());
                }
            }
        }
    }
    emit(&out);
    Ok(())
}

pub fn serve(args: &ServeArgs, config: &ConfigFile) -> Result<(), Failure> {
    let addr = format!("{}:{}", args.host, args.port);
    let listener =
        std::net::TcpListener::bind(&addr).map_err(env_err(format!("cannot bind {addr}")))?;
    listener
        .set_nonblocking(true)
        .map_err(env_err("socket setup"))?;
    let log_path = args.log.clone().unwrap_or_else(default_log_path);
    let server_config = ServerConfig {
        engine: config.engine.clone(),
        profile: config.profile.clone(),
        static_dir: args.static_dir.clone(),
        log_path: Some(log_path.clone()),
    };
    let runtime = tokio::runtime::Runtime::new().map_err(env_err("cannot start runtime"))?;
    runtime.block_on(async move {
        let listener =
            tokio::net::TcpListener::from_std(listener).map_err(env_err("socket setup"))?;
        let local = listener.local_addr().map_err(env_err("socket setup"))?;
        println!("listening on http://{local} (log {})", log_path.display());
        anglesizer_service::serve(listener, &server_config, shutdown_signal())
            .await
            .map_err(|e| Failure::Environment(e.to_string()))?;
        println!("shut down");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
