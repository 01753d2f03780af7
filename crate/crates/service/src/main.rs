use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use beamrecall::app::{App, IngestOutcome, QueryRequest};
use beamrecall::config::ServiceConfig;
use beamrecall::error::{ErrorBody, ServiceError};
use beamrecall::session::{pattern_csv, IngestPlan, StoredBeamformer, MANIFEST_FILE};
use beamrecall::{api, session};
use beamrecall_core::array::{separate_streams, StreamPlan};
use beamrecall_core::audio::{write_wav, BitDepth, MultichannelAudio};
use beamrecall_core::scene::{evaluate_streams, simulate_scene, SceneDocument};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

/// Directional conversation recall for circular microphone arrays.
#[derive(Debug, Parser)]
#[command(name = "beamrecall", version)]
struct Cli {
    /// TOML configuration file; defaults plus environment overrides when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Machine-readable JSON on stdout (and JSON errors on stderr).
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Beamform, transcribe and index a recording into a new session.
    Ingest {
        #[arg(long)]
        wav: PathBuf,
        #[command(flatten)]
        streams: StreamArgs,
        /// Pick look directions from SRP-PHAT peaks instead of --stream.
        #[arg(long, conflicts_with = "stream")]
        auto_doa: bool,
        /// Number of peaks to keep with --auto-doa.
        #[arg(long, requires = "auto_doa")]
        sources: Option<usize>,
    },
    /// Estimate directions of arrival.
    Doa {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long, default_value_t = session::DEFAULT_NUM_SOURCES)]
        sources: usize,
    },
    /// Write one beamformed mono WAV per look direction.
    Beamform {
        #[arg(long)]
        wav: PathBuf,
        #[command(flatten)]
        streams: StreamArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Beam pattern |wᴴd(θ)| at one frequency, as CSV.
    Beampattern {
        /// Session id or directory.
        #[arg(long, conflicts_with = "wav")]
        session: Option<String>,
        #[arg(long, requires = "stream")]
        wav: Option<PathBuf>,
        #[command(flatten)]
        streams: StreamArgs,
        #[arg(long)]
        freq: f64,
        #[arg(long)]
        direction: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
    },
    /// Render a scene document to a multichannel WAV.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write each source's clean reference here.
        #[arg(long)]
        references_dir: Option<PathBuf>,
    },
    /// Simulate a scene, beamform toward its sources and report STOI / SI-SDR.
    Evaluate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Ask what was missed; prints the result as JSON.
    Query {
        /// Session id or directory.
        #[arg(long)]
        session: String,
        #[arg(long = "q")]
        query: String,
        /// Recall config override, e.g. --set window_k=1.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Debug, Args)]
struct StreamArgs {
    /// Look direction as LABEL=AZIMUTH_DEG; repeatable.
    #[arg(long = "stream", value_name = "LABEL=DEG", value_parser = parse_stream)]
    stream: Vec<StreamPlan>,
}

fn parse_stream(s: &str) -> std::result::Result<StreamPlan, String> {
    let (label, deg) = s.split_once('=').ok_or("expected LABEL=AZIMUTH_DEG")?;
    let deg: f64 = deg.trim().parse().map_err(|_| format!("{deg:?} is not a number"))?;
    Ok(StreamPlan::new(label.trim(), deg))
}

fn parse_override(s: &str) -> Result<(String, Value), ServiceError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ServiceError::BadRequest(format!("--set {s:?}: expected KEY=VALUE")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn read_input(path: &Path) -> Result<Vec<u8>, ServiceError> {
    std::fs::read(path).map_err(|e| ServiceError::BadRequest(format!("cannot read {}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<ServiceConfig> {
    Ok(match &cli.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::from_env()?,
    })
}

/// Accepts a session id under the configured root, or a session directory.
fn locate_session(config: &mut ServiceConfig, session: &str) -> String {
    let path = Path::new(session);
    if path.join(MANIFEST_FILE).is_file() {
        if let (Some(parent), Some(name)) = (path.parent(), path.file_name().and_then(|n| n.to_str())) {
            config.sessions_root = if parent.as_os_str().is_empty() {
                PathBuf::from(".")
            } else {
                parent.to_path_buf()
            };
            return name.to_string();
        }
    }
    session.to_string()
}

fn emit(json: bool, value: &impl serde::Serialize, text: impl FnOnce() -> String) -> Result<()> {
    let mut out = std::io::stdout().lock();
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    } else {
        write!(out, "{}", text())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Ingest {
            ref wav,
            ref streams,
            auto_doa,
            sources,
        } => {
            let plan = if auto_doa {
                IngestPlan::auto(sources.unwrap_or(session::DEFAULT_NUM_SOURCES))
            } else {
                IngestPlan::explicit(streams.stream.clone())
            };
            plan.validate()?;
            let app = App::new(config)?;
            let outcome: IngestOutcome = app.ingest(&read_input(wav)?, &plan)?;
            emit(cli.json, &outcome, || format!("{}\n", outcome.session_id))
        }
        Command::Doa { ref wav, sources } => {
            let app = App::new(config)?;
            let audio = app.decode(&read_input(wav)?)?;
            let estimate = app.estimate_doa(&audio, sources)?;
            emit(cli.json, &estimate, || {
                estimate
                    .peaks
                    .iter()
                    .map(|p| format!("{:.1}\t{:.4}\n", p.azimuth_deg, p.score))
                    .collect()
            })
        }
        Command::Beamform {
            ref wav,
            ref streams,
            ref out_dir,
        } => {
            let app = App::new(config)?;
            let audio = app.decode(&read_input(wav)?)?;
            let separated = app.beamform(&audio, &streams.stream)?;
            std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let mut written = Vec::new();
            for s in &separated {
                let path = out_dir.join(format!("{}.wav", s.stream.label));
                write_wav(&s.stream.to_audio(), &path, BitDepth::Float32).map_err(ServiceError::Audio)?;
                written.push(path.display().to_string());
            }
            emit(cli.json, &written, || written.iter().map(|p| format!("{p}\n")).collect())
        }
        Command::Beampattern {
            ref session,
            ref wav,
            ref streams,
            freq,
            ref direction,
            resolution,
        } => {
            let csv = match (session, wav) {
                (Some(s), _) => {
                    let id = locate_session(&mut config, s);
                    App::new(config)?.open(&id)?.beampattern_csv(freq, direction.as_deref(), resolution)?
                }
                (None, Some(wav)) => {
                    let app = App::new(config)?;
                    let audio = app.decode(&read_input(wav)?)?;
                    let mut beams: Vec<StoredBeamformer> = app
                        .beamform(&audio, &streams.stream)?
                        .into_iter()
                        .map(|s| StoredBeamformer {
                            label: s.stream.label,
                            weights: s.weights,
                        })
                        .collect();
                    if let Some(d) = direction {
                        beams.retain(|b| &b.label == d);
                        if beams.is_empty() {
                            return Err(ServiceError::UnknownDirection(d.clone()).into());
                        }
                    }
                    let c = app.config.separation.speed_of_sound;
                    pattern_csv(&beams, &app.config.geometry(), freq, resolution, c)?
                }
                (None, None) => return Err(ServiceError::BadRequest("give --session or --wav".into()).into()),
            };
            print!("{csv}");
            Ok(())
        }
        Command::Simulate {
            ref spec,
            ref out,
            ref references_dir,
        } => {
            let (doc, scene) = simulate(spec)?;
            write_wav(&scene.mixture, out, BitDepth::Float32).map_err(ServiceError::Audio)?;
            let mut written = vec![out.display().to_string()];
            if let Some(dir) = references_dir {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                for (label, reference) in doc.labels().iter().zip(&scene.references) {
                    let path = dir.join(format!("{label}.wav"));
                    let mono = MultichannelAudio::mono(reference.clone(), scene.mixture.sample_rate_hz())
                        .map_err(ServiceError::Audio)?;
                    write_wav(&mono, &path, BitDepth::Float32).map_err(ServiceError::Audio)?;
                    written.push(path.display().to_string());
                }
            }
            emit(cli.json, &written, || written.iter().map(|p| format!("{p}\n")).collect())
        }
        Command::Evaluate { ref spec } => {
            let (doc, scene) = simulate(spec)?;
            let geometry = beamrecall_core::array::ArrayGeometry::preset(&doc.geometry)
                .ok_or_else(|| ServiceError::BadRequest(format!("unknown geometry {:?}", doc.geometry)))?;
            let mut separation = config.separation.clone();
            separation.speed_of_sound = doc.speed_of_sound;
            let streams = separate_streams(&scene.mixture, &geometry, &doc.plan(), &separation)
                .map_err(|e| ServiceError::ingest(beamrecall::error::IngestStage::Beamform, e))?;
            let report = evaluate_streams(&scene, &streams).map_err(ServiceError::Scene)?;
            emit(cli.json, &report, || {
                let mut t = format!("before = mic {}\nlabel\tazimuth\tstoi_before\tstoi_after\tsisdr_before_db\tsisdr_after_db\n", report.before_channel);
                for s in &report.streams {
                    t.push_str(&format!(
                        "{}\t{:.1}\t{:.3}\t{:.3}\t{:.2}\t{:.2}\n",
                        s.label, s.azimuth_deg, s.stoi_before, s.stoi_after, s.si_sdr_before_db, s.si_sdr_after_db
                    ));
                }
                t
            })
        }
        Command::Query {
            ref session,
            ref query,
            ref overrides,
        } => {
            let id = locate_session(&mut config, session);
            let mut request = QueryRequest::new(query.clone());
            for o in overrides {
                let (k, v) = parse_override(o)?;
                request.config.insert(k, v);
            }
            let result = App::new(config)?.query(&id, &request)?;
            println!("{}", result.to_json_pretty());
            Ok(())
        }
        Command::Serve { ref listen } => {
            if let Some(addr) = listen {
                config.listen = addr.clone();
                config.validate()?;
            }
            serve(config)
        }
    }
}

fn simulate(spec: &Path) -> Result<(SceneDocument, beamrecall_core::scene::SimulatedScene)> {
    let text = std::fs::read_to_string(spec)
        .map_err(|e| ServiceError::BadRequest(format!("cannot read {}: {e}", spec.display())))?;
    let doc = SceneDocument::from_json(&text).map_err(ServiceError::Scene)?;
    let base = spec.parent().unwrap_or(Path::new("."));
    let resolved = doc.resolve(base).map_err(ServiceError::Scene)?;
    let scene = simulate_scene(&resolved).map_err(ServiceError::Scene)?;
    Ok((doc, scene))
}

fn serve(config: ServiceConfig) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the async runtime")?;
    runtime.block_on(async move {
        let listen = config.listen.clone();
        let app = App::shared(config)?;
        let listener = api::bind(&listen).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        api::serve(app, listener, api::shutdown_signal()).await?;
        Ok(())
    })
}

fn report(err: &anyhow::Error, json: bool) -> ExitCode {
    let service = err.chain().find_map(|e| e.downcast_ref::<ServiceError>());
    let body = match service {
        Some(e) => e.body(),
        None => ErrorBody {
            stage: "internal".into(),
            code: "internal".into(),
            message: format!("{err:#}"),
        },
    };
    if json {
        eprintln!("{}", serde_json::to_string(&body).unwrap_or_default());
    } else {
        eprintln!("error [{}/{}]: {}", body.stage, body.code, body.message);
    }
    if service.is_some_and(ServiceError::is_user_error) {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let default_level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .init();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e, json),
    }
}
