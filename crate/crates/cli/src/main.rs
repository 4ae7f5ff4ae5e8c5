use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modcast::io::SceneFile;
use modcast::pipeline::{self, ForecasterKind, PipelineConfig};
use modcast::render::{render_svg, RenderConfig};
use modcast::sim::NoiseConfig;
use modcast::supervision::{Assignment, DistanceMode};
use modcast::Error;

/// Detection ensembling, tracking, forecasting and end-to-end evaluation on
/// seeded synthetic scenes.
#[derive(Parser, Debug)]
#[command(name = "modcast", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scene file to read.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Destination file; stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed for scene generation and detection noise (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file overriding the defaults; flags override the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a scene with ground truth and corrupted detections.
    Simulate {
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Merge overlapping detections from several models.
    Ensemble {
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Track the scene's detections.
    Track {
        #[command(flatten)]
        track: TrackFlags,
    },
    /// Pair predicted pasts with ground-truth futures.
    Match {
        #[arg(long, value_enum)]
        assignment: Option<AssignmentArg>,
        #[arg(long, value_enum)]
        distance: Option<DistanceArg>,
        #[arg(long)]
        gate: Option<f64>,
    },
    /// Forecast every track at the inference frames.
    Forecast {
        #[command(flatten)]
        forecast: ForecastFlags,
    },
    /// Score a scene's tracks and forecasts against its ground truth.
    Evaluate {
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Simulate, ensemble, track, forecast and evaluate in one go.
    Pipeline {
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        track: TrackFlags,
        #[command(flatten)]
        forecast: ForecastFlags,
        #[command(flatten)]
        eval: EvalFlags,
        /// Also write the intermediate scene file here.
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
    /// Draw one frame as an SVG bird's-eye view.
    Render {
        /// Defaults to the first inference frame.
        #[arg(long)]
        frame: Option<i64>,
        #[arg(long)]
        extent: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct SimFlags {
    #[arg(long)]
    n_agents: Option<usize>,
    /// Independent detectors whose outputs are pooled.
    #[arg(long)]
    n_models: Option<u32>,
    /// Probability that a detector misses an agent in a frame.
    #[arg(long)]
    p_fn: Option<f64>,
    /// Expected clutter detections per frame and detector.
    #[arg(long)]
    fp_rate: Option<f64>,
    /// Center noise, metres.
    #[arg(long)]
    sigma_xy: Option<f64>,
    /// Perfect detections.
    #[arg(long)]
    noiseless: bool,
}

#[derive(Args, Debug)]
struct TrackFlags {
    /// Minimum 3D IoU for associating a detection with a track.
    #[arg(long)]
    iou_gate: Option<f64>,
    /// Frames a track may go unmatched before it is terminated.
    #[arg(long)]
    max_inactive: Option<u32>,
}

#[derive(Args, Debug)]
struct ForecastFlags {
    #[arg(long, value_enum)]
    forecaster: Option<ForecasterArg>,
    /// Keep the raw forecasts instead of injecting a static mode.
    #[arg(long)]
    no_post_process: bool,
    #[arg(long)]
    k_modes: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalFlags {
    /// Score raw tracker output instead of gap-interpolated tracks.
    #[arg(long)]
    no_interpolate: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AssignmentArg {
    OneOne,
    ManyOne,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DistanceArg {
    T0,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ForecasterArg {
    Cv,
    Oracle,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

impl SimFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.noiseless {
            cfg.noise = NoiseConfig::noiseless();
        }
        set(&mut cfg.sim.n_agents, self.n_agents);
        set(&mut cfg.n_models, self.n_models);
        set(&mut cfg.noise.p_fn, self.p_fn);
        set(&mut cfg.noise.fp_rate, self.fp_rate);
        set(&mut cfg.noise.sigma_xy, self.sigma_xy);
    }
}

impl TrackFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.tracker.iou_gate, self.iou_gate);
        set(&mut cfg.tracker.max_inactive_frames, self.max_inactive);
    }
}

impl ForecastFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(f) = self.forecaster {
            cfg.forecaster = match f {
                ForecasterArg::Cv => ForecasterKind::ConstantVelocity,
                ForecasterArg::Oracle => ForecasterKind::Oracle,
            };
        }
        if self.no_post_process {
            cfg.post_process = false;
        }
        set(&mut cfg.forecast.k_modes, self.k_modes);
    }
}

impl EvalFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.no_interpolate {
            cfg.interpolate = false;
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_config(path: Option<&Path>) -> Outcome<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

fn read_scene(path: Option<&Path>) -> Outcome<SceneFile> {
    let path = path.ok_or_else(|| Failure::Usage("--input is required for this subcommand".into()))?;
    let file = File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    SceneFile::read(BufReader::new(file)).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Outcome<()> {
    let res = match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    res.map_err(|e| Failure::Data(format!("write failed: {e}")))
}

fn scene_text(file: &SceneFile) -> Outcome<String> {
    Ok(file.to_text()?)
}

fn report_text(report: &pipeline::MetricReport) -> Outcome<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Failure::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn execute(cli: Cli) -> Outcome<()> {
    let common = &cli.common;
    let mut cfg = load_config(common.config.as_deref())?;
    let input = common.input.as_deref();
    let output = common.output.as_deref();
    let seed = common.seed.unwrap_or(0);

    match &cli.command {
        Command::Simulate { sim } => {
            sim.apply(&mut cfg);
            let (scene, dets) = pipeline::simulate(&cfg, seed)?;
            let mut file = SceneFile::from_scene(&scene);
            file.set_detections(&dets);
            write_out(output, &scene_text(&file)?)
        }
        Command::Ensemble { radius } => {
            set(&mut cfg.ensemble.radius_r, *radius);
            cfg.ensemble.validate()?;
            let mut file = read_scene(input)?;
            let merged = pipeline::ensemble_frames(&file.detections_by_frame(), &cfg.ensemble)?;
            file.set_detections(&merged);
            write_out(output, &scene_text(&file)?)
        }
        Command::Track { track } => {
            track.apply(&mut cfg);
            cfg.tracker.validate()?;
            let mut file = read_scene(input)?;
            let tracks = pipeline::run_tracker(&file.detections_by_frame(), &cfg.tracker)?;
            file.set_tracks(&tracks);
            write_out(output, &scene_text(&file)?)
        }
        Command::Match {
            assignment,
            distance,
            gate,
        } => {
            if let Some(a) = assignment {
                cfg.matcher.assignment = match a {
                    AssignmentArg::OneOne => Assignment::OneToOne,
                    AssignmentArg::ManyOne => Assignment::ManyToOne,
                };
            }
            if let Some(d) = distance {
                cfg.matcher.distance_mode = match d {
                    DistanceArg::T0 => DistanceMode::AtT0,
                    DistanceArg::All => DistanceMode::AllPast,
                };
            }
            set(&mut cfg.matcher.gate, *gate);
            cfg.validate()?;
            let mut file = read_scene(input)?;
            let tracks = file.tracks(&cfg.tracker.kalman)?;
            file.pair = pipeline::training_pairs(&tracks, &file.gt_agents(), file.header.frames, &cfg);
            write_out(output, &scene_text(&file)?)
        }
        Command::Forecast { forecast } => {
            forecast.apply(&mut cfg);
            cfg.validate()?;
            let mut file = read_scene(input)?;
            let tracks = file.tracks(&cfg.tracker.kalman)?;
            file.forecast = pipeline::forecast_tracks(&tracks, &file.gt_agents(), file.header.frames, &cfg)?;
            write_out(output, &scene_text(&file)?)
        }
        Command::Evaluate { eval } => {
            eval.apply(&mut cfg);
            let file = read_scene(input)?;
            let report = pipeline::evaluate(&file, &cfg, common.seed)?;
            write_out(output, &report_text(&report)?)
        }
        Command::Pipeline {
            sim,
            track,
            forecast,
            eval,
            artifacts,
        } => {
            sim.apply(&mut cfg);
            track.apply(&mut cfg);
            forecast.apply(&mut cfg);
            eval.apply(&mut cfg);
            let (file, report) = pipeline::run(&cfg, seed)?;
            if let Some(path) = artifacts {
                write_out(Some(path), &scene_text(&file)?)?;
            }
            write_out(output, &report_text(&report)?)
        }
        Command::Render { frame, extent } => {
            let file = read_scene(input)?;
            let frame = frame
                .or_else(|| cfg.inference_frames(file.header.frames).first().copied())
                .unwrap_or(0);
            let mut rc = RenderConfig::default();
            set(&mut rc.extent_m, *extent);
            if rc.extent_m.is_nan() || rc.extent_m <= 0.0 {
                return Err(Failure::Usage("--extent must be positive".into()));
            }
            write_out(output, &render_svg(&file, frame, &cfg.time, rc)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
