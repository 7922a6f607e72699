//! Command-line front end.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use vsrlab::align::{patch_align, warp_bilinear, warp_nearest, AlignmentMode};
use vsrlab::analytics::{
    binned_error_difference, default_bin_edges, flow_magnitude, movement_histogram, total_variation, MotionHistogram,
};
use vsrlab::frame_io::{load_checkpoint, read_flo, read_pnm, save_weights, write_flo, write_pnm, ClipEntry, DatasetManifest};
use vsrlab::metrics::{evaluate, run_ablation, EvalOptions};
use vsrlab::model::{model_grad_check, ModelConfig};
use vsrlab::training::{synthesize_clip, train, DataSource, SeedStream, SynthClipSpec, SynthDataSpec, TrainConfig};
use vsrlab::{Error, Result};

#[derive(Parser)]
#[command(name = "vsrlab", version, about = "Video super-resolution alignment laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WarpMethod {
    Bilinear,
    Nearest,
    Patch,
}

#[derive(Subcommand)]
enum Command {
    /// Motion histogram and total variation of flow files.
    FlowStats {
        #[arg(required = true)]
        flows: Vec<PathBuf>,
        /// Comma-separated ascending bin edges in pixels.
        #[arg(long)]
        bins: Option<String>,
    },
    /// Align a frame to the reference with a flow (reference → frame).
    Warp {
        frame: PathBuf,
        flow: PathBuf,
        #[arg(long, value_enum)]
        method: WarpMethod,
        #[arg(long, default_value_t = 8)]
        patch_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render synthetic clips with exact flows.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes the checkpoint and a JSON-lines log.
    Train {
        model: PathBuf,
        train: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Log path; defaults to `log.jsonl` beside the checkpoint.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// PSNR/SSIM of a checkpoint on a manifest or synthetic spec.
    Eval {
        model: PathBuf,
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "y")]
        channels: String,
    },
    /// Error difference between two error maps, binned by flow magnitude.
    BinMse {
        err_a: PathBuf,
        err_b: PathBuf,
        flow: PathBuf,
        #[arg(long)]
        bins: Option<String>,
    },
    /// Train and evaluate one model per alignment mode.
    Ablate {
        model: PathBuf,
        train: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<String>,
        /// Manifest or synthetic spec; defaults to the built-in synthetic distribution.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "y")]
        channels: String,
    },
    /// Finite-difference check of the model gradients, per parameter tensor.
    Gradcheck {
        model: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ModelConfig> {
    let cfg: ModelConfig = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_bins(bins: &Option<String>) -> Result<Vec<f64>> {
    match bins {
        None => Ok(default_bin_edges()),
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Argument(format!("bad bin edge {t:?}"))))
            .collect(),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serialises")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn flow_stats(flows: &[PathBuf], bins: &Option<String>) -> Result<String> {
    let edges = parse_bins(bins)?;
    let mut combined: Option<MotionHistogram> = None;
    let mut per_flow = Vec::new();
    for path in flows {
        let flow = read_flo(path)?;
        let hist = movement_histogram(&flow_magnitude(&flow), &edges)?;
        let tv = total_variation(&flow)?;
        match &mut combined {
            None => combined = Some(hist.clone()),
            Some(c) => c.merge(&hist)?,
        }
        per_flow.push(json!({ "path": path, "total_variation": tv, "histogram": hist }));
    }
    Ok(to_json(&json!({ "flows": per_flow, "histogram": combined })))
}

fn warp(frame: &Path, flow: &Path, method: WarpMethod, patch: usize, out: &Path) -> Result<String> {
    let img = read_pnm(frame)?;
    let flow = read_flo(flow)?;
    let aligned = match method {
        WarpMethod::Bilinear => warp_bilinear(&img, &flow)?,
        WarpMethod::Nearest => warp_nearest(&img, &flow)?,
        WarpMethod::Patch => patch_align(&img, &flow, patch)?,
    };
    write_pnm(&aligned, out)?;
    Ok(to_json(&json!({ "out": out, "height": aligned.height(), "width": aligned.width() })))
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum SynthInput {
    Clip(SynthClipSpec),
    Data(SynthDataSpec),
}

/// Writes each clip to `out/clipNNN/`: `lr_T.pgm|ppm`, `hr_T`, `flow_R_T.flo`,
/// plus `hr_reference` and a `manifest.json` over the HR frames and LR flows.
fn synth(spec: &Path, out: &Path) -> Result<String> {
    let text = fs::read_to_string(spec).map_err(|e| Error::io(spec, e))?;
    let input: SynthInput = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", spec.display())))?;
    let specs = match input {
        SynthInput::Clip(c) => {
            c.validate()?;
            vec![c]
        }
        SynthInput::Data(d) => {
            d.validate()?;
            let mut rng = rand_chacha::ChaCha8Rng::from_seed_stream(d.seed, 0);
            (0..d.clips).map(|_| d.sample_spec(d.frames, &mut rng)).collect()
        }
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut clips = Vec::new();
    let mut rng = rand_chacha::ChaCha8Rng::from_seed_stream(0, 0);
    for (i, spec) in specs.iter().enumerate() {
        let clip = synthesize_clip(spec, &mut rng)?;
        let dir = out.join(format!("clip{i:03}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let ext = if spec.channels == 3 { "ppm" } else { "pgm" };
        let r = clip.lr.reference();
        let mut entry = ClipEntry { name: Some(format!("clip{i:03}")), frames: Vec::new(), flows: Default::default(), scale: spec.scale };
        for (t, lr) in clip.lr.frames().iter().enumerate() {
            write_pnm(lr, dir.join(format!("lr_{t}.{ext}")))?;
            let hr_name = format!("clip{i:03}/hr_{t}.{ext}");
            write_pnm(&spec.hr_frame(t), out.join(&hr_name))?;
            entry.frames.push(PathBuf::from(hr_name));
            if let Some(flow) = &clip.flows[t] {
                let name = format!("clip{i:03}/flow_{r}_{t}.flo");
                write_flo(flow, out.join(&name))?;
                entry.flows.insert(format!("{r}->{t}"), PathBuf::from(name));
            }
        }
        write_pnm(&clip.hr_reference, dir.join(format!("hr_reference.{ext}")))?;
        write_file(&dir.join("spec.json"), to_json(spec).as_bytes())?;
        clips.push(entry);
    }
    let manifest = DatasetManifest { clips };
    let mpath = out.join("manifest.json");
    write_file(&mpath, to_json(&manifest).as_bytes())?;
    Ok(to_json(&json!({ "clips": specs.len(), "manifest": mpath })))
}

fn train_cmd(model: &Path, train_cfg: &Path, data: &Path, out: &Path, log: Option<&Path>) -> Result<String> {
    let cfg = load_model(model)?;
    let tc: TrainConfig = read_json(train_cfg)?;
    let source = DataSource::load(data)?;
    let log_path = log.map(Path::to_path_buf).unwrap_or_else(|| out.with_file_name("log.jsonl"));
    let mut log_file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut write_err = None;
    let result = train(&cfg, &tc, &source, |entry| {
        let line = serde_json::to_string(entry).expect("log entry serialises");
        if let Err(e) = writeln!(log_file, "{line}").and_then(|_| log_file.flush()) {
            write_err.get_or_insert(Error::io(&log_path, e));
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    save_weights(&cfg, &result.weights, out)?;
    Ok(to_json(&json!({
        "checkpoint": out,
        "log": log_path,
        "initial_val_psnr": result.initial_val_psnr(),
        "final_val_psnr": result.final_val_psnr(),
    })))
}

fn eval_cmd(model: &Path, ckpt: &Path, data: &Path, channels: &str) -> Result<String> {
    let cfg = load_model(model)?;
    let (stored, weights) = load_checkpoint(ckpt)?;
    if stored.fingerprint() != cfg.fingerprint() {
        return Err(Error::Config("checkpoint was written for a different model config".into()));
    }
    let source = DataSource::load(data)?;
    let report = evaluate(&cfg, &weights, &source, EvalOptions { channels: channels.parse()? })?;
    Ok(report.to_json())
}

fn bin_mse(a: &Path, b: &Path, flow: &Path, bins: &Option<String>) -> Result<String> {
    let (ea, eb) = (read_pnm(a)?, read_pnm(b)?);
    let flow = read_flo(flow)?;
    if !ea.same_dims(&eb) || ea.height() != flow.height() || ea.width() != flow.width() || ea.channels() != 1 {
        return Err(Error::Dimension("error maps must be single-channel and match the flow size".into()));
    }
    let to_f64 = |img: &vsrlab::frame_io::Image| img.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
    let curve = binned_error_difference(&to_f64(&ea), &to_f64(&eb), &flow_magnitude(&flow), &parse_bins(bins)?)?;
    Ok(to_json(&curve))
}

fn ablate(model: &Path, train_cfg: &Path, modes: &[String], data: Option<&Path>, channels: &str) -> Result<String> {
    let cfg = load_model(model)?;
    let tc: TrainConfig = read_json(train_cfg)?;
    let modes = modes.iter().map(|m| m.trim().parse()).collect::<Result<Vec<AlignmentMode>>>()?;
    let source = match data {
        Some(p) => DataSource::load(p)?,
        None => DataSource::Synthetic(SynthDataSpec { scale: cfg.scale, channels: cfg.image_channels, ..Default::default() }),
    };
    let table = run_ablation(&cfg, &modes, &tc, &source, EvalOptions { channels: channels.parse()? })?;
    Ok(to_json(&table))
}

fn gradcheck(model: &Path, eps: f64, seed: u64) -> Result<String> {
    let cfg = load_model(model)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Argument("eps must be positive".into()));
    }
    Ok(to_json(&model_grad_check(&cfg, eps, seed)?))
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::FlowStats { flows, bins } => flow_stats(&flows, &bins),
        Command::Warp { frame, flow, method, patch_size, out } => warp(&frame, &flow, method, patch_size, &out),
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::Train { model, train, data, out, log } => train_cmd(&model, &train, &data, &out, log.as_deref()),
        Command::Eval { model, checkpoint, data, channels } => eval_cmd(&model, &checkpoint, &data, &channels),
        Command::BinMse { err_a, err_b, flow, bins } => bin_mse(&err_a, &err_b, &flow, &bins),
        Command::Ablate { model, train, modes, data, channels } => ablate(&model, &train, &modes, data.as_deref(), &channels),
        Command::Gradcheck { model, eps, seed } => gradcheck(&model, eps, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
