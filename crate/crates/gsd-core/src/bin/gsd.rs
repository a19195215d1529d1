//! Command-line front end: train, hide, reveal, sweep, schedule dump and
//! trajectory export.
//!
//! Exit codes are a stable contract: 0 success, 1 usage error, 2
//! data/format error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gsd_core::codec::{self, BitVector};
use gsd_core::denoiser::{
    train, AnalyticOracle, NoisePredictor, TinyDenoiser, TrainConfig,
};
use gsd_core::error::{GsdError, Result};
use gsd_core::grid::{Dims, Grid};
use gsd_core::manifest::{file_sha256, RunManifest};
use gsd_core::pipeline::{self, DatasetKind, PipelineConfig};
use gsd_core::pnm;
use gsd_core::rng::{sample_gaussian, SeededRng};
use gsd_core::sampler::{self, Trajectory};
use gsd_core::schedule::{NoiseSchedule, SamplingPlan};

#[derive(Parser)]
#[command(
    name = "gsd",
    version,
    about = "Hide secret bits in a diffusion latent, generate a stego image, recover the bits by inverting the diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the compact noise predictor on a synthetic dataset.
    Train(TrainArgs),
    /// Embed a secret file into a generated stego image.
    Hide(HideArgs),
    /// Recover the secret bytes from a stego image.
    Reveal(RevealArgs),
    /// Accuracy / latent-error / timing table over several step counts.
    Sweep(SweepArgs),
    /// Schedule table utilities.
    Schedule(ScheduleArgs),
    /// Export one image per sampling node of a generation or inversion.
    Trajectory(TrajectoryArgs),
}

/// Optional JSON config file; explicit flags override its entries.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dims: Option<String>,
    #[serde(rename = "T")]
    t_max: Option<usize>,
    #[serde(rename = "S")]
    s: Option<usize>,
    eta: Option<f64>,
    amplitude: Option<f64>,
    seed: Option<u64>,
    checkpoint: Option<String>,
}

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| {
                    GsdError::InvalidArgument(format!("bad config file: {e}"))
                })
            }
        }
    }
}

/// Flags shared by every command that runs the sampler.
#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Grid shape as CxHxW (required with --oracle, otherwise taken from
    /// the checkpoint).
    #[arg(long)]
    dims: Option<String>,
    /// Diffusion step count T.
    #[arg(long = "T")]
    t_max: Option<usize>,
    /// Sampling step count S (must divide T).
    #[arg(long = "S")]
    s: Option<usize>,
    /// Coefficient magnitude used by the embedding.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Seed; falls back to config file, then the GSD_SEED env var, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Trained checkpoint path.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Closed-form predictor instead of a checkpoint: zero | constant:<c>.
    #[arg(long)]
    oracle: Option<String>,
    /// JSON config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

struct Resolved {
    cfg: PipelineConfig,
    predictor: Predictor,
    checkpoint: Option<PathBuf>,
    oracle_label: Option<String>,
}

enum Predictor {
    Model(Box<TinyDenoiser>),
    Oracle(AnalyticOracle),
}

impl Predictor {
    fn as_dyn(&self) -> &dyn NoisePredictor {
        match self {
            Predictor::Model(m) => m.as_ref(),
            Predictor::Oracle(o) => o,
        }
    }
}

fn parse_oracle(spec: &str) -> Result<AnalyticOracle> {
    if spec == "zero" {
        return Ok(AnalyticOracle::Zero);
    }
    if let Some(c) = spec.strip_prefix("constant:") {
        let value: f64 = c.parse().map_err(|_| {
            GsdError::InvalidArgument(format!("bad oracle constant {c:?}"))
        })?;
        if !value.is_finite() {
            return Err(GsdError::InvalidArgument(
                "oracle constant must be finite".into(),
            ));
        }
        return Ok(AnalyticOracle::Constant(value));
    }
    Err(GsdError::InvalidArgument(format!(
        "unknown oracle {spec:?} (zero | constant:<c>)"
    )))
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = file {
        return Ok(s);
    }
    match std::env::var("GSD_SEED") {
        Ok(v) => v.parse().map_err(|_| {
            GsdError::InvalidArgument(format!("GSD_SEED is not an integer: {v:?}"))
        }),
        Err(_) => Ok(0),
    }
}

impl CommonArgs {
    /// Merges flags over the config file, loads the predictor, and builds
    /// the pipeline configuration. `s` is mandatory because sender and
    /// receiver must agree on it.
    fn resolve(&self) -> Result<Resolved> {
        let file = FileConfig::load(self.config.as_ref())?;
        let t_max = self.t_max.or(file.t_max).unwrap_or(1000);
        let s = self
            .s
            .or(file.s)
            .ok_or_else(|| GsdError::InvalidArgument("--S is required".into()))?;
        let amplitude = self.amplitude.or(file.amplitude).unwrap_or(1.0);
        let seed = resolve_seed(self.seed, file.seed)?;
        let eta = file.eta.unwrap_or(0.0);
        let dims_flag: Option<Dims> = match self.dims.as_deref().or(file.dims.as_deref()) {
            Some(text) => Some(text.parse()?),
            None => None,
        };
        let checkpoint = self
            .checkpoint
            .clone()
            .or_else(|| file.checkpoint.as_ref().map(PathBuf::from));

        let (predictor, dims, oracle_label) = match (&checkpoint, &self.oracle) {
            (Some(_), Some(_)) => {
                return Err(GsdError::InvalidArgument(
                    "--checkpoint and --oracle are mutually exclusive".into(),
                ))
            }
            (Some(path), None) => {
                let model = TinyDenoiser::load(path, t_max)?;
                let dims = model.dims();
                if let Some(flag) = dims_flag {
                    if flag != dims {
                        return Err(GsdError::DimMismatch(format!(
                            "--dims {flag} vs checkpoint {dims}"
                        )));
                    }
                }
                (Predictor::Model(Box::new(model)), dims, None)
            }
            (None, Some(spec)) => {
                let dims = dims_flag.ok_or_else(|| {
                    GsdError::InvalidArgument("--oracle requires --dims".into())
                })?;
                (Predictor::Oracle(parse_oracle(spec)?), dims, Some(spec.clone()))
            }
            (None, None) => {
                return Err(GsdError::InvalidArgument(
                    "either --checkpoint or --oracle is required".into(),
                ))
            }
        };

        let mut cfg = PipelineConfig::new(dims, t_max, s);
        cfg.amplitude = amplitude;
        cfg.seed = seed;
        cfg.eta = eta;
        // Fail early on an invalid (T, S) pair.
        cfg.plan()?;
        Ok(Resolved { cfg, predictor, checkpoint, oracle_label })
    }

    fn manifest(&self, command: &str, resolved: &Resolved) -> Result<RunManifest> {
        let cfg = &resolved.cfg;
        let mut m = RunManifest::new(command, cfg.dims, cfg.t_max, cfg.s);
        m.eta = cfg.eta;
        m.amplitude = cfg.amplitude;
        m.seed = cfg.seed;
        m.oracle = resolved.oracle_label.clone();
        if let Some(path) = &resolved.checkpoint {
            m.checkpoint = Some(path.display().to_string());
            m.checkpoint_sha256 = Some(file_sha256(path)?);
        }
        Ok(m)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Grid shape as CxHxW.
    #[arg(long, default_value = "1x16x16")]
    dims: String,
    /// Diffusion step count T.
    #[arg(long = "T", default_value_t = 1000)]
    t_max: usize,
    /// Optimizer steps.
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    /// Samples per optimizer step.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Std-dev of the Gaussian perturbation added to training images.
    #[arg(long, default_value_t = 0.01)]
    input_noise_std: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic dataset kind: blobs | gradients | checkers.
    #[arg(long, default_value = "blobs")]
    dataset: String,
    /// Number of distinct images in the synthetic dataset.
    #[arg(long, default_value_t = 64)]
    dataset_count: usize,
    /// Hidden layer width.
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    /// Sinusoidal time-embedding width (even).
    #[arg(long, default_value_t = 16)]
    time_embed: usize,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Loss curve CSV path (default: <out>.loss.csv).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let dims: Dims = args.dims.parse()?;
    let seed = resolve_seed(args.seed, None)?;
    let kind = DatasetKind::from_str(&args.dataset)?;
    let schedule = NoiseSchedule::linear(args.t_max)?;
    let dataset_seed = SeededRng::new(seed).derive(0x64617461).next_u64(); // "data"
    let dataset = pipeline::synth_dataset(kind, args.dataset_count, dims, dataset_seed)?;

    let cfg = TrainConfig {
        steps: args.steps,
        batch: args.batch,
        learning_rate: args.lr,
        input_noise_std: args.input_noise_std,
        seed,
    };
    let mut model =
        TinyDenoiser::with_sizes(dims, args.t_max, args.time_embed, args.hidden, seed);
    eprintln!(
        "training {} params on {} {:?} images for {} steps (dims {dims}, T {})",
        model.parameter_count(),
        dataset.len(),
        kind,
        args.steps,
        args.t_max
    );
    // The checkpoint is written only after the loop finishes, so a
    // divergence abort leaves no partial file behind.
    let report = train(&mut model, &dataset, &cfg, &schedule)?;
    model.save(&args.out)?;

    let loss_csv = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| append_ext(&args.out, "loss.csv"));
    let mut csv = String::from("step,loss\n");
    for (step, loss) in &report.checkpoints {
        csv.push_str(&format!("{step},{loss:.8}\n"));
    }
    fs::write(&loss_csv, csv)?;

    let mut manifest = RunManifest::new("train", dims, args.t_max, 0);
    manifest.seed = seed;
    manifest.checkpoint = Some(args.out.display().to_string());
    manifest.checkpoint_sha256 = Some(file_sha256(&args.out)?);
    manifest.write_json(&append_ext(&args.out, "manifest.json"))?;

    println!(
        "trained: first-window loss {:.5}, last-window loss {:.5}, final {:.5}",
        report.window_mean(0.0, 0.1),
        report.window_mean(0.9, 1.0),
        report.final_loss
    );
    println!("checkpoint: {}", args.out.display());
    println!("loss curve: {}", loss_csv.display());
    Ok(())
}

#[derive(Args)]
struct HideArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Secret payload file; must supply ceil(C*H*W / 8) bytes.
    #[arg(long)]
    secret: PathBuf,
    /// Skip the quantizer and write a bit-exact float image (GSDF).
    #[arg(long)]
    no_quantize: bool,
    /// Output image path (.pgm for 1 channel, .ppm for 3).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_hide(args: &HideArgs) -> Result<()> {
    let resolved = args.common.resolve()?;
    let cfg = &resolved.cfg;
    let n_bits = cfg.capacity_bits();
    let secret = fs::read(&args.secret)?;
    let d = BitVector::from_bytes_msb(&secret, n_bits)?;

    let model = resolved.predictor.as_dyn();
    if args.no_quantize {
        let x0 = pipeline::hide_float(&d, cfg, model)?;
        pnm::write_float_grid(&x0, &args.out)?;
    } else {
        let img = pipeline::hide(&d, cfg, model)?;
        pnm::write_pnm(&img, &args.out)?;
    }

    let mut manifest = args.common.manifest("hide", &resolved)?;
    manifest.secret_bits = Some(n_bits);
    manifest.quantize = !args.no_quantize;
    manifest.write_json(&append_ext(&args.out, "manifest.json"))?;
    println!(
        "hid {} bits ({} bpp) in {}",
        n_bits,
        pipeline::bits_per_pixel(n_bits, cfg.dims),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct RevealArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Stego image (PGM/PPM, or GSDF float image from --no-quantize).
    #[arg(long)]
    image: PathBuf,
    /// Recovered secret output path.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_reveal(args: &RevealArgs) -> Result<()> {
    let resolved = args.common.resolve()?;
    let cfg = &resolved.cfg;
    let model = resolved.predictor.as_dyn();

    let out = if pnm::is_float_grid(&args.image)? {
        let x0 = pnm::read_float_grid(&args.image)?;
        if x0.dims() != cfg.dims {
            return Err(GsdError::DimMismatch(format!(
                "image {} vs model {}",
                x0.dims(),
                cfg.dims
            )));
        }
        pipeline::reveal_float_detailed(&x0, cfg, model)?
    } else {
        let img = pnm::read_pnm(&args.image)?;
        pipeline::reveal_detailed(&img, cfg, model)?
    };

    let confidence = pipeline::sign_confidence(&out.latent, cfg.amplitude);
    fs::write(&args.out, out.bits.to_bytes_msb())?;

    let mut manifest = args.common.manifest("reveal", &resolved)?;
    manifest.secret_bits = Some(out.bits.len());
    manifest.write_json(&append_ext(&args.out, "manifest.json"))?;

    println!(
        "recovered {} bits into {} (sign confidence {:.4})",
        out.bits.len(),
        args.out.display(),
        confidence
    );
    if confidence < 0.9 {
        println!(
            "warning: low sign confidence — probable mismatch of S, T, amplitude or checkpoint with the hider"
        );
    }
    Ok(())
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated step counts, e.g. 10,50,100.
    #[arg(long = "S-list", alias = "S", value_delimiter = ',')]
    s_list: Vec<usize>,
    /// Random payloads per step count.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Reference dataset for the diagnostic image-moment distance
    /// (blobs | gradients | checkers); omitted = no diagnostics.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, default_value_t = 64)]
    reference_count: usize,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.s_list.is_empty() {
        return Err(GsdError::InvalidArgument("--S-list is required".into()));
    }
    // The per-row S comes from --S-list; seed the shared resolver with the
    // first entry so it can validate everything else once.
    let mut shadow = args.common.clone();
    shadow.s = shadow.s.or_else(|| args.s_list.first().copied());
    let resolved = shadow.resolve()?;
    let cfg = &resolved.cfg;

    let reference = match &args.reference {
        Some(kind) => {
            let kind = DatasetKind::from_str(kind)?;
            let seed = SeededRng::new(cfg.seed).derive(0x72656673).next_u64();
            Some(pipeline::synth_dataset(kind, args.reference_count, cfg.dims, seed)?)
        }
        None => None,
    };

    let rows = pipeline::sweep_steps(
        cfg,
        resolved.predictor.as_dyn(),
        &args.s_list,
        args.trials,
        reference.as_deref(),
    )?;

    let mut csv = String::from(gsd_core::pipeline::EvalReport::csv_header());
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    fs::write(&args.out, csv)?;

    let manifest = args.common.manifest("sweep", &resolved)?;
    manifest.write_json(&append_ext(&args.out, "manifest.json"))?;

    println!(
        "sweep over S = {:?}, {} trials each, payload {} bits ({} bpp)",
        args.s_list,
        args.trials,
        cfg.capacity_bits(),
        rows[0].bpp
    );
    println!("{:>6} {:>9} {:>14} {:>11} {:>11} {:>11}", "S", "acc", "latent_err", "gen_s", "ext_s", "mean_s");
    for row in &rows {
        println!(
            "{:>6} {:>9.4} {:>14.3e} {:>11.4e} {:>11.4e} {:>11.4e}",
            row.s, row.acc, row.mean_abs_latent_error, row.gen_time, row.ext_time, row.mean_time
        );
        if let Some(diag) = &row.diagnostic {
            println!(
                "       moment diagnostics vs reference: mean dist {:.4}, var dist {:.4} (sanity only, not comparable to feature-space image metrics)",
                diag.mean_dist, diag.var_dist
            );
        }
    }
    println!("report: {}", args.out.display());
    Ok(())
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(subcommand)]
    action: ScheduleAction,
}

#[derive(Subcommand)]
enum ScheduleAction {
    /// Emit the alpha / alpha_bar tables as CSV (columns t, alpha, alpha_bar).
    Dump {
        #[arg(long = "T", default_value_t = 1000)]
        t_max: usize,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn cmd_schedule(args: &ScheduleArgs) -> Result<()> {
    match &args.action {
        ScheduleAction::Dump { t_max, out } => {
            let schedule = NoiseSchedule::linear(*t_max)?;
            let mut csv = String::from("t,alpha,alpha_bar\n");
            for t in 1..=schedule.len() {
                csv.push_str(&format!(
                    "{t},{:.12},{:.12e}\n",
                    schedule.alpha(t),
                    schedule.alpha_bar(t)
                ));
            }
            match out {
                Some(path) => {
                    fs::write(path, csv)?;
                    println!("wrote {} rows to {}", t_max, path.display());
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

#[derive(Args)]
struct TrajectoryArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// generate (denoise latent -> image) or invert (image -> latent).
    #[arg(long)]
    direction: String,
    /// Payload for the generate direction; omitted = raw Gaussian latent.
    #[arg(long)]
    secret: Option<PathBuf>,
    /// Input stego image for the invert direction.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Noise interpolation for the generate direction (0 = deterministic).
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    /// Output directory; one quantized image per sampling node.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_trajectory(args: &TrajectoryArgs) -> Result<()> {
    let resolved = args.common.resolve()?;
    let cfg = &resolved.cfg;
    let model = resolved.predictor.as_dyn();
    let schedule = cfg.schedule()?;
    let plan = cfg.plan()?;

    let trajectory = match args.direction.as_str() {
        "generate" => {
            let start = match &args.secret {
                Some(path) => {
                    let bytes = fs::read(path)?;
                    let d = BitVector::from_bytes_msb(&bytes, cfg.capacity_bits())?;
                    pipeline::stego_latent(&d, cfg)?
                }
                None => {
                    let mut rng = SeededRng::new(cfg.seed).derive(0x6c6174656e74);
                    sample_gaussian(&mut rng, cfg.dims)?
                }
            };
            if args.eta == 0.0 {
                sampler::generate_trajectory(&start, &plan, model, &schedule)?
            } else {
                stochastic_generate_trajectory(&start, &plan, model, &schedule, args.eta, cfg.seed)?
            }
        }
        "invert" => {
            if args.eta != 0.0 {
                return Err(GsdError::InvalidArgument(
                    "--eta only applies to the generate direction".into(),
                ));
            }
            let path = args.image.as_ref().ok_or_else(|| {
                GsdError::InvalidArgument("invert direction requires --image".into())
            })?;
            let x0 = if pnm::is_float_grid(path)? {
                pnm::read_float_grid(path)?
            } else {
                codec::dequantize(&pnm::read_pnm(path)?)
            };
            if x0.dims() != cfg.dims {
                return Err(GsdError::DimMismatch(format!(
                    "image {} vs model {}",
                    x0.dims(),
                    cfg.dims
                )));
            }
            sampler::invert_trajectory(&x0, &plan, model, &schedule)?
        }
        other => {
            return Err(GsdError::InvalidArgument(format!(
                "direction must be generate or invert, got {other:?}"
            )))
        }
    };

    fs::create_dir_all(&args.out)?;
    let ext = if cfg.dims.channels == 1 { "pgm" } else { "ppm" };
    for (t, state) in trajectory.states() {
        let img = codec::quantize(state);
        let path = args.out.join(format!("step_{t}.{ext}"));
        pnm::write_pnm(&img, &path)?;
    }

    let manifest = args.common.manifest("trajectory", &resolved)?;
    manifest.write_json(&args.out.join("manifest.json"))?;
    println!(
        "wrote {} states ({} direction) to {}",
        trajectory.len(),
        args.direction,
        args.out.display()
    );
    Ok(())
}

/// Generation fold with the general sigma term; only used by the
/// trajectory command when eta > 0.
fn stochastic_generate_trajectory(
    start: &Grid,
    plan: &SamplingPlan,
    model: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    eta: f64,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = SeededRng::new(seed).derive(0x657461); // "eta"
    let tau = plan.tau();
    let mut x = start.clone();
    let mut states = vec![(*tau.last().unwrap(), x.clone())];
    for i in (0..tau.len()).rev() {
        let t_cur = tau[i];
        let t_prev = if i == 0 { 0 } else { tau[i - 1] };
        x = sampler::generate_step_stochastic(
            &x, t_cur, t_prev, model, schedule, eta, &mut rng,
        )?;
        states.push((t_prev, x.clone()));
    }
    Trajectory::from_states(sampler::Direction::Generate, states)
}

fn append_ext(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(ext);
    path.with_file_name(name)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Hide(args) => cmd_hide(args),
        Command::Reveal(args) => cmd_reveal(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Schedule(args) => cmd_schedule(args),
        Command::Trajectory(args) => cmd_trajectory(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
