//! tactogen: train visual-to-tactile generative models on procedural
//! corpora, evaluate them spectrally, and render height maps into haptic
//! signals. One seed flag drives every random choice, so any pipeline
//! reruns byte-identically.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tactogen::{checkpoint, corpus_build, dataset, manifest, pnm, report, runrec, wav, IoError};
use tactogen_core::corpus as core_corpus;
use tactogen_core::diffusion::{self, sample_ddpm, train_ddpm};
use tactogen_core::flow::{sample_flow, train_flow, Coupling, FlowConfig};
use tactogen_core::gradcheck;
use tactogen_core::haptic::{
    friction_waveform, ultrasonic_amplitude, vibration_waveform, ContactForce, ContactMedia,
    Trajectory,
};
use tactogen_core::heightmap::grayscale_proxy;
use tactogen_core::nn::{CondNet, CondNetConfig};
use tactogen_core::spectral::{psd_mse, SpectralReport};
use tactogen_core::train::TrainOpts;

#[derive(Parser)]
#[command(name = "tactogen", version, about = "visual-to-tactile generation toolkit")]
struct Cli {
    /// Root seed for all randomness in the invocation.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a synthetic aligned image/height corpus.
    Corpus(CorpusArgs),
    /// Validate a corpus layout against its manifest.
    Validate { root: PathBuf },
    /// Train a conditional generative model on a corpus split.
    Train(TrainArgs),
    /// Sample height maps from a checkpoint.
    Sample(SampleArgs),
    /// Compare generated height maps against references (log-PSD MSE).
    Eval(EvalArgs),
    /// Render a height map into a haptic signal.
    Render(RenderArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck,
    /// Emit grayscale-proxy height maps as the baseline model.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// Recipe set: the 5-material benchmark, the 2-class conditioning set,
    /// or the full paper-shaped 5x20 layout.
    #[arg(long, value_enum, default_value_t = RecipeSet::Default5)]
    recipes: RecipeSet,
    /// Pairs per material.
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    /// Square image/height size in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecipeSet {
    Default5,
    TwoClass,
    Paper,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Corpus root (uses the train split).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    /// Training size (crop/pad applied to corpus pairs).
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Base channel width of the network.
    #[arg(long, default_value_t = 32)]
    width: usize,
    /// Resolutions below the input.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Learning rate; defaults to 1e-3 for flow, 2e-4 for ddpm.
    #[arg(long)]
    lr: Option<f64>,
    /// Flow coupling.
    #[arg(long, value_enum, default_value_t = CouplingArg::Noise)]
    coupling: CouplingArg,
    #[arg(long, default_value_t = 50)]
    ode_steps: usize,
    #[arg(long, default_value_t = 0.05)]
    sigma_aug: f64,
    /// Diffusion steps T.
    #[arg(long, default_value_t = diffusion::DEFAULT_STEPS)]
    t_steps: usize,
    #[arg(long, default_value_t = diffusion::DEFAULT_BETA_START)]
    beta_start: f64,
    #[arg(long, default_value_t = diffusion::DEFAULT_BETA_END)]
    beta_end: f64,
    /// Print a loss line every N steps (0 = quiet).
    #[arg(long, default_value_t = 200)]
    log_every: usize,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum ModelKind {
    Flow,
    Ddpm,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    Noise,
    Image,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Single condition image (PPM). Mutually exclusive with --data.
    #[arg(long, conflicts_with = "data")]
    condition: Option<PathBuf>,
    /// Corpus root: sample every condition of --split into --out dir.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "val")]
    split: String,
    /// Output file (with --condition) or directory (with --data).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of generated height maps (.pgm, any nesting).
    generated: PathBuf,
    /// Directory of references with the same relative paths.
    reference: PathBuf,
    /// Report directory (CSV, histogram, bin edges).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Input height map (PGM).
    #[arg(long)]
    height: PathBuf,
    #[arg(long, value_enum)]
    kind: RenderKind,
    /// Output: .wav path for waveforms, .pgm for the amplitude field.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    start_x: f64,
    #[arg(long, default_value_t = 1.0)]
    start_y: f64,
    /// Trajectory direction, radians.
    #[arg(long, default_value_t = 0.0)]
    angle: f64,
    /// Sliding speed, px/s.
    #[arg(long, default_value_t = 100.0)]
    speed: f64,
    /// Trajectory duration, seconds.
    #[arg(long, default_value_t = 0.5)]
    duration: f64,
    /// Waveform sample rate, Hz.
    #[arg(long, default_value_t = 2000.0)]
    rate: f64,
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    #[arg(long, default_value_t = 0.0)]
    bias: f64,
    #[arg(long, value_enum, default_value_t = MediaArg::Finger)]
    media: MediaArg,
    #[arg(long, value_enum, default_value_t = ForceArg::Medium)]
    force: ForceArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderKind {
    Friction,
    Vibration,
    Ultrasonic,
}

#[derive(Clone, Copy, ValueEnum)]
enum MediaArg {
    Nail,
    Finger,
    Stick,
}

#[derive(Clone, Copy, ValueEnum)]
enum ForceArg {
    Soft,
    Medium,
    Strong,
}

#[derive(Args)]
struct BaselineArgs {
    /// Corpus root.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
    /// Output directory (mirrors the corpus height layout).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage problems exit 1, including --help/--version paths that
            // clap models as "errors" but should exit 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                IoError::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> tactogen::Result<()> {
    match cli.command {
        Command::Corpus(args) => cmd_corpus(cli.seed, args),
        Command::Validate { root } => cmd_validate(&root),
        Command::Train(args) => cmd_train(cli.seed, args),
        Command::Sample(args) => cmd_sample(cli.seed, args),
        Command::Eval(args) => cmd_eval(cli.seed, args),
        Command::Render(args) => cmd_render(cli.seed, args),
        Command::Gradcheck => cmd_gradcheck(cli.seed),
        Command::Baseline(args) => cmd_baseline(cli.seed, args),
    }
}

fn recipe_list(set: RecipeSet, seed: u64) -> Vec<(String, String, core_corpus::MaterialRecipe)> {
    match set {
        RecipeSet::Default5 => core_corpus::default5(seed),
        RecipeSet::TwoClass => core_corpus::two_class(seed),
        RecipeSet::Paper => core_corpus::paper_shaped(seed),
    }
}

fn cmd_corpus(seed: u64, args: CorpusArgs) -> tactogen::Result<()> {
    let recipes = recipe_list(args.recipes, seed);
    runrec::write_run_record(
        &args.out,
        "corpus",
        seed,
        json!({
            "recipes": recipes.len(),
            "set": match args.recipes { RecipeSet::Default5 => "default5", RecipeSet::TwoClass => "two-class", RecipeSet::Paper => "paper" },
            "pairs": args.pairs,
            "size": args.size,
            "out": args.out,
        }),
    )?;
    let manifest = corpus_build::build_corpus(&recipes, args.pairs, args.size, &args.out)?;
    println!(
        "corpus: {} entries ({} materials x {} pairs) at {}",
        manifest.entries.len(),
        recipes.len(),
        args.pairs,
        args.out.display()
    );
    Ok(())
}

fn cmd_validate(root: &Path) -> tactogen::Result<()> {
    let report = manifest::validate(root)?;
    println!("entries: {}", report.entries);
    for v in &report.violations {
        println!("violation: {v}");
    }
    if report.ok() {
        println!("validate: OK");
        Ok(())
    } else {
        Err(IoError::Core(tactogen_core::Error::Contract(format!(
            "{} validation violations",
            report.violations.len()
        ))))
    }
}

fn cmd_train(seed: u64, args: TrainArgs) -> tactogen::Result<()> {
    let lr = args.lr.unwrap_or(match args.model {
        ModelKind::Flow => 1e-3,
        ModelKind::Ddpm => 2e-4,
    });
    let family = match args.model {
        ModelKind::Flow => "flow",
        ModelKind::Ddpm => "ddpm",
    };
    let coupling_name = match args.coupling {
        CouplingArg::Noise => "noise-to-target",
        CouplingArg::Image => "image-to-target",
    };
    let model_config = checkpoint::ModelConfig {
        family: family.to_string(),
        base_width: args.width,
        depth: args.depth,
        time_embed_dim: 64,
        width: args.size,
        height: args.size,
        seed,
        coupling: (args.model == ModelKind::Flow).then(|| coupling_name.to_string()),
        ode_steps: (args.model == ModelKind::Flow).then_some(args.ode_steps),
        sigma_aug: (args.model == ModelKind::Flow).then_some(args.sigma_aug),
        t_steps: (args.model == ModelKind::Ddpm).then_some(args.t_steps),
        beta_start: (args.model == ModelKind::Ddpm).then_some(args.beta_start),
        beta_end: (args.model == ModelKind::Ddpm).then_some(args.beta_end),
    };
    let record_dir = args.out.parent().unwrap_or(Path::new(".")).to_path_buf();
    runrec::write_run_record(
        &record_dir,
        "train",
        seed,
        json!({
            "model": family,
            "data": args.data,
            "steps": args.steps,
            "batch": args.batch,
            "lr": lr,
            "config": &model_config,
            "out": args.out,
        }),
    )?;

    let pairs = dataset::load_split(&args.data, "train", Some(args.size))?;
    let data = dataset::to_train_set(&pairs)?;
    println!("training {family}: {} pairs at {}x{} px", data.len(), args.size, args.size);
    let mut net = CondNet::init(
        CondNetConfig {
            base_width: args.width,
            depth: args.depth,
            ..CondNetConfig::default()
        },
        seed,
        true,
    )
    .map_err(IoError::Core)?;
    let opts = TrainOpts { steps: args.steps, batch_size: args.batch, learning_rate: lr, seed };
    let progress = |step: usize, loss: f64| {
        if args.log_every > 0 && (step % args.log_every == 0 || step + 1 == args.steps) {
            println!("step {step}: loss {loss:.6}");
        }
    };
    let log = match args.model {
        ModelKind::Flow => {
            let fc = FlowConfig {
                coupling: match args.coupling {
                    CouplingArg::Noise => Coupling::NoiseToTarget,
                    CouplingArg::Image => Coupling::ImageToTarget,
                },
                ode_steps: args.ode_steps,
                sigma_aug: args.sigma_aug,
                width: args.size,
                height: args.size,
            };
            train_flow(&mut net, &data, &fc, &opts, progress).map_err(IoError::Core)?
        }
        ModelKind::Ddpm => {
            let schedule = diffusion::make_schedule(args.t_steps, args.beta_start, args.beta_end)
                .map_err(IoError::Core)?;
            train_ddpm(&mut net, &data, &schedule, &opts, progress).map_err(IoError::Core)?
        }
    };
    let (head, tail) = log.head_tail_mean(50);
    println!("loss (first 50 mean -> last 50 mean): {head:.4} -> {tail:.4}");
    checkpoint::save(&args.out, &model_config, &net)?;
    println!("checkpoint: {}", args.out.display());
    Ok(())
}

/// Derive the sampler seed for one condition id: stable across runs,
/// distinct across conditions.
fn sample_seed(seed: u64, id: &str) -> u64 {
    let mut h = tactogen_core::rng::mix(seed ^ 0x5A4D);
    for b in id.bytes() {
        h = tactogen_core::rng::mix(h ^ b as u64);
    }
    h
}

fn generate_one(
    net: &CondNet<f32>,
    config: &checkpoint::ModelConfig,
    condition: &tactogen_core::Tensor<f32>,
    seed: u64,
) -> tactogen::Result<tactogen_core::HeightMap> {
    match config.family.as_str() {
        "flow" => {
            let fc = config.flow_config().expect("flow config");
            Ok(sample_flow(net, condition, &fc, seed).map_err(IoError::Core)?)
        }
        "ddpm" => {
            let schedule = config.schedule().expect("ddpm schedule");
            Ok(sample_ddpm(net, condition, &schedule, seed).map_err(IoError::Core)?)
        }
        other => Err(IoError::Core(tactogen_core::Error::Contract(format!(
            "unknown model family `{other}` in checkpoint"
        )))),
    }
}

fn cmd_sample(seed: u64, args: SampleArgs) -> tactogen::Result<()> {
    let ck = checkpoint::load(&args.checkpoint)?;
    let net = ck.instantiate()?;
    match (&args.condition, &args.data) {
        (Some(cond_path), None) => {
            runrec::write_run_record(
                &args.out.parent().unwrap_or(Path::new(".")).to_path_buf(),
                "sample",
                seed,
                json!({"checkpoint": args.checkpoint, "condition": cond_path, "out": args.out}),
            )?;
            let image = pnm::read_ppm(cond_path)?;
            let cond = tactogen_core::train::planar_image(&image);
            let map = generate_one(&net, &ck.config, &cond, seed)?;
            pnm::write_pgm16(&args.out, &map)?;
            println!("sample: {}", args.out.display());
        }
        (None, Some(root)) => {
            runrec::write_run_record(
                &args.out,
                "sample",
                seed,
                json!({"checkpoint": args.checkpoint, "data": root, "split": args.split, "out": args.out}),
            )?;
            let pairs = dataset::load_split(root, &args.split, Some(ck.config.width))?;
            if pairs.is_empty() {
                return Err(IoError::Core(tactogen_core::Error::Contract(format!(
                    "split `{}` is empty",
                    args.split
                ))));
            }
            for p in &pairs {
                let cond = dataset::condition_tensor(p);
                let map = generate_one(&net, &ck.config, &cond, sample_seed(seed, &p.id))?;
                let out_path = args.out.join(&p.height_rel);
                if let Some(dir) = out_path.parent() {
                    std::fs::create_dir_all(dir).map_err(tactogen::io_err(dir))?;
                }
                pnm::write_pgm16(&out_path, &map)?;
            }
            println!("sampled {} conditions into {}", pairs.len(), args.out.display());
        }
        _ => {
            return Err(IoError::Core(tactogen_core::Error::Contract(
                "sample needs exactly one of --condition or --data".into(),
            )))
        }
    }
    Ok(())
}

fn pgm_tree(dir: &Path) -> tactogen::Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.extension().is_some_and(|e| e == "pgm") {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, &mut out).map_err(tactogen::io_err(dir))?;
    out.sort();
    Ok(out)
}

fn cmd_eval(seed: u64, args: EvalArgs) -> tactogen::Result<()> {
    runrec::write_run_record(
        &args.out,
        "eval",
        seed,
        json!({"generated": args.generated, "reference": args.reference, "out": args.out}),
    )?;
    let generated = pgm_tree(&args.generated)?;
    if generated.is_empty() {
        return Err(IoError::Core(tactogen_core::Error::Contract(format!(
            "no .pgm files under {}",
            args.generated.display()
        ))));
    }
    let mut missing = Vec::new();
    let mut scores = Vec::new();
    for gen_path in &generated {
        let rel = gen_path.strip_prefix(&args.generated).expect("under generated root");
        let ref_path = args.reference.join(rel);
        if !ref_path.exists() {
            missing.push(rel.display().to_string());
            continue;
        }
        let mut gen_map = pnm::read_pgm(gen_path)?;
        let mut ref_map = pnm::read_pgm(&ref_path)?;
        // metric needs power-of-two dims; crop both identically if needed
        let (tw, th) = (prev_pow2(gen_map.width), prev_pow2(gen_map.height));
        if (gen_map.width, gen_map.height) != (tw, th) {
            gen_map = gen_map.crop_pad(tw, th).map_err(IoError::Core)?;
        }
        if (ref_map.width, ref_map.height) != (tw, th) {
            ref_map = ref_map.crop_pad(tw, th).map_err(IoError::Core)?;
        }
        let id = rel
            .display()
            .to_string()
            .trim_end_matches(".height.pgm")
            .trim_end_matches(".pgm")
            .to_string();
        scores.push((id, psd_mse(&gen_map, &ref_map).map_err(IoError::Core)?));
    }
    if !missing.is_empty() {
        return Err(IoError::Core(tactogen_core::Error::Contract(format!(
            "unmatched ids (no reference): {}",
            missing.join(", ")
        ))));
    }
    let spectral = SpectralReport::from_scores(scores).map_err(IoError::Core)?;
    report::write_report(&args.out, &spectral)?;
    println!(
        "eval: {} pairs, mean {:.6} min {:.6} max {:.6}",
        spectral.per_sample.len(),
        spectral.mean,
        spectral.min,
        spectral.max
    );
    Ok(())
}

fn prev_pow2(n: usize) -> usize {
    let mut p = 1;
    while p * 2 <= n {
        p *= 2;
    }
    p
}

fn cmd_render(seed: u64, args: RenderArgs) -> tactogen::Result<()> {
    let record_dir = args.out.parent().unwrap_or(Path::new(".")).to_path_buf();
    runrec::write_run_record(
        &record_dir,
        "render",
        seed,
        json!({
            "height": args.height,
            "kind": match args.kind { RenderKind::Friction => "friction", RenderKind::Vibration => "vibration", RenderKind::Ultrasonic => "ultrasonic" },
            "start": [args.start_x, args.start_y],
            "angle": args.angle,
            "speed": args.speed,
            "duration": args.duration,
            "rate": args.rate,
            "gain": args.gain,
            "bias": args.bias,
            "out": args.out,
        }),
    )?;
    let map = pnm::read_pgm(&args.height)?;
    match args.kind {
        RenderKind::Ultrasonic => {
            let field = ultrasonic_amplitude(&map);
            let hm = tactogen_core::HeightMap::new(
                map.width,
                map.height,
                field.values.iter().map(|&v| v as f32).collect(),
            )
            .map_err(IoError::Core)?;
            pnm::write_pgm16(&args.out, &hm)?;
        }
        RenderKind::Friction | RenderKind::Vibration => {
            let traj = Trajectory::straight_line(
                (args.start_x, args.start_y),
                args.angle,
                args.speed,
                args.duration,
                args.rate,
            )
            .map_err(IoError::Core)?;
            let signal = match args.kind {
                RenderKind::Friction => {
                    friction_waveform(&map, &traj, args.gain, args.bias).map_err(IoError::Core)?
                }
                _ => {
                    let media = match args.media {
                        MediaArg::Nail => ContactMedia::Nail,
                        MediaArg::Finger => ContactMedia::Finger,
                        MediaArg::Stick => ContactMedia::Stick,
                    };
                    let force = match args.force {
                        ForceArg::Soft => ContactForce::Soft,
                        ForceArg::Medium => ContactForce::Medium,
                        ForceArg::Strong => ContactForce::Strong,
                    };
                    vibration_waveform(&map, &traj, media, force).map_err(IoError::Core)?
                }
            };
            wav::write_wav(&args.out, &signal.values, args.rate as u32)?;
            wav::write_csv(&args.out.with_extension("csv"), &signal.values, args.rate)?;
        }
    }
    println!("render: {}", args.out.display());
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> tactogen::Result<()> {
    println!("config: seed {seed}, h = {}, op tolerance 1e-4, net tolerance 1e-3", gradcheck::FD_STEP);
    let mut failures = 0;
    let entries = gradcheck::op_suite(20, seed).map_err(IoError::Core)?;
    for e in &entries {
        let ok = e.report.passes(1e-4);
        println!(
            "{} op {:<28} max rel err {:.3e} ({} coords)",
            if ok { "PASS" } else { "FAIL" },
            e.name,
            e.report.max_rel_err,
            e.report.coords_checked
        );
        failures += usize::from(!ok);
    }
    let chain = gradcheck::conv_chain_suite(seed).map_err(IoError::Core)?;
    let ok = chain.passes(1e-4);
    println!(
        "{} conv-chain (3 layers, mse head)     max rel err {:.3e} ({} coords)",
        if ok { "PASS" } else { "FAIL" },
        chain.max_rel_err,
        chain.coords_checked
    );
    failures += usize::from(!ok);
    let net = gradcheck::condnet_suite(12, seed).map_err(IoError::Core)?;
    let ok = net.passes(1e-3);
    println!(
        "{} cond-net (full loss)                max rel err {:.3e} ({} coords)",
        if ok { "PASS" } else { "FAIL" },
        net.max_rel_err,
        net.coords_checked
    );
    failures += usize::from(!ok);
    if failures > 0 {
        return Err(IoError::Core(tactogen_core::Error::Contract(format!(
            "{failures} gradient checks failed"
        ))));
    }
    Ok(())
}

fn cmd_baseline(seed: u64, args: BaselineArgs) -> tactogen::Result<()> {
    runrec::write_run_record(
        &args.out,
        "baseline",
        seed,
        json!({"data": args.data, "split": args.split, "out": args.out}),
    )?;
    let pairs = dataset::load_split(&args.data, &args.split, None)?;
    if pairs.is_empty() {
        return Err(IoError::Core(tactogen_core::Error::Contract(format!(
            "split `{}` is empty",
            args.split
        ))));
    }
    for p in &pairs {
        let proxy = grayscale_proxy(&p.image);
        let out_path = args.out.join(&p.height_rel);
        if let Some(dir) = out_path.parent() {
            std::fs::create_dir_all(dir).map_err(tactogen::io_err(dir))?;
        }
        pnm::write_pgm16(&out_path, &proxy)?;
    }
    println!("baseline: {} proxies into {}", pairs.len(), args.out.display());
    Ok(())
}
