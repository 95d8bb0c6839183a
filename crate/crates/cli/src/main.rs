//! `rowseg`: train, evaluate and inspect row-encoding segmentation networks.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data, file or
//! checkpoint error, 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use rowseg::config::{parse_hw, Config};
use rowseg::data::{self, netpbm, row_histogram, synth_scene, ClassScheme, Manifest, PnmKind, SynthConfig};
use rowseg::encodings::RpeTable;
use rowseg::gradcheck::run_suite;
use rowseg::metrics::{compute_report, format_report, ReportStyle};
use rowseg::net::{predict_labels, softmax_channel, RpemSites};
use rowseg::profile::{count_flops, format_comparison};
use rowseg::train::{describe, evaluate, infer_logits, train_loop_with, worker_count, Checkpoint, Trainer};
use rowseg::{rng, Error};

#[derive(Parser)]
#[command(name = "rowseg", version, about = "Maritime segmentation with row positional encodings", after_help = Config::key_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a manifest and write a checkpoint and a CSV log.
    #[command(after_help = Config::key_help())]
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Predict labels and a class confidence heatmap for one image.
    Infer(InferArgs),
    /// Generate a synthetic maritime dataset with a manifest.
    Synth(SynthArgs),
    /// Per-row class statistics of a dataset, or dump an encoding table.
    Stats(StatsArgs),
    /// Parameter and FLOP counts of a network.
    #[command(after_help = Config::key_help())]
    Profile(ProfileArgs),
    /// Finite-difference check of every op, the RPEM block and a network.
    Gradcheck(GradcheckArgs),
}

/// Config sources shared by `train` and `profile`, applied in order:
/// preset, file, `--set`, dedicated flags.
#[derive(Args)]
struct ConfigArgs {
    /// Starting preset: tiny or paper.
    #[arg(long, default_value = "tiny")]
    preset: String,
    /// `key = value` file applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single override, e.g. `--set rpem.kind=noise`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Config, Error> {
        let mut cfg = Config::preset(&self.preset)?;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        for kv in &self.overrides {
            cfg.apply_override(kv)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Training samples.
    #[arg(long)]
    manifest: PathBuf,
    /// Continue from a checkpoint; its stored config is used.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// train.total_iters
    #[arg(long)]
    iters: Option<usize>,
    /// train.batch_size
    #[arg(long)]
    batch_size: Option<usize>,
    /// train.lr0
    #[arg(long)]
    lr: Option<f64>,
    /// train.seed
    #[arg(long)]
    seed: Option<u64>,
    /// train.crop, as HxW
    #[arg(long)]
    crop: Option<String>,
    /// rpem.kind
    #[arg(long)]
    rpe_kind: Option<String>,
    /// train.checkpoint
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// train.log
    #[arg(long)]
    log: Option<PathBuf>,
    /// train.eval_interval
    #[arg(long)]
    eval_interval: Option<usize>,
    /// Progress lines on stderr every this many iterations (0: none).
    #[arg(long, default_value_t = 50)]
    print_every: usize,
}

impl TrainArgs {
    fn flag_overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("train.total_iters", self.iters.map(|v| v.to_string()));
        put("train.batch_size", self.batch_size.map(|v| v.to_string()));
        put("train.lr0", self.lr.map(|v| v.to_string()));
        put("train.seed", self.seed.map(|v| v.to_string()));
        put("train.crop", self.crop.clone());
        put("rpem.kind", self.rpe_kind.clone());
        put("train.checkpoint", self.checkpoint.as_ref().map(|p| p.display().to_string()));
        put("train.log", self.log.as_ref().map(|p| p.display().to_string()));
        put("train.eval_interval", self.eval_interval.map(|v| v.to_string()));
        out
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated class names; must match the checkpoint's class count.
    #[arg(long)]
    classes: Option<String>,
    /// Print CSV instead of a table.
    #[arg(long)]
    csv: bool,
    /// Also write the CSV report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// RGB image (P6).
    #[arg(long)]
    image: PathBuf,
    /// Label map output (P5); defaults to `<image>_labels.pgm`.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Heatmap output (P6); defaults to `<image>_<class>.ppm`.
    #[arg(long)]
    heatmap_out: Option<PathBuf>,
    /// Class whose confidence is drawn.
    #[arg(long, default_value = "sea")]
    class: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Scene size as HxW.
    #[arg(long, default_value = "64x96")]
    size: String,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, required_unless_present = "dump_rpe")]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    buckets: usize,
    /// Comma-separated class names.
    #[arg(long, default_value = "sea,sky,land,obstacle,tower,ship")]
    classes: String,
    /// Bucket CSV destination; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Row-index correlation CSV destination; stderr summary if absent.
    #[arg(long)]
    correlations: Option<PathBuf>,
    /// Print an encoding table as CSV instead.
    #[arg(long, num_args = 4, value_names = ["KIND", "M", "D_MODEL", "MODE"], conflicts_with = "manifest")]
    dump_rpe: Option<Vec<String>>,
    /// Seed of the noise encoding for --dump-rpe.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Input size as HxW; the config's crop if absent.
    #[arg(long)]
    size: Option<String>,
    /// Compare with the same network without RPEM blocks.
    #[arg(long)]
    compare_no_rpem: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Check the base-width-4 network instead of the tiny preset's width.
    #[arg(long)]
    tiny: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numeric { .. } => 3,
        Error::Contract(_) | Error::Io { .. } | Error::Load(_) | Error::Checkpoint(_) | Error::Data(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Infer(a) => infer(a),
        Command::Synth(a) => synth(a),
        Command::Stats(a) => stats(a),
        Command::Profile(a) => profile(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("rowseg: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_samples(manifest: &Path, classes: usize) -> Result<Vec<data::Sample>, Error> {
    Ok(Manifest::load(manifest)?.load_all(classes)?)
}

fn train(a: TrainArgs) -> Result<u8, Error> {
    let resume = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    let cfg = match &resume {
        Some(ckpt) => {
            if a.cfg.config.is_some() || !a.cfg.overrides.is_empty() || !a.flag_overrides().is_empty() {
                return Err(Error::Config("--resume takes its configuration from the checkpoint; drop the config flags".into()));
            }
            ckpt.config.clone()
        }
        None => {
            let mut cfg = a.cfg.resolve()?;
            for (k, v) in a.flag_overrides() {
                cfg.set(k, &v)?;
            }
            cfg.validate()?;
            cfg
        }
    };
    let samples = load_samples(&a.manifest, cfg.data.classes.len())?;
    eprintln!("training on {} samples for {} iterations", samples.len(), cfg.train.total_iters);
    let t0 = Instant::now();
    let every = a.print_every;
    let ckpt = train_loop_with(&cfg, &samples, resume.as_ref(), |row| {
        if every > 0 && (row.iter % every == 0 || row.iter + 1 == cfg.train.total_iters) {
            eprintln!("{}", describe(row));
        }
    })?;
    eprintln!("done in {:.1}s; checkpoint {} after {} iterations", t0.elapsed().as_secs_f64(), cfg.train.checkpoint.display(), ckpt.iteration);
    Ok(0)
}

fn eval(a: EvalArgs) -> Result<u8, Error> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let k = ckpt.config.net.num_classes;
    let names = match &a.classes {
        Some(list) => {
            let scheme = ClassScheme::parse(list)?;
            if scheme.len() != k {
                return Err(Error::Data(format!("--classes lists {} classes but the checkpoint was trained with {k}", scheme.len())));
            }
            scheme.names().to_vec()
        }
        None => ckpt.config.data.classes.names().to_vec(),
    };
    let samples = load_samples(&a.manifest, 255)?;
    let used = samples.iter().flat_map(|s| s.labels.data()).filter(|&&v| v != rowseg::losses::IGNORE).max().map_or(0, |&v| v as usize + 1);
    if used > k {
        return Err(Error::Data(format!("the labels use {used} classes but the checkpoint was trained with {k}")));
    }
    let trainer = Trainer::from_checkpoint(&ckpt)?;
    let cm = evaluate(&trainer.params, &samples, worker_count())?;
    let report = compute_report(&cm)?.with_names(&names)?;
    let style = if a.csv { ReportStyle::Csv } else { ReportStyle::Text };
    print!("{}", format_report(&report, style));
    if let Some(out) = &a.out {
        fs::write(out, format_report(&report, ReportStyle::Csv)).map_err(|e| Error::io(out, e))?;
    }
    Ok(0)
}

fn sibling(image: &Path, suffix: &str) -> PathBuf {
    let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    image.with_file_name(format!("{stem}_{suffix}"))
}

fn infer(a: InferArgs) -> Result<u8, Error> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let class = ckpt
        .config
        .data
        .classes
        .id(&a.class)
        .ok_or_else(|| Error::Data(format!("class '{}' is not one of {}", a.class, ckpt.config.data.classes.names().join(","))))?;
    let trainer = Trainer::from_checkpoint(&ckpt)?;
    let image = data::rgb_to_tensor(&netpbm::read(&a.image, PnmKind::Rgb)?);
    let logits = infer_logits(&trainer.params, &image)?;
    let labels_out = a.labels_out.unwrap_or_else(|| sibling(&a.image, "labels.pgm"));
    let heat_out = a.heatmap_out.unwrap_or_else(|| sibling(&a.image, &format!("{}.ppm", a.class)));
    data::save_label_map(&predict_labels(&logits)?, &labels_out)?;
    data::save_heatmap(&softmax_channel(&logits, class as usize)?, &heat_out)?;
    println!("{}\n{}", labels_out.display(), heat_out.display());
    Ok(0)
}

fn synth(a: SynthArgs) -> Result<u8, Error> {
    let (height, width) = parse_hw(&a.size)?;
    let cfg = SynthConfig { height, width, ..SynthConfig::default() };
    cfg.validate()?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut pairs = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let sample = synth_scene(&cfg, &mut rng::stream(a.seed, &format!("synth/{i}")))?;
        let (img, lbl) = (format!("scene_{i:04}.ppm"), format!("scene_{i:04}.pgm"));
        data::write_sample(&sample, &a.out.join(&img), &a.out.join(&lbl))?;
        pairs.push((img, lbl));
    }
    let manifest = a.out.join("manifest.txt");
    fs::write(&manifest, Manifest::render(&pairs)).map_err(|e| Error::io(&manifest, e))?;
    println!("{}", manifest.display());
    Ok(0)
}

fn stats(a: StatsArgs) -> Result<u8, Error> {
    if let Some(spec) = &a.dump_rpe {
        let (m, d) = (parse_count("M", &spec[1])?, parse_count("D_MODEL", &spec[2])?);
        let table = RpeTable::build(spec[0].parse()?, m, d, spec[3].parse()?, a.seed)?;
        print!("{}", table.to_csv());
        return Ok(0);
    }
    let scheme = ClassScheme::parse(&a.classes)?;
    let manifest = a.manifest.as_deref().expect("clap requires --manifest here");
    let samples = load_samples(manifest, scheme.len())?;
    let hist = row_histogram(samples.iter().map(|s| &s.labels), scheme.len(), a.buckets)?;
    let csv = hist.to_csv(scheme.names());
    match &a.out {
        Some(p) => fs::write(p, csv).map_err(|e| Error::io(p, e))?,
        None => print!("{csv}"),
    }
    let corr = hist.correlation_csv(scheme.names());
    match &a.correlations {
        Some(p) => fs::write(p, corr).map_err(|e| Error::io(p, e))?,
        None => eprint!("{corr}"),
    }
    Ok(0)
}

fn parse_count(what: &str, v: &str) -> Result<usize, Error> {
    v.parse().map_err(|_| Error::Config(format!("{what} must be a positive integer, got '{v}'")))
}

fn profile(a: ProfileArgs) -> Result<u8, Error> {
    let cfg = a.cfg.resolve()?;
    let hw = match &a.size {
        Some(s) => parse_hw(s)?,
        None => cfg.net.input_hw,
    };
    let with = count_flops(&cfg.net, hw)?;
    if a.compare_no_rpem {
        let base = rowseg::net::NetworkConfig { rpem_sites: RpemSites::NONE, ..cfg.net.clone() };
        let without = count_flops(&base, hw)?;
        print!("{}", format_comparison(&[("without RPEM", &without), ("with RPEM", &with)]));
    } else {
        print!("{}", with.format_rows());
    }
    Ok(0)
}

fn gradcheck(a: GradcheckArgs) -> Result<u8, Error> {
    let t0 = Instant::now();
    let cases = run_suite(a.tiny, a.seed)?;
    let width = cases.iter().map(|c| c.name.len()).max().unwrap_or(4);
    let mut failed = 0;
    for c in &cases {
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        failed += usize::from(!c.passed());
        println!("{:<width$}  {:>6} entries  max rel err {:.3e}  {verdict}", c.name, c.report.checked(), c.report.max_rel_err());
    }
    println!("{} cases, {failed} failed, {:.1}s", cases.len(), t0.elapsed().as_secs_f64());
    Ok(if failed == 0 { 0 } else { 3 })
}
