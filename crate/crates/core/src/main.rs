use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gtcn::data::io::{read_png, write_png, MANIFEST};
use gtcn::data::{export, ingest, sample_noise, subsample, synth_generate, Dataset, IngestOptions, SynthConfig};
use gtcn::metrics::{self, plot, report, EvalReport, ScoreSet, FAR_TARGETS};
use gtcn::models::GtcnModel;
use gtcn::trainer::{self, parse_kv, TrainConfig};
use gtcn::{Error, Result, Tensor};

#[derive(Parser)]
#[command(name = "gtcn", version, about = "Translation-augmented training of a compact image classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic texture dataset to PNGs plus a manifest.
    Synth(SynthArgs),
    /// Train a model on a manifest dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Translate one image to the other class several times.
    Translate(TranslateArgs),
    /// Render an SVG plot from a training log or a score file.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Images per class across both splits.
    #[arg(long, default_value_t = 600)]
    per_class: usize,
    /// Fraction of each class placed in the test split.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 64)]
    res: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    contrast: Option<f32>,
    #[arg(long)]
    noise: Option<f32>,
    #[arg(long)]
    frequency: Option<f32>,
    /// Seed of the class-independent scene structure.
    #[arg(long, default_value_t = 0)]
    structure_seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// File of `key = value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated subset of joint,af,ql,st (or all, none).
    #[arg(long)]
    toggles: Option<String>,
    /// Fraction of the training split to keep.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    m: Option<usize>,
    /// Margin preset: face, dogs-cats or artist.
    #[arg(long)]
    margins: Option<String>,
    #[arg(long)]
    gan_width: Option<usize>,
    #[arg(long)]
    gan_blocks: Option<usize>,
    #[arg(long)]
    disc_width: Option<usize>,
    #[arg(long)]
    fine_tune_epochs: Option<usize>,
    /// Report test accuracy after every epoch.
    #[arg(long)]
    epoch_eval: bool,
    /// Resize images to this side length while loading.
    #[arg(long)]
    res: Option<usize>,
    /// Extra `key=value` overrides, applied after all other flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "eval")]
    out: PathBuf,
    /// Second checkpoint whose binary scores are fused with the first.
    #[arg(long)]
    fuse: Option<PathBuf>,
    #[arg(long, default_value_t = metrics::FUSE_RS)]
    w1: f64,
    #[arg(long, default_value_t = metrics::FUSE_CT)]
    w2: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Ab,
    Ba,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    direction: Direction,
    #[arg(long, default_value_t = 3)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlotKind {
    Roc,
    Hist,
    Alpha,
    Pca,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, value_enum)]
    kind: PlotKind,
    /// Training log CSV (alpha plots).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Score CSV written by `eval` (roc, hist and pca plots).
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        info!("no --seed given; using {s}");
        s
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_owned(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn load_dataset(dir: &Path, res: Option<usize>) -> Result<Dataset> {
    ingest(dir, &dir.join(MANIFEST), &IngestOptions { res })
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.test_fraction) {
        return Err(Error::InvalidArgument(format!("--test-fraction must lie in [0,1), got {}", a.test_fraction)));
    }
    let test = (a.per_class as f64 * a.test_fraction).round() as usize;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        classes: a.classes,
        per_class: a.per_class.saturating_sub(test),
        test_per_class: test,
        res: a.res,
        structure_seed: a.structure_seed,
        contrast: a.contrast.unwrap_or(d.contrast),
        frequency: a.frequency.unwrap_or(d.frequency),
        noise: a.noise.unwrap_or(d.noise),
    };
    let ds = synth_generate(&cfg, seed_or_random(a.seed))?;
    let manifest = export(&ds, &a.out)?;
    println!(
        "wrote {} train and {} test images; manifest {}",
        ds.train.len(),
        ds.test.len(),
        manifest.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = TrainConfig::default();
    let mut fraction = 1.0;
    let mut seeded = false;
    let mut apply = |cfg: &mut TrainConfig, key: &str, value: &str| -> Result<()> {
        match key {
            "fraction" => {
                fraction = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `fraction`")))?
            }
            _ => cfg.set(key, value)?,
        }
        seeded |= key == "seed";
        Ok(())
    };
    if let Some(path) = &a.config {
        for (k, v) in parse_kv(&read(path)?)? {
            apply(&mut cfg, &k, &v)?;
        }
    }
    let flags = [
        ("mode", a.mode),
        ("toggles", a.toggles),
        ("fraction", a.fraction.map(|v| v.to_string())),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("base_lr", a.lr.map(|v| v.to_string())),
        ("m", a.m.map(|v| v.to_string())),
        ("margins", a.margins),
        ("gan_width", a.gan_width.map(|v| v.to_string())),
        ("gan_blocks", a.gan_blocks.map(|v| v.to_string())),
        ("disc_width", a.disc_width.map(|v| v.to_string())),
        ("fine_tune_epochs", a.fine_tune_epochs.map(|v| v.to_string())),
        ("epoch_eval", a.epoch_eval.then(|| "true".to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            apply(&mut cfg, k, &v)?;
        }
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        apply(&mut cfg, k.trim(), v)?;
    }
    if !seeded {
        cfg.seed = seed_or_random(None);
    }
    cfg.checkpoint_dir = Some(a.out.clone());
    cfg.validate()?;

    let mut ds = load_dataset(&a.data, a.res)?;
    if fraction < 1.0 {
        ds = subsample(&ds, fraction, cfg.seed)?;
    }
    let mut resolved: String = cfg.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    resolved.push_str(&format!("fraction = {fraction}\n"));
    write(&a.out.join("config.txt"), &resolved)?;
    info!(
        "training {} on {} images ({} classes, {}×{}), seed {}",
        cfg.mode,
        ds.train.len(),
        ds.num_classes(),
        ds.res,
        ds.res,
        cfg.seed
    );

    let (model, log) = trainer::train(&cfg, &ds)?;
    log.write_csv(&a.out.join("train_log.csv"))?;
    if ds.num_classes() > 2 && cfg.fine_tune_epochs > 0 {
        model.save(&a.out.join("pre_finetune.gtcn"))?;
        let (tuned, ft_log) = trainer::fine_tune(&model, &ds, cfg.fine_tune_epochs, &cfg)?;
        ft_log.write_csv(&a.out.join("finetune_log.csv"))?;
        tuned.save(&a.out.join("final.gtcn"))?;
    }
    println!("final checkpoint {}", a.out.join("final.gtcn").display());
    Ok(())
}

fn scores_csv(logits: &Tensor, labels: &[usize], fused: Option<&ScoreSet>) -> Result<String> {
    let k = logits.shape()[1];
    let mut s = String::from("label,score");
    for c in 0..k {
        s.push_str(&format!(",logit_{c}"));
    }
    s.push('\n');
    for (i, (row, &l)) in logits.data().chunks(k).zip(labels).enumerate() {
        let score = match fused {
            Some(f) => f.scores[i].to_string(),
            None => metrics::binary_score(row).map(|v| v.to_string()).unwrap_or_default(),
        };
        s.push_str(&format!("{l},{score}"));
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    Ok(s)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = GtcnModel::load(&a.model)?;
    let ds = load_dataset(&a.data, None)?;
    let check = |m: &GtcnModel| -> Result<()> {
        if m.arch.res != ds.res {
            return Err(Error::InvalidArgument(format!(
                "model resolution {} does not match data resolution {}",
                m.arch.res, ds.res
            )));
        }
        if m.arch.classes != ds.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "model has {} classes but the data has {}",
                m.arch.classes,
                ds.num_classes()
            )));
        }
        Ok(())
    };
    check(&model)?;
    if ds.test.is_empty() {
        return Err(Error::Dataset("the dataset has no test split".into()));
    }
    let labels: Vec<usize> = ds.test.iter().map(|im| im.label).collect();
    let logits = trainer::predict_images(&model, &ds.test)?;
    let (report, fused): (EvalReport, Option<ScoreSet>) = match &a.fuse {
        Some(path) => {
            let other = GtcnModel::load(path)?;
            check(&other)?;
            if ds.num_classes() != 2 {
                return Err(Error::InvalidArgument("score fusion needs a binary task".into()));
            }
            let s1 = ScoreSet::from_logits(&logits, &labels)?;
            let s2 = ScoreSet::from_logits(&trainer::predict_images(&other, &ds.test)?, &labels)?;
            let fused = s1.fuse(&s2, a.w1, a.w2)?;
            (metrics::evaluate_scores(&fused, &FAR_TARGETS)?, Some(fused))
        }
        None => (metrics::evaluate_logits(&logits, &labels, &FAR_TARGETS)?, None),
    };
    let text = report.to_text();
    print!("{text}");
    write(&a.out.join("report.txt"), &text)?;
    write(&a.out.join("report.csv"), &report.to_csv())?;
    write(&a.out.join("scores.csv"), &scores_csv(&logits, &labels, fused.as_ref())?)?;
    if let Some(curve) = &report.roc {
        write(&a.out.join("roc.csv"), &report::roc_csv(curve))?;
        write(&a.out.join("roc.svg"), &plot::roc_svg(&[("model", curve)]))?;
    }
    Ok(())
}

fn cmd_translate(a: TranslateArgs) -> Result<()> {
    let model = GtcnModel::load(&a.model)?;
    let tr = model
        .translators
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("checkpoint has no translators".into()))?;
    let (fwd, back) = match a.direction {
        Direction::Ab => (&tr.g_ab, &tr.g_ba),
        Direction::Ba => (&tr.g_ba, &tr.g_ab),
    };
    let img = read_png(&a.input)?;
    if img.shape()[0] != model.arch.res || img.shape()[1] != model.arch.res {
        return Err(Error::InvalidArgument(format!(
            "image is {}×{} but the model expects {}×{}",
            img.shape()[1],
            img.shape()[0],
            model.arch.res,
            model.arch.res
        )));
    }
    let res = model.arch.res;
    let x = img.reshape(&[1, res, res, 3])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_or_random(a.seed));
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let mut first = None;
    for i in 0..a.samples.max(1) {
        let y = fwd.translate(&x, &sample_noise(1, res / 4, &mut rng))?;
        write_png(&y.clone().reshape(&[res, res, 3])?, &a.out.join(format!("translated_{i:03}.png")))?;
        first.get_or_insert(y);
    }
    let first = first.expect("at least one sample");
    let rec = back.translate(&first, &sample_noise(1, res / 4, &mut rng))?;
    write_png(&rec.clone().reshape(&[res, res, 3])?, &a.out.join("reconstruction.png"))?;
    println!("reconstruction_l1 = {}", rec.mean_abs_diff(&x)?);
    Ok(())
}

/// Rows of a score CSV: label, optional score and logits.
fn read_scores(path: &Path) -> Result<Vec<(usize, Option<f64>, Vec<f64>)>> {
    let text = read(path)?;
    let bad = |line: usize| Error::Format(format!("{}: malformed line {line}", path.display()));
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 2 {
                return Err(bad(i + 1));
            }
            let label = f[0].parse().map_err(|_| bad(i + 1))?;
            let score = if f[1].is_empty() {
                None
            } else {
                Some(f[1].parse().map_err(|_| bad(i + 1))?)
            };
            let logits = f[2..].iter().map(|v| v.parse().map_err(|_| bad(i + 1))).collect::<Result<_>>()?;
            Ok((label, score, logits))
        })
        .collect()
}

fn score_set(rows: &[(usize, Option<f64>, Vec<f64>)]) -> Result<ScoreSet> {
    let scores = rows
        .iter()
        .map(|r| r.1.ok_or_else(|| Error::Format("score column is empty; ROC and histograms need a binary task".into())))
        .collect::<Result<Vec<_>>>()?;
    ScoreSet::new(scores, rows.iter().map(|r| r.0 == 0).collect())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.clone()
            .ok_or_else(|| Error::InvalidArgument(format!("this plot kind needs --{flag}")))
    };
    let svg = match a.kind {
        PlotKind::Alpha => {
            let path = need(&a.log, "log")?;
            let text = read(&path)?;
            let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
            let col = |name: &str| {
                header
                    .iter()
                    .position(|h| *h == name)
                    .ok_or_else(|| Error::Format(format!("{}: no `{name}` column", path.display())))
            };
            let (s, al, be) = (col("step")?, col("alpha")?, col("beta")?);
            let rows = text
                .lines()
                .skip(1)
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    let f: Vec<&str> = l.split(',').collect();
                    let get = |i: usize| {
                        f.get(i)
                            .and_then(|v| v.parse::<f64>().ok())
                            .ok_or_else(|| Error::Format(format!("{}: malformed row `{l}`", path.display())))
                    };
                    Ok((get(s)?, get(al)?, get(be)?))
                })
                .collect::<Result<Vec<_>>>()?;
            plot::alpha_svg(&rows)
        }
        PlotKind::Roc => {
            let set = score_set(&read_scores(&need(&a.scores, "scores")?)?)?;
            plot::roc_svg(&[("model", &metrics::roc(&set)?)])
        }
        PlotKind::Hist => {
            let set = score_set(&read_scores(&need(&a.scores, "scores")?)?)?;
            plot::histogram_svg(&set, a.bins, ("class 0", "class 1"))
        }
        PlotKind::Pca => {
            let rows = read_scores(&need(&a.scores, "scores")?)?;
            let logits: Vec<Vec<f64>> = rows.iter().map(|r| r.2.clone()).collect();
            let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let points = metrics::pca_project(&logits, 2)?;
            let k = labels.iter().max().map_or(0, |m| m + 1);
            let names: Vec<String> = (0..k).map(|c| format!("class {c}")).collect();
            plot::pca_svg(&points, &labels, &names)
        }
    };
    write(&a.out, &svg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFiniteLoss { .. } | Error::NonFinite { .. } => 3,
        Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GTCN_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidArgument(format!("GTCN_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Translate(a) => cmd_translate(a),
        Command::Plot(a) => cmd_plot(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error[{code}]: {}", e.to_string().replace('\n', " "));
            ExitCode::from(code)
        }
    }
}
