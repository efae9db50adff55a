//! `echopose` command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use echopose::config::RunConfig;
use echopose::dataset::{augment_phase, deserialize_checkpoint, deserialize_dataset, ingest_files, read_pose_csv, read_wav, serialize_checkpoint, serialize_dataset, Dataset, Session};
use echopose::pipeline::{
    corpus_entries, extractor_for, load_recording, losses_csv, loso_sessions, parse_losses_csv, pca_diagnostic, predict_sessions, recording_sessions,
    synth_corpus, train, Recording, RunPaths,
};
use echopose::plot::{loss_svg, pca_svg, skeleton_svg, SkeletonStyle};
use echopose::{Error, Result};

macro_rules! overrides {
    ($($field:ident => $key:literal $(| $alias:literal)?;)*) => {
        /// Flags named after configuration keys; they override the config file.
        #[derive(Args, Debug, Default)]
        struct Overrides {
            $(
                #[arg(long = $key, global = true, value_name = "VALUE", allow_hyphen_values = true $(, visible_alias = $alias)?)]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
                $(
                    if let Some(v) = &self.$field {
                        cfg.set($key, v)?;
                    }
                )*
                Ok(())
            }
        }
    };
}

overrides! {
    sample_rate => "sample_rate";
    period_len => "period_len";
    f_lo => "f_lo";
    f_hi => "f_hi";
    b => "b";
    n_fft => "n_fft";
    n => "n";
    k => "k";
    w_alpha => "w_alpha" | "walpha";
    w_beta => "w_beta" | "wbeta";
    w_gamma => "w_gamma" | "wgamma";
    lr => "lr";
    lr_disc => "lr_disc";
    batch_size => "batch_size";
    epochs => "epochs";
    max_steps => "max_steps";
    seed => "seed";
    alphas => "alphas";
    subjects => "subjects";
    distances => "distances";
    duration_s => "duration_s";
    motions => "motions";
    held_out => "held_out";
    room_dims => "room_dims";
    speaker_pos => "speaker_pos";
    mic_pos => "mic_pos";
    wall_reflectance => "wall_reflectance";
    scatter_gain => "scatter_gain";
    occlusion_radius => "occlusion_radius";
    occlusion_sigma => "occlusion_sigma";
    noise_snr_db => "noise_snr_db";
    speed_of_sound => "speed_of_sound";
    data_dir => "data_dir";
    out_dir => "out_dir";
}

#[derive(Parser, Debug)]
#[command(name = "echopose", version, about = "Acoustic 3D pose estimation: synthesize, train, evaluate, plot")]
struct Cli {
    /// Flat `key = value` configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic corpus (WAV, pose CSV, dataset file, manifest) into data_dir.
    Synth,
    /// Turn one WAV and its pose CSV into a dataset file.
    Ingest(FilePair),
    /// Like ingest, followed by the phase-shifted copies for every alpha.
    Augment(FilePair),
    /// Leave-one-subject-out training on the corpus in data_dir.
    Train,
    /// Evaluate a checkpoint on the held-out subject (or the training subjects).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
    },
    /// Write an SVG diagnostic.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct FilePair {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    csv: PathBuf,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Split {
    Test,
    Train,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PlotKind {
    Pca,
    Skeleton,
    Loss,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(value_enum)]
    kind: PlotKind,
    /// Output SVG; defaults to `<out_dir>/<kind>.svg`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model for skeleton plots.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Loss CSV; defaults to `<out_dir>/losses.csv`.
    #[arg(long)]
    losses: Option<PathBuf>,
    /// Keep every stride-th frame in the PCA scatter.
    #[arg(long, default_value_t = 4)]
    stride: usize,
    /// Skeleton pairs to draw.
    #[arg(long, default_value_t = 6)]
    frames: usize,
    /// First predicted frame of the skeleton strip.
    #[arg(long, default_value_t = 0)]
    start: usize,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) => 2,
        Error::Format(_) | Error::Wav(_) | Error::Io(_) => 3,
        Error::Numeric(_) => 4,
        Error::Autodiff(_) => 1,
    }
}

fn recordings(cfg: &RunConfig) -> Result<impl Iterator<Item = Result<Recording>> + '_> {
    let entries = corpus_entries(&cfg.data_dir)?;
    Ok(entries.into_iter().map(move |(stem, _, _)| load_recording(&cfg.data_dir, &stem)))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn dataset_of(cfg: &RunConfig, sessions: Vec<Session>) -> Dataset {
    Dataset { sample_rate: cfg.sample_rate, period_len: cfg.period_len as u32, b: cfg.b as u32, sessions }
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let (train_s, test_s) = loso_sessions(cfg, recordings(cfg)?)?;
    let frames = |s: &[Session]| s.iter().map(|s| s.records.len()).sum::<usize>();
    eprintln!("holding out subject {}: {} training frames, {} test frames", cfg.held_out, frames(&train_s), frames(&test_s));
    let paths = RunPaths { dir: cfg.out_dir.clone() };
    fs::create_dir_all(&paths.dir)?;
    write(&paths.dir.join("config.txt"), &cfg.to_text())?;
    let outcome = train(
        cfg,
        &train_s,
        |r| {
            if r.step % 50 == 0 {
                eprintln!("step {:>6}  pose {:.4}  smooth {:.4}  std {:.4}  disc {:.4}  total {:.4}", r.step, r.l_pose, r.l_smooth, r.l_std, r.l_disc_ce, r.total);
            }
        },
        |epoch, ck| {
            eprintln!("epoch {} done", epoch + 1);
            serialize_checkpoint(&paths.epoch_checkpoint(epoch), ck)
        },
    )?;
    serialize_checkpoint(&paths.checkpoint(), &outcome.checkpoint)?;
    write(&paths.losses(), &losses_csv(&outcome.losses))?;
    let report = predict_sessions(&outcome.checkpoint, &test_s)?.report()?;
    write(&paths.report_csv(), &report.to_csv())?;
    write(&paths.report_txt(), &report.to_text())?;
    println!("held-out subject {}\n{}", cfg.held_out, report.to_text());
    Ok(())
}

fn split_sessions(cfg: &RunConfig, split: Split) -> Result<Vec<Session>> {
    let fx = extractor_for(cfg)?;
    let mut out = Vec::new();
    for rec in recordings(cfg)? {
        let rec = rec?;
        if (rec.subject_id == cfg.held_out) == (split == Split::Test) {
            out.extend(recording_sessions(&rec, &[], false, &fx)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Invalid(format!("no recordings for the {split:?} side of subject {}", cfg.held_out)));
    }
    Ok(out)
}

fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, split: Split) -> Result<()> {
    let ck = deserialize_checkpoint(checkpoint)?;
    if ck.estimator.config.b != cfg.b {
        return Err(Error::Invalid(format!("checkpoint expects {} mel bands, configuration has {}", ck.estimator.config.b, cfg.b)));
    }
    let sessions = split_sessions(cfg, split)?;
    let report = predict_sessions(&ck, &sessions)?.report()?;
    let paths = RunPaths { dir: cfg.out_dir.clone() };
    write(&paths.report_csv(), &report.to_csv())?;
    write(&paths.report_txt(), &report.to_text())?;
    println!("{}", report.to_text());
    Ok(())
}

fn cmd_plot(cfg: &RunConfig, args: &PlotArgs) -> Result<()> {
    let name = match args.kind {
        PlotKind::Pca => "pca",
        PlotKind::Skeleton => "skeleton",
        PlotKind::Loss => "loss",
    };
    let out = args.out.clone().unwrap_or_else(|| cfg.out_dir.join(format!("{name}.svg")));
    let svg = match args.kind {
        PlotKind::Pca => {
            let ds = deserialize_dataset(&cfg.data_dir.join("dataset.apds"))?;
            let diag = pca_diagnostic(cfg, &ds.sessions, args.stride)?;
            let ev = &diag.pca.explained_variance;
            let t = diag.pca.total_variance;
            pca_svg(&diag.series, Some([ev[0] / t, ev[1] / t]))?
        }
        PlotKind::Skeleton => {
            let path = args.checkpoint.clone().ok_or_else(|| Error::Invalid("skeleton plots need --checkpoint".into()))?;
            let ck = deserialize_checkpoint(&path)?;
            let sessions = split_sessions(cfg, Split::Test)?;
            let p = predict_sessions(&ck, &sessions[..1])?;
            let end = (args.start + args.frames).min(p.pred.len());
            if args.start >= end {
                return Err(Error::Invalid(format!("start frame {} is past the {} predicted frames", args.start, p.pred.len())));
            }
            skeleton_svg(&p.gt[args.start..end], &p.pred[args.start..end], SkeletonStyle::default())?
        }
        PlotKind::Loss => {
            let path = args.losses.clone().unwrap_or_else(|| RunPaths { dir: cfg.out_dir.clone() }.losses());
            loss_svg(&parse_losses_csv(&fs::read_to_string(path)?)?)?
        }
    };
    write(&out, &svg)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Error::Invalid("no command given; see --help".into()));
    };
    match command {
        Command::Synth => {
            let manifest = synth_corpus(&cfg, &cfg.data_dir)?;
            print!("{manifest}");
        }
        Command::Ingest(f) => {
            let s = ingest_files(&f.wav, &f.csv, &extractor_for(&cfg)?)?;
            println!("{} frames", s.records.len());
            serialize_dataset(&f.out, &dataset_of(&cfg, vec![s]))?;
        }
        Command::Augment(f) => {
            let audio = read_wav(&f.wav)?;
            let rows = read_pose_csv(&f.csv)?;
            let sessions = augment_phase(&audio, &rows, &cfg.alphas, &extractor_for(&cfg)?)?;
            for s in &sessions {
                println!("shift {:.4}: {} frames", s.shift, s.records.len());
            }
            serialize_dataset(&f.out, &dataset_of(&cfg, sessions))?;
        }
        Command::Train => cmd_train(&cfg)?,
        Command::Eval { checkpoint, split } => cmd_eval(&cfg, checkpoint, *split)?,
        Command::Plot(args) => cmd_plot(&cfg, args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("echopose: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
