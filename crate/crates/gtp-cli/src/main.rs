use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gtp_core::gradcheck::grad_check;
use gtp_core::gru::xavier;
use gtp_core::interaction::Activation;
use gtp_core::metrics::corpus_metrics;
use gtp_core::model::{Model, ModelDims, Variant};
use gtp_core::synth::{synth_generate, SynthConfig};
use gtp_core::train::{TrainConfig, TrainSample, Trainer};
use gtp_core::VideoSample;

use gtp_cli::error::CliError;
use gtp_cli::formats::{load_checkpoint, read_features, save_checkpoint};
use gtp_cli::heatmap::{write_pgm, write_text_grid};
use gtp_cli::manifest::{load_manifest, write_dataset};

#[derive(Parser)]
#[command(name = "gtp", about = "Sentence-specified video thumbnail selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset under a directory.
    Synth(SynthArgs),
    /// Train a model on a manifest and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Select thumbnail clips for one video-sentence pair.
    Infer(InferArgs),
    /// Verify analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Export attention and adjacency heatmaps for one pair.
    Heatmap(HeatmapArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    count: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    clips_min: usize,
    #[arg(long, default_value_t = 12)]
    clips_max: usize,
    #[arg(long, default_value_t = 16)]
    video_dim: usize,
    #[arg(long, default_value_t = 16)]
    word_dim: usize,
    #[arg(long, default_value_t = 6)]
    concepts: usize,
    #[arg(long, default_value_t = 5)]
    max_clips: usize,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    gcn_layers: usize,
    #[arg(long, default_value_t = 150.0)]
    lambda: f64,
    #[arg(long, default_value_t = 5)]
    max_clips: usize,
    #[arg(long, default_value = "full")]
    variant: String,
    #[arg(long, default_value = "rectifier")]
    activation: String,
}

impl ModelArgs {
    fn variant(&self) -> Result<Variant, CliError> {
        Variant::from_tag(&self.variant)
            .ok_or_else(|| CliError::Usage(format!("unknown variant {}", self.variant)))
    }

    fn activation(&self) -> Result<Activation, CliError> {
        match self.activation.as_str() {
            "rectifier" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(CliError::Usage(format!("unknown activation {other}"))),
        }
    }

    fn dims(&self, d_v: usize, d_w: usize) -> Result<ModelDims, CliError> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(CliError::Usage(format!("lambda {} must be finite and >= 0", self.lambda)));
        }
        let mut dims = ModelDims::full_scale(d_v, d_w);
        dims.hidden = self.hidden;
        dims.d_f = self.hidden;
        dims.h_p = self.hidden;
        dims.layer_count = self.gcn_layers;
        dims.lambda = self.lambda;
        dims.k = self.max_clips;
        dims.activation = self.activation()?;
        Ok(dims)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    decay_every: usize,
    #[arg(long, default_value = "on", value_parser = ["on", "off"])]
    teacher_forcing: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    clips: PathBuf,
    #[arg(long)]
    words: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 8)]
    video_dim: usize,
    #[arg(long, default_value_t = 8)]
    word_dim: usize,
    #[arg(long, default_value_t = 6)]
    clips: usize,
    #[arg(long, default_value_t = 5)]
    words: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    clips: PathBuf,
    #[arg(long)]
    words: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Heatmap(a) => cmd_heatmap(a),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        sample_count: a.count,
        t_min: a.clips_min,
        t_max: a.clips_max,
        d_v: a.video_dim,
        d_w: a.word_dim,
        concept_count: a.concepts,
        noise_rate: a.noise,
        k: a.max_clips,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let samples: Vec<VideoSample> = synth_generate(&config)
        .map_err(CliError::Usage)?
        .into_iter()
        .map(|s| s.sample)
        .collect();
    let manifest = write_dataset(&a.out, &samples)?;
    println!("wrote {} samples to {}", samples.len(), manifest.display());
    Ok(())
}

/// Check that every sample's feature widths match the first one.
fn feature_dims(samples: &[VideoSample]) -> Result<(usize, usize), CliError> {
    let d_v = samples[0].clips.cols();
    let d_w = samples[0].words.cols();
    for s in samples {
        if s.clips.cols() != d_v || s.words.cols() != d_w {
            return Err(CliError::Data(format!(
                "sample {}: feature widths {}x{} differ from {}x{}",
                s.id,
                s.clips.cols(),
                s.words.cols(),
                d_v,
                d_w
            )));
        }
    }
    Ok((d_v, d_w))
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let variant = a.model.variant()?;
    let samples = load_manifest(&a.manifest, a.model.max_clips)?;
    let (d_v, d_w) = feature_dims(&samples)?;
    let dims = a.model.dims(d_v, d_w)?;
    let train_samples: Vec<TrainSample> = samples
        .iter()
        .map(|s| TrainSample::from_video(s, dims.k))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(e.to_string()))?;

    let model = Model::init(dims, variant, a.seed);
    println!("samples {} params {} variant {}", train_samples.len(), model.param_count(), variant.tag());
    let config = TrainConfig {
        learning_rate: a.lr,
        decay_every: a.decay_every,
        epochs: a.epochs,
        seed: a.seed,
        k: a.model.max_clips,
        variant,
        teacher_forcing: a.teacher_forcing == "on",
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, config);
    for epoch in 0..a.epochs {
        let stats = trainer
            .train_epoch(&train_samples, epoch)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        println!("epoch {:04} loss {:.12e} grad {:.12e}", epoch, stats.mean_loss, stats.mean_grad_norm);
    }
    save_checkpoint(&a.out, &trainer.model)?;
    println!("checkpoint {}", a.out.display());
    Ok(())
}

fn evaluate(model: &Model, samples: &[VideoSample]) -> Result<gtp_core::MetricReport, CliError> {
    let preds: Vec<Vec<usize>> =
        samples.iter().map(|s| model.predict(&s.clips, &s.words, true).clips).collect();
    let anns: Vec<[Vec<usize>; 4]> = samples.iter().map(|s| s.annotations.clone()).collect();
    corpus_metrics(&preds, &anns).map_err(|e| CliError::Data(e.to_string()))
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let model = load_checkpoint(&a.checkpoint)?;
    let samples = load_manifest(&a.manifest, model.dims.k)?;
    let (d_v, d_w) = feature_dims(&samples)?;
    if d_v != model.dims.d_v || d_w != model.dims.d_w {
        return Err(CliError::Data(format!(
            "dataset widths {d_v}/{d_w} do not match checkpoint {}/{}",
            model.dims.d_v, model.dims.d_w
        )));
    }
    let report = evaluate(&model, &samples)?;
    println!("samples {}", report.sample_count);
    println!("precision {:.6}", report.precision);
    println!("recall {:.6}", report.recall);
    println!("f1 {:.6}", report.f1);
    println!("iou {:.6}", report.iou);
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Result<(), CliError> {
    let model = load_checkpoint(&a.checkpoint)?;
    let clips = read_features(&a.clips)?;
    let words = read_features(&a.words)?;
    if clips.cols() != model.dims.d_v || words.cols() != model.dims.d_w {
        return Err(CliError::Data(format!(
            "feature widths {}/{} do not match checkpoint {}/{}",
            clips.cols(),
            words.cols(),
            model.dims.d_v,
            model.dims.d_w
        )));
    }
    let pred = model.predict(&clips, &words, true);
    let text: Vec<String> = pred.clips.iter().map(usize::to_string).collect();
    println!("{}", text.join(" "));
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let variant = a.model.variant()?;
    let dims = a.model.dims(a.video_dim, a.word_dim)?;
    if a.clips < 2 {
        return Err(CliError::Usage(String::from("need at least two clips")));
    }
    let mut model = Model::init(dims, variant, a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(1));
    let clips = xavier(&mut rng, a.clips, a.video_dim);
    let words = xavier(&mut rng, a.words, a.word_dim);
    let targets = [1, a.clips - 1, a.clips];
    let report = grad_check(&mut model, &clips, &words, &targets, 1e-5, a.tolerance)
        .map_err(CliError::Numeric)?;
    println!(
        "gradcheck {}: worst {:.3e} at {} (tolerance {:.1e})",
        if report.pass { "PASS" } else { "FAIL" },
        report.worst,
        report.worst_name,
        report.tolerance
    );
    if !report.pass {
        return Err(CliError::Numeric(format!(
            "gradient mismatch {:.3e} at {}",
            report.worst, report.worst_name
        )));
    }
    Ok(())
}

fn cmd_heatmap(a: HeatmapArgs) -> Result<(), CliError> {
    let model = load_checkpoint(&a.checkpoint)?;
    let clips = read_features(&a.clips)?;
    let words = read_features(&a.words)?;
    let pred = model.predict(&clips, &words, true);
    let attention = pred
        .attention
        .ok_or_else(|| CliError::Data(String::from("this variant has no attention matrix")))?;
    let adjacency = pred
        .adjacency
        .ok_or_else(|| CliError::Data(String::from("this variant has no adjacency matrix")))?;
    std::fs::create_dir_all(&a.out)?;
    write_text_grid(&a.out.join("attention.tsv"), &attention)?;
    write_pgm(&a.out.join("attention.pgm"), &attention)?;
    write_text_grid(&a.out.join("adjacency.tsv"), &adjacency)?;
    write_pgm(&a.out.join("adjacency.pgm"), &adjacency)?;
    let text: Vec<String> = pred.clips.iter().map(usize::to_string).collect();
    println!("clips {}", text.join(" "));
    Ok(())
}
