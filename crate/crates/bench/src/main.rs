use anyhow::{bail, Context, Result};
use bbdec_bench::config::experiment_dem;
use bbdec_bench::decoder::PreparedDecoder;
use bbdec_bench::report::write_report;
use bbdec_bench::*;
use bbdec_core::bposd::BpConfig;
use bbdec_core::circuit::{annotate_noise, build_memory_circuit};
use bbdec_core::sim::{parse_shots, sample_shots, shots_to_text};
use bbdec_ml::{check_model_gradients, Batch, IterationPlan, Model};
use bbdec_nn::gradcheck::GradCheckOptions;
use bbdec_nn::Mode;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "bbdec", version, about = "Memory-experiment simulation and decoder benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Args, Clone)]
struct Options {
    /// JSON configuration; command-line flags fill only what it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// A preset name (bb72, bb144) or repN.
    #[arg(long, global = true, default_value = "bb72")]
    code: String,
    #[arg(long, global = true, default_value_t = 6)]
    rounds: usize,
    /// Physical error rate; repeat or comma-separate for a sweep.
    #[arg(long, global = true, value_delimiter = ',', default_value = "0.003")]
    p: Vec<f64>,
    #[arg(long, global = true, default_value_t = 1000)]
    shots: usize,
    #[arg(long, global = true, value_enum, default_value_t = DecoderKind::Bposd)]
    decoder: DecoderKind,
    #[arg(long, global = true, default_value_t = 0)]
    osd_order: usize,
    #[arg(long, global = true)]
    bp_iters: Option<usize>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Decode from X-check detectors only (BP-OSD default).
    #[arg(long, global = true)]
    x_only: Option<bool>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderKind {
    Bposd,
    Ml,
    Oracle,
}

#[derive(Subcommand)]
enum Command {
    /// Print code parameters and check commutation.
    BuildCode,
    /// Emit the syndrome-extraction circuit as text.
    BuildCircuit,
    /// Emit the detector error model as text.
    BuildDem,
    /// Sample shots from the detector error model.
    Sample,
    /// Decode shots read from a file produced by `sample`.
    Decode {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train a model from a training configuration and save a checkpoint.
    Train,
    /// Logical error rate sweep.
    BenchLer,
    /// Single-threaded per-shot decode times.
    BenchTiming,
    /// Paired training runs with and without the code-aware mask.
    AblateMask,
    /// Finite-difference check of the model gradients on a toy model.
    Gradcheck,
}

impl Options {
    fn decoder_spec(&self) -> Result<DecoderSpec> {
        Ok(match self.decoder {
            DecoderKind::Bposd => DecoderSpec::Bposd {
                bp: BpConfig {
                    max_iterations: self.bp_iters.unwrap_or(BpConfig::default().max_iterations),
                    ..BpConfig::default()
                },
                osd_order: self.osd_order,
            },
            DecoderKind::Ml => DecoderSpec::Ml {
                checkpoint: self.checkpoint.clone().context("--checkpoint is required for the ML decoder")?,
            },
            DecoderKind::Oracle => DecoderSpec::Oracle,
        })
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig {
                code: self.code.parse()?,
                rounds: self.rounds,
                p: self.p.clone(),
                shots: self.shots,
                decoder: self.decoder_spec()?,
                x_only: self.x_only,
                seed: 0,
                out_dir: None,
            },
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn training(&self) -> Result<TrainingConfig> {
        let path = self.config.as_ref().context("--config with a training configuration is required")?;
        let mut cfg = TrainingConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn single_p(&self) -> Result<f64> {
        match self.p.as_slice() {
            [p] => Ok(*p),
            _ => bail!("this command takes exactly one --p"),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let opts = &cli.opts;
    match cli.command {
        Command::BuildCode => {
            let spec: CodeSpec = opts.code.parse()?;
            let (code, _) = spec.build()?;
            let commute = code.hx.mul(&code.hz.transpose()).is_zero();
            let summary = serde_json::json!({
                "code": spec.label(),
                "n": code.n,
                "k": code.k,
                "x_checks": code.num_x_checks(),
                "z_checks": code.num_z_checks(),
                "checks_commute": commute,
            });
            emit(opts.out.as_deref(), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        }
        Command::BuildCircuit => {
            let (code, schedule) = opts.code.parse::<CodeSpec>()?.build()?;
            let circuit = build_memory_circuit(&code, opts.rounds, &schedule)?;
            let noisy = annotate_noise(circuit, opts.single_p()?)?;
            eprintln!("{} fault sites", noisy.fault_sites.len());
            emit(opts.out.as_deref(), &noisy.circuit.to_text())?;
        }
        Command::BuildDem => {
            let (code, schedule) = opts.code.parse::<CodeSpec>()?.build()?;
            let dem = experiment_dem(&code, &schedule, opts.rounds, opts.single_p()?)?;
            emit(opts.out.as_deref(), &dem.to_text())?;
        }
        Command::Sample => {
            let (code, schedule) = opts.code.parse::<CodeSpec>()?.build()?;
            let dem = experiment_dem(&code, &schedule, opts.rounds, opts.single_p()?)?;
            let shots = sample_shots(&dem, opts.shots, opts.seed.unwrap_or(0));
            emit(opts.out.as_deref(), &shots_to_text(&shots))?;
        }
        Command::Decode { ref input } => {
            let cfg = opts.experiment()?;
            let (code, schedule) = cfg.code.build()?;
            let dem = experiment_dem(&code, &schedule, cfg.rounds, cfg.p[0])?;
            let shots = parse_shots(&std::fs::read_to_string(input)?)?;
            if let Some(bad) = shots.iter().position(|s| s.detectors.len() != dem.num_detectors) {
                bail!("shot {bad} has {} detectors, the model has {}", shots[bad].detectors.len(), dem.num_detectors);
            }
            let decoder = PreparedDecoder::build(&cfg.decoder, &dem, cfg.effective_x_only(), None)?;
            let detectors: Vec<_> = shots.iter().map(|s| s.detectors.clone()).collect();
            let predicted = decoder.decode_all(&detectors)?;
            let errors = shots.iter().zip(&predicted).filter(|(s, e)| s.logical_flips != **e).count();
            let text: String = predicted.iter().map(|e| format!("{e}\n")).collect();
            emit(opts.out.as_deref(), &text)?;
            eprintln!("{errors} of {} shots mispredicted", shots.len());
        }
        Command::Train => {
            let cfg = opts.training()?;
            let out = opts.out.clone().context("--out checkpoint path is required")?;
            let (model, report) = cfg.train()?;
            let plan = report.plan.unwrap_or(IterationPlan {
                rounds: cfg.stages.last().map_or(1, |s| s.rounds),
                latent_rounds: 0,
                latent_outputs: 1,
            });
            model.save(&out, &plan)?;
            let trace = out.with_extension("loss.csv");
            std::fs::write(&trace, report.to_csv())?;
            eprintln!("saved {} ({} parameters), loss trace in {}", out.display(), model.num_parameters(), trace.display());
        }
        Command::BenchLer => {
            let cfg = opts.experiment()?;
            let report = run_ler_experiment(&cfg)?;
            for r in &report.rows {
                eprintln!("p={} errors={}/{} rate={:.3e} ± {:.1e}", r.p, r.errors, r.shots, r.rate, r.stderr);
            }
            match &cfg.out_dir {
                Some(dir) => {
                    write_report(dir, "ler", &report.to_csv(), "bench-ler", &cfg, &report)?;
                }
                None => print!("{}", report.to_csv()),
            }
        }
        Command::BenchTiming => {
            let cfg = opts.experiment()?;
            let report = run_timing_experiment(&cfg)?;
            let summary = report.summary_csv();
            match &cfg.out_dir {
                Some(dir) => {
                    write_report(dir, "timing", &report.to_csv(), "bench-timing", &cfg, &report.by_label())?;
                    std::fs::write(dir.join("timing_summary.csv"), &summary)?;
                }
                None => print!("{summary}"),
            }
        }
        Command::AblateMask => {
            let cfg = opts.training()?;
            let report = run_mask_ablation(&cfg)?;
            if let Some((masked, unmasked)) = report.final_smoothed() {
                eprintln!("final smoothed loss: masked {masked:.4}, unmasked {unmasked:.4}");
            }
            match &opts.out {
                Some(dir) => {
                    write_report(dir, "ablation", &report.to_csv(), "ablate-mask", &cfg, &report.final_smoothed())?;
                }
                None => print!("{}", report.to_csv()),
            }
        }
        Command::Gradcheck => {
            let spec: CodeSpec = opts.code.parse()?;
            let (code, schedule) = spec.build()?;
            let circuit = build_memory_circuit(&code, opts.rounds, &schedule)?;
            let timed = bbdec_core::sim::build_timed_dem(&annotate_noise(circuit, opts.single_p()?)?);
            let mut config = ModelSpec::toy().resolve(&code);
            config.encoder_layers = 1;
            config.decoder_layers = 1;
            let model = Model::<f64>::new(config, opts.seed.unwrap_or(0))?;
            let shots = bbdec_core::sim::sample_timed_shots(&timed, 2, opts.seed.unwrap_or(0));
            let batch = Batch::from_timed_shots(&timed.dem, &shots);
            let plan = IterationPlan {
                rounds: opts.rounds,
                latent_rounds: 0,
                latent_outputs: 1,
            };
            let masks = model.masks_for(&timed.dem);
            let options = GradCheckOptions {
                max_entries_per_param: Some(32),
                mode: Mode::Eval,
                ..GradCheckOptions::default()
            };
            let report = check_model_gradients(&model, &batch, &plan, masks.as_deref(), &options)?;
            println!(
                "checked {} entries in {} tensors, max relative error {:.3e}",
                report.checked, report.params_checked, report.max_relative_error
            );
        }
    }
    Ok(())
}
