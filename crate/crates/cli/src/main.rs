//! `lthmm` — simulate datasets, fit the HDP-HMM variants, evaluate
//! inferred state matrices, and run the sampler-correctness suites.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lthmm::datagen::{
    gen_cocktail, gen_hdp_hmm, gen_lt_categorical, CocktailParams, LtCategoricalParams,
    SynthHdpParams,
};
use lthmm::engine::{
    checkpoint_load, checkpoint_save, pooled_state_matrix, run_chain, run_chains, summarize,
    ModelConfig, SamplerMutation, Variant,
};
use lthmm::engine::run::ChainOutput;
use lthmm::inference::{Observations, SequenceBatch};
use lthmm::io;
use lthmm::validation::geweke::{geweke_test, probe_mutation, GewekeConfig, MutationOutcome};
use lthmm::validation::conditional_oracle_suite;
use lthmm::RandomStream;

#[derive(Parser)]
#[command(name = "lthmm", version, about = "HDP-HMM with local transitions: simulators, Gibbs fitting, metrics, and validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate {
        #[command(subcommand)]
        which: SimulateCmd,
    },
    /// Run Gibbs chains against a dataset described by a config file.
    Fit(FitArgs),
    /// Score a saved state-matrix mean against ground truth.
    Evaluate(EvaluateArgs),
    /// Run the sampler-correctness suites.
    Validate(ValidateArgs),
}

#[derive(Subcommand)]
enum SimulateCmd {
    /// Grouped-conversation speaker data with a linear-Gaussian mix.
    Cocktail {
        #[arg(long, default_value_t = 6)]
        speakers: usize,
        #[arg(long, default_value_t = 2)]
        groups: usize,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value_t = 0.3)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draws from a plain HDP-HMM over binary states (no similarity bias).
    Hdp {
        #[arg(long, default_value_t = 8)]
        states: usize,
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = 6)]
        channels: usize,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 10.0)]
        gamma: f64,
        #[arg(long, default_value_t = 5.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 0.3)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Categorical sequences from a location-kernel (similarity-biased)
    /// model, split into train and held-out sets.
    LtCategorical {
        #[arg(long, default_value_t = 10)]
        states: usize,
        #[arg(long, default_value_t = 30)]
        vocab: usize,
        #[arg(long, default_value_t = 20)]
        train: usize,
        #[arg(long, default_value_t = 3)]
        test: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    /// JSON experiment config (model + data paths).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Override the iteration count.
    #[arg(long)]
    iters: Option<u64>,
    /// Override the burn-in.
    #[arg(long)]
    burn_in: Option<u64>,
    /// Override the trace/record cadence.
    #[arg(long)]
    thin: Option<u64>,
    /// Override the model variant.
    #[arg(long)]
    variant: Option<String>,
    /// Resume a single chain from a checkpoint instead of initializing.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Posterior state-matrix mean (probabilities) or 0/1 predictions.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth 0/1 matrix.
    #[arg(long)]
    truth: PathBuf,
    /// Where to write the metrics JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Samples per Geweke stream.
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the (slower) mutation-detection demonstrations.
    #[arg(long, default_value_t = false)]
    skip_mutations: bool,
    /// Directory for the JSON reports (printed to stdout regardless).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// On-disk experiment description: the model configuration plus where
/// the data lives.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExperimentFile {
    #[serde(flatten)]
    model: ModelConfig,
    data: DataConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DataConfig {
    /// "real_csv" for T×K observation matrices, "symbols" for integer
    /// sequence files.
    format: String,
    train: Vec<PathBuf>,
    #[serde(default)]
    test: Vec<PathBuf>,
    #[serde(default)]
    truth: Option<PathBuf>,
    /// Fixed emission weight matrix (linear-Gaussian protocol).
    #[serde(default)]
    weights: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Simulate { which } => simulate(which),
        Command::Fit(args) => fit(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Validate(args) => validate(args),
    }
}

fn simulate(cmd: SimulateCmd) -> anyhow::Result<()> {
    match cmd {
        SimulateCmd::Cocktail {
            speakers,
            groups,
            steps,
            channels,
            noise_sd,
            seed,
            out,
        } => {
            let mut params = CocktailParams::new(speakers, groups, steps, channels);
            params.noise_sd = noise_sd;
            params.seed = seed;
            let mut rng = RandomStream::new(seed);
            let data = gen_cocktail(&params, &mut rng)?;
            std::fs::create_dir_all(&out)?;
            io::write_real_csv(&out.join("obs.csv"), &data.observations)?;
            io::write_binary_csv(&out.join("truth.csv"), &data.truth)?;
            io::write_real_csv(&out.join("weights.csv"), &data.weights)?;
            write_json(&out.join("params.json"), &params)?;
            println!(
                "wrote cocktail dataset ({} steps, {} speakers, {} channels) to {}",
                steps,
                speakers,
                channels,
                out.display()
            );
        }
        SimulateCmd::Hdp {
            states,
            speakers,
            channels,
            steps,
            gamma,
            alpha,
            mu,
            noise_sd,
            seed,
            out,
        } => {
            let params = SynthHdpParams {
                trunc: states,
                gamma,
                alpha,
                speakers,
                channels,
                mu,
                steps,
                noise_sd,
                seed,
            };
            let mut rng = RandomStream::new(seed);
            let data = gen_hdp_hmm(&params, &mut rng)?;
            std::fs::create_dir_all(&out)?;
            io::write_real_csv(&out.join("obs.csv"), &data.observations)?;
            io::write_binary_csv(&out.join("truth.csv"), &data.truth)?;
            io::write_real_csv(&out.join("weights.csv"), &data.weights)?;
            write_json(&out.join("params.json"), &params)?;
            println!(
                "wrote HDP-HMM dataset ({} steps, {} generating states) to {}",
                steps,
                states,
                out.display()
            );
        }
        SimulateCmd::LtCategorical {
            states,
            vocab,
            train,
            test,
            steps,
            lambda,
            seed,
            out,
        } => {
            let mut params = LtCategoricalParams::new(states, vocab, train, test, steps);
            params.lambda = lambda;
            params.seed = seed;
            let mut rng = RandomStream::new(seed);
            let data = gen_lt_categorical(&params, &mut rng)?;
            std::fs::create_dir_all(&out)?;
            io::write_symbol_sequences(&out.join("train.txt"), &data.train)?;
            io::write_symbol_sequences(&out.join("test.txt"), &data.test)?;
            write_json(&out.join("params.json"), &params)?;
            println!(
                "wrote categorical dataset ({} train / {} test sequences) to {}",
                train,
                test,
                out.display()
            );
        }
    }
    Ok(())
}

fn load_batch(cfg: &DataConfig, paths: &[PathBuf], base: &Path) -> anyhow::Result<Option<SequenceBatch>> {
    if paths.is_empty() {
        return Ok(None);
    }
    let resolve = |p: &PathBuf| -> PathBuf {
        if p.is_absolute() {
            p.clone()
        } else {
            base.join(p)
        }
    };
    let observations = match cfg.format.as_str() {
        "real_csv" => {
            let seqs = paths
                .iter()
                .map(|p| io::read_real_csv(&resolve(p)))
                .collect::<lthmm::Result<Vec<_>>>()?;
            Observations::Real(seqs)
        }
        "symbols" => {
            let mut seqs = Vec::new();
            for p in paths {
                seqs.extend(io::read_symbol_sequences(&resolve(p))?);
            }
            Observations::Symbols(seqs)
        }
        other => bail!("unknown data format '{other}' (expected real_csv or symbols)"),
    };
    Ok(Some(SequenceBatch::new(observations)?))
}

fn fit(args: FitArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut exp: ExperimentFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.config.display()))?;

    if let Some(seed) = args.seed {
        exp.model.seed = seed;
    }
    if let Some(chains) = args.chains {
        exp.model.chains = chains;
    }
    if let Some(iters) = args.iters {
        exp.model.iterations = iters;
    }
    if let Some(burn_in) = args.burn_in {
        exp.model.burn_in = burn_in;
    }
    if let Some(thin) = args.thin {
        exp.model.thin = thin;
    }
    if let Some(variant) = &args.variant {
        exp.model.variant = variant.parse::<Variant>()?;
    }
    exp.model.validate()?;

    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut train = load_batch(&exp.data, &exp.data.train, &base)?
        .context("config lists no training data")?;
    if let Some(truth_path) = &exp.data.truth {
        let truth = io::read_binary_csv(&resolve_path(truth_path, &base))?;
        train = train.with_truth(truth)?;
    }
    let test = load_batch(&exp.data, &exp.data.test, &base)?;
    let weights = exp
        .data
        .weights
        .as_ref()
        .map(|p| io::read_real_csv(&resolve_path(p, &base)))
        .transpose()?;

    // symbol vocabularies must cover the union of train and test
    if let (Observations::Symbols(_), Some(test_batch)) = (&train.observations, &test) {
        let needed = train
            .observations
            .max_symbol()
            .unwrap_or(0)
            .max(test_batch.observations.max_symbol().unwrap_or(0))
            + 1;
        if let lthmm::engine::EmissionConfig::Categorical { vocab, .. } = &mut exp.model.emission {
            let v = vocab.unwrap_or(0);
            *vocab = Some(v.max(needed));
        }
    }

    std::fs::create_dir_all(&args.out)?;

    let outputs: Vec<ChainOutput> = if let Some(resume) = &args.resume {
        let state = checkpoint_load(resume)?;
        let chain = run_chain(
            &exp.model,
            &train,
            test.as_ref(),
            weights.as_ref(),
            Some(state),
            0,
        )?;
        vec![chain]
    } else {
        let (outputs, _) = run_chains(&exp.model, &train, test.as_ref(), weights.as_ref())?;
        outputs
    };
    let metrics = summarize(&exp.model, &train, &outputs)?;

    for out in &outputs {
        let dir = if outputs.len() == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("chain_{:02}", out.chain))
        };
        std::fs::create_dir_all(&dir)?;
        out.trace.save_csv(&dir.join("trace.csv"))?;
        checkpoint_save(&out.final_state, &dir.join("checkpoint.bin"))?;
    }
    if outputs.len() > 1 {
        // top-level convenience copies for the first chain
        outputs[0].trace.save_csv(&args.out.join("trace.csv"))?;
        checkpoint_save(&outputs[0].final_state, &args.out.join("checkpoint.bin"))?;
    }
    if let Some(mean) = pooled_state_matrix(&outputs) {
        io::write_prob_csv(&args.out.join("state_matrix_mean.csv"), &mean)?;
    }
    write_json(&args.out.join("metrics.json"), &metrics)?;

    println!(
        "fit complete: {} chain(s), {} iterations each; outputs in {}",
        outputs.len(),
        exp.model.iterations,
        args.out.display()
    );
    if let Some(f1) = metrics.pooled_f1 {
        println!("pooled F1 against ground truth: {f1:.4}");
    }
    if let Some(s) = metrics.mean_test_surprisal {
        println!("mean held-out surprisal: {s:.4}");
    }
    Ok(())
}

fn resolve_path(p: &Path, base: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Serialize)]
struct EvaluateReport {
    f1: f64,
    hamming_count: u64,
    hamming_rate: f64,
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let pred = io::read_prob_csv(&args.pred)?;
    let truth = io::read_binary_csv(&args.truth)?;
    let thresholded = pred.mapv(|p| u8::from(p >= 0.5));
    let f1 = lthmm::engine::f1_binary(&thresholded, &truth)?;
    let (hamming_count, hamming_rate) = lthmm::engine::hamming_metric(&thresholded, &truth)?;
    let report = EvaluateReport {
        f1,
        hamming_count,
        hamming_rate,
    };
    write_json(&args.out, &report)?;
    println!(
        "f1 {:.4}  hamming {} ({:.4} per cell)",
        f1, hamming_count, hamming_rate
    );
    Ok(())
}

#[derive(Serialize)]
struct MutationReport {
    mutation: String,
    detected: bool,
    max_abs_z: Option<f64>,
    diverged: bool,
}

fn validate(args: ValidateArgs) -> anyhow::Result<()> {
    let cfg = GewekeConfig::default();
    let mut rng = RandomStream::new(args.seed);
    let mut all_ok = true;

    println!("== conditional oracle suite ==");
    let oracle_report = conditional_oracle_suite(&mut rng)?;
    for check in &oracle_report.checks {
        println!(
            "  {:<42} {}  (statistic {:.3e}, threshold {:.3e})",
            check.name,
            if check.pass { "pass" } else { "FAIL" },
            check.statistic,
            check.threshold
        );
    }
    all_ok &= oracle_report.all_pass();

    println!("== joint-distribution (forward vs gibbs) test ==");
    let geweke = geweke_test(&cfg, args.samples, SamplerMutation::None, &mut rng)?;
    print!("{}", geweke.text_summary());
    all_ok &= geweke.pass();

    let mut mutation_reports = Vec::new();
    if !args.skip_mutations {
        println!("== mutation sensitivity ==");
        for mutation in SamplerMutation::ALL_CORRUPTIONS {
            let mut mrng = RandomStream::new(args.seed);
            let outcome = probe_mutation(&cfg, args.samples, mutation, &mut mrng)?;
            let detected = outcome.detected(cfg.z_threshold);
            match &outcome {
                MutationOutcome::SeparatedStatistics(r) => {
                    println!(
                        "  {:<28} max |z| = {:>7.2} -> {}",
                        format!("{mutation:?}"),
                        r.max_abs_z(),
                        if detected { "detected" } else { "NOT DETECTED" }
                    );
                    mutation_reports.push(MutationReport {
                        mutation: format!("{mutation:?}"),
                        detected,
                        max_abs_z: Some(r.max_abs_z()),
                        diverged: false,
                    });
                }
                MutationOutcome::ChainDiverged(msg) => {
                    println!(
                        "  {:<28} chain diverged ({msg}) -> detected",
                        format!("{mutation:?}")
                    );
                    mutation_reports.push(MutationReport {
                        mutation: format!("{mutation:?}"),
                        detected: true,
                        max_abs_z: None,
                        diverged: true,
                    });
                }
            }
            all_ok &= detected;
        }
    }

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        write_json(&out.join("oracles.json"), &oracle_report)?;
        write_json(&out.join("geweke.json"), &geweke)?;
        if !mutation_reports.is_empty() {
            write_json(&out.join("mutations.json"), &mutation_reports)?;
        }
    }

    if all_ok {
        println!("validation: all suites passed");
        Ok(())
    } else {
        bail!("validation failed");
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}
