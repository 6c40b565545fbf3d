use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdkg::config::{ExperimentConfig, Profile};
use fdkg::error::{FdkgError, Result};
use fdkg::formats::{self, chunk_keys};
use fdkg::pipeline::{self, SweepAxis};
use fdkg::report::{randomness_details_csv, randomness_summary_csv, ReportFormat};
use fdkg_core::randomness::{run_suite, BitStream, SuiteConfig};

#[derive(Parser)]
#[command(name = "fdkg", version, about = "Secret key generation experiments for FDD-OFDM links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON experiment config, merged over the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// Overrides the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p, self.profile)?,
            None => ExperimentConfig::profile(self.profile),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm on every target environment and SNR.
    Run {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Repeat the run over values of one hyper-parameter.
    Sweep {
        #[command(flatten)]
        args: ConfigArgs,
        /// One of snr, n_ad, g_ad, g_tr, e_batch.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the randomness tests on a key dump.
    Nist {
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Re-cut the concatenated dump into keys of this many bits.
        #[arg(long)]
        key_bits: Option<usize>,
        #[arg(long, default_value_t = usize::MAX)]
        max_keys: usize,
    },
    /// Model file utilities.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Write the channel datasets of a config to disk.
    Dataset {
        #[command(flatten)]
        args: ConfigArgs,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print the layer layout and normalizer summary of a model file.
    Inspect { path: PathBuf },
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| FdkgError::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| FdkgError::io(path, e))
}

fn run(args: &ConfigArgs) -> Result<()> {
    let cfg = args.load()?;
    let out = &args.out;
    create_dir(&out.join("models"))?;
    write(&out.join("config.json"), &cfg.to_json())?;
    let art = pipeline::run_pipeline(&cfg)?;
    art.report.emit(ReportFormat::Csv, &out.join("report.csv"))?;
    art.report.emit(ReportFormat::Json, &out.join("report.json"))?;
    for (alg, env, net) in &art.models {
        formats::save_model(&out.join("models").join(format!("{}_env{env}.fdkg", alg.name())), net, &art.alice_norm)?;
    }
    if !art.keys.is_empty() {
        formats::write_key_dump(&out.join("keys.txt"), &art.keys)?;
        write(&out.join("randomness.csv"), &randomness_details_csv(&art.randomness_details))?;
        write(&out.join("randomness_summary.csv"), &randomness_summary_csv(&art.report.randomness))?;
    }
    if !art.shared.meta_loss_history.is_empty() {
        let mut s = String::from("iteration,l_total\n");
        for (i, l) in art.shared.meta_loss_history.iter().enumerate() {
            s.push_str(&format!("{i},{}\n", fdkg::report::fmt_sig(*l)));
        }
        write(&out.join("meta_loss.csv"), &s)?;
    }
    print!("{}", art.report.to_csv());
    Ok(())
}

fn sweep(args: &ConfigArgs, axis: SweepAxis, values: &[f64]) -> Result<()> {
    let cfg = args.load()?;
    create_dir(&args.out)?;
    let rep = pipeline::sweep(&cfg, axis, values)?;
    let text = rep.to_csv();
    write(&args.out.join(format!("sweep_{}.csv", axis.name())), &text)?;
    print!("{text}");
    Ok(())
}

fn nist(keys: &Path, out: &Path, key_bits: Option<usize>, max_keys: usize) -> Result<()> {
    let mut streams = formats::read_key_dump(keys)?;
    if let Some(k) = key_bits {
        if k == 0 {
            return Err(FdkgError::Config("--key-bits must be positive".into()));
        }
        let all: Vec<u8> = streams.iter().flat_map(|s| s.bits().iter().copied()).collect();
        streams = chunk_keys(&all, k, max_keys).into_iter().map(BitStream::new).collect::<fdkg_core::Result<_>>()?;
    } else {
        streams.truncate(max_keys);
    }
    if streams.is_empty() {
        return Err(FdkgError::Config(format!("{}: no keys", keys.display())));
    }
    let suite = run_suite(&streams, &SuiteConfig::default())?;
    write(out, &randomness_details_csv(&suite.details))?;
    print!("{}", randomness_summary_csv(&suite.summary));
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let (net, norm) = formats::load_model(path)?;
    let dims: Vec<String> = net.dims().iter().map(|d| d.to_string()).collect();
    println!("dims: {}", dims.join(" -> "));
    println!("parameters: {}", net.n_params());
    println!("bytes (f64): {}", 8 * net.n_params());
    let degenerate = norm.degenerate_columns();
    println!("normalizer: {} columns, {} degenerate", norm.dim(), degenerate.len());
    Ok(())
}

fn dataset(args: &ConfigArgs) -> Result<()> {
    let cfg = args.load()?;
    create_dir(&args.out)?;
    let data = pipeline::generate_datasets(&cfg)?;
    let eff = |s: &fdkg_core::channel::EnvironmentSpec| pipeline::effective_env_spec(s, cfg.seed);
    for (spec, ds) in cfg.environments.source.iter().zip(&data.source) {
        let p = args.out.join(format!("source_env{}.fdkg-ds", spec.env_id));
        formats::save_dataset(&p, ds, &eff(spec), &cfg.ofdm)?;
        println!("{}", p.display());
    }
    for t in &data.targets {
        let id = t.spec.env_id;
        let p = args.out.join(format!("target_env{id}_adapt.fdkg-ds"));
        formats::save_dataset(&p, &t.adapt, &eff(&t.spec), &cfg.ofdm)?;
        println!("{}", p.display());
        for (snr, ds) in &t.tests {
            let p = args.out.join(format!("target_env{id}_test_{snr}dB.fdkg-ds"));
            formats::save_dataset(&p, ds, &eff(&t.spec), &cfg.ofdm)?;
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { args } => run(args),
        Command::Sweep { args, axis, values } => sweep(args, *axis, values),
        Command::Nist { keys, out, key_bits, max_keys } => nist(keys, out, *key_bits, *max_keys),
        Command::Model { command: ModelCommand::Inspect { path } } => inspect(path),
        Command::Dataset { args } => dataset(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
