use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use afdm::channel::{sample_jakes, DopplerMode};
use afdm::detect::StopNorm;
use afdm::error::Result;
use afdm::harness::{
    epsilon_sweep, frame_rng, run_ber_sweep, run_ofdm_baseline, write_ber_csv, write_epsilon_csv,
    write_json, DetectorKind, ExperimentConfig, Waveform,
};
use afdm::verify;

#[derive(Parser)]
#[command(name = "afdm", version, about = "AFDM link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BER versus SNR for the selected detectors.
    Ber {
        #[command(flatten)]
        opts: ExperimentArgs,
        /// Append the OFDM LMMSE reference on the same draws.
        #[arg(long)]
        ofdm_baseline: bool,
    },
    /// MRC-DFE BER and iteration count versus the stopping threshold.
    Epsilon {
        #[command(flatten)]
        opts: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.01,0.001,0.0001")]
        eps_list: Vec<f64>,
    },
    /// Run the built-in consistency checks.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Channel realization utilities.
    Channel {
        #[command(subcommand)]
        command: ChannelCommand,
    },
}

#[derive(Subcommand)]
enum ChannelCommand {
    /// Write the realization drawn for one frame as JSON.
    Dump {
        #[command(flatten)]
        opts: ExperimentArgs,
        #[arg(long, default_value_t = 0)]
        frame: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<u64>,
    /// Comma-separated SNR points in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// Comma-separated detectors: lmmse_exact, lmmse_band, mrc_dfe, ml.
    #[arg(long, value_delimiter = ',')]
    detector: Option<Vec<DetectorKind>>,
    #[arg(long)]
    waveform: Option<Waveform>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    delays: Option<Vec<usize>>,
    #[arg(long)]
    nu_max: Option<f64>,
    /// integer or fractional.
    #[arg(long)]
    doppler: Option<DopplerMode>,
    #[arg(long)]
    k_nu: Option<usize>,
    /// Null guard symbols; defaults to the minimum.
    #[arg(long)]
    guard: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// relative or absolute.
    #[arg(long)]
    stop_norm: Option<StopNorm>,
    #[arg(long)]
    hard_decision: bool,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON mirror of the records.
    #[arg(long)]
    json: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.frames {
            cfg.frames = v;
        }
        if let Some(v) = self.snr {
            cfg.snr_db = v;
        }
        if let Some(v) = self.detector {
            cfg.detectors = v;
        }
        if let Some(v) = self.waveform {
            cfg.waveform = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.delays {
            cfg.channel.delays = v;
        }
        if let Some(v) = self.nu_max {
            cfg.channel.nu_max = v;
        }
        if let Some(v) = self.doppler {
            cfg.channel.doppler = v;
        }
        if let Some(v) = self.k_nu {
            cfg.channel.k_nu = v;
        }
        if self.guard.is_some() {
            cfg.guard = self.guard;
        }
        if let Some(v) = self.eps {
            cfg.dfe.epsilon = v;
        }
        if let Some(v) = self.max_iter {
            cfg.dfe.max_iterations = v;
        }
        if let Some(v) = self.stop_norm {
            cfg.dfe.norm = v;
        }
        if self.hard_decision {
            cfg.dfe.hard_decision = true;
        }
        if self.out.is_some() {
            cfg.output = self.out;
        }
        if self.json.is_some() {
            cfg.json = self.json;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn with_output<F>(path: Option<&Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
        }
    }
    Ok(())
}

fn write_json_file<T: serde::Serialize>(path: Option<&Path>, records: &[T]) -> Result<()> {
    if let Some(p) = path {
        let mut w = BufWriter::new(File::create(p)?);
        write_json(records, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ber { opts, ofdm_baseline } => {
            let cfg = opts.resolve()?;
            let mut records = run_ber_sweep(&cfg)?;
            if ofdm_baseline {
                for mut r in run_ofdm_baseline(&cfg)? {
                    r.detector = format!("ofdm_{}", r.detector);
                    records.push(r);
                }
            }
            with_output(cfg.output.as_deref(), |w| write_ber_csv(&records, w))?;
            write_json_file(cfg.json.as_deref(), &records)?;
        }
        Command::Epsilon { opts, eps_list } => {
            let cfg = opts.resolve()?;
            let records = epsilon_sweep(&cfg, &eps_list)?;
            with_output(cfg.output.as_deref(), |w| write_epsilon_csv(&records, w))?;
            write_json_file(cfg.json.as_deref(), &records)?;
        }
        Command::Verify { seed } => {
            let checks = verify::run_all(seed)?;
            let mut ok = true;
            for c in &checks {
                let status = if c.passed() { "PASS" } else { "FAIL" };
                println!("{status} {:<32} error {:.3e} (tolerance {:.0e})", c.name, c.error, c.tolerance);
                ok &= c.passed();
            }
            return Ok(ok);
        }
        Command::Channel {
            command: ChannelCommand::Dump { opts, frame },
        } => {
            let cfg = opts.resolve()?;
            let mut rng = frame_rng(cfg.seed, frame);
            let ch = sample_jakes(cfg.channel.nu_max, &cfg.channel.delays, cfg.channel.doppler, &mut rng)?;
            ch.validate(&cfg.waveform_config()?)?;
            let text = ch.to_json()?;
            with_output(cfg.output.as_deref(), |w| {
                writeln!(w, "{text}")?;
                Ok(())
            })?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
