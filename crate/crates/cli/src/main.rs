use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use inear_resp::dsp::{denoise, DenoiseMode};
use inear_resp::eval::{
    evaluate, noise_reduction_db, parse_tau_grid, ri_index, threshold_sweep, LabeledRecords,
    DEFAULT_RI_SPAN,
};
use inear_resp::fusion::WindowRecord;
use inear_resp::ground_truth::ground_truth;
use inear_resp::io::{
    self, config_to_toml, load_config, read_audio, read_records, write_audio, write_records,
    write_report, write_sweep, write_truth, Encoding, KeyValues, SessionManifest,
};
use inear_resp::rr::track;
use inear_resp::session::{join_records, process_session, PipelineConfig};
use inear_resp::synth::{gen_scenario, random_path, NoiseKind, SynthScenario};
use inear_resp::SampleBlock;

/// Respiration rate from in-ear and outer-ear microphone recordings.
#[derive(Parser)]
#[command(name = "inear-resp", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config with [denoise], [lms], [estimator], [fusion], [ground_truth] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Channel discrepancy threshold in CPM.
    #[arg(long, global = true, allow_hyphen_values = true)]
    tau: Option<String>,
    /// Suppression mode: delayed-leaky-clipped, nlms, plain or bpf.
    #[arg(long, global = true)]
    mode: Option<DenoiseMode>,
    /// Analysis window length in seconds (estimator and ground truth).
    #[arg(long, global = true)]
    window_s: Option<f64>,
    /// Fractional window overlap.
    #[arg(long, global = true)]
    overlap: Option<f64>,
    /// Rate search band as LOW:HIGH in CPM.
    #[arg(long, global = true)]
    search_band: Option<String>,
    /// Random seed for synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-ear session with a belt trace.
    Synth(SynthArgs),
    /// Suppress ambient noise in the in-ear signal.
    Denoise(DenoiseArgs),
    /// Per-window respiration rates as CSV records.
    Estimate(EstimateArgs),
    /// Metrics of records against ground truth.
    Evaluate(EvaluateArgs),
    /// Metrics across a grid of discrepancy thresholds.
    Sweep(SweepArgs),
    /// Print the effective configuration.
    Config,
}

#[derive(Args)]
struct SynthArgs {
    /// Breathing rate in CPM.
    #[arg(long)]
    rate: f64,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// In-band breathing-to-noise ratio in dB; `inf` for no noise.
    #[arg(long, default_value = "inf", allow_hyphen_values = true)]
    snr: f64,
    #[arg(long, default_value = "white")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 8000.0)]
    fs: f64,
    /// Length of the random leak path.
    #[arg(long, default_value_t = 128)]
    path_taps: usize,
    #[arg(long, default_value = "synthetic")]
    subject: String,
    /// Condition label; defaults to the noise kind.
    #[arg(long)]
    condition: Option<String>,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Session manifest; writes left_clean.wav and right_clean.wav into --out.
    #[arg(long, conflicts_with_all = ["iem", "oem"])]
    manifest: Option<PathBuf>,
    #[arg(long, requires = "oem")]
    iem: Option<PathBuf>,
    #[arg(long, requires = "iem")]
    oem: Option<PathBuf>,
    /// Output WAV, or output directory with --manifest.
    #[arg(long)]
    out: PathBuf,
    /// Noise-reduction report; defaults next to the output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Session manifest: denoise, estimate and join ground truth in one go.
    #[arg(long, conflicts_with_all = ["left", "right"])]
    manifest: Option<PathBuf>,
    /// Already-cleaned audio of the left ear.
    #[arg(long)]
    left: Option<PathBuf>,
    #[arg(long)]
    right: Option<PathBuf>,
    /// Belt trace for ground truth.
    #[arg(long)]
    belt: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Records CSV; repeat for several sessions.
    #[arg(long, required = true)]
    records: Vec<PathBuf>,
    /// Belt trace; replaces ground truth in the records (single session only).
    #[arg(long)]
    belt: Option<PathBuf>,
    /// Cleaned audio, for respiratory information (with --belt) and noise reduction.
    #[arg(long)]
    cleaned: Option<PathBuf>,
    /// Pre-suppression reference audio for noise reduction.
    #[arg(long, requires = "cleaned")]
    original: Option<PathBuf>,
    /// Subject label per records file.
    #[arg(long)]
    subject: Vec<String>,
    /// Condition label per records file.
    #[arg(long)]
    condition: Vec<String>,
    /// Output report; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, required = true)]
    records: Vec<PathBuf>,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_band(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split([':', ',']).collect();
    let [lo, hi] = parts.as_slice() else {
        bail!("search band {s:?} is not LOW:HIGH");
    };
    let (lo, hi): (f64, f64) = (lo.trim().parse()?, hi.trim().parse()?);
    if !(lo > 0.0 && lo < hi) {
        bail!("search band {s:?} must satisfy 0 < LOW < HIGH");
    }
    Ok((lo, hi))
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(t) = self.single_tau()? {
            cfg.fusion.tau_cpm = t;
        }
        if let Some(m) = self.mode {
            cfg.set_mode(m);
        }
        if self.window_s.is_some() || self.overlap.is_some() {
            let w = self.window_s.unwrap_or(cfg.estimator.window_s);
            let o = self.overlap.unwrap_or(cfg.estimator.overlap);
            cfg.set_window(w, o);
        }
        if let Some(b) = &self.search_band {
            cfg.estimator.search_band_cpm = parse_band(b)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn single_tau(&self) -> Result<Option<f64>> {
        match &self.tau {
            Some(t) if !t.contains(':') => {
                Ok(Some(t.parse().with_context(|| format!("bad --tau {t:?}"))?))
            }
            _ => Ok(None),
        }
    }

    fn tau_grid(&self, cfg: &PipelineConfig) -> Result<Vec<f64>> {
        match &self.tau {
            Some(t) => Ok(parse_tau_grid(t)?),
            None => Ok(vec![cfg.fusion.tau_cpm]),
        }
    }
}

fn mode_name(m: DenoiseMode) -> &'static str {
    match m {
        DenoiseMode::BandpassOnly => "bpf",
        DenoiseMode::Plain => "plain",
        DenoiseMode::Nlms => "nlms",
        DenoiseMode::DelayedLeakyClipped => "delayed-leaky-clipped",
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn run_synth(a: &SynthArgs, common: &Common, cfg: &PipelineConfig) -> Result<()> {
    let seed = common.seed.unwrap_or(0);
    let mut s = SynthScenario::new(a.rate, a.snr, a.noise, seed).with_duration(a.duration);
    s.fs_hz = a.fs;
    s.path_taps = random_path(a.path_taps, seed ^ 0x9a7b);
    let right = s.mirrored();
    let (l, r) = (gen_scenario(&s)?, gen_scenario(&right)?);
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let files = [
        ("left_iem.wav", &l.iem),
        ("left_oem.wav", &l.oem),
        ("right_iem.wav", &r.iem),
        ("right_oem.wav", &r.oem),
        ("belt.wav", &l.belt),
        ("left_clean_breath.wav", &l.clean_breath),
    ];
    for (name, block) in files {
        write_audio(a.out.join(name), block, Encoding::Float32)?;
    }
    let stride = cfg.estimator.stride_s();
    let n_windows = if a.duration >= cfg.estimator.window_s {
        ((a.duration - cfg.estimator.window_s) / stride).floor() as usize + 1
    } else {
        0
    };
    write_truth(&vec![a.rate; n_windows], stride, a.out.join("truth.csv"))?;
    let manifest = SessionManifest {
        subject: a.subject.clone(),
        condition: a.condition.clone().unwrap_or_else(|| a.noise.to_string()),
        sample_rate_hz: a.fs,
        belt_rate_hz: Some(l.belt.sample_rate_hz()),
        left_iem: "left_iem.wav".into(),
        left_oem: "left_oem.wav".into(),
        right_iem: "right_iem.wav".into(),
        right_oem: "right_oem.wav".into(),
        belt: Some("belt.wav".into()),
        overrides: Default::default(),
    };
    manifest.write(a.out.join("session.toml"))?;
    println!("wrote synthetic session to {}", a.out.display());
    Ok(())
}

fn run_denoise(a: &DenoiseArgs, cfg: &PipelineConfig) -> Result<()> {
    let mut kv = KeyValues::new();
    kv.string("mode", mode_name(cfg.ans().mode()));
    let mut ear = |label: &str,
                   iem: SampleBlock,
                   oem: SampleBlock,
                   out: &Path,
                   cfg: &PipelineConfig|
     -> Result<()> {
        let res = denoise(&iem, &oem, &cfg.ans())?;
        write_audio(out, &res.cleaned, Encoding::Float32)?;
        let nr = noise_reduction_db(&res.cleaned, &res.filtered_iem).ok();
        kv.real(&format!("{label}nr_db"), nr)
            .real(
                &format!("{label}delay_samples"),
                Some(res.declared_delay_samples),
            )
            .int(&format!("{label}n_samples"), res.cleaned.len());
        info!("{} -> {}", label.trim_end_matches('_'), out.display());
        Ok(())
    };
    let report = match (&a.manifest, &a.iem, &a.oem) {
        (Some(m), _, _) => {
            let m = SessionManifest::load(m)?;
            let cfg = m.config(cfg)?;
            let audio = m.read()?;
            std::fs::create_dir_all(&a.out)?;
            ear(
                "left_",
                audio.left.iem,
                audio.left.oem,
                &a.out.join("left_clean.wav"),
                &cfg,
            )?;
            ear(
                "right_",
                audio.right.iem,
                audio.right.oem,
                &a.out.join("right_clean.wav"),
                &cfg,
            )?;
            a.report
                .clone()
                .unwrap_or_else(|| a.out.join("denoise_report.toml"))
        }
        (None, Some(i), Some(o)) => {
            ear("", read_audio(i)?, read_audio(o)?, &a.out, cfg)?;
            a.report
                .clone()
                .unwrap_or_else(|| sibling(&a.out, "denoise_report.toml"))
        }
        _ => bail!("denoise needs --manifest or both --iem and --oem"),
    };
    kv.write(&report)?;
    print!("{}", kv.as_str());
    Ok(())
}

fn run_estimate(a: &EstimateArgs, cfg: &PipelineConfig) -> Result<()> {
    let records = if let Some(m) = &a.manifest {
        let m = SessionManifest::load(m)?;
        let cfg = m.config(cfg)?;
        let audio = m.read()?;
        let belt = match &a.belt {
            Some(p) => Some(read_audio(p)?),
            None => audio.belt,
        };
        process_session(&audio.left, &audio.right, belt.as_ref(), &cfg)?.records
    } else {
        if a.left.is_none() && a.right.is_none() {
            bail!("estimate needs --manifest, or --left and/or --right cleaned audio");
        }
        let run = |p: &Option<PathBuf>| -> Result<Vec<_>> {
            match p {
                Some(p) => Ok(track(&read_audio(p)?, &cfg.estimator)
                    .with_context(|| format!("estimating {}", p.display()))?),
                None => Ok(Vec::new()),
            }
        };
        let (l, r) = (run(&a.left)?, run(&a.right)?);
        let truth = a
            .belt
            .as_ref()
            .map(|p| -> Result<_> { Ok(ground_truth(&read_audio(p)?, &cfg.ground_truth)?) })
            .transpose()?;
        join_records(&l, &r, truth.as_deref(), cfg.fusion.tau_cpm)
    };
    write_records(&records, &a.out)?;
    let accepted = records.iter().filter(|r| r.accepted).count();
    println!(
        "{} windows, {accepted} accepted -> {}",
        records.len(),
        a.out.display()
    );
    Ok(())
}

fn label(v: &[String], i: usize, what: &str) -> String {
    v.get(i)
        .or(v.last())
        .cloned()
        .unwrap_or_else(|| format!("{what}{i}"))
}

fn run_evaluate(a: &EvaluateArgs, cfg: &PipelineConfig) -> Result<()> {
    if a.belt.is_some() && a.records.len() > 1 {
        bail!("--belt applies to a single records file");
    }
    let belt = a.belt.as_ref().map(read_audio).transpose()?;
    let mut sessions = Vec::new();
    for (i, p) in a.records.iter().enumerate() {
        let mut recs: Vec<WindowRecord> =
            read_records(p).with_context(|| format!("reading {}", p.display()))?;
        if let Some(b) = &belt {
            let gt = ground_truth(b, &cfg.ground_truth)?;
            recs = recs
                .into_iter()
                .map(|r| match gt.get(r.window_index) {
                    Some(g) => r.with_truth(g.rate_cpm, g.valid),
                    None => r.with_truth(None, false),
                })
                .collect();
        }
        sessions.push(LabeledRecords {
            subject: label(&a.subject, i, "s"),
            condition: label(&a.condition, i, "c"),
            records: recs,
        });
    }
    let mut report = evaluate(&sessions, cfg.fusion.tau_cpm);
    if let Some(c) = &a.cleaned {
        let cleaned = read_audio(c)?;
        if let Some(o) = &a.original {
            report.nr_db = Some(noise_reduction_db(&cleaned, &read_audio(o)?)?);
        }
        if let Some(b) = &belt {
            report.ri = Some(ri_index(&cleaned, b, DEFAULT_RI_SPAN)?);
        }
    }
    match &a.out {
        Some(p) => {
            write_report(&report, p)?;
            println!("report -> {}", p.display());
        }
        None => print!("{}", io::report_text(&report)),
    }
    Ok(())
}

fn run_sweep(a: &SweepArgs, common: &Common, cfg: &PipelineConfig) -> Result<()> {
    let mut records = Vec::new();
    for p in &a.records {
        records.extend(read_records(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let rows = threshold_sweep(&records, &common.tau_grid(cfg)?);
    match &a.out {
        Some(p) => write_sweep(&rows, p)?,
        None => io::records::write_sweep_to(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.common.config()?;
    match &cli.command {
        Command::Synth(a) => run_synth(a, &cli.common, &cfg),
        Command::Denoise(a) => run_denoise(a, &cfg),
        Command::Estimate(a) => run_estimate(a, &cfg),
        Command::Evaluate(a) => run_evaluate(a, &cfg),
        Command::Sweep(a) => run_sweep(a, &cli.common, &cfg),
        Command::Config => {
            print!("{}", config_to_toml(&cfg)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
