//! Command-line driver for the attack pipeline.
//!
//! Subcommands mirror the pipeline stages (`keygen`, `simulate`, `cpa`,
//! `lattice`), the composed experiments (`end-to-end`, `sweep`,
//! `calibrate`), trace-file plumbing (`trace export|import|inspect`) and
//! config introspection (`defaults`). Every experiment flag mirrors an
//! `AttackConfig` field; a `--config <path>` TOML file overrides flags.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
//! 3 internal error. A failed attack is a reported outcome, not a process
//! error.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use kyber_sca::harness::{
    calibrate_sigma, keygen, run_end_to_end, run_sweep, truth_half, truth_ntt_half, AttackConfig,
    HarnessError,
};
use kyber_sca::cpa::{run_cpa_group, write_cpa_report};
use kyber_sca::lattice::{
    build_kannan_basis, build_lwe_instance, lll_reduce, write_recovery_report, NttEntry,
    PartialNttKey, RecoveryReportRow,
};
use kyber_sca::leakage::{simulate_traces, HalfGroup};
use kyber_sca::params::KyberParams;
use kyber_sca::poly::sample_secret;
use kyber_sca::rng::{substream_seed, uniform_residue};
use kyber_sca::trace::{describe, read_trace_file, write_trace_file, TraceError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version output is success, not a usage error.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A downstream reader closing the pipe (e.g. `| head`) is a normal
        // way to consume partial output, not a failure.
        Err(CliError::StdoutClosed) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
    Internal(String),
    StdoutClosed,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Internal(m) => f.write_str(m),
            CliError::StdoutClosed => f.write_str("stdout closed"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Internal(_) => 3,
            CliError::StdoutClosed => 0,
        }
    }
}

/// Print one line to stdout, distinguishing a closed pipe from real I/O
/// trouble.
fn say(args: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_fmt(args).and_then(|()| out.write_all(b"\n")) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Err(CliError::StdoutClosed),
        Err(e) => Err(CliError::Io(format!("writing to stdout: {e}"))),
    }
}

macro_rules! say {
    ($($t:tt)*) => { say(format_args!($($t)*))? };
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::Params(_) => CliError::Usage(e.to_string()),
            HarnessError::Io(_) => CliError::Io(e.to_string()),
            HarnessError::Leakage(_) | HarnessError::Cpa(_) | HarnessError::Lattice(_) => {
                CliError::Internal(e.to_string())
            }
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "kyber-sca",
    version,
    about = "Two-step power analysis of Kyber's point-wise multiplication: \
             correlation key extraction plus lattice completion"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a secret key and write it as JSON.
    Keygen(KeygenCmd),
    /// Simulate decryption power traces and write a KTR1 trace file.
    Simulate(SimulateCmd),
    /// Run the correlation attack on a trace file and report candidates.
    Cpa(CpaCmd),
    /// Recover a half group from synthetic trusted coefficients.
    Lattice(LatticeCmd),
    /// Full campaign: simulate, correlate and recover for every seed.
    EndToEnd(CampaignCmd),
    /// Rerun the campaign across trace counts and tabulate success rates.
    Sweep(SweepCmd),
    /// Binary-search the highest tolerable noise level.
    Calibrate(CalibrateCmd),
    /// Trace-file plumbing.
    #[command(subcommand)]
    Trace(TraceCmd),
    /// Print the default configuration as TOML.
    Defaults,
}

/// Flags mirroring `AttackConfig`; a `--config` TOML file overrides them.
#[derive(Args, Clone)]
struct ConfigFlags {
    /// TOML config file; its values override the other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Security level: 512, 768 or 1024.
    #[arg(long)]
    level: Option<u32>,
    /// Traces per half group.
    #[arg(long, short = 'd')]
    d_traces: Option<usize>,
    /// Slot calls attacked per half group.
    #[arg(long)]
    n_calls: Option<usize>,
    /// Leakage model: hw or mhw.
    #[arg(long)]
    model: Option<String>,
    /// Leaking-sample scale.
    #[arg(long)]
    alpha: Option<f64>,
    /// Baseline trace level.
    #[arg(long)]
    beta: Option<f64>,
    /// Gaussian noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Correlation filter threshold.
    #[arg(long)]
    pcc_threshold: Option<f64>,
    /// BKZ block size.
    #[arg(long)]
    block: Option<usize>,
    /// Maximum BKZ tours.
    #[arg(long)]
    loops: Option<usize>,
    /// Comma-separated experiment seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Report output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigFlags {
    fn build(&self) -> Result<AttackConfig, CliError> {
        let mut cfg = AttackConfig::default();
        if let Some(v) = self.level {
            cfg.security_level = v;
        }
        if let Some(v) = self.d_traces {
            cfg.d_traces = v;
        }
        if let Some(v) = self.n_calls {
            cfg.n_calls = v;
        }
        if let Some(m) = &self.model {
            cfg.leakage.model = parse_model(m)?;
            cfg.cpa = kyber_sca::cpa::CpaConfig::default_for(cfg.leakage.model);
        }
        if let Some(v) = self.alpha {
            cfg.leakage.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.leakage.beta = v;
        }
        if let Some(v) = self.sigma {
            cfg.leakage.sigma = v;
        }
        if let Some(v) = self.pcc_threshold {
            cfg.cpa.pcc_threshold = v;
        }
        if let Some(v) = self.block {
            cfg.reduction.bkz_block = v;
        }
        if let Some(v) = self.loops {
            cfg.reduction.max_loops = v;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
            cfg = overlay_toml(&cfg, &text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        }
        Ok(cfg)
    }
}

fn parse_model(m: &str) -> Result<kyber_sca::leakage::LeakModel, CliError> {
    match m {
        "hw" => Ok(kyber_sca::leakage::LeakModel::Hw),
        "mhw" => Ok(kyber_sca::leakage::LeakModel::Mhw),
        other => Err(CliError::Usage(format!("unknown model '{other}' (expected hw or mhw)"))),
    }
}

/// Deep-merge a TOML file over the flag-built config, so a partial file
/// overrides exactly the keys it names.
fn overlay_toml(base: &AttackConfig, text: &str) -> Result<AttackConfig, String> {
    let mut merged = toml::Value::try_from(base).map_err(|e| e.to_string())?;
    let file: toml::Value = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    merge_value(&mut merged, &file);
    merged.try_into().map_err(|e: toml::de::Error| e.to_string())
}

fn merge_value(base: &mut toml::Value, over: &toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_value(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Level lookup plus the checks every single-stage command needs; the
/// composed experiments use the stricter `AttackConfig::validate`.
fn stage_params(cfg: &AttackConfig) -> Result<KyberParams, CliError> {
    let params =
        KyberParams::new(cfg.security_level).map_err(|e| CliError::Usage(e.to_string()))?;
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("seeds list is empty".into()));
    }
    Ok(params)
}

fn parse_group(g: &str) -> Result<HalfGroup, CliError> {
    match g {
        "even" => Ok(HalfGroup::Even),
        "odd" => Ok(HalfGroup::Odd),
        other => Err(CliError::Usage(format!("unknown group '{other}' (expected even or odd)"))),
    }
}

#[derive(Args)]
struct KeygenCmd {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Output JSON path.
    #[arg(long, default_value = "key.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Which secret polynomial to target.
    #[arg(long, default_value_t = 0)]
    poly: usize,
    /// Which half group to target: even or odd.
    #[arg(long, default_value = "even")]
    group: String,
    /// Output trace file.
    #[arg(long, default_value = "traces.ktr")]
    out: PathBuf,
}

#[derive(Args)]
struct CpaCmd {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Input trace file.
    #[arg(long)]
    traces: PathBuf,
    /// Half group the traces target.
    #[arg(long, default_value = "even")]
    group: String,
    /// Which secret polynomial the traces target (for the truth column).
    #[arg(long, default_value_t = 0)]
    poly: usize,
    /// Add a correctness column by regenerating the key from the first seed.
    #[arg(long)]
    truth: bool,
    /// Output CSV path.
    #[arg(long, default_value = "cpa.csv")]
    report: PathBuf,
}

#[derive(Args)]
struct LatticeCmd {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Trusted-coefficient count; defaults to the level's threshold.
    #[arg(long)]
    sr: Option<usize>,
    /// Output CSV path.
    #[arg(long, default_value = "lattice.csv")]
    report: PathBuf,
}

#[derive(Args)]
struct CampaignCmd {
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Comma-separated trace counts to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    d_values: Vec<usize>,
}

#[derive(Args)]
struct CalibrateCmd {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Lower bracket for sigma (must pass).
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    /// Upper bracket for sigma.
    #[arg(long, default_value_t = 8.0)]
    hi: f64,
    /// Bisection steps.
    #[arg(long, default_value_t = 8)]
    steps: usize,
}

#[derive(Subcommand)]
enum TraceCmd {
    /// Simulate traces per the config flags and write them to a file.
    Export(SimulateCmd),
    /// Read a trace file, validate it, and print its summary.
    Import {
        /// Input trace file.
        path: PathBuf,
    },
    /// Print header fields and per-call sample statistics.
    Inspect {
        /// Input trace file.
        path: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Keygen(c) => cmd_keygen(c),
        Cmd::Simulate(c) => cmd_simulate(c),
        Cmd::Cpa(c) => cmd_cpa(c),
        Cmd::Lattice(c) => cmd_lattice(c),
        Cmd::EndToEnd(c) => cmd_end_to_end(c),
        Cmd::Sweep(c) => cmd_sweep(c),
        Cmd::Calibrate(c) => cmd_calibrate(c),
        Cmd::Trace(TraceCmd::Export(c)) => cmd_simulate(c),
        Cmd::Trace(TraceCmd::Import { path }) => cmd_trace_import(&path),
        Cmd::Trace(TraceCmd::Inspect { path }) => cmd_trace_inspect(&path),
        Cmd::Defaults => cmd_defaults(),
    }
}

fn cmd_keygen(c: KeygenCmd) -> Result<(), CliError> {
    let cfg = c.flags.build()?;
    let params = stage_params(&cfg)?;
    let seed = cfg.seeds[0];
    let polys = keygen(seed, &params);
    let coeffs: Vec<Vec<i16>> = polys.iter().map(|p| p.coeffs().to_vec()).collect();
    let doc = serde_json::json!({
        "security_level": cfg.security_level,
        "seed": seed,
        "polynomials": coeffs,
    });
    std::fs::write(&c.out, serde_json::to_string(&doc).expect("serializable"))?;
    say!(
        "wrote {} ({} polynomials of 256 coefficients, seed {seed})",
        c.out.display(),
        polys.len()
    );
    Ok(())
}

fn cmd_simulate(c: SimulateCmd) -> Result<(), CliError> {
    let cfg = c.flags.build()?;
    let params = stage_params(&cfg)?;
    let group = parse_group(&c.group)?;
    if c.poly >= params.k {
        return Err(CliError::Usage(format!(
            "poly {} out of range: level {} has {} polynomials",
            c.poly, cfg.security_level, params.k
        )));
    }
    let seed = cfg.seeds[0];
    let polys = keygen(seed, &params);
    let mut leakage = cfg.leakage;
    let gbit = match group {
        HalfGroup::Even => 0u64,
        HalfGroup::Odd => 1u64,
    };
    leakage.rng_seed = substream_seed(seed, 16 + 2 * c.poly as u64 + gbit);
    let ts = simulate_traces(&polys[c.poly].ntt(), cfg.d_traces, &leakage, &params, group)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_trace_file(&c.out, &ts)?;
    say!("wrote {}: {}", c.out.display(), describe(&ts));
    Ok(())
}

fn cmd_cpa(c: CpaCmd) -> Result<(), CliError> {
    let cfg = c.flags.build()?;
    let params = stage_params(&cfg)?;
    let group = parse_group(&c.group)?;
    let ts = read_trace_file(&c.traces)
        .map_err(|e| CliError::Io(format!("{}: {e}", c.traces.display())))?;
    let sets = run_cpa_group(&ts, group, cfg.n_calls, &cfg.cpa)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let truth_vec = if c.truth {
        if c.poly >= params.k {
            return Err(CliError::Usage(format!(
                "poly {} out of range: level {} has {} polynomials",
                c.poly, cfg.security_level, params.k
            )));
        }
        let polys = keygen(cfg.seeds[0], &params);
        Some(truth_ntt_half(&polys[c.poly], group))
    } else {
        None
    };
    write_cpa_report(&c.report, &sets, truth_vec.as_deref())?;
    let chosen = sets.iter().filter(|s| s.chosen.is_some()).count();
    let correct = truth_vec
        .as_ref()
        .map(|t| {
            sets.iter()
                .filter(|s| s.chosen_candidate().is_some_and(|c| c.guess == t[s.call_index]))
                .count()
        })
        .map(|n| format!(", {n} correct"))
        .unwrap_or_default();
    say!(
        "wrote {}: {chosen}/{} calls produced a candidate{correct}",
        c.report.display(),
        sets.len()
    );
    Ok(())
}

/// Synthetic lattice demonstration: plant a secret, reveal `sr` NTT
/// coefficients at random slots, and run the recovery.
fn cmd_lattice(c: LatticeCmd) -> Result<(), CliError> {
    let cfg = c.flags.build()?;
    let params = stage_params(&cfg)?;
    cfg.reduction.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let sr = c.sr.unwrap_or_else(|| params.sr_min());
    if sr > 128 {
        return Err(CliError::Usage(format!("sr {sr} exceeds the 128 slots")));
    }
    let mats = kyber_sca::matrix::build_ntt_matrices(&params);
    let eta = params.eta as i16;
    let mut rows: Vec<RecoveryReportRow> = Vec::new();
    let mut successes = 0usize;
    for &seed in &cfg.seeds {
        let secret = sample_secret(substream_seed(seed, 0), &params);
        let s_half = truth_half(&secret, HalfGroup::Even);
        let ntt_half = truth_ntt_half(&secret, HalfGroup::Even);
        let mut slots: Vec<usize> = (0..128).collect();
        let mut rng = kyber_sca::rng::substream(seed, 1);
        for i in (1..slots.len()).rev() {
            let j = uniform_residue(&mut rng, (i + 1) as u16) as usize;
            slots.swap(i, j);
        }
        slots.truncate(sr);
        let entries: Vec<NttEntry> = slots
            .iter()
            .map(|&i| NttEntry { index: i, value: ntt_half[i], confidence: 1.0 })
            .collect();
        let partial = PartialNttKey { entries, group: HalfGroup::Even, poly_index: 0 };
        let started = std::time::Instant::now();
        let inst =
            build_lwe_instance(&partial, &mats.n_inv).map_err(|e| CliError::Internal(e.to_string()))?;
        let mut basis = build_kannan_basis(&inst);
        lll_reduce(&mut basis, cfg.reduction.lll_delta)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let mut found = kyber_sca::lattice::extract_secret(&basis, eta);
        if found.is_none() {
            kyber_sca::lattice::bkz_reduce(&mut basis, &cfg.reduction)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            found = kyber_sca::lattice::extract_secret(&basis, eta);
        }
        let ok = found.as_deref() == Some(&s_half[..]);
        successes += usize::from(ok);
        rows.push(RecoveryReportRow {
            group_id: format!("seed{seed}"),
            sr,
            trial: 1,
            first_vector_norm: basis.first_vector_norm(),
            success: ok,
            wall_ms: started.elapsed().as_millis(),
        });
        say!("seed {seed}: success={ok} ({} ms)", rows.last().expect("row").wall_ms);
    }
    write_recovery_report(&c.report, &rows)?;
    say!(
        "wrote {}: {successes}/{} instances recovered at sr={sr}",
        c.report.display(),
        cfg.seeds.len()
    );
    Ok(())
}

fn cmd_end_to_end(c: CampaignCmd) -> Result<(), CliError> {
    let cfg = c.flags.build()?;
    let report = run_end_to_end(&cfg)?;
    for row in &report.rows {
        say!(
            "seed {}: success={} groups {}/{} trials={} step1={}ms step2={}ms",
            row.seed,
            row.success,
            row.groups_ok,
            row.groups_total,
            row.total_trials,
            row.step1_ms,
            row.step2_ms
        );
    }
    say!(
        "success rate {:.2} over {} seeds; reports in {}",
        report.success_rate,
        report.rows.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn cmd_sweep(c: SweepCmd) -> Result<(), CliError> {
    let cfg = c.flags.build()?;
    let rows = run_sweep(&cfg, &c.d_values)?;
    say!("D,success_rate,mean_step1_ms,mean_step2_ms,mean_trials");
    for r in &rows {
        say!(
            "{},{:.4},{:.1},{:.1},{:.2}",
            r.d, r.success_rate, r.mean_step1_ms, r.mean_step2_ms, r.mean_trials
        );
    }
    say!("wrote {}", cfg.output_dir.join("sweep.csv").display());
    Ok(())
}

fn cmd_calibrate(c: CalibrateCmd) -> Result<(), CliError> {
    let cfg = c.flags.build()?;
    let cal = calibrate_sigma(&cfg, c.lo, c.hi, c.steps)?;
    for (sigma, ok, total) in &cal.history {
        say!("sigma={sigma:.4}: {ok}/{total} seeds clear the correlation threshold");
    }
    say!("calibrated sigma: {:.4}", cal.sigma);
    Ok(())
}

fn cmd_trace_import(path: &PathBuf) -> Result<(), CliError> {
    let ts =
        read_trace_file(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    say!("{}: {}", path.display(), describe(&ts));
    Ok(())
}

fn cmd_trace_inspect(path: &PathBuf) -> Result<(), CliError> {
    let ts =
        read_trace_file(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    say!("{}", describe(&ts));
    say!("call,mean,std,min,max");
    for call in 0..kyber_sca::params::SLOTS {
        let mut n = 0usize;
        let (mut sum, mut sum2) = (0f64, 0f64);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..ts.d {
            for &v in ts.call_window(t, call) {
                let v = v as f64;
                n += 1;
                sum += v;
                sum2 += v * v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let mean = sum / n as f64;
        let var = (sum2 / n as f64 - mean * mean).max(0.0);
        say!("{call},{mean:.4},{:.4},{lo:.4},{hi:.4}", var.sqrt());
    }
    Ok(())
}

fn cmd_defaults() -> Result<(), CliError> {
    let cfg = AttackConfig::default();
    let text = toml::to_string_pretty(&cfg)
        .map_err(|e| CliError::Internal(format!("serializing defaults: {e}")))?;
    say!("{}", text.trim_end_matches('\n'));
    Ok(())
}
