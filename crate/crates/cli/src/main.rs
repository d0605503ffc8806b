//! `anytime`: sample codes, evaluate thresholds and run closed-loop
//! experiments from the command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 divergence above the
//! threshold, 3 broken internal invariant.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anytime::channel::{capacity, ChannelError, ChannelSpec};
use anytime::code::{CodeError, ToeplitzCode};
use anytime::simulate::{
    derive_seed, experiment_lqr_sweep, reliability_estimate, run_many, SimulateError, SweepSpec, TrialRecord,
};
use anytime::thresholds::{self, CanonicalPlant, ThresholdError};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{parse_filter, parse_list, Settings};
use output::{csv, line_svg, OutputDir};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Simulate(e) if e.is_corruption() => 3,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "anytime", version, about = "Anytime-reliable tree codes and networked control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a code from the Toeplitz ensemble and write it to a file.
    SampleCode(SampleCodeArgs),
    /// Evaluate rate and exponent thresholds.
    #[command(subcommand)]
    Thresholds(ThresholdCommand),
    /// Run closed-loop trials.
    Simulate(SimulateArgs),
    /// Estimate the delay distribution of a code over an erasure channel.
    Reliability(ReliabilityArgs),
    /// Sweep the message length and report LQR cost distributions.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SampleCodeArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "code.txt")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ThresholdCommand {
    /// Random-coding and improved exponents at one rate.
    Er {
        #[arg(long)]
        channel: ChannelSpec,
        /// Rate in bits per channel use.
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 15)]
        n: usize,
    },
    /// Distance thresholds of the Toeplitz ensemble.
    Distance {
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
    },
    /// Sufficient rate and exponent for a preset plant.
    Plant {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 15)]
        n: usize,
        #[arg(long, default_value = "hypercuboid")]
        filter: String,
    },
    /// Stabilizable region of scalar or vector plants.
    Region {
        #[arg(long)]
        channel: ChannelSpec,
        #[arg(long, default_value_t = 2.0)]
        eta: f64,
        /// Eigenvalue magnitudes to test, comma separated.
        #[arg(long)]
        mu: Option<String>,
        /// Print (epsilon, mu_max) over a grid of channel parameters.
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Budgets of a plant sampled every n steps, against their limit.
    Limiting {
        #[arg(long)]
        mu: String,
        #[arg(long, default_value = "1,2,4,8,16")]
        n: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    filter: Option<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Largest tolerated fraction of diverged trials.
    #[arg(long, default_value_t = 0.05)]
    fail_threshold: f64,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
}

impl RunArgs {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut s = Settings::load(self.config.as_deref())?;
        s.set("preset", self.preset.as_ref());
        s.set("seed", self.seed);
        s.set("horizon", self.horizon);
        s.set("channel", self.channel.as_ref());
        s.set("filter", self.filter.as_ref());
        if s.get::<u64>("seed")?.is_none() {
            return Err(CliError::Usage("--seed (or `seed` in the config) is required".into()));
        }
        Ok(s)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct ReliabilityArgs {
    /// Code file written by `sample-code`; otherwise a code is sampled.
    #[arg(long)]
    code: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long)]
    channel: ChannelSpec,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Reference decoding time.
    #[arg(long, default_value_t = 100)]
    time: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Message lengths, comma separated.
    #[arg(long, default_value = "3,4,5,6,7")]
    k: String,
    #[arg(long, default_value_t = 50)]
    codes: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
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
        Command::SampleCode(a) => sample_code(a),
        Command::Thresholds(t) => threshold_table(t),
        Command::Simulate(a) => simulate(a),
        Command::Reliability(a) => reliability(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn sample_code(a: SampleCodeArgs) -> Result<u8, CliError> {
    if a.k == 0 || a.k >= a.n {
        return Err(CliError::Usage(format!("need 0 < k < n (rate below 1), got n = {}, k = {}", a.n, a.k)));
    }
    let code = ToeplitzCode::sample(a.n, a.k, a.p, a.depth, a.seed)?;
    std::fs::write(&a.out, code.to_text())?;
    println!(
        "wrote {}: H_1 {}x{}, depth {}, rate {:.3}",
        a.out.display(),
        code.nbar(),
        code.n(),
        code.depth(),
        code.rate()
    );
    Ok(0)
}

fn row(label: &str, per_use: f64, per_step: f64) -> String {
    format!("{label},{per_use:.6},{per_step:.6}")
}

fn threshold_table(cmd: ThresholdCommand) -> Result<u8, CliError> {
    const HEADER: &str = "quantity,per_channel_use,per_plant_step";
    match cmd {
        ThresholdCommand::Er { channel, rate, n } => {
            let nf = n as f64;
            println!("{HEADER}");
            if !(0.0..1.0).contains(&rate) || rate >= capacity(&channel) {
                println!("E_r,INFEASIBLE,INFEASIBLE");
                println!("E_zeta,INFEASIBLE,INFEASIBLE");
                return Ok(0);
            }
            let er = thresholds::random_coding_exponent(&channel, rate);
            let ez = thresholds::improved_exponent(&channel, rate);
            println!("{}", row("rate", rate, nf * rate));
            println!("{}", row("E_r", er.value, nf * er.value));
            println!("{}", row("E_zeta", ez, nf * ez));
            println!("{}", row("capacity", capacity(&channel), nf * capacity(&channel)));
        }
        ThresholdCommand::Distance { rate, p } => {
            println!("quantity,value");
            match thresholds::toeplitz_distance_thresholds(rate, p) {
                Ok(t) => {
                    println!("alpha_sup,{:.6}", t.alpha_sup);
                    println!("theta_inf,{:.6}", t.theta_inf);
                }
                Err(_) => {
                    println!("alpha_sup,INFEASIBLE");
                    println!("theta_inf,INFEASIBLE");
                }
            }
        }
        ThresholdCommand::Plant { preset, n, filter } => {
            let plant = preset_plant(&preset)?;
            let filter = parse_filter(&filter)?;
            let nf = n as f64;
            println!("{HEADER}");
            match thresholds::sufficient_budget(&plant, filter, n) {
                Ok(b) => {
                    println!("{}", row("R", b.rate, nf * b.rate));
                    println!("{}", row("beta", b.beta, nf * b.beta));
                }
                Err(ThresholdError::Unsupported(_)) => {
                    println!("R,INFEASIBLE,INFEASIBLE");
                    println!("beta,INFEASIBLE,INFEASIBLE");
                }
                Err(e) => return Err(e.into()),
            }
        }
        ThresholdCommand::Region {
            channel,
            eta,
            mu,
            sweep,
            out,
        } => {
            if sweep {
                let eps: Vec<f64> = (1..20).map(|i| i as f64 / 40.0).collect();
                let rows = thresholds::region_sweep(channel.kind(), eta, &eps)?;
                let table = csv(
                    "epsilon,mu_max",
                    rows.iter().map(|(e, m)| format!("{e:.4},{m:.6}")),
                );
                match out {
                    Some(p) => std::fs::write(p, table)?,
                    None => print!("{table}"),
                }
            } else if let Some(mu) = mu {
                let mu: Vec<f64> = parse_list(&mu)?;
                println!("quantity,value");
                println!("stabilizable,{}", thresholds::region_check(&mu, &channel, eta)?);
            } else {
                println!("quantity,value");
                println!("mu_max,{:.6}", thresholds::scalar_stabilizable_mu(&channel, eta)?);
            }
        }
        ThresholdCommand::Limiting { mu, n } => {
            let mu: Vec<f64> = parse_list(&mu)?;
            println!("n,R_n,beta_n,R_star,beta_star");
            for n in parse_list::<usize>(&n)? {
                if n == 0 {
                    return Err(CliError::Usage("n must be positive".into()));
                }
                let l = thresholds::limiting_case(&mu, n)?;
                println!("{n},{:.6},{:.6},{:.6},{:.6}", l.rate_n, l.beta_n, l.rate_star, l.beta_star);
            }
        }
    }
    Ok(0)
}

fn preset_plant(name: &str) -> Result<CanonicalPlant, CliError> {
    let cfg = match name {
        "cart-stick" => anytime::simulate::presets::cart_stick(0, 1)?,
        "example2" => anytime::simulate::presets::example2(5, 0, 1)?,
        other => return Err(CliError::Usage(format!("unknown preset `{other}`"))),
    };
    Ok(cfg.plant)
}

fn seeds_of(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn divergence_exit(diverged: usize, total: usize, threshold: f64) -> u8 {
    if total > 0 && diverged as f64 / total as f64 > threshold {
        2
    } else {
        0
    }
}

fn simulate(a: SimulateArgs) -> Result<u8, CliError> {
    let mut settings = a.run.settings()?;
    settings.set("k", a.k);
    settings.set("trials", a.trials);
    let cfg = settings.loop_config()?;
    let trials: usize = settings.get("trials")?.unwrap_or(1);
    let seeds: Vec<u64> = (0..trials as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let mut out = OutputDir::create(
        &a.run.out_dir,
        "simulate",
        settings.as_map().clone(),
        seeds_of(&[("seed", cfg.seed), ("code_seed", derive_seed(&[cfg.seed, 0]))]),
    )?;
    let records = run_many(&cfg, &seeds, a.run.jobs)
        .into_iter()
        .collect::<Result<Vec<TrialRecord>, _>>()?;
    let first = &records[0];
    out.write("trajectory.csv", &csv(TrialRecord::CSV_HEADER, first.csv_rows()))?;
    let summary = csv(
        "seed,diverged,lqr_cost,max_state_norm,steps",
        records.iter().zip(&seeds).map(|(r, s)| {
            format!("{s},{},{},{},{}", r.diverged(), r.lqr_cost, r.max_state_norm, r.steps.len())
        }),
    );
    out.write("summary.csv", &summary)?;
    if a.run.svg {
        let pts = first.steps.iter().map(|s| (s.t as f64, s.x.norm())).collect();
        out.write(
            "trajectory.svg",
            &line_svg("state norm", "t", "|x_t|", &[(format!("seed {}", seeds[0]), pts)]),
        )?;
    }
    let diverged = records.iter().filter(|r| r.diverged()).count();
    println!(
        "{trials} trial(s), {diverged} diverged, first LQR cost {:.4}, max |x| {:.4}, quantizer step {:.6}",
        first.lqr_cost,
        first.max_state_norm,
        cfg.quantizers[0].delta()
    );
    if first.closed_loop_radius >= 1.0 {
        eprintln!("warning: closed-loop spectral radius {:.4} is not below 1", first.closed_loop_radius);
    }
    out.finish("complete")?;
    Ok(divergence_exit(diverged, records.len(), a.run.fail_threshold))
}

fn reliability(a: ReliabilityArgs) -> Result<u8, CliError> {
    let code = match &a.code {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            ToeplitzCode::from_text(&text)?
        }
        None => ToeplitzCode::sample(a.n, a.k, a.p, a.time, a.seed)?,
    };
    if a.trials == 0 {
        return Err(CliError::Usage("trials must be positive".into()));
    }
    let mut config = BTreeMap::new();
    config.insert("channel".to_string(), a.channel.to_string());
    config.insert("trials".to_string(), a.trials.to_string());
    config.insert("time".to_string(), a.time.to_string());
    config.insert(
        "code".to_string(),
        a.code.as_ref().map_or_else(|| format!("sampled n={} k={} p={}", a.n, a.k, a.p), |p| p.display().to_string()),
    );
    let mut out = OutputDir::create(
        &a.out_dir,
        "reliability",
        config,
        seeds_of(&[("seed", a.seed), ("code_seed", code.seed())]),
    )?;
    let table = reliability_estimate(Arc::new(code.clone()), &a.channel, a.time, a.trials, a.seed, a.jobs)?;
    out.write("reliability.csv", &csv(anytime::simulate::ReliabilityTable::CSV_HEADER, table.csv_rows()))?;
    if a.svg {
        let pts = (1..table.counts.len())
            .filter(|&d| table.counts[d] > 0)
            .map(|d| (d as f64, table.probability(d).log2()))
            .collect();
        out.write("reliability.svg", &line_svg("delay distribution", "d", "log2 P", &[("empirical".into(), pts)]))?;
    }
    let per_step = a.channel.packet_len() as f64 * code.n() as f64;
    let er = per_step * thresholds::random_coding_exponent(&a.channel, code.rate()).value;
    match table.fit {
        Some(f) => {
            let se = if f.slope_std_err.is_finite() { format!("{:.4}", f.slope_std_err) } else { "n/a".into() };
            println!(
                "slope {:.4} +- {se} (log2 per step), intercept {:.4}, R^2 {:.4} over {} delays; n*E_r(R) = {er:.4}",
                f.slope, f.intercept, f.r_squared, f.points
            )
        }
        None => println!("slope undefined: no delay has enough events; n*E_r(R) = {er:.4}"),
    }
    out.finish("complete")?;
    Ok(0)
}

fn sweep(a: SweepArgs) -> Result<u8, CliError> {
    let settings = a.run.settings()?;
    let k_values: Vec<usize> = parse_list(&a.k)?;
    if a.codes == 0 || a.runs == 0 {
        return Err(CliError::Usage("--codes and --runs must be positive".into()));
    }
    let base = settings.loop_config()?;
    let mut config = settings.as_map().clone();
    config.insert("k_values".into(), a.k.clone());
    config.insert("codes".into(), a.codes.to_string());
    config.insert("runs".into(), a.runs.to_string());
    let mut out = OutputDir::create(&a.run.out_dir, "sweep", config, seeds_of(&[("seed", base.seed)]))?;
    let spec = SweepSpec {
        k_values,
        codes_per_k: a.codes,
        runs_per_code: a.runs,
        seed: base.seed,
        jobs: a.run.jobs,
    };
    let results = experiment_lqr_sweep(&base, &spec)?;
    let cdf_rows = results
        .iter()
        .flat_map(|r| r.cdf().into_iter().map(move |(c, f)| format!("{},{c},{f}", r.k)));
    out.write("sweep_cdf.csv", &csv("k,lqr_cost,fraction_of_codes", cdf_rows))?;
    let summary = results.iter().map(|r| {
        let median = r.median().map_or_else(|| "NA".to_string(), |m| m.to_string());
        let empty = r.code_costs.iter().filter(|c| c.is_none()).count();
        format!("{},{},{median},{},{},{empty}", r.k, r.delta, r.diverged_runs, r.total_runs)
    });
    out.write(
        "sweep_summary.csv",
        &csv("k,quantizer_step,median_lqr_cost,diverged_runs,total_runs,codes_without_completed_run", summary),
    )?;
    if a.run.svg {
        let series: Vec<(String, Vec<(f64, f64)>)> =
            results.iter().map(|r| (format!("k = {}", r.k), r.cdf())).collect();
        out.write("sweep_cdf.svg", &line_svg("LQR cost CDF over codes", "cost", "fraction", &series))?;
    }
    let mut diverged = 0;
    let mut total = 0;
    for r in &results {
        diverged += r.diverged_runs;
        total += r.total_runs;
        println!(
            "k = {}: median LQR cost {}, {} of {} runs diverged",
            r.k,
            r.median().map_or_else(|| "NA".to_string(), |m| format!("{m:.4}")),
            r.diverged_runs,
            r.total_runs
        );
    }
    out.finish("complete")?;
    Ok(divergence_exit(diverged, total, a.run.fail_threshold))
}

#[cfg(test)]
mod test {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        let bad = CliError::Simulate(SimulateError::Invariant { t: 1, what: "x".into() });
        assert_eq!(bad.exit_code(), 3);
        assert_eq!(divergence_exit(1, 10, 0.05), 2);
        assert_eq!(divergence_exit(0, 10, 0.0), 0);
    }

    #[test]
    fn plant_presets() {
        assert!(preset_plant("cart-stick").is_ok());
        assert!(matches!(preset_plant("tank"), Err(CliError::Usage(_))));
    }
}
