//! `utx` — run scenarios, check traces, run distinguishing experiments and
//! verification suites.
//!
//! Exit codes: 0 when every verdict matches its expectation, 1 on a
//! property violation (the report is still written), 2 on usage errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use utx_core::checks::{
    check_all_agreements, check_secrecy, distinguish, run_suite, SuiteConfig, SuiteName, Verdict,
};
use utx_core::concrete::{differential_test, MAX_COLLISION_RATE};
use utx_core::frame::{DEFAULT_SIZE_BOUND, DEFAULT_TEST_BOUND};
use utx_core::harness::{run_paired, run_scenario, Protocol, Scenario, Trace, World};

#[derive(Parser, Debug)]
#[command(name = "utx", version, about = "Symbolic checker for the UTX unlinkable payment protocol")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute a scenario and write its trace.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate agreement and secrecy on a trace file (`-` for stdin).
    Check {
        trace: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SIZE_BOUND)]
        derive_bound: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a scenario in the real and ideal worlds and look for a
    /// distinguishing test.
    Distinguish {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = DEFAULT_TEST_BOUND)]
        test_bound: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a named verification suite.
    Suite {
        #[arg(value_enum)]
        name: SuiteArg,
        #[arg(long, env = "UTX_SEED", default_value_t = 0)]
        seed: u64,
        /// Number of seeds per randomized check.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Maximum card sessions in unlinkability experiments.
        #[arg(long, default_value_t = 3)]
        sessions: usize,
        #[arg(long, default_value_t = DEFAULT_SIZE_BOUND)]
        derive_bound: usize,
        #[arg(long, default_value_t = DEFAULT_TEST_BOUND)]
        test_bound: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cross-check symbolic equality against the numeric backend.
    Difftest {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, env = "UTX_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    Security,
    Unlinkability,
    Multimonth,
    Utxl,
    Controls,
}

impl From<SuiteArg> for SuiteName {
    fn from(s: SuiteArg) -> SuiteName {
        match s {
            SuiteArg::Security => SuiteName::Security,
            SuiteArg::Unlinkability => SuiteName::Unlinkability,
            SuiteArg::Multimonth => SuiteName::Multimonth,
            SuiteArg::Utxl => SuiteName::Utxl,
            SuiteArg::Controls => SuiteName::Controls,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Built-in scenario name or path to a scenario file.
    #[arg(long, default_value = "honest_onhi")]
    scenario: String,
    #[arg(long, env = "UTX_SEED")]
    seed: Option<u64>,
    /// Number of card sessions; the scenario's schedule is repeated or cut.
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    world: Option<World>,
    #[arg(long)]
    protocol: Option<Protocol>,
    /// Attacker strategy (catalog name or `fuzz:N`).
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long, value_enum)]
    replay_check: Option<OnOff>,
    #[arg(long)]
    no_terminal_cert_check: bool,
    /// Publish the month key of this month.
    #[arg(long, value_name = "MONTH")]
    leak_chi: Option<u32>,
    /// Publish each card's PIN when the card starts a session.
    #[arg(long)]
    leak_pin: bool,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Violation,
}

impl ScenarioArgs {
    fn build(&self) -> Result<Scenario, Failure> {
        let mut sc = match Scenario::named(&self.scenario) {
            Some(sc) => sc,
            None => {
                let src = fs::read_to_string(&self.scenario).map_err(|e| {
                    Failure::Usage(format!("{:?} is neither a built-in scenario nor a readable file: {e}", self.scenario))
                })?;
                Scenario::parse(&src).map_err(|e| Failure::Usage(e.to_string()))?
            }
        };
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        if let Some(n) = self.sessions {
            if sc.sessions.is_empty() {
                return Err(Failure::Usage("scenario has no session schedule to repeat".into()));
            }
            sc.sessions = sc.sessions.iter().cycle().take(n).copied().collect();
        }
        if let Some(w) = self.world {
            sc.world = w;
        }
        if let Some(p) = self.protocol {
            sc.protocol = p;
        }
        if let Some(s) = &self.strategy {
            sc.strategy = s.clone();
        }
        if let Some(r) = self.replay_check {
            sc.options.replay_check = matches!(r, OnOff::On);
        }
        if self.no_terminal_cert_check {
            sc.options.terminal_checks_month_cert = false;
        }
        if self.leak_chi.is_some() {
            sc.options.chi_leaked = self.leak_chi;
        }
        if self.leak_pin {
            sc.options.pin_leaked = true;
        }
        sc.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(sc)
    }
}

fn emit(out: &OutArgs, text: &str) -> Result<(), Failure> {
    match &out.out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Usage(format!("cannot write to stdout: {e}"))),
    }
}

fn read_trace(path: &Path) -> Result<Trace, Failure> {
    let src = if path == Path::new("-") {
        io::read_to_string(io::stdin()).map_err(|e| Failure::Usage(format!("cannot read stdin: {e}")))?
    } else {
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?
    };
    if src.trim().is_empty() {
        return Ok(Trace::new(World::Real));
    }
    Trace::parse(&src).map_err(|e| Failure::Usage(e.to_string()))
}

fn report(verdicts: &[Verdict]) -> String {
    verdicts.iter().map(|v| format!("{v}\n")).collect()
}

fn verdict_result(verdicts: &[Verdict]) -> Result<(), Failure> {
    if verdicts.iter().any(Verdict::is_violated) {
        Err(Failure::Violation)
    } else {
        Ok(())
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    let usage = |e: utx_core::harness::HarnessError| Failure::Usage(e.to_string());
    match cmd {
        Command::Run { scenario, out } => {
            let sc = scenario.build()?;
            let tr = run_scenario(&sc).map_err(usage)?;
            emit(&out, &tr.to_string())
        }
        Command::Check { trace, derive_bound, out } => {
            let tr = read_trace(&trace)?;
            let mut verdicts = check_all_agreements(&tr);
            verdicts.push(check_secrecy(&tr.frame, &tr.secrets, derive_bound));
            emit(&out, &report(&verdicts))?;
            verdict_result(&verdicts)
        }
        Command::Distinguish { scenario, test_bound, out } => {
            let sc = scenario.build()?;
            let p = run_paired(&sc).map_err(usage)?;
            let v = distinguish(&p, test_bound);
            emit(&out, &report(std::slice::from_ref(&v)))?;
            verdict_result(&[v])
        }
        Command::Suite { name, seed, seeds, sessions, derive_bound, test_bound, out } => {
            let cfg = SuiteConfig { seed, seeds, sessions, derive_bound, test_bound };
            let r = run_suite(name.into(), &cfg).map_err(usage)?;
            emit(&out, &r.to_string())?;
            if r.passed() {
                Ok(())
            } else {
                Err(Failure::Violation)
            }
        }
        Command::Difftest { samples, depth, seed, out } => {
            let r = differential_test(samples, depth, seed);
            emit(&out, &format!("{r}\n"))?;
            if r.soundness_violations == 0 && r.collision_rate() <= MAX_COLLISION_RATE {
                Ok(())
            } else {
                Err(Failure::Violation)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
