//! Command-line front end. Exit codes: 0 pass, 1 verification failure,
//! 2 input error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::causal::{check_causal_order, compose_aggregate, reconstruct_locc, AggregateWiring, CausalOrder};
use crate::channels::{choi_of, CpMap, Instrument};
use crate::composition::{compose_ccstar, compose_locc_protocol, compose_loop, compose_one_way, JointMapSpec, LoccProtocol};
use crate::error::{Error, Result};
use crate::fixtures::ReconstructionInput;
use crate::io;
use crate::numerics::{ComplexMatrix, DEFAULT_TOL};
use crate::procmat::{
    causal_decompose, find_violating_strategies, probe_quantum_process, ClassicalProcess, RECOMBINATION_TOL,
};
use crate::selftest::{selftest, Check, Report};
use crate::sep::{nine_state_report, sep_to_locc_star, SepMap};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "causal-channels", version, about = "Verify bipartite classical-communication constructions on quantum instruments")]
pub struct Cli {
    /// Numerical tolerance; defaults depend on the subcommand.
    #[arg(long, global = true, env = "CAUSAL_CHANNELS_TOL")]
    pub tol: Option<f64>,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Include wall-clock durations in the report.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ComposeMode {
    OneWay,
    Protocol,
    Ccstar,
    Loop,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check that every conditioning symbol of an instrument sums to a channel.
    VerifyInstrument { file: PathBuf },
    /// Compose a one-way pair, a protocol, a wired pair, or a loop pair.
    Compose {
        #[arg(value_enum)]
        mode: ComposeMode,
        file: PathBuf,
    },
    /// Compile a separable map into a pair of loop instruments.
    CompileSep { file: PathBuf },
    /// Run the nine-state product-basis discrimination.
    DiscriminateNine,
    /// Test a wiring against a partial order of operations.
    CheckCausal { wiring: PathBuf, order: PathBuf },
    /// Rewrite a causally ordered wiring as an alternating protocol.
    ReconstructLocc { fixture: PathBuf },
    /// Check a classical process by deterministic strategies.
    CheckProcmat { file: PathBuf },
    /// Split a classical process into one-way components.
    DecomposeProcmat { file: PathBuf },
    /// Probe a process matrix with local channels (necessary condition only).
    ProbeProcmat {
        file: PathBuf,
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// Run the full verification suite.
    Selftest,
}

/// Input of `compose one-way`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OneWayInput {
    pub alice: Instrument,
    pub bob: Vec<CpMap>,
}

/// Input of `compose loop`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoopInput {
    pub alice: Instrument,
    pub bob: Instrument,
}

/// Input of `probe-procmat`: `w` on `I_A ⊗ O_A ⊗ I_B ⊗ O_B` with `dims` in that order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeInput {
    pub dims: [usize; 4],
    pub w: ComplexMatrix,
}

fn map_report(name: &str, map: &CpMap, tol: f64) -> Report {
    Report::single(
        Check::at_most(format!("{name}.tp_defect"), map.tp_defect(), tol),
        Some(json!({ "map": map })),
    )
}

fn value<T: Serialize>(x: &T) -> Result<Value> {
    Ok(serde_json::to_value(x)?)
}

/// Executes one subcommand. Verification errors become failed reports;
/// everything else is returned as an input error.
pub fn execute(cli: &Cli) -> Result<Report> {
    let result = dispatch(cli);
    match result {
        Err(e) if e.is_verification_failure() => Ok(Report::single(
            Check::holds("verification", false),
            Some(json!({ "error": e.to_string(), "witness": witness_of(&e) })),
        )),
        other => other,
    }
}

fn witness_of(e: &Error) -> Value {
    match e {
        Error::CausalOrder { k, l, slot } => json!({"k": k, "l": l, "slot": slot}),
        Error::Reconstruction { step, label } => json!({"step": step, "label": label}),
        Error::Infeasible { residual } => json!({"residual": residual}),
        _ => Value::Null,
    }
}

fn dispatch(cli: &Cli) -> Result<Report> {
    let tol = |default: f64| cli.tol.unwrap_or(default);
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Precondition(format!("tolerance {t} must be finite and nonnegative")));
        }
    }
    match &cli.command {
        Command::VerifyInstrument { file } => {
            let inst: Instrument = io::load(file)?;
            let t = tol(DEFAULT_TOL);
            let checks = (0..inst.in_alphabet())
                .map(|i| Check::at_most(format!("input{i}.tp_defect"), inst.channel(i).tp_defect(), t))
                .collect();
            Ok(Report::new(
                checks,
                Some(json!({
                    "in_alphabet": inst.in_alphabet(),
                    "out_alphabet": inst.out_alphabet(),
                    "in_dim": inst.in_dim(),
                    "out_dim": inst.out_dim(),
                })),
            ))
        }
        Command::Compose { mode, file } => {
            let t = tol(DEFAULT_TOL);
            match mode {
                ComposeMode::OneWay => {
                    let input: OneWayInput = io::load(file)?;
                    Ok(map_report("one_way", &compose_one_way(&input.alice, &input.bob)?, t))
                }
                ComposeMode::Protocol => {
                    let p: LoccProtocol = io::load(file)?;
                    Ok(map_report("protocol", &compose_locc_protocol(&p)?, t))
                }
                ComposeMode::Ccstar => {
                    let spec: JointMapSpec = io::load(file)?;
                    Ok(map_report("ccstar", &compose_ccstar(&spec)?.map, t))
                }
                ComposeMode::Loop => {
                    let input: LoopInput = io::load(file)?;
                    Ok(map_report("loop", &compose_loop(&input.alice, &input.bob)?.map, t))
                }
            }
        }
        Command::CompileSep { file } => {
            let m: SepMap = io::load(file)?;
            let t = tol(DEFAULT_TOL);
            let (a, b) = sep_to_locc_star(&m, t)?;
            let joint = compose_loop(&a, &b)?;
            let d = choi_of(&joint.map).distance(&choi_of(&m.joint_map()))?;
            Ok(Report::new(
                vec![
                    Check::at_most("alice.tp_defect", a.tp_defect(), t),
                    Check::at_most("bob.tp_defect", b.tp_defect(), t),
                    Check::at_most("loop.distance", d, tol(1e-8)),
                ],
                Some(json!({ "alice": a, "bob": b })),
            ))
        }
        Command::DiscriminateNine => {
            let t = tol(DEFAULT_TOL);
            let r = nine_state_report(t)?;
            let mut checks: Vec<Check> = r
                .states
                .iter()
                .map(|s| Check::at_most(format!("state{}.distance", s.state), s.distance, t))
                .collect();
            checks.push(Check::at_most("alice.tp_defect", r.alice_tp_defect, t));
            checks.push(Check::at_most("bob.tp_defect", r.bob_tp_defect, t));
            checks.push(Check::at_most("joint.tp_defect", r.joint_tp_defect, t));
            Ok(Report::new(checks, Some(value(&r)?)))
        }
        Command::CheckCausal { wiring, order } => {
            let p: AggregateWiring = io::load(wiring)?;
            let o: CausalOrder = io::load(order)?;
            let v = check_causal_order(&p, &o)?;
            Ok(Report::single(
                Check::holds("respects_causal_order", v.is_none()),
                Some(json!({ "violation": v })),
            ))
        }
        Command::ReconstructLocc { fixture } => {
            let fx: ReconstructionInput = io::load(fixture)?;
            let t = tol(1e-8);
            let rec = reconstruct_locc(&fx.alice, &fx.bob, &fx.wiring, &fx.order, DEFAULT_TOL.max(t.min(1e-6)))?;
            let direct = compose_aggregate(&fx.alice, &fx.bob, &fx.wiring)?;
            let rebuilt = compose_locc_protocol(&rec.protocol)?;
            let d = choi_of(&direct.map).distance(&choi_of(&rebuilt))?;
            Ok(Report::new(
                vec![
                    Check::holds("alternating", rec.protocol.is_alternating()),
                    Check::at_most("distance", d, t),
                ],
                Some(json!({ "extension": rec.extension, "protocol": rec.protocol })),
            ))
        }
        Command::CheckProcmat { file } => {
            let w: ClassicalProcess = io::load(file)?;
            let witness = find_violating_strategies(&w);
            Ok(Report::single(
                Check::holds("valid", witness.is_none()),
                Some(json!({ "witness": witness })),
            ))
        }
        Command::DecomposeProcmat { file } => {
            let w: ClassicalProcess = io::load(file)?;
            let dec = causal_decompose(&w)?;
            Ok(Report::single(
                Check::at_most("recombination", dec.recombination_error(&w), tol(RECOMBINATION_TOL)),
                Some(json!({ "decomposition": dec })),
            ))
        }
        Command::ProbeProcmat { file, probes } => {
            let input: ProbeInput = io::load(file)?;
            let r = probe_quantum_process(&input.w, input.dims, *probes, cli.seed, tol(DEFAULT_TOL))?;
            Ok(Report::single(
                Check::at_most("max_deviation", r.max_deviation, r.tolerance),
                Some(json!({ "probe_report": r, "note": "necessary condition only" })),
            ))
        }
        Command::Selftest => Ok(selftest(cli.seed, cli.timing)),
    }
}

/// Plain-text summary of a report.
pub fn render_text(report: &Report) -> String {
    let mut s = format!("{}\n", if report.pass { "PASS" } else { "FAIL" });
    for c in &report.checks {
        s.push_str(&format!(
            "  {} {} = {:.3e} (limit {:.3e})\n",
            if c.pass { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        ));
    }
    if let Some(d) = report.duration_seconds {
        s.push_str(&format!("  duration {d:.3} s\n"));
    }
    if let Some(Value::Object(details)) = &report.details {
        for key in ["error", "witness", "violation"] {
            if let Some(v) = details.get(key).filter(|v| !v.is_null()) {
                s.push_str(&format!("  {key}: {v}\n"));
            }
        }
    }
    s
}

fn emit(cli: &Cli, report: &Report) -> Result<()> {
    let text = match cli.format {
        Format::Json => io::to_canonical_string(report)?,
        Format::Text => render_text(report),
    };
    match &cli.out {
        Some(path) => write_file(path, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
        }
    };
    match execute(&cli) {
        Ok(report) => {
            if let Err(e) = emit(&cli, &report) {
                eprintln!("error: {e}");
                return EXIT_INPUT;
            }
            if report.pass {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
