//! `noether`: derive tangent-space dynamics from a Lagrangian, verify its
//! continuous symmetries, and certify the conserved charges numerically.
//!
//! Exit codes: 0 success, 1 symmetry or property failure, 2 usage or I/O
//! error, 3 derivation error, 4 integration error.

mod output;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use noether_core::dynamics::{self, integrate_monitored, IntegrationError};
use noether_core::model::{parse_initial_state, parse_system, Generator, SystemDef};
use noether_core::prolongation::{
    euler_lagrange, prolong, variational_equations_direct, DerivationError,
};
use noether_core::symbolic::{ZeroTestConfig, DEFAULT_SEED};
use noether_core::symmetry::{
    check_invariance, classical_charge, extended_charge, extended_charge_unchecked,
    gamma_gradient_charge, Charge, ChargeKind, SymmetryError,
};
use noether_core::corpus;
use noether_core::verify::{run_suite, VerifyOptions, PROPERTY_NAMES};

use output::*;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DERIVATION: u8 = 3;
const EXIT_INTEGRATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "noether",
    version,
    about = "Symmetries and conserved charges of Lagrangian systems, extended to their variational equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the prolonged density, equations of motion, variational
    /// equations, and mass matrix of a system
    Derive(DeriveArgs),
    /// Check named generators for invariance of the prolonged density
    Check(CheckArgs),
    /// Emit the conserved charges generated by named symmetries
    Charge(ChargeArgs),
    /// Integrate the combined system and certify charge conservation
    Simulate(SimulateArgs),
    /// Run the bundled property suite against the example corpus
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
    Csv,
}

#[derive(Args)]
struct SystemArg {
    /// System definition file
    #[arg(value_name = "SYSTEM")]
    system_pos: Option<PathBuf>,
    /// System definition file (alternative to the positional form)
    #[arg(long = "system", value_name = "PATH")]
    system_flag: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output format
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write output to a file instead of standard output
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ZeroTestArgs {
    /// Seed for the randomized zero test
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Tolerance for the randomized zero test
    #[arg(long, default_value_t = noether_core::symbolic::DEFAULT_TOL)]
    tol: f64,
}

impl ZeroTestArgs {
    fn config(&self) -> ZeroTestConfig {
        ZeroTestConfig {
            tol: self.tol,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct DeriveArgs {
    #[command(flatten)]
    system: SystemArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    system: SystemArg,
    /// Generator to check (repeatable; default: all in the file)
    #[arg(long = "generator", value_name = "NAME")]
    generators: Vec<String>,
    #[command(flatten)]
    zero: ZeroTestArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ChargeArgs {
    #[command(flatten)]
    system: SystemArg,
    /// Generator to process (repeatable; default: all in the file)
    #[arg(long = "generator", value_name = "NAME")]
    generators: Vec<String>,
    /// Emit charges even for generators that fail the symmetry check,
    /// tagged unverified
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    zero: ZeroTestArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    system: SystemArg,
    /// Initial-state file for the combined system
    #[arg(long, value_name = "PATH")]
    init: PathBuf,
    /// Generator whose charges to monitor (repeatable; default: all)
    #[arg(long = "generator", value_name = "NAME")]
    generators: Vec<String>,
    /// Integration end time
    #[arg(long = "t-end", default_value_t = 100.0)]
    t_end: f64,
    /// Integration step
    #[arg(long = "dt", default_value_t = 1e-3)]
    dt: f64,
    /// Relative drift tolerance deciding the exit status
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Seed for the symmetry checks guarding charge construction
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Monitor charges of failing generators too, tagged unverified
    #[arg(long)]
    force: bool,
    /// Write the trajectory CSV here (drift summary then goes to stdout);
    /// without it the CSV streams to stdout and the summary to stderr
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Format of the drift summary
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    /// Restrict to one corpus system
    #[arg(long, value_name = "NAME")]
    system: Option<String>,
    /// Restrict to one property
    #[arg(long, value_name = "PROPERTY")]
    only: Option<String>,
    /// Seed for the randomized zero tests
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<DerivationError> for CliError {
    fn from(e: DerivationError) -> Self {
        CliError::new(EXIT_DERIVATION, e.to_string())
    }
}

impl From<IntegrationError> for CliError {
    fn from(e: IntegrationError) -> Self {
        CliError::new(EXIT_INTEGRATION, e.to_string())
    }
}

impl From<SymmetryError> for CliError {
    fn from(e: SymmetryError) -> Self {
        let code = match &e {
            SymmetryError::NotASymmetry { .. } => EXIT_FAILURE,
            SymmetryError::Derivation(_) => EXIT_DERIVATION,
            _ => EXIT_USAGE,
        };
        CliError::new(code, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Derive(args) => cmd_derive(args),
        Command::Check(args) => cmd_check(args),
        Command::Charge(args) => cmd_charge(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_system(arg: &SystemArg) -> Result<(SystemDef, Vec<Generator>, PathBuf), CliError> {
    let path = match (&arg.system_pos, &arg.system_flag) {
        (Some(p), None) | (None, Some(p)) => p.clone(),
        (Some(_), Some(_)) => {
            return Err(CliError::new(
                EXIT_USAGE,
                "give the system file either positionally or with --system, not both",
            ))
        }
        (None, None) => return Err(CliError::new(EXIT_USAGE, "no system file given")),
    };
    let text = fs::read_to_string(&path).map_err(|e| {
        CliError::new(EXIT_USAGE, format!("cannot open {}: {e}", path.display()))
    })?;
    let (sys, gens) = parse_system(&text)
        .map_err(|d| CliError::new(EXIT_USAGE, format!("{}:{d}", path.display())))?;
    Ok((sys, gens, path))
}

fn selected_generators<'a>(
    gens: &'a [Generator],
    requested: &[String],
) -> Result<Vec<&'a Generator>, CliError> {
    if requested.is_empty() {
        return Ok(gens.iter().collect());
    }
    requested
        .iter()
        .map(|name| {
            gens.iter().find(|g| g.name() == name).ok_or_else(|| {
                CliError::new(EXIT_USAGE, format!("unknown generator `{name}`"))
            })
        })
        .collect()
}

fn emit(doc_text: String, doc_json: serde_json::Value, output: &OutputArgs) -> Result<(), CliError> {
    let body = match output.format {
        Format::Text => doc_text,
        Format::Structured => format!("{:#}\n", doc_json),
        Format::Csv => {
            return Err(CliError::new(
                EXIT_USAGE,
                "csv format applies only to `simulate` trajectories",
            ))
        }
    };
    match &output.out {
        Some(path) => fs::write(path, body).map_err(|e| {
            CliError::new(EXIT_USAGE, format!("cannot write {}: {e}", path.display()))
        }),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn cmd_derive(args: DeriveArgs) -> Result<u8, CliError> {
    let (sys, _, _) = load_system(&args.system)?;
    let gamma = prolong(&sys);
    let el = euler_lagrange(&sys);
    let var = variational_equations_direct(&sys)?;
    let doc = DeriveDoc {
        system: sys.name().to_string(),
        coords: sys.coords().to_vec(),
        gamma: gamma.gamma.to_string(),
        mass_matrix: el
            .mass
            .iter()
            .map(|row| row.iter().map(|e| e.to_string()).collect())
            .collect(),
        euler_lagrange: el.residuals.iter().map(|e| e.to_string()).collect(),
        variational: var.residuals.iter().map(|e| e.to_string()).collect(),
    };
    emit(
        doc.to_string(),
        serde_json::to_value(&doc).unwrap(),
        &args.output,
    )?;
    Ok(0)
}

fn cmd_check(args: CheckArgs) -> Result<u8, CliError> {
    let (sys, gens, _) = load_system(&args.system)?;
    let selected = selected_generators(&gens, &args.generators)?;
    let gamma = prolong(&sys);
    let cfg = args.zero.config();
    let mut reports = Vec::new();
    let mut all_zero = true;
    for g in selected {
        let report = check_invariance(&sys, &gamma, g, &cfg)?;
        all_zero &= report.verdict.is_zero();
        reports.push(CheckEntry::new(
            g.name(),
            report.residual.to_string(),
            &report.verdict,
        ));
    }
    let doc = CheckDoc {
        system: sys.name().to_string(),
        reports,
    };
    emit(
        doc.to_string(),
        serde_json::to_value(&doc).unwrap(),
        &args.output,
    )?;
    Ok(if all_zero { 0 } else { EXIT_FAILURE })
}

/// Charges a generator contributes: the extended charge always, the
/// classical charge when the base part is a nontrivial symmetry of the
/// Lagrangian, and the standalone velocity-gradient component for
/// ignorable-style translations.
fn charges_for(
    sys: &SystemDef,
    g: &Generator,
    cfg: &ZeroTestConfig,
    force: bool,
) -> Result<Vec<Charge>, CliError> {
    let gamma = prolong(sys);
    let mut out = Vec::new();
    match extended_charge(sys, &gamma, g, cfg) {
        Ok(tau) => out.push(tau),
        Err(SymmetryError::NotASymmetry { .. }) if force => {
            out.push(extended_charge_unchecked(sys, &gamma, g, false));
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    }
    let classical_applicable =
        !g.xi().is_const_zero() || g.zeta().iter().any(|z| !z.is_const_zero());
    if classical_applicable {
        if let Ok(c) = classical_charge(sys, g, cfg) {
            out.push(c);
        }
    }
    if let Ok(grad) = gamma_gradient_charge(sys, &gamma, g) {
        if !grad.expr.is_const_zero() {
            out.push(grad);
        }
    }
    Ok(out)
}

fn cmd_charge(args: ChargeArgs) -> Result<u8, CliError> {
    let (sys, gens, _) = load_system(&args.system)?;
    let selected = selected_generators(&gens, &args.generators)?;
    let cfg = args.zero.config();
    let mut entries = Vec::new();
    for g in selected {
        for charge in charges_for(&sys, g, &cfg, args.force)? {
            entries.push(ChargeEntry {
                generator: g.name().to_string(),
                name: charge.name.clone(),
                kind: match charge.kind {
                    ChargeKind::Classical => "classical".to_string(),
                    ChargeKind::Extended => "extended".to_string(),
                },
                expression: charge.expr.to_string(),
                verified: charge.verified,
            });
        }
    }
    let doc = ChargeDoc {
        system: sys.name().to_string(),
        charges: entries,
    };
    emit(
        doc.to_string(),
        serde_json::to_value(&doc).unwrap(),
        &args.output,
    )?;
    Ok(0)
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, CliError> {
    let (sys, gens, _) = load_system(&args.system)?;
    let selected = selected_generators(&gens, &args.generators)?;
    let init_text = fs::read_to_string(&args.init).map_err(|e| {
        CliError::new(
            EXIT_USAGE,
            format!("cannot open {}: {e}", args.init.display()),
        )
    })?;
    let init = parse_initial_state(&init_text, &sys)
        .map_err(|d| CliError::new(EXIT_USAGE, format!("{}:{d}", args.init.display())))?;

    let cfg = ZeroTestConfig::with_seed(args.seed);
    let mut charges = Vec::new();
    for g in selected {
        charges.extend(charges_for(&sys, g, &cfg, args.force)?);
    }

    let ode = dynamics::assemble_ode(&sys)?;
    let (traj, drift) = integrate_monitored(&ode, &init, args.t_end, args.dt, &charges)?;

    let passed = drift.iter().all(|d| d.relative_drift < args.tol);
    let doc = SimulateDoc {
        system: sys.name().to_string(),
        t_end: args.t_end,
        dt: args.dt,
        tolerance: args.tol,
        drift,
        passed,
    };

    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| {
                CliError::new(EXIT_USAGE, format!("cannot write {}: {e}", path.display()))
            })?;
            let mut w = std::io::BufWriter::new(file);
            dynamics::write_csv(&traj, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::new(EXIT_USAGE, format!("csv write failed: {e}")))?;
            let summary = match args.format {
                Format::Structured => format!("{:#}\n", serde_json::to_value(&doc).unwrap()),
                _ => doc.to_string(),
            };
            print!("{summary}");
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = std::io::BufWriter::new(stdout.lock());
            dynamics::write_csv(&traj, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::new(EXIT_USAGE, format!("csv write failed: {e}")))?;
            let summary = match args.format {
                Format::Structured => format!("{:#}\n", serde_json::to_value(&doc).unwrap()),
                _ => doc.to_string(),
            };
            eprint!("{summary}");
        }
    }
    Ok(if passed { 0 } else { EXIT_FAILURE })
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, CliError> {
    if let Some(only) = &args.only {
        if !PROPERTY_NAMES.contains(&only.as_str()) {
            return Err(CliError::new(
                EXIT_USAGE,
                format!(
                    "unknown property `{only}`; available: {}",
                    PROPERTY_NAMES.join(", ")
                ),
            ));
        }
    }
    if let Some(system) = &args.system {
        if !corpus::names().contains(&system.as_str()) {
            return Err(CliError::new(
                EXIT_USAGE,
                format!(
                    "unknown corpus system `{system}`; available: {}",
                    corpus::names().join(", ")
                ),
            ));
        }
    }
    let opts = VerifyOptions {
        seed: args.seed,
        system: args.system.clone(),
        only: args.only.clone(),
    };
    let results = run_suite(&opts);
    let passed = !results.is_empty() && results.iter().all(|r| r.passed);
    let doc = VerifyDoc {
        seed: args.seed,
        results,
        passed,
    };
    emit(
        doc.to_string(),
        serde_json::to_value(&doc).unwrap(),
        &args.output,
    )?;
    Ok(if passed { 0 } else { EXIT_FAILURE })
}
