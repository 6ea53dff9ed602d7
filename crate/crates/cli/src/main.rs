//! `sos`: experiment runner for the SOS interface laboratory.
//!
//! Every output starts with the full effective configuration (as `# key=value`
//! lines for CSV/text, or a `config` object for JSON), which can be fed back
//! through `--config`. Exit codes: 0 ok, 2 precondition, 3 guard, 4 numerical flag.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sos_core::contours::all_contours;
use sos_core::exact::{
    check_monotonicity, default_margin, extract_potentials, partition_brute, partition_transfer, tau_zero_exact,
    verify_fkg, Constraints, HeightWindow, Method as ExactMethod, PartitionResult,
};
use sos_core::free_energy::{
    log_marginal_positivity, log_positivity, log_positivity_exact, scaling_csv, scaling_experiment, tau_zero_mc,
    McParams, ScalingParams, StageEstimator,
};
use sos_core::lattice::{from_text, to_text};
use sos_core::mc::{observables_csv, run_chain, ChainParams, ObservableOptions, RandomSeed};
use sos_core::numerics::fmt_f64;
use sos_core::{BoundaryCondition, Error, InverseTemperature, Region, Result, Staircase};

#[derive(Parser)]
#[command(name = "sos", version, about = "Exact and Monte Carlo experiments on the 2+1 dimensional SOS model")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact log partition function on a box
    Enumerate(EnumerateArgs),
    /// Heat-bath chain with observables
    Sample(SampleArgs),
    /// Exhaustive FKG lattice-condition check
    VerifyFkg(FkgArgs),
    /// Cluster-expansion potentials of small shapes
    Potentials(PotentialArgs),
    /// Finite-M staircase monotonicity gaps
    Monotonicity(MonotonicityArgs),
    /// Step free energy at zero tilt
    Tau0(TauArgs),
    /// log P(η ≥ 0 on the box)
    Positivity(PositivityArgs),
    /// Positivity rate, step free energy, H(L) and FKG bound over L
    Scaling(ScalingArgs),
    /// Level lines of a height field file
    Contours(ContourArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct Common {
    /// Inverse temperature
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (stdout if absent)
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// key=value file; explicit flags override it
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

/// `zero`, `xi`, or `const:<h>`
#[derive(Clone, Debug, PartialEq)]
struct BcSpec(BoundaryCondition);

impl FromStr for BcSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zero" => Ok(BcSpec(BoundaryCondition::Zero)),
            "xi" => Ok(BcSpec(BoundaryCondition::XiStep)),
            _ => match s.strip_prefix("const:").map(str::parse::<i32>) {
                Some(Ok(h)) => Ok(BcSpec(BoundaryCondition::Constant(h))),
                _ => Err(format!("unknown boundary condition {s:?}; use zero, xi or const:<h>")),
            },
        }
    }
}

impl Serialize for BcSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let label = match &self.0 {
            BoundaryCondition::Zero => "zero".to_string(),
            BoundaryCondition::XiStep => "xi".to_string(),
            BoundaryCondition::Constant(h) => format!("const:{h}"),
            other => other.label(),
        };
        s.serialize_str(&label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ExactChoice {
    Auto,
    Brute,
    Transfer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Estimator {
    Exact,
    Mc,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct EnumerateArgs {
    /// Half-width of the box
    #[arg(long = "L", default_value_t = 1)]
    #[serde(rename = "L")]
    l: i32,
    /// Half-height (defaults to L)
    #[arg(long = "M")]
    #[serde(rename = "M")]
    m: Option<i32>,
    /// Window margin above and below the boundary heights
    #[arg(long)]
    window: Option<i32>,
    #[arg(long, default_value = "zero")]
    bc: BcSpec,
    /// Staircase boundary: lower step positions (with --b)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    a: Option<Vec<i32>>,
    /// Staircase boundary: upper step positions (with --a)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    b: Option<Vec<i32>>,
    /// Condition on η ≥ 0 at every site
    #[arg(long)]
    positive: bool,
    #[arg(long, value_enum, default_value = "auto")]
    method: ExactChoice,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SampleArgs {
    #[arg(long = "L", default_value_t = 8)]
    #[serde(rename = "L")]
    l: i32,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    m: Option<i32>,
    #[arg(long, default_value = "zero")]
    bc: BcSpec,
    /// Floor constraint η ≥ floor
    #[arg(long, allow_hyphen_values = true)]
    floor: Option<i32>,
    /// Total sweeps including burn-in
    #[arg(long, default_value_t = 1000)]
    sweeps: u64,
    /// Defaults to 10·L, doubled under a floor
    #[arg(long)]
    burnin: Option<u64>,
    #[arg(long, default_value_t = 1)]
    every: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    initial: i32,
    /// Count level lines per height
    #[arg(long)]
    level_lines: bool,
    /// High-circuit event as `delta,K`
    #[arg(long, value_delimiter = ',')]
    high_circuit: Option<Vec<f64>>,
    /// Write the final height field here
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct FkgArgs {
    /// Side length of the box
    #[arg(long = "L-box", default_value_t = 2)]
    #[serde(rename = "L-box")]
    l_box: i32,
    /// Other side length (defaults to L-box)
    #[arg(long = "M-box")]
    #[serde(rename = "M-box")]
    m_box: Option<i32>,
    /// Heights range over [−window, window]
    #[arg(long, default_value_t = 2)]
    window: i32,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct PotentialArgs {
    #[arg(long, default_value_t = 4)]
    max_sites: usize,
    /// Heights range over [−window, window]
    #[arg(long, default_value_t = 2)]
    window: i32,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct MonotonicityArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,0")]
    a: Vec<i32>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,0")]
    b: Vec<i32>,
    #[arg(long = "L", default_value_t = 1)]
    #[serde(rename = "L")]
    l: i32,
    #[arg(long = "M", value_delimiter = ',', default_value = "2,3,4")]
    #[serde(rename = "M")]
    m: Vec<i32>,
    #[arg(long, default_value_t = 2)]
    window: i32,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct McArgs {
    /// Measured sweeps per stage
    #[arg(long, default_value_t = 1000)]
    sweeps: u64,
    #[arg(long, default_value_t = 100)]
    burnin: u64,
    #[arg(long)]
    max_sweeps: Option<u64>,
    /// Target relative error per stage
    #[arg(long, default_value_t = 0.02)]
    target: f64,
    #[arg(long, default_value_t = 20)]
    batches: usize,
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

impl McArgs {
    fn params(&self, seed: u64) -> McParams {
        McParams {
            sweeps: self.sweeps,
            burnin: self.burnin,
            max_sweeps: self.max_sweeps.unwrap_or(self.sweeps * 64),
            target_rel_error: self.target,
            batches: self.batches,
            seed: RandomSeed::new(seed, self.stream),
            estimator: StageEstimator::Indicator,
        }
    }

    fn resolve(&mut self) {
        self.max_sweeps.get_or_insert(self.sweeps * 64);
    }
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct TauArgs {
    #[arg(long = "L", default_value_t = 2)]
    #[serde(rename = "L")]
    l: i32,
    #[arg(long, value_enum, default_value = "exact")]
    method: Estimator,
    /// Window margin for the exact computation
    #[arg(long)]
    window: Option<i32>,
    #[command(flatten)]
    #[serde(flatten)]
    mc: McArgs,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct PositivityArgs {
    #[arg(long = "L", default_value_t = 1)]
    #[serde(rename = "L")]
    l: i32,
    #[arg(long, value_enum, default_value = "mc")]
    method: Estimator,
    /// Window margin for the exact computation
    #[arg(long)]
    window: Option<i32>,
    /// Average the conditional probability instead of the indicator
    #[arg(long)]
    conditional: bool,
    #[command(flatten)]
    #[serde(flatten)]
    mc: McArgs,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ScalingArgs {
    #[arg(long = "L", value_delimiter = ',', default_value = "4,8,16")]
    #[serde(rename = "L")]
    l: Vec<i32>,
    /// Initial measured sweeps per positivity stage
    #[arg(long, default_value_t = 200)]
    sweeps: u64,
    #[arg(long, default_value_t = 50)]
    burnin: u64,
    #[arg(long)]
    max_sweeps: Option<u64>,
    #[arg(long, default_value_t = 0.02)]
    target: f64,
    /// Sweeps per boundary-flip ensemble
    #[arg(long, default_value_t = 2000)]
    tau_sweeps: u64,
    /// Sweeps of the unconstrained chain for the FKG bound
    #[arg(long, default_value_t = 4000)]
    marginal_sweeps: u64,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ContourArgs {
    /// Height field in the text format
    #[arg(long)]
    input: PathBuf,
    /// Include the dual bonds of every contour
    #[arg(long)]
    with_bonds: bool,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

/// What a command produced, and whether a numerical flag was raised.
struct Outcome {
    text: String,
    flagged: Option<String>,
}

impl Outcome {
    fn ok(text: String) -> Outcome {
        Outcome { text, flagged: None }
    }
}

fn beta_of(c: &Common) -> Result<InverseTemperature> {
    InverseTemperature::new(c.beta)
}

fn unsupported(cmd: &str, f: Format) -> Error {
    Error::InvalidParameter(format!("{cmd} does not support --format {}", format!("{f:?}").to_lowercase()))
}

fn box_region(l: i32, m: Option<i32>) -> Result<Region> {
    match m {
        Some(m) => Region::rectangle(l, m),
        None => Region::square(l),
    }
}

fn cmd_enumerate(mut a: EnumerateArgs) -> Result<Outcome> {
    let beta = beta_of(&a.common)?;
    let region = Arc::new(box_region(a.l, a.m)?);
    let bc = match (&a.a, &a.b) {
        (Some(sa), Some(sb)) => {
            BoundaryCondition::Staircase(Staircase::new(sa.clone(), sb.clone(), a.l, a.m.unwrap_or(a.l))?)
        }
        (None, None) => a.bc.0.clone(),
        _ => return Err(Error::InvalidStaircase("--a and --b must be given together".into())),
    };
    let bc = Arc::new(bc);
    let margin = *a.window.get_or_insert(default_margin(beta.value()));
    let window = HeightWindow::around(&region, &bc, margin)?;
    let c = if a.positive {
        Constraints::none().floor_on(region.sites().iter().copied(), 0)
    } else {
        Constraints::none()
    };
    let r: PartitionResult = match a.method {
        ExactChoice::Brute => partition_brute(&region, &bc, beta, window, &c)?,
        ExactChoice::Transfer => partition_transfer(&region, &bc, beta, window, &c)?,
        ExactChoice::Auto => match partition_transfer(&region, &bc, beta, window, &c) {
            Ok(r) => r,
            Err(Error::Guard { .. }) => partition_brute(&region, &bc, beta, window, &c)?,
            Err(e) => return Err(e),
        },
    };
    let fmt = *a.common.format.get_or_insert(Format::Json);
    let cfg = output::config_pairs("enumerate", &a)?;
    let method = match r.method {
        ExactMethod::Brute => "brute",
        ExactMethod::Transfer => "transfer",
    };
    Ok(Outcome::ok(match fmt {
        Format::Json => output::json(&cfg, serde_json::to_value(&r)?)?,
        Format::Csv => output::csv(
            &cfg,
            &format!(
                "log_z,beta,window,method,infeasible,constraint_digest\n{},{},{}:{},{method},{},{}\n",
                fmt_f64(r.log_z),
                fmt_f64(r.beta),
                r.window.hmin,
                r.window.hmax,
                r.infeasible,
                r.constraint_digest
            ),
        ),
        Format::Text => output::text(
            &cfg,
            &[
                ("log_z", fmt_f64(r.log_z)),
                ("window", format!("[{}, {}]", r.window.hmin, r.window.hmax)),
                ("method", method.into()),
                ("infeasible", r.infeasible.to_string()),
            ],
        ),
    }))
}

fn cmd_sample(mut a: SampleArgs) -> Result<Outcome> {
    let region = Arc::new(box_region(a.l, a.m)?);
    let bc = Arc::new(a.bc.0.clone());
    let high_circuit = match &a.high_circuit {
        None => None,
        Some(v) if v.len() == 2 && v[1].fract() == 0.0 => Some((v[0], v[1] as i32)),
        Some(v) => return Err(Error::InvalidParameter(format!("--high-circuit takes delta,K, got {v:?}"))),
    };
    let burnin = *a
        .burnin
        .get_or_insert_with(|| sos_core::mc::default_burnin(sos_core::mc::region_half_width(&region), a.floor.is_some()));
    let params = ChainParams {
        beta: a.common.beta,
        floor: a.floor,
        sweeps: a.sweeps,
        burnin: Some(burnin),
        seed: RandomSeed::new(a.common.seed, a.stream),
        every: a.every,
        initial_height: a.initial,
        observables: ObservableOptions { level_lines: a.level_lines, high_circuit },
    };
    let run = run_chain(&region, &bc, &params)?;
    if let Some(p) = &a.snapshot {
        output::emit(Some(p), &to_text(&run.final_config)?)?;
    }
    let fmt = *a.common.format.get_or_insert(Format::Csv);
    let cfg = output::config_pairs("sample", &a)?;
    Ok(Outcome::ok(match fmt {
        Format::Csv => output::csv(&cfg, &observables_csv(&run.observables)),
        Format::Json => output::json(&cfg, json!({ "burnin": run.burnin, "observables": run.observables }))?,
        Format::Text => return Err(unsupported("sample", fmt)),
    }))
}

fn cmd_verify_fkg(mut a: FkgArgs) -> Result<Outcome> {
    let beta = beta_of(&a.common)?;
    let h = *a.m_box.get_or_insert(a.l_box);
    if a.l_box < 1 || h < 1 || a.window < 0 {
        return Err(Error::InvalidParameter("box sides must be positive and the window nonnegative".into()));
    }
    let region = Arc::new(Region::block(0, 0, a.l_box, h)?);
    let window = HeightWindow::new(-a.window, a.window)?;
    let rep = verify_fkg(&region, &Arc::new(BoundaryCondition::Zero), beta, window)?;
    let fmt = *a.common.format.get_or_insert(Format::Text);
    let cfg = output::config_pairs("verify-fkg", &a)?;
    Ok(Outcome::ok(match fmt {
        Format::Text => output::text(
            &cfg,
            &[
                ("states", rep.states.to_string()),
                ("pairs_checked", rep.pairs_checked.to_string()),
                ("violations", rep.violations.len().to_string()),
                ("max_slack", fmt_f64(rep.max_slack)),
            ],
        ),
        Format::Json => output::json(&cfg, serde_json::to_value(&rep)?)?,
        Format::Csv => output::csv(
            &cfg,
            &format!(
                "states,pairs_checked,violations,max_slack\n{},{},{},{}\n",
                rep.states,
                rep.pairs_checked,
                rep.violations.len(),
                fmt_f64(rep.max_slack)
            ),
        ),
    }))
}

fn cmd_potentials(mut a: PotentialArgs) -> Result<Outcome> {
    let beta = beta_of(&a.common)?;
    let table = extract_potentials(a.max_sites, HeightWindow::new(-a.window, a.window)?, beta)?;
    let fmt = *a.common.format.get_or_insert(Format::Csv);
    let cfg = output::config_pairs("potentials", &a)?;
    Ok(Outcome::ok(match fmt {
        Format::Csv => output::csv(&cfg, &table.to_csv()),
        Format::Json => output::json(&cfg, serde_json::to_value(&table)?)?,
        Format::Text => output::text(
            &cfg,
            &[
                ("shapes", table.entries.len().to_string()),
                ("max_disconnected_phi", fmt_f64(table.max_disconnected_phi)),
                ("shift_invariance_error", fmt_f64(table.shift_invariance_error)),
                ("decay_slope", fmt_f64(table.decay_slope)),
            ],
        ),
    }))
}

fn cmd_monotonicity(mut a: MonotonicityArgs) -> Result<Outcome> {
    let beta = beta_of(&a.common)?;
    let rep = check_monotonicity(&a.a, &a.b, a.l, &a.m, beta, a.window)?;
    let fmt = *a.common.format.get_or_insert(Format::Csv);
    let cfg = output::config_pairs("monotonicity", &a)?;
    Ok(Outcome::ok(match fmt {
        Format::Csv => {
            let mut body = String::from("M,joint,singles_sum,delta,shift\n");
            for r in &rep.rows {
                body.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.m,
                    fmt_f64(r.joint),
                    fmt_f64(r.singles.iter().sum()),
                    fmt_f64(r.delta),
                    r.shift.map(fmt_f64).unwrap_or_default()
                ));
            }
            output::csv(&cfg, &body)
        }
        Format::Json => output::json(&cfg, serde_json::to_value(&rep)?)?,
        Format::Text => output::text(
            &cfg,
            &[
                ("delta_at_largest", fmt_f64(rep.delta_at_largest)),
                ("delta_nonincreasing", rep.delta_nonincreasing.to_string()),
            ],
        ),
    }))
}

fn cmd_tau0(mut a: TauArgs) -> Result<Outcome> {
    let beta = beta_of(&a.common)?;
    let fmt = *a.common.format.get_or_insert(Format::Json);
    match a.method {
        Estimator::Exact => {
            let margin = *a.window.get_or_insert(default_margin(beta.value()));
            let t = tau_zero_exact(a.l, beta, margin)?;
            let cfg = output::config_pairs("tau0", &a)?;
            Ok(Outcome::ok(match fmt {
                Format::Json => output::json(&cfg, serde_json::to_value(&t)?)?,
                Format::Csv => output::csv(
                    &cfg,
                    &format!(
                        "L,beta,log_ratio,tau_hat,tau_half_width\n{},{},{},{},{}\n",
                        t.l,
                        fmt_f64(t.beta),
                        fmt_f64(t.log_ratio),
                        fmt_f64(t.per_length),
                        fmt_f64(t.per_half_width)
                    ),
                ),
                Format::Text => output::text(
                    &cfg,
                    &[
                        ("log_ratio", fmt_f64(t.log_ratio)),
                        ("tau_hat", fmt_f64(t.per_length)),
                        ("tau_half_width", fmt_f64(t.per_half_width)),
                    ],
                ),
            }))
        }
        Estimator::Mc => {
            a.mc.resolve();
            let t = tau_zero_mc(a.l, beta, &a.mc.params(a.common.seed))?;
            let cfg = output::config_pairs("tau0", &a)?;
            let flagged = t.log_ratio.flagged_stages();
            let flag = (!flagged.is_empty()).then(|| {
                let labels: Vec<&str> = flagged.iter().map(|s| s.label.as_str()).collect();
                format!("effective sample size below 100 in both directions at {}", labels.join(" "))
            });
            let text = match fmt {
                Format::Json => output::json(&cfg, serde_json::to_value(&t)?)?,
                Format::Csv => {
                    let mut body = String::from("stage,flip,value,std_error,ess_forward,ess_reverse,flagged\n");
                    for (i, s) in t.log_ratio.components.iter().enumerate() {
                        let (ef, er) = s.ess.unwrap_or((f64::NAN, f64::NAN));
                        body.push_str(&format!(
                            "{i},\"{}\",{},{},{},{},{}\n",
                            s.label,
                            fmt_f64(s.value),
                            fmt_f64(s.std_error),
                            fmt_f64(ef),
                            fmt_f64(er),
                            s.flagged
                        ));
                    }
                    body.push_str(&format!(
                        "# log_ratio={} se={} tau_hat={} se_tau={}\n",
                        fmt_f64(t.log_ratio.value),
                        fmt_f64(t.log_ratio.std_error),
                        fmt_f64(t.per_length),
                        fmt_f64(t.per_length_se)
                    ));
                    output::csv(&cfg, &body)
                }
                Format::Text => output::text(
                    &cfg,
                    &[
                        ("log_ratio", fmt_f64(t.log_ratio.value)),
                        ("std_error", fmt_f64(t.log_ratio.std_error)),
                        ("tau_hat", fmt_f64(t.per_length)),
                        ("se_tau", fmt_f64(t.per_length_se)),
                        ("tau_half_width", fmt_f64(t.per_half_width)),
                    ],
                ),
            };
            Ok(Outcome { text, flagged: flag })
        }
    }
}

fn cmd_positivity(mut a: PositivityArgs) -> Result<Outcome> {
    let beta = beta_of(&a.common)?;
    let region = Arc::new(Region::square(a.l)?);
    let bc = Arc::new(BoundaryCondition::Zero);
    let fmt = *a.common.format.get_or_insert(Format::Json);
    let (est, fkg) = match a.method {
        Estimator::Exact => {
            let margin = *a.window.get_or_insert(default_margin(beta.value()));
            let window = HeightWindow::around(&region, &bc, margin)?;
            (log_positivity_exact(&region, &bc, beta, window, region.sites())?, None)
        }
        Estimator::Mc => {
            a.mc.resolve();
            let mut p = a.mc.params(a.common.seed);
            if a.conditional {
                p.estimator = StageEstimator::Conditional;
            }
            let est = log_positivity(&region, &bc, beta, &p)?;
            let marg = McParams { sweeps: p.sweeps * 4, max_sweeps: p.sweeps * 4, ..p.clone() };
            (est, Some(log_marginal_positivity(&region, &bc, beta, &marg)?))
        }
    };
    let cfg = output::config_pairs("positivity", &a)?;
    let flagged = est.flagged_stages();
    let flag = (!flagged.is_empty()).then(|| {
        format!("{} stage(s) missed the target relative error at the sweep cap", flagged.len())
    });
    let mut lines = vec![
        ("log_p", fmt_f64(est.value)),
        ("std_error", fmt_f64(est.std_error)),
        ("n_samples", est.n_samples.to_string()),
    ];
    if let Some(f) = &fkg {
        lines.push(("fkg_lower_bound", fmt_f64(f.value)));
        lines.push(("fkg_se", fmt_f64(f.std_error)));
    }
    let text = match fmt {
        Format::Json => output::json(&cfg, json!({ "estimate": est, "fkg_lower_bound": fkg }))?,
        Format::Text => output::text(&cfg, &lines),
        Format::Csv => {
            let mut body = String::from("stage,site,value,std_error,n_samples,flagged\n");
            for (i, s) in est.components.iter().enumerate() {
                body.push_str(&format!(
                    "{i},\"{}\",{},{},{},{}\n",
                    s.label,
                    fmt_f64(s.value),
                    fmt_f64(s.std_error),
                    s.n_samples,
                    s.flagged
                ));
            }
            for (k, v) in &lines {
                body.push_str(&format!("# {k}={v}\n"));
            }
            output::csv(&cfg, &body)
        }
    };
    Ok(Outcome { text, flagged: flag })
}

fn cmd_scaling(mut a: ScalingArgs) -> Result<Outcome> {
    let beta = beta_of(&a.common)?;
    let max = *a.max_sweeps.get_or_insert(a.sweeps * 16);
    let seed = a.common.seed;
    let params = ScalingParams {
        positivity: McParams {
            sweeps: a.sweeps,
            burnin: a.burnin,
            max_sweeps: max,
            target_rel_error: a.target,
            seed: RandomSeed::new(seed, 0),
            ..McParams::default()
        },
        tau: McParams {
            sweeps: a.tau_sweeps,
            burnin: a.burnin.max(200),
            max_sweeps: a.tau_sweeps,
            seed: RandomSeed::new(seed, 1),
            ..McParams::default()
        },
        marginals: McParams {
            sweeps: a.marginal_sweeps,
            burnin: a.burnin.max(200),
            max_sweeps: a.marginal_sweeps,
            seed: RandomSeed::new(seed, 2),
            ..McParams::default()
        },
    };
    let rows = scaling_experiment(&a.l, beta, &params)?;
    let fmt = *a.common.format.get_or_insert(Format::Csv);
    let cfg = output::config_pairs("scaling", &a)?;
    let flagged: usize = rows.iter().map(|r| r.flagged_stages).sum();
    let text = match fmt {
        Format::Csv => output::csv(&cfg, &scaling_csv(&rows)),
        Format::Json => output::json(&cfg, serde_json::to_value(&rows)?)?,
        Format::Text => return Err(unsupported("scaling", fmt)),
    };
    Ok(Outcome { text, flagged: (flagged > 0).then(|| format!("{flagged} flagged stage(s)")) })
}

fn cmd_contours(mut a: ContourArgs) -> Result<Outcome> {
    let text = std::fs::read_to_string(&a.input)?;
    let config = from_text(&text)?;
    let rep = all_contours(&config)?;
    let fmt = *a.common.format.get_or_insert(Format::Json);
    let cfg = output::config_pairs("contours", &a)?;
    Ok(Outcome::ok(match fmt {
        Format::Json => output::json(&cfg, rep.to_json(a.with_bonds))?,
        Format::Csv => output::csv(&cfg, &rep.summary_csv()),
        Format::Text => output::text(
            &cfg,
            &[
                ("contours", rep.lines.len().to_string()),
                ("total_length", rep.total_length().to_string()),
                ("energy", config.energy().to_string()),
            ],
        ),
    }))
}

fn run(cli: Cli) -> Result<Option<String>> {
    let (out, outcome) = match cli.command {
        Command::Enumerate(a) => (a.common.out.clone(), cmd_enumerate(a)?),
        Command::Sample(a) => (a.common.out.clone(), cmd_sample(a)?),
        Command::VerifyFkg(a) => (a.common.out.clone(), cmd_verify_fkg(a)?),
        Command::Potentials(a) => (a.common.out.clone(), cmd_potentials(a)?),
        Command::Monotonicity(a) => (a.common.out.clone(), cmd_monotonicity(a)?),
        Command::Tau0(a) => (a.common.out.clone(), cmd_tau0(a)?),
        Command::Positivity(a) => (a.common.out.clone(), cmd_positivity(a)?),
        Command::Scaling(a) => (a.common.out.clone(), cmd_scaling(a)?),
        Command::Contours(a) => (a.common.out.clone(), cmd_contours(a)?),
    };
    output::emit(out.as_deref(), &outcome.text)?;
    Ok(outcome.flagged)
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error[{}]: {e}", e.reason());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(flag)) => {
            log::warn!("{flag}");
            eprintln!("error[numerical]: {flag}");
            ExitCode::from(4)
        }
        Err(e) => fail(&e),
    }
}
