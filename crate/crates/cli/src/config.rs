//! Declarative run configuration (TOML) and its translation into core
//! objects. Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tugwar::fields::{AffineP, ConstantP, PExponentField, TabulatedP};
use tugwar::grid::DomainSpec;
use tugwar::oracle::quadratic_time_coefficient;
use tugwar::payoff::{ConstantPayoff, Monomial, Payoff, PolynomialPayoff, TabulatedPayoff};
use tugwar::table::{Interpolation, RegularTable};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub domain: Option<DomainConfig>,
    pub grid: Option<GridConfig>,
    pub p: Option<PConfig>,
    pub payoff: Option<PayoffConfig>,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub barriers: BarrierConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainConfig {
    Box { center: Vec<f64>, half_widths: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Cube { n: usize, half_width: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    pub epsilon: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PConfig {
    Constant {
        value: f64,
    },
    /// `clamp(gradient·x + time_coeff·t + offset, p_min, p_max)`.
    Affine {
        gradient: Vec<f64>,
        #[serde(default)]
        time_coeff: f64,
        offset: f64,
        p_min: f64,
        p_max: Option<f64>,
    },
    /// Table over space and time, time as the last axis.
    Tabulated(TableConfig),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(default = "linear")]
    pub interpolation: Interpolation,
}

fn linear() -> Interpolation {
    Interpolation::Linear
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PayoffConfig {
    Constant {
        value: f64,
    },
    Polynomial {
        terms: Vec<TermConfig>,
    },
    /// `|x|² + time_coeff·t`; without `time_coeff` the exact coefficient
    /// for the configured constant `p` is used.
    Quadratic {
        time_coeff: Option<f64>,
    },
    Tabulated(TableConfig),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coeff: f64,
    pub x_powers: Vec<u32>,
    #[serde(default)]
    pub t_power: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Slices written to the CSV; all when absent.
    pub slices: Option<Vec<usize>>,
    #[serde(default)]
    pub dump: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StrategyConfig {
    Greedy,
    Zero,
    Pull {
        target: Vec<f64>,
        #[serde(default)]
        stay: bool,
    },
    Push {
        origin: Vec<f64>,
    },
    Cancellation {
        target: Vec<f64>,
        #[serde(default)]
        from_current: bool,
    },
    Fractional {
        target: Vec<f64>,
        a: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StoppingConfig {
    Boundary,
    Cylinder { center: Vec<f64>, radius: f64, t_bottom: f64 },
    Level { t_level: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "lattice_mode")]
    pub mode: GameMode,
    #[serde(default = "greedy")]
    pub player_i: StrategyConfig,
    #[serde(default = "greedy")]
    pub player_ii: StrategyConfig,
    /// Start points; the domain center when empty.
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    /// Start time; the horizon when absent.
    pub t0: Option<f64>,
    #[serde(default = "ten_thousand")]
    pub runs: usize,
    #[serde(default = "boundary")]
    pub stopping: StoppingConfig,
    /// Number of recorded trajectories (first start only) written as CSV.
    #[serde(default)]
    pub trajectories: usize,
    #[serde(default = "three")]
    pub tolerance_se: f64,
    #[serde(default = "nine_tenths")]
    pub min_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GameMode {
    Lattice,
    Continuum,
}

fn lattice_mode() -> GameMode {
    GameMode::Lattice
}
fn greedy() -> StrategyConfig {
    StrategyConfig::Greedy
}
fn boundary() -> StoppingConfig {
    StoppingConfig::Boundary
}
fn ten_thousand() -> usize {
    10_000
}
fn three() -> f64 {
    3.0
}
fn nine_tenths() -> f64 {
    0.9
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            mode: lattice_mode(),
            player_i: greedy(),
            player_ii: greedy(),
            starts: Vec::new(),
            t0: None,
            runs: ten_thousand(),
            stopping: boundary(),
            trajectories: 0,
            tolerance_se: three(),
            min_fraction: nine_tenths(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Lipschitz,
    Time,
    Holder,
    Harnack,
    Local,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "lipschitz")]
    pub kind: ProbeKind,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub t_top: Option<f64>,
    pub height: Option<f64>,
    pub min_separation: Option<f64>,
    pub min_gap: Option<f64>,
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default = "two")]
    pub a: u32,
    #[serde(default = "thousand")]
    pub count: usize,
    /// Verdict threshold for the Hölder fit.
    #[serde(default = "r2_floor")]
    pub min_r_squared: f64,
}

impl ProbeKind {
    pub fn label(self) -> &'static str {
        match self {
            ProbeKind::Lipschitz => "lipschitz",
            ProbeKind::Time => "time",
            ProbeKind::Holder => "holder",
            ProbeKind::Harnack => "harnack",
            ProbeKind::Local => "local",
        }
    }
}

fn lipschitz() -> ProbeKind {
    ProbeKind::Lipschitz
}
fn two() -> u32 {
    2
}
fn thousand() -> usize {
    1000
}
fn r2_floor() -> f64 {
    0.9
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            kind: lipschitz(),
            center: None,
            radius: None,
            t_top: None,
            height: None,
            min_separation: None,
            min_gap: None,
            radii: Vec::new(),
            a: two(),
            count: thousand(),
            min_r_squared: r2_floor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    #[serde(default = "dims")]
    pub dims: Vec<usize>,
    /// Inner radii as multiples of ε.
    #[serde(default = "r_multiples")]
    pub r_multiples: Vec<f64>,
    #[serde(default = "barrier_eps")]
    pub epsilon: f64,
    #[serde(default = "half")]
    pub outer_radius: f64,
    #[serde(default = "one")]
    pub inf_value: f64,
    #[serde(default = "barrier_samples")]
    pub samples: usize,
    #[serde(default = "deriv_tol")]
    pub derivative_tolerance: f64,
    #[serde(default = "yes")]
    pub holder: bool,
    #[serde(default = "holder_c")]
    pub holder_c: f64,
    #[serde(default = "holder_delta")]
    pub holder_delta: f64,
    pub holder_rings: Option<u64>,
    #[serde(default = "one")]
    pub time_a: f64,
    #[serde(default = "half")]
    pub time_r: f64,
    #[serde(default)]
    pub time_offset: f64,
}

fn dims() -> Vec<usize> {
    vec![1, 2, 3]
}
fn r_multiples() -> Vec<f64> {
    vec![9.0, 20.0]
}
fn barrier_eps() -> f64 {
    0.01
}
fn half() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn barrier_samples() -> usize {
    100_000
}
fn deriv_tol() -> f64 {
    1e-6
}
fn yes() -> bool {
    true
}
fn holder_c() -> f64 {
    1e4
}
fn holder_delta() -> f64 {
    0.05
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            dims: dims(),
            r_multiples: r_multiples(),
            epsilon: barrier_eps(),
            outer_radius: half(),
            inf_value: one(),
            samples: barrier_samples(),
            derivative_tolerance: deriv_tol(),
            holder: yes(),
            holder_c: holder_c(),
            holder_delta: holder_delta(),
            holder_rings: None,
            time_a: one(),
            time_r: half(),
            time_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Exact,
    Fd,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpacingConfig {
    /// `h = c·ε²`.
    EpsSquared { c: f64 },
    /// `h = ratio·ε`.
    Ratio { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    pub t_from: f64,
    pub t_to: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    #[serde(default = "epsilons")]
    pub epsilons: Vec<f64>,
    /// `|x − c| ≤ half the smallest extent`, `t ∈ [T/2, T]` when absent.
    pub cylinder: Option<CylinderConfig>,
    #[serde(default = "spacing")]
    pub spacing: SpacingConfig,
    #[serde(default = "exact")]
    pub reference: ReferenceKind,
    #[serde(default = "fd_h")]
    pub fd_h: f64,
    #[serde(default = "min_ratio")]
    pub min_ratio: f64,
    #[serde(default = "abs_fraction")]
    pub abs_fraction: f64,
}

fn epsilons() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}
fn spacing() -> SpacingConfig {
    SpacingConfig::EpsSquared { c: 0.25 }
}
fn exact() -> ReferenceKind {
    ReferenceKind::Exact
}
fn fd_h() -> f64 {
    0.02
}
fn min_ratio() -> f64 {
    1.5
}
fn abs_fraction() -> f64 {
    0.05
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            epsilons: epsilons(),
            cylinder: None,
            spacing: spacing(),
            reference: exact(),
            fd_h: fd_h(),
            min_ratio: min_ratio(),
            abs_fraction: abs_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "ns")]
    pub ns: Vec<u64>,
    /// λ as multiples of `b√N`.
    #[serde(default = "multiples")]
    pub multiples: Vec<f64>,
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default = "bound_runs")]
    pub runs: usize,
}

fn ns() -> Vec<u64> {
    vec![10, 100, 1000]
}
fn multiples() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}
fn bound_runs() -> usize {
    100_000
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { ns: ns(), multiples: multiples(), b: one(), runs: bound_runs() }
    }
}

impl Config {
    /// Reads `path` (or starts from an empty table), applies `key=value`
    /// overrides on dotted paths and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        Config::deserialize(toml::Value::Table(root)).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn domain(&self) -> Result<DomainSpec<f64>, CliError> {
        let d = self.domain.as_ref().ok_or_else(|| missing("domain"))?;
        let spec = match d {
            DomainConfig::Box { center, half_widths } => DomainSpec::new_box(center.clone(), half_widths.clone()),
            DomainConfig::Ball { center, radius } => DomainSpec::new_ball(center.clone(), *radius),
            DomainConfig::Cube { n, half_width } => DomainSpec::cube(*n, *half_width),
        };
        spec.map_err(CliError::from)
    }

    pub fn grid(&self) -> Result<&GridConfig, CliError> {
        self.grid.as_ref().ok_or_else(|| missing("grid"))
    }

    pub fn field(&self) -> Result<Box<dyn PExponentField<f64>>, CliError> {
        let p = self.p.as_ref().ok_or_else(|| missing("p"))?;
        Ok(match p {
            PConfig::Constant { value } => Box::new(ConstantP::new(*value)?),
            PConfig::Affine { gradient, time_coeff, offset, p_min, p_max } => {
                Box::new(AffineP::new(gradient.clone(), *time_coeff, *offset, *p_min, *p_max)?)
            }
            PConfig::Tabulated(t) => Box::new(TabulatedP::new(t.table()?)?),
        })
    }

    pub fn constant_p(&self) -> Option<f64> {
        match self.p {
            Some(PConfig::Constant { value }) => Some(value),
            _ => None,
        }
    }

    pub fn payoff(&self) -> Result<Box<dyn Payoff<f64>>, CliError> {
        let pay = self.payoff.as_ref().ok_or_else(|| missing("payoff"))?;
        let n = self.domain()?.dim();
        Ok(match pay {
            PayoffConfig::Constant { value } => Box::new(ConstantPayoff(*value)),
            PayoffConfig::Polynomial { terms } => Box::new(PolynomialPayoff::new(
                terms
                    .iter()
                    .map(|t| Monomial { coeff: t.coeff, x_powers: t.x_powers.clone(), t_power: t.t_power })
                    .collect(),
            )),
            PayoffConfig::Quadratic { time_coeff } => {
                let c = match (time_coeff, self.constant_p()) {
                    (Some(c), _) => *c,
                    (None, Some(p)) => quadratic_time_coefficient(n, p),
                    (None, None) => {
                        return Err(CliError::Config("payoff.time_coeff is required unless p is constant".into()))
                    }
                };
                Box::new(PolynomialPayoff::quadratic(n, c))
            }
            PayoffConfig::Tabulated(t) => Box::new(TabulatedPayoff::new(t.table()?)),
        })
    }
}

impl TableConfig {
    fn table(&self) -> Result<RegularTable<f64>, CliError> {
        Ok(RegularTable::new(
            self.origin.clone(),
            self.spacing.clone(),
            self.shape.clone(),
            self.values.clone(),
            self.interpolation,
        )?)
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("this command needs a [{section}] section"))
}

/// `a.b.c=value`; the value is parsed as a TOML value, falling back to a
/// plain string.
fn apply_override(root: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) =
        item.split_once('=').ok_or_else(|| CliError::Usage(format!("override '{item}' is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("override '{item}' has an empty key")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override '{key}': '{part}' is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
