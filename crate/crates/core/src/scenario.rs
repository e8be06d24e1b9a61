//! Scenario files: parsing, execution, reports, CSV traces and witness
//! files, and witness replay.
//!
//! A scenario is `{kind, seed, output_dir, payload}`. Running it writes
//! `report.json`, CSV traces and one `witness_<label>.json` per falsified
//! check into the output directory. Exit codes: 0 no counterexample or
//! success, 1 falsified or failure, 2 hypothesis violation, 3 usage or
//! configuration error.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::builtins::{self, BuiltinError, SystemSpec};
use crate::comparison::{ComparisonFn, DEFAULT_INVERT_TOL};
use crate::dynamics::{fmt17, integrate, InputSignal, IntegrationOptions, SystemModel, TrajectoryStatus};
use crate::etc::{self, EtcSetup, EtcTolerance};
use crate::lyapunov::{
    self, check_dissipative, check_implication, fit_iss_estimate, DissipativeCertificate, ImplicationCertificate,
    LyapunovFn,
};
use crate::probe::{self, IssEstimate, ProbeReport, Replay, SamplingBudget, TrajectoryCheck, Verdict, Witness};
use crate::sampling;
use crate::smallgain::{
    self, Boundary, DecayPath, GainMatrix2, Neighbors, Network, SynthesisOptions,
};

pub const REPORT_SCHEMA: &str = "isskit.report/1";
pub const WITNESS_SCHEMA: &str = "isskit.witness/1";

/// Environment variables overriding integration tolerances.
pub const ENV_REL_TOL: &str = "ISSKIT_REL_TOL";
pub const ENV_ABS_TOL: &str = "ISSKIT_ABS_TOL";
pub const ENV_BLOWUP: &str = "ISSKIT_BLOWUP_THRESHOLD";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    /// Schema violation at a JSON pointer.
    #[error("schema violation at `{pointer}`: {message}")]
    Schema { pointer: String, message: String },
    #[error("{0}")]
    Builtin(#[from] BuiltinError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{0}")]
    Run(String),
}

impl ScenarioError {
    fn io(path: &Path, source: io::Error) -> Self {
        ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Run(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Simulate,
    IssProbe,
    LyapunovCheck,
    EtcSim,
    Sgc2,
    NetworkCertify,
    NetworkSim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub payload: Value,
}

/// serde path (`payload.system.name`, `rhs[0]`) as a JSON pointer.
fn pointer(prefix: &str, path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = prefix.to_string();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn parse_at<T: DeserializeOwned>(value: &Value, prefix: &str) -> Result<T, ScenarioError> {
    serde_path_to_error::deserialize(value).map_err(|e| ScenarioError::Schema {
        pointer: pointer(prefix, e.path()),
        message: e.inner().to_string(),
    })
}

/// Parse scenario text; schema errors carry JSON pointers.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let value: Value = serde_json::from_str(text)?;
    let sc: Scenario = parse_at(&value, "")?;
    // validate the payload now so that every schema error is a usage error
    Payload::parse(sc.kind, &sc.payload)?;
    Ok(sc)
}

// ---------------------------------------------------------------- payloads

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatePayload {
    pub system: SystemSpec,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub input: Option<InputSignal>,
    pub horizon: f64,
    #[serde(default)]
    pub integration: IntegrationOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Iss,
    Uls,
    Lim,
    Fc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UlsGains {
    pub sigma: ComparisonFn,
    pub gamma: ComparisonFn,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssProbePayload {
    pub system: SystemSpec,
    /// Checks to run; all four when empty.
    #[serde(default)]
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub estimate: Option<IssEstimate>,
    #[serde(default)]
    pub uls: Option<UlsGains>,
    #[serde(default)]
    pub lim_gamma: Option<ComparisonFn>,
    #[serde(default)]
    pub asymptotic_gain: bool,
    #[serde(default)]
    pub ulim: bool,
    #[serde(default)]
    pub budget: SamplingBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovPayload {
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub dissipative: Option<DissipativeCertificate>,
    #[serde(default)]
    pub network: Option<NetworkSpec>,
    #[serde(default)]
    pub implication: Option<ImplicationCertificate>,
    /// Fit `β, γ` from a dissipative certificate and probe them.
    #[serde(default = "yes")]
    pub fit_estimate: bool,
    #[serde(default)]
    pub budget: SamplingBudget,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EtcSpec {
    Builtin {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    /// Linear feedback `u = K·x`.
    Custom {
        plant: SystemSpec,
        feedback_gain: Vec<Vec<f64>>,
        v: LyapunovFn,
        alpha: ComparisonFn,
        xi: ComparisonFn,
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSet {
    pub radius: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtcPayload {
    pub setup: EtcSpec,
    pub x0: Vec<f64>,
    pub horizon: f64,
    #[serde(default)]
    pub sample_set: Option<SampleSet>,
    #[serde(default)]
    pub tolerance: EtcTolerance,
    #[serde(default)]
    pub integration: IntegrationOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledCheck {
    pub system: SystemSpec,
    #[serde(default)]
    pub estimate: Option<IssEstimate>,
    #[serde(default)]
    pub budget: SamplingBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sgc2Payload {
    pub gains: GainMatrix2,
    pub rho: ComparisonFn,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "yes")]
    pub operator_form: bool,
    /// ISS probe of the coupled system, run when the condition holds.
    #[serde(default)]
    pub coupled: Option<CoupledCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilName {
    /// `{i−1, i+1}` with zero boundary
    Line,
    /// `{i−1, i+1}` with periodic boundary
    Ring,
}

/// Right-hand side of a scalar component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LocalSpec {
    /// `ẋᵢ = −a·xᵢ + c·maxⱼ|xⱼ| + uᵢ`
    MaxCoupling { a: f64, c: f64 },
    /// `ẋᵢ = −a·xᵢ + Σⱼ cⱼ·xⱼ + uᵢ`, one coefficient per slot
    Linear { a: f64, c: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomNetwork {
    pub components: usize,
    #[serde(default)]
    pub stencil: Option<StencilName>,
    #[serde(default)]
    pub offsets: Option<Vec<isize>>,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub neighbors: Option<Vec<Vec<usize>>>,
    pub local: LocalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSpec {
    Builtin {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Custom(CustomNetwork),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCertifyPayload {
    pub network: NetworkSpec,
    #[serde(default)]
    pub certificate: Option<ImplicationCertificate>,
    /// Verified instead of synthesized when given.
    #[serde(default)]
    pub path: Option<DecayPath>,
    #[serde(default)]
    pub rho: Option<ComparisonFn>,
    #[serde(default)]
    pub synthesis: SynthesisOptions,
    #[serde(default = "network_budget")]
    pub budget: SamplingBudget,
}

fn network_budget() -> SamplingBudget {
    SamplingBudget {
        samples: 200,
        horizon: 20.0,
        ..SamplingBudget::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSimPayload {
    pub network: NetworkSpec,
    /// Defaults to `xᵢ(0) = e^{−i}`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub input: Option<InputSignal>,
    pub horizon: f64,
    #[serde(default)]
    pub certificate: Option<ImplicationCertificate>,
    /// Defaults to `σᵢ = id`.
    #[serde(default)]
    pub path: Option<DecayPath>,
    #[serde(default)]
    pub integration: IntegrationOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Simulate(SimulatePayload),
    IssProbe(IssProbePayload),
    LyapunovCheck(LyapunovPayload),
    EtcSim(EtcPayload),
    Sgc2(Sgc2Payload),
    NetworkCertify(NetworkCertifyPayload),
    NetworkSim(NetworkSimPayload),
}

impl Payload {
    pub fn parse(kind: ScenarioKind, v: &Value) -> Result<Self, ScenarioError> {
        let p = "/payload";
        Ok(match kind {
            ScenarioKind::Simulate => Payload::Simulate(parse_at(v, p)?),
            ScenarioKind::IssProbe => Payload::IssProbe(parse_at(v, p)?),
            ScenarioKind::LyapunovCheck => Payload::LyapunovCheck(parse_at(v, p)?),
            ScenarioKind::EtcSim => Payload::EtcSim(parse_at(v, p)?),
            ScenarioKind::Sgc2 => Payload::Sgc2(parse_at(v, p)?),
            ScenarioKind::NetworkCertify => Payload::NetworkCertify(parse_at(v, p)?),
            ScenarioKind::NetworkSim => Payload::NetworkSim(parse_at(v, p)?),
        })
    }
}

// ------------------------------------------------------------- resolution

pub fn etc_setup(spec: &EtcSpec) -> Result<EtcSetup, ScenarioError> {
    match spec {
        EtcSpec::Builtin { name, params } => {
            let p = builtins::resolve_params(name, params)?;
            match name.as_str() {
                "etc_integrator_plant" => Ok(builtins::etc_integrator_plant(p["sigma"])?),
                other => Err(ScenarioError::Invalid(format!("`{other}` is not an event-triggered built-in"))),
            }
        }
        EtcSpec::Custom {
            plant,
            feedback_gain,
            v,
            alpha,
            xi,
            sigma,
        } => {
            let plant = builtins::system(plant)?;
            let (n, m) = (plant.state_dim(), plant.input_dim());
            if feedback_gain.len() != m || feedback_gain.iter().any(|r| r.len() != n) {
                return Err(ScenarioError::Invalid(format!("feedback_gain must be {m}×{n}")));
            }
            let k = feedback_gain.clone();
            EtcSetup::new(
                plant,
                move |x, u| {
                    for (ui, row) in u.iter_mut().zip(&k) {
                        *ui = row.iter().zip(x).map(|(a, b)| a * b).sum();
                    }
                },
                v.clone(),
                alpha.clone(),
                xi.clone(),
                *sigma,
            )
            .map_err(run_err)
        }
    }
}

/// Network plus its shipped certificate, if any.
pub fn network(spec: &NetworkSpec) -> Result<(Network, Option<ImplicationCertificate>), ScenarioError> {
    match spec {
        NetworkSpec::Builtin { name, params } => match name.as_str() {
            "line_network" => {
                let (net, cert) = builtins::line_network_from(params)?;
                Ok((net, Some(cert)))
            }
            other => Err(ScenarioError::Invalid(format!("`{other}` is not a network built-in"))),
        },
        NetworkSpec::Custom(c) => {
            let neighbors = match (&c.stencil, &c.offsets, &c.neighbors) {
                (Some(StencilName::Line), None, None) => Neighbors::Stencil {
                    offsets: vec![-1, 1],
                    boundary: Boundary::Zero,
                },
                (Some(StencilName::Ring), None, None) => Neighbors::Stencil {
                    offsets: vec![-1, 1],
                    boundary: Boundary::Periodic,
                },
                (None, Some(o), None) => Neighbors::Stencil {
                    offsets: o.clone(),
                    boundary: c.boundary,
                },
                (None, None, Some(l)) => Neighbors::Explicit { lists: l.clone() },
                _ => {
                    return Err(ScenarioError::Invalid(
                        "give exactly one of `stencil`, `offsets`, `neighbors`".into(),
                    ))
                }
            };
            let net = match c.local.clone() {
                LocalSpec::MaxCoupling { a, c: k } => Network::new("custom_network", c.components, 1, 1, neighbors, move |x, bar, u, dx| {
                    dx[0] = -a * x[0] + k * bar.iter().fold(0.0f64, |m, v| m.max(v.abs())) + u[0]
                }),
                LocalSpec::Linear { a, c: k } => {
                    let slots = match &neighbors {
                        Neighbors::Stencil { offsets, .. } => offsets.len(),
                        Neighbors::Explicit { lists } => lists.first().map_or(0, Vec::len),
                    };
                    if k.len() != slots {
                        return Err(ScenarioError::Invalid(format!("{} coefficients for {slots} slots", k.len())));
                    }
                    Network::new("custom_network", c.components, 1, 1, neighbors, move |x, bar, u, dx| {
                        dx[0] = -a * x[0] + k.iter().zip(bar).map(|(a, b)| a * b).sum::<f64>() + u[0]
                    })
                }
            }
            .map_err(run_err)?;
            Ok((net, None))
        }
    }
}

// ---------------------------------------------------------------- overrides

/// Tolerance overrides read from the environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blowup_threshold: Option<f64>,
}

impl Overrides {
    pub fn from_env() -> Result<Self, ScenarioError> {
        let read = |k: &str| -> Result<Option<f64>, ScenarioError> {
            match std::env::var(k) {
                Err(_) => Ok(None),
                Ok(s) => match s.trim().parse::<f64>() {
                    Ok(v) if v > 0.0 && v.is_finite() => Ok(Some(v)),
                    _ => Err(ScenarioError::Invalid(format!("{k} must be a positive number, got `{s}`"))),
                },
            }
        };
        Ok(Self {
            rel_tol: read(ENV_REL_TOL)?,
            abs_tol: read(ENV_ABS_TOL)?,
            blowup_threshold: read(ENV_BLOWUP)?,
        })
    }

    fn is_empty(&self) -> bool {
        self == &Self::default()
    }

    pub fn apply(&self, o: &mut IntegrationOptions) {
        if let Some(v) = self.rel_tol {
            o.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            o.abs_tol = v;
        }
        if let Some(v) = self.blowup_threshold {
            o.blowup_threshold = v;
        }
    }
}

// ------------------------------------------------------------ JSON output

/// Pretty JSON with every float written with 17 significant digits.
struct Pretty17<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for Pretty17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt17(v).as_bytes())
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serialize with 17-significant-digit floats and a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, ScenarioError> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Pretty17(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ScenarioError> {
    fs::write(path, bytes).map_err(|e| ScenarioError::io(path, e))
}

// ------------------------------------------------------------- witnesses

/// Part of a two-sided check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Sandwich,
    Decay,
    Trigger,
}

/// The inequality a witness violates, with whatever the replay needs
/// beyond the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReplayCheck {
    Trajectory { check: TrajectoryCheck },
    Dissipative { certificate: DissipativeCertificate, part: Part },
    Implication { certificate: ImplicationCertificate },
    Etc { events: Vec<f64>, part: Part },
    NetworkDecay { certificate: ImplicationCertificate, path: DecayPath },
    CompositeSandwich { certificate: ImplicationCertificate, path: DecayPath },
    Sgc2 { gains: GainMatrix2, rho: ComparisonFn, r: f64 },
}

/// What the checked object was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Subject {
    System(SystemSpec),
    Etc(EtcSpec),
    Network(NetworkSpec),
    Gains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessFile {
    pub schema: String,
    pub label: String,
    pub subject: Subject,
    pub check: ReplayCheck,
    pub witness: Witness,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub integration: IntegrationOptions,
}

/// Outcome of one scenario run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    NoCounterexample,
    Falsified,
    HypothesisViolation,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::NoCounterexample => 0,
            Outcome::Falsified => 1,
            Outcome::HypothesisViolation => 2,
        }
    }

    fn of(v: Verdict) -> Self {
        match v {
            Verdict::NoCounterexample => Outcome::NoCounterexample,
            Verdict::Falsified | Verdict::InconclusiveEscape => Outcome::Falsified,
            Verdict::HypothesisViolation => Outcome::HypothesisViolation,
        }
    }

    fn worst(self, other: Self) -> Self {
        let rank = |o: Outcome| match o {
            Outcome::NoCounterexample => 0,
            Outcome::Falsified => 1,
            Outcome::HypothesisViolation => 2,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

/// Collects results, CSV files and witnesses of one run.
struct Run {
    outcome: Outcome,
    results: serde_json::Map<String, Value>,
    witnesses: Vec<WitnessFile>,
    csv: Vec<(String, Vec<u8>)>,
    warnings: Vec<String>,
}

impl Run {
    fn new() -> Self {
        Self {
            outcome: Outcome::NoCounterexample,
            results: serde_json::Map::new(),
            witnesses: Vec::new(),
            csv: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn put<T: Serialize>(&mut self, key: &str, v: &T) -> Result<(), ScenarioError> {
        self.results.insert(key.into(), serde_json::to_value(v)?);
        Ok(())
    }

    /// Record a probe report; a falsified report adds a witness file.
    fn probe(
        &mut self,
        label: &str,
        rep: &ProbeReport,
        subject: &Subject,
        check: ReplayCheck,
        budget_tol: (f64, f64),
        integration: &IntegrationOptions,
    ) -> Result<(), ScenarioError> {
        self.put(label, rep)?;
        self.outcome = self.outcome.worst(Outcome::of(rep.verdict));
        if rep.verdict == Verdict::Falsified {
            if let Some(w) = &rep.witness {
                self.witnesses.push(WitnessFile {
                    schema: WITNESS_SCHEMA.into(),
                    label: label.into(),
                    subject: subject.clone(),
                    check,
                    witness: w.clone(),
                    abs_tol: budget_tol.0,
                    rel_tol: budget_tol.1,
                    integration: *integration,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub outcome: Outcome,
    pub exit_code: i32,
    pub results: serde_json::Map<String, Value>,
    pub witnesses: Vec<String>,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Overrides::is_empty")]
    pub overrides: Overrides,
}

/// Result of [`run_scenario`]: the report and the files to write.
pub struct RunOutput {
    pub report: Report,
    /// `(file name, contents)`, report included.
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
        for (name, bytes) in &self.files {
            write_file(&dir.join(name), bytes)?;
        }
        Ok(())
    }
}

fn trajectory_check_of(name: CheckName, g: &probe::SuperpositionGains) -> TrajectoryCheck {
    match name {
        CheckName::Iss => TrajectoryCheck::Iss {
            beta: g.estimate.beta.clone(),
            gamma: g.estimate.gamma.clone(),
        },
        CheckName::Uls => TrajectoryCheck::Uls {
            sigma: g.uls_sigma.clone(),
            gamma: g.uls_gamma.clone(),
        },
        CheckName::Lim => TrajectoryCheck::Lim {
            gamma: g.lim_gamma.clone(),
        },
        CheckName::Fc => TrajectoryCheck::Fc,
    }
}

/// For an FC falsification found inside another probe, the replayable
/// check is FC itself.
fn check_for(rep: &ProbeReport, fallback: TrajectoryCheck) -> TrajectoryCheck {
    if rep.property == probe::Property::Fc {
        TrajectoryCheck::Fc
    } else {
        fallback
    }
}

fn csv_bytes<F>(f: F) -> Result<Vec<u8>, ScenarioError>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(run_err)?;
    Ok(buf)
}

fn two_column_csv(header: [&str; 2], rows: &[(f64, f64)]) -> Result<Vec<u8>, ScenarioError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header)?;
        for (a, b) in rows {
            w.write_record([fmt17(*a), fmt17(*b)])?;
        }
        w.flush()?;
        Ok(())
    })
}

// ------------------------------------------------------------------ kinds

fn run_simulate(p: &SimulatePayload, ov: &Overrides, run: &mut Run) -> Result<(), ScenarioError> {
    let sys = builtins::system(&p.system)?;
    let mut opts = p.integration;
    ov.apply(&mut opts);
    let u = p.input.clone().unwrap_or_else(|| InputSignal::zero(sys.input_dim()));
    let tr = integrate(&sys, &p.x0, &u, p.horizon, &opts).map_err(run_err)?;
    run.csv.push(("trajectory.csv".into(), csv_bytes(|b| tr.write_csv(b))?));
    run.put("status", &tr.status())?;
    run.put("t_end", &tr.t_end())?;
    run.put("final_state", &tr.final_state())?;
    run.put("points", &tr.len())?;
    if let TrajectoryStatus::StepFailure { .. } = tr.status() {
        run.outcome = Outcome::Falsified;
        run.warnings.push("integration stopped on a step-size failure".into());
    }
    Ok(())
}

fn run_iss_probe(p: &IssProbePayload, seed: u64, ov: &Overrides, run: &mut Run) -> Result<(), ScenarioError> {
    let sys = builtins::system(&p.system)?;
    let mut budget = p.budget.clone();
    budget.seed = seed;
    ov.apply(&mut budget.integration);
    let needs_reference = p.estimate.is_none() || p.uls.is_none() || p.lim_gamma.is_none();
    let reference = if needs_reference {
        Some(builtins::reference_gains(&p.system)?)
    } else {
        None
    };
    let mut gains = reference.clone().unwrap_or_else(|| probe::SuperpositionGains {
        estimate: p.estimate.clone().expect("given"),
        uls_sigma: ComparisonFn::identity(),
        uls_gamma: ComparisonFn::identity(),
        uls_radius: 1.0,
        lim_gamma: ComparisonFn::identity(),
    });
    if let Some(e) = &p.estimate {
        gains.estimate = e.clone();
    }
    if let Some(u) = &p.uls {
        gains.uls_sigma = u.sigma.clone();
        gains.uls_gamma = u.gamma.clone();
        gains.uls_radius = u.radius;
    }
    if let Some(g) = &p.lim_gamma {
        gains.lim_gamma = g.clone();
    }
    run.put("gains", &gains)?;
    let mut checks = p.checks.clone();
    if checks.is_empty() {
        checks = vec![CheckName::Iss, CheckName::Fc, CheckName::Uls, CheckName::Lim];
    }
    checks.sort();
    checks.dedup();
    let subject = Subject::System(p.system.clone());
    let tol = (budget.abs_tol, budget.rel_tol);
    let mut verdicts = BTreeMap::new();
    for name in checks {
        let rep = match name {
            CheckName::Iss => probe::check_iss_estimate(&sys, &gains.estimate, &budget),
            CheckName::Uls => probe::check_uls(&sys, &gains.uls_sigma, &gains.uls_gamma, gains.uls_radius, &budget),
            CheckName::Lim => probe::check_lim(&sys, &gains.lim_gamma, &budget),
            CheckName::Fc => probe::check_forward_completeness(&sys, &budget),
        }
        .map_err(run_err)?;
        let label = serde_json::to_value(name)?.as_str().unwrap_or("check").to_string();
        let check = check_for(&rep, trajectory_check_of(name, &gains));
        verdicts.insert(name, rep.passes());
        run.probe(&label, &rep, &subject, ReplayCheck::Trajectory { check }, tol, &budget.integration)?;
    }
    if let (Some(iss), Some(fc), Some(uls), Some(lim)) = (
        verdicts.get(&CheckName::Iss),
        verdicts.get(&CheckName::Fc),
        verdicts.get(&CheckName::Uls),
        verdicts.get(&CheckName::Lim),
    ) {
        let coherent = *iss == (*fc && *uls && *lim);
        run.put("superposition_coherent", &coherent)?;
        if !coherent {
            run.warnings
                .push("ISS verdict differs from FC ∧ ULS ∧ LIM on this budget".into());
        }
    }
    if p.asymptotic_gain {
        match probe::asymptotic_gain_samples(&sys, &budget.magnitudes, &budget) {
            Ok((_, pts)) => run.put("asymptotic_gain", &pts)?,
            Err(e) => run.warnings.push(format!("asymptotic gain not estimated: {e}")),
        }
    }
    if p.ulim {
        let (eps, r) = probe::default_ulim_grid();
        let table = probe::ulim_table(&sys, &gains.lim_gamma, &eps, &r, 50, &budget).map_err(run_err)?;
        run.put("ulim", &table)?;
    }
    Ok(())
}

fn run_lyapunov(p: &LyapunovPayload, seed: u64, ov: &Overrides, run: &mut Run) -> Result<(), ScenarioError> {
    let mut budget = p.budget.clone();
    budget.seed = seed;
    ov.apply(&mut budget.integration);
    let tol = (budget.abs_tol, budget.rel_tol);
    let mut any = false;
    if let Some(cert) = &p.dissipative {
        any = true;
        let spec = p
            .system
            .as_ref()
            .ok_or_else(|| ScenarioError::Invalid("a dissipative certificate needs `system`".into()))?;
        let sys = builtins::system(spec)?;
        let subject = Subject::System(spec.clone());
        let rep = check_dissipative(&sys, cert, &budget).map_err(run_err)?;
        for (label, r, part) in [("sandwich", &rep.sandwich, Part::Sandwich), ("dissipation", &rep.decay, Part::Decay)] {
            let check = ReplayCheck::Dissipative {
                certificate: cert.clone(),
                part,
            };
            run.probe(label, r, &subject, check, tol, &budget.integration)?;
        }
        if p.fit_estimate && rep.passes() {
            match fit_iss_estimate(cert) {
                Ok(est) => {
                    run.put("fitted_estimate", &est)?;
                    let r = probe::check_iss_estimate(&sys, &est, &budget).map_err(run_err)?;
                    let check = check_for(
                        &r,
                        TrajectoryCheck::Iss {
                            beta: est.beta.clone(),
                            gamma: est.gamma.clone(),
                        },
                    );
                    run.probe("fitted_iss", &r, &subject, ReplayCheck::Trajectory { check }, tol, &budget.integration)?;
                }
                Err(e) => run.warnings.push(format!("no estimate fitted: {e}")),
            }
        }
    }
    if p.network.is_some() || p.implication.is_some() {
        any = true;
        let spec = p
            .network
            .as_ref()
            .ok_or_else(|| ScenarioError::Invalid("an implication certificate needs `network`".into()))?;
        let (net, shipped) = network(spec)?;
        let cert = p
            .implication
            .clone()
            .or(shipped)
            .ok_or_else(|| ScenarioError::Invalid("no implication certificate given".into()))?;
        let sub = net.subsystem().map_err(run_err)?;
        let rep = check_implication(&sub, &cert, &budget).map_err(run_err)?;
        let check = ReplayCheck::Implication { certificate: cert };
        run.probe("implication", &rep, &Subject::Network(spec.clone()), check, tol, &budget.integration)?;
    }
    if !any {
        return Err(ScenarioError::Invalid(
            "lyapunov_check needs `dissipative` (with `system`) or `network`".into(),
        ));
    }
    Ok(())
}

fn run_etc(p: &EtcPayload, seed: u64, ov: &Overrides, run: &mut Run) -> Result<(), ScenarioError> {
    let setup = etc_setup(&p.setup)?;
    let mut opts = p.integration;
    ov.apply(&mut opts);
    run.warnings.extend(setup.warnings.iter().cloned());
    let trace = etc::simulate_etc(&setup, &p.x0, p.horizon, &opts).map_err(run_err)?;
    run.csv.push(("trajectory.csv".into(), csv_bytes(|b| trace.trajectory.write_csv(b))?));
    run.csv.push(("events.csv".into(), csv_bytes(|b| trace.write_events_csv(b))?));
    run.put("status", &trace.status())?;
    run.put("events", &trace.events.len())?;
    run.put("inter_event_min", &trace.inter_event_min)?;
    run.put("zeno_flag", &trace.zeno_flag)?;
    if trace.zeno_flag {
        run.warnings.push("Zeno diagnostic raised (event count or spacing threshold)".into());
    }
    let v = etc::verify_decay(&trace, &setup, p.tolerance, &opts).map_err(run_err)?;
    let subject = Subject::Etc(p.setup.clone());
    let tol = (p.tolerance.abs_tol, p.tolerance.rel_tol);
    for (label, rep, part) in [("decay", &v.decay, Part::Decay), ("trigger", &v.trigger, Part::Trigger)] {
        let check = ReplayCheck::Etc {
            events: trace.events.clone(),
            part,
        };
        run.probe(label, rep, &subject, check, tol, &opts)?;
    }
    if let Some(s) = &p.sample_set {
        let summary = etc::min_interevent_over_set(&setup, s.radius, s.samples, p.horizon, seed, &opts).map_err(run_err)?;
        run.put("inter_event_summary", &summary)?;
        run.put("tau_hat", &summary.tau_hat)?;
    }
    Ok(())
}

fn run_sgc2(p: &Sgc2Payload, seed: u64, ov: &Overrides, run: &mut Run) -> Result<(), ScenarioError> {
    let grid = match &p.grid {
        Some(g) if g.lo > 0.0 && g.hi > g.lo && g.n >= 2 => sampling::log_grid(g.lo, g.hi, g.n),
        Some(_) => return Err(ScenarioError::Invalid("grid needs 0 < lo < hi and n ≥ 2".into())),
        None => smallgain::default_r_grid(),
    };
    let v = smallgain::check_sgc_2(&p.gains, &p.rho, &grid).map_err(run_err)?;
    run.put("cyclic", &v)?;
    if p.operator_form {
        let samples = smallgain::operator_form_samples(&p.gains, &p.rho);
        let o = smallgain::sgc_operator_form(&p.gains, &p.rho, &samples);
        if o.holds != v.holds_on_grid {
            run.warnings.push("cyclic and operator forms disagree on the sampled sets".into());
        }
        run.put("operator_form", &o)?;
    }
    if let Some(r) = v.violation_r {
        run.outcome = Outcome::Falsified;
        let cyc = p.gains.cycle(&p.rho, r);
        run.witnesses.push(WitnessFile {
            schema: WITNESS_SCHEMA.into(),
            label: "sgc2".into(),
            subject: Subject::Gains,
            check: ReplayCheck::Sgc2 {
                gains: p.gains.clone(),
                rho: p.rho.clone(),
                r,
            },
            witness: Witness {
                x0: vec![],
                input: InputSignal::zero(1),
                t: 0.0,
                t_ref: None,
                observed: cyc,
                bound: r,
                margin: cyc - r,
            },
            abs_tol: 0.0,
            rel_tol: 0.0,
            integration: IntegrationOptions::default(),
        });
    } else if let Some(exact) = v.exact {
        if !exact {
            run.outcome = Outcome::Falsified;
            run.warnings.push("exact decision fails although no grid point violates".into());
        }
    }
    if let Some(c) = &p.coupled {
        if run.outcome == Outcome::NoCounterexample {
            let sys = builtins::system(&c.system)?;
            let est = match &c.estimate {
                Some(e) => e.clone(),
                None => builtins::reference_gains(&c.system)?.estimate,
            };
            let mut budget = c.budget.clone();
            budget.seed = seed;
            ov.apply(&mut budget.integration);
            let rep = probe::check_iss_estimate(&sys, &est, &budget).map_err(run_err)?;
            let check = check_for(
                &rep,
                TrajectoryCheck::Iss {
                    beta: est.beta.clone(),
                    gamma: est.gamma.clone(),
                },
            );
            run.probe(
                "coupled_iss",
                &rep,
                &Subject::System(c.system.clone()),
                ReplayCheck::Trajectory { check },
                (budget.abs_tol, budget.rel_tol),
                &budget.integration,
            )?;
        } else {
            run.warnings.push("coupled system not probed: the small-gain condition fails".into());
        }
    }
    Ok(())
}

fn run_network_certify(p: &NetworkCertifyPayload, seed: u64, ov: &Overrides, run: &mut Run) -> Result<(), ScenarioError> {
    let (net, shipped) = network(&p.network)?;
    let cert = p
        .certificate
        .clone()
        .or(shipped)
        .ok_or_else(|| ScenarioError::Invalid("no implication certificate given".into()))?;
    let mut budget = p.budget.clone();
    budget.seed = seed;
    ov.apply(&mut budget.integration);
    let rho = match &p.rho {
        Some(r) => r.clone(),
        None => ComparisonFn::linear(0.25).map_err(run_err)?,
    };
    let rep = match &p.path {
        Some(path) => smallgain::check_network_iss(&net, &cert, path, &budget),
        None => smallgain::certify_network(&net, &cert, &rho, &p.synthesis, &budget),
    }
    .map_err(run_err)?;
    run.put("components", &net.components())?;
    run.put("preconditions", &rep.preconditions)?;
    for (k, v) in [
        ("path_verification", serde_json::to_value(&rep.path_verification)?),
        ("implication", serde_json::to_value(&rep.implication)?),
        ("estimate", serde_json::to_value(&rep.estimate)?),
        ("decay_rate", serde_json::to_value(rep.decay_rate)?),
        ("path", serde_json::to_value(&rep.path)?),
        ("synthesis_failure", serde_json::to_value(&rep.synthesis_failure)?),
    ] {
        if !v.is_null() {
            run.results.insert(k.into(), v);
        }
    }
    let subject = Subject::Network(p.network.clone());
    let tol = (budget.abs_tol, budget.rel_tol);
    if let Some(path) = &rep.path {
        if let Some(d) = &rep.decay {
            let check = if d.property == probe::Property::Fc {
                ReplayCheck::Trajectory {
                    check: TrajectoryCheck::Fc,
                }
            } else {
                ReplayCheck::NetworkDecay {
                    certificate: cert.clone(),
                    path: path.clone(),
                }
            };
            run.probe("decay", d, &subject, check, tol, &budget.integration)?;
        }
        if let (Some(iss), Some(est)) = (&rep.iss, &rep.estimate) {
            let check = check_for(
                iss,
                TrajectoryCheck::Iss {
                    beta: est.beta.clone(),
                    gamma: est.gamma.clone(),
                },
            );
            run.probe("iss", iss, &subject, ReplayCheck::Trajectory { check }, tol, &budget.integration)?;
        }
        if rep.verdict() != Verdict::HypothesisViolation {
            let sw = smallgain::check_composite_sandwich(&cert, path, net.component_dim(), &budget).map_err(run_err)?;
            let check = ReplayCheck::CompositeSandwich {
                certificate: cert.clone(),
                path: path.clone(),
            };
            run.probe("composite_sandwich", &sw, &subject, check, tol, &budget.integration)?;
        }
    }
    run.put("verdict", &rep.report)?;
    run.outcome = run.outcome.worst(Outcome::of(rep.verdict()));
    Ok(())
}

/// `xᵢ(0) = e^{−i}` for scalar components.
pub fn decaying_profile(n: usize, d: usize) -> Vec<f64> {
    (0..n).flat_map(|i| std::iter::repeat_n((-(i as f64)).exp(), d)).collect()
}

fn run_network_sim(p: &NetworkSimPayload, ov: &Overrides, run: &mut Run) -> Result<(), ScenarioError> {
    let (net, shipped) = network(&p.network)?;
    let sys = net.system();
    let mut opts = p.integration;
    ov.apply(&mut opts);
    let x0 = p
        .x0
        .clone()
        .unwrap_or_else(|| decaying_profile(net.components(), net.component_dim()));
    let u = p.input.clone().unwrap_or_else(|| InputSignal::zero(sys.input_dim()));
    let tr = integrate(&sys, &x0, &u, p.horizon, &opts).map_err(run_err)?;
    run.csv.push(("trajectory.csv".into(), csv_bytes(|b| tr.write_csv(b))?));
    run.put("status", &tr.status())?;
    run.put("t_end", &tr.t_end())?;
    let cert = p.certificate.clone().or(shipped);
    if let Some(cert) = cert {
        let path = match &p.path {
            Some(path) => path.clone(),
            None => DecayPath::identity(net.components(), ComparisonFn::linear(0.25).map_err(run_err)?),
        };
        let trace = smallgain::composite_trace(&cert.v, &path, &tr, net.component_dim()).map_err(run_err)?;
        let max_increase = trace.windows(2).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max);
        run.csv.push(("composite.csv".into(), two_column_csv(["t", "V"], &trace)?));
        run.put("composite_initial", &trace.first().map(|p| p.1))?;
        run.put("composite_final", &trace.last().map(|p| p.1))?;
        run.put("composite_max_increase", &max_increase)?;
    }
    Ok(())
}

/// Run a parsed scenario; nothing is written.
pub fn run_scenario(sc: &Scenario, seed_override: Option<u64>, ov: &Overrides) -> Result<RunOutput, ScenarioError> {
    let seed = seed_override.unwrap_or(sc.seed);
    let payload = Payload::parse(sc.kind, &sc.payload)?;
    let mut run = Run::new();
    match &payload {
        Payload::Simulate(p) => run_simulate(p, ov, &mut run)?,
        Payload::IssProbe(p) => run_iss_probe(p, seed, ov, &mut run)?,
        Payload::LyapunovCheck(p) => run_lyapunov(p, seed, ov, &mut run)?,
        Payload::EtcSim(p) => run_etc(p, seed, ov, &mut run)?,
        Payload::Sgc2(p) => run_sgc2(p, seed, ov, &mut run)?,
        Payload::NetworkCertify(p) => run_network_certify(p, seed, ov, &mut run)?,
        Payload::NetworkSim(p) => run_network_sim(p, ov, &mut run)?,
    }
    let mut files = Vec::new();
    let mut witness_names = Vec::new();
    for w in &run.witnesses {
        let name = format!("witness_{}.json", w.label);
        files.push((name.clone(), to_json_bytes(w)?));
        witness_names.push(name);
    }
    let mut artifacts: Vec<String> = run.csv.iter().map(|c| c.0.clone()).collect();
    artifacts.sort();
    files.extend(run.csv);
    let report = Report {
        schema: REPORT_SCHEMA,
        kind: sc.kind,
        seed,
        outcome: run.outcome,
        exit_code: run.outcome.exit_code(),
        results: run.results,
        witnesses: witness_names,
        artifacts,
        warnings: run.warnings,
        overrides: ov.clone(),
    };
    files.push(("report.json".into(), to_json_bytes(&report)?));
    Ok(RunOutput { report, files })
}

/// Default output directory when neither `--out` nor `output_dir` is
/// given.
pub const DEFAULT_OUTPUT_DIR: &str = "isskit-out";

/// Read, run and write a scenario file. Returns the output and the
/// directory written to.
pub fn run_file(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(RunOutput, PathBuf), ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    let sc = parse_scenario(&text)?;
    let ov = Overrides::from_env()?;
    let output = run_scenario(&sc, seed, &ov)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| sc.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    output.write_to(&dir)?;
    Ok((output, dir))
}

// ------------------------------------------------------------------ replay

fn subject_system(s: &Subject) -> Result<SystemModel, ScenarioError> {
    match s {
        Subject::System(spec) => Ok(builtins::system(spec)?),
        Subject::Network(spec) => Ok(network(spec)?.0.system()),
        _ => Err(ScenarioError::Invalid("witness subject is not a system".into())),
    }
}

/// Re-evaluate one witness file.
pub fn replay_witness(wf: &WitnessFile) -> Result<Replay, ScenarioError> {
    if wf.schema != WITNESS_SCHEMA {
        return Err(ScenarioError::Invalid(format!(
            "unsupported witness schema `{}` (expected `{WITNESS_SCHEMA}`)",
            wf.schema
        )));
    }
    let w = &wf.witness;
    let tol = |b: f64| wf.abs_tol + wf.rel_tol * b.abs();
    // a pointwise re-evaluation: reproduced and matching the record
    let pointwise = |observed: f64, bound: f64, what: &str| {
        let margin = observed - bound;
        let reproduced = margin > tol(bound);
        let matches = (observed - w.observed).abs() <= 2.0 * tol(observed) && (bound - w.bound).abs() <= 2.0 * tol(bound);
        Replay {
            confirmed: reproduced && matches,
            observed,
            bound,
            margin,
            detail: if !reproduced {
                format!("{what}: violation not reproduced")
            } else if !matches {
                format!("{what}: recorded ({}, {}) differs from recomputed ({observed}, {bound})", w.observed, w.bound)
            } else {
                format!("{what}: violation reproduced")
            },
        }
    };
    match &wf.check {
        ReplayCheck::Trajectory { check } => {
            let sys = subject_system(&wf.subject)?;
            probe::replay(&sys, check, w, wf.abs_tol, wf.rel_tol, &wf.integration).map_err(run_err)
        }
        ReplayCheck::Dissipative { certificate, part } => {
            let sys = subject_system(&wf.subject)?;
            match part {
                Part::Decay => {
                    let (o, b) = lyapunov::dissipative_decay_at(&sys, certificate, &w.x0, &w.input).map_err(run_err)?;
                    Ok(pointwise(o, b, "dissipation inequality"))
                }
                _ => {
                    let r = crate::dynamics::Norm::Euclidean.of(&w.x0);
                    let v = certificate.v.value(&w.x0);
                    let (lo, hi) = (certificate.psi1.value(r), certificate.psi2.value(r));
                    Ok(if lo > v { pointwise(lo, v, "lower sandwich") } else { pointwise(v, hi, "upper sandwich") })
                }
            }
        }
        ReplayCheck::Implication { certificate } => {
            let Subject::Network(spec) = &wf.subject else {
                return Err(ScenarioError::Invalid("implication witness without network".into()));
            };
            let sub = network(spec)?.0.subsystem().map_err(run_err)?;
            let (xi, rest) = lyapunov::implication_witness_point(&sub, w);
            match lyapunov::implication_at(&sub, certificate, &xi, &rest) {
                Some((o, b)) => Ok(pointwise(o, b, "implication conclusion")),
                None => Ok(Replay {
                    confirmed: false,
                    observed: f64::NAN,
                    bound: f64::NAN,
                    margin: f64::NAN,
                    detail: "premise does not hold at the witness".into(),
                }),
            }
        }
        ReplayCheck::Etc { events, part } => {
            let Subject::Etc(spec) = &wf.subject else {
                return Err(ScenarioError::Invalid("event-triggered witness without setup".into()));
            };
            let setup = etc_setup(spec)?;
            let at = match part {
                Part::Trigger => etc::trigger_at(&setup, &w.x0, events, w.t, &wf.integration),
                _ => etc::decay_at(&setup, &w.x0, events, w.t, &wf.integration),
            }
            .map_err(run_err)?;
            match at {
                Some((o, b)) => Ok(pointwise(o, b, "event-triggered inequality")),
                None => Err(ScenarioError::Run("V not differentiable at the witness".into())),
            }
        }
        ReplayCheck::NetworkDecay { certificate, path } => {
            let Subject::Network(spec) = &wf.subject else {
                return Err(ScenarioError::Invalid("network witness without network".into()));
            };
            let net = network(spec)?.0;
            let budget = SamplingBudget {
                abs_tol: wf.abs_tol,
                rel_tol: wf.rel_tol,
                ..SamplingBudget::default()
            };
            smallgain::replay_composite_decay(&net, certificate, path, w, &budget, &wf.integration).map_err(run_err)
        }
        ReplayCheck::CompositeSandwich { certificate, path } => {
            let Subject::Network(spec) = &wf.subject else {
                return Err(ScenarioError::Invalid("network witness without network".into()));
            };
            let d = network(spec)?.0.component_dim();
            let v = smallgain::composite_lyapunov(&certificate.v, path, &w.x0, d).map_err(run_err)?;
            let s = crate::dynamics::Norm::BlockMax { block: d }.of(&w.x0);
            let lo = path
                .sigma_max
                .invert(certificate.psi1.value(s), DEFAULT_INVERT_TOL * 1e-3)
                .map_err(run_err)?;
            let hi = path
                .sigma_min
                .invert(certificate.psi2.value(s), DEFAULT_INVERT_TOL * 1e-3)
                .map_err(run_err)?;
            Ok(if lo > v { pointwise(lo, v, "lower composite sandwich") } else { pointwise(v, hi, "upper composite sandwich") })
        }
        ReplayCheck::Sgc2 { gains, rho, r } => {
            let c = gains.cycle(rho, *r);
            let confirmed = c >= *r && c == w.observed && *r == w.bound;
            Ok(Replay {
                confirmed,
                observed: c,
                bound: *r,
                margin: c - r,
                detail: if confirmed {
                    format!("(id+ρ)∘γ₁₂∘(id+ρ)∘γ₂₁({r}) = {c} ≥ {r}")
                } else {
                    "small-gain violation not reproduced".into()
                },
            })
        }
    }
}

/// Parse and replay a witness file. A report or other JSON is a usage
/// error.
pub fn replay_file(path: &Path) -> Result<Replay, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    match value.get("schema").and_then(Value::as_str) {
        Some(WITNESS_SCHEMA) => {}
        Some(REPORT_SCHEMA) => {
            let has = value
                .get("witnesses")
                .and_then(Value::as_array)
                .is_some_and(|a| !a.is_empty());
            return Err(ScenarioError::Invalid(if has {
                "this is a report; replay one of the witness files it lists".into()
            } else {
                "this report has no witness: the run found no counterexample".into()
            }));
        }
        Some(other) => {
            return Err(ScenarioError::Invalid(format!(
                "stale or unknown schema `{other}` (expected `{WITNESS_SCHEMA}`)"
            )))
        }
        None => return Err(ScenarioError::Invalid("not a witness file (no `schema`)".into())),
    }
    let wf: WitnessFile = parse_at(&value, "")?;
    replay_witness(&wf)
}
