//! Strict TOML run configurations. Every record rejects unknown keys, and every
//! field has a default so an empty file is a valid config.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tfelab::interface_ode::{OrbitMethod, OrbitOptions};
use tfelab::solver::{Boundary, FaceAverage, SolverConfig};
use tfelab::{Grid1D, Mobility, ModelParams};

use crate::error::{CliError, CliResult};

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be positive and finite")))
    }
}

fn decreasing(name: &str, v: &[f64]) -> CliResult<()> {
    if v.is_empty() || v.windows(2).any(|w| w[1] >= w[0]) || v.iter().any(|x| !(*x > 0.0)) {
        return Err(invalid(format!(
            "{name} must be a non-empty, strictly decreasing list of positive values"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            x_min: -4.0,
            x_max: 4.0,
            cells: 320,
        }
    }
}

impl DomainSection {
    pub fn grid(&self) -> CliResult<Grid1D> {
        Grid1D::new(self.x_min, self.x_max, self.cells).map_err(|e| invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n: f64,
    pub epsilon: f64,
    pub mobility: Mobility,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n: 1.0,
            epsilon: 0.1,
            mobility: Mobility::Simple,
        }
    }
}

impl ModelSection {
    pub fn params(&self) -> CliResult<ModelParams> {
        ModelParams::new(self.n, self.epsilon, self.mobility).map_err(|e| invalid(e.to_string()))
    }
}

/// Time stepping. `fixed_dt` pins `dt_initial = dt_max = fixed_dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub fixed_dt: Option<f64>,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub face_average: FaceAverage,
    pub boundary: Boundary,
    pub theta: f64,
    pub blowup_factor: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            fixed_dt: None,
            dt_initial: d.dt_initial,
            dt_min: d.dt_min,
            dt_max: d.dt_max,
            newton_tol: d.newton_tol,
            newton_max_iter: d.newton_max_iter,
            face_average: d.face_average,
            boundary: d.boundary,
            theta: d.theta,
            blowup_factor: d.blowup_factor,
        }
    }
}

impl SolverSection {
    pub fn fixed(dt: f64) -> Self {
        Self {
            fixed_dt: Some(dt),
            ..Self::default()
        }
    }

    pub fn config(&self) -> CliResult<SolverConfig> {
        let base = match self.fixed_dt {
            Some(dt) => {
                positive("solver.fixed_dt", dt)?;
                SolverConfig::fixed(dt)
            }
            None => SolverConfig {
                dt_initial: self.dt_initial,
                dt_max: self.dt_max,
                ..SolverConfig::default()
            },
        };
        let cfg = SolverConfig {
            dt_min: self.dt_min,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            face_average: self.face_average,
            boundary: self.boundary,
            theta: self.theta,
            blowup_factor: self.blowup_factor,
            ..base
        };
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// Initial data: a compact bump, Riemann power data, or a trigonometric sum
/// `offset + sum a sin(k x) + sum a cos(k x)` with `[k, a]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    SmoothBump {
        center: f64,
        width: f64,
        height: f64,
    },
    Riemann {
        chi_plus: f64,
        chi_minus: f64,
    },
    Trig {
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        sine: Vec<[f64; 2]>,
        #[serde(default)]
        cosine: Vec<[f64; 2]>,
    },
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection::SmoothBump {
            center: 0.0,
            width: 1.0,
            height: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub y_max: f64,
    pub cells: usize,
    pub quadrature_tol: f64,
    /// `|y|` window of the envelope fit.
    pub envelope_window: [f64; 2],
    pub sign_change_radius: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            y_max: 40.0,
            cells: 8000,
            quadrature_tol: 1e-13,
            envelope_window: [2.0, 8.0],
            sign_change_radius: 10.0,
        }
    }
}

impl KernelConfig {
    fn validate(&self) -> CliResult<()> {
        positive("y_max", self.y_max)?;
        positive("quadrature_tol", self.quadrature_tol)?;
        if self.cells < 64 || !self.cells.is_multiple_of(4) {
            return Err(invalid("cells must be a multiple of 4 and at least 64"));
        }
        let [lo, hi] = self.envelope_window;
        if !(0.0 <= lo && lo < hi && hi <= self.y_max) {
            return Err(invalid("envelope_window must satisfy 0 <= lo < hi <= y_max"));
        }
        positive("sign_change_radius", self.sign_change_radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub t_final: f64,
    /// Evenly spaced snapshots written to the trajectory (the final time included).
    pub snapshots: usize,
    /// Backward-Euler substeps replacing the first step when `theta < 1`.
    pub startup_substeps: usize,
    /// Report the sup-norm distance to the kernel convolution of the data.
    pub compare_convolution: bool,
    pub model: ModelSection,
    pub domain: DomainSection,
    pub initial: InitialSection,
    pub solver: SolverSection,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            t_final: 0.1,
            snapshots: 10,
            startup_substeps: 0,
            compare_convolution: false,
            model: ModelSection::default(),
            domain: DomainSection::default(),
            initial: InitialSection::default(),
            solver: SolverSection::default(),
        }
    }
}

impl SimulateConfig {
    fn validate(&self) -> CliResult<()> {
        positive("t_final", self.t_final)?;
        if self.snapshots == 0 {
            return Err(invalid("snapshots must be at least 1"));
        }
        self.model.params()?;
        self.domain.grid()?;
        let cfg = self.solver.config()?;
        if self.startup_substeps > 0 && self.solver.fixed_dt.is_none() {
            return Err(invalid("startup_substeps requires solver.fixed_dt"));
        }
        if self.startup_substeps > 0 && cfg.dt_initial >= self.t_final {
            return Err(invalid("startup step must be shorter than t_final"));
        }
        Ok(())
    }
}

/// Bump data and discretization shared by the homotopy experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomotopyConfig {
    pub t_final: f64,
    pub ladder: Vec<f64>,
    /// `exp_inv_sqrt`, `power:<p>` or `table:<path>`.
    pub schedule: String,
    /// Overrides the schedule with a constant `eps`.
    pub fixed_epsilon: Option<f64>,
    pub bump_width: f64,
    pub bump_height: f64,
    pub cells_per_unit: f64,
    pub reference: tfelab::homotopy::Reference,
    pub trim: f64,
    pub solver: SolverSection,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        Self {
            t_final: 0.1,
            ladder: vec![0.2, 0.1, 0.05, 0.025],
            schedule: "exp_inv_sqrt".into(),
            fixed_epsilon: None,
            bump_width: 1.0,
            bump_height: 1.0,
            cells_per_unit: 20.0,
            reference: tfelab::homotopy::Reference::UnitSolver,
            trim: 0.05,
            solver: SolverSection::fixed(2.5e-4),
        }
    }
}

impl HomotopyConfig {
    fn validate(&self) -> CliResult<()> {
        positive("t_final", self.t_final)?;
        decreasing("ladder", &self.ladder)?;
        positive("bump_width", self.bump_width)?;
        positive("cells_per_unit", self.cells_per_unit)?;
        if !(0.0..0.5).contains(&self.trim) {
            return Err(invalid("trim must lie in [0, 0.5)"));
        }
        if let Some(e) = self.fixed_epsilon {
            if !(e > 0.0 && e <= 1.0) {
                return Err(invalid("fixed_epsilon must lie in (0, 1]"));
            }
        } else {
            tfelab::Schedule::from_key(&self.schedule).map_err(|e| invalid(e.to_string()))?;
        }
        self.solver.config()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchingConfig {
    /// Ladder, data and discretization, as for `homotopy`.
    pub homotopy: HomotopyConfig,
    pub clamp_eta_rel: f64,
    pub sigma_nodes: usize,
    /// Negative control: the same ladder with this constant `eps`.
    pub control_epsilon: Option<f64>,
}

impl Default for BranchingConfig {
    fn default() -> Self {
        Self {
            homotopy: HomotopyConfig::default(),
            clamp_eta_rel: 1e-8,
            sigma_nodes: 64,
            control_epsilon: None,
        }
    }
}

impl BranchingConfig {
    fn validate(&self) -> CliResult<()> {
        self.homotopy.validate()?;
        positive("clamp_eta_rel", self.clamp_eta_rel)?;
        if self.sigma_nodes < 4 {
            return Err(invalid("sigma_nodes must be at least 4"));
        }
        if let Some(e) = self.control_epsilon {
            if !(e > 0.0 && e <= 1.0) {
                return Err(invalid("control_epsilon must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Integrator settings for the interface ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitSection {
    pub rtol: f64,
    pub atol_rel: f64,
    pub return_tol: f64,
    pub max_returns: usize,
    pub max_s: f64,
    pub max_steps: usize,
    pub zero_reg_rel: f64,
    pub samples: usize,
}

impl Default for OrbitSection {
    fn default() -> Self {
        let o = OrbitOptions::default();
        Self {
            rtol: o.rtol,
            atol_rel: o.atol_rel,
            return_tol: o.return_tol,
            max_returns: o.max_returns,
            max_s: o.max_s,
            max_steps: o.max_steps,
            zero_reg_rel: o.zero_reg_rel,
            samples: o.samples,
        }
    }
}

impl OrbitSection {
    pub fn options(&self) -> CliResult<OrbitOptions> {
        for (name, v) in [
            ("rtol", self.rtol),
            ("atol_rel", self.atol_rel),
            ("return_tol", self.return_tol),
            ("max_s", self.max_s),
            ("zero_reg_rel", self.zero_reg_rel),
        ] {
            positive(name, v)?;
        }
        if self.samples < 16 {
            return Err(invalid("samples must be at least 16"));
        }
        Ok(OrbitOptions {
            rtol: self.rtol,
            atol_rel: self.atol_rel,
            return_tol: self.return_tol,
            max_returns: self.max_returns,
            max_s: self.max_s,
            max_steps: self.max_steps,
            zero_reg_rel: self.zero_reg_rel,
            samples: self.samples,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitConfig {
    pub n: f64,
    pub method: OrbitMethod,
    pub integrator: OrbitSection,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            n: 1.0,
            method: OrbitMethod::ForwardAttractor,
            integrator: OrbitSection::default(),
        }
    }
}

impl OrbitConfig {
    fn validate(&self) -> CliResult<()> {
        if !(self.n > 0.0 && self.n < 2.2) {
            return Err(invalid(format!("n = {} outside (0, 2.2)", self.n)));
        }
        self.integrator.options()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub n_range: [f64; 2],
    pub steps: usize,
    pub integrator: OrbitSection,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            n_range: [1.6, 1.9],
            steps: 12,
            integrator: OrbitSection::default(),
        }
    }
}

impl ScanConfig {
    fn validate(&self) -> CliResult<()> {
        let [lo, hi] = self.n_range;
        if !(1.5 < lo && lo < hi && hi < 2.0) {
            return Err(invalid("n_range must lie inside (1.5, 2.0)"));
        }
        if self.steps < 8 {
            return Err(invalid("steps must be at least 8"));
        }
        self.integrator.options()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupSection {
    pub chi: [f64; 2],
    pub domain: DomainSection,
    pub ceiling: f64,
    pub t_max: f64,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for BlowupSection {
    fn default() -> Self {
        let o = tfelab::riemann::BlowupOptions::default();
        Self {
            chi: [1.0, 1.0],
            domain: DomainSection {
                x_min: -5.0,
                x_max: 5.0,
                cells: 200,
            },
            ceiling: 1e6,
            t_max: o.t_max,
            dt_initial: o.dt_initial,
            dt_min: o.dt_min,
            dt_max: o.dt_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterfaceSection {
    pub eps_ladder: Vec<f64>,
    pub domain: DomainSection,
    pub t_final: f64,
    /// Half-width of the compact window `|y| <= window`.
    pub window: f64,
}

impl Default for InterfaceSection {
    fn default() -> Self {
        Self {
            eps_ladder: vec![1e-1, 1e-2, 1e-3],
            domain: DomainSection {
                x_min: -4.0,
                x_max: 4.0,
                cells: 400,
            },
            t_final: 1.0,
            window: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparableSection {
    pub dimensions: Vec<usize>,
    pub probes: Vec<f64>,
    /// Blow-up time used for the `psi` check.
    pub t_blowup: f64,
}

impl Default for SeparableSection {
    fn default() -> Self {
        Self {
            dimensions: vec![1, 2, 3],
            probes: vec![0.5, 1.0, 2.0],
            t_blowup: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiemannConfig {
    pub n: f64,
    pub blowup: BlowupSection,
    pub interface: InterfaceSection,
    pub separable: SeparableSection,
    pub integrator: OrbitSection,
}

impl Default for RiemannConfig {
    fn default() -> Self {
        Self {
            n: 1.0,
            blowup: BlowupSection::default(),
            interface: InterfaceSection::default(),
            separable: SeparableSection::default(),
            integrator: OrbitSection::default(),
        }
    }
}

impl RiemannConfig {
    fn validate(&self) -> CliResult<()> {
        if !(self.n > 0.0 && self.n < 2.2) {
            return Err(invalid(format!("n = {} outside (0, 2.2)", self.n)));
        }
        self.blowup.domain.grid()?;
        self.interface.domain.grid()?;
        positive("blowup.ceiling", self.blowup.ceiling)?;
        positive("blowup.t_max", self.blowup.t_max)?;
        positive("interface.t_final", self.interface.t_final)?;
        positive("interface.window", self.interface.window)?;
        decreasing("interface.eps_ladder", &self.interface.eps_ladder)?;
        if self.separable.dimensions.contains(&0) {
            return Err(invalid("separable.dimensions must be positive"));
        }
        if self.separable.probes.iter().any(|&p| !(p > 0.0)) {
            return Err(invalid("separable.probes must be positive radii"));
        }
        self.integrator.options()?;
        Ok(())
    }
}

/// Space-time test function of the weak-form sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestFunctionSection {
    pub kind: tfelab::diagnostics::TestFunctionKind,
    pub x_center: f64,
    pub x_width: f64,
    pub t_center: f64,
    pub t_width: f64,
    pub wavenumber: f64,
}

impl Default for TestFunctionSection {
    fn default() -> Self {
        Self {
            kind: tfelab::diagnostics::TestFunctionKind::BumpProduct,
            x_center: 1.5,
            x_width: 1.2,
            t_center: 0.05,
            t_width: 0.04,
            wavenumber: 0.0,
        }
    }
}

/// Weak-form sweep over `eps` (homotopy mobility), with a `delta` sweep of
/// the bad-set term at the smallest `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n: f64,
    pub eps_ladder: Vec<f64>,
    pub delta_ladder: Vec<f64>,
    pub t_final: f64,
    pub snapshots: usize,
    pub initial: InitialSection,
    pub domain: DomainSection,
    pub solver: SolverSection,
    pub test_function: TestFunctionSection,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: 1.0,
            eps_ladder: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
            delta_ladder: vec![0.4, 0.2, 0.1, 0.05, 0.025, 0.0125],
            t_final: 0.1,
            snapshots: 100,
            initial: InitialSection::default(),
            domain: DomainSection::default(),
            solver: SolverSection::fixed(1e-4),
            test_function: TestFunctionSection::default(),
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> CliResult<()> {
        positive("n", self.n)?;
        decreasing("eps_ladder", &self.eps_ladder)?;
        decreasing("delta_ladder", &self.delta_ladder)?;
        if self.eps_ladder[0] > 1.0 {
            return Err(invalid("eps_ladder values must not exceed 1"));
        }
        positive("t_final", self.t_final)?;
        if self.snapshots < 2 {
            return Err(invalid("snapshots must be at least 2"));
        }
        self.domain.grid()?;
        self.solver.config()?;
        let tf = &self.test_function;
        positive("test_function.x_width", tf.x_width)?;
        positive("test_function.t_width", tf.t_width)?;
        if tf.t_center - tf.t_width < 0.0 || tf.t_center + tf.t_width > self.t_final {
            return Err(invalid("test function time support must lie in [0, t_final]"));
        }
        if tf.x_center - tf.x_width < self.domain.x_min || tf.x_center + tf.x_width > self.domain.x_max {
            return Err(invalid("test function space support must lie inside the domain"));
        }
        Ok(())
    }
}

/// The parameter record of one run, tagged by subcommand.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentConfig {
    Kernel(KernelConfig),
    Simulate(SimulateConfig),
    Homotopy(HomotopyConfig),
    Branching(BranchingConfig),
    Orbit(OrbitConfig),
    Scan(ScanConfig),
    Riemann(RiemannConfig),
    Sweep(SweepConfig),
}

pub const COMMANDS: [&str; 8] = [
    "kernel",
    "simulate",
    "homotopy",
    "branching",
    "orbit",
    "scan",
    "riemann",
    "sweep",
];

fn parse<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    toml::from_str(text).map_err(|e| invalid(format!("config: {}", e.message())))
}

fn render<T: Serialize>(v: &T) -> String {
    toml::to_string(v).expect("config records serialize to TOML")
}

impl ExperimentConfig {
    /// Parses `text` for `command` and validates it.
    pub fn from_toml(command: &str, text: &str) -> CliResult<Self> {
        let cfg = match command {
            "kernel" => Self::Kernel(parse(text)?),
            "simulate" => Self::Simulate(parse(text)?),
            "homotopy" => Self::Homotopy(parse(text)?),
            "branching" => Self::Branching(parse(text)?),
            "orbit" => Self::Orbit(parse(text)?),
            "scan" => Self::Scan(parse(text)?),
            "riemann" => Self::Riemann(parse(text)?),
            "sweep" => Self::Sweep(parse(text)?),
            other => return Err(invalid(format!("unknown subcommand {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(command: &str, path: Option<&Path>) -> CliResult<Self> {
        let text = match path {
            Some(p) => {
                std::fs::read_to_string(p).map_err(|e| invalid(format!("cannot read config {}: {e}", p.display())))?
            }
            None => String::new(),
        };
        Self::from_toml(command, &text)
    }

    pub fn command(&self) -> &'static str {
        match self {
            Self::Kernel(_) => "kernel",
            Self::Simulate(_) => "simulate",
            Self::Homotopy(_) => "homotopy",
            Self::Branching(_) => "branching",
            Self::Orbit(_) => "orbit",
            Self::Scan(_) => "scan",
            Self::Riemann(_) => "riemann",
            Self::Sweep(_) => "sweep",
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        match self {
            Self::Kernel(c) => c.validate(),
            Self::Simulate(c) => c.validate(),
            Self::Homotopy(c) => c.validate(),
            Self::Branching(c) => c.validate(),
            Self::Orbit(c) => c.validate(),
            Self::Scan(c) => c.validate(),
            Self::Riemann(c) => c.validate(),
            Self::Sweep(c) => c.validate(),
        }
    }

    /// Canonical TOML: every key spelled out, defaults included.
    pub fn canonical(&self) -> String {
        match self {
            Self::Kernel(c) => render(c),
            Self::Simulate(c) => render(c),
            Self::Homotopy(c) => render(c),
            Self::Branching(c) => render(c),
            Self::Orbit(c) => render(c),
            Self::Scan(c) => render(c),
            Self::Riemann(c) => render(c),
            Self::Sweep(c) => render(c),
        }
    }

    /// SHA-256 of the command name and the canonical TOML.
    pub fn hash(&self) -> String {
        config_hash(self.command(), &self.canonical())
    }
}

pub fn config_hash(command: &str, canonical: &str) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    h.update(canonical.as_bytes());
    hex::encode(h.finalize())
}
