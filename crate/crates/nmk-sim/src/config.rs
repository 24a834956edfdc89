//! Experiment documents: parsing, defaults and validation.

use std::fmt;

use nmk_core::fock::{GaussianPacket, TimeProfile};
use nmk_core::kernels::{Atom, ChirpedGaussian, Lorentzian, MemoryKernel, MollifierFamily};
use nmk_core::linalg::CMat;
use nmk_core::C64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ChainMap,
    Simulate,
    Certify,
    CompareOracle,
    Sweep,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::ChainMap => "chain-map",
            Mode::Simulate => "simulate",
            Mode::Certify => "certify",
            Mode::CompareOracle => "compare-oracle",
            Mode::Sweep => "sweep",
        };
        f.write_str(s)
    }
}

/// A complex number written either as a plain number or as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Complex {
    Real(f64),
    Pair([f64; 2]),
}

impl Complex {
    pub fn value(self) -> C64 {
        match self {
            Complex::Real(x) => C64::new(x, 0.0),
            Complex::Pair([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSpec,
    pub baths: Vec<BathSpec>,
    #[serde(default)]
    pub mollifier: Option<MollifierSpec>,
    pub omega_c: f64,
    pub n_modes: usize,
    pub cap: usize,
    pub t_final: f64,
    pub output_step: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub qudits: usize,
    pub levels: usize,
    #[serde(default)]
    pub hamiltonian: Vec<TermSpec>,
    pub jumps: Vec<JumpSpec>,
    pub initial_state: InitialSystemState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub support: Vec<usize>,
    pub matrix: MatrixSpec,
    #[serde(default = "unit")]
    pub scale: f64,
    #[serde(default = "constant")]
    pub profile: TimeProfile,
}

fn unit() -> f64 {
    1.0
}

fn constant() -> TimeProfile {
    TimeProfile::Constant
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub support: Vec<usize>,
    pub matrix: MatrixSpec,
    #[serde(default = "unit")]
    pub scale: f64,
    pub bath: usize,
}

/// A local operator: a named single-qudit operator or explicit rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(NamedOperator),
    Rows(Vec<Vec<Complex>>),
}

/// Level 1 is the excited level of a qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedOperator {
    Identity,
    Sx,
    Sy,
    Sz,
    Lower,
    Raise,
    Number,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSystemState {
    Basis(usize),
    Amplitudes(Vec<Complex>),
    /// Normalized complex Gaussian vector drawn from the config seed.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub kernel: KernelSpec,
    #[serde(default)]
    pub initial: BathInitSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    LorentzianSum {
        terms: Vec<Lorentzian>,
        #[serde(default)]
        phase: Vec<f64>,
    },
    DeltaTrain {
        atoms: Vec<AtomSpec>,
        #[serde(default)]
        phase: Vec<f64>,
    },
    /// `δ(t)`, flat spectral density 1.
    Delta {
        #[serde(default)]
        phase: Vec<f64>,
    },
    ComplexGaussianSum {
        terms: Vec<ChirpSpec>,
        #[serde(default)]
        phase: Vec<f64>,
    },
    Tabulated {
        omega_min: f64,
        step: f64,
        values: Vec<f64>,
        #[serde(default)]
        phase: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub weight: Complex,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpSpec {
    pub coefficient: Complex,
    pub chirp: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BathInitSpec {
    #[default]
    Vacuum,
    /// Displacements of the first chain modes; missing modes stay empty.
    Coherent {
        displacement: Vec<Complex>,
    },
    SinglePhoton {
        packet: GaussianPacket,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierSpec {
    pub family: Family,
    pub epsilon: f64,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    StandardBump,
    BumpSquared,
}

impl From<Family> for MollifierFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::StandardBump => MollifierFamily::StandardBump,
            Family::BumpSquared => MollifierFamily::BumpSquared,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub omega_max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Uniform star discretization with this many modes per bath.
    Star { modes: usize },
    /// Markovian master equation with one rate per bath.
    Lindblad { rates: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default)]
    pub omega_c: Option<Vec<f64>>,
    #[serde(default)]
    pub n_modes: Option<Vec<usize>>,
    #[serde(default)]
    pub cap: Option<Vec<usize>>,
}

/// A rejected document: position in the file if known, the offending field,
/// and what is wrong with it.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemaError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for SchemaError {}

fn field_error(field: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError { line: None, column: None, field: field.into(), message: message.into() }
}

/// One point of a sweep; `epsilon` is `None` without a mollifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Params {
    pub epsilon: Option<f64>,
    pub omega_c: f64,
    pub n_modes: usize,
    pub cap: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            SchemaError {
                line: Some(inner.line()),
                column: Some(inner.column()),
                field: if path == "." { "<document>".into() } else { path },
                message: strip_position(&inner.to_string()),
            }
        })?;
        Ok(config)
    }

    pub fn base_params(&self) -> Params {
        Params {
            epsilon: self.mollifier.map(|m| m.epsilon),
            omega_c: self.omega_c,
            n_modes: self.n_modes,
            cap: self.cap,
        }
    }

    /// Cartesian product of the sweep axes, `epsilon` outermost and `cap`
    /// innermost; missing axes take the base value.
    pub fn grid(&self) -> Vec<Params> {
        let base = self.base_params();
        let sweep = self.sweep.clone().unwrap_or_default();
        let eps: Vec<Option<f64>> = match sweep.epsilon {
            Some(v) => v.into_iter().map(Some).collect(),
            None => vec![base.epsilon],
        };
        let wc = sweep.omega_c.unwrap_or_else(|| vec![base.omega_c]);
        let nm = sweep.n_modes.unwrap_or_else(|| vec![base.n_modes]);
        let cap = sweep.cap.unwrap_or_else(|| vec![base.cap]);
        let mut out = Vec::new();
        for &epsilon in &eps {
            for &omega_c in &wc {
                for &n_modes in &nm {
                    for &cap in &cap {
                        out.push(Params { epsilon, omega_c, n_modes, cap });
                    }
                }
            }
        }
        out
    }

    /// Checks everything the type system does not.
    pub fn validate(&self, mode: Mode) -> Result<(), SchemaError> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(field_error("mode", format!("document is for `{m}` but `{mode}` was requested")));
            }
        }
        let sys = &self.system;
        if sys.qudits == 0 || sys.levels < 2 {
            return Err(field_error("system", "need at least one qudit with at least two levels"));
        }
        let sys_dim = sys
            .levels
            .checked_pow(sys.qudits as u32)
            .filter(|&d| d <= 1 << 16)
            .ok_or_else(|| field_error("system", "system dimension exceeds 65536"))?;
        for (i, term) in sys.hamiltonian.iter().enumerate() {
            check_local(&format!("system.hamiltonian[{i}]"), sys, &term.support, &term.matrix, term.scale)?;
            if !is_hermitian(&self.local_matrix(&term.matrix, term.scale)) {
                return Err(field_error(format!("system.hamiltonian[{i}].matrix"), "must be Hermitian"));
            }
        }
        if self.baths.is_empty() {
            return Err(field_error("baths", "at least one bath is required"));
        }
        let mut seen = vec![false; self.baths.len()];
        for (i, jump) in sys.jumps.iter().enumerate() {
            let f = format!("system.jumps[{i}]");
            check_local(&f, sys, &jump.support, &jump.matrix, jump.scale)?;
            if jump.bath >= self.baths.len() {
                return Err(field_error(
                    format!("{f}.bath"),
                    format!("bath {} does not exist ({} declared)", jump.bath, self.baths.len()),
                ));
            }
            if std::mem::replace(&mut seen[jump.bath], true) {
                return Err(field_error(
                    format!("{f}.bath"),
                    format!("bath {} already has a jump operator", jump.bath),
                ));
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(field_error(format!("baths[{b}]"), "no jump operator couples to this bath"));
        }
        match &sys.initial_state {
            InitialSystemState::Basis(k) if *k >= sys_dim => {
                return Err(field_error(
                    "system.initial_state.basis",
                    format!("index {k} out of range for dimension {sys_dim}"),
                ));
            }
            InitialSystemState::Amplitudes(a) => {
                if a.len() != sys_dim {
                    return Err(field_error(
                        "system.initial_state.amplitudes",
                        format!("expected {sys_dim} entries, got {}", a.len()),
                    ));
                }
                if a.iter().all(|z| z.value().norm() == 0.0) {
                    return Err(field_error("system.initial_state.amplitudes", "state vector is zero"));
                }
            }
            _ => {}
        }
        for (i, bath) in self.baths.iter().enumerate() {
            check_kernel(&format!("baths[{i}].kernel"), &bath.kernel)?;
            if let BathInitSpec::SinglePhoton { packet } = &bath.initial {
                if !(packet.sigma > 0.0) {
                    return Err(field_error(format!("baths[{i}].initial.packet.sigma"), "must be positive"));
                }
            }
        }
        positive("omega_c", self.omega_c)?;
        positive("t_final", self.t_final)?;
        positive("output_step", self.output_step)?;
        positive("tolerance", self.tolerance)?;
        if self.n_modes == 0 {
            return Err(field_error("n_modes", "must be at least 1"));
        }
        if self.cap == 0 {
            return Err(field_error("cap", "must be at least 1"));
        }
        if self.t_final / self.output_step > 1e6 {
            return Err(field_error("output_step", "more than 10^6 output times"));
        }
        if let Some(m) = &self.mollifier {
            positive("mollifier.epsilon", m.epsilon)?;
            if let Some(g) = &m.grid {
                positive("mollifier.grid.omega_max", g.omega_max)?;
                if g.points < 64 {
                    return Err(field_error("mollifier.grid.points", "need at least 64 points"));
                }
            }
        }
        if matches!(mode, Mode::Certify | Mode::Sweep) && self.mollifier.is_none() {
            return Err(field_error("mollifier", format!("required by `{mode}`")));
        }
        match (&self.oracle, mode) {
            (None, Mode::CompareOracle) => return Err(field_error("oracle", "required by `compare-oracle`")),
            (Some(OracleSpec::Star { modes }), _) if *modes == 0 => {
                return Err(field_error("oracle.star.modes", "must be at least 1"));
            }
            (Some(OracleSpec::Lindblad { rates }), _) => {
                if rates.len() != self.baths.len() {
                    return Err(field_error("oracle.lindblad.rates", "one rate per bath"));
                }
                if rates.iter().any(|r| !(*r >= 0.0)) {
                    return Err(field_error("oracle.lindblad.rates", "rates must be non-negative"));
                }
            }
            _ => {}
        }
        if mode == Mode::Sweep {
            let s = self.sweep.as_ref().ok_or_else(|| field_error("sweep", "required by `sweep`"))?;
            let lens = [
                ("sweep.epsilon", s.epsilon.as_ref().map(Vec::len)),
                ("sweep.omega_c", s.omega_c.as_ref().map(Vec::len)),
                ("sweep.n_modes", s.n_modes.as_ref().map(Vec::len)),
                ("sweep.cap", s.cap.as_ref().map(Vec::len)),
            ];
            if lens.iter().all(|(_, l)| l.is_none()) {
                return Err(field_error("sweep", "at least one axis is required"));
            }
            if let Some((f, _)) = lens.iter().find(|(_, l)| *l == Some(0)) {
                return Err(field_error(*f, "axis must not be empty"));
            }
            for (k, &e) in s.epsilon.iter().flatten().enumerate() {
                positive(&format!("sweep.epsilon[{k}]"), e)?;
            }
            for (k, &w) in s.omega_c.iter().flatten().enumerate() {
                positive(&format!("sweep.omega_c[{k}]"), w)?;
            }
            if s.n_modes.iter().flatten().any(|&n| n == 0) {
                return Err(field_error("sweep.n_modes", "entries must be at least 1"));
            }
            if s.cap.iter().flatten().any(|&n| n == 0) {
                return Err(field_error("sweep.cap", "entries must be at least 1"));
            }
        }
        Ok(())
    }

    /// Dense local matrix of a term.
    pub fn local_matrix(&self, spec: &MatrixSpec, scale: f64) -> CMat {
        let d = self.system.levels;
        let m = match spec {
            MatrixSpec::Named(name) => named_matrix(*name, d),
            MatrixSpec::Rows(rows) => {
                let n = rows.len();
                let mut m = CMat::zeros(n);
                for (i, row) in rows.iter().enumerate() {
                    for (j, z) in row.iter().enumerate() {
                        m.set(i, j, z.value());
                    }
                }
                m
            }
        };
        m.scale(C64::new(scale, 0.0))
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

fn positive(field: &str, x: f64) -> Result<(), SchemaError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(field_error(field, format!("must be positive and finite, got {x}")))
    }
}

fn check_local(
    field: &str,
    sys: &SystemSpec,
    support: &[usize],
    matrix: &MatrixSpec,
    scale: f64,
) -> Result<(), SchemaError> {
    if support.is_empty() {
        return Err(field_error(format!("{field}.support"), "must not be empty"));
    }
    for (i, &q) in support.iter().enumerate() {
        if q >= sys.qudits {
            return Err(field_error(format!("{field}.support[{i}]"), format!("qudit {q} does not exist")));
        }
        if support[..i].contains(&q) {
            return Err(field_error(format!("{field}.support[{i}]"), format!("qudit {q} listed twice")));
        }
    }
    if !scale.is_finite() {
        return Err(field_error(format!("{field}.scale"), "must be finite"));
    }
    let expected = sys.levels.checked_pow(support.len() as u32).unwrap_or(usize::MAX);
    match matrix {
        MatrixSpec::Named(name) => {
            if support.len() != 1 {
                return Err(field_error(format!("{field}.matrix"), "named operators act on a single qudit"));
            }
            if matches!(name, NamedOperator::Sx | NamedOperator::Sy | NamedOperator::Sz) && sys.levels != 2 {
                return Err(field_error(format!("{field}.matrix"), "Pauli operators need levels = 2"));
            }
        }
        MatrixSpec::Rows(rows) => {
            if rows.len() != expected || rows.iter().any(|r| r.len() != expected) {
                return Err(field_error(format!("{field}.matrix"), format!("expected a {expected}x{expected} matrix")));
            }
            if rows.iter().flatten().any(|z| !z.value().re.is_finite() || !z.value().im.is_finite()) {
                return Err(field_error(format!("{field}.matrix"), "entries must be finite"));
            }
        }
    }
    Ok(())
}

fn is_hermitian(m: &CMat) -> bool {
    m.hermiticity_defect() <= 1e-12 * m.frobenius().max(1.0)
}

fn check_kernel(field: &str, k: &KernelSpec) -> Result<(), SchemaError> {
    let shape = match k {
        KernelSpec::LorentzianSum { terms, .. } if terms.is_empty() => {
            Err(field_error(format!("{field}.terms"), "must not be empty"))
        }
        KernelSpec::DeltaTrain { atoms, .. } if atoms.is_empty() => {
            Err(field_error(format!("{field}.atoms"), "must not be empty"))
        }
        KernelSpec::ComplexGaussianSum { terms, .. } if terms.is_empty() => {
            Err(field_error(format!("{field}.terms"), "must not be empty"))
        }
        KernelSpec::Tabulated { values, .. } if values.len() < 2 => {
            Err(field_error(format!("{field}.values"), "need at least two samples"))
        }
        _ => Ok(()),
    };
    shape?;
    build_kernel(k).map(|_| ()).map_err(|e| field_error(field, e.to_string()))
}

/// Single-qudit operators; `lower` is the truncated annihilation operator.
pub fn named_matrix(name: NamedOperator, d: usize) -> CMat {
    let mut m = CMat::zeros(d);
    let c = |x: f64| C64::new(x, 0.0);
    match name {
        NamedOperator::Identity => return CMat::identity(d),
        NamedOperator::Sx => {
            m.set(0, 1, c(1.0));
            m.set(1, 0, c(1.0));
        }
        NamedOperator::Sy => {
            m.set(0, 1, C64::new(0.0, -1.0));
            m.set(1, 0, C64::new(0.0, 1.0));
        }
        NamedOperator::Sz => {
            m.set(0, 0, c(-1.0));
            m.set(1, 1, c(1.0));
        }
        NamedOperator::Lower => {
            for k in 1..d {
                m.set(k - 1, k, c((k as f64).sqrt()));
            }
        }
        NamedOperator::Raise => {
            for k in 1..d {
                m.set(k, k - 1, c((k as f64).sqrt()));
            }
        }
        NamedOperator::Number => {
            for k in 0..d {
                m.set(k, k, c(k as f64));
            }
        }
    }
    m
}

/// Kernel with its phase polynomial; the core constructor checks the data.
pub fn build_kernel(spec: &KernelSpec) -> nmk_core::Result<MemoryKernel> {
    let (kernel, phase) = match spec {
        KernelSpec::LorentzianSum { terms, phase } => (MemoryKernel::lorentzian_sum(terms.clone())?, phase),
        KernelSpec::DeltaTrain { atoms, phase } => {
            let atoms = atoms.iter().map(|a| Atom { weight: a.weight.value(), tau: a.tau }).collect();
            (MemoryKernel::delta_train(atoms)?, phase)
        }
        KernelSpec::Delta { phase } => (MemoryKernel::delta(), phase),
        KernelSpec::ComplexGaussianSum { terms, phase } => {
            let terms =
                terms.iter().map(|t| ChirpedGaussian { coefficient: t.coefficient.value(), chirp: t.chirp }).collect();
            (MemoryKernel::complex_gaussian_sum(terms)?, phase)
        }
        KernelSpec::Tabulated { omega_min, step, values, phase } => {
            (MemoryKernel::tabulated(*omega_min, *step, values.clone())?, phase)
        }
    };
    Ok(if phase.is_empty() { kernel } else { kernel.with_phase(phase.clone()) })
}
