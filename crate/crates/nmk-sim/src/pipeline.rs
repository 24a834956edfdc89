//! regularize → cutoff → chain → simulate → certify, for one parameter point.

use core::f64::consts::PI;

use nmk_core::chain::{star_to_chain, ChainCoefficients, SpectralWeight};
use nmk_core::dynamics::{
    chain_error_bound, commutator_bound, cutoff_error_bound, evolve, regularization_error_bound, time_grid,
    truncation_certificate, BathConstants, BudgetPoint, ChainBath, ErrorBudget, MomentSource, RegularizationBath,
    StateConstants, StepControl, Trajectory,
};
use nmk_core::fock::{
    enumerate_basis, product_state, BathState, HamiltonianTerm, InitialEnvState, JumpOperator, PreparedBath,
    SystemModel, TruncatedSpace,
};
use nmk_core::kernels::{
    eval_spectral_density, regularize, FrequencyGrid, MemoryKernel, Mollifier, RegularizedCoupling,
};
use nmk_core::linalg::CMat;
use nmk_core::oracle::{lindblad_evolve, star_evolve, star_space, StarDiscretization};
use nmk_core::{Error, Result, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{build_kernel, BathInitSpec, ExperimentConfig, InitialSystemState, OracleSpec, Params};

const DEFAULT_GRID_POINTS: usize = 4001;
const DEFAULT_GRID_SPAN: f64 = 150.0;

/// `v̂ = √(μ̂/2π) e^{iφ}` with no mollification.
#[derive(Clone, Debug)]
pub struct RawCoupling {
    kernel: MemoryKernel,
}

impl RawCoupling {
    /// Samples the density on `[-ω_c, ω_c]` so that negative or complex
    /// values surface as errors rather than being clipped silently.
    pub fn new(kernel: MemoryKernel, omega_c: f64) -> Result<Self> {
        for k in 0..=2000 {
            eval_spectral_density(&kernel, omega_c * (k as f64 / 1000.0 - 1.0))?;
        }
        Ok(RawCoupling { kernel })
    }
}

impl SpectralWeight for RawCoupling {
    fn amplitude(&self, w: f64) -> C64 {
        let d = self.kernel.spectral_density_raw(w).re.max(0.0);
        C64::from_polar((d / (2.0 * PI)).sqrt(), self.kernel.phase(w))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.kernel.breakpoints()
    }
}

#[derive(Clone, Debug)]
pub enum Coupling {
    Regularized(RegularizedCoupling),
    Raw(RawCoupling),
}

impl SpectralWeight for Coupling {
    fn amplitude(&self, w: f64) -> C64 {
        match self {
            Coupling::Regularized(c) => c.amplitude(w),
            Coupling::Raw(c) => c.amplitude(w),
        }
    }

    fn density(&self, w: f64) -> f64 {
        match self {
            Coupling::Regularized(c) => c.density(w),
            Coupling::Raw(c) => c.density(w),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Coupling::Regularized(c) => SpectralWeight::breakpoints(c),
            Coupling::Raw(c) => c.breakpoints(),
        }
    }

    fn support_limit(&self) -> Option<f64> {
        match self {
            Coupling::Regularized(c) => SpectralWeight::support_limit(c),
            Coupling::Raw(_) => None,
        }
    }
}

/// Everything fixed by the document alone.
pub struct Setup {
    pub config: ExperimentConfig,
    pub kernels: Vec<MemoryKernel>,
    pub model: SystemModel,
    pub system_state: Vec<C64>,
    pub times: Vec<f64>,
}

impl Setup {
    /// Expects a validated config.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let kernels = config.baths.iter().map(|b| build_kernel(&b.kernel)).collect::<Result<Vec<_>>>()?;
        let sys = &config.system;
        let hs_terms = sys
            .hamiltonian
            .iter()
            .map(|t| HamiltonianTerm {
                support: t.support.clone(),
                matrix: config.local_matrix(&t.matrix, t.scale),
                profile: t.profile,
            })
            .collect();
        let mut jumps: Vec<JumpOperator> = sys
            .jumps
            .iter()
            .map(|j| JumpOperator {
                support: j.support.clone(),
                matrix: config.local_matrix(&j.matrix, j.scale),
                bath: j.bath,
            })
            .collect();
        jumps.sort_by_key(|j| j.bath);
        let model = SystemModel::new(sys.qudits, sys.levels, hs_terms, jumps)?;
        let system_state = initial_system_state(&sys.initial_state, model.sys_dim(), config.seed);
        let steps = (config.t_final / config.output_step).round().max(1.0) as usize;
        let times = time_grid(config.t_final, steps);
        Ok(Setup { config, kernels, model, system_state, times })
    }

    pub fn control(&self, keep_states: bool) -> StepControl {
        StepControl { tolerance: self.config.tolerance, keep_states, ..StepControl::default() }
    }

    pub fn couplings(&self, p: &Params) -> Result<Vec<Coupling>> {
        self.kernels
            .iter()
            .map(|k| match (&self.config.mollifier, p.epsilon) {
                (Some(m), Some(eps)) => {
                    let rho = Mollifier::new(m.family.into(), eps)?;
                    let grid = match m.grid {
                        Some(g) => FrequencyGrid { omega_max: g.omega_max, points: g.points },
                        None => FrequencyGrid {
                            omega_max: (DEFAULT_GRID_SPAN / eps).max(2.0 * p.omega_c),
                            points: DEFAULT_GRID_POINTS,
                        },
                    };
                    Ok(Coupling::Regularized(regularize(k, &rho, grid)?))
                }
                _ => Ok(Coupling::Raw(RawCoupling::new(k.clone(), p.omega_c)?)),
            })
            .collect()
    }

    pub fn jump_norms(&self) -> Vec<f64> {
        (0..self.model.baths()).map(|b| self.model.jump_matrix(b).map_or(0.0, |l| l.op_norm())).collect()
    }

    fn environment(&self, chains: &[ChainCoefficients], couplings: &[Coupling]) -> InitialEnvState {
        let baths = self
            .config
            .baths
            .iter()
            .zip(chains.iter().zip(couplings))
            .map(|(spec, (chain, coupling))| match &spec.initial {
                BathInitSpec::Vacuum => BathState::Vacuum,
                BathInitSpec::Coherent { displacement } => {
                    let mut d: Vec<C64> = displacement.iter().map(|z| z.value()).take(chain.modes()).collect();
                    d.resize(chain.modes(), C64::new(0.0, 0.0));
                    BathState::Coherent { displacement: d }
                }
                BathInitSpec::SinglePhoton { packet } => BathState::single_photon_from_packet(chain, coupling, packet),
            })
            .collect();
        InitialEnvState { baths }
    }

    /// Chain map and propagation at one parameter point.
    pub fn run_chain(&self, p: &Params, keep_states: bool) -> Result<ChainRun> {
        let couplings = self.couplings(p)?;
        let chains = couplings.iter().map(|c| star_to_chain(c, p.omega_c, p.n_modes)).collect::<Result<Vec<_>>>()?;
        let space = enumerate_basis(self.model.n, self.model.d, self.model.baths(), p.n_modes, p.cap)?;
        let env = self.environment(&chains, &couplings);
        let (psi, prepared) = product_state(&space, &self.system_state, &env)?;
        log::debug!("point {p:?}: dimension {}", space.dim());
        let trajectory = evolve(&self.model, &chains, &space, &psi, &self.times, &self.control(keep_states))?;
        Ok(ChainRun { params: *p, couplings, chains, space, prepared, trajectory })
    }

    /// Reduced states from the configured oracle at the output times.
    pub fn run_oracle(&self, p: &Params) -> Result<Vec<CMat>> {
        match &self.config.oracle {
            Some(OracleSpec::Star { modes }) => {
                if self.config.baths.iter().any(|b| b.initial != BathInitSpec::Vacuum) {
                    return Err(Error::InvalidInput("the star oracle starts from the vacuum"));
                }
                let couplings = self.couplings(p)?;
                let stars = couplings
                    .iter()
                    .map(|c| StarDiscretization::new(c, p.omega_c, *modes))
                    .collect::<Result<Vec<_>>>()?;
                let space = star_space(&self.model, &stars, p.cap)?;
                let (psi, _) = product_state(&space, &self.system_state, &InitialEnvState::vacuum(stars.len()))?;
                Ok(star_evolve(&self.model, &stars, p.cap, &psi, &self.times, &self.control(false))?.rho)
            }
            Some(OracleSpec::Lindblad { rates }) => {
                let rho0 = pure_density(&self.system_state);
                lindblad_evolve(&self.model, rates, &rho0, &self.times, self.config.tolerance)
            }
            None => Err(Error::InvalidInput("no oracle configured")),
        }
    }

    /// Certified budget at `t_final` for a finished run.
    pub fn budget(&self, run: &ChainRun) -> Result<ErrorBudget> {
        let t = self.config.t_final;
        let p = &run.params;
        let eps = p.epsilon.ok_or(Error::InvalidInput("budget needs a mollifier"))?;
        let l_norms = self.jump_norms();
        let mu1_0: Vec<f64> = run.prepared.iter().map(|b| b.moments.0).collect();

        let states: Vec<StateConstants> = self
            .config
            .baths
            .iter()
            .map(|b| match &b.initial {
                BathInitSpec::Vacuum => StateConstants::Vacuum,
                BathInitSpec::SinglePhoton { packet } => {
                    let (n11, n12) = packet.occupation_constants();
                    StateConstants::SinglePhoton { n11, n12 }
                }
                BathInitSpec::Coherent { .. } => StateConstants::Other,
            })
            .collect();
        let reg_baths: Vec<RegularizationBath<'_>> = (0..self.kernels.len())
            .map(|a| RegularizationBath {
                kernel: &self.kernels[a],
                l_norm: l_norms[a],
                commutator: commutator_bound(&self.model, a, t),
                state: states[a],
            })
            .collect();
        let regularization_sq = regularization_error_bound(&reg_baths, eps, t)?;

        let cut_baths = run
            .couplings
            .iter()
            .enumerate()
            .map(|(a, c)| match c {
                Coupling::Regularized(r) => Ok(BathConstants {
                    l_norm: l_norms[a],
                    v_norm: r.l2_norm(),
                    sup_omega_vhat: r.sup_omega_vhat(),
                    mu1: mu1_0[a],
                }),
                Coupling::Raw(_) => Err(Error::InvalidInput("budget needs a mollifier")),
            })
            .collect::<Result<Vec<_>>>()?;
        let cutoff = cutoff_error_bound(&cut_baths, p.omega_c, t)?;

        let chain_baths: Vec<ChainBath<'_>> = run
            .chains
            .iter()
            .zip(&run.couplings)
            .enumerate()
            .map(|(a, (chain, weight))| ChainBath { l_norm: l_norms[a], chain, weight })
            .collect();
        let chain = chain_error_bound(&chain_baths, t, mu1_0.iter().sum())?;

        let ells: Vec<f64> = run.chains.iter().zip(&l_norms).map(|(c, l)| c.v_norm * l).collect();
        let truncation = truncation_certificate(MomentSource::Measured(&run.trajectory), &ells, p.cap, t)?;
        let initialization: f64 = run.prepared.iter().map(|b| b.initialization_error).sum();

        let point = BudgetPoint { epsilon: eps, omega_c: p.omega_c, n_modes: p.n_modes, cap: p.cap, t };
        ErrorBudget::assemble(point, regularization_sq, cutoff, chain, truncation, initialization)
    }
}

pub struct ChainRun {
    pub params: Params,
    pub couplings: Vec<Coupling>,
    pub chains: Vec<ChainCoefficients>,
    pub space: TruncatedSpace,
    pub prepared: Vec<PreparedBath>,
    pub trajectory: Trajectory,
}

fn initial_system_state(spec: &InitialSystemState, dim: usize, seed: u64) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    match spec {
        InitialSystemState::Basis(k) => v[*k] = C64::new(1.0, 0.0),
        InitialSystemState::Amplitudes(a) => v = a.iter().map(|z| z.value()).collect(),
        InitialSystemState::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for z in v.iter_mut() {
                *z = C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            }
        }
    }
    let n = nmk_core::linalg::norm(&v);
    v.iter_mut().for_each(|z| *z /= n);
    v
}

pub fn pure_density(psi: &[C64]) -> CMat {
    let n = psi.len();
    let mut rho = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            rho.set(i, j, psi[i] * psi[j].conj());
        }
    }
    rho
}
