//! Independent references.
//!
//! The star oracle samples the coupling on a uniform midpoint grid and couples
//! every sample directly to the system; no orthogonal polynomials or adaptive
//! quadrature are involved. The Lindblad oracle integrates the Markovian master
//! equation with classical RK4.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::chain::SpectralWeight;
use crate::dynamics::{evolve_hamiltonian, StepControl, Trajectory};
use crate::fock::{
    enumerate_basis, ladder, system_operator, Hamiltonian, SparseOperator, SystemModel, TimeProfile, TruncatedSpace,
};
use crate::linalg::CMat;
use crate::{Error, Result, C64};

/// Uniform star discretization: `ω_k = -ω_c + (k + ½)Δω`, `g_k = v̂(ω_k)√Δω`.
#[derive(Clone, Debug, PartialEq)]
pub struct StarDiscretization {
    pub omegas: Vec<f64>,
    pub couplings: Vec<C64>,
    pub omega_c: f64,
}

impl StarDiscretization {
    pub fn new<W: SpectralWeight + ?Sized>(weight: &W, omega_c: f64, modes: usize) -> Result<Self> {
        if modes == 0 || !(omega_c > 0.0) {
            return Err(Error::InvalidInput("star needs K >= 1 modes and omega_c > 0"));
        }
        let dw = 2.0 * omega_c / modes as f64;
        let omegas: Vec<f64> = (0..modes).map(|k| -omega_c + (k as f64 + 0.5) * dw).collect();
        let couplings = omegas.iter().map(|&w| weight.amplitude(w) * dw.sqrt()).collect();
        Ok(StarDiscretization { omegas, couplings, omega_c })
    }

    pub fn modes(&self) -> usize {
        self.omegas.len()
    }

    /// `Σ|g_k|²`
    pub fn coupling_norm_sq(&self) -> f64 {
        self.couplings.iter().map(|g| g.norm_sqr()).sum()
    }

    /// `|Σ|g_k|² − ‖v‖²| / ‖v‖²`
    pub fn relative_gap(&self, v_norm: f64) -> f64 {
        (self.coupling_norm_sq() - v_norm * v_norm).abs() / (v_norm * v_norm)
    }
}

/// Truncated space for a star with `K` modes per bath and cap `p`.
pub fn star_space(model: &SystemModel, stars: &[StarDiscretization], cap: usize) -> Result<TruncatedSpace> {
    let k = stars.first().map(|s| s.modes()).ok_or(Error::InvalidInput("no baths"))?;
    if stars.iter().any(|s| s.modes() != k) {
        return Err(Error::ShapeMismatch("all stars need the same mode count"));
    }
    enumerate_basis(model.n, model.d, stars.len(), k, cap)
}

/// `H_S(t) + Σ_{α,k} (g_k L_α a†_{α,k} + g_k* L_α† a_{α,k}) + Σ ω_k a†_{α,k} a_{α,k}`,
/// assembled from sparse products of ladder operators.
pub fn star_hamiltonian(
    model: &SystemModel,
    stars: &[StarDiscretization],
    space: &TruncatedSpace,
) -> Result<Hamiltonian> {
    model.validate()?;
    if stars.len() != space.baths() || stars.iter().any(|s| s.modes() != space.modes()) {
        return Err(Error::ShapeMismatch("star does not match the space"));
    }
    let dim = space.dim();
    let one = C64::new(1.0, 0.0);
    let mut terms: Vec<(C64, SparseOperator)> = Vec::new();
    let mut parts = Vec::new();
    for term in &model.hs_terms {
        let op = system_operator(space, &term.support, &term.matrix)?;
        if term.profile.is_constant() {
            terms.push((one, op));
        } else {
            parts.push((term.profile, op));
        }
    }
    for (alpha, star) in stars.iter().enumerate() {
        let l = match model.jump(alpha) {
            Some(j) => Some(system_operator(space, &j.support, &j.matrix)?),
            None => None,
        };
        for (k, (&w, &g)) in star.omegas.iter().zip(&star.couplings).enumerate() {
            let raise = ladder(space, alpha, k, true)?;
            let lower = ladder(space, alpha, k, false)?;
            terms.push((C64::new(w, 0.0), raise.mul(&lower)?));
            if let Some(l) = &l {
                let up = l.mul(&raise)?;
                terms.push((g.conj(), up.adjoint()));
                terms.push((g, up));
            }
        }
    }
    let refs: Vec<(C64, &SparseOperator)> = terms.iter().map(|(c, o)| (*c, o)).collect();
    let mut stat = SparseOperator::linear_combination(dim, &refs)?;
    stat.mark_hermitian();
    parts.insert(0, (TimeProfile::Constant, stat));
    Hamiltonian::from_parts(dim, parts)
}

/// Propagates `ψ0` (a state on [`star_space`]) under the star Hamiltonian.
pub fn star_evolve(
    model: &SystemModel,
    stars: &[StarDiscretization],
    cap: usize,
    psi0: &[C64],
    times: &[f64],
    control: &StepControl,
) -> Result<Trajectory> {
    let space = star_space(model, stars, cap)?;
    let h = star_hamiltonian(model, stars, &space)?;
    evolve_hamiltonian(&h, &space, psi0, times, control)
}

fn lindblad_rhs(h: &CMat, jumps: &[(f64, CMat, CMat, CMat)], rho: &CMat) -> CMat {
    let i = C64::new(0.0, 1.0);
    let mut out = (&(h * rho) - &(rho * h)).scale(-i);
    for (rate, l, ld, ldl) in jumps {
        let sandwich = &(l * rho) * ld;
        let anti = &(ldl * rho) + &(rho * ldl);
        let d = &sandwich - &anti.scale(C64::new(0.5, 0.0));
        out = &out + &d.scale(C64::new(*rate, 0.0));
    }
    out
}

fn rk4_step(model: &SystemModel, jumps: &[(f64, CMat, CMat, CMat)], t: f64, h: f64, rho: &CMat) -> CMat {
    let c = |x: f64| C64::new(x, 0.0);
    let hs0 = model.system_hamiltonian(t);
    let hs1 = model.system_hamiltonian(t + 0.5 * h);
    let hs2 = model.system_hamiltonian(t + h);
    let k1 = lindblad_rhs(&hs0, jumps, rho);
    let k2 = lindblad_rhs(&hs1, jumps, &(rho + &k1.scale(c(0.5 * h))));
    let k3 = lindblad_rhs(&hs1, jumps, &(rho + &k2.scale(c(0.5 * h))));
    let k4 = lindblad_rhs(&hs2, jumps, &(rho + &k3.scale(c(h))));
    let incr = &(&(&k1 + &k2.scale(c(2.0))) + &k3.scale(c(2.0))) + &k4;
    let next = rho + &incr.scale(c(h / 6.0));
    (&next + &next.adjoint()).scale(c(0.5))
}

/// Integrates `dρ/dt = -i[H_S(t), ρ] + Σ_α Γ_α (L_α ρ L_α† − ½{L_α†L_α, ρ})`
/// and samples `ρ` at `times`, with RK4 step doubling to `tolerance` per
/// unit time.
pub fn lindblad_evolve(
    model: &SystemModel,
    rates: &[f64],
    rho0: &CMat,
    times: &[f64],
    tolerance: f64,
) -> Result<Vec<CMat>> {
    model.validate()?;
    if rho0.dim() != model.sys_dim() {
        return Err(Error::ShapeMismatch("density matrix does not match the system"));
    }
    if rates.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidInput("rates must be non-negative"));
    }
    let mut jumps = Vec::new();
    for (alpha, &rate) in rates.iter().enumerate() {
        if let Some(l) = model.jump_matrix(alpha) {
            let ld = l.adjoint();
            let ldl = &ld * &l;
            jumps.push((rate, l, ld, ldl));
        }
    }
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut h: f64 = 0.05;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(Error::InvalidInput("output times must be ascending"));
        }
        while target - t > 1e-14 * target.max(1.0) {
            let hs = h.min(target - t);
            let coarse = rk4_step(model, &jumps, t, hs, &rho);
            let half = rk4_step(model, &jumps, t, 0.5 * hs, &rho);
            let fine = rk4_step(model, &jumps, t + 0.5 * hs, 0.5 * hs, &half);
            let err = (&coarse - &fine).frobenius() / 15.0;
            if err <= tolerance * hs {
                rho = fine;
                t += hs;
                let grow = if err > 0.0 { 0.9 * (tolerance * hs / err).powf(0.2) } else { 2.0 };
                h = (hs * grow.clamp(1.0, 2.0)).min(0.25);
            } else {
                h = 0.5 * hs;
                if h < 1e-10 {
                    return Err(Error::StepControlFailure { time: t });
                }
            }
        }
        t = target;
        out.push(rho.clone());
    }
    Ok(out)
}
