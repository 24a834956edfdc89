//! Propagation on the truncated space and the error certificates.
//!
//! Time-independent Hamiltonians are propagated with a Lanczos (Krylov)
//! exponential whose step is chosen from its a-posteriori error estimate.
//! Time-dependent ones use the fourth-order commutator-free Magnus scheme with
//! two exponentials per step and step-doubling error control.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::chain::{chain_error_single, ChainCoefficients, SpectralWeight};
use crate::fock::{build_hamiltonian_parts, reduced_density, Hamiltonian, SystemModel, TruncatedSpace};
use crate::kernels::{error_functions, total_variation, KernelShape, MemoryKernel};
use crate::linalg::{hermitian_eigen, norm, symmetric_tridiagonal_eigen, CMat};
use crate::{quad, Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const KRYLOV_MAX: usize = 30;

/// Step control for [`evolve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    /// Local error allowed per unit time.
    pub tolerance: f64,
    /// Largest step tried.
    pub max_step: f64,
    /// Smallest step before giving up.
    pub min_step: f64,
    /// Keep the full state at every output time.
    pub keep_states: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { tolerance: 1e-10, max_step: 0.5, min_step: 1e-9, keep_states: false }
    }
}

/// Output of [`evolve`].
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub rho: Vec<CMat>,
    /// Per output time, per bath: `(μ^(1), μ^(2))`.
    pub moments: Vec<Vec<(f64, f64)>>,
    pub norms: Vec<f64>,
    pub states: Option<Vec<Vec<C64>>>,
}

/// Worst deviations of a trajectory from a valid quantum state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sanity {
    pub norm_drift: f64,
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
    pub hermiticity: f64,
}

impl Sanity {
    pub fn passes(&self, tol: f64) -> bool {
        self.norm_drift < tol && self.trace_drift < tol && self.min_eigenvalue >= -tol && self.hermiticity < tol
    }
}

impl Trajectory {
    pub fn sanity(&self) -> Result<Sanity> {
        let mut s = Sanity { norm_drift: 0.0, trace_drift: 0.0, min_eigenvalue: f64::INFINITY, hermiticity: 0.0 };
        for (rho, nrm) in self.rho.iter().zip(&self.norms) {
            s.norm_drift = s.norm_drift.max((nrm - 1.0).abs());
            s.trace_drift = s.trace_drift.max((rho.trace() - 1.0).norm());
            s.hermiticity = s.hermiticity.max(rho.hermiticity_defect());
            let (vals, _) = hermitian_eigen(rho, false)?;
            s.min_eigenvalue = vals.iter().copied().fold(s.min_eigenvalue, f64::min);
        }
        Ok(s)
    }

    /// Total `μ^(1)` summed over baths at output `k`.
    pub fn total_mu1(&self, k: usize) -> f64 {
        self.moments[k].iter().map(|m| m.0).sum()
    }
}

/// Expectation values `(⟨N̂_α⟩, ⟨N̂_α²⟩)` for every bath.
pub fn measure_moments(space: &TruncatedSpace, psi: &[C64]) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); space.baths()];
    for (i, x) in psi.iter().enumerate() {
        let w = x.norm_sqr();
        if w == 0.0 {
            continue;
        }
        for (a, m) in out.iter_mut().enumerate() {
            let n = space.bath_total(i, a) as f64;
            m.0 += w * n;
            m.1 += w * n * n;
        }
    }
    out
}

/// Lanczos approximation of `exp(-i h A) ψ` with its error estimate. Returns
/// the propagated vector and the largest step `≤ h` that met `tol_rate·step`.
fn krylov_step(
    apply: &dyn Fn(&[C64]) -> Vec<C64>,
    psi: &[C64],
    h: f64,
    tol_rate: f64,
    min_step: f64,
) -> Result<(Vec<C64>, f64)> {
    let beta0 = norm(psi);
    if beta0 == 0.0 {
        return Ok((psi.to_vec(), h));
    }
    let mut basis: Vec<Vec<C64>> = vec![psi.iter().map(|x| x / beta0).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut exact = false;
    let mut residual = 0.0;
    loop {
        let j = basis.len() - 1;
        let mut w = apply(&basis[j]);
        let a = crate::linalg::dot(&basis[j], &w).re;
        alpha.push(a);
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= *vi * a;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= *vi * b;
            }
        }
        for v in &basis {
            let c = crate::linalg::dot(v, &w);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= *vi * c;
            }
        }
        let b = norm(&w);
        let scale = alpha.iter().fold(0.0f64, |m, x| m.max(x.abs())) + beta.iter().fold(0.0f64, |m, x| m.max(*x));
        if b <= 1e-13 * scale.max(1e-300) {
            exact = true;
            break;
        }
        if basis.len() == KRYLOV_MAX || basis.len() == psi.len() {
            residual = b;
            break;
        }
        beta.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
    let m = alpha.len();
    let (vals, vecs) = symmetric_tridiagonal_eigen(&alpha, &beta, true)?;
    let coeffs = |step: f64| -> Vec<C64> {
        (0..m).map(|i| (0..m).map(|k| C64::from_polar(vecs[k] * vecs[i * m + k], -vals[k] * step)).sum()).collect()
    };
    let mut step = h;
    loop {
        let y = coeffs(step);
        let err = if exact || m == psi.len() { 0.0 } else { beta0 * residual * y[m - 1].norm() };
        if err <= tol_rate * step {
            let mut out = vec![ZERO; psi.len()];
            for (yk, v) in y.iter().zip(&basis) {
                let c = yk * beta0;
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += c * vi;
                }
            }
            return Ok((out, step));
        }
        step *= 0.5;
        if step < min_step {
            return Err(Error::StepControlFailure { time: h });
        }
    }
}

/// `exp(-i h A) ψ`, substepping as needed.
pub fn expm_apply(
    apply: &dyn Fn(&[C64]) -> Vec<C64>,
    psi: &[C64],
    h: f64,
    tol_rate: f64,
    min_step: f64,
) -> Result<Vec<C64>> {
    let mut x = psi.to_vec();
    let mut done = 0.0;
    let sign = if h < 0.0 { -1.0 } else { 1.0 };
    let total = h.abs();
    while total - done > 1e-15 * total.max(1.0) {
        let (y, step) = krylov_step(
            &|v: &[C64]| apply(v).into_iter().map(|z| z * sign).collect(),
            &x,
            total - done,
            tol_rate,
            min_step,
        )?;
        x = y;
        done += step;
    }
    Ok(x)
}

const CF4_A1: f64 = (3.0 - 2.0 * 1.732_050_807_568_877_2) / 12.0;
const CF4_A2: f64 = (3.0 + 2.0 * 1.732_050_807_568_877_2) / 12.0;
const CF4_C1: f64 = 0.5 - 1.732_050_807_568_877_2 / 6.0;
const CF4_C2: f64 = 0.5 + 1.732_050_807_568_877_2 / 6.0;

fn cf4_step(h_op: &Hamiltonian, t: f64, h: f64, psi: &[C64], tol_rate: f64, min_step: f64) -> Result<Vec<C64>> {
    let (t1, t2) = (t + CF4_C1 * h, t + CF4_C2 * h);
    let combo = |w1: f64, w2: f64| {
        move |x: &[C64]| {
            let mut y = vec![ZERO; x.len()];
            h_op.apply_add(t1, C64::new(w1, 0.0), x, &mut y);
            h_op.apply_add(t2, C64::new(w2, 0.0), x, &mut y);
            y
        }
    };
    let first = expm_apply(&combo(CF4_A2, CF4_A1), psi, h, tol_rate, min_step)?;
    expm_apply(&combo(CF4_A1, CF4_A2), &first, h, tol_rate, min_step)
}

/// Propagates `ψ0` under `H` and samples the reduced state at `times`
/// (ascending, starting at or after 0).
pub fn evolve_hamiltonian(
    h: &Hamiltonian,
    space: &TruncatedSpace,
    psi0: &[C64],
    times: &[f64],
    control: &StepControl,
) -> Result<Trajectory> {
    if psi0.len() != space.dim() || h.dim() != space.dim() {
        return Err(Error::ShapeMismatch("state and Hamiltonian must live on the space"));
    }
    if (norm(psi0) - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput("initial state must be normalized"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidInput("output times must be ascending and non-negative"));
    }
    let mut traj = Trajectory {
        times: times.to_vec(),
        rho: Vec::with_capacity(times.len()),
        moments: Vec::with_capacity(times.len()),
        norms: Vec::with_capacity(times.len()),
        states: if control.keep_states { Some(Vec::with_capacity(times.len())) } else { None },
    };
    let apply_static = |x: &[C64]| h.apply(0.0, x);
    let mut psi = psi0.to_vec();
    let mut t = 0.0;
    let mut step = control.max_step;
    for &target in times {
        if h.is_time_independent() {
            if target > t {
                psi = expm_apply(&apply_static, &psi, target - t, control.tolerance, control.min_step)?;
            }
            t = target;
        } else {
            while target - t > 1e-14 * target.max(1.0) {
                let hs = step.min(target - t);
                let coarse = cf4_step(h, t, hs, &psi, 0.01 * control.tolerance, control.min_step)?;
                let half = cf4_step(h, t, 0.5 * hs, &psi, 0.01 * control.tolerance, control.min_step)?;
                let fine = cf4_step(h, t + 0.5 * hs, 0.5 * hs, &half, 0.01 * control.tolerance, control.min_step)?;
                let err = crate::linalg::distance(&coarse, &fine) / 15.0;
                if err <= control.tolerance * hs {
                    psi = fine;
                    t += hs;
                    let grow = if err > 0.0 { 0.9 * (control.tolerance * hs / err).powf(0.2) } else { 2.0 };
                    step = (hs * grow.clamp(1.0, 2.0)).min(control.max_step);
                } else {
                    step = 0.5 * hs;
                    if step < control.min_step {
                        return Err(Error::StepControlFailure { time: t });
                    }
                }
            }
            t = target;
        }
        traj.rho.push(reduced_density(space, &psi));
        traj.moments.push(measure_moments(space, &psi));
        traj.norms.push(norm(&psi));
        if let Some(s) = traj.states.as_mut() {
            s.push(psi.clone());
        }
    }
    Ok(traj)
}

/// Builds the chain Hamiltonian and propagates.
pub fn evolve(
    model: &SystemModel,
    chains: &[ChainCoefficients],
    space: &TruncatedSpace,
    psi0: &[C64],
    times: &[f64],
    control: &StepControl,
) -> Result<Trajectory> {
    let h = build_hamiltonian_parts(model, chains, space)?;
    evolve_hamiltonian(&h, space, psi0, times, control)
}

/// `n + 1` equispaced times on `[0, t_final]`.
pub fn time_grid(t_final: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_final * k as f64 / n as f64).collect()
}

/// `M^(0), …, M^(k_max)` from `M^(0) = ‖Φ‖²` and
/// `M^(k) = 2μ^(k) + 2^{2k-3} ℓ² t² (‖Φ‖² + M^(k-1))²`.
///
/// `initial_moments[k - 1]` is `μ^(k)(0)`.
pub fn moment_bound(ell: f64, t: f64, norm_sq: f64, initial_moments: &[f64], k_max: usize) -> Result<Vec<f64>> {
    if !(ell >= 0.0) || !(t >= 0.0) || initial_moments.len() < k_max {
        return Err(Error::InvalidInput("moment bound needs ell, t >= 0 and k_max initial moments"));
    }
    let mut m = vec![norm_sq];
    for k in 1..=k_max {
        let prev = m[k - 1];
        let c = 2f64.powi(2 * k as i32 - 3);
        m.push(2.0 * initial_moments[k - 1] + c * ell * ell * t * t * (norm_sq + prev).powi(2));
    }
    Ok(m)
}

/// Where the particle moments in the truncation certificate come from.
#[derive(Clone, Copy, Debug)]
pub enum MomentSource<'a> {
    /// Moments recorded along a trajectory, integrated by the trapezoid rule.
    Measured(&'a Trajectory),
    /// Closed-form bounds from the initial moments `(μ^(1)(0), μ^(2)(0))` of
    /// every bath.
    APriori(&'a [(f64, f64)]),
}

/// `μ^(1)(t) ≤ (√μ^(1)(0) + ℓt)²`.
pub fn a_priori_mu1(mu1_0: f64, ell: f64, t: f64) -> f64 {
    (mu1_0.sqrt() + ell * t).powi(2)
}

/// Bound on `μ^(2)(t)`: with `R = √μ^(2)(0) + 2ℓ(√μ^(1)(0) t + ℓt²/2)`,
/// `μ^(2)(t)^{1/4} ≤ (1/√2 + √(1/2 + 4R))/2`.
pub fn a_priori_mu2(mu1_0: f64, mu2_0: f64, ell: f64, t: f64) -> f64 {
    let r = mu2_0.sqrt() + 2.0 * ell * (mu1_0.sqrt() * t + 0.5 * ell * t * t);
    let y = (core::f64::consts::FRAC_1_SQRT_2 + (0.5 + 4.0 * r).sqrt()) / 2.0;
    y.powi(4)
}

/// `√(Σ_α μ_α^(1)(t)/p) + ∫_0^t Σ_α ℓ_α √(μ_α^(2)/p · Σ_β μ_β^(1)) ds`, with
/// `ℓ_α = ‖v_α‖‖L_α‖`.
pub fn truncation_certificate(source: MomentSource<'_>, ells: &[f64], p: usize, t: f64) -> Result<f64> {
    if p == 0 {
        return Ok(f64::INFINITY);
    }
    let pf = p as f64;
    let integrand = |mu: &[(f64, f64)]| -> f64 {
        let total: f64 = mu.iter().map(|m| m.0).sum();
        ells.iter().zip(mu).map(|(l, m)| l * (m.1.max(0.0) / pf * total.max(0.0)).sqrt()).sum()
    };
    match source {
        MomentSource::APriori(init) => {
            if init.len() != ells.len() {
                return Err(Error::ShapeMismatch("one initial moment pair per bath"));
            }
            let at = |s: f64| -> Vec<(f64, f64)> {
                init.iter().zip(ells).map(|(m, &l)| (a_priori_mu1(m.0, l, s), a_priori_mu2(m.0, m.1, l, s))).collect()
            };
            let head = (at(t).iter().map(|m| m.0).sum::<f64>() / pf).sqrt();
            if t == 0.0 {
                return Ok(head);
            }
            let tail = quad::adaptive(|s| integrand(&at(s)), 0.0, t, 1e-14, 1e-12, 10_000)?;
            Ok(head + tail)
        }
        MomentSource::Measured(traj) => {
            if traj.moments.iter().any(|m| m.len() != ells.len()) {
                return Err(Error::ShapeMismatch("one coupling per bath"));
            }
            let mut tail = 0.0;
            let mut head = 0.0;
            let mut prev: Option<(f64, f64)> = None;
            for (k, &s) in traj.times.iter().enumerate() {
                let g = integrand(&traj.moments[k]);
                let mu1: f64 = traj.total_mu1(k);
                if s > t {
                    if let Some((s0, g0)) = prev {
                        let frac = (t - s0) / (s - s0);
                        let gt = g0 + frac * (g - g0);
                        tail += 0.5 * (g0 + gt) * (t - s0);
                        let mu_prev = traj.total_mu1(k - 1);
                        head = mu_prev + frac * (mu1 - mu_prev);
                    }
                    return Ok((head / pf).sqrt() + tail);
                }
                if let Some((s0, g0)) = prev {
                    tail += 0.5 * (g0 + g) * (s - s0);
                }
                head = mu1;
                prev = Some((s, g));
            }
            Ok((head / pf).sqrt() + tail)
        }
    }
}

/// Per-bath constants used by the cutoff and chain bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathConstants {
    pub l_norm: f64,
    pub v_norm: f64,
    /// `‖ω v̂(ω)‖_∞`
    pub sup_omega_vhat: f64,
    pub mu1: f64,
}

/// `sqrt((2/√ω_c) Σ_α ‖L_α‖‖ωv̂_α‖_∞ (‖L_α‖‖v_α‖t² + 2μ_α^(1) t))`.
pub fn cutoff_error_bound(baths: &[BathConstants], omega_c: f64, t: f64) -> Result<f64> {
    if !(omega_c > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidInput("cutoff bound needs omega_c > 0 and t >= 0"));
    }
    let s: f64 =
        baths.iter().map(|b| b.l_norm * b.sup_omega_vhat * (b.l_norm * b.v_norm * t * t + 2.0 * b.mu1 * t)).sum();
    Ok((2.0 / omega_c.sqrt() * s).sqrt())
}

/// One bath for [`chain_error_bound`].
pub struct ChainBath<'a> {
    pub l_norm: f64,
    pub chain: &'a ChainCoefficients,
    pub weight: &'a dyn SpectralWeight,
}

/// `2t(1 + 2μ^(1) + 2t²ℓ²)^{1/2} Σ_α ‖L_α‖ sup_s ‖ν_s v_α − τ_s v_α‖`, the
/// supremum taken over 64 equispaced `s ∈ [0, t]` and inflated by 10%.
pub fn chain_error_bound(baths: &[ChainBath<'_>], t: f64, mu1: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let ell: f64 = baths.iter().map(|b| b.l_norm * b.chain.v_norm).sum();
    let mut s = 0.0;
    for b in baths {
        if b.l_norm == 0.0 {
            continue;
        }
        let mut sup = 0.0f64;
        for k in 1..=64 {
            let e = chain_error_single(b.chain, b.weight, t * k as f64 / 64.0)?;
            sup = sup.max((2.0 * e.actual).sqrt());
        }
        s += b.l_norm * 1.1 * sup;
    }
    Ok(2.0 * t * (1.0 + 2.0 * mu1 + 2.0 * t * t * ell * ell).sqrt() * s)
}

/// Occupation data of the initial environment needed by the regularization
/// bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StateConstants {
    Vacuum,
    /// `N_{1,1}` and `N_{1,2}` of the single-photon packet.
    SinglePhoton {
        n11: f64,
        n12: f64,
    },
    /// States without known occupation constants.
    Other,
}

/// One bath for [`regularization_error_bound`].
pub struct RegularizationBath<'a> {
    pub kernel: &'a MemoryKernel,
    pub l_norm: f64,
    /// Bound on `sup_s ‖[H_S(s), L_α]‖`.
    pub commutator: f64,
    pub state: StateConstants,
}

/// `‖(1+ω²)^{-1} μ̂‖₁`.
pub fn weighted_density_norm(kernel: &MemoryKernel) -> Result<f64> {
    match kernel.shape() {
        KernelShape::DeltaTrain(atoms) => Ok(PI * atoms.iter().map(|a| a.weight.norm()).sum::<f64>()),
        _ => {
            let f = |th: f64| kernel.spectral_density_raw(th.tan()).norm();
            let h = 0.5 * PI;
            quad::adaptive(f, -h, h, 1e-12, 1e-10, 100_000)
        }
    }
}

fn state_constants(kernel: &MemoryKernel, state: StateConstants) -> Result<(f64, f64)> {
    match state {
        StateConstants::Vacuum => Ok((0.0, 0.0)),
        StateConstants::SinglePhoton { n11, n12 } => {
            let w = weighted_density_norm(kernel)?.sqrt();
            Ok((n11.sqrt() * w, n12.sqrt() * w))
        }
        StateConstants::Other => Err(Error::UnsupportedInitialState),
    }
}

/// Squared-norm bound `∫_0^t Σ_α (ℰ_α(τ) + 𝒟_α) dτ` on the distance between
/// the distributional model and its ε-regularization.
///
/// `ℰ_α(τ) = 4‖L_α‖² TV_{[-1,τ+1]}(μ_α)` for `τ ≤ 4ε`; beyond that, the
/// smaller of this and `2(2Δ¹(ε)+Δ¹(2ε)) C_α + 2(2Δ⁰(ε)+Δ⁰(2ε)) ‖L_α‖²` with
/// the error functions taken on `[0, τ]` and
/// `C_α = ‖L_α‖ sup‖[H_S, L_α]‖ + 4‖L_α‖² Σ_β ‖L_β‖ c_β
/// + 6‖L_α‖² Σ_β ‖L_β‖² TV_{[-1,t+1]}(μ_β)`. `𝒟_α = 4‖L_α‖ c_{μ_α,ρ} ε`.
pub fn regularization_error_bound(baths: &[RegularizationBath<'_>], epsilon: f64, t: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidInput("regularization bound needs epsilon > 0 and t >= 0"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let consts: Vec<(f64, f64)> = baths.iter().map(|b| state_constants(b.kernel, b.state)).collect::<Result<_>>()?;
    let tv_full: Vec<f64> = baths.iter().map(|b| total_variation(b.kernel, -1.0, t + 1.0)).collect::<Result<_>>()?;
    let cross_c: f64 = baths.iter().zip(&consts).map(|(b, c)| b.l_norm * c.0).sum();
    let cross_tv: f64 = baths.iter().zip(&tv_full).map(|(b, tv)| b.l_norm * b.l_norm * tv).sum();

    let mut total = 0.0;
    for (b, c) in baths.iter().zip(&consts) {
        if b.l_norm == 0.0 {
            continue;
        }
        let l2 = b.l_norm * b.l_norm;
        let big_c = b.l_norm * b.commutator + 4.0 * l2 * cross_c + 6.0 * l2 * cross_tv;
        let part_a = |tau: f64| -> Result<f64> { Ok(4.0 * l2 * total_variation(b.kernel, -1.0, tau + 1.0)?) };
        let part_b = |tau: f64| -> Result<f64> {
            let (d0e, d1e) = error_functions(b.kernel, 0.0, tau, epsilon)?;
            let (d0ee, d1ee) = error_functions(b.kernel, 0.0, tau, 2.0 * epsilon)?;
            Ok(2.0 * (2.0 * d1e + d1ee) * big_c + 2.0 * (2.0 * d0e + d0ee) * l2)
        };
        let integrand = |tau: f64| -> Result<f64> {
            let a = part_a(tau)?;
            if tau <= 4.0 * epsilon {
                Ok(a)
            } else {
                Ok(a.min(part_b(tau)?))
            }
        };
        // Piecewise smooth in τ, with kinks where atoms cross window edges.
        let mut breaks = vec![0.0, (4.0 * epsilon).min(t), t];
        if let KernelShape::DeltaTrain(atoms) = b.kernel.shape() {
            for a in atoms {
                for s in
                    [a.tau - 1.0, a.tau, a.tau + epsilon, a.tau + 2.0 * epsilon, a.tau - epsilon, a.tau - 2.0 * epsilon]
                {
                    if s > 0.0 && s < t {
                        breaks.push(s);
                    }
                }
            }
        }
        breaks.sort_by(|x, y| x.total_cmp(y));
        breaks.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
        let mut err: Option<Error> = None;
        let mut sum = 0.0;
        for w in breaks.windows(2) {
            let rule = quad::Rule::uniform(w[0], w[1], 4, 8);
            sum += rule.integrate(|tau| match integrand(tau) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            });
        }
        if let Some(e) = err {
            return Err(e);
        }
        total += sum + 4.0 * b.l_norm * c.1 * epsilon * t;
    }
    Ok(total)
}

/// `Σ_i sup|f_i| ‖[H_i, L]‖` over the system Hamiltonian terms on `[0, t]`.
pub fn commutator_bound(model: &SystemModel, bath: usize, t: f64) -> f64 {
    let Some(l) = model.jump_matrix(bath) else { return 0.0 };
    model
        .hs_terms
        .iter()
        .map(|term| {
            let mut h = CMat::zeros(model.sys_dim());
            for (r, c, v) in crate::fock::embed_local(model.n, model.d, &term.support, &term.matrix) {
                h.set(r, c, h.get(r, c) + v);
            }
            term.profile.sup_abs(t) * h.commutator(&l).op_norm()
        })
        .sum()
}

/// Parameters a budget was evaluated at.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BudgetPoint {
    pub epsilon: f64,
    pub omega_c: f64,
    pub n_modes: usize,
    pub cap: usize,
    pub t: f64,
}

/// Norm-distance error budget; `total` is the plain sum of the terms.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorBudget {
    pub point: BudgetPoint,
    pub regularization: f64,
    pub cutoff: f64,
    pub chain: f64,
    pub truncation: f64,
    pub initialization: f64,
    pub total: f64,
}

impl ErrorBudget {
    /// `regularization_sq` is the squared-norm bound; the other terms are
    /// norm distances.
    pub fn assemble(
        point: BudgetPoint,
        regularization_sq: f64,
        cutoff: f64,
        chain: f64,
        truncation: f64,
        initialization: f64,
    ) -> Result<Self> {
        let terms = [regularization_sq, cutoff, chain, truncation, initialization];
        if terms.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidInput("budget terms must be non-negative"));
        }
        let regularization = regularization_sq.sqrt();
        Ok(ErrorBudget {
            point,
            regularization,
            cutoff,
            chain,
            truncation,
            initialization,
            total: regularization + cutoff + chain + truncation + initialization,
        })
    }
}
