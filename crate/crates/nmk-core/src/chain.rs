//! Star-to-chain mapping.
//!
//! The coupling weight `|v̂(ω)|²` restricted to `[-ω_c, ω_c]` defines a family
//! of orthonormal polynomials. Their three-term recurrence coefficients are
//! the onsite energies and hoppings of a semi-infinite chain whose first site
//! carries the whole coupling; keeping `N_m` sites is the same as replacing the
//! weight by its `N_m`-point Gauss rule.
//!
//! The recurrence is run as Lanczos on a fine discretization of the weight
//! (composite Gauss–Legendre on Chebyshev-clustered panels), not through raw
//! moments.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::E;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::kernels::RegularizedCoupling;
use crate::linalg::symmetric_tridiagonal_eigen;
use crate::quad::{chebyshev_edges, Rule};
use crate::{Error, Result, C64};

const PANEL_ORDER: usize = 16;
const COEFF_TOL: f64 = 1e-9;

/// A coupling amplitude `v̂(ω)` seen as a weight on the frequency axis.
pub trait SpectralWeight {
    fn amplitude(&self, w: f64) -> C64;

    fn density(&self, w: f64) -> f64 {
        self.amplitude(w).norm_sqr()
    }

    /// Frequencies worth a panel edge.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Largest `ω_c` the weight can be evaluated up to, if limited.
    fn support_limit(&self) -> Option<f64> {
        None
    }
}

impl SpectralWeight for RegularizedCoupling {
    fn amplitude(&self, w: f64) -> C64 {
        RegularizedCoupling::amplitude(self, w)
    }

    fn density(&self, w: f64) -> f64 {
        RegularizedCoupling::density(self, w)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.kernel().breakpoints()
    }

    fn support_limit(&self) -> Option<f64> {
        Some(self.grid().omega_max)
    }
}

/// Constant weight `|v̂|² = level`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatBand {
    pub level: f64,
}

impl SpectralWeight for FlatBand {
    fn amplitude(&self, _w: f64) -> C64 {
        C64::new(self.level.sqrt(), 0.0)
    }
}

/// Gauss rule for the normalized weight `|v̂|²/‖v‖²` on `[-ω_c, ω_c]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Onsite energies `ω_α`, hoppings `t_α`, coupling norm `‖v‖` and cutoff of a
/// chain with `onsite.len()` modes.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainCoefficients {
    pub onsite: Vec<f64>,
    pub hopping: Vec<f64>,
    pub v_norm: f64,
    pub omega_c: f64,
}

impl ChainCoefficients {
    pub fn modes(&self) -> usize {
        self.onsite.len()
    }

    /// Checks lengths and the bounds `|ω_α| ≤ ω_c`, `0 ≤ t_α ≤ ω_c`.
    pub fn validate(&self) -> Result<()> {
        if self.onsite.is_empty() || self.hopping.len() + 1 != self.onsite.len() {
            return Err(Error::ShapeMismatch("chain needs N_m onsite and N_m - 1 hopping terms"));
        }
        if !(self.v_norm >= 0.0) || !(self.omega_c > 0.0) {
            return Err(Error::InvalidInput("chain needs v_norm >= 0 and omega_c > 0"));
        }
        let slack = 1e-12 * self.omega_c;
        if self.onsite.iter().any(|w| w.abs() > self.omega_c + slack)
            || self.hopping.iter().any(|t| *t < 0.0 || *t > self.omega_c + slack)
        {
            return Err(Error::InvalidInput("chain coefficients exceed the cutoff"));
        }
        Ok(())
    }

    /// The first `n` modes of this chain.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.modes()).max(1);
        ChainCoefficients {
            onsite: self.onsite[..n].to_vec(),
            hopping: self.hopping[..n - 1].to_vec(),
            v_norm: self.v_norm,
            omega_c: self.omega_c,
        }
    }
}

/// A discrete measure standing in for `|v̂|² dω` on `[-ω_c, ω_c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedWeight {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscretizedWeight {
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Composite Gauss–Legendre discretization with `panels` Chebyshev-spaced
/// panels.
pub fn discretize<W: SpectralWeight + ?Sized>(weight: &W, omega_c: f64, panels: usize) -> DiscretizedWeight {
    let edges = chebyshev_edges(omega_c, panels.max(1), &weight.breakpoints());
    let rule = Rule::composite(&edges, PANEL_ORDER);
    let weights = rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w * weight.density(x)).collect();
    DiscretizedWeight { nodes: rule.nodes, weights }
}

/// Lanczos on `diag(nodes)` started from `√weights`, with one pass of full
/// reorthogonalization. Returns `(a, b, mass)` with `b.len() == n - 1`.
fn lanczos(measure: &DiscretizedWeight, n: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let points = measure.weights.iter().filter(|&&w| w > 0.0).count();
    if points < n || n == 0 {
        return Err(Error::DegenerateWeight { points, needed: n.max(1) });
    }
    let mass = measure.mass();
    let k = measure.nodes.len();
    let scale = measure.nodes.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    basis.push(measure.weights.iter().map(|w| (w / mass).sqrt()).collect());
    let mut a = Vec::with_capacity(n);
    let mut b: Vec<f64> = Vec::with_capacity(n.saturating_sub(1));
    for j in 0..n {
        let q = &basis[j];
        let mut r: Vec<f64> = q.iter().zip(&measure.nodes).map(|(x, l)| x * l).collect();
        let aj: f64 = q.iter().zip(&r).map(|(x, y)| x * y).sum();
        a.push(aj);
        if j + 1 == n {
            break;
        }
        for i in 0..k {
            r[i] -= aj * q[i];
            if j > 0 {
                r[i] -= b[j - 1] * basis[j - 1][i];
            }
        }
        for prev in &basis {
            let c: f64 = prev.iter().zip(&r).map(|(x, y)| x * y).sum();
            for (ri, pi) in r.iter_mut().zip(prev) {
                *ri -= c * pi;
            }
        }
        let bj = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if bj * bj <= 1e-24 * scale * scale {
            return Err(Error::RecursionBreakdown { index: j + 1 });
        }
        b.push(bj);
        basis.push(r.into_iter().map(|x| x / bj).collect());
    }
    Ok((a, b, mass))
}

/// Recurrence coefficients `(a, b, ‖v‖²)` of the weight on `[-ω_c, ω_c]`,
/// refining the discretization until they move by less than `1e-9·ω_c`.
pub fn jacobi_coefficients<W: SpectralWeight + ?Sized>(
    weight: &W,
    omega_c: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if !(omega_c > 0.0) || !omega_c.is_finite() {
        return Err(Error::InvalidInput("cutoff must be positive"));
    }
    if let Some(limit) = weight.support_limit() {
        if omega_c > limit * (1.0 + 1e-12) {
            return Err(Error::InvalidInput("cutoff exceeds the coupling's frequency grid"));
        }
    }
    let mut panels = (8 * n).max(16);
    let mut prev = lanczos(&discretize(weight, omega_c, panels), n)?;
    for _ in 0..6 {
        panels *= 2;
        let next = lanczos(&discretize(weight, omega_c, panels), n)?;
        let moved =
            prev.0.iter().zip(&next.0).chain(prev.1.iter().zip(&next.1)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        prev = next;
        if moved < COEFF_TOL * omega_c {
            return Ok(prev);
        }
    }
    Err(Error::QuadratureNotConverged { estimate: f64::NAN })
}

/// `N`-point Gauss rule for `|v̂|²/‖v‖²` on `[-ω_c, ω_c]`.
pub fn gauss_quadrature<W: SpectralWeight + ?Sized>(weight: &W, omega_c: f64, n: usize) -> Result<QuadratureRule> {
    let (a, b, _) = jacobi_coefficients(weight, omega_c, n)?;
    let (nodes, vecs) = symmetric_tridiagonal_eigen(&a, &b, true)?;
    let weights = (0..n).map(|j| vecs[j].powi(2)).collect();
    Ok(QuadratureRule { nodes, weights })
}

/// Chain coefficients for `N_m` modes.
pub fn star_to_chain<W: SpectralWeight + ?Sized>(
    weight: &W,
    omega_c: f64,
    n_modes: usize,
) -> Result<ChainCoefficients> {
    let (onsite, hopping, mass) = jacobi_coefficients(weight, omega_c, n_modes)?;
    Ok(ChainCoefficients { onsite, hopping, v_norm: mass.sqrt(), omega_c })
}

/// Values `P_0(ω), …, P_{N-1}(ω)` of the orthonormal polynomials of the
/// normalized weight; mode `j` has amplitude `P_j(ω) v̂(ω)/‖v‖`.
pub fn mode_polynomials(coeffs: &ChainCoefficients, w: f64) -> Vec<f64> {
    let n = coeffs.modes();
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    if n > 1 {
        p[1] = (w - coeffs.onsite[0]) / coeffs.hopping[0];
    }
    for k in 1..n.saturating_sub(1) {
        p[k + 1] = ((w - coeffs.onsite[k]) * p[k] - coeffs.hopping[k - 1] * p[k - 1]) / coeffs.hopping[k];
    }
    p
}

/// `c(t) = e^{-iAt} c0` for the chain's tridiagonal single-particle matrix.
pub fn chain_propagate_single(coeffs: &ChainCoefficients, c0: &[C64], t: f64) -> Result<Vec<C64>> {
    let n = coeffs.modes();
    if c0.len() != n || coeffs.hopping.len() + 1 != n {
        return Err(Error::ShapeMismatch("amplitude vector length must equal N_m"));
    }
    let (vals, vecs) = symmetric_tridiagonal_eigen(&coeffs.onsite, &coeffs.hopping, true)?;
    let mut out = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        let proj: C64 = (0..n).map(|i| c0[i] * vecs[i * n + k]).sum();
        let phase = proj * C64::from_polar(1.0, -vals[k] * t);
        for i in 0..n {
            out[i] += phase * vecs[i * n + k];
        }
    }
    Ok(out)
}

/// Measured `½‖τ_t v − ν_t v‖²` and its a-priori bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainError {
    pub actual: f64,
    pub bound: f64,
}

/// `‖v‖² N_m² (2eω_c t/N_m)^{N_m}`.
pub fn chain_error_single_bound(v_norm: f64, n_modes: usize, omega_c: f64, t: f64) -> f64 {
    let n = n_modes as f64;
    v_norm * v_norm * n * n * (2.0 * E * omega_c * t.abs() / n).powf(n)
}

/// Compares free evolution `v̂ e^{-iωt}` with its chain approximation.
///
/// Uses `½‖τ_t v − ν_t v‖² = ‖v‖² − Re Σ_j c_j(t)* ∫ φ̂_j* v̂ e^{-iωt}`, where
/// `c(t) = ‖v‖ e^{-iAt} e₁` and the overlaps come from a fine quadrature that
/// resolves `e^{-iωt}`.
pub fn chain_error_single<W: SpectralWeight + ?Sized>(
    coeffs: &ChainCoefficients,
    weight: &W,
    t: f64,
) -> Result<ChainError> {
    let n = coeffs.modes();
    let v = coeffs.v_norm;
    let mut c0 = vec![C64::new(0.0, 0.0); n];
    c0[0] = C64::new(v, 0.0);
    let c = chain_propagate_single(coeffs, &c0, t)?;
    let panels = (16 * n).max(32 + 8 * (coeffs.omega_c * t.abs()).ceil() as usize);
    let fine = discretize(weight, coeffs.omega_c, panels);
    let mut overlaps = vec![C64::new(0.0, 0.0); n];
    for (&x, &w) in fine.nodes.iter().zip(&fine.weights) {
        let p = mode_polynomials(coeffs, x);
        let f = C64::from_polar(w / v, -x * t);
        for j in 0..n {
            overlaps[j] += f * p[j];
        }
    }
    let overlap: C64 = c.iter().zip(&overlaps).map(|(cj, ij)| cj.conj() * ij).sum();
    let actual = (fine.mass() - overlap.re).max(0.0);
    Ok(ChainError { actual, bound: chain_error_single_bound(v, n, coeffs.omega_c, t) })
}
