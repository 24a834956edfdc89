//! Memory kernels, mollifiers and regularized couplings.
//!
//! Fourier convention: a kernel `κ` and its spectral density `μ̂` are related
//! by `κ(t) = (1/2π) ∫ μ̂(ω) e^{-iωt} dω`, so the single delta at the origin
//! has `μ̂ ≡ 1`. A regularized coupling has
//! `v̂_ε(ω) = √μ̂(ω) · ρ̂(εω) · e^{iφ(ω)}` with `ρ̂(0) = 1/√(2π)`, which makes
//! `∫ |v̂_ε|² e^{-iωt} dω → κ(t)` as `ε → 0`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::quad::{self, Rule};
use crate::{Error, Result, C64};

const DENSITY_TOL: f64 = 1e-12;

/// One Lorentzian term `α / ((ω − ω₀)² + γ²)` of a spectral density.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Lorentzian {
    pub alpha: f64,
    pub omega: f64,
    pub gamma: f64,
}

/// A point mass `a·δ(t − τ)` of a delta-train kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Atom {
    pub weight: C64,
    pub tau: f64,
}

/// A chirped term `c·e^{ikt²}` of a complex-Gaussian kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChirpedGaussian {
    pub coefficient: C64,
    pub chirp: f64,
}

/// Spectral density sampled on a uniform grid, linearly interpolated and
/// zero outside `[omega_min, omega_min + step·(len − 1)]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tabulated {
    pub omega_min: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl Tabulated {
    fn omega_max(&self) -> f64 {
        self.omega_min + self.step * (self.values.len() - 1) as f64
    }

    fn eval(&self, w: f64) -> f64 {
        let x = (w - self.omega_min) / self.step;
        let last = (self.values.len() - 1) as f64;
        if !(0.0..=last).contains(&x) {
            return 0.0;
        }
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// Exact inverse transform of the piecewise-linear interpolant.
    fn kappa(&self, t: f64) -> C64 {
        // (e^a − 1 − a)/a², the transform of a half hat.
        fn half_hat(a: C64) -> C64 {
            if a.norm() < 1e-2 {
                let mut term = C64::new(0.5, 0.0);
                let mut sum = term;
                for k in 3..10 {
                    term = term * a / k as f64;
                    sum += term;
                }
                sum
            } else {
                (a.exp() - 1.0 - a) / (a * a)
            }
        }
        let h = self.step;
        let u = C64::new(0.0, -h * t);
        let right = half_hat(u) * h;
        let left = half_hat(-u) * h;
        let n = self.values.len();
        let mut acc = C64::new(0.0, 0.0);
        for (i, &y) in self.values.iter().enumerate() {
            if y == 0.0 {
                continue;
            }
            let w = self.omega_min + h * i as f64;
            let mut shape = C64::new(0.0, 0.0);
            if i + 1 < n {
                shape += right;
            }
            if i > 0 {
                shape += left;
            }
            acc += C64::from_polar(1.0, -w * t) * shape * y;
        }
        acc / (2.0 * PI)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum KernelKind {
    LorentzianSum,
    DeltaTrain,
    ComplexGaussianSum,
    Tabulated,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelShape {
    LorentzianSum(Vec<Lorentzian>),
    DeltaTrain(Vec<Atom>),
    ComplexGaussianSum(Vec<ChirpedGaussian>),
    Tabulated(Tabulated),
}

/// A memory kernel `(μ, φ)`: a Radon measure on the time axis together with a
/// smooth phase `φ(ω)`, stored as polynomial coefficients in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryKernel {
    shape: KernelShape,
    phase: Vec<f64>,
}

impl MemoryKernel {
    pub fn lorentzian_sum(terms: Vec<Lorentzian>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("lorentzian sum needs at least one term"));
        }
        for l in &terms {
            if !(l.alpha > 0.0 && l.gamma > 0.0 && l.omega.is_finite() && l.alpha.is_finite() && l.gamma.is_finite()) {
                return Err(Error::InvalidInput("lorentzian terms need alpha > 0, gamma > 0"));
            }
        }
        Ok(Self::from_shape(KernelShape::LorentzianSum(terms)))
    }

    pub fn delta_train(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("delta train needs at least one atom"));
        }
        if atoms.iter().any(|a| !a.tau.is_finite() || !a.weight.re.is_finite() || !a.weight.im.is_finite()) {
            return Err(Error::InvalidInput("delta train atoms must be finite"));
        }
        if atoms.windows(2).any(|w| w[1].tau <= w[0].tau) {
            return Err(Error::InvalidInput("atom locations must be strictly increasing"));
        }
        Ok(Self::from_shape(KernelShape::DeltaTrain(atoms)))
    }

    /// The Markovian kernel `δ(t)`, with `μ̂ ≡ 1`.
    pub fn delta() -> Self {
        Self::from_shape(KernelShape::DeltaTrain(vec![Atom { weight: C64::new(1.0, 0.0), tau: 0.0 }]))
    }

    pub fn complex_gaussian_sum(terms: Vec<ChirpedGaussian>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("gaussian sum needs at least one term"));
        }
        if terms.iter().any(|g| g.chirp == 0.0 || !g.chirp.is_finite()) {
            return Err(Error::InvalidInput("gaussian chirps must be finite and nonzero"));
        }
        Ok(Self::from_shape(KernelShape::ComplexGaussianSum(terms)))
    }

    pub fn tabulated(omega_min: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(step > 0.0) || !omega_min.is_finite() {
            return Err(Error::InvalidInput("tabulated density needs >= 2 samples and step > 0"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("tabulated samples must be finite and >= 0"));
        }
        Ok(Self::from_shape(KernelShape::Tabulated(Tabulated { omega_min, step, values })))
    }

    fn from_shape(shape: KernelShape) -> Self {
        MemoryKernel { shape, phase: Vec::new() }
    }

    pub fn with_phase(mut self, coefficients: Vec<f64>) -> Self {
        self.phase = coefficients;
        self
    }

    pub fn kind(&self) -> KernelKind {
        match self.shape {
            KernelShape::LorentzianSum(_) => KernelKind::LorentzianSum,
            KernelShape::DeltaTrain(_) => KernelKind::DeltaTrain,
            KernelShape::ComplexGaussianSum(_) => KernelKind::ComplexGaussianSum,
            KernelShape::Tabulated(_) => KernelKind::Tabulated,
        }
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn phase_poly(&self) -> &[f64] {
        &self.phase
    }

    /// `φ(ω)`.
    pub fn phase(&self, w: f64) -> f64 {
        self.phase.iter().rev().fold(0.0, |acc, &c| acc * w + c)
    }

    /// The same kernel with every weight multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        let shape = match &self.shape {
            KernelShape::LorentzianSum(t) => {
                KernelShape::LorentzianSum(t.iter().map(|l| Lorentzian { alpha: l.alpha * s, ..*l }).collect())
            }
            KernelShape::DeltaTrain(a) => {
                KernelShape::DeltaTrain(a.iter().map(|x| Atom { weight: x.weight * s, ..*x }).collect())
            }
            KernelShape::ComplexGaussianSum(g) => KernelShape::ComplexGaussianSum(
                g.iter().map(|x| ChirpedGaussian { coefficient: x.coefficient * s, ..*x }).collect(),
            ),
            KernelShape::Tabulated(t) => {
                KernelShape::Tabulated(Tabulated { values: t.values.iter().map(|v| v * s).collect(), ..t.clone() })
            }
        };
        MemoryKernel { shape, phase: self.phase.clone() }
    }

    /// `μ̂(ω)` without the validity check; complex for general delta trains
    /// and chirped Gaussians.
    pub fn spectral_density_raw(&self, w: f64) -> C64 {
        match &self.shape {
            KernelShape::LorentzianSum(terms) => {
                let s: f64 = terms.iter().map(|l| l.alpha / ((w - l.omega).powi(2) + l.gamma * l.gamma)).sum();
                C64::new(s, 0.0)
            }
            KernelShape::DeltaTrain(atoms) => atoms.iter().map(|a| a.weight * C64::from_polar(1.0, w * a.tau)).sum(),
            KernelShape::ComplexGaussianSum(terms) => terms
                .iter()
                .map(|g| {
                    let k = g.chirp;
                    let amp = (PI / k.abs()).sqrt();
                    g.coefficient * C64::from_polar(amp, k.signum() * PI / 4.0 - w * w / (4.0 * k))
                })
                .sum(),
            KernelShape::Tabulated(t) => C64::new(t.eval(w), 0.0),
        }
    }

    fn density_scale(&self) -> f64 {
        match &self.shape {
            KernelShape::DeltaTrain(atoms) => atoms.iter().map(|a| a.weight.norm()).sum::<f64>().max(1.0),
            KernelShape::ComplexGaussianSum(terms) => {
                terms.iter().map(|g| g.coefficient.norm() * (PI / g.chirp.abs()).sqrt()).sum::<f64>().max(1.0)
            }
            _ => 1.0,
        }
    }

    /// Density of the continuous part, `κ(t)`. Delta trains have none.
    pub fn kappa(&self, t: f64) -> Result<C64> {
        match &self.shape {
            KernelShape::LorentzianSum(terms) => Ok(terms
                .iter()
                .map(|l| C64::from_polar(l.alpha / (2.0 * l.gamma) * (-l.gamma * t.abs()).exp(), -l.omega * t))
                .sum()),
            KernelShape::ComplexGaussianSum(terms) => {
                Ok(terms.iter().map(|g| g.coefficient * C64::from_polar(1.0, g.chirp * t * t)).sum())
            }
            KernelShape::Tabulated(tab) => Ok(tab.kappa(t)),
            KernelShape::DeltaTrain(_) => Err(Error::UnsupportedKernel),
        }
    }

    /// Frequencies where `μ̂` has features worth a quadrature break.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        match &self.shape {
            KernelShape::LorentzianSum(terms) => b.extend(terms.iter().map(|l| l.omega)),
            KernelShape::Tabulated(t) => {
                b.push(t.omega_min);
                b.push(t.omega_max());
            }
            _ => {}
        }
        b
    }
}

/// `μ̂(ω)`, rejecting values that are negative or complex beyond `1e-12`
/// (relative to the kernel's weight scale).
pub fn eval_spectral_density(kernel: &MemoryKernel, w: f64) -> Result<f64> {
    let z = kernel.spectral_density_raw(w);
    let tol = DENSITY_TOL * kernel.density_scale();
    if !z.re.is_finite() || z.im.abs() > tol || z.re < -tol {
        return Err(Error::NonPositiveDensity { omega: w });
    }
    Ok(z.re.max(0.0))
}

/// Total variation of the kernel restricted to `[a, b]`.
pub fn total_variation(kernel: &MemoryKernel, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidInput("total variation needs a < b"));
    }
    if let KernelShape::DeltaTrain(atoms) = &kernel.shape {
        return Ok(atoms.iter().filter(|x| x.tau >= a && x.tau <= b).map(|x| x.weight.norm()).sum());
    }
    let f = |t: f64| kernel.kappa(t).map(|z| z.norm()).unwrap_or(0.0);
    quad::adaptive_split(f, a, b, &[0.0], 1e-11, 1e-10)
}

/// The error functions `(Δ⁰, Δ¹)` of the kernel on `[a, b]` at scale `ε`.
///
/// Lorentzian sums, delta trains and chirped Gaussians use their closed forms.
/// Tabulated densities use the Lipschitz bound `‖κ'‖_∞ ≤ (1/2π)∫|ω|μ̂`.
pub fn error_functions(kernel: &MemoryKernel, a: f64, b: f64, eps: f64) -> Result<(f64, f64)> {
    if !(a < b) || !(eps > 0.0) {
        return Err(Error::InvalidInput("error functions need a < b and epsilon > 0"));
    }
    let half = 0.5 * (b - a);
    if eps >= half {
        return Err(Error::EpsilonTooLarge { epsilon: eps, half_width: half });
    }
    match &kernel.shape {
        KernelShape::LorentzianSum(terms) => {
            let s: f64 = terms.iter().map(|l| l.alpha * l.gamma.hypot(l.omega) / (2.0 * l.gamma)).sum();
            Ok((eps * s, 0.0))
        }
        KernelShape::DeltaTrain(atoms) => {
            let mut d0 = 0.0;
            let mut d1 = 0.0;
            for x in atoms {
                let (y, m) = (x.tau, x.weight.norm());
                if (y >= a - eps && y < a) || (y > b && y <= b + eps) {
                    d0 += m;
                }
                if (y > a && y <= a + eps) || (y > b - eps && y <= b) {
                    d0 += 2.0 * m;
                }
                if y > a + eps && y < b - eps {
                    d1 += m;
                }
                if y == a || y == b {
                    d1 += 0.5 * m;
                }
            }
            Ok((d0, eps * d1))
        }
        KernelShape::ComplexGaussianSum(terms) => {
            let s: f64 = terms.iter().map(|g| (g.coefficient * g.chirp).norm()).sum();
            let reach = ((3.0 * b - a) / 2.0).abs().max(((3.0 * a - b) / 2.0).abs());
            Ok((eps * s * reach, 0.0))
        }
        KernelShape::Tabulated(t) => {
            let m1 = quad::adaptive_split(|w| w.abs() * t.eval(w), t.omega_min, t.omega_max(), &[0.0], 1e-13, 1e-12)?;
            Ok((eps * m1 / (2.0 * PI), 0.0))
        }
    }
}

/// A `C¹` function on `[a, b]` given by value and derivative samples on a
/// uniform grid with an even number of intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    pub a: f64,
    pub b: f64,
    pub values: Vec<C64>,
    pub derivatives: Vec<C64>,
}

impl SampledFunction {
    pub fn from_fn(a: f64, b: f64, intervals: usize, f: impl Fn(f64) -> C64, df: impl Fn(f64) -> C64) -> Self {
        let xs = (0..=intervals).map(|i| a + (b - a) * i as f64 / intervals as f64);
        let values = xs.clone().map(&f).collect();
        let derivatives = xs.map(&df).collect();
        SampledFunction { a, b, values, derivatives }
    }

    fn step(&self) -> f64 {
        (self.b - self.a) / (self.values.len() - 1) as f64
    }

    /// Cubic Hermite interpolation between samples.
    pub fn eval(&self, x: f64) -> C64 {
        let h = self.step();
        let n = self.values.len();
        let s = ((x - self.a) / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let u = s - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivatives[i] * h, self.derivatives[i + 1] * h);
        let h00 = 2.0 * u * u * u - 3.0 * u * u + 1.0;
        let h10 = u * u * u - 2.0 * u * u + u;
        let h01 = -2.0 * u * u * u + 3.0 * u * u;
        let h11 = u * u * u - u * u;
        y0 * h00 + d0 * h10 + y1 * h01 + d1 * h11
    }
}

/// `⟨μ*_{[a,b]}, f⟩`: the continuous part through its cumulative function
/// `φ_c`, atoms at the endpoints with weight ½ and interior atoms with
/// weight 1.
///
/// The `∫ φ_c f'` term is a trapezoid sum with one Richardson step; if the
/// estimated error of the corrected sum exceeds `tol` the call fails with
/// [`Error::GridTooCoarse`].
pub fn apply_mu_star(kernel: &MemoryKernel, f: &SampledFunction, tol: f64) -> Result<C64> {
    let n = f.values.len();
    if n < 3 || !(n - 1).is_multiple_of(2) || f.derivatives.len() != n || !(f.a < f.b) {
        return Err(Error::InvalidInput("sampled function needs an even number (>= 2) of intervals on a < b"));
    }
    let (a, b) = (f.a, f.b);
    if let KernelShape::DeltaTrain(atoms) = &kernel.shape {
        let edge = 1e-12 * (b - a);
        let mut acc = C64::new(0.0, 0.0);
        for x in atoms {
            if (x.tau - a).abs() <= edge {
                acc += x.weight * f.values[0] * 0.5;
            } else if (x.tau - b).abs() <= edge {
                acc += x.weight * f.values[n - 1] * 0.5;
            } else if x.tau > a && x.tau < b {
                acc += x.weight * f.eval(x.tau);
            }
        }
        return Ok(acc);
    }

    let h = f.step();
    let mut phi = vec![C64::new(0.0, 0.0); n];
    for i in 1..n {
        let (lo, hi) = (a + h * (i - 1) as f64, a + h * i as f64);
        let cell = quad::adaptive_split(|t| kernel.kappa(t).unwrap_or_default(), lo, hi, &[0.0], 1e-15, 1e-14)?;
        phi[i] = phi[i - 1] + cell;
    }
    let g: Vec<C64> = phi.iter().zip(&f.derivatives).map(|(p, d)| p * d).collect();
    let trap = |stride: usize| -> C64 {
        let mut s = (g[0] + g[n - 1]) * 0.5;
        let mut i = stride;
        while i < n - 1 {
            s += g[i];
            i += stride;
        }
        s * (h * stride as f64)
    };
    let (fine, coarse) = (trap(1), trap(2));
    let integral = fine + (fine - coarse) / 3.0;
    // With a grid divisible by four the corrected value can be compared with
    // its own half-resolution counterpart; otherwise fall back to the
    // trapezoid estimate, which is larger.
    let estimate = if (n - 1).is_multiple_of(4) {
        let coarser = trap(4);
        let half = coarse + (coarse - coarser) / 3.0;
        (integral - half).norm() / 15.0
    } else {
        (fine - coarse).norm() / 3.0
    };
    if estimate > tol {
        return Err(Error::GridTooCoarse { estimate, tolerance: tol });
    }
    Ok(f.values[n - 1] * phi[n - 1] - f.values[0] * phi[0] - integral)
}

/// Which bump function defines the mollifier `ρ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MollifierFamily {
    /// `ρ(x) ∝ exp(−1/(1−x²))` on `(−1, 1)`.
    StandardBump,
    /// `ρ(x) ∝ exp(−2/(1−x²))`, the square of the standard bump.
    BumpSquared,
}

impl MollifierFamily {
    fn raw(self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let s = match self {
            MollifierFamily::StandardBump => 1.0,
            MollifierFamily::BumpSquared => 2.0,
        };
        (-s / (1.0 - x * x)).exp()
    }
}

/// A symmetric unit-mass mollifier at scale `ε`, with its Fourier transform
/// evaluated by a fixed composite Gauss–Legendre rule on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mollifier {
    family: MollifierFamily,
    epsilon: f64,
    normalization: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Mollifier {
    pub fn new(family: MollifierFamily, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput("mollifier scale must be positive"));
        }
        let rule = Rule::uniform(0.0, 1.0, 48, 24);
        let mut weights: Vec<f64> = rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w * family.raw(x)).collect();
        let z = 2.0 * weights.iter().sum::<f64>();
        weights.iter_mut().for_each(|w| *w /= z);
        Ok(Mollifier { family, epsilon, normalization: z, nodes: rule.nodes, weights })
    }

    pub fn family(&self) -> MollifierFamily {
        self.family
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Same family at another scale.
    pub fn rescaled(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.family, epsilon)
    }

    /// Unit-scale density `ρ(x)`.
    pub fn density(&self, x: f64) -> f64 {
        self.family.raw(x) / self.normalization
    }

    /// `ρ̂(k) = (1/√2π) ∫ ρ(x) e^{-ikx} dx` at unit scale (real by symmetry).
    pub fn fourier_unit(&self, k: f64) -> f64 {
        let s: f64 = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * (k * x).cos()).sum();
        2.0 * s / (2.0 * PI).sqrt()
    }
}

/// `ρ̂(εω)`, the transform of `ρ_ε(x) = ρ(x/ε)/ε`.
pub fn mollifier_fourier(mollifier: &Mollifier, w: f64) -> C64 {
    C64::new(mollifier.fourier_unit(w * mollifier.epsilon), 0.0)
}

/// Uniform frequency grid on `[-omega_max, omega_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrequencyGrid {
    pub omega_max: f64,
    pub points: usize,
}

impl FrequencyGrid {
    pub fn step(&self) -> f64 {
        2.0 * self.omega_max / (self.points - 1) as f64
    }

    pub fn omega(&self, i: usize) -> f64 {
        -self.omega_max + self.step() * i as f64
    }
}

/// A square-integrable coupling `v̂_ε = √μ̂ · ρ̂(εω) · e^{iφ}`, sampled on a
/// grid and evaluable anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedCoupling {
    kernel: MemoryKernel,
    mollifier: Mollifier,
    grid: FrequencyGrid,
    values: Vec<C64>,
    l2_norm: f64,
    sup_omega_vhat: f64,
}

impl RegularizedCoupling {
    pub fn kernel(&self) -> &MemoryKernel {
        &self.kernel
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.mollifier
    }

    pub fn epsilon(&self) -> f64 {
        self.mollifier.epsilon
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// `‖v_ε‖_{L²}` over the whole grid range, by adaptive quadrature.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm
    }

    /// `sup_ω |ω v̂_ε(ω)|`.
    pub fn sup_omega_vhat(&self) -> f64 {
        self.sup_omega_vhat
    }

    /// `v̂_ε(ω)`.
    pub fn amplitude(&self, w: f64) -> C64 {
        let mu = self.kernel.spectral_density_raw(w).re.max(0.0);
        C64::from_polar(mu.sqrt() * self.mollifier.fourier_unit(w * self.mollifier.epsilon), self.kernel.phase(w))
    }

    /// `|v̂_ε(ω)|²`.
    pub fn density(&self, w: f64) -> f64 {
        let mu = self.kernel.spectral_density_raw(w).re.max(0.0);
        mu * self.mollifier.fourier_unit(w * self.mollifier.epsilon).powi(2)
    }

    /// Trapezoid sum of `|v̂_ε|²` over the grid samples.
    pub fn trapezoid_norm_sq(&self) -> f64 {
        let n = self.values.len();
        let inner: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        self.grid.step() * (inner - 0.5 * (self.values[0].norm_sqr() + self.values[n - 1].norm_sqr()))
    }
}

/// Regularizes `kernel` with `mollifier` and samples the result on `grid`.
///
/// Fails with [`Error::TailNotNegligible`] unless `|ρ̂(εω)|²μ̂(ω) < 1e-12` over
/// the outer tenth of the grid on both sides.
pub fn regularize(kernel: &MemoryKernel, mollifier: &Mollifier, grid: FrequencyGrid) -> Result<RegularizedCoupling> {
    if grid.points < 64 || !(grid.omega_max > 0.0) || !grid.omega_max.is_finite() {
        return Err(Error::InvalidInput("frequency grid needs >= 64 points and omega_max > 0"));
    }
    let eps = mollifier.epsilon;
    let om = grid.omega_max;
    let mut worst = 0.0f64;
    for j in 0..=40 {
        let w = om * (0.9 + 0.1 * j as f64 / 40.0);
        for s in [-1.0, 1.0] {
            let tail = eval_spectral_density(kernel, s * w)? * mollifier.fourier_unit(s * w * eps).powi(2);
            worst = worst.max(tail);
        }
    }
    if worst >= 1e-12 {
        return Err(Error::TailNotNegligible { value: worst });
    }

    let mut values = Vec::with_capacity(grid.points);
    for i in 0..grid.points {
        let w = grid.omega(i);
        let mu = eval_spectral_density(kernel, w)?;
        values.push(C64::from_polar(mu.sqrt() * mollifier.fourier_unit(w * eps), kernel.phase(w)));
    }

    let mut coupling = RegularizedCoupling {
        kernel: kernel.clone(),
        mollifier: mollifier.clone(),
        grid,
        values,
        l2_norm: 0.0,
        sup_omega_vhat: 0.0,
    };
    let norm_sq = quad::adaptive_split(|w| coupling.density(w), -om, om, &kernel.breakpoints(), 1e-300, 1e-12)?;
    coupling.l2_norm = norm_sq.sqrt();

    let g = |w: f64| w.abs() * coupling.amplitude(w).norm();
    let (imax, _) = coupling
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| (i, grid.omega(i).abs() * v.norm()))
        .fold((0, -1.0), |best, (i, x)| if x > best.1 { (i, x) } else { best });
    let (mut lo, mut hi) = (grid.omega(imax.saturating_sub(1)), grid.omega((imax + 1).min(grid.points - 1)));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (x1, x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if g(x1) > g(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let grid_max = coupling.values.iter().enumerate().map(|(i, v)| grid.omega(i).abs() * v.norm()).fold(0.0, f64::max);
    coupling.sup_omega_vhat = g(0.5 * (lo + hi)).max(grid_max);
    Ok(coupling)
}
