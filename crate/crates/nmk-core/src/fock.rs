//! Truncated system ⊗ chain Hilbert space, sparse operators and the dilated
//! Hamiltonian.
//!
//! Basis order: `index = system_index · env_dim + env_index`. The system index
//! is the base-`d` number whose most significant digit is qudit 0. The
//! environment index is mixed radix over baths (bath 0 most significant), and
//! within a bath the occupation vectors `(n_1, …, n_{N_m})` with `Σ n_j ≤ p`
//! are sorted lexicographically, so the vacuum is always index 0.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::chain::{mode_polynomials, ChainCoefficients, SpectralWeight};
use crate::linalg::CMat;
use crate::quad::{chebyshev_edges, Rule};
use crate::{Error, Result, C64};

pub const DEFAULT_DIMENSION_CAP: usize = 1 << 24;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Scalar envelope multiplying a system Hamiltonian term.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum TimeProfile {
    Constant,
    /// `cos(ω t + φ)`
    Cosine {
        omega: f64,
        phase: f64,
    },
    /// `rate · t`
    Ramp {
        rate: f64,
    },
    /// `exp(-(t - center)² / (2 width²))`
    Gaussian {
        center: f64,
        width: f64,
    },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Cosine { omega, phase } => (omega * t + phase).cos(),
            TimeProfile::Ramp { rate } => rate * t,
            TimeProfile::Gaussian { center, width } => (-(t - center).powi(2) / (2.0 * width * width)).exp(),
        }
    }

    /// `sup |f|` on `[0, t]`.
    pub fn sup_abs(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Ramp { rate } => rate.abs() * t.abs(),
            _ => 1.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeProfile::Constant)
    }
}

/// A term `f(t) · H_i` acting on the listed qudits.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianTerm {
    pub support: Vec<usize>,
    pub matrix: CMat,
    pub profile: TimeProfile,
}

/// A jump operator coupling the listed qudits to bath `bath`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpOperator {
    pub support: Vec<usize>,
    pub matrix: CMat,
    pub bath: usize,
}

/// `n` qudits of dimension `d`, a k-local Hamiltonian and one jump operator
/// per bath.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    pub n: usize,
    pub d: usize,
    pub hs_terms: Vec<HamiltonianTerm>,
    pub jumps: Vec<JumpOperator>,
}

fn check_support(n: usize, d: usize, support: &[usize], matrix: &CMat) -> Result<()> {
    if support.is_empty() || support.iter().any(|&q| q >= n) {
        return Err(Error::InvalidInput("support must list existing qudits"));
    }
    for (i, a) in support.iter().enumerate() {
        if support[i + 1..].contains(a) {
            return Err(Error::InvalidInput("support lists a qudit twice"));
        }
    }
    let expected = d.checked_pow(support.len() as u32).ok_or(Error::InvalidInput("support too large"))?;
    if matrix.dim() != expected {
        return Err(Error::ShapeMismatch("local matrix dimension must be d^|support|"));
    }
    Ok(())
}

impl SystemModel {
    pub fn new(n: usize, d: usize, hs_terms: Vec<HamiltonianTerm>, jumps: Vec<JumpOperator>) -> Result<Self> {
        let model = SystemModel { n, d, hs_terms, jumps };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d < 2 {
            return Err(Error::InvalidInput("need n >= 1 qudits of dimension d >= 2"));
        }
        for term in &self.hs_terms {
            check_support(self.n, self.d, &term.support, &term.matrix)?;
            if term.matrix.hermiticity_defect() > 1e-12 {
                return Err(Error::InvalidInput("Hamiltonian term is not Hermitian"));
            }
        }
        for (i, jump) in self.jumps.iter().enumerate() {
            check_support(self.n, self.d, &jump.support, &jump.matrix)?;
            if self.jumps[..i].iter().any(|j| j.bath == jump.bath) {
                return Err(Error::InvalidInput("each bath takes one jump operator"));
            }
        }
        Ok(())
    }

    /// Checks the k-local normalization `‖H_i‖ ≤ 1`, `‖L_α‖ ≤ 1`, `|support| ≤ k`.
    pub fn check_k_local(&self, k: usize) -> Result<()> {
        let norm_ok = |m: &CMat| m.op_norm() <= 1.0 + 1e-12;
        for t in &self.hs_terms {
            if t.support.len() > k || !norm_ok(&t.matrix) {
                return Err(Error::InvalidInput("Hamiltonian term violates k-local normalization"));
            }
        }
        for j in &self.jumps {
            if j.support.len() > k || !norm_ok(&j.matrix) {
                return Err(Error::InvalidInput("jump operator violates k-local normalization"));
            }
        }
        Ok(())
    }

    pub fn sys_dim(&self) -> usize {
        self.d.pow(self.n as u32)
    }

    /// Number of baths implied by the jump list.
    pub fn baths(&self) -> usize {
        self.jumps.iter().map(|j| j.bath + 1).max().unwrap_or(0)
    }

    pub fn jump(&self, bath: usize) -> Option<&JumpOperator> {
        self.jumps.iter().find(|j| j.bath == bath)
    }

    pub fn is_time_independent(&self) -> bool {
        self.hs_terms.iter().all(|t| t.profile.is_constant())
    }

    /// Dense `H_S(t)` on the full system register.
    pub fn system_hamiltonian(&self, t: f64) -> CMat {
        let dim = self.sys_dim();
        let mut h = CMat::zeros(dim);
        for term in &self.hs_terms {
            let f = term.profile.value(t);
            for (r, c, v) in embed_local(self.n, self.d, &term.support, &term.matrix) {
                h.set(r, c, h.get(r, c) + v * f);
            }
        }
        h
    }

    /// Dense jump operator of `bath` on the full system register.
    pub fn jump_matrix(&self, bath: usize) -> Option<CMat> {
        let jump = self.jump(bath)?;
        let mut l = CMat::zeros(self.sys_dim());
        for (r, c, v) in embed_local(self.n, self.d, &jump.support, &jump.matrix) {
            l.set(r, c, l.get(r, c) + v);
        }
        Some(l)
    }
}

/// Triplets of a local operator acting on `support` within `n` qudits.
pub fn embed_local(n: usize, d: usize, support: &[usize], matrix: &CMat) -> Vec<(usize, usize, C64)> {
    let dim = d.pow(n as u32);
    let k = support.len();
    let strides: Vec<usize> = support.iter().map(|&q| d.pow((n - 1 - q) as u32)).collect();
    let local_dim = matrix.dim();
    let mut out = Vec::new();
    for col in 0..dim {
        let mut lc = 0;
        let mut base = col;
        for s in &strides {
            let digit = (col / s) % d;
            lc = lc * d + digit;
            base -= digit * s;
        }
        for lr in 0..local_dim {
            let v = matrix.get(lr, lc);
            if v == ZERO {
                continue;
            }
            let mut row = base;
            let mut rem = lr;
            for i in (0..k).rev() {
                row += (rem % d) * strides[i];
                rem /= d;
            }
            out.push((row, col, v));
        }
    }
    out
}

/// Sparse matrix in compressed-row layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Assembles from coordinate triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>, hermitian: bool) -> Result<Self> {
        if triplets.iter().any(|&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::ShapeMismatch("triplet index out of range"));
        }
        triplets.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().expect("nonempty") += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != ZERO {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseOperator { dim, row_ptr, cols: keep_cols, vals: keep_vals, hermitian })
    }

    pub fn zero(dim: usize) -> Self {
        SparseOperator { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new(), hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim).collect(),
            vals: vec![C64::new(1.0, 0.0); dim],
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Asserts Hermiticity for an operator assembled from `X + X†` pairs.
    pub fn mark_hermitian(&mut self) {
        self.hermitian = true;
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[a..b].binary_search(&j) {
            Ok(k) => self.vals[a + k],
            Err(_) => ZERO,
        }
    }

    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// `y += s · A x`
    pub fn apply_add(&self, s: C64, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            let mut acc = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi += s * acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim];
        self.apply_add(C64::new(1.0, 0.0), x, &mut y);
        y
    }

    pub fn expectation(&self, x: &[C64]) -> C64 {
        crate::linalg::dot(x, &self.matvec(x))
    }

    pub fn adjoint(&self) -> Self {
        let t = self.entries().map(|(i, j, v)| (j, i, v.conj())).collect();
        Self::from_triplets(self.dim, t, self.hermitian).expect("indices in range")
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out.hermitian = self.hermitian && s.im == 0.0;
        out
    }

    /// `Σ c_i A_i`
    pub fn linear_combination(dim: usize, terms: &[(C64, &SparseOperator)]) -> Result<Self> {
        let mut t = Vec::new();
        for (c, op) in terms {
            if op.dim != dim {
                return Err(Error::ShapeMismatch("operator dimensions differ"));
            }
            t.extend(op.entries().map(|(i, j, v)| (i, j, *c * v)));
        }
        let herm = terms.iter().all(|(c, op)| op.hermitian && c.im == 0.0);
        Self::from_triplets(dim, t, herm)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let one = C64::new(1.0, 0.0);
        Self::linear_combination(self.dim, &[(one, self), (one, other)])
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::linear_combination(self.dim, &[(C64::new(1.0, 0.0), self), (C64::new(-1.0, 0.0), other)])
    }

    /// Sparse product `A B`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::ShapeMismatch("operator dimensions differ"));
        }
        let mut t = Vec::new();
        for i in 0..self.dim {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    t.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.dim, t, false)
    }

    /// Largest Gershgorin radius `max_i Σ_j |A_ij|`, an upper bound on `‖A‖`
    /// for Hermitian `A`.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.dim).map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// `max |A_ij − conj(A_ji)|` over stored entries.
    pub fn hermiticity_defect(&self) -> f64 {
        self.entries().map(|(i, j, v)| (v - self.get(j, i).conj()).norm()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim);
        for (i, j, v) in self.entries() {
            m.set(i, j, v);
        }
        m
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    let mut r: u128 = 1;
    for i in 0..k {
        r = match r.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    r
}

/// Per-bath occupation vectors with at most `cap` particles, in
/// lexicographic order.
fn occupations(modes: usize, cap: usize) -> Vec<Vec<u8>> {
    fn rec(prefix: &mut Vec<u8>, modes: usize, left: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == modes {
            out.push(prefix.clone());
            return;
        }
        for k in 0..=left {
            prefix.push(k as u8);
            rec(prefix, modes, left - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(modes), modes, cap, &mut out);
    out
}

/// Labels of one basis state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisLabel {
    /// Qudit digits, qudit 0 first.
    pub system: Vec<usize>,
    /// Occupation vector of every bath.
    pub baths: Vec<Vec<u8>>,
}

/// The space `C^{d^n} ⊗ (Π_{≤p} F(C^{N_m}))^{⊗M}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSpace {
    n: usize,
    d: usize,
    baths: usize,
    modes: usize,
    cap: usize,
    sys_dim: usize,
    env_dim: usize,
    occ: Vec<Vec<u8>>,
    totals: Vec<usize>,
}

impl TruncatedSpace {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn baths(&self) -> usize {
        self.baths
    }
    pub fn modes(&self) -> usize {
        self.modes
    }
    pub fn cap(&self) -> usize {
        self.cap
    }
    pub fn sys_dim(&self) -> usize {
        self.sys_dim
    }
    pub fn bath_dim(&self) -> usize {
        self.occ.len()
    }
    pub fn env_dim(&self) -> usize {
        self.env_dim
    }
    pub fn dim(&self) -> usize {
        self.sys_dim * self.env_dim
    }

    /// Occupation vectors of a single bath, in basis order.
    pub fn bath_states(&self) -> &[Vec<u8>] {
        &self.occ
    }

    pub fn bath_state_index(&self, occupation: &[u8]) -> Option<usize> {
        self.occ.binary_search_by(|o| o.as_slice().cmp(occupation)).ok()
    }

    fn stride(&self, bath: usize) -> usize {
        self.bath_dim().pow((self.baths - 1 - bath) as u32)
    }

    /// Index of bath `bath`'s occupation vector inside the full index.
    pub fn bath_digit(&self, index: usize, bath: usize) -> usize {
        (index % self.env_dim / self.stride(bath)) % self.bath_dim()
    }

    /// Particle number of bath `bath` in basis state `index`.
    pub fn bath_total(&self, index: usize, bath: usize) -> usize {
        self.totals[self.bath_digit(index, bath)]
    }

    pub fn index(&self, label: &BasisLabel) -> Option<usize> {
        if label.system.len() != self.n || label.baths.len() != self.baths {
            return None;
        }
        let mut sys = 0;
        for &digit in &label.system {
            if digit >= self.d {
                return None;
            }
            sys = sys * self.d + digit;
        }
        let mut env = 0;
        for o in &label.baths {
            env = env * self.bath_dim() + self.bath_state_index(o)?;
        }
        Some(sys * self.env_dim + env)
    }

    pub fn label(&self, index: usize) -> BasisLabel {
        let (mut sys, mut env) = (index / self.env_dim, index % self.env_dim);
        let mut system = vec![0; self.n];
        for q in (0..self.n).rev() {
            system[q] = sys % self.d;
            sys /= self.d;
        }
        let mut baths = vec![Vec::new(); self.baths];
        for a in (0..self.baths).rev() {
            baths[a] = self.occ[env % self.bath_dim()].clone();
            env /= self.bath_dim();
        }
        BasisLabel { system, baths }
    }

    /// Triplets `(from, to, value)` of a single-bath operator, on bath-local
    /// indices.
    fn bath_ladder(&self, mode: usize, raise: bool) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (b, o) in self.occ.iter().enumerate() {
            let mut target = o.clone();
            let value = if raise {
                if self.totals[b] >= self.cap {
                    continue;
                }
                target[mode] += 1;
                (target[mode] as f64).sqrt()
            } else {
                if o[mode] == 0 {
                    continue;
                }
                target[mode] -= 1;
                (o[mode] as f64).sqrt()
            };
            let to = self.bath_state_index(&target).expect("target within cap");
            out.push((b, to, value));
        }
        out
    }

    /// Lifts bath-local triplets `(from, to, v)` on bath `bath` to full-space
    /// triplets `(row, col, v)`.
    /// `total` is either the full dimension or `env_dim` for an
    /// environment-only operator.
    fn lift_bath(&self, bath: usize, local: &[(usize, usize, C64)], total: usize) -> Vec<(usize, usize, C64)> {
        let stride = self.stride(bath);
        let bd = self.bath_dim();
        let blocks = total / (stride * bd);
        let mut out = Vec::with_capacity(local.len() * blocks * stride);
        for block in 0..blocks {
            for inner in 0..stride {
                let base = block * stride * bd + inner;
                for &(from, to, v) in local {
                    out.push((base + to * stride, base + from * stride, v));
                }
            }
        }
        out
    }
}

/// Enumerates the truncated space with the default dimension cap.
pub fn enumerate_basis(n: usize, d: usize, baths: usize, modes: usize, cap: usize) -> Result<TruncatedSpace> {
    enumerate_basis_with_cap(n, d, baths, modes, cap, DEFAULT_DIMENSION_CAP)
}

pub fn enumerate_basis_with_cap(
    n: usize,
    d: usize,
    baths: usize,
    modes: usize,
    cap: usize,
    max_dim: usize,
) -> Result<TruncatedSpace> {
    if n == 0 || d == 0 || baths == 0 || modes == 0 {
        return Err(Error::InvalidInput("n, d, M and N_m must be at least 1"));
    }
    if cap > u8::MAX as usize {
        return Err(Error::InvalidInput("particle cap above 255"));
    }
    let bath_dim = binomial((modes + cap) as u128, cap as u128);
    let mut dim = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    for _ in 0..baths {
        dim = dim.saturating_mul(bath_dim);
    }
    if dim > max_dim as u128 {
        return Err(Error::DimensionOverflow { dimension: dim, cap: max_dim });
    }
    let occ = occupations(modes, cap);
    debug_assert_eq!(occ.len() as u128, bath_dim);
    let totals = occ.iter().map(|o| o.iter().map(|&x| x as usize).sum()).collect();
    let sys_dim = d.pow(n as u32);
    Ok(TruncatedSpace { n, d, baths, modes, cap, sys_dim, env_dim: (bath_dim as usize).pow(baths as u32), occ, totals })
}

/// Annihilation (`raise = false`) or creation operator of mode `mode` in bath
/// `bath`, with creation out of the cap mapped to zero.
pub fn ladder(space: &TruncatedSpace, bath: usize, mode: usize, raise: bool) -> Result<SparseOperator> {
    if bath >= space.baths || mode >= space.modes {
        return Err(Error::InvalidInput("bath or mode index out of range"));
    }
    let local: Vec<_> = space.bath_ladder(mode, raise).into_iter().map(|(f, t, v)| (f, t, C64::new(v, 0.0))).collect();
    SparseOperator::from_triplets(space.dim(), space.lift_bath(bath, &local, space.dim()), false)
}

/// `O ⊗ id_env` for a local system operator.
pub fn system_operator(space: &TruncatedSpace, support: &[usize], matrix: &CMat) -> Result<SparseOperator> {
    check_support(space.n, space.d, support, matrix)?;
    let e = space.env_dim;
    let mut t = Vec::new();
    for (r, c, v) in embed_local(space.n, space.d, support, matrix) {
        for k in 0..e {
            t.push((r * e + k, c * e + k, v));
        }
    }
    SparseOperator::from_triplets(space.dim(), t, matrix.hermiticity_defect() <= 1e-12)
}

/// Sparse dilated Hamiltonian kept as `Σ_i f_i(t) H_i`.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    parts: Vec<(TimeProfile, SparseOperator)>,
    dim: usize,
}

impl Hamiltonian {
    pub fn from_parts(dim: usize, parts: Vec<(TimeProfile, SparseOperator)>) -> Result<Self> {
        if parts.iter().any(|(_, op)| op.dim() != dim) {
            return Err(Error::ShapeMismatch("Hamiltonian part dimension"));
        }
        Ok(Hamiltonian { parts, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parts(&self) -> &[(TimeProfile, SparseOperator)] {
        &self.parts
    }

    pub fn is_time_independent(&self) -> bool {
        self.parts.iter().all(|(f, _)| f.is_constant())
    }

    /// `y += s · H(t) x`
    pub fn apply_add(&self, t: f64, s: C64, x: &[C64], y: &mut [C64]) {
        for (f, op) in &self.parts {
            let c = f.value(t);
            if c != 0.0 {
                op.apply_add(s * c, x, y);
            }
        }
    }

    pub fn apply(&self, t: f64, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim];
        self.apply_add(t, C64::new(1.0, 0.0), x, &mut y);
        y
    }

    /// `H(t)` assembled into one operator.
    pub fn at(&self, t: f64) -> SparseOperator {
        let terms: Vec<(C64, &SparseOperator)> =
            self.parts.iter().map(|(f, op)| (C64::new(f.value(t), 0.0), op)).collect();
        let mut op = SparseOperator::linear_combination(self.dim, &terms).expect("dimensions checked");
        op.mark_hermitian();
        op
    }
}

/// Builds `H_S(t) + Σ_α ‖v_α‖(L_α a†_{α,1} + h.c.) + Σ ω_{α,j} n_{α,j}
/// + Σ t_{α,j}(a_{α,j} a†_{α,j+1} + h.c.)` restricted to the space.
pub fn build_hamiltonian_parts(
    model: &SystemModel,
    chains: &[ChainCoefficients],
    space: &TruncatedSpace,
) -> Result<Hamiltonian> {
    model.validate()?;
    if space.n != model.n || space.d != model.d {
        return Err(Error::ShapeMismatch("space does not match the system register"));
    }
    if chains.len() != space.baths || model.baths() > space.baths {
        return Err(Error::ShapeMismatch("one chain per bath is required"));
    }
    if chains.iter().any(|c| c.modes() != space.modes || c.hopping.len() + 1 != c.modes()) {
        return Err(Error::ShapeMismatch("chain length must equal N_m"));
    }
    let dim = space.dim();
    let e = space.env_dim;
    let mut static_t: Vec<(usize, usize, C64)> = Vec::new();
    let mut parts = Vec::new();

    for term in &model.hs_terms {
        let mut t = Vec::new();
        for (r, c, v) in embed_local(model.n, model.d, &term.support, &term.matrix) {
            for k in 0..e {
                t.push((r * e + k, c * e + k, v));
            }
        }
        if term.profile.is_constant() {
            static_t.extend(t);
        } else {
            parts.push((term.profile, SparseOperator::from_triplets(dim, t, true)?));
        }
    }

    for (alpha, chain) in chains.iter().enumerate() {
        let mut local: Vec<(usize, usize, C64)> = Vec::new();
        for (b, o) in space.occ.iter().enumerate() {
            let diag: f64 = o.iter().zip(&chain.onsite).map(|(&n, w)| n as f64 * w).sum();
            if diag != 0.0 {
                local.push((b, b, C64::new(diag, 0.0)));
            }
        }
        // t_j a_j a†_{j+1} moves a particle from mode j+1 to mode j.
        for (j, &hop) in chain.hopping.iter().enumerate() {
            for (b, o) in space.occ.iter().enumerate() {
                if o[j + 1] == 0 {
                    continue;
                }
                let mut target = o.clone();
                target[j + 1] -= 1;
                target[j] += 1;
                let v = hop * ((o[j + 1] as f64) * (target[j] as f64)).sqrt();
                let to = space.bath_state_index(&target).expect("particle number conserved");
                local.push((b, to, C64::new(v, 0.0)));
                local.push((to, b, C64::new(v, 0.0)));
            }
        }
        static_t.extend(space.lift_bath(alpha, &local, dim));

        if let Some(jump) = model.jump(alpha) {
            let raise: Vec<(usize, usize, C64)> = space
                .bath_ladder(0, true)
                .into_iter()
                .map(|(f, t, v)| (f, t, C64::new(v * chain.v_norm, 0.0)))
                .collect();
            let env_raise = space.lift_bath(alpha, &raise, e);
            for (sr, sc, l) in embed_local(model.n, model.d, &jump.support, &jump.matrix) {
                for &(er, ec, a) in &env_raise {
                    let v = l * a;
                    static_t.push((sr * e + er, sc * e + ec, v));
                    static_t.push((sc * e + ec, sr * e + er, v.conj()));
                }
            }
        }
    }
    parts.insert(0, (TimeProfile::Constant, SparseOperator::from_triplets(dim, static_t, true)?));
    Hamiltonian::from_parts(dim, parts)
}

/// `H(t)` as a single sparse operator.
pub fn build_hamiltonian(
    model: &SystemModel,
    chains: &[ChainCoefficients],
    space: &TruncatedSpace,
    t: f64,
) -> Result<SparseOperator> {
    Ok(build_hamiltonian_parts(model, chains, space)?.at(t))
}

/// Norm estimate `‖H_S‖ + 2√(p+1)Σ‖L_α‖‖v_α‖ + pMN_mω_c + 2ω_c(p+1)M(N_m−1)`,
/// with `ω_c` the largest cutoff among the chains.
pub fn hamiltonian_norm_estimate(
    model: &SystemModel,
    chains: &[ChainCoefficients],
    space: &TruncatedSpace,
    t: f64,
) -> f64 {
    let hs = model.system_hamiltonian(t).op_norm();
    let p = space.cap as f64;
    let m = space.baths as f64;
    let nm = space.modes as f64;
    let wc = chains.iter().map(|c| c.omega_c).fold(0.0, f64::max);
    let coupling: f64 =
        chains.iter().enumerate().map(|(a, c)| model.jump_matrix(a).map_or(0.0, |l| l.op_norm()) * c.v_norm).sum();
    hs + 2.0 * (p + 1.0).sqrt() * coupling + p * m * nm * wc + 2.0 * wc * (p + 1.0) * m * (nm - 1.0)
}

/// Zeroes every amplitude in which some bath holds more than `q` particles.
pub fn project_particle_sector(space: &TruncatedSpace, state: &[C64], q: usize) -> Vec<C64> {
    state
        .iter()
        .enumerate()
        .map(|(i, &v)| if (0..space.baths).all(|a| space.bath_total(i, a) <= q) { v } else { ZERO })
        .collect()
}

/// Reduced system density matrix `Tr_env |ψ⟩⟨ψ|`.
pub fn reduced_density(space: &TruncatedSpace, psi: &[C64]) -> CMat {
    let (s, e) = (space.sys_dim, space.env_dim);
    let mut rho = CMat::zeros(s);
    for i in 0..s {
        for j in i..s {
            let v: C64 = (0..e).map(|k| psi[i * e + k] * psi[j * e + k].conj()).sum();
            rho.set(i, j, v);
            rho.set(j, i, v.conj());
        }
    }
    rho
}

/// Embeds a state of a smaller-cap space into a larger one with the same
/// register, baths and modes.
pub fn embed_state(from: &TruncatedSpace, to: &TruncatedSpace, psi: &[C64]) -> Result<Vec<C64>> {
    if from.n != to.n || from.d != to.d || from.baths != to.baths || from.modes != to.modes || from.cap > to.cap {
        return Err(Error::ShapeMismatch("spaces are not nested"));
    }
    let mut out = vec![ZERO; to.dim()];
    for (i, &v) in psi.iter().enumerate() {
        let j = to.index(&from.label(i)).expect("nested spaces");
        out[j] = v;
    }
    Ok(out)
}

/// Frequency-domain Gaussian photon `ξ(ω) ∝ exp(-(ω-ω0)²/(4σ²) + iωt0)`,
/// normalized so `∫|ξ|² = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianPacket {
    pub omega0: f64,
    pub sigma: f64,
    pub t0: f64,
}

impl GaussianPacket {
    pub fn amplitude(&self, w: f64) -> C64 {
        let norm = (2.0 * core::f64::consts::PI * self.sigma * self.sigma).powf(-0.25);
        let g = (-(w - self.omega0).powi(2) / (4.0 * self.sigma * self.sigma)).exp();
        C64::from_polar(norm * g, w * self.t0)
    }

    /// `N_{1,k} = ∫ (1+ω²)^k |ξ|²` for `k = 1, 2`.
    pub fn occupation_constants(&self) -> (f64, f64) {
        let (m, s2) = (self.omega0, self.sigma * self.sigma);
        let w2 = m * m + s2;
        let w4 = m.powi(4) + 6.0 * m * m * s2 + 3.0 * s2 * s2;
        (1.0 + w2, 1.0 + 2.0 * w2 + w4)
    }
}

/// Initial state of one bath.
#[derive(Clone, Debug, PartialEq)]
pub enum BathState {
    Vacuum,
    /// One photon `Σ_j b_j a†_j |0⟩`, with the occupation constants
    /// `(N_{1,1}, N_{1,2})` of the frequency-domain packet if known.
    SinglePhoton {
        amplitudes: Vec<C64>,
        constants: Option<(f64, f64)>,
    },
    /// Coherent displacement in the chain-mode basis, truncated to the cap.
    Coherent {
        displacement: Vec<C64>,
    },
}

/// A bath state expressed on the truncated space, with the error made by
/// projecting and renormalizing it.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedBath {
    pub vector: Vec<C64>,
    pub initialization_error: f64,
    pub moments: (f64, f64),
}

/// Projects a wavepacket onto the chain modes `φ̂_j = P_j v̂/‖v‖` and returns
/// the amplitudes `b_j = ∫ φ̂_j* ξ` over `[-ω_c, ω_c]`.
pub fn project_wavepacket<W: SpectralWeight + ?Sized>(
    coeffs: &ChainCoefficients,
    weight: &W,
    packet: &GaussianPacket,
) -> Vec<C64> {
    let n = coeffs.modes();
    let panels = (16 * n).max(64);
    let mut breaks = weight.breakpoints();
    breaks.push(packet.omega0);
    let rule = Rule::composite(&chebyshev_edges(coeffs.omega_c, panels, &breaks), 16);
    let mut b = vec![ZERO; n];
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let p = mode_polynomials(coeffs, x);
        let f = weight.amplitude(x).conj() * packet.amplitude(x) * (w / coeffs.v_norm);
        for j in 0..n {
            b[j] += f * p[j];
        }
    }
    b
}

impl BathState {
    pub fn single_photon_from_packet<W: SpectralWeight + ?Sized>(
        coeffs: &ChainCoefficients,
        weight: &W,
        packet: &GaussianPacket,
    ) -> Self {
        BathState::SinglePhoton {
            amplitudes: project_wavepacket(coeffs, weight, packet),
            constants: Some(packet.occupation_constants()),
        }
    }

    /// Vector on one bath's truncated Fock space.
    pub fn prepare(&self, space: &TruncatedSpace) -> Result<PreparedBath> {
        let mut v = vec![ZERO; space.bath_dim()];
        match self {
            BathState::Vacuum => {
                v[0] = C64::new(1.0, 0.0);
                Ok(PreparedBath { vector: v, initialization_error: 0.0, moments: (0.0, 0.0) })
            }
            BathState::SinglePhoton { amplitudes, .. } => {
                if amplitudes.len() != space.modes {
                    return Err(Error::ShapeMismatch("photon amplitudes must have N_m entries"));
                }
                if space.cap == 0 {
                    return Err(Error::InvalidInput("a photon needs p >= 1"));
                }
                let norm = crate::linalg::norm(amplitudes);
                if !(norm > 0.0) {
                    return Err(Error::InvalidInput("photon has no weight on the chain modes"));
                }
                for (j, &b) in amplitudes.iter().enumerate() {
                    let mut o = vec![0u8; space.modes];
                    o[j] = 1;
                    v[space.bath_state_index(&o).expect("single photon in cap")] = b / norm;
                }
                let err = (2.0 - 2.0 * norm.min(1.0)).max(0.0).sqrt();
                Ok(PreparedBath { vector: v, initialization_error: err, moments: (1.0, 1.0) })
            }
            BathState::Coherent { displacement } => {
                if displacement.len() != space.modes {
                    return Err(Error::ShapeMismatch("displacement must have N_m entries"));
                }
                let b2: f64 = displacement.iter().map(|x| x.norm_sqr()).sum();
                for (idx, o) in space.occ.iter().enumerate() {
                    let mut amp = C64::new((-0.5 * b2).exp(), 0.0);
                    for (&n, &beta) in o.iter().zip(displacement) {
                        let fact: f64 = (1..=n as u32).map(f64::from).product();
                        amp *= beta.powu(n as u32) / fact.sqrt();
                    }
                    v[idx] = amp;
                }
                let kept = crate::linalg::norm(&v);
                v.iter_mut().for_each(|x| *x /= kept);
                let (mut m1, mut m2) = (0.0, 0.0);
                for (x, &k) in v.iter().zip(&space.totals) {
                    m1 += x.norm_sqr() * k as f64;
                    m2 += x.norm_sqr() * (k * k) as f64;
                }
                let err = (2.0 - 2.0 * kept.min(1.0)).max(0.0).sqrt();
                Ok(PreparedBath { vector: v, initialization_error: err, moments: (m1, m2) })
            }
        }
    }
}

/// Initial environment: one [`BathState`] per bath.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialEnvState {
    pub baths: Vec<BathState>,
}

impl InitialEnvState {
    pub fn vacuum(baths: usize) -> Self {
        InitialEnvState { baths: vec![BathState::Vacuum; baths] }
    }
}

/// Product state `ψ_S ⊗ (⊗_α bath_α)` with per-bath preparation data.
pub fn product_state(
    space: &TruncatedSpace,
    system: &[C64],
    env: &InitialEnvState,
) -> Result<(Vec<C64>, Vec<PreparedBath>)> {
    if system.len() != space.sys_dim || env.baths.len() != space.baths {
        return Err(Error::ShapeMismatch("initial state does not match the space"));
    }
    let prepared: Vec<PreparedBath> = env.baths.iter().map(|b| b.prepare(space)).collect::<Result<_>>()?;
    let mut env_vec = vec![C64::new(1.0, 0.0)];
    for p in &prepared {
        let mut next = Vec::with_capacity(env_vec.len() * p.vector.len());
        for &a in &env_vec {
            next.extend(p.vector.iter().map(|&b| a * b));
        }
        env_vec = next;
    }
    let snorm = crate::linalg::norm(system);
    if (snorm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput("system state must be normalized"));
    }
    let mut psi = Vec::with_capacity(space.dim());
    for &s in system {
        psi.extend(env_vec.iter().map(|&x| s * x));
    }
    Ok((psi, prepared))
}
