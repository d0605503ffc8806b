//! Rate, exponent and stability-region computations.
//!
//! Rates are bits per channel use and exponents `β` are per channel use; a
//! plant step of `n` channel uses needs `n·β`. All logarithms are base 2.

use nalgebra::{DMatrix, DVector};
use nalgebra::Complex;
use thiserror::Error;

use crate::channel::{bhattacharyya, capacity, ChannelKind, ChannelSpec};

const SEARCH_TOL: f64 = 1e-10;
const ENTROPY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThresholdError {
    #[error("{name} = {value} is outside its domain")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("plant is not observable from its output")]
    Unobservable,
    #[error("invalid plant: {0}")]
    InvalidPlant(String),
}

fn out_of_range(name: &'static str, value: f64) -> ThresholdError {
    ThresholdError::OutOfRange { name, value }
}

/// Binary entropy `H(x)` with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64, ThresholdError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(out_of_range("x", x));
    }
    Ok(xlog(x) + xlog(1.0 - x))
}

/// `−x log2 x` with the `0 log 0 = 0` convention.
fn xlog(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.log2()
    }
}

/// The root of `H(x) = y` in `[0, 1/2]`, by bisection.
pub fn inv_binary_entropy(y: f64) -> Result<f64, ThresholdError> {
    if !(0.0..=1.0).contains(&y) {
        return Err(out_of_range("y", y));
    }
    if y == 1.0 {
        return Ok(0.5);
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    while hi - lo > ENTROPY_TOL {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid)? < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `D(Bernoulli(x) ‖ Bernoulli(y))` in bits.
pub fn kl_bernoulli(x: f64, y: f64) -> Result<f64, ThresholdError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(out_of_range("x", x));
    }
    if !(0.0..=1.0).contains(&y) || (y == 0.0 && x > 0.0) || (y == 1.0 && x < 1.0) {
        return Err(out_of_range("y", y));
    }
    let term = |p: f64, q: f64| if p == 0.0 { 0.0 } else { p * (p / q).log2() };
    Ok(term(x, y) + term(1.0 - x, 1.0 - y))
}

/// Endpoints of the open distance-parameter ranges guaranteed for the
/// Toeplitz ensemble with Bernoulli(`p`) entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceThresholds {
    /// Supremum of admissible `α`.
    pub alpha_sup: f64,
    /// Infimum of admissible `θ`.
    pub theta_inf: f64,
}

/// `α < H⁻¹(1 − R log(1/(1−p̄)))` and `θ > −log((1−p̄)^{−(1−R)} − 1)` with
/// `p̄ = min(p, 1−p)`.
pub fn toeplitz_distance_thresholds(rate: f64, p: f64) -> Result<DistanceThresholds, ThresholdError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(out_of_range("R", rate));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(out_of_range("p", p));
    }
    let pbar = p.min(1.0 - p);
    let arg = 1.0 - rate * (1.0 / (1.0 - pbar)).log2();
    if arg <= 0.0 {
        return Err(ThresholdError::Infeasible(format!(
            "R log2(1/(1-p)) = {} >= 1",
            1.0 - arg
        )));
    }
    Ok(DistanceThresholds {
        alpha_sup: inv_binary_entropy(arg)?,
        theta_inf: -((1.0 - pbar).powf(-(1.0 - rate)) - 1.0).log2(),
    })
}

/// Largest rate for which the erasure-channel thresholds hold: `1 − log(1+ζ)`.
pub fn max_rate(zeta: f64) -> Result<f64, ThresholdError> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(out_of_range("zeta", zeta));
    }
    Ok(1.0 - (1.0 + zeta).log2())
}

/// Supremum of the guaranteed exponent `H⁻¹(1−R)(log(1/ζ) + log(2^{1−R} − 1))`.
pub fn bec_exponent_bound(rate: f64, zeta: f64) -> Result<f64, ThresholdError> {
    let r_sup = max_rate(zeta)?;
    if !(rate > 0.0 && rate < r_sup) {
        return Err(ThresholdError::Infeasible(format!(
            "rate {rate} not below {r_sup}"
        )));
    }
    let h = inv_binary_entropy(1.0 - rate)?;
    Ok(h * ((1.0 / zeta).log2() + (2f64.powf(1.0 - rate) - 1.0).log2()))
}

/// Gallager's `E_o(ρ)` with the uniform input distribution.
pub fn gallager_e0(spec: &ChannelSpec, rho: f64) -> f64 {
    let e = spec.epsilon();
    match spec.kind() {
        ChannelKind::Bec => -(2f64.powf(-rho) * (1.0 - e) + e).log2(),
        ChannelKind::Bsc => {
            let s = 1.0 / (1.0 + rho);
            rho - (1.0 + rho) * ((1.0 - e).powf(s) + e.powf(s)).log2()
        }
    }
}

/// The random coding exponent at one rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent {
    pub value: f64,
    /// Maximizing `ρ`.
    pub rho: f64,
    /// Set when the rate is at or above capacity and the exponent is zero.
    pub above_capacity: bool,
}

/// `E_r(R) = max_{0≤ρ≤1} E_o(ρ) − ρR`.
pub fn random_coding_exponent(spec: &ChannelSpec, rate: f64) -> Exponent {
    if rate >= capacity(spec) {
        return Exponent {
            value: 0.0,
            rho: 0.0,
            above_capacity: true,
        };
    }
    let f = |rho: f64| gallager_e0(spec, rho) - rho * rate;
    let (rho, value) = golden_max(f, 0.0, 1.0);
    Exponent {
        value,
        rho,
        above_capacity: false,
    }
}

/// Maximizes a concave function on `[lo, hi]`; the endpoints are compared
/// explicitly so boundary maxima are exact.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > SEARCH_TOL {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (a + b);
    [(mid, f(mid)), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .fold((mid, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
}

/// Root of an increasing function's sign change on `[lo, hi]`.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > SEARCH_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Rate below which the improved exponent uses the distance branch:
/// `1 − H(ζ/(1+ζ))`.
pub fn improved_breakpoint(spec: &ChannelSpec) -> f64 {
    let z = bhattacharyya(spec);
    1.0 - binary_entropy(z / (1.0 + z)).expect("in range")
}

/// `E_ζ(R) = H⁻¹(1−R) log(1/ζ)` up to the breakpoint, `E_r(R)` above it.
/// Noiseless channels give an infinite exponent below capacity.
pub fn improved_exponent(spec: &ChannelSpec, rate: f64) -> f64 {
    if rate >= capacity(spec) {
        return 0.0;
    }
    let z = bhattacharyya(spec);
    if z == 0.0 {
        return f64::INFINITY;
    }
    if rate <= improved_breakpoint(spec) {
        inv_binary_entropy(1.0 - rate.max(0.0)).expect("in range") * (1.0 / z).log2()
    } else {
        random_coding_exponent(spec, rate).value
    }
}

/// A rate/exponent requirement (or guarantee) for an anytime code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnytimeBudget {
    /// Bits per channel use.
    pub rate: f64,
    /// Exponent per channel use.
    pub beta: f64,
    pub d_o: usize,
    /// Prefactor `η` of the reliability bound, when known.
    pub eta: Option<f64>,
}

impl AnytimeBudget {
    pub fn new(rate: f64, beta: f64) -> Self {
        Self {
            rate,
            beta,
            d_o: 1,
            eta: None,
        }
    }
}

/// Set-membership filter families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Hypercuboid,
    Ellipsoid,
}

/// A linear plant `x' = Fx + Gu + w`, `y = Hx + v` together with its observer
/// canonical form.
///
/// The canonical state is `z = T x`. In canonical coordinates each block of
/// `F` is a companion matrix whose first column is `−a_{i,1..ℓ_i}`, and the
/// measured coordinates are the first state of each block. `W` and `V` are
/// full widths of the noise boxes: `‖w‖∞ < W/2`, `‖v‖∞ < V/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalPlant {
    pub blocks: Vec<Vec<f64>>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Control law `u = K x̂` in the original coordinates.
    pub gain: DMatrix<f64>,
    pub w: f64,
    pub v: f64,
    pub transform: DMatrix<f64>,
}

/// The companion block with first column `−a` and ones on the superdiagonal.
pub fn companion(a: &[f64]) -> DMatrix<f64> {
    let m = a.len();
    DMatrix::from_fn(m, m, |i, j| {
        if j == 0 {
            -a[i]
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    })
}

impl CanonicalPlant {
    /// A scalar-output plant already in canonical form, with `G = I`, no gain
    /// and no noise.
    pub fn from_coefficients(a: &[f64]) -> Self {
        let m = a.len();
        let mut h = DMatrix::zeros(1, m);
        h[(0, 0)] = 1.0;
        Self {
            blocks: vec![a.to_vec()],
            f: companion(a),
            g: DMatrix::identity(m, m),
            h,
            gain: DMatrix::zeros(m, m),
            w: 0.0,
            v: 0.0,
            transform: DMatrix::identity(m, m),
        }
    }

    /// Canonicalizes a single-output plant through its observability matrix.
    pub fn from_physical(
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        h: DMatrix<f64>,
        gain: DMatrix<f64>,
        w: f64,
        v: f64,
    ) -> Result<Self, ThresholdError> {
        let m = f.nrows();
        if f.ncols() != m || g.nrows() != m || h.nrows() != 1 || h.ncols() != m {
            return Err(ThresholdError::InvalidPlant("dimension mismatch".into()));
        }
        if gain.nrows() != g.ncols() || gain.ncols() != m {
            return Err(ThresholdError::InvalidPlant("gain has the wrong shape".into()));
        }
        let poly = characteristic_polynomial(&f);
        let a: Vec<f64> = poly[1..].to_vec();
        let fc = companion(&a);
        let mut hc = DMatrix::zeros(1, m);
        hc[(0, 0)] = 1.0;
        let obs = observability(&f, &h);
        let obs_c = observability(&fc, &hc);
        let inv = obs_c.try_inverse().ok_or(ThresholdError::Unobservable)?;
        let transform = inv * obs;
        if transform.clone().try_inverse().is_none() {
            return Err(ThresholdError::Unobservable);
        }
        Ok(Self {
            blocks: vec![a],
            f,
            g,
            h,
            gain,
            w,
            v,
            transform,
        })
    }

    /// A plant given directly in block-canonical form.
    pub fn block_canonical(
        blocks: Vec<Vec<f64>>,
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        gain: DMatrix<f64>,
        w: f64,
        v: f64,
    ) -> Result<Self, ThresholdError> {
        let m: usize = blocks.iter().map(Vec::len).sum();
        if blocks.iter().any(Vec::is_empty) || f.shape() != (m, m) || g.nrows() != m {
            return Err(ThresholdError::InvalidPlant("dimension mismatch".into()));
        }
        if gain.nrows() != g.ncols() || gain.ncols() != m {
            return Err(ThresholdError::InvalidPlant("gain has the wrong shape".into()));
        }
        let mut start = 0;
        for a in &blocks {
            let l = a.len();
            if f.view((start, start), (l, l)) != companion(a) {
                return Err(ThresholdError::InvalidPlant(
                    "diagonal block is not the companion matrix of its coefficients".into(),
                ));
            }
            start += l;
        }
        let heads = block_heads(&blocks);
        let h = DMatrix::from_fn(heads.len(), m, |i, j| (heads[i] == j) as u8 as f64);
        Ok(Self {
            blocks,
            f,
            g,
            h,
            gain,
            w,
            v,
            transform: DMatrix::identity(m, m),
        })
    }

    pub fn with_gain(mut self, gain: DMatrix<f64>) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_noise(mut self, w: f64, v: f64) -> Self {
        self.w = w;
        self.v = v;
        self
    }

    pub fn m_x(&self) -> usize {
        self.f.nrows()
    }

    /// Canonical state indices that are measured (first state of each block).
    pub fn measured_coords(&self) -> Vec<usize> {
        block_heads(&self.blocks)
    }

    /// `F` in canonical coordinates.
    pub fn canonical_f(&self) -> DMatrix<f64> {
        if self.blocks.len() == 1 {
            companion(&self.blocks[0])
        } else {
            self.f.clone()
        }
    }

    pub fn canonical_g(&self) -> DMatrix<f64> {
        &self.transform * &self.g
    }

    /// Full widths of the box that contains `T w`.
    pub fn canonical_noise_widths(&self) -> DVector<f64> {
        let m = self.m_x();
        DVector::from_fn(m, |i, _| {
            (0..m).map(|j| self.transform[(i, j)].abs()).sum::<f64>() * self.w
        })
    }

    /// Maps a canonical state back to the original coordinates.
    pub fn to_physical(&self, z: &DVector<f64>) -> DVector<f64> {
        self.transform
            .clone()
            .lu()
            .solve(z)
            .expect("transform is invertible")
    }

    pub fn to_canonical(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.transform * x
    }

    /// Spectral radius of the closed loop `F + GK`.
    pub fn closed_loop_radius(&self) -> Result<f64, ThresholdError> {
        spectral_radius(&(&self.f + &self.g * &self.gain))
    }
}

fn block_heads(blocks: &[Vec<f64>]) -> Vec<usize> {
    blocks
        .iter()
        .scan(0, |start, a| {
            let head = *start;
            *start += a.len();
            Some(head)
        })
        .collect()
}

fn observability(f: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let m = f.nrows();
    let mut rows = Vec::with_capacity(m);
    let mut r = h.clone();
    for _ in 0..m {
        rows.push(r.clone());
        r = &r * f;
    }
    DMatrix::from_fn(m, m, |i, j| rows[i][(0, j)])
}

/// Monic characteristic polynomial `[1, c_1, …, c_m]` of `λ^m + c_1 λ^{m−1} + …`
/// by the Faddeev–LeVerrier recursion.
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = vec![1.0];
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        acc = m * &acc + DMatrix::identity(n, n) * coeffs[k - 1];
        let c = -(m * &acc).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// Monic polynomial `[1, c_1, …, c_m]` with the given real roots.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut p = vec![1.0];
    for &r in roots {
        let mut next = p.clone();
        next.push(0.0);
        for (i, &c) in p.iter().enumerate() {
            next[i + 1] -= r * c;
        }
        p = next;
    }
    p
}

/// Eigenvalues from a real Schur decomposition.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, ThresholdError> {
    if !m.is_square() {
        return Err(ThresholdError::InvalidPlant("matrix is not square".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 10_000)
        .ok_or(ThresholdError::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Roots of the monic polynomial `[1, c_1, …, c_m]`.
pub fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex<f64>>, ThresholdError> {
    eigenvalues(&companion(&coeffs[1..]))
}

pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64, ThresholdError> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Entrywise absolute value `M̄`.
pub fn abs_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(f64::abs)
}

/// `(ρ(M), ρ(M̄))`, checking `ρ(M) ≤ ρ(M̄)`.
pub fn check_sluis(m: &DMatrix<f64>) -> Result<(f64, f64), ThresholdError> {
    let r = spectral_radius(m)?;
    let rbar = spectral_radius(&abs_matrix(m))?;
    assert!(
        r <= rbar * (1.0 + 1e-8) + 1e-12,
        "spectral radius {r} exceeds that of the absolute matrix {rbar}"
    );
    Ok((r, rbar))
}

/// Sufficient rate and exponent per channel use for stabilizing `plant` with
/// the given filter at `n` channel uses per step.
pub fn sufficient_budget(
    plant: &CanonicalPlant,
    filter: FilterKind,
    n: usize,
) -> Result<AnytimeBudget, ThresholdError> {
    let f = plant.canonical_f();
    let m = plant.m_x();
    let (rho, rho_bar) = check_sluis(&f)?;
    let nf = n as f64;
    let scalar = plant.blocks.len() == 1;
    match filter {
        FilterKind::Hypercuboid => {
            let terms = plant
                .blocks
                .iter()
                .map(|a| a.iter().map(|x| x.abs()).sum::<f64>().log2());
            let bits: f64 = if scalar {
                terms.sum()
            } else {
                terms.map(|t| t.max(0.0)).sum()
            };
            Ok(AnytimeBudget::new(bits / nf, 2.0 * rho_bar.log2() / nf))
        }
        FilterKind::Ellipsoid => {
            if m < 2 {
                return Err(ThresholdError::Unsupported(
                    "the ellipsoidal filter needs a state dimension of at least 2".into(),
                ));
            }
            let theta = (m as f64 / (m as f64 - 1.0)).sqrt();
            let terms = plant.blocks.iter().map(|a| {
                let s: f64 = a
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x.abs() * theta.powi(i as i32))
                    .sum();
                ((m as f64).sqrt() * s).log2()
            });
            let bits: f64 = if scalar {
                terms.sum()
            } else {
                terms.map(|t| t.max(0.0)).sum()
            };
            Ok(AnytimeBudget::new(bits / nf, 2.0 * rho.log2() / nf))
        }
    }
}

/// Budget of the plant with eigenvalues `μ_i^n` sampled once every `n`
/// steps, and the limit as `n → ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitingCase {
    pub rate_n: f64,
    pub beta_n: f64,
    pub rate_star: f64,
    pub beta_star: f64,
}

pub fn limiting_case(mu: &[f64], n: usize) -> Result<LimitingCase, ThresholdError> {
    if mu.is_empty() || mu.iter().any(|&m| m == 0.0 || !m.is_finite()) {
        return Err(ThresholdError::InvalidPlant("eigenvalues must be nonzero".into()));
    }
    let powered: Vec<f64> = mu.iter().map(|m| m.powi(n as i32)).collect();
    let poly = poly_from_roots(&powered);
    let plant = CanonicalPlant::from_coefficients(&poly[1..]);
    let budget = sufficient_budget(&plant, FilterKind::Hypercuboid, n)?;
    let rate_star = mu.iter().filter(|m| m.abs() > 1.0).map(|m| m.abs().log2()).sum();
    let beta_star = 2.0 * mu.iter().map(|m| m.abs()).fold(0.0, f64::max).log2();
    Ok(LimitingCase {
        rate_n: budget.rate,
        beta_n: budget.beta,
        rate_star,
        beta_star,
    })
}

/// Fujiwara's bound on the root magnitudes of `z^m + c_1 z^{m−1} + … + c_m`:
/// `2 max{|c_1|, |c_2|^{1/2}, …, |c_{m−1}|^{1/(m−1)}, |c_m/2|^{1/m}}`.
pub fn fujiwara_bound(coeffs: &[f64]) -> f64 {
    let m = coeffs.len();
    if m == 0 {
        return 0.0;
    }
    let k = coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let c = if i + 1 == m { c / 2.0 } else { c };
            c.abs().powf(1.0 / (i + 1) as f64)
        })
        .fold(0.0, f64::max)
        * 2.0;
    if let Ok(roots) = poly_roots(&[&[1.0], coeffs].concat()) {
        let top = roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(top <= k * (1.0 + 1e-9) + 1e-12, "root {top} above bound {k}");
    }
    k
}

/// Largest `|μ|` of a scalar plant that is moment-stabilizable over `spec`:
/// `log2|μ| = sup_{R<C} min{R, E_ζ(R)/η}`.
pub fn scalar_stabilizable_mu(spec: &ChannelSpec, eta: f64) -> Result<f64, ThresholdError> {
    if eta < 1.0 {
        return Err(out_of_range("eta", eta));
    }
    let c = capacity(spec);
    let log_mu = bisect(|r| r - improved_exponent(spec, r) / eta, 0.0, c);
    Ok(2f64.powf(log_mu))
}

/// Whether a plant with eigenvalues `mu` lies in the stabilizable region:
/// some `R < C` has `Σ_{|μ|>1} log|μ_i| < R` and `η log max|μ_i| < E_ζ(R)`.
pub fn region_check(mu: &[f64], spec: &ChannelSpec, eta: f64) -> Result<bool, ThresholdError> {
    if eta < 1.0 {
        return Err(out_of_range("eta", eta));
    }
    let sum: f64 = mu.iter().filter(|m| m.abs() > 1.0).map(|m| m.abs().log2()).sum();
    let top = mu.iter().map(|m| m.abs()).fold(0.0, f64::max).log2().max(0.0);
    if sum >= capacity(spec) {
        return Ok(false);
    }
    // E_ζ is nonincreasing, so the smallest admissible rate is the best one.
    Ok(eta * top < improved_exponent(spec, sum))
}

/// `(ε, |μ_max|)` pairs over a grid of channel parameters.
pub fn region_sweep(
    kind: ChannelKind,
    eta: f64,
    epsilons: &[f64],
) -> Result<Vec<(f64, f64)>, ThresholdError> {
    epsilons
        .iter()
        .map(|&e| {
            let spec = ChannelSpec::new(kind, e, 1).map_err(|_| out_of_range("epsilon", e))?;
            Ok((e, scalar_stabilizable_mu(&spec, eta)?))
        })
        .collect()
}

#[cfg(test)]
mod test {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bec(e: f64) -> ChannelSpec {
        ChannelSpec::bec(e).unwrap()
    }

    fn bsc(e: f64) -> ChannelSpec {
        ChannelSpec::bsc(e).unwrap()
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(inv_binary_entropy(1.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(inv_binary_entropy(0.0).unwrap(), 0.0, epsilon = 1e-12);
        // Reference values from a 40-digit evaluation.
        assert_abs_diff_eq!(inv_binary_entropy(0.7793).unwrap(), 0.230740540536509, epsilon = 1e-11);
        assert!(binary_entropy(1.5).is_err());
        assert!(inv_binary_entropy(-0.1).is_err());
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_bernoulli(0.3, 0.3).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_bernoulli(0.0, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_bernoulli(0.3, 0.5).unwrap(), 0.118709100769307, epsilon = 1e-12);
        assert!(kl_bernoulli(0.3, 0.0).is_err());
        assert_eq!(kl_bernoulli(0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn distance_thresholds() {
        let t = toeplitz_distance_thresholds(0.5, 0.5).unwrap();
        assert_abs_diff_eq!(t.alpha_sup, 0.110027864438360, epsilon = 1e-10);
        assert_abs_diff_eq!(t.theta_inf, 1.271553303163612, epsilon = 1e-12);
        // At p = 1/2 the threshold equals log(1/(2^{1−R} − 1)).
        let star = (1.0 / (2f64.powf(0.5) - 1.0)).log2();
        assert_abs_diff_eq!(t.theta_inf, star, epsilon = 1e-12);
        assert!(toeplitz_distance_thresholds(1.0 - 1e-9, 0.5).unwrap().alpha_sup < 1e-9);
        assert!(toeplitz_distance_thresholds(1.0, 0.5).is_err());
        assert_eq!(
            toeplitz_distance_thresholds(0.3, 0.2).unwrap(),
            toeplitz_distance_thresholds(0.3, 0.8).unwrap()
        );
    }

    #[test]
    fn erasure_corollary() {
        assert_abs_diff_eq!(max_rate(0.3).unwrap(), 0.621488376746270, epsilon = 1e-12);
        assert!(max_rate(1e-12).unwrap() > 1.0 - 1e-11);
        assert_abs_diff_eq!(
            bec_exponent_bound(1.0 / 3.0, 0.3).unwrap(),
            0.168626493526414,
            epsilon = 1e-10
        );
        assert!(bec_exponent_bound(0.7, 0.3).is_err());
    }

    #[test]
    fn random_coding_exponent_values() {
        let ch = bec(0.3);
        let e = random_coding_exponent(&ch, 7.0 / 15.0);
        assert_abs_diff_eq!(15.0 * e.value, 2.322325651194053, epsilon = 1e-8);
        assert_abs_diff_eq!(e.rho, 1.0);
        let e = random_coding_exponent(&ch, 0.6);
        assert_abs_diff_eq!(e.value, 0.032579546909669, epsilon = 1e-10);
        assert_abs_diff_eq!(e.rho, 0.637429920615292, epsilon = 1e-5);
        let e = random_coding_exponent(&bsc(0.05), 0.5);
        assert_abs_diff_eq!(e.value, 0.041390974036925, epsilon = 1e-10);
        let e = random_coding_exponent(&ch, 0.7);
        assert!(e.above_capacity && e.value == 0.0);
    }

    #[test]
    fn exponent_endpoints() {
        for ch in [bec(0.3), bec(0.1), bsc(0.05), bsc(0.2)] {
            assert_abs_diff_eq!(random_coding_exponent(&ch, 0.0).value, gallager_e0(&ch, 1.0), epsilon = 1e-12);
            let c = capacity(&ch);
            assert!(random_coding_exponent(&ch, c - 1e-9).value < 1e-6);
        }
    }

    #[test]
    fn improved_exponent_values() {
        let ch = bec(0.3);
        assert_abs_diff_eq!(improved_exponent(&ch, 0.0), 0.5 * (1.0f64 / 0.3).log2(), epsilon = 1e-11);
        assert_abs_diff_eq!(15.0 * improved_exponent(&ch, 1.0 / 3.0), 4.322325651194053, epsilon = 1e-8);
        for ch in [bec(0.3), bec(0.15), bsc(0.05)] {
            let rb = improved_breakpoint(&ch);
            let z = bhattacharyya(&ch);
            let left = inv_binary_entropy(1.0 - rb).unwrap() * (1.0 / z).log2();
            let right = random_coding_exponent(&ch, rb).value;
            assert!((left - right).abs() < 1e-6, "{left} vs {right}");
        }
    }

    #[test]
    fn cart_stick_polynomial() {
        let f = DMatrix::from_row_slice(3, 3, &[1.161, 0.105, 0.0, 3.3, 1.161, 0.002, -3.265, -0.160, 0.979]);
        let p = characteristic_polynomial(&f);
        assert_abs_diff_eq!(p[1], -3.3, epsilon = 1e-2);
        assert_abs_diff_eq!(p[2], 3.27, epsilon = 1e-2);
        assert_abs_diff_eq!(p[3], -0.98, epsilon = 1e-2);
        let mut mags: Vec<f64> = eigenvalues(&f).unwrap().iter().map(|z| z.re).collect();
        mags.sort_by(f64::total_cmp);
        for (got, want) in mags.iter().zip([0.57, 0.98, 1.75]) {
            assert_abs_diff_eq!(*got, want, epsilon = 0.01);
        }
        assert!(fujiwara_bound(&[-3.3, 3.27, -0.98]) >= 1.75);
    }

    #[test]
    fn spectral_radius_of_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -3.0, 2.0]));
        assert_abs_diff_eq!(spectral_radius(&d).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn example_two_budget() {
        let plant = CanonicalPlant::from_coefficients(&[-2.0, -0.25, 0.5]);
        let b = sufficient_budget(&plant, FilterKind::Hypercuboid, 15).unwrap();
        assert_abs_diff_eq!(15.0 * b.beta, 2.0 * 2.215f64.log2(), epsilon = 0.01);
        assert_abs_diff_eq!(15.0 * b.rate, 2.75f64.log2(), epsilon = 1e-12);
        let e = sufficient_budget(&plant, FilterKind::Ellipsoid, 15).unwrap();
        assert_abs_diff_eq!(15.0 * e.beta, 2.0, epsilon = 1e-9);
        let one = CanonicalPlant::from_coefficients(&[-2.0]);
        assert!(sufficient_budget(&one, FilterKind::Ellipsoid, 1).is_err());
    }

    #[test]
    fn single_block_matches_scalar_rate() {
        let a = vec![-2.0, -0.25, 0.5];
        let scalar = CanonicalPlant::from_coefficients(&a);
        let f = companion(&a);
        let vector = CanonicalPlant::block_canonical(
            vec![a],
            f,
            DMatrix::identity(3, 3),
            DMatrix::zeros(3, 3),
            0.0,
            0.0,
        )
        .unwrap();
        for kind in [FilterKind::Hypercuboid, FilterKind::Ellipsoid] {
            assert_eq!(
                sufficient_budget(&scalar, kind, 15).unwrap(),
                sufficient_budget(&vector, kind, 15).unwrap()
            );
        }
    }

    #[test]
    fn vector_rate_clips_stable_blocks() {
        let blocks = vec![vec![-3.0], vec![-0.2, 0.1]];
        let mut f = DMatrix::zeros(3, 3);
        f.view_mut((0, 0), (1, 1)).copy_from(&companion(&blocks[0]));
        f.view_mut((1, 1), (2, 2)).copy_from(&companion(&blocks[1]));
        f[(1, 0)] = 0.5;
        let p = CanonicalPlant::block_canonical(blocks, f, DMatrix::identity(3, 3), DMatrix::zeros(3, 3), 1.0, 1.0)
            .unwrap();
        let b = sufficient_budget(&p, FilterKind::Hypercuboid, 1).unwrap();
        assert_abs_diff_eq!(b.rate, 3f64.log2(), epsilon = 1e-12);
        assert_eq!(p.measured_coords(), vec![0, 1]);
        assert!(CanonicalPlant::block_canonical(
            vec![vec![1.0]],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            0.0,
            0.0
        )
        .is_err());
    }

    #[test]
    fn limiting_case_values() {
        let l = limiting_case(&[2.0, 0.5], 1).unwrap();
        assert_eq!((l.rate_star, l.beta_star), (1.0, 2.0));
        assert_abs_diff_eq!(l.rate_n, 3.5f64.log2(), epsilon = 1e-12);
        let l = limiting_case(&[2.0, 1.5], 3).unwrap();
        assert_abs_diff_eq!(l.rate_star, 3f64.log2(), epsilon = 1e-12);
        assert_eq!(l.beta_star, 2.0);
    }

    #[test]
    fn fujiwara_degree_one() {
        assert_abs_diff_eq!(fujiwara_bound(&[-3.0]), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn poly_roots_round_trip() {
        let p = poly_from_roots(&[1.0, -2.0, 3.0]);
        assert_eq!(p, vec![1.0, -2.0, -5.0, 6.0]);
        let mut r: Vec<f64> = poly_roots(&p).unwrap().iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([-2.0, 1.0, 3.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn scalar_region_grid_oracle() {
        let ch = bec(0.3);
        let got = scalar_stabilizable_mu(&ch, 2.0).unwrap().log2();
        let c = capacity(&ch);
        let grid = (0..200_000)
            .map(|i| c * i as f64 / 200_000.0)
            .map(|r| r.min(improved_exponent(&ch, r) / 2.0))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(got, grid, epsilon = 1e-4);
    }

    #[test]
    fn scalar_region_limits_and_ordering() {
        let free = scalar_stabilizable_mu(&bec(0.0), 2.0).unwrap();
        assert_abs_diff_eq!(free.log2(), 1.0, epsilon = 1e-8);
        assert!(scalar_stabilizable_mu(&bec(0.1), 2.0).unwrap() > scalar_stabilizable_mu(&bec(0.2), 2.0).unwrap());
        assert!(scalar_stabilizable_mu(&bec(0.2), 0.5).is_err());
    }

    #[test]
    fn region_membership() {
        let ch = bec(0.2);
        assert!(region_check(&[0.5, 0.9], &ch, 2.0).unwrap());
        assert!(region_check(&[1.1, 1.05], &ch, 2.0).unwrap());
        assert!(!region_check(&[1.2, 1.1], &ch, 2.0).unwrap());
        assert!(!region_check(&[2.0, 1.9], &ch, 2.0).unwrap());
        let mu = scalar_stabilizable_mu(&ch, 2.0).unwrap();
        assert!(region_check(&[mu * 0.99], &ch, 2.0).unwrap());
        assert!(!region_check(&[mu * 1.01], &ch, 2.0).unwrap());
    }

    #[test]
    fn sweep_rows() {
        let rows = region_sweep(ChannelKind::Bec, 2.0, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}
