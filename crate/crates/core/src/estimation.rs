//! Modulo quantization and set-membership filtering.
//!
//! Filters run in canonical coordinates, where each measured output is the
//! first state of its companion block.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::thresholds::{abs_matrix, CanonicalPlant, FilterKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("quantizer overflow: prediction width {width} exceeds the unambiguous range {range}")]
    Overflow { width: f64, range: f64 },
    #[error("invalid quantizer: {0}")]
    InvalidQuantizer(String),
    #[error("internal corruption: {0}")]
    Corruption(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("shape matrix is not positive semidefinite (smallest eigenvalue {0})")]
    NotPositiveSemidefinite(f64),
    #[error("no bin width satisfies the unwrap condition with {levels} levels")]
    Infeasible { levels: u64 },
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn widen(&self, by: f64) -> Self {
        Self::new(self.lo - by, self.hi + by)
    }
}

/// Uniform modulo quantizer `⌊y/δ⌋ mod levels` with left-closed bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    delta: f64,
    levels: u64,
}

impl QuantizerSpec {
    pub fn new(delta: f64, levels: u64) -> Result<Self, EstimationError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(EstimationError::InvalidQuantizer(format!("bin width {delta}")));
        }
        if !levels.is_power_of_two() || levels < 2 {
            return Err(EstimationError::InvalidQuantizer(format!(
                "{levels} levels is not a power of two of at least 2"
            )));
        }
        Ok(Self { delta, levels })
    }

    pub fn with_bits(delta: f64, bits: u32) -> Result<Self, EstimationError> {
        if bits == 0 || bits > 63 {
            return Err(EstimationError::InvalidQuantizer(format!("{bits} bits")));
        }
        Self::new(delta, 1 << bits)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn levels(&self) -> u64 {
        self.levels
    }

    pub fn bits(&self) -> u32 {
        self.levels.trailing_zeros()
    }

    /// Width of the widest prediction interval that unwraps unambiguously
    /// under the closed-interval convention.
    pub fn unambiguous_range(&self) -> f64 {
        self.delta * (self.levels - 1) as f64
    }

    pub fn quantize(&self, y: f64) -> u64 {
        let bin = (y / self.delta).floor() as i64;
        bin.rem_euclid(self.levels as i64) as u64
    }

    /// The bin `[jδ, (j+1)δ)` with `j ≡ index` that meets `prediction`.
    pub fn dequantize(&self, index: u64, prediction: Interval) -> Result<Interval, EstimationError> {
        let range = self.delta * self.levels as f64;
        if !(prediction.width() <= range) {
            return Err(EstimationError::Overflow {
                width: prediction.width(),
                range,
            });
        }
        let levels = self.levels as i64;
        let first = (prediction.lo / self.delta).floor() as i64;
        let last = (prediction.hi / self.delta).floor() as i64;
        let j = first + (index as i64 - first).rem_euclid(levels);
        if j > last {
            return Err(EstimationError::Corruption(format!(
                "index {index} has no bin in [{}, {}]",
                prediction.lo, prediction.hi
            )));
        }
        if j + levels <= last {
            return Err(EstimationError::Overflow {
                width: prediction.width(),
                range,
            });
        }
        Ok(Interval::new(j as f64 * self.delta, (j + 1) as f64 * self.delta))
    }
}

/// Relative slack that absorbs floating-point rounding in the filters.
fn rounding_slack(magnitude: f64, terms: usize) -> f64 {
    4.0 * f64::EPSILON * (terms as f64 + 2.0) * magnitude + f64::MIN_POSITIVE
}

/// Axis-aligned box `{x : x_min ≤ x ≤ x_max}` kept as center and half-widths.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypercuboid {
    center: DVector<f64>,
    radius: DVector<f64>,
}

impl Hypercuboid {
    pub fn from_bounds(x_min: &DVector<f64>, x_max: &DVector<f64>) -> Result<Self, EstimationError> {
        if x_min.len() != x_max.len() || x_min.iter().zip(x_max.iter()).any(|(a, b)| !(a <= b)) {
            return Err(EstimationError::Degenerate("x_min must not exceed x_max".into()));
        }
        Ok(Self {
            center: (x_min + x_max) / 2.0,
            radius: (x_max - x_min) / 2.0,
        })
    }

    pub fn from_center_widths(center: DVector<f64>, widths: &DVector<f64>) -> Self {
        assert_eq!(center.len(), widths.len());
        Self {
            center,
            radius: widths.map(|w| w.abs() / 2.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn x_min(&self) -> DVector<f64> {
        &self.center - &self.radius
    }

    pub fn x_max(&self) -> DVector<f64> {
        &self.center + &self.radius
    }

    /// `Δ = x_max − x_min`.
    pub fn widths(&self) -> DVector<f64> {
        &self.radius * 2.0
    }

    pub fn interval(&self, coord: usize) -> Interval {
        Interval::new(
            self.center[coord] - self.radius[coord],
            self.center[coord] + self.radius[coord],
        )
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (0..self.dim()).all(|i| self.interval(i).contains(x[i]))
    }

    /// Propagates through `x' = Fx + drive + w` with `|w_i| ≤ noise_i / 2`.
    pub fn time_update(&self, f: &DMatrix<f64>, drive: &DVector<f64>, noise: &DVector<f64>) -> Self {
        let m = self.dim();
        let abs_f = abs_matrix(f);
        let center = f * &self.center + drive;
        let spread = &abs_f * &self.radius + noise / 2.0;
        let magnitude = &abs_f * (self.center.abs() + &self.radius) + drive.abs() + noise / 2.0;
        let radius = DVector::from_fn(m, |i, _| spread[i] + rounding_slack(magnitude[i], m));
        Self { center, radius }
    }

    /// Intersects coordinate `coord` with `bin ⊕ [−V/2, V/2]`.
    pub fn measurement_update(&self, coord: usize, bin: Interval, v: f64) -> Result<Self, EstimationError> {
        let slack = rounding_slack(bin.lo.abs() + bin.hi.abs() + v, 1);
        let slab = bin.widen(v / 2.0 + slack);
        let prior = self.interval(coord);
        let lo = prior.lo.max(slab.lo);
        let hi = prior.hi.min(slab.hi);
        if lo > hi {
            return Err(EstimationError::Corruption(format!(
                "measurement [{}, {}] misses the box [{}, {}]",
                slab.lo, slab.hi, prior.lo, prior.hi
            )));
        }
        let mut next = self.clone();
        next.center[coord] = 0.5 * (lo + hi);
        next.radius[coord] = 0.5 * (hi - lo);
        Ok(next)
    }
}

/// Widths of the worst-case prediction boxes `Δ_0, Δ_1, …, Δ_steps` when
/// every measured coordinate is known to within `resolution = δ + V` after
/// each measurement.
pub fn cuboid_width_trajectory(
    f: &DMatrix<f64>,
    measured: &[usize],
    initial: &DVector<f64>,
    resolution: f64,
    noise: &DVector<f64>,
    steps: usize,
) -> Vec<DVector<f64>> {
    let abs_f = abs_matrix(f);
    let mut widths = vec![initial.clone()];
    for _ in 0..steps {
        let mut filtered = widths.last().expect("nonempty").clone();
        for &i in measured {
            filtered[i] = filtered[i].min(resolution);
        }
        widths.push(&abs_f * filtered + noise);
    }
    widths
}

/// Closed-form steady-state prediction widths of a companion-form plant:
/// `Δ_i = (δ+V) Σ_{j≥i} |a_j| + Σ_{j≥i} W_j`.
pub fn steady_state_delta(coeffs: &[f64], delta: f64, v: f64, noise: &DVector<f64>) -> DVector<f64> {
    let m = coeffs.len();
    assert_eq!(noise.len(), m);
    DVector::from_fn(m, |i, _| {
        (i..m).map(|j| (delta + v) * coeffs[j].abs() + noise[j]).sum()
    })
}

/// Worst-case bounds on `√P_ii` for the ellipsoidal filter, for
/// `Δ_0, …, Δ_steps`. After a measurement the first coordinate is bounded by
/// `(√m/2)(δ+V)` and the others grow by `√(m/(m−1))`.
pub fn ellipsoid_bound_trajectory(
    f: &DMatrix<f64>,
    initial: &DVector<f64>,
    resolution: f64,
    noise: &DVector<f64>,
    eps_prime: f64,
    steps: usize,
) -> Vec<DVector<f64>> {
    let m = f.nrows();
    let mf = m as f64;
    let theta = (mf / (mf - 1.0)).sqrt();
    let abs_f = abs_matrix(f);
    let noise_term = ((1.0 + 1.0 / eps_prime) * noise.norm_squared() / 4.0).sqrt();
    let mut bounds = vec![initial.clone()];
    for _ in 0..steps {
        let prev = bounds.last().expect("nonempty");
        let filtered = DVector::from_fn(m, |i, _| {
            if i == 0 {
                prev[0].min(mf.sqrt() / 2.0 * resolution)
            } else {
                theta * prev[i]
            }
        });
        bounds.push((&abs_f * filtered) * (1.0 + eps_prime).sqrt() + DVector::repeat(m, noise_term));
    }
    bounds
}

const SETTLE_STEPS: usize = 10_000;

/// Smallest bin width for which `levels` bins unwrap every prediction along
/// the worst-case trajectory, with a `1e-9` relative margin.
pub fn design_quantizer(
    plant: &CanonicalPlant,
    filter: FilterKind,
    levels: u64,
    initial: &DVector<f64>,
    eps_prime: f64,
) -> Result<QuantizerSpec, EstimationError> {
    let f = plant.canonical_f();
    let noise = plant.canonical_noise_widths();
    let measured = plant.measured_coords();
    let v = plant.v;
    // Runs the worst-case recursion until it settles; a recursion that never
    // settles needs an unbounded window.
    let needed = |delta: f64| -> f64 {
        let mut peak = 0.0f64;
        let mut prev = initial.clone();
        for _ in 0..SETTLE_STEPS {
            let next = match filter {
                FilterKind::Hypercuboid => {
                    cuboid_width_trajectory(&f, &measured, &prev, delta + v, &noise, 1).pop()
                }
                FilterKind::Ellipsoid => {
                    ellipsoid_bound_trajectory(&f, &prev, delta + v, &noise, eps_prime, 1).pop()
                }
            }
            .expect("one step");
            let head = match filter {
                FilterKind::Hypercuboid => measured.iter().map(|&i| prev[i]).fold(0.0, f64::max),
                FilterKind::Ellipsoid => 2.0 * prev[0],
            };
            peak = peak.max(head);
            let settled = (&next - &prev).amax() <= 1e-13 * next.amax();
            prev = next;
            if settled {
                return peak + v;
            }
        }
        f64::INFINITY
    };
    let slack = |delta: f64| delta * (levels - 1) as f64 - needed(delta);
    let mut hi = 1e-6;
    while slack(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(EstimationError::Infeasible { levels });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slack(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    QuantizerSpec::new(hi * (1.0 + 1e-9), levels)
}

/// `E(P, c) = {x : (x−c)ᵀ P⁻¹ (x−c) ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    shape: DMatrix<f64>,
    center: DVector<f64>,
}

/// Which branch of the minimum-volume construction applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlabCase {
    /// The slab removes too little to shrink the ellipsoid.
    Unchanged,
    /// The slab is centered on the ellipsoid.
    Symmetric,
    General,
}

/// Result of covering an ellipsoid–slab intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabCut {
    pub ellipsoid: Ellipsoid,
    pub a: f64,
    pub b: f64,
    pub xi: f64,
    pub case: SlabCase,
}

impl Ellipsoid {
    pub fn new(shape: DMatrix<f64>, center: DVector<f64>) -> Result<Self, EstimationError> {
        let m = center.len();
        if shape.shape() != (m, m) || m == 0 {
            return Err(EstimationError::Degenerate("shape matrix has the wrong size".into()));
        }
        let scale = shape.amax().max(f64::MIN_POSITIVE);
        if (&shape - shape.transpose()).amax() > 1e-9 * scale {
            return Err(EstimationError::Degenerate("shape matrix is not symmetric".into()));
        }
        let shape = (&shape + shape.transpose()) / 2.0;
        let smallest = SymmetricEigen::new(shape.clone()).eigenvalues.min();
        if smallest < -1e-9 * scale {
            return Err(EstimationError::NotPositiveSemidefinite(smallest));
        }
        Ok(Self { shape, center })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Self {
        let m = center.len();
        Self {
            shape: DMatrix::identity(m, m) * (radius * radius),
            center,
        }
    }

    /// The ball around a box, which contains it.
    pub fn covering_box(center: DVector<f64>, widths: &DVector<f64>) -> Self {
        Self::ball(center, widths.norm() / 2.0)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// `(x−c)ᵀ P⁻¹ (x−c)`; infinite outside the support of a singular `P`.
    pub fn normalized_distance(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        match self.shape.clone().cholesky() {
            Some(ch) => d.dot(&ch.solve(&d)),
            None => {
                let eig = SymmetricEigen::new(self.shape.clone());
                let tol = 1e-12 * eig.eigenvalues.amax();
                let coords = eig.eigenvectors.transpose() * d;
                coords
                    .iter()
                    .zip(eig.eigenvalues.iter())
                    .map(|(c, &l)| {
                        if l > tol {
                            c * c / l
                        } else if c.abs() > 1e-9 {
                            f64::INFINITY
                        } else {
                            0.0
                        }
                    })
                    .sum()
            }
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.normalized_distance(x) <= 1.0 + tol
    }

    /// Projection of the ellipsoid onto coordinate `coord`.
    pub fn interval(&self, coord: usize) -> Interval {
        let half = self.shape[(coord, coord)].max(0.0).sqrt();
        Interval::new(self.center[coord] - half, self.center[coord] + half)
    }

    /// `√det P`, proportional to the volume.
    pub fn volume_factor(&self) -> f64 {
        self.shape.determinant().max(0.0).sqrt()
    }

    /// Covers `{Fx + drive + w}` with `|w_i| ≤ noise_i / 2` by
    /// `(1+ε′) F P Fᵀ + (1 + 1/ε′)(Σ noise_i²/4) I`.
    pub fn time_update(
        &self,
        f: &DMatrix<f64>,
        drive: &DVector<f64>,
        noise: &DVector<f64>,
        eps_prime: f64,
    ) -> Result<Self, EstimationError> {
        if !(eps_prime > 0.0) {
            return Err(EstimationError::Degenerate(format!("eps' = {eps_prime}")));
        }
        let m = self.dim();
        let spread = f * &self.shape * f.transpose() * (1.0 + eps_prime)
            + DMatrix::identity(m, m) * ((1.0 + 1.0 / eps_prime) * noise.norm_squared() / 4.0);
        let shape = (&spread + spread.transpose()) / 2.0;
        Ok(Self {
            shape,
            center: f * &self.center + drive,
        })
    }

    /// Covers the intersection with `{x : x_coord ∈ bin ⊕ [−V/2, V/2]}`.
    pub fn measurement_update(&self, coord: usize, bin: Interval, v: f64) -> Result<SlabCut, EstimationError> {
        let half = self.shape[(coord, coord)].sqrt();
        if !(half > 0.0) {
            return Err(EstimationError::Degenerate("ellipsoid is flat along the measured axis".into()));
        }
        let slack = rounding_slack(bin.lo.abs() + bin.hi.abs() + v, 1);
        let slab = bin.widen(v / 2.0 + slack);
        let lower = (slab.lo - self.center[coord]) / half;
        let upper = (slab.hi - self.center[coord]) / half;
        let tol = 1e-9;
        if lower > 1.0 + tol || upper < -1.0 - tol {
            return Err(EstimationError::Corruption(format!(
                "measurement slab [{lower}, {upper}] misses the ellipsoid"
            )));
        }
        let h = DVector::from_fn(self.dim(), |i, _| (i == coord) as u8 as f64);
        min_volume_ellipsoid_slab(self, &h, lower.clamp(-1.0, 1.0), upper.clamp(-1.0, 1.0))
    }
}

/// Minimum-volume ellipsoid covering `E(P, c) ∩ {γ ≤ ⟨h, x−c⟩/√(hᵀPh) ≤ δ}`.
pub fn min_volume_ellipsoid_slab(
    e: &Ellipsoid,
    h: &DVector<f64>,
    gamma: f64,
    delta: f64,
) -> Result<SlabCut, EstimationError> {
    let m = e.dim() as f64;
    if h.len() != e.dim() || h.norm() == 0.0 {
        return Err(EstimationError::Degenerate("zero direction vector".into()));
    }
    if !(-1.0 <= gamma && gamma < delta && delta <= 1.0) {
        return Err(EstimationError::Degenerate(format!(
            "slab bounds [{gamma}, {delta}] must satisfy -1 <= gamma < delta <= 1"
        )));
    }
    if e.dim() < 2 {
        return Err(EstimationError::Degenerate("dimension must be at least 2".into()));
    }
    let ph = &e.shape * h;
    let hph = h.dot(&ph);
    if !(hph > 0.0) {
        return Err(EstimationError::Degenerate("ellipsoid is flat along h".into()));
    }
    let reflect = delta.abs() < gamma.abs();
    let (g, d) = if reflect { (-delta, -gamma) } else { (gamma, delta) };
    let s = g + d;
    let (xi, a, b, case) = if g * d <= -1.0 / m {
        (0.0, 1.0, 1.0, SlabCase::Unchanged)
    } else if s == 0.0 {
        (0.0, m * d * d, m * (1.0 - d * d) / (m - 1.0), SlabCase::Symmetric)
    } else {
        let xi = general_center(m, g, d);
        let a = m * (xi - g) * (d - xi);
        let b = a * (1.0 - g * g) / (a - (xi - g) * (xi - g));
        (xi, a, b, SlabCase::General)
    };
    let xi = if reflect { -xi } else { xi };
    let outer = &ph * ph.transpose() / hph;
    let shape = &e.shape * b - outer * (b - a);
    let shape = (&shape + shape.transpose()) / 2.0;
    let center = &e.center + &ph * (xi / hph.sqrt());
    Ok(SlabCut {
        ellipsoid: Ellipsoid { shape, center },
        a,
        b,
        xi,
        case,
    })
}

/// Center offset of the general case, in a form that avoids cancellation
/// when `γ + δ` is small.
fn general_center(m: f64, gamma: f64, delta: f64) -> f64 {
    let s = gamma + delta;
    let x = m * s * s + 2.0 * (1.0 + gamma * delta);
    let disc = discriminant(m, gamma, delta);
    2.0 * s * (1.0 + m * gamma * delta) / (x + disc.sqrt())
}

fn discriminant(m: f64, gamma: f64, delta: f64) -> f64 {
    m * m * (delta * delta - gamma * gamma).powi(2) + 4.0 * (1.0 - gamma * gamma) * (1.0 - delta * delta)
}

#[cfg(test)]
mod test {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quantizer_arithmetic() {
        let q = QuantizerSpec::new(1.0, 4).unwrap();
        assert_eq!(q.quantize(5.3), 1);
        assert_eq!(q.dequantize(1, Interval::new(4.0, 7.5)).unwrap(), Interval::new(5.0, 6.0));
        assert_eq!(q.quantize(8.0), 0);
        assert_eq!(q.quantize(-0.5), 3);
        assert_eq!(q.dequantize(3, Interval::new(-1.2, 1.0)).unwrap(), Interval::new(-1.0, 0.0));
        assert_eq!(q.bits(), 2);
    }

    #[test]
    fn quantizer_errors() {
        assert!(QuantizerSpec::new(0.0, 4).is_err());
        assert!(QuantizerSpec::new(1.0, 6).is_err());
        let q = QuantizerSpec::new(1.0, 4).unwrap();
        assert!(matches!(
            q.dequantize(0, Interval::new(0.0, 4.5)),
            Err(EstimationError::Overflow { .. })
        ));
        // A closed interval of width exactly δ·levels touches two bins.
        assert!(matches!(
            q.dequantize(0, Interval::new(0.0, 4.0)),
            Err(EstimationError::Overflow { .. })
        ));
        assert!(matches!(
            q.dequantize(3, Interval::new(0.0, 1.5)),
            Err(EstimationError::Corruption(_))
        ));
    }

    #[test]
    fn cuboid_time_update_trivial() {
        let h = Hypercuboid::from_center_widths(DVector::from_vec(vec![1.0, 2.0]), &DVector::from_vec(vec![0.5, 0.25]));
        let next = h.time_update(&DMatrix::identity(2, 2), &DVector::zeros(2), &DVector::zeros(2));
        assert_abs_diff_eq!(next.widths(), h.widths(), epsilon = 1e-13);
        let f = crate::thresholds::companion(&[-3.3, 3.27, -0.98]);
        let point = Hypercuboid::from_center_widths(DVector::zeros(3), &DVector::zeros(3));
        let next = point.time_update(&f, &DVector::zeros(3), &DVector::repeat(3, 0.05));
        assert_abs_diff_eq!(next.widths(), DVector::repeat(3, 0.05), epsilon = 1e-14);
    }

    #[test]
    fn cuboid_measurement_update() {
        let h = Hypercuboid::from_bounds(&DVector::from_vec(vec![0.0, -1.0]), &DVector::from_vec(vec![3.0, 1.0])).unwrap();
        let same = h.measurement_update(0, Interval::new(0.0, 3.0), 0.0).unwrap();
        assert_abs_diff_eq!(same.x_min(), h.x_min(), epsilon = 1e-12);
        assert_abs_diff_eq!(same.x_max(), h.x_max(), epsilon = 1e-12);
        let cut = h.measurement_update(0, Interval::new(1.0, 2.0), 0.5).unwrap();
        assert_abs_diff_eq!(cut.interval(0).lo, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(cut.interval(0).hi, 2.25, epsilon = 1e-12);
        assert_eq!(cut.interval(1), h.interval(1));
        assert!(matches!(
            h.measurement_update(0, Interval::new(5.0, 6.0), 0.5),
            Err(EstimationError::Corruption(_))
        ));
    }

    #[test]
    fn steady_state_scalar_and_asymptote() {
        let s = steady_state_delta(&[-2.0], 1.5, 0.5, &DVector::from_vec(vec![0.3]));
        assert_abs_diff_eq!(s[0], 2.0 * 2.0 + 0.3, epsilon = 1e-15);
        let a = [-3.3, 3.27, -0.98];
        let big = steady_state_delta(&a, 1e9, 0.0, &DVector::repeat(3, 1.0));
        assert_abs_diff_eq!(big[0] / 1e9, 7.55, epsilon = 1e-6);
    }

    #[test]
    fn steady_state_matches_iteration() {
        let a = [-2.0, -0.25, 0.5];
        let f = crate::thresholds::companion(&a);
        let noise = DVector::from_vec(vec![0.3, 0.7, 1.1]);
        let traj = cuboid_width_trajectory(&f, &[0], &DVector::repeat(3, 100.0), 2.5, &noise, 3);
        let closed = steady_state_delta(&a, 2.0, 0.5, &noise);
        assert_abs_diff_eq!(traj[3], closed, epsilon = 1e-12);
    }

    #[test]
    fn example_two_bin_widths() {
        let plant = crate::thresholds::CanonicalPlant::from_coefficients(&[-2.0, -0.25, 0.5]).with_noise(5.0, 5.0);
        let init = DVector::repeat(3, 5.0);
        let cases = [(8, 33.75 / 4.25), (32, 33.75 / 28.25), (128, 33.75 / 124.25)];
        for (levels, want) in cases {
            let q = design_quantizer(&plant, FilterKind::Hypercuboid, levels, &init, 0.1).unwrap();
            assert_abs_diff_eq!(q.delta(), want, epsilon = 1e-6);
        }
        assert!(design_quantizer(&plant, FilterKind::Hypercuboid, 2, &init, 0.1).is_err());
    }

    #[test]
    fn slab_cases() {
        let e = Ellipsoid::ball(DVector::zeros(2), 1.0);
        let h = DVector::from_vec(vec![1.0, 0.0]);
        let all = min_volume_ellipsoid_slab(&e, &h, -1.0, 1.0).unwrap();
        assert_eq!(all.case, SlabCase::Unchanged);
        assert_eq!(all.ellipsoid, e);
        let sym = min_volume_ellipsoid_slab(&e, &h, -0.5, 0.5).unwrap();
        assert_eq!(sym.case, SlabCase::Symmetric);
        assert_abs_diff_eq!(sym.a, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sym.b, 1.5, epsilon = 1e-15);
        let gen = min_volume_ellipsoid_slab(&e, &h, 0.0, 0.5).unwrap();
        assert_eq!(gen.case, SlabCase::General);
        assert!(gen.xi >= 0.0 && gen.xi <= 0.5);
        assert!(min_volume_ellipsoid_slab(&e, &DVector::zeros(2), 0.0, 0.5).is_err());
        assert!(min_volume_ellipsoid_slab(&e, &h, 0.5, 0.5).is_err());
    }

    #[test]
    fn general_center_matches_printed_formula() {
        for &(m, g, d) in &[(2.0, 0.0, 0.5), (3.0, -0.2, 0.9), (5.0, 0.3, 0.4), (2.0, -0.6, 0.7)] {
            let s: f64 = g + d;
            let printed = (m * s * s + 2.0 * (1.0 + g * d) - discriminant(m, g, d).sqrt()) / (2.0 * (m + 1.0) * s);
            assert_abs_diff_eq!(general_center(m, g, d), printed, epsilon = 1e-12);
        }
    }

    #[test]
    fn reflection_mirrors_center() {
        let e = Ellipsoid::ball(DVector::zeros(3), 2.0);
        let h = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let up = min_volume_ellipsoid_slab(&e, &h, 0.2, 0.6).unwrap();
        let down = min_volume_ellipsoid_slab(&e, &h, -0.6, -0.2).unwrap();
        assert_abs_diff_eq!(up.xi, -down.xi, epsilon = 1e-15);
        assert_abs_diff_eq!(up.ellipsoid.shape(), down.ellipsoid.shape(), epsilon = 1e-12);
    }

    #[test]
    fn ellipsoid_time_update_limit() {
        let e = Ellipsoid::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), DVector::zeros(2)).unwrap();
        let next = e
            .time_update(&DMatrix::identity(2, 2), &DVector::zeros(2), &DVector::zeros(2), 1e-8)
            .unwrap();
        assert_abs_diff_eq!(next.shape(), e.shape(), epsilon = 1e-7);
        assert!(Ellipsoid::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), DVector::zeros(2)).is_err());
    }

    #[test]
    fn ellipsoid_measurement_update_errors() {
        let e = Ellipsoid::ball(DVector::zeros(2), 1.0);
        assert!(matches!(
            e.measurement_update(0, Interval::new(3.0, 4.0), 0.0),
            Err(EstimationError::Corruption(_))
        ));
        let cut = e.measurement_update(0, Interval::new(0.0, 0.5), 0.0).unwrap();
        assert!(cut.b <= 2.0 + 1e-12);
    }
}
