//! Closed-loop simulation: plant, observer, encoder, channel, decoder,
//! set-membership tracker and controller, plus the Monte-Carlo harnesses
//! built on top.
//!
//! The harness carries the ground truth and checks it every step: every
//! decoded bit and message must match what was sent, and every filter set
//! must contain the true state.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{transmit, ChannelError, ChannelSpec};
use crate::code::{CodeError, Encoder, ToeplitzCode};
use crate::decoder::{DecodeOutcome, Decoder, DecoderError, FeedbackReport};
use crate::estimation::{design_quantizer, Ellipsoid, EstimationError, Hypercuboid, Interval, QuantizerSpec};
use crate::gf2::BitVec;
use crate::thresholds::{CanonicalPlant, FilterKind, ThresholdError};

/// A trial is declared diverged once the state norm exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e6;
const ELLIPSOID_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invariant violated at t = {t}: {what}")]
    Invariant { t: usize, what: String },
}

impl SimulateError {
    /// Whether the error signals a broken invariant rather than bad input.
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            SimulateError::Invariant { .. }
                | SimulateError::Decoder(DecoderError::Corruption(_))
                | SimulateError::Estimation(EstimationError::Corruption(_))
        )
    }
}

/// Distribution of each noise component, always confined to its box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Normal with standard deviation `sigma`, truncated by rejection.
    TruncatedGaussian { sigma: f64 },
    Uniform,
}

/// Which estimate drives the controller at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateTiming {
    /// `x̂_{t|t}`, using the bits decoded at `t`.
    Filtered,
    /// `x̂_{t|t−1}`, using only bits decoded before `t`.
    Predicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub plant: CanonicalPlant,
    pub n: usize,
    pub k: usize,
    pub code_p: f64,
    pub code_seed: u64,
    pub depth: usize,
    pub channel: ChannelSpec,
    /// One quantizer per measured output; their bits add up to the message
    /// length.
    pub quantizers: Vec<QuantizerSpec>,
    pub horizon: usize,
    /// Steps between truncation reports; `None` disables feedback.
    pub feedback_period: Option<usize>,
    pub filter: FilterKind,
    pub eps_prime: f64,
    pub timing: EstimateTiming,
    /// Quantize `y_t − H G u_{t−1}` instead of `y_t`.
    pub observer_knows_control: bool,
    pub noise: NoiseKind,
    pub seed: u64,
}

impl LoopConfig {
    /// Message bits per step after packet expansion.
    pub fn message_bits(&self) -> usize {
        self.k * self.channel.packet_len()
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let measured = self.plant.measured_coords().len();
        if self.horizon == 0 {
            return Err(SimulateError::Config("horizon must be at least 1".into()));
        }
        if self.quantizers.len() != measured {
            return Err(SimulateError::Config(format!(
                "{} quantizers for {measured} measured outputs",
                self.quantizers.len()
            )));
        }
        let bits: usize = self.quantizers.iter().map(|q| q.bits() as usize).sum();
        if bits != self.message_bits() {
            return Err(SimulateError::Config(format!(
                "quantizers use {bits} bits but messages carry {}",
                self.message_bits()
            )));
        }
        if self.filter == FilterKind::Ellipsoid && (measured != 1 || self.plant.m_x() < 2) {
            return Err(SimulateError::Config(
                "the ellipsoidal filter needs one measured output and at least two states".into(),
            ));
        }
        if self.feedback_period == Some(0) {
            return Err(SimulateError::Config("feedback period must be positive".into()));
        }
        if !(self.eps_prime > 0.0) {
            return Err(SimulateError::Config("eps_prime must be positive".into()));
        }
        Ok(())
    }

    /// Prior set at time 1: a box of canonical noise widths around zero.
    pub fn initial_widths(&self) -> DVector<f64> {
        self.plant.canonical_noise_widths()
    }

    pub fn sample_code(&self) -> Result<ToeplitzCode, SimulateError> {
        Ok(ToeplitzCode::sample(self.n, self.k, self.code_p, self.depth, self.code_seed)?)
    }

    /// Replaces the quantizers by the smallest bin widths that unwrap safely
    /// with `2^k` levels.
    pub fn with_designed_quantizer(mut self) -> Result<Self, SimulateError> {
        if self.plant.measured_coords().len() != 1 {
            return Err(SimulateError::Config(
                "quantizer design needs a single measured output".into(),
            ));
        }
        let levels = 1u64 << self.message_bits();
        let initial = match self.filter {
            FilterKind::Hypercuboid => self.initial_widths(),
            FilterKind::Ellipsoid => DVector::repeat(self.plant.m_x(), self.initial_widths().norm() / 2.0),
        };
        self.quantizers = vec![design_quantizer(&self.plant, self.filter, levels, &initial, self.eps_prime)?];
        Ok(self)
    }
}

/// Why a trial stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    StateNorm,
    QuantizerOverflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub estimate: DVector<f64>,
    pub delay: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub steps: Vec<StepRecord>,
    pub divergence: Option<Divergence>,
    pub lqr_cost: f64,
    pub max_state_norm: f64,
    pub containment_checks: usize,
    pub closed_loop_radius: f64,
}

impl TrialRecord {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub const CSV_HEADER: &'static str = "t,state_norm,control_norm,delay";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.steps
            .iter()
            .map(|s| format!("{},{},{},{}", s.t, s.x.norm(), s.u.norm(), s.delay))
    }
}

/// SplitMix64 finalizer over a sequence of words.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x9E37_79B9_7F4A_7C15u64, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

fn draw_noise<R: Rng>(kind: NoiseKind, width: f64, rng: &mut R) -> f64 {
    let half = width / 2.0;
    if half <= 0.0 {
        return 0.0;
    }
    loop {
        let x = match kind {
            NoiseKind::TruncatedGaussian { sigma } => Normal::new(0.0, sigma).expect("sigma > 0").sample(rng),
            NoiseKind::Uniform => rng.random_range(-half..half),
        };
        if x.abs() < half {
            return x;
        }
    }
}

#[derive(Debug, Clone)]
enum FilterSet {
    Cuboid(Hypercuboid),
    Ellipsoid(Ellipsoid),
}

impl FilterSet {
    fn time_update(
        &self,
        f: &DMatrix<f64>,
        drive: &DVector<f64>,
        noise: &DVector<f64>,
        eps_prime: f64,
    ) -> Result<Self, EstimationError> {
        Ok(match self {
            FilterSet::Cuboid(h) => FilterSet::Cuboid(h.time_update(f, drive, noise)),
            FilterSet::Ellipsoid(e) => FilterSet::Ellipsoid(e.time_update(f, drive, noise, eps_prime)?),
        })
    }

    fn measurement_update(&self, coord: usize, bin: Interval, v: f64) -> Result<Self, EstimationError> {
        Ok(match self {
            FilterSet::Cuboid(h) => FilterSet::Cuboid(h.measurement_update(coord, bin, v)?),
            FilterSet::Ellipsoid(e) => FilterSet::Ellipsoid(e.measurement_update(coord, bin, v)?.ellipsoid),
        })
    }

    fn interval(&self, coord: usize) -> Interval {
        match self {
            FilterSet::Cuboid(h) => h.interval(coord),
            FilterSet::Ellipsoid(e) => e.interval(coord),
        }
    }

    fn center(&self) -> &DVector<f64> {
        match self {
            FilterSet::Cuboid(h) => h.center(),
            FilterSet::Ellipsoid(e) => e.center(),
        }
    }

    fn contains(&self, z: &DVector<f64>) -> bool {
        match self {
            FilterSet::Cuboid(h) => h.contains(z),
            FilterSet::Ellipsoid(e) => e.contains(z, ELLIPSOID_TOLERANCE),
        }
    }
}

/// Controller-side tracker. It holds the filtered set after the last
/// incorporated message and replays pure time updates to reach the present.
struct Tracker {
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    noise: DVector<f64>,
    eps_prime: f64,
    measured: Vec<usize>,
    v: f64,
    /// Time of the last incorporated message (0 before any).
    last: usize,
    /// Measurement-updated set at `last`, or the prior for time 1.
    filtered: FilterSet,
}

impl Tracker {
    fn drive(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.g * u
    }

    /// Set for time `t` using messages up to `last` and controls before `t`.
    fn propagate(&self, t: usize, controls: &[DVector<f64>]) -> Result<FilterSet, EstimationError> {
        let mut set = self.filtered.clone();
        let start = self.last.max(1);
        for tau in start..t {
            set = set.time_update(&self.f, &self.drive(&controls[tau - 1]), &self.noise, self.eps_prime)?;
        }
        Ok(set)
    }

    /// Incorporates message `time` given the quantizer indices and the
    /// innovation shift the observer subtracted.
    fn incorporate(
        &mut self,
        time: usize,
        indices: &[u64],
        shift: &[f64],
        quantizers: &[QuantizerSpec],
        controls: &[DVector<f64>],
    ) -> Result<(), EstimationError> {
        debug_assert_eq!(time, self.last + 1);
        let mut set = self.propagate(time, controls)?;
        for (i, &coord) in self.measured.iter().enumerate() {
            let prediction = set.interval(coord).widen(self.v / 2.0);
            let shifted = Interval::new(prediction.lo - shift[i], prediction.hi - shift[i]);
            let bin = quantizers[i].dequantize(indices[i], shifted)?;
            let bin = Interval::new(bin.lo + shift[i], bin.hi + shift[i]);
            set = set.measurement_update(coord, bin, self.v)?;
        }
        self.filtered = set;
        self.last = time;
        Ok(())
    }
}

fn pack_indices(indices: &[u64], quantizers: &[QuantizerSpec]) -> BitVec {
    let mut bits = BitVec::zeros(0);
    for (&idx, q) in indices.iter().zip(quantizers) {
        for b in 0..q.bits() {
            bits.push((idx >> b) & 1 == 1);
        }
    }
    bits
}

fn unpack_indices(bits: &BitVec, quantizers: &[QuantizerSpec]) -> Vec<u64> {
    let mut pos = 0;
    quantizers
        .iter()
        .map(|q| {
            let idx = (0..q.bits()).fold(0u64, |acc, b| acc | (bits.get(pos + b as usize) as u64) << b);
            pos += q.bits() as usize;
            idx
        })
        .collect()
}

/// Runs one closed-loop trial, sampling the code from the config.
pub fn run_closed_loop(cfg: &LoopConfig) -> Result<TrialRecord, SimulateError> {
    let code = Arc::new(cfg.sample_code()?);
    run_closed_loop_with_code(cfg, code)
}

/// Runs one closed-loop trial with a given (unexpanded) code.
pub fn run_closed_loop_with_code(cfg: &LoopConfig, code: Arc<ToeplitzCode>) -> Result<TrialRecord, SimulateError> {
    cfg.validate()?;
    let plant = &cfg.plant;
    let packet_len = cfg.channel.packet_len();
    let code = if packet_len > 1 {
        Arc::new(code.expand_packets(packet_len))
    } else {
        code
    };
    if code.k() != cfg.message_bits() {
        return Err(SimulateError::Config(format!(
            "code carries {} bits per step, config expects {}",
            code.k(),
            cfg.message_bits()
        )));
    }
    let m = plant.m_x();
    let fc = plant.canonical_f();
    let gc = plant.canonical_g();
    let transform = plant.transform.clone();
    let inverse = transform
        .clone()
        .try_inverse()
        .ok_or_else(|| SimulateError::Config("canonical transform is singular".into()))?;
    let measured = plant.measured_coords();
    let noise_widths = plant.canonical_noise_widths();
    let closed_loop_radius = plant.closed_loop_radius()?;

    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 1]));
    let mut channel_rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 2]));

    let mut encoder = Encoder::new(code.clone());
    let mut decoder = Decoder::new(code.clone())?;
    let prior = Hypercuboid::from_center_widths(DVector::zeros(m), &cfg.initial_widths());
    let prior = match cfg.filter {
        FilterKind::Hypercuboid => FilterSet::Cuboid(prior),
        FilterKind::Ellipsoid => FilterSet::Ellipsoid(Ellipsoid::covering_box(DVector::zeros(m), &cfg.initial_widths())),
    };
    let mut tracker = Tracker {
        f: fc.clone(),
        g: gc.clone(),
        noise: noise_widths.clone(),
        eps_prime: cfg.eps_prime,
        measured: measured.clone(),
        v: plant.v,
        last: 0,
        filtered: prior,
    };

    let mut z = DVector::<f64>::zeros(m);
    let mut truth: Vec<DVector<f64>> = Vec::with_capacity(cfg.horizon);
    let mut controls: Vec<DVector<f64>> = Vec::with_capacity(cfg.horizon);
    let mut shifts: Vec<Vec<f64>> = Vec::with_capacity(cfg.horizon);
    let mut sent_messages: VecDeque<BitVec> = VecDeque::new();
    let mut sent_codewords: VecDeque<BitVec> = VecDeque::new();
    let mut sent_base = 1usize;
    let mut pending_reports: VecDeque<FeedbackReport> = VecDeque::new();
    let mut steps = Vec::with_capacity(cfg.horizon);
    let mut divergence = None;
    let mut cost = 0.0;
    let mut max_norm = 0.0f64;
    let mut checks = 0usize;
    let zero_u = DVector::zeros(gc.ncols());

    for t in 1..=cfg.horizon {
        truth.push(z.clone());
        let x = &inverse * &z;
        let norm = x.norm();
        max_norm = max_norm.max(norm);
        if !(norm <= DIVERGENCE_NORM) {
            divergence = Some(Divergence::StateNorm);
            break;
        }

        // Observer.
        let previous_u = controls.last().unwrap_or(&zero_u);
        let innovation = &gc * previous_u;
        let shift: Vec<f64> = measured
            .iter()
            .map(|&i| if cfg.observer_knows_control { innovation[i] } else { 0.0 })
            .collect();
        let indices: Vec<u64> = measured
            .iter()
            .enumerate()
            .map(|(i, &coord)| {
                let v = draw_noise(cfg.noise, plant.v, &mut noise_rng);
                cfg.quantizers[i].quantize(z[coord] + v - shift[i])
            })
            .collect();
        shifts.push(shift);
        let message = pack_indices(&indices, &cfg.quantizers);

        // Encoder and channel.
        while pending_reports.front().is_some_and(|r| r.effective_from <= t) {
            let report = pending_reports.pop_front().expect("checked");
            encoder.truncate_memory(report.cutoff);
        }
        let codeword = encoder.encode_step(&message)?;
        let received = transmit(&cfg.channel, &codeword, &mut channel_rng)?;
        sent_messages.push_back(message);
        sent_codewords.push_back(codeword);

        let predicted = tracker.propagate(t, &controls)?;

        // Decoder.
        let outcome = decoder.decode_step(&received)?;
        verify_outcome(&outcome, &sent_codewords, &sent_messages, sent_base)?;

        let mut overflow = false;
        for (time, bits) in &outcome.new_messages {
            let idx = unpack_indices(bits, &cfg.quantizers);
            match tracker.incorporate(*time, &idx, &shifts[time - 1], &cfg.quantizers, &controls) {
                Ok(()) => {}
                Err(EstimationError::Overflow { .. }) => {
                    overflow = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
            checks += 1;
            if !tracker.filtered.contains(&truth[time - 1]) {
                return Err(SimulateError::Invariant {
                    t,
                    what: format!("filtered set at time {time} misses the state"),
                });
            }
        }
        if overflow {
            divergence = Some(Divergence::QuantizerOverflow);
            break;
        }
        let current = tracker.propagate(t, &controls)?;
        checks += 2;
        if !current.contains(&z) || !predicted.contains(&z) {
            return Err(SimulateError::Invariant {
                t,
                what: "tracked set misses the state".into(),
            });
        }

        // Controller.
        let estimate_c = match cfg.timing {
            EstimateTiming::Filtered => current.center().clone(),
            EstimateTiming::Predicted => predicted.center().clone(),
        };
        let estimate = &inverse * &estimate_c;
        let u = &plant.gain * &estimate;
        cost += x.norm_squared() + u.norm_squared();
        steps.push(StepRecord {
            t,
            x: x.clone(),
            u: u.clone(),
            estimate,
            delay: outcome.earliest_unresolved_delay,
        });

        if let Some(period) = cfg.feedback_period {
            if let Some(report) = decoder.feedback_report(period) {
                pending_reports.push_back(report);
                let keep_from = report.cutoff.min(encoder.first_retained());
                while sent_base < keep_from.min(decoder.earliest_pending()) {
                    sent_messages.pop_front();
                    sent_codewords.pop_front();
                    sent_base += 1;
                }
            }
        }

        // Plant.
        let w = DVector::from_fn(plant.f.nrows(), |_, _| draw_noise(cfg.noise, plant.w, &mut noise_rng));
        z = &fc * &z + &gc * &u + &transform * w;
        controls.push(u);
    }

    let lqr_cost = if divergence.is_some() {
        f64::INFINITY
    } else {
        cost / (2.0 * cfg.horizon as f64)
    };
    Ok(TrialRecord {
        steps,
        divergence,
        lqr_cost,
        max_state_norm: max_norm,
        containment_checks: checks,
        closed_loop_radius,
    })
}

/// Checks every resolved bit and message against what was sent.
fn verify_outcome(
    outcome: &DecodeOutcome,
    codewords: &VecDeque<BitVec>,
    messages: &VecDeque<BitVec>,
    base: usize,
) -> Result<(), SimulateError> {
    let t = outcome.time;
    for r in &outcome.newly_resolved {
        let sent = &codewords[r.time - base];
        for (&p, &v) in r.positions.iter().zip(&r.values) {
            if sent.get(p) != v {
                return Err(SimulateError::Invariant {
                    t,
                    what: format!("decoded bit {p} of time {} is wrong", r.time),
                });
            }
        }
    }
    for (time, b) in &outcome.new_messages {
        if &messages[time - base] != b {
            return Err(SimulateError::Invariant {
                t,
                what: format!("decoded message {time} is wrong"),
            });
        }
    }
    Ok(())
}

/// Empirical distribution of the earliest-unresolved delay at a reference
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityTable {
    pub reference_time: usize,
    pub trials: usize,
    /// `counts[d]` trials ended with delay `d`.
    pub counts: Vec<u64>,
    pub fit: Option<LogLinearFit>,
}

/// Least-squares line through `(d, log2 P̂_d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_std_err: f64,
    pub points: usize,
}

/// Minimum events at a delay for it to enter the fit.
pub const MIN_FIT_EVENTS: u64 = 30;

impl ReliabilityTable {
    pub fn probability(&self, d: usize) -> f64 {
        self.counts.get(d).copied().unwrap_or(0) as f64 / self.trials as f64
    }

    pub const CSV_HEADER: &'static str = "d,count,probability,log2_probability";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.counts.iter().enumerate().map(|(d, &c)| {
            let p = self.probability(d);
            let log = if c > 0 { format!("{}", p.log2()) } else { String::new() };
            format!("{d},{c},{p},{log}")
        })
    }
}

pub fn fit_log_linear(points: &[(f64, f64)]) -> Option<LogLinearFit> {
    let k = points.len();
    if k < 2 {
        return None;
    }
    let kf = k as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_std_err = if k > 2 { (sse / (kf - 2.0) / sxx).sqrt() } else { f64::NAN };
    Some(LogLinearFit {
        slope,
        intercept,
        r_squared,
        slope_std_err,
        points: k,
    })
}

/// Monte-Carlo estimate of `P(earliest-unresolved delay = d)` at
/// `reference_time`, with random messages and ground-truth checks.
pub fn reliability_estimate(
    code: Arc<ToeplitzCode>,
    channel: &ChannelSpec,
    reference_time: usize,
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<ReliabilityTable, SimulateError> {
    if reference_time > code.depth() {
        return Err(SimulateError::Config(format!(
            "reference time {reference_time} exceeds code depth {}",
            code.depth()
        )));
    }
    let code = if channel.packet_len() > 1 {
        Arc::new(code.expand_packets(channel.packet_len()))
    } else {
        code
    };
    let delays = with_pool(jobs, || {
        (0..trials)
            .into_par_iter()
            .map(|trial| reliability_trial(&code, channel, reference_time, derive_seed(&[seed, trial as u64])))
            .collect::<Result<Vec<usize>, SimulateError>>()
    })?;
    let mut counts = vec![0u64; reference_time + 1];
    for d in delays {
        counts[d] += 1;
    }
    let points: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &c)| c >= MIN_FIT_EVENTS)
        .map(|(d, &c)| (d as f64, (c as f64 / trials as f64).log2()))
        .collect();
    Ok(ReliabilityTable {
        reference_time,
        trials,
        counts,
        fit: fit_log_linear(&points),
    })
}

fn reliability_trial(
    code: &Arc<ToeplitzCode>,
    channel: &ChannelSpec,
    reference_time: usize,
    seed: u64,
) -> Result<usize, SimulateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoder = Encoder::new(code.clone());
    let mut decoder = Decoder::new(code.clone())?;
    let mut messages = VecDeque::new();
    let mut codewords = VecDeque::new();
    let mut delay = 0;
    for _ in 0..reference_time {
        let b = BitVec::from_bools((0..code.k()).map(|_| rng.random::<bool>()));
        let c = encoder.encode_step(&b)?;
        let received = transmit(channel, &c, &mut rng)?;
        messages.push_back(b);
        codewords.push_back(c);
        let outcome = decoder.decode_step(&received)?;
        verify_outcome(&outcome, &codewords, &messages, 1)?;
        delay = outcome.earliest_unresolved_delay;
    }
    Ok(delay)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

/// LQR costs for one value of `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSummary {
    pub k: usize,
    pub delta: f64,
    /// Mean cost over the non-diverged runs of each code, `None` when every
    /// run diverged.
    pub code_costs: Vec<Option<f64>>,
    pub diverged_runs: usize,
    pub total_runs: usize,
}

impl RateSummary {
    fn finite_costs(&self) -> Vec<f64> {
        let mut c: Vec<f64> = self.code_costs.iter().flatten().copied().collect();
        c.sort_by(f64::total_cmp);
        c
    }

    /// Median of the per-code costs, over codes with a completed run.
    pub fn median(&self) -> Option<f64> {
        let c = self.finite_costs();
        if c.is_empty() {
            return None;
        }
        let mid = c.len() / 2;
        Some(if c.len() % 2 == 1 { c[mid] } else { 0.5 * (c[mid - 1] + c[mid]) })
    }

    /// Empirical CDF over all codes, `(cost, fraction of codes at or below)`.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let total = self.code_costs.len() as f64;
        self.finite_costs()
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c, (i + 1) as f64 / total))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub k_values: Vec<usize>,
    pub codes_per_k: usize,
    pub runs_per_code: usize,
    pub seed: u64,
    pub jobs: usize,
}

/// For each `k`, samples codes and runs closed-loop trials of `base` with the
/// rate changed to `k` bits per step and the quantizer redesigned.
pub fn experiment_lqr_sweep(base: &LoopConfig, spec: &SweepSpec) -> Result<Vec<RateSummary>, SimulateError> {
    spec.k_values
        .iter()
        .map(|&k| {
            if k == 0 || k >= base.n {
                return Err(SimulateError::Config(format!("k = {k} outside 1..{}", base.n)));
            }
            let cfg = LoopConfig {
                k,
                ..base.clone()
            }
            .with_designed_quantizer()?;
            let jobs: Vec<(usize, usize)> = (0..spec.codes_per_k)
                .flat_map(|c| (0..spec.runs_per_code).map(move |r| (c, r)))
                .collect();
            let codes: Vec<Arc<ToeplitzCode>> = with_pool(spec.jobs, || {
                (0..spec.codes_per_k)
                    .into_par_iter()
                    .map(|c| {
                        let seed = derive_seed(&[spec.seed, k as u64, c as u64]);
                        ToeplitzCode::sample(cfg.n, k, cfg.code_p, cfg.depth, seed).map(Arc::new)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })?;
            let records = with_pool(spec.jobs, || {
                jobs.par_iter()
                    .map(|&(c, r)| {
                        let run = LoopConfig {
                            seed: derive_seed(&[spec.seed, k as u64, c as u64, r as u64, 1]),
                            code_seed: codes[c].seed(),
                            ..cfg.clone()
                        };
                        run_closed_loop_with_code(&run, codes[c].clone()).map(|rec| rec.lqr_cost)
                    })
                    .collect::<Result<Vec<f64>, SimulateError>>()
            })?;
            let mut code_costs = Vec::with_capacity(spec.codes_per_k);
            let mut diverged = 0;
            for chunk in records.chunks(spec.runs_per_code.max(1)) {
                let finite: Vec<f64> = chunk.iter().copied().filter(|c| c.is_finite()).collect();
                diverged += chunk.len() - finite.len();
                code_costs.push(if finite.is_empty() {
                    None
                } else {
                    Some(finite.iter().sum::<f64>() / finite.len() as f64)
                });
            }
            Ok(RateSummary {
                k,
                delta: cfg.quantizers[0].delta(),
                code_costs,
                diverged_runs: diverged,
                total_runs: records.len(),
            })
        })
        .collect()
}

/// Runs `seeds` independent trials of `base`, each with its own code and
/// channel realization.
pub fn run_many(base: &LoopConfig, seeds: &[u64], jobs: usize) -> Vec<Result<TrialRecord, SimulateError>> {
    with_pool(jobs, || {
        seeds
            .par_iter()
            .map(|&s| {
                let cfg = LoopConfig {
                    seed: s,
                    code_seed: derive_seed(&[s, 0]),
                    ..base.clone()
                };
                run_closed_loop(&cfg)
            })
            .collect()
    })
}

/// Configurations of the two reference experiments.
pub mod presets {
    use super::*;

    /// Inverted pendulum on a cart sampled at 0.1 s, stabilized over
    /// BEC(0.3) with 5 bits per step in 15 channel uses.
    pub fn cart_stick(seed: u64, horizon: usize) -> Result<LoopConfig, SimulateError> {
        let f = DMatrix::from_row_slice(3, 3, &[1.161, 0.105, 0.0, 3.3, 1.161, 0.002, -3.265, -0.160, 0.979]);
        let g = DMatrix::from_column_slice(3, 1, &[-0.003, -0.068, 0.859]);
        let h = DMatrix::from_row_slice(1, 3, &[10.0, 0.0, 0.0]);
        // u = −K x̂ with K = [−81.55, −14.37, −0.04].
        let gain = DMatrix::from_row_slice(1, 3, &[81.55, 14.37, 0.04]);
        let plant = CanonicalPlant::from_physical(f, g, h, gain, 0.05, 0.05)?;
        LoopConfig {
            plant,
            n: 15,
            k: 5,
            code_p: 0.5,
            code_seed: derive_seed(&[seed, 0]),
            depth: horizon.max(1),
            channel: ChannelSpec::bec(0.3)?,
            quantizers: Vec::new(),
            horizon,
            feedback_period: Some(32),
            filter: FilterKind::Hypercuboid,
            eps_prime: 0.1,
            timing: EstimateTiming::Filtered,
            observer_knows_control: false,
            noise: NoiseKind::TruncatedGaussian { sigma: 0.1 },
            seed,
        }
        .with_designed_quantizer()
    }

    /// Three-state unstable plant with eigenvalues {2, 0.5, −0.5}, `G = I`,
    /// deadbeat control on the one-step prediction.
    pub fn example2(k: usize, seed: u64, horizon: usize) -> Result<LoopConfig, SimulateError> {
        let a = [-2.0, -0.25, 0.5];
        let f = crate::thresholds::companion(&a);
        let gain = -f;
        let plant = CanonicalPlant::from_coefficients(&a).with_gain(gain).with_noise(5.0, 5.0);
        LoopConfig {
            plant,
            n: 15,
            k,
            code_p: 0.5,
            code_seed: derive_seed(&[seed, 0]),
            depth: horizon.max(1),
            channel: ChannelSpec::bec(0.3)?,
            quantizers: Vec::new(),
            horizon,
            feedback_period: None,
            filter: FilterKind::Hypercuboid,
            eps_prime: 0.1,
            timing: EstimateTiming::Predicted,
            observer_knows_control: false,
            noise: NoiseKind::TruncatedGaussian { sigma: 1.0 },
            seed,
        }
        .with_designed_quantizer()
    }
}

#[cfg(test)]
mod test {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn seeds_are_spread() {
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
        assert_ne!(derive_seed(&[0]), derive_seed(&[1]));
        assert_eq!(derive_seed(&[7, 8]), derive_seed(&[7, 8]));
    }

    #[test]
    fn noise_stays_inside_its_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [NoiseKind::TruncatedGaussian { sigma: 1.0 }, NoiseKind::Uniform] {
            assert!((0..10_000).all(|_| draw_noise(kind, 5.0, &mut rng).abs() < 2.5));
        }
        assert_eq!(draw_noise(NoiseKind::Uniform, 0.0, &mut rng), 0.0);
    }

    #[test]
    fn index_packing_round_trip() {
        let qs = vec![QuantizerSpec::with_bits(1.0, 3).unwrap(), QuantizerSpec::with_bits(1.0, 2).unwrap()];
        let bits = pack_indices(&[5, 2], &qs);
        assert_eq!(bits.len(), 5);
        assert_eq!(unpack_indices(&bits, &qs), vec![5, 2]);
    }

    #[test]
    fn log_linear_fit_exact_line() {
        let pts: Vec<(f64, f64)> = (1..6).map(|d| (d as f64, 1.0 - 2.0 * d as f64)).collect();
        let fit = fit_log_linear(&pts).unwrap();
        assert_abs_diff_eq!(fit.slope, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit_log_linear(&pts[..1]).is_none());
    }

    #[test]
    fn preset_plants() {
        let cs = presets::cart_stick(1, 10).unwrap();
        assert!(cs.plant.closed_loop_radius().unwrap() < 1.0);
        assert_eq!(cs.quantizers[0].levels(), 32);
        let e2 = presets::example2(5, 1, 10).unwrap();
        assert_abs_diff_eq!(e2.quantizers[0].delta(), 33.75 / 28.25, epsilon = 1e-6);
        assert!(e2.plant.closed_loop_radius().unwrap() < 1e-6);
    }

    #[test]
    fn sweep_summary_statistics() {
        let s = RateSummary {
            k: 3,
            delta: 1.0,
            code_costs: vec![Some(3.0), None, Some(1.0), Some(2.0)],
            diverged_runs: 1,
            total_runs: 4,
        };
        assert_eq!(s.median(), Some(2.0));
        assert_eq!(s.cdf(), vec![(1.0, 0.25), (2.0, 0.5), (3.0, 0.75)]);
    }
}
