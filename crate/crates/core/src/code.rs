//! Time-invariant causal linear codes with block-Toeplitz parity checks.
//!
//! A code is fixed by parity blocks `H_1..H_D` (each `nbar × n`). The codeword
//! `c_1, c_2, ...` satisfies `Σ_{i=1..τ} H_i c_{τ−i+1} = 0` for every `τ`, and
//! the generator blocks `G_1..G_D` are derived so that `c_τ = Σ_i G_i b_{τ−i+1}`
//! produces such codewords from `k`-bit messages.
//!
//! Times are 1-based throughout. Blocks are addressed by lag: `h_lag(0)` is
//! `H_1`, the block that multiplies the current codeword.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gf2::{BitMatrix, BitVec, Solution};

/// Largest `k·d` accepted by the exhaustive distance enumerators.
pub const ENUMERATION_BUDGET: usize = 22;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodeError {
    #[error("invalid code dimensions n = {n}, k = {k} (need 0 < k < n)")]
    InvalidDimensions { n: usize, k: usize },
    #[error("ensemble parameter p = {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("depth must be at least 1")]
    InvalidDepth,
    #[error("leading parity block does not have full row rank")]
    RankDeficientLeadingBlock,
    #[error("parity block {index} has shape {rows}x{cols}, expected {nbar}x{n}")]
    BlockShape {
        index: usize,
        rows: usize,
        cols: usize,
        nbar: usize,
        n: usize,
    },
    #[error("message history of {window} steps exceeds code depth {depth}")]
    HistoryOverflow { window: usize, depth: usize },
    #[error("message has {got} bits, expected {expected}")]
    MessageLength { expected: usize, got: usize },
    #[error("enumeration of 2^{bits} messages exceeds the budget of 2^{ENUMERATION_BUDGET}")]
    EnumerationBudget { bits: usize },
    #[error("packet length {packet_len} does not divide n = {n}")]
    PacketLength { packet_len: usize, n: usize },
    #[error("malformed code file: {0}")]
    Parse(String),
}

/// A causal linear code with block-Toeplitz parity-check matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzCode {
    n: usize,
    k: usize,
    p: f64,
    seed: u64,
    h: Vec<BitMatrix>,
    g: Vec<BitMatrix>,
}

impl ToeplitzCode {
    /// Draws a code from the Toeplitz ensemble: `H_1 = [I_nbar | 0]` and the
    /// entries of `H_2..H_D` i.i.d. Bernoulli(`p`).
    pub fn sample(n: usize, k: usize, p: f64, depth: usize, seed: u64) -> Result<Self, CodeError> {
        check_dims(n, k)?;
        if !(p > 0.0 && p < 1.0) {
            return Err(CodeError::InvalidProbability(p));
        }
        if depth == 0 {
            return Err(CodeError::InvalidDepth);
        }
        let nbar = n - k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = Vec::with_capacity(depth);
        h.push(BitMatrix::from_fn(nbar, n, |i, j| i == j));
        for _ in 1..depth {
            h.push(BitMatrix::from_fn(nbar, n, |_, _| rng.random_bool(p)));
        }
        Self::from_parity_blocks(n, k, p, seed, h)
    }

    /// Builds a code from explicit parity blocks, deriving the generator.
    pub fn from_parity_blocks(
        n: usize,
        k: usize,
        p: f64,
        seed: u64,
        h: Vec<BitMatrix>,
    ) -> Result<Self, CodeError> {
        check_dims(n, k)?;
        if h.is_empty() {
            return Err(CodeError::InvalidDepth);
        }
        for (index, b) in h.iter().enumerate() {
            if b.rows() != n - k || b.cols() != n {
                return Err(CodeError::BlockShape {
                    index: index + 1,
                    rows: b.rows(),
                    cols: b.cols(),
                    nbar: n - k,
                    n,
                });
            }
        }
        let g = derive_generator(&h)?;
        Ok(Self { n, k, p, seed, h, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nbar(&self) -> usize {
        self.n - self.k
    }

    pub fn depth(&self) -> usize {
        self.h.len()
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn h_blocks(&self) -> &[BitMatrix] {
        &self.h
    }

    pub fn g_blocks(&self) -> &[BitMatrix] {
        &self.g
    }

    /// `H_{lag+1}`, or `None` beyond the stored depth.
    pub fn h_lag(&self, lag: usize) -> Option<&BitMatrix> {
        self.h.get(lag)
    }

    /// `G_{lag+1}`, or `None` beyond the stored depth.
    pub fn g_lag(&self, lag: usize) -> Option<&BitMatrix> {
        self.g.get(lag)
    }

    /// The block-lower-triangular parity-check matrix over `t` steps.
    pub fn stacked_parity(&self, t: usize) -> BitMatrix {
        assert!(t <= self.depth(), "stacked matrix deeper than the code");
        stack_toeplitz(&self.h, t, self.nbar(), self.n)
    }

    /// The block-lower-triangular generator matrix over `t` steps.
    pub fn stacked_generator(&self, t: usize) -> BitMatrix {
        assert!(t <= self.depth(), "stacked matrix deeper than the code");
        stack_toeplitz(&self.g, t, self.n, self.k)
    }

    /// The code obtained by replacing every entry `b` of every block with
    /// `b·I_L`. Packet `j` of a step is then bits `jL..(j+1)L`.
    pub fn expand_packets(&self, packet_len: usize) -> ToeplitzCode {
        assert!(packet_len >= 1, "packet length must be positive");
        let h: Vec<_> = self.h.iter().map(|b| b.kron_identity(packet_len)).collect();
        let g = self.g.iter().map(|b| b.kron_identity(packet_len)).collect();
        ToeplitzCode {
            n: self.n * packet_len,
            k: self.k * packet_len,
            p: self.p,
            seed: self.seed,
            h,
            g,
        }
    }

    /// Plain-text form: a header `n k p depth seed`, then one line per parity
    /// block listing its rows in hex (bits left to right, four per digit,
    /// zero padded on the right).
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {} {} {}\n", self.n, self.k, self.p, self.depth(), self.seed);
        for b in &self.h {
            let rows: Vec<String> = (0..b.rows()).map(|i| row_to_hex(&b.row(i))).collect();
            let _ = writeln!(s, "{}", rows.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CodeError> {
        let bad = |m: &str| CodeError::Parse(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty input"))?
            .split_whitespace()
            .collect();
        if header.len() != 5 {
            return Err(bad("header must be `n k p depth seed`"));
        }
        let n: usize = header[0].parse().map_err(|_| bad("n"))?;
        let k: usize = header[1].parse().map_err(|_| bad("k"))?;
        let p: f64 = header[2].parse().map_err(|_| bad("p"))?;
        let depth: usize = header[3].parse().map_err(|_| bad("depth"))?;
        let seed: u64 = header[4].parse().map_err(|_| bad("seed"))?;
        check_dims(n, k)?;
        let mut h = Vec::with_capacity(depth);
        for index in 0..depth {
            let line = lines
                .next()
                .ok_or_else(|| CodeError::Parse(format!("missing parity block {}", index + 1)))?;
            let rows: Vec<&str> = line.split_whitespace().collect();
            if rows.len() != n - k {
                return Err(CodeError::Parse(format!(
                    "parity block {} has {} rows, expected {}",
                    index + 1,
                    rows.len(),
                    n - k
                )));
            }
            let vecs = rows
                .iter()
                .map(|r| hex_to_row(r, n))
                .collect::<Result<Vec<_>, _>>()?;
            h.push(BitMatrix::from_row_vecs(n, &vecs));
        }
        if lines.next().is_some() {
            return Err(bad("trailing content after the last parity block"));
        }
        Self::from_parity_blocks(n, k, p, seed, h)
    }
}

fn check_dims(n: usize, k: usize) -> Result<(), CodeError> {
    if k == 0 || k >= n {
        return Err(CodeError::InvalidDimensions { n, k });
    }
    Ok(())
}

fn stack_toeplitz(blocks: &[BitMatrix], t: usize, r: usize, c: usize) -> BitMatrix {
    let mut m = BitMatrix::zeros(r * t, c * t);
    for bi in 0..t {
        for bj in 0..=bi {
            let b = &blocks[bi - bj];
            for i in 0..r {
                for j in b.row(i).ones() {
                    m.set(bi * r + i, bj * c + j, true);
                }
            }
        }
    }
    m
}

fn row_to_hex(row: &BitVec) -> String {
    let digits = row.len().div_ceil(4);
    (0..digits)
        .map(|d| {
            let v = (0..4).fold(0u32, |acc, b| {
                let i = 4 * d + b;
                acc << 1 | (i < row.len() && row.get(i)) as u32
            });
            char::from_digit(v, 16).expect("nibble")
        })
        .collect()
}

fn hex_to_row(s: &str, n: usize) -> Result<BitVec, CodeError> {
    if s.len() != n.div_ceil(4) {
        return Err(CodeError::Parse(format!("row `{s}` has wrong length for n = {n}")));
    }
    let mut row = BitVec::zeros(n);
    for (d, ch) in s.chars().enumerate() {
        let v = ch
            .to_digit(16)
            .ok_or_else(|| CodeError::Parse(format!("bad hex digit `{ch}`")))?;
        for b in 0..4 {
            let bit = v >> (3 - b) & 1 == 1;
            let i = 4 * d + b;
            if i < n {
                row.set(i, bit);
            } else if bit {
                return Err(CodeError::Parse(format!("nonzero padding in row `{s}`")));
            }
        }
    }
    Ok(row)
}

/// Derives generator blocks from parity blocks.
///
/// `G_1` is a basis of the null space of `H_1`. For `τ ≥ 2`, each column of
/// `G_τ` is the canonical solution (free variables zero) of
/// `H_1 G_τ = Σ_{i=2..τ} H_i G_{τ−i+1}`.
pub fn derive_generator(h: &[BitMatrix]) -> Result<Vec<BitMatrix>, CodeError> {
    let h1 = h.first().ok_or(CodeError::InvalidDepth)?;
    let (nbar, n) = (h1.rows(), h1.cols());
    if h1.rank() != nbar {
        return Err(CodeError::RankDeficientLeadingBlock);
    }
    let k = n - nbar;
    let mut g = Vec::with_capacity(h.len());
    g.push(BitMatrix::from_col_vecs(n, &h1.null_space()));
    for tau in 1..h.len() {
        let mut rhs = BitMatrix::zeros(nbar, k);
        for i in 1..=tau {
            rhs = rhs.add(&h[i].mul(&g[tau - i]));
        }
        let mut block = BitMatrix::zeros(n, k);
        for j in 0..k {
            let x = match h1.solve(&rhs.col(j)) {
                Solution::Unique(x) => x,
                Solution::Underdetermined { particular, .. } => particular,
                Solution::Inconsistent => unreachable!("full-row-rank system is consistent"),
            };
            block.set_col(j, &x);
        }
        g.push(block);
    }
    Ok(g)
}

/// Streaming encoder state: the retained message history.
#[derive(Clone, Debug)]
pub struct Encoder {
    code: Arc<ToeplitzCode>,
    next: usize,
    first_retained: usize,
    history: VecDeque<BitVec>,
}

impl Encoder {
    pub fn new(code: Arc<ToeplitzCode>) -> Self {
        Self {
            code,
            next: 1,
            first_retained: 1,
            history: VecDeque::new(),
        }
    }

    pub fn code(&self) -> &Arc<ToeplitzCode> {
        &self.code
    }

    /// Time index of the next message to be encoded.
    pub fn next_time(&self) -> usize {
        self.next
    }

    /// Oldest message time still contributing to the output.
    pub fn first_retained(&self) -> usize {
        self.first_retained
    }

    /// Encodes `b_t` for `t = next_time()`: `c_t = Σ_i G_i b_{t−i+1}` over the
    /// retained history.
    pub fn encode_step(&mut self, b: &BitVec) -> Result<BitVec, CodeError> {
        if b.len() != self.code.k {
            return Err(CodeError::MessageLength {
                expected: self.code.k,
                got: b.len(),
            });
        }
        let window = self.next - self.first_retained + 1;
        if window > self.code.depth() {
            return Err(CodeError::HistoryOverflow {
                window,
                depth: self.code.depth(),
            });
        }
        self.history.push_back(b.clone());
        let mut c = BitVec::zeros(self.code.n);
        for (lag, msg) in self.history.iter().rev().enumerate() {
            if !msg.is_zero() {
                c.xor_assign(&self.code.g[lag].mul_vec(msg));
            }
        }
        self.next += 1;
        Ok(c)
    }

    /// Drops every message older than `cutoff` from future outputs, so that
    /// `c_τ = G_{τ−cutoff+1} b_cutoff + … + G_1 b_τ`.
    pub fn truncate_memory(&mut self, cutoff: usize) {
        assert!(cutoff <= self.next, "cutoff {cutoff} lies in the future");
        while self.first_retained < cutoff {
            self.history.pop_front();
            self.first_retained += 1;
        }
    }
}

/// Weight statistics of the delay-`d` codebook `C_{d,d}`: codewords over
/// `d` steps whose first message block is nonzero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceReport {
    pub d: usize,
    pub w_min: usize,
    /// `counts[w]` is the number of codewords of weight `w`.
    pub counts: Vec<u64>,
}

impl DistanceReport {
    pub fn count(&self, w: usize) -> u64 {
        self.counts.get(w).copied().unwrap_or(0)
    }
}

/// Exhaustive bit-weight distribution of `C_{d,d}`.
pub fn weight_distribution(code: &ToeplitzCode, d: usize) -> Result<DistanceReport, CodeError> {
    enumerate_weights(code, d, 1)
}

/// Exhaustive distribution of packet weights (number of nonzero `L`-bit
/// groups) of `C_{d,d}`.
pub fn packet_weight_distribution(
    code: &ToeplitzCode,
    d: usize,
    packet_len: usize,
) -> Result<DistanceReport, CodeError> {
    if packet_len == 0 || code.n % packet_len != 0 {
        return Err(CodeError::PacketLength {
            packet_len,
            n: code.n,
        });
    }
    enumerate_weights(code, d, packet_len)
}

fn enumerate_weights(code: &ToeplitzCode, d: usize, packet_len: usize) -> Result<DistanceReport, CodeError> {
    let bits = code.k * d;
    if d == 0 || d > code.depth() {
        return Err(CodeError::InvalidDepth);
    }
    if bits > ENUMERATION_BUDGET {
        return Err(CodeError::EnumerationBudget { bits });
    }
    // Message bit (s, j) contributes column j of G_{τ−s+1} to every step τ ≥ s.
    let gen = code.stacked_generator(d);
    let cols: Vec<BitVec> = (0..bits).map(|c| gen.col(c)).collect();
    let packets = code.n * d / packet_len;
    let weight = |c: &BitVec| -> usize {
        if packet_len == 1 {
            return c.weight();
        }
        (0..packets)
            .filter(|&q| (q * packet_len..(q + 1) * packet_len).any(|i| c.get(i)))
            .count()
    };
    let first_mask = (1u64 << code.k) - 1;
    let mut counts = vec![0u64; packets + 1];
    let mut c = BitVec::zeros(code.n * d);
    let mut gray = 0u64;
    for step in 1..(1u64 << bits) {
        let flip = step.trailing_zeros() as usize;
        gray ^= 1 << flip;
        c.xor_assign(&cols[flip]);
        if gray & first_mask != 0 {
            counts[weight(&c)] += 1;
        }
    }
    let w_min = counts.iter().position(|&n| n > 0).expect("nonzero first block");
    Ok(DistanceReport { d, w_min, counts })
}

/// True iff `w_min(d) ≥ α·n·d` and `N_{w,d} ≤ 2^{θ w}` for every
/// `d_o ≤ d ≤ d_max` and every weight `w`.
pub fn check_anytime_distance(
    code: &ToeplitzCode,
    alpha: f64,
    theta: f64,
    d_o: usize,
    d_max: usize,
) -> Result<bool, CodeError> {
    if code.k * d_max > ENUMERATION_BUDGET {
        return Err(CodeError::EnumerationBudget { bits: code.k * d_max });
    }
    for d in d_o.max(1)..=d_max {
        let rep = weight_distribution(code, d)?;
        if (rep.w_min as f64) < alpha * (code.n * d) as f64 {
            return Ok(false);
        }
        let crowded = rep
            .counts
            .iter()
            .enumerate()
            .any(|(w, &n)| n > 0 && (n as f64).log2() > theta * w as f64);
        if crowded {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod test {
    use super::*;

    fn code(n: usize, k: usize, depth: usize, seed: u64) -> ToeplitzCode {
        ToeplitzCode::sample(n, k, 0.5, depth, seed).unwrap()
    }

    #[test]
    fn smallest_shape() {
        let c = code(2, 1, 4, 7);
        assert_eq!(c.h_blocks()[0], BitMatrix::from_rows(&[[1, 0]]));
        assert_eq!(c.depth(), 4);
        assert!(c.h_blocks()[1..].iter().all(|b| (b.rows(), b.cols()) == (1, 2)));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            ToeplitzCode::sample(15, 15, 0.5, 4, 1),
            Err(CodeError::InvalidDimensions { .. })
        ));
        assert!(ToeplitzCode::sample(4, 2, 0.0, 4, 1).is_err());
        assert!(ToeplitzCode::sample(4, 2, 0.5, 0, 1).is_err());
    }

    #[test]
    fn seeds_reproduce() {
        assert_eq!(code(15, 5, 8, 1), code(15, 5, 8, 1));
        assert_ne!(code(15, 5, 8, 1).h_blocks()[1], code(15, 5, 8, 2).h_blocks()[1]);
    }

    #[test]
    fn memoryless_generator() {
        let (n, k) = (5, 2);
        let mut h = vec![BitMatrix::from_fn(3, 5, |i, j| i == j)];
        h.extend((0..3).map(|_| BitMatrix::zeros(3, 5)));
        let g = derive_generator(&h).unwrap();
        assert_eq!(g[0], BitMatrix::zeros(n - k, k).vstack(&BitMatrix::identity(k)));
        assert!(g[1..].iter().all(BitMatrix::is_zero));
    }

    #[test]
    fn orthogonality_to_depth() {
        let c = code(4, 2, 6, 9);
        for tau in 0..6 {
            let mut s = BitMatrix::zeros(2, 2);
            for i in 0..=tau {
                s = s.add(&c.h_blocks()[i].mul(&c.g_blocks()[tau - i]));
            }
            assert!(s.is_zero(), "tau = {}", tau + 1);
        }
    }

    #[test]
    fn impulse_response() {
        let c = Arc::new(code(4, 2, 5, 3));
        let mut enc = Encoder::new(c.clone());
        let e1 = BitVec::from_bits(&[1, 0]);
        let zero = BitVec::zeros(2);
        for tau in 0..5 {
            let out = enc.encode_step(if tau == 0 { &e1 } else { &zero }).unwrap();
            assert_eq!(out, c.g_blocks()[tau].col(0));
        }
        assert!(matches!(
            enc.encode_step(&zero),
            Err(CodeError::HistoryOverflow { window: 6, depth: 5 })
        ));
    }

    #[test]
    fn truncation_to_now_keeps_only_next_block() {
        let c = Arc::new(code(4, 2, 5, 3));
        let mut enc = Encoder::new(c.clone());
        let b = BitVec::from_bits(&[1, 1]);
        enc.encode_step(&b).unwrap();
        enc.encode_step(&b).unwrap();
        enc.truncate_memory(enc.next_time());
        let out = enc.encode_step(&b).unwrap();
        assert_eq!(out, c.g_blocks()[0].mul_vec(&b));
    }

    #[test]
    fn truncated_impulse_response() {
        let c = Arc::new(code(4, 2, 6, 4));
        let mut enc = Encoder::new(c.clone());
        let b1 = BitVec::from_bits(&[1, 0]);
        let b2 = BitVec::from_bits(&[0, 1]);
        let zero = BitVec::zeros(2);
        enc.encode_step(&b1).unwrap();
        enc.encode_step(&b2).unwrap();
        enc.truncate_memory(2);
        for tau in 3..=6 {
            assert_eq!(enc.encode_step(&zero).unwrap(), c.g_blocks()[tau - 2].mul_vec(&b2));
        }
    }

    #[test]
    fn depth_one_distance_counts() {
        let c = code(6, 3, 3, 2);
        let rep = weight_distribution(&c, 1).unwrap();
        assert_eq!(rep.counts.iter().sum::<u64>(), 7);
    }

    #[test]
    fn distance_budget_refusal() {
        let c = code(15, 5, 8, 1);
        assert!(matches!(
            weight_distribution(&c, 5),
            Err(CodeError::EnumerationBudget { bits: 25 })
        ));
        assert!(check_anytime_distance(&c, 0.0, 15.0, 1, 5).is_err());
    }

    #[test]
    fn vacuous_and_impossible_distance_bounds() {
        let c = code(4, 1, 6, 5);
        assert!(check_anytime_distance(&c, 0.0, 4.0, 1, 5).unwrap());
        assert!(!check_anytime_distance(&c, 1.01, 4.0, 1, 5).unwrap());
    }

    #[test]
    fn text_round_trip() {
        let c = code(15, 5, 6, 21);
        let back = ToeplitzCode::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn hex_rows_read_left_to_right() {
        let row = BitVec::from_bits(&[1, 0, 0, 0, 0, 1]);
        assert_eq!(row_to_hex(&row), "84");
        assert_eq!(hex_to_row("84", 6).unwrap(), row);
        assert!(hex_to_row("85", 6).is_err());
    }

    #[test]
    fn rejects_malformed_text() {
        assert!(ToeplitzCode::from_text("").is_err());
        assert!(ToeplitzCode::from_text("2 1 0.5 2 0\n8\n").is_err());
        assert!(ToeplitzCode::from_text("2 1 0.5 1 0\n0\n").is_err());
    }

    #[test]
    fn packet_expansion_keeps_structure() {
        let c = code(3, 1, 4, 8);
        let e = c.expand_packets(2);
        assert_eq!((e.n(), e.k()), (6, 2));
        assert_eq!(derive_generator(e.h_blocks()).unwrap(), e.g_blocks());
        let rep = packet_weight_distribution(&e, 2, 2).unwrap();
        assert_eq!(rep.w_min, weight_distribution(&c, 2).unwrap().w_min);
    }
}
