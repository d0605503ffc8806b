//! Online maximum-likelihood decoding of Toeplitz codes over the erasure
//! channel.
//!
//! Over an erasure channel ML decoding never errs; it can only defer. At each
//! step the decoder finds the longest prefix of the unresolved window whose
//! erased bits are pinned down by the parity checks, and freezes them.
//!
//! Bookkeeping is relative to a frame origin `o`. Frame values are the actual
//! codeword bits minus the contribution of messages older than `o`, so that
//! the frame stream is a codeword of the code started at `o`. The origin moves
//! forward whenever the decoder sends a truncation cutoff to the encoder.

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::channel::ErasureSymbol;
use crate::code::ToeplitzCode;
use crate::gf2::{BitMatrix, BitVec, Solution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecoderError {
    #[error("expected {expected} channel symbols, got {got}")]
    SymbolCount { expected: usize, got: usize },
    #[error("decoding window {window} exceeds code depth {depth}")]
    HistoryOverflow { window: usize, depth: usize },
    #[error("internal corruption: {0}")]
    Corruption(String),
    #[error("generator leading block is not injective")]
    NonInvertible,
}

/// Status of one codeword bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitStatus {
    Known(bool),
    Pending,
}

/// Erased bits of one time instant that became known in a decode step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedBits {
    pub time: usize,
    pub positions: Vec<usize>,
    pub values: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub time: usize,
    pub newly_resolved: Vec<ResolvedBits>,
    /// `t − e + 1` for the earliest time `e` with a pending bit, or 0.
    pub earliest_unresolved_delay: usize,
    /// Messages whose codeword prefix became fully known, in time order.
    pub new_messages: Vec<(usize, BitVec)>,
}

/// A truncation request for the encoder: from `effective_from` on, messages
/// before `cutoff` no longer contribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackReport {
    pub issued_at: usize,
    pub cutoff: usize,
    pub effective_from: usize,
}

/// One line of the per-step decoder trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub t: usize,
    pub erasures: usize,
    pub earliest_pending_delay: usize,
    pub resolved_count: usize,
}

impl TraceRow {
    pub const HEADER: &'static str = "t,erasures,earliest_pending_delay,resolved_count";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{}",
            self.t, self.erasures, self.earliest_pending_delay, self.resolved_count
        )
    }
}

#[derive(Debug, Clone)]
struct Slot {
    actual: BitVec,
    known: BitVec,
    erased: BitVec,
    offset: BitVec,
    /// Parity-check contribution of the fully known times before `e`.
    cache: BitVec,
}

impl Slot {
    fn frame(&self) -> BitVec {
        self.actual.xor(&self.offset)
    }

    fn known_frame(&self) -> BitVec {
        let mut f = self.frame();
        f.and_assign(&self.known);
        f
    }

    fn pending(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.actual.len()).filter(|&i| !self.known.get(i))
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    code: Arc<ToeplitzCode>,
    g1_inverse: BitMatrix,
    /// `H_lag` transposed, so that row `p` is column `p` of the block.
    h_columns: Vec<BitMatrix>,
    t: usize,
    origin: usize,
    earliest: usize,
    slots: VecDeque<Slot>,
    schedule: Vec<FeedbackReport>,
    messages: VecDeque<BitVec>,
    message_base: usize,
    last_bit_ops: u64,
    last_trace: Option<TraceRow>,
}

impl Decoder {
    pub fn new(code: Arc<ToeplitzCode>) -> Result<Self, DecoderError> {
        let g1_inverse = code.g_lag(0).expect("depth >= 1").left_inverse().ok_or(DecoderError::NonInvertible)?;
        let h_columns = code.h_blocks().iter().map(BitMatrix::transpose).collect();
        Ok(Self {
            code,
            g1_inverse,
            h_columns,
            t: 0,
            origin: 1,
            earliest: 1,
            slots: VecDeque::new(),
            schedule: Vec::new(),
            messages: VecDeque::new(),
            message_base: 1,
            last_bit_ops: 0,
            last_trace: None,
        })
    }

    pub fn code(&self) -> &Arc<ToeplitzCode> {
        &self.code
    }

    /// Last ingested time.
    pub fn time(&self) -> usize {
        self.t
    }

    /// Earliest time with a pending bit, or `t + 1`.
    pub fn earliest_pending(&self) -> usize {
        self.earliest
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    /// Elimination work of the last step, in bit operations.
    pub fn last_bit_ops(&self) -> u64 {
        self.last_bit_ops
    }

    pub fn last_trace(&self) -> Option<TraceRow> {
        self.last_trace
    }

    /// Status of bit `pos` at time `time`, if that time is still held.
    pub fn status(&self, time: usize, pos: usize) -> Option<BitStatus> {
        let slot = self.slot(time)?;
        Some(if slot.known.get(pos) {
            BitStatus::Known(slot.actual.get(pos))
        } else {
            BitStatus::Pending
        })
    }

    /// Decoded message `b̂_time`, if resolved and still held.
    pub fn message(&self, time: usize) -> Option<&BitVec> {
        time.checked_sub(self.message_base).and_then(|i| self.messages.get(i))
    }

    fn slot(&self, time: usize) -> Option<&Slot> {
        time.checked_sub(self.origin).and_then(|i| self.slots.get(i))
    }

    fn slot_index(&self, time: usize) -> usize {
        time - self.origin
    }

    /// First message time contributing to the encoder output at `time`.
    fn retained_start(&self, time: usize) -> usize {
        self.schedule
            .iter()
            .rev()
            .find(|r| r.effective_from <= time)
            .map_or(1, |r| r.cutoff)
    }

    fn h(&self, lag: usize) -> &BitMatrix {
        &self.code.h_blocks()[lag]
    }

    /// `Σ_{j=from}^{to−1} H_{τ−j} frame_j`.
    fn check_contribution(&self, tau: usize, from: usize, to: usize) -> BitVec {
        let mut acc = BitVec::zeros(self.code.nbar());
        for j in from..to {
            let frame = self.slots[self.slot_index(j)].frame();
            if !frame.is_zero() {
                acc.xor_assign(&self.h(tau - j).mul_vec(&frame));
            }
        }
        acc
    }

    /// `Σ_{j=lo(τ)}^{o−1} G_{τ−j} b̂_j`.
    fn offset_for(&self, tau: usize) -> BitVec {
        let mut acc = BitVec::zeros(self.code.n());
        for j in self.retained_start(tau)..self.origin {
            let b = self.message(j).expect("messages before the origin are resolved");
            if !b.is_zero() {
                acc.xor_assign(&self.code.g_lag(tau - j).expect("within depth").mul_vec(b));
            }
        }
        acc
    }

    /// Ingests the channel output for the next time instant.
    pub fn decode_step(&mut self, symbols: &[ErasureSymbol]) -> Result<DecodeOutcome, DecoderError> {
        let n = self.code.n();
        if symbols.len() != n {
            return Err(DecoderError::SymbolCount {
                expected: n,
                got: symbols.len(),
            });
        }
        let t = self.t + 1;
        let window = t - self.origin + 1;
        if window > self.code.depth() {
            return Err(DecoderError::HistoryOverflow {
                window,
                depth: self.code.depth(),
            });
        }
        self.t = t;
        let actual = BitVec::from_bools(symbols.iter().map(|s| s.bit().unwrap_or(false)));
        let erased = BitVec::from_bools(symbols.iter().map(|s| s.is_erased()));
        let known = BitVec::from_bools(symbols.iter().map(|s| !s.is_erased()));
        let offset = self.offset_for(t);
        self.slots.push_back(Slot {
            actual,
            known,
            erased: erased.clone(),
            offset,
            cache: BitVec::zeros(self.code.nbar()),
        });
        let cache = self.check_contribution(t, self.origin, self.earliest);
        let last = self.slots.len() - 1;
        self.slots[last].cache = cache;

        let before = self.earliest;
        let newly_resolved = self.eliminate()?;
        let new_messages = self.advance(before)?;

        let delay = if self.earliest > t { 0 } else { t - self.earliest + 1 };
        self.last_trace = Some(TraceRow {
            t,
            erasures: erased.weight(),
            earliest_pending_delay: delay,
            resolved_count: newly_resolved.iter().map(|r| r.positions.len()).sum(),
        });
        Ok(DecodeOutcome {
            time: t,
            newly_resolved,
            earliest_unresolved_delay: delay,
            new_messages,
        })
    }

    /// Solves for the longest determined prefix of the pending window and
    /// freezes it. Moves `earliest` past the solved times.
    fn eliminate(&mut self) -> Result<Vec<ResolvedBits>, DecoderError> {
        self.last_bit_ops = 0;
        let (e, t) = (self.earliest, self.t);
        if e > t {
            return Ok(Vec::new());
        }
        let nbar = self.code.nbar();
        // Columns: pending bits, latest time first.
        let columns: Vec<(usize, usize)> = (e..=t)
            .rev()
            .flat_map(|j| {
                let slot = &self.slots[self.slot_index(j)];
                slot.pending().map(move |p| (j, p)).collect::<Vec<_>>()
            })
            .collect();
        let rows = (t - e + 1) * nbar;
        let syndrome = self.pending_syndrome();
        if columns.is_empty() {
            if !syndrome.is_zero() {
                return Err(DecoderError::Corruption("fully received window fails its parity checks".into()));
            }
            self.earliest = t + 1;
            return Ok(Vec::new());
        }
        let mut system = BitMatrix::zeros(rows, columns.len() + 1);
        for (c, &(j, p)) in columns.iter().enumerate() {
            for tau in j..=t {
                let col = self.h_columns[tau - j].row(p);
                for r in col.ones() {
                    system.set((tau - e) * nbar + r, c, true);
                }
            }
        }
        for r in syndrome.ones() {
            system.set(r, columns.len(), true);
        }
        let ech = system.row_echelon();
        self.last_bit_ops = ech.bit_ops();
        if ech.pivots.last() == Some(&columns.len()) {
            return Err(DecoderError::Corruption("erasure system is inconsistent".into()));
        }
        let mut is_pivot = vec![false; columns.len()];
        for &p in &ech.pivots {
            is_pivot[p] = true;
        }
        let split = columns
            .iter()
            .zip(&is_pivot)
            .filter(|(_, &pivot)| !pivot)
            .map(|(&(j, _), _)| j - 1)
            .min()
            .unwrap_or(t);
        if split < e {
            return Ok(Vec::new());
        }
        let solved = self.solve_prefix(&system, &columns, &syndrome, split)?;
        // Cross-check against the echelon read-off: pivot rows of the solved
        // prefix carry their value in the augmented column.
        for (r, &p) in ech.pivots.iter().enumerate() {
            let (j, pos) = columns[p];
            if j <= split && solved.get(&(j, pos)) != Some(&ech.matrix.get(r, columns.len())) {
                return Err(DecoderError::Corruption("partitioned solve disagrees with elimination".into()));
            }
        }
        let mut resolved = Vec::new();
        for j in e..=split {
            let idx = self.slot_index(j);
            let mut entry = ResolvedBits {
                time: j,
                positions: Vec::new(),
                values: Vec::new(),
            };
            let pending: Vec<usize> = self.slots[idx].pending().collect();
            for pos in pending {
                let frame_bit = solved[&(j, pos)];
                let slot = &mut self.slots[idx];
                let value = frame_bit ^ slot.offset.get(pos);
                slot.actual.set(pos, value);
                slot.known.set(pos, true);
                entry.positions.push(pos);
                entry.values.push(value);
            }
            if !entry.positions.is_empty() {
                resolved.push(entry);
            }
        }
        self.earliest = split + 1;
        Ok(resolved)
    }

    /// Right-hand side for the pending window: the cached prefix contribution
    /// plus the known bits inside the window.
    fn pending_syndrome(&self) -> BitVec {
        let (e, t) = (self.earliest, self.t);
        let nbar = self.code.nbar();
        let mut out = BitVec::zeros((t - e + 1) * nbar);
        for tau in e..=t {
            let mut s = self.slots[self.slot_index(tau)].cache.clone();
            for j in e..=tau {
                let f = self.slots[self.slot_index(j)].known_frame();
                if !f.is_zero() {
                    s.xor_assign(&self.h(tau - j).mul_vec(&f));
                }
            }
            for r in s.ones() {
                out.set((tau - e) * nbar + r, true);
            }
        }
        out
    }

    /// Solves for the pending bits of times `e..=split` by projecting out the
    /// later unknowns with a left annihilator of their block.
    fn solve_prefix(
        &self,
        system: &BitMatrix,
        columns: &[(usize, usize)],
        syndrome: &BitVec,
        split: usize,
    ) -> Result<std::collections::HashMap<(usize, usize), bool>, DecoderError> {
        let nbar = self.code.nbar();
        let e = self.earliest;
        let head_rows: Vec<usize> = (0..(split - e + 1) * nbar).collect();
        let tail_rows: Vec<usize> = ((split - e + 1) * nbar..system.rows()).collect();
        let first_cols: Vec<usize> = (0..columns.len()).filter(|&c| columns[c].0 <= split).collect();
        let second_cols: Vec<usize> = (0..columns.len()).filter(|&c| columns[c].0 > split).collect();
        let h11 = system.select_rows(&head_rows).select_cols(&first_cols);
        let h21 = system.select_rows(&tail_rows).select_cols(&first_cols);
        let h22 = system.select_rows(&tail_rows).select_cols(&second_cols);
        let s1 = BitVec::from_bools(head_rows.iter().map(|&r| syndrome.get(r)));
        let s2 = BitVec::from_bools(tail_rows.iter().map(|&r| syndrome.get(r)));
        let annihilator = h22.left_annihilator();
        let lhs = h11.vstack(&annihilator.mul(&h21));
        let rhs = s1.concat(&annihilator.mul_vec(&s2));
        match lhs.solve(&rhs) {
            Solution::Unique(x) => Ok(first_cols
                .iter()
                .enumerate()
                .map(|(i, &c)| (columns[c], x.get(i)))
                .collect()),
            Solution::Underdetermined { .. } => Err(DecoderError::Corruption(
                "prefix chosen by elimination is not determined".into(),
            )),
            Solution::Inconsistent => Err(DecoderError::Corruption("projected system is inconsistent".into())),
        }
    }

    /// Updates caches after `earliest` moved from `before` and emits the
    /// messages of the newly completed times.
    fn advance(&mut self, before: usize) -> Result<Vec<(usize, BitVec)>, DecoderError> {
        let after = self.earliest;
        if after == before {
            return Ok(Vec::new());
        }
        for tau in after..=self.t {
            let extra = self.check_contribution(tau, before, after);
            let idx = self.slot_index(tau);
            self.slots[idx].cache.xor_assign(&extra);
        }
        (before..after).map(|j| self.resolve_message(j)).collect()
    }

    /// `b_j = G_1⁺ (c_j − Σ_{i=lo(j)}^{j−1} G_{j−i} b_i)`.
    fn resolve_message(&mut self, j: usize) -> Result<(usize, BitVec), DecoderError> {
        let mut residual = self.slots[self.slot_index(j)].actual.clone();
        for i in self.retained_start(j)..j {
            let b = self.message(i).expect("earlier messages are resolved");
            if !b.is_zero() {
                residual.xor_assign(&self.code.g_lag(j - i).expect("within depth").mul_vec(b));
            }
        }
        let b = self.g1_inverse.mul_vec(&residual);
        if self.code.g_lag(0).expect("depth >= 1").mul_vec(&b) != residual {
            return Err(DecoderError::Corruption(format!("codeword at time {j} is not in the code")));
        }
        debug_assert_eq!(self.message_base + self.messages.len(), j);
        self.messages.push_back(b.clone());
        Ok((j, b))
    }

    /// Decoded messages for every time before the earliest pending one that
    /// are still held.
    pub fn resolve_messages(&self) -> Vec<(usize, &BitVec)> {
        (self.message_base..self.message_base + self.messages.len())
            .map(|j| (j, &self.messages[j - self.message_base]))
            .collect()
    }

    /// At multiples of `period`, reports `earliest_pending − 1` as the
    /// truncation cutoff, to take effect at `t + period/2 + 1`. The decoder
    /// rebases its frame onto the cutoff immediately.
    pub fn feedback_report(&mut self, period: usize) -> Option<FeedbackReport> {
        if period == 0 || self.t == 0 || self.t % period != 0 {
            return None;
        }
        let cutoff = self.earliest.saturating_sub(1).max(1);
        let report = FeedbackReport {
            issued_at: self.t,
            cutoff,
            effective_from: self.t + period / 2 + 1,
        };
        self.schedule.push(report);
        self.rebase(cutoff);
        Some(report)
    }

    fn rebase(&mut self, new_origin: usize) {
        if new_origin <= self.origin {
            return;
        }
        let dropped = new_origin - self.origin;
        self.slots.drain(..dropped);
        self.origin = new_origin;
        for tau in new_origin..=self.t {
            let offset = self.offset_for(tau);
            let idx = self.slot_index(tau);
            self.slots[idx].offset = offset;
        }
        for tau in self.earliest..=self.t {
            let cache = self.check_contribution(tau, new_origin, self.earliest);
            let idx = self.slot_index(tau);
            self.slots[idx].cache = cache;
        }
        let keep_from = self.retained_start(new_origin).min(self.retained_start(self.t + 1));
        while self.message_base < keep_from && !self.messages.is_empty() {
            self.messages.pop_front();
            self.message_base += 1;
        }
    }

    /// Bits erased on the channel at `time`, if still held.
    pub fn erasure_mask(&self, time: usize) -> Option<&BitVec> {
        self.slot(time).map(|s| &s.erased)
    }
}
