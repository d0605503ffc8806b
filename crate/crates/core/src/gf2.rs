//! Dense linear algebra over GF(2).
//!
//! Rows are packed into `u64` limbs. Elimination always takes the lowest-index
//! available pivot row, so echelon forms, solutions and annihilators are
//! reproducible bit for bit.

use std::fmt;

const LIMB: usize = 64;

fn limbs(bits: usize) -> usize {
    bits.div_ceil(LIMB)
}

/// A fixed-length vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; limbs(len)],
        }
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut v = Self::zeros(0);
        for b in bits {
            v.push(b);
        }
        v
    }

    /// Builds a vector from 0/1 entries. Any nonzero entry is a one.
    pub fn from_bits(bits: &[u8]) -> Self {
        Self::from_bools(bits.iter().map(|&b| b != 0))
    }

    /// The low `len` bits of `value`, bit `i` of the integer at position `i`.
    pub fn from_u64(len: usize, value: u64) -> Self {
        assert!(len <= LIMB, "from_u64 holds at most 64 bits");
        let mut v = Self::zeros(len);
        if len > 0 {
            v.words[0] = value & mask(len);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / LIMB] >> (i % LIMB) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let bit = 1u64 << (i % LIMB);
        if value {
            self.words[i / LIMB] |= bit;
        } else {
            self.words[i / LIMB] &= !bit;
        }
    }

    pub fn push(&mut self, value: bool) {
        if self.len % LIMB == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "length mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn and_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "length mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len, other.len, "length mismatch");
        dot_words(&self.words, &other.words)
    }

    /// Hamming weight.
    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Indices of the one bits, increasing.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * LIMB + b)
            })
        })
    }

    /// Bits `start..start + len` as a new vector.
    pub fn slice(&self, start: usize, len: usize) -> BitVec {
        assert!(start + len <= self.len, "slice out of range");
        BitVec::from_bools((start..start + len).map(|i| self.get(i)))
    }

    pub fn concat(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        for b in other.iter() {
            out.push(b);
        }
        out
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec(")?;
        for b in self.iter() {
            write!(f, "{}", b as u8)?;
        }
        write!(f, ")")
    }
}

fn mask(bits: usize) -> u64 {
    if bits >= LIMB {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

fn dot_words(a: &[u64], b: &[u64]) -> bool {
    a.iter()
        .zip(b)
        .fold(0u32, |acc, (x, y)| acc ^ (x & y).count_ones())
        & 1
        == 1
}

/// Reduced row echelon form with bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Echelon {
    pub matrix: BitMatrix,
    /// Pivot column of each of the first `rank` rows, strictly increasing.
    pub pivots: Vec<usize>,
    pub rank: usize,
    /// Row additions performed.
    pub row_ops: u64,
}

impl Echelon {
    /// Elementary bit operations, counting each row addition as one pass over
    /// the columns.
    pub fn bit_ops(&self) -> u64 {
        self.row_ops * self.matrix.cols as u64
    }
}

/// Result of solving `A x = b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Solution {
    Unique(BitVec),
    /// Particular solution with every free variable set to zero, plus a basis
    /// of the null space of `A`.
    Underdetermined {
        particular: BitVec,
        null_basis: Vec<BitVec>,
    },
    Inconsistent,
}

/// A dense matrix over GF(2), row-major with packed rows.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = limbs(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if f(i, j) {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    /// Builds a matrix from rows of 0/1 entries. All rows must have equal length.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(
            rows.iter().all(|r| r.as_ref().len() == cols),
            "ragged rows"
        );
        Self::from_fn(rows.len(), cols, |i, j| rows[i].as_ref()[j] != 0)
    }

    /// Stacks bit vectors of equal length as rows.
    pub fn from_row_vecs(cols: usize, rows: &[BitVec]) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            m.set_row(i, r);
        }
        m
    }

    /// Uses bit vectors of equal length as columns.
    pub fn from_col_vecs(rows: usize, cols: &[BitVec]) -> Self {
        Self::from_row_vecs(rows, cols).transpose()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of range");
        self.data[i * self.stride + j / LIMB] >> (j % LIMB) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of range");
        let w = &mut self.data[i * self.stride + j / LIMB];
        let bit = 1u64 << (j % LIMB);
        if value {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    pub fn row_words(&self, i: usize) -> &[u64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    pub fn row(&self, i: usize) -> BitVec {
        BitVec {
            len: self.cols,
            words: self.row_words(i).to_vec(),
        }
    }

    pub fn col(&self, j: usize) -> BitVec {
        BitVec::from_bools((0..self.rows).map(|i| self.get(i, j)))
    }

    pub fn set_row(&mut self, i: usize, v: &BitVec) {
        assert_eq!(v.len, self.cols, "row length mismatch");
        self.data[i * self.stride..(i + 1) * self.stride].copy_from_slice(&v.words);
    }

    pub fn set_col(&mut self, j: usize, v: &BitVec) {
        assert_eq!(v.len, self.rows, "column length mismatch");
        for i in 0..self.rows {
            self.set(i, j, v.get(i));
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for w in 0..self.stride {
            self.data.swap(a * self.stride + w, b * self.stride + w);
        }
    }

    /// Row `dst` += row `src`.
    fn add_row(&mut self, dst: usize, src: usize) {
        debug_assert_ne!(dst, src);
        let s = self.stride;
        let (lo, hi) = self.data.split_at_mut(dst.max(src) * s);
        let (d, r) = if dst < src {
            (&mut lo[dst * s..(dst + 1) * s], &hi[..s])
        } else {
            (&mut hi[..s], &lo[src * s..(src + 1) * s])
        };
        for (a, b) in d.iter_mut().zip(r) {
            *a ^= b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    /// Number of one entries.
    pub fn weight(&self) -> usize {
        self.data.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in self.row(i).ones() {
                t.set(j, i, true);
            }
        }
        t
    }

    pub fn mul(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = i * out.stride;
            for k in self.row(i).ones() {
                for (a, b) in out.data[dst..dst + out.stride]
                    .iter_mut()
                    .zip(other.row_words(k))
                {
                    *a ^= b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &BitVec) -> BitVec {
        assert_eq!(self.cols, v.len, "dimension mismatch");
        let mut out = BitVec::zeros(self.rows);
        for i in 0..self.rows {
            if dot_words(self.row_words(i), &v.words) {
                out.set(i, true);
            }
        }
        out
    }

    /// `self + other` entrywise.
    pub fn add(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a ^= b;
        }
        out
    }

    pub fn vstack(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.cols, "column counts differ");
        let mut out = self.clone();
        out.rows += other.rows;
        out.data.extend_from_slice(&other.data);
        out
    }

    pub fn hstack(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.rows, other.rows, "row counts differ");
        BitMatrix::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                other.get(i, j - self.cols)
            }
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> BitMatrix {
        let mut out = BitMatrix::zeros(idx.len(), self.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.data[r * self.stride..(r + 1) * self.stride].copy_from_slice(self.row_words(i));
        }
        out
    }

    pub fn select_cols(&self, idx: &[usize]) -> BitMatrix {
        BitMatrix::from_fn(self.rows, idx.len(), |i, j| self.get(i, idx[j]))
    }

    /// Kronecker product with the identity, `self ⊗ I_l`.
    pub fn kron_identity(&self, l: usize) -> BitMatrix {
        BitMatrix::from_fn(self.rows * l, self.cols * l, |i, j| {
            i % l == j % l && self.get(i / l, j / l)
        })
    }

    /// Reduced row echelon form. Columns are scanned left to right and each
    /// pivot is taken from the lowest-index row still available.
    pub fn row_echelon(&self) -> Echelon {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut row_ops = 0u64;
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| m.get(i, c)) else {
                continue;
            };
            m.swap_rows(p, r);
            for i in 0..m.rows {
                if i != r && m.get(i, c) {
                    m.add_row(i, r);
                    row_ops += 1;
                }
            }
            pivots.push(c);
            r += 1;
        }
        Echelon {
            matrix: m,
            rank: pivots.len(),
            pivots,
            row_ops,
        }
    }

    pub fn rank(&self) -> usize {
        self.row_echelon().rank
    }

    /// Solves `self · x = b`.
    pub fn solve(&self, b: &BitVec) -> Solution {
        assert_eq!(self.rows, b.len, "right-hand side length mismatch");
        let mut aug = BitMatrix::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in self.row(i).ones() {
                aug.set(i, j, true);
            }
            aug.set(i, self.cols, b.get(i));
        }
        let ech = aug.row_echelon();
        if ech.pivots.last() == Some(&self.cols) {
            return Solution::Inconsistent;
        }
        let e = &ech.matrix;
        let mut x = BitVec::zeros(self.cols);
        for (r, &p) in ech.pivots.iter().enumerate() {
            x.set(p, e.get(r, self.cols));
        }
        if ech.rank == self.cols {
            return Solution::Unique(x);
        }
        Solution::Underdetermined {
            particular: x,
            null_basis: null_basis_from_echelon(e, &ech.pivots, self.cols),
        }
    }

    /// Basis of the right null space `{x : self · x = 0}`.
    pub fn null_space(&self) -> Vec<BitVec> {
        let ech = self.row_echelon();
        null_basis_from_echelon(&ech.matrix, &ech.pivots, self.cols)
    }

    /// A full-row-rank `N` with `N · self = 0` whose rows span the left null
    /// space, so `N` has `rows − rank` rows.
    pub fn left_annihilator(&self) -> BitMatrix {
        BitMatrix::from_row_vecs(self.rows, &self.transpose().null_space())
    }

    /// A `cols × rows` matrix `L` with `L · self = I`, if `self` has full column
    /// rank.
    pub fn left_inverse(&self) -> Option<BitMatrix> {
        let t = self.transpose();
        let mut l = BitMatrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            let mut e = BitVec::zeros(self.cols);
            e.set(j, true);
            let x = match t.solve(&e) {
                Solution::Unique(x) => x,
                Solution::Underdetermined { particular, .. } => particular,
                Solution::Inconsistent => return None,
            };
            l.set_row(j, &x);
        }
        Some(l)
    }
}

fn null_basis_from_echelon(e: &BitMatrix, pivots: &[usize], cols: usize) -> Vec<BitVec> {
    let mut is_pivot = vec![false; cols];
    for &p in pivots {
        is_pivot[p] = true;
    }
    (0..cols)
        .filter(|&f| !is_pivot[f])
        .map(|f| {
            let mut v = BitVec::zeros(cols);
            v.set(f, true);
            for (r, &p) in pivots.iter().enumerate() {
                if e.get(r, f) {
                    v.set(p, true);
                }
            }
            v
        })
        .collect()
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{}", self.get(i, j) as u8)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod test {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> BitMatrix {
        BitMatrix::from_fn(rows, cols, |_, _| rng.random())
    }

    /// Textbook elimination on `Vec<Vec<u8>>`, written independently of the
    /// packed implementation.
    fn naive_rank(m: &BitMatrix) -> usize {
        let mut a: Vec<Vec<u8>> = (0..m.rows())
            .map(|i| (0..m.cols()).map(|j| m.get(i, j) as u8).collect())
            .collect();
        let mut rank = 0;
        for c in 0..m.cols() {
            if let Some(p) = (rank..a.len()).find(|&i| a[i][c] == 1) {
                a.swap(rank, p);
                for i in 0..a.len() {
                    if i != rank && a[i][c] == 1 {
                        for j in 0..m.cols() {
                            a[i][j] ^= a[rank][j];
                        }
                    }
                }
                rank += 1;
            }
        }
        rank
    }

    #[test]
    fn echelon_small_cases() {
        let e = BitMatrix::from_rows(&[[1, 0], [1, 1]]).row_echelon();
        assert_eq!((e.rank, e.pivots), (2, vec![0, 1]));
        let e = BitMatrix::from_rows(&[[1, 1], [1, 1]]).row_echelon();
        assert_eq!((e.rank, e.pivots), (1, vec![0]));
    }

    #[test]
    fn rank_matches_naive_on_random_20x20() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = random_matrix(&mut rng, 20, 20);
            assert_eq!(m.rank(), naive_rank(&m));
        }
    }

    #[test]
    fn solve_small_cases() {
        let b = BitVec::from_bits(&[1, 0, 1]);
        assert_eq!(BitMatrix::identity(3).solve(&b), Solution::Unique(b.clone()));
        let s = BitMatrix::from_rows(&[[1, 1]]).solve(&BitVec::from_bits(&[1]));
        assert_eq!(
            s,
            Solution::Underdetermined {
                particular: BitVec::from_bits(&[1, 0]),
                null_basis: vec![BitVec::from_bits(&[1, 1])],
            }
        );
        let s = BitMatrix::from_rows(&[[1, 1], [1, 1]]).solve(&BitVec::from_bits(&[0, 1]));
        assert_eq!(s, Solution::Inconsistent);
    }

    #[test]
    fn solve_full_column_rank_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 30 {
            let a = random_matrix(&mut rng, 10, 6);
            if a.rank() < 6 {
                continue;
            }
            let x = BitVec::from_bools((0..6).map(|_| rng.random()));
            let b = a.mul_vec(&x);
            let hits: Vec<u64> = (0..64u64)
                .filter(|&c| a.mul_vec(&BitVec::from_u64(6, c)) == b)
                .collect();
            assert_eq!(hits.len(), 1);
            assert_eq!(a.solve(&b), Solution::Unique(BitVec::from_u64(6, hits[0])));
            checked += 1;
        }
    }

    #[test]
    fn annihilator_small_cases() {
        assert_eq!(BitMatrix::identity(2).left_annihilator().rows(), 0);
        assert_eq!(
            BitMatrix::zeros(3, 2).left_annihilator(),
            BitMatrix::identity(3)
        );
    }

    #[test]
    fn annihilator_random_8x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 8, 3);
            let n = m.left_annihilator();
            assert!(n.mul(&m).is_zero());
            assert_eq!(n.rows(), 8 - m.rank());
            assert_eq!(n.rank(), n.rows());
        }
    }

    #[test]
    fn left_inverse_of_systematic_block() {
        let g = BitMatrix::zeros(3, 2).vstack(&BitMatrix::identity(2));
        let l = g.left_inverse().unwrap();
        assert_eq!(l.mul(&g), BitMatrix::identity(2));
        assert!(BitMatrix::zeros(3, 2).left_inverse().is_none());
    }

    #[test]
    fn kron_identity_blocks() {
        let m = BitMatrix::from_rows(&[[1, 0], [1, 1]]);
        let k = m.kron_identity(2);
        assert_eq!(k, BitMatrix::from_rows(&[[1, 0, 0, 0], [0, 1, 0, 0], [1, 0, 1, 0], [0, 1, 0, 1]]));
    }

    #[test]
    fn bitvec_ones_and_slices() {
        let mut v = BitVec::zeros(130);
        for i in [0, 63, 64, 129] {
            v.set(i, true);
        }
        assert_eq!(v.ones().collect::<Vec<_>>(), vec![0, 63, 64, 129]);
        assert_eq!(v.weight(), 4);
        assert_eq!(v.slice(63, 2), BitVec::from_bits(&[1, 1]));
        assert_eq!(BitVec::from_bits(&[1]).concat(&BitVec::from_bits(&[0, 1])), BitVec::from_bits(&[1, 0, 1]));
    }
}
