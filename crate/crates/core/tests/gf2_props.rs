use anytime::gf2::{BitMatrix, BitVec, Solution};
use proptest::prelude::*;

/// Textbook elimination on `Vec<Vec<u8>>`, sharing no code with the library.
fn naive_rank(rows: &[Vec<u8>]) -> usize {
    let mut m: Vec<Vec<u8>> = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| m[r][c] == 1) else {
            continue;
        };
        m.swap(rank, p);
        for r in 0..m.len() {
            if r != rank && m[r][c] == 1 {
                for j in 0..cols {
                    m[r][j] ^= m[rank][j];
                }
            }
        }
        rank += 1;
    }
    rank
}

fn dense(a: &BitMatrix) -> Vec<Vec<u8>> {
    (0..a.rows())
        .map(|i| (0..a.cols()).map(|j| a.get(i, j) as u8).collect())
        .collect()
}

fn matrix(max: usize) -> impl Strategy<Value = BitMatrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        prop::collection::vec(any::<bool>(), r * c)
            .prop_map(move |bits| BitMatrix::from_fn(r, c, |i, j| bits[i * c + j]))
    })
}

fn bitvec(len: usize) -> impl Strategy<Value = BitVec> {
    prop::collection::vec(any::<bool>(), len).prop_map(BitVec::from_bools)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rank_matches_naive_oracle(a in matrix(32)) {
        let e = a.row_echelon();
        prop_assert_eq!(e.rank, naive_rank(&dense(&a)));
        prop_assert_eq!(e.rank, e.pivots.len());
        prop_assert!(e.pivots.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(e.rank <= a.rows().min(a.cols()));
    }

    #[test]
    fn echelon_is_row_equivalent(a in matrix(24)) {
        let e = a.row_echelon();
        // Same row space: stacking adds no rank either way.
        prop_assert_eq!(a.vstack(&e.matrix).rank(), e.rank);
        for (i, &p) in e.pivots.iter().enumerate() {
            prop_assert_eq!(e.matrix.col(p).ones().collect::<Vec<_>>(), vec![i]);
        }
    }

    #[test]
    fn rank_of_product(a in matrix(16), seed in any::<u64>()) {
        let mut s = seed;
        let cols = 1 + (seed % 16) as usize;
        let b = BitMatrix::from_fn(a.cols(), cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            s >> 63 == 1
        });
        prop_assert!(a.mul(&b).rank() <= a.rank().min(b.rank()));
    }

    #[test]
    fn solve_agrees_with_multiplication(a in matrix(20), seed in any::<u64>()) {
        let x = BitVec::from_u64(a.cols(), seed);
        let b = a.mul_vec(&x);
        match a.solve(&b) {
            Solution::Unique(y) => prop_assert_eq!(y, x),
            Solution::Underdetermined { particular, null_basis } => {
                prop_assert_eq!(a.mul_vec(&particular), b);
                prop_assert_eq!(null_basis.len(), a.cols() - a.rank());
                for v in &null_basis {
                    prop_assert!(a.mul_vec(v).is_zero());
                }
            }
            Solution::Inconsistent => prop_assert!(false, "consistent system reported inconsistent"),
        }
    }

    #[test]
    fn inconsistency_is_detected(a in matrix(20), b in bitvec(20)) {
        let b = b.slice(0, a.rows());
        let augmented = a.hstack(&BitMatrix::from_col_vecs(a.rows(), &[b.clone()]));
        let consistent = augmented.rank() == a.rank();
        prop_assert_eq!(a.solve(&b) != Solution::Inconsistent, consistent);
    }

    #[test]
    fn annihilator_and_left_inverse(a in matrix(20)) {
        let z = a.left_annihilator();
        prop_assert!(z.mul(&a).is_zero());
        prop_assert_eq!(z.rows(), a.rows() - a.rank());
        prop_assert_eq!(z.rank(), z.rows());
        match a.left_inverse() {
            Some(l) => prop_assert_eq!(l.mul(&a), BitMatrix::identity(a.cols())),
            None => prop_assert!(a.rank() < a.cols()),
        }
    }

    #[test]
    fn transpose_and_kron(a in matrix(12), l in 1usize..4) {
        prop_assert_eq!(a.transpose().transpose(), a.clone());
        prop_assert_eq!(a.transpose().rank(), a.rank());
        let k = a.kron_identity(l);
        prop_assert_eq!(k.rank(), a.rank() * l);
        prop_assert_eq!(k.weight(), a.weight() * l);
    }
}
