use super::*;
use crate::qtt_indexing::zorder_permutation;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Dense Kronecker product of row-major matrices (`a` is the slow index).
fn dense_kron(a: &[f64], ar: usize, ac: usize, b: &[f64], br: usize, bc: usize) -> Vec<f64> {
    let (r, c) = (ar * br, ac * bc);
    let mut out = vec![0.0; r * c];
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k) * c + (j * bc + l)] = a[i * ac + j] * b[k * bc + l];
                }
            }
        }
    }
    out
}

fn dense_matvec(a: &[f64], r: usize, c: usize, x: &[f64]) -> Vec<f64> {
    (0..r).map(|i| (0..c).map(|j| a[i * c + j] * x[j]).sum()).collect()
}

fn dense_matmul(a: &[f64], r: usize, k: usize, b: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] = (0..k).map(|t| a[i * k + t] * b[t * c + j]).sum();
        }
    }
    out
}

/// Entry-wise evaluation of the TT product formula, independent of the
/// contraction routine.
fn entry_by_formula(t: &TtVector, index: usize) -> f64 {
    t.entry(index)
}

#[test]
fn decompose_rank_one_vector() {
    let a = [1.0, 2.0];
    let b = [3.0, -1.0];
    let c = [0.5, 4.0];
    let mut dense = vec![0.0; 8];
    for k in 0..8 {
        dense[k] = a[k & 1] * b[(k >> 1) & 1] * c[(k >> 2) & 1];
    }
    let t = tt_decompose(&dense, 0.0).unwrap();
    assert_eq!(t.ranks(), vec![1, 1, 1, 1]);
    assert!(rel_err(&t.to_dense().unwrap(), &dense) < 1e-14);
}

#[test]
fn decompose_zero_vector() {
    let t = tt_decompose(&[0.0; 4], 0.0).unwrap();
    assert_eq!(t.ranks(), vec![1, 1, 1]);
    assert!(t.cores().iter().all(|c| c.data().iter().all(|v| *v == 0.0)));
    assert_eq!(rank_profile(&t).storage_count, 2 + 2);
}

#[test]
fn decompose_random_length_16() {
    let mut r = rng(1);
    let dense: Vec<f64> = (0..16).map(|_| r.gen_range(-1.0..1.0)).collect();
    let t = tt_decompose(&dense, 0.0).unwrap();
    let ranks = t.ranks();
    for (k, bound) in [1, 2, 4, 2, 1].iter().enumerate() {
        assert!(ranks[k] <= *bound);
    }
    assert!(rel_err(&t.to_dense().unwrap(), &dense) < 1e-13);
}

#[test]
fn decompose_errors() {
    assert!(matches!(tt_decompose(&[1.0; 6], 0.0), Err(TtError::Size(_))));
    assert!(matches!(tt_decompose(&[1.0; 8], -1.0), Err(TtError::Argument(_))));
    assert!(matches!(tt_decompose_matrix(&[1.0; 9], 3, 0.0), Err(TtError::Size(_))));
}

#[test]
fn contract_examples() {
    let t = TtVector::rank_one(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert_eq!(tt_contract(&t).unwrap(), vec![1.0; 4]);
    let id = TtMatrix::identity(&[2, 2, 2]);
    let dense = id.to_dense().unwrap();
    for i in 0..8 {
        for j in 0..8 {
            assert_eq!(dense[i * 8 + j], if i == j { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn contract_guard_refuses() {
    let t = TtVector::ones(&vec![2; 25]);
    assert!(matches!(tt_contract(&t), Err(TtError::TooLarge { .. })));
    let m = TtMatrix::identity(&vec![2; 13]);
    assert!(matches!(tt_contract(&m), Err(TtError::TooLarge { .. })));
    assert!(tt_contract(&TtMatrix::identity(&vec![2; 10])).is_ok());
}

#[test]
fn contract_agrees_with_entry_formula() {
    let mut r = rng(2);
    let t = TtVector::random(&[2, 3, 2, 2], &[2, 3, 2], &mut r);
    let dense = t.to_dense().unwrap();
    for (k, v) in dense.iter().enumerate() {
        assert!((v - entry_by_formula(&t, k)).abs() < 1e-13);
    }
}

#[test]
fn matrix_decompose_round_trip() {
    let mut r = rng(3);
    let n = 8;
    let dense: Vec<f64> = (0..n * n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let m = tt_decompose_matrix(&dense, n, 0.0).unwrap();
    assert!(rel_err(&m.to_dense().unwrap(), &dense) < 1e-13);
    for i in 0..n {
        for j in 0..n {
            assert!((m.entry(i, j) - dense[i * n + j]).abs() < 1e-13);
        }
    }
}

#[test]
fn round_rank_one_keeps_ranks() {
    let t = TtVector::rank_one(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
    for eps in [0.0, 1e-3, 0.5] {
        assert_eq!(tt_round(&t, eps).unwrap().ranks(), t.ranks());
    }
}

#[test]
fn round_recovers_ranks_after_perturbation() {
    let mut r = rng(4);
    let v = TtVector::random(&[2; 6], &[2, 3, 3, 3, 2], &mut r);
    let v = tt_round(&v, 0.0).unwrap();
    let pert = tt_scale(&TtVector::random(&[2; 6], &[2, 2, 2, 2, 2], &mut r), 1e-12);
    let sum = tt_add(&v, &pert).unwrap();
    let rounded = tt_round(&sum, 1e-9).unwrap();
    assert_eq!(rounded.ranks(), v.ranks());
    let dv = v.to_dense().unwrap();
    assert!(rel_err(&rounded.to_dense().unwrap(), &dv) < 1e-9);
}

#[test]
fn add_zero_and_hadamard_ones() {
    let mut r = rng(5);
    let a = TtVector::random(&[2; 4], &[2, 2, 2], &mut r);
    let z = TtVector::zeros(&[2; 4]);
    let da = a.to_dense().unwrap();
    assert!(rel_err(&tt_add(&a, &z).unwrap().to_dense().unwrap(), &da) < 1e-15);
    let ones = TtVector::ones(&[2; 4]);
    assert!(rel_err(&tt_hadamard(&a, &ones).unwrap().to_dense().unwrap(), &da) < 1e-15);
    assert!(tt_add(&a, &TtVector::ones(&[2; 3])).is_err());
}

#[test]
fn matvec_examples() {
    let mut r = rng(6);
    let x = TtVector::random(&[2; 3], &[2, 2], &mut r);
    let id = TtMatrix::identity(&[2; 3]);
    let y = tt_matvec(&id, &x).unwrap();
    assert!(rel_err(&y.to_dense().unwrap(), &x.to_dense().unwrap()) < 1e-15);

    let a = TtMatrix::random(&[2; 3], &[2; 3], &[3, 2], &mut r);
    let y = tt_matvec(&a, &x).unwrap();
    let expect = dense_matvec(&a.to_dense().unwrap(), 8, 8, &x.to_dense().unwrap());
    assert!(rel_err(&y.to_dense().unwrap(), &expect) < 1e-12);
    assert!(y.ranks().iter().zip(a.ranks().iter().zip(x.ranks())).all(|(r, (p, q))| *r <= p * q));

    let dvec = TtVector::random(&[2; 3], &[2, 2], &mut r);
    let dd = tt_diag(&dvec);
    let y = tt_matvec(&dd, &TtVector::ones(&[2; 3])).unwrap();
    assert!(rel_err(&y.to_dense().unwrap(), &dvec.to_dense().unwrap()) < 1e-14);
    assert!(tt_matvec(&a, &TtVector::ones(&[2; 2])).is_err());
}

#[test]
fn matmul_and_transpose_match_dense() {
    let mut r = rng(7);
    let a = TtMatrix::random(&[2; 3], &[2; 3], &[2, 3], &mut r);
    let b = TtMatrix::random(&[2; 3], &[2; 3], &[3, 2], &mut r);
    let ab = tt_matmul(&a, &b).unwrap();
    let expect = dense_matmul(&a.to_dense().unwrap(), 8, 8, &b.to_dense().unwrap(), 8);
    assert!(rel_err(&ab.to_dense().unwrap(), &expect) < 1e-12);
    let at = tt_transpose(&a).to_dense().unwrap();
    let ad = a.to_dense().unwrap();
    for i in 0..8 {
        for j in 0..8 {
            assert_eq!(at[i * 8 + j], ad[j * 8 + i]);
        }
    }
}

#[test]
fn kron_examples() {
    let i2 = TtMatrix::identity(&[2]);
    let k = tt_kron(&i2, &i2);
    assert_eq!(k.to_dense().unwrap(), TtMatrix::identity(&[2, 2]).to_dense().unwrap());

    // rank-one trains are regular Kronecker products of their factors
    let f1 = vec![1.0, 2.0, 3.0, 4.0];
    let f2 = vec![0.0, -1.0, 5.0, 2.0];
    let f3 = vec![2.0, 1.0, 1.0, 3.0];
    let t = TtMatrix::rank_one(&[f1.clone(), f2.clone(), f3.clone()], &[2; 3], &[2; 3]).unwrap();
    assert!(t.ranks().iter().all(|&r| r == 1));
    let expect = dense_kron(&dense_kron(&f3, 2, 2, &f2, 2, 2), 4, 4, &f1, 2, 2);
    assert!(rel_err(&t.to_dense().unwrap(), &expect) < 1e-15);

    let mut r = rng(8);
    let a = TtMatrix::random(&[2, 2], &[2, 2], &[2], &mut r);
    let b = TtMatrix::random(&[2, 2], &[2, 2], &[3], &mut r);
    let k = tt_kron(&a, &b);
    let expect = dense_kron(&a.to_dense().unwrap(), 4, 4, &b.to_dense().unwrap(), 4, 4);
    assert!(rel_err(&k.to_dense().unwrap(), &expect) < 1e-14);
    let mut ranks = b.ranks();
    ranks.extend_from_slice(&a.ranks()[1..]);
    assert_eq!(k.ranks(), ranks);
}

/// `Pᵀ (A ⊗ B) P` with `P` from the node Z-order permutation.
fn zorder_conjugate(kron: &[f64], d: usize) -> Vec<f64> {
    let p = zorder_permutation(d).unwrap();
    let n = p.len();
    let mut out = vec![0.0; n * n];
    for z1 in 0..n {
        for z2 in 0..n {
            out[z1 * n + z2] = kron[p[z1] * n + p[z2]];
        }
    }
    out
}

#[test]
fn zkron_examples() {
    let i2 = TtMatrix::identity(&[2]);
    assert_eq!(tt_zkron(&i2, &i2).unwrap().to_dense().unwrap(), TtMatrix::identity(&[2, 2]).to_dense().unwrap());

    let a = TtMatrix::rank_one(&[vec![1.0, 2.0, 3.0, 4.0]], &[2], &[2]).unwrap();
    let z = tt_zkron(&a, &i2).unwrap().to_dense().unwrap();
    let expect = zorder_conjugate(&dense_kron(&[1.0, 2.0, 3.0, 4.0], 2, 2, &[1.0, 0.0, 0.0, 1.0], 2, 2), 1);
    assert_eq!(z, expect);

    // associativity with three random 2×2 factors, checked densely
    let mut r = rng(9);
    let f: Vec<TtMatrix> = (0..3).map(|_| TtMatrix::random(&[2], &[2], &[], &mut r)).collect();
    let left = tt_zkron(&tt_kron(&f[0], &f[1]), &tt_kron(&f[1], &f[2])).unwrap();
    let right = tt_kron(&tt_zkron(&f[0], &f[1]).unwrap(), &tt_zkron(&f[1], &f[2]).unwrap());
    assert!(rel_err(&left.to_dense().unwrap(), &right.to_dense().unwrap()) < 1e-14);
    assert!(tt_zkron(&f[0], &tt_kron(&f[0], &f[1])).is_err());
}

#[test]
fn strong_kron_reproduces_dense() {
    let mut r = rng(10);
    let a = TtMatrix::random(&[2, 2, 2], &[2, 2, 2], &[3, 2], &mut r);
    let mut acc = a.core_block(0);
    for l in 1..3 {
        acc = strong_kron(&acc, &a.core_block(l)).unwrap();
    }
    assert_eq!((acc.r0, acc.r1, acc.rows, acc.cols), (1, 1, 8, 8));
    let dense = a.to_dense().unwrap();
    for i in 0..8 {
        for j in 0..8 {
            assert!((acc.at(0, i, j, 0) - dense[i * 8 + j]).abs() < 1e-14);
        }
    }
    assert!(strong_kron(&a.core_block(0), &a.core_block(2)).is_err());
}

#[test]
fn rank_profile_examples() {
    let t = TtVector::ones(&[2, 2, 2]);
    let p = rank_profile(&t);
    assert_eq!(p.storage_count, 6);
    assert_eq!(p.max_rank, 1);
    assert!((p.effective_rank - 1.0).abs() < 1e-15);

    let mut r = rng(11);
    let t = TtVector::random(&[2, 2, 2], &[2, 2], &mut r);
    let p = rank_profile(&t);
    assert_eq!(p.storage_count, 4 + 8 + 4);
    assert_eq!(p.max_rank, 2);
    assert_eq!(p.param_count, p.storage_count);

    let t = TtVector::ones(&[5]);
    let p = rank_profile(&t);
    assert_eq!(p.storage_count, 5);
    assert_eq!(p.max_rank, 1);
}

#[test]
fn triplets_reproduce_dense_matrix() {
    let mut r = rng(13);
    let a = TtMatrix::random(&[2; 6], &[2; 6], &[2, 3, 4, 3, 2], &mut r);
    let dense = a.to_dense().unwrap();
    let n = 64;
    let trip = a.to_triplets(0.0);
    assert_eq!(trip.len(), n * n);
    for (i, j, v) in trip {
        assert!((dense[i * n + j] - v).abs() < 1e-12);
    }
    // tridiagonal matrix: only the band survives pruning
    let mut band = vec![0.0; n * n];
    for i in 0..n {
        band[i * n + i] = 2.0;
        if i + 1 < n {
            band[i * n + i + 1] = -1.0;
            band[(i + 1) * n + i] = -1.0;
        }
    }
    let t = tt_decompose_matrix(&band, n, 1e-14).unwrap();
    let mut trip = t.to_triplets(1e-12);
    trip.sort_by_key(|&(i, j, _)| (i, j));
    assert_eq!(trip.len(), 3 * n - 2);
    for (i, j, v) in trip {
        assert!((band[i * n + j] - v).abs() < 1e-12, "({i}, {j})");
    }
}

#[test]
fn entries_meet_in_the_middle() {
    let mut r = rng(12);
    let a = TtMatrix::random(&[2; 7], &[2; 7], &[2, 3, 4, 3, 2, 2], &mut r);
    let dense = a.to_dense().unwrap();
    let n = 128;
    let pairs: Vec<(usize, usize)> = (0..300).map(|_| (r.gen_range(0..n), r.gen_range(0..n))).collect();
    let vals = a.entries(&pairs).unwrap();
    for ((i, j), v) in pairs.iter().zip(vals) {
        assert!((dense[i * n + j] - v).abs() < 1e-12);
    }
}

#[test]
fn text_round_trip() {
    let mut r = rng(13);
    let v = TtVector::random(&[2, 3, 2], &[2, 2], &mut r);
    let back = read_text(&write_text(&StoredTrain::Vector(v.clone()))).unwrap();
    assert_eq!(back, StoredTrain::Vector(v));
    let m = TtMatrix::random(&[2, 2], &[3, 2], &[3], &mut r);
    let back = read_text(&write_text(&StoredTrain::Matrix(m.clone()))).unwrap();
    assert_eq!(back, StoredTrain::Matrix(m));
    assert!(read_text("tt tensor\n").is_err());
}

#[test]
fn norm_is_accurate_under_cancellation() {
    let mut r = rng(14);
    let a = TtVector::random(&[2; 8], &[3; 7], &mut r);
    let b = tt_add(&a, &tt_scale(&TtVector::unit(&[2; 8], 37), 1e-9)).unwrap();
    let diff = tt_sub(&b, &a).unwrap();
    assert!((tt_norm(&diff) - 1e-9).abs() < 1e-14);
}

fn modes_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, u64)> {
    (1usize..=5).prop_flat_map(|d| {
        (
            proptest::collection::vec(1usize..=3, d),
            proptest::collection::vec(1usize..=3, d.saturating_sub(1)),
            any::<u64>(),
        )
            .prop_map(|(m, r, s)| (m.into_iter().map(|x| x + 1).collect(), r, s))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_round_trip((modes, _ranks, seed) in modes_strategy()) {
        let mut r = rng(seed);
        let len: usize = modes.iter().product();
        let dense: Vec<f64> = (0..len).map(|_| r.gen_range(-1.0..1.0)).collect();
        let t = tt_decompose_modes(&dense, &modes, 0.0).unwrap();
        prop_assert!(rel_err(&t.to_dense().unwrap(), &dense) <= 1e-12);
    }

    #[test]
    fn prop_rounding_contract((modes, ranks, seed) in modes_strategy(), e in 0usize..3) {
        let eps = [1e-3, 1e-5, 1e-7][e];
        let mut r = rng(seed);
        let a = TtVector::random(&modes, &ranks, &mut r);
        let b = TtVector::random(&modes, &ranks, &mut r);
        let t = tt_add(&a, &tt_scale(&b, 1e-4)).unwrap();
        let rounded = tt_round(&t, eps).unwrap();
        let dt = t.to_dense().unwrap();
        prop_assert!(rel_err(&rounded.to_dense().unwrap(), &dt) <= eps * (1.0 + 1e-10));
        for (x, y) in rounded.ranks().iter().zip(t.ranks()) {
            prop_assert!(*x <= y);
        }
    }

    #[test]
    fn prop_homomorphism((modes, ranks, seed) in modes_strategy(), s in -3.0f64..3.0) {
        let mut r = rng(seed);
        let a = TtVector::random(&modes, &ranks, &mut r);
        let b = TtVector::random(&modes, &ranks, &mut r);
        let (da, db) = (a.to_dense().unwrap(), b.to_dense().unwrap());
        let sum: Vec<f64> = da.iter().zip(&db).map(|(x, y)| x + y).collect();
        let prod: Vec<f64> = da.iter().zip(&db).map(|(x, y)| x * y).collect();
        let scaled: Vec<f64> = da.iter().map(|x| s * x).collect();
        prop_assert!(rel_err(&tt_add(&a, &b).unwrap().to_dense().unwrap(), &sum) < 1e-12);
        prop_assert!(rel_err(&tt_hadamard(&a, &b).unwrap().to_dense().unwrap(), &prod) < 1e-12);
        prop_assert!(rel_err(&tt_scale(&a, s).to_dense().unwrap(), &scaled) < 1e-14);
        let dot: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
        prop_assert!((tt_dot(&a, &b).unwrap() - dot).abs() < 1e-10 * (1.0 + dot.abs()));
    }

    #[test]
    fn prop_matvec_kron(d in 1usize..=3, seed in any::<u64>()) {
        let mut r = rng(seed);
        let modes = vec![2; d];
        let ranks = vec![2; d - 1];
        let a = TtMatrix::random(&modes, &modes, &ranks, &mut r);
        let b = TtMatrix::random(&modes, &modes, &ranks, &mut r);
        let x = TtVector::random(&modes, &ranks, &mut r);
        let n = 1 << d;
        let (da, db) = (a.to_dense().unwrap(), b.to_dense().unwrap());
        let y = tt_matvec(&a, &x).unwrap().to_dense().unwrap();
        prop_assert!(rel_err(&y, &dense_matvec(&da, n, n, &x.to_dense().unwrap())) < 1e-12);
        let k = tt_kron(&a, &b).to_dense().unwrap();
        prop_assert!(rel_err(&k, &dense_kron(&da, n, n, &db, n, n)) < 1e-12);
    }

    #[test]
    fn prop_zkron_permutation(d in 1usize..=2, seed in any::<u64>()) {
        let mut r = rng(seed);
        let modes = vec![2; d];
        let ranks = vec![2; d - 1];
        let a = TtMatrix::random(&modes, &modes, &ranks, &mut r);
        let b = TtMatrix::random(&modes, &modes, &ranks, &mut r);
        let n = 1 << d;
        let kron = dense_kron(&a.to_dense().unwrap(), n, n, &b.to_dense().unwrap(), n, n);
        let z = tt_zkron(&a, &b).unwrap().to_dense().unwrap();
        prop_assert!(rel_err(&z, &zorder_conjugate(&kron, d)) < 1e-13);
    }
}
