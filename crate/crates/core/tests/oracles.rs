use std::collections::BTreeSet;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use openreid_core::knn::{FlatIndex, Metric};
use openreid_core::loss::{matryoshka_triplet_loss, triplet_loss};
use openreid_core::metrics::{score, EvalItem, EvaluationSet};
use openreid_core::pca::{fit_pca, symmetric_eigen};
use openreid_core::rng::Rng;
use openreid_core::threshold::RobustStats;
use openreid_core::{Matrix, NEW_INDIVIDUAL};
use proptest::prelude::*;

fn random_rows(rng: &mut Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..d).map(|_| (rng.uniform() * 4.0 - 2.0) as f32).collect())
        .collect()
}

fn nalgebra_pca(rows: &[Vec<f32>], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut z = DMatrix::from_fn(n, d, |i, j| f64::from(rows[i][j]));
    for j in 0..d {
        let mut col = z.column_mut(j);
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1) as f64).sqrt();
        if sd * sd >= 1e-12 {
            col /= sd;
        }
    }
    let cov = z.transpose() * &z / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = order[..k]
        .iter()
        .map(|&i| {
            let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            v.into_iter().map(|x| x * lead.signum()).collect()
        })
        .collect();
    (values, vectors)
}

#[test]
fn pca_matches_nalgebra() {
    let mut rng = Rng::new(5);
    for (n, d, k) in [(50, 8, 3), (40, 6, 2), (25, 10, 4), (12, 3, 2)] {
        // Anisotropic columns so the spectrum is well separated.
        let rows: Vec<Vec<f32>> = random_rows(&mut rng, n, d)
            .into_iter()
            .map(|r| r.iter().enumerate().map(|(j, &x)| x + 0.7 * j as f32 * r[0]).collect())
            .collect();
        let model = fit_pca(&Matrix::from_rows(d, &rows).unwrap(), k).unwrap();
        let (values, vectors) = nalgebra_pca(&rows, k);
        for c in 0..k {
            assert_relative_eq!(model.eigenvalues[c], values[c], max_relative = 1e-9);
            for (a, b) in model.component(c).iter().zip(&vectors[c]) {
                assert_relative_eq!(*a, *b, epsilon = 1e-8);
            }
        }
    }
}

#[test]
fn symmetric_eigen_matches_nalgebra_spectrum() {
    let mut rng = Rng::new(8);
    for n in [1, 2, 5, 17] {
        let b = DMatrix::from_fn(n, n, |_, _| rng.uniform() - 0.5);
        let a = &b + b.transpose();
        let (mut ours, vecs) = symmetric_eigen(a.as_slice().to_vec(), n);
        for (j, &lambda) in ours.iter().enumerate() {
            let v = DMatrix::from_fn(n, 1, |i, _| vecs[i * n + j]);
            assert_relative_eq!((&a * &v - &v * lambda).norm(), 0.0, epsilon = 1e-10);
        }
        let mut theirs: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
        ours.sort_by(f64::total_cmp);
        theirs.sort_by(f64::total_cmp);
        for (x, y) in ours.iter().zip(&theirs) {
            assert_relative_eq!(*x, *y, epsilon = 1e-10);
        }
    }
}

fn eval_set(truth: &[usize], hits: &[bool], n_known: usize) -> EvaluationSet {
    let name = |c: usize| format!("ind{c}");
    let items = truth
        .iter()
        .zip(hits)
        .enumerate()
        .map(|(i, (&c, &hit))| {
            let predicted = match (hit, c < n_known) {
                (true, true) => name(c),
                (true, false) => NEW_INDIVIDUAL.to_string(),
                (false, _) => name(c + 100),
            };
            EvalItem {
                image_id: format!("q{i}"),
                truth: name(c),
                predicted,
            }
        })
        .collect();
    let present: BTreeSet<usize> = truth.iter().copied().collect();
    let known = present.iter().filter(|&&c| c < n_known).map(|&c| name(c)).collect();
    let unknown = present.iter().filter(|&&c| c >= n_known).map(|&c| name(c)).collect();
    EvaluationSet::new(items, known, unknown).unwrap()
}

fn labelled_items() -> impl Strategy<Value = (Vec<usize>, Vec<bool>, u64)> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(0usize..8, n),
            prop::collection::vec(any::<bool>(), n),
            any::<u64>(),
        )
    })
}

proptest! {
    #[test]
    fn score_ignores_item_order((truth, hits, seed) in labelled_items()) {
        prop_assume!(truth.iter().any(|&c| c < 4) && truth.iter().any(|&c| c >= 4));
        let base = score(&eval_set(&truth, &hits, 4)).unwrap();
        let mut order: Vec<usize> = (0..truth.len()).collect();
        Rng::new(seed).shuffle(&mut order);
        let t: Vec<usize> = order.iter().map(|&i| truth[i]).collect();
        let h: Vec<bool> = order.iter().map(|&i| hits[i]).collect();
        let shuffled = score(&eval_set(&t, &h, 4)).unwrap();
        prop_assert_eq!(base, shuffled);
        for x in [base.baks, base.baus, base.final_score] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert!(base.final_score <= base.baks.max(base.baus) + 1e-15);
        prop_assert!(base.final_score >= base.baks.min(base.baus) - 1e-15);
    }

    #[test]
    fn robust_stats_are_order_free_and_shift_equivariant(
        values in prop::collection::vec(-1e3f64..1e3, 1..50),
        seed in any::<u64>(),
        shift in -1e3f64..1e3,
    ) {
        let stats = RobustStats::from_values(&values).unwrap();
        let mut permuted = values.clone();
        Rng::new(seed).shuffle(&mut permuted);
        prop_assert_eq!(stats, RobustStats::from_values(&permuted).unwrap());
        let shifted: Vec<f64> = values.iter().map(|x| x + shift).collect();
        let moved = RobustStats::from_values(&shifted).unwrap();
        prop_assert!((moved.median - stats.median - shift).abs() < 1e-9);
        prop_assert!((moved.mad - stats.mad).abs() < 1e-9);
        prop_assert!(stats.mad >= 0.0);
    }

    #[test]
    fn triplet_loss_is_translation_invariant(
        apn in prop::collection::vec(-3.0f64..3.0, 24),
        t in prop::collection::vec(-5.0f64..5.0, 8),
        margin in 0.0f64..2.0,
    ) {
        let (a, rest) = apn.split_at(8);
        let (p, n) = rest.split_at(8);
        let moved = |v: &[f64]| -> Vec<f64> { v.iter().zip(&t).map(|(x, s)| x + s).collect() };
        let base = triplet_loss(a, p, n, margin);
        prop_assert!(base >= 0.0);
        prop_assert!((base - triplet_loss(&moved(a), &moved(p), &moved(n), margin)).abs() < 1e-9);
        let full = matryoshka_triplet_loss(a, p, n, margin, &[8]).unwrap();
        let unit = |v: &[f64]| -> Vec<f64> {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect()
        };
        prop_assert!((full - triplet_loss(&unit(a), &unit(p), &unit(n), margin)).abs() < 1e-12);
    }

    #[test]
    fn knn_matches_exhaustive_scan(
        seed in any::<u64>(),
        n in 1usize..40,
        k in 1usize..12,
        cosine in any::<bool>(),
    ) {
        let mut rng = Rng::new(seed);
        let d = 5;
        // Rounded coordinates produce exact distance ties.
        let rows: Vec<Vec<f32>> = random_rows(&mut rng, n, d)
            .into_iter()
            .map(|r| r.into_iter().map(f32::round).collect())
            .collect();
        let metric = if cosine { Metric::Cosine } else { Metric::L2 };
        prop_assume!(!cosine || rows.iter().all(|r| r.iter().any(|&x| x != 0.0)));
        let labels = (0..n).map(|i| format!("ind{}", i % 3)).collect();
        let species = vec!["lynx".to_string(); n];
        let index = FlatIndex::new(Matrix::from_rows(d, &rows).unwrap(), labels, species, metric).unwrap();
        let q: Vec<f32> = (0..d).map(|_| (rng.uniform() * 4.0 - 2.0).round() as f32 + 0.5).collect();
        prop_assert!(index.query(&q, n + 1).is_err());
        let k = k.min(n);
        let got = index.query(&q, k).unwrap();
        let dist = |r: &[f32]| -> f64 {
            let (mut dot, mut qq, mut rr, mut sq) = (0.0, 0.0, 0.0, 0.0);
            for (&a, &b) in q.iter().zip(r) {
                let (a, b) = (f64::from(a), f64::from(b));
                dot += a * b;
                qq += a * a;
                rr += b * b;
                sq += (a - b) * (a - b);
            }
            if cosine { (1.0 - dot / (qq.sqrt() * rr.sqrt())).max(0.0) } else { sq.sqrt() }
        };
        let mut want: Vec<(f64, usize)> = rows.iter().enumerate().map(|(i, r)| (dist(r), i)).collect();
        want.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        want.truncate(k);
        prop_assert_eq!(got.len(), want.len());
        for (g, (wd, wr)) in got.iter().zip(&want) {
            prop_assert_eq!(g.row, *wr);
            prop_assert!((g.distance - wd).abs() < 1e-9);
        }
    }
}
