use merdg_core::diagnostics::{
    cka_linear, cka_rbf, class_conditional_alignment, procrustes_similarity, rankme, AlignmentMetric, Bandwidth,
};
use merdg_core::rng::{gaussian_matrix, SeededRng};
use merdg_core::Matrix;
use proptest::prelude::*;

/// Rotation about a (not necessarily unit) axis by its norm, Rodrigues form.
fn rotation(w: [f64; 3]) -> Matrix {
    let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if theta == 0.0 {
        return Matrix::identity(3);
    }
    let k = [w[0] / theta, w[1] / theta, w[2] / theta];
    let kx = Matrix::from_rows(&[[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]).unwrap();
    let kx2 = kx.matmul(&kx).unwrap();
    Matrix::identity(3)
        .add(&kx.scale(theta.sin()).unwrap())
        .unwrap()
        .add(&kx2.scale(1.0 - theta.cos()).unwrap())
        .unwrap()
}

fn unit_centered(x: &Matrix) -> Matrix {
    let c = x.center_columns();
    let n = c.frobenius_norm();
    c.scale(1.0 / n).unwrap()
}

/// 1 − ½‖X̂ − ŶQ‖², maximised by random restarts plus shrinking-step hill
/// climbing over both connected components of O(3).
fn procrustes_oracle(x: &Matrix, y: &Matrix, rng: &mut SeededRng) -> f64 {
    let (xs, ys) = (unit_centered(x), unit_centered(y));
    let score = |q: &Matrix| {
        let r = xs.sub(&ys.matmul(q).unwrap()).unwrap().frobenius_norm();
        1.0 - 0.5 * r * r
    };
    let mut best = f64::NEG_INFINITY;
    for reflect in [1.0, -1.0] {
        let flip = Matrix::diag(&[reflect, 1.0, 1.0]).unwrap();
        for _ in 0..20 {
            let w = [rng.normal() * 2.0, rng.normal() * 2.0, rng.normal() * 2.0];
            let mut q = rotation(w).matmul(&flip).unwrap();
            let mut cur = score(&q);
            let mut step = 0.5;
            while step > 1e-7 {
                let mut improved = false;
                for _ in 0..30 {
                    let dw = [rng.normal() * step, rng.normal() * step, rng.normal() * step];
                    let cand = rotation(dw).matmul(&q).unwrap();
                    let s = score(&cand);
                    if s > cur {
                        q = cand;
                        cur = s;
                        improved = true;
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            best = best.max(cur);
        }
    }
    best
}

#[test]
fn procrustes_matches_rotation_search() {
    for seed in 0..3 {
        let mut rng = SeededRng::new(seed);
        let x = gaussian_matrix(&mut rng, 8, 3);
        let y = gaussian_matrix(&mut rng, 8, 3);
        let exact = procrustes_similarity(&x, &y).unwrap();
        let oracle = procrustes_oracle(&x, &y, &mut rng);
        assert!((exact - oracle).abs() < 1e-3, "seed {seed}: {exact} vs {oracle}");
        assert!(exact >= oracle - 1e-9, "oracle beat the closed form");
    }
}

fn random_orthogonal(rng: &mut SeededRng, d: usize) -> Matrix {
    let g = gaussian_matrix(rng, d, d);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for c in 0..d {
        let mut v = g.column(c);
        for u in &cols {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= n);
        cols.push(v);
    }
    Matrix::from_fn(d, d, |r, c| cols[c][r]).unwrap()
}

#[test]
fn rbf_cka_prefers_related_inputs() {
    let mut rng = SeededRng::new(11);
    let x = gaussian_matrix(&mut rng, 64, 6);
    let g = gaussian_matrix(&mut rng, 64, 6);
    let noise = gaussian_matrix(&mut rng, 64, 6).scale(0.01).unwrap();
    let unrelated = cka_rbf(&x, &g, Bandwidth::Median).unwrap();
    let related = cka_rbf(&x, &x.add(&noise).unwrap(), Bandwidth::Median).unwrap();
    assert!(unrelated < related, "{unrelated} >= {related}");
}

#[test]
fn copied_target_aligns_perfectly() {
    let mut rng = SeededRng::new(5);
    let x = gaussian_matrix(&mut rng, 40, 5);
    let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
    for metric in AlignmentMetric::ALL {
        let r = class_conditional_alignment(&x, &labels, &x, &labels, metric, &mut SeededRng::new(1)).unwrap();
        assert!((r.mean_score - 1.0).abs() < 1e-9, "{metric}: {}", r.mean_score);
        assert_eq!(r.per_class_scores.len(), 4);
    }
}

fn feature_strategy() -> impl Strategy<Value = Matrix> {
    (4usize..24, 1usize..7, any::<u64>()).prop_map(|(n, d, seed)| gaussian_matrix(&mut SeededRng::new(seed), n, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rankme_bounded(z in feature_strategy()) {
        let r = rankme(&z).unwrap();
        prop_assert!(r >= 1.0 - 1e-12);
        prop_assert!(r <= z.rows().min(z.cols()) as f64 + 1e-9);
    }

    #[test]
    fn metrics_invariant_to_similarity_transforms(x in feature_strategy(), seed in any::<u64>(), scale in 0.1f64..10.0) {
        let mut rng = SeededRng::new(seed);
        let q = random_orthogonal(&mut rng, x.cols());
        let y = x.matmul(&q).unwrap().scale(scale).unwrap();
        prop_assert!((cka_linear(&x, &y).unwrap() - 1.0).abs() < 1e-8);
        prop_assert!((procrustes_similarity(&x, &y).unwrap() - 1.0).abs() < 1e-8);
        let shift = gaussian_matrix(&mut rng, 1, x.cols());
        let shifted = Matrix::from_fn(x.rows(), x.cols(), |r, c| y.get(r, c) + shift.get(0, c)).unwrap();
        prop_assert!((procrustes_similarity(&x, &shifted).unwrap() - 1.0).abs() < 1e-8);
        prop_assert!((cka_rbf(&x, &x.matmul(&q).unwrap(), Bandwidth::Median).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn scores_symmetric_and_bounded(x in feature_strategy(), seed in any::<u64>(), width in 1usize..7) {
        let y = gaussian_matrix(&mut SeededRng::new(seed), x.rows(), width);
        let a = cka_linear(&x, &y).unwrap();
        let b = cka_linear(&y, &x).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        for metric in AlignmentMetric::ALL {
            let s = metric.score(&x, &y).unwrap();
            prop_assert!((0.0..=1.0 + 1e-9).contains(&s), "{} = {}", metric, s);
        }
    }
}
