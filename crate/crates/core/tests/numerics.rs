#![allow(clippy::excessive_precision)]
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vbtrack_core::numerics::*;

fn gamma_pdf_ln(x: f64, g: &GammaParams) -> f64 {
    (g.shape - 1.0) * x.ln() - x / g.scale - ln_gamma(g.shape).unwrap() - g.shape * g.scale.ln()
}

// Composite Simpson in u = ln x over a range wide enough for the test shapes.
fn kl_gamma_quadrature(q: &GammaParams, p: &GammaParams) -> f64 {
    let (a, b) = (-40.0f64, 8.0f64);
    let n = 400_000;
    let h = (b - a) / n as f64;
    let f = |u: f64| {
        let x = u.exp();
        let lq = gamma_pdf_ln(x, q);
        lq.exp() * x * (lq - gamma_pdf_ln(x, p))
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn digamma_examples() {
    assert!((digamma(2.0).unwrap() - 0.422_784_335_098_467_1).abs() < 1e-12);
    assert!((ln_gamma(0.5).unwrap() - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
}

#[test]
fn digamma_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let x = 10f64.powf(-3.0 + 8.0 * rng.random::<f64>());
        let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
        assert!(d.abs() <= 1e-12 * (1.0 / x).max(1.0), "x={x} residual {d}");
    }
}

#[test]
fn kl_gamma_against_quadrature() {
    let cases = [
        ((2.0, 1.0), (1.0, 1.0)),
        ((1.0, 2.0), (1.0, 1.0)),
        ((5.5, 0.3), (2.0, 1.7)),
        ((0.8, 4.0), (3.0, 0.5)),
    ];
    for ((a, b), (c, d)) in cases {
        let q = GammaParams::new(a, b).unwrap();
        let p = GammaParams::new(c, d).unwrap();
        let exact = kl_gamma(&q, &p).unwrap();
        let quad = kl_gamma_quadrature(&q, &p);
        assert!((exact - quad).abs() < 1e-8, "{a},{b} || {c},{d}: {exact} vs {quad}");
    }
    let q = GammaParams::new(1.0, 2.0).unwrap();
    let p = GammaParams::new(1.0, 1.0).unwrap();
    assert!((kl_gamma(&q, &p).unwrap() - 0.306_852_819_440_054_7).abs() < 1e-12);
}

#[test]
fn kl_gamma_domain() {
    let bad = GammaParams {
        shape: -1.0,
        scale: 1.0,
    };
    let ok = GammaParams::new(1.0, 1.0).unwrap();
    assert!(kl_gamma(&bad, &ok).is_err());
    assert!(kl_gamma(&ok, &bad).is_err());
}

#[test]
fn kl_gaussian_examples() {
    let q = GaussianParams::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    let p = GaussianParams::new(DVector::from_vec(vec![1.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
    assert!((kl_gaussian(&q, &p).unwrap() - 0.5).abs() < 1e-14);
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

#[test]
fn kl_gaussian_against_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = GaussianParams::new(DVector::from_fn(4, |_, _| rng.random::<f64>()), random_spd(&mut rng, 4)).unwrap();
    let p = GaussianParams::new(DVector::from_fn(4, |_, _| rng.random::<f64>()), random_spd(&mut rng, 4)).unwrap();
    let exact = kl_gaussian(&q, &p).unwrap();
    let l = nalgebra::Cholesky::new(q.cov.clone()).unwrap().l();
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let z = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &q.mean + &l * z;
        let v = gaussian_log_density(&x, &q.mean, &q.cov).unwrap() - gaussian_log_density(&x, &p.mean, &p.cov).unwrap();
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((exact - mean).abs() < 3.0 * se, "{exact} vs {mean} ± {se}");
}

#[test]
fn quadratic_examples() {
    let m = DVector::from_vec(vec![1.0, -2.0]);
    let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let s = sum_quadratic_forms(&[(m.clone(), c.clone())]).unwrap();
    assert!((&s.mean - &m).norm() < 1e-12);
    assert!((&s.cov - &c).norm() < 1e-12);
    assert!(s.constant.abs() < 1e-12);

    let means = [DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![2.0, 0.0])];
    let s = sum_weighted_quadratic_forms(&means, &[0.5, 0.5], &DMatrix::identity(2, 2)).unwrap();
    assert!((s.mean[0] - 1.0).abs() < 1e-12 && s.mean[1].abs() < 1e-12);
    assert!((&s.cov - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);

    let singular = [(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]))];
    assert!(sum_quadratic_forms(&singular).is_err());
}

fn lemma_residual(seed: u64, n: usize, d: usize, points: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(DVector<f64>, DMatrix<f64>)> = (0..n)
        .map(|_| {
            (
                DVector::from_fn(d, |_, _| 4.0 * (rng.random::<f64>() - 0.5)),
                random_spd(&mut rng, d),
            )
        })
        .collect();
    let s = sum_quadratic_forms(&terms).unwrap();
    let sinv = s.cov.clone().try_inverse().unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x = DVector::from_fn(d, |_, _| 6.0 * (rng.random::<f64>() - 0.5));
        let lhs: f64 = terms
            .iter()
            .map(|(m, c)| {
                let r = &x - m;
                -0.5 * r.dot(&(c.clone().try_inverse().unwrap() * &r))
            })
            .sum();
        let r = &x - &s.mean;
        let rhs = -0.5 * r.dot(&(&sinv * &r)) + s.constant;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    worst
}

#[test]
fn lemma_identity_pointwise() {
    assert!(lemma_residual(11, 4, 3, 100) < 1e-10);
}

#[test]
fn interpolated_cdf_examples() {
    let f = InterpolatedPoissonCdf::new(1.0).unwrap();
    assert!((f.evaluate(0.0) - (-1.0f64).exp()).abs() < 1e-15);
    assert!((f.evaluate(2.0) - 2.5 * (-1.0f64).exp()).abs() < 1e-15);
    let f10 = InterpolatedPoissonCdf::new(10.0).unwrap();
    let p = f10.evaluate(1.0);
    assert!((p - 4.994e-4).abs() < 1e-7);
    assert!((f10.invert(p).unwrap() - 1.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn lemma_identity_random(seed in 0u64..100_000, n in 1usize..=8, d in 1usize..=6) {
        prop_assert!(lemma_residual(seed, n, d, 10) < 1e-10);
    }

    #[test]
    fn digamma_step(x in 1e-3f64..1e6) {
        let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
        prop_assert!(d.abs() <= 1e-12 * (1.0 / x).max(1.0));
    }

    #[test]
    fn kl_non_negative(a in 0.1f64..20.0, b in 0.05f64..10.0, c in 0.1f64..20.0, d in 0.05f64..10.0) {
        let q = GammaParams::new(a, b).unwrap();
        let p = GammaParams::new(c, d).unwrap();
        prop_assert!(kl_gamma(&q, &p).unwrap() >= -1e-12);
    }

    #[test]
    fn kl_gaussian_non_negative(seed in 0u64..100_000, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = GaussianParams::new(DVector::from_fn(d, |_, _| rng.random::<f64>()), random_spd(&mut rng, d)).unwrap();
        let p = GaussianParams::new(DVector::from_fn(d, |_, _| rng.random::<f64>()), random_spd(&mut rng, d)).unwrap();
        prop_assert!(kl_gaussian(&q, &p).unwrap() >= -1e-12);
        prop_assert!(kl_gaussian(&q, &q).unwrap().abs() <= 1e-12);
    }

    // Strictness is checked where the CDF is still resolvable from 1 in f64.
    #[test]
    fn interpolant_strictly_increasing(lambda in 0.2f64..60.0) {
        let f = InterpolatedPoissonCdf::new(lambda).unwrap();
        let top = lambda + 10.0 * lambda.sqrt();
        let steps = 4000;
        let mut prev = f.evaluate(0.0);
        for i in 1..=steps {
            let x = top * i as f64 / steps as f64;
            let v = f.evaluate(x);
            if v > 1.0 - 1e-12 {
                break;
            }
            prop_assert!(v > prev, "lambda {} x {} {} <= {}", lambda, x, v, prev);
            prev = v;
        }
    }

    // Round trip on the part of the range where the slope exceeds 1e-6.
    #[test]
    fn invert_round_trip(lambda in 0.2f64..60.0, u in 0.0f64..1.0) {
        let f = InterpolatedPoissonCdf::new(lambda).unwrap();
        let x = u * (lambda + 4.0 * lambda.sqrt());
        let p = f.evaluate(x);
        let slope = (f.evaluate(x + 1e-4) - f.evaluate((x - 1e-4).max(0.0))) / (x + 1e-4 - (x - 1e-4).max(0.0));
        prop_assume!(slope > 1e-6 && p > f.evaluate(0.0) && p < 1.0);
        let back = f.invert(p).unwrap();
        prop_assert!((back - x).abs() < 1e-9, "x {} back {}", x, back);
    }
}
