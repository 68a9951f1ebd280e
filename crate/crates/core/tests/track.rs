use proptest::prelude::*;
use vbtrack_core::cavi::{known_rate_step, RateBelief, TrackerBeliefs, TrackerContext, TrackerState};
use vbtrack_core::model::RateVector;
use vbtrack_core::numerics::{poisson_cdf, InterpolatedPoissonCdf};
use vbtrack_core::scenario::{generate_frames, generate_truth, initial_beliefs, AngleLayout, Heading, ScenarioConfig};
use vbtrack_core::track::*;

fn exact_cdf(n: u64, lambda: f64) -> f64 {
    let mut p = (-lambda).exp();
    let mut s = 0.0;
    for i in 0..=n {
        s += p;
        p *= lambda / (i + 1) as f64;
    }
    s
}

#[test]
fn loss_params_examples() {
    let a = select_loss_params(5.0, 7e-4).unwrap();
    assert_eq!(a.tau, 2);
    assert!(a.m_los > 1.0 && a.m_los < 2.0, "{}", a.m_los);
    assert!(exact_cdf(1, 10.0) < 7e-4 && 7e-4 < exact_cdf(2, 10.0));
    let f = InterpolatedPoissonCdf::new(10.0).unwrap();
    assert!((f.evaluate(a.m_los) - 7e-4).abs() < 1e-12);
    for n in 0..30u64 {
        assert!((f.evaluate(n as f64) - poisson_cdf(n, 10.0).unwrap()).abs() < 1e-12);
    }
    assert_eq!(select_loss_params(6.0, 5e-4).unwrap().tau, 2);
    assert!(select_loss_params(5.0, 0.0).is_err());
    assert!(select_loss_params(0.0, 0.1).is_err());
}

#[test]
fn reloc_threshold_examples() {
    let a = select_reloc_thresholds(5.0, 0.5, 1.0).unwrap();
    assert!(a.m_reloc > 4.0 && a.m_reloc < 5.0, "{}", a.m_reloc);
    assert!(exact_cdf(4, 5.0) < 0.5 && 0.5 < exact_cdf(5, 5.0));
    assert!((a.m_init - (a.m_reloc - 1.0)).abs() < 1e-15);
    let b = select_reloc_thresholds(6.0, 0.5, 2.0).unwrap();
    assert!(b.m_reloc > 5.0 && b.m_reloc < 6.0, "{}", b.m_reloc);
    assert!(exact_cdf(5, 6.0) < 0.5 && 0.5 < exact_cdf(6, 6.0));
    assert!(b.m_init < b.m_reloc);
    // Target below F(0): both thresholds clamp to zero.
    let c = select_reloc_thresholds(1.0, 0.8, 1.0).unwrap();
    assert_eq!((c.m_reloc, c.m_init), (0.0, 0.0));
}

proptest! {
    #[test]
    fn tau_is_minimal(lambda in 0.2f64..30.0, p in 1e-6f64..0.5) {
        let t = select_loss_params(lambda, p).unwrap();
        prop_assert!((-(t.tau as f64) * lambda).exp() <= p * (1.0 + 1e-12));
        if t.tau >= 2 {
            prop_assert!(p < (-((t.tau - 1) as f64) * lambda).exp());
        }
        prop_assert!(t.m_los >= 0.0 && t.m_los < t.tau as f64 * lambda);
    }

    #[test]
    fn backfilled_window_clears_loss_threshold(lambda in 1.0f64..30.0, p_los in 1e-6f64..1e-2, p_reloc in 0.2f64..0.8) {
        let l = select_loss_params(lambda, p_los).unwrap();
        let r = select_reloc_thresholds(lambda, p_reloc, 1.0).unwrap();
        prop_assert!(r.m_init <= r.m_reloc);
        prop_assert!(r.m_reloc == 0.0 || r.m_init < r.m_reloc);
        // Relocated at step n with evidence at least M^reloc, next window holds τ-2 backfilled Λ and the step-n count.
        let window = (l.tau.saturating_sub(2)) as f64 * lambda + r.m_reloc;
        prop_assert!(window >= l.m_los, "{} < {}", window, l.m_los);
    }
}

#[test]
fn health_buffers() {
    let rates = RateVector::new(vec![100.0, 5.0, 6.0]).unwrap();
    let cfg = LossDetectorConfig::from_rates(&rates, 7e-4, 0.5, 1.0).unwrap();
    let mut h = TrackHealth::new(&cfg, &rates).unwrap();
    assert_eq!(h.window_sum(1), 10.0);
    assert_eq!(h.tracked(), vec![1, 2]);
    h.push(1, 0.5);
    h.push(1, 0.4);
    assert!((h.window_sum(1) - 0.9).abs() < 1e-15);
    assert!(detect_loss(h.window_sum(1), 1.3));
    h.push(2, 5.0);
    assert!(!detect_loss(h.window_sum(2), cfg.objects[1].m_los));
}

fn separated_config(k: usize, rate: f64, density: f64) -> ScenarioConfig {
    ScenarioConfig {
        num_objects: k,
        steps: 40,
        dt: 1.0,
        initial_radius: 300.0,
        initial_speed: 10.0,
        heading: Heading::Outward,
        layout: AngleLayout::EquallySpaced,
        object_rates: vec![rate; k],
        clutter_density: density,
        region_side: 2000.0,
        noise_var: 100.0,
        accel_var: 1.0,
    }
}

fn start(
    cfg: &ScenarioConfig,
    truth: &vbtrack_core::scenario::GroundTruth,
) -> (TrackerContext, TrackerState, RateVector) {
    let ctx = TrackerContext::new(cfg.transition_model(), cfg.measurement_model().unwrap()).unwrap();
    let rates = cfg.rates().unwrap();
    let state = TrackerState {
        step: 0,
        beliefs: TrackerBeliefs {
            objects: initial_beliefs(truth, 25.0),
            rates: RateBelief::Known(rates.clone()),
        },
    };
    (ctx, state, rates)
}

#[test]
fn no_losses_matches_plain_tracker() {
    let cfg = separated_config(2, 20.0, 1e-5);
    let truth = generate_truth(&cfg, 3).unwrap();
    let frames = generate_frames(&truth, &cfg, 4).unwrap();
    let (ctx, state, rates) = start(&cfg, &truth);
    let det = LossDetectorConfig::from_rates(&rates, 7e-4, 0.5, 1.0).unwrap();
    let relo = ReloConfig::new(det.clone(), 35.0);
    let mut plain = state.clone();
    let mut rs = ReloState {
        health: TrackHealth::new(&det, &rates).unwrap(),
        tracker: state,
    };
    for f in &frames.frames {
        plain = known_rate_step(&ctx, &plain, f, &rates).unwrap().state;
        let (next, d) = relo_step(&ctx, &relo, &rs, f, &rates).unwrap();
        assert!(d.newly_lost.is_empty() && d.relocation.is_none());
        rs = next;
        assert_eq!(rs.tracker, plain);
    }
}

#[test]
fn teleported_object_is_detected_and_window_recovers() {
    let mut detected_in_time = 0;
    let mut relocations = 0;
    let mut reflagged = 0;
    let seeds = 40;
    for seed in 0..seeds {
        let cfg = separated_config(3, 5.0, 5e-5);
        let mut truth = generate_truth(&cfg, 100 + seed).unwrap();
        for n in 20..truth.states.len() {
            let x = &mut truth.states[n][0];
            x[2] -= 600.0;
        }
        let frames = generate_frames(&truth, &cfg, 200 + seed).unwrap();
        let (ctx, state, rates) = start(&cfg, &truth);
        let det = LossDetectorConfig::from_rates(&rates, 7e-4, 0.5, 1.0).unwrap();
        let tau = det.objects[0].tau;
        let m_los = det.objects[0].m_los;
        let relo = ReloConfig::new(det.clone(), 35.0);
        let mut rs = ReloState {
            health: TrackHealth::new(&det, &rates).unwrap(),
            tracker: state,
        };
        let mut first_loss = None;
        let mut relocated_at = None;
        for f in &frames.frames {
            let (next, d) = relo_step(&ctx, &relo, &rs, f, &rates).unwrap();
            let n = f.step();
            if d.newly_lost.contains(&1) {
                if first_loss.is_none() && n >= 20 {
                    first_loss = Some(n);
                }
                if relocated_at == Some(n - 1) {
                    reflagged += 1;
                }
            }
            if d.relocated.contains(&1) {
                relocations += 1;
                relocated_at = Some(n);
                let newest = *next.health.window(1).back().unwrap();
                assert!(newest + (tau.saturating_sub(2)) as f64 * 5.0 > m_los, "{newest}");
            }
            for k in 1..=3 {
                assert!(next.health.is_missed(k) != next.health.tracked().contains(&k));
            }
            rs = next;
        }
        if let Some(n) = first_loss {
            if n <= 20 + tau {
                detected_in_time += 1;
            }
        }
    }
    assert!(detected_in_time * 10 >= seeds * 9, "{detected_in_time}/{seeds}");
    assert!(relocations > 0);
    assert!(
        reflagged * 5 <= relocations,
        "{reflagged} of {relocations} relocations re-flagged next step"
    );
}

#[test]
fn relocation_restores_teleported_track() {
    let cfg = separated_config(3, 5.0, 1e-4);
    let mut truth = generate_truth(&cfg, 7).unwrap();
    for n in 20..truth.states.len() {
        truth.states[n][0][2] -= 600.0;
    }
    let frames = generate_frames(&truth, &cfg, 8).unwrap();
    let (ctx, state, rates) = start(&cfg, &truth);
    let det = LossDetectorConfig::from_rates(&rates, 7e-4, 0.5, 1.0).unwrap();
    let relo = ReloConfig::new(det.clone(), 35.0);
    let mut rs = ReloState {
        health: TrackHealth::new(&det, &rates).unwrap(),
        tracker: state,
    };
    for f in &frames.frames {
        rs = relo_step(&ctx, &relo, &rs, f, &rates).unwrap().0;
    }
    let h = ctx.measurement.h();
    let est = h * &rs.tracker.beliefs.objects[0].mean;
    let tru = h * truth.states.last().unwrap()[0].clone();
    let err: f64 = (est - tru).norm();
    assert!(err < 30.0, "final error {err}");
    assert!(rs.health.tracked().contains(&1));
}
