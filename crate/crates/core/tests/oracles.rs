//! Library behavior checked against small independent oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scalodet::eval::{iou, match_detections};
use scalodet::signal::{generate_fault_signal, load_signal, write_raw_f32le, FaultSpec, SignalFormat};
use scalodet::{Annotation, Detection, FaultClass, Signal};

/// Among all partial one-to-one assignments that respect the IoU threshold,
/// the one whose IoU sequence (detections in confidence order, unmatched as
/// -1) is lexicographically largest. Returns gt index per detection rank.
fn lexicographic_assignment(gts: &[Annotation], ranked: &[Detection], thr: f64) -> Vec<Option<usize>> {
    fn go(
        k: usize,
        gts: &[Annotation],
        ranked: &[Detection],
        thr: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<(Option<usize>, f64)>,
        best: &mut Option<Vec<(Option<usize>, f64)>>,
    ) {
        if k == ranked.len() {
            let better = match best {
                None => true,
                Some(b) => {
                    let key = |v: &[(Option<usize>, f64)]| v.iter().map(|x| x.1).collect::<Vec<_>>();
                    key(cur).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Greater)
                }
            };
            if better {
                *best = Some(cur.clone());
            }
            return;
        }
        cur.push((None, -1.0));
        go(k + 1, gts, ranked, thr, used, cur, best);
        cur.pop();
        for g in 0..gts.len() {
            let o = iou(&ranked[k].annotation, &gts[g]);
            if !used[g] && o >= thr {
                used[g] = true;
                cur.push((Some(g), o));
                go(k + 1, gts, ranked, thr, used, cur, best);
                cur.pop();
                used[g] = false;
            }
        }
    }
    let mut best = None;
    go(0, gts, ranked, thr, &mut vec![false; gts.len()], &mut Vec::new(), &mut best);
    best.unwrap().into_iter().map(|x| x.0).collect()
}

fn random_box(rng: &mut ChaCha8Rng) -> Annotation {
    // A coarse lattice of centers makes overlapping boxes common.
    let x = rng.random_range(2..=8) as f64 / 10.0;
    let y = rng.random_range(2..=8) as f64 / 10.0;
    let w = rng.random_range(0.1..0.4);
    let h = rng.random_range(0.1..0.4);
    Annotation::new(FaultClass::Ball, x, y, w, h).unwrap()
}

#[test]
fn greedy_matching_equals_lexicographic_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut matched_total = 0;
    for _ in 0..2000 {
        let gts: Vec<Annotation> = (0..rng.random_range(0..=5)).map(|_| random_box(&mut rng)).collect();
        let dets: Vec<Detection> = (0..rng.random_range(0..=5))
            .map(|_| Detection::new(random_box(&mut rng), rng.random_range(0.0..1.0)).unwrap())
            .collect();
        let thr = [0.1, 0.3, 0.5][rng.random_range(0..3)];
        let result = match_detections(&gts, &dets, thr);

        let mut ranked = dets.clone();
        ranked.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
        let want = lexicographic_assignment(&gts, &ranked, thr);
        let got: Vec<Option<usize>> = result.matches.iter().map(|m| m.ground_truth).collect();
        assert_eq!(got, want, "gts {gts:?} dets {dets:?} thr {thr}");
        assert_eq!(result.tp, want.iter().flatten().count());
        assert_eq!(result.fp + result.tp, dets.len());
        assert_eq!(result.fn_ + result.tp, gts.len());
        matched_total += result.tp;
    }
    assert!(matched_total > 500, "scenes too sparse: {matched_total} matches");
}

fn noiseless(class: FaultClass, fault_hz: f64) -> FaultSpec {
    FaultSpec {
        fault_hz,
        noise_std: 0.0,
        shaft_amplitude: 0.0,
        ..FaultSpec::preset(class)
    }
}

/// Onsets of bursts: first sample above `level` after at least `gap`
/// samples at or below it.
fn burst_onsets(x: &[f64], level: f64, gap: usize) -> Vec<usize> {
    let mut onsets = Vec::new();
    let mut quiet = gap;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > level {
            if quiet >= gap {
                onsets.push(i);
            }
            quiet = 0;
        } else {
            quiet += 1;
        }
    }
    onsets
}

#[test]
fn impulse_count_by_threshold_crossing() {
    let signal = generate_fault_signal(&noiseless(FaultClass::Ball, 120.0), 2.0, 12_000.0, 0).unwrap();
    let peak = signal.samples().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let onsets = burst_onsets(signal.samples(), 0.3 * peak, 20);
    assert_eq!(onsets.len(), 240);
}

#[test]
fn impulse_spacing_matches_fault_rate() {
    for (class, fault_hz) in [
        (FaultClass::Ball, 141.17),
        (FaultClass::InnerRace, 162.19),
        (FaultClass::OuterRace, 107.36),
        (FaultClass::OuterRace, 97.3),
    ] {
        let fs = 12_000.0;
        let signal = generate_fault_signal(&noiseless(class, fault_hz), 1.0, fs, 0).unwrap();
        let peak = signal.samples().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let onsets = burst_onsets(signal.samples(), 0.3 * peak, 20);
        let expected = (fs / fault_hz).round() as i64;
        assert_eq!(onsets.len(), (fault_hz * 1.0_f64).floor() as usize, "{class}");
        for w in onsets.windows(2) {
            let d = (w[1] - w[0]) as i64;
            assert!((d - expected).abs() <= 1, "{class}: spacing {d}, expected {expected}±1");
        }
    }
}

#[test]
fn raw_f32le_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..3000).map(|_| rng.random_range(-10.0..10.0)).collect();
    let signal = Signal::new(x.clone(), 8_000.0, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.f32");
    write_raw_f32le(&signal, &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 3000 * 4);
    let back = load_signal(&path, SignalFormat::RawF32Le, 8_000.0).unwrap();
    assert_eq!(back.sample_rate_hz(), 8_000.0);
    for (a, b) in x.iter().zip(back.samples()) {
        assert_eq!(*b, *a as f32 as f64);
    }
}
