//! Metrics against straightforward per-pixel loops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use omnivid_core::codec::{Video, VideoMask};
use omnivid_core::eval::{
    boundary_frame_error, identity_score, mean_std, preservation_error, report_csv, report_table,
    EvalRow, COLUMNS,
};
use omnivid_core::instruction::TaskKind;

fn video(rng: &mut ChaCha8Rng, f: usize, h: usize, w: usize) -> Video {
    Video::new(f, h, w, (0..f * h * w * 3).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn mask(rng: &mut ChaCha8Rng, f: usize, h: usize, w: usize, p: f64) -> VideoMask {
    let mut m = VideoMask::empty(f, h, w);
    for t in 0..f {
        for y in 0..h {
            for x in 0..w {
                m.set(t, y, x, rng.random_bool(p));
            }
        }
    }
    m
}

fn frame_mse(a: &Video, fa: usize, b: &Video, fb: usize) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height {
        for x in 0..a.width {
            let (p, q) = (a.pixel(fa, y, x), b.pixel(fb, y, x));
            for c in 0..3 {
                s += (p[c] as f64 - q[c] as f64).powi(2);
            }
        }
    }
    s / (a.height * a.width * 3) as f64
}

#[test]
fn boundary_error_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let g = video(&mut rng, 5, 8, 12);
        let (a, b) = (video(&mut rng, 1, 8, 12), video(&mut rng, 1, 8, 12));
        let (e0, e1) = boundary_frame_error(&g, &a, &b).unwrap();
        assert!((e0 - frame_mse(&g, 0, &a, 0)).abs() <= 1e-9);
        assert!((e1 - frame_mse(&g, 4, &b, 0)).abs() <= 1e-9);
    }
    let g = video(&mut rng, 2, 8, 8);
    assert!(boundary_frame_error(&g, &video(&mut rng, 1, 4, 8), &g.frame(1)).is_err());
}

#[test]
fn preservation_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (s, g) = (video(&mut rng, 3, 8, 8), video(&mut rng, 3, 8, 8));
        let m = mask(&mut rng, 3, 8, 8, 0.4);
        let (mut sum, mut n) = (0.0, 0);
        for f in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    if !m.get(f, y, x) {
                        let (p, q) = (s.pixel(f, y, x), g.pixel(f, y, x));
                        for c in 0..3 {
                            sum += (p[c] as f64 - q[c] as f64).powi(2);
                            n += 1;
                        }
                    }
                }
            }
        }
        assert!((preservation_error(&s, &g, &m).unwrap() - sum / n as f64).abs() <= 1e-9);
    }
    let v = video(&mut rng, 1, 4, 4);
    assert!(preservation_error(&v, &v, &VideoMask::full(1, 4, 4)).is_err());
}

fn bin(p: [f32; 3]) -> usize {
    let b = |v: f32| ((v * 4.0) as usize).min(3);
    b(p[0]) * 16 + b(p[1]) * 4 + b(p[2])
}

#[test]
fn identity_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut reference = Video::filled(1, 8, 8, [1.0; 3]);
        for y in 2..6 {
            for x in 2..6 {
                reference.set_pixel(0, y, x, [rng.random(), rng.random(), rng.random()]);
            }
        }
        let g = video(&mut rng, 3, 8, 8);
        let m = mask(&mut rng, 3, 8, 8, 0.3);
        let mut href = [0.0f64; 64];
        let mut nref = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                let p = reference.pixel(0, y, x);
                if p != [1.0; 3] {
                    href[bin(p)] += 1.0;
                    nref += 1.0;
                }
            }
        }
        let mut scores = Vec::new();
        for f in 0..3 {
            let mut h = [0.0f64; 64];
            let mut n = 0.0;
            for y in 0..8 {
                for x in 0..8 {
                    if m.get(f, y, x) {
                        h[bin(g.pixel(f, y, x))] += 1.0;
                        n += 1.0;
                    }
                }
            }
            if n > 0.0 {
                scores.push((0..64).map(|i| (href[i] / nref).min(h[i] / n)).sum::<f64>());
            }
        }
        let want = scores.iter().sum::<f64>() / scores.len() as f64;
        let got = identity_score(&reference, &g, &m).unwrap();
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        assert!((0.0..=1.0).contains(&got));
    }
}

#[test]
fn aggregates_match_loop_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<EvalRow> = (0..7)
        .map(|i| {
            let recon: f64 = rng.random_range(0.001..0.1);
            EvalRow {
                sample: format!("s{i}"),
                task: TaskKind::ALL[i % 5],
                recon_mse: recon,
                psnr: 10.0 * (1.0 / recon).log10(),
                boundary_first: None,
                boundary_last: None,
                preservation: (i % 2 == 0).then(|| rng.random_range(0.0..0.05)),
                identity: None,
            }
        })
        .collect();
    let vals: Vec<f64> = rows.iter().map(|r| r.recon_mse).collect();
    let mut sum = 0.0;
    for v in &vals {
        sum += v;
    }
    let mean = sum / vals.len() as f64;
    let (m, _) = mean_std(&vals).unwrap();
    assert!((m - mean).abs() <= 1e-9);
    let csv = report_csv(&rows);
    assert_eq!(csv.lines().next().unwrap(), COLUMNS.join(","));
    assert_eq!(csv.lines().count(), 8);
    assert_eq!(report_table(&rows, &[]), report_table(&rows.clone(), &[]));
}
