use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor3D {
    Tensor3D::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_conv(k: usize, i: usize, o: usize, d: usize, rng: &mut ChaCha8Rng) -> ConvSpec {
    ConvSpec::new(
        k,
        i,
        o,
        d,
        (0..o * i * k * k).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..o).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Direct six-loop correlation with explicit bounds checks.
fn conv_oracle(x: &Tensor3D, s: &ConvSpec) -> Tensor3D {
    let (c, h, w) = x.shape();
    let pad = s.padding() as isize;
    let mut out = vec![0.0; s.out_channels() * h * w];
    for o in 0..s.out_channels() {
        for r in 0..h {
            for col in 0..w {
                let mut acc = s.bias()[o];
                for i in 0..c {
                    for ky in 0..s.kernel() {
                        for kx in 0..s.kernel() {
                            let y = r as isize + (ky * s.dilation()) as isize - pad;
                            let xx = col as isize + (kx * s.dilation()) as isize - pad;
                            if y >= 0 && y < h as isize && xx >= 0 && xx < w as isize {
                                acc += s.weight(o, i, ky, kx) * x.channel(i).get(y as usize, xx as usize);
                            }
                        }
                    }
                }
                out[(o * h + r) * w + col] = acc;
            }
        }
    }
    Tensor3D::from_vec(s.out_channels(), h, w, out).unwrap()
}

#[test]
fn conv_identity_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(3, 5, 6, &mut rng);
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 3 + i] = 1.0;
    }
    let id = ConvSpec::new(1, 3, 3, 1, eye, vec![0.0; 3]).unwrap();
    assert_eq!(conv2d(&x, &id).unwrap(), x);

    let c = ConvSpec::new(3, 3, 2, 2, vec![0.0; 54], vec![0.25, -4.0]).unwrap();
    let y = conv2d(&x, &c).unwrap();
    assert!(y.channel_slice(0).iter().all(|&v| v == 0.25));
    assert!(y.channel_slice(1).iter().all(|&v| v == -4.0));
}

#[test]
fn conv_matches_direct_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (k, d) in [(1, 1), (3, 1), (3, 2), (5, 1), (5, 3), (3, 16)] {
        let x = random_tensor(3, 5, 7, &mut rng);
        let s = random_conv(k, 3, 2, d, &mut rng);
        let (a, b) = (conv2d(&x, &s).unwrap(), conv_oracle(&x, &s));
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() <= 1e-12, "k={k} d={d}");
        }
    }
}

#[test]
fn conv_rejects_bad_specs() {
    assert!(ConvSpec::zeros(2, 1, 1, 1).is_err());
    assert!(ConvSpec::zeros(3, 1, 1, 0).is_err());
    assert!(ConvSpec::new(3, 1, 1, 1, vec![0.0; 8], vec![0.0]).is_err());
    let x = Tensor3D::zeros(2, 4, 4);
    assert!(conv2d(&x, &ConvSpec::zeros(3, 3, 1, 1).unwrap()).is_err());
}

#[test]
fn pooling_and_concat() {
    let x = Tensor3D::from_vec(1, 3, 5, (0..15).map(|v| v as f64).collect()).unwrap();
    let p = max_pool2(&x).unwrap();
    assert_eq!(p.shape(), (1, 1, 2));
    assert_eq!(p.as_slice(), &[6.0, 8.0]);
    assert!(max_pool2(&Tensor3D::zeros(1, 1, 4)).is_err());

    let a = Tensor3D::from_vec(1, 1, 2, vec![1.0, 2.0]).unwrap();
    let b = Tensor3D::from_vec(2, 1, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
    let c = concat(&[&a, &b]).unwrap();
    assert_eq!(c.shape(), (3, 1, 2));
    assert_eq!(c.channel_slice(0), &[1.0, 2.0]);
    assert!(concat(&[&a, &Tensor3D::zeros(1, 2, 2)]).is_err());
}

#[test]
fn residual_identity_with_zero_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(4, 6, 7, &mut rng);
    let w = CMRBlockWeights::zeros(4, 4).unwrap();
    assert_eq!(cmr_forward(&x, &w).unwrap(), x);

    let mut seeded = CMRBlockWeights::zeros(4, 4).unwrap();
    seeded.t1 = random_conv(3, 4, 4, 1, &mut rng);
    seeded.t1.bias.iter_mut().for_each(|b| *b = 0.0);
    seeded.f1 = random_conv(5, 4, 4, 1, &mut rng);
    seeded.f1.bias.iter_mut().for_each(|b| *b = 0.0);
    let zero = Tensor3D::zeros(4, 6, 7);
    assert!(cmr_forward(&zero, &seeded).unwrap().as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn cmr_matches_step_by_step_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor(2, 8, 8, &mut rng);
    let w = CMRBlockWeights {
        t1: random_conv(3, 2, 3, 1, &mut rng),
        f1: random_conv(5, 2, 3, 1, &mut rng),
        t2: random_conv(3, 6, 3, 1, &mut rng),
        f2: random_conv(5, 6, 3, 1, &mut rng),
        merge: random_conv(1, 6, 2, 1, &mut rng),
    };
    let relu_o = |t: Tensor3D| relu(&t);
    let t1 = relu_o(conv_oracle(&x, &w.t1));
    let f1 = relu_o(conv_oracle(&x, &w.f1));
    let cross = concat(&[&t1, &f1]).unwrap();
    let t2 = relu_o(conv_oracle(&cross, &w.t2));
    let f2 = relu_o(conv_oracle(&cross, &w.f2));
    let o = conv_oracle(&concat(&[&t2, &f2]).unwrap(), &w.merge);
    let want: Vec<f64> = o.as_slice().iter().zip(x.as_slice()).map(|(a, b)| a + b).collect();
    let got = cmr_forward(&x, &w).unwrap();
    for (g, e) in got.as_slice().iter().zip(&want) {
        assert!((g - e).abs() <= 1e-12);
    }

    let mut bad = w.clone();
    bad.merge = random_conv(1, 6, 3, 1, &mut rng);
    assert!(cmr_forward(&x, &bad).is_err());
}

#[test]
fn dim_behaviour() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let zero = DIMConfig {
        rates: [4, 8, 16],
        branches: [
            ConvSpec::zeros(3, 3, 2, 4).unwrap(),
            ConvSpec::zeros(3, 3, 2, 8).unwrap(),
            ConvSpec::zeros(3, 3, 2, 16).unwrap(),
        ],
        merge: ConvSpec::zeros(1, 6, 3, 1).unwrap(),
    };
    // 3x5 is far smaller than any dilated extent
    let x = random_tensor(3, 3, 5, &mut rng);
    assert!(dim_forward(&x, &zero).unwrap().as_slice().iter().all(|&v| v == 0.0));

    let cfg = DIMConfig {
        rates: [4, 8, 16],
        branches: [
            random_conv(3, 3, 2, 4, &mut rng),
            random_conv(3, 3, 2, 8, &mut rng),
            random_conv(3, 3, 2, 16, &mut rng),
        ],
        merge: random_conv(1, 6, 3, 1, &mut rng),
    };
    let x = random_tensor(3, 12, 20, &mut rng);
    let parts: Vec<Tensor3D> = cfg.branches.iter().map(|b| relu(&conv_oracle(&x, b))).collect();
    let want = conv_oracle(&concat(&parts.iter().collect::<Vec<_>>()).unwrap(), &cfg.merge);
    let got = dim_forward(&x, &cfg).unwrap();
    for (g, e) in got.as_slice().iter().zip(want.as_slice()) {
        assert!((g - e).abs() <= 1e-12);
    }

    let mut dup = cfg.clone();
    dup.rates = [4, 4, 16];
    assert!(dim_forward(&x, &dup).is_err());
}

#[test]
fn decoder_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_tensor(4, 5, 6, &mut rng);
    let specs = vec![random_conv(3, 4, 3, 1, &mut rng), ConvSpec::zeros(1, 3, 1, 1).unwrap()];
    let s = decoder_forward(&x, &specs, (11, 13)).unwrap();
    assert_eq!(s.dims(), (11, 13));
    assert!(s.as_slice().iter().all(|&v| v == 0.5));
    assert!(decoder_forward(&x, &specs[..1], (5, 6)).is_err());

    // raising one logit never lowers its own output pixel
    let last = ConvSpec::new(1, 4, 1, 1, vec![0.3, -0.2, 0.5, 0.1], vec![0.0]).unwrap();
    let base = decoder_logits(&x, std::slice::from_ref(&last)).unwrap().map(sigmoid);
    let mut bumped = x.clone().into_vec();
    bumped[2 * 6 + 3] += 0.5; // channel 0 pixel (2,3), positive weight
    let bumped = Tensor3D::from_vec(4, 5, 6, bumped).unwrap();
    let after = decoder_logits(&bumped, std::slice::from_ref(&last)).unwrap().map(sigmoid);
    assert!(after.get(2, 3) >= base.get(2, 3));
}

#[test]
fn loss_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = Grid2D::from_fn(6, 6, |_, _| rng.random_range(0.01..1.0));
    let g = Grid2D::from_fn(6, 6, |_, _| rng.random_range(0.01..1.0));
    assert_eq!(loss(&p, &p).unwrap(), 0.0);
    assert_eq!(loss(&p.scale(4.0), &g.scale(0.125)).unwrap(), loss(&p, &g).unwrap());
    assert!((loss(&p.scale(3.7), &g.scale(0.31)).unwrap() - loss(&p, &g).unwrap()).abs() <= 1e-12);
    assert_eq!(loss(&p, &g).unwrap(), loss(&g, &p).unwrap());

    let a = Grid2D::from_fn(3, 3, |r, c| if (r, c) == (0, 0) { 5.0 } else { 0.0 });
    let b = Grid2D::from_fn(3, 3, |r, c| if (r, c) == (2, 1) { 0.3 } else { 0.0 });
    assert_eq!(loss(&a, &b).unwrap(), 2.0);
    let left = Grid2D::from_fn(6, 6, |_, c| if c < 3 { rng.random_range(0.1..1.0) } else { 0.0 });
    let right = Grid2D::from_fn(6, 6, |r, c| if c >= 3 && r % 2 == 0 { rng.random_range(0.1..1.0) } else { 0.0 });
    assert_eq!(loss(&left, &right).unwrap(), 2.0);

    // partial overlap against the plain per-pixel L1
    let (sl, sp) = (left.sum(), p.sum());
    let direct: f64 = left.as_slice().iter().zip(p.as_slice()).map(|(x, y)| (x / sl - y / sp).abs()).sum();
    assert!((loss(&left, &p).unwrap() - direct).abs() <= 1e-12);
    assert!(matches!(loss(&a, &Grid2D::zeros(3, 3)), Err(Error::UndefinedNormalization(_))));
    assert!(loss(&a, &Grid2D::zeros(3, 4)).is_err());
}

#[test]
fn full_forward_is_finite_and_dumps() {
    let w = synth_weights(7, &ChannelPlan::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lum = Grid2D::from_fn(64, 96, |_, _| rng.random_range(0.0..1.0));
    let out = cmrnet_forward(&lum, &w).unwrap();
    assert_eq!(out.saliency.dims(), (64, 96));
    assert!(out.saliency.as_slice().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    for l in &out.layers {
        assert!(l.tensor.as_slice().iter().all(|v| v.is_finite()), "{}", l.name);
    }
    let shapes: Vec<_> = out.layers.iter().map(|l| (l.name, l.tensor.shape())).collect();
    assert_eq!(
        shapes,
        vec![
            ("stem", (16, 64, 96)),
            ("cmr1", (16, 64, 96)),
            ("cmr2", (32, 32, 48)),
            ("cmr3", (64, 16, 24)),
            ("dim", (64, 8, 12)),
            ("decoder", (32, 8, 12)),
        ]
    );
    let again = cmrnet_forward(&lum, &w).unwrap();
    assert_eq!(again.saliency, out.saliency);

    let dir = tempfile::tempdir().unwrap();
    let m = out.dump(dir.path(), "input.png").unwrap();
    assert_eq!(m.layers.len(), 6);
    assert!(m.layers.windows(2).all(|p| p[0].index < p[1].index));
    for e in &m.layers {
        let t = m.load_layer(e).unwrap();
        assert_eq!([t.channels(), t.height(), t.width()], e.shape);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_is_linear_and_translation_equivariant(seed in any::<u64>(), a in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_conv(3, 2, 2, 1, &mut rng);
        let mut s0 = s.clone();
        s0.bias.iter_mut().for_each(|b| *b = 0.0);
        let (x, y) = (random_tensor(2, 9, 9, &mut rng), random_tensor(2, 9, 9, &mut rng));
        let xy: Vec<f64> = x.as_slice().iter().zip(y.as_slice()).map(|(u, v)| a * u + v).collect();
        let lhs = conv2d(&Tensor3D::from_vec(2, 9, 9, xy).unwrap(), &s0).unwrap();
        let (cx, cy) = (conv2d(&x, &s0).unwrap(), conv2d(&y, &s0).unwrap());
        for ((l, u), v) in lhs.as_slice().iter().zip(cx.as_slice()).zip(cy.as_slice()) {
            prop_assert!((l - (a * u + v)).abs() <= 1e-12);
        }

        // shift by (1, 2): interior outputs shift with the input
        let shifted = Tensor3D::from_vec(2, 9, 9, (0..2 * 81).map(|i| {
            let (ch, r, c) = (i / 81, (i % 81) / 9, i % 9);
            if r >= 1 && c >= 2 { x.channel(ch).get(r - 1, c - 2) } else { 0.0 }
        }).collect()).unwrap();
        let (base, moved) = (conv2d(&x, &s).unwrap(), conv2d(&shifted, &s).unwrap());
        for o in 0..2 {
            for r in 1..7 {
                for c in 1..6 {
                    prop_assert!((moved.channel(o).get(r + 1, c + 2) - base.channel(o).get(r, c)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn loss_is_symmetric_scale_free_and_bounded(seed in any::<u64>(), a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Grid2D::from_fn(5, 7, |_, _| rng.random_range(0.0..1.0));
        let g = Grid2D::from_fn(5, 7, |_, _| rng.random_range(0.0..1.0));
        let l = loss(&p, &g).unwrap();
        prop_assert!((0.0..=2.0).contains(&l));
        prop_assert_eq!(l, loss(&g, &p).unwrap());
        prop_assert!((loss(&p.scale(a), &g.scale(b)).unwrap() - l).abs() <= 1e-12);
    }
}
