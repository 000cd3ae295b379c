mod common;

use common::{op_gradient_errors, random_array, rng};
use proptest::prelude::*;
use rrwnet::autodiff::kernels::{conv3x3_forward, max_pool2_forward, upsample2_forward};
use rrwnet::autodiff::{AdamConfig, AdamState, NdArray, Params, Tape};

/// Direct sliding-window cross-correlation with implicit zero padding.
fn naive_conv(x: &NdArray<f64>, k: &NdArray<f64>, b: &NdArray<f64>) -> NdArray<f64> {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let co = k.shape()[0];
    let at = |c: usize, y: isize, xx: isize| -> f64 {
        if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
            0.0
        } else {
            x.data()[c * h * w + y as usize * w + xx as usize]
        }
    };
    NdArray::from_fn(&[co, h, w], |idx| {
        let o = idx / (h * w);
        let y = (idx / w) % h;
        let xx = idx % w;
        let mut acc = b.data()[o];
        for c in 0..ci {
            for dy in 0..3 {
                for dx in 0..3 {
                    let kv = k.data()[((o * ci + c) * 3 + dy) * 3 + dx];
                    acc += kv * at(c, y as isize + dy as isize - 1, xx as isize + dx as isize - 1);
                }
            }
        }
        acc
    })
}

#[test]
fn conv_identity_kernel_returns_input() {
    let x = NdArray::new(vec![1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
    let mut k = NdArray::zeros(&[1, 1, 3, 3]);
    k.data_mut()[4] = 1.0;
    let y = conv3x3_forward(&x, &k, &NdArray::zeros(&[1])).unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv_average_of_constant_is_constant_inside() {
    let x = NdArray::full(&[1, 5, 5], 2.5f64);
    let k = NdArray::full(&[1, 1, 3, 3], 1.0 / 9.0);
    let y = conv3x3_forward(&x, &k, &NdArray::zeros(&[1])).unwrap();
    assert!((y.data()[2 * 5 + 2] - 2.5).abs() < 1e-12);
}

#[test]
fn conv_matches_sliding_window_oracle() {
    let mut r = rng(1);
    let x = random_array(&[2, 5, 5], &mut r);
    let k = random_array(&[3, 2, 3, 3], &mut r);
    let b = random_array(&[3], &mut r);
    let got = conv3x3_forward(&x, &k, &b).unwrap();
    assert!(got.max_abs_diff(&naive_conv(&x, &k, &b)) < 1e-6);
}

#[test]
fn conv_rejects_channel_mismatch() {
    let x = NdArray::<f32>::zeros(&[2, 4, 4]);
    let k = NdArray::zeros(&[1, 3, 3, 3]);
    let err = conv3x3_forward(&x, &k, &NdArray::zeros(&[1])).unwrap_err();
    assert!(err.to_string().contains("3"), "{err}");
}

#[test]
fn max_pool_examples() {
    let x = NdArray::new(vec![1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(max_pool2_forward(&x).unwrap().0.data(), &[4.0]);
    let c = NdArray::full(&[2, 4, 6], 7.0f64);
    assert_eq!(max_pool2_forward(&c).unwrap().0, NdArray::full(&[2, 2, 3], 7.0));
    assert!(max_pool2_forward(&NdArray::<f64>::zeros(&[1, 3, 4])).is_err());
    assert!(max_pool2_forward(&NdArray::<f64>::zeros(&[1, 4, 5])).is_err());
}

#[test]
fn max_pool_matches_window_scan() {
    let mut r = rng(2);
    for _ in 0..20 {
        let x = random_array(&[1, 4, 4], &mut r);
        let (y, _) = max_pool2_forward(&x).unwrap();
        for oy in 0..2 {
            for ox in 0..2 {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(x.data()[(2 * oy + dy) * 4 + 2 * ox + dx]);
                    }
                }
                assert_eq!(y.data()[oy * 2 + ox], m);
            }
        }
    }
}

#[test]
fn max_pool_tie_routes_to_first_position() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(NdArray::full(&[1, 2, 2], 1.0));
    let p = tape.max_pool2(x).unwrap();
    let s = tape.sum(p);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn upsample_examples() {
    let x = NdArray::new(vec![1, 1, 1], vec![5.0f64]).unwrap();
    assert_eq!(upsample2_forward(&x).unwrap().data(), &[5.0; 4]);
    let cb = NdArray::new(vec![1, 2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
    let up = upsample2_forward(&cb).unwrap();
    #[rustfmt::skip]
    let want = [1.0, 1.0, 0.0, 0.0,
                1.0, 1.0, 0.0, 0.0,
                0.0, 0.0, 1.0, 1.0,
                0.0, 0.0, 1.0, 1.0];
    assert_eq!(up.data(), &want);
}

#[test]
fn upsample_then_average_pool_is_identity() {
    let mut r = rng(3);
    let x = random_array(&[2, 3, 5], &mut r);
    let up = upsample2_forward(&x).unwrap();
    for c in 0..2 {
        for y in 0..3 {
            for xx in 0..5 {
                let at = |dy: usize, dx: usize| up.data()[c * 60 + (2 * y + dy) * 10 + 2 * xx + dx];
                let avg = (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0;
                assert_eq!(avg, x.data()[c * 15 + y * 5 + xx]);
            }
        }
    }
}

#[test]
fn concat_and_split() {
    let mut r = rng(4);
    let a = random_array(&[1, 3, 3], &mut r);
    let b = random_array(&[2, 3, 3], &mut r);
    let cat = NdArray::concat_channels(&[&a, &b]).unwrap();
    assert_eq!(cat.shape(), &[3, 3, 3]);
    assert_eq!(cat.channels(0, 1).unwrap(), a);
    assert_eq!(cat.channels(1, 2).unwrap(), b);
    let empty = NdArray::<f64>::zeros(&[0, 3, 3]);
    assert_eq!(NdArray::concat_channels(&[&a, &empty]).unwrap(), a);
    assert!(NdArray::concat_channels(&[&a, &NdArray::zeros(&[1, 3, 4])]).is_err());
}

#[test]
fn sigmoid_values_and_gradient() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(NdArray::new(vec![3], vec![0.0, -100.0, 100.0]).unwrap());
    let s = tape.sigmoid(x);
    let v = tape.value(s).data().to_vec();
    assert_eq!(v[0], 0.5);
    assert!(v[1] > 0.0 && v[2] < 1.0);
    let w = tape.dot(s, NdArray::new(vec![3], vec![1.0, 0.0, 0.0]).unwrap()).unwrap();
    tape.backward(w).unwrap();
    assert_eq!(tape.grad(x).unwrap().data()[0], 0.25);

    let mut t32 = Tape::<f32>::new();
    let x = t32.constant(NdArray::new(vec![2], vec![-100.0f32, 100.0]).unwrap());
    let s = t32.sigmoid(x);
    assert!(t32.value(s).data()[0] > 0.0);
    assert!(t32.value(s).data()[1] < 1.0);
}

#[test]
fn bce_closed_forms() {
    let bce = |p: Vec<f64>, t: Vec<f64>| {
        let n = p.len();
        let mut tape = Tape::new();
        let pv = tape.constant(NdArray::new(vec![n], p).unwrap());
        let l = tape.bce(pv, &NdArray::new(vec![n], t).unwrap(), None).unwrap();
        tape.value(l).item().unwrap()
    };
    assert!(bce(vec![1.0, 1.0], vec![1.0, 1.0]) < 1e-6);
    assert!((bce(vec![0.5; 3], vec![1.0, 0.0, 0.3]) - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((bce(vec![0.9, 0.1], vec![1.0, 0.0]) - (-(0.9f64).ln())).abs() < 1e-12);
    for p in [1e-12, 1.0 - 1e-12] {
        for t in [0.0, 1.0] {
            assert!(bce(vec![p], vec![t]).is_finite());
        }
    }
    let mut tape = Tape::<f64>::new();
    let pv = tape.constant(NdArray::zeros(&[2]));
    assert!(tape.bce(pv, &NdArray::zeros(&[3]), None).is_err());
}

#[test]
fn bce_gradient_stays_finite_at_the_clamp() {
    for p in [1e-12f64, 1.0 - 1e-12] {
        let mut tape = Tape::new();
        let pv = tape.param(NdArray::full(&[2], p));
        let l = tape.bce(pv, &NdArray::new(vec![2], vec![0.0, 1.0]).unwrap(), None).unwrap();
        tape.backward(l).unwrap();
        assert!(tape.grad(pv).unwrap().all_finite());
    }
}

#[test]
fn backward_simple_laws() {
    let mut r = rng(5);
    let xv = random_array(&[2, 3, 4], &mut r);
    let mut tape = Tape::new();
    let x = tape.param(xv.clone());
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &NdArray::full(&[2, 3, 4], 1.0));

    let mut tape = Tape::new();
    let x = tape.param(xv.clone());
    let sq = tape.square(x);
    let s = tape.sum(sq);
    let half = tape.scale(s, 0.5);
    tape.backward(half).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &xv);

    // accumulation without reset
    tape.backward(half).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &xv.map(|v| 2.0 * v));
    tape.zero_grad();
    assert!(tape.grad(x).is_none());

    assert!(tape.backward(x).is_err());
}

#[test]
fn op_gradients_match_finite_differences() {
    for (op, worst) in op_gradient_errors(6) {
        assert!(worst < 1e-4, "{op} {worst}");
    }
}

proptest! {
    #[test]
    fn shape_algebra(c1 in 1usize..4, c2 in 0usize..3, co in 1usize..4, hh in 1usize..6, ww in 1usize..6) {
        let (h, w) = (2 * hh, 2 * ww);
        let x = NdArray::<f32>::zeros(&[c1, h, w]);
        let y = conv3x3_forward(&x, &NdArray::zeros(&[co, c1, 3, 3]), &NdArray::zeros(&[co])).unwrap();
        prop_assert_eq!(y.shape(), &[co, h, w]);
        let pooled = max_pool2_forward(&x).unwrap().0;
        prop_assert_eq!(pooled.shape(), &[c1, hh, ww]);
        let up = upsample2_forward(&x).unwrap();
        prop_assert_eq!(up.shape(), &[c1, 2 * h, 2 * w]);
        let b = NdArray::<f32>::zeros(&[c2, h, w]);
        let cat = NdArray::concat_channels(&[&x, &b]).unwrap();
        prop_assert_eq!(cat.shape(), &[c1 + c2, h, w]);
    }

    #[test]
    fn sigmoid_never_leaves_open_interval(v in -1e6f64..1e6) {
        let s = rrwnet::autodiff::kernels::sigmoid(v);
        prop_assert!(s > 0.0 && s < 1.0 && s.is_finite());
        let s32 = rrwnet::autodiff::kernels::sigmoid(v as f32);
        prop_assert!(s32 > 0.0 && s32 < 1.0);
    }
}

fn scalar_params(w: f64) -> Params<f64> {
    let mut p = Params::new();
    p.insert("w", NdArray::new(vec![1], vec![w]).unwrap()).unwrap();
    p
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let mut p = scalar_params(0.3);
    let mut st = AdamState::new(&p, AdamConfig::default()).unwrap();
    st.step(&mut p, &[Some(NdArray::zeros(&[1]))]).unwrap();
    assert_eq!(p.values()[0].data()[0], 0.3);
    assert_eq!(st.step_count, 1);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut p = scalar_params(0.0);
    let mut st = AdamState::new(&p, AdamConfig::default()).unwrap();
    st.step(&mut p, &[Some(NdArray::full(&[1], 1.0))]).unwrap();
    assert!((p.values()[0].data()[0] + 1e-4).abs() < 1e-10);
}

#[test]
fn adam_rejects_missing_gradients() {
    let mut p = scalar_params(0.0);
    let mut st = AdamState::new(&p, AdamConfig::default()).unwrap();
    assert!(st.step(&mut p, &[None]).is_err());
    assert_eq!(st.step_count, 0);
}

#[test]
fn adam_trace_on_quadratic() {
    // Reference trace for f(w) = w^2 from w = 1, written out independently.
    let (lr, b1, b2, eps) = (1e-4f64, 0.9f64, 0.999f64, 1e-8f64);
    let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    let mut trace = Vec::new();
    for t in 1..=10 {
        let g = 2.0 * w;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        w -= lr * mh / (vh.sqrt() + eps);
        trace.push(w);
    }

    let mut p = scalar_params(1.0);
    let mut st = AdamState::new(&p, AdamConfig::default()).unwrap();
    for want in trace {
        let g = 2.0 * p.values()[0].data()[0];
        st.step(&mut p, &[Some(NdArray::full(&[1], g))]).unwrap();
        assert!((p.values()[0].data()[0] - want).abs() < 1e-10);
    }
    assert_eq!(st.step_count, 10);
}
