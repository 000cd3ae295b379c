#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrwnet::autodiff::{NdArray, Tape, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_array(shape: &[usize], rng: &mut impl Rng) -> NdArray<f64> {
    NdArray::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Relative error with the denominator floored at 1e-4, above the
/// round-off level of a central difference with step 1e-6.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Compares tape gradients of a scalar function of several inputs against
/// central finite differences with step `eps`. `build` receives the tape and
/// one tracked leaf per input and returns the scalar output node. Returns
/// the worst relative error seen.
pub fn check_gradients<F>(inputs: &[NdArray<f64>], eps: f64, build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[NdArray<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.constant(v.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.param(v.clone())).collect();
    let out = build(&mut tape, &vars);
    tape.backward(out).unwrap();

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let grad = tape.grad(vars[i]).cloned().unwrap_or_else(|| NdArray::zeros(input.shape()));
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += eps;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= eps;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            worst = worst.max(rel_err(grad.data()[j], numeric));
        }
    }
    worst
}

/// Worst finite-difference error of every differentiable tape op, each
/// checked through a small scalar graph.
pub fn op_gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let eps = 1e-6;
    let w_conv = random_array(&[3, 4, 4], &mut r);
    let worst = check_gradients(
        &[random_array(&[2, 4, 4], &mut r), random_array(&[3, 2, 3, 3], &mut r), random_array(&[3], &mut r)],
        eps,
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2]).unwrap();
            t.dot(y, w_conv.clone()).unwrap()
        },
    );
    out.push(("conv2d", worst));

    let w_1x1 = random_array(&[2, 3, 2], &mut r);
    let worst = check_gradients(
        &[random_array(&[3, 3, 2], &mut r), random_array(&[2, 3], &mut r), random_array(&[2], &mut r)],
        eps,
        |t, v| {
            let y = t.conv1x1(v[0], v[1], v[2]).unwrap();
            t.dot(y, w_1x1.clone()).unwrap()
        },
    );
    out.push(("conv1x1", worst));

    let w_pool = random_array(&[2, 2, 3], &mut r);
    let worst = check_gradients(&[random_array(&[2, 4, 6], &mut r)], eps, |t, v| {
        let y = t.max_pool2(v[0]).unwrap();
        t.dot(y, w_pool.clone()).unwrap()
    });
    out.push(("max_pool2", worst));

    let w_up = random_array(&[2, 4, 6], &mut r);
    let worst = check_gradients(&[random_array(&[2, 2, 3], &mut r)], eps, |t, v| {
        let y = t.upsample2(v[0]).unwrap();
        t.dot(y, w_up.clone()).unwrap()
    });
    out.push(("upsample2", worst));

    let w_cat = random_array(&[3, 2, 2], &mut r);
    let worst = check_gradients(&[random_array(&[1, 2, 2], &mut r), random_array(&[2, 2, 2], &mut r)], eps, |t, v| {
        let y = t.concat_channels(v[0], v[1]).unwrap();
        let s = t.slice_channels(y, 0, 3).unwrap();
        t.dot(s, w_cat.clone()).unwrap()
    });
    out.push(("concat/slice", worst));

    let w_act = random_array(&[2, 3, 3], &mut r);
    // keep relu inputs away from the kink
    let relu_in = random_array(&[2, 3, 3], &mut r).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let worst = check_gradients(&[relu_in], eps, |t, v| {
        let y = t.relu(v[0]);
        t.dot(y, w_act.clone()).unwrap()
    });
    out.push(("relu", worst));

    let worst = check_gradients(&[random_array(&[2, 3, 3], &mut r).map(|v| 4.0 * v)], eps, |t, v| {
        let y = t.sigmoid(v[0]);
        t.dot(y, w_act.clone()).unwrap()
    });
    out.push(("sigmoid", worst));

    let target = NdArray::from_fn(&[2, 3, 3], |i| (i % 3 == 0) as u8 as f64);
    let mask: Vec<bool> = (0..18).map(|i| i % 5 != 0).collect();
    let probs = NdArray::from_fn(&[2, 3, 3], |_| r.random_range(0.05..0.95));
    let worst = check_gradients(&[probs], eps, |t, v| t.bce(v[0], &target, Some(&mask)).unwrap());
    out.push(("bce", worst));

    let worst = check_gradients(&[random_array(&[4], &mut r), random_array(&[4], &mut r)], eps, |t, v| {
        let sq = t.square(v[0]);
        let ws = t.weighted_sum(&[(sq, 0.7), (v[1], -1.3)]).unwrap();
        let sc = t.scale(ws, 2.0);
        t.sum(sc)
    });
    out.push(("square/weighted_sum/scale/sum", worst));
    out
}

/// AUROC as the fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
pub fn auroc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Step-wise AUPR by recounting the confusion matrix at every distinct
/// score used as a `>=` threshold, highest first.
pub fn aupr_sweep(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = labels.iter().filter(|&&l| l).count();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count();
        let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && !**l).count();
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / pos as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

/// One-tailed Wilcoxon p-value by enumerating all 2^n sign assignments of
/// the non-zero differences, with average ranks for ties.
pub fn wilcoxon_enumerated(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    let ranks: Vec<f64> = d
        .iter()
        .map(|v| {
            let below = d.iter().filter(|u| u.abs() < v.abs()).count() as f64;
            let equal = d.iter().filter(|u| u.abs() == v.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let mut at_least = 0u64;
    for signs in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| signs >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w >= observed - 1e-9 {
            at_least += 1;
        }
    }
    at_least as f64 / (1u64 << n) as f64
}

/// Shortest 8-connected path lengths from `src` inside `mask`, as a map from
/// pixel index to distance (`None` when unreachable).
pub fn bfs_oracle(mask: &[bool], h: usize, w: usize, src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; h * w];
    if !mask[src] {
        return dist;
    }
    dist[src] = Some(0);
    let mut frontier = vec![src];
    let mut d = 0;
    while !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for &p in &frontier {
            let (y, x) = ((p / w) as i64, (p % w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask[q] && dist[q].is_none() {
                        dist[q] = Some(d);
                        next.push(q);
                    }
                }
            }
        }
        frontier = next;
    }
    dist
}

/// Nearest foreground pixel within Euclidean `radius`, first in scan order on ties.
pub fn snap_oracle(mask: &[bool], h: usize, w: usize, p: usize, radius: usize) -> Option<usize> {
    let (py, px) = ((p / w) as i64, (p % w) as i64);
    let r2 = (radius * radius) as i64;
    (0..h * w)
        .filter(|&q| mask[q])
        .map(|q| {
            let (qy, qx) = ((q / w) as i64, (q % w) as i64);
            ((qy - py).pow(2) + (qx - px).pow(2), q)
        })
        .filter(|(d2, _)| *d2 <= r2)
        .min()
        .map(|(_, q)| q)
}

/// Exact COR/INF percentages over every pair of skeleton pixels that are
/// connected in the skeleton.
pub fn cor_inf_exhaustive(
    gt: &[bool],
    pred: &[bool],
    skeleton: &[bool],
    h: usize,
    w: usize,
    radius: usize,
    tolerance: f64,
) -> (f64, f64) {
    let nodes: Vec<usize> = (0..h * w).filter(|&i| skeleton[i]).collect();
    let (mut total, mut cor, mut inf) = (0u64, 0u64, 0u64);
    for (ai, &a) in nodes.iter().enumerate() {
        let in_skeleton = bfs_oracle(skeleton, h, w, a);
        let gt_dist = bfs_oracle(gt, h, w, a);
        let pred_dist = snap_oracle(pred, h, w, a, radius).map(|s| bfs_oracle(pred, h, w, s));
        for &b in &nodes[ai + 1..] {
            if in_skeleton[b].is_none() {
                continue;
            }
            total += 1;
            let gt_len = gt_dist[b].expect("skeleton lies inside the ground truth") as f64;
            let pred_len = match (&pred_dist, snap_oracle(pred, h, w, b, radius)) {
                (Some(d), Some(t)) => d[t],
                _ => None,
            };
            match pred_len {
                None => inf += 1,
                Some(l) if (l as f64 - gt_len).abs() / gt_len < tolerance => cor += 1,
                Some(_) => {}
            }
        }
    }
    (100.0 * cor as f64 / total as f64, 100.0 * inf as f64 / total as f64)
}

/// A seeded 32x32-style vessel grid: horizontal and vertical lines of random
/// width on a lattice, with random gaps.
pub fn vessel_grid(h: usize, w: usize, rng: &mut impl Rng) -> Vec<bool> {
    let mut m = vec![false; h * w];
    let rows: Vec<usize> = (0..rng.random_range(2..4)).map(|_| rng.random_range(2..h - 3)).collect();
    let cols: Vec<usize> = (0..rng.random_range(2..4)).map(|_| rng.random_range(2..w - 3)).collect();
    for &r in &rows {
        let width = rng.random_range(1..3);
        for y in r..(r + width).min(h) {
            for x in 1..w - 1 {
                m[y * w + x] = true;
            }
        }
    }
    for &c in &cols {
        let width = rng.random_range(1..3);
        for x in c..(c + width).min(w) {
            for y in 1..h - 1 {
                m[y * w + x] = true;
            }
        }
    }
    m
}

/// A degraded copy of `gt`: a few square holes and a few spurious blobs.
pub fn degrade(gt: &[bool], h: usize, w: usize, rng: &mut impl Rng) -> Vec<bool> {
    let mut m = gt.to_vec();
    for _ in 0..rng.random_range(1..4) {
        let (cy, cx) = (rng.random_range(0..h), rng.random_range(0..w));
        let s = rng.random_range(1..4);
        for y in cy.saturating_sub(s)..(cy + s).min(h) {
            for x in cx.saturating_sub(s)..(cx + s).min(w) {
                m[y * w + x] = false;
            }
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let (cy, cx) = (rng.random_range(1..h - 1), rng.random_range(1..w - 1));
        for y in cy - 1..=cy + 1 {
            for x in cx - 1..=cx + 1 {
                m[y * w + x] = true;
            }
        }
    }
    m
}
