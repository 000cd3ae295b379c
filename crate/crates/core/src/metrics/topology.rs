//! Path-based connectivity metrics: the share of sampled vessel paths that
//! survive in a prediction (COR) or are broken by it (INF).

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Mask;
use crate::error::{shape_err, Error, Result};

const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopoConfig {
    pub n_paths: usize,
    /// Relative length difference below which a path counts as correct.
    pub tolerance: f64,
    /// Binarisation threshold applied to probability maps.
    pub threshold: f32,
    /// Largest distance an endpoint may move to reach a predicted pixel.
    pub snap_radius: usize,
    pub seed: u64,
}

impl Default for TopoConfig {
    fn default() -> Self {
        TopoConfig { n_paths: 1000, tolerance: 0.10, threshold: 0.5, snap_radius: 3, seed: 0 }
    }
}

impl TopoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("path tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Outcome of one path between two ground-truth pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathOutcome {
    Correct,
    /// Connected in the prediction, but with a length outside the tolerance.
    Incorrect,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopoScore {
    pub cor: f64,
    pub inf: f64,
}

/// Morphological thinning (Zhang-Suen) to an 8-connected, one-pixel-wide skeleton.
pub fn skeletonize(mask: &Mask) -> Mask {
    let (h, w) = mask.dims();
    let mut img = mask.clone();
    let at = |m: &Mask, y: isize, x: isize| -> bool {
        y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && m.get(y as usize, x as usize)
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if !img.get(y, x) {
                        continue;
                    }
                    let (yi, xi) = (y as isize, x as isize);
                    // P2..P9 clockwise from north
                    let p = [
                        at(&img, yi - 1, xi),
                        at(&img, yi - 1, xi + 1),
                        at(&img, yi, xi + 1),
                        at(&img, yi + 1, xi + 1),
                        at(&img, yi + 1, xi),
                        at(&img, yi + 1, xi - 1),
                        at(&img, yi, xi - 1),
                        at(&img, yi - 1, xi - 1),
                    ];
                    let b = p.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let ok = if pass == 0 {
                        !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6])
                    } else {
                        !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6])
                    };
                    if ok {
                        remove.push((y, x));
                    }
                }
            }
            changed |= !remove.is_empty();
            for (y, x) in remove {
                img.set(y, x, false);
            }
        }
        if !changed {
            return img;
        }
    }
}

/// 8-connected component labels (`usize::MAX` for background) and component sizes.
pub fn components(mask: &Mask) -> (Vec<usize>, Vec<usize>) {
    let (h, w) = mask.dims();
    let mut label = vec![usize::MAX; h * w];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.data()[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        label[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in neighbours(i, h, w) {
                if mask.data()[j] && label[j] == usize::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

fn neighbours(i: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = ((i / w) as isize, (i % w) as isize);
    NEIGHBOURS.iter().filter_map(move |&(dy, dx)| {
        let (ny, nx) = (y + dy, x + dx);
        (ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w).then(|| ny as usize * w + nx as usize)
    })
}

/// Unweighted 8-connected distances from `source` within `mask`.
pub fn bfs_distances(mask: &Mask, source: usize) -> Vec<u32> {
    let (h, w) = mask.dims();
    let mut dist = vec![u32::MAX; h * w];
    if !mask.data()[source] {
        return dist;
    }
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(i) = queue.pop_front() {
        for j in neighbours(i, h, w) {
            if mask.data()[j] && dist[j] == u32::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    dist
}

/// Nearest foreground pixel within `radius` (Euclidean), ties in scan order.
pub fn snap(mask: &Mask, pixel: usize, radius: usize) -> Option<usize> {
    let (h, w) = mask.dims();
    let (y, x) = (pixel / w, pixel % w);
    let mut best: Option<(usize, usize)> = None;
    for ny in y.saturating_sub(radius)..(y + radius + 1).min(h) {
        for nx in x.saturating_sub(radius)..(x + radius + 1).min(w) {
            let d2 = ny.abs_diff(y).pow(2) + nx.abs_diff(x).pow(2);
            if d2 <= radius * radius && mask.get(ny, nx) && best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, ny * w + nx));
            }
        }
    }
    best.map(|(_, i)| i)
}

/// Skeleton pixels of each 8-connected component in depth-first order,
/// starting from the first end point (or first pixel) in scan order.
pub fn traversal_order(skeleton: &Mask) -> Vec<Vec<usize>> {
    let (h, w) = skeleton.dims();
    let on = skeleton.data();
    let degree = |i: usize| neighbours(i, h, w).filter(|&j| on[j]).count();
    let (label, sizes) = components(skeleton);
    let mut start = vec![usize::MAX; sizes.len()];
    for (i, &l) in label.iter().enumerate() {
        if l != usize::MAX && (start[l] == usize::MAX || (degree(i) == 1 && degree(start[l]) != 1)) {
            start[l] = i;
        }
    }
    let mut seen = vec![false; h * w];
    start
        .iter()
        .zip(&sizes)
        .map(|(&s, &size)| {
            let mut order = Vec::with_capacity(size);
            let mut stack = vec![s];
            while let Some(i) = stack.pop() {
                if seen[i] {
                    continue;
                }
                seen[i] = true;
                order.push(i);
                stack.extend(neighbours(i, h, w).filter(|&j| on[j] && !seen[j]));
            }
            order
        })
        .collect()
}

/// All unordered pairs of distinct skeleton pixels that share a component,
/// enumerated component by component with pixels in traversal order, so
/// systematic samples spread evenly along every vessel.
pub struct PairPopulation {
    /// Skeleton pixels of each component, in traversal order.
    pub members: Vec<Vec<usize>>,
    /// Pair count before each component.
    offsets: Vec<u64>,
    pub total: u64,
}

impl PairPopulation {
    pub fn new(skeleton: &Mask) -> Self {
        let members = traversal_order(skeleton);
        let mut offsets = Vec::with_capacity(members.len());
        let mut total = 0u64;
        for m in &members {
            offsets.push(total);
            let c = m.len() as u64;
            total += c * c.saturating_sub(1) / 2;
        }
        PairPopulation { members, offsets, total }
    }

    /// The `index`-th pair.
    pub fn pair(&self, index: u64) -> (usize, usize) {
        assert!(index < self.total, "pair index out of range");
        let comp = self.offsets.partition_point(|&o| o <= index) - 1;
        let m = &self.members[comp];
        let mut r = index - self.offsets[comp];
        let c = m.len() as u64;
        // row a holds pairs (a, a+1..c)
        let mut a = 0u64;
        while r >= c - 1 - a {
            r -= c - 1 - a;
            a += 1;
        }
        (m[a as usize], m[(a + 1 + r) as usize])
    }

    /// `n` pair indices by systematic sampling with a random start.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<u64> {
        let step = self.total as f64 / n as f64;
        let start = rng.random::<f64>() * step;
        (0..n)
            .map(|i| ((start + i as f64 * step) as u64).min(self.total - 1))
            .collect()
    }
}

/// Evaluates one path between ground-truth pixels `a` and `b`.
pub fn path_outcome(gt: &Mask, pred: &Mask, a: usize, b: usize, cfg: &TopoConfig) -> PathOutcome {
    let gt_len = bfs_distances(gt, a)[b];
    let (Some(pa), Some(pb)) = (snap(pred, a, cfg.snap_radius), snap(pred, b, cfg.snap_radius)) else {
        return PathOutcome::Infeasible;
    };
    let pred_len = bfs_distances(pred, pa)[pb];
    classify(gt_len, pred_len, cfg.tolerance)
}

fn classify(gt_len: u32, pred_len: u32, tolerance: f64) -> PathOutcome {
    if pred_len == u32::MAX {
        return PathOutcome::Infeasible;
    }
    let rel = (pred_len as f64 - gt_len as f64).abs() / gt_len as f64;
    if rel < tolerance {
        PathOutcome::Correct
    } else {
        PathOutcome::Incorrect
    }
}

/// COR% and INF% of paths sampled between connected skeleton pixels of `gt`.
///
/// Ground-truth lengths are shortest paths inside the full ground-truth mask,
/// so an identical prediction scores exactly 100% correct.
pub fn topo_cor_inf(gt: &Mask, pred: &Mask, cfg: &TopoConfig) -> Result<TopoScore> {
    cfg.validate()?;
    if gt.dims() != pred.dims() {
        return Err(shape_err!("COR/INF: maps differ in size, {:?} vs {:?}", gt.dims(), pred.dims()));
    }
    let skeleton = skeletonize(gt);
    if !skeleton.any() {
        return Err(Error::InvalidArgument("COR/INF: ground-truth skeleton is empty".into()));
    }
    let pop = PairPopulation::new(&skeleton);
    if pop.total == 0 {
        return Err(Error::InvalidArgument("COR/INF: no connected skeleton pixel pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pairs: Vec<(usize, usize)> = pop.sample(cfg.n_paths, &mut rng).into_iter().map(|i| pop.pair(i)).collect();

    // Group by source so each BFS is shared by every pair starting there.
    let mut sources: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    sources.sort_unstable();
    sources.dedup();
    let outcomes: Vec<Vec<(usize, PathOutcome)>> = sources
        .par_iter()
        .map(|&src| {
            let gt_dist = bfs_distances(gt, src);
            let snapped = snap(pred, src, cfg.snap_radius);
            let pred_dist = snapped.map(|s| bfs_distances(pred, s));
            pairs
                .iter()
                .enumerate()
                .filter(|(_, p)| p.0 == src)
                .map(|(i, &(_, dst))| {
                    let outcome = match (&pred_dist, snap(pred, dst, cfg.snap_radius)) {
                        (Some(d), Some(t)) => classify(gt_dist[dst], d[t], cfg.tolerance),
                        _ => PathOutcome::Infeasible,
                    };
                    (i, outcome)
                })
                .collect()
        })
        .collect();
    let (mut cor, mut inf) = (0usize, 0usize);
    for (_, o) in outcomes.into_iter().flatten() {
        match o {
            PathOutcome::Correct => cor += 1,
            PathOutcome::Infeasible => inf += 1,
            PathOutcome::Incorrect => {}
        }
    }
    let n = pairs.len() as f64;
    Ok(TopoScore { cor: 100.0 * cor as f64 / n, inf: 100.0 * inf as f64 / n })
}
