use std::collections::VecDeque;

use image::RgbImage;

use super::mask::Mask;

/// Intensity (0-255, max over channels) above which a pixel counts as fundus.
pub const ROI_INTENSITY_THRESHOLD: u8 = 15;

/// Field-of-view mask from a fundus photograph: bright pixels, largest
/// 4-connected component, holes filled.
pub fn synthesize_roi(img: &RgbImage) -> Mask {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let bright = Mask::new(
        h,
        w,
        img.pixels().map(|p| p.0.iter().copied().max().unwrap_or(0) > ROI_INTENSITY_THRESHOLD).collect(),
    )
    .expect("pixel count");
    fill_holes(&largest_component(&bright))
}

const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn neighbours(y: usize, x: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    N4.iter().filter_map(move |&(dy, dx)| {
        let ny = y as isize + dy;
        let nx = x as isize + dx;
        (ny >= 0 && nx >= 0 && ny < h as isize && nx < w as isize).then_some((ny as usize, nx as usize))
    })
}

/// Keeps the largest 4-connected component (first in scan order on ties).
pub fn largest_component(m: &Mask) -> Mask {
    let (h, w) = m.dims();
    let mut label = vec![0u32; h * w];
    let mut best = (0usize, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !m.data()[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for (ny, nx) in neighbours(i / w, i % w, h, w) {
                let j = ny * w + nx;
                if m.data()[j] && label[j] == 0 {
                    label[j] = next;
                    queue.push_back(j);
                }
            }
        }
        if size > best.0 {
            best = (size, next);
        }
    }
    Mask::new(h, w, label.iter().map(|&l| l != 0 && l == best.1).collect()).expect("dims")
}

/// Sets every background pixel not 4-connected to the border.
pub fn fill_holes(m: &Mask) -> Mask {
    let (h, w) = m.dims();
    let mut outside = vec![false; h * w];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if (y == 0 || x == 0 || y == h - 1 || x == w - 1) && !m.get(y, x) && !outside[y * w + x] {
                outside[y * w + x] = true;
                queue.push_back(y * w + x);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        for (ny, nx) in neighbours(i / w, i % w, h, w) {
            let j = ny * w + nx;
            if !m.data()[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    Mask::new(h, w, outside.iter().map(|&o| !o).collect()).expect("dims")
}
