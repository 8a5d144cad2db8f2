use std::collections::VecDeque;

use crate::{Error, Mask, Result};

/// Which side of the comparison a contour came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ContourSource {
    Predicted,
    #[default]
    Reference,
}

/// Closed boundary polygon; the last point connects back to the first.
/// Points are `(x, y)` with `x` the column and `y` the row.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub points: Vec<(f64, f64)>,
    pub source: ContourSource,
}

impl Contour {
    /// Builds a contour from raw points, dropping consecutive repeats
    /// (including a trailing copy of the first point).
    pub fn new(points: Vec<(f64, f64)>, source: ContourSource) -> Result<Self> {
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for p in points {
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        while out.len() > 1 && out.last() == out.first() {
            out.pop();
        }
        if out.is_empty() {
            return Err(Error::DegenerateShape("contour has no points".into()));
        }
        Ok(Contour { points: out, source })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Shoelace area; positive for counter-clockwise order in `(x, y)`.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (x0, y0) = self.points[i];
                let (x1, y1) = self.points[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (x0, y0) = self.points[i];
                let (x1, y1) = self.points[(i + 1) % n];
                (x1 - x0).hypot(y1 - y0)
            })
            .sum()
    }

    /// Reverses traversal direction if needed so that the signed area is
    /// non-negative. The first point stays first.
    pub fn into_counter_clockwise(mut self) -> Self {
        if self.signed_area() < 0.0 {
            self.points[1..].reverse();
        }
        self
    }
}

/// 8-connected component labels (`0` = background, components numbered from
/// 1 in raster order of their first pixel) and the size of each component.
pub fn components(mask: &Mask) -> (Vec<u32>, Vec<usize>) {
    let (h, w) = mask.dims();
    let mut labels = vec![0u32; h * w];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if mask.data()[start] == 0 || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (y, x) = ((i / w) as isize, (i % w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.data()[j] != 0 && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Mask holding only the largest 8-connected component (earliest in raster
/// order on ties).
pub fn largest_component(mask: &Mask) -> Result<Mask> {
    let (labels, sizes) = components(mask);
    let best = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (i, &s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((i, s)),
        })
        .ok_or(Error::NoForeground)?;
    let label = best.0 as u32 + 1;
    let (h, w) = mask.dims();
    Mask::from_vec(h, w, labels.iter().map(|&l| u8::from(l == label)).collect())
}

// Clockwise on screen (rows grow downward), starting west.
const RING: [(isize, isize); 8] = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)];

fn ring_index(from: (isize, isize), to: (isize, isize)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    RING.iter().position(|&r| r == d).expect("backtrack is a neighbour")
}

/// Moore-neighbour trace of the largest 8-connected component, oriented
/// counter-clockwise and starting at its first pixel in raster order.
pub fn extract_contour(mask: &Mask) -> Result<Contour> {
    let comp = largest_component(mask)?;
    let (h, w) = comp.dims();
    let inside = |(y, x): (isize, isize)| y >= 0 && x >= 0 && y < h as isize && x < w as isize && comp.data()[y as usize * w + x as usize] != 0;
    let first = comp.data().iter().position(|&v| v != 0).ok_or(Error::NoForeground)?;
    let start = ((first / w) as isize, (first % w) as isize);

    // Find the successor of `p` scanning clockwise from its backtrack.
    let step = |p: (isize, isize), back: (isize, isize)| -> Option<((isize, isize), (isize, isize))> {
        let k0 = ring_index(p, back);
        let mut prev = back;
        for i in 1..=8 {
            let d = RING[(k0 + i) % 8];
            let c = (p.0 + d.0, p.1 + d.1);
            if inside(c) {
                return Some((c, prev));
            }
            prev = c;
        }
        None
    };

    // The raster-first pixel has background (or the border) to its west.
    let west = (start.0, start.1 - 1);
    let mut points = vec![start];
    let Some((second, mut back)) = step(start, west) else {
        return Contour::new(vec![(start.1 as f64, start.0 as f64)], ContourSource::Reference);
    };
    let mut cur = second;
    // Jacob's criterion: stop on re-entering the start pixel along the
    // first transition.
    let limit = 4 * h * w + 8;
    for _ in 0..limit {
        let (next, nb) = step(cur, back).expect("traced pixel has a neighbour");
        if cur == start && next == second {
            break;
        }
        points.push(cur);
        back = nb;
        cur = next;
    }
    let pts = points.into_iter().map(|(y, x)| (x as f64, y as f64)).collect();
    Ok(Contour::new(pts, ContourSource::Reference)?.into_counter_clockwise())
}

/// `n` points evenly spaced by arc length around the closed polygon,
/// starting at its first point. A zero-perimeter contour yields `n` copies of
/// its point.
pub fn resample_contour(contour: &Contour, n: usize) -> Result<Contour> {
    if n < 4 {
        return Err(Error::invalid("resample_contour", format!("need at least 4 points, got {n}")));
    }
    let pts = &contour.points;
    let m = pts.len();
    let perimeter = contour.perimeter();
    if perimeter <= 0.0 || m == 1 {
        return Ok(Contour {
            points: vec![pts[0]; n],
            source: contour.source,
        });
    }
    let mut out = Vec::with_capacity(n);
    let mut edge = 0;
    let mut edge_start = 0.0;
    let seg = |i: usize| {
        let (x0, y0) = pts[i % m];
        let (x1, y1) = pts[(i + 1) % m];
        ((x0, y0), (x1 - x0, y1 - y0), (x1 - x0).hypot(y1 - y0))
    };
    for k in 0..n {
        let target = perimeter * k as f64 / n as f64;
        while edge + 1 < m && edge_start + seg(edge).2 <= target {
            edge_start += seg(edge).2;
            edge += 1;
        }
        let ((x0, y0), (dx, dy), len) = seg(edge);
        let t = if len > 0.0 { ((target - edge_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push((x0 + t * dx, y0 + t * dy));
    }
    Ok(Contour {
        points: out,
        source: contour.source,
    })
}
