//! Planar geometry for the navigation map: boxes, discs and a grid distance field.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

/// Closed axis-aligned box `[min_x, max_x] x [min_y, max_y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: [min_x, min_y],
            max: [max_x, max_y],
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn is_valid(&self) -> bool {
        self.min[0] <= self.max[0] && self.min[1] <= self.max[1]
    }

    /// Euclidean distance from the box to the point; 0 inside.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.min[0] - x).max(0.0).max(x - self.max[0]);
        let dy = (self.min[1] - y).max(0.0).max(y - self.max[1]);
        dx.hypot(dy)
    }

    /// Smallest `t` in `[0, 1]` at which `p + t (q - p)` lies in the box.
    pub fn segment_entry(&self, p: [f64; 2], q: [f64; 2]) -> Option<f64> {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for k in 0..2 {
            let d = q[k] - p[k];
            if d == 0.0 {
                if p[k] < self.min[k] || p[k] > self.max[k] {
                    return None;
                }
            } else {
                let (a, b) = ((self.min[k] - p[k]) / d, (self.max[k] - p[k]) / d);
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
        }
        (lo <= hi).then_some(lo)
    }

    /// Smallest `t` in `[0, 1]` at which `p + t (q - p)` leaves the box;
    /// `p` is assumed inside.
    pub fn segment_exit(&self, p: [f64; 2], q: [f64; 2]) -> Option<f64> {
        if self.contains(q[0], q[1]) {
            return None;
        }
        let mut t = 1.0f64;
        for k in 0..2 {
            let d = q[k] - p[k];
            if d > 0.0 && q[k] > self.max[k] {
                t = t.min((self.max[k] - p[k]) / d);
            } else if d < 0.0 && q[k] < self.min[k] {
                t = t.min((self.min[k] - p[k]) / d);
            }
        }
        Some(t.max(0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).hypot(y - self.center[1]) <= self.radius
    }

    /// Distance to the disc boundary from outside; 0 inside.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        ((x - self.center[0]).hypot(y - self.center[1]) - self.radius).max(0.0)
    }

    /// Smallest `t` in `[0, 1]` at which `p + t (q - p)` lies in the disc.
    pub fn segment_entry(&self, p: [f64; 2], q: [f64; 2]) -> Option<f64> {
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let (fx, fy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let c = fx * fx + fy * fy - self.radius * self.radius;
        if c <= 0.0 {
            return Some(0.0);
        }
        let a = dx * dx + dy * dy;
        let b = fx * dx + fy * dy;
        let disc = b * b - a * c;
        if a == 0.0 || disc < 0.0 {
            return None;
        }
        let t = (-b - disc.sqrt()) / a;
        (0.0..=1.0).contains(&t).then_some(t)
    }

    pub fn intersects(&self, b: &Aabb) -> bool {
        b.distance(self.center[0], self.center[1]) <= self.radius
    }
}

/// Shortest-path distance to a goal disc over an 8-connected lattice that
/// avoids obstacles, bilinearly interpolated between lattice nodes.
#[derive(Clone, Debug)]
pub struct DistanceField {
    origin: [f64; 2],
    step: f64,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl DistanceField {
    /// Nodes inside an obstacle receive a distance from their free
    /// neighbours but never relay one, so paths cannot cross walls.
    pub fn build(arena: &Aabb, obstacles: &[Aabb], goal: &Disc, step: f64) -> Self {
        let nx = ((arena.max[0] - arena.min[0]) / step).round() as usize + 1;
        let ny = ((arena.max[1] - arena.min[1]) / step).round() as usize + 1;
        let pos = |i: usize| {
            (
                arena.min[0] + (i % nx) as f64 * step,
                arena.min[1] + (i / nx) as f64 * step,
            )
        };
        let blocked: Vec<bool> = (0..nx * ny)
            .map(|i| {
                let (x, y) = pos(i);
                obstacles.iter().any(|b| b.contains(x, y))
            })
            .collect();
        let mut values = vec![f64::INFINITY; nx * ny];
        let mut heap = BinaryHeap::new();
        for i in 0..nx * ny {
            let (x, y) = pos(i);
            if !blocked[i] && goal.contains(x, y) {
                values[i] = goal.distance(x, y);
                heap.push(Entry(values[i], i));
            }
        }
        while let Some(Entry(d, i)) = heap.pop() {
            if d > values[i] || blocked[i] {
                continue;
            }
            let (cx, cy) = ((i % nx) as isize, (i / nx) as isize);
            for (dx, dy) in [
                (-1, 0),
                (1, 0),
                (0, -1),
                (0, 1),
                (-1, -1),
                (-1, 1),
                (1, -1),
                (1, 1),
            ] {
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x >= nx as isize || y >= ny as isize {
                    continue;
                }
                let j = y as usize * nx + x as usize;
                let nd = d + step * ((dx * dx + dy * dy) as f64).sqrt();
                if nd < values[j] {
                    values[j] = nd;
                    heap.push(Entry(nd, j));
                }
            }
        }
        // Outside-goal nodes measure to the disc boundary, not to a lattice node in it.
        for (i, v) in values.iter_mut().enumerate() {
            let (x, y) = pos(i);
            if goal.contains(x, y) {
                *v = 0.0;
            }
        }
        Self {
            origin: arena.min,
            step,
            nx,
            ny,
            values,
        }
    }

    pub fn node(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    /// Interpolated distance; points outside the lattice are clamped onto it.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin[0]) / self.step).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((y - self.origin[1]) / self.step).clamp(0.0, (self.ny - 1) as f64);
        let ix = (fx.floor() as usize).min(self.nx - 2);
        let iy = (fy.floor() as usize).min(self.ny - 2);
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let v00 = self.node(ix, iy);
        let v10 = self.node(ix + 1, iy);
        let v01 = self.node(ix, iy + 1);
        let v11 = self.node(ix + 1, iy + 1);
        let corners = [v00, v10, v01, v11];
        if corners.iter().any(|v| !v.is_finite()) {
            return corners
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .fold(f64::INFINITY, f64::min);
        }
        (v00 * (1.0 - tx) + v10 * tx) * (1.0 - ty) + (v01 * (1.0 - tx) + v11 * tx) * ty
    }
}
