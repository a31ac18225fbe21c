//! Uniform bucket grid over the unit torus for radius queries.

use crate::agents::Point;

#[derive(Debug, Clone, Default)]
pub struct Grid {
    n: usize,
    cells: Vec<Vec<(usize, Point)>>,
}

impl Grid {
    pub fn new(n: usize) -> Self {
        let n = n.max(1);
        Grid {
            n,
            cells: vec![Vec::new(); n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn cell_of(&self, p: &Point) -> usize {
        let cx = ((p.x * self.n as f64) as usize).min(self.n - 1);
        let cy = ((p.y * self.n as f64) as usize).min(self.n - 1);
        cy * self.n + cx
    }

    pub fn insert(&mut self, id: usize, p: &Point) {
        let c = self.cell_of(p);
        self.cells[c].push((id, *p));
    }

    pub fn clear(&mut self) {
        for c in &mut self.cells {
            c.clear();
        }
    }

    /// Cells within `ring` steps of `cell`, torus-wrapped, each once.
    pub fn neighborhood(&self, cell: usize, ring: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n as isize;
        let (cx, cy) = ((cell % self.n) as isize, (cell / self.n) as isize);
        let r = (ring as isize).min((n - 1) / 2 + 1);
        let span = (2 * r + 1).min(n);
        let start = if span == n { 0 } else { -r };
        (0..span).flat_map(move |dy| {
            (0..span).map(move |dx| {
                let x = (cx + start + dx).rem_euclid(n);
                let y = (cy + start + dy).rem_euclid(n);
                (y * n + x) as usize
            })
        })
    }

    /// Calls `visit` for every id stored in a cell that may lie within
    /// `radius` of `center`. Callers filter by exact distance.
    pub fn candidates(&self, center: &Point, radius: f64, mut visit: impl FnMut(usize)) {
        let ring = (radius * self.n as f64).ceil() as usize;
        for c in self.neighborhood(self.cell_of(center), ring) {
            for &(id, _) in &self.cells[c] {
                visit(id);
            }
        }
    }

    /// Replaces the contents of `out` with the ids within `radius` of
    /// `center`, in the same order as [`Grid::candidates`].
    pub fn within(&self, center: &Point, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let n = self.n;
        let ring = (radius * n as f64).ceil() as usize;
        let cell = self.cell_of(center);
        let (cx, cy) = (cell % n, cell / n);
        let r = ring.min((n - 1) / 2 + 1);
        let span = (2 * r + 1).min(n);
        let (x0, y0) = if span == n { (0, 0) } else { ((cx + n - r) % n, (cy + n - r) % n) };
        let mut len = 0;
        let mut y = y0;
        for _ in 0..span {
            let mut x = x0;
            for _ in 0..span {
                let cell = &self.cells[y * n + x];
                out.resize(len + cell.len(), 0);
                for (id, p) in cell {
                    out[len] = *id;
                    len += (p.distance(center) <= radius) as usize;
                }
                x += 1;
                if x == n {
                    x = 0;
                }
            }
            y += 1;
            if y == n {
                y = 0;
            }
        }
        out.truncate(len);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radius_query_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point> = (0..500).map(|_| Point::random(&mut rng)).collect();
        let mut g = Grid::new(10);
        for (i, p) in pts.iter().enumerate() {
            g.insert(i, p);
        }
        for r in [0.05, 0.1, 0.2, 0.4, 0.8] {
            for c in pts.iter().take(50) {
                let mut got = Vec::new();
                g.candidates(c, r, |i| {
                    if pts[i].distance(c) <= r {
                        got.push(i)
                    }
                });
                got.sort();
                let want: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].distance(c) <= r).collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn within_matches_filtered_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point> = (0..300).map(|_| Point::random(&mut rng)).collect();
        let mut g = Grid::new(10);
        for (i, p) in pts.iter().enumerate() {
            g.insert(i, p);
        }
        for r in [0.1, 0.2, 0.4] {
            for c in pts.iter().take(30) {
                let mut a = Vec::new();
                g.candidates(c, r, |i| {
                    if pts[i].distance(c) <= r {
                        a.push(i)
                    }
                });
                let mut b = vec![7];
                g.within(c, r, &mut b);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn neighborhood_wraps_and_is_unique() {
        let g = Grid::new(10);
        let cells: Vec<usize> = g.neighborhood(0, 1).collect();
        assert_eq!(cells.len(), 9);
        assert!(cells.contains(&99));
        let mut all: Vec<usize> = g.neighborhood(55, 7).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);
    }
}
