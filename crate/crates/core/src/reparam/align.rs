//! Minimax monotone alignment on an `n_rows x n_cols` cost lattice.
//!
//! Rows index the pseudotrajectory samples, columns the candidate orbit samples. An
//! alignment matches every row `i` with one column `j_i`, starting at `j_0 = 0` with
//! `j_i` non-decreasing (the orbit may advance any number of columns between two rows,
//! or pause); it ends anywhere on the last row. Its cost is the largest matched cost.

/// Lazily evaluated lattice costs.
pub trait CostGrid {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn cost(&mut self, i: usize, j: usize) -> f64;

    /// Smallest column `j' > j` whose cost in row `i` might be at most `cost(i, j) - excess`.
    /// The default never skips.
    fn skip(&mut self, _i: usize, j: usize, _excess: f64) -> usize {
        j + 1
    }
}

/// A dense cost matrix, `costs[i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix(pub Vec<Vec<f64>>);

impl CostGrid for Matrix {
    fn n_rows(&self) -> usize {
        self.0.len()
    }
    fn n_cols(&self) -> usize {
        self.0.first().map_or(0, |r| r.len())
    }
    fn cost(&mut self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub value: f64,
    /// Column matched with the last row.
    pub end_col: usize,
    /// Lattice cells evaluated.
    pub cells: u64,
}

/// Columns `j >= from` of row `i` with cost at most `bound`, in increasing order.
fn admissible<G: CostGrid>(grid: &mut G, i: usize, from: usize, bound: f64, cells: &mut u64) -> Vec<(usize, f64)> {
    let m = grid.n_cols();
    let mut out = Vec::new();
    let mut j = from;
    while j < m {
        let c = grid.cost(i, j);
        *cells += 1;
        if c <= bound {
            out.push((j, c));
            j += 1;
        } else if bound.is_finite() {
            j = grid.skip(i, j, c - bound).max(j + 1);
        } else {
            j += 1;
        }
    }
    out
}

/// Optimal minimax value over monotone alignments. Cells costing more than `bound` are
/// blocked; returns `None` when no alignment stays within `bound`.
/// Ties on the end column go to the smallest column.
pub fn oriented_minimax<G: CostGrid>(grid: &mut G, bound: f64) -> Option<Alignment> {
    let (n, m) = (grid.n_rows(), grid.n_cols());
    if n == 0 || m == 0 {
        return None;
    }
    let mut cells = 1u64;
    let c0 = grid.cost(0, 0);
    if c0 > bound {
        return None;
    }
    // Sparse rows: admissible (column, value), increasing columns.
    let mut prev: Vec<(usize, f64)> = vec![(0, c0)];
    for i in 1..n {
        let row = admissible(grid, i, prev[0].0, bound, &mut cells);
        let mut cur = Vec::with_capacity(row.len());
        let mut p = 0;
        let mut prefix = f64::INFINITY;
        for (j, c) in row {
            while p < prev.len() && prev[p].0 <= j {
                prefix = prefix.min(prev[p].1);
                p += 1;
            }
            cur.push((j, c.max(prefix)));
        }
        if cur.is_empty() {
            return None;
        }
        prev = cur;
    }
    let mut best = (f64::INFINITY, 0);
    for &(j, v) in &prev {
        if v < best.0 {
            best = (v, j);
        }
    }
    Some(Alignment {
        value: best.0,
        end_col: best.1,
        cells,
    })
}

/// Matched columns `j_0 .. j_{n-1}` of an alignment achieving `value`: among alignments
/// whose cells all cost at most `value`, the one with the least total cost.
pub fn oriented_path<G: CostGrid>(grid: &mut G, value: f64) -> Vec<usize> {
    let n = grid.n_rows();
    if n == 0 || grid.n_cols() == 0 {
        return Vec::new();
    }
    let mut cells = 0;
    let c0 = grid.cost(0, 0);
    if c0 > value {
        return Vec::new();
    }
    // Per row: (column, total, index of predecessor in the previous row).
    let mut rows: Vec<Vec<(usize, f64, usize)>> = vec![vec![(0, c0, 0)]];
    for i in 1..n {
        let prev = &rows[i - 1];
        let row = admissible(grid, i, prev[0].0, value, &mut cells);
        let mut cur = Vec::with_capacity(row.len());
        let mut p = 0;
        let mut best = (f64::INFINITY, 0usize);
        for (j, c) in row {
            while p < prev.len() && prev[p].0 <= j {
                if prev[p].1 < best.0 {
                    best = (prev[p].1, p);
                }
                p += 1;
            }
            cur.push((j, c + best.0, best.1));
        }
        if cur.is_empty() {
            return Vec::new();
        }
        rows.push(cur);
    }
    let last = &rows[n - 1];
    let mut k = 0;
    for (idx, e) in last.iter().enumerate() {
        if e.1 < last[k].1 {
            k = idx;
        }
    }
    let mut cols = vec![0; n];
    for i in (0..n).rev() {
        let e = rows[i][k];
        cols[i] = e.0;
        k = e.2;
    }
    cols
}

/// Exhaustive minimax over all monotone alignments (for small lattices).
pub fn brute_force_oriented<G: CostGrid>(grid: &mut G) -> Option<(f64, usize)> {
    let (n, m) = (grid.n_rows(), grid.n_cols());
    if n == 0 || m == 0 {
        return None;
    }
    let costs: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| grid.cost(i, j)).collect()).collect();
    let mut best: Option<(f64, usize)> = None;
    fn go(costs: &[Vec<f64>], i: usize, j: usize, acc: f64, best: &mut Option<(f64, usize)>) {
        let acc = acc.max(costs[i][j]);
        if i + 1 == costs.len() {
            if best.is_none_or(|(v, c)| acc < v || (acc == v && j < c)) {
                *best = Some((acc, j));
            }
            return;
        }
        for next in j..costs[0].len() {
            go(costs, i + 1, next, acc, best);
        }
    }
    go(&costs, 0, 0, f64::NEG_INFINITY, &mut best);
    best
}

/// Chord-constrained alignment parameters: knots every `window` rows, `q` columns per row
/// at unit slope, block slopes `k / (w * q)` strictly inside `(1 - eps, 1 + eps)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub window: usize,
    pub q: usize,
    pub eps: f64,
}

impl Band {
    /// Knot rows: `0, window, 2 window, ...` and the last row.
    pub fn knot_rows(&self, n_rows: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = (0..n_rows).step_by(self.window.max(1)).collect();
        if *rows.last().unwrap() != n_rows - 1 {
            rows.push(n_rows - 1);
        }
        rows
    }

    /// Admissible column increments over a block of `w` rows.
    pub fn increments(&self, w: usize) -> Vec<usize> {
        let unit = (w * self.q) as f64;
        let lo = (unit * (1.0 - self.eps)).floor().max(0.0) as usize;
        let hi = (unit * (1.0 + self.eps)).ceil() as usize;
        (lo.max(1)..=hi)
            .filter(|&k| (k as f64 - unit).abs() < self.eps * unit)
            .collect()
    }
}

/// Cells matched inside a block from `(i0, j0)` to `(i0 + w, j0 + k)`: row `i0 + r` takes the
/// column nearest to the linear warp, `j0 + r k / w`.
pub fn block_cells(i0: usize, j0: usize, w: usize, k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=w).map(move |r| (i0 + r, j0 + (2 * r * k + w) / (2 * w)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandedAlignment {
    pub value: f64,
    /// `(row, col)` at every knot row.
    pub knots: Vec<(usize, usize)>,
    pub cells: u64,
}

/// Minimax over chord-constrained alignments: between knot rows the matched columns follow
/// [`block_cells`] for one of [`Band::increments`]. `pins[b]`, when set, restricts the column
/// at knot `b` to an inclusive range. Costs above `bound` block a cell. On failure returns
/// the first knot index that no admissible alignment reaches.
pub fn banded_minimax<G: CostGrid>(
    grid: &mut G,
    band: Band,
    bound: f64,
    pins: &[Option<(usize, usize)>],
) -> Result<BandedAlignment, usize> {
    let (n, m) = (grid.n_rows(), grid.n_cols());
    if n == 0 || m == 0 {
        return Err(0);
    }
    let rows = band.knot_rows(n);
    let pinned = |b: usize, j: usize| match pins.get(b).copied().flatten() {
        Some((a, z)) => j >= a && j <= z,
        None => true,
    };
    let mut cells = 1u64;
    let c0 = grid.cost(0, 0);
    if c0 > bound || !pinned(0, 0) {
        return Err(0);
    }
    if n == 1 {
        return Ok(BandedAlignment {
            value: c0,
            knots: vec![(0, 0)],
            cells,
        });
    }
    // Per knot: first column and (value, increment) per column; INF marks unreachable.
    let mut layers: Vec<(usize, Vec<(f64, usize)>)> = vec![(0, vec![(c0, 0)])];
    for b in 1..rows.len() {
        let (i0, i1) = (rows[b - 1], rows[b]);
        let w = i1 - i0;
        let incs = band.increments(w);
        let (plo, prev) = &layers[b - 1];
        let plo = *plo;
        let lo = plo + incs[0];
        if lo >= m {
            return Err(b);
        }
        let hi = (plo + prev.len() - 1 + incs[incs.len() - 1]).min(m - 1);
        let mut next: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); hi - lo + 1];
        for (off, &(v, _)) in prev.iter().enumerate() {
            if v == f64::INFINITY {
                continue;
            }
            let j0 = plo + off;
            for &k in &incs {
                let j1 = j0 + k;
                if j1 >= m {
                    break;
                }
                if !pinned(b, j1) {
                    continue;
                }
                let slot = &mut next[j1 - lo];
                let mut worst = v;
                let mut blocked = false;
                for (i, j) in block_cells(i0, j0, w, k).skip(1) {
                    let c = grid.cost(i, j);
                    cells += 1;
                    worst = worst.max(c);
                    if c > bound || worst >= slot.0 {
                        blocked = true;
                        break;
                    }
                }
                if !blocked {
                    *slot = (worst, k);
                }
            }
        }
        let first = next.iter().position(|s| s.0 < f64::INFINITY).ok_or(b)?;
        let last = next.iter().rposition(|s| s.0 < f64::INFINITY).unwrap();
        layers.push((lo + first, next[first..=last].to_vec()));
    }
    let (lo, last) = layers.last().unwrap();
    let mut best = (f64::INFINITY, 0usize);
    for (off, s) in last.iter().enumerate() {
        if s.0 < best.0 {
            best = (s.0, lo + off);
        }
    }
    let mut knots = vec![(rows[rows.len() - 1], best.1)];
    let mut j = best.1;
    for b in (1..rows.len()).rev() {
        let (lo, layer) = &layers[b];
        j -= layer[j - lo].1;
        knots.push((rows[b - 1], j));
    }
    knots.reverse();
    Ok(BandedAlignment {
        value: best.0,
        knots,
        cells,
    })
}

/// Exhaustive minimax over chord-constrained alignments (for small lattices).
pub fn brute_force_banded<G: CostGrid>(grid: &mut G, band: Band) -> Option<(f64, usize)> {
    let (n, m) = (grid.n_rows(), grid.n_cols());
    if n == 0 || m == 0 {
        return None;
    }
    let rows = band.knot_rows(n);
    let costs: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| grid.cost(i, j)).collect()).collect();
    let mut best: Option<(f64, usize)> = None;
    fn go(
        costs: &[Vec<f64>],
        rows: &[usize],
        band: &Band,
        b: usize,
        j: usize,
        acc: f64,
        best: &mut Option<(f64, usize)>,
    ) {
        if b + 1 == rows.len() {
            if best.is_none_or(|(v, c)| acc < v || (acc == v && j < c)) {
                *best = Some((acc, j));
            }
            return;
        }
        let w = rows[b + 1] - rows[b];
        for k in band.increments(w) {
            if j + k >= costs[0].len() {
                break;
            }
            let worst = block_cells(rows[b], j, w, k).fold(acc, |a, (i, jj)| a.max(costs[i][jj]));
            go(costs, rows, band, b + 1, j + k, worst, best);
        }
    }
    go(&costs, &rows, &band, 0, 0, costs[0][0], &mut best);
    best
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Matrix {
        // Coarse values produce plenty of ties.
        Matrix(
            (0..n)
                .map(|_| (0..m).map(|_| rng.gen_range(0..20) as f64 / 8.0).collect())
                .collect(),
        )
    }

    #[test]
    fn dp_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=7);
            let m = rng.gen_range(1..=7);
            let mut g = random_matrix(&mut rng, n, m);
            let dp = oriented_minimax(&mut g, f64::INFINITY).unwrap();
            let (v, c) = brute_force_oriented(&mut g).unwrap();
            assert_eq!(dp.value, v);
            assert_eq!(dp.end_col, c);
        }
    }

    #[test]
    fn bound_prunes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut g = random_matrix(&mut rng, 6, 8);
            let full = oriented_minimax(&mut g, f64::INFINITY).unwrap();
            let b = rng.gen_range(0..20) as f64 / 8.0;
            match oriented_minimax(&mut g, b) {
                Some(a) => assert_eq!((a.value, a.end_col), (full.value, full.end_col)),
                None => assert!(full.value > b),
            }
        }
    }

    #[test]
    fn path_achieves_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let mut g = random_matrix(&mut rng, 8, 10);
            let a = oriented_minimax(&mut g, f64::INFINITY).unwrap();
            let cols = oriented_path(&mut g, a.value);
            assert_eq!(cols.len(), 8);
            assert_eq!(cols[0], 0);
            assert!(cols.windows(2).all(|w| w[1] >= w[0]));
            let worst = cols.iter().enumerate().map(|(i, &j)| g.0[i][j]).fold(0.0, f64::max);
            assert_eq!(worst, a.value);
        }
    }

    #[test]
    fn block_cells_are_monotone() {
        for w in 1..8 {
            for k in 1..12 {
                let cells: Vec<_> = block_cells(3, 2, w, k).collect();
                assert_eq!(cells[0], (3, 2));
                assert_eq!(*cells.last().unwrap(), (3 + w, 2 + k));
                assert!(cells.windows(2).all(|p| p[1].0 == p[0].0 + 1 && p[1].1 >= p[0].1));
            }
        }
    }

    #[test]
    fn banded_matches_enumeration_and_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let band = Band {
            window: 2,
            q: 2,
            eps: 0.3,
        };
        for _ in 0..100 {
            let n = rng.gen_range(2..=7);
            let m = rng.gen_range(4..=16);
            let mut g = random_matrix(&mut rng, n, m);
            let dp = banded_minimax(&mut g, band, f64::INFINITY, &[]).ok();
            let bf = brute_force_banded(&mut g, band);
            assert_eq!(dp.as_ref().map(|a| (a.value, a.knots.last().unwrap().1)), bf);
            if let Some(a) = dp {
                let o = oriented_minimax(&mut g, f64::INFINITY).unwrap();
                assert!(a.value >= o.value);
            }
        }
    }

    #[test]
    fn increments_respect_slopes() {
        let band = Band {
            window: 5,
            q: 4,
            eps: 0.1,
        };
        assert_eq!(band.increments(5), vec![19, 20, 21]);
        assert_eq!(band.increments(1), vec![4]);
    }
}
