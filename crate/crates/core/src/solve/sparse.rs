//! Direct factorizations of block-sparse systems: envelope (skyline)
//! Cholesky for SPD matrices and banded LU with partial pivoting for
//! indefinite ones. Both work on a cell ordering chosen to keep the profile
//! or bandwidth small, and on the symmetrically diagonal-scaled matrix.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::assembly::BlockSystem;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingKind {
    Natural,
    Rcm,
}

/// Cell adjacency of the block pattern, without self loops.
pub fn cell_graph(sys: &BlockSystem) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); sys.num_cells];
    for &(r, c) in sys.blocks.keys() {
        if r != c {
            adj[r].push(c);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// Reverse Cuthill–McKee; returns `order[position] = cell`.
pub fn rcm_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // (last node reached, eccentricity)
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::from([start]);
        dist[start] = 0;
        let mut last = start;
        while let Some(v) = q.pop_front() {
            last = v;
            for &w in &adj[v] {
                if !visited[w] && dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
            }
        }
        (last, dist[last])
    };
    while order.len() < n {
        let seed = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (adj[v].len(), v))
            .unwrap();
        // Pseudo-peripheral start node.
        let mut start = seed;
        let (mut far, mut ecc) = bfs_levels(start, &visited);
        for _ in 0..4 {
            let (f2, e2) = bfs_levels(far, &visited);
            if e2 <= ecc {
                break;
            }
            start = far;
            far = f2;
            ecc = e2;
        }
        let begin = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                visited[w] = true;
                order.push(w);
            }
        }
    }
    order.reverse();
    order
}

fn positions(order: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; order.len()];
    for (p, &c) in order.iter().enumerate() {
        pos[c] = p;
    }
    pos
}

/// Cell-level envelope size `Σ (p − first(p))` for the ordering.
fn cell_profile(adj: &[Vec<usize>], order: &[usize]) -> usize {
    let pos = positions(order);
    (0..adj.len())
        .map(|c| {
            let first = adj[c].iter().map(|&m| pos[m]).min().unwrap_or(pos[c]).min(pos[c]);
            pos[c] - first
        })
        .sum()
}

fn cell_bandwidth(adj: &[Vec<usize>], order: &[usize]) -> usize {
    let pos = positions(order);
    (0..adj.len())
        .flat_map(|c| adj[c].iter().map(move |&m| (c, m)))
        .map(|(c, m)| pos[c].abs_diff(pos[m]))
        .max()
        .unwrap_or(0)
}

/// Natural or RCM ordering, whichever minimizes `cost`.
fn choose_order(sys: &BlockSystem, cost: fn(&[Vec<usize>], &[usize]) -> usize) -> (OrderingKind, Vec<usize>) {
    let adj = cell_graph(sys);
    let natural: Vec<usize> = (0..sys.num_cells).collect();
    let rcm = rcm_order(&adj);
    if cost(&adj, &rcm) < cost(&adj, &natural) {
        (OrderingKind::Rcm, rcm)
    } else {
        (OrderingKind::Natural, natural)
    }
}

/// Diagonal scaling `d_i = |a_ii|^{-1/2}` (1 for zero diagonals).
fn diagonal_scaling(sys: &BlockSystem) -> Vec<f64> {
    let b = sys.block_dim;
    let mut d = vec![1.0; sys.unknowns()];
    for c in 0..sys.num_cells {
        if let Some(blk) = sys.blocks.get(&(c, c)) {
            for i in 0..b {
                let a = blk[(i, i)].abs();
                if a > 0.0 && a.is_finite() {
                    d[c * b + i] = 1.0 / a.sqrt();
                }
            }
        }
    }
    d
}

/// Maps between cell-major unknowns and the permuted numbering.
#[derive(Clone, Debug)]
struct Layout {
    block: usize,
    order: Vec<usize>,
    pos: Vec<usize>,
}

impl Layout {
    fn new(block: usize, order: Vec<usize>) -> Self {
        let pos = positions(&order);
        Self { block, order, pos }
    }

    fn permute(&self, x: &[f64], scale: &[f64]) -> Vec<f64> {
        let b = self.block;
        let mut y = vec![0.0; x.len()];
        for (p, &c) in self.order.iter().enumerate() {
            for i in 0..b {
                y[p * b + i] = x[c * b + i] * scale[c * b + i];
            }
        }
        y
    }

    fn unpermute(&self, y: &[f64], scale: &[f64]) -> Vec<f64> {
        let b = self.block;
        let mut x = vec![0.0; y.len()];
        for (p, &c) in self.order.iter().enumerate() {
            for i in 0..b {
                x[c * b + i] = y[p * b + i] * scale[c * b + i];
            }
        }
        x
    }

    fn original_index(&self, row: usize) -> usize {
        self.order[row / self.block] * self.block + row % self.block
    }
}

/// `L Lᵀ` factor of `D P A Pᵀ D` stored row-wise over the envelope.
#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    layout: Layout,
    scale: Vec<f64>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
    pub ordering: OrderingKind,
}

impl SkylineCholesky {
    pub fn factor(sys: &BlockSystem) -> Result<Self> {
        let (ordering, order) = choose_order(sys, cell_profile);
        Self::factor_with(sys, ordering, order)
    }

    pub fn factor_with_ordering(sys: &BlockSystem, kind: OrderingKind) -> Result<Self> {
        let order = match kind {
            OrderingKind::Natural => (0..sys.num_cells).collect(),
            OrderingKind::Rcm => rcm_order(&cell_graph(sys)),
        };
        Self::factor_with(sys, kind, order)
    }

    fn factor_with(sys: &BlockSystem, ordering: OrderingKind, order: Vec<usize>) -> Result<Self> {
        let b = sys.block_dim;
        let n = sys.unknowns();
        let layout = Layout::new(b, order);
        let scale = diagonal_scaling(sys);

        let mut first_cell: Vec<usize> = (0..sys.num_cells).collect();
        for &(r, c) in sys.blocks.keys() {
            let (pr, pc) = (layout.pos[r], layout.pos[c]);
            if pc < pr {
                first_cell[pr] = first_cell[pr].min(pc);
            }
        }
        let first: Vec<usize> = (0..n).map(|row| first_cell[row / b] * b).collect();
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for row in 0..n {
            offset.push(offset[row] + row - first[row] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for (&(r, c), blk) in &sys.blocks {
            let (pr, pc) = (layout.pos[r], layout.pos[c]);
            if pc > pr {
                continue;
            }
            for i in 0..b {
                let row = pr * b + i;
                for j in 0..b {
                    let col = pc * b + j;
                    if col <= row {
                        data[offset[row] + col - first[row]] +=
                            blk[(i, j)] * scale[r * b + i] * scale[c * b + j];
                    }
                }
            }
        }

        for row in 0..n {
            let fr = first[row];
            let (head, tail) = data.split_at_mut(offset[row]);
            let lrow = &mut tail[..row - fr + 1];
            for col in fr..row {
                let fc = first[col];
                let start = fr.max(fc);
                let lcol = &head[offset[col]..offset[col + 1]];
                let s: f64 = lrow[start - fr..col - fr]
                    .iter()
                    .zip(&lcol[start - fc..col - fc])
                    .map(|(a, b)| a * b)
                    .sum();
                lrow[col - fr] = (lrow[col - fr] - s) / lcol[col - fc];
            }
            let d = lrow[row - fr] - lrow[..row - fr].iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    index: layout.original_index(row),
                    pivot: d,
                });
            }
            lrow[row - fr] = d.sqrt();
        }
        Ok(Self {
            layout,
            scale,
            first,
            offset,
            data,
            ordering,
        })
    }

    /// Number of stored entries of `L`.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Smallest diagonal entry of `L` squared (a pivot of the scaled matrix).
    pub fn min_pivot(&self) -> f64 {
        (0..self.first.len())
            .map(|r| self.data[self.offset[r + 1] - 1].powi(2))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut y = self.layout.permute(rhs, &self.scale);
        let n = y.len();
        for row in 0..n {
            let fr = self.first[row];
            let lrow = &self.data[self.offset[row]..self.offset[row + 1]];
            let s: f64 = lrow[..row - fr].iter().zip(&y[fr..row]).map(|(a, b)| a * b).sum();
            y[row] = (y[row] - s) / lrow[row - fr];
        }
        for row in (0..n).rev() {
            let fr = self.first[row];
            let lrow = &self.data[self.offset[row]..self.offset[row + 1]];
            y[row] /= lrow[row - fr];
            let xr = y[row];
            for (yc, l) in y[fr..row].iter_mut().zip(&lrow[..row - fr]) {
                *yc -= l * xr;
            }
        }
        self.layout.unpermute(&y, &self.scale)
    }
}

/// LU factor with partial pivoting of `D P A Pᵀ D`, stored in LAPACK band
/// layout (column-major, `2·kl + ku + 1` rows per column).
#[derive(Clone, Debug)]
pub struct BandLu {
    layout: Layout,
    scale: Vec<f64>,
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
    pub ordering: OrderingKind,
}

impl BandLu {
    pub fn factor(sys: &BlockSystem) -> Result<Self> {
        let (ordering, order) = choose_order(sys, cell_bandwidth);
        let b = sys.block_dim;
        let n = sys.unknowns();
        let layout = Layout::new(b, order);
        let scale = diagonal_scaling(sys);

        let mut bw = 0;
        for (&(r, c), blk) in &sys.blocks {
            let (pr, pc) = (layout.pos[r], layout.pos[c]);
            for i in 0..b {
                for j in 0..b {
                    if blk[(i, j)] != 0.0 {
                        bw = bw.max((pr * b + i).abs_diff(pc * b + j));
                    }
                }
            }
        }
        let (kl, ku) = (bw, bw);
        let ld = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut ab = vec![0.0; ld * n];
        for (&(r, c), blk) in &sys.blocks {
            let (pr, pc) = (layout.pos[r], layout.pos[c]);
            for i in 0..b {
                for j in 0..b {
                    let v = blk[(i, j)];
                    if v != 0.0 {
                        let (row, col) = (pr * b + i, pc * b + j);
                        ab[col * ld + kv + row - col] += v * scale[r * b + i] * scale[c * b + j];
                    }
                }
            }
        }

        let idx = |row: usize, col: usize| col * ld + kv + row - col;
        let mut piv = vec![0; n];
        let mut ju = 0;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = ab[idx(j, j)].abs();
            for i in 1..=km {
                let v = ab[idx(j + i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[j] = j + p;
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::Singular {
                    column: layout.original_index(j),
                });
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    ab.swap(idx(j, c), idx(j + p, c));
                }
            }
            let inv = 1.0 / ab[idx(j, j)];
            for i in 1..=km {
                ab[idx(j + i, j)] *= inv;
            }
            if km > 0 {
                let lcol: Vec<f64> = (1..=km).map(|i| ab[idx(j + i, j)]).collect();
                for c in j + 1..=ju {
                    let t = ab[idx(j, c)];
                    if t != 0.0 {
                        let base = idx(j + 1, c);
                        for (a, l) in ab[base..base + km].iter_mut().zip(&lcol) {
                            *a -= l * t;
                        }
                    }
                }
            }
        }
        Ok(Self {
            layout,
            scale,
            n,
            kl,
            ku,
            ld,
            ab,
            piv,
            ordering,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.kl
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.layout.permute(rhs, &self.scale);
        let (n, kl, kv, ld) = (self.n, self.kl, self.kl + self.ku, self.ld);
        let idx = |row: usize, col: usize| col * ld + kv + row - col;
        for j in 0..n {
            x.swap(j, self.piv[j]);
            let km = kl.min(n - 1 - j);
            let xj = x[j];
            for i in 1..=km {
                x[j + i] -= self.ab[idx(j + i, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            x[j] /= self.ab[idx(j, j)];
            let xj = x[j];
            for i in j.saturating_sub(kv)..j {
                x[i] -= self.ab[idx(i, j)] * xj;
            }
        }
        self.layout.unpermute(&x, &self.scale)
    }
}
