//! Transportation simplex (network simplex on the complete bipartite graph).
//!
//! Starts from the north-west corner basis, keeps a spanning tree of
//! `m + n − 1` basic cells (degenerate zero-flow cells included), prices
//! with node potentials and pivots along the unique tree cycle.

use crate::error::{Error, Result};

pub struct Solution {
    /// `(row, col, mass)` for every cell carrying positive mass.
    pub cells: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

pub fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<Solution> {
    let m = supply.len();
    let n = demand.len();
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::Transport("empty problem or bad cost shape".into()));
    }
    let scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1.0);
    let tol = 1e-12 * scale;

    let mut flow = vec![0.0; m * n];
    let mut is_basic = vec![false; m * n];
    let mut basis: Vec<usize> = Vec::with_capacity(m + n - 1);

    {
        let mut ra = supply.to_vec();
        let mut rb = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let q = ra[i].min(rb[j]).max(0.0);
            let cell = i * n + j;
            flow[cell] = q;
            is_basic[cell] = true;
            basis.push(cell);
            ra[i] -= q;
            rb[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && ra[i] <= rb[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    debug_assert_eq!(basis.len(), m + n - 1);

    let nodes = m + n;
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
    let mut pot = vec![0.0; nodes];
    let mut parent = vec![usize::MAX; nodes];
    let mut parent_cell = vec![usize::MAX; nodes];
    let mut stack = Vec::with_capacity(nodes);
    let max_iters = 100 * (m + n) * (m + n).max(10);
    let mut degenerate_run = 0usize;

    for _ in 0..max_iters {
        for a in adj.iter_mut() {
            a.clear();
        }
        for &cell in &basis {
            let (i, j) = (cell / n, cell % n);
            adj[i].push((m + j, cell));
            adj[m + j].push((i, cell));
        }
        // Potentials: u_i + v_j = c_ij on the tree, rooted at row 0.
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        parent[0] = 0;
        pot[0] = 0.0;
        stack.clear();
        stack.push(0usize);
        let mut seen = 1;
        while let Some(node) = stack.pop() {
            for &(next, cell) in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    parent_cell[next] = cell;
                    pot[next] = cost[cell] - pot[node];
                    stack.push(next);
                    seen += 1;
                }
            }
        }
        if seen != nodes {
            return Err(Error::Transport("basis is not a spanning tree".into()));
        }

        let bland = degenerate_run > 2 * (m + n);
        let mut entering = usize::MAX;
        let mut best = -tol;
        'price: for i in 0..m {
            for j in 0..n {
                let cell = i * n + j;
                if is_basic[cell] {
                    continue;
                }
                let rc = cost[cell] - pot[i] - pot[m + j];
                if rc < best {
                    best = rc;
                    entering = cell;
                    if bland {
                        break 'price;
                    }
                }
            }
        }
        if entering == usize::MAX {
            let cells: Vec<(usize, usize, f64)> = basis
                .iter()
                .filter(|&&c| flow[c] > 0.0)
                .map(|&c| (c / n, c % n, flow[c]))
                .collect();
            let mut cells = cells;
            cells.sort_by_key(|&(i, j, _)| (i, j));
            let total = cells.iter().map(|&(i, j, q)| q * cost[i * n + j]).sum();
            return Ok(Solution { cells, cost: total });
        }

        // Cycle: entering (i, j), then the tree path from column j back to row i.
        let (ei, ej) = (entering / n, entering % n);
        let path = tree_path(m + ej, ei, &parent, &parent_cell);
        // Path cells alternate −, +, −, ... starting next to column j.
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 && (flow[cell] < theta || (flow[cell] == theta && cell < leaving)) {
                theta = flow[cell];
                leaving = cell;
            }
        }
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                flow[cell] -= theta;
            } else {
                flow[cell] += theta;
            }
        }
        flow[leaving] = 0.0;
        flow[entering] = theta;
        is_basic[leaving] = false;
        is_basic[entering] = true;
        let pos = basis
            .iter()
            .position(|&c| c == leaving)
            .expect("leaving cell is basic");
        basis[pos] = entering;
        if theta == 0.0 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
    }
    Err(Error::Transport(format!(
        "no convergence after {max_iters} pivots"
    )))
}

/// Cells on the tree path from node `from` to node `to`.
fn tree_path(from: usize, to: usize, parent: &[usize], parent_cell: &[usize]) -> Vec<usize> {
    let ancestors = |mut v: usize| {
        let mut chain = vec![v];
        while parent[v] != v {
            v = parent[v];
            chain.push(v);
        }
        chain
    };
    let up_from = ancestors(from);
    let up_to = ancestors(to);
    // Strip the shared suffix (the common ancestors).
    let (mut a, mut b) = (up_from.len(), up_to.len());
    while a > 0 && b > 0 && up_from[a - 1] == up_to[b - 1] {
        a -= 1;
        b -= 1;
    }
    let mut cells: Vec<usize> = up_from[..a].iter().map(|&v| parent_cell[v]).collect();
    cells.extend(up_to[..b].iter().rev().map(|&v| parent_cell[v]));
    cells
}
