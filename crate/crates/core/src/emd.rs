//! Earth Mover's Distance between density maps.
//!
//! The transport problem between the non-empty cells of two grids is solved
//! exactly with a primal network simplex on the complete bipartite graph.
//! Ground distance is the Euclidean distance between cell centers.

use crate::error::{Error, Result};
use crate::types::DensityMap;

/// Cells lighter than this are dropped before solving.
pub const PRUNE_MASS: f64 = 1e-12;

/// Tolerance on supply/demand balance and on the feasibility of the result.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn distance(self, other: Cell) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        dr.hypot(dc)
    }
}

/// Balanced transportation problem between weighted grid cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransportProblem {
    pub supplies: Vec<(Cell, f64)>,
    pub demands: Vec<(Cell, f64)>,
}

impl TransportProblem {
    pub fn cost(&self, from: Cell, to: Cell) -> f64 {
        from.distance(to)
    }

    pub fn total_supply(&self) -> f64 {
        self.supplies.iter().map(|s| s.1).sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.demands.iter().map(|d| d.1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub from: Cell,
    pub to: Cell,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub cost: f64,
    pub flows: Vec<Flow>,
}

const NONE: usize = usize::MAX;

/// Primal network simplex over `m` sources, `n` sinks and an artificial root.
///
/// Real arcs `i -> j` have id `i * n + j`; node `k` is attached to the root by
/// artificial arc `m * n + k`. Arcs are uncapacitated. The leaving-arc rule
/// keeps the spanning tree strongly feasible, which rules out cycling.
struct NetworkSimplex {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    art_cost: f64,
    flow: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    // pred arc points from the node towards its parent
    up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    children: Vec<Vec<usize>>,
    eps: f64,
    block: usize,
    cursor: usize,
}

impl NetworkSimplex {
    fn new(supply: &[f64], demand: &[f64], cost: Vec<f64>) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let nodes = m + n + 1;
        let root = m + n;
        let max_cost = cost.iter().cloned().fold(0.0, f64::max);
        // any root-routed unit costs 2 * art_cost > max_cost, so optimal
        // solutions carry no artificial flow
        let art_cost = max_cost + 1.0;
        let mut flow = vec![0.0; m * n + m + n];
        let mut parent = vec![root; nodes];
        let mut pred = vec![NONE; nodes];
        let mut up = vec![false; nodes];
        let mut depth = vec![1; nodes];
        let mut pi = vec![0.0; nodes];
        let mut children = vec![Vec::new(); nodes];
        for k in 0..m + n {
            let art = m * n + k;
            pred[k] = art;
            if k < m {
                up[k] = true;
                flow[art] = supply[k];
                pi[k] = -art_cost;
            } else {
                flow[art] = demand[k - m];
                pi[k] = art_cost;
            }
            children[root].push(k);
        }
        parent[root] = NONE;
        depth[root] = 0;
        let arcs = m * n;
        Self {
            m,
            n,
            cost,
            art_cost,
            flow,
            parent,
            pred,
            up,
            depth,
            pi,
            children,
            eps: 1e-12 * max_cost.max(1.0),
            block: ((arcs as f64).sqrt() as usize).max(16).min(arcs.max(1)),
            cursor: 0,
        }
    }

    fn endpoints(&self, arc: usize) -> (usize, usize) {
        let root = self.m + self.n;
        if arc < self.m * self.n {
            (arc / self.n, self.m + arc % self.n)
        } else {
            let k = arc - self.m * self.n;
            if k < self.m {
                (k, root)
            } else {
                (root, k)
            }
        }
    }

    fn arc_cost(&self, arc: usize) -> f64 {
        if arc < self.m * self.n {
            self.cost[arc]
        } else {
            self.art_cost
        }
    }

    #[inline]
    fn reduced_cost(&self, arc: usize) -> f64 {
        let i = arc / self.n;
        let j = self.m + arc % self.n;
        self.cost[arc] + self.pi[i] - self.pi[j]
    }

    /// Block search over real arcs for the most negative reduced cost.
    fn find_entering(&mut self) -> Option<usize> {
        let arcs = self.m * self.n;
        if arcs == 0 {
            return None;
        }
        let mut best = NONE;
        let mut best_rc = -self.eps;
        let mut scanned = 0;
        let mut in_block = 0;
        while scanned < arcs {
            let a = self.cursor;
            self.cursor += 1;
            if self.cursor == arcs {
                self.cursor = 0;
            }
            let rc = self.reduced_cost(a);
            if rc < best_rc {
                best_rc = rc;
                best = a;
            }
            scanned += 1;
            in_block += 1;
            if in_block == self.block {
                if best != NONE {
                    return Some(best);
                }
                in_block = 0;
            }
        }
        (best != NONE).then_some(best)
    }

    /// Recomputes potentials and depths from the tree, top-down.
    fn refresh_potentials(&mut self) {
        let root = self.m + self.n;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for idx in 0..self.children[v].len() {
                let c = self.children[v][idx];
                let arc = self.pred[c];
                let cost = self.arc_cost(arc);
                // reduced cost of a tree arc is zero: cost + pi[src] - pi[tgt] = 0
                self.pi[c] = if self.up[c] {
                    self.pi[v] - cost
                } else {
                    self.pi[v] + cost
                };
                self.depth[c] = self.depth[v] + 1;
                stack.push(c);
            }
        }
    }

    fn remove_child(&mut self, parent: usize, child: usize) {
        let list = &mut self.children[parent];
        let pos = list
            .iter()
            .position(|&c| c == child)
            .expect("tree child list out of sync");
        list.swap_remove(pos);
    }

    fn pivot(&mut self, entering: usize) -> Result<()> {
        let (source, target) = self.endpoints(entering);
        let mut a = source;
        let mut b = target;
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;

        let mut delta = f64::INFINITY;
        let mut out = NONE;
        let mut on_first = true;
        let mut w = source;
        while w != join {
            if self.up[w] {
                let f = self.flow[self.pred[w]];
                if f < delta {
                    delta = f;
                    out = w;
                }
            }
            w = self.parent[w];
        }
        let mut w = target;
        while w != join {
            if !self.up[w] {
                let f = self.flow[self.pred[w]];
                if f <= delta {
                    delta = f;
                    out = w;
                    on_first = false;
                }
            }
            w = self.parent[w];
        }
        if out == NONE {
            return Err(Error::NumericalFailure("unbounded pivot cycle".into()));
        }

        if delta > 0.0 {
            self.flow[entering] += delta;
            let mut w = source;
            while w != join {
                let arc = self.pred[w];
                if self.up[w] {
                    self.flow[arc] -= delta;
                } else {
                    self.flow[arc] += delta;
                }
                w = self.parent[w];
            }
            let mut w = target;
            while w != join {
                let arc = self.pred[w];
                if self.up[w] {
                    self.flow[arc] += delta;
                } else {
                    self.flow[arc] -= delta;
                }
                w = self.parent[w];
            }
        }
        let leaving = self.pred[out];
        self.flow[leaving] = 0.0;

        // re-hang the subtree cut off below `out` from the entering arc
        let (u_in, v_in) = if on_first {
            (source, target)
        } else {
            (target, source)
        };
        let rc = self.reduced_cost(entering);
        let shift = if u_in == source { -rc } else { rc };

        let old_parent_of_out = self.parent[out];
        self.remove_child(old_parent_of_out, out);
        let mut node = u_in;
        let mut new_parent = v_in;
        let mut new_pred = entering;
        let mut new_up = u_in == source;
        loop {
            let next = self.parent[node];
            let old_pred = self.pred[node];
            let old_up = self.up[node];
            let is_last = node == out;
            if !is_last {
                self.remove_child(next, node);
            }
            self.parent[node] = new_parent;
            self.pred[node] = new_pred;
            self.up[node] = new_up;
            self.children[new_parent].push(node);
            if is_last {
                break;
            }
            new_parent = node;
            new_pred = old_pred;
            new_up = !old_up;
            node = next;
        }

        let mut stack = vec![u_in];
        while let Some(v) = stack.pop() {
            self.pi[v] += shift;
            self.depth[v] = self.depth[self.parent[v]] + 1;
            stack.extend_from_slice(&self.children[v]);
        }
        Ok(())
    }

    fn run(&mut self) -> Result<()> {
        let limit = 50 * (self.m * self.n + self.m + self.n) + 1000;
        let mut pivots = 0usize;
        loop {
            let entering = match self.find_entering() {
                Some(a) => a,
                None => {
                    // confirm optimality against drift-free potentials
                    self.refresh_potentials();
                    match self.find_entering() {
                        Some(a) => a,
                        None => return Ok(()),
                    }
                }
            };
            self.pivot(entering)?;
            pivots += 1;
            if pivots % 4096 == 0 {
                self.refresh_potentials();
            }
            if pivots > limit {
                return Err(Error::NumericalFailure(format!(
                    "no convergence after {pivots} pivots"
                )));
            }
        }
    }
}

/// Solves the problem to optimality.
///
/// Zero-mass entries are ignored. Demands are rescaled by the tiny balance
/// residual so that the network is exactly balanced.
pub fn solve_transport(problem: &TransportProblem) -> Result<TransportSolution> {
    for &(_, mass) in problem.supplies.iter().chain(&problem.demands) {
        if !mass.is_finite() || mass < 0.0 {
            return Err(Error::NumericalFailure(format!("invalid mass {mass}")));
        }
    }
    let supply_total = problem.total_supply();
    let demand_total = problem.total_demand();
    if (supply_total - demand_total).abs() > BALANCE_TOLERANCE {
        return Err(Error::UnbalancedProblem {
            supply: supply_total,
            demand: demand_total,
        });
    }
    let sources: Vec<(Cell, f64)> = problem
        .supplies
        .iter()
        .copied()
        .filter(|s| s.1 > 0.0)
        .collect();
    let sinks: Vec<(Cell, f64)> = problem
        .demands
        .iter()
        .copied()
        .filter(|d| d.1 > 0.0)
        .collect();
    if sources.is_empty() || sinks.is_empty() {
        return Ok(TransportSolution {
            cost: 0.0,
            flows: Vec::new(),
        });
    }
    let scale = supply_total / demand_total;
    let supply: Vec<f64> = sources.iter().map(|s| s.1).collect();
    let demand: Vec<f64> = sinks.iter().map(|d| d.1 * scale).collect();
    let (m, n) = (sources.len(), sinks.len());
    let mut cost = Vec::with_capacity(m * n);
    for s in &sources {
        for d in &sinks {
            cost.push(problem.cost(s.0, d.0));
        }
    }

    let mut simplex = NetworkSimplex::new(&supply, &demand, cost);
    simplex.run()?;

    let mut flows = Vec::new();
    let mut total = 0.0;
    let mut shipped = vec![0.0; m];
    let mut received = vec![0.0; n];
    for i in 0..m {
        for j in 0..n {
            let f = simplex.flow[i * n + j];
            if f > 0.0 {
                total += f * simplex.cost[i * n + j];
                shipped[i] += f;
                received[j] += f;
                flows.push(Flow {
                    from: sources[i].0,
                    to: sinks[j].0,
                    mass: f,
                });
            }
        }
    }
    let worst = shipped
        .iter()
        .zip(&supply)
        .chain(received.iter().zip(&demand))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if worst > BALANCE_TOLERANCE {
        return Err(Error::NumericalFailure(format!(
            "solution violates conservation by {worst:e}"
        )));
    }
    Ok(TransportSolution { cost: total, flows })
}

/// Grid size limit for the EMD solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmdConfig {
    pub max_side: usize,
    pub downsample: bool,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            max_side: 32,
            downsample: true,
        }
    }
}

impl EmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_side < 2 {
            return Err(Error::InvalidEmdConfig(format!(
                "max_side must be at least 2, got {}",
                self.max_side
            )));
        }
        Ok(())
    }

    /// Integer block size applied to a `width x height` map.
    pub fn factor_for(&self, width: usize, height: usize) -> usize {
        let side = width.max(height);
        if self.downsample && side > self.max_side {
            side.div_ceil(self.max_side)
        } else {
            1
        }
    }
}

/// EMD value in units of downsampled pixels, with the factor that was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmdOutcome {
    pub value: f64,
    pub factor: usize,
}

/// Sums `factor x factor` blocks; edge blocks may be partial.
pub fn block_sum(map: &DensityMap, factor: usize) -> Result<DensityMap> {
    if factor <= 1 {
        return Ok(map.clone());
    }
    let (w, h) = (map.width(), map.height());
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut out = vec![0.0; ow * oh];
    for y in 0..h {
        for x in 0..w {
            out[(y / factor) * ow + x / factor] += map.get(x, y);
        }
    }
    DensityMap::new(ow, oh, out)
}

fn cells_of(map: &DensityMap) -> Vec<(Cell, f64)> {
    let w = map.width();
    map.values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= PRUNE_MASS)
        .map(|(i, &v)| (Cell::new(i / w, i % w), v))
        .collect()
}

/// Builds the transport problem that [`emd_metric`] solves, after
/// normalization, downsampling and pruning.
pub fn emd_problem(sal: &DensityMap, gt: &DensityMap, cfg: &EmdConfig) -> Result<(TransportProblem, usize)> {
    cfg.validate()?;
    sal.check_same_shape(gt)?;
    let factor = cfg.factor_for(sal.width(), sal.height());
    let s = block_sum(&sal.normalize_to_distribution()?, factor)?;
    let g = block_sum(&gt.normalize_to_distribution()?, factor)?;
    let mut supplies = cells_of(&s);
    let mut demands = cells_of(&g);
    for side in [&mut supplies, &mut demands] {
        let total: f64 = side.iter().map(|c| c.1).sum();
        side.iter_mut().for_each(|c| c.1 /= total);
    }
    Ok((TransportProblem { supplies, demands }, factor))
}

/// Earth Mover's Distance from `sal` to `gt`.
pub fn emd_metric(sal: &DensityMap, gt: &DensityMap, cfg: &EmdConfig) -> Result<EmdOutcome> {
    let (problem, factor) = emd_problem(sal, gt, cfg)?;
    let solution = solve_transport(&problem)?;
    Ok(EmdOutcome {
        value: solution.cost,
        factor,
    })
}
