//! Cross-cell interference graph over copilot groups and greedy pilot
//! assignment by max-τ-cut partitioning.
//!
//! Edge weights quantify mutual interference: the signature overlap between
//! the groups' members at both base stations involved, scaled by the
//! interfering link's large-scale gain. Maximizing the cut forces heavily
//! interfering groups onto different pilots, leaving each pilot shared only
//! by groups that barely see each other.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grouping::CellGrouping;
use crate::math::beam_overlap;
use crate::signature::SignatureTable;
use crate::textio::fmt_f64;

/// One graph node: a copilot group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupNode {
    pub cell: usize,
    pub slot: usize,
    pub members: Vec<usize>,
}

/// Symmetric weighted graph over all copilot groups. Same-cell pairs carry
/// the sentinel weight; everything else is a finite overlap weight.
#[derive(Debug, Clone)]
pub struct InterferenceGraph {
    pub nodes: Vec<GroupNode>,
    weights: Vec<Vec<f64>>,
    /// Weight stored on every same-cell pair: 10⁶ × the largest finite
    /// weight (1.0 when the graph has no positive finite weight).
    pub sentinel: f64,
    /// Degenerate-construction notes (e.g. empty groups).
    pub warnings: Vec<String>,
}

impl InterferenceGraph {
    /// Assemble a graph directly from node cell labels and finite
    /// cross-cell weights (unlisted cross-cell pairs weigh 0). Slots number
    /// the nodes within each cell in listing order.
    pub fn from_weights(cells: &[usize], finite: &[(usize, usize, f64)]) -> Result<Self> {
        let n = cells.len();
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut slot_counter: HashMap<usize, usize> = HashMap::new();
        let nodes: Vec<GroupNode> = cells
            .iter()
            .map(|&cell| {
                let slot = slot_counter.entry(cell).or_insert(0);
                let node = GroupNode { cell, slot: *slot, members: Vec::new() };
                *slot += 1;
                node
            })
            .collect();
        let mut weights = vec![vec![0.0; n]; n];
        for &(u, v, w) in finite {
            if u >= n || v >= n || u == v {
                return Err(Error::InvalidParameter(format!("bad edge ({u}, {v})")));
            }
            if cells[u] == cells[v] {
                return Err(Error::InvalidParameter(format!(
                    "edge ({u}, {v}) joins two groups of cell {}; same-cell weights are implied",
                    cells[u]
                )));
            }
            if !(w >= 0.0) {
                return Err(Error::InvalidParameter(format!("edge ({u}, {v}) has negative weight {w}")));
            }
            weights[u][v] = w;
            weights[v][u] = w;
        }
        Ok(Self::seal(nodes, weights, Vec::new()))
    }

    /// Install the sentinel on same-cell pairs and freeze the graph.
    fn seal(nodes: Vec<GroupNode>, mut weights: Vec<Vec<f64>>, warnings: Vec<String>) -> Self {
        let mut max_finite = 0.0f64;
        for u in 0..nodes.len() {
            for v in u + 1..nodes.len() {
                if nodes[u].cell != nodes[v].cell {
                    max_finite = max_finite.max(weights[u][v]);
                }
            }
        }
        let sentinel = if max_finite > 0.0 { 1e6 * max_finite } else { 1.0 };
        for u in 0..nodes.len() {
            for v in 0..nodes.len() {
                if u != v && nodes[u].cell == nodes[v].cell {
                    weights[u][v] = sentinel;
                }
            }
        }
        Self { nodes, weights, sentinel, warnings }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.weights[u][v]
    }

    pub fn same_cell(&self, u: usize, v: usize) -> bool {
        self.nodes[u].cell == self.nodes[v].cell
    }

    pub fn node_index(&self, cell: usize, slot: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.cell == cell && n.slot == slot)
    }

    fn cells(&self) -> Vec<usize> {
        let mut cells: Vec<usize> = self.nodes.iter().map(|n| n.cell).collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

/// Weight between two groups: the strongest member-pair interference, where
/// a pair's interference averages, over the two base stations involved, the
/// signature overlap scaled by the intruding link's large-scale gain
/// (single linkage over pairs).
fn group_pair_weight(
    a: &GroupNode,
    b: &GroupNode,
    signatures: &SignatureTable,
    gain: &impl Fn(usize, usize, usize) -> f64,
) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for &y in &a.members {
        for &z in &b.members {
            let mut w = 0.0;
            for (&bs, intruder) in [a.cell, b.cell].iter().zip([(b.cell, z), (a.cell, y)]) {
                let sig_y = signatures.get(a.cell, y, bs).ok_or_else(|| {
                    Error::Invariant(format!("missing signature: cell {} user {y} toward bs {bs}", a.cell))
                })?;
                let sig_z = signatures.get(b.cell, z, bs).ok_or_else(|| {
                    Error::Invariant(format!("missing signature: cell {} user {z} toward bs {bs}", b.cell))
                })?;
                let (int_cell, int_user) = intruder;
                w += 0.5 * gain(int_cell, int_user, bs) * beam_overlap(&sig_y.beams, &sig_z.beams);
            }
            if best.map_or(true, |cur| w > cur) {
                best = Some(w);
            }
        }
    }
    Ok(best)
}

/// Build the interference graph over all produced groups. Requires a
/// signature for every group member toward its own and every other group's
/// base station; `gain(cell, user, bs)` supplies the large-scale gain of
/// that link (pass a constant 1 for purely spatial weights).
pub fn build_interference_graph(
    groupings: &[CellGrouping],
    signatures: &SignatureTable,
    gain: impl Fn(usize, usize, usize) -> f64,
) -> Result<InterferenceGraph> {
    let mut nodes = Vec::new();
    for grouping in groupings {
        for group in &grouping.groups {
            nodes.push(GroupNode {
                cell: group.cell,
                slot: group.slot,
                members: group.members.clone(),
            });
        }
    }
    if nodes.is_empty() {
        return Err(Error::InvalidParameter("no groups to build a graph from".into()));
    }
    let n = nodes.len();
    let mut warnings = Vec::new();
    for node in &nodes {
        if node.members.is_empty() {
            warnings.push(format!(
                "group cell {} slot {} is empty; its edges default to weight 0",
                node.cell, node.slot
            ));
        }
    }
    let mut weights = vec![vec![0.0; n]; n];
    for u in 0..n {
        for v in u + 1..n {
            if nodes[u].cell == nodes[v].cell {
                continue;
            }
            if let Some(w) = group_pair_weight(&nodes[u], &nodes[v], signatures, &gain)? {
                weights[u][v] = w;
                weights[v][u] = w;
            }
        }
    }
    Ok(InterferenceGraph::seal(nodes, weights, warnings))
}

/// Pilot indices per (cell, slot), with the achieved finite-weight cut when
/// the assignment came from the graph solver.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotAssignment {
    pub tau: usize,
    /// `pilots[cell][slot]` → pilot index in `[0, tau)`.
    pub pilots: Vec<Vec<usize>>,
    pub cut_value: Option<f64>,
}

impl PilotAssignment {
    pub fn pilot_of(&self, cell: usize, slot: usize) -> usize {
        self.pilots[cell][slot]
    }
}

/// Greedy max-τ-cut assignment: the first cell's groups seed the τ pilot
/// sets in slot order; every other group, visited in a seeded random order,
/// joins the feasible set (no same-cell peer) with the smallest intra-set
/// weight sum, ties to the lowest set index. A swap pass then repeatedly
/// exchanges the pilots of two same-cell groups whenever that lowers the
/// retained (uncut) weight, so the cut only improves on the greedy value.
pub fn max_tau_cut_assign(
    graph: &InterferenceGraph,
    tau: usize,
    rng: &mut impl Rng,
) -> Result<PilotAssignment> {
    if tau == 0 {
        return Err(Error::InvalidParameter("tau must be positive".into()));
    }
    let cells = graph.cells();
    for &cell in &cells {
        let count = graph.nodes.iter().filter(|n| n.cell == cell).count();
        if count != tau {
            return Err(Error::InvalidParameter(format!(
                "cell {cell} has {count} groups; the solver needs exactly tau = {tau}"
            )));
        }
    }

    let n = graph.node_count();
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let seed_cell = cells[0];
    let mut order: Vec<usize> = Vec::new();
    for (idx, node) in graph.nodes.iter().enumerate() {
        if node.cell == seed_cell {
            assigned[idx] = Some(node.slot);
        } else {
            order.push(idx);
        }
    }
    order.shuffle(rng);

    for &v in &order {
        let mut best: Option<(usize, f64)> = None;
        for set in 0..tau {
            let feasible = (0..n).all(|u| {
                assigned[u] != Some(set) || !graph.same_cell(u, v)
            });
            if !feasible {
                continue;
            }
            let load: f64 = (0..n)
                .filter(|&u| assigned[u] == Some(set))
                .map(|u| graph.weight(u, v))
                .sum();
            if best.map_or(true, |(_, cur)| load < cur) {
                best = Some((set, load));
            }
        }
        let (set, _) = best.ok_or_else(|| {
            Error::Invariant(format!("no feasible pilot set for group node {v}"))
        })?;
        assigned[v] = Some(set);
    }

    let in_set_load = |assigned: &[Option<usize>], x: usize, set: usize, skip: usize| -> f64 {
        (0..n)
            .filter(|&w| w != x && w != skip && assigned[w] == Some(set))
            .map(|w| graph.weight(w, x))
            .sum()
    };
    let mut improved = true;
    while improved {
        improved = false;
        for u in 0..n {
            for v in u + 1..n {
                if !graph.same_cell(u, v) {
                    continue;
                }
                let (su, sv) = (assigned[u].unwrap(), assigned[v].unwrap());
                if su == sv {
                    continue;
                }
                let before = in_set_load(&assigned, u, su, v) + in_set_load(&assigned, v, sv, u);
                let after = in_set_load(&assigned, u, sv, v) + in_set_load(&assigned, v, su, u);
                if after < before {
                    assigned[u] = Some(sv);
                    assigned[v] = Some(su);
                    improved = true;
                }
            }
        }
    }

    let assignment = assignment_from_nodes(graph, tau, &assigned)?;
    let cut = cut_value(graph, &assignment)?;
    Ok(PilotAssignment { cut_value: Some(cut), ..assignment })
}

fn assignment_from_nodes(
    graph: &InterferenceGraph,
    tau: usize,
    assigned: &[Option<usize>],
) -> Result<PilotAssignment> {
    let n_cells = graph.cells().len();
    let mut pilots = vec![vec![usize::MAX; tau]; n_cells];
    for (idx, node) in graph.nodes.iter().enumerate() {
        let pilot = assigned[idx]
            .ok_or_else(|| Error::Invariant(format!("group node {idx} left unassigned")))?;
        if node.cell >= n_cells || node.slot >= tau {
            return Err(Error::Invariant("node labels exceed the assignment shape".into()));
        }
        pilots[node.cell][node.slot] = pilot;
    }
    Ok(PilotAssignment { tau, pilots, cut_value: None })
}

/// Trivial assignment: slot k transmits pilot k in every cell.
pub fn identity_assign(n_cells: usize, tau: usize) -> Result<PilotAssignment> {
    if n_cells == 0 || tau == 0 {
        return Err(Error::InvalidParameter("cell count and tau must be positive".into()));
    }
    Ok(PilotAssignment {
        tau,
        pilots: vec![(0..tau).collect(); n_cells],
        cut_value: None,
    })
}

/// Feasible null arm: each cell applies an independent random permutation
/// of the pilot indices to its slots.
pub fn random_assign(n_cells: usize, tau: usize, rng: &mut impl Rng) -> Result<PilotAssignment> {
    let mut assignment = identity_assign(n_cells, tau)?;
    for per_cell in &mut assignment.pilots {
        per_cell.shuffle(rng);
    }
    Ok(assignment)
}

/// Sum of finite (cross-cell) weights between nodes on different pilots.
pub fn cut_value(graph: &InterferenceGraph, assignment: &PilotAssignment) -> Result<f64> {
    let pilot = |node: &GroupNode| -> Result<usize> {
        assignment
            .pilots
            .get(node.cell)
            .and_then(|row| row.get(node.slot))
            .copied()
            .ok_or_else(|| Error::DimensionMismatch {
                expected: graph.node_count(),
                got: assignment.pilots.iter().map(Vec::len).sum(),
            })
    };
    let mut total = 0.0;
    for u in 0..graph.node_count() {
        for v in u + 1..graph.node_count() {
            if graph.same_cell(u, v) {
                continue;
            }
            if pilot(&graph.nodes[u])? != pilot(&graph.nodes[v])? {
                total += graph.weight(u, v);
            }
        }
    }
    Ok(total)
}

/// Exact maximum finite-weight cut over all feasible pilot assignments
/// (same-cell groups never share a pilot). Guarded against instances with
/// more than ten million assignments.
pub fn brute_force_cut_oracle(graph: &InterferenceGraph, tau: usize) -> Result<f64> {
    if tau == 0 {
        return Err(Error::InvalidParameter("tau must be positive".into()));
    }
    let n = graph.node_count();
    if (tau as f64).powi(n as i32) > 1e7 {
        return Err(Error::TooLarge(format!("{tau}^{n} assignments exceed the enumeration guard")));
    }
    for &cell in &graph.cells() {
        if graph.nodes.iter().filter(|node| node.cell == cell).count() > tau {
            return Err(Error::InvalidParameter(format!(
                "cell {cell} has more groups than pilots; no feasible assignment exists"
            )));
        }
    }

    fn search(
        graph: &InterferenceGraph,
        tau: usize,
        node: usize,
        pilots: &mut Vec<usize>,
        best: &mut f64,
    ) {
        if node == graph.node_count() {
            let mut cut = 0.0;
            for u in 0..graph.node_count() {
                for v in u + 1..graph.node_count() {
                    if !graph.same_cell(u, v) && pilots[u] != pilots[v] {
                        cut += graph.weight(u, v);
                    }
                }
            }
            if cut > *best {
                *best = cut;
            }
            return;
        }
        'sets: for set in 0..tau {
            for prev in 0..node {
                if pilots[prev] == set && graph.same_cell(prev, node) {
                    continue 'sets;
                }
            }
            pilots.push(set);
            search(graph, tau, node + 1, pilots, best);
            pilots.pop();
        }
    }

    let mut best = 0.0;
    search(graph, tau, 0, &mut Vec::with_capacity(n), &mut best);
    Ok(best)
}

/// Edge-list dump: one `# node` line per group, then `u v weight` lines for
/// every pair (sentinel weights included as stored).
pub fn dump_edges(graph: &InterferenceGraph) -> String {
    let mut out = String::new();
    for (idx, node) in graph.nodes.iter().enumerate() {
        let members = if node.members.is_empty() {
            "-".to_string()
        } else {
            node.members.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",")
        };
        out.push_str(&format!("# node {idx} cell {} slot {} members {members}\n", node.cell, node.slot));
    }
    for u in 0..graph.node_count() {
        for v in u + 1..graph.node_count() {
            out.push_str(&format!("{u} {v} {}\n", fmt_f64(graph.weight(u, v))));
        }
    }
    out
}
