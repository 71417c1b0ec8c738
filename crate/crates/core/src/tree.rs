//! History tree with per-level statistics.
//!
//! Every `(h, a)` edge keeps a running mean of level-0 returns and, for each
//! finer level `l`, a running mean and variance of the return differences
//! `V_k(e_l) - V_k(e_{l-1})` of correlated episode pairs. The action value is
//! the level-0 mean plus the variance-weighted sum of the difference means.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Action, NoiseDraw, ObsKey};
use crate::scalar::Scalar;
use crate::stats::RunningStats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(usize);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("q-hat queried for action {0} before any level-0 visit")]
    Unvisited(usize),
    #[error("correlated episodes do not share their first action edge")]
    NoCommonAction,
    #[error("episode node path does not match its steps")]
    PathMismatch,
    #[error("difference backup needs a level >= 1, got {0}")]
    InvalidLevel(usize),
}

#[derive(Clone, Debug)]
pub struct ActionStats<F> {
    visits: Vec<u64>,
    level0: RunningStats<F>,
    diffs: Vec<RunningStats<F>>,
}

impl<F: Scalar> ActionStats<F> {
    fn new(num_levels: usize) -> Self {
        Self {
            visits: vec![0; num_levels],
            level0: RunningStats::new(),
            diffs: vec![RunningStats::new(); num_levels - 1],
        }
    }

    /// `N_l(h, a)`.
    pub fn visits(&self, level: usize) -> u64 {
        self.visits[level]
    }

    /// `Q_0(h, a)`.
    pub fn level0_mean(&self) -> Option<F> {
        self.level0.mean()
    }

    /// Running statistics of the level-`l` difference stream, `l >= 1`.
    pub fn difference(&self, level: usize) -> &RunningStats<F> {
        &self.diffs[level - 1]
    }

    /// `w_l = (1 + Var_l / N_l)^-1`. With fewer than two samples the variance
    /// is undefined and `N_l / (N_l + 1)` is used instead.
    pub fn correction_weight(&self, level: usize) -> F {
        let d = self.difference(level);
        let n = F::from_count(d.count());
        match d.variance() {
            Some(var) => F::one() / (F::one() + var / n),
            None => n / (n + F::one()),
        }
    }

    /// `Q(h, a) = Q_0 + sum_l w_l * dQ_l` over levels with at least one difference sample.
    pub fn q_hat(&self) -> Option<F> {
        let base = self.level0.mean()?;
        let correction: F = (1..=self.diffs.len())
            .filter_map(|l| {
                self.difference(l)
                    .mean()
                    .map(|m| self.correction_weight(l) * m)
            })
            .sum();
        Some(base + correction)
    }
}

#[derive(Clone, Debug)]
pub struct HistoryNode<F> {
    depth: usize,
    visits: Vec<u64>,
    actions: Vec<ActionStats<F>>,
    children: BTreeMap<(Action, ObsKey), NodeId>,
}

impl<F: Scalar> HistoryNode<F> {
    fn new(depth: usize, num_actions: usize, num_levels: usize) -> Self {
        Self {
            depth,
            visits: vec![0; num_levels],
            actions: (0..num_actions)
                .map(|_| ActionStats::new(num_levels))
                .collect(),
            children: BTreeMap::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `N_l(h)`.
    pub fn visits(&self, level: usize) -> u64 {
        self.visits[level]
    }

    pub fn action(&self, a: Action) -> &ActionStats<F> {
        &self.actions[a.0]
    }

    /// `A'(h)`: actions selected at least once by a level-0 episode.
    pub fn visited_actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.actions
            .iter()
            .enumerate()
            .filter(|(_, s)| s.visits[0] > 0)
            .map(|(i, _)| Action(i))
    }

    pub fn num_children(&self) -> usize {
        self.children.len()
    }
}

/// One `(s, a, o, r)` quadruple.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep<S, O, F> {
    pub state: S,
    pub action: Action,
    pub observation: O,
    pub reward: F,
}

/// A sampled episode together with the noise sequence that generated it.
///
/// `nodes[k]` is the tree node from which `steps[k].action` was taken. The
/// closing `(s, -, -, r)` entry is split into `final_state` and `tail`.
#[derive(Clone, Debug)]
pub struct Episode<S, O, F> {
    pub level: usize,
    pub steps: Vec<EpisodeStep<S, O, F>>,
    pub noise: Vec<NoiseDraw<F>>,
    pub nodes: Vec<NodeId>,
    pub final_state: S,
    pub tail: F,
    pub terminal: bool,
}

impl<S, O, F: Scalar> Episode<S, O, F> {
    pub fn empty(level: usize, state: S, terminal: bool) -> Self {
        Self {
            level,
            steps: Vec::new(),
            noise: Vec::new(),
            nodes: Vec::new(),
            final_state: state,
            tail: F::zero(),
            terminal,
        }
    }

    /// Number of action steps.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first_state(&self) -> &S {
        self.steps
            .first()
            .map(|s| &s.state)
            .unwrap_or(&self.final_state)
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.steps.iter().map(|s| s.action)
    }

    /// `V_k` for every `k in 0..=len`, where `V_k` is the discounted reward
    /// from the `k`-th quadruple onwards including the tail entry (0-based,
    /// so `values[len] == tail`).
    pub fn values(&self, discount: F) -> Vec<F> {
        let mut out = vec![F::zero(); self.steps.len() + 1];
        out[self.steps.len()] = self.tail;
        for k in (0..self.steps.len()).rev() {
            out[k] = self.steps[k].reward + discount * out[k + 1];
        }
        out
    }

    pub fn value_from(&self, k: usize, discount: F) -> F {
        self.values(discount)[k]
    }
}

/// Outcome of a UCB1 selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    pub action: Action,
    /// The action had never been selected at this node by a level-0 episode.
    pub unvisited: bool,
}

/// Search tree over histories, arena-allocated. The root is the current history.
#[derive(Clone, Debug)]
pub struct SearchTree<F> {
    nodes: Vec<HistoryNode<F>>,
    num_actions: usize,
    num_levels: usize,
}

impl<F: Scalar> SearchTree<F> {
    pub fn new(num_actions: usize, num_levels: usize) -> Self {
        assert!(num_actions > 0, "action set must be non-empty");
        assert!(num_levels > 0, "at least one level");
        Self {
            nodes: vec![HistoryNode::new(0, num_actions, num_levels)],
            num_actions,
            num_levels,
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &HistoryNode<F> {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// The child of `h` via edge `(a, o)`, created with zeroed statistics if absent.
    pub fn child(&mut self, h: NodeId, a: Action, key: ObsKey) -> NodeId {
        if let Some(&id) = self.nodes[h.0].children.get(&(a, key.clone())) {
            return id;
        }
        let id = NodeId(self.nodes.len());
        let depth = self.nodes[h.0].depth + 1;
        self.nodes
            .push(HistoryNode::new(depth, self.num_actions, self.num_levels));
        self.nodes[h.0].children.insert((a, key), id);
        id
    }

    pub fn find_child(&self, h: NodeId, a: Action, key: &ObsKey) -> Option<NodeId> {
        self.nodes[h.0].children.get(&(a, key.clone())).copied()
    }

    pub fn q_hat(&self, h: NodeId, a: Action) -> Result<F, TreeError> {
        self.nodes[h.0].actions[a.0]
            .q_hat()
            .ok_or(TreeError::Unvisited(a.0))
    }

    /// UCB1 over the level's action pool: all actions at level 0, `A'(h)` above.
    ///
    /// At level 0 an action never selected at `h` is picked uniformly at
    /// random and flagged unvisited. At finer levels `None` means `A'(h)` is
    /// empty. Ties go to the lowest action index.
    pub fn ucb1_select<R: Rng + ?Sized>(
        &self,
        h: NodeId,
        level: usize,
        exploration: F,
        rng: &mut R,
    ) -> Option<Selection> {
        let node = &self.nodes[h.0];
        if level == 0 {
            let unvisited: Vec<usize> = (0..self.num_actions)
                .filter(|&a| node.actions[a].visits[0] == 0)
                .collect();
            if !unvisited.is_empty() {
                let pick = unvisited[rng.random_range(0..unvisited.len())];
                return Some(Selection {
                    action: Action(pick),
                    unvisited: true,
                });
            }
        }
        let pool: Vec<Action> = node.visited_actions().collect();
        if pool.is_empty() {
            return None;
        }
        if let Some(&a) = pool.iter().find(|a| node.actions[a.0].visits[level] == 0) {
            return Some(Selection {
                action: a,
                unvisited: false,
            });
        }
        let log_n = F::from_count(node.visits[level]).ln();
        let mut best: Option<(Action, F)> = None;
        for a in pool {
            let stats = &node.actions[a.0];
            let q = stats.q_hat().expect("pool members have level-0 visits");
            let bonus = exploration * (log_n / F::from_count(stats.visits[level])).sqrt();
            let score = q + bonus;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((a, score));
            }
        }
        best.map(|(action, _)| Selection {
            action,
            unvisited: false,
        })
    }

    /// `argmax_{a in A'(h)} Q(h, a)`, lowest index on ties.
    pub fn best_action(&self, h: NodeId) -> Option<Action> {
        let node = &self.nodes[h.0];
        let mut best: Option<(Action, F)> = None;
        for a in node.visited_actions() {
            let q = node.actions[a.0].q_hat().expect("visited");
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((a, q));
            }
        }
        best.map(|(a, _)| a)
    }

    /// Adds a level-0 episode's returns to `Q_0` along its path.
    pub fn backup_episode<S, O>(
        &mut self,
        episode: &Episode<S, O, F>,
        discount: F,
    ) -> Result<(), TreeError> {
        if episode.nodes.len() != episode.steps.len() {
            return Err(TreeError::PathMismatch);
        }
        let values = episode.values(discount);
        for (k, (node, step)) in episode.nodes.iter().zip(&episode.steps).enumerate() {
            let n = &mut self.nodes[node.0];
            n.visits[0] += 1;
            let stats = &mut n.actions[step.action.0];
            stats.visits[0] += 1;
            stats.level0.push(values[k]);
        }
        Ok(())
    }

    /// Adds the return differences of a correlated pair at `level`.
    ///
    /// Along the common prefix (same node, same action) each `(h, a)` records
    /// `V_k(fine) - V_k(coarse)` and one visit. Past the divergence point the
    /// two branches each receive visit counts only; their values already
    /// enter the difference at the deepest common edge.
    pub fn backup_difference<S, O>(
        &mut self,
        fine: &Episode<S, O, F>,
        coarse: &Episode<S, O, F>,
        level: usize,
        discount: F,
    ) -> Result<(), TreeError> {
        if level == 0 || level >= self.num_levels {
            return Err(TreeError::InvalidLevel(level));
        }
        if fine.nodes.len() != fine.steps.len() || coarse.nodes.len() != coarse.steps.len() {
            return Err(TreeError::PathMismatch);
        }
        if fine.is_empty() && coarse.is_empty() {
            return Ok(());
        }
        match (fine.steps.first(), coarse.steps.first()) {
            (Some(f), Some(c)) if f.action == c.action && fine.nodes[0] == coarse.nodes[0] => {}
            _ => return Err(TreeError::NoCommonAction),
        }
        let vf = fine.values(discount);
        let vc = coarse.values(discount);
        let common = fine
            .nodes
            .iter()
            .zip(&coarse.nodes)
            .zip(fine.steps.iter().zip(&coarse.steps))
            .take_while(|((nf, nc), (sf, sc))| nf == nc && sf.action == sc.action)
            .count();
        for k in 0..common {
            let node = &mut self.nodes[fine.nodes[k].0];
            node.visits[level] += 1;
            let stats = &mut node.actions[fine.steps[k].action.0];
            stats.visits[level] += 1;
            stats.diffs[level - 1].push(vf[k] - vc[k]);
        }
        for ep in [fine, coarse] {
            for (node, step) in ep.nodes.iter().zip(&ep.steps).skip(common) {
                let n = &mut self.nodes[node.0];
                n.visits[level] += 1;
                n.actions[step.action.0].visits[level] += 1;
            }
        }
        Ok(())
    }

    /// Makes `new_root` the root, discarding every node outside its subtree.
    pub fn reroot(&mut self, new_root: NodeId) {
        if new_root == self.root() {
            return;
        }
        let mut old = std::mem::take(&mut self.nodes);
        let mut remap = BTreeMap::new();
        let mut order = vec![new_root];
        let mut i = 0;
        while i < order.len() {
            let id = order[i];
            remap.insert(id, NodeId(i));
            order.extend(old[id.0].children.values().copied());
            i += 1;
        }
        let base_depth = old[new_root.0].depth;
        self.nodes = order
            .iter()
            .map(|id| {
                let mut n =
                    std::mem::replace(&mut old[id.0], HistoryNode::new(0, 0, self.num_levels));
                n.depth -= base_depth;
                for child in n.children.values_mut() {
                    *child = remap[child];
                }
                n
            })
            .collect();
    }

    /// Checks `N_l(h) = sum_a N_l(h, a)` at every node and level.
    pub fn counts_consistent(&self) -> bool {
        self.nodes.iter().all(|n| {
            (0..self.num_levels)
                .all(|l| n.visits[l] == n.actions.iter().map(|a| a.visits[l]).sum::<u64>())
        })
    }

    /// Snapshot of the statistics of every node up to `max_depth`.
    pub fn export(&self, max_depth: usize) -> TreeDump {
        let mut nodes = Vec::new();
        let mut stack = vec![(self.root(), Vec::new())];
        while let Some((id, path)) = stack.pop() {
            let n = &self.nodes[id.0];
            let actions = n
                .actions
                .iter()
                .enumerate()
                .filter(|(_, s)| s.visits.iter().any(|v| *v > 0))
                .map(|(i, s)| ActionDump {
                    action: i,
                    visits: s.visits.clone(),
                    q0: s.level0.mean().map(Scalar::as_f64),
                    diff_means: s
                        .diffs
                        .iter()
                        .map(|d| d.mean().map(Scalar::as_f64))
                        .collect(),
                    diff_variances: s
                        .diffs
                        .iter()
                        .map(|d| d.variance().map(Scalar::as_f64))
                        .collect(),
                    weights: (1..self.num_levels)
                        .map(|l| s.correction_weight(l).as_f64())
                        .collect(),
                    q_hat: s.q_hat().map(Scalar::as_f64),
                })
                .collect();
            if n.depth < max_depth {
                for ((a, key), child) in n.children.iter().rev() {
                    let mut p = path.clone();
                    p.push(EdgeDump {
                        action: a.0,
                        observation: key.0.to_vec(),
                    });
                    stack.push((*child, p));
                }
            }
            nodes.push(NodeDump {
                path,
                depth: n.depth,
                visits: n.visits.clone(),
                actions,
            });
        }
        TreeDump {
            num_levels: self.num_levels,
            nodes,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeDump {
    pub num_levels: usize,
    pub nodes: Vec<NodeDump>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeDump {
    pub path: Vec<EdgeDump>,
    pub depth: usize,
    pub visits: Vec<u64>,
    pub actions: Vec<ActionDump>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeDump {
    pub action: usize,
    pub observation: Vec<i64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ActionDump {
    pub action: usize,
    pub visits: Vec<u64>,
    pub q0: Option<f64>,
    pub diff_means: Vec<Option<f64>>,
    pub diff_variances: Vec<Option<f64>>,
    pub weights: Vec<f64>,
    pub q_hat: Option<f64>,
}
