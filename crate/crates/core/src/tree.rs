//! Tree of controlled trajectories: level-by-level expansion with pruning,
//! backward value recursion and optimal-path extraction.
//!
//! Nodes that a pruning rule removes are not stored. Their parent keeps a
//! child entry pointing at the surviving node instead, so the recursion
//! `V(ζ) = min_j [V(child_j) + Δt (L_state(ζ) + L_ctrl(u_j))]` sees the
//! redirected value. A non-leaf node without children gets `+∞`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Sorted, distinct discrete controls inside `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid<T> {
    values: Vec<T>,
    lower: T,
    upper: T,
}

impl<T: Scalar> ControlGrid<T> {
    pub fn new(values: Vec<T>, lower: T, upper: T) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("empty control grid".into()));
        }
        if !(lower <= upper) {
            return Err(Error::Argument("control box has lower > upper".into()));
        }
        for w in values.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Argument("controls must be strictly increasing".into()));
            }
        }
        if values.iter().any(|&u| u < lower || u > upper || !u.is_finite_value()) {
            return Err(Error::Argument("control outside its box".into()));
        }
        Ok(Self { values, lower, upper })
    }

    /// `u_i = a + (b − a) i / (M − 1)`; a single control sits at `a`.
    pub fn uniform(a: T, b: T, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Argument("at least one control is required".into()));
        }
        if m > 1 && !(a < b) {
            return Err(Error::Argument("uniform grid needs a < b".into()));
        }
        let values = if m == 1 {
            vec![a]
        } else {
            // i/(M−1) is evaluated as one correctly rounded quotient so that
            // refining M → 2M−1 reproduces the old points bit for bit
            (0..m).map(|i| a + (b - a) * (T::from_count(i) / T::from_count(m - 1))).collect()
        };
        Self::new(values, a.min(b), a.max(b))
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bounds(&self) -> (T, T) {
        (self.lower, self.upper)
    }

    pub fn get(&self, i: usize) -> T {
        self.values[i]
    }

    /// Index of `u` if it is one of the grid points.
    pub fn index_of(&self, u: T) -> Option<usize> {
        self.values.iter().position(|&v| v == u)
    }

    /// The grid with `2M − 1` uniform points on the same box.
    pub fn refined(&self) -> Result<Self> {
        Self::uniform(self.lower, self.upper, 2 * self.len() - 1)
    }
}

/// What the tree needs from a (full or reduced) discrete dynamics.
pub trait NodeDynamics<T: Scalar>: Sync {
    type State: Clone + Send + Sync;

    fn step(&self, y: &Self::State, u: T, t: T) -> Result<Self::State>;

    /// State part of the running cost at time `t`.
    fn state_cost(&self, y: &Self::State, t: T) -> T;

    /// Control part of the running cost.
    fn control_cost(&self, u: T) -> T;

    fn terminal_cost(&self, y: &Self::State) -> T;

    /// Euclidean coordinates used for distances and boxes. Only queried
    /// when a pruning rule needs them; steps signal non-finite states by
    /// returning [`Error::Numerical`].
    fn coords(&self, y: &Self::State) -> Vec<T>;

    /// Reals held by one stored state.
    fn storage(&self, y: &Self::State) -> usize;

    /// `ẏ = L y + u y`: permutations of a control sequence reach the same
    /// state, which sum-based pruning exploits.
    fn bilinear(&self) -> bool {
        false
    }
}

/// Per-level merge rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PruningRule<T> {
    None,
    /// Merge into the first retained node within euclidean distance `eps`.
    Geometric { eps: T },
    /// Only nondecreasing control index sequences.
    Monotone,
    /// Nodes with equal sums of control indices coincide.
    BilinearSumBased,
}

/// Elementwise box on node coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelBox<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> LevelBox<T> {
    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.lo.len() && x.iter().zip(&self.lo).zip(&self.hi).all(|((&v, &l), &h)| l <= v && v <= h)
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions<T> {
    pub rule: PruningRule<T>,
    /// Statistical constraint: nodes at level `n` outside `boxes[n]` are dropped.
    pub boxes: Option<Vec<Option<LevelBox<T>>>>,
    /// Control indices of a path that must survive unmerged and unboxed.
    pub protected: Option<Vec<usize>>,
    pub keep_states: bool,
    pub node_cap: Option<usize>,
    /// Cap on reals held by live states (previous level plus raw children).
    pub storage_cap: Option<usize>,
}

impl<T> Default for BuildOptions<T> {
    fn default() -> Self {
        Self {
            rule: PruningRule::None,
            boxes: None,
            protected: None,
            keep_states: true,
            node_cap: None,
            storage_cap: None,
        }
    }
}

impl<T> BuildOptions<T> {
    pub fn with_rule(rule: PruningRule<T>) -> Self {
        Self { rule, ..Self::default() }
    }
}

/// One time level. Node `i` was reached from `parent[i]` by control `control[i]`.
#[derive(Clone, Debug)]
pub struct TreeLevel<T, S> {
    pub parent: Vec<usize>,
    pub control: Vec<usize>,
    /// Sum of control indices along the path; the sum-based key.
    pub control_sum: Vec<usize>,
    pub protected: Vec<bool>,
    /// `L_state` at this level's time, or `g` on the last level.
    pub cost: Vec<T>,
    pub value: Vec<T>,
    /// Minimizing control index after the backward pass.
    pub argmin: Vec<Option<usize>>,
    /// `(control, child)` in increasing control order; filled when the next
    /// level is built.
    pub children: Vec<Vec<(usize, usize)>>,
    pub states: Option<Vec<S>>,
}

impl<T, S> TreeLevel<T, S> {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// Counters of one expansion.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    /// Children generated before pruning.
    pub raw: usize,
    pub kept: usize,
    pub merged: usize,
    pub out_of_box: usize,
    pub failed: usize,
    pub min_value: Option<f64>,
    pub max_value: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Tree<T, S> {
    pub levels: Vec<TreeLevel<T, S>>,
    pub grid: ControlGrid<T>,
    pub t0: T,
    pub dt: T,
    pub stats: Vec<LevelStats>,
    /// Largest number of reals held by live states during the build.
    pub peak_storage: usize,
    pub evaluated: bool,
}

/// Total order wrapper for range queries on one coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Survivors of a geometric scan, indexed by their first coordinate so
/// that only candidates within `eps` along it are compared.
struct GeometricIndex<T> {
    eps: T,
    coords: Vec<Vec<T>>,
    by_first: BTreeMap<(Key, usize), ()>,
}

impl<T: Scalar> GeometricIndex<T> {
    fn new(eps: T) -> Self {
        Self {
            eps,
            coords: Vec::new(),
            by_first: BTreeMap::new(),
        }
    }

    /// Smallest survivor index within `eps` of `x`.
    fn find(&self, x: &[T]) -> Option<usize> {
        let first = x.first().map_or(0.0, |v| v.as_f64());
        let e = self.eps.as_f64();
        let lo = (Key(first - e), 0usize);
        let hi = (Key(first + e), usize::MAX);
        let e2 = self.eps * self.eps;
        self.by_first
            .range(lo..=hi)
            .map(|((_, i), _)| *i)
            .filter(|&i| dist2(&self.coords[i], x) <= e2)
            .min()
    }

    fn insert(&mut self, idx: usize, x: Vec<T>) {
        let first = x.first().map_or(0.0, |v| v.as_f64());
        debug_assert_eq!(idx, self.coords.len());
        self.coords.push(x);
        self.by_first.insert((Key(first), idx), ());
    }
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n − i) / (i + 1) stays integral at every step
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// `(M + N)! / (M! N!)`: nodes of the monotone-control tree with `M`
/// controls and `N` steps.
pub fn monotone_cardinality(m: usize, n: usize) -> Result<u128> {
    if m == 0 || n == 0 {
        return Err(Error::Argument("monotone cardinality needs M, N >= 1".into()));
    }
    binomial(m as u128 + n as u128, n as u128)
        .ok_or_else(|| Error::Argument(format!("binomial({}, {n}) overflows u128", m + n)))
}

/// Node count of sum-based pruning with `M` controls and `N` steps:
/// level `n` holds the distinct sums `0..=(M−1)n`.
pub fn sum_based_cardinality(m: usize, n: usize) -> usize {
    (0..=n).map(|k| (m - 1) * k + 1).sum()
}

impl<T: Scalar, S: Clone + Send + Sync> Tree<T, S> {
    /// Expands `steps` levels from `root`. `observer` sees every level's
    /// states (after pruning) before they can be released.
    #[allow(clippy::too_many_arguments)]
    pub fn build<D>(
        dynamics: &D,
        root: S,
        grid: &ControlGrid<T>,
        t0: T,
        dt: T,
        steps: usize,
        opts: &BuildOptions<T>,
        observer: &mut dyn FnMut(usize, &[S]) -> Result<()>,
    ) -> Result<Self>
    where
        D: NodeDynamics<T, State = S>,
    {
        if !(dt > T::zero()) {
            return Err(Error::Argument("dt must be positive".into()));
        }
        if let PruningRule::Geometric { eps } = opts.rule {
            if !(eps >= T::zero()) {
                return Err(Error::Argument("geometric eps must be >= 0".into()));
            }
        }
        if opts.rule == PruningRule::BilinearSumBased && !dynamics.bilinear() {
            return Err(Error::Argument("sum-based pruning needs bilinear dynamics".into()));
        }
        if let Some(p) = &opts.protected {
            if p.len() < steps || p.iter().any(|&j| j >= grid.len()) {
                return Err(Error::Argument("protected path does not fit the grid".into()));
            }
        }
        let time = |n: usize| t0 + dt * T::from_count(n);
        let last_cost = |d: &D, y: &S, n: usize| if n == steps { d.terminal_cost(y) } else { d.state_cost(y, time(n)) };

        let root_storage = dynamics.storage(&root);
        let mut frontier = vec![root];
        observer(0, &frontier)?;
        let mut levels = vec![TreeLevel {
            parent: vec![usize::MAX],
            control: vec![usize::MAX],
            control_sum: vec![0],
            protected: vec![opts.protected.is_some()],
            cost: vec![last_cost(dynamics, &frontier[0], 0)],
            value: vec![T::zero()],
            argmin: vec![None],
            children: vec![Vec::new()],
            states: None,
        }];
        let mut stats = vec![LevelStats {
            level: 0,
            raw: 1,
            kept: 1,
            ..Default::default()
        }];
        let mut total_nodes = 1usize;
        let mut peak_storage = root_storage;
        let mut frontier_storage = root_storage;

        for n in 1..=steps {
            let prev = levels.last().expect("root level");
            let t_prev = time(n - 1);
            let monotone = opts.rule == PruningRule::Monotone;
            let jobs: Vec<(usize, usize)> = (0..frontier.len())
                .flat_map(|p| {
                    let first = if monotone && n > 1 { prev.control[p] } else { 0 };
                    (first..grid.len()).map(move |j| (p, j))
                })
                .collect();
            let raw: Vec<Result<S>> = jobs
                .par_iter()
                .map(|&(p, j)| dynamics.step(&frontier[p], grid.get(j), t_prev))
                .collect();

            let raw_storage: usize = raw.iter().filter_map(|r| r.as_ref().ok()).map(|s| dynamics.storage(s)).sum();
            let live = frontier_storage + raw_storage;
            peak_storage = peak_storage.max(live);
            if let Some(cap) = opts.storage_cap {
                if live > cap {
                    return Err(Error::ResourceCap {
                        level: n,
                        detail: format!("live storage {live} exceeds cap {cap}"),
                    });
                }
            }

            let boxed = opts.boxes.as_ref().and_then(|b| b.get(n)).and_then(|b| b.as_ref());
            let needs_coords = boxed.is_some() || matches!(opts.rule, PruningRule::Geometric { .. });
            let mut st = LevelStats {
                level: n,
                raw: jobs.len(),
                ..Default::default()
            };
            let mut level = TreeLevel {
                parent: Vec::new(),
                control: Vec::new(),
                control_sum: Vec::new(),
                protected: Vec::new(),
                cost: Vec::new(),
                value: Vec::new(),
                argmin: Vec::new(),
                children: Vec::new(),
                states: None,
            };
            let mut next_states: Vec<S> = Vec::new();
            let mut links: Vec<Vec<(usize, usize)>> = vec![Vec::new(); frontier.len()];
            let mut geo = match opts.rule {
                PruningRule::Geometric { eps } => Some(GeometricIndex::new(eps)),
                _ => None,
            };
            let mut by_sum: HashMap<usize, usize> = HashMap::new();

            for (&(p, j), r) in jobs.iter().zip(raw) {
                let y = match r {
                    Ok(y) => y,
                    Err(Error::Numerical(_)) => {
                        st.failed += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let x = if needs_coords { dynamics.coords(&y) } else { Vec::new() };
                if x.iter().any(|v| !v.is_finite_value()) {
                    st.failed += 1;
                    continue;
                }
                let protected = prev.protected[p] && opts.protected.as_ref().is_some_and(|path| path[n - 1] == j);
                if !protected {
                    if let Some(b) = boxed {
                        if !b.contains(&x) {
                            st.out_of_box += 1;
                            continue;
                        }
                    }
                }
                let sum = prev.control_sum[p] + j;
                let target = if protected {
                    None
                } else {
                    match opts.rule {
                        PruningRule::Geometric { .. } => geo.as_ref().and_then(|g| g.find(&x)),
                        PruningRule::BilinearSumBased => by_sum.get(&sum).copied(),
                        _ => None,
                    }
                };
                let idx = match target {
                    Some(i) => {
                        st.merged += 1;
                        i
                    }
                    None => {
                        let i = level.len();
                        level.parent.push(p);
                        level.control.push(j);
                        level.control_sum.push(sum);
                        level.protected.push(protected);
                        next_states.push(y);
                        if let Some(g) = geo.as_mut() {
                            g.insert(i, x);
                        }
                        by_sum.entry(sum).or_insert(i);
                        i
                    }
                };
                links[p].push((j, idx));
            }
            st.kept = level.len();
            total_nodes += st.kept;
            if let Some(cap) = opts.node_cap {
                if total_nodes > cap {
                    return Err(Error::ResourceCap {
                        level: n,
                        detail: format!("{total_nodes} nodes exceed cap {cap}"),
                    });
                }
            }
            level.cost = next_states.par_iter().map(|y| last_cost(dynamics, y, n)).collect();
            level.value = vec![T::zero(); level.len()];
            level.argmin = vec![None; level.len()];
            level.children = vec![Vec::new(); level.len()];
            observer(n, &next_states)?;

            let prev = levels.last_mut().expect("root level");
            prev.children = links;
            if opts.keep_states {
                prev.states = Some(std::mem::replace(&mut frontier, next_states));
            } else {
                frontier = next_states;
            }
            frontier_storage = frontier.iter().map(|s| dynamics.storage(s)).sum();
            peak_storage = peak_storage.max(frontier_storage);
            levels.push(level);
            stats.push(st);
        }
        if opts.keep_states {
            levels.last_mut().expect("root level").states = Some(frontier);
        }
        Ok(Self {
            levels,
            grid: grid.clone(),
            t0,
            dt,
            stats,
            peak_storage,
            evaluated: false,
        })
    }

    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    /// Backward recursion with ties broken toward the smallest control.
    pub fn backward<D>(&mut self, dynamics: &D) -> Result<()>
    where
        D: NodeDynamics<T, State = S>,
    {
        let dt = self.dt;
        let ctrl_cost: Vec<T> = self.grid.values().iter().map(|&u| dynamics.control_cost(u)).collect();
        let last = self.levels.len() - 1;
        {
            let leaves = &mut self.levels[last];
            leaves.value = leaves.cost.clone();
            leaves.argmin = vec![None; leaves.len()];
        }
        for n in (0..last).rev() {
            let (head, tail) = self.levels.split_at_mut(n + 1);
            let level = &mut head[n];
            let next = &tail[0].value;
            let nodes = level.len();
            for (i, c) in level.children.iter().enumerate() {
                if c.iter().any(|&(_, k)| k >= next.len()) {
                    return Err(Error::Structural(format!("child of node {i} at level {n} is missing")));
                }
            }
            let results: Vec<(T, Option<usize>)> = (0..nodes)
                .into_par_iter()
                .map(|i| {
                    let mut best = T::max_value().unwrap_or_else(|| T::one() / T::zero());
                    let mut arg = None;
                    for &(j, k) in &level.children[i] {
                        let v = next[k] + dt * (level.cost[i] + ctrl_cost[j]);
                        if arg.is_none() || v < best {
                            best = v;
                            arg = Some(j);
                        }
                    }
                    if arg.is_none() {
                        best = T::one() / T::zero();
                    }
                    (best, arg)
                })
                .collect();
            level.value = results.iter().map(|r| r.0).collect();
            level.argmin = results.iter().map(|r| r.1).collect();
        }
        for (l, st) in self.levels.iter().zip(self.stats.iter_mut()) {
            let finite = l.value.iter().copied().filter(|v| v.is_finite_value());
            st.min_value = finite.clone().reduce(|a, b| a.min(b)).map(|v| v.as_f64());
            st.max_value = finite.reduce(|a, b| a.max(b)).map(|v| v.as_f64());
        }
        self.evaluated = true;
        Ok(())
    }

    /// `V⁰` at the root.
    pub fn root_value(&self) -> Result<T> {
        if !self.evaluated {
            return Err(Error::Structural("backward pass has not run".into()));
        }
        Ok(self.levels[0].value[0])
    }

    /// Node indices and control indices along the minimizing branch.
    pub fn optimal_path(&self) -> Result<OptimalPath<T>> {
        if !self.evaluated {
            return Err(Error::Structural("backward pass has not run".into()));
        }
        let mut nodes = vec![0usize];
        let mut controls = Vec::with_capacity(self.steps());
        for n in 0..self.steps() {
            let i = *nodes.last().expect("root");
            let j = self.levels[n].argmin[i]
                .ok_or_else(|| Error::Structural(format!("node {i} at level {n} has no admissible child")))?;
            let &(_, k) = self.levels[n].children[i]
                .iter()
                .find(|&&(c, _)| c == j)
                .expect("argmin is one of the children");
            controls.push(j);
            nodes.push(k);
        }
        let values = controls.iter().map(|&j| self.grid.get(j)).collect();
        Ok(OptimalPath { nodes, controls, values })
    }

    /// Discrete cost of a path, accumulated in the order of the backward
    /// recursion so that the optimal path reproduces `V⁰` exactly.
    pub fn path_cost<D>(&self, dynamics: &D, path: &OptimalPath<T>) -> T
    where
        D: NodeDynamics<T, State = S>,
    {
        let steps = path.controls.len();
        let mut v = self.levels[steps].cost[path.nodes[steps]];
        for n in (0..steps).rev() {
            v += self.dt * (self.levels[n].cost[path.nodes[n]] + dynamics.control_cost(path.values[n]));
        }
        v
    }

    /// States along the optimal path, from the stored levels or by replay.
    pub fn path_states<D>(&self, dynamics: &D, root: &S) -> Result<Vec<S>>
    where
        D: NodeDynamics<T, State = S>,
    {
        let path = self.optimal_path()?;
        if self.levels.iter().all(|l| l.states.is_some()) {
            return Ok(path
                .nodes
                .iter()
                .enumerate()
                .map(|(n, &i)| self.levels[n].states.as_ref().expect("kept")[i].clone())
                .collect());
        }
        let mut out = vec![root.clone()];
        for (n, &u) in path.values.iter().enumerate() {
            let y = dynamics.step(out.last().expect("root"), u, self.t0 + self.dt * T::from_count(n))?;
            out.push(y);
        }
        Ok(out)
    }
}

/// Minimizing branch of an evaluated tree.
#[derive(Clone, Debug)]
pub struct OptimalPath<T> {
    /// Node index per level, root first.
    pub nodes: Vec<usize>,
    pub controls: Vec<usize>,
    pub values: Vec<T>,
}

/// Boxes from the `⌈ρ|level|⌉` lowest-value nodes of each level `n ≥ n_start`,
/// enlarged to contain the optimal-path node.
pub fn statistical_refine<T, D>(tree: &Tree<T, D::State>, dynamics: &D, rho: T, n_start: usize) -> Result<Vec<Option<LevelBox<T>>>>
where
    T: Scalar,
    D: NodeDynamics<T>,
{
    if !(rho > T::zero() && rho <= T::one()) {
        return Err(Error::Argument("rho must lie in (0, 1]".into()));
    }
    let path = tree.optimal_path()?;
    let mut boxes = Vec::with_capacity(tree.levels.len());
    for (n, level) in tree.levels.iter().enumerate() {
        if n < n_start {
            boxes.push(None);
            continue;
        }
        if level.is_empty() {
            return Err(Error::Structural(format!("level {n} is empty")));
        }
        let states = level
            .states
            .as_ref()
            .ok_or_else(|| Error::Structural("statistical refinement needs stored states".into()))?;
        let keep = (rho * T::from_count(level.len())).ceil().to_usize().unwrap_or(level.len()).clamp(1, level.len());
        let mut order: Vec<usize> = (0..level.len()).collect();
        order.sort_by(|&a, &b| level.value[a].partial_cmp(&level.value[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        order.truncate(keep);
        order.push(path.nodes[n]);
        let mut lo = dynamics.coords(&states[order[0]]);
        let mut hi = lo.clone();
        for &i in &order[1..] {
            for (k, v) in dynamics.coords(&states[i]).into_iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        boxes.push(Some(LevelBox { lo, hi }));
    }
    Ok(boxes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticalParams<T> {
    pub rho: T,
    pub n_start: usize,
    pub tol: T,
    pub k_max: usize,
    pub m0: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Residual,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct StatisticalOutcome<T, S> {
    pub tree: Tree<T, S>,
    /// `V⁰` of every tree built, first tree first.
    pub history: Vec<T>,
    pub control_counts: Vec<usize>,
    pub node_counts: Vec<usize>,
    pub stop: StopReason,
}

/// Iterated statistical pruning: each pass doubles the controls (`M ← 2M−1`)
/// and confines levels `n ≥ n_start` to the boxes of the previous tree. The
/// previous optimal control sequence is carried over as a protected path, so
/// `V⁰` cannot increase. `base` supplies the merge rule and caps.
#[allow(clippy::too_many_arguments)]
pub fn statistical_loop<T, D>(
    dynamics: &D,
    root: D::State,
    bounds: (T, T),
    t0: T,
    dt: T,
    steps: usize,
    params: &StatisticalParams<T>,
    base: &BuildOptions<T>,
) -> Result<StatisticalOutcome<T, D::State>>
where
    T: Scalar,
    D: NodeDynamics<T>,
{
    if params.n_start < 1 {
        return Err(Error::Argument("n_start must be >= 1".into()));
    }
    let mut grid = ControlGrid::uniform(bounds.0, bounds.1, params.m0)?;
    let opts = BuildOptions {
        keep_states: true,
        boxes: None,
        protected: None,
        ..base.clone()
    };
    let mut tree = Tree::build(dynamics, root.clone(), &grid, t0, dt, steps, &opts, &mut |_, _| Ok(()))?;
    tree.backward(dynamics)?;
    let mut history = vec![tree.root_value()?];
    let mut control_counts = vec![grid.len()];
    let mut node_counts = vec![tree.node_count()];
    let mut res = T::one() / T::zero();
    let mut k = 1;
    while res > params.tol && k <= params.k_max {
        let boxes = statistical_refine(&tree, dynamics, params.rho, params.n_start)?;
        let old = tree.optimal_path()?;
        let finer = grid.refined()?;
        let protected = old
            .values
            .iter()
            .map(|&u| finer.index_of(u).ok_or_else(|| Error::Numerical("refined grid lost a control".into())))
            .collect::<Result<Vec<_>>>()?;
        grid = finer;
        let opts = BuildOptions {
            boxes: Some(boxes),
            protected: Some(protected),
            ..opts.clone()
        };
        let mut next = Tree::build(dynamics, root.clone(), &grid, t0, dt, steps, &opts, &mut |_, _| Ok(()))?;
        next.backward(dynamics)?;
        let v = next.root_value()?;
        res = (history.last().copied().expect("first tree") - v).abs();
        history.push(v);
        control_counts.push(grid.len());
        node_counts.push(next.node_count());
        tree = next;
        k += 1;
    }
    let stop = if res <= params.tol { StopReason::Residual } else { StopReason::MaxIterations };
    Ok(StatisticalOutcome {
        tree,
        history,
        control_counts,
        node_counts,
        stop,
    })
}

/// Sum-based tree of a bilinear model with two controls.
pub fn bilinear_expand<T, D>(dynamics: &D, root: D::State, grid: &ControlGrid<T>, t0: T, dt: T, steps: usize) -> Result<Tree<T, D::State>>
where
    T: Scalar,
    D: NodeDynamics<T>,
{
    if grid.len() != 2 {
        return Err(Error::Argument(format!("bilinear expansion takes 2 controls, got {}", grid.len())));
    }
    Tree::build(dynamics, root, grid, t0, dt, steps, &BuildOptions::with_rule(PruningRule::BilinearSumBased), &mut |_, _| Ok(()))
}
