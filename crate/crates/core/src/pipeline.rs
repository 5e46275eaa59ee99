//! Offline/online drivers behind the command-line tool. Runs in `f64`.
//!
//! A [`RunConfig`] fully determines a run. Drivers take a [`RunSummary`] by
//! reference and fill it as they go, so a caller can still write it out when
//! a driver returns an error.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, ErrorBudget, StateBoundReport, ValueBoundReport};
use crate::dynamics::{Fields, FullOrderStepper, IntegratorConfig, SemilinearModel};
use crate::problems::{CostSpec, FullNodes, LowRankNodes, LowRankState, ProblemPreset, ProblemSpec, ReducedNodes, System, VanDerPol};
use crate::reduction::{vector_pod, BasisBundle, ComponentFactors, ComponentReduction, HoDeim, HoPodBasis, NonlinearTreatment, ReducedModel};
use crate::tensor::{DenseTensor, DEFAULT_ORACLE_CAP};
use crate::tree::{
    monotone_cardinality, statistical_loop, sum_based_cardinality, BuildOptions, ControlGrid, LevelStats, NodeDynamics,
    PruningRule, StatisticalParams, StopReason, Tree,
};
use crate::{Error, Result};

/// Tree pruning as configured.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PruningConfig {
    #[default]
    None,
    Geometric {
        eps: f64,
    },
    Monotone,
    SumBased,
    Statistical {
        rho: f64,
        n_start: usize,
        tol: f64,
        k_max: usize,
    },
}

impl PruningConfig {
    fn rule(&self) -> PruningRule<f64> {
        match *self {
            Self::None | Self::Statistical { .. } => PruningRule::None,
            Self::Geometric { eps } => PruningRule::Geometric { eps },
            Self::Monotone => PruningRule::Monotone,
            Self::SumBased => PruningRule::BilinearSumBased,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineConfig {
    /// Coarse step `Δt̂`; the preset step when absent.
    pub dt: Option<f64>,
    /// `Û`; the two ends of the control box when absent.
    pub controls: Option<Vec<f64>>,
    pub tau_snap: Option<f64>,
    pub tau_trunc: Option<f64>,
    pub kappa: Option<usize>,
    /// Sum-based for bilinear models, none otherwise, when absent.
    pub pruning: Option<PruningConfig>,
    /// Exact for nonlinearities linear in the state, HO-DEIM otherwise,
    /// when absent.
    pub treatment: Option<NonlinearTreatment>,
    pub node_cap: Option<usize>,
    pub storage_cap: Option<usize>,
    /// Also report the dimension of a vector POD of the included snapshots.
    pub vector_pod: bool,
}

/// Default live-storage cap of the online trees, in scalars (1.6 GB).
pub const DEFAULT_STORAGE_CAP: usize = 200_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    pub dt: Option<f64>,
    /// Number of equispaced controls in the control box.
    pub controls: usize,
    pub pruning: PruningConfig,
    pub node_cap: Option<usize>,
    pub storage_cap: Option<usize>,
    /// Replay the optimal controls in the full-order model.
    pub compare_full: bool,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            dt: None,
            controls: 2,
            pruning: PruningConfig::None,
            node_cap: None,
            storage_cap: Some(DEFAULT_STORAGE_CAP),
            compare_full: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub verify: bool,
    pub oracle_cap: usize,
    /// Largest total grid dimension for which full-order trees are built.
    pub dim_cap: usize,
    /// Steps of the value-gap refinement study; empty skips it.
    pub dt_list: Vec<f64>,
    /// Pruning used by both trees in the refinement study.
    pub pruning: PruningConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            verify: false,
            oracle_cap: DEFAULT_ORACLE_CAP,
            dim_cap: 10_000,
            dt_list: Vec::new(),
            pruning: PruningConfig::None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sweep {
    /// Monotone trees for every `1 ≤ M ≤ max_m`, `1 ≤ N ≤ max_n`.
    #[default]
    Monotone,
    /// Sum-based trees with two controls for `1 ≤ N ≤ max_n`.
    SumBased,
    Geometric {
        eps: Vec<f64>,
    },
    Controls {
        counts: Vec<usize>,
    },
    /// The statistical loop with the online pruning parameters.
    Statistical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub sweep: Sweep,
    pub max_m: usize,
    pub max_n: usize,
    /// Sweeps on grid problems use the reduced model instead of the full one.
    pub reduced: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            sweep: Sweep::Monotone,
            max_m: 6,
            max_n: 6,
            reduced: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Controls to replay; the online optimum when absent.
    pub controls: Option<Vec<f64>>,
    /// Keep every `stride`-th lifted state (0 keeps none).
    pub stride: usize,
}

/// Everything that determines a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemPreset,
    #[serde(default)]
    pub offline: OfflineConfig,
    #[serde(default)]
    pub online: OnlineConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    /// Seed of randomized checks; the drivers themselves are deterministic.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn for_preset(name: &str) -> Result<Self> {
        Ok(Self {
            problem: ProblemPreset::named(name)?,
            offline: OfflineConfig::default(),
            online: OnlineConfig::default(),
            analysis: AnalysisConfig::default(),
            study: StudyConfig::default(),
            trajectory: TrajectoryConfig::default(),
            seed: 0,
        })
    }

    /// Sets a dotted key such as `offline.kappa` or `problem.n`. Values are
    /// parsed as JSON, falling back to a plain string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut doc = serde_json::to_value(&*self)?;
        let parts: Vec<&str> = key.split('.').collect();
        let (last, path) = parts.split_last().expect("split yields one part");
        let mut node = &mut doc;
        for p in path {
            node = node
                .get_mut(*p)
                .filter(|v| v.is_object())
                .ok_or_else(|| Error::Config(format!("unknown config section `{p}` in `{key}`")))?;
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` does not name a config entry")))?;
        if !obj.contains_key(*last) || *last == "name" && path == ["problem"] {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        obj.insert(last.to_string(), parsed);
        *self = serde_json::from_value(doc).map_err(|e| Error::Config(format!("bad value for `{key}`: {e}")))?;
        Ok(())
    }

    pub fn offline_dt(&self) -> f64 {
        self.offline.dt.unwrap_or_else(|| self.problem.dt())
    }

    pub fn online_dt(&self) -> f64 {
        self.online.dt.unwrap_or_else(|| self.problem.dt())
    }

    pub fn tau_trunc(&self) -> f64 {
        self.offline.tau_trunc.unwrap_or(match self.problem {
            ProblemPreset::AllenCahn(_) => 1e-3,
            ProblemPreset::Burgers3d(_) => 1e-2,
            _ => 1e-4,
        })
    }

    pub fn tau_snap(&self) -> f64 {
        self.offline.tau_snap.unwrap_or_else(|| self.tau_trunc())
    }

    pub fn kappa(&self) -> usize {
        self.offline.kappa.unwrap_or(20)
    }

    pub fn offline_controls(&self) -> Vec<f64> {
        let mut u = self.offline.controls.clone().unwrap_or_else(|| self.problem.control_box().to_vec());
        u.sort_by(f64::total_cmp);
        u.dedup();
        u
    }

    /// Checks `Δt ≤ Δt̂`, `Û ⊂ Ũ` and the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let (dt_hat, dt) = (self.offline_dt(), self.online_dt());
        if !(dt > 0.0 && dt_hat > 0.0) {
            return Err(Error::Config("time steps must be positive".into()));
        }
        if dt > dt_hat * (1.0 + 1e-12) {
            return Err(Error::Config(format!("online dt {dt} exceeds offline dt {dt_hat}")));
        }
        let [a, b] = self.problem.control_box();
        if self.online.controls < 2 {
            return Err(Error::Config("online control set needs at least 2 controls".into()));
        }
        let online = ControlGrid::uniform(a, b, self.online.controls)?;
        let offline = self.offline_controls();
        if offline.is_empty() {
            return Err(Error::Config("offline control set is empty".into()));
        }
        for &u in &offline {
            if online.index_of(u).is_none() {
                return Err(Error::Config(format!(
                    "offline control {u} is not in the online set of {} controls",
                    self.online.controls
                )));
            }
        }
        if !(self.tau_trunc() > 0.0 && self.tau_trunc() < 1.0) || self.tau_snap() < 0.0 {
            return Err(Error::Config("need 0 < tau_trunc < 1 and tau_snap >= 0".into()));
        }
        if self.kappa() == 0 {
            return Err(Error::Config("kappa must be positive".into()));
        }
        if let PruningConfig::Statistical { rho, n_start, .. } = self.online.pruning {
            if !(rho > 0.0 && rho <= 1.0) || n_start == 0 {
                return Err(Error::Config("statistical pruning needs 0 < rho <= 1 and n_start >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Run artifacts collected while a driver runs. Wall-clock timings are
/// deliberately not part of it so that reruns produce identical files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub preset: String,
    pub partial: bool,
    pub error: Option<String>,
    pub state_dims: Vec<Vec<usize>>,
    pub deim_dims: Vec<Vec<usize>>,
    pub vector_pod_dims: Vec<usize>,
    pub treatment: Option<NonlinearTreatment>,
    pub snapshots: usize,
    pub offline_nodes: usize,
    pub offline_levels: Vec<LevelStats>,
    pub peak_storage: usize,
    pub online_nodes: usize,
    pub online_levels: Vec<LevelStats>,
    pub v0: Option<f64>,
    pub v0_history: Vec<f64>,
    pub control_counts: Vec<usize>,
    pub stop: Option<StopReason>,
    pub controls: Vec<f64>,
    pub cost_reduced: Option<f64>,
    pub cost_full: Option<f64>,
    pub cost_gap: Option<f64>,
    pub bound_reports: Vec<String>,
}

impl RunSummary {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            preset: cfg.problem.name().to_string(),
            ..Self::default()
        }
    }
}

fn steps_for(t_final: f64, dt: f64) -> Result<usize> {
    IntegratorConfig::new(0.0, t_final, dt).and_then(|c| c.steps()).map_err(|e| Error::Config(e.to_string()))
}

fn pde(spec: &ProblemSpec<f64>) -> Result<(&SemilinearModel<f64>, &Fields<f64>)> {
    match &spec.system {
        System::Pde { model, y0 } => Ok((model, y0)),
        System::Ode { .. } => Err(Error::Config(format!("`{}` has no grid; use `online` or `study`", spec.preset.name()))),
    }
}

fn default_treatment(model: &SemilinearModel<f64>, controls: &[f64]) -> NonlinearTreatment {
    if controls.iter().all(|&u| model.nonlinear().linear_factor(u, 0.0).is_some()) {
        NonlinearTreatment::Exact
    } else {
        NonlinearTreatment::Deim
    }
}

/// Bases produced by the offline phase.
#[derive(Clone, Debug)]
pub struct Offline {
    pub comps: Vec<ComponentReduction<f64>>,
    pub treatment: NonlinearTreatment,
    pub bundle: BasisBundle<f64>,
}

impl Offline {
    /// Rebuilds the reductions stored in a basis file.
    pub fn from_bundle(bundle: BasisBundle<f64>) -> Result<Self> {
        let treatment: NonlinearTreatment = serde_json::from_value(bundle.meta.get("treatment").cloned().unwrap_or_default())
            .map_err(|e| Error::Format(format!("basis file has no valid treatment: {e}")))?;
        let comps = bundle.components.iter().map(|c| c.to_reduction()).collect::<Result<Vec<_>>>()?;
        Ok(Self { comps, treatment, bundle })
    }

    pub fn reduced_model(&self, model: &SemilinearModel<f64>) -> Result<ReducedModel<f64>> {
        ReducedModel::new(model.clone(), self.comps.clone(), self.treatment)
    }
}

/// Coarse tree with low-rank nodes, snapshot harvesting and basis
/// finalization.
pub fn run_offline(cfg: &RunConfig, summary: &mut RunSummary) -> Result<Offline> {
    cfg.validate()?;
    let spec = cfg.problem.build::<f64>()?;
    let (model, y0) = pde(&spec)?;
    let dt = cfg.offline_dt();
    let steps = steps_for(cfg.problem.t_final(), dt)?;
    let controls = cfg.offline_controls();
    let [lo, hi] = cfg.problem.control_box();
    let grid = ControlGrid::new(controls.clone(), lo, hi)?;
    let treatment = cfg.offline.treatment.unwrap_or_else(|| default_treatment(model, &controls));
    let kappa = cfg.kappa();
    let dims = model.dims();
    let ncomp = model.components();
    summary.treatment = Some(treatment);

    let nodes = LowRankNodes {
        stepper: FullOrderStepper::new(model.clone(), dt)?,
        cost: spec.cost,
        kappa,
    };
    let rule = match &cfg.offline.pruning {
        Some(p) => p.rule(),
        None if nodes.bilinear() => PruningRule::BilinearSumBased,
        None => PruningRule::None,
    };
    let opts = BuildOptions {
        rule,
        keep_states: false,
        node_cap: cfg.offline.node_cap,
        storage_cap: cfg.offline.storage_cap,
        ..BuildOptions::default()
    };
    let (tau_trunc, tau_snap) = (cfg.tau_trunc(), cfg.tau_snap());
    let mut state_bases = (0..ncomp)
        .map(|_| HoPodBasis::new(&dims, kappa, tau_trunc, tau_snap).map(|b| if cfg.offline.vector_pod { b.with_log() } else { b }))
        .collect::<Result<Vec<_>>>()?;
    let mut f_bases = match treatment {
        NonlinearTreatment::Deim => Some(
            (0..ncomp)
                .map(|_| HoPodBasis::new(&dims, kappa, tau_trunc, 0.0))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };
    let mut snapshots = 0usize;
    let mut levels_seen = 0usize;
    let t0 = spec.t0;
    let mut observer = |n: usize, states: &[LowRankState<f64>]| -> Result<()> {
        levels_seen = n + 1;
        let t = t0 + dt * n as f64;
        for s in states {
            let full = s.decompress()?;
            let mut included = false;
            for (c, basis) in state_bases.iter_mut().enumerate() {
                included |= basis.consider_with(&full[c], Some(&s.comps[c].tucker))?;
            }
            if included {
                snapshots += 1;
                if let Some(fb) = f_bases.as_mut() {
                    for &u in &controls {
                        let f = model.eval_nonlinear(&full, u, t)?;
                        for (c, basis) in fb.iter_mut().enumerate() {
                            basis.update(&f[c])?;
                        }
                    }
                }
            }
        }
        Ok(())
    };
    let root = nodes.root(y0)?;
    let built = Tree::build(&nodes, root, &grid, t0, dt, steps, &opts, &mut observer);
    summary.snapshots = snapshots;
    let tree = match built {
        Ok(t) => t,
        Err(e) => {
            summary.offline_levels = Vec::new();
            if let Error::ResourceCap { level, .. } = &e {
                summary.error = Some(format!("offline tree stopped at level {level} of {steps} ({levels_seen} levels harvested)"));
            }
            return Err(e);
        }
    };
    summary.offline_nodes = tree.node_count();
    summary.offline_levels = tree.stats.clone();
    summary.peak_storage = tree.peak_storage;

    let mut comps = Vec::with_capacity(ncomp);
    let mut factors = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        state_bases[c].finalize()?;
        let deim = match f_bases.as_mut() {
            Some(fb) => {
                fb[c].finalize()?;
                Some(HoDeim::new(fb[c].factors()?.to_vec())?)
            }
            None => None,
        };
        let nl = match (&f_bases, &deim) {
            (Some(fb), Some(d)) => Some((&fb[c], d)),
            _ => None,
        };
        factors.push(ComponentFactors::from_bases(&state_bases[c], nl)?);
        comps.push(ComponentReduction {
            state: HoPodBasis::from_factors(state_bases[c].factors()?.to_vec())?,
            deim,
        });
    }
    if cfg.offline.vector_pod {
        summary.vector_pod_dims = state_bases
            .iter()
            .map(|b| vector_pod(b.snapshot_log().unwrap_or_default(), tau_trunc).map(|v| v.ncols()))
            .collect::<Result<Vec<_>>>()?;
    }
    summary.state_dims = comps.iter().map(|c| c.state.ranks()).collect();
    summary.deim_dims = comps.iter().filter_map(|c| c.deim.as_ref().map(|d| d.sizes())).collect();
    let meta = serde_json::json!({
        "preset": cfg.problem,
        "treatment": treatment,
        "kappa": kappa,
        "tau_trunc": tau_trunc,
        "tau_snap": tau_snap,
        "dt": dt,
        "controls": controls,
        "snapshots": snapshots,
    });
    Ok(Offline {
        comps,
        treatment,
        bundle: BasisBundle { components: factors, meta },
    })
}

/// One row of an optimal trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub k: usize,
    pub t: f64,
    /// Control applied on `[t_k, t_{k+1})`; absent on the last row.
    pub u: Option<f64>,
    /// `‖y^k‖` of the lifted reduced state (or of the ODE state).
    pub norm: f64,
    /// Cost accumulated up to `t_k` (terminal cost added on the last row).
    pub cost: f64,
    pub norm_full: Option<f64>,
    pub cost_full: Option<f64>,
}

/// Result of the online phase.
#[derive(Clone, Debug)]
pub struct Online {
    pub v0: f64,
    pub controls: Vec<f64>,
    pub levels: Vec<LevelStats>,
    pub rows: Vec<TrajectoryRow>,
    /// Lifted reduced states along the optimal path (grid problems only).
    pub lifted: Vec<Fields<f64>>,
}

fn norm_of(y: &Fields<f64>) -> f64 {
    y.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt()
}

/// Running sums `Σ_{j<k} Δt L(y^j, u^j)` with `g` added at the end.
fn cumulative(state: &[f64], control: &[f64], terminal: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(state.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..control.len() {
        acc += dt * (state[k] + control[k]);
        out.push(acc);
    }
    if let Some(last) = out.last_mut() {
        *last += terminal;
    }
    out
}

struct Solved {
    v0: f64,
    controls: Vec<f64>,
    levels: Vec<LevelStats>,
    nodes: usize,
    history: Vec<f64>,
    counts: Vec<usize>,
    stop: Option<StopReason>,
}

/// Builds and evaluates a tree under `pruning` and returns the optimal
/// states alongside.
#[allow(clippy::too_many_arguments)]
fn solve_tree<D: NodeDynamics<f64>>(
    dynamics: &D,
    root: D::State,
    bounds: (f64, f64),
    m: usize,
    dt: f64,
    steps: usize,
    pruning: &PruningConfig,
    node_cap: Option<usize>,
    storage_cap: Option<usize>,
) -> Result<(Solved, Vec<D::State>)> {
    let base = BuildOptions {
        rule: pruning.rule(),
        node_cap,
        storage_cap,
        ..BuildOptions::default()
    };
    let (tree, history, counts, stop) = match *pruning {
        PruningConfig::Statistical { rho, n_start, tol, k_max } => {
            let params = StatisticalParams { rho, n_start, tol, k_max, m0: m };
            let out = statistical_loop(dynamics, root.clone(), bounds, 0.0, dt, steps, &params, &base)?;
            (out.tree, out.history, out.control_counts, Some(out.stop))
        }
        _ => {
            let grid = ControlGrid::uniform(bounds.0, bounds.1, m)?;
            let mut tree = Tree::build(dynamics, root.clone(), &grid, 0.0, dt, steps, &base, &mut |_, _| Ok(()))?;
            tree.backward(dynamics)?;
            let v = tree.root_value()?;
            (tree, vec![v], vec![m], None)
        }
    };
    let path = tree.optimal_path()?;
    let states = tree.path_states(dynamics, &root)?;
    Ok((
        Solved {
            v0: tree.root_value()?,
            controls: path.values.clone(),
            levels: tree.stats.clone(),
            nodes: tree.node_count(),
            history,
            counts,
            stop,
        },
        states,
    ))
}

fn record(summary: &mut RunSummary, s: &Solved) {
    summary.online_nodes = s.nodes;
    summary.online_levels = s.levels.clone();
    summary.v0 = Some(s.v0);
    summary.v0_history = s.history.clone();
    summary.control_counts = s.counts.clone();
    summary.stop = s.stop;
    summary.controls = s.controls.clone();
}

fn ode_online(cfg: &RunConfig, vdp: &VanDerPol<f64>, x0: &[f64], summary: &mut RunSummary) -> Result<Online> {
    let dt = cfg.online_dt();
    let vdp = VanDerPol { dt, ..*vdp };
    let steps = steps_for(cfg.problem.t_final(), dt)?;
    let [a, b] = cfg.problem.control_box();
    let on = &cfg.online;
    let (s, states) = solve_tree(&vdp, x0.to_vec(), (a, b), on.controls, dt, steps, &on.pruning, on.node_cap, on.storage_cap)?;
    record(summary, &s);
    let sc: Vec<f64> = states.iter().map(|y| vdp.state_cost(y, 0.0)).collect();
    let cc: Vec<f64> = s.controls.iter().map(|&u| vdp.control_cost(u)).collect();
    let cost = cumulative(&sc, &cc, vdp.terminal_cost(states.last().expect("root")), dt);
    summary.cost_reduced = cost.last().copied();
    let rows = states
        .iter()
        .enumerate()
        .map(|(k, y)| TrajectoryRow {
            k,
            t: dt * k as f64,
            u: s.controls.get(k).copied(),
            norm: (y[0] * y[0] + y[1] * y[1]).sqrt(),
            cost: cost[k],
            norm_full: None,
            cost_full: None,
        })
        .collect();
    Ok(Online {
        v0: s.v0,
        controls: s.controls,
        levels: s.levels,
        rows,
        lifted: Vec::new(),
    })
}

fn cost_series(cost: &CostSpec<f64>, states: &[Fields<f64>], controls: &[f64], dt: f64) -> Vec<f64> {
    let sc: Vec<f64> = states.iter().map(|y| cost.state_cost(y)).collect();
    let cc: Vec<f64> = controls.iter().map(|&u| cost.control_cost(u)).collect();
    cumulative(&sc, &cc, cost.terminal_cost(states.last().expect("root")), dt)
}

/// Reduced tree, value recursion and optimal trajectory. Van der Pol runs
/// directly on the ODE and needs no bases.
pub fn run_online(cfg: &RunConfig, offline: Option<&Offline>, summary: &mut RunSummary) -> Result<Online> {
    cfg.validate()?;
    let spec = cfg.problem.build::<f64>()?;
    if let System::Ode { dynamics, x0 } = &spec.system {
        return ode_online(cfg, dynamics, x0, summary);
    }
    let (model, y0) = pde(&spec)?;
    let offline = offline.ok_or_else(|| Error::Config("the online phase needs a basis file".into()))?;
    let dt = cfg.online_dt();
    let steps = steps_for(cfg.problem.t_final(), dt)?;
    let red = Arc::new(offline.reduced_model(model)?);
    summary.state_dims = red.reduced_dims();
    summary.treatment = Some(red.treatment());
    let nodes = ReducedNodes {
        stepper: red.stepper(dt)?,
        cost: spec.cost,
    };
    let root = red.project(y0)?;
    let [a, b] = cfg.problem.control_box();
    let on = &cfg.online;
    let (s, states) = solve_tree(&nodes, root, (a, b), on.controls, dt, steps, &on.pruning, on.node_cap, on.storage_cap)?;
    record(summary, &s);
    let lifted = states.iter().map(|y| red.lift(y)).collect::<Result<Vec<_>>>()?;
    let cost = cost_series(&spec.cost, &lifted, &s.controls, dt);
    summary.cost_reduced = cost.last().copied();
    let full = if on.compare_full {
        let traj = FullOrderStepper::new(model.clone(), dt)?.trajectory(y0, &s.controls, spec.t0)?;
        let c = cost_series(&spec.cost, &traj, &s.controls, dt);
        let (jr, jf) = (cost.last().copied().unwrap_or(0.0), c.last().copied().unwrap_or(0.0));
        summary.cost_full = Some(jf);
        summary.cost_gap = Some(if jf == 0.0 { (jr - jf).abs() } else { (jr - jf).abs() / jf.abs() });
        Some((traj, c))
    } else {
        None
    };
    let rows = lifted
        .iter()
        .enumerate()
        .map(|(k, y)| TrajectoryRow {
            k,
            t: spec.t0 + dt * k as f64,
            u: s.controls.get(k).copied(),
            norm: norm_of(y),
            cost: cost[k],
            norm_full: full.as_ref().map(|(tr, _)| norm_of(&tr[k])),
            cost_full: full.as_ref().map(|(_, c)| c[k]),
        })
        .collect();
    Ok(Online {
        v0: s.v0,
        controls: s.controls,
        levels: s.levels,
        rows,
        lifted,
    })
}

/// Full and reduced trajectories under a fixed control sequence.
#[derive(Clone, Debug)]
pub struct TrajectoryOutput {
    pub rows: Vec<TrajectoryRow>,
    /// `(k, lifted reduced state, full state)` every `stride` steps.
    pub snapshots: Vec<(usize, Fields<f64>, Fields<f64>)>,
}

pub fn run_trajectory(cfg: &RunConfig, offline: &Offline, controls: &[f64], summary: &mut RunSummary) -> Result<TrajectoryOutput> {
    cfg.validate()?;
    let spec = cfg.problem.build::<f64>()?;
    let (model, y0) = pde(&spec)?;
    let dt = cfg.online_dt();
    let steps = steps_for(cfg.problem.t_final(), dt)?;
    if controls.len() != steps {
        return Err(Error::Config(format!("need {steps} controls, got {}", controls.len())));
    }
    let [a, b] = cfg.problem.control_box();
    if controls.iter().any(|&u| u < a || u > b) {
        return Err(Error::Config("controls leave the control box".into()));
    }
    let red = Arc::new(offline.reduced_model(model)?);
    let reduced = red.stepper(dt)?.trajectory(&red.project(y0)?, controls, spec.t0)?;
    let lifted = reduced.iter().map(|y| red.lift(y)).collect::<Result<Vec<_>>>()?;
    let full = FullOrderStepper::new(model.clone(), dt)?.trajectory(y0, controls, spec.t0)?;
    let cr = cost_series(&spec.cost, &lifted, controls, dt);
    let cf = cost_series(&spec.cost, &full, controls, dt);
    summary.controls = controls.to_vec();
    summary.state_dims = red.reduced_dims();
    summary.cost_reduced = cr.last().copied();
    summary.cost_full = cf.last().copied();
    if let (Some(r), Some(f)) = (summary.cost_reduced, summary.cost_full) {
        summary.cost_gap = Some(if f == 0.0 { (r - f).abs() } else { (r - f).abs() / f.abs() });
    }
    let rows = (0..=steps)
        .map(|k| TrajectoryRow {
            k,
            t: spec.t0 + dt * k as f64,
            u: controls.get(k).copied(),
            norm: norm_of(&lifted[k]),
            cost: cr[k],
            norm_full: Some(norm_of(&full[k])),
            cost_full: Some(cf[k]),
        })
        .collect();
    let stride = cfg.trajectory.stride;
    let snapshots = if stride == 0 {
        Vec::new()
    } else {
        (0..=steps).step_by(stride).map(|k| (k, lifted[k].clone(), full[k].clone())).collect()
    };
    Ok(TrajectoryOutput { rows, snapshots })
}

/// One tree of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub sweep: String,
    /// Number of controls.
    pub m: usize,
    /// Number of steps.
    pub n: usize,
    /// `ε` or `ρ` where meaningful.
    pub param: Option<f64>,
    pub nodes: usize,
    /// Closed-form count or bound where one exists.
    pub expected: Option<u128>,
    pub v0: f64,
    /// Largest relative distance between states with equal control-index
    /// sums reached by different orderings (sum-based sweep).
    pub coincidence: Option<f64>,
}

enum StudyNodes {
    Ode(VanDerPol<f64>, Vec<f64>),
    Full(FullNodes<f64>, Fields<f64>),
    Reduced(ReducedNodes<f64>, Fields<f64>),
}

fn study_nodes(cfg: &RunConfig, dt: f64, offline: Option<&Offline>) -> Result<StudyNodes> {
    let spec = cfg.problem.build::<f64>()?;
    Ok(match &spec.system {
        System::Ode { dynamics, x0 } => StudyNodes::Ode(VanDerPol { dt, ..*dynamics }, x0.clone()),
        System::Pde { model, y0 } => {
            if cfg.study.reduced {
                let off = offline.ok_or_else(|| Error::Config("a reduced study needs a basis file".into()))?;
                let red = Arc::new(off.reduced_model(model)?);
                let root = red.project(y0)?;
                StudyNodes::Reduced(
                    ReducedNodes {
                        stepper: red.stepper(dt)?,
                        cost: spec.cost,
                    },
                    root,
                )
            } else {
                let dim: usize = model.dims().iter().product::<usize>() * model.components();
                if dim > cfg.analysis.dim_cap {
                    return Err(Error::Config(format!(
                        "full-order study at dimension {dim} exceeds analysis.dim_cap {}; set study.reduced",
                        cfg.analysis.dim_cap
                    )));
                }
                StudyNodes::Full(
                    FullNodes {
                        stepper: FullOrderStepper::new(model.clone(), dt)?,
                        cost: spec.cost,
                    },
                    y0.clone(),
                )
            }
        }
    })
}

fn sweep_one<D: NodeDynamics<f64>>(
    d: &D,
    root: &D::State,
    cfg: &RunConfig,
    m: usize,
    steps: usize,
    rule: PruningRule<f64>,
) -> Result<Tree<f64, D::State>> {
    let [a, b] = cfg.problem.control_box();
    let grid = ControlGrid::uniform(a, b, m)?;
    let opts = BuildOptions {
        rule,
        node_cap: cfg.online.node_cap,
        storage_cap: cfg.online.storage_cap,
        ..BuildOptions::default()
    };
    let mut tree = Tree::build(d, root.clone(), &grid, 0.0, d_dt(cfg), steps, &opts, &mut |_, _| Ok(()))?;
    tree.backward(d)?;
    Ok(tree)
}

fn d_dt(cfg: &RunConfig) -> f64 {
    cfg.online_dt()
}

/// Relative distance between the last-level states reached by
/// `[u_1]*s + [u_0]*(n−s)` and `[u_0]*(n−s) + [u_1]*s`, maximized over `s`.
fn sum_coincidence<D: NodeDynamics<f64>>(d: &D, root: &D::State, cfg: &RunConfig, steps: usize) -> Result<f64> {
    let [a, b] = cfg.problem.control_box();
    let replay = |seq: &[f64]| -> Result<Vec<f64>> {
        let mut y = root.clone();
        for (k, &u) in seq.iter().enumerate() {
            y = d.step(&y, u, d_dt(cfg) * k as f64)?;
        }
        Ok(d.coords(&y))
    };
    let mut worst = 0.0f64;
    for s in 0..=steps {
        let mut first: Vec<f64> = vec![b; s];
        first.extend(vec![a; steps - s]);
        let mut second: Vec<f64> = vec![a; steps - s];
        second.extend(vec![b; s]);
        let (x, y) = (replay(&first)?, replay(&second)?);
        let diff = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let scale = x.iter().map(|p| p * p).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

fn run_sweep<D: NodeDynamics<f64>>(d: &D, root: &D::State, cfg: &RunConfig) -> Result<Vec<StudyRow>> {
    let steps = steps_for(cfg.problem.t_final(), cfg.online_dt())?;
    let st = &cfg.study;
    let mut rows = Vec::new();
    let row = |sweep: &str, m: usize, n: usize, param: Option<f64>, tree: &Tree<f64, D::State>, expected: Option<u128>| -> Result<StudyRow> {
        Ok(StudyRow {
            sweep: sweep.to_string(),
            m,
            n,
            param,
            nodes: tree.node_count(),
            expected,
            v0: tree.root_value()?,
            coincidence: None,
        })
    };
    match &st.sweep {
        Sweep::Monotone => {
            for m in 1..=st.max_m {
                for n in 1..=st.max_n {
                    let tree = sweep_one(d, root, cfg, m, n, PruningRule::Monotone)?;
                    rows.push(row("monotone", m, n, None, &tree, Some(monotone_cardinality(m, n)?))?);
                }
            }
        }
        Sweep::SumBased => {
            for n in 1..=st.max_n {
                let tree = sweep_one(d, root, cfg, 2, n, PruningRule::BilinearSumBased)?;
                let mut r = row("sum-based", 2, n, None, &tree, Some(sum_based_cardinality(2, n) as u128))?;
                if n == st.max_n {
                    r.coincidence = Some(sum_coincidence(d, root, cfg, n)?);
                }
                rows.push(r);
            }
        }
        Sweep::Geometric { eps } => {
            for &e in eps {
                let tree = sweep_one(d, root, cfg, cfg.online.controls, steps, PruningRule::Geometric { eps: e })?;
                rows.push(row("geometric", cfg.online.controls, steps, Some(e), &tree, None)?);
            }
        }
        Sweep::Controls { counts } => {
            for &m in counts {
                let tree = sweep_one(d, root, cfg, m, steps, cfg.online.pruning.rule())?;
                rows.push(row("controls", m, steps, None, &tree, None)?);
            }
        }
        Sweep::Statistical => {
            let PruningConfig::Statistical { rho, n_start, tol, k_max } = cfg.online.pruning else {
                return Err(Error::Config("the statistical sweep reads online.pruning of kind `statistical`".into()));
            };
            let [a, b] = cfg.problem.control_box();
            let params = StatisticalParams {
                rho,
                n_start,
                tol,
                k_max,
                m0: cfg.online.controls,
            };
            let base = BuildOptions {
                node_cap: cfg.online.node_cap,
                storage_cap: cfg.online.storage_cap,
                ..BuildOptions::default()
            };
            let out = statistical_loop(d, root.clone(), (a, b), 0.0, d_dt(cfg), steps, &params, &base)?;
            for (i, &v) in out.history.iter().enumerate() {
                rows.push(StudyRow {
                    sweep: "statistical".into(),
                    m: out.control_counts[i],
                    n: steps,
                    param: Some(rho),
                    nodes: out.node_counts[i],
                    expected: None,
                    v0: v,
                    coincidence: None,
                });
            }
        }
    }
    Ok(rows)
}

/// Sweeps tree cardinality and `V⁰` over a pruning parameter.
pub fn run_study(cfg: &RunConfig, offline: Option<&Offline>, summary: &mut RunSummary) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    let rows = match study_nodes(cfg, cfg.online_dt(), offline)? {
        StudyNodes::Ode(d, r) => run_sweep(&d, &r, cfg)?,
        StudyNodes::Full(d, r) => run_sweep(&d, &r, cfg)?,
        StudyNodes::Reduced(d, r) => run_sweep(&d, &r, cfg)?,
    };
    if let Some(last) = rows.last() {
        summary.v0 = Some(last.v0);
    }
    summary.v0_history = rows.iter().filter(|r| r.sweep == "statistical").map(|r| r.v0).collect();
    summary.control_counts = rows.iter().filter(|r| r.sweep == "statistical").map(|r| r.m).collect();
    Ok(rows)
}

/// Outcome of the bound checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub budget: ErrorBudget,
    /// Control sequences of the offline grid that were checked.
    pub sequences: usize,
    pub state_passed: usize,
    /// Report of the sequence with the largest `lhs / rhs`.
    pub worst_state: StateBoundReport,
    pub value: ValueBoundReport,
    /// Value reports over `analysis.dt_list`.
    pub trend: Vec<ValueBoundReport>,
    /// Gaps of `trend` are nonincreasing as the step shrinks.
    pub trend_nonincreasing: Option<bool>,
    pub pass: bool,
}

/// `(E_y, E_f)` along one full-order trajectory.
fn residuals_along(red: &ReducedModel<f64>, states: &[Fields<f64>], controls: &[f64], dt: f64) -> Result<(f64, f64)> {
    let f = analysis::nonlinear_terms(red, states, controls, 0.0, dt)?;
    analysis::projection_residuals(red, states, &f)
}

/// Full and reduced trees with identical grid and step, and the full-order
/// optimal trajectory.
#[allow(clippy::too_many_arguments)]
fn value_pair(
    cfg: &RunConfig,
    model: &SemilinearModel<f64>,
    y0: &Fields<f64>,
    red: &Arc<ReducedModel<f64>>,
    cost: CostSpec<f64>,
    grid: &ControlGrid<f64>,
    dt: f64,
    pruning: &PruningConfig,
) -> Result<(f64, f64, Vec<Fields<f64>>, Vec<f64>)> {
    let steps = steps_for(cfg.problem.t_final(), dt)?;
    let opts = BuildOptions {
        rule: pruning.rule(),
        node_cap: cfg.online.node_cap,
        storage_cap: cfg.online.storage_cap,
        ..BuildOptions::default()
    };
    let full = FullNodes {
        stepper: FullOrderStepper::new(model.clone(), dt)?,
        cost,
    };
    let mut ft = Tree::build(&full, y0.clone(), grid, 0.0, dt, steps, &opts, &mut |_, _| Ok(()))?;
    ft.backward(&full)?;
    let fpath = ft.optimal_path()?;
    let fstates = ft.path_states(&full, y0)?;
    let rn = ReducedNodes {
        stepper: red.stepper(dt)?,
        cost,
    };
    let mut rt = Tree::build(&rn, red.project(y0)?, grid, 0.0, dt, steps, &opts, &mut |_, _| Ok(()))?;
    rt.backward(&rn)?;
    Ok((ft.root_value()?, rt.root_value()?, fstates, fpath.values))
}

/// State bound along every offline control sequence, value bound at the
/// offline step and the value-gap refinement study.
pub fn run_verify(cfg: &RunConfig, offline: &Offline, summary: &mut RunSummary) -> Result<VerifyReport> {
    cfg.validate()?;
    let spec = cfg.problem.build::<f64>()?;
    let (model, y0) = pde(&spec)?;
    let dim: usize = model.dims().iter().product::<usize>() * model.components();
    if dim > cfg.analysis.dim_cap {
        return Err(Error::Config(format!("verification at dimension {dim} exceeds analysis.dim_cap {}", cfg.analysis.dim_cap)));
    }
    let dt = cfg.offline_dt();
    let t_final = cfg.problem.t_final();
    let steps = steps_for(t_final, dt)?;
    let controls = cfg.offline_controls();
    let [lo, hi] = cfg.problem.control_box();
    let grid = ControlGrid::new(controls.clone(), lo, hi)?;
    let red = Arc::new(offline.reduced_model(model)?);

    let full = FullNodes {
        stepper: FullOrderStepper::new(model.clone(), dt)?,
        cost: spec.cost,
    };
    let rn = ReducedNodes {
        stepper: red.stepper(dt)?,
        cost: spec.cost,
    };
    let opts = BuildOptions::default();
    let mut ft = Tree::build(&full, y0.clone(), &grid, 0.0, dt, steps, &opts, &mut |_, _| Ok(()))?;
    let mut rt = Tree::build(&rn, red.project(y0)?, &grid, 0.0, dt, steps, &opts, &mut |_, _| Ok(()))?;
    if ft.stats.iter().chain(&rt.stats).any(|s| s.failed > 0) {
        return Err(Error::Numerical("a trajectory of the verification trees diverged".into()));
    }
    let all_full: Vec<Fields<f64>> = ft.levels.iter().flat_map(|l| l.states.clone().unwrap_or_default()).collect();
    let l_f = analysis::lipschitz_constant(&red, &controls, &all_full)?;
    let budget = analysis::compute_budget(&red, dt, t_final, l_f, cfg.analysis.oracle_cap)?;

    // per-node and per-edge pieces, accumulated along every root-to-leaf path
    let mut lhs_acc: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut ey_acc: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut ef_acc: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut energy_acc: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        let fl = &ft.levels[n];
        let fs = fl.states.as_ref().expect("states kept");
        let rs = rt.levels[n].states.as_ref().expect("states kept");
        let mut lhs = Vec::with_capacity(fs.len());
        let mut ey = Vec::with_capacity(fs.len());
        let mut ef = Vec::with_capacity(fs.len());
        let mut en = Vec::with_capacity(fs.len());
        for i in 0..fs.len() {
            let lifted = red.lift(&rs[i])?;
            let d: f64 = fs[i].iter().zip(&lifted).map(|(a, b)| a.sub(b).map(|x| x.norm_squared())).sum::<Result<f64>>()?;
            let (e_y, _) = analysis::projection_residuals(&red, std::slice::from_ref(&fs[i]), &[])?;
            let (mut l, mut y_, mut f_, mut e_) = (d, e_y, 0.0, norm_of(&fs[i]).powi(2));
            if n > 0 {
                let p = fl.parent[i];
                let u = grid.get(fl.control[i]);
                let parent = &ft.levels[n - 1].states.as_ref().expect("states kept")[p];
                let fv = model.eval_nonlinear(parent, u, dt * (n - 1) as f64)?;
                let (_, e_f) = analysis::projection_residuals(&red, &[], &[fv])?;
                l += lhs_acc[n - 1][p];
                y_ += ey_acc[n - 1][p];
                f_ = e_f + ef_acc[n - 1][p];
                e_ += energy_acc[n - 1][p];
            }
            lhs.push(l);
            ey.push(y_);
            ef.push(f_);
            en.push(e_);
        }
        lhs_acc.push(lhs);
        ey_acc.push(ey);
        ef_acc.push(ef);
        energy_acc.push(en);
    }
    let floor_scale = 64.0 * f64::EPSILON;
    let mut passed = 0usize;
    let mut worst: Option<StateBoundReport> = None;
    for i in 0..lhs_acc[steps].len() {
        let (lhs, e_y, e_f) = (lhs_acc[steps][i], ey_acc[steps][i], ef_acc[steps][i]);
        let rhs = budget.state_rhs(e_y, e_f);
        let floor = floor_scale * energy_acc[steps][i];
        let r = StateBoundReport {
            lhs,
            rhs,
            e_y,
            e_f,
            ct: budget.ct,
            ratio: if lhs == 0.0 { 0.0 } else { lhs / rhs },
            floor,
            pass: lhs <= rhs + floor,
        };
        if r.pass {
            passed += 1;
        }
        if worst.as_ref().is_none_or(|w| r.ratio > w.ratio || !r.pass && w.pass) {
            worst = Some(r);
        }
    }
    let sequences = lhs_acc[steps].len();
    let worst_state = worst.ok_or_else(|| Error::Structural("verification tree has no leaves".into()))?;

    ft.backward(&full)?;
    rt.backward(&rn)?;
    let fpath = ft.optimal_path()?;
    let fstates = ft.path_states(&full, y0)?;
    let (e_y, e_f) = residuals_along(&red, &fstates, &fpath.values, dt)?;
    let value = analysis::verify_value_bound(ft.root_value()?, rt.root_value()?, &budget, e_y, e_f);

    let mut trend = Vec::new();
    for &h in &cfg.analysis.dt_list {
        let b = analysis::compute_budget(&red, h, t_final, l_f, cfg.analysis.oracle_cap)?;
        let (vf, vr, states, ctrl) = value_pair(cfg, model, y0, &red, spec.cost, &grid, h, &cfg.analysis.pruning)?;
        let (e_y, e_f) = residuals_along(&red, &states, &ctrl, h)?;
        trend.push(analysis::verify_value_bound(vf, vr, &b, e_y, e_f));
    }
    let trend_nonincreasing = if trend.len() < 2 {
        None
    } else {
        let mut order: Vec<&ValueBoundReport> = trend.iter().collect();
        order.sort_by(|a, b| b.dt.total_cmp(&a.dt));
        // gaps at rounding level carry no trend
        let slack = |r: &ValueBoundReport| 1e3 * f64::EPSILON * r.v_full.abs().max(r.v_reduced.abs());
        Some(order.windows(2).all(|w| w[1].gap <= w[0].gap + slack(w[1])))
    };
    let pass = passed == sequences && value.pass && trend.iter().all(|r| r.pass) && trend_nonincreasing != Some(false);
    summary.state_dims = red.reduced_dims();
    summary.v0 = Some(value.v_reduced);
    Ok(VerifyReport {
        budget,
        sequences,
        state_passed: passed,
        worst_state,
        value,
        trend,
        trend_nonincreasing,
        pass,
    })
}

/// Flattened `(k, component, index, value)` rows of a field, for CSV export.
pub fn field_rows(k: usize, y: &Fields<f64>) -> Vec<(usize, usize, usize, f64)> {
    y.iter()
        .enumerate()
        .flat_map(|(c, t): (usize, &DenseTensor<f64>)| t.as_slice().iter().enumerate().map(move |(i, &v)| (k, c, i, v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str, n: usize) -> RunConfig {
        let mut cfg = RunConfig::for_preset(name).unwrap();
        if name != "vanderpol" {
            cfg.set("problem.n", &n.to_string()).unwrap();
        }
        cfg
    }

    #[test]
    fn overrides_and_validation() {
        let mut cfg = small("heat", 8);
        cfg.set("offline.kappa", "5").unwrap();
        cfg.set("online.pruning", r#"{"kind":"geometric","eps":0.01}"#).unwrap();
        assert_eq!(cfg.kappa(), 5);
        assert_eq!(cfg.online.pruning, PruningConfig::Geometric { eps: 0.01 });
        assert!(matches!(cfg.set("offline.bogus", "1"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("nope.kappa", "1"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("problem.name", "advdiff"), Err(Error::Config(_))));
        cfg.validate().unwrap();
        cfg.set("online.dt", "0.2").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.set("online.dt", "0.05").unwrap();
        cfg.set("offline.controls", "[-0.5]").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.set("online.controls", "3").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = small("allen-cahn", 11);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let minimal: RunConfig = serde_json::from_str(r#"{"problem":{"name":"vanderpol","omega":0.15,"t_final":1.4,"dt":0.2,"x0":[0.4,-0.3],"control":[0.0,1.0],"gamma":0.01}}"#).unwrap();
        assert_eq!(minimal.online.controls, 2);
    }

    #[test]
    fn zero_snapshot_tolerance_takes_every_node() {
        let mut cfg = small("heat", 6);
        cfg.set("problem.t_final", "0.3").unwrap();
        cfg.set("offline.tau_snap", "0").unwrap();
        cfg.set("offline.pruning", r#"{"kind":"none"}"#).unwrap();
        let mut s = RunSummary::new("offline", &cfg);
        let off = run_offline(&cfg, &mut s).unwrap();
        assert_eq!(s.offline_nodes, 15);
        // every node with a nonzero state is merged
        assert_eq!(s.snapshots, 15);
        assert_eq!(off.treatment, NonlinearTreatment::Exact);
    }

    #[test]
    fn identity_basis_online_matches_full_tree() {
        let mut cfg = small("heat", 5);
        cfg.set("problem.t_final", "0.4").unwrap();
        let spec = cfg.problem.build::<f64>().unwrap();
        let (model, y0) = pde(&spec).unwrap();
        let comps = vec![ComponentReduction {
            state: HoPodBasis::identity(&model.dims()).unwrap(),
            deim: None,
        }];
        let off = Offline {
            comps,
            treatment: NonlinearTreatment::Exact,
            bundle: BasisBundle {
                components: Vec::new(),
                meta: serde_json::Value::Null,
            },
        };
        let mut s = RunSummary::new("online", &cfg);
        let on = run_online(&cfg, Some(&off), &mut s).unwrap();
        let full = FullNodes {
            stepper: FullOrderStepper::new(model.clone(), 0.1).unwrap(),
            cost: spec.cost,
        };
        let grid = ControlGrid::uniform(-1.0, 0.0, 2).unwrap();
        let mut t = Tree::build(&full, y0.clone(), &grid, 0.0, 0.1, 4, &BuildOptions::default(), &mut |_, _| Ok(())).unwrap();
        t.backward(&full).unwrap();
        assert!((t.root_value().unwrap() - on.v0).abs() < 1e-13 * on.v0);
        assert!(s.cost_gap.unwrap() < 1e-12);
        assert!((on.rows.last().unwrap().cost - on.v0).abs() < 1e-12 * on.v0);
    }

    #[test]
    fn van_der_pol_online_needs_no_basis() {
        let mut cfg = small("vanderpol", 0);
        cfg.set("online.pruning", r#"{"kind":"statistical","rho":0.3,"n_start":1,"tol":1e-12,"k_max":3}"#).unwrap();
        let mut s = RunSummary::new("online", &cfg);
        let on = run_online(&cfg, None, &mut s).unwrap();
        assert_eq!(s.control_counts, vec![2, 3, 5, 9][..s.control_counts.len()].to_vec());
        assert!(s.v0_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(on.controls.len(), 7);
        assert!((on.rows.last().unwrap().cost - on.v0).abs() < 1e-12);
        assert!(matches!(run_offline(&cfg, &mut s), Err(Error::Config(_))));
    }

    #[test]
    fn storage_cap_aborts_with_level() {
        let mut cfg = small("heat", 8);
        cfg.set("offline.pruning", r#"{"kind":"none"}"#).unwrap();
        cfg.set("offline.storage_cap", "2000").unwrap();
        let mut s = RunSummary::new("offline", &cfg);
        match run_offline(&cfg, &mut s) {
            Err(Error::ResourceCap { level, .. }) => assert!(level >= 1),
            other => panic!("{other:?}"),
        }
        assert!(s.error.is_some());
    }

    #[test]
    fn monotone_study_matches_binomials() {
        let mut cfg = small("vanderpol", 0);
        cfg.set("study.max_m", "4").unwrap();
        cfg.set("study.max_n", "4").unwrap();
        let rows = run_study(&cfg, None, &mut RunSummary::default()).unwrap();
        assert_eq!(rows.len(), 16);
        for r in rows {
            assert_eq!(Some(r.nodes as u128), r.expected, "{r:?}");
        }
    }
}
