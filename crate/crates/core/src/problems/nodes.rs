//! Adapters that let the tree drive the steppers.

use crate::dynamics::{Fields, FullOrderStepper};
use crate::reduction::{compress_node, LowRankNode, ReducedStepper};
use crate::tree::NodeDynamics;
use crate::{Result, Scalar};

use super::CostSpec;

fn flatten<T: Scalar>(y: &Fields<T>) -> Vec<T> {
    y.iter().flat_map(|c| c.as_slice().iter().copied()).collect()
}

/// Full-order semi-implicit Euler nodes.
#[derive(Clone, Debug)]
pub struct FullNodes<T: Scalar> {
    pub stepper: FullOrderStepper<T>,
    pub cost: CostSpec<T>,
}

impl<T: Scalar> NodeDynamics<T> for FullNodes<T> {
    type State = Fields<T>;

    fn step(&self, y: &Fields<T>, u: T, t: T) -> Result<Fields<T>> {
        self.stepper.step(y, u, t)
    }

    fn state_cost(&self, y: &Fields<T>, _t: T) -> T {
        self.cost.state_cost(y)
    }

    fn control_cost(&self, u: T) -> T {
        self.cost.control_cost(u)
    }

    fn terminal_cost(&self, y: &Fields<T>) -> T {
        self.cost.terminal_cost(y)
    }

    fn coords(&self, y: &Fields<T>) -> Vec<T> {
        flatten(y)
    }

    fn storage(&self, y: &Fields<T>) -> usize {
        y.iter().map(|c| c.len()).sum()
    }

    fn bilinear(&self) -> bool {
        self.stepper.model().nonlinear().is_bilinear_control()
    }
}

/// One tree node held as per-component Tucker factors.
#[derive(Clone, Debug)]
pub struct LowRankState<T: Scalar> {
    pub comps: Vec<LowRankNode<T>>,
    /// `Σ_c ‖core_c‖²`, the energy of the represented state.
    pub energy: T,
}

impl<T: Scalar> LowRankState<T> {
    pub fn compress(y: &Fields<T>, kappa: usize) -> Result<Self> {
        let comps = y.iter().map(|c| compress_node(c, kappa)).collect::<Result<Vec<_>>>()?;
        let energy = comps.iter().fold(T::zero(), |acc, n| acc + n.tucker.core.norm_squared());
        Ok(Self { comps, energy })
    }

    pub fn decompress(&self) -> Result<Fields<T>> {
        self.comps.iter().map(|n| n.decompress()).collect()
    }

    pub fn storage(&self) -> usize {
        self.comps.iter().map(|n| n.storage()).sum()
    }

    /// `sqrt(Σ_c discarded_c²)`.
    pub fn discarded(&self) -> T {
        self.comps.iter().fold(T::zero(), |acc, n| acc + n.discarded * n.discarded).sqrt()
    }
}

/// Full-order stepping with every node recompressed at rank cap `kappa`.
#[derive(Clone, Debug)]
pub struct LowRankNodes<T: Scalar> {
    pub stepper: FullOrderStepper<T>,
    pub cost: CostSpec<T>,
    pub kappa: usize,
}

impl<T: Scalar> LowRankNodes<T> {
    pub fn root(&self, y0: &Fields<T>) -> Result<LowRankState<T>> {
        LowRankState::compress(y0, self.kappa)
    }
}

impl<T: Scalar> NodeDynamics<T> for LowRankNodes<T> {
    type State = LowRankState<T>;

    fn step(&self, y: &LowRankState<T>, u: T, t: T) -> Result<LowRankState<T>> {
        let full = self.stepper.step(&y.decompress()?, u, t)?;
        LowRankState::compress(&full, self.kappa)
    }

    fn state_cost(&self, y: &LowRankState<T>, _t: T) -> T {
        self.cost.state_weight * y.energy
    }

    fn control_cost(&self, u: T) -> T {
        self.cost.control_cost(u)
    }

    fn terminal_cost(&self, y: &LowRankState<T>) -> T {
        self.cost.terminal_weight * y.energy
    }

    fn coords(&self, y: &LowRankState<T>) -> Vec<T> {
        flatten(&y.decompress().expect("stored factors are consistent"))
    }

    fn storage(&self, y: &LowRankState<T>) -> usize {
        y.storage()
    }

    fn bilinear(&self) -> bool {
        self.stepper.model().nonlinear().is_bilinear_control()
    }
}

/// Nodes in reduced coordinates. Factors are orthonormal, so norms and
/// distances of the coefficients equal those of the lifted states.
#[derive(Clone, Debug)]
pub struct ReducedNodes<T: Scalar> {
    pub stepper: ReducedStepper<T>,
    pub cost: CostSpec<T>,
}

impl<T: Scalar> NodeDynamics<T> for ReducedNodes<T> {
    type State = Fields<T>;

    fn step(&self, y: &Fields<T>, u: T, t: T) -> Result<Fields<T>> {
        self.stepper.step(y, u, t)
    }

    fn state_cost(&self, y: &Fields<T>, _t: T) -> T {
        self.cost.state_cost(y)
    }

    fn control_cost(&self, u: T) -> T {
        self.cost.control_cost(u)
    }

    fn terminal_cost(&self, y: &Fields<T>) -> T {
        self.cost.terminal_cost(y)
    }

    fn coords(&self, y: &Fields<T>) -> Vec<T> {
        flatten(y)
    }

    fn storage(&self, y: &Fields<T>) -> usize {
        y.iter().map(|c| c.len()).sum()
    }

    fn bilinear(&self) -> bool {
        self.stepper.model().model().nonlinear().is_bilinear_control()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemPreset;
    use crate::tree::{BuildOptions, ControlGrid, PruningRule, Tree};

    fn heat(n: usize) -> (FullOrderStepper<f64>, CostSpec<f64>, Fields<f64>) {
        let mut p = ProblemPreset::named("heat").unwrap();
        p.set("n", &n.to_string()).unwrap();
        let spec = p.build::<f64>().unwrap();
        let stepper = FullOrderStepper::new(spec.model().unwrap().clone(), spec.dt).unwrap();
        (stepper, spec.cost, spec.initial_fields().unwrap().clone())
    }

    #[test]
    fn low_rank_tree_tracks_full_tree() {
        let (stepper, cost, y0) = heat(8);
        let full = FullNodes { stepper: stepper.clone(), cost };
        let lr = LowRankNodes { stepper, cost, kappa: 8 };
        let grid = ControlGrid::uniform(-1.0, 0.0, 2).unwrap();
        let opts = BuildOptions::default();
        let mut a = Tree::build(&full, y0.clone(), &grid, 0.0, 0.1, 4, &opts, &mut |_, _| Ok(())).unwrap();
        let root = lr.root(&y0).unwrap();
        let mut b = Tree::build(&lr, root, &grid, 0.0, 0.1, 4, &opts, &mut |_, _| Ok(())).unwrap();
        a.backward(&full).unwrap();
        b.backward(&lr).unwrap();
        // kappa equals n: compression is lossless up to rounding
        assert!((a.root_value().unwrap() - b.root_value().unwrap()).abs() < 1e-12);
        assert!(full.bilinear() && lr.bilinear());
    }

    #[test]
    fn sum_based_accepts_heat_nodes() {
        let (stepper, cost, y0) = heat(6);
        let full = FullNodes { stepper, cost };
        let grid = ControlGrid::uniform(-1.0, 0.0, 2).unwrap();
        let t = Tree::build(&full, y0, &grid, 0.0, 0.1, 3, &BuildOptions::with_rule(PruningRule::BilinearSumBased), &mut |_, _| Ok(()))
            .unwrap();
        assert_eq!(t.node_count(), 10);
    }
}
