//! Packaged control problems and quadratic cost functionals.
//!
//! A [`ProblemPreset`] holds only plain parameters and serializes to JSON or
//! TOML; [`ProblemPreset::build`] turns it into a [`ProblemSpec`] with
//! assembled operators and initial states.

mod nodes;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use nodes::{FullNodes, LowRankNodes, LowRankState, ReducedNodes};

use crate::dynamics::{AdvectionScheme, Axis, BilinearControl, Boundary, Fields, Nonlinearity, PointInput, SemilinearModel};
use crate::tensor::DenseTensor;
use crate::tree::NodeDynamics;
use crate::{Error, Result, Scalar};

/// `L(y, u) = w_s Σ_c ‖Y_c‖² + γ u²`, `g(y) = w_T Σ_c ‖Y_c‖²`. For grid
/// problems both weights are the cell volume (rectangle rule).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec<T> {
    pub state_weight: T,
    pub control_weight: T,
    pub terminal_weight: T,
}

impl<T: Scalar> CostSpec<T> {
    pub fn new(state_weight: T, control_weight: T, terminal_weight: T) -> Result<Self> {
        if state_weight < T::zero() || control_weight < T::zero() || terminal_weight < T::zero() {
            return Err(Error::Argument("cost weights must be nonnegative".into()));
        }
        Ok(Self {
            state_weight,
            control_weight,
            terminal_weight,
        })
    }

    fn energy(y: &[DenseTensor<T>]) -> T {
        y.iter().fold(T::zero(), |acc, c| acc + c.norm_squared())
    }

    pub fn state_cost(&self, y: &[DenseTensor<T>]) -> T {
        self.state_weight * Self::energy(y)
    }

    pub fn control_cost(&self, u: T) -> T {
        self.control_weight * u * u
    }

    pub fn running_cost(&self, y: &[DenseTensor<T>], u: T) -> T {
        self.state_cost(y) + self.control_cost(u)
    }

    pub fn terminal_cost(&self, y: &[DenseTensor<T>]) -> T {
        self.terminal_weight * Self::energy(y)
    }

    /// Discrete functional `Σ_k Δt L(y^k, u^k) + g(y^N)` accumulated from the
    /// end, matching the tree recursion.
    pub fn functional(&self, states: &[Fields<T>], controls: &[T], dt: T) -> Result<T> {
        if states.len() != controls.len() + 1 {
            return Err(Error::mismatch("functional", controls.len() + 1, states.len()));
        }
        let mut v = self.terminal_cost(states.last().expect("nonempty"));
        for k in (0..controls.len()).rev() {
            v += dt * (self.state_cost(&states[k]) + self.control_cost(controls[k]));
        }
        Ok(v)
    }
}

/// `F(y) = y(1 − y²) + a(x)·u` with the shape function `a` as aux field.
#[derive(Clone, Copy, Debug, Default)]
pub struct AllenCahnForcing;

impl<T: Scalar> Nonlinearity<T> for AllenCahnForcing {
    fn aux_count(&self) -> usize {
        1
    }

    fn eval(&self, _comp: usize, p: &PointInput<'_, T>, u: T, _t: T) -> T {
        let y = p.state[0];
        y * (T::one() - y * y) + p.aux[0] * u
    }

    fn lipschitz(&self, radius: T, _controls: &[T]) -> Option<T> {
        Some(T::one().max(T::lit(3.0) * radius * radius - T::one()))
    }
}

/// `F_i = −Σ_k (Y_i ×_k B_k) ∘ Y_k + u·Y_i` on three velocity components.
#[derive(Clone, Copy, Debug, Default)]
pub struct BurgersAdvection;

impl<T: Scalar> Nonlinearity<T> for BurgersAdvection {
    fn components(&self) -> usize {
        3
    }

    fn needs_gradient(&self) -> bool {
        true
    }

    fn eval(&self, comp: usize, p: &PointInput<'_, T>, u: T, _t: T) -> T {
        let d = p.state.len();
        let mut conv = T::zero();
        for k in 0..d {
            conv += p.grad[comp * d + k] * p.state[k];
        }
        u * p.state[comp] - conv
    }
}

/// `ẏ₁ = y₂`, `ẏ₂ = ω(1 − y₁²)y₂ − y₁ + u` with explicit Euler and
/// `L = |y|² + γu²`, `g = |y|²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VanDerPol<T> {
    pub omega: T,
    pub dt: T,
    pub gamma: T,
}

impl<T: Scalar> VanDerPol<T> {
    pub fn euler_step(&self, y: &[T], u: T) -> Vec<T> {
        let (y1, y2) = (y[0], y[1]);
        vec![
            y1 + self.dt * y2,
            y2 + self.dt * (self.omega * (T::one() - y1 * y1) * y2 - y1 + u),
        ]
    }
}

impl<T: Scalar> NodeDynamics<T> for VanDerPol<T> {
    type State = Vec<T>;

    fn step(&self, y: &Vec<T>, u: T, _t: T) -> Result<Vec<T>> {
        let next = self.euler_step(y, u);
        if next.iter().all(|v| v.is_finite_value()) {
            Ok(next)
        } else {
            Err(Error::Numerical("Van der Pol state overflowed".into()))
        }
    }

    fn state_cost(&self, y: &Vec<T>, _t: T) -> T {
        y[0] * y[0] + y[1] * y[1]
    }

    fn control_cost(&self, u: T) -> T {
        self.gamma * u * u
    }

    fn terminal_cost(&self, y: &Vec<T>) -> T {
        y[0] * y[0] + y[1] * y[1]
    }

    fn coords(&self, y: &Vec<T>) -> Vec<T> {
        y.clone()
    }

    fn storage(&self, _y: &Vec<T>) -> usize {
        2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvDiffParams {
    pub n: usize,
    pub c: [f64; 2],
    pub sigma: f64,
    pub scheme: AdvectionScheme,
    pub control: [f64; 2],
    pub gamma: f64,
    pub t_final: f64,
    pub dt: f64,
}

impl Default for AdvDiffParams {
    fn default() -> Self {
        Self {
            n: 101,
            c: [0.5, 0.0],
            sigma: 0.0,
            scheme: AdvectionScheme::Upwind,
            control: [-3.0, -1.0],
            gamma: 1.0,
            t_final: 1.0,
            dt: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllenCahnParams {
    pub n: usize,
    pub sigma: f64,
    pub control: [f64; 2],
    pub gamma: f64,
    pub t_final: f64,
    pub dt: f64,
}

impl Default for AllenCahnParams {
    fn default() -> Self {
        Self {
            n: 601,
            sigma: 0.1,
            control: [-2.0, 0.0],
            gamma: 0.01,
            t_final: 1.0,
            dt: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurgersParams {
    pub n: usize,
    pub reynolds: f64,
    pub control: [f64; 2],
    pub gamma: f64,
    pub t_final: f64,
    pub dt: f64,
}

impl Default for BurgersParams {
    fn default() -> Self {
        Self {
            n: 60,
            reynolds: 100.0,
            control: [-2.0, 0.0],
            gamma: 0.1,
            t_final: 1.0,
            dt: 0.1,
        }
    }
}

/// Linear heat equation with multiplicative control on the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatParams {
    pub n: usize,
    pub sigma: f64,
    pub control: [f64; 2],
    pub gamma: f64,
    pub t_final: f64,
    pub dt: f64,
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            n: 16,
            sigma: 0.1,
            control: [-1.0, 0.0],
            gamma: 0.01,
            t_final: 1.0,
            dt: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanDerPolParams {
    pub omega: f64,
    pub t_final: f64,
    pub dt: f64,
    pub x0: [f64; 2],
    pub control: [f64; 2],
    pub gamma: f64,
}

impl Default for VanDerPolParams {
    fn default() -> Self {
        Self {
            omega: 0.15,
            t_final: 1.4,
            dt: 0.2,
            x0: [0.4, -0.3],
            control: [0.0, 1.0],
            gamma: 0.01,
        }
    }
}

/// Named problem with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ProblemPreset {
    Advdiff(AdvDiffParams),
    AllenCahn(AllenCahnParams),
    Burgers3d(BurgersParams),
    Heat(HeatParams),
    Vanderpol(VanDerPolParams),
}

pub const PRESET_NAMES: [&str; 5] = ["advdiff", "allen-cahn", "burgers3d", "heat", "vanderpol"];

impl ProblemPreset {
    /// Default parameters of a named preset.
    pub fn named(name: &str) -> Result<Self> {
        Ok(match name {
            "advdiff" => Self::Advdiff(AdvDiffParams::default()),
            "allen-cahn" => Self::AllenCahn(AllenCahnParams::default()),
            "burgers3d" => Self::Burgers3d(BurgersParams::default()),
            "heat" => Self::Heat(HeatParams::default()),
            "vanderpol" => Self::Vanderpol(VanDerPolParams::default()),
            other => return Err(Error::Config(format!("unknown preset `{other}`; expected one of {PRESET_NAMES:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Advdiff(_) => "advdiff",
            Self::AllenCahn(_) => "allen-cahn",
            Self::Burgers3d(_) => "burgers3d",
            Self::Heat(_) => "heat",
            Self::Vanderpol(_) => "vanderpol",
        }
    }

    /// Sets one parameter from text, e.g. `("n", "31")` or `("c", "[1, 0]")`.
    /// The value is parsed as JSON, falling back to a plain string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "name" {
            return Err(Error::Config("the preset name cannot be overridden".into()));
        }
        let mut doc = serde_json::to_value(&*self)?;
        let obj = doc.as_object_mut().expect("presets serialize to objects");
        if !obj.contains_key(key) {
            let keys: Vec<&String> = obj.keys().filter(|k| *k != "name").collect();
            return Err(Error::Config(format!("preset `{}` has no parameter `{key}` (known: {keys:?})", self.name())));
        }
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        obj.insert(key.to_string(), parsed);
        *self = serde_json::from_value(doc).map_err(|e| Error::Config(format!("bad value for `{key}`: {e}")))?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        match self {
            Self::Advdiff(p) => p.dt,
            Self::AllenCahn(p) => p.dt,
            Self::Burgers3d(p) => p.dt,
            Self::Heat(p) => p.dt,
            Self::Vanderpol(p) => p.dt,
        }
    }

    pub fn t_final(&self) -> f64 {
        match self {
            Self::Advdiff(p) => p.t_final,
            Self::AllenCahn(p) => p.t_final,
            Self::Burgers3d(p) => p.t_final,
            Self::Heat(p) => p.t_final,
            Self::Vanderpol(p) => p.t_final,
        }
    }

    pub fn control_box(&self) -> [f64; 2] {
        match self {
            Self::Advdiff(p) => p.control,
            Self::AllenCahn(p) => p.control,
            Self::Burgers3d(p) => p.control,
            Self::Heat(p) => p.control,
            Self::Vanderpol(p) => p.control,
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<ProblemSpec<T>> {
        let lit = T::lit;
        let check_box = |c: [f64; 2]| -> Result<(T, T)> {
            if !(c[0] < c[1]) {
                return Err(Error::Config("control box needs lower < upper".into()));
            }
            Ok((lit(c[0]), lit(c[1])))
        };
        let (system, cost, control_box) = match self {
            Self::Advdiff(p) => {
                let axes = vec![Axis::new(lit(-5.0), lit(5.0), p.n, Boundary::Dirichlet)?; 2];
                let y0 = grid_field(&axes, |x| (lit(2.0) - x[0] * x[0] - x[1] * x[1]).max(T::zero()));
                let model = SemilinearModel::from_axes(
                    axes,
                    lit(p.sigma),
                    &[lit(p.c[0]), lit(p.c[1])],
                    p.scheme,
                    Arc::new(BilinearControl::default()),
                    Vec::new(),
                )?;
                let w = model.cell_volume();
                (System::Pde { model, y0: vec![y0] }, CostSpec::new(w, lit(p.gamma), w)?, check_box(p.control)?)
            }
            Self::AllenCahn(p) => {
                let axes = vec![Axis::new(lit(-1.0), lit(1.0), p.n, Boundary::Neumann)?; 2];
                let two_pi = lit(2.0 * PI);
                let y0 = grid_field(&axes, |x| lit(2.0) + (two_pi * x[0]).cos() * (two_pi * x[1]).cos());
                let model = SemilinearModel::from_axes(
                    axes,
                    lit(p.sigma),
                    &[T::zero(), T::zero()],
                    AdvectionScheme::Upwind,
                    Arc::new(AllenCahnForcing),
                    vec![y0.clone()],
                )?;
                let w = model.cell_volume();
                (System::Pde { model, y0: vec![y0] }, CostSpec::new(w, lit(p.gamma), w)?, check_box(p.control)?)
            }
            Self::Burgers3d(p) => {
                if !(p.reynolds > 0.0) {
                    return Err(Error::Config("reynolds must be positive".into()));
                }
                let axes = vec![Axis::new(T::zero(), T::one(), p.n, Boundary::Dirichlet)?; 3];
                let two_pi = lit(2.0 * PI);
                let s = |v: T| (two_pi * v).sin();
                let c = |v: T| (two_pi * v).cos();
                let tenth = lit(0.1);
                let y0 = vec![
                    grid_field(&axes, |x| tenth * s(x[0]) * s(x[1]) * c(x[2])),
                    grid_field(&axes, |x| tenth * s(x[0]) * c(x[1]) * s(x[2])),
                    grid_field(&axes, |x| tenth * c(x[0]) * s(x[1]) * s(x[2])),
                ];
                let model = SemilinearModel::from_axes(
                    axes,
                    lit(1.0 / p.reynolds),
                    &[T::zero(); 3],
                    AdvectionScheme::Centered,
                    Arc::new(BurgersAdvection),
                    Vec::new(),
                )?;
                let w = model.cell_volume();
                (System::Pde { model, y0 }, CostSpec::new(w, lit(p.gamma), w)?, check_box(p.control)?)
            }
            Self::Heat(p) => {
                let axes = vec![Axis::new(T::zero(), T::one(), p.n, Boundary::Dirichlet)?; 2];
                let pi = lit(PI);
                let y0 = grid_field(&axes, |x| (pi * x[0]).sin() * (pi * x[1]).sin() * (T::one() + x[0] * x[1]));
                let model = SemilinearModel::from_axes(
                    axes,
                    lit(p.sigma),
                    &[T::zero(), T::zero()],
                    AdvectionScheme::Upwind,
                    Arc::new(BilinearControl::default()),
                    Vec::new(),
                )?;
                let w = model.cell_volume();
                (System::Pde { model, y0: vec![y0] }, CostSpec::new(w, lit(p.gamma), w)?, check_box(p.control)?)
            }
            Self::Vanderpol(p) => {
                let vdp = VanDerPol {
                    omega: lit(p.omega),
                    dt: lit(p.dt),
                    gamma: lit(p.gamma),
                };
                (
                    System::Ode {
                        dynamics: vdp,
                        x0: vec![lit(p.x0[0]), lit(p.x0[1])],
                    },
                    CostSpec::new(T::one(), lit(p.gamma), T::one())?,
                    check_box(p.control)?,
                )
            }
        };
        let (t_final, dt) = (self.t_final(), self.dt());
        if !(dt > 0.0) || !(t_final > 0.0) {
            return Err(Error::Config("dt and t_final must be positive".into()));
        }
        Ok(ProblemSpec {
            preset: self.clone(),
            system,
            cost,
            control_box,
            t0: T::zero(),
            t_final: lit(t_final),
            dt: lit(dt),
        })
    }
}

/// `f(x)` sampled at the unknowns of a tensor grid.
pub fn grid_field<T: Scalar>(axes: &[Axis<T>], f: impl Fn(&[T]) -> T) -> DenseTensor<T> {
    let pts: Vec<Vec<T>> = axes.iter().map(|a| a.points()).collect();
    let dims: Vec<usize> = axes.iter().map(|a| a.n).collect();
    let mut x = vec![T::zero(); dims.len()];
    DenseTensor::from_fn(&dims, |idx| {
        for (m, &i) in idx.iter().enumerate() {
            x[m] = pts[m][i];
        }
        f(&x)
    })
}

#[derive(Clone, Debug)]
pub enum System<T: Scalar> {
    Pde { model: SemilinearModel<T>, y0: Fields<T> },
    Ode { dynamics: VanDerPol<T>, x0: Vec<T> },
}

/// A fully assembled problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec<T: Scalar> {
    pub preset: ProblemPreset,
    pub system: System<T>,
    pub cost: CostSpec<T>,
    pub control_box: (T, T),
    pub t0: T,
    pub t_final: T,
    pub dt: T,
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn model(&self) -> Result<&SemilinearModel<T>> {
        match &self.system {
            System::Pde { model, .. } => Ok(model),
            System::Ode { .. } => Err(Error::Config(format!("`{}` is not a grid problem", self.preset.name()))),
        }
    }

    pub fn initial_fields(&self) -> Result<&Fields<T>> {
        match &self.system {
            System::Pde { y0, .. } => Ok(y0),
            System::Ode { .. } => Err(Error::Config(format!("`{}` is not a grid problem", self.preset.name()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{bilinear_closed_form, FullOrderStepper};

    #[test]
    fn defaults_follow_the_reference_setups() {
        let ProblemPreset::Advdiff(a) = ProblemPreset::named("advdiff").unwrap() else { panic!() };
        assert_eq!((a.c, a.sigma, a.control, a.t_final, a.dt), ([0.5, 0.0], 0.0, [-3.0, -1.0], 1.0, 0.05));
        let ProblemPreset::AllenCahn(p) = ProblemPreset::named("allen-cahn").unwrap() else { panic!() };
        assert_eq!((p.sigma, p.control, p.gamma, p.t_final, p.dt), (0.1, [-2.0, 0.0], 0.01, 1.0, 0.1));
        let ProblemPreset::Burgers3d(b) = ProblemPreset::named("burgers3d").unwrap() else { panic!() };
        assert_eq!((b.reynolds, b.control, b.gamma), (100.0, [-2.0, 0.0], 0.1));
        let ProblemPreset::Vanderpol(v) = ProblemPreset::named("vanderpol").unwrap() else { panic!() };
        assert_eq!((v.omega, v.t_final, v.dt, v.x0, v.control), (0.15, 1.4, 0.2, [0.4, -0.3], [0.0, 1.0]));
        assert!(matches!(ProblemPreset::named("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_parse_json_values() {
        let mut p = ProblemPreset::named("advdiff").unwrap();
        p.set("n", "11").unwrap();
        p.set("c", "[0, 0]").unwrap();
        p.set("scheme", "centered").unwrap();
        let ProblemPreset::Advdiff(a) = &p else { panic!() };
        assert_eq!((a.n, a.c, a.scheme), (11, [0.0, 0.0], AdvectionScheme::Centered));
        assert!(matches!(p.set("bogus", "1"), Err(Error::Config(_))));
        assert!(matches!(p.set("n", "\"x\""), Err(Error::Config(_))));
    }

    #[test]
    fn preset_roundtrip_is_bit_exact() {
        for name in PRESET_NAMES {
            let mut p = ProblemPreset::named(name).unwrap();
            if name != "vanderpol" {
                p.set("n", "7").unwrap();
            }
            let text = serde_json::to_string(&p).unwrap();
            let back: ProblemPreset = serde_json::from_str(&text).unwrap();
            assert_eq!(back, p);
            let (a, b) = (p.build::<f64>().unwrap(), back.build::<f64>().unwrap());
            assert_eq!(a.cost, b.cost);
            if let (System::Pde { model: m1, y0: y1 }, System::Pde { model: m2, y0: y2 }) = (&a.system, &b.system) {
                assert_eq!(m1.a_mats(), m2.a_mats());
                assert_eq!(m1.b_mats(), m2.b_mats());
                assert_eq!(y1, y2);
            }
        }
    }

    #[test]
    fn cost_arithmetic() {
        let c = CostSpec::new(0.25, 0.1, 0.25).unwrap();
        let zero = vec![DenseTensor::<f64>::zeros(&[3, 3])];
        assert_eq!(c.running_cost(&zero, 0.0), 0.0);
        let ones = vec![DenseTensor::from_fn(&[4, 4], |_| 1.0)];
        assert_eq!(c.terminal_cost(&ones), 0.25 * 16.0);
        assert!(CostSpec::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn frozen_transport_without_control() {
        let mut p = ProblemPreset::named("advdiff").unwrap();
        p.set("n", "9").unwrap();
        p.set("c", "[0, 0]").unwrap();
        let spec = p.build::<f64>().unwrap();
        let stepper = FullOrderStepper::new(spec.model().unwrap().clone(), 0.05).unwrap();
        let y0 = spec.initial_fields().unwrap();
        let y1 = stepper.step(y0, 0.0, 0.0).unwrap();
        assert_eq!(&y1, y0);
    }

    #[test]
    fn constant_control_matches_closed_form() {
        let mut p = ProblemPreset::named("advdiff").unwrap();
        p.set("n", "9").unwrap();
        let spec = p.build::<f64>().unwrap();
        let stepper = FullOrderStepper::new(spec.model().unwrap().clone(), 0.05).unwrap();
        let y0 = spec.initial_fields().unwrap();
        let traj = stepper.trajectory(y0, &[-3.0; 4], 0.0).unwrap();
        let closed = bilinear_closed_form(stepper.solver(), &y0[0], &[-3.0; 4]).unwrap();
        assert!(traj[4][0].sub(&closed).unwrap().max_abs() < 1e-12 * closed.max_abs().max(1.0));
    }

    #[test]
    fn allen_cahn_pointwise_signs() {
        let f = AllenCahnForcing;
        let eval = |y: f64, a: f64, u: f64| Nonlinearity::<f64>::eval(&f, 0, &PointInput { state: &[y], grad: &[], aux: &[a] }, u, 0.0);
        assert_eq!(eval(0.0, 2.0, 0.0), 0.0);
        assert_eq!(eval(2.0, 1.0, 0.0), -6.0);
        assert_eq!(eval(0.5, 1.0, 0.0), 0.375);
        let mut p = ProblemPreset::named("allen-cahn").unwrap();
        p.set("n", "7").unwrap();
        let spec = p.build::<f64>().unwrap();
        let model = spec.model().unwrap();
        let zero = vec![DenseTensor::zeros(&[7, 7])];
        let f0 = model.eval_nonlinear(&zero, 0.0, 0.0).unwrap();
        assert_eq!(f0[0].max_abs(), 0.0);
        assert_eq!(model.apply_a(&zero[0]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn burgers_initial_fields_and_equilibria() {
        let mut p = ProblemPreset::named("burgers3d").unwrap();
        p.set("n", "5").unwrap();
        let spec = p.build::<f64>().unwrap();
        let y0 = spec.initial_fields().unwrap();
        let h = 1.0 / 6.0;
        let (i, j, k) = (1usize, 3usize, 0usize);
        let x = [(i + 1) as f64 * h, (j + 1) as f64 * h, (k + 1) as f64 * h];
        let s = |v: f64| (2.0 * PI * v).sin();
        let c = |v: f64| (2.0 * PI * v).cos();
        assert!((y0[0].get(&[i, j, k]) - 0.1 * s(x[0]) * s(x[1]) * c(x[2])).abs() < 1e-15);
        assert!((y0[1].get(&[i, j, k]) - 0.1 * s(x[0]) * c(x[1]) * s(x[2])).abs() < 1e-15);
        assert!((y0[2].get(&[i, j, k]) - 0.1 * c(x[0]) * s(x[1]) * s(x[2])).abs() < 1e-15);
        let model = spec.model().unwrap();
        let zero = vec![DenseTensor::zeros(&[5, 5, 5]); 3];
        assert_eq!(model.eval_nonlinear(&zero, -1.0, 0.0).unwrap().iter().map(|f| f.max_abs()).fold(0.0, f64::max), 0.0);
        // constant fields: centered differences vanish away from the boundary
        let ones = vec![DenseTensor::from_fn(&[5, 5, 5], |_| 1.0); 3];
        let f = model.eval_nonlinear(&ones, 0.0, 0.0).unwrap();
        assert_eq!(f[0].get(&[2, 2, 2]), 0.0);
    }

    #[test]
    fn van_der_pol_step() {
        let v = VanDerPol { omega: 0.15, dt: 0.2, gamma: 0.01 };
        let y: Vec<f64> = NodeDynamics::step(&v, &vec![0.4, -0.3], 1.0, 0.0).unwrap();
        assert!((y[0] - (0.4 + 0.2 * -0.3)).abs() < 1e-15);
        assert!((y[1] - (-0.3 + 0.2 * (0.15 * (1.0 - 0.16) * -0.3 - 0.4 + 1.0))).abs() < 1e-15);
        assert_eq!(NodeDynamics::step(&v, &vec![0.0, 0.0], 0.0, 0.0).unwrap(), vec![0.0, 0.0]);
    }
}
