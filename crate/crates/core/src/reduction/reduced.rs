//! Reduced semilinear model on HO-POD coordinates.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::deim::{select_rows, HoDeim};
use super::pod::HoPodBasis;
use crate::dynamics::model::eval_pointwise_component;
use crate::dynamics::{kron_sum_apply, Fields, SemilinearModel, ShiftedSolver};
use crate::tensor::DenseTensor;
use crate::{Error, Result, Scalar};

/// How the reduced nonlinear term is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearTreatment {
    /// `F = s·Y` with `s` from [`Nonlinearity::linear_factor`]; no
    /// interpolation needed.
    ///
    /// [`Nonlinearity::linear_factor`]: crate::dynamics::Nonlinearity::linear_factor
    Exact,
    /// HO-DEIM on the sampled entries.
    Deim,
    /// Lift, evaluate at full size, project. Reference only.
    Galerkin,
}

/// Bases of one state component.
#[derive(Clone, Debug)]
pub struct ComponentReduction<T: Scalar> {
    pub state: HoPodBasis<T>,
    pub deim: Option<HoDeim<T>>,
}

/// Small matrices for evaluating output component `i` on its sampled grid.
#[derive(Clone, Debug)]
struct SampledOps<T: Scalar> {
    /// `[c][m]`: `P^{(i)}_mᵀ V^{(c)}_m`.
    state: Vec<Vec<DMatrix<T>>>,
    /// `[c][m]`: `P^{(i)}_mᵀ B_m V^{(c)}_m`.
    grad: Vec<Vec<DMatrix<T>>>,
    aux: Vec<DenseTensor<T>>,
    /// `V^{(i)}_mᵀ Φ_m (P_mᵀΦ_m)^{-1}`.
    small: Vec<DMatrix<T>>,
}

/// `Â_m = V_mᵀ A_m V_m`.
pub fn reduce_operators<T: Scalar>(a: &[DMatrix<T>], v: &[DMatrix<T>]) -> Result<Vec<DMatrix<T>>> {
    if a.len() != v.len() {
        return Err(Error::mismatch("reduce_operators", a.len(), v.len()));
    }
    a.iter()
        .zip(v)
        .enumerate()
        .map(|(m, (am, vm))| {
            if am.ncols() != vm.nrows() {
                return Err(Error::mismatch("reduce_operators", format!("V_{m} with {} rows", am.ncols()), vm.nrows()));
            }
            Ok(vm.transpose() * am * vm)
        })
        .collect()
}

/// Semilinear model restricted to `Ŷ_c ×_m V^{(c)}_m`.
#[derive(Clone, Debug)]
pub struct ReducedModel<T: Scalar> {
    model: SemilinearModel<T>,
    comps: Vec<ComponentReduction<T>>,
    a_hat: Vec<Vec<DMatrix<T>>>,
    treatment: NonlinearTreatment,
    sampled: Vec<SampledOps<T>>,
}

impl<T: Scalar> ReducedModel<T> {
    pub fn new(model: SemilinearModel<T>, comps: Vec<ComponentReduction<T>>, treatment: NonlinearTreatment) -> Result<Self> {
        if comps.len() != model.components() {
            return Err(Error::mismatch("ReducedModel", model.components(), comps.len()));
        }
        let dims = model.dims();
        let mut a_hat = Vec::with_capacity(comps.len());
        for c in &comps {
            if c.state.dims() != dims.as_slice() {
                return Err(Error::mismatch("ReducedModel", format!("{dims:?}"), format!("{:?}", c.state.dims())));
            }
            a_hat.push(reduce_operators(model.a_mats(), c.state.factors()?)?);
        }
        let mut sampled = Vec::new();
        if treatment == NonlinearTreatment::Deim {
            for (i, ci) in comps.iter().enumerate() {
                let deim = ci
                    .deim
                    .as_ref()
                    .ok_or_else(|| Error::Argument(format!("component {i} has no interpolation basis")))?;
                if deim.phi().iter().map(|p| p.nrows()).collect::<Vec<_>>() != dims {
                    return Err(Error::mismatch("ReducedModel", format!("{dims:?}"), "interpolation basis dims"));
                }
                let piv = deim.pivots();
                let mut state = Vec::with_capacity(comps.len());
                let mut grad = Vec::with_capacity(comps.len());
                for cc in &comps {
                    let v = cc.state.factors()?;
                    state.push(v.iter().zip(piv).map(|(vm, p)| select_rows(vm, p)).collect());
                    grad.push(
                        v.iter()
                            .zip(piv)
                            .zip(model.b_mats())
                            .map(|((vm, p), bm)| select_rows(&(bm * vm), p))
                            .collect(),
                    );
                }
                let aux = model
                    .aux()
                    .iter()
                    .map(|a| {
                        let sel: Vec<DMatrix<T>> = piv.iter().zip(&dims).map(|(p, &n)| select_rows(&DMatrix::identity(n, n), p)).collect();
                        a.mode_products(&sel)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let small = deim.small_factors(ci.state.factors()?)?;
                sampled.push(SampledOps { state, grad, aux, small });
            }
        }
        Ok(Self {
            model,
            comps,
            a_hat,
            treatment,
            sampled,
        })
    }

    /// One component, bilinear nonlinearity, no interpolation.
    pub fn exact(model: SemilinearModel<T>, basis: HoPodBasis<T>) -> Result<Self> {
        Self::new(model, vec![ComponentReduction { state: basis, deim: None }], NonlinearTreatment::Exact)
    }

    pub fn model(&self) -> &SemilinearModel<T> {
        &self.model
    }

    pub fn components(&self) -> &[ComponentReduction<T>] {
        &self.comps
    }

    pub fn treatment(&self) -> NonlinearTreatment {
        self.treatment
    }

    /// `Â_m` of component `c`.
    pub fn a_hat(&self, c: usize) -> &[DMatrix<T>] {
        &self.a_hat[c]
    }

    /// Reduced dims `k^{(c)}` per component.
    pub fn reduced_dims(&self) -> Vec<Vec<usize>> {
        self.comps.iter().map(|c| c.state.ranks()).collect()
    }

    pub fn project(&self, y: &[DenseTensor<T>]) -> Result<Fields<T>> {
        self.check_len(y.len())?;
        y.iter().zip(&self.comps).map(|(yc, c)| c.state.project(yc)).collect()
    }

    pub fn lift(&self, y: &[DenseTensor<T>]) -> Result<Fields<T>> {
        self.check_len(y.len())?;
        y.iter().zip(&self.comps).map(|(yc, c)| c.state.lift(yc)).collect()
    }

    /// `Σ_m Ŷ ×_m Â_m` for component `c`.
    pub fn apply_a(&self, c: usize, y: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        kron_sum_apply(&self.a_hat[c], y)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.comps.len() {
            return Err(Error::mismatch("ReducedModel", self.comps.len(), n));
        }
        Ok(())
    }

    /// Reduced nonlinear term under the configured treatment.
    pub fn eval_nonlinear(&self, y: &[DenseTensor<T>], u: T, t: T) -> Result<Fields<T>> {
        match self.treatment {
            NonlinearTreatment::Exact => {
                self.check_len(y.len())?;
                let s = self.model.nonlinear().linear_factor(u, t).ok_or_else(|| {
                    Error::Argument("exact reduction needs a nonlinearity that is linear in the state".into())
                })?;
                Ok(y.iter().map(|yc| yc.scaled(s)).collect())
            }
            NonlinearTreatment::Deim => self.deim_eval(y, u, t),
            NonlinearTreatment::Galerkin => self.galerkin_eval(y, u, t),
        }
    }

    /// `F(lift(Ŷ)) ×_m V_mᵀ`, formed at full size.
    pub fn galerkin_eval(&self, y: &[DenseTensor<T>], u: T, t: T) -> Result<Fields<T>> {
        let full = self.lift(y)?;
        let f = self.model.eval_nonlinear(&full, u, t)?;
        self.project(&f)
    }

    /// HO-DEIM approximation: evaluates `F` on `p_1⋯p_d` sampled entries and
    /// maps them back with the small factors.
    pub fn deim_eval(&self, y: &[DenseTensor<T>], u: T, t: T) -> Result<Fields<T>> {
        self.check_len(y.len())?;
        if self.sampled.is_empty() {
            return Err(Error::Argument("model was built without interpolation data".into()));
        }
        for (c, (yc, cc)) in y.iter().zip(&self.comps).enumerate() {
            if yc.dims() != cc.state.ranks().as_slice() {
                return Err(Error::mismatch("deim_eval", format!("component {c} dims {:?}", cc.state.ranks()), format!("{:?}", yc.dims())));
            }
        }
        let f = self.model.nonlinear().as_ref();
        let d = self.model.order();
        let mut out = Vec::with_capacity(y.len());
        for (i, ops) in self.sampled.iter().enumerate() {
            let states = y
                .iter()
                .zip(&ops.state)
                .map(|(yc, s)| yc.mode_products(s))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = Vec::new();
            if f.needs_gradient() {
                for (c, yc) in y.iter().enumerate() {
                    for k in 0..d {
                        let mats: Vec<&DMatrix<T>> = (0..d).map(|m| if m == k { &ops.grad[c][m] } else { &ops.state[c][m] }).collect();
                        let refs: Vec<Option<&DMatrix<T>>> = mats.into_iter().map(Some).collect();
                        grads.push(yc.multi_mode_product(&refs)?);
                    }
                }
            }
            let sdims = states[0].dims().to_vec();
            let mut sample = DenseTensor::zeros(&sdims);
            let srefs: Vec<&[T]> = states.iter().map(|s| s.as_slice()).collect();
            let grefs: Vec<&[T]> = grads.iter().map(|g| g.as_slice()).collect();
            let arefs: Vec<&[T]> = ops.aux.iter().map(|a| a.as_slice()).collect();
            eval_pointwise_component(f, i, &srefs, &grefs, &arefs, u, t, &mut sample);
            if !sample.is_finite() {
                return Err(Error::Numerical(format!("sampled nonlinear term is not finite at t = {t}, u = {u}")));
            }
            out.push(sample.mode_products(&ops.small)?);
        }
        Ok(out)
    }

    /// Semi-implicit stepper at step `dt`.
    pub fn stepper(self: &Arc<Self>, dt: T) -> Result<ReducedStepper<T>> {
        let solvers = self.a_hat.iter().map(|a| ShiftedSolver::new(a, dt)).collect::<Result<Vec<_>>>()?;
        Ok(ReducedStepper {
            model: Arc::clone(self),
            solvers,
            dt,
        })
    }
}

/// Semi-implicit Euler on the reduced model.
#[derive(Clone, Debug)]
pub struct ReducedStepper<T: Scalar> {
    model: Arc<ReducedModel<T>>,
    solvers: Vec<ShiftedSolver<T>>,
    dt: T,
}

impl<T: Scalar> ReducedStepper<T> {
    pub fn model(&self) -> &Arc<ReducedModel<T>> {
        &self.model
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn step(&self, y: &[DenseTensor<T>], u: T, t: T) -> Result<Fields<T>> {
        let f = self.model.eval_nonlinear(y, u, t)?;
        y.iter()
            .zip(&f)
            .zip(&self.solvers)
            .map(|((yc, fc), s)| {
                let mut rhs = yc.clone();
                rhs.axpy(self.dt, fc)?;
                crate::dynamics::step::finite(s.solve(&rhs)?)
            })
            .collect()
    }

    /// Reduced states `ŷ^0..ŷ^n` under `controls`.
    pub fn trajectory(&self, y0: &[DenseTensor<T>], controls: &[T], t0: T) -> Result<Vec<Fields<T>>> {
        let mut out = Vec::with_capacity(controls.len() + 1);
        out.push(y0.to_vec());
        for (k, &u) in controls.iter().enumerate() {
            let t = t0 + self.dt * T::from_count(k);
            let next = self.step(out.last().expect("nonempty"), u, t)?;
            out.push(next);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AdvectionScheme, Axis, BilinearControl, Boundary, FullOrderStepper, Nonlinearity, NoForcing, PointInput};
    use crate::tensor::{kron_matrix, kron_sum_matrix, DEFAULT_ORACLE_CAP};
    use rand::{Rng, SeedableRng};

    #[derive(Debug)]
    struct Linear;
    impl Nonlinearity<f64> for Linear {
        fn eval(&self, _c: usize, p: &PointInput<'_, f64>, u: f64, _t: f64) -> f64 {
            // linear in the state and the derivative, with a shape field
            2.0 * p.state[0] - 0.5 * p.grad[0] + p.grad[1] + u * p.aux[0]
        }
        fn needs_gradient(&self) -> bool {
            true
        }
        fn aux_count(&self) -> usize {
            1
        }
    }

    fn orth(rng: &mut impl Rng, n: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q().columns(0, k).into_owned()
    }

    #[test]
    fn identity_basis_keeps_operators() {
        let axes = vec![Axis::new(0.0, 1.0, 5, Boundary::Dirichlet).unwrap(); 2];
        let model = SemilinearModel::from_axes(axes, 1.0, &[0.3, 0.0], AdvectionScheme::Upwind, Arc::new(NoForcing), vec![]).unwrap();
        let rm = ReducedModel::exact(model.clone(), HoPodBasis::identity(&[5, 5]).unwrap()).unwrap();
        assert_eq!(rm.a_hat(0), model.a_mats());
    }

    #[test]
    fn one_vector_reduction_by_hand() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -2.0]);
        let v = DMatrix::from_element(3, 1, 1.0 / 3f64.sqrt());
        let ah = reduce_operators(&[a], &[v]).unwrap();
        // (−2·3 + 2·2)/3
        assert!((ah[0][(0, 0)] + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn reduced_operator_matches_projected_kron_sum() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        let axes = vec![Axis::new(0.0, 1.0, 6, Boundary::Dirichlet).unwrap(); 2];
        let model = SemilinearModel::from_axes(axes, 0.7, &[0.4, -0.2], AdvectionScheme::Upwind, Arc::new(BilinearControl::default()), vec![]).unwrap();
        let v = vec![orth(&mut rng, 6, 3), orth(&mut rng, 6, 2)];
        let rm = ReducedModel::exact(model.clone(), HoPodBasis::from_factors(v.clone()).unwrap()).unwrap();
        let vy = kron_matrix(&v, DEFAULT_ORACLE_CAP).unwrap();
        let l = kron_sum_matrix(model.a_mats(), DEFAULT_ORACLE_CAP).unwrap();
        let yh = DenseTensor::from_fn(&[3, 2], |_| rng.gen_range(-1.0..1.0));
        let dense = vy.transpose() * l * &vy * yh.vec();
        assert!((rm.apply_a(0, &yh).unwrap().vec() - dense).amax() < 1e-12);
    }

    #[test]
    fn deim_is_exact_for_linear_terms_in_span() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(12);
        let n = 9;
        let axes = vec![Axis::new(0.0, 1.0, n, Boundary::Dirichlet).unwrap(); 2];
        let aux = DenseTensor::from_fn(&[n, n], |i| ((i[0] + 1) * (i[1] + 2)) as f64 / 10.0);
        let model = SemilinearModel::from_axes(axes, 1.0, &[0.0, 0.0], AdvectionScheme::Upwind, Arc::new(Linear), vec![aux]).unwrap();
        let v = vec![orth(&mut rng, n, 2), orth(&mut rng, n, 3)];
        let basis = HoPodBasis::from_factors(v.clone()).unwrap();
        // interpolation basis spanning the range of F on span(V)
        let vb: Vec<DMatrix<f64>> = v.iter().zip(model.b_mats()).map(|(vm, b)| b * vm).collect();
        let aux_t = model.aux()[0].to_matrix().unwrap();
        let phi: Vec<DMatrix<f64>> = (0..2)
            .map(|m| {
                let mut cols: Vec<_> = v[m].column_iter().map(|c| c.into_owned()).collect();
                cols.extend(vb[m].column_iter().map(|c| c.into_owned()));
                let src = if m == 0 { aux_t.clone() } else { aux_t.transpose() };
                cols.extend(src.column_iter().map(|c| c.into_owned()));
                let big = DMatrix::from_columns(&cols);
                crate::tensor::left_singular(&big, crate::tensor::Truncation::Full).u
            })
            .collect();
        let deim = HoDeim::new(phi).unwrap();
        let rm = ReducedModel::new(model, vec![ComponentReduction { state: basis, deim: Some(deim) }], NonlinearTreatment::Deim).unwrap();
        let yh = DenseTensor::from_fn(&[2, 3], |_| rng.gen_range(-1.0..1.0));
        let a = rm.deim_eval(std::slice::from_ref(&yh), 0.7, 0.0).unwrap();
        let b = rm.galerkin_eval(std::slice::from_ref(&yh), 0.7, 0.0).unwrap();
        assert!(a[0].sub(&b[0]).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn identity_reduction_reproduces_full_steps() {
        let axes = vec![Axis::new(0.0, 1.0, 5, Boundary::Dirichlet).unwrap(); 2];
        let model = SemilinearModel::from_axes(axes, 1.0, &[0.5, 0.0], AdvectionScheme::Upwind, Arc::new(BilinearControl::default()), vec![]).unwrap();
        let rm = Arc::new(ReducedModel::exact(model.clone(), HoPodBasis::identity(&[5, 5]).unwrap()).unwrap());
        let y = vec![DenseTensor::from_fn(&[5, 5], |i| (i[0] + i[1]) as f64)];
        let full = FullOrderStepper::new(model, 0.1).unwrap().step(&y, -1.0, 0.0).unwrap();
        let red = rm.stepper(0.1).unwrap().step(&rm.project(&y).unwrap(), -1.0, 0.0).unwrap();
        assert!(rm.lift(&red).unwrap()[0].sub(&full[0]).unwrap().max_abs() < 1e-12);
    }
}
