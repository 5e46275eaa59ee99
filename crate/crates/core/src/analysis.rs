//! Logarithmic norms, the constants of the reduced-order error estimate and
//! a-posteriori checks of the state and value bounds.
//!
//! Several state components are treated as one block-diagonal system: every
//! norm and logarithmic norm below is the maximum over components. Constants
//! are reported as `f64` whatever the working precision.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::Fields;
use crate::linalg::{spectral_norm, sym_part_max_eig};
use crate::reduction::{projector_apply, NonlinearTreatment, ReducedModel};
use crate::tensor::{kron_matrix, DenseTensor};
use crate::{Error, Result, Scalar};

/// `μ(A) = λ_max((A + Aᵀ)/2)`.
pub fn log_norm<T: Scalar>(a: &DMatrix<T>) -> Result<T> {
    sym_part_max_eig(a)
}

/// `μ(Σ_m I ⊗ … ⊗ A_m ⊗ … ⊗ I) = Σ_m μ(A_m)`.
pub fn kron_sum_log_norm<T: Scalar>(mats: &[DMatrix<T>]) -> Result<T> {
    mats.iter().try_fold(T::zero(), |acc, a| Ok(acc + log_norm(a)?))
}

/// `‖V_Yᵀ L‖₂` for `L = Σ_m I ⊗ … ⊗ A_m ⊗ … ⊗ I` and `V_Y = ⊗ V_m`, from the
/// `∏ k_m`-sized Gram matrix of `Lᵀ V_Y`. Its `(m, m')` blocks are
/// `V_mᵀ A_m A_mᵀ V_m` on the diagonal and `Â_m ⊗ Â_{m'}ᵀ` off it.
pub fn projected_operator_norm<T: Scalar>(a: &[DMatrix<T>], v: &[DMatrix<T>], cap: usize) -> Result<T> {
    if a.len() != v.len() {
        return Err(Error::mismatch("projected_operator_norm", a.len(), v.len()));
    }
    let d = a.len();
    let ks: Vec<usize> = v.iter().map(|x| x.ncols()).collect();
    let eye: Vec<DMatrix<T>> = ks.iter().map(|&k| DMatrix::identity(k, k)).collect();
    let a_hat: Vec<DMatrix<T>> = a.iter().zip(v).map(|(am, vm)| vm.transpose() * am * vm).collect();
    let total: usize = ks.iter().product();
    let mut gram = DMatrix::<T>::zeros(total, total);
    for m in 0..d {
        for mp in 0..d {
            let mut f = eye.clone();
            if m == mp {
                let w = a[m].transpose() * &v[m];
                f[m] = w.transpose() * w;
            } else {
                f[m] = a_hat[m].clone();
                f[mp] = a_hat[mp].transpose();
            }
            gram += kron_matrix(&f, cap)?;
        }
    }
    Ok(sym_part_max_eig(&gram)?.max(T::zero()).sqrt())
}

/// Where the Lipschitz constant of `y ↦ f(y, u, t)` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LipschitzSource {
    /// Given on the model.
    Supplied,
    /// Closed form of the nonlinearity on a ball of the given radius.
    Analytic,
    /// Largest difference quotient over sampled states; an estimate, not a
    /// bound.
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lipschitz {
    pub value: f64,
    pub source: LipschitzSource,
}

/// Picks `L_f`: supplied constant, else the closed form on the ball of
/// radius `max ‖y‖_∞` over `states`, else difference quotients between
/// `states` for every control.
pub fn lipschitz_constant<T: Scalar>(red: &ReducedModel<T>, controls: &[T], states: &[Fields<T>]) -> Result<Lipschitz> {
    let model = red.model();
    if let Some(v) = model.lipschitz.l_f {
        return Ok(Lipschitz {
            value: v,
            source: LipschitzSource::Supplied,
        });
    }
    let radius = states
        .iter()
        .flat_map(|y| y.iter().map(|c| c.max_abs()))
        .fold(T::zero(), |a, b| a.max(b));
    if let Some(v) = model.nonlinear().lipschitz(radius, controls) {
        return Ok(Lipschitz {
            value: v.as_f64(),
            source: LipschitzSource::Analytic,
        });
    }
    let mut best = 0.0f64;
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            let dy = field_distance_sq(a, b)?.sqrt();
            if dy == T::zero() {
                continue;
            }
            for &u in controls {
                let fa = model.eval_nonlinear(a, u, T::zero())?;
                let fb = model.eval_nonlinear(b, u, T::zero())?;
                best = best.max((field_distance_sq(&fa, &fb)?.sqrt() / dy).as_f64());
            }
        }
    }
    Ok(Lipschitz {
        value: best,
        source: LipschitzSource::Sampled,
    })
}

fn field_distance_sq<T: Scalar>(a: &[DenseTensor<T>], b: &[DenseTensor<T>]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::mismatch("field distance", a.len(), b.len()));
    }
    a.iter().zip(b).try_fold(T::zero(), |acc, (x, y)| Ok(acc + x.sub(y)?.norm_squared()))
}

/// Constants of the reduced-order state estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    /// `μ(V_Yᵀ L V_Y)`.
    pub mu_hat: f64,
    pub zeta: f64,
    pub eta: f64,
    pub l_f: Lipschitz,
    /// `‖V_Yᵀ ℙ‖`.
    pub vt_p_norm: f64,
    /// `L_f ‖V_Yᵀ ℙ‖`.
    pub gamma_lip: f64,
    pub q: f64,
    /// `‖V_Yᵀ L‖`.
    pub vt_l_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c_const: f64,
    pub ct: f64,
}

impl ErrorBudget {
    /// `C(T) (E_y + E_f)`.
    pub fn state_rhs(&self, e_y: f64, e_f: f64) -> f64 {
        self.ct * (e_y + e_f)
    }

    /// `C(T) (Δt + E_y + E_f)`.
    pub fn value_rhs(&self, e_y: f64, e_f: f64) -> f64 {
        self.ct * (self.dt + e_y + e_f)
    }
}

/// `q = Σ_{k<n} x^{2k}`.
pub fn geometric_q(x: f64, n: usize) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut q = 0.0;
    for _ in 0..n {
        q += term;
        term *= x2;
    }
    q
}

/// Evaluates every constant of the estimate for `red` at step `dt` over
/// `[0, t_final]`. Refuses when `dt μ̂ ≥ 1`.
pub fn compute_budget<T: Scalar>(red: &ReducedModel<T>, dt: T, t_final: T, l_f: Lipschitz, cap: usize) -> Result<ErrorBudget> {
    if !(dt > T::zero()) || !(t_final > T::zero()) {
        return Err(Error::Argument("dt and t_final must be positive".into()));
    }
    let model = red.model();
    let a = model.a_mats();
    let mut mu_hat = f64::NEG_INFINITY;
    let mut vt_l = 0.0f64;
    let mut vt_p = 0.0f64;
    let mut c_const = 0.0f64;
    for (c, comp) in red.components().iter().enumerate() {
        let v = comp.state.factors()?;
        mu_hat = mu_hat.max(kron_sum_log_norm(red.a_hat(c))?.as_f64());
        vt_l = vt_l.max(projected_operator_norm(a, v, cap)?.as_f64());
        let (p, cc) = match (red.treatment(), &comp.deim) {
            (NonlinearTreatment::Deim, Some(deim)) => {
                let g = deim.small_factors(v)?;
                (g.iter().fold(1.0, |acc, gm| acc * spectral_norm(gm).as_f64()), deim.c_const().as_f64())
            }
            // ℙ = I: ‖V_Yᵀ‖ = 1
            _ => (1.0, 1.0),
        };
        vt_p = vt_p.max(p);
        c_const = c_const.max(cc);
    }
    let dt = dt.as_f64();
    let t_final = t_final.as_f64();
    let product = dt * mu_hat;
    if !(product < 1.0) {
        return Err(Error::Hypothesis { product });
    }
    let steps = (t_final / dt).round() as usize;
    let zeta = 1.0 / (1.0 - product);
    let gamma_lip = l_f.value * vt_p;
    let eta = 1.0 + dt * gamma_lip;
    let q = geometric_q(zeta * eta, steps);
    let alpha = vt_l + gamma_lip;
    // ‖V_Yᵀ‖ = 1 for orthonormal factors
    let beta = c_const;
    let s = 2.0 * q * zeta * zeta * t_final * dt;
    let ct = (1.0 + s * alpha * alpha).max(s * beta * beta);
    Ok(ErrorBudget {
        dt,
        t_final,
        steps,
        mu_hat,
        zeta,
        eta,
        l_f,
        vt_p_norm: vt_p,
        gamma_lip,
        q,
        vt_l_norm: vt_l,
        alpha,
        beta,
        c_const,
        ct,
    })
}

/// `(E_y, E_f)`: squared distances of the states to the state spaces and of
/// the nonlinear terms to the interpolation spaces. `E_f` is zero when no
/// interpolation is used.
pub fn projection_residuals<T: Scalar>(red: &ReducedModel<T>, states: &[Fields<T>], f_evals: &[Fields<T>]) -> Result<(T, T)> {
    let comps = red.components();
    let mut e_y = T::zero();
    for y in states {
        if y.len() != comps.len() {
            return Err(Error::mismatch("projection_residuals", comps.len(), y.len()));
        }
        for (yc, comp) in y.iter().zip(comps) {
            e_y += yc.sub(&projector_apply(comp.state.factors()?, yc)?)?.norm_squared();
        }
    }
    let mut e_f = T::zero();
    if red.treatment() == NonlinearTreatment::Deim {
        for f in f_evals {
            if f.len() != comps.len() {
                return Err(Error::mismatch("projection_residuals", comps.len(), f.len()));
            }
            for (fc, comp) in f.iter().zip(comps) {
                let deim = comp.deim.as_ref().ok_or_else(|| Error::Argument("interpolation data missing".into()))?;
                e_f += fc.sub(&projector_apply(deim.phi(), fc)?)?.norm_squared();
            }
        }
    }
    Ok((e_y, e_f))
}

/// Full-order nonlinear terms `f(y^j, u^j, t^j)` for `j < controls.len()`.
pub fn nonlinear_terms<T: Scalar>(red: &ReducedModel<T>, states: &[Fields<T>], controls: &[T], t0: T, dt: T) -> Result<Vec<Fields<T>>> {
    if states.len() < controls.len() {
        return Err(Error::mismatch("nonlinear_terms", controls.len(), states.len()));
    }
    controls
        .iter()
        .enumerate()
        .map(|(j, &u)| red.model().eval_nonlinear(&states[j], u, t0 + dt * T::from_count(j)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBoundReport {
    /// `Σ_k ‖y^k − V_Y ŷ^k‖²`.
    pub lhs: f64,
    pub rhs: f64,
    pub e_y: f64,
    pub e_f: f64,
    pub ct: f64,
    /// `lhs / rhs`; 0 when both vanish.
    pub ratio: f64,
    /// Rounding allowance added to `rhs`: `64 ε Σ_k ‖y^k‖²`.
    pub floor: f64,
    pub pass: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

/// Compares a full trajectory with the lifted reduced trajectory driven by
/// the same controls.
pub fn verify_state_bound<T: Scalar>(
    red: &ReducedModel<T>,
    full: &[Fields<T>],
    reduced: &[Fields<T>],
    controls: &[T],
    t0: T,
    budget: &ErrorBudget,
) -> Result<StateBoundReport> {
    if full.len() != reduced.len() || full.len() != controls.len() + 1 {
        return Err(Error::mismatch("verify_state_bound", controls.len() + 1, format!("{} / {}", full.len(), reduced.len())));
    }
    let mut lhs = T::zero();
    let mut energy = T::zero();
    for (y, yr) in full.iter().zip(reduced) {
        lhs += field_distance_sq(y, &red.lift(yr)?)?;
        energy += y.iter().fold(T::zero(), |acc, c| acc + c.norm_squared());
    }
    let f = nonlinear_terms(red, full, controls, t0, T::lit(budget.dt))?;
    let (e_y, e_f) = projection_residuals(red, full, &f)?;
    let (lhs, e_y, e_f) = (lhs.as_f64(), e_y.as_f64(), e_f.as_f64());
    let rhs = budget.state_rhs(e_y, e_f);
    let floor = 64.0 * T::epsilon().as_f64() * energy.as_f64();
    Ok(StateBoundReport {
        lhs,
        rhs,
        e_y,
        e_f,
        ct: budget.ct,
        ratio: ratio(lhs, rhs),
        floor,
        pass: lhs <= rhs + floor,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueBoundReport {
    pub v_full: f64,
    pub v_reduced: f64,
    pub gap: f64,
    pub rhs: f64,
    pub dt: f64,
    pub e_y: f64,
    pub e_f: f64,
    pub ct: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// `|V⁰ − V̂⁰| ≤ C(T) (Δt + E_y + E_f)` for root values of a full and a
/// reduced tree built on the same grid and step.
pub fn verify_value_bound(v_full: f64, v_reduced: f64, budget: &ErrorBudget, e_y: f64, e_f: f64) -> ValueBoundReport {
    let gap = (v_full - v_reduced).abs();
    let rhs = budget.value_rhs(e_y, e_f);
    ValueBoundReport {
        v_full,
        v_reduced,
        gap,
        rhs,
        dt: budget.dt,
        e_y,
        e_f,
        ct: budget.ct,
        ratio: ratio(gap, rhs),
        pass: gap <= rhs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AdvectionScheme, Axis, BilinearControl, Boundary, FullOrderStepper, SemilinearModel};
    use crate::reduction::{read_basis, write_basis, BasisBundle, ComponentFactors, HoPodBasis};
    use crate::tensor::{kron_sum_matrix, DEFAULT_ORACLE_CAP};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn random_matrix(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// `sup_{|x|=1} xᵀAx` by random sampling followed by random-perturbation
    /// ascent from the best sample.
    fn sampled_sup(a: &DMatrix<f64>, rng: &mut impl Rng, samples: usize) -> f64 {
        let n = a.nrows();
        let quad = |x: &nalgebra::DVector<f64>| (x.transpose() * a * x)[(0, 0)] / x.norm_squared();
        let mut best_x = nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mut best = quad(&best_x);
        for _ in 0..samples {
            let x = nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let v = quad(&x);
            if v > best {
                best = v;
                best_x = x;
            }
        }
        let mut step = 0.1;
        for _ in 0..samples {
            let x = &best_x + nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-step..step));
            let v = quad(&x);
            if v > best {
                best = v;
                best_x = x / 1.0;
            } else {
                step *= 0.999;
            }
        }
        best
    }

    #[test]
    fn log_norm_trivial_cases() {
        let eye = DMatrix::<f64>::identity(4, 4);
        assert!((log_norm(&(-eye)).unwrap() + 1.0).abs() < 1e-15);
        let s = DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((log_norm(&s).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn log_norm_matches_sampled_definition() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for n in [5usize, 8] {
            for _ in 0..3 {
                let a = random_matrix(&mut rng, n);
                let mu = log_norm(&a).unwrap();
                let sup = sampled_sup(&a, &mut rng, 100_000);
                assert!(sup <= mu + 1e-12, "{sup} > {mu}");
                assert!(mu - sup < 1e-3, "n={n}: {mu} vs {sup}");
            }
        }
    }

    #[test]
    fn kron_sum_log_norm_is_additive() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(6);
        let mats = vec![random_matrix(&mut rng, 3), random_matrix(&mut rng, 4)];
        let dense = kron_sum_matrix(&mats, DEFAULT_ORACLE_CAP).unwrap();
        assert!((kron_sum_log_norm(&mats).unwrap() - log_norm(&dense).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn projected_operator_norm_matches_dense() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for dims in [vec![5usize, 4], vec![4, 3, 5]] {
            let a: Vec<DMatrix<f64>> = dims.iter().map(|&n| random_matrix(&mut rng, n)).collect();
            let v: Vec<DMatrix<f64>> = dims
                .iter()
                .map(|&n| {
                    let k = n - 2;
                    random_matrix(&mut rng, n).qr().q().columns(0, k).into_owned()
                })
                .collect();
            let fast = projected_operator_norm(&a, &v, DEFAULT_ORACLE_CAP).unwrap();
            let l = kron_sum_matrix(&a, DEFAULT_ORACLE_CAP).unwrap();
            let vv = kron_matrix(&v, DEFAULT_ORACLE_CAP).unwrap();
            let dense = spectral_norm(&(vv.transpose() * l));
            assert!((fast - dense).abs() < 1e-10 * dense, "{fast} vs {dense}");
        }
    }

    fn heat_model(n: usize) -> SemilinearModel<f64> {
        let axes = vec![Axis::new(0.0, 1.0, n, Boundary::Dirichlet).unwrap(); 2];
        SemilinearModel::from_axes(axes, 0.1, &[0.0, 0.0], AdvectionScheme::Upwind, Arc::new(BilinearControl::default()), Vec::new()).unwrap()
    }

    fn identity_reduction(n: usize) -> ReducedModel<f64> {
        ReducedModel::exact(heat_model(n), HoPodBasis::identity(&[n, n]).unwrap()).unwrap()
    }

    #[test]
    fn identity_reduction_specializes_constants() {
        let red = identity_reduction(6);
        let lf = Lipschitz { value: 0.0, source: LipschitzSource::Supplied };
        let b = compute_budget(&red, 0.1, 1.0, lf, DEFAULT_ORACLE_CAP).unwrap();
        let l = kron_sum_matrix(red.model().a_mats(), DEFAULT_ORACLE_CAP).unwrap();
        assert_eq!(b.gamma_lip, 0.0);
        assert_eq!(b.eta, 1.0);
        assert!((b.alpha - spectral_norm(&l)).abs() < 1e-10 * b.alpha);
        assert_eq!(b.beta, b.c_const);
        assert!(b.mu_hat < 0.0 && b.zeta < 1.0 && b.ct >= 1.0);
        assert_eq!(b.steps, 10);
    }

    #[test]
    fn hypothesis_gate_reports_product() {
        let axes = vec![Axis::new(0.0, 1.0, 5, Boundary::Dirichlet).unwrap(); 2];
        // anti-diffusion: A_m positive definite
        let model =
            SemilinearModel::from_axes(axes, -0.1, &[0.0, 0.0], AdvectionScheme::Upwind, Arc::new(BilinearControl::default()), Vec::new())
                .unwrap();
        let red = ReducedModel::exact(model, HoPodBasis::identity(&[5, 5]).unwrap()).unwrap();
        let lf = Lipschitz { value: 1.0, source: LipschitzSource::Supplied };
        match compute_budget(&red, 0.5, 1.0, lf, DEFAULT_ORACLE_CAP) {
            Err(Error::Hypothesis { product }) => assert!(product >= 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contractive_case_bounds_q() {
        // γ ≤ −μ̂ gives ζη ≤ 1 and q ≤ 1/(1 − (ζη)²)
        let red = identity_reduction(8);
        let mu = kron_sum_log_norm(red.a_hat(0)).unwrap();
        let lf = Lipschitz { value: -mu, source: LipschitzSource::Supplied };
        let b = compute_budget(&red, 0.05, 1.0, lf, DEFAULT_ORACLE_CAP).unwrap();
        let x = b.zeta * b.eta;
        assert!(x <= 1.0 + 1e-15);
        let lf = Lipschitz { value: -0.5 * mu, source: LipschitzSource::Supplied };
        let b = compute_budget(&red, 0.05, 1.0, lf, DEFAULT_ORACLE_CAP).unwrap();
        let x = b.zeta * b.eta;
        assert!(x < 1.0);
        assert!(b.q <= 1.0 / (1.0 - x * x));
    }

    #[test]
    fn geometric_q_sums() {
        assert_eq!(geometric_q(0.5, 0), 0.0);
        assert_eq!(geometric_q(0.5, 3), 1.0 + 0.25 + 0.0625);
        assert_eq!(geometric_q(1.0, 7), 7.0);
    }

    #[test]
    fn residuals_trivial_cases() {
        let n = 5;
        let v = DMatrix::from_fn(n, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let red = ReducedModel::exact(heat_model(n), HoPodBasis::from_factors(vec![v.clone(), v]).unwrap()).unwrap();
        let inside = vec![DenseTensor::from_fn(&[n, n], |i| if i == [0, 0] { 3.0 } else { 0.0 })];
        let (ey, ef) = projection_residuals(&red, &[inside], &[]).unwrap();
        assert_eq!((ey, ef), (0.0, 0.0));
        let orth = vec![DenseTensor::from_fn(&[n, n], |i| if i[0] > 0 { 1.0 } else { 0.0 })];
        let (ey, _) = projection_residuals(&red, std::slice::from_ref(&orth), &[]).unwrap();
        assert!((ey - orth[0].norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn residuals_match_dense_projector() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        let n = 6;
        let v: Vec<DMatrix<f64>> = (0..2).map(|_| random_matrix(&mut rng, n).qr().q().columns(0, 3).into_owned()).collect();
        let red = ReducedModel::exact(heat_model(n), HoPodBasis::from_factors(v.clone()).unwrap()).unwrap();
        let y = vec![DenseTensor::from_fn(&[n, n], |_| rng.gen_range(-1.0..1.0))];
        let (ey, _) = projection_residuals(&red, std::slice::from_ref(&y), &[]).unwrap();
        let vv = kron_matrix(&v, DEFAULT_ORACLE_CAP).unwrap();
        let x = y[0].vec();
        let dense = (&x - &vv * (vv.transpose() * &x)).norm_squared();
        assert!((ey - dense).abs() < 1e-12);
    }

    #[test]
    fn identity_reduction_has_zero_gap() {
        let n = 6;
        let red = identity_reduction(n);
        let y0 = vec![DenseTensor::from_fn(&[n, n], |i| ((i[0] + 1) * (i[1] + 2)) as f64 / 10.0)];
        let controls = [-1.0, 0.0, -1.0, -0.5];
        let full = FullOrderStepper::new(heat_model(n), 0.1).unwrap().trajectory(&y0, &controls, 0.0).unwrap();
        let red = Arc::new(red);
        let reduced = red.stepper(0.1).unwrap().trajectory(&red.project(&y0).unwrap(), &controls, 0.0).unwrap();
        let lf = lipschitz_constant(&red, &controls, &full).unwrap();
        assert_eq!(lf.source, LipschitzSource::Analytic);
        assert_eq!(lf.value, 1.0);
        let b = compute_budget(&red, 0.1, 0.4, lf, DEFAULT_ORACLE_CAP).unwrap();
        let r = verify_state_bound(&red, &full, &reduced, &controls, 0.0, &b).unwrap();
        assert!(r.pass && r.e_y < 1e-28 && r.lhs < 1e-24, "{r:?}");
        let v = verify_value_bound(1.25, 1.25, &b, 0.0, 0.0);
        assert!(v.pass && v.gap == 0.0);
    }

    #[test]
    fn budget_is_reproducible_from_a_basis_file() {
        let n = 7;
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let v: Vec<DMatrix<f64>> = (0..2).map(|_| random_matrix(&mut rng, n).qr().q().columns(0, 3).into_owned()).collect();
        let basis = HoPodBasis::from_factors(v).unwrap();
        let red = ReducedModel::exact(heat_model(n), basis.clone()).unwrap();
        let lf = Lipschitz { value: 1.0, source: LipschitzSource::Analytic };
        let b1 = compute_budget(&red, 0.1, 1.0, lf, DEFAULT_ORACLE_CAP).unwrap();
        let bundle = BasisBundle {
            components: vec![ComponentFactors::from_bases(&basis, None).unwrap()],
            meta: serde_json::Value::Null,
        };
        let mut buf = Vec::new();
        write_basis(&bundle, &mut buf).unwrap();
        let back: BasisBundle<f64> = read_basis(buf.as_slice()).unwrap();
        let comp = back.components[0].to_reduction().unwrap();
        let red2 = ReducedModel::new(heat_model(n), vec![comp], NonlinearTreatment::Exact).unwrap();
        let b2 = compute_budget(&red2, 0.1, 1.0, lf, DEFAULT_ORACLE_CAP).unwrap();
        assert_eq!(serde_json::to_string(&b1).unwrap(), serde_json::to_string(&b2).unwrap());
    }
}
