//! Plane-strain total-Lagrangian solver on bilinear quads with
//! density-interpolated Mooney-Rivlin energy and Newton load stepping.

use nalgebra::{DVector, Matrix2, SMatrix};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};
use thiserror::Error;

use crate::grid::Grid;
use crate::material::{self, Material};
use crate::par;
use crate::pbc::ConstraintSet;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("element inversion (det F <= 0) in element {0}")]
    ElementInversion(usize),
    #[error("linear system is not positive definite")]
    SingularSystem,
    #[error("newton did not converge after exhausting load-step cutbacks")]
    NoConvergence,
    #[error("result requested from an unconverged state")]
    StaleState,
}

/// Energy interpolation parameters blending linear and nonlinear kinematics
/// by element density.
#[derive(Debug, Clone, Copy)]
pub struct InterpolationParams {
    /// Density threshold separating linear and nonlinear treatment.
    pub x0: f64,
    /// Sharpness of the threshold transition.
    pub beta1: f64,
    /// Stiffness penalization exponent.
    pub pl: f64,
    /// Residual stiffness scale for void elements.
    pub eps: f64,
}

impl Default for InterpolationParams {
    fn default() -> Self {
        Self {
            x0: 0.01,
            beta1: 500.0,
            pl: 3.0,
            eps: 1e-5,
        }
    }
}

impl InterpolationParams {
    /// Threshold factor gamma(x) and its density derivative.
    pub fn gamma(&self, x: f64) -> (f64, f64) {
        let denom = (self.beta1 * self.x0).tanh() + (self.beta1 * (1.0 - self.x0)).tanh();
        let t = (self.beta1 * (x - self.x0)).tanh();
        let g = ((self.beta1 * self.x0).tanh() + t) / denom;
        let dg = self.beta1 * (1.0 - t * t) / denom;
        (g, dg)
    }

    /// Stiffness scale E(x) and its density derivative.
    pub fn scale(&self, x: f64) -> (f64, f64) {
        (
            x.powf(self.pl) * (1.0 - self.eps) + self.eps,
            self.pl * x.powf(self.pl - 1.0) * (1.0 - self.eps),
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub n_load_steps: usize,
    /// Relative residual tolerance per load step.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub max_cutbacks: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            n_load_steps: 15,
            newton_tol: 1e-8,
            max_newton_iters: 25,
            max_cutbacks: 6,
        }
    }
}

const GP: f64 = 0.577_350_269_189_625_8;

/// Precomputed quadrature data shared by all (identical, square) elements.
#[derive(Debug, Clone)]
pub struct ElementKernel {
    /// dN/dX per Gauss point per node.
    dndx: [[[f64; 2]; 4]; 4],
    /// Quadrature weight times Jacobian determinant.
    wdetj: f64,
    /// Small-strain element stiffness.
    klin: SMatrix<f64, 8, 8>,
}

impl ElementKernel {
    pub fn new(h: f64, mat: &Material) -> Self {
        let gps = [(-GP, -GP), (GP, -GP), (GP, GP), (-GP, GP)];
        let mut dndx = [[[0.0; 2]; 4]; 4];
        for (g, &(xi, eta)) in gps.iter().enumerate() {
            let dn_dxi = [
                [-(1.0 - eta) / 4.0, -(1.0 - xi) / 4.0],
                [(1.0 - eta) / 4.0, -(1.0 + xi) / 4.0],
                [(1.0 + eta) / 4.0, (1.0 + xi) / 4.0],
                [-(1.0 + eta) / 4.0, (1.0 - xi) / 4.0],
            ];
            for i in 0..4 {
                dndx[g][i][0] = dn_dxi[i][0] * 2.0 / h;
                dndx[g][i][1] = dn_dxi[i][1] * 2.0 / h;
            }
        }
        let wdetj = h * h / 4.0;

        let mu = mat.shear_modulus();
        let la = mat.lame_lambda();
        let d = nalgebra::Matrix3::new(
            la + 2.0 * mu,
            la,
            0.0,
            la,
            la + 2.0 * mu,
            0.0,
            0.0,
            0.0,
            mu,
        );
        let mut klin = SMatrix::<f64, 8, 8>::zeros();
        for g in 0..4 {
            let mut b = SMatrix::<f64, 3, 8>::zeros();
            for i in 0..4 {
                b[(0, 2 * i)] = dndx[g][i][0];
                b[(1, 2 * i + 1)] = dndx[g][i][1];
                b[(2, 2 * i)] = dndx[g][i][1];
                b[(2, 2 * i + 1)] = dndx[g][i][0];
            }
            klin += wdetj * b.transpose() * d * b;
        }
        Self { dndx, wdetj, klin }
    }

    /// Deformation gradient at one Gauss point for local displacements `v`.
    pub fn deformation_gradient(&self, v: &[f64; 8], gp: usize) -> Matrix2<f64> {
        let n = &self.dndx[gp];
        let mut f = Matrix2::identity();
        for i in 0..4 {
            for a in 0..2 {
                for b in 0..2 {
                    f[(a, b)] += v[2 * i + a] * n[i][b];
                }
            }
        }
        f
    }

    /// Nonlinear element energy, internal force and tangent at `v`.
    pub fn nonlinear(
        &self,
        mat: &Material,
        v: &[f64; 8],
    ) -> Result<(f64, [f64; 8], SMatrix<f64, 8, 8>), ()> {
        let mut energy = 0.0;
        let mut force = [0.0; 8];
        let mut k = SMatrix::<f64, 8, 8>::zeros();
        for gp in 0..4 {
            let f = self.deformation_gradient(v, gp);
            if f.determinant() <= 0.0 {
                return Err(());
            }
            let st = material::mr_stress_tangent(&f, mat);
            energy += self.wdetj * st.energy;
            let n = &self.dndx[gp];
            // dC/du in reduced Voigt form, per local dof
            let mut bv = [[0.0; 3]; 8];
            for j in 0..2 {
                for nn in 0..4 {
                    let p = 2 * nn + j;
                    bv[p][0] = 2.0 * f[(j, 0)] * n[nn][0];
                    bv[p][1] = 2.0 * f[(j, 1)] * n[nn][1];
                    bv[p][2] = n[nn][0] * f[(j, 1)] + f[(j, 0)] * n[nn][1];
                }
            }
            for p in 0..8 {
                force[p] += self.wdetj
                    * (0.5 * st.s[0] * bv[p][0] + 0.5 * st.s[1] * bv[p][1] + st.s[2] * bv[p][2]);
            }
            // material part: dS_voigt/du_q = M b_q, weighted like the force
            for q in 0..8 {
                let mb = [
                    st.m[0][0] * bv[q][0] + st.m[0][1] * bv[q][1] + st.m[0][2] * bv[q][2],
                    st.m[1][0] * bv[q][0] + st.m[1][1] * bv[q][1] + st.m[1][2] * bv[q][2],
                    st.m[2][0] * bv[q][0] + st.m[2][1] * bv[q][1] + st.m[2][2] * bv[q][2],
                ];
                for p in 0..8 {
                    k[(p, q)] += self.wdetj
                        * (0.5 * bv[p][0] * mb[0] + 0.5 * bv[p][1] * mb[1] + bv[p][2] * mb[2]);
                }
            }
            // geometric part
            let s = Matrix2::new(st.s[0], st.s[2], st.s[2], st.s[1]);
            for nn in 0..4 {
                for mm in 0..4 {
                    let mut g = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            g += n[nn][a] * s[(a, b)] * n[mm][b];
                        }
                    }
                    let g = self.wdetj * g;
                    k[(2 * nn, 2 * mm)] += g;
                    k[(2 * nn + 1, 2 * mm + 1)] += g;
                }
            }
        }
        Ok((energy, force, k))
    }

    /// Gauss-point average of the base-material energy density at `v`, and
    /// its derivative with respect to the local displacements.
    pub fn base_energy_density(&self, mat: &Material, v: &[f64; 8]) -> Result<(f64, [f64; 8]), ()> {
        let mut e = 0.0;
        let mut de = [0.0; 8];
        for gp in 0..4 {
            let f = self.deformation_gradient(v, gp);
            if f.determinant() <= 0.0 {
                return Err(());
            }
            let st = material::mr_stress_tangent(&f, mat);
            e += 0.25 * st.energy;
            let n = &self.dndx[gp];
            for j in 0..2 {
                for nn in 0..4 {
                    let b0 = 2.0 * f[(j, 0)] * n[nn][0];
                    let b1 = 2.0 * f[(j, 1)] * n[nn][1];
                    let b2 = n[nn][0] * f[(j, 1)] + f[(j, 0)] * n[nn][1];
                    de[2 * nn + j] += 0.25 * (0.5 * st.s[0] * b0 + 0.5 * st.s[1] * b1 + st.s[2] * b2);
                }
            }
        }
        Ok((e, de))
    }
}

/// Output of one interpolated element evaluation.
pub struct ElementOutput {
    pub energy: f64,
    pub force: [f64; 8],
    pub tangent: Option<SMatrix<f64, 8, 8>>,
    /// d force / d density, when requested.
    pub dforce_dx: Option<[f64; 8]>,
}

/// Assembled global quantities.
pub struct Assembly {
    pub energy: f64,
    pub f_int: DVector<f64>,
    pub tangent: Option<CooMatrix<f64>>,
}

/// FE model: grid, material and per-element densities.
pub struct FeModel {
    pub grid: Grid,
    pub material: Material,
    pub interp: InterpolationParams,
    /// Physical density per element (FEM input).
    pub densities: Vec<f64>,
    pub kernel: ElementKernel,
}

impl FeModel {
    pub fn new(
        grid: Grid,
        material: Material,
        interp: InterpolationParams,
        densities: Vec<f64>,
    ) -> Self {
        assert_eq!(densities.len(), grid.n_elems());
        let kernel = ElementKernel::new(grid.h, &material);
        Self {
            grid,
            material,
            interp,
            densities,
            kernel,
        }
    }

    pub fn gather(&self, u: &DVector<f64>, e: usize) -> [f64; 8] {
        let dofs = self.grid.elem_dofs(e);
        let mut v = [0.0; 8];
        for (k, &d) in dofs.iter().enumerate() {
            v[k] = u[d];
        }
        v
    }

    /// Interpolated energy/force/tangent of one element.
    pub fn element(
        &self,
        e: usize,
        u: &DVector<f64>,
        want_tangent: bool,
        want_dx: bool,
    ) -> Result<ElementOutput, FemError> {
        let v = self.gather(u, e);
        let x = self.densities[e];
        let (g, dg) = self.interp.gamma(x);
        let (sc, dsc) = self.interp.scale(x);

        let mut vg = v;
        for val in &mut vg {
            *val *= g;
        }
        let (phi_nl, f_nl, k_nl) = self
            .kernel
            .nonlinear(&self.material, &vg)
            .map_err(|_| FemError::ElementInversion(e))?;

        let vv = nalgebra::SVector::<f64, 8>::from_row_slice(&v);
        let flin = self.kernel.klin * vv;
        let phi_lin = 0.5 * vv.dot(&flin);
        let g2 = g * g;

        let energy = sc * (phi_nl - g2 * phi_lin + phi_lin);
        let mut force = [0.0; 8];
        for p in 0..8 {
            force[p] = sc * (g * f_nl[p] + (1.0 - g2) * flin[p]);
        }
        let tangent = want_tangent.then(|| sc * (g2 * k_nl + (1.0 - g2) * self.kernel.klin));
        let dforce_dx = want_dx.then(|| {
            let knl_u = k_nl * vv;
            let mut d = [0.0; 8];
            for p in 0..8 {
                d[p] = dsc * (g * f_nl[p] + (1.0 - g2) * flin[p])
                    + sc * dg * (f_nl[p] + g * knl_u[p] - 2.0 * g * flin[p]);
            }
            d
        });
        Ok(ElementOutput {
            energy,
            force,
            tangent,
            dforce_dx,
        })
    }

    /// Assemble total energy, internal force and (optionally) the tangent.
    pub fn assemble(&self, u: &DVector<f64>, want_tangent: bool) -> Result<Assembly, FemError> {
        let m = self.grid.n_elems();
        let results: Vec<Result<ElementOutput, FemError>> =
            par::map_indexed(m, |e| self.element(e, u, want_tangent, false));

        let n = self.grid.n_dofs();
        let mut energy = 0.0;
        let mut f_int = DVector::zeros(n);
        let mut coo = want_tangent.then(|| CooMatrix::new(n, n));
        for (e, res) in results.into_iter().enumerate() {
            let out = res?;
            energy += out.energy;
            let dofs = self.grid.elem_dofs(e);
            for (p, &dp) in dofs.iter().enumerate() {
                f_int[dp] += out.force[p];
            }
            if let (Some(coo), Some(k)) = (coo.as_mut(), out.tangent.as_ref()) {
                for (p, &dp) in dofs.iter().enumerate() {
                    for (q, &dq) in dofs.iter().enumerate() {
                        coo.push(dp, dq, k[(p, q)]);
                    }
                }
            }
        }
        Ok(Assembly {
            energy,
            f_int,
            tangent: coo,
        })
    }

    /// Gauss-averaged failure-energy measure per element: the base-material
    /// energy density weighted by the element stiffness scale E(x̄). The
    /// weighting vanishes with the density, so soft elements — whose strain
    /// state is fictitious because their stiffness is scaled down — cannot
    /// dominate the measure, while solid elements (E → 1) report the true
    /// material energy density. Elements at or below the linear/void
    /// threshold are reported as zero.
    pub fn element_energies(&self, u: &DVector<f64>) -> Result<Vec<f64>, FemError> {
        let m = self.grid.n_elems();
        let vals: Vec<Result<f64, FemError>> = par::map_indexed(m, |e| {
            if self.densities[e] <= self.interp.x0 {
                return Ok(0.0);
            }
            let (sc, _) = self.interp.scale(self.densities[e]);
            let v = self.gather(u, e);
            self.kernel
                .base_energy_density(&self.material, &v)
                .map(|(en, _)| sc * en)
                .map_err(|_| FemError::ElementInversion(e))
        });
        vals.into_iter().collect()
    }
}

/// Direct sparse solver with boundary-last DOF ordering: the periodic rows
/// couple opposite edges, and pushing edge DOFs to the tail keeps the
/// interior factor banded.
pub struct LinearSolver {
    perm: Vec<usize>,
    n: usize,
}

impl LinearSolver {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.n_dofs();
        let mut order: Vec<usize> = Vec::with_capacity(n);
        let boundary = |ix: usize, iy: usize| ix == 0 || iy == 0 || ix == grid.nx || iy == grid.ny;
        for iy in 0..=grid.ny {
            for ix in 0..=grid.nx {
                if !boundary(ix, iy) {
                    let node = grid.node_index(ix, iy);
                    order.push(2 * node);
                    order.push(2 * node + 1);
                }
            }
        }
        for iy in 0..=grid.ny {
            for ix in 0..=grid.nx {
                if boundary(ix, iy) {
                    let node = grid.node_index(ix, iy);
                    order.push(2 * node);
                    order.push(2 * node + 1);
                }
            }
        }
        let mut perm = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            perm[old] = new;
        }
        Self { perm, n }
    }

    /// Factor a symmetric positive definite matrix given by triplets.
    pub fn factor(&self, triplets: &[(usize, usize, f64)]) -> Result<Factorized, FemError> {
        let mut coo = CooMatrix::new(self.n, self.n);
        for &(i, j, v) in triplets {
            coo.push(self.perm[i], self.perm[j], v);
        }
        let csc = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&csc).map_err(|_| FemError::SingularSystem)?;
        Ok(Factorized {
            kind: FactKind::Chol(chol),
            perm: self.perm.clone(),
        })
    }

    /// Factor a symmetric matrix that may be indefinite: Cholesky first,
    /// then an LDL^T fallback. Equilibria past a buckling point have
    /// indefinite tangents but still need adjoint solves.
    pub fn factor_symmetric(&self, triplets: &[(usize, usize, f64)]) -> Result<Factorized, FemError> {
        if let Ok(f) = self.factor(triplets) {
            return Ok(f);
        }
        let mut tri = sprs::TriMat::new((self.n, self.n));
        for &(i, j, v) in triplets {
            tri.add_triplet(i, j, v);
        }
        let mat: sprs::CsMat<f64> = tri.to_csc();
        let fact = sprs_ldl::Ldl::new()
            .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
            .fill_in_reduction(sprs::FillInReduction::ReverseCuthillMcKee)
            .numeric(mat.view())
            .map_err(|_| FemError::SingularSystem)?;
        if !fact.d().iter().all(|d| d.is_finite() && d.abs() > 0.0) {
            return Err(FemError::SingularSystem);
        }
        Ok(Factorized {
            kind: FactKind::Ldl {
                fact: Box::new(fact),
                mat,
            },
            perm: Vec::new(),
        })
    }
}

enum FactKind {
    Chol(CscCholesky<f64>),
    /// Symmetric-indefinite fallback; keeps the assembled matrix so solves
    /// can run one step of iterative refinement (the factorization is
    /// unpivoted).
    Ldl {
        fact: Box<sprs_ldl::LdlNumeric<f64, usize>>,
        mat: sprs::CsMat<f64>,
    },
}

pub struct Factorized {
    kind: FactKind,
    perm: Vec<usize>,
}

impl Factorized {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            FactKind::Chol(chol) => {
                let n = rhs.len();
                let mut pr = DVector::zeros(n);
                for i in 0..n {
                    pr[self.perm[i]] = rhs[i];
                }
                let sol = chol.solve(&pr);
                let mut out = DVector::zeros(n);
                for i in 0..n {
                    out[i] = sol[(self.perm[i], 0)];
                }
                out
            }
            FactKind::Ldl { fact, mat } => {
                let b: Vec<f64> = rhs.iter().copied().collect();
                let mut x = fact.solve(&b);
                // one round of iterative refinement
                let mut r = b.clone();
                for (v, (i, j)) in mat.iter() {
                    r[i] -= v * x[j];
                }
                let dx = fact.solve(&r);
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += di;
                }
                DVector::from_vec(x)
            }
        }
    }
}

/// Penalty-augment a residual and tangent per the constraint set.
pub fn penalty_augment(
    residual: &mut DVector<f64>,
    tangent: Option<&mut Vec<(usize, usize, f64)>>,
    cset: &ConstraintSet,
    u: &DVector<f64>,
    frac: f64,
) {
    *residual += cset.penalty_force(u) - cset.penalty_rhs(frac);
    if let Some(t) = tangent {
        t.extend(cset.penalty_triplets());
    }
}

/// Result of a converged quasi-static solve.
pub struct SolveReport {
    pub u: DVector<f64>,
    /// Gauss-averaged base-material energy densities.
    pub element_energies: Vec<f64>,
    /// Residual norms of the Newton iterations of the final load step.
    pub final_residuals: Vec<f64>,
    pub newton_iters_total: usize,
    pub constraint_violation: f64,
}

fn coo_triplets(coo: &CooMatrix<f64>) -> Vec<(usize, usize, f64)> {
    coo.triplet_iter().map(|(i, j, v)| (i, j, *v)).collect()
}

/// Newton solve with a linear ramp of the constraint targets and load-step
/// cutback on failure.
pub fn newton_solve(
    model: &FeModel,
    cset: &ConstraintSet,
    settings: &SolverSettings,
) -> Result<SolveReport, FemError> {
    let solver = LinearSolver::new(&model.grid);
    let mut u = DVector::zeros(model.grid.n_dofs());
    let mut frac = 0.0_f64;
    let mut dt = 1.0 / settings.n_load_steps as f64;
    let mut cutbacks = 0usize;
    let mut iters_total = 0usize;
    let mut final_residuals = Vec::new();

    while frac < 1.0 - 1e-12 {
        let target = (frac + dt).min(1.0);
        match newton_at(model, cset, &solver, settings, &u, target) {
            Ok((u_new, residuals)) => {
                iters_total += residuals.len();
                final_residuals = residuals;
                u = u_new;
                frac = target;
            }
            Err(_) => {
                cutbacks += 1;
                if cutbacks > settings.max_cutbacks {
                    return Err(FemError::NoConvergence);
                }
                dt *= 0.5;
            }
        }
    }

    let element_energies = model.element_energies(&u)?;
    let violation = cset.violation(&u, 1.0);
    Ok(SolveReport {
        u,
        element_energies,
        final_residuals,
        newton_iters_total: iters_total,
        constraint_violation: violation,
    })
}

fn newton_at(
    model: &FeModel,
    cset: &ConstraintSet,
    solver: &LinearSolver,
    settings: &SolverSettings,
    u_init: &DVector<f64>,
    frac: f64,
) -> Result<(DVector<f64>, Vec<f64>), FemError> {
    let mut u = u_init.clone();
    let mut residuals = Vec::new();
    let mut r0 = f64::NAN;
    let abs_floor = 1e-10 * (1.0 + cset.penalty_rhs(frac).norm());

    for _ in 0..settings.max_newton_iters {
        let asm = model.assemble(&u, true)?;
        let mut r = asm.f_int;
        let mut trip = coo_triplets(asm.tangent.as_ref().unwrap());
        penalty_augment(&mut r, Some(&mut trip), cset, &u, frac);
        let rn = r.norm();
        residuals.push(rn);
        if r0.is_nan() {
            r0 = rn;
        }
        if rn <= settings.newton_tol * r0 || rn <= abs_floor {
            return Ok((u, residuals));
        }
        // The tangent can lose positive definiteness when slender
        // low-density members pass a buckling point; shift the diagonal
        // until the factorization succeeds (modified Newton). The shift
        // only changes the iteration matrix, not the converged state.
        let max_diag = trip
            .iter()
            .filter(|(i, j, _)| i == j)
            .map(|(_, _, v)| v.abs())
            .fold(0.0_f64, f64::max)
            .max(1.0);
        let mut du = None;
        let mut shift = 0.0_f64;
        for _ in 0..8 {
            let mut t = trip.clone();
            if shift > 0.0 {
                for d in 0..u.len() {
                    t.push((d, d, shift));
                }
            }
            if let Ok(fact) = solver.factor(&t) {
                let cand = fact.solve(&(-&r));
                if cand.iter().all(|v| v.is_finite()) {
                    du = Some(cand);
                    break;
                }
            }
            shift = if shift == 0.0 {
                1e-8 * max_diag
            } else {
                shift * 100.0
            };
        }
        let du = du.ok_or(FemError::SingularSystem)?;
        // backtrack on the residual norm: a full step on a soft
        // intermediate-density field can overshoot into element inversion
        // even when the load increment itself is fine
        let mut s = 1.0;
        let mut advanced = false;
        for _ in 0..10 {
            let ut = &u + s * &du;
            let rt_norm = match model.assemble(&ut, false) {
                Ok(asm) => {
                    let mut rt = asm.f_int;
                    penalty_augment(&mut rt, None, cset, &ut, frac);
                    rt.norm()
                }
                Err(_) => f64::INFINITY,
            };
            if rt_norm.is_finite() && (rt_norm < rn || s <= 1.0 / 1024.0) {
                u = ut;
                advanced = true;
                break;
            }
            s *= 0.5;
        }
        if !advanced {
            return Err(FemError::NoConvergence);
        }
    }
    Err(FemError::NoConvergence)
}

/// Tangent factorization at a converged state, for adjoint solves.
pub fn equilibrium_factorization(
    model: &FeModel,
    cset: &ConstraintSet,
    u: &DVector<f64>,
) -> Result<(Factorized, Vec<(usize, usize, f64)>), FemError> {
    let solver = LinearSolver::new(&model.grid);
    let asm = model.assemble(u, true)?;
    let mut trip = coo_triplets(asm.tangent.as_ref().unwrap());
    trip.extend(cset.penalty_triplets());
    let fact = solver.factor_symmetric(&trip)?;
    Ok((fact, trip))
}
