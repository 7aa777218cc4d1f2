//! Adjoint sensitivities: gradients of the reaction objective and the
//! energy p-norm constraint with respect to element densities, plus the
//! chain rule back to the geometric design variables.

use nalgebra::DVector;

use crate::density::{orbit_average, DensityError, FieldJacobian};
use crate::fem::{equilibrium_factorization, FeModel, FemError};
use crate::grid::Grid;
use crate::par;
use crate::pbc::ConstraintSet;
use crate::response::energy_pnorm;

/// Which response to differentiate.
#[derive(Debug, Clone)]
pub enum Response {
    /// Sum of internal forces over the listed DOFs.
    Reaction { dofs: Vec<usize> },
    /// Scaled p-norm c * PN of element energy densities.
    EnergyPnorm { e_bar: f64, p: f64, c: f64 },
}

/// Gradient of the response with respect to the per-element physical
/// densities, at the converged displacement `u`.
pub fn adjoint_density_gradient(
    model: &FeModel,
    cset: &ConstraintSet,
    u: &DVector<f64>,
    response: &Response,
) -> Result<Vec<f64>, FemError> {
    let n = model.grid.n_dofs();
    let m = model.grid.n_elems();
    let (fact, trip) = equilibrium_factorization(model, cset, u)?;

    // partial of the response w.r.t. the displacement vector, plus any
    // explicit per-element density dependence
    let mut dtheta_du = DVector::zeros(n);
    let mut explicit = vec![0.0; m];
    match response {
        Response::Reaction { dofs } => {
            // d(l^T f_int)/du = l^T K_t; the factorized matrix includes the
            // penalty block, which f_int does not, so subtract it back out.
            let mut l = vec![0.0; n];
            for &d in dofs {
                l[d] = 1.0;
            }
            for &(i, j, v) in &trip {
                if l[i] != 0.0 {
                    dtheta_du[j] += l[i] * v;
                }
            }
            for (i, j, v) in cset.penalty_triplets() {
                if l[i] != 0.0 {
                    dtheta_du[j] -= l[i] * v;
                }
            }
        }
        Response::EnergyPnorm { e_bar, p, c } => {
            let energies = model.element_energies(u)?;
            let pn = energy_pnorm(&energies, *e_bar, *p);
            if pn > 0.0 {
                for e in 0..m {
                    if model.densities[e] <= model.interp.x0 {
                        continue;
                    }
                    let (sc, dsc) = model.interp.scale(model.densities[e]);
                    let v = model.gather(u, e);
                    let (psi, de) = model
                        .kernel
                        .base_energy_density(&model.material, &v)
                        .map_err(|_| FemError::ElementInversion(e))?;
                    let ratio = (energies[e] / e_bar) / pn;
                    let w = c / (m as f64 * e_bar) * ratio.powf(p - 1.0);
                    // the measure is E(x̄)·ψ: its u-derivative carries the
                    // stiffness scale, its density derivative is explicit
                    for (k, &d) in model.grid.elem_dofs(e).iter().enumerate() {
                        dtheta_du[d] += w * sc * de[k];
                    }
                    explicit[e] = w * dsc * psi;
                }
            }
        }
    }

    // adjoint solve; the augmented tangent is symmetric
    let lambda = fact.solve(&(-&dtheta_du));

    // explicit term plus lambda^T dr/dx_e, element by element
    let grads: Vec<Result<f64, FemError>> = par::map_indexed(m, |e| {
        let out = model.element(e, u, false, true)?;
        let dfx = out.dforce_dx.unwrap();
        let dofs = model.grid.elem_dofs(e);
        let mut g = explicit[e];
        for (k, &d) in dofs.iter().enumerate() {
            g += lambda[d] * dfx[k];
        }
        if let Response::Reaction { dofs: rd } = response {
            for (k, &d) in dofs.iter().enumerate() {
                if rd.contains(&d) {
                    g += dfx[k];
                }
            }
        }
        Ok(g)
    });
    grads.into_iter().collect()
}

/// Gradient of the volume fraction with respect to element densities.
pub fn volume_density_gradient(grid: &Grid) -> Vec<f64> {
    let w = (grid.h * grid.h) / (grid.width() * grid.height());
    vec![w; grid.n_elems()]
}

/// Chain a per-element density sensitivity back to the geometric design
/// variables. When `symmetric` the density field was orbit-averaged after
/// projection, and the averaging operator is its own adjoint, so the
/// element sensitivities are orbit-averaged before contracting with the
/// projection jacobian.
pub fn chain_to_geometry(
    grid: &Grid,
    elem_sens: &[f64],
    jac: &FieldJacobian,
    symmetric: bool,
) -> Result<Vec<f64>, DensityError> {
    if symmetric {
        let avg = orbit_average(grid, elem_sens)?;
        Ok(jac.left_multiply(&avg))
    } else {
        Ok(jac.left_multiply(elem_sens))
    }
}
