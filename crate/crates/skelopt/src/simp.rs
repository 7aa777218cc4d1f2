//! Free-density warm start: a short stiffness optimization over raw
//! element densities, used to reveal load paths before fitting skeleton
//! components.

use crate::adjoint::{adjoint_density_gradient, volume_density_gradient, Response};
use crate::density::orbit_average;
use crate::fem::{newton_solve, FeModel, FemError, InterpolationParams, SolverSettings};
use crate::grid::Grid;
use crate::material::Material;
use crate::mma::{Constraint, Mma};
use crate::pbc::{build_constraints, reaction_dofs, LoadCase, LoadKind};
use crate::response::volume_fraction;

pub struct SimpOptions {
    pub v_f: f64,
    pub iterations: usize,
    pub alpha: f64,
    /// Move limit for the density update; larger than the geometric stage
    /// because only a handful of iterations are run.
    pub move_frac: f64,
    pub rho_min: f64,
    pub settings: SolverSettings,
}

impl Default for SimpOptions {
    fn default() -> Self {
        Self {
            v_f: 0.3,
            iterations: 10,
            alpha: 1e8,
            move_frac: 0.2,
            rho_min: 1e-3,
            settings: SolverSettings::default(),
        }
    }
}

/// Maximize uniaxial stiffness subject to a volume bound, starting from a
/// uniform field at the volume target. The density field is kept symmetric
/// about both grid midlines. If the nonlinear solve fails at the requested
/// stretch the stretch is halved (the warm start only needs load paths,
/// not the exact operating point).
pub fn simp_warmstart(
    grid: &Grid,
    material: &Material,
    interp: &InterpolationParams,
    u_bar: f64,
    opts: &SimpOptions,
) -> Result<Vec<f64>, FemError> {
    let m = grid.n_elems();
    // A uniform field under periodic boundary conditions is a homogeneous
    // state whose stiffness gradient is identical in every element, so the
    // optimizer cannot differentiate load paths. Seed with a cosine
    // modulation: symmetric about both midlines, mean-preserving, densest
    // at the cell corners.
    let mut x = vec![0.0; m];
    for e in 0..m {
        let (ix, iy) = (e % grid.nx, e / grid.nx);
        let xc = (ix as f64 + 0.5) / grid.nx as f64;
        let yc = (iy as f64 + 0.5) / grid.ny as f64;
        let modulation = (std::f64::consts::TAU * xc).cos() * (std::f64::consts::TAU * yc).cos();
        x[e] = (opts.v_f * (1.0 + 0.5 * modulation)).clamp(opts.rho_min, 1.0);
    }
    let xmin = vec![opts.rho_min; m];
    let xmax = vec![1.0; m];
    let mut mma = Mma::new(m, opts.move_frac);
    let dv = volume_density_gradient(grid);
    let mut u_bar = u_bar;

    for _ in 0..opts.iterations {
        let rho = orbit_average(grid, &x).map_err(|_| FemError::StaleState)?;
        let model = FeModel::new(*grid, *material, *interp, rho.clone());

        // solve, halving the stretch on failure
        let mut rep = None;
        for _ in 0..4 {
            let case = LoadCase {
                kind: LoadKind::Uniaxial,
                u_bar,
            };
            let cset = build_constraints(grid, &case, opts.alpha)
                .map_err(|_| FemError::StaleState)?;
            match newton_solve(&model, &cset, &opts.settings) {
                Ok(r) => {
                    rep = Some((r, cset));
                    break;
                }
                Err(_) => u_bar *= 0.5,
            }
        }
        let (rep, cset) = rep.ok_or(FemError::NoConvergence)?;

        let df = adjoint_density_gradient(
            &model,
            &cset,
            &rep.u,
            &Response::Reaction {
                dofs: reaction_dofs(grid, LoadKind::Uniaxial),
            },
        )?;
        // maximize stiffness: minimize -f; symmetrize the gradient so the
        // update stays in the symmetric subspace
        let neg: Vec<f64> = df.iter().map(|v| -v).collect();
        let df0 = orbit_average(grid, &neg).map_err(|_| FemError::StaleState)?;
        let gval = volume_fraction(&rho, grid) - opts.v_f;
        let cons = [Constraint {
            value: gval,
            grad: &dv,
        }];
        x = mma
            .step(&x, &df0, &cons, &xmin, &xmax)
            .map_err(|_| FemError::NoConvergence)?;
    }
    orbit_average(grid, &x).map_err(|_| FemError::StaleState)
}
