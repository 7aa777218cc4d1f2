//! Top-level design loop: warm start, skeleton identification, and the
//! main geometric optimization (project, solve, differentiate, update).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adjoint::{
    adjoint_density_gradient, chain_to_geometry, volume_density_gradient, Response,
};
use crate::config::RunConfig;
use crate::density::{project_components, symmetrize, DensityField, field_sensitivity};
use crate::design::DesignVector;
use crate::export::IterationRecord;
use crate::fem::{newton_solve, FeModel, FemError};
use crate::grid::Grid;
use crate::identify::{
    binarize_by_fraction, identify_skeleton, is_connected, lattice_seed, IdentifyOptions,
};
use crate::mma::{Constraint, Mma, MmaError};
use crate::pbc::{build_constraints, reaction_dofs, PbcError};
use crate::response::{
    energy_pnorm, reaction_objective, update_adaptive_c, volume_fraction,
};
use crate::simp::{simp_warmstart, SimpOptions};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("solver failure: {0}")]
    Fem(#[from] FemError),
    #[error("constraint setup failure: {0}")]
    Pbc(#[from] PbcError),
    #[error("optimizer failure: {0}")]
    Mma(#[from] MmaError),
    #[error("grid/symmetry mismatch: {0}")]
    Density(#[from] crate::density::DensityError),
    #[error("no design was ever accepted: {0}")]
    NoProgress(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    RejectedDesigns,
}

pub struct RunOutcome {
    /// Final design (the best feasible iterate when one exists).
    pub design: DesignVector,
    pub field: DensityField,
    pub records: Vec<IterationRecord>,
    pub objective: f64,
    pub max_element_energy: f64,
    pub volume_fraction: f64,
    pub feasible: bool,
    pub connected: bool,
    pub termination: Termination,
}

struct Evaluation {
    field: DensityField,
    objective: f64,
    energies: Vec<f64>,
    max_energy: f64,
    pnorm: f64,
    volume: f64,
    newton_iters: usize,
    u: nalgebra::DVector<f64>,
    model: FeModel,
    cset: crate::pbc::ConstraintSet,
}

fn evaluate(cfg: &RunConfig, grid: &Grid, design: &DesignVector) -> Result<Evaluation, RunError> {
    let params = cfg.projection_params();
    let mut field = project_components(grid, &design.components, &params);
    if cfg.design.symmetric {
        field = symmetrize(grid, &field)?;
    }
    let model = FeModel::new(
        *grid,
        cfg.material(),
        cfg.interpolation_params(),
        field.rho_phys.clone(),
    );
    let case = cfg.load_case();
    let cset = build_constraints(grid, &case, cfg.solver.alpha)?;
    let rep = newton_solve(&model, &cset, &cfg.solver_settings())?;
    let objective = reaction_objective(&model, &reaction_dofs(grid, case.kind), &rep)?;
    let max_energy = rep
        .element_energies
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    let pnorm = energy_pnorm(
        &rep.element_energies,
        cfg.constraints.e_bar,
        cfg.projection.p,
    );
    let volume = volume_fraction(&field.rho_phys, grid);
    Ok(Evaluation {
        field,
        objective,
        max_energy,
        pnorm,
        volume,
        newton_iters: rep.newton_iters_total,
        energies: rep.element_energies,
        u: rep.u,
        model,
        cset,
    })
}

/// Deterministic per-seed jitter: breaks grid-aligned degeneracies of the
/// seeding lattice without changing its character.
fn jitter(design: &DesignVector, grid: &Grid, seed: u64) -> DesignVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = 0.005 * grid.width().min(grid.height());
    let mut components = design.components.clone();
    for c in &mut components {
        for p in &mut c.control_points {
            p.x = (p.x + rng.gen_range(-amp..amp)).clamp(0.0, grid.width());
            p.y = (p.y + rng.gen_range(-amp..amp)).clamp(0.0, grid.height());
        }
    }
    DesignVector::new(components)
}

/// Starting design: free-density warm start fitted by skeleton
/// identification; falls back to the raw lattice when the warm start is
/// disabled or fails.
pub fn initial_design(cfg: &RunConfig, grid: &Grid) -> Result<DesignVector, RunError> {
    let w_init = 0.5 * (cfg.design.w_min + cfg.design.w_max);
    let seed = jitter(
        &lattice_seed(
            grid,
            cfg.design.n_components,
            cfg.design.degree,
            cfg.design.rho_bar_init,
            w_init,
        ),
        grid,
        cfg.seed,
    );
    if cfg.optimizer.simp_iters == 0 {
        return Ok(seed);
    }
    let opts = SimpOptions {
        v_f: cfg.constraints.v_f,
        iterations: cfg.optimizer.simp_iters,
        alpha: cfg.solver.alpha,
        settings: cfg.solver_settings(),
        ..SimpOptions::default()
    };
    // the warm start always pulls in one axis: load paths, not load case
    let target = match simp_warmstart(
        grid,
        &cfg.material(),
        &cfg.interpolation_params(),
        cfg.load.u_bar.abs().max(0.05 * grid.width()),
        &opts,
    ) {
        Ok(t) => t,
        Err(_) => return Ok(seed),
    };
    // The raw warm-start field is diffuse; fit the skeleton to its densest
    // ridges at full density so the fit cannot collapse to the void field.
    let target = binarize_by_fraction(&target, cfg.constraints.v_f);
    let id_opts = IdentifyOptions {
        params: cfg.projection_params(),
        max_iters: 200,
        w_min: cfg.design.w_min,
        w_max: cfg.design.w_max,
        ..IdentifyOptions::default()
    };
    let report = identify_skeleton(grid, &seed, &target, &id_opts);
    Ok(report.design)
}

/// Drop components whose density multiplier fell below the pruning
/// threshold; never empties the design.
pub fn prune_design(design: &DesignVector, threshold: f64) -> DesignVector {
    let kept: Vec<_> = design
        .components
        .iter()
        .filter(|c| c.rho_bar >= threshold)
        .cloned()
        .collect();
    if kept.is_empty() {
        design.clone()
    } else {
        DesignVector::new(kept)
    }
}

pub fn optimize(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let grid = Grid::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.h);
    let params = cfg.projection_params();
    let case = cfg.load_case();
    let seed_design = initial_design(cfg, &grid)?;
    let (mut lo, hi) = seed_design.bounds(
        grid.width(),
        grid.height(),
        cfg.design.w_min,
        cfg.design.w_max,
    );
    if cfg.design.rho_bar_min > 0.0 {
        // variable layout per component: x coords, y coords, rho_bar, w
        let mut at = 0;
        for c in &seed_design.components {
            at += 2 * (c.degree() + 1);
            lo[at] = cfg.design.rho_bar_min;
            at += 2;
        }
    }
    let n = seed_design.n_vars();
    let mut x: Vec<f64> = seed_design
        .flatten()
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(v, (l, h))| v.clamp(*l, *h))
        .collect();
    let mut mma = Mma::new(n, cfg.optimizer.move_frac);
    let mut c = cfg.optimizer.c0;
    let mut records = Vec::new();
    // best feasible iterate, preferring designs whose thresholded field is
    // connected: the deliverable is a manufacturable structure
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut incumbent_conn: Option<(f64, Vec<f64>)> = None;
    let mut rejects = 0usize;
    let mut stable = 0usize;
    let mut x_last_ok = x.clone();
    let mut obj_scale = 1.0;
    let mut termination = Termination::MaxIterations;
    let energy_on = cfg.constraints.energy_constraint;
    let feas_tol = 1e-6;

    let mut iter = 0usize;
    while iter < cfg.optimizer.max_iters {
        iter += 1;
        let design = seed_design.unflatten(&x);
        let ev = match evaluate(cfg, &grid, &design) {
            Ok(ev) => ev,
            Err(_) => {
                rejects += 1;
                if rejects >= cfg.optimizer.max_rejects {
                    termination = Termination::RejectedDesigns;
                    break;
                }
                // retreat halfway toward the last design that solved
                for i in 0..n {
                    x[i] = 0.5 * (x[i] + x_last_ok[i]);
                }
                continue;
            }
        };
        if records.is_empty() {
            obj_scale = ev.objective.abs().max(1e-12);
        }
        if std::env::var_os("SKELOPT_TRACE").is_some() {
            let (imax, emax) = ev
                .energies
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |a, (i, &e)| if e > a.1 { (i, e) } else { a });
            eprintln!(
                "trace iter {iter} obj {:.3} vol {:.4} maxE {:.3} at elem {imax} rho {:.3} connected {}",
                ev.objective,
                ev.volume,
                emax,
                ev.field.rho_phys[imax],
                is_connected(&grid, &ev.field.rho_phys, 0.5)
            );
        }

        let g_energy = c * ev.pnorm - 1.0;
        let g_volume = ev.volume - cfg.constraints.v_f;
        // the value handed to the update is capped at O(1): a grossly
        // violated energy constraint would otherwise dominate the
        // subproblem and drive uniform density reduction — the fastest
        // local descent of the constraint, but the wrong design path
        let g_energy_step = g_energy.min(1.0);
        let feasible = g_volume <= feas_tol
            && (!energy_on || ev.max_energy <= cfg.constraints.e_bar * (1.0 + feas_tol));

        // sensitivities; a converged state past a buckling point can leave
        // the tangent indefinite and the adjoint solve unusable — treat
        // that design as rejected rather than aborting the run
        let grads = (|| -> Result<(Vec<f64>, Vec<f64>, Option<Vec<f64>>), RunError> {
            let jac = {
                // jacobian of the unsymmetrized projection; symmetry
                // handled in the chain rule
                let raw = project_components(&grid, &design.components, &params);
                field_sensitivity(&grid, &design, &raw, &params)
            };
            let df = adjoint_density_gradient(
                &ev.model,
                &ev.cset,
                &ev.u,
                &Response::Reaction {
                    dofs: reaction_dofs(&grid, case.kind),
                },
            )?;
            let grad_f = chain_to_geometry(&grid, &df, &jac, cfg.design.symmetric)?;
            let dv = volume_density_gradient(&grid);
            let grad_v = chain_to_geometry(&grid, &dv, &jac, cfg.design.symmetric)?;
            let grad_g = if energy_on {
                let dg = adjoint_density_gradient(
                    &ev.model,
                    &ev.cset,
                    &ev.u,
                    &Response::EnergyPnorm {
                        e_bar: cfg.constraints.e_bar,
                        p: cfg.projection.p,
                        c,
                    },
                )?;
                Some(chain_to_geometry(&grid, &dg, &jac, cfg.design.symmetric)?)
            } else {
                None
            };
            Ok((grad_f, grad_v, grad_g))
        })();
        let (grad_f, grad_v, grad_g) = match grads {
            Ok(g) => {
                rejects = 0;
                x_last_ok = x.clone();
                g
            }
            Err(_) => {
                rejects += 1;
                if rejects >= cfg.optimizer.max_rejects {
                    termination = Termination::RejectedDesigns;
                    break;
                }
                for i in 0..n {
                    x[i] = 0.5 * (x[i] + x_last_ok[i]);
                }
                continue;
            }
        };

        // maximize stiffness: minimize -f (scaled to O(1))
        let df0: Vec<f64> = grad_f.iter().map(|v| -v / obj_scale).collect();
        let mut cons = vec![Constraint {
            value: g_volume,
            grad: &grad_v,
        }];
        if let Some(gg) = grad_g.as_ref() {
            cons.push(Constraint {
                value: g_energy_step,
                grad: gg,
            });
        }

        let xn = mma.step(&x, &df0, &cons, &lo, &hi)?;
        let dmax = xn
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);

        records.push(IterationRecord {
            iteration: iter,
            objective: ev.objective,
            volume_fraction: ev.volume,
            max_element_energy: ev.max_energy,
            pnorm_value: ev.pnorm,
            c,
            max_design_change: dmax,
            newton_iters: ev.newton_iters,
            feasible,
        });

        if feasible {
            let better = incumbent
                .as_ref()
                .map(|(f, _)| ev.objective > *f)
                .unwrap_or(true);
            if better {
                incumbent = Some((ev.objective, x.clone()));
            }
            if is_connected(&grid, &ev.field.rho_phys, 0.5) {
                let better = incumbent_conn
                    .as_ref()
                    .map(|(f, _)| ev.objective > *f)
                    .unwrap_or(true);
                if better {
                    incumbent_conn = Some((ev.objective, x.clone()));
                }
            }
        }

        if feasible && dmax <= cfg.optimizer.step_tol {
            stable += 1;
            if stable >= cfg.optimizer.stable_iters {
                termination = Termination::Converged;
                break;
            }
        } else {
            stable = 0;
        }

        c = update_adaptive_c(
            c,
            ev.pnorm,
            ev.max_energy,
            cfg.constraints.e_bar,
            cfg.optimizer.eta,
        );
        let _ = ev.energies;
        x = xn;
    }

    // final design: the connected feasible incumbent when available, then
    // any feasible incumbent, then the last design that solved
    let x_final = incumbent_conn
        .as_ref()
        .or(incumbent.as_ref())
        .map(|(_, xv)| xv.clone())
        .unwrap_or(x_last_ok);
    let design = seed_design.unflatten(&x_final);
    let ev = evaluate(cfg, &grid, &design)?;
    let feasible = ev.volume <= cfg.constraints.v_f + feas_tol
        && (!energy_on || ev.max_energy <= cfg.constraints.e_bar * (1.0 + feas_tol));
    let connected = is_connected(&grid, &ev.field.rho_phys, 0.5);
    Ok(RunOutcome {
        design,
        objective: ev.objective,
        max_element_energy: ev.max_energy,
        volume_fraction: ev.volume,
        field: ev.field,
        records,
        feasible,
        connected,
        termination,
    })
}

/// Adjoint-versus-finite-difference table for a configuration, as CSV.
/// Checks one variable of each kind per component against central
/// differences through the full pipeline.
pub fn gradcheck(cfg: &RunConfig) -> Result<String, RunError> {
    let grid = Grid::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.h);
    let params = cfg.projection_params();
    let case = cfg.load_case();
    let design = initial_design(cfg, &grid)?;
    let ev = evaluate(cfg, &grid, &design)?;
    let c = cfg.optimizer.c0;

    let raw = project_components(&grid, &design.components, &params);
    let jac = field_sensitivity(&grid, &design, &raw, &params);
    let df = adjoint_density_gradient(
        &ev.model,
        &ev.cset,
        &ev.u,
        &Response::Reaction {
            dofs: reaction_dofs(&grid, case.kind),
        },
    )?;
    let grad_f = chain_to_geometry(&grid, &df, &jac, cfg.design.symmetric)?;
    let dg = adjoint_density_gradient(
        &ev.model,
        &ev.cset,
        &ev.u,
        &Response::EnergyPnorm {
            e_bar: cfg.constraints.e_bar,
            p: cfg.projection.p,
            c,
        },
    )?;
    let grad_g = chain_to_geometry(&grid, &dg, &jac, cfg.design.symmetric)?;

    let x0 = design.flatten();
    let scale_f = grad_f.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
    let scale_g = grad_g.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
    let mut out = String::from("variable,kind,adjoint_objective,fd_objective,rel_err_objective,adjoint_constraint,fd_constraint,rel_err_constraint\n");
    let h = 1e-5 * grid.width();
    let mut off = 0;
    for comp in &design.components {
        let np = comp.degree() + 1;
        let picks = [
            (off + np / 2, "control_x"),
            (off + np + np / 2, "control_y"),
            (off + 2 * np, "rho_bar"),
            (off + 2 * np + 1, "width"),
        ];
        for (i, kind) in picks {
            let hh = if kind == "rho_bar" { 1e-5 } else { h };
            let mut xp = x0.clone();
            xp[i] += hh;
            let evp = evaluate(cfg, &grid, &design.unflatten(&xp))?;
            let mut xm = x0.clone();
            xm[i] -= hh;
            let evm = evaluate(cfg, &grid, &design.unflatten(&xm))?;
            let fd_f = (evp.objective - evm.objective) / (2.0 * hh);
            let fd_g = (c * evp.pnorm - c * evm.pnorm) / (2.0 * hh);
            let rel_f = (grad_f[i] - fd_f).abs() / scale_f.max(1e-300);
            let rel_g = (grad_g[i] - fd_g).abs() / scale_g.max(1e-300);
            out.push_str(&format!(
                "{i},{kind},{},{fd_f},{rel_f},{},{fd_g},{rel_g}\n",
                grad_f[i], grad_g[i]
            ));
        }
        off += crate::design::vars_per_component(comp.degree());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.grid.nx = 10;
        cfg.grid.ny = 10;
        cfg.load.u_bar = 2.0;
        cfg.design.n_components = 4;
        cfg.design.degree = 2;
        cfg.design.w_min = 1.0;
        cfg.design.w_max = 2.0;
        cfg.optimizer.max_iters = 5;
        cfg.optimizer.simp_iters = 3;
        cfg.constraints.e_bar = 5.0;
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn short_run_produces_consistent_outcome() {
        let cfg = small_config();
        let out = optimize(&cfg).unwrap();
        assert_eq!(out.records.len() as usize, out.records.len());
        assert!(!out.records.is_empty());
        assert!(out.objective.is_finite());
        assert_eq!(out.field.rho_phys.len(), 100);
        // records are sequential and carry solver work
        for (k, r) in out.records.iter().enumerate() {
            assert_eq!(r.iteration, k + 1);
            assert!(r.newton_iters > 0);
        }
        // symmetric design: field is orbit-invariant
        let grid = Grid::new(10, 10, 1.0);
        let sym = crate::density::orbit_average(&grid, &out.field.rho_phys).unwrap();
        assert_eq!(sym, out.field.rho_phys);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = small_config();
        let a = optimize(&cfg).unwrap();
        let b = optimize(&cfg).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.field.rho_phys, b.field.rho_phys);
        assert_eq!(
            crate::export::csv_text(&a.records),
            crate::export::csv_text(&b.records)
        );

        let mut cfg2 = small_config();
        cfg2.seed = 1;
        let c = optimize(&cfg2).unwrap();
        assert_ne!(a.design, c.design, "different seeds should differ");
    }

    #[test]
    fn pruning_keeps_strong_components() {
        let grid = Grid::new(10, 10, 1.0);
        let mut design = lattice_seed(&grid, 4, 2, 0.5, 1.5);
        design.components[1].rho_bar = 0.02;
        design.components[3].rho_bar = 0.08;
        let pruned = prune_design(&design, 0.1);
        assert_eq!(pruned.components.len(), 2);
        // never empties
        let all_weak = lattice_seed(&grid, 3, 2, 0.01, 1.5);
        assert_eq!(prune_design(&all_weak, 0.1).components.len(), 3);
    }

    #[test]
    fn gradcheck_reports_small_errors() {
        let mut cfg = small_config();
        cfg.optimizer.simp_iters = 0; // plain lattice keeps it cheap
        cfg.design.n_components = 2;
        let table = gradcheck(&cfg).unwrap();
        let mut worst = 0.0_f64;
        for line in table.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            worst = worst.max(f[4].parse::<f64>().unwrap());
            worst = worst.max(f[7].parse::<f64>().unwrap());
        }
        assert!(worst < 5e-3, "worst relative gradient error {worst}\n{table}");
    }
}
