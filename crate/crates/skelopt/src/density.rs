//! Geometry projection: skeleton components to a per-element density field,
//! with the full sensitivity chain back to the design variables.

use thiserror::Error;

use crate::design::{vars_per_component, DesignVector};
use crate::geom::{self, BezierComponent, ProjectionResult, Vec2};
use crate::grid::Grid;
use crate::par;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("symmetrize needs even grid dimensions, got {0}x{1}")]
    OddGrid(usize, usize),
}

/// Parameters of the Heaviside projection and density aggregation.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionParams {
    /// Heaviside sharpness.
    pub beta: f64,
    /// p-norm exponent for combining components.
    pub p: f64,
    /// Density floor applied to the physical field.
    pub rho_min: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            beta: 5.0,
            p: 10.0,
            rho_min: 1e-5,
        }
    }
}

/// Per-component density at one point: rho = 1/2 (1 + tanh(beta (w - d))) rho_bar + rho_min.
pub fn component_density(
    curve: &BezierComponent,
    centroid: Vec2,
    beta: f64,
    rho_min: f64,
) -> (f64, ProjectionResult) {
    let proj = geom::project_point(curve, centroid);
    let rho = 0.5 * (1.0 + (beta * (curve.w - proj.distance)).tanh()) * curve.rho_bar + rho_min;
    (rho, proj)
}

/// p-norm composite of non-negative per-component densities. Factored by the
/// maximum so tiny tail densities cannot underflow the sum.
pub fn composite(rhos: &[f64], p: f64) -> f64 {
    let m = rhos.iter().cloned().fold(0.0_f64, f64::max);
    if m <= 0.0 {
        return 0.0;
    }
    let s: f64 = rhos.iter().map(|r| (r / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// Clamp the composite density below one: rho_phys = tanh(3 rho_comp).
pub fn sdp(rho_comp: f64) -> f64 {
    (3.0 * rho_comp).tanh()
}

/// Composite density field on a grid.
#[derive(Debug, Clone)]
pub struct DensityField {
    /// Physical per-element density after the clamp and floor; FEM input.
    pub rho_phys: Vec<f64>,
    /// Pre-clamp composite density.
    pub rho_comp: Vec<f64>,
    /// Per-component densities, indexed [component][element].
    pub per_component: Vec<Vec<f64>>,
    /// Projection results, indexed [component][element].
    pub projections: Vec<Vec<ProjectionResult>>,
}

/// Project all components onto the grid. Element-parallel.
pub fn project_components(
    grid: &Grid,
    components: &[BezierComponent],
    params: &ProjectionParams,
) -> DensityField {
    let m = grid.n_elems();
    let per_elem: Vec<(Vec<f64>, Vec<ProjectionResult>, f64, f64)> = par::map_indexed(m, |j| {
        let c = grid.centroid(j);
        let mut rhos = Vec::with_capacity(components.len());
        let mut projs = Vec::with_capacity(components.len());
        for comp in components {
            let (r, pr) = component_density(comp, c, params.beta, 0.0);
            rhos.push(r);
            projs.push(pr);
        }
        let comp_density = composite(&rhos, params.p);
        let phys = sdp(comp_density).max(params.rho_min);
        (rhos, projs, comp_density, phys)
    });

    let n = components.len();
    let mut field = DensityField {
        rho_phys: Vec::with_capacity(m),
        rho_comp: Vec::with_capacity(m),
        per_component: vec![Vec::with_capacity(m); n],
        projections: vec![Vec::with_capacity(m); n],
    };
    for (rhos, projs, comp_density, phys) in per_elem {
        for (i, (r, pr)) in rhos.into_iter().zip(projs).enumerate() {
            field.per_component[i].push(r);
            field.projections[i].push(pr);
        }
        field.rho_comp.push(comp_density);
        field.rho_phys.push(phys);
    }
    field
}

/// Dense jacobian of the physical density field w.r.t. the flattened design
/// vector, stored row-major (one row per element).
#[derive(Debug, Clone)]
pub struct FieldJacobian {
    pub n_vars: usize,
    pub data: Vec<f64>,
    /// Element/component pairs skipped because the centroid sat on the skeleton.
    pub singular_pairs: usize,
}

impl FieldJacobian {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_vars..(j + 1) * self.n_vars]
    }

    /// Contract with a per-element sensitivity vector: out = s^T J.
    pub fn left_multiply(&self, elem_sens: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vars];
        for (j, s) in elem_sens.iter().enumerate() {
            if *s == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.row(j)) {
                *o += s * v;
            }
        }
        out
    }
}

/// Full chain d rho_phys / d X through the clamp, p-norm, Heaviside and
/// projection distance. Rows of floored elements are zero (the floor is
/// active there and the field is locally flat).
pub fn field_sensitivity(
    grid: &Grid,
    design: &DesignVector,
    field: &DensityField,
    params: &ProjectionParams,
) -> FieldJacobian {
    let m = grid.n_elems();
    let n_vars = design.n_vars();
    let components = &design.components;

    let var_offsets: Vec<usize> = {
        let mut offs = Vec::with_capacity(components.len());
        let mut o = 0;
        for c in components {
            offs.push(o);
            o += vars_per_component(c.degree());
        }
        offs
    };

    let rows: Vec<(Vec<f64>, usize)> = par::map_indexed(m, |j| {
        let mut row = vec![0.0; n_vars];
        let mut singular = 0usize;
        let rho_comp = field.rho_comp[j];
        let raw_phys = sdp(rho_comp);
        if raw_phys < params.rho_min || rho_comp <= 0.0 {
            return (row, singular);
        }
        let centroid = grid.centroid(j);
        // d rho_phys / d rho_comp
        let s_clamp = 3.0 * (1.0 - raw_phys * raw_phys);
        for (i, comp) in components.iter().enumerate() {
            let rho_ij = field.per_component[i][j];
            let proj = &field.projections[i][j];
            // d rho_comp / d rho_ij for the p-norm, as a bounded ratio power
            let q = (rho_ij / rho_comp).powf(params.p - 1.0);
            if q == 0.0 {
                continue;
            }
            let h = (params.beta * (comp.w - proj.distance)).tanh();
            let sech2 = 1.0 - h * h;
            let chain = s_clamp * q;
            let off = var_offsets[i];
            let np = comp.degree() + 1;
            // segment density and width
            row[off + 2 * np] += chain * 0.5 * (1.0 + h);
            row[off + 2 * np + 1] += chain * 0.5 * comp.rho_bar * params.beta * sech2;
            // control points through the projection distance
            let drho_dd = -0.5 * comp.rho_bar * params.beta * sech2;
            if drho_dd.abs() * chain == 0.0 {
                continue;
            }
            match geom::distance_gradient(comp, centroid, proj) {
                Ok(grad) => {
                    for (k, (da, db)) in grad.iter().enumerate() {
                        row[off + k] += chain * drho_dd * da;
                        row[off + np + k] += chain * drho_dd * db;
                    }
                }
                Err(_) => singular += 1,
            }
        }
        (row, singular)
    });

    let mut data = Vec::with_capacity(m * n_vars);
    let mut singular_pairs = 0;
    for (row, s) in rows {
        data.extend(row);
        singular_pairs += s;
    }
    FieldJacobian {
        n_vars,
        data,
        singular_pairs,
    }
}

/// Average `values` over the 4-element orbits generated by reflection across
/// both grid midlines. The map is its own adjoint, so the same call
/// accumulates sensitivities of a symmetrized field.
pub fn orbit_average(grid: &Grid, values: &[f64]) -> Result<Vec<f64>, DensityError> {
    if grid.nx % 2 != 0 || grid.ny % 2 != 0 {
        return Err(DensityError::OddGrid(grid.nx, grid.ny));
    }
    let mut out = vec![0.0; values.len()];
    // visit each orbit once from its lower-left representative so every
    // member receives the bit-identical average
    for iy in 0..grid.ny / 2 {
        for ix in 0..grid.nx / 2 {
            let orbit = [
                grid.elem_index(ix, iy),
                grid.elem_index(grid.nx - 1 - ix, iy),
                grid.elem_index(ix, grid.ny - 1 - iy),
                grid.elem_index(grid.nx - 1 - ix, grid.ny - 1 - iy),
            ];
            let avg = orbit.iter().map(|&e| values[e]).sum::<f64>() / 4.0;
            for &e in &orbit {
                out[e] = avg;
            }
        }
    }
    Ok(out)
}

/// Symmetrized copy of a density field (physical densities only).
pub fn symmetrize(grid: &Grid, field: &DensityField) -> Result<DensityField, DensityError> {
    let mut out = field.clone();
    out.rho_phys = orbit_average(grid, &field.rho_phys)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn two_components() -> Vec<BezierComponent> {
        vec![
            BezierComponent::new(
                vec![
                    Vec2::new(0.5, 1.0),
                    Vec2::new(2.0, 3.5),
                    Vec2::new(4.0, 2.0),
                    Vec2::new(5.5, 4.5),
                ],
                0.8,
                1.2,
            )
            .unwrap(),
            BezierComponent::new(
                vec![Vec2::new(1.0, 5.0), Vec2::new(3.0, 2.0), Vec2::new(5.0, 5.0)],
                0.6,
                0.9,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn component_density_closed_forms() {
        let c = BezierComponent::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)],
            1.0,
            3.0,
        )
        .unwrap();
        // d = w: half density
        let (r, _) = component_density(&c, Vec2::new(5.0, 3.0), 5.0, 0.0);
        assert!((r - 0.5).abs() < 1e-12);
        // far away: density floor
        let (r, _) = component_density(&c, Vec2::new(5.0, 100.0), 5.0, 1e-4);
        assert!((r - 1e-4).abs() < 1e-12);
        // beta=5, w=3, d=1: 1/2 (1 + tanh(10))
        let (r, pr) = component_density(&c, Vec2::new(5.0, 1.0), 5.0, 0.0);
        assert!((pr.distance - 1.0).abs() < 1e-10);
        assert!((r - 1.0).abs() < 1e-8);
    }

    #[test]
    fn composite_closed_forms() {
        assert!((composite(&[0.37], 10.0) - 0.37).abs() < 1e-15);
        assert!((composite(&[1.0, 1.0], 10.0) - 2.0_f64.powf(0.1)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let m = v.iter().cloned().fold(0.0_f64, f64::max);
            assert!(composite(&v, 10.0) >= m - 1e-14);
        }
    }

    #[test]
    fn sdp_closed_forms() {
        assert_eq!(sdp(0.0), 0.0);
        assert!((sdp(1.0) - 3.0_f64.tanh()).abs() < 1e-15);
        let comp = 2.0_f64.powf(0.1);
        assert!((sdp(comp) - (3.0 * comp).tanh()).abs() < 1e-15);
        // tanh(3 * 2^(1/10)) = tanh(3.215320...) computed independently
        assert!((sdp(comp) - 0.996783).abs() < 1e-5);
    }

    #[test]
    fn field_bounds_and_overestimation() {
        let grid = Grid::new(8, 8, 0.75);
        let comps = two_components();
        let field = project_components(&grid, &comps, &ProjectionParams::default());
        for j in 0..grid.n_elems() {
            assert!(field.rho_phys[j] > 0.0 && field.rho_phys[j] < 1.0);
            let m = field
                .per_component
                .iter()
                .map(|c| c[j])
                .fold(0.0_f64, f64::max);
            assert!(field.rho_comp[j] >= m - 1e-14);
        }
    }

    #[test]
    fn width_monotonicity() {
        let grid = Grid::new(8, 8, 0.75);
        let params = ProjectionParams::default();
        let comps = two_components();
        let base = project_components(&grid, &comps, &params);
        let mut wider = comps.clone();
        wider[0].w += 0.3;
        let bumped = project_components(&grid, &wider, &params);
        for j in 0..grid.n_elems() {
            assert!(bumped.rho_phys[j] >= base.rho_phys[j] - 1e-14);
        }
    }

    #[test]
    fn refined_grid_matches_outside_transition_band() {
        let params = ProjectionParams::default();
        let comps = two_components();
        let coarse = Grid::new(12, 12, 0.5);
        let fine = Grid::new(24, 24, 0.25);
        let cf = project_components(&coarse, &comps, &params);
        let ff = project_components(&fine, &comps, &params);
        let band = 3.0 / params.beta;
        for j in 0..coarse.n_elems() {
            let (ix, iy) = coarse.elem_coords(j);
            let mut avg = 0.0;
            for dy in 0..2 {
                for dx in 0..2 {
                    avg += ff.rho_phys[fine.elem_index(2 * ix + dx, 2 * iy + dy)];
                }
            }
            avg /= 4.0;
            let diff = (avg - cf.rho_phys[j]).abs();
            let min_gap = comps
                .iter()
                .zip(&cf.projections)
                .map(|(c, prs)| (prs[j].distance - c.w).abs())
                .fold(f64::INFINITY, f64::min);
            if min_gap > band {
                assert!(diff <= 0.05, "elem {j}: diff {diff} outside band");
            } else {
                assert!(diff <= 0.5, "elem {j}: diff {diff} inside band");
            }
        }
    }

    #[test]
    fn heaviside_saturation_kills_far_sensitivities() {
        let grid = Grid::new(6, 6, 1.0);
        let params = ProjectionParams::default();
        // short component tucked into one corner, thin width
        let comps = vec![BezierComponent::new(
            vec![Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.5), Vec2::new(1.5, 0.5)],
            0.9,
            0.4,
        )
        .unwrap()];
        let design = DesignVector::new(comps.clone());
        let field = project_components(&grid, &comps, &params);
        let jac = field_sensitivity(&grid, &design, &field, &params);
        let far = grid.elem_index(5, 5);
        let np = comps[0].degree() + 1;
        // d rho / d rho_bar at the far corner is saturated to ~0
        assert!(jac.row(far)[2 * np].abs() < 1e-6);
    }

    #[test]
    fn width_derivative_at_transition() {
        // dp rho_ij / d w at d = w is rho_bar beta / 2
        let beta = 5.0;
        let c = BezierComponent::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)],
            0.7,
            2.0,
        )
        .unwrap();
        let p = Vec2::new(5.0, 2.0);
        let h = 1e-7;
        let mut cp = c.clone();
        cp.w += h;
        let mut cm = c.clone();
        cm.w -= h;
        let fd = (component_density(&cp, p, beta, 0.0).0 - component_density(&cm, p, beta, 0.0).0)
            / (2.0 * h);
        assert!((fd - 0.5 * 0.7 * beta).abs() < 1e-5);
    }

    #[test]
    fn full_jacobian_matches_finite_differences() {
        let grid = Grid::new(6, 6, 1.0);
        let params = ProjectionParams::default();
        let design = DesignVector::new(two_components());
        let field = project_components(&grid, &design.components, &params);
        let jac = field_sensitivity(&grid, &design, &field, &params);

        let x0 = design.flatten();
        let h = 1e-6;
        for v in 0..design.n_vars() {
            let mut xp = x0.clone();
            xp[v] += h;
            let fp = project_components(&grid, &design.unflatten(&xp).components, &params);
            let mut xm = x0.clone();
            xm[v] -= h;
            let fm = project_components(&grid, &design.unflatten(&xm).components, &params);
            for j in 0..grid.n_elems() {
                let fd = (fp.rho_phys[j] - fm.rho_phys[j]) / (2.0 * h);
                let an = jac.row(j)[v];
                // skip near-singular entries (centroid close to a skeleton)
                let near_singular = field
                    .projections
                    .iter()
                    .any(|prs| prs[j].distance < 1e-3);
                if near_singular {
                    continue;
                }
                let denom = an.abs().max(1e-2);
                assert!(
                    (an - fd).abs() / denom <= 1e-3,
                    "var {v} elem {j}: analytic {an} fd {fd}"
                );
            }
        }
    }

    #[test]
    fn orbit_average_properties() {
        let grid = Grid::new(6, 4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let vals: Vec<f64> = (0..grid.n_elems()).map(|_| rng.gen()).collect();
        let sym = orbit_average(&grid, &vals).unwrap();
        // invariant under both reflections, exactly
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let a = sym[grid.elem_index(ix, iy)];
                assert_eq!(a, sym[grid.elem_index(grid.nx - 1 - ix, iy)]);
                assert_eq!(a, sym[grid.elem_index(ix, grid.ny - 1 - iy)]);
            }
        }
        // idempotent
        assert_eq!(orbit_average(&grid, &sym).unwrap(), sym);
        // mass preserved
        let s0: f64 = vals.iter().sum();
        let s1: f64 = sym.iter().sum();
        assert!((s0 - s1).abs() < 1e-10);
        // one-quadrant mass spreads to all four
        let mut quad = vec![0.0; grid.n_elems()];
        quad[grid.elem_index(1, 1)] = 1.0;
        let spread = orbit_average(&grid, &quad).unwrap();
        assert_eq!(spread[grid.elem_index(1, 1)], 0.25);
        assert_eq!(spread[grid.elem_index(4, 2)], 0.25);
    }

    #[test]
    fn orbit_average_rejects_odd_grid() {
        let grid = Grid::new(5, 4, 1.0);
        assert!(orbit_average(&grid, &vec![0.0; 20]).is_err());
    }
}
