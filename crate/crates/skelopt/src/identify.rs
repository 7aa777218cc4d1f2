//! Skeleton identification: fit a set of curve components to a target
//! density field by bound-constrained least squares, solved with projected
//! gradient descent and a backtracking line search.

use crate::density::{field_sensitivity, project_components, DensityField, ProjectionParams};
use crate::design::DesignVector;
use crate::geom::{BezierComponent, Vec2};
use crate::grid::Grid;

pub struct IdentifyOptions {
    pub params: ProjectionParams,
    pub max_iters: usize,
    /// Relative gradient tolerance: stop when the projected gradient
    /// infinity norm drops below this fraction of its initial value.
    pub grad_tol: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            params: ProjectionParams::default(),
            max_iters: 500,
            grad_tol: 1e-6,
            w_min: 2.0,
            w_max: 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdentifyReport {
    pub design: DesignVector,
    pub initial_misfit: f64,
    pub final_misfit: f64,
    pub iterations: usize,
    /// True when the thresholded fitted field forms one periodically
    /// connected piece.
    pub connected: bool,
}

fn misfit(field: &DensityField, target: &[f64]) -> f64 {
    field
        .rho_phys
        .iter()
        .zip(target)
        .map(|(r, t)| (r - t) * (r - t))
        .sum()
}

fn misfit_gradient(
    grid: &Grid,
    design: &DesignVector,
    field: &DensityField,
    target: &[f64],
    params: &ProjectionParams,
) -> Vec<f64> {
    let jac = field_sensitivity(grid, design, field, params);
    let sens: Vec<f64> = field
        .rho_phys
        .iter()
        .zip(target)
        .map(|(r, t)| 2.0 * (r - t))
        .collect();
    jac.left_multiply(&sens)
}

fn clamp_to_bounds(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Binarize a field so the densest `frac` of elements become 1 and the
/// rest 0. A diffuse warm-start field sits everywhere below the density a
/// projected curve produces, which makes the all-void design the nearest
/// least-squares fit; fitting the binarized ridges instead rewards
/// coverage.
pub fn binarize_by_fraction(rho: &[f64], frac: f64) -> Vec<f64> {
    let mut sorted: Vec<f64> = rho.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = ((rho.len() as f64 * frac).round() as usize).clamp(1, rho.len());
    let threshold = sorted[k - 1];
    rho.iter()
        .map(|&r| if r >= threshold { 1.0 } else { 0.0 })
        .collect()
}

/// Periodic connectivity of elements above `threshold`, using 8-neighbor
/// adjacency for the solid phase (the usual foreground convention for pixel
/// fields; a slender 45° member rasterizes to a corner-touching staircase).
pub fn is_connected(grid: &Grid, rho: &[f64], threshold: f64) -> bool {
    let m = grid.n_elems();
    let solid: Vec<bool> = rho.iter().map(|&r| r > threshold).collect();
    let count = solid.iter().filter(|&&s| s).count();
    if count == 0 {
        return false;
    }
    let start = solid.iter().position(|&s| s).unwrap();
    let mut seen = vec![false; m];
    let mut stack = vec![start];
    seen[start] = true;
    let mut reached = 0;
    while let Some(e) = stack.pop() {
        reached += 1;
        let (ix, iy) = (e % grid.nx, e / grid.nx);
        for dy in [grid.ny - 1, 0, 1] {
            for dx in [grid.nx - 1, 0, 1] {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let j = ((iy + dy) % grid.ny) * grid.nx + (ix + dx) % grid.nx;
                if solid[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    reached == count
}

/// Evenly spaced lattice of straight segments used as the identification
/// seed: horizontals, verticals and diagonals covering the cell.
pub fn lattice_seed(
    grid: &Grid,
    n_components: usize,
    degree: usize,
    rho_bar: f64,
    w: f64,
) -> DesignVector {
    let (wd, hd) = (grid.width(), grid.height());
    // Members are laid out in reflection-closed groups: every member's image
    // under either domain reflection is again a member of the (truncated)
    // list. This matters because the density field is reflection-averaged
    // every iteration — a member without a reflection partner gets its
    // density halved by the averaging and can never reach a solid state.
    //
    // Each entry is (start, end, bump sign). Axis-aligned members carry an
    // arch-shaped bow (all interior control points offset to one side).
    // An arch is even along the member, so the lengthwise reflection maps
    // the member onto itself; the transverse reflection maps it onto its
    // partner, which therefore bows the opposite way (opposite sign).
    // Diagonal members stay straight (sign 0): a straight diagonal pair is
    // closed under both reflections, while a bowed one is not.
    let mut segs: Vec<(Vec2, Vec2, f64)> = Vec::new();
    let pair_groups: [&[(Vec2, Vec2, f64)]; 4] = [
        &[
            (Vec2::new(0.0, 0.25 * hd), Vec2::new(wd, 0.25 * hd), 1.0),
            (Vec2::new(0.0, 0.75 * hd), Vec2::new(wd, 0.75 * hd), -1.0),
            (Vec2::new(0.25 * wd, 0.0), Vec2::new(0.25 * wd, hd), -1.0),
            (Vec2::new(0.75 * wd, 0.0), Vec2::new(0.75 * wd, hd), 1.0),
        ],
        &[
            (Vec2::new(0.0, 0.0), Vec2::new(wd, hd), 0.0),
            (Vec2::new(0.0, hd), Vec2::new(wd, 0.0), 0.0),
        ],
        // centerline members are their own transverse partner, so they pair
        // with each other only through the bump: a straight centerline is
        // fully reflection-invariant
        &[
            (Vec2::new(0.0, 0.5 * hd), Vec2::new(wd, 0.5 * hd), 0.0),
            (Vec2::new(0.5 * wd, 0.0), Vec2::new(0.5 * wd, hd), 0.0),
        ],
        &[
            (Vec2::new(0.0, 0.125 * hd), Vec2::new(wd, 0.125 * hd), 1.0),
            (Vec2::new(0.0, 0.875 * hd), Vec2::new(wd, 0.875 * hd), -1.0),
            (Vec2::new(0.125 * wd, 0.0), Vec2::new(0.125 * wd, hd), -1.0),
            (Vec2::new(0.875 * wd, 0.0), Vec2::new(0.875 * wd, hd), 1.0),
        ],
    ];
    for group in pair_groups {
        segs.extend_from_slice(group);
    }
    while segs.len() < n_components {
        segs.extend_from_slice(&segs.clone());
    }
    segs.truncate(n_components);

    let amp = 0.2 * wd.min(hd);
    let components = segs
        .into_iter()
        .map(|(a, b, sign)| {
            let axis = b - a;
            let len = (axis.x * axis.x + axis.y * axis.y).sqrt().max(1e-12);
            let normal = Vec2::new(-axis.y / len, axis.x / len);
            let pts: Vec<Vec2> = (0..=degree)
                .map(|i| {
                    let t = i as f64 / degree as f64;
                    let s = if i == 0 || i == degree { 0.0 } else { sign };
                    let p = a + (b - a) * t + normal * (amp * s);
                    Vec2::new(p.x.clamp(0.0, wd), p.y.clamp(0.0, hd))
                })
                .collect();
            BezierComponent::new(pts, rho_bar, w).unwrap()
        })
        .collect();
    DesignVector::new(components)
}

/// Fit the design's projected density field to `target` in least squares.
pub fn identify_skeleton(
    grid: &Grid,
    seed: &DesignVector,
    target: &[f64],
    opts: &IdentifyOptions,
) -> IdentifyReport {
    assert_eq!(target.len(), grid.n_elems());
    let (lo, hi) = seed.bounds(grid.width(), grid.height(), opts.w_min, opts.w_max);

    let mut x = seed.flatten();
    clamp_to_bounds(&mut x, &lo, &hi);

    // Work in bound-normalized coordinates y = (x - lo) / range so one step
    // size is meaningful for every variable class: curve coordinates span
    // the cell while density multipliers span [0, 1], and a shared raw step
    // either stalls the coordinates or slams the multipliers into a bound.
    let range: Vec<f64> = (0..x.len()).map(|i| (hi[i] - lo[i]).max(0.0)).collect();
    let to_x = |y: &[f64]| -> Vec<f64> {
        (0..y.len()).map(|i| lo[i] + y[i] * range[i]).collect()
    };
    let mut y: Vec<f64> = (0..x.len())
        .map(|i| {
            if range[i] > 0.0 {
                (x[i] - lo[i]) / range[i]
            } else {
                0.0
            }
        })
        .collect();

    let mut design = seed.unflatten(&x);
    let mut field = project_components(grid, &design.components, &opts.params);
    let mut f = misfit(&field, target);
    let initial_misfit = f;
    let grad_y =
        |gx: &[f64]| -> Vec<f64> { gx.iter().zip(&range).map(|(g, r)| g * r).collect() };
    let mut grad = grad_y(&misfit_gradient(grid, &design, &field, target, &opts.params));

    let proj_grad_norm = |y: &[f64], g: &[f64]| -> f64 {
        // projected gradient: zero where the gradient pushes into an
        // active bound
        let mut mx = 0.0_f64;
        for i in 0..y.len() {
            let blocked = (y[i] <= 0.0 && g[i] > 0.0) || (y[i] >= 1.0 && g[i] < 0.0);
            if !blocked {
                mx = mx.max(g[i].abs());
            }
        }
        mx
    };
    let tol = opts.grad_tol * proj_grad_norm(&y, &grad).max(1e-300);

    // never move a variable by more than a fifth of its bound range in one
    // trial step; a long first step can jump across the density floor's
    // flat region (where every gradient entry is exactly zero) and strand
    // the fit in the void design
    let step_cap = |g: &[f64]| -> f64 {
        let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gmax > 0.0 {
            0.2 / gmax
        } else {
            f64::INFINITY
        }
    };

    let mut step = step_cap(&grad);
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        iterations = it + 1;
        if proj_grad_norm(&y, &grad) <= tol {
            break;
        }
        // backtracking line search on the projected step
        let mut accepted = false;
        for _ in 0..40 {
            let yt: Vec<f64> = (0..y.len())
                .map(|i| (y[i] - step * grad[i]).clamp(0.0, 1.0))
                .collect();
            let xt = to_x(&yt);
            let dt = design.unflatten(&xt);
            let ft_field = project_components(grid, &dt.components, &opts.params);
            let ft = misfit(&ft_field, target);
            let decrease: f64 = (0..y.len()).map(|i| grad[i] * (y[i] - yt[i])).sum();
            if ft <= f - 1e-4 * decrease && ft < f {
                y = yt;
                design = dt;
                field = ft_field;
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        grad = grad_y(&misfit_gradient(grid, &design, &field, target, &opts.params));
        step = (step * 1.5).min(step_cap(&grad));
    }

    let connected = is_connected(grid, &field.rho_phys, 0.5);
    IdentifyReport {
        design,
        initial_misfit,
        final_misfit: f,
        iterations,
        connected,
    }
}
