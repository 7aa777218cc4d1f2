//! Evaluates hand-built arched-band designs at desk scale: volume,
//! max failure energy, reaction, connectivity. Exploration aid.

use skelopt::density::{project_components, symmetrize, ProjectionParams};
use skelopt::design::DesignVector;
use skelopt::fem::{newton_solve, FeModel, InterpolationParams, SolverSettings};
use skelopt::geom::{BezierComponent, Vec2};
use skelopt::grid::Grid;
use skelopt::identify::is_connected;
use skelopt::material::Material;
use skelopt::pbc::{build_constraints, reaction_dofs, LoadCase, LoadKind};
use skelopt::response::{reaction_objective, volume_fraction};

fn arch(y0: f64, amp: f64, w: f64, l: f64) -> BezierComponent {
    BezierComponent::new(
        vec![
            Vec2::new(0.0, y0),
            Vec2::new(l / 3.0, y0 + amp),
            Vec2::new(2.0 * l / 3.0, y0 + amp),
            Vec2::new(l, y0),
        ],
        1.0,
        w,
    )
    .unwrap()
}

fn cosdip(y0: f64, amp: f64, w: f64, l: f64) -> BezierComponent {
    BezierComponent::new(
        vec![
            Vec2::new(0.0, y0 + amp),
            Vec2::new(0.25 * l, y0 + amp),
            Vec2::new(0.5 * l, y0 - 1.5 * amp),
            Vec2::new(0.75 * l, y0 + amp),
            Vec2::new(l, y0 + amp),
        ],
        1.0,
        w,
    )
    .unwrap()
}

fn cosdip_v(x0: f64, amp: f64, w: f64, l: f64) -> BezierComponent {
    BezierComponent::new(
        vec![
            Vec2::new(x0 + amp, 0.0),
            Vec2::new(x0 + amp, 0.25 * l),
            Vec2::new(x0 - 1.5 * amp, 0.5 * l),
            Vec2::new(x0 + amp, 0.75 * l),
            Vec2::new(x0 + amp, l),
        ],
        1.0,
        w,
    )
    .unwrap()
}

fn swave(y0: f64, amp: f64, w: f64, l: f64) -> BezierComponent {
    BezierComponent::new(
        vec![
            Vec2::new(0.0, y0),
            Vec2::new(l / 3.0, y0 + amp),
            Vec2::new(2.0 * l / 3.0, y0 - amp),
            Vec2::new(l, y0),
        ],
        1.0,
        w,
    )
    .unwrap()
}

fn arch_v(x0: f64, amp: f64, w: f64, l: f64) -> BezierComponent {
    BezierComponent::new(
        vec![
            Vec2::new(x0, 0.0),
            Vec2::new(x0 + amp, l / 3.0),
            Vec2::new(x0 + amp, 2.0 * l / 3.0),
            Vec2::new(x0, l),
        ],
        1.0,
        w,
    )
    .unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = args.get(1).map(String::as_str).unwrap_or("uniaxial");
    let amp: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(6.0);
    let w: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2.0);

    let grid = Grid::new(40, 40, 1.0);
    let l = grid.width();
    let components = match kind {
        "uniaxial" => vec![arch(8.0, amp, w, l)],
        "swave" => vec![swave(10.0, amp, w, l)],
        "archpair" => vec![arch(10.0, amp, w, l), arch(30.0, -amp, w, l)],
        "bipair" => vec![
            arch(10.0, amp, w, l),
            arch(30.0, -amp, w, l),
            arch_v(10.0, amp, w, l),
            arch_v(30.0, -amp, w, l),
        ],
        "shearpair" => vec![
            arch(10.0, amp, w, l),
            arch(30.0, -amp, w, l),
            arch_v(10.0, amp, w, l),
            arch_v(30.0, -amp, w, l),
        ],
        "cospair" => vec![cosdip(10.0, amp, w, l), cosdip(30.0, -amp, w, l)],
        "cosbi" => vec![
            cosdip(10.0, amp, w, l),
            cosdip(30.0, -amp, w, l),
            cosdip_v(10.0, amp, w, l),
            cosdip_v(30.0, -amp, w, l),
        ],
        "cosshear" => vec![
            cosdip(10.0, amp, w, l),
            cosdip(30.0, -amp, w, l),
            cosdip_v(10.0, amp, w, l),
            cosdip_v(30.0, -amp, w, l),
        ],
        "biaxial" => vec![arch(8.0, amp, w, l), arch_v(8.0, amp, w, l)],
        _ => vec![arch(8.0, amp, w, l), arch_v(8.0, amp, w, l)],
    };
    let components = if kind.contains("seed") {
        let n: usize = kind
            .trim_start_matches(|c: char| !c.is_ascii_digit())
            .parse()
            .unwrap_or(6);
        skelopt::identify::lattice_seed(&grid, n, 4, amp.min(1.0), w).components
    } else {
        components
    };
    let design = DesignVector::new(components);

    let params = ProjectionParams::default();
    let mut field = project_components(&grid, &design.components, &params);
    field = symmetrize(&grid, &field).unwrap();

    let model = FeModel::new(
        grid,
        Material::new(34.0, 5.8, 2000.0),
        InterpolationParams::default(),
        field.rho_phys.clone(),
    );
    let load_kind = match kind {
        k if k.starts_with("useed") => LoadKind::Uniaxial,
        k if k.starts_with("bseed") => LoadKind::Biaxial,
        "uniaxial" | "swave" | "archpair" | "cospair" => LoadKind::Uniaxial,
        "biaxial" | "bipair" | "cosbi" => LoadKind::Biaxial,
        _ => LoadKind::Shear,
    };
    let case = LoadCase {
        kind: load_kind,
        u_bar: 12.0,
    };
    let cset = build_constraints(&grid, &case, 1e8).unwrap();
    let settings = SolverSettings {
        n_load_steps: 25,
        max_cutbacks: 12,
        max_newton_iters: 40,
        ..SolverSettings::default()
    };
    let vol = volume_fraction(&field.rho_phys, &grid);
    let conn = is_connected(&grid, &field.rho_phys, 0.5);
    print!("vol {vol:.4} connected {conn} ");
    match newton_solve(&model, &cset, &settings) {
        Ok(rep) => {
            let max_e = rep
                .element_energies
                .iter()
                .cloned()
                .fold(0.0_f64, f64::max);
            let f = reaction_objective(&model, &reaction_dofs(&grid, load_kind), &rep).unwrap();
            println!("maxE {max_e:.4} reaction {f:.4}");
        }
        Err(e) => println!("SOLVE FAILED: {e}"),
    }
}
