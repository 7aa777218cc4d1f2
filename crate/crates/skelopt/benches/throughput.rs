//! Throughput benchmarks for the element-parallel hot paths.
//!
//! Run with the default (parallel) feature set and again with the
//! sequential fallback to compare:
//!
//! ```text
//! cargo bench -p skelopt
//! cargo bench -p skelopt --no-default-features
//! ```

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::DVector;

use skelopt::density::{field_sensitivity, project_components, ProjectionParams};
use skelopt::fem::{newton_solve, FeModel, InterpolationParams, SolverSettings};
use skelopt::grid::Grid;
use skelopt::identify::lattice_seed;
use skelopt::material::Material;
use skelopt::pbc::{build_constraints, LoadCase, LoadKind};

fn bench_projection(c: &mut Criterion) {
    let grid = Grid::new(100, 100, 0.1);
    let design = lattice_seed(&grid, 15, 4, 0.5, 2.5);
    let params = ProjectionParams::default();

    let mut group = c.benchmark_group("projection");
    group.sample_size(10);
    group.bench_function("project_100x100_15_components", |b| {
        b.iter(|| project_components(&grid, &design.components, &params))
    });

    let field = project_components(&grid, &design.components, &params);
    group.bench_function("field_jacobian_100x100_15_components", |b| {
        b.iter(|| field_sensitivity(&grid, &design, &field, &params))
    });
    group.finish();
}

fn bench_assembly(c: &mut Criterion) {
    let grid = Grid::new(60, 60, 1.0 / 6.0);
    let design = lattice_seed(&grid, 8, 3, 0.6, 0.5);
    let params = ProjectionParams::default();
    let field = project_components(&grid, &design.components, &params);
    let model = FeModel::new(
        grid.clone(),
        Material::new(0.34, 0.058, 20.0),
        InterpolationParams::default(),
        field.rho_phys.clone(),
    );
    // a mildly deformed state so the tangent is assembled off the reference
    let n = grid.n_dofs();
    let u = DVector::from_fn(n, |i, _| 0.01 * ((i % 17) as f64 - 8.0) / 8.0);

    let mut group = c.benchmark_group("assembly");
    group.sample_size(30);
    group.bench_function("assemble_residual_60x60", |b| {
        b.iter_batched(
            || u.clone(),
            |u| model.assemble(&u, false).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("assemble_tangent_60x60", |b| {
        b.iter_batched(
            || u.clone(),
            |u| model.assemble(&u, true).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn bench_solve(c: &mut Criterion) {
    let grid = Grid::new(20, 20, 0.5);
    let design = lattice_seed(&grid, 6, 3, 0.6, 1.0);
    let params = ProjectionParams::default();
    let field = project_components(&grid, &design.components, &params);
    let model = FeModel::new(
        grid.clone(),
        Material::new(0.34, 0.058, 20.0),
        InterpolationParams::default(),
        field.rho_phys.clone(),
    );
    let case = LoadCase {
        kind: LoadKind::Uniaxial,
        u_bar: 0.5,
    };
    let cset = build_constraints(&grid, &case, 1e8).unwrap();
    let settings = SolverSettings {
        n_load_steps: 5,
        ..SolverSettings::default()
    };

    let mut group = c.benchmark_group("newton");
    group.sample_size(10);
    group.bench_function("newton_solve_20x20_uniaxial", |b| {
        b.iter(|| newton_solve(&model, &cset, &settings).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_projection, bench_assembly, bench_solve);
criterion_main!(benches);
