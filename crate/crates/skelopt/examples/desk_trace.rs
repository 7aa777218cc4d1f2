//! Runs a desk-scale optimization and prints the per-iteration log.
use skelopt::config::{LoadKindConfig, RunConfig};
use skelopt::optimizer::optimize;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = args.get(1).map(String::as_str).unwrap_or("uniaxial");
    let energy_on = args.get(2).map(String::as_str) != Some("off");
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(11);
    let max_iters: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(200);

    let mut cfg = RunConfig::default();
    cfg.grid.nx = 40;
    cfg.grid.ny = 40;
    cfg.grid.h = 1.0;
    cfg.load.case = match kind {
        "uniaxial" => LoadKindConfig::Uniaxial,
        "biaxial" => LoadKindConfig::Biaxial,
        _ => LoadKindConfig::Shear,
    };
    cfg.load.u_bar = 0.3 * 40.0;
    cfg.constraints.e_bar = 1.1;
    cfg.constraints.v_f = 0.3;
    cfg.constraints.energy_constraint = energy_on;
    cfg.design.n_components = 6;
    cfg.design.degree = 3;
    cfg.design.symmetric = true;
    cfg.design.rho_bar_init = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    cfg.design.rho_bar_min = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    cfg.design.w_min = 1.2;
    cfg.design.w_max = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(2.5);
    cfg.optimizer.max_iters = max_iters;
    cfg.optimizer.move_frac = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.04);
    cfg.optimizer.simp_iters = 0;
    cfg.solver.n_load_steps = 25;
    cfg.solver.max_cutbacks = 12;
    cfg.solver.max_newton_iters = 40;
    cfg.seed = seed;
    cfg.validate().unwrap();

    match optimize(&cfg) {
        Ok(out) => {
            for r in &out.records {
                println!(
                    "iter {:3}  obj {:12.4}  maxE {:10.4}  vol {:.4}  feasible {}",
                    r.iteration, r.objective, r.max_element_energy, r.volume_fraction, r.feasible
                );
            }
            ascii_field(&out.field.rho_phys, cfg.grid.nx, cfg.grid.ny);
            println!(
                "DONE term={:?} obj={:.4} maxE={:.4} vol={:.4} feasible={} connected={}",
                out.termination,
                out.objective,
                out.max_element_energy,
                out.volume_fraction,
                out.feasible,
                out.connected
            );
        }
        Err(e) => println!("ERROR: {e}"),
    }
}

fn ascii_field(rho: &[f64], nx: usize, ny: usize) {
    for iy in (0..ny).rev() {
        let row: String = (0..nx)
            .map(|ix| {
                let r = rho[iy * nx + ix];
                if r > 0.8 {
                    '#'
                } else if r > 0.5 {
                    'o'
                } else if r > 0.2 {
                    '.'
                } else {
                    ' '
                }
            })
            .collect();
        println!("{row}");
    }
}
