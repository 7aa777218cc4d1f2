pub mod geom;
pub mod grid;
pub mod design;
pub mod density;
pub mod material;
pub mod par;
pub mod pbc;
pub mod fem;
pub mod response;
pub mod adjoint;
pub mod mma;
pub mod simp;
pub mod identify;
pub mod config;
pub mod export;
pub mod optimizer;
