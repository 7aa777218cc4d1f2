//! Mooney-Rivlin constitutive model under plane strain, with the matching
//! small-strain isotropic moduli used by the energy interpolation.

use nalgebra::Matrix2;

/// Base material: two Mooney-Rivlin constants plus a bulk modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub a10: f64,
    pub a01: f64,
    pub k: f64,
}

impl Material {
    pub fn new(a10: f64, a01: f64, k: f64) -> Self {
        assert!(a10 > 0.0 && a01 >= 0.0 && k > 0.0);
        Self { a10, a01, k }
    }

    /// Small-strain shear modulus of the linearized model.
    pub fn shear_modulus(&self) -> f64 {
        2.0 * (self.a10 + self.a01)
    }

    /// Lame first parameter from the bulk and shear moduli.
    pub fn lame_lambda(&self) -> f64 {
        self.k - 2.0 / 3.0 * self.shear_modulus()
    }
}

/// Invariants of C = F^T F with the plane-strain embedding C33 = 1.
/// I2 here is the double contraction C:C.
pub fn invariants(f: &Matrix2<f64>) -> (f64, f64, f64) {
    let c = f.transpose() * f;
    let i1 = c[(0, 0)] + c[(1, 1)] + 1.0;
    let i2 = c[(0, 0)] * c[(0, 0)] + c[(1, 1)] * c[(1, 1)] + 2.0 * c[(0, 1)] * c[(0, 1)] + 1.0;
    let i3 = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(0, 1)];
    (i1, i2, i3)
}

/// Strain energy density.
pub fn mr_energy(i1: f64, i2: f64, i3: f64, mat: &Material) -> f64 {
    assert!(i3 > 0.0, "non-positive det(C)");
    mat.a10 * (i1 * i3.powf(-1.0 / 3.0) - 3.0)
        + mat.a01 * (i2 * i3.powf(-2.0 / 3.0) - 3.0)
        + 0.5 * mat.k * (i3.sqrt() - 1.0) * (i3.sqrt() - 1.0)
}

/// Second Piola-Kirchhoff stress in reduced Voigt form (S11, S22, S12) and
/// the derivative matrix d(S_voigt)/d(C11, C22, C12).
#[derive(Debug, Clone, Copy)]
pub struct StressTangent {
    pub energy: f64,
    pub s: [f64; 3],
    pub m: [[f64; 3]; 3],
}

/// Analytic stress and material tangent at a deformation gradient.
pub fn mr_stress_tangent(f: &Matrix2<f64>, mat: &Material) -> StressTangent {
    let c = f.transpose() * f;
    let (c11, c22, c12) = (c[(0, 0)], c[(1, 1)], c[(0, 1)]);
    let i1 = c11 + c22 + 1.0;
    let i2 = c11 * c11 + c22 * c22 + 2.0 * c12 * c12 + 1.0;
    let i3 = c11 * c22 - c12 * c12;
    assert!(i3 > 0.0, "non-positive det(C)");

    let di1 = [1.0, 1.0, 0.0];
    let di2 = [2.0 * c11, 2.0 * c22, 4.0 * c12];
    let di3 = [c22, c11, -2.0 * c12];

    let p13 = i3.powf(-1.0 / 3.0);
    let p23 = i3.powf(-2.0 / 3.0);
    let p43 = i3.powf(-4.0 / 3.0);
    let p53 = i3.powf(-5.0 / 3.0);
    let p73 = i3.powf(-7.0 / 3.0);
    let p83 = i3.powf(-8.0 / 3.0);

    let psi1 = mat.a10 * p13;
    let psi2 = mat.a01 * p23;
    let psi3 = -mat.a10 * i1 * p43 / 3.0 - 2.0 * mat.a01 * i2 * p53 / 3.0
        + 0.5 * mat.k * (1.0 - i3.powf(-0.5));
    let psi13 = -mat.a10 * p43 / 3.0;
    let psi23 = -2.0 * mat.a01 * p53 / 3.0;
    let psi33 = 4.0 / 9.0 * mat.a10 * i1 * p73 + 10.0 / 9.0 * mat.a01 * i2 * p83
        + 0.25 * mat.k * i3.powf(-1.5);

    let mut g = [0.0; 3];
    for k in 0..3 {
        g[k] = psi1 * di1[k] + psi2 * di2[k] + psi3 * di3[k];
    }

    // Hessian of psi in the independent entries (C11, C22, C12)
    let d2i2 = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 4.0]];
    let d2i3 = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -2.0]];
    let mut h = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            h[a][b] = psi13 * (di1[a] * di3[b] + di3[a] * di1[b])
                + psi23 * (di2[a] * di3[b] + di3[a] * di2[b])
                + psi33 * di3[a] * di3[b]
                + psi2 * d2i2[a][b]
                + psi3 * d2i3[a][b];
        }
    }

    // S = 2 dpsi/dC in tensor sense; the shared off-diagonal picks up no 2
    let s = [2.0 * g[0], 2.0 * g[1], g[2]];
    let mut m = [[0.0; 3]; 3];
    for b in 0..3 {
        m[0][b] = 2.0 * h[0][b];
        m[1][b] = 2.0 * h[1][b];
        m[2][b] = h[2][b];
    }

    StressTangent {
        energy: mr_energy(i1, i2, i3, mat),
        s,
        m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mat() -> Material {
        Material::new(34.0, 5.8, 2000.0)
    }

    fn rand_f(rng: &mut impl Rng) -> Matrix2<f64> {
        loop {
            let f = Matrix2::new(
                1.0 + rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                1.0 + rng.gen_range(-0.3..0.3),
            );
            if f.determinant() > 0.2 {
                return f;
            }
        }
    }

    #[test]
    fn invariants_reference_values() {
        assert_eq!(invariants(&Matrix2::identity()), (3.0, 3.0, 1.0));
        let f = Matrix2::new(2.0, 0.0, 0.0, 1.0);
        let (i1, i2, i3) = invariants(&f);
        assert_eq!((i1, i2, i3), (6.0, 18.0, 4.0));
    }

    #[test]
    fn invariants_match_tensor_algebra() {
        // independent oracle: build the embedded 3x3 tensor explicitly
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let f = rand_f(&mut rng);
            let c2 = f.transpose() * f;
            let c3 = nalgebra::Matrix3::new(
                c2[(0, 0)],
                c2[(0, 1)],
                0.0,
                c2[(1, 0)],
                c2[(1, 1)],
                0.0,
                0.0,
                0.0,
                1.0,
            );
            let (i1, i2, i3) = invariants(&f);
            assert!((i1 - c3.trace()).abs() < 1e-12);
            let cc: f64 = c3.iter().map(|v| v * v).sum();
            assert!((i2 - cc).abs() < 1e-12);
            assert!((i3 - c3.determinant()).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_state_is_stress_free() {
        let st = mr_stress_tangent(&Matrix2::identity(), &mat());
        assert_eq!(st.energy, 0.0);
        for v in st.s {
            assert!(v.abs() < 1e-10 * mat().a10);
        }
    }

    #[test]
    fn frame_indifference() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let f = rand_f(&mut rng);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let q = Matrix2::new(th.cos(), -th.sin(), th.sin(), th.cos());
            let (i1, i2, i3) = invariants(&f);
            let (j1, j2, j3) = invariants(&(q * f));
            let e0 = mr_energy(i1, i2, i3, &mat());
            let e1 = mr_energy(j1, j2, j3, &mat());
            assert!((e0 - e1).abs() <= 1e-10 * e0.abs().max(1.0));
        }
    }

    /// Energy as a function of the independent C entries, for FD oracles.
    fn energy_of_c(c11: f64, c22: f64, c12: f64, m: &Material) -> f64 {
        let i1 = c11 + c22 + 1.0;
        let i2 = c11 * c11 + c22 * c22 + 2.0 * c12 * c12 + 1.0;
        let i3 = c11 * c22 - c12 * c12;
        mr_energy(i1, i2, i3, m)
    }

    #[test]
    fn stress_matches_fd_of_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = mat();
        let h = 1e-7;
        for _ in 0..30 {
            let f = rand_f(&mut rng);
            let c = f.transpose() * f;
            let (c11, c22, c12) = (c[(0, 0)], c[(1, 1)], c[(0, 1)]);
            let st = mr_stress_tangent(&f, &m);
            let fd = [
                (energy_of_c(c11 + h, c22, c12, &m) - energy_of_c(c11 - h, c22, c12, &m))
                    / (2.0 * h)
                    * 2.0,
                (energy_of_c(c11, c22 + h, c12, &m) - energy_of_c(c11, c22 - h, c12, &m))
                    / (2.0 * h)
                    * 2.0,
                (energy_of_c(c11, c22, c12 + h, &m) - energy_of_c(c11, c22, c12 - h, &m))
                    / (2.0 * h),
            ];
            for k in 0..3 {
                let denom = st.s[k].abs().max(1.0);
                assert!(
                    (st.s[k] - fd[k]).abs() / denom <= 1e-5,
                    "S[{k}]: {} vs fd {}",
                    st.s[k],
                    fd[k]
                );
            }
        }
    }

    #[test]
    fn tangent_matches_fd_of_stress() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let m = mat();
        let h = 1e-6;
        for _ in 0..20 {
            let f = rand_f(&mut rng);
            let c = f.transpose() * f;
            let c0 = [c[(0, 0)], c[(1, 1)], c[(0, 1)]];
            let st = mr_stress_tangent(&f, &m);
            // stress as a function of the reduced C entries
            let stress_of = |cv: [f64; 3]| -> [f64; 3] {
                // rebuild an F with this C via Cholesky of the 2x2
                let l11 = cv[0].sqrt();
                let l12 = cv[2] / l11;
                let l22 = (cv[1] - l12 * l12).sqrt();
                let fr = Matrix2::new(l11, l12, 0.0, l22);
                mr_stress_tangent(&fr, &m).s
            };
            for b in 0..3 {
                let mut cp = c0;
                cp[b] += h;
                let mut cm = c0;
                cm[b] -= h;
                let sp = stress_of(cp);
                let sm = stress_of(cm);
                for a in 0..3 {
                    let fd = (sp[a] - sm[a]) / (2.0 * h);
                    let denom = st.m[a][b].abs().max(10.0);
                    assert!(
                        (st.m[a][b] - fd).abs() / denom <= 1e-4,
                        "M[{a}][{b}]: {} vs fd {}",
                        st.m[a][b],
                        fd
                    );
                }
            }
            // minor symmetry of the reduced tangent: diag(2,2,1) M symmetric
            let w = [2.0, 2.0, 1.0];
            for a in 0..3 {
                for b in 0..3 {
                    let lhs = st.m[a][b] * w[b];
                    let rhs = st.m[b][a] * w[a];
                    assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1.0));
                }
            }
        }
    }
}
