//! Flattened design vector over a set of skeleton components.
//!
//! Per-component variable order: a_0..a_n, b_0..b_n, rho_bar, w. Components
//! are concatenated in order.

use crate::geom::{BezierComponent, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector {
    pub components: Vec<BezierComponent>,
}

/// Number of design variables carried by one component.
pub fn vars_per_component(degree: usize) -> usize {
    2 * (degree + 1) + 2
}

impl DesignVector {
    pub fn new(components: Vec<BezierComponent>) -> Self {
        Self { components }
    }

    pub fn degree(&self) -> usize {
        self.components[0].degree()
    }

    pub fn n_vars(&self) -> usize {
        self.components
            .iter()
            .map(|c| vars_per_component(c.degree()))
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_vars());
        for c in &self.components {
            x.extend(c.control_points.iter().map(|p| p.x));
            x.extend(c.control_points.iter().map(|p| p.y));
            x.push(c.rho_bar);
            x.push(c.w);
        }
        x
    }

    /// Rebuild from a flat vector, keeping each component's degree.
    pub fn unflatten(&self, x: &[f64]) -> Self {
        let mut components = Vec::with_capacity(self.components.len());
        let mut off = 0;
        for c in &self.components {
            let np = c.degree() + 1;
            let pts = (0..np)
                .map(|i| Vec2::new(x[off + i], x[off + np + i]))
                .collect();
            let rho_bar = x[off + 2 * np];
            let w = x[off + 2 * np + 1];
            components.push(BezierComponent {
                control_points: pts,
                rho_bar,
                w,
            });
            off += vars_per_component(c.degree());
        }
        Self { components }
    }

    /// Box bounds: control points inside the domain rectangle, rho in [0,1],
    /// w in [w_min, w_max].
    pub fn bounds(
        &self,
        domain_w: f64,
        domain_h: f64,
        w_min: f64,
        w_max: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.n_vars());
        let mut hi = Vec::with_capacity(self.n_vars());
        for c in &self.components {
            let np = c.degree() + 1;
            for _ in 0..np {
                lo.push(0.0);
                hi.push(domain_w);
            }
            for _ in 0..np {
                lo.push(0.0);
                hi.push(domain_h);
            }
            lo.push(0.0);
            hi.push(1.0);
            lo.push(w_min);
            hi.push(w_max);
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let c0 = BezierComponent::new(
            vec![Vec2::new(0.0, 1.0), Vec2::new(2.0, 3.0), Vec2::new(4.0, 5.0)],
            0.7,
            2.2,
        )
        .unwrap();
        let c1 = BezierComponent::new(
            vec![Vec2::new(1.0, 0.0), Vec2::new(3.0, 2.0)],
            0.4,
            2.9,
        )
        .unwrap();
        let dv = DesignVector::new(vec![c0, c1]);
        let x = dv.flatten();
        assert_eq!(x.len(), dv.n_vars());
        assert_eq!(dv.unflatten(&x), dv);
    }
}
