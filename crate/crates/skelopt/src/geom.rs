//! Bezier skeleton curves: evaluation, point projection and distance
//! sensitivities with respect to the control points.

use thiserror::Error;

pub type Vec2 = nalgebra::Vector2<f64>;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("distance gradient is singular (query point on the skeleton)")]
    SingularGradient,
}

/// One skeleton component: a degree-n Bezier curve carrying a segment
/// density `rho_bar` and a half-width `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierComponent {
    pub control_points: Vec<Vec2>,
    pub rho_bar: f64,
    pub w: f64,
}

impl BezierComponent {
    pub fn new(control_points: Vec<Vec2>, rho_bar: f64, w: f64) -> Result<Self, GeomError> {
        if control_points.len() < 2 {
            return Err(GeomError::InvalidArgument(
                "a curve needs at least two control points".into(),
            ));
        }
        if !(0.0..=1.0).contains(&rho_bar) {
            return Err(GeomError::InvalidArgument(format!(
                "segment density {rho_bar} outside [0,1]"
            )));
        }
        if w <= 0.0 {
            return Err(GeomError::InvalidArgument(format!(
                "half-width {w} must be positive"
            )));
        }
        Ok(Self {
            control_points,
            rho_bar,
            w,
        })
    }

    pub fn degree(&self) -> usize {
        self.control_points.len() - 1
    }

    /// Largest pairwise control-point distance; length scale of the curve.
    pub fn extent(&self) -> f64 {
        let pts = &self.control_points;
        let mut ext: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                ext = ext.max((pts[i] - pts[j]).norm());
            }
        }
        ext
    }

    pub fn is_degenerate(&self) -> bool {
        self.extent() < 1e-14
    }
}

/// Result of projecting a query point onto a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResult {
    /// Curve parameter of the closest point.
    pub t0: f64,
    /// Euclidean distance from the query to the foot point.
    pub distance: f64,
    /// Closest point on the curve.
    pub foot: Vec2,
    /// True iff `t0` is strictly inside (0,1).
    pub interior: bool,
}

fn binomial(n: usize, i: usize) -> f64 {
    let mut c = 1.0;
    for k in 0..i.min(n - i) {
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    c
}

/// Bernstein basis value B_i^n(t).
pub fn bernstein(n: usize, i: usize, t: f64) -> Result<f64, GeomError> {
    if i > n {
        return Err(GeomError::InvalidArgument(format!(
            "index {i} exceeds degree {n}"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(GeomError::InvalidArgument(format!(
            "parameter {t} outside [0,1]"
        )));
    }
    Ok(binomial(n, i) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32))
}

/// All n+1 Bernstein values at once. `t` is assumed in [0,1].
pub fn bernstein_all(n: usize, t: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| binomial(n, i) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32))
        .collect()
}

/// d/dt B_i^n(t) = n (B_{i-1}^{n-1} - B_i^{n-1}).
fn bernstein_deriv(n: usize, i: usize, t: f64) -> f64 {
    let nm = n - 1;
    let lo = if i == 0 {
        0.0
    } else {
        binomial(nm, i - 1) * t.powi((i - 1) as i32) * (1.0 - t).powi((nm - (i - 1)) as i32)
    };
    let hi = if i > nm {
        0.0
    } else {
        binomial(nm, i) * t.powi(i as i32) * (1.0 - t).powi((nm - i) as i32)
    };
    n as f64 * (lo - hi)
}

/// Curve point at parameter `t`.
pub fn eval(curve: &BezierComponent, t: f64) -> Vec2 {
    let n = curve.degree();
    let basis = bernstein_all(n, t);
    let mut p = Vec2::zeros();
    for (b, cp) in basis.iter().zip(&curve.control_points) {
        p += *b * cp;
    }
    p
}

/// First derivative dχ/dt, built from forward differences of control points.
pub fn eval_d1(curve: &BezierComponent, t: f64) -> Vec2 {
    let n = curve.degree();
    let basis = bernstein_all(n - 1, t);
    let mut v = Vec2::zeros();
    for (i, b) in basis.iter().enumerate() {
        v += *b * (curve.control_points[i + 1] - curve.control_points[i]);
    }
    n as f64 * v
}

/// Second derivative d²χ/dt².
pub fn eval_d2(curve: &BezierComponent, t: f64) -> Vec2 {
    let n = curve.degree();
    if n < 2 {
        return Vec2::zeros();
    }
    let basis = bernstein_all(n - 2, t);
    let mut v = Vec2::zeros();
    for (i, b) in basis.iter().enumerate() {
        let c0 = curve.control_points[i + 1] - curve.control_points[i];
        let c1 = curve.control_points[i + 2] - curve.control_points[i + 1];
        v += *b * (c1 - c0);
    }
    (n * (n - 1)) as f64 * v
}

/// Orthogonality residual (χ(t) - p)·χ'(t).
fn ortho_residual(curve: &BezierComponent, p: Vec2, t: f64) -> f64 {
    (eval(curve, t) - p).dot(&eval_d1(curve, t))
}

const PROJECT_SAMPLES: usize = 64;
const NEWTON_MAX_ITERS: usize = 30;

/// Closest point on the curve to `p`.
///
/// Samples the orthogonality residual on a uniform grid, Newton-refines each
/// sign-change bracket and each sampled local distance minimum, and keeps the
/// global best among the refined candidates and the two endpoints. Ties go to
/// the smaller parameter.
pub fn project_point(curve: &BezierComponent, p: Vec2) -> ProjectionResult {
    if curve.is_degenerate() {
        let foot = curve.control_points[0];
        return ProjectionResult {
            t0: 0.0,
            distance: (p - foot).norm(),
            foot,
            interior: false,
        };
    }

    let scale = curve.extent();
    let res_tol = 1e-12 * scale.max(1.0) * scale.max(1.0);

    let ts: Vec<f64> = (0..=PROJECT_SAMPLES)
        .map(|k| k as f64 / PROJECT_SAMPLES as f64)
        .collect();
    let gs: Vec<f64> = ts.iter().map(|&t| ortho_residual(curve, p, t)).collect();
    let ds: Vec<f64> = ts.iter().map(|&t| (eval(curve, t) - p).norm()).collect();

    let newton = |t_init: f64| -> f64 {
        let mut t = t_init;
        for _ in 0..NEWTON_MAX_ITERS {
            let g = ortho_residual(curve, p, t);
            if g.abs() <= res_tol {
                break;
            }
            let d1 = eval_d1(curve, t);
            let gp = d1.norm_squared() + (eval(curve, t) - p).dot(&eval_d2(curve, t));
            if gp.abs() < 1e-300 {
                break;
            }
            t = (t - g / gp).clamp(0.0, 1.0);
        }
        t
    };

    let mut candidates: Vec<f64> = vec![0.0, 1.0];
    for k in 0..PROJECT_SAMPLES {
        if gs[k] == 0.0 || gs[k].signum() != gs[k + 1].signum() {
            // bisection start at the bracket midpoint, then Newton
            candidates.push(newton(0.5 * (ts[k] + ts[k + 1])));
        }
    }
    for k in 1..PROJECT_SAMPLES {
        if ds[k] <= ds[k - 1] && ds[k] <= ds[k + 1] {
            candidates.push(newton(ts[k]));
        }
    }

    let mut best_t = 0.0;
    let mut best_d = f64::INFINITY;
    for &t in &candidates {
        let d = (eval(curve, t) - p).norm();
        if d < best_d - 1e-15 || (d < best_d + 1e-15 && t < best_t) {
            best_d = d;
            best_t = t;
        }
    }

    let interior = best_t > 1e-12 && best_t < 1.0 - 1e-12;
    ProjectionResult {
        t0: best_t,
        distance: best_d,
        foot: eval(curve, best_t),
        interior,
    }
}

/// Gradient of the projection distance with respect to every control-point
/// coordinate, as (∂d/∂a_i, ∂d/∂b_i) pairs.
///
/// For an interior foot point the parameter shift ∂t0/∂a_i = -Q_a/P_a enters
/// through the implicit stationarity condition; at the endpoints t0 is fixed
/// and only the direct Bernstein terms remain.
pub fn distance_gradient(
    curve: &BezierComponent,
    p: Vec2,
    proj: &ProjectionResult,
) -> Result<Vec<(f64, f64)>, GeomError> {
    if proj.distance < 1e-12 {
        return Err(GeomError::SingularGradient);
    }
    let n = curve.degree();
    let t0 = proj.t0;
    let basis = bernstein_all(n, t0);
    let diff = proj.foot - p;
    let d = proj.distance;

    if !proj.interior {
        return Ok(basis
            .iter()
            .map(|&b| (diff.x * b / d, diff.y * b / d))
            .collect());
    }

    let d1 = eval_d1(curve, t0);
    let d2 = eval_d2(curve, t0);
    // P is common to both coordinate families
    let p_den = d1.norm_squared() + diff.dot(&d2);
    let mut grad = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let b = basis[i];
        let db = bernstein_deriv(n, i, t0);
        let (dt_da, dt_db) = if p_den.abs() < 1e-300 {
            (0.0, 0.0)
        } else {
            let qa = b * d1.x + diff.x * db;
            let qb = b * d1.y + diff.y * db;
            (-qa / p_den, -qb / p_den)
        };
        // total derivatives of the foot point, then of the distance
        let dx_da = b + d1.x * dt_da;
        let dy_da = d1.y * dt_da;
        let dx_db = d1.x * dt_db;
        let dy_db = b + d1.y * dt_db;
        grad.push((
            (diff.x * dx_da + diff.y * dy_da) / d,
            (diff.x * dx_db + diff.y * dy_db) / d,
        ));
    }
    Ok(grad)
}
