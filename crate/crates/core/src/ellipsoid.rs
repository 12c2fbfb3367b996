//! Ellipsoid cutting-plane engine shared by the dual solver, the multicast
//! rate-maximization and the beamforming feasibility problems.
//!
//! The ellipsoid is `{ z : (z - c)^T Q^-1 (z - c) <= 1 }`. A cut `(g, h)`
//! keeps the half-space `g^T (z - c) + h <= 0`; `h = 0` is a central cut,
//! `h > 0` a deep cut.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    log_volume: f64,
    iteration: usize,
}

/// Result of applying one cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutOutcome {
    Updated,
    /// The half-space misses the ellipsoid entirely.
    Empty,
    /// `g^T Q g` is no longer positive; the ellipsoid has collapsed numerically.
    Degenerate,
}

impl Ellipsoid {
    pub fn ball(center: DVector<f64>, radius: f64) -> Self {
        let semi = vec![radius; center.len()];
        Self::axis_aligned(center, &semi)
    }

    pub fn axis_aligned(center: DVector<f64>, semi_axes: &[f64]) -> Self {
        assert_eq!(center.len(), semi_axes.len());
        assert!(!semi_axes.is_empty(), "ellipsoid needs at least one dimension");
        let diag = DVector::from_iterator(semi_axes.len(), semi_axes.iter().map(|a| a * a));
        let log_volume = semi_axes.iter().map(|a| a.ln()).sum();
        Self {
            center,
            shape: DMatrix::from_diagonal(&diag),
            log_volume,
            iteration: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    /// `ln vol` up to the unit-ball constant: `0.5 ln det Q`.
    pub fn log_volume(&self) -> f64 {
        self.log_volume
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// `sqrt(g^T Q g)`: half-width of the ellipsoid along `g`.
    pub fn width_along(&self, g: &DVector<f64>) -> f64 {
        let qg = &self.shape * g;
        g.dot(&qg).max(0.0).sqrt()
    }

    pub fn cut(&mut self, g: &DVector<f64>, depth: f64) -> CutOutcome {
        let n = self.dim();
        let qg = &self.shape * g;
        let gqg = g.dot(&qg);
        if !(gqg > 0.0) || !gqg.is_finite() {
            return CutOutcome::Degenerate;
        }
        let root = gqg.sqrt();
        let alpha = (depth / root).max(0.0);
        if alpha > 1.0 {
            return CutOutcome::Empty;
        }
        self.iteration += 1;
        let b = qg / root;

        if n == 1 {
            // Interval [c - r, c + r] intersected with the half-space.
            let r = self.shape[(0, 0)].sqrt();
            let sign = g[0].signum();
            let lo_keep = self.center[0] - r;
            let hi_keep = self.center[0] + r;
            let boundary = self.center[0] - sign * alpha * r;
            let (lo, hi) = if sign > 0.0 { (lo_keep, boundary) } else { (boundary, hi_keep) };
            let new_r = 0.5 * (hi - lo);
            self.center[0] = 0.5 * (lo + hi);
            self.log_volume += (new_r / r).ln();
            self.shape[(0, 0)] = new_r * new_r;
            return CutOutcome::Updated;
        }

        let nf = n as f64;
        let step = (1.0 + nf * alpha) / (nf + 1.0);
        let shrink = 2.0 * (1.0 + nf * alpha) / ((nf + 1.0) * (1.0 + alpha));
        let scale = nf * nf * (1.0 - alpha * alpha) / (nf * nf - 1.0);

        self.center.axpy(-step, &b, 1.0);
        for c in 0..n {
            for r in 0..n {
                self.shape[(r, c)] = scale * (self.shape[(r, c)] - shrink * b[r] * b[c]);
            }
        }
        // Keep Q exactly symmetric.
        for c in 0..n {
            for r in (c + 1)..n {
                let avg = 0.5 * (self.shape[(r, c)] + self.shape[(c, r)]);
                self.shape[(r, c)] = avg;
                self.shape[(c, r)] = avg;
            }
        }
        self.log_volume += 0.5 * (nf * scale.ln() + (1.0 - shrink).ln());
        CutOutcome::Updated
    }
}

/// Constraint oracle answer at a query point.
pub enum Feasibility {
    Feasible,
    /// A violated convex constraint `f(z) > 0` with value `violation = f(z)`
    /// and a subgradient of `f`.
    Violated { violation: f64, subgradient: DVector<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityOptions {
    pub max_iterations: usize,
    /// Stop once the geometric-mean semi-axis has shrunk by this factor.
    pub volume_tol: f64,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            volume_tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchOutcome {
    Found(DVector<f64>),
    /// `certified` is true when a deep cut proved the intersection empty.
    NotFound { certified: bool, iterations: usize },
}

/// Central/deep-cut ellipsoid search for a point accepted by `oracle`.
pub fn find_feasible(
    mut ellipsoid: Ellipsoid,
    opts: &FeasibilityOptions,
    mut oracle: impl FnMut(&DVector<f64>) -> Feasibility,
) -> SearchOutcome {
    let n = ellipsoid.dim() as f64;
    let floor = ellipsoid.log_volume() + n * opts.volume_tol.ln();
    for it in 0..opts.max_iterations {
        match oracle(ellipsoid.center()) {
            Feasibility::Feasible => return SearchOutcome::Found(ellipsoid.center().clone()),
            Feasibility::Violated { violation, subgradient } => {
                match ellipsoid.cut(&subgradient, violation.max(0.0)) {
                    CutOutcome::Updated => {}
                    CutOutcome::Empty => return SearchOutcome::NotFound { certified: true, iterations: it + 1 },
                    CutOutcome::Degenerate => {
                        return SearchOutcome::NotFound { certified: false, iterations: it + 1 }
                    }
                }
            }
        }
        if ellipsoid.log_volume() < floor {
            return SearchOutcome::NotFound { certified: false, iterations: it + 1 };
        }
    }
    SearchOutcome::NotFound {
        certified: false,
        iterations: opts.max_iterations,
    }
}

/// Oracle answer for convex minimization.
pub enum Query {
    Objective { value: f64, subgradient: DVector<f64> },
    Violated { violation: f64, subgradient: DVector<f64> },
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub value: f64,
    pub point: Option<DVector<f64>>,
    pub iterations: usize,
}

/// Deep-cut ellipsoid minimization. Objective cuts use the best value seen
/// so far as the level, so the search stops as soon as no better point can
/// remain in the ellipsoid.
pub fn minimize(
    mut ellipsoid: Ellipsoid,
    opts: &FeasibilityOptions,
    mut oracle: impl FnMut(&DVector<f64>) -> Query,
) -> Minimum {
    let n = ellipsoid.dim() as f64;
    let floor = ellipsoid.log_volume() + n * opts.volume_tol.ln();
    let mut best = Minimum { value: f64::INFINITY, point: None, iterations: 0 };
    for it in 0..opts.max_iterations {
        best.iterations = it + 1;
        let (g, depth) = match oracle(ellipsoid.center()) {
            Query::Objective { value, subgradient } => {
                if value < best.value {
                    best.value = value;
                    best.point = Some(ellipsoid.center().clone());
                }
                (subgradient, value - best.value)
            }
            Query::Violated { violation, subgradient } => (subgradient, violation.max(0.0)),
        };
        if ellipsoid.cut(&g, depth) != CutOutcome::Updated || ellipsoid.log_volume() < floor {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_nonsmooth_function() {
        // max(|x - 1|, |y + 2|) has its minimum 0 at (1, -2).
        let e = Ellipsoid::ball(DVector::zeros(2), 10.0);
        let opts = FeasibilityOptions { max_iterations: 2000, volume_tol: 1e-10 };
        let m = minimize(e, &opts, |z| {
            let a = (z[0] - 1.0).abs();
            let b = (z[1] + 2.0).abs();
            let g = if a >= b {
                DVector::from_vec(vec![(z[0] - 1.0).signum(), 0.0])
            } else {
                DVector::from_vec(vec![0.0, (z[1] + 2.0).signum()])
            };
            Query::Objective { value: a.max(b), subgradient: g }
        });
        assert!(m.value < 1e-8, "{}", m.value);
        let p = m.point.unwrap();
        assert!((p[0] - 1.0).abs() < 1e-7 && (p[1] + 2.0).abs() < 1e-7);
    }

    fn det_log_volume(e: &Ellipsoid) -> f64 {
        0.5 * e.shape().clone().determinant().ln()
    }

    #[test]
    fn central_cut_volume_ratio() {
        for n in 2..8 {
            let mut e = Ellipsoid::ball(DVector::zeros(n), 3.0);
            let bound = -1.0 / (2.0 * n as f64);
            for k in 0..40 {
                let g = DVector::from_fn(n, |i, _| ((i + k) as f64 * 0.7).sin() + 0.1);
                let before = e.log_volume();
                assert_eq!(e.cut(&g, 0.0), CutOutcome::Updated);
                assert!(e.log_volume() - before <= bound + 1e-12);
                assert!((e.log_volume() - det_log_volume(&e)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn deep_cut_contains_kept_region_and_detects_empty() {
        let mut e = Ellipsoid::ball(DVector::zeros(2), 1.0);
        // Keep x <= -0.5.
        let g = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(e.cut(&g, 0.5), CutOutcome::Updated);
        let p = DVector::from_vec(vec![-0.9, 0.0]);
        let d = &p - e.center();
        let q_inv = e.shape().clone().try_inverse().unwrap();
        assert!(d.dot(&(q_inv * &d)) <= 1.0 + 1e-12);
        // Now demand x >= 5: empty.
        assert_eq!(e.cut(&(-g), 5.0), CutOutcome::Empty);
    }

    #[test]
    fn one_dimensional_interval() {
        let mut e = Ellipsoid::ball(DVector::from_vec(vec![0.0]), 1.0);
        e.cut(&DVector::from_vec(vec![1.0]), 0.0);
        assert!((e.center()[0] + 0.5).abs() < 1e-15);
        assert!((e.shape()[(0, 0)] - 0.25).abs() < 1e-15);
        e.cut(&DVector::from_vec(vec![-1.0]), 0.25);
        assert!((e.center()[0] + 0.125).abs() < 1e-15);
        assert!((e.log_volume() - 0.125f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn finds_point_in_polytope() {
        // x + y >= 1.5, x <= 1, y <= 1, inside a radius-10 ball.
        let e = Ellipsoid::ball(DVector::zeros(2), 10.0);
        let out = find_feasible(e, &FeasibilityOptions::default(), |z| {
            if z[0] > 1.0 {
                return Feasibility::Violated { violation: z[0] - 1.0, subgradient: DVector::from_vec(vec![1.0, 0.0]) };
            }
            if z[1] > 1.0 {
                return Feasibility::Violated { violation: z[1] - 1.0, subgradient: DVector::from_vec(vec![0.0, 1.0]) };
            }
            let s = 1.5 - z[0] - z[1];
            if s > 0.0 {
                return Feasibility::Violated { violation: s, subgradient: DVector::from_vec(vec![-1.0, -1.0]) };
            }
            Feasibility::Feasible
        });
        match out {
            SearchOutcome::Found(z) => assert!(z[0] <= 1.0 && z[1] <= 1.0 && z[0] + z[1] >= 1.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn certifies_empty_polytope() {
        let e = Ellipsoid::ball(DVector::zeros(2), 10.0);
        let out = find_feasible(e, &FeasibilityOptions::default(), |z| {
            if z[0] > 1.0 {
                return Feasibility::Violated { violation: z[0] - 1.0, subgradient: DVector::from_vec(vec![1.0, 0.0]) };
            }
            if z[0] < 2.0 {
                return Feasibility::Violated { violation: 2.0 - z[0], subgradient: DVector::from_vec(vec![-1.0, 0.0]) };
            }
            Feasibility::Feasible
        });
        assert!(matches!(out, SearchOutcome::NotFound { certified: true, .. }));
    }
}
