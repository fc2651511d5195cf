//! Uniform time grids, composite Simpson quadrature and Gauss-Legendre rules.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest sample count `refine_until_converged` will try.
pub const MAX_REFINED_NODES: usize = (1 << 20) + 1;

/// Uniform sampling of `[t0, t1]` with an odd number of nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
            return Err(Error::Config(format!(
                "time grid needs finite t1 > t0, got [{t0}, {t1}]"
            )));
        }
        if n < 3 || n % 2 == 0 {
            return Err(Error::Config(format!(
                "time grid sample count must be odd and >= 3, got {n}"
            )));
        }
        Ok(TimeGrid { t0, t1, n })
    }

    /// Grid on `[0, 2T]` whose Simpson panels never straddle `t = T`.
    ///
    /// The node count is rounded up to the next `4j + 1`, so the midpoint is
    /// an even-index node and a panel boundary.
    pub fn interferometer(t_pulse: f64, min_nodes: usize) -> Result<Self> {
        let intervals = min_nodes.saturating_sub(1).max(4);
        let intervals = intervals.div_ceil(4) * 4;
        TimeGrid::new(0.0, 2.0 * t_pulse, intervals + 1)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / (self.n - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.t1
        } else {
            self.t0 + self.step() * i as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.time(i)).collect()
    }

    /// The grid with twice as many intervals.
    pub fn refined(&self) -> Self {
        TimeGrid {
            n: 2 * (self.n - 1) + 1,
            ..*self
        }
    }

    /// Every other node, when that still leaves an even interval count.
    pub fn coarsened(&self) -> Option<Self> {
        let intervals = self.n - 1;
        (intervals % 4 == 0).then(|| TimeGrid {
            n: intervals / 2 + 1,
            ..*self
        })
    }
}

/// Composite Simpson estimate of the integral of `samples` over `grid`.
///
/// Exact for polynomials up to degree three.
pub fn integrate_time(samples: &[f64], grid: &TimeGrid) -> Result<f64> {
    if samples.len() != grid.len() {
        return Err(Error::Config(format!(
            "sample count {} does not match grid size {}",
            samples.len(),
            grid.len()
        )));
    }
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    Ok(simpson(samples, grid.step()))
}

pub(crate) fn simpson(samples: &[f64], h: f64) -> f64 {
    let n = samples.len();
    debug_assert!(n >= 3 && n % 2 == 1);
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, &s) in samples.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += s;
        } else {
            even += s;
        }
    }
    h / 3.0 * (samples[0] + samples[n - 1] + 4.0 * odd + 2.0 * even)
}

/// Simpson estimate plus a Richardson error estimate from the half-resolution grid.
pub(crate) fn integrate_with_error(samples: &[f64], grid: &TimeGrid) -> Result<(f64, f64)> {
    let fine = integrate_time(samples, grid)?;
    let err = match grid.coarsened() {
        Some(coarse) => {
            let sub: Vec<f64> = samples.iter().step_by(2).copied().collect();
            (fine - simpson(&sub, coarse.step())).abs() / 15.0
        }
        None => f64::NAN,
    };
    Ok((fine, err))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refined {
    pub value: f64,
    /// Relative change between the last two estimates.
    pub achieved_rel_tol: f64,
    /// Node count of the grid that produced `value`.
    pub nodes: usize,
}

/// Doubles the interval count of `start` until two successive estimates agree
/// to `rel_tol` (relative).
pub fn refine_until_converged<F>(start: TimeGrid, rel_tol: f64, mut integral: F) -> Result<Refined>
where
    F: FnMut(&TimeGrid) -> Result<f64>,
{
    if !(rel_tol > 0.0 && rel_tol <= 1e-2) {
        return Err(Error::Validation(format!(
            "rel_tol must lie in (0, 1e-2], got {rel_tol}"
        )));
    }
    let mut grid = start;
    let mut previous = integral(&grid)?;
    loop {
        let next_grid = grid.refined();
        if next_grid.len() > MAX_REFINED_NODES {
            return Err(Error::Convergence {
                context: format!("time refinement stopped at {} nodes", grid.len()),
                previous,
                last: integral(&grid)?,
            });
        }
        let last = integral(&next_grid)?;
        let diff = (last - previous).abs();
        let rel = if diff == 0.0 { 0.0 } else { diff / last.abs() };
        if rel < rel_tol {
            return Ok(Refined {
                value: last,
                achieved_rel_tol: rel,
                nodes: next_grid.len(),
            });
        }
        previous = last;
        grid = next_grid;
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Rule with `n` nodes; power-of-two sizes up to 8192 are cached.
    pub fn get(n: usize) -> std::borrow::Cow<'static, GaussLegendre> {
        static CACHE: [OnceLock<GaussLegendre>; 14] = [const { OnceLock::new() }; 14];
        if n.is_power_of_two() {
            let slot = n.trailing_zeros() as usize;
            if slot < CACHE.len() {
                return std::borrow::Cow::Borrowed(CACHE[slot].get_or_init(|| Self::compute(n)));
            }
        }
        std::borrow::Cow::Owned(Self::compute(n))
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
        grid.times().into_iter().map(f).collect()
    }

    #[test]
    fn constant_on_0_2() {
        let g = TimeGrid::new(0.0, 2.0, 5).unwrap();
        assert_eq!(integrate_time(&sample(&g, |_| 1.0), &g).unwrap(), 2.0);
    }

    #[test]
    fn cubic_exact() {
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let v = integrate_time(&sample(&g, |t| t * t * t), &g).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn log2_against_trapezoid_oracle() {
        // Oracle: trapezoid rule at a very fine resolution, independent of Simpson.
        let n = 2_000_001;
        let h = 1.0 / (n - 1) as f64;
        let mut trap = 0.5 * (1.0 + 0.5);
        for i in 1..n - 1 {
            trap += 1.0 / (1.0 + i as f64 * h);
        }
        trap *= h;
        let g = TimeGrid::new(0.0, 1.0, 101).unwrap();
        let v = integrate_time(&sample(&g, |t| 1.0 / (1.0 + t)), &g).unwrap();
        // At n = 101 Simpson sits 3.1e-10 above ln 2, exactly its leading
        // error term h^4 / 180 * (f'''(1) - f'''(0)).
        let leading = 0.01f64.powi(4) / 180.0 * (6.0 - 6.0 / 16.0);
        assert!((v - trap - leading).abs() < 1e-12, "{v} vs {trap}");
        let g = TimeGrid::new(0.0, 1.0, 201).unwrap();
        let v = integrate_time(&sample(&g, |t| 1.0 / (1.0 + t)), &g).unwrap();
        assert!((v - trap).abs() < 1e-10);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn length_mismatch_is_config_error() {
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        assert!(matches!(integrate_time(&[1.0; 4], &g), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_names_index() {
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let err = integrate_time(&[1.0, 1.0, f64::NAN, 1.0, 1.0], &g).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 2, .. }));
    }

    #[test]
    fn grid_rejects_even_or_short() {
        assert!(TimeGrid::new(0.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn interferometer_grid_has_midpoint_node() {
        let g = TimeGrid::interferometer(0.8, 100).unwrap();
        assert_eq!((g.len() - 1) % 4, 0);
        assert_eq!(g.time((g.len() - 1) / 2), 0.8);
    }

    #[test]
    fn gaussian_converges_to_closed_form() {
        // int_{-4}^{4} exp(-t^2) dt = sqrt(pi) erf(4)
        let exact = std::f64::consts::PI.sqrt() * statrs::function::erf::erf(4.0);
        let start = TimeGrid::new(-4.0, 4.0, 5).unwrap();
        let r = refine_until_converged(start, 1e-8, |g| {
            integrate_time(&sample(g, |t| (-t * t).exp()), g)
        })
        .unwrap();
        assert!((r.value - exact).abs() / exact < 1e-8);
    }

    #[test]
    fn constant_converges_at_first_refinement() {
        let start = TimeGrid::new(0.0, 3.0, 3).unwrap();
        let r = refine_until_converged(start, 1e-6, |g| integrate_time(&sample(g, |_| 2.0), g))
            .unwrap();
        assert_eq!(r.nodes, 5);
        assert_eq!(r.value, 6.0);
    }

    #[test]
    fn endpoint_singularity_with_subtraction() {
        // int_0^1 cos(t)/sqrt(t) dt. The closure removes the 1/sqrt(t) part
        // analytically and applies Simpson to the bounded remainder.
        // Oracle: the term-wise series sum_k (-1)^k / ((2k)! (2k + 1/2)).
        let mut oracle = 0.0;
        let mut fact = 1.0;
        for k in 0..20 {
            if k > 0 {
                fact *= (2 * k - 1) as f64 * (2 * k) as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            oracle += sign / (fact * (2.0 * k as f64 + 0.5));
        }
        let start = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let r = refine_until_converged(start, 1e-4, |g| {
            let rem = sample(g, |t| if t == 0.0 { 0.0 } else { (t.cos() - 1.0) / t.sqrt() });
            Ok(2.0 + integrate_time(&rem, g)?)
        })
        .unwrap();
        assert!((r.value - oracle).abs() / oracle < 1e-4, "{} vs {}", r.value, oracle);
        // Documented: converges by 9 nodes for this integrand.
        assert!(r.nodes <= 9, "needed {} nodes", r.nodes);
    }

    #[test]
    fn refinement_failure_carries_estimates() {
        let start = TimeGrid::new(0.0, 1.0, (1 << 19) + 1).unwrap();
        let mut flip = 0.0;
        let err = refine_until_converged(start, 1e-6, |_| {
            flip += 1.0;
            Ok(flip)
        })
        .unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
        for n in [1usize, 2, 5, 64, 128] {
            let gl = GaussLegendre::get(n);
            let deg = 2 * n - 1;
            let v = gl.integrate(0.0, 1.0, |x| x.powi(deg as i32));
            assert!((v - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n = {n}");
        }
    }
}
