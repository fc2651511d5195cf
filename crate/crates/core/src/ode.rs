//! Fixed-step classical Runge-Kutta for small state vectors.

use nalgebra::SVector;

use crate::error::{Error, Result};
use crate::Vec3;

/// Twelve components: four stacked 3-vectors.
pub type State12 = SVector<f64, 12>;

/// One classical fourth-order step of `y' = f(t, y)`.
pub fn rk4_step<const N: usize, F>(f: &mut F, t: f64, y: &SVector<f64, N>, h: f64) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(y + k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(y + k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(y + k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// `steps` equal steps from `t0` to `t1`.
pub fn rk4_integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: SVector<f64, N>,
    t1: f64,
    steps: usize,
) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    if steps == 0 || !(t1 - t0).is_finite() {
        return Err(Error::Validation("integration needs a finite span and at least one step".into()));
    }
    let h = (t1 - t0) / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        y = rk4_step(&mut f, t0 + i as f64 * h, &y, h)?;
    }
    Ok(y)
}

/// The `i`-th stacked 3-vector.
pub fn part<const N: usize>(y: &SVector<f64, N>, i: usize) -> Vec3 {
    Vec3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2])
}

pub fn stack4(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> State12 {
    let mut y = State12::zeros();
    for (i, v) in [a, b, c, d].iter().enumerate() {
        y.fixed_rows_mut::<3>(3 * i).copy_from(v);
    }
    y
}
