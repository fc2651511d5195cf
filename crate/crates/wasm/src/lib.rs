//! Browser bindings for the tungsten-ring gradiometer: phase against P1,
//! arm trajectories and a fringe scan.

use gravphase::phase::PhaseMethod;
use gravphase::scenario::{set_numeric, Overrides, Scenario};
use gravphase::Error;
use wasm_bindgen::prelude::*;

const BASE: &str = include_str!("../../cli/scenarios/appendix2_semiclassical.toml");

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// The bundled ring scenario with the apex height and ring radius replaced.
fn ring(apex_m: f64, radius_m: f64, steps: usize) -> Result<Scenario, Error> {
    let text = set_numeric(BASE, "source_trajectory.upper_arm_apex_above_source_m", apex_m)?;
    let text = set_numeric(&text, "source.radius_m", radius_m)?;
    Scenario::from_toml(
        &text,
        Overrides {
            steps: Some(steps),
            rel_tol: None,
        },
    )
}

fn p1_grid(points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| 0.1 + 0.8 * i as f64 / (n - 1) as f64).collect()
}

/// Rows of `[P1, quantum, semiclassical]` (rad), flattened.
#[wasm_bindgen]
pub fn phase_curves(apex_m: f64, radius_m: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let s = ring(apex_m, radius_m, 1000).map_err(js)?;
    let mut out = Vec::with_capacity(3 * points);
    for p1 in p1_grid(points) {
        let q = s.phase(PhaseMethod::PotentialIntegral, p1).map_err(js)?;
        let sc = s.phase(PhaseMethod::Semiclassical, p1).map_err(js)?;
        out.extend([p1, q.delta_phi, sc.delta_phi]);
    }
    Ok(out)
}

/// Rows of `[t, x1, x2, x_cm, xs]` along the vertical, flattened.
#[wasm_bindgen]
pub fn arm_trajectories(apex_m: f64, radius_m: f64, p1: f64) -> Result<Vec<f64>, JsError> {
    let mut s = ring(apex_m, radius_m, 1000).map_err(js)?;
    s.methods = vec![PhaseMethod::PotentialIntegral];
    s.time_nodes = 201;
    let rows = s.trajectory_rows(p1).map_err(js)?;
    Ok(rows.into_iter().flatten().collect())
}

/// Rows of `[reference phase, P(d1)]` for the semiclassical phase at `p1`,
/// followed by the fitted phase and contrast.
#[wasm_bindgen]
pub fn fringe(apex_m: f64, radius_m: f64, p1: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let mut s = ring(apex_m, radius_m, 1000).map_err(js)?;
    s.fringe_points = points.max(8);
    let phi = s.phase(PhaseMethod::Semiclassical, p1).map_err(js)?.delta_phi;
    let f = s.fringe(p1, phi).map_err(js)?;
    let mut out: Vec<f64> = f.scan.iter().flat_map(|&(a, b)| [a, b]).collect();
    out.push(f.fitted_phase.unwrap_or(f64::NAN));
    out.push(f.contrast);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_geometry_loads() {
        let s = ring(0.048, 0.075, 1000).unwrap();
        assert_eq!(s.p1_values.len(), 3);
    }

    #[test]
    fn curves_have_three_columns() {
        let s = ring(0.048, 0.075, 1000).unwrap();
        let q: Vec<f64> = p1_grid(3)
            .into_iter()
            .map(|p| s.phase(PhaseMethod::PotentialIntegral, p).unwrap().delta_phi)
            .collect();
        assert!(q.iter().all(|v| *v == q[0]));
    }
}
