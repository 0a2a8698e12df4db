//! Adaptive Dormand–Prince 5(4) integrator used as a reference for
//! spatially constant runs.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-10, initial_step: 1e-4, max_steps: 1_000_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B_LOW: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Integrates `y' = rhs(t, y)` from `times[0]` and returns the state at every
/// requested time (ascending). The step size is clipped to land on each output
/// time exactly.
pub fn integrate<F>(mut rhs: F, y0: &[f64], times: &[f64], opts: &OdeOptions) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("output times must be ascending".into()));
    }
    let n = y0.len();
    let mut out = Vec::with_capacity(times.len());
    let Some(&t_start) = times.first() else {
        return Ok(out);
    };
    let mut t = t_start;
    let mut y = y0.to_vec();
    let mut h = opts.initial_step;
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut steps = 0;
    out.push(y.clone());

    for &target in &times[1..] {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::InvalidParameter(format!("ODE integration exceeded {} steps", opts.max_steps)));
            }
            steps += 1;
            let last = t + h >= target;
            let step = if last { target - t } else { h };
            for s in 0..7 {
                for i in 0..n {
                    stage[i] = y[i] + step * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
                }
                rhs(t + C[s] * step, &stage, &mut k[s]);
            }
            let mut err = 0.0f64;
            let mut y_new = vec![0.0; n];
            for i in 0..n {
                let hi: f64 = (0..7).map(|s| B[s] * k[s][i]).sum();
                let lo: f64 = (0..7).map(|s| B_LOW[s] * k[s][i]).sum();
                y_new[i] = y[i] + step * hi;
                let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((step * (hi - lo) / scale).abs());
            }
            if !err.is_finite() {
                return Err(Error::NonFinite("ODE integration".into()));
            }
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y_new;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !(last && err <= 1.0) {
                h = step * factor;
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let ys = integrate(|_, y, dy| dy[0] = -y[0], &[1.0], &times, &OdeOptions::default()).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let times = [0.0, 1.0, 2.0 * std::f64::consts::PI];
        let ys = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[1.0, 0.0],
            &times,
            &OdeOptions::default(),
        )
        .unwrap();
        assert!((ys[1][0] - 1f64.cos()).abs() < 1e-9);
        assert!((ys[2][0] - 1.0).abs() < 1e-9 && ys[2][1].abs() < 1e-9);
    }

    #[test]
    fn logistic_closed_form() {
        // y' = (y − y³)/2 with y(0) = c has y² = c² e^t / (1 − c² + c² e^t).
        let c: f64 = 0.1;
        let times = [0.0, 2.0, 4.0];
        let ys =
            integrate(|_, y, dy| dy[0] = 0.5 * (y[0] - y[0].powi(3)), &[c], &times, &OdeOptions::default()).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            let e = t.exp();
            let exact = (c * c * e / (1.0 - c * c + c * c * e)).sqrt();
            assert!((y[0] - exact).abs() < 1e-9);
        }
    }
}
