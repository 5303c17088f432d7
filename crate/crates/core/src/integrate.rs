//! Fixed-step classical Runge-Kutta and adaptive Dormand-Prince 5(4).

use crate::ad::Real;
use crate::error::{Error, Result};

/// One classical fourth-order Runge-Kutta step of an autonomous system.
/// Generic over the scalar so that dual numbers propagate the exact
/// tangent of the step map.
pub fn rk4_step<T: Real, const N: usize, F>(f: &mut F, x: &[T; N], h: f64) -> Result<[T; N]>
where
    F: FnMut(&[T; N], &mut [T; N]) -> Result<()>,
{
    let z = T::zero();
    let mut k1 = [z; N];
    let mut k2 = [z; N];
    let mut k3 = [z; N];
    let mut k4 = [z; N];
    let mut y = [z; N];
    f(x, &mut k1)?;
    for i in 0..N {
        y[i] = x[i] + k1[i] * (0.5 * h);
    }
    f(&y, &mut k2)?;
    for i in 0..N {
        y[i] = x[i] + k2[i] * (0.5 * h);
    }
    f(&y, &mut k3)?;
    for i in 0..N {
        y[i] = x[i] + k3[i] * h;
    }
    f(&y, &mut k4)?;
    let mut out = [z; N];
    for i in 0..N {
        out[i] = x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
    }
    Ok(out)
}

/// `steps` equal RK4 steps over `[t0, t1]` of a time-dependent system.
pub fn rk4<const N: usize, F>(mut f: F, t0: f64, t1: f64, x0: &[f64; N], steps: usize) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]) -> Result<()>,
{
    let h = (t1 - t0) / steps as f64;
    let mut x = *x0;
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        let mut k1 = [0.0; N];
        let mut k2 = [0.0; N];
        let mut k3 = [0.0; N];
        let mut k4 = [0.0; N];
        let mut y = [0.0; N];
        f(t, &x, &mut k1)?;
        for i in 0..N {
            y[i] = x[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &y, &mut k2)?;
        for i in 0..N {
            y[i] = x[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &y, &mut k3)?;
        for i in 0..N {
            y[i] = x[i] + h * k3[i];
        }
        f(t + h, &y, &mut k4)?;
        for i in 0..N {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// First trial step; the whole interval when `None`.
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            h_init: None,
            h_min: 1e-9,
            max_steps: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdaptiveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Step size proposed for the next interval.
    pub last_h: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand-Prince 5(4) over `[t0, t1]`.
///
/// A failing derivative evaluation inside a trial step rejects the step;
/// a failure at an accepted point is returned.
pub fn dopri5<const N: usize, F>(
    mut f: F,
    t0: f64,
    t1: f64,
    x0: &[f64; N],
    opts: &AdaptiveOptions,
) -> Result<([f64; N], AdaptiveStats)>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]) -> Result<()>,
{
    let mut stats = AdaptiveStats::default();
    let span = t1 - t0;
    if span == 0.0 {
        stats.last_h = opts.h_init.unwrap_or(0.0);
        return Ok((*x0, stats));
    }
    let mut t = t0;
    let mut x = *x0;
    let mut h = opts.h_init.unwrap_or(span).min(span);
    let mut k1 = [0.0; N];
    f(t, &x, &mut k1)?;
    stats.evaluations += 1;

    let mut k2 = [0.0; N];
    let mut k3 = [0.0; N];
    let mut k4 = [0.0; N];
    let mut k5 = [0.0; N];
    let mut k6 = [0.0; N];
    let mut k7 = [0.0; N];
    let mut y = [0.0; N];
    let mut xn = [0.0; N];

    while t1 - t > 1e-12 * span.abs() {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = h >= t1 - t;
        if last {
            h = t1 - t;
        }
        let stages = (|| -> Result<()> {
            for i in 0..N {
                y[i] = x[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, &y, &mut k2)?;
            for i in 0..N {
                y[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, &y, &mut k3)?;
            for i in 0..N {
                y[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, &y, &mut k4)?;
            for i in 0..N {
                y[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, &y, &mut k5)?;
            for i in 0..N {
                y[i] = x[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h, &y, &mut k6)?;
            for i in 0..N {
                xn[i] = x[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            f(t + h, &xn, &mut k7)?;
            Ok(())
        })();
        stats.evaluations += 6;

        let err = match stages {
            Ok(()) => {
                let mut acc = 0.0;
                for i in 0..N {
                    let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                    let sc = opts.abs_tol + opts.rel_tol * x[i].abs().max(xn[i].abs());
                    acc += (e / sc) * (e / sc);
                }
                (acc / N as f64).sqrt()
            }
            Err(_) => f64::INFINITY,
        };

        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            x = xn;
            k1 = k7;
            stats.accepted += 1;
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !last {
                h *= factor;
            } else {
                stats.last_h = h * factor;
            }
        } else {
            stats.rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h *= factor;
            if h < opts.h_min {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
    if stats.last_h == 0.0 {
        stats.last_h = h;
    }
    Ok((x, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential_decay() {
        let x = rk4(
            |_, x: &[f64; 1], d: &mut [f64; 1]| {
                d[0] = -x[0];
                Ok(())
            },
            0.0,
            1.0,
            &[1.0],
            20,
        )
        .unwrap();
        assert!((x[0] - (-1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn rk4_step_matches_rk4() {
        let mut g = |x: &[f64; 2], d: &mut [f64; 2]| {
            d[0] = x[1];
            d[1] = -x[0];
            Ok(())
        };
        let a = rk4_step(&mut g, &[1.0, 0.0], 0.1).unwrap();
        let b = rk4(|_, x: &[f64; 2], d: &mut [f64; 2]| g(x, d), 0.0, 0.1, &[1.0, 0.0], 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dopri5_oscillator() {
        let (x, stats) = dopri5(
            |_, x: &[f64; 2], d: &mut [f64; 2]| {
                d[0] = x[1];
                d[1] = -x[0];
                Ok(())
            },
            0.0,
            10.0,
            &[1.0, 0.0],
            &AdaptiveOptions {
                abs_tol: 1e-10,
                rel_tol: 1e-10,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((x[0] - 10f64.cos()).abs() < 1e-8);
        assert!((x[1] + 10f64.sin()).abs() < 1e-8);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn dopri5_time_dependent() {
        let (x, _) = dopri5(
            |t, _: &[f64; 1], d: &mut [f64; 1]| {
                d[0] = 3.0 * t * t;
                Ok(())
            },
            1.0,
            2.0,
            &[1.0],
            &AdaptiveOptions::default(),
        )
        .unwrap();
        assert!((x[0] - 8.0).abs() < 1e-9);
    }

    #[test]
    fn dopri5_rejects_failing_trial_steps() {
        // the derivative fails beyond x = 2, which only large trial steps reach
        let (x, stats) = dopri5(
            |_, x: &[f64; 1], d: &mut [f64; 1]| {
                if x[0] > 2.0 {
                    return Err(Error::Domain("overshoot".into()));
                }
                d[0] = 1.0 - x[0];
                Ok(())
            },
            0.0,
            5.0,
            &[0.0],
            &AdaptiveOptions {
                h_init: Some(1e3),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((x[0] - (1.0 - (-5f64).exp())).abs() < 1e-5);
        assert!(stats.rejected >= 1);
    }

    #[test]
    fn dopri5_propagates_failure_at_start() {
        let r = dopri5(
            |_, _: &[f64; 1], _: &mut [f64; 1]| Err(Error::Domain("bad".into())),
            0.0,
            1.0,
            &[0.0],
            &AdaptiveOptions::default(),
        );
        assert!(r.is_err());
    }
}
