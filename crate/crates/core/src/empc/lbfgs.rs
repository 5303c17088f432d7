//! Projected limited-memory BFGS on a box with Armijo backtracking.

use std::collections::VecDeque;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the projected gradient infinity norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the relative objective decrease falls below this.
    pub objective_tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Largest move of any variable on a steepest-descent step.
    pub initial_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iterations: 50,
            gradient_tolerance: 1e-7,
            objective_tolerance: 1e-10,
            armijo: 1e-4,
            max_backtracks: 30,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub f_initial: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_evaluations: usize,
    pub projected_gradient: f64,
    pub converged: bool,
    pub message: &'static str,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let p = (x[i] - g[i]).clamp(lo[i], hi[i]) - x[i];
        m = m.max(p.abs());
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f` over `lo <= x <= hi`. `fg` returns the objective and
/// writes the gradient; `fo` evaluates the objective alone.
pub fn minimize<FG, FO>(
    mut fg: FG,
    mut fo: FO,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &LbfgsOptions,
) -> Result<LbfgsOutcome>
where
    FG: FnMut(&[f64], &mut [f64]) -> Result<f64>,
    FO: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g)?;
    let f_initial = f;
    let mut evaluations = 1;
    let mut gradient_evaluations = 1;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut pg = projected_gradient_norm(&x, &g, lo, hi);
    let mut iterations = 0;
    let mut message = "iteration limit";
    let mut converged = false;

    let mut d = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    while iterations < opts.max_iterations {
        if pg <= opts.gradient_tolerance {
            converged = true;
            message = "projected gradient below tolerance";
            break;
        }
        iterations += 1;

        // variables held at a bound by the gradient stay fixed
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let masked = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| if free[i] { v[i] } else { 0.0 }).collect() };

        let mut q = masked(&g);
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(&masked(s), &q);
            for i in 0..n {
                if free[i] {
                    q[i] -= a * y[i];
                }
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            if gamma.is_finite() && gamma > 0.0 {
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(&masked(y), &q);
            for i in 0..n {
                if free[i] {
                    q[i] += (a - b) * s[i];
                }
            }
        }
        for i in 0..n {
            d[i] = if free[i] { -q[i] } else { 0.0 };
        }

        let mut step = 1.0;
        let slope = dot(&d, &g);
        if mem.is_empty() || !(slope < 0.0) {
            mem.clear();
            let gmax = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
            if gmax == 0.0 {
                converged = true;
                message = "no free descent direction";
                break;
            }
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
            step = opts.initial_step / gmax;
        }

        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            for i in 0..n {
                xt[i] = x[i] + step * d[i];
            }
            project(&mut xt, lo, hi);
            let decrease: f64 = (0..n).map(|i| g[i] * (xt[i] - x[i])).sum();
            match fo(&xt) {
                Ok(v) => {
                    evaluations += 1;
                    if v.is_finite() && v <= f + opts.armijo * decrease {
                        accepted = true;
                        break;
                    }
                }
                Err(_) => evaluations += 1,
            }
            step *= 0.5;
        }
        if !accepted {
            if mem.is_empty() {
                message = "line search failed";
                break;
            }
            mem.clear();
            continue;
        }

        let ft = fg(&xt, &mut gt)?;
        evaluations += 1;
        gradient_evaluations += 1;
        let s: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gt[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let rel = (f - ft) / f.abs().max(ft.abs()).max(1e-12);
        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        f = ft;
        pg = projected_gradient_norm(&x, &g, lo, hi);
        if rel.abs() < opts.objective_tolerance {
            converged = true;
            message = "objective change below tolerance";
            break;
        }
    }
    if !converged && pg <= opts.gradient_tolerance {
        converged = true;
        message = "projected gradient below tolerance";
    }
    Ok(LbfgsOutcome {
        x,
        f,
        f_initial,
        iterations,
        evaluations,
        gradient_evaluations,
        projected_gradient: pg,
        converged,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosen(x: &[f64], g: &mut [f64]) -> f64 {
        let n = x.len();
        let mut f = 0.0;
        g.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
            g[i] += -400.0 * a * x[i] - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        f
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let lo = vec![-5.0; 4];
        let hi = vec![5.0; 4];
        let opts = LbfgsOptions {
            max_iterations: 500,
            gradient_tolerance: 1e-9,
            objective_tolerance: 0.0,
            ..Default::default()
        };
        let r = minimize(
            |x, g| Ok(rosen(x, g)),
            |x| Ok(rosen(x, &mut vec![0.0; x.len()])),
            &[-1.2, 1.0, -1.2, 1.0],
            &lo,
            &hi,
            &opts,
        )
        .unwrap();
        for v in &r.x {
            assert!((v - 1.0).abs() < 1e-4, "{:?}", r);
        }
    }

    #[test]
    fn active_bounds() {
        // minimum of (x-2)^2 + (y+1)^2 on [0,1]^2 is (1, 0)
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 2.0);
            g[1] = 2.0 * (x[1] + 1.0);
            Ok((x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2))
        };
        let r = minimize(
            f,
            |x| f(x, &mut [0.0; 2]),
            &[0.5, 0.5],
            &[0.0; 2],
            &[1.0; 2],
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-12 && r.x[1].abs() < 1e-12);
        assert!((r.f - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_objective_goes_to_a_vertex() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            g[1] = -2.0;
            Ok(x[0] - 2.0 * x[1])
        };
        let r = minimize(
            f,
            |x| f(x, &mut [0.0; 2]),
            &[0.3, 0.3],
            &[0.0; 2],
            &[1.0; 2],
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert_eq!(r.x, vec![0.0, 1.0]);
    }

    #[test]
    fn never_increases_the_objective() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 4.0 * x[0].powi(3) - 3.0;
            Ok(x[0].powi(4) - 3.0 * x[0])
        };
        let r = minimize(
            f,
            |x| f(x, &mut [0.0]),
            &[0.0],
            &[-2.0],
            &[2.0],
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert!(r.f <= r.f_initial);
        assert!((r.x[0] - 0.75f64.cbrt()).abs() < 1e-5);
    }
}
