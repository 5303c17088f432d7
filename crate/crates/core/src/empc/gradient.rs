//! Objective gradients: discrete adjoint over exact step Jacobians, and
//! central differences of the whole objective.

use serde::{Deserialize, Serialize};

use super::{penalty, Problem};
use crate::actuators::NU;
use crate::climate::NX;
use crate::error::Result;
use crate::simulator::step_jacobian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    #[default]
    Adjoint,
    FiniteDifference,
}

/// Objective and its gradient by the discrete adjoint. Step Jacobians
/// are exact, from forward-mode differentiation of the RK4 step map.
pub(super) fn adjoint(problem: &Problem<'_>, z: &[f64], grad: &mut [f64]) -> Result<f64> {
    let c = problem.config;
    let n = c.horizon;
    let mut xs = Vec::with_capacity(n + 1);
    let mut jac = Vec::with_capacity(n);
    xs.push(problem.x0);
    for k in 0..n {
        let (x, j) = step_jacobian(
            problem.model,
            &xs[k],
            &problem.input(z, k),
            &problem.forecast[k],
            c.sample_time,
        )?;
        xs.push(x);
        jac.push(j);
    }
    let f = problem.parts_of(z, &xs).total();

    // every predicted state carries its own revenue and penalty terms
    let rg = problem.revenue_gradient();
    let local = |x: &[f64; NX]| {
        let mut g = [0.0; NX];
        penalty(problem.model, &c.bounds, x, Some(&mut g));
        for i in 0..NX {
            g[i] -= rg[i];
        }
        g
    };
    let mut lambda = local(&xs[n]);
    grad.iter_mut().for_each(|g| *g = 0.0);

    for k in (0..n).rev() {
        let j = &jac[k];
        let m = k.min(c.control_steps - 1);
        for a in 0..NU {
            let vjp: f64 = (0..NX).map(|i| lambda[i] * j[i][NX + a]).sum();
            grad[m * NU + a] += 100.0 * (problem.coefficients[k][a] + vjp);
        }
        if k == 0 {
            break;
        }
        let mut next = local(&xs[k]);
        for (col, v) in next.iter_mut().enumerate() {
            *v += (0..NX).map(|i| lambda[i] * j[i][col]).sum::<f64>();
        }
        lambda = next;
    }
    Ok(f)
}

/// Central differences of the full objective in the scaled decision
/// vector. Near a bound the stencil shifts inside the box.
pub fn finite_difference_gradient(problem: &Problem<'_>, z: &[f64], grad: &mut [f64]) -> Result<()> {
    let h = 1e-4;
    let mut w = z.to_vec();
    for i in 0..z.len() {
        let lo = (z[i] - h).max(0.0);
        let hi = lo + 2.0 * h;
        let (lo, hi) = if hi > 1.0 { (1.0 - 2.0 * h, 1.0) } else { (lo, hi) };
        w[i] = hi;
        let fp = problem.objective(&w)?;
        w[i] = lo;
        let fm = problem.objective(&w)?;
        w[i] = z[i];
        grad[i] = (fp - fm) / (hi - lo);
    }
    Ok(())
}
