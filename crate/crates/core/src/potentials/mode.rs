use super::Potential;
use crate::error::{finite, Error, Result};
use nalgebra::DVector;

pub const MODE_TOL: f64 = 1e-8;
const NEWTON_SWITCH: f64 = 1e-3;

/// Minimizer x* of V with its gradient residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub x_star: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

pub fn find_mode(p: &dyn Potential, x0: &[f64]) -> Result<Mode> {
    find_mode_with(p, x0, MODE_TOL, 100_000)
}

/// Gradient descent with step 1/β, switching to damped Newton once ‖∇V‖ < 1e−3.
pub fn find_mode_with(p: &dyn Potential, x0: &[f64], tol: f64, max_iter: usize) -> Result<Mode> {
    let d = p.dim();
    if x0.len() != d {
        return Err(crate::Error::shape(d, x0.len()));
    }
    let step = 1.0 / p.beta();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut gt = vec![0.0; d];
    let mut fx = finite(p.value(&x), "potential")?;
    for it in 0..max_iter {
        p.grad_into(&x, &mut g);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        finite(gn, "potential gradient")?;
        if gn <= tol {
            return Ok(Mode { x_star: x, grad_norm: gn, iterations: it });
        }
        let dir = if gn < NEWTON_SWITCH { newton_direction(p, &x, &g) } else { None };
        match dir {
            Some(dir) => {
                let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
                let mut t = 1.0;
                loop {
                    for i in 0..d {
                        trial[i] = x[i] + t * dir[i];
                    }
                    let ft = p.value(&trial);
                    // Near the minimum, value decreases fall below rounding; accept a
                    // step that reduces the gradient norm instead.
                    let accept = ft <= fx + 1e-4 * t * slope || {
                        p.grad_into(&trial, &mut gt);
                        gt.iter().map(|v| v * v).sum::<f64>().sqrt() < (1.0 - 1e-4 * t) * gn
                    };
                    if accept || t < 1e-10 {
                        fx = ft;
                        break;
                    }
                    t *= 0.5;
                }
                x.copy_from_slice(&trial);
            }
            None => {
                for i in 0..d {
                    x[i] -= step * g[i];
                }
                fx = finite(p.value(&x), "potential")?;
            }
        }
    }
    p.grad_into(&x, &mut g);
    Err(Error::Convergence {
        method: "find_mode",
        iterations: max_iter,
        residual: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

fn newton_direction(p: &dyn Potential, x: &[f64], g: &[f64]) -> Option<Vec<f64>> {
    let h = p.hessian(x);
    let chol = h.cholesky()?;
    let dir = chol.solve(&-DVector::from_column_slice(g));
    dir.iter().all(|v| v.is_finite()).then(|| dir.as_slice().to_vec())
}
