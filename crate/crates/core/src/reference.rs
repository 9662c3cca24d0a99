//! Grid solvers that provide validation solutions.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A solution sampled on a tensor grid in `(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// `u[n * x.len() + i]` is the value at `(x[i], t[n])`.
    pub u: Vec<f64>,
}

impl GridSolution {
    pub fn at(&self, i: usize, n: usize) -> f64 {
        self.u[n * self.x.len() + i]
    }

    /// Every grid point as `(x, t)` rows together with the values, keeping
    /// every `stride`-th point along each axis.
    pub fn sample(&self, stride: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
        let stride = stride.max(1);
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        for n in (0..self.t.len()).step_by(stride) {
            for i in (0..self.x.len()).step_by(stride) {
                pts.push([self.x[i], self.t[n]]);
                vals.push(self.at(i, n));
            }
        }
        (pts, vals)
    }
}

/// Solves `A·x = d` for tridiagonal `A` with sub-diagonal `a`, diagonal `b`
/// and super-diagonal `c`.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// `u_t = D·u_xx − k·u² + f(x)` on `(0,1)×(0,1]` with `u(x,0) = 0` and
/// `u(0,t) = u(1,t) = 0`.
///
/// Diffusion is Crank–Nicolson; the reaction and source are advanced with
/// second-order extrapolation, so each step is one tridiagonal solve.
/// `f` holds the source at the `nx` grid points `x_i = i/(nx−1)`.
pub fn solve_reaction_diffusion(
    f: &[f64],
    nt: usize,
    diffusion: f64,
    reaction: f64,
) -> Result<GridSolution> {
    let nx = f.len();
    if nx < 3 || nt == 0 {
        return Err(Error::Config(format!("grid too small: {nx}×{nt}")));
    }
    let dx = 1.0 / (nx - 1) as f64;
    let dt = 1.0 / nt as f64;
    let r = diffusion * dt / (2.0 * dx * dx);
    let inner = nx - 2;
    let (a, b, c) = (vec![-r; inner], vec![1.0 + 2.0 * r; inner], vec![-r; inner]);
    let mut u = vec![0.0; nx];
    let mut prev_reaction: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity((nt + 1) * nx);
    out.extend_from_slice(&u);
    for _ in 0..nt {
        let react: Vec<f64> = u.iter().map(|v| reaction * v * v).collect();
        let mut rhs = vec![0.0; inner];
        for i in 1..nx - 1 {
            let extrapolated = match &prev_reaction {
                Some(p) => 1.5 * react[i] - 0.5 * p[i],
                None => react[i],
            };
            rhs[i - 1] = u[i] + r * (u[i - 1] - 2.0 * u[i] + u[i + 1]) + dt * (f[i] - extrapolated);
        }
        thomas(&a, &b, &c, &mut rhs);
        u[1..nx - 1].copy_from_slice(&rhs);
        prev_reaction = Some(react);
        out.extend_from_slice(&u);
    }
    Ok(GridSolution {
        x: (0..nx).map(|i| i as f64 * dx).collect(),
        t: (0..=nt).map(|n| n as f64 * dt).collect(),
        u: out,
    })
}

/// `u_t + u·u_x = ν·u_xx` on the periodic interval `[0,1)` for `t ∈ [0,1]`.
///
/// Fourier pseudo-spectral in space with 2/3 dealiasing; the viscous term
/// is integrated exactly and the advection term with RK4. `u0` holds the
/// initial state at `x_i = i/nx`. Snapshots are stored at `t_n = n/nt`,
/// each reached with `substeps` RK4 steps.
pub fn solve_burgers(
    u0: &[f64],
    nt: usize,
    substeps: usize,
    viscosity: f64,
) -> Result<GridSolution> {
    let nx = u0.len();
    if nx < 4 || nx % 2 != 0 || nt == 0 || substeps == 0 {
        return Err(Error::Config(format!(
            "invalid spectral grid: {nx} points, {nt} snapshots, {substeps} substeps"
        )));
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nx);
    let inv = planner.plan_fft_inverse(nx);
    let wave: Vec<f64> = (0..nx)
        .map(|j| {
            let k = if j <= nx / 2 {
                j as f64
            } else {
                j as f64 - nx as f64
            };
            2.0 * PI * k
        })
        .collect();
    let cutoff = nx as f64 / 3.0;
    let keep: Vec<f64> = wave
        .iter()
        .map(|k| {
            if (k / (2.0 * PI)).abs() < cutoff {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let norm = 1.0 / nx as f64;

    // -(u²/2)_x in spectral space
    let advection = |uh: &[Complex64]| -> Vec<Complex64> {
        let mut phys: Vec<Complex64> = uh.iter().zip(&keep).map(|(v, m)| v * m).collect();
        inv.process(&mut phys);
        let mut sq: Vec<Complex64> = phys
            .iter()
            .map(|v| Complex64::new(0.5 * (v.re * norm).powi(2), 0.0))
            .collect();
        fwd.process(&mut sq);
        sq.iter()
            .zip(&wave)
            .zip(&keep)
            .map(|((v, k), m)| -Complex64::new(0.0, *k) * v * m)
            .collect()
    };

    let dt = 1.0 / (nt * substeps) as f64;
    let half: Vec<f64> = wave
        .iter()
        .map(|k| (-viscosity * k * k * dt / 2.0).exp())
        .collect();
    let mut uh: Vec<Complex64> = u0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut uh);

    let to_physical = |uh: &[Complex64]| -> Vec<f64> {
        let mut phys = uh.to_vec();
        inv.process(&mut phys);
        phys.iter().map(|v| v.re * norm).collect()
    };
    let mut out = Vec::with_capacity((nt + 1) * nx);
    out.extend_from_slice(u0);
    let axpy = |base: &[Complex64], k: &[Complex64], s: f64| -> Vec<Complex64> {
        base.iter().zip(k).map(|(b, v)| b + v * s).collect()
    };
    let damp =
        |v: &[Complex64]| -> Vec<Complex64> { v.iter().zip(&half).map(|(a, e)| a * e).collect() };
    for _ in 0..nt {
        for _ in 0..substeps {
            // integrating-factor RK4: E = exp(−νk²·dt/2)
            let k1 = advection(&uh);
            let k2 = advection(&axpy(&damp(&uh), &damp(&k1), dt / 2.0));
            let k3 = advection(&axpy(&damp(&uh), &k2, dt / 2.0));
            let k4 = advection(&axpy(&damp(&damp(&uh)), &damp(&k3), dt));
            let e2 = damp(&damp(&uh));
            let k1e = damp(&damp(&k1));
            let k23e = damp(&k2.iter().zip(&k3).map(|(a, b)| a + b).collect::<Vec<_>>());
            uh = e2
                .iter()
                .zip(&k1e)
                .zip(&k23e)
                .zip(&k4)
                .map(|(((u, a), b), c)| u + (a + b * 2.0 + c) * (dt / 6.0))
                .collect();
        }
        out.extend_from_slice(&to_physical(&uh));
    }
    Ok(GridSolution {
        x: (0..nx).map(|i| i as f64 / nx as f64).collect(),
        t: (0..=nt).map(|n| n as f64 / nt as f64).collect(),
        u: out,
    })
}
