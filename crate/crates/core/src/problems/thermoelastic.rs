//! Finite-difference reference for the coupled heat-wave system
//!
//!   u_t  = D u_xx + alpha v
//!   v_tt = c^2 v_xx + beta u
//!
//! on [-1,1] x [0,1] with u(x,0) = sin(pi x), v(x,0) = cos(pi x/2),
//! v_t(x,0) = 0 and homogeneous Dirichlet boundaries. Heat is stepped
//! with Crank-Nicolson (Thomas solve), the wave with Verlet; the
//! coupling terms are taken explicitly. Both schemes are second order,
//! so halving the grid should shrink self-convergence error about 4x.

use crate::Real;
use super::ProblemError;

pub const D_COEF: Real = 0.01;
pub const ALPHA: Real = 0.5;
pub const C_WAVE: Real = 1.0;
pub const BETA: Real = 0.3;

/// Solution tables on the space-time grid: `u[n][i]` is the value at
/// time step n, node i.
pub struct ThermoRef {
    pub nx: usize,
    pub nt: usize,
    pub xs: Vec<Real>,
    pub ts: Vec<Real>,
    pub u: Vec<Vec<Real>>,
    pub v: Vec<Vec<Real>>,
}

/// Solve on `nx` space intervals over [-1,1] and `nt` time steps over
/// [0,1]. The explicit wave update requires c dt/dx <= 1.
pub fn solve_reference(nx: usize, nt: usize) -> Result<ThermoRef, ProblemError> {
    if nx < 16 || nt < 16 {
        return Err(ProblemError::InvalidGrid(
            "need at least 16 intervals in each direction".into(),
        ));
    }
    let dx = 2.0 / nx as Real;
    let dt = 1.0 / nt as Real;
    let cfl = C_WAVE * dt / dx;
    if cfl > 1.0 {
        return Err(ProblemError::CflViolation {
            cfl,
            suggested_nt: (C_WAVE * nx as Real / 2.0).ceil() as usize,
        });
    }

    let xs: Vec<Real> = (0..=nx).map(|i| -1.0 + i as Real * dx).collect();
    let ts: Vec<Real> = (0..=nt).map(|n| n as Real * dt).collect();
    let pi = std::f64::consts::PI;

    let mut u = vec![vec![0.0; nx + 1]; nt + 1];
    let mut v = vec![vec![0.0; nx + 1]; nt + 1];
    for i in 0..=nx {
        u[0][i] = (pi * xs[i]).sin();
        v[0][i] = (pi * xs[i] / 2.0).cos();
    }
    u[0][0] = 0.0;
    u[0][nx] = 0.0;
    v[0][0] = 0.0;
    v[0][nx] = 0.0;

    let lap = |row: &[Real], i: usize| (row[i - 1] - 2.0 * row[i] + row[i + 1]) / (dx * dx);

    // Crank-Nicolson system (I - r/2 Lap) u^{n+1} = rhs, interior only
    let r = D_COEF * dt / (dx * dx);
    let m = nx - 1;
    let diag = 1.0 + r;
    let off = -r / 2.0;

    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    for n in 0..nt {
        // Verlet wave step (first step uses v_t(x,0) = 0)
        for i in 1..nx {
            let acc = C_WAVE * C_WAVE * lap(&v[n], i) + BETA * u[n][i];
            v[n + 1][i] = if n == 0 {
                v[0][i] + 0.5 * dt * dt * acc
            } else {
                2.0 * v[n][i] - v[n - 1][i] + dt * dt * acc
            };
        }

        // heat step with the coupling source averaged across the step
        let mut rhs = vec![0.0; m];
        for i in 1..nx {
            rhs[i - 1] = u[n][i]
                + (r / 2.0) * (u[n][i - 1] - 2.0 * u[n][i] + u[n][i + 1])
                + dt * ALPHA * 0.5 * (v[n][i] + v[n + 1][i]);
        }
        // Thomas solve of the constant tridiagonal system
        cp[0] = off / diag;
        dp[0] = rhs[0] / diag;
        for i in 1..m {
            let w = diag - off * cp[i - 1];
            cp[i] = off / w;
            dp[i] = (rhs[i] - off * dp[i - 1]) / w;
        }
        u[n + 1][m] = dp[m - 1];
        for i in (0..m - 1).rev() {
            dp[i] -= cp[i] * dp[i + 1];
            u[n + 1][i + 1] = dp[i];
        }
    }

    Ok(ThermoRef {
        nx,
        nt,
        xs,
        ts,
        u,
        v,
    })
}

impl ThermoRef {
    /// Bilinear interpolation of (u, v) at (x, t).
    pub fn interpolate(&self, x: Real, t: Real) -> (Real, Real) {
        let dx = 2.0 / self.nx as Real;
        let dt = 1.0 / self.nt as Real;
        let fx = ((x + 1.0) / dx).clamp(0.0, self.nx as Real - 1e-12);
        let ft = (t / dt).clamp(0.0, self.nt as Real - 1e-12);
        let (i, n) = (fx.floor() as usize, ft.floor() as usize);
        let (ax, at) = (fx - i as Real, ft - n as Real);
        let lerp2 = |tbl: &Vec<Vec<Real>>| {
            let a = tbl[n][i] * (1.0 - ax) + tbl[n][i + 1] * ax;
            let b = tbl[n + 1][i] * (1.0 - ax) + tbl[n + 1][i + 1] * ax;
            a * (1.0 - at) + b * at
        };
        (lerp2(&self.u), lerp2(&self.v))
    }

    /// CSV dump with a header line recording the grid and scheme.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# scheme=crank_nicolson+verlet nx={} nt={} D={} alpha={} c={} beta={}",
            self.nx, self.nt, D_COEF, ALPHA, C_WAVE, BETA
        )?;
        writeln!(w, "t,x,u,v")?;
        for (n, t) in self.ts.iter().enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                writeln!(w, "{t:.17e},{x:.17e},{:.17e},{:.17e}", self.u[n][i], self.v[n][i])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_slices_exact() {
        let s = solve_reference(64, 64).unwrap();
        let pi = std::f64::consts::PI;
        for (i, &x) in s.xs.iter().enumerate() {
            if i == 0 || i == s.nx {
                continue;
            }
            assert_eq!(s.u[0][i], (pi * x).sin());
            assert_eq!(s.v[0][i], (pi * x / 2.0).cos());
        }
    }

    #[test]
    fn boundary_columns_zero() {
        let s = solve_reference(64, 64).unwrap();
        for n in 0..=s.nt {
            assert_eq!(s.u[n][0], 0.0);
            assert_eq!(s.u[n][s.nx], 0.0);
            assert_eq!(s.v[n][0], 0.0);
            assert_eq!(s.v[n][s.nx], 0.0);
        }
    }

    #[test]
    fn cfl_violation_reports_suggestion() {
        match solve_reference(200, 50) {
            Err(ProblemError::CflViolation { cfl, suggested_nt }) => {
                assert!(cfl > 1.0);
                assert!(suggested_nt >= 100);
            }
            other => panic!("expected CFL error, got {:?}", other.map(|_| ())),
        }
    }

    /// Richardson-style self-convergence: the gap to a double-resolution
    /// solution should shrink by about 4x when the grid is halved.
    #[test]
    fn second_order_self_convergence() {
        let coarse = solve_reference(50, 50).unwrap();
        let mid = solve_reference(100, 100).unwrap();
        let fine = solve_reference(200, 200).unwrap();

        let gap = |a: &ThermoRef, b: &ThermoRef| {
            // compare final-time rows on the coarse nodes
            let stride = b.nx / a.nx;
            let mut acc: Real = 0.0;
            for i in 0..=a.nx {
                let du = a.u[a.nt][i] - b.u[b.nt][i * stride];
                let dv = a.v[a.nt][i] - b.v[b.nt][i * stride];
                acc += du * du + dv * dv;
            }
            (acc / (a.nx + 1) as Real).sqrt()
        };
        let e1 = gap(&coarse, &mid);
        let e2 = gap(&mid, &fine);
        let ratio = e1 / e2;
        assert!(
            (2.5..6.0).contains(&ratio),
            "self-convergence ratio {ratio} (e1={e1}, e2={e2})"
        );
    }
}
