//! Problem definitions: the forward SDE, the backward driver and terminal
//! condition, plus the two benchmark problems with known solutions.

use crate::error::{Error, Result};

/// Truncation bounds `C_y`, `C_z` for the regression outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub y: f64,
    pub z: f64,
}

impl Bounds {
    pub const NONE: Bounds = Bounds {
        y: f64::INFINITY,
        z: f64::INFINITY,
    };
}

/// A decoupled FBSDE
///
/// ```text
/// dX = b(t, X) dt + σ(t, X) dW,            X_0 = x0
/// dY = −f(t, X, Y, Z) dt + Z dW,            Y_T = Φ(X_T)
/// ```
///
/// with `Z = ∇u·σ` a row vector of length `d`. Matrices are row-major.
pub trait FbsdeProblem: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn x0(&self) -> Vec<f64>;
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// `σ(t, x)` as a `d×d` row-major matrix, `out[k*d + l] = σ_{kl}`.
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn driver(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64;
    fn terminal(&self, x: &[f64]) -> f64;

    /// Central differences with step `1e-6·(1 + |x_k|)`.
    fn terminal_gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut probe = x.to_vec();
        for k in 0..x.len() {
            let step = 1e-6 * (1.0 + x[k].abs());
            probe[k] = x[k] + step;
            let up = self.terminal(&probe);
            probe[k] = x[k] - step;
            let down = self.terminal(&probe);
            probe[k] = x[k];
            out[k] = (up - down) / (2.0 * step);
        }
    }

    fn bounds(&self) -> Bounds {
        Bounds::NONE
    }

    /// `(u(t, x), ∇u(t, x)·σ(t, x))` when the solution is known.
    fn closed_form(&self, _t: f64, _x: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }

    /// True when `σ ≡ 0` and the driver ignores `z`, so the backward
    /// equation is an ODE along the deterministic forward flow.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// `(Φ(x), σ(T, x)ᵀ∇Φ(x))` at one terminal state.
pub fn terminal_values(problem: &dyn FbsdeProblem, x: &[f64]) -> (f64, Vec<f64>) {
    let d = problem.dim();
    let mut grad = vec![0.0; d];
    problem.terminal_gradient(x, &mut grad);
    let mut sigma = vec![0.0; d * d];
    problem.diffusion(problem.horizon(), x, &mut sigma);
    let z = (0..d)
        .map(|l| (0..d).map(|k| grad[k] * sigma[k * d + l]).sum())
        .collect();
    (problem.terminal(x), z)
}

pub fn closed_form_reference(problem: &dyn FbsdeProblem, t: f64, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    problem.closed_form(t, x).ok_or(Error::NoClosedForm)
}

/// Which time the exponential damping in the first benchmark's driver uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriverTime {
    /// The driver's own time argument; the driver vanishes on the solution.
    Running,
    /// The literal driver with the initial time fixed.
    Initial,
}

/// Benchmark with `X = W` in `d` dimensions and solution
/// `u(t, x) = 1 + η + sin(τ·Σx) e^{−τ²d(T−t)/2}`.
#[derive(Clone, Debug)]
pub struct Example1 {
    pub eta: f64,
    pub tau: f64,
    pub d: usize,
    pub horizon: f64,
    pub driver_time: DriverTime,
}

impl Example1 {
    pub fn new(eta: f64, tau: f64, d: usize) -> Result<Self> {
        if !(eta > 0.0 && tau > 0.0 && d >= 1) {
            return Err(Error::Invalid(format!(
                "example1 needs eta > 0, tau > 0, d >= 1 (got {eta}, {tau}, {d})"
            )));
        }
        Ok(Self {
            eta,
            tau,
            d,
            horizon: 1.0,
            driver_time: DriverTime::Running,
        })
    }

    /// `τ = 1/√d`.
    pub fn with_auto_tau(eta: f64, d: usize) -> Result<Self> {
        Self::new(eta, 1.0 / (d as f64).sqrt(), d)
    }

    fn damping(&self, t: f64) -> f64 {
        (-self.tau * self.tau * self.d as f64 * (self.horizon - t) / 2.0).exp()
    }

    fn phase(&self, x: &[f64]) -> f64 {
        self.tau * x.iter().sum::<f64>()
    }
}

impl FbsdeProblem for Example1 {
    fn name(&self) -> String {
        "example1".into()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn x0(&self) -> Vec<f64> {
        vec![0.0; self.d]
    }

    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for k in 0..self.d {
            out[k * self.d + k] = 1.0;
        }
    }

    fn driver(&self, t: f64, x: &[f64], y: f64, _z: &[f64]) -> f64 {
        let s = match self.driver_time {
            DriverTime::Running => t,
            DriverTime::Initial => 0.0,
        };
        let gap = y - self.eta - 1.0 - self.phase(x).sin() * self.damping(s);
        (gap * gap).min(1.0)
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        1.0 + self.eta + self.phase(x).sin()
    }

    fn terminal_gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(self.tau * self.phase(x).cos());
    }

    fn bounds(&self) -> Bounds {
        Bounds {
            y: 2.0 + self.eta,
            z: self.tau * (self.d as f64).sqrt(),
        }
    }

    fn closed_form(&self, t: f64, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let damp = self.damping(t);
        let p = self.phase(x);
        Some((
            1.0 + self.eta + p.sin() * damp,
            vec![self.tau * p.cos() * damp; self.d],
        ))
    }
}

/// Scalar benchmark with solution `u(t, x) = e^{t+x}/(1 + e^{t+x})`.
///
/// The driver is `−2y/(1 + 2e^{t+x}) − ½(yz/(1 + e^{t+x}) − y²z)`, the form
/// under which `u` solves the backward equation. `literal_driver` switches
/// the first denominator to `1 + e^{t+x}`.
#[derive(Clone, Debug)]
pub struct Example2 {
    pub x0: f64,
    pub horizon: f64,
    pub literal_driver: bool,
}

impl Default for Example2 {
    fn default() -> Self {
        Self {
            x0: 1.0,
            horizon: 1.0,
            literal_driver: false,
        }
    }
}

fn logistic(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

impl FbsdeProblem for Example2 {
    fn name(&self) -> String {
        "example2".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn x0(&self) -> Vec<f64> {
        vec![self.x0]
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0 / (1.0 + 2.0 * (t + x[0]).exp());
    }

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = logistic(t + x[0]);
    }

    fn driver(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        let e = (t + x[0]).exp();
        let q = 1.0 / (1.0 + e);
        let decay = if self.literal_driver { q } else { 1.0 / (1.0 + 2.0 * e) };
        -2.0 * y * decay - 0.5 * (y * z[0] * q - y * y * z[0])
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        logistic(self.horizon + x[0])
    }

    fn terminal_gradient(&self, x: &[f64], out: &mut [f64]) {
        let u = logistic(self.horizon + x[0]);
        out[0] = u * (1.0 - u);
    }

    fn bounds(&self) -> Bounds {
        Bounds { y: 1.0, z: 1.0 }
    }

    fn closed_form(&self, t: f64, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let u = logistic(t + x[0]);
        // ∂u/∂x · σ = u(1−u) · u
        Some((u, vec![u * u * (1.0 - u)]))
    }
}

/// Backward ODE `dY/dt = −rate·Y`, `Y_T = 1`, with no diffusion:
/// `Y_t = e^{rate(T−t)}`.
#[derive(Clone, Debug)]
pub struct ExponentialOde {
    pub rate: f64,
    pub horizon: f64,
}

impl Default for ExponentialOde {
    fn default() -> Self {
        Self { rate: 1.0, horizon: 1.0 }
    }
}

impl FbsdeProblem for ExponentialOde {
    fn name(&self) -> String {
        "exponential".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn x0(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn driver(&self, _t: f64, _x: &[f64], y: f64, _z: &[f64]) -> f64 {
        self.rate * y
    }

    fn terminal(&self, _x: &[f64]) -> f64 {
        1.0
    }

    fn terminal_gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn closed_form(&self, t: f64, _x: &[f64]) -> Option<(f64, Vec<f64>)> {
        Some(((self.rate * (self.horizon - t)).exp(), vec![0.0]))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// `f ≡ 0`, `Φ ≡ value`, `σ = sigma·I`: the solution is the constant.
#[derive(Clone, Debug)]
pub struct ZeroDriver {
    pub value: f64,
    pub d: usize,
    pub horizon: f64,
    pub sigma: f64,
}

impl ZeroDriver {
    pub fn new(value: f64, d: usize, sigma: f64) -> Self {
        Self {
            value,
            d,
            horizon: 1.0,
            sigma,
        }
    }
}

impl FbsdeProblem for ZeroDriver {
    fn name(&self) -> String {
        "constant".into()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn x0(&self) -> Vec<f64> {
        vec![0.0; self.d]
    }

    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for k in 0..self.d {
            out[k * self.d + k] = self.sigma;
        }
    }

    fn driver(&self, _t: f64, _x: &[f64], _y: f64, _z: &[f64]) -> f64 {
        0.0
    }

    fn terminal(&self, _x: &[f64]) -> f64 {
        self.value
    }

    fn closed_form(&self, _t: f64, _x: &[f64]) -> Option<(f64, Vec<f64>)> {
        Some((self.value, vec![0.0; self.d]))
    }

    fn is_deterministic(&self) -> bool {
        self.sigma == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn table_problem() -> Example1 {
        Example1::new(0.6, 1.0 / 2f64.sqrt(), 2).unwrap()
    }

    #[test]
    fn example1_reference_values() {
        let p = table_problem();
        let (y, z) = closed_form_reference(&p, 0.0, &[0.0, 0.0]).unwrap();
        assert!((y - 1.6).abs() < 1e-15);
        let want = (0.5f64).sqrt() * (-0.5f64).exp();
        assert!((z[0] - want).abs() < 1e-15 && (z[1] - want).abs() < 1e-15);
        assert!((want - 0.42888).abs() < 1e-5);
        assert_eq!(p.bounds(), Bounds { y: 2.6, z: 1.0 });
    }

    #[test]
    fn example2_reference_values() {
        let p = Example2::default();
        let e = std::f64::consts::E;
        let (y, z) = closed_form_reference(&p, 0.0, &[1.0]).unwrap();
        assert!((y - e / (1.0 + e)).abs() < 1e-15);
        assert!((z[0] - e * e / (1.0 + e).powi(3)).abs() < 1e-15);
        assert!((y - 0.731059).abs() < 1e-6 && (z[0] - 0.143734).abs() < 1e-6);
        let (yn, _) = terminal_values(&p, &[0.0]);
        assert!((yn - e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn terminal_consistency_at_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p1 = table_problem();
        let p2 = Example2::default();
        for _ in 0..100 {
            let x = [uniform(&mut rng, -3.0, 3.0), uniform(&mut rng, -3.0, 3.0)];
            assert!((p1.closed_form(1.0, &x).unwrap().0 - p1.terminal(&x)).abs() < 1e-12);
            assert!((p2.closed_form(1.0, &x[..1]).unwrap().0 - p2.terminal(&x[..1])).abs() < 1e-12);
        }
    }

    #[test]
    fn example1_driver_vanishes_on_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = table_problem();
        for _ in 0..100 {
            let t = uniform(&mut rng, 0.0, 1.0);
            let x = [uniform(&mut rng, -3.0, 3.0), uniform(&mut rng, -3.0, 3.0)];
            let (u, z) = p.closed_form(t, &x).unwrap();
            assert!(p.driver(t, &x, u, &z).abs() < 1e-12);
        }
        let literal = Example1 {
            driver_time: DriverTime::Initial,
            ..table_problem()
        };
        let x = [0.3, 0.4];
        let (u, z) = literal.closed_form(0.5, &x).unwrap();
        assert!(literal.driver(0.5, &x, u, &z) > 0.0);
    }

    #[test]
    fn terminal_gradient_matches_analytic_forms() {
        let p = table_problem();
        let x = [0.2, -0.7];
        let (_, z) = terminal_values(&p, &x);
        let want = p.tau * (p.tau * (x[0] + x[1])).cos();
        assert!((z[0] - want).abs() < 1e-15 && (z[1] - want).abs() < 1e-15);

        // The default finite-difference gradient agrees with the analytic one.
        struct Fd(Example1);
        impl FbsdeProblem for Fd {
            fn name(&self) -> String {
                "fd".into()
            }
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn horizon(&self) -> f64 {
                1.0
            }
            fn x0(&self) -> Vec<f64> {
                self.0.x0()
            }
            fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
                self.0.drift(t, x, out)
            }
            fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
                self.0.diffusion(t, x, out)
            }
            fn driver(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
                self.0.driver(t, x, y, z)
            }
            fn terminal(&self, x: &[f64]) -> f64 {
                self.0.terminal(x)
            }
        }
        let (_, fd) = terminal_values(&Fd(table_problem()), &x);
        assert!((fd[0] - want).abs() < 1e-8);

        let (y, z) = terminal_values(&ZeroDriver::new(3.0, 2, 1.0), &x);
        assert_eq!((y, z), (3.0, vec![0.0, 0.0]));
    }

    #[test]
    fn example2_solves_its_pde() {
        // u_t + b u_x + ½σ²u_xx + f(t, x, u, u_x σ) = 0
        let p = Example2::default();
        let u = |t: f64, x: f64| p.closed_form(t, &[x]).unwrap().0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = 1e-4;
        for _ in 0..50 {
            let t = uniform(&mut rng, 0.1, 0.9);
            let x = uniform(&mut rng, -2.0, 2.0);
            let ut = (u(t + e, x) - u(t - e, x)) / (2.0 * e);
            let ux = (u(t, x + e) - u(t, x - e)) / (2.0 * e);
            let uxx = (u(t, x + e) - 2.0 * u(t, x) + u(t, x - e)) / (e * e);
            let (mut b, mut s) = ([0.0], [0.0]);
            p.drift(t, &[x], &mut b);
            p.diffusion(t, &[x], &mut s);
            let (y, z) = p.closed_form(t, &[x]).unwrap();
            assert!((z[0] - ux * s[0]).abs() < 1e-6);
            let residual = ut + b[0] * ux + 0.5 * s[0] * s[0] * uxx + p.driver(t, &[x], y, &z);
            assert!(residual.abs() < 1e-4, "residual {residual}");
        }
        let literal = Example2 {
            literal_driver: true,
            ..Example2::default()
        };
        let (y, z) = literal.closed_form(0.5, &[0.0]).unwrap();
        assert!((literal.driver(0.5, &[0.0], y, &z) - p.driver(0.5, &[0.0], y, &z)).abs() > 1e-2);
    }

    #[test]
    fn exponential_ode_solution() {
        let p = ExponentialOde::default();
        let u = |t: f64| p.closed_form(t, &[0.0]).unwrap().0;
        let e = 1e-5;
        let t = 0.3;
        // dY/dt = −f(t, Y)
        let dydt = (u(t + e) - u(t - e)) / (2.0 * e);
        assert!((dydt + p.driver(t, &[0.0], u(t), &[0.0])).abs() < 1e-8);
        assert!(p.is_deterministic());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(Example1::new(0.0, 1.0, 2).is_err());
        assert!(Example1::new(0.6, -1.0, 2).is_err());
        assert!(Example1::new(0.6, 1.0, 0).is_err());
        assert!((Example1::with_auto_tau(0.6, 2).unwrap().tau - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
