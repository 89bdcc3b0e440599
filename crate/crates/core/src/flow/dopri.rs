//! Dormand–Prince 5(4) with FSAL, Hairer's PI step-size controller and the
//! fourth-order continuous extension.

use alloc::vec;
use alloc::vec::Vec;

// Unused when a dependency links std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Result;


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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size controller parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub safety: f64,
    /// Bounds on `h_new / h`.
    pub min_factor: f64,
    pub max_factor: f64,
    /// PI stabilisation exponent.
    pub beta: f64,
}

impl StepControl {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        StepControl {
            abs_tol,
            rel_tol,
            safety: 0.9,
            min_factor: 0.2,
            max_factor: 10.0,
            beta: 0.04,
        }
    }
}

/// One accepted step `[t0, t0 + h]` with its dense-output coefficients.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    r1: Vec<f64>,
    r2: Vec<f64>,
    r3: Vec<f64>,
    r4: Vec<f64>,
    r5: Vec<f64>,
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Component `i` at fraction `s ∈ [0, 1]` of the step.
    pub fn component(&self, i: usize, s: f64) -> f64 {
        let s1 = 1.0 - s;
        self.r1[i] + s * (self.r2[i] + s1 * (self.r3[i] + s * (self.r4[i] + s1 * self.r5[i])))
    }

    /// Full state at fraction `s` of the step.
    pub fn state(&self, s: f64) -> Vec<f64> {
        (0..self.r1.len()).map(|i| self.component(i, s)).collect()
    }
}

/// Adaptive integrator for an autonomous system `y' = f(y)`.
#[derive(Clone, Debug)]
pub struct DormandPrince {
    control: StepControl,
    t: f64,
    y: Vec<f64>,
    /// `f(y)`; valid whenever `fsal_valid`.
    k1: Vec<f64>,
    fsal_valid: bool,
    h: f64,
    facold: f64,
    last_rejected: bool,
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

impl DormandPrince {
    pub fn new(control: StepControl, t: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        DormandPrince {
            control,
            t,
            y,
            k1: vec![0.0; n],
            fsal_valid: false,
            h: 0.0,
            facold: 1e-4,
            last_rejected: false,
            accepted: 0,
            rejected: 0,
            evals: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `f(y)` at the current state, evaluating it if needed.
    pub fn derivative<F>(&mut self, f: &mut F) -> Result<&[f64]>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        if !self.fsal_valid {
            f(&self.y, &mut self.k1)?;
            self.evals += 1;
            self.fsal_valid = true;
        }
        Ok(&self.k1)
    }

    /// Replaces the state (after an event). The dimension may change; the
    /// current step size is kept as a first guess.
    pub fn reset(&mut self, t: f64, y: Vec<f64>) {
        if y.len() != self.y.len() {
            self.k1 = vec![0.0; y.len()];
        }
        self.t = t;
        self.y = y;
        self.fsal_valid = false;
        self.facold = 1e-4;
        self.last_rejected = false;
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    fn weight(&self, a: f64, b: f64) -> f64 {
        self.control.abs_tol + self.control.rel_tol * a.abs().max(b.abs())
    }

    fn initial_step<F>(&mut self, f: &mut F, h_max: f64) -> Result<f64>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        self.derivative(f)?;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for (&y, &k) in self.y.iter().zip(&self.k1) {
            let sk = self.weight(y, 0.0);
            dnf += (k / sk).powi(2);
            dny += (y / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(h_max);
        let y1: Vec<f64> = self.y.iter().zip(&self.k1).map(|(y, k)| y + h * k).collect();
        let mut f1 = vec![0.0; y1.len()];
        f(&y1, &mut f1)?;
        self.evals += 1;
        let mut der2 = 0.0;
        for ((&y, &k0), &k1) in self.y.iter().zip(&self.k1).zip(&f1) {
            der2 += ((k1 - k0) / self.weight(y, 0.0)).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { libm::pow(0.01 / der12, 0.2) };
        Ok((100.0 * h).min(h1).min(h_max))
    }

    /// Advances by one accepted step, never past `t_end`. Returns `None` when
    /// the proposed step falls below `h_min`.
    pub fn step<F>(&mut self, f: &mut F, t_end: f64, h_min: f64) -> Result<Option<DenseStep>>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let n = self.y.len();
        let span = t_end - self.t;
        if self.h <= 0.0 {
            self.h = self.initial_step(f, span)?;
        }
        self.derivative(f)?;

        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut k5 = vec![0.0; n];
        let mut k6 = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut y1 = vec![0.0; n];
        let expo1 = 0.2 - self.control.beta * 0.75;
        let (facc1, facc2) = (1.0 / self.control.min_factor, 1.0 / self.control.max_factor);

        loop {
            let mut h = self.h.min(span);
            if h < h_min && h < span {
                return Ok(None);
            }
            // Avoid a sliver step just before t_end.
            if span - h < 1e-3 * h {
                h = span;
            }
            let y = &self.y;
            let k1 = &self.k1;

            for i in 0..n {
                tmp[i] = y[i] + h * A21 * k1[i];
            }
            f(&tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(&tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(&tmp, &mut k4)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(&tmp, &mut k5)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(&tmp, &mut k6)?;
            for i in 0..n {
                y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(&y1, &mut k7)?;
            self.evals += 6;

            let mut err = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                err += (e / self.weight(y[i], y1[i])).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                // Treat as a failed step and shrink hard.
                self.rejected += 1;
                self.h = h * self.control.min_factor;
                self.last_rejected = true;
                continue;
            }

            let fac11 = libm::pow(err, expo1);
            if err <= 1.0 {
                let fac = (fac11 / libm::pow(self.facold, self.control.beta) / self.control.safety).clamp(facc2, facc1);
                let mut h_new = h / fac;
                if self.last_rejected {
                    h_new = h_new.min(h);
                }
                self.facold = err.max(1e-4);
                self.last_rejected = false;
                self.accepted += 1;

                let mut r2 = vec![0.0; n];
                let mut r3 = vec![0.0; n];
                let mut r4 = vec![0.0; n];
                let mut r5 = vec![0.0; n];
                for i in 0..n {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    r2[i] = ydiff;
                    r3[i] = bspl;
                    r4[i] = ydiff - h * k7[i] - bspl;
                    r5[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                let dense = DenseStep {
                    t0: self.t,
                    h,
                    r1: self.y.clone(),
                    r2,
                    r3,
                    r4,
                    r5,
                };
                self.t = if h == span { t_end } else { self.t + h };
                core::mem::swap(&mut self.y, &mut y1);
                core::mem::swap(&mut self.k1, &mut k7);
                self.fsal_valid = true;
                self.h = h_new;
                return Ok(Some(dense));
            }
            self.rejected += 1;
            self.h = h / facc1.min(fac11 / self.control.safety);
            self.last_rejected = true;
        }
    }
}
