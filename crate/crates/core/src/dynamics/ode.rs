//! Dormand–Prince 5(4) with the 4th-order continuous extension.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-11, rel_tol: 1e-11, max_steps: 200_000 }
    }
}

impl FlowConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { abs_tol: tol, rel_tol: tol, ..Self::default() }
    }
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

#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    h: f64,
    rcont: [DVector<f64>; 5],
}

impl Segment {
    fn eval(&self, t: f64) -> DVector<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        r1 + (r2 + (r3 + (r4 + r5 * s1) * s) * s1) * s
    }
}

/// Dense solution of one integration; immutable once built.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    t0: f64,
    t1: f64,
    y0: DVector<f64>,
    y1: DVector<f64>,
    segments: Vec<Segment>,
}

impl DenseSolution {
    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.t1
    }

    pub fn final_state(&self) -> &DVector<f64> {
        &self.y1
    }

    pub fn steps(&self) -> usize {
        self.segments.len()
    }

    /// State at `t` from the interpolant of the step that contains it.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        if self.segments.is_empty() {
            return self.y0.clone();
        }
        let forward = self.t1 >= self.t0;
        if t == self.t1 {
            return self.y1.clone();
        }
        let idx = self.segments.partition_point(|s| {
            let end = s.t0 + s.h;
            if forward {
                end < t
            } else {
                end > t
            }
        });
        let idx = idx.min(self.segments.len() - 1);
        self.segments[idx].eval(t)
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`. `project` is applied to the
/// state after each accepted step.
pub fn integrate<F, P>(
    f: F,
    project: P,
    t0: f64,
    y0: &DVector<f64>,
    t1: f64,
    cfg: &FlowConfig,
) -> Result<DenseSolution>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
    P: Fn(&mut DVector<f64>),
{
    let mut sol = DenseSolution { t0, t1, y0: y0.clone(), y1: y0.clone(), segments: Vec::new() };
    if t1 == t0 {
        return Ok(sol);
    }
    if !t1.is_finite() || !t0.is_finite() {
        return Err(Error::InvalidInput("non-finite integration interval".into()));
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = f(t, &y)?;
    let scale = |a: &DVector<f64>, b: &DVector<f64>, i: usize| cfg.abs_tol + cfg.rel_tol * a[i].abs().max(b[i].abs());

    // Hairer's initial step heuristic
    let mut h = {
        let n = y.len().max(1) as f64;
        let d0 = (y.iter().enumerate().map(|(i, v)| (v / scale(&y, &y, i)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (k1.iter().enumerate().map(|(i, v)| (v / scale(&y, &y, i)).powi(2)).sum::<f64>() / n).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y_probe = &y + &k1 * (dir * h0);
        let k_probe = f(t + dir * h0, &y_probe)?;
        let d2 = ((&k_probe - &k1).iter().enumerate().map(|(i, v)| (v / scale(&y, &y, i)).powi(2)).sum::<f64>() / n)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(span)
    };

    let mut steps = 0usize;
    let mut rejected_last = false;
    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            break;
        }
        if steps >= cfg.max_steps {
            return Err(Error::StepFailure { t, reason: format!("exceeded {} steps", cfg.max_steps) });
        }
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < 1e-14 * span.max(t.abs()) {
            return Err(Error::StepFailure { t, reason: format!("step size underflow ({h:.3e})") });
        }
        let hs = dir * h;
        let k2 = f(t + C2 * hs, &(&y + &k1 * (hs * A21)))?;
        let k3 = f(t + C3 * hs, &(&y + (&k1 * A31 + &k2 * A32) * hs))?;
        let k4 = f(t + C4 * hs, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hs))?;
        let k5 = f(t + C5 * hs, &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hs))?;
        let k6 = f(t + hs, &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hs))?;
        let y_new = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * hs;
        let t_new = if last { t1 } else { t + hs };
        let k7 = f(t_new, &y_new)?;
        steps += 1;

        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * hs;
        let n = y.len().max(1) as f64;
        let err = (err_vec
            .iter()
            .enumerate()
            .map(|(i, e)| (e / scale(&y, &y_new, i)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        if err <= 1.0 {
            let r2 = &y_new - &y;
            let r3 = &k1 * hs - &r2;
            let r4 = &r2 - &k7 * hs - &r3;
            let r5 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * hs;
            sol.segments.push(Segment { t0: t, h: hs, rcont: [y.clone(), r2, r3, r4, r5] });
            let mut y_acc = y_new;
            project(&mut y_acc);
            t = t_new;
            y = y_acc;
            k1 = if last { k7 } else { f(t, &y)? };
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h *= fac.clamp(0.2, 10.0);
            rejected_last = false;
            if last {
                break;
            }
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            rejected_last = true;
        }
    }
    sol.y1 = y;
    Ok(sol)
}
