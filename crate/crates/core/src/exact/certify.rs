//! Sampled constants for the existence/uniqueness theorem of the two-point
//! problem `q̈ = ξ(q, q̇)`, `q(0) = 0`, `q(h0) = q_target`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::LagrangianSystem;
use crate::error::{Error, Result};
use crate::geometry::{AlgebroidVector, Instance};

/// Slack on the inequalities, relative to their right-hand sides.
const SLACK: f64 = 1e-12;

/// Partner points closer than this, relative to the ball radius, are skipped:
/// their difference quotients are dominated by rounding.
const MIN_SEPARATION: f64 = 1e-9;

/// Inflation applied to the sampled Lipschitz constants.
pub const LIPSCHITZ_INFLATION: f64 = 1.2;

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyConfig {
    /// Position bound `R0` (ball around `center`).
    pub r0: f64,
    /// Velocity bound `R1`.
    pub r1: f64,
    /// Radius of the target set that must be covered.
    pub target_radius: f64,
    pub samples: usize,
    /// Upper end of the `h0` grid.
    pub h_max: f64,
    pub seed: u64,
    /// Chart origin; defaults to zero.
    pub center: Option<DVector<f64>>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { r0: 1.0, r1: 2.0, target_radius: 0.5, samples: 2000, h_max: 10.0, seed: 0, center: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexityCertificate {
    /// Largest grid step satisfying all three inequalities.
    pub h0: f64,
    /// `min(R0 − M h0²/8, h0 R1 − M h0²/2)`.
    pub radius: f64,
    pub m: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub r0: f64,
    pub r1: f64,
    pub target_radius: f64,
    /// `θ1 h0²/8 + θ2 h0/2`, must be `< 1`.
    pub lipschitz_value: f64,
    /// `M h0²/8 + R`, must be `≤ R0`.
    pub position_value: f64,
    /// `M h0/2 + R/h0`, must be `≤ R1`.
    pub velocity_value: f64,
    pub conditions: [bool; 3],
    /// The inequalities still hold at `h_max`: no finite upper limit found.
    pub unbounded: bool,
    /// Constants were taken in the exponential chart of a group, where the
    /// theorem is not stated.
    pub heuristic: bool,
}

fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64, on_sphere: bool) -> DVector<f64> {
    if dim == 0 {
        return DVector::zeros(0);
    }
    let mut v = DVector::from_fn(dim, |_, _| {
        // Box–Muller
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    });
    let n = v.norm();
    if n == 0.0 {
        v[0] = 1.0;
    } else {
        v /= n;
    }
    let r = if on_sphere { radius } else { radius * rng.random::<f64>().powf(1.0 / dim as f64) };
    v * r
}

struct Inequalities {
    lipschitz: f64,
    position: f64,
    velocity: f64,
    ok: [bool; 3],
}

fn evaluate(h0: f64, m: f64, t1: f64, t2: f64, r0: f64, r1: f64, r: f64) -> Inequalities {
    let lipschitz = t1 * h0 * h0 / 8.0 + t2 * h0 / 2.0;
    let position = m * h0 * h0 / 8.0 + r;
    let velocity = m * h0 / 2.0 + r / h0;
    Inequalities {
        lipschitz,
        position,
        velocity,
        ok: [lipschitz < 1.0, position <= r0 * (1.0 + SLACK), velocity <= r1 * (1.0 + SLACK)],
    }
}

/// Estimates `M = sup‖ξ‖`, and the Lipschitz constants `θ1` (positions) and
/// `θ2` (velocities) by sampling the Euler–Lagrange acceleration over
/// `‖q‖ ≤ R0`, `‖v‖ ≤ R1`, then scans `h0 = k/1000` for the largest step
/// meeting all three inequalities. Half of the samples lie on the boundary
/// spheres, where the bounds of smooth fields are typically attained.
pub fn certify_h0(sys: &LagrangianSystem, cfg: &CertifyConfig) -> Result<ConvexityCertificate> {
    let valid = |x: f64| x > 0.0 && x.is_finite();
    if !valid(cfg.r0) || !valid(cfg.r1) || !valid(cfg.target_radius) || !valid(cfg.h_max) || cfg.samples == 0 {
        return Err(Error::InvalidInput("certificate needs positive radii, h_max and samples".into()));
    }
    let inst = sys.instance();
    let nq = inst.base_dim();
    let nv = inst.fiber_dim();
    let center = cfg.center.clone().unwrap_or_else(|| DVector::zeros(nq));
    if center.len() != nq {
        return Err(Error::InvalidInput(format!("center has dimension {}, expected {nq}", center.len())));
    }
    let xi = |q: &DVector<f64>, v: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(sys.el_vector_field(&AlgebroidVector::new(&center + q, v.clone()))?.1)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut m: f64 = 0.0;
    let mut t1: f64 = 0.0;
    let mut t2: f64 = 0.0;
    for i in 0..cfg.samples {
        let boundary = i % 2 == 0;
        let q = sample_ball(&mut rng, nq, cfg.r0, boundary);
        let v = sample_ball(&mut rng, nv, cfg.r1, boundary);
        let f = xi(&q, &v)?;
        m = m.max(f.norm());
        // partner points: one far, one close, differing in one argument
        for scale in [1.0, 1e-3] {
            if nq > 0 {
                let mut q2 = &q + sample_ball(&mut rng, nq, cfg.r0 * scale, false);
                if q2.norm() > cfg.r0 {
                    q2 *= cfg.r0 / q2.norm();
                }
                let dq = (&q2 - &q).norm();
                if dq > MIN_SEPARATION * cfg.r0 {
                    t1 = t1.max((xi(&q2, &v)? - &f).norm() / dq);
                }
            }
            let mut v2 = &v + sample_ball(&mut rng, nv, cfg.r1 * scale, false);
            if v2.norm() > cfg.r1 {
                v2 *= cfg.r1 / v2.norm();
            }
            let dv = (&v2 - &v).norm();
            if dv > MIN_SEPARATION * cfg.r1 {
                t2 = t2.max((xi(&q, &v2)? - &f).norm() / dv);
            }
        }
    }
    // sampled difference quotients of linear fields are exact up to rounding
    let round = |x: f64| if x < 1e-13 { 0.0 } else { x };
    let theta1 = round(t1) * LIPSCHITZ_INFLATION;
    let theta2 = round(t2) * LIPSCHITZ_INFLATION;
    let m = round(m);

    let r = cfg.target_radius;
    let kmax = (cfg.h_max * 1000.0).round() as usize;
    let mut best = None;
    for k in (2..=kmax).rev() {
        let h0 = k as f64 / 1000.0;
        if evaluate(h0, m, theta1, theta2, cfg.r0, cfg.r1, r).ok.iter().all(|&b| b) {
            best = Some((k, h0));
            break;
        }
    }
    let (k, h0) = best.ok_or(Error::EmptyCertificate)?;
    let ineq = evaluate(h0, m, theta1, theta2, cfg.r0, cfg.r1, r);
    let radius = (cfg.r0 - m * h0 * h0 / 8.0).min(h0 * cfg.r1 - m * h0 * h0 / 2.0);
    Ok(ConvexityCertificate {
        h0,
        radius,
        m,
        theta1,
        theta2,
        r0: cfg.r0,
        r1: cfg.r1,
        target_radius: r,
        lipschitz_value: ineq.lipschitz,
        position_value: ineq.position,
        velocity_value: ineq.velocity,
        conditions: ineq.ok,
        unbounded: k == kmax,
        heuristic: !matches!(inst, Instance::PairEuclidean(_)),
    })
}
