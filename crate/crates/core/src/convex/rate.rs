//! The concave rate function `F(τ, ε) = τ·log2(1 + a·ε/τ)` and the physical
//! rate-constraint evaluator built on it.

use crate::problem::TdmaLink;
use crate::scalar::Scalar;

/// Value, gradient and Hessian factor of `F(τ, ε) = τ·log2(1 + a·ε/τ)`.
///
/// The Hessian is `−w·v·vᵀ` with `v = (u, −a)/(1 + u)`, `u = a·ε/τ`,
/// `w = 1/(τ·ln 2)`, so `F` is jointly concave on `τ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Perspective<S> {
    pub value: S,
    pub d_time: S,
    pub d_energy: S,
    pub curv_weight: S,
    pub curv_dir: (S, S),
}

pub(crate) fn perspective<S: Scalar>(a: S, tau: S, eps: S) -> Perspective<S> {
    let ln2 = S::LN_2();
    let u = a * eps / tau;
    let log = u.ln_1p();
    let d = S::one() + u;
    Perspective {
        value: tau * log / ln2,
        d_time: (log - u / d) / ln2,
        d_energy: a / d / ln2,
        curv_weight: S::one() / (tau * ln2),
        curv_dir: (u / d, -a / d),
    }
}

/// Slack of a rate constraint and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEval<S> {
    /// Deliverable bits minus required bits; non-negative when satisfied.
    pub slack: S,
    pub d_time: S,
    pub d_energy: S,
    pub d_level_sum: S,
}

/// Evaluates `t·B·log2(1 + e·h/(t·n0)) − bits_per_level·level_sum`.
///
/// At `t = 0` the capacity is 0. The reported partials there are the limits
/// along `t ↓ 0`: with `e > 0`, `∂/∂t = +∞` and `∂/∂e = 0`; with `e = 0`,
/// `∂/∂t = 0` and `∂/∂e = B·h/(n0·ln 2)`.
pub fn eval_rate_constraint<S: Scalar>(link: &TdmaLink<S>, bits_per_level: S, t: S, e: S, level_sum: S) -> RateEval<S> {
    let required = bits_per_level * level_sum;
    let snr_per_joule = link.gain / link.noise;
    if t <= S::zero() {
        let (d_time, d_energy) = if e > S::zero() {
            (S::infinity(), S::zero())
        } else {
            (S::zero(), link.bandwidth * snr_per_joule / S::LN_2())
        };
        return RateEval { slack: -required, d_time, d_energy, d_level_sum: -bits_per_level };
    }
    let p = perspective(snr_per_joule, t, e);
    RateEval {
        slack: link.bandwidth * p.value - required,
        d_time: link.bandwidth * p.d_time,
        d_energy: link.bandwidth * p.d_energy,
        d_level_sum: -bits_per_level,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::rate_capacity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn link() -> TdmaLink<f64> {
        TdmaLink { bandwidth: 2e7, noise: 8.28e-14, gain: 1e-3 }
    }

    #[test]
    fn zero_point() {
        let r = eval_rate_constraint(&link(), 4.2e4, 0.0, 0.0, 0.0);
        assert_eq!(r.slack, 0.0);
        let r = eval_rate_constraint(&link(), 4.2e4, 0.0, 0.01, 2.0);
        assert_eq!(r.slack, -8.4e4);
        assert!(r.d_time.is_infinite());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = link();
        for _ in 0..200 {
            let t = rng.gen_range(1e-3..0.05);
            let e = rng.gen_range(1e-6..0.05);
            let s = rng.gen_range(1.0..50.0);
            let r = eval_rate_constraint(&l, 4.2e4, t, e, s);
            let f = |t: f64, e: f64| eval_rate_constraint(&l, 4.2e4, t, e, s).slack;
            let (ht, he) = (1e-6 * t, 1e-6 * e);
            let ft = (f(t + ht, e) - f(t - ht, e)) / (2.0 * ht);
            let fe = (f(t, e + he) - f(t, e - he)) / (2.0 * he);
            assert!((ft - r.d_time).abs() <= 1e-6 * r.d_time.abs().max(1.0), "{ft} vs {}", r.d_time);
            assert!((fe - r.d_energy).abs() <= 1e-6 * r.d_energy.abs(), "{fe} vs {}", r.d_energy);
        }
    }

    #[test]
    fn slack_sign_flips_at_inverse() {
        let l = link();
        let (t, bits_per_level, sum) = (0.02, 42_040.0, 200.0);
        let e_star = l.energy_for(t, bits_per_level * sum);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if eval_rate_constraint(&l, bits_per_level, t, mid, sum).slack < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((hi - e_star).abs() <= 1e-9 * e_star, "{hi} vs {e_star}");
    }

    #[test]
    fn matches_capacity_formula() {
        let l = link();
        let r = eval_rate_constraint(&l, 1.0, 0.01, 0.001, 0.0);
        assert_eq!(r.slack, rate_capacity(0.01, 0.001, l.gain, l.bandwidth, l.noise));
    }

    #[test]
    fn perspective_hessian_is_curvature_of_value() {
        let a = 3.0;
        let (tau, eps) = (0.3, 0.2);
        let p = perspective(a, tau, eps);
        let h = 1e-4;
        let f = |t: f64, e: f64| perspective(a, t, e).value;
        let ftt = (f(tau + h, eps) - 2.0 * p.value + f(tau - h, eps)) / (h * h);
        let fee = (f(tau, eps + h) - 2.0 * p.value + f(tau, eps - h)) / (h * h);
        let fte = (f(tau + h, eps + h) - f(tau + h, eps - h) - f(tau - h, eps + h) + f(tau - h, eps - h)) / (4.0 * h * h);
        let (vt, ve) = p.curv_dir;
        assert!((ftt + p.curv_weight * vt * vt).abs() < 1e-5);
        assert!((fee + p.curv_weight * ve * ve).abs() < 1e-5);
        assert!((fte + p.curv_weight * vt * ve).abs() < 1e-5);
    }
}
