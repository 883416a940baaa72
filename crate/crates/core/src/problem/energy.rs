//! Minimum-energy TDMA allocation for a fixed quality selection.
//!
//! Inverting the rate constraint gives the energy group `i` needs when
//! transmitting for `t` seconds: `e_i(t) = α_i·t·(2^{β_i/t} − 1)` with
//! `α_i = n0/h_i` and `β_i = bits_i/B`. Each `e_i` is convex and decreasing,
//! so the time budget is always exhausted and the optimum equalizes the
//! marginal energy savings `−e_i'(t_i) = λ`. With `u = β·ln2/t` the marginal
//! saving is `α·g(u)`, `g(u) = (u − 1)·eᵘ + 1`, which is increasing in `u`;
//! we bisect on `ln λ` and invert `g` per group with a safeguarded Newton solve.

use crate::error::{domain, Result};
use crate::scalar::Scalar;

use super::{Allocation, ProblemInstance, QualitySelection, SelectionMode};

/// Downlink from the server to the weakest user of a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdmaLink<S> {
    pub bandwidth: S,
    pub noise: S,
    pub gain: S,
}

impl<S: Scalar> TdmaLink<S> {
    /// Energy needed to push `bits` through the link in `t` seconds.
    pub fn energy_for(&self, t: S, bits: S) -> S {
        if bits <= S::zero() {
            return S::zero();
        }
        if t <= S::zero() {
            return S::infinity();
        }
        let (alpha, beta) = self.energy_terms(bits);
        alpha * t * (beta * S::LN_2() / t).exp_m1()
    }

    /// `(α, β)` of the inverted rate constraint.
    pub fn energy_terms(&self, bits: S) -> (S, S) {
        (self.noise / self.gain, bits / self.bandwidth)
    }
}

/// `ln g(u)` with `g(u) = (u − 1)eᵘ + 1`, accurate for small and large `u`.
fn ln_marginal<S: Scalar>(u: S) -> S {
    if u < S::lit(1e-2) {
        let series = S::lit(0.5) + u * (S::lit(1.0 / 3.0) + u * (S::lit(0.125) + u * (S::lit(1.0 / 30.0) + u * S::lit(1.0 / 144.0))));
        S::lit(2.0) * u.ln() + series.ln()
    } else if u > S::lit(30.0) {
        u + (u - S::one() + (-u).exp()).ln()
    } else {
        (u * u.exp() - u.exp_m1()).ln()
    }
}

/// Derivative of `ln g(u)`: `u·eᵘ / g(u)`.
fn ln_marginal_slope<S: Scalar>(u: S) -> S {
    (u.ln() + u - ln_marginal(u)).exp()
}

/// Solves `ln g(u) = y` for `u > 0`.
fn invert_marginal<S: Scalar>(y: S) -> S {
    let mut lo = S::zero();
    let mut hi = S::one();
    while ln_marginal(hi) < y {
        lo = hi;
        hi = hi + hi;
    }
    // initial guess from the asymptotes: u²/2 for small u, u + ln u for large u
    let mut u = if y < S::zero() {
        (S::lit(2.0) * y.exp()).sqrt()
    } else {
        y.max(S::one())
    };
    if !(u > lo && u < hi) {
        u = (lo + hi) / S::lit(2.0);
    }
    for _ in 0..200 {
        let f = ln_marginal(u) - y;
        if f > S::zero() {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - f / ln_marginal_slope(u);
        if !(next > lo && next < hi) {
            next = (lo + hi) / S::lit(2.0);
        }
        if (next - u).abs() <= S::epsilon() * S::lit(4.0) * u || hi - lo <= S::epsilon() * S::lit(4.0) * hi {
            return next;
        }
        u = next;
    }
    u
}

/// Splits `budget` seconds among groups with energy curves `α_i·t·(2^{β_i/t} − 1)`
/// (terms given as `(α_i, β_i)`) to minimize total energy. Returns `(times, energies)`.
pub fn min_energy_split<S: Scalar>(terms: &[(S, S)], budget: S) -> (Vec<S>, Vec<S>) {
    let active: Vec<usize> = (0..terms.len()).filter(|&i| terms[i].1 > S::zero()).collect();
    let mut times = vec![S::zero(); terms.len()];
    match active.len() {
        0 => {}
        1 => times[active[0]] = budget,
        n => {
            let ln2 = S::LN_2();
            // ln λ at which group i alone would use time `t`
            let level = |i: usize, t: S| terms[i].0.ln() + ln_marginal(terms[i].1 * ln2 / t);
            let time_at = |ln_lambda: S| -> S {
                active
                    .iter()
                    .map(|&i| terms[i].1 * ln2 / invert_marginal(ln_lambda - terms[i].0.ln()))
                    .sum()
            };
            let share = budget / S::of_usize(n);
            let mut lo = active.iter().map(|&i| level(i, budget)).fold(S::infinity(), S::min);
            let mut hi = active.iter().map(|&i| level(i, share)).fold(S::neg_infinity(), S::max);
            for _ in 0..400 {
                let mid = (lo + hi) / S::lit(2.0);
                if mid <= lo || mid >= hi {
                    break;
                }
                if time_at(mid) > budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let ln_lambda = hi;
            for &i in &active {
                times[i] = terms[i].1 * ln2 / invert_marginal(ln_lambda - terms[i].0.ln());
            }
            let used: S = times.iter().copied().sum();
            if used > budget {
                let scale = budget / used;
                times.iter_mut().for_each(|t| *t = *t * scale);
            }
        }
    }
    let energies = terms
        .iter()
        .zip(&times)
        .map(|(&(alpha, beta), &t)| {
            if beta <= S::zero() {
                S::zero()
            } else {
                alpha * t * (beta * S::LN_2() / t).exp_m1()
            }
        })
        .collect();
    (times, energies)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinEnergy<S> {
    pub allocation: Allocation<S>,
    pub total_energy: S,
    /// Whether the minimum energy fits in the instance's energy limit.
    pub within_budget: bool,
}

/// Cheapest allocation (in energy) delivering an integer selection within
/// the frame. The selection is feasible iff the result is within budget.
pub fn min_energy_for_selection<S: Scalar>(inst: &ProblemInstance<S>, sel: &QualitySelection<S>) -> Result<MinEnergy<S>> {
    if sel.mode() != SelectionMode::Integer {
        return domain("minimum-energy allocation needs an integer selection");
    }
    sel.conforms(inst.tiles(), inst.levels())?;
    let delta = S::of_usize(inst.smoothness());
    if let Some((a, b)) = inst.pairs().iter().find(|(a, b)| (sel.level(*a) - sel.level(*b)).abs() > delta) {
        return domain(format!("tiles {a} and {b} violate the smoothness bound"));
    }
    Ok(min_energy_for_sums(inst, &inst.group_level_sums(sel)))
}

/// Minimum-energy allocation for given per-group level sums; no validation.
pub(crate) fn min_energy_for_sums<S: Scalar>(inst: &ProblemInstance<S>, sums: &[S]) -> MinEnergy<S> {
    let terms: Vec<(S, S)> = sums
        .iter()
        .enumerate()
        .map(|(i, &s)| inst.link(i).energy_terms(inst.required_bits(s)))
        .collect();
    let (time, energy) = min_energy_split(&terms, inst.budgets().frame);
    let total_energy: S = energy.iter().copied().sum();
    MinEnergy {
        allocation: Allocation::new(time, energy).expect("split produces a well-formed allocation"),
        total_energy,
        within_budget: total_energy <= inst.budgets().energy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(alpha: f64, beta: f64, t: f64) -> f64 {
        alpha * t * ((beta / t) * std::f64::consts::LN_2).exp_m1()
    }

    #[test]
    fn marginal_inverse_roundtrip() {
        for &u in &[1e-6f64, 1e-3, 0.009, 0.011, 0.5, 1.0, 3.0, 29.0, 31.0, 120.0, 600.0] {
            let y = ln_marginal(u);
            let back = invert_marginal(y);
            assert!((back - u).abs() <= 1e-10 * u, "{u} -> {back}");
        }
        // branch continuity
        for &u in &[1e-2f64, 30.0] {
            let direct = (u * u.exp() - u.exp_m1()).ln();
            assert!((ln_marginal(u) - direct).abs() < 1e-10);
            assert!((ln_marginal(u * (1.0 + 1e-12)) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn single_group_takes_whole_frame() {
        let (t, e) = min_energy_split(&[(2.0, 0.3)], 0.05);
        assert_eq!(t, vec![0.05]);
        assert!((e[0] - curve(2.0, 0.3, 0.05)).abs() < 1e-12 * e[0]);
    }

    #[test]
    fn symmetric_groups_split_evenly() {
        let (t, e): (Vec<f64>, Vec<f64>) = min_energy_split(&[(8.28e-11, 0.02), (8.28e-11, 0.02)], 0.05);
        assert!((t[0] - 0.025).abs() < 1e-14 && (t[1] - 0.025).abs() < 1e-14);
        assert!((e[0] - e[1]).abs() <= 1e-12 * e[0]);
    }

    #[test]
    fn asymmetric_split_matches_grid_search() {
        let terms = [(8.28e-11, 0.03), (3.1e-10, 0.011)];
        let budget = 0.05;
        let (t, e) = min_energy_split(&terms, budget);
        let ours: f64 = e.iter().sum();
        let steps = 100_000;
        let mut best = f64::INFINITY;
        let mut best_t = 0.0;
        for k in 1..steps {
            let t1 = budget * k as f64 / steps as f64;
            let v = curve(terms[0].0, terms[0].1, t1) + curve(terms[1].0, terms[1].1, budget - t1);
            if v < best {
                best = v;
                best_t = t1;
            }
        }
        assert!(ours <= best * (1.0 + 1e-12), "{ours} vs grid {best}");
        assert!(best <= ours * (1.0 + 1e-6));
        assert!((t[0] - best_t).abs() <= 2e-5 * budget);
        assert!((t[0] + t[1] - budget).abs() <= 1e-15);
    }

    #[test]
    fn zero_requirement_groups_get_nothing() {
        let (t, e) = min_energy_split(&[(1.0, 0.0), (1.0, 0.01)], 0.05);
        assert_eq!(t, vec![0.0, 0.05]);
        assert_eq!(e[0], 0.0);
    }

    #[test]
    fn extreme_requirements_stay_finite() {
        let (t, e): (Vec<f64>, Vec<f64>) = min_energy_split(&[(1e-10, 5.0), (1e-12, 1e-6), (1e-8, 0.4)], 0.05);
        assert!(t.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(e.iter().all(|v| !v.is_nan()));
        assert!((t.iter().sum::<f64>() - 0.05).abs() < 1e-15);
    }
}
