//! Class-rebalancing repeat-factor sampling rates.
//!
//! Class rates follow `S_i = max(1, sqrt(eps * N / m_i))` with a sampling
//! factor `eps = gamma * t / N_t` that rises over generations. Each unlabeled
//! image's realized rate is the max over its pseudo labels of
//! `S_c * (p - theta_c)`, so high-confidence pseudo labels drive resampling
//! while marginal ones contribute little.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;

/// Rate cap for classes with zero image evidence (`m_i = 0`).
pub const S_CAP: f64 = 20.0;

/// Default repeat-factor-sampling frequency threshold for the labeled set.
pub const DEFAULT_RFS_TAU: f64 = 0.001;

/// `eps = gamma * t / N_t`.
pub fn epsilon_schedule(gamma: f64, t: u32, n_t: u32) -> Result<f64> {
    if n_t == 0 {
        return Err(Error::InvalidInput("N_t must be positive".into()));
    }
    if t > n_t {
        return Err(Error::InvalidInput(alloc::format!(
            "generation {t} exceeds total {n_t}"
        )));
    }
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidInput(alloc::format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(gamma * t as f64 / n_t as f64)
}

/// Number of images containing at least one annotation of each class.
/// `images` yields the (possibly repeated) class list of one image; repeats
/// within an image count once.
pub fn count_class_images<'a, I>(images: I, n_classes: usize) -> Vec<u64>
where
    I: IntoIterator<Item = &'a [usize]>,
{
    let mut m = vec![0u64; n_classes];
    let mut seen = vec![false; n_classes];
    for classes in images {
        seen.iter_mut().for_each(|s| *s = false);
        for &c in classes {
            if c < n_classes && !seen[c] {
                seen[c] = true;
                m[c] += 1;
            }
        }
    }
    m
}

/// `S_i = max(1, sqrt(eps * N_total / m_i))`; `m_i = 0` yields [`S_CAP`].
pub fn class_repeat_rates(m: &[u64], epsilon: f64, n_total: u64) -> Result<Vec<f64>> {
    if n_total == 0 {
        return Err(Error::InvalidInput("N_total must be positive".into()));
    }
    Ok(m.iter()
        .map(|&mi| {
            if mi == 0 {
                S_CAP
            } else {
                fmath::sqrt(epsilon * n_total as f64 / mi as f64).max(1.0)
            }
        })
        .collect())
}

/// Confidence-weighted rate of one unlabeled image:
/// `max_j S_{c_j} * (p_j - theta_{c_j})`, 0 for an empty label list.
///
/// Labels must already have cleared their class threshold; a score below it
/// is a contract violation (filtering must precede sampling).
pub fn image_repeat_rate(
    labels: &[(usize, f64)],
    class_rates: &[f64],
    theta: &[f64],
) -> Result<f64> {
    let mut rate = 0.0f64;
    for &(class, score) in labels {
        if class >= class_rates.len() || class >= theta.len() {
            return Err(Error::LabelOutOfRange {
                label: class,
                dim: class_rates.len().min(theta.len()),
            });
        }
        if score < theta[class] {
            return Err(Error::InvalidInput(alloc::format!(
                "pseudo-label score {score} below class threshold {}; filter before sampling",
                theta[class]
            )));
        }
        rate = rate.max(class_rates[class] * (score - theta[class]));
    }
    Ok(rate)
}

/// Stochastic rounding of a repeat rate into a count:
/// `effective = max(1, rate)`, `count = floor(effective) + Bernoulli(frac)`.
/// `uniform_draw` is one uniform sample from `[0, 1)`.
pub fn realize_repeats(rate: f64, uniform_draw: f64) -> u64 {
    let effective = rate.max(1.0);
    let base = effective as u64; // floor, effective >= 1
    let frac = effective - base as f64;
    base + u64::from(uniform_draw < frac)
}

/// Baseline repeat-factor-sampling class rates for the labeled set:
/// `r_c = max(1, sqrt(tau / f_c))` for image frequencies `f_c` in `(0, 1]`.
pub fn labeled_rfs_rates(frequencies: &[f64], tau: f64) -> Result<Vec<f64>> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidInput(alloc::format!(
            "tau must be positive, got {tau}"
        )));
    }
    frequencies
        .iter()
        .map(|&f| {
            if f <= 0.0 || f > 1.0 {
                return Err(Error::InvalidInput(alloc::format!(
                    "class frequency must be in (0, 1], got {f}"
                )));
            }
            Ok(fmath::sqrt(tau / f).max(1.0))
        })
        .collect()
}

/// An image's repeat factor under labeled RFS: max of its classes' rates,
/// floored at 1 (an image with no listed classes is plain-sampled).
pub fn image_rfs_factor(classes: &[usize], class_rates: &[f64]) -> f64 {
    classes
        .iter()
        .filter_map(|&c| class_rates.get(c).copied())
        .fold(1.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn epsilon_schedule_cases() {
        assert_eq!(epsilon_schedule(0.5, 0, 10).unwrap(), 0.0);
        assert_eq!(epsilon_schedule(0.5, 10, 10).unwrap(), 0.5);
        assert_eq!(epsilon_schedule(0.05, 5, 10).unwrap(), 0.025);
        assert!(epsilon_schedule(0.5, 1, 0).is_err());
    }

    #[test]
    fn count_class_images_cases() {
        assert_eq!(count_class_images(core::iter::empty(), 3), vec![0, 0, 0]);
        // one image, five instances of class 0: counts once
        let img: &[usize] = &[0, 0, 0, 0, 0];
        assert_eq!(count_class_images([img], 2), vec![1, 0]);
        // 20-image fixture with a known hand count
        let fixture: Vec<Vec<usize>> = (0..20)
            .map(|i| {
                let mut v = vec![i % 3];
                if i % 5 == 0 {
                    v.push(3);
                }
                v
            })
            .collect();
        let slices: Vec<&[usize]> = fixture.iter().map(|v| v.as_slice()).collect();
        // class 0: i % 3 == 0 -> 7 images; class 1: 7; class 2: 6; class 3: i % 5 == 0 -> 4
        assert_eq!(count_class_images(slices, 4), vec![7, 7, 6, 4]);
    }

    #[test]
    fn class_repeat_rate_boundaries() {
        // m_i = eps * N -> S = 1
        let s = class_repeat_rates(&[50], 0.5, 100).unwrap();
        assert_eq!(s[0], 1.0);
        // m_i = eps * N / 4 -> S = 2
        let s = class_repeat_rates(&[25], 1.0, 100).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-12);
        // eps = 0 -> all ones
        let s = class_repeat_rates(&[3, 7, 1], 0.0, 100).unwrap();
        assert_eq!(s, vec![1.0, 1.0, 1.0]);
        // zero evidence -> capped
        let s = class_repeat_rates(&[0], 0.5, 100).unwrap();
        assert_eq!(s[0], S_CAP);
    }

    #[test]
    fn image_rate_cases() {
        let s = [2.0, 1.0];
        let theta = [0.3, 0.5];
        // boundary score contributes zero
        assert_eq!(image_repeat_rate(&[(0, 0.3)], &s, &theta).unwrap(), 0.0);
        // 2 * (0.8 - 0.3) = 1.0
        assert!((image_repeat_rate(&[(0, 0.8)], &s, &theta).unwrap() - 1.0).abs() < 1e-12);
        // max rule
        let r = image_repeat_rate(&[(0, 0.4), (0, 0.65)], &s, &theta).unwrap();
        assert!((r - 0.7).abs() < 1e-12);
        // empty list
        assert_eq!(image_repeat_rate(&[], &s, &theta).unwrap(), 0.0);
        // below-threshold score violates the contract
        assert!(image_repeat_rate(&[(1, 0.4)], &s, &theta).is_err());
    }

    #[test]
    fn realize_repeats_deterministic_cases() {
        for u in [0.0, 0.5, 0.999] {
            assert_eq!(realize_repeats(0.0, u), 1);
            assert_eq!(realize_repeats(3.0, u), 3);
        }
    }

    #[test]
    fn realize_repeats_monte_carlo_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let rate = 2.5;
        let n = 100_000u64;
        let total: u64 = (0..n).map(|_| realize_repeats(rate, rng.gen::<f64>())).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 2.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn labeled_rfs_cases() {
        let tau = 0.001;
        let r = labeled_rfs_rates(&[tau], tau).unwrap();
        assert_eq!(r[0], 1.0);
        let r = labeled_rfs_rates(&[tau / 4.0], tau).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-12);
        let r = labeled_rfs_rates(&[0.5, 0.9, 1.0], tau).unwrap();
        assert_eq!(r, vec![1.0, 1.0, 1.0]);
        assert!(labeled_rfs_rates(&[0.0], tau).is_err());
    }

    #[test]
    fn image_rfs_factor_is_max_over_classes() {
        let rates = [1.0, 3.0, 2.0];
        assert_eq!(image_rfs_factor(&[0, 2], &rates), 2.0);
        assert_eq!(image_rfs_factor(&[], &rates), 1.0);
    }

    proptest! {
        #[test]
        fn rates_monotone_in_m_and_eps(
            m1 in 1u64..1000,
            m2 in 1u64..1000,
            eps1 in 0.0f64..1.0,
            eps2 in 0.0f64..1.0,
        ) {
            let (m_lo, m_hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            let (e_lo, e_hi) = if eps1 <= eps2 { (eps1, eps2) } else { (eps2, eps1) };
            let n = 10_000;
            let s = class_repeat_rates(&[m_lo, m_hi], e_lo, n).unwrap();
            prop_assert!(s[0] >= s[1]); // nonincreasing in m
            let s_lo = class_repeat_rates(&[m_lo], e_lo, n).unwrap()[0];
            let s_hi = class_repeat_rates(&[m_lo], e_hi, n).unwrap()[0];
            prop_assert!(s_hi >= s_lo); // nondecreasing in eps
        }

        #[test]
        fn image_rate_monotone_in_score_and_rate(
            score in 0.5f64..1.0,
            bump in 0.0f64..0.2,
            s_base in 1.0f64..5.0,
        ) {
            let theta = [0.5];
            let r0 = image_repeat_rate(&[(0, score)], &[s_base], &theta).unwrap();
            let r1 = image_repeat_rate(&[(0, (score + bump).min(1.0))], &[s_base], &theta).unwrap();
            prop_assert!(r1 >= r0);
            let r2 = image_repeat_rate(&[(0, score)], &[s_base + 1.0], &theta).unwrap();
            prop_assert!(r2 >= r0);
        }

        #[test]
        fn lower_threshold_raises_rate(
            score in 0.6f64..1.0,
            theta in 0.3f64..0.6,
            drop in 0.0f64..0.2,
        ) {
            let r0 = image_repeat_rate(&[(0, score)], &[2.0], &[theta]).unwrap();
            let r1 = image_repeat_rate(&[(0, score)], &[2.0], &[theta - drop]).unwrap();
            prop_assert!(r1 >= r0);
        }

        #[test]
        fn realized_count_brackets_rate(rate in 0.0f64..10.0, u in 0.0f64..1.0) {
            let c = realize_repeats(rate, u);
            let eff = rate.max(1.0);
            prop_assert!(c as f64 >= eff.floor());
            prop_assert!(c as f64 <= eff.ceil());
        }
    }
}
