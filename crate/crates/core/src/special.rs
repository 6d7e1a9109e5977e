//! Multivariate gamma and digamma functions.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

fn check_domain(n: usize, x: f64, name: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain(format!("{name}: dimension must be positive")));
    }
    // smallest argument is x + (1 - n)/2
    let smallest = x - 0.5 * (n as f64 - 1.0);
    if !(smallest > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "{name}({n}, {x}): argument {smallest} is not positive"
        )));
    }
    Ok(())
}

/// `ln Γₙ(λ) = n(n−1)/4 · ln π + Σᵢ ln Γ(λ + (1−i)/2)`.
pub fn ln_gamma_n(n: usize, lambda: f64) -> Result<f64> {
    check_domain(n, lambda, "ln_gamma_n")?;
    let nf = n as f64;
    let mut acc = nf * (nf - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for i in 1..=n {
        acc += ln_gamma(lambda + 0.5 * (1.0 - i as f64));
    }
    Ok(acc)
}

// Below this argument the shifted differences are taken directly.
const ASYMPTOTIC_FROM: f64 = 10.0;

/// Tail of Stirling's series: `ln Γ(z) − [(z−½)ln z − z + ½ln 2π]`.
fn stirling_tail(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0))))
}

/// Tail of the digamma expansion: `ψ(z) − ln z`.
fn digamma_tail(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    -0.5 * r
        - r2 * (1.0 / 12.0 - r2 * (1.0 / 120.0 - r2 * (1.0 / 252.0 - r2 * (1.0 / 240.0 - r2 * (1.0 / 132.0)))))
}

/// `ln Γ(a+h) − ln Γ(a)` for `a > 0`, `h ≥ 0`, accurate when `a ≫ h`.
fn ln_gamma_shift(a: f64, h: f64) -> f64 {
    if a < ASYMPTOTIC_FROM {
        return ln_gamma(a + h) - ln_gamma(a);
    }
    (a - 0.5) * (h / a).ln_1p() + h * (a + h).ln() - h + stirling_tail(a + h) - stirling_tail(a)
}

/// `ψ(a+h) − ψ(a)` for `a > 0`, `h ≥ 0`, accurate when `a ≫ h`.
fn digamma_shift(a: f64, h: f64) -> f64 {
    if a < ASYMPTOTIC_FROM {
        return digamma(a + h) - digamma(a);
    }
    (h / a).ln_1p() + digamma_tail(a + h) - digamma_tail(a)
}

fn check_shift(h: f64, name: &str) -> Result<()> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("{name}: shift {h} must be finite and non-negative")));
    }
    Ok(())
}

/// `ln Γₙ(a+h) − ln Γₙ(a)`, without forming either term, so it stays
/// accurate when `a` is huge compared with `h`.
pub fn ln_gamma_n_shift(n: usize, a: f64, h: f64) -> Result<f64> {
    check_domain(n, a, "ln_gamma_n")?;
    check_shift(h, "ln_gamma_n_shift")?;
    Ok((1..=n).map(|i| ln_gamma_shift(a + 0.5 * (1.0 - i as f64), h)).sum())
}

/// `ψₙ(a+h) − ψₙ(a)`; see [`ln_gamma_n_shift`].
pub fn psi_n_shift(n: usize, a: f64, h: f64) -> Result<f64> {
    check_domain(n, a, "psi_n")?;
    check_shift(h, "psi_n_shift")?;
    Ok((1..=n).map(|i| digamma_shift(a + 0.5 * (1.0 - i as f64), h)).sum())
}

/// Derivative of `ln Γₙ` with respect to its argument: `Σᵢ ψ(x + (1−i)/2)`.
pub fn psi_n(n: usize, x: f64) -> Result<f64> {
    check_domain(n, x, "psi_n")?;
    Ok((1..=n).map(|i| digamma(x + 0.5 * (1.0 - i as f64))).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_n_scalar_case() {
        assert_relative_eq!(ln_gamma_n(1, 1.0).unwrap(), 0.0, epsilon = 1e-14);
    }

    // reference values from the product formula π^{n(n-1)/4} Π Γ(·) at 30 digits
    #[test]
    fn ln_gamma_n_matches_product_formula() {
        assert_relative_eq!(
            ln_gamma_n(2, 2.0).unwrap(),
            0.451_582_705_289_454_9,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            ln_gamma_n(3, 5.0).unwrap(),
            9.140_644_699_192_543,
            epsilon = 1e-12
        );
    }

    #[test]
    fn psi_n_known_values() {
        assert_relative_eq!(psi_n(1, 1.0).unwrap(), -0.577_215_664_901_532_9, epsilon = 1e-12);
        assert_relative_eq!(psi_n(2, 3.0).unwrap(), 1.625_940_975_743_710_3, epsilon = 1e-12);
        assert_relative_eq!(psi_n(3, 10.0).unwrap(), 6.590_131_943_425_281, epsilon = 1e-10);
    }

    #[test]
    fn psi_n_is_derivative_of_ln_gamma_n() {
        let h = 1e-5;
        for n in 1..=5 {
            for k in 0..20 {
                let x = 0.5 * n as f64 + 0.3 + 0.7 * k as f64;
                let fd = (ln_gamma_n(n, x + h).unwrap() - ln_gamma_n(n, x - h).unwrap()) / (2.0 * h);
                let an = psi_n(n, x).unwrap();
                assert!((fd - an).abs() < 1e-6, "n={n} x={x}: fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn large_argument_does_not_overflow() {
        let v = ln_gamma_n(4, 1e6).unwrap();
        assert!(v.is_finite());
        let d = ln_gamma_n_shift(4, 1e6, 1.0).unwrap();
        // Γ(x+1)/Γ(x) = x per term
        let direct: f64 = (0..4).map(|i| (1e6 - 0.5 * i as f64).ln()).sum();
        assert_relative_eq!(d, direct, max_relative = 1e-14);
    }

    #[test]
    fn shifts_agree_with_direct_differences() {
        for n in 1..=4 {
            for k in 0..30 {
                let a = 0.5 * n as f64 + 0.1 + 1.7 * k as f64;
                for h in [0.5, 1.0, 1.5, 3.0] {
                    let direct = ln_gamma_n(n, a + h).unwrap() - ln_gamma_n(n, a).unwrap();
                    assert_relative_eq!(ln_gamma_n_shift(n, a, h).unwrap(), direct, epsilon = 1e-11, max_relative = 1e-12);
                    let direct = psi_n(n, a + h).unwrap() - psi_n(n, a).unwrap();
                    assert_relative_eq!(psi_n_shift(n, a, h).unwrap(), direct, epsilon = 1e-12, max_relative = 1e-11);
                }
            }
        }
    }

    #[test]
    fn half_integer_shift_at_huge_argument() {
        // integer shifts telescope: ln Γ(a+2) − ln Γ(a) = ln a + ln(a+1)
        let a = 3.0e15;
        let got = ln_gamma_n_shift(1, a, 2.0).unwrap();
        assert_relative_eq!(got, a.ln() + (a + 1.0).ln(), max_relative = 1e-15);
        // ψ(a+1) − ψ(a) = 1/a
        assert_relative_eq!(psi_n_shift(1, a, 1.0).unwrap(), 1.0 / a, max_relative = 1e-9);
    }

    #[test]
    fn poles_are_domain_errors() {
        assert!(matches!(ln_gamma_n(2, 0.5), Err(Error::Domain(_))));
        assert!(matches!(psi_n(3, 1.0), Err(Error::Domain(_))));
        assert!(matches!(ln_gamma_n(0, 1.0), Err(Error::Domain(_))));
    }
}
