//! Value functions and MI read-outs on plain critic outputs.
//!
//! `paired` holds critic values on joint draws, `unpaired` on draws from the
//! product of marginals. The graph-building counterparts used for training
//! live in `objective`.

use super::fgen::FGenerator;
use crate::error::{Error, Result};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `ln mean(exp(v))` without overflow.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + (s / v.len() as f64).ln()
}

fn nonempty(paired: &[f64], unpaired: &[f64]) -> Result<()> {
    if paired.is_empty() || unpaired.is_empty() {
        return Err(Error::invalid("batch", "critic outputs must be nonempty"));
    }
    Ok(())
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn all_positive(d: &[f64]) -> Result<()> {
    match d.iter().find(|&&v| !(v > 0.0)) {
        Some(bad) => Err(Error::invalid(
            "D",
            format!("discriminator output {bad} is not positive"),
        )),
        None => Ok(()),
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            op: "value function",
        })
    }
}

/// Donsker–Varadhan bound `mean(T_p) − ln mean(exp(T_q))`.
pub fn value_mine(paired: &[f64], unpaired: &[f64]) -> Result<f64> {
    nonempty(paired, unpaired)?;
    finite(mean(paired) - log_mean_exp(unpaired))
}

/// `mean(T_p) − mean(exp(T_q − 1))`.
pub fn value_nwj(paired: &[f64], unpaired: &[f64]) -> Result<f64> {
    nonempty(paired, unpaired)?;
    let second = unpaired.iter().map(|t| (t - 1.0).exp()).sum::<f64>() / unpaired.len() as f64;
    finite(mean(paired) - second)
}

/// DV bound with the density ratio `exp(T_q)` clipped to `[e^-τ, e^τ]`.
pub fn value_smile(paired: &[f64], unpaired: &[f64], tau: f64) -> Result<f64> {
    nonempty(paired, unpaired)?;
    if !(tau >= 0.0) {
        return Err(Error::invalid("tau", "must be non-negative"));
    }
    let clipped: Vec<f64> = unpaired.iter().map(|t| t.clamp(-tau, tau)).collect();
    finite(mean(paired) - log_mean_exp(&clipped))
}

/// `J_α(D) = α mean(ln D_p) − mean(D_q)`.
pub fn value_ddime(paired: &[f64], unpaired: &[f64], alpha: f64) -> Result<f64> {
    nonempty(paired, unpaired)?;
    positive("alpha", alpha)?;
    all_positive(paired)?;
    all_positive(unpaired)?;
    let logs: Vec<f64> = paired.iter().map(|d| d.ln()).collect();
    finite(alpha * mean(&logs) - mean(unpaired))
}

/// Lower bound `J_α/α + 1 − ln α` in nats.
pub fn estimate_ddime(value: f64, alpha: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    Ok(value / alpha + 1.0 - alpha.ln())
}

/// `J_f(T) = mean(T_p) − mean(f*(T_q))`.
pub fn value_fdime(paired: &[f64], unpaired: &[f64], generator: FGenerator) -> Result<f64> {
    nonempty(paired, unpaired)?;
    generator.validate()?;
    if let Some(bad) = paired.iter().find(|&&t| !generator.in_conjugate_domain(t)) {
        return Err(Error::invalid(
            "T",
            format!("{bad} outside the domain of {}*", generator.name()),
        ));
    }
    let conj = unpaired
        .iter()
        .map(|&t| generator.conjugate(t))
        .collect::<Result<Vec<_>>>()?;
    finite(mean(paired) - mean(&conj))
}

/// `mean ln (f′)⁻¹(T_p)` in nats: the log density ratio averaged over the
/// joint.
pub fn estimate_fdime(paired: &[f64], generator: FGenerator) -> Result<f64> {
    if paired.is_empty() {
        return Err(Error::invalid("batch", "critic outputs must be nonempty"));
    }
    let logs = paired
        .iter()
        .map(|&t| generator.log_inverse_derivative(t))
        .collect::<Result<Vec<_>>>()?;
    finite(mean(&logs))
}

/// `J_γ(D) = γ mean(ln D_p) − mean(D_q^γ)`.
pub fn value_gamma(paired: &[f64], unpaired: &[f64], gamma: f64) -> Result<f64> {
    nonempty(paired, unpaired)?;
    positive("gamma", gamma)?;
    all_positive(paired)?;
    all_positive(unpaired)?;
    let logs: Vec<f64> = paired.iter().map(|d| d.ln()).collect();
    let powers: Vec<f64> = unpaired.iter().map(|d| d.powf(gamma)).collect();
    finite(gamma * mean(&logs) - mean(&powers))
}

/// Lower bound `J_γ + 1` in nats.
pub fn estimate_gamma(value: f64) -> f64 {
    value + 1.0
}

/// Direct read-out `mean(γ ln D_p)`, since the optimum is `D* = ratio^{1/γ}`.
pub fn estimate_gamma_direct(paired: &[f64], gamma: f64) -> Result<f64> {
    positive("gamma", gamma)?;
    if paired.is_empty() {
        return Err(Error::invalid("batch", "critic outputs must be nonempty"));
    }
    all_positive(paired)?;
    let logs: Vec<f64> = paired.iter().map(|d| gamma * d.ln()).collect();
    finite(mean(&logs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn mine_is_shift_invariant_at_constants() {
        assert_eq!(value_mine(&[0.0; 4], &[0.0; 4]).unwrap(), 0.0);
        close(value_mine(&[2.5; 4], &[2.5; 3]).unwrap(), 0.0, 1e-15);
    }

    #[test]
    fn nwj_closed_forms() {
        assert_eq!(value_nwj(&[1.0; 3], &[1.0; 3]).unwrap(), 0.0);
        close(
            value_nwj(&[0.0; 3], &[0.0; 3]).unwrap(),
            -(-1f64).exp(),
            1e-15,
        );
    }

    #[test]
    fn smile_limits() {
        let p = [0.3, 1.2, -0.4];
        let q = [0.9, -2.0, 3.5, 0.1];
        assert_eq!(
            value_smile(&p, &q, 1e6).unwrap(),
            value_mine(&p, &q).unwrap()
        );
        close(value_smile(&p, &q, 0.0).unwrap(), mean(&p), 1e-15);
        assert!(value_smile(&p, &q, -1.0).is_err());
    }

    #[test]
    fn smile_tames_spikes() {
        let p = [0.5, 0.5];
        let q = [0.0, 1000.0];
        // naive mean(exp) overflows
        assert!(!q.iter().map(|t: &f64| t.exp()).sum::<f64>().is_finite());
        let v = value_smile(&p, &q, 5.0).unwrap();
        close(v, 0.5 - ((1.0 + 5f64.exp()) / 2.0).ln(), 1e-14);
        let spike = value_smile(&p, &[0.0, 100.0], 5.0).unwrap();
        close(spike, v, 1e-15);
    }

    #[test]
    fn ddime_closed_forms() {
        assert_eq!(value_ddime(&[1.0; 2], &[1.0; 2], 1.0).unwrap(), -1.0);
        let a = 2.5f64;
        close(
            value_ddime(&[a; 3], &[a; 3], a).unwrap(),
            a * a.ln() - a,
            1e-14,
        );
        assert_eq!(estimate_ddime(-1.0, 1.0).unwrap(), 0.0);
        assert!(value_ddime(&[1.0, 0.0], &[1.0], 1.0).is_err());
        assert!(value_ddime(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn nwj_is_ddime_with_alpha_one() {
        let d = [0.3, 1.7, 2.2, 0.05];
        let dq = [0.8, 0.1, 4.0];
        let t: Vec<f64> = d.iter().map(|v: &f64| v.ln() + 1.0).collect();
        let tq: Vec<f64> = dq.iter().map(|v: &f64| v.ln() + 1.0).collect();
        let j = value_ddime(&d, &dq, 1.0).unwrap();
        close(
            estimate_ddime(j, 1.0).unwrap(),
            value_nwj(&t, &tq).unwrap(),
            1e-14,
        );
    }

    #[test]
    fn fdime_closed_forms() {
        assert_eq!(
            value_fdime(&[1.0; 2], &[1.0; 2], FGenerator::Kl).unwrap(),
            0.0
        );
        assert_eq!(estimate_fdime(&[1.0; 5], FGenerator::Kl).unwrap(), 0.0);
        // GAN critic at independence: T ≡ f′(1) = ln ½, value 2 ln ½ + ln 4 = 0
        let t = 0.5f64.ln();
        close(
            value_fdime(&[t; 3], &[t; 3], FGenerator::Gan).unwrap(),
            0.0,
            1e-15,
        );
        close(
            estimate_fdime(&[t; 3], FGenerator::Gan).unwrap(),
            0.0,
            1e-15,
        );
        assert!(value_fdime(&[0.5], &[0.1], FGenerator::Gan).is_err());
    }

    #[test]
    fn gamma_closed_forms() {
        assert_eq!(value_gamma(&[1.0; 2], &[1.0; 2], 0.7).unwrap(), -1.0);
        assert_eq!(estimate_gamma(-1.0), 0.0);
        let d = [0.3, 1.7];
        let dq = [0.8, 0.1, 4.0];
        assert_eq!(
            value_gamma(&d, &dq, 1.0).unwrap(),
            value_ddime(&d, &dq, 1.0).unwrap()
        );
        assert!(value_gamma(&d, &[-1.0], 1.0).is_err());
        close(
            estimate_gamma_direct(&[2.0, 2.0], 0.5).unwrap(),
            0.5 * 2f64.ln(),
            1e-15,
        );
    }

    #[test]
    fn per_sample_gamma_landscape_peaks_at_ratio_power() {
        // q·(γ R ln D − D^γ) is maximised at D = R^{1/γ}
        for &(gamma, ratio) in &[(0.5, 2.0), (1.0, 3.0), (2.0, 4.0)] {
            let j = |d: f64| gamma * ratio * d.ln() - d.powf(gamma);
            let peak = f64::powf(ratio, 1.0 / gamma);
            assert!(j(peak) > j(peak * 1.01) && j(peak) > j(peak * 0.99));
        }
    }
}
