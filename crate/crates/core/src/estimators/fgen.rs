use crate::diffcore::{Activation, Graph, NodeId};
use crate::error::{Error, Result};

/// Convex generator `f` of an f-divergence, with its Fenchel conjugate,
/// derivative and inverse derivative.
///
/// | generator | f(u) | f*(t) | (f′)⁻¹(t) |
/// |-----------|------|-------|-----------|
/// | `Kl` | u ln u | e^{t-1} | e^{t-1} |
/// | `Gan` | u ln u − (u+1) ln(u+1) + ln 4 | −ln(1 − e^t) − ln 4, t < 0 | e^t / (1 − e^t) |
/// | `ScaledKl { γ }` | (u/γ) ln u | e^{γt-1} / γ | e^{γt-1} |
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FGenerator {
    Kl,
    Gan,
    ScaledKl { gamma: f64 },
}

fn xlogx(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * u.ln()
    }
}

impl FGenerator {
    pub fn name(&self) -> String {
        match self {
            FGenerator::Kl => "kl".into(),
            FGenerator::Gan => "gan".into(),
            FGenerator::ScaledKl { gamma } => format!("scaled-kl:{gamma}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kl" => Some(FGenerator::Kl),
            "gan" => Some(FGenerator::Gan),
            _ => {
                let gamma: f64 = s.strip_prefix("scaled-kl:")?.parse().ok()?;
                (gamma > 0.0).then_some(FGenerator::ScaledKl { gamma })
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FGenerator::ScaledKl { gamma } if !(*gamma > 0.0 && gamma.is_finite()) => Err(
                Error::invalid("gamma", "scaled-KL generator needs gamma > 0"),
            ),
            _ => Ok(()),
        }
    }

    /// `f(u)` for `u >= 0`.
    pub fn f(&self, u: f64) -> f64 {
        match self {
            FGenerator::Kl => xlogx(u),
            FGenerator::Gan => xlogx(u) - xlogx(u + 1.0) + 4f64.ln(),
            FGenerator::ScaledKl { gamma } => xlogx(u) / gamma,
        }
    }

    /// Supremum of the conjugate's domain (exclusive when finite).
    pub fn conjugate_domain_sup(&self) -> f64 {
        match self {
            FGenerator::Gan => 0.0,
            _ => f64::INFINITY,
        }
    }

    pub fn in_conjugate_domain(&self, t: f64) -> bool {
        t.is_finite() && t < self.conjugate_domain_sup()
    }

    pub fn conjugate(&self, t: f64) -> Result<f64> {
        if !self.in_conjugate_domain(t) {
            return Err(Error::invalid(
                "T",
                format!("{t} outside the domain of {}*", self.name()),
            ));
        }
        Ok(match self {
            FGenerator::Kl => (t - 1.0).exp(),
            FGenerator::Gan => -log1mexp(t) - 4f64.ln(),
            FGenerator::ScaledKl { gamma } => (gamma * t - 1.0).exp() / gamma,
        })
    }

    /// `f′(u)` for `u > 0`.
    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            FGenerator::Kl => u.ln() + 1.0,
            FGenerator::Gan => (u / (u + 1.0)).ln(),
            FGenerator::ScaledKl { gamma } => (u.ln() + 1.0) / gamma,
        }
    }

    pub fn inverse_derivative(&self, t: f64) -> Result<f64> {
        Ok(self.log_inverse_derivative(t)?.exp())
    }

    /// `ln (f′)⁻¹(t)`: the log density ratio recovered from a critic value.
    pub fn log_inverse_derivative(&self, t: f64) -> Result<f64> {
        // range of f′ coincides with the conjugate's domain for all three
        if !self.in_conjugate_domain(t) {
            return Err(Error::invalid(
                "T",
                format!("{t} outside the range of {}′", self.name()),
            ));
        }
        Ok(match self {
            FGenerator::Kl => t - 1.0,
            FGenerator::Gan => t - log1mexp(t),
            FGenerator::ScaledKl { gamma } => gamma * t - 1.0,
        })
    }

    /// Output head that maps a raw critic output into the conjugate's domain.
    pub fn head(&self) -> Activation {
        match self {
            FGenerator::Gan => Activation::LogSigmoid,
            _ => Activation::Linear,
        }
    }

    /// Elementwise `f*(t)` as graph nodes.
    pub fn conjugate_node(&self, g: &mut Graph, t: NodeId) -> Result<NodeId> {
        match self {
            FGenerator::Kl => {
                let s = g.add_scalar(t, -1.0)?;
                g.guarded_exp(s)
            }
            FGenerator::Gan => {
                let l = g.log1mexp(t)?;
                let neg = g.scale(l, -1.0)?;
                g.add_scalar(neg, -4f64.ln())
            }
            FGenerator::ScaledKl { gamma } => {
                let s = g.scale(t, *gamma)?;
                let s = g.add_scalar(s, -1.0)?;
                let e = g.guarded_exp(s)?;
                g.scale(e, 1.0 / gamma)
            }
        }
    }
}

/// `ln(1 - e^t)` for `t < 0`.
fn log1mexp(t: f64) -> f64 {
    if t > -std::f64::consts::LN_2 {
        (-t.exp_m1()).ln()
    } else {
        (-t.exp()).ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [FGenerator; 4] = [
        FGenerator::Kl,
        FGenerator::Gan,
        FGenerator::ScaledKl { gamma: 0.5 },
        FGenerator::ScaledKl { gamma: 2.0 },
    ];

    #[test]
    fn f_vanishes_at_one() {
        for gen in ALL {
            assert!(gen.f(1.0).abs() < 1e-15, "{}", gen.name());
        }
    }

    #[test]
    fn inverse_derivative_round_trips() {
        for gen in ALL {
            for i in 1..=1000 {
                let u = i as f64 * 0.01;
                let back = gen.inverse_derivative(gen.derivative(u)).unwrap();
                assert!(
                    (back - u).abs() < 1e-9 * u.max(1.0),
                    "{} at {u}: {back}",
                    gen.name()
                );
            }
        }
    }

    /// sup_u { u t - f(u) } by golden-section search on the concave objective.
    fn brute_conjugate(gen: FGenerator, t: f64) -> f64 {
        let obj = |u: f64| u * t - gen.f(u);
        let (mut lo, mut hi) = (0.0f64, 1e4f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..400 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if obj(a) < obj(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        obj(0.5 * (lo + hi))
    }

    #[test]
    fn conjugates_match_fenchel_supremum() {
        for gen in ALL {
            for &t in &[-2.0, -0.7, -0.1, 0.3, 1.0, 1.8] {
                if !gen.in_conjugate_domain(t) {
                    continue;
                }
                let want = brute_conjugate(gen, t);
                let got = gen.conjugate(t).unwrap();
                assert!(
                    (got - want).abs() < 1e-8,
                    "{} t={t}: {got} vs {want}",
                    gen.name()
                );
            }
        }
    }

    #[test]
    fn gan_conjugate_at_log_half() {
        // f*(ln ½) = -ln ½ - ln 4 = -ln 2
        let t = 0.5f64.ln();
        let got = FGenerator::Gan.conjugate(t).unwrap();
        assert!((got - (-(2f64.ln()))).abs() < 1e-15);
        assert!(FGenerator::Gan.conjugate(0.0).is_err());
        assert!(FGenerator::Gan.log_inverse_derivative(0.1).is_err());
    }

    #[test]
    fn parse_names() {
        for gen in ALL {
            assert_eq!(FGenerator::parse(&gen.name()), Some(gen));
        }
        assert_eq!(FGenerator::parse("scaled-kl:-1"), None);
    }
}
