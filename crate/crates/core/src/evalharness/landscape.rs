use crate::error::{Error, Result};

/// Per-sample γ-DIME objective over the marginal at density ratio `ratio`,
/// scaled by `1/γ`: `(γ R ln D − D^γ) / γ`. Peaks at `D = R^{1/γ}`.
pub fn landscape_value(gamma: f64, ratio: f64, d: f64) -> f64 {
    (gamma * ratio * d.ln() - d.powf(gamma)) / gamma
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeCurve {
    pub gamma: f64,
    pub ratio: f64,
    /// `(D, value)` over the grid.
    pub points: Vec<(f64, f64)>,
    /// Grid point with the largest value (first one on ties).
    pub maximizer: f64,
    pub max_value: f64,
}

/// `D = 0.001, 0.002, .., 3`.
pub fn default_d_grid() -> Vec<f64> {
    uniform_d_grid(3.0, 3000)
}

/// `points` evenly spaced values `d_max/points, .., d_max`.
pub fn uniform_d_grid(d_max: f64, points: usize) -> Vec<f64> {
    (1..=points)
        .map(|k| k as f64 * d_max / points as f64)
        .collect()
}

pub fn value_landscape(gammas: &[f64], ratio: f64, grid: &[f64]) -> Result<Vec<LandscapeCurve>> {
    if gammas.is_empty() {
        return Err(Error::invalid("gamma", "list is empty"));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::invalid(
            "gamma",
            format!("must be positive, got {g}"),
        ));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::invalid(
            "ratio",
            format!("must be positive, got {ratio}"),
        ));
    }
    if grid.is_empty() || grid.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::invalid("d", "grid must be nonempty and positive"));
    }
    Ok(gammas
        .iter()
        .map(|&gamma| {
            let points: Vec<(f64, f64)> = grid
                .iter()
                .map(|&d| (d, landscape_value(gamma, ratio, d)))
                .collect();
            let (maximizer, max_value) =
                points
                    .iter()
                    .copied()
                    .fold((f64::NAN, f64::NEG_INFINITY), |best, p| {
                        if p.1 > best.1 {
                            p
                        } else {
                            best
                        }
                    });
            LandscapeCurve {
                gamma,
                ratio,
                points,
                maximizer,
                max_value,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizers_on_default_grid() {
        let grid = default_d_grid();
        let unit = value_landscape(&[0.5, 1.0, 2.0, 5.0], 1.0, &grid).unwrap();
        for c in &unit {
            assert!(
                (c.maximizer - 1.0).abs() < 1e-12,
                "γ={}: {}",
                c.gamma,
                c.maximizer
            );
        }
        assert!((unit[1].max_value + 1.0).abs() < 1e-15);
        let r4 = value_landscape(&[2.0], 4.0, &grid).unwrap();
        assert!((r4[0].maximizer - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let grid = default_d_grid();
        assert!(value_landscape(&[], 1.0, &grid).is_err());
        assert!(value_landscape(&[-1.0], 1.0, &grid).is_err());
        assert!(value_landscape(&[1.0], 0.0, &grid).is_err());
        assert!(value_landscape(&[1.0], 1.0, &[0.0, 1.0]).is_err());
    }
}
