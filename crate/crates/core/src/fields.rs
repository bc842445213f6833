//! Built-in velocity fields b(t, x) used by experiments and tests.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

/// Catalog of velocity fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldSpec {
    /// b ≡ value.
    Constant { value: Vec2 },
    /// Rigid rotation ω·(−(x₂−c₂), x₁−c₁); divergence free.
    Rotation { omega: f64, center: Vec2 },
    /// Shear (rate·x₂, 0); divergence free.
    Shear { rate: f64 },
    /// Swirl ρ^α e_θ around `center` with α = 1 − 1/q, which lies in W^{1,q}_loc
    /// but not in W^{1,∞}; divergence free.
    Rough { q: f64, amplitude: f64, center: Vec2 },
    /// base + amplitude·sin(2π·frequency·t)·direction; spatially constant.
    Oscillatory { base: Vec2, amplitude: f64, frequency: f64, direction: Vec2 },
    /// (x₁ + sin x₂, x₂), divergence 2.
    SineExpansion,
}

impl FieldSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            FieldSpec::Rough { q, .. } if !(*q > 1.0) => {
                Err(Error::InvalidParameter(format!("rough field needs q > 1, got {q}")))
            }
            FieldSpec::Oscillatory { frequency, .. } if !frequency.is_finite() => {
                Err(Error::InvalidParameter("oscillation frequency must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, FieldSpec::Oscillatory { .. })
    }

    pub fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        match *self {
            FieldSpec::Constant { value } => value,
            FieldSpec::Rotation { omega, center } => {
                let y = geom::sub(x, center);
                [-omega * y[1], omega * y[0]]
            }
            FieldSpec::Shear { rate } => [rate * x[1], 0.0],
            FieldSpec::Rough { q, amplitude, center } => {
                let y = geom::sub(x, center);
                let rho = geom::norm(y);
                if rho == 0.0 {
                    return [0.0, 0.0];
                }
                let alpha = 1.0 - 1.0 / q;
                let s = amplitude * rho.powf(alpha - 1.0);
                [-s * y[1], s * y[0]]
            }
            FieldSpec::Oscillatory { base, amplitude, frequency, direction } => {
                geom::add(base, geom::scale(direction, amplitude * (2.0 * PI * frequency * t).sin()))
            }
            FieldSpec::SineExpansion => [x[0] + x[1].sin(), x[1]],
        }
    }

    /// Exact divergence.
    pub fn divergence(&self, _t: f64, _x: Vec2) -> f64 {
        match self {
            FieldSpec::SineExpansion => 2.0,
            _ => 0.0,
        }
    }

    /// Sup of |b| over the ball of radius `r` around `c` (used for CFL and leak estimates).
    pub fn bound(&self, c: Vec2, r: f64) -> f64 {
        match *self {
            FieldSpec::Constant { value } => geom::norm(value),
            FieldSpec::Rotation { omega, center } => omega.abs() * (geom::dist(c, center) + r),
            FieldSpec::Shear { rate } => rate.abs() * (c[1].abs() + r),
            FieldSpec::Rough { q, amplitude, center } => amplitude.abs() * (geom::dist(c, center) + r).powf(1.0 - 1.0 / q),
            FieldSpec::Oscillatory { base, amplitude, direction, .. } => {
                geom::norm(base) + amplitude.abs() * geom::norm(direction)
            }
            FieldSpec::SineExpansion => ((c[0].abs() + r + 1.0).powi(2) + (c[1].abs() + r).powi(2)).sqrt(),
        }
    }
}

/// Catalog entry: identifier, parameters and the regularity it carries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldEntry {
    pub id: String,
    pub parameters: Vec<String>,
    pub regularity: String,
    pub example: FieldSpec,
}

pub fn field_catalog() -> Vec<FieldEntry> {
    vec![
        FieldEntry {
            id: "constant".into(),
            parameters: vec!["value".into()],
            regularity: "C^∞, divergence free".into(),
            example: FieldSpec::Constant { value: [1.0, 0.0] },
        },
        FieldEntry {
            id: "rotation".into(),
            parameters: vec!["omega".into(), "center".into()],
            regularity: "C^∞, divergence free".into(),
            example: FieldSpec::Rotation { omega: 1.0, center: [0.5, 0.5] },
        },
        FieldEntry {
            id: "shear".into(),
            parameters: vec!["rate".into()],
            regularity: "C^∞, divergence free".into(),
            example: FieldSpec::Shear { rate: 1.0 },
        },
        FieldEntry {
            id: "rough".into(),
            parameters: vec!["q".into(), "amplitude".into(), "center".into()],
            regularity: "W^{1,q}_loc with declared q > 1 (profile ρ^{1-1/q}), not Lipschitz, divergence free".into(),
            example: FieldSpec::Rough { q: 2.0, amplitude: 1.0, center: [0.5, 0.5] },
        },
        FieldEntry {
            id: "oscillatory".into(),
            parameters: vec!["base".into(), "amplitude".into(), "frequency".into(), "direction".into()],
            regularity: "spatially constant, smooth in time".into(),
            example: FieldSpec::Oscillatory { base: [0.0, 0.0], amplitude: 1.0, frequency: 1.0, direction: [1.0, 0.0] },
        },
        FieldEntry {
            id: "sine_expansion".into(),
            parameters: vec![],
            regularity: "C^∞, divergence 2".into(),
            example: FieldSpec::SineExpansion,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_div(f: &FieldSpec, x: Vec2) -> f64 {
        let h = 1e-6;
        let dx = (f.eval(0.0, [x[0] + h, x[1]])[0] - f.eval(0.0, [x[0] - h, x[1]])[0]) / (2.0 * h);
        let dy = (f.eval(0.0, [x[0], x[1] + h])[1] - f.eval(0.0, [x[0], x[1] - h])[1]) / (2.0 * h);
        dx + dy
    }

    #[test]
    fn divergences_match_finite_differences() {
        for e in field_catalog() {
            let x = [0.31, 0.77];
            assert!((fd_div(&e.example, x) - e.example.divergence(0.0, x)).abs() < 1e-6, "{}", e.id);
        }
    }

    #[test]
    fn rough_field_rejects_small_q() {
        assert!(FieldSpec::Rough { q: 1.0, amplitude: 1.0, center: [0.0, 0.0] }.validate().is_err());
    }
}
