//! Built-in scenarios.

use crate::error::{Error, Result};
use crate::network::{Rational, ReactionNetwork};
use crate::scenario::Scenario;

const PRESETS: [(&str, &str); 6] = [
    ("heat1d", include_str!("../presets/heat1d.toml")),
    ("abc", include_str!("../presets/abc.toml")),
    ("examp22", include_str!("../presets/examp22.toml")),
    ("aniso2d", include_str!("../presets/aniso2d.toml")),
    ("advdiff1d", include_str!("../presets/advdiff1d.toml")),
    ("diffusion2d", include_str!("../presets/diffusion2d.toml")),
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// The TOML source of a preset.
pub fn source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

pub fn preset(name: &str) -> Result<Scenario> {
    Scenario::from_toml_str(source(name)?)
}

/// The `abc` preset with forward rate `k` and equilibrium constant `kappa`.
pub fn abc_with(k: Rational, kappa: Rational) -> Result<Scenario> {
    let s = preset("abc")?;
    Ok(s.with_network(&ReactionNetwork::abc(k, kappa)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds() {
        for name in names() {
            let s = preset(name).unwrap();
            assert_eq!(s.name, name);
            let b = s.build().unwrap();
            assert!(b.warnings.is_empty(), "{name}: {:?}", b.warnings);
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("unknown"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn abc_certificate_is_proportional_to_112() {
        let b = preset("abc").unwrap().build().unwrap();
        let e = b.certificate.unwrap().e_f64();
        assert!((e[1] - e[0]).abs() < 1e-15 && (e[2] - 2.0 * e[0]).abs() < 1e-15 && e[0] > 0.0);
    }

    #[test]
    fn abc_with_rates() {
        let s = abc_with(Rational::from_integer(10.into()), Rational::from_integer(2.into())).unwrap();
        let net = s.network().unwrap().unwrap();
        assert_eq!(net.k()[0], Rational::from_integer(10.into()));
        assert_eq!(net.kappa()[0], Rational::from_integer(2.into()));
    }
}
