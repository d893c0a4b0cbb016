//! Mass-action reaction networks with single-product reactions.
//!
//! A network with `P` species and `R` reactions is stored as two `R × P`
//! stoichiometric matrices (`alpha` for reactants, `beta` for products)
//! together with exact rational forward rate coefficients `k_j` and
//! equilibrium constants `kappa_j`. The reaction
//!
//! ```text
//! alpha_j^1 C_1 + ... + alpha_j^P C_P  <=>  beta_j^1 C_1 + ... + beta_j^P C_P
//! ```
//!
//! has forward rate `k_j` and backward rate `k_j kappa_j`.

pub mod certificate;
pub mod exact;
pub mod kinetics;
pub mod random;
pub mod simplex;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use certificate::{certify, TriangularCertificate, Triangularization};
pub use kinetics::{quasi_positivity_probe, ExchangeKinetics, Kinetics, MassActionKinetics, NoReaction, ProbeReport};

/// Exact rational number used throughout the structural checks.
pub type Rational = BigRational;

/// Parses `"3"`, `"-1/2"` or `"0.25"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim())
            .map_err(|e| Error::InvalidNetwork(format!("bad numerator in '{s}': {e}")))?;
        let den = BigInt::from_str(den.trim())
            .map_err(|e| Error::InvalidNetwork(format!("bad denominator in '{s}': {e}")))?;
        if den.is_zero() {
            return Err(Error::InvalidNetwork(format!("zero denominator in '{s}'")));
        }
        return Ok(BigRational::new(num, den));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let negative = int.trim_start().starts_with('-');
        let int_part = if int.is_empty() || int == "-" { "0" } else { int };
        let whole = BigInt::from_str(int_part)
            .map_err(|e| Error::InvalidNetwork(format!("bad decimal '{s}': {e}")))?;
        if frac.is_empty() {
            return Ok(BigRational::from_integer(whole));
        }
        let digits = BigInt::from_str(frac)
            .map_err(|e| Error::InvalidNetwork(format!("bad decimal '{s}': {e}")))?;
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        let frac_part = BigRational::new(digits, scale);
        let whole = BigRational::from_integer(whole);
        return Ok(if negative { whole - frac_part } else { whole + frac_part });
    }
    BigInt::from_str(s)
        .map(BigRational::from_integer)
        .map_err(|e| Error::InvalidNetwork(format!("bad rational '{s}': {e}")))
}

/// Formats a rational as `p/q` (or `p` when integral).
pub fn format_rational(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn rational_to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReactionNetwork {
    species: usize,
    alpha: Vec<Vec<u32>>,
    beta: Vec<Vec<u32>>,
    k: Vec<Rational>,
    kappa: Vec<Rational>,
}

impl ReactionNetwork {
    pub fn new(
        species: usize,
        alpha: Vec<Vec<u32>>,
        beta: Vec<Vec<u32>>,
        k: Vec<Rational>,
        kappa: Vec<Rational>,
    ) -> Result<Self> {
        if species == 0 {
            return Err(Error::InvalidNetwork("species count must be positive".into()));
        }
        let reactions = alpha.len();
        if reactions == 0 {
            return Err(Error::InvalidNetwork("reaction count must be positive".into()));
        }
        if beta.len() != reactions || k.len() != reactions || kappa.len() != reactions {
            return Err(Error::InvalidNetwork(format!(
                "inconsistent reaction counts: alpha {}, beta {}, k {}, kappa {}",
                reactions,
                beta.len(),
                k.len(),
                kappa.len()
            )));
        }
        for (j, (a, b)) in alpha.iter().zip(&beta).enumerate() {
            if a.len() != species || b.len() != species {
                return Err(Error::InvalidNetwork(format!(
                    "reaction {j}: stoichiometric rows must have {species} entries"
                )));
            }
        }
        if let Some(j) = k.iter().position(|kj| !kj.is_positive()) {
            return Err(Error::InvalidNetwork(format!("k[{j}] must be positive")));
        }
        if let Some(j) = kappa.iter().position(|kj| kj.is_negative()) {
            return Err(Error::InvalidNetwork(format!("kappa[{j}] must be nonnegative")));
        }
        Ok(Self {
            species,
            alpha,
            beta,
            k,
            kappa,
        })
    }

    /// The three-species network `C1 + C2 <=> C3` with rate `k` and equilibrium constant `kappa`.
    pub fn abc(k: Rational, kappa: Rational) -> Self {
        Self::new(3, vec![vec![1, 1, 0]], vec![vec![0, 0, 1]], vec![k], vec![kappa])
            .expect("abc network is valid")
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn reactions(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[Vec<u32>] {
        &self.alpha
    }

    pub fn beta(&self) -> &[Vec<u32>] {
        &self.beta
    }

    pub fn k(&self) -> &[Rational] {
        &self.k
    }

    pub fn kappa(&self) -> &[Rational] {
        &self.kappa
    }

    /// Returns a copy with every forward rate multiplied by `factor`.
    pub fn scaled_rates(&self, factor: &Rational) -> Self {
        let mut out = self.clone();
        for kj in &mut out.k {
            *kj = &*kj * factor;
        }
        out
    }

    /// Rows `omega_j = beta_j - alpha_j` (`R × P`).
    pub fn omega(&self) -> Vec<Vec<i64>> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(&a, &b)| i64::from(b) - i64::from(a))
                    .collect()
            })
            .collect()
    }

    /// The `P × R` matrix whose columns are the stoichiometric vectors.
    pub fn stoichiometric_matrix(&self) -> Vec<Vec<i64>> {
        let omega = self.omega();
        (0..self.species)
            .map(|i| omega.iter().map(|w| w[i]).collect())
            .collect()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: NetworkFile =
            toml::from_str(s).map_err(|e| Error::InvalidNetwork(e.to_string()))?;
        Self::try_from(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&NetworkFile::from(self.clone())).expect("network serializes")
    }
}

impl fmt::Display for ReactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn side(coeffs: &[u32]) -> String {
            let terms: Vec<String> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| {
                    if c == 1 {
                        format!("C{}", i + 1)
                    } else {
                        format!("{c}C{}", i + 1)
                    }
                })
                .collect();
            if terms.is_empty() {
                "0".into()
            } else {
                terms.join(" + ")
            }
        }
        for j in 0..self.reactions() {
            if j > 0 {
                writeln!(f)?;
            }
            write!(
                f,
                "{} <=> {}  (k={}, kappa={})",
                side(&self.alpha[j]),
                side(&self.beta[j]),
                format_rational(&self.k[j]),
                format_rational(&self.kappa[j])
            )?;
        }
        Ok(())
    }
}

/// On-disk network description. Rates are decimal or `p/q` strings so that
/// they stay exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub species: usize,
    pub alpha: Vec<Vec<u32>>,
    pub beta: Vec<Vec<u32>>,
    pub k: Vec<String>,
    pub kappa: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<Vec<i64>>>,
}

impl TryFrom<NetworkFile> for ReactionNetwork {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Self> {
        let k = file
            .k
            .iter()
            .map(|s| parse_rational(s))
            .collect::<Result<Vec<_>>>()?;
        let kappa = file
            .kappa
            .iter()
            .map(|s| parse_rational(s))
            .collect::<Result<Vec<_>>>()?;
        let net = ReactionNetwork::new(file.species, file.alpha, file.beta, k, kappa)?;
        if let Some(omega) = file.omega {
            if omega != net.omega() {
                return Err(Error::InvalidNetwork(
                    "stored omega does not equal beta - alpha".into(),
                ));
            }
        }
        Ok(net)
    }
}

impl From<ReactionNetwork> for NetworkFile {
    fn from(net: ReactionNetwork) -> Self {
        let omega = Some(net.omega());
        Self {
            species: net.species,
            alpha: net.alpha,
            beta: net.beta,
            k: net.k.iter().map(format_rational).collect(),
            kappa: net.kappa.iter().map(format_rational).collect(),
            omega,
        }
    }
}

impl Serialize for ReactionNetwork {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkFile::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReactionNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = NetworkFile::deserialize(d)?;
        ReactionNetwork::try_from(file).map_err(serde::de::Error::custom)
    }
}

/// The stoichiometric vectors are linearly independent.
pub fn check_independent(net: &ReactionNetwork) -> bool {
    exact::integer_rank(&net.stoichiometric_matrix()) == net.reactions()
}

/// Every reaction has exactly one product with coefficient one.
pub fn check_single_product(net: &ReactionNetwork) -> bool {
    net.beta().iter().all(|row| {
        row.iter().filter(|&&b| b == 1).count() == 1 && row.iter().all(|&b| b <= 1)
    })
}

/// Finds `e >= 1` with `M^T e = 0`, minimising `sum(e)` by exact simplex.
pub fn find_conservation_vector(net: &ReactionNetwork) -> Result<Vec<Rational>> {
    let omega = net.omega();
    let p = net.species();
    let rows: Vec<Vec<Rational>> = omega
        .iter()
        .map(|w| w.iter().map(|&v| Rational::from_integer(v.into())).collect())
        .collect();
    if exact::nullspace(&rows).is_empty() {
        return Err(Error::NoConservationVector);
    }
    // Substitute e = 1 + y with y >= 0: omega_j . y = -sum(omega_j).
    let rhs: Vec<Rational> = omega
        .iter()
        .map(|w| Rational::from_integer((-w.iter().sum::<i64>()).into()))
        .collect();
    let cost = vec![Rational::from_integer(1.into()); p];
    let y = simplex::minimize(&rows, &rhs, &cost).ok_or(Error::NoConservationVector)?;
    let one = Rational::from_integer(1.into());
    Ok(y.into_iter().map(|yi| yi + &one).collect())
}

/// Every column of `M` has exactly one strictly positive entry.
pub fn check_single_positive(m: &[Vec<i64>]) -> bool {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).all(|j| m.iter().filter(|row| row[j] > 0).count() == 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn parses_rationals() {
        assert_eq!(q("1/2"), Rational::new(1.into(), 2.into()));
        assert_eq!(q("-3"), Rational::from_integer((-3).into()));
        assert_eq!(q("0.25"), Rational::new(1.into(), 4.into()));
        assert_eq!(q("-1.5"), Rational::new((-3).into(), 2.into()));
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn rejects_invalid_networks() {
        assert!(ReactionNetwork::new(2, vec![vec![1, 0]], vec![vec![0, 1]], vec![q("0")], vec![q("0")]).is_err());
        assert!(ReactionNetwork::new(2, vec![vec![1, 0]], vec![vec![0, 1]], vec![q("1")], vec![q("-1")]).is_err());
        assert!(ReactionNetwork::new(2, vec![vec![1]], vec![vec![0, 1]], vec![q("1")], vec![q("0")]).is_err());
    }

    #[test]
    fn independence_examples() {
        let abc = ReactionNetwork::abc(q("1"), q("1"));
        assert!(check_independent(&abc));
        // omega_2 = 2 omega_1
        let prop = ReactionNetwork::new(
            3,
            vec![vec![1, 1, 0], vec![2, 2, 0]],
            vec![vec![0, 0, 1], vec![0, 0, 2]],
            vec![q("1"), q("1")],
            vec![q("0"), q("0")],
        )
        .unwrap();
        assert!(!check_independent(&prop));
        // 2C1 -> C2, C1 + C2 -> C3: M = [[-2,-1],[1,-1],[0,1]], rank 2.
        let two = ReactionNetwork::new(
            3,
            vec![vec![2, 0, 0], vec![1, 1, 0]],
            vec![vec![0, 1, 0], vec![0, 0, 1]],
            vec![q("1"), q("1")],
            vec![q("0"), q("0")],
        )
        .unwrap();
        assert!(check_independent(&two));
    }

    #[test]
    fn single_product_examples() {
        let mk = |beta: Vec<u32>| {
            ReactionNetwork::new(3, vec![vec![1, 1, 0]], vec![beta], vec![q("1")], vec![q("0")]).unwrap()
        };
        assert!(check_single_product(&mk(vec![0, 0, 1])));
        assert!(!check_single_product(&mk(vec![1, 1, 0])));
        assert!(!check_single_product(&mk(vec![0, 2, 0])));
    }

    #[test]
    fn conservation_vector_abc() {
        let e = find_conservation_vector(&ReactionNetwork::abc(q("1"), q("1"))).unwrap();
        assert_eq!(e, vec![q("1"), q("1"), q("2")]);
    }

    #[test]
    fn conservation_vector_missing() {
        // C1 <=> 2 C1
        let net = ReactionNetwork::new(1, vec![vec![1]], vec![vec![2]], vec![q("1")], vec![q("1")]).unwrap();
        assert!(matches!(find_conservation_vector(&net), Err(Error::NoConservationVector)));
    }

    #[test]
    fn conservation_vector_two_reactions() {
        // C1 + C2 <=> C3, C1 + C3 <=> C4
        let net = ReactionNetwork::new(
            4,
            vec![vec![1, 1, 0, 0], vec![1, 0, 1, 0]],
            vec![vec![0, 0, 1, 0], vec![0, 0, 0, 1]],
            vec![q("1"), q("1")],
            vec![q("1"), q("1")],
        )
        .unwrap();
        let e = find_conservation_vector(&net).unwrap();
        for w in net.omega() {
            let dot: Rational = w
                .iter()
                .zip(&e)
                .map(|(&wi, ei)| Rational::from_integer(wi.into()) * ei)
                .sum();
            assert!(dot.is_zero());
        }
        assert!(e.iter().all(|ei| *ei >= q("1")));
        // The nullspace of M^T is spanned by (1,0,1,2) and (0,1,1,1); the
        // minimum of sum(e) over e >= 1 sits at (1,1,2,3).
        assert_eq!(e, vec![q("1"), q("1"), q("2"), q("3")]);
    }

    #[test]
    fn toml_round_trip_and_omega_check() {
        let net = ReactionNetwork::abc(q("3/2"), q("1/3"));
        let text = net.to_toml_string();
        assert_eq!(ReactionNetwork::from_toml_str(&text).unwrap(), net);
        let bad = text.replace("omega = [[-1, -1, 1]]", "omega = [[-1, -1, 2]]");
        assert_ne!(bad, text);
        assert!(ReactionNetwork::from_toml_str(&bad).is_err());
    }
}
