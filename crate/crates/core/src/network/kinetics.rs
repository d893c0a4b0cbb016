//! Reaction rates and production terms.

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{rational_to_f64, Rational, ReactionNetwork};
use crate::error::{Error, Result};

/// Pointwise reaction term `f(c)` of a reaction–diffusion system.
pub trait Kinetics: Send + Sync {
    fn species(&self) -> usize;

    /// Writes `f(c)` into `out`.
    fn production(&self, c: &[f64], out: &mut [f64]);

    /// Dense row-major Jacobian `df_i/dc_l`.
    fn jacobian(&self, c: &[f64], out: &mut [f64]);

    /// Gershgorin bound on the spectral radius of the Jacobian.
    fn stiffness(&self, c: &[f64]) -> f64 {
        let p = self.species();
        let mut jac = vec![0.0; p * p];
        self.jacobian(c, &mut jac);
        jac.chunks(p)
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `c^gamma` with `0^0 = 1`.
fn monomial(c: &[f64], gamma: &[u32]) -> f64 {
    c.iter()
        .zip(gamma)
        .filter(|(_, &g)| g > 0)
        .map(|(&ci, &g)| ci.powi(g as i32))
        .product()
}

/// `d c^gamma / d c_l`.
fn monomial_derivative(c: &[f64], gamma: &[u32], l: usize) -> f64 {
    if gamma[l] == 0 {
        return 0.0;
    }
    let mut v = f64::from(gamma[l]) * c[l].powi(gamma[l] as i32 - 1);
    for (i, (&ci, &g)) in c.iter().zip(gamma).enumerate() {
        if i != l && g > 0 {
            v *= ci.powi(g as i32);
        }
    }
    v
}

fn monomial_exact(c: &[Rational], gamma: &[u32]) -> Rational {
    c.iter()
        .zip(gamma)
        .filter(|(_, &g)| g > 0)
        .fold(Rational::one(), |acc, (ci, &g)| acc * num_traits::pow(ci.clone(), g as usize))
}

fn check_domain(c: &[f64]) -> Result<()> {
    match c.iter().position(|&v| v < 0.0) {
        Some(i) => Err(Error::DomainError {
            species: i,
            value: c[i],
        }),
        None => Ok(()),
    }
}

/// `r_j(c) = c^{alpha_j} - kappa_j c^{beta_j}`.
pub fn rates(net: &ReactionNetwork, c: &[f64]) -> Result<Vec<f64>> {
    check_domain(c)?;
    Ok(net
        .alpha()
        .iter()
        .zip(net.beta())
        .zip(net.kappa())
        .map(|((a, b), kappa)| monomial(c, a) - rational_to_f64(kappa) * monomial(c, b))
        .collect())
}

pub fn rates_exact(net: &ReactionNetwork, c: &[Rational]) -> Result<Vec<Rational>> {
    if let Some(i) = c.iter().position(|v| *v < Rational::zero()) {
        return Err(Error::DomainError {
            species: i,
            value: rational_to_f64(&c[i]),
        });
    }
    Ok(net
        .alpha()
        .iter()
        .zip(net.beta())
        .zip(net.kappa())
        .map(|((a, b), kappa)| monomial_exact(c, a) - kappa * monomial_exact(c, b))
        .collect())
}

/// `F(c) = M diag(k) r(c)`.
pub fn production(net: &ReactionNetwork, c: &[f64]) -> Result<Vec<f64>> {
    let r = rates(net, c)?;
    let mut f = vec![0.0; net.species()];
    for (j, w) in net.omega().iter().enumerate() {
        let flux = rational_to_f64(&net.k()[j]) * r[j];
        for (fi, &wi) in f.iter_mut().zip(w) {
            *fi += wi as f64 * flux;
        }
    }
    Ok(f)
}

pub fn production_exact(net: &ReactionNetwork, c: &[Rational]) -> Result<Vec<Rational>> {
    let r = rates_exact(net, c)?;
    let mut f = vec![Rational::zero(); net.species()];
    for (j, w) in net.omega().iter().enumerate() {
        let flux = &net.k()[j] * &r[j];
        for (fi, &wi) in f.iter_mut().zip(w) {
            *fi += Rational::from_integer(wi.into()) * &flux;
        }
    }
    Ok(f)
}

/// Floating-point mass-action kinetics for the time integrator.
#[derive(Clone, Debug)]
pub struct MassActionKinetics {
    alpha: Vec<Vec<u32>>,
    beta: Vec<Vec<u32>>,
    omega: Vec<Vec<f64>>,
    k: Vec<f64>,
    kappa: Vec<f64>,
}

impl MassActionKinetics {
    pub fn new(net: &ReactionNetwork) -> Self {
        Self {
            alpha: net.alpha().to_vec(),
            beta: net.beta().to_vec(),
            omega: net
                .omega()
                .iter()
                .map(|w| w.iter().map(|&v| v as f64).collect())
                .collect(),
            k: net.k().iter().map(rational_to_f64).collect(),
            kappa: net.kappa().iter().map(rational_to_f64).collect(),
        }
    }
}

impl Kinetics for MassActionKinetics {
    fn species(&self) -> usize {
        self.omega.first().map_or(0, Vec::len)
    }

    fn production(&self, c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.k.len() {
            let r = monomial(c, &self.alpha[j]) - self.kappa[j] * monomial(c, &self.beta[j]);
            let flux = self.k[j] * r;
            for (o, w) in out.iter_mut().zip(&self.omega[j]) {
                *o += w * flux;
            }
        }
    }

    fn jacobian(&self, c: &[f64], out: &mut [f64]) {
        let p = self.species();
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.k.len() {
            for l in 0..p {
                let dr = monomial_derivative(c, &self.alpha[j], l)
                    - self.kappa[j] * monomial_derivative(c, &self.beta[j], l);
                if dr == 0.0 {
                    continue;
                }
                for i in 0..p {
                    out[i * p + l] += self.omega[j][i] * self.k[j] * dr;
                }
            }
        }
    }
}

/// The two-species system `f = (c2 - c1 h, c1 + c1 h)` with `h = c1 c2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExchangeKinetics;

impl Kinetics for ExchangeKinetics {
    fn species(&self) -> usize {
        2
    }

    fn production(&self, c: &[f64], out: &mut [f64]) {
        let h = c[0] * c[1];
        out[0] = c[1] - c[0] * h;
        out[1] = c[0] + c[0] * h;
    }

    fn jacobian(&self, c: &[f64], out: &mut [f64]) {
        let (c1, c2) = (c[0], c[1]);
        // d(c1^2 c2)/dc1 = 2 c1 c2, d/dc2 = c1^2
        out[0] = -2.0 * c1 * c2;
        out[1] = 1.0 - c1 * c1;
        out[2] = 1.0 + 2.0 * c1 * c2;
        out[3] = c1 * c1;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NoReaction(pub usize);

impl Kinetics for NoReaction {
    fn species(&self) -> usize {
        self.0
    }

    fn production(&self, _c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn jacobian(&self, _c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest `f_i(c)` observed on the face `c_i = 0`.
    pub worst_margin: f64,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Samples `c in [0,10]^P` with `c_i = 0` for each `i` in turn and checks `f_i(c) >= -1e-12`.
pub fn quasi_positivity_probe(kin: &dyn Kinetics, samples: usize, seed: u64) -> ProbeReport {
    let p = kin.species();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = vec![0.0; p];
    let mut f = vec![0.0; p];
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..samples {
        for i in 0..p {
            for v in c.iter_mut() {
                *v = rng.gen_range(0.0..10.0);
            }
            c[i] = 0.0;
            kin.production(&c, &mut f);
            worst = worst.min(f[i]);
            if f[i] < -1e-12 {
                violations += 1;
            }
        }
    }
    ProbeReport {
        samples,
        violations,
        worst_margin: worst,
    }
}
