//! Random networks that pass certification, for property tests and sweeps.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{check_independent, Rational, ReactionNetwork};

fn random_rate(rng: &mut impl Rng) -> Rational {
    Rational::new(rng.gen_range(1..=9i64).into(), rng.gen_range(1..=4i64).into())
}

/// Draws a network whose species carry positive integer "masses" and whose
/// reactions each assemble one product from lighter-or-equal reactants of the
/// same total mass. Species and reactions are shuffled afterwards.
pub fn random_network(rng: &mut impl Rng) -> ReactionNetwork {
    loop {
        let p: usize = rng.gen_range(3..=6);
        let mut masses: Vec<u32> = (0..p)
            .map(|i| if i < 2 { 1 } else { rng.gen_range(1..=4) })
            .collect();
        masses.sort_unstable();
        let heavy: Vec<usize> = (0..p).filter(|&i| masses[i] >= 2).collect();
        if heavy.is_empty() {
            continue;
        }
        let target = rng.gen_range(1..p);
        let mut alpha: Vec<Vec<u32>> = Vec::new();
        let mut beta: Vec<Vec<u32>> = Vec::new();
        for _ in 0..8 * p {
            if alpha.len() == target {
                break;
            }
            let product = *heavy.choose(rng).expect("nonempty");
            let mut a = vec![0u32; p];
            let mut remaining = masses[product];
            while remaining > 0 {
                let choices: Vec<usize> = (0..p)
                    .filter(|&l| l != product && masses[l] <= remaining)
                    .collect();
                let l = *choices.choose(rng).expect("species 0 has unit mass");
                a[l] += 1;
                remaining -= masses[l];
            }
            let mut b = vec![0u32; p];
            b[product] = 1;
            if alpha.iter().zip(&beta).any(|(x, y)| *x == a && *y == b) {
                continue;
            }
            alpha.push(a);
            beta.push(b);
            let trial = ReactionNetwork::new(
                p,
                alpha.clone(),
                beta.clone(),
                vec![Rational::from_integer(1.into()); alpha.len()],
                vec![Rational::from_integer(0.into()); alpha.len()],
            )
            .expect("valid shape");
            if !check_independent(&trial) {
                alpha.pop();
                beta.pop();
            }
        }
        let r = alpha.len();
        let mut species: Vec<usize> = (0..p).collect();
        species.shuffle(rng);
        let mut order: Vec<usize> = (0..r).collect();
        order.shuffle(rng);
        let permute = |row: &Vec<u32>| species.iter().map(|&s| row[s]).collect::<Vec<u32>>();
        let alpha: Vec<Vec<u32>> = order.iter().map(|&j| permute(&alpha[j])).collect();
        let beta: Vec<Vec<u32>> = order.iter().map(|&j| permute(&beta[j])).collect();
        let k = (0..r).map(|_| random_rate(rng)).collect();
        let kappa = (0..r)
            .map(|_| {
                if rng.gen_bool(1.0 / 3.0) {
                    Rational::from_integer(0.into())
                } else {
                    random_rate(rng)
                }
            })
            .collect();
        return ReactionNetwork::new(p, alpha, beta, k, kappa).expect("generated network is valid");
    }
}
