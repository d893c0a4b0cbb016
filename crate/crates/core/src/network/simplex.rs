//! Two-phase dense simplex in exact rational arithmetic (Bland's rule).

use num_traits::{Signed, Zero};

use super::Rational;

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, s: usize) {
        let inv = self.rows[r][s].recip();
        for v in self.rows[r].iter_mut() {
            *v = &*v * &inv;
        }
        self.rhs[r] = &self.rhs[r] * &inv;
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][s].is_zero() {
                continue;
            }
            let f = self.rows[i][s].clone();
            for j in 0..self.rows[i].len() {
                if !self.rows[r][j].is_zero() {
                    let delta = &f * &self.rows[r][j];
                    self.rows[i][j] -= delta;
                }
            }
            let delta = &f * &self.rhs[r];
            self.rhs[i] -= delta;
        }
        self.basis[r] = s;
    }

    fn objective(&self, cost: &[Rational]) -> Rational {
        self.basis
            .iter()
            .zip(&self.rhs)
            .map(|(&b, v)| &cost[b] * v)
            .sum()
    }

    /// Minimises `cost . x` over the columns `< ncols`. Returns `false` when unbounded.
    fn optimize(&mut self, cost: &[Rational], ncols: usize) -> bool {
        loop {
            let entering = (0..ncols).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced: Rational = self
                    .basis
                    .iter()
                    .zip(&self.rows)
                    .fold(cost[j].clone(), |acc, (&b, row)| acc - &cost[b] * &row[j]);
                reduced.is_negative()
            });
            let Some(s) = entering else {
                return true;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !row[s].is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / &row[s];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, s),
                None => return false,
            }
        }
    }
}

/// Solves `min cost . x` subject to `a x = b`, `x >= 0`.
///
/// Returns `None` when the problem is infeasible or unbounded.
pub fn minimize(a: &[Vec<Rational>], b: &[Rational], cost: &[Rational]) -> Option<Vec<Rational>> {
    let m = a.len();
    let n = cost.len();
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (i, (row, bi)) in a.iter().zip(b).enumerate() {
        let flip = bi.is_negative();
        let mut r: Vec<Rational> = row
            .iter()
            .map(|v| if flip { -v.clone() } else { v.clone() })
            .collect();
        r.extend((0..m).map(|k| {
            if k == i {
                Rational::from_integer(1.into())
            } else {
                Rational::zero()
            }
        }));
        rows.push(r);
        rhs.push(if flip { -bi.clone() } else { bi.clone() });
    }
    let mut t = Tableau {
        rows,
        rhs,
        basis: (n..n + m).collect(),
    };

    let mut phase1 = vec![Rational::zero(); n + m];
    for c in phase1.iter_mut().skip(n) {
        *c = Rational::from_integer(1.into());
    }
    t.optimize(&phase1, n + m);
    if !t.objective(&phase1).is_zero() {
        return None;
    }

    // Drive remaining (zero-level) artificials out; drop redundant rows.
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            match (0..n).find(|&j| !t.rows[i][j].is_zero()) {
                Some(j) => {
                    t.pivot(i, j);
                    i += 1;
                }
                None => {
                    t.rows.remove(i);
                    t.rhs.remove(i);
                    t.basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }

    let mut phase2 = cost.to_vec();
    phase2.extend((0..m).map(|_| Rational::zero()));
    if !t.optimize(&phase2, n) {
        return None;
    }
    let mut x = vec![Rational::zero(); n];
    for (&bj, v) in t.basis.iter().zip(&t.rhs) {
        if bj < n {
            x[bj] = v.clone();
        }
    }
    Some(x)
}
