use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Monomial, PolyError, Polynomial};

const MAX_COEFFICIENT: i64 = 9;

/// Seeded random polynomial with exactly `nterms` distinct monomials of total
/// degree at most `max_degree`, coefficients in `[-9, 9] \ {0}`, in which
/// every one of the `nvars` variables (named `x0`, `x1`, ...) occurs.
pub fn random_polynomial(nvars: usize, nterms: usize, max_degree: u32, seed: u64) -> Result<Polynomial, PolyError> {
    if nvars == 0 || nterms == 0 {
        return Err(PolyError::InvalidShape("need at least one variable and one term".into()));
    }
    let available = monomial_count(nvars, max_degree);
    if nterms as u128 > available {
        return Err(PolyError::TooManyTerms {
            requested: nterms,
            available,
        });
    }
    let cover = nterms.min(nvars);
    if nvars.div_ceil(cover) as u64 > u64::from(max_degree) {
        return Err(PolyError::InvalidShape(format!(
            "{nvars} variables cannot all occur in {nterms} terms of degree <= {max_degree}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<Vec<u32>> = Vec::with_capacity(nterms);
    let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(nterms);

    // Covering terms: disjoint variable groups, then random extra powers.
    for group in 0..cover {
        let mut base = vec![0u32; nvars];
        for v in (group..nvars).step_by(cover) {
            base[v] = 1;
        }
        let degree: u32 = base.iter().sum();
        let mut bumped = base.clone();
        for _ in 0..rng.random_range(0..=max_degree - degree) {
            bumped[rng.random_range(0..nvars)] += 1;
        }
        let exps = if seen.contains(&bumped) { base } else { bumped };
        seen.insert(exps.clone());
        order.push(exps);
    }

    let mut misses = 0usize;
    while order.len() < nterms {
        let mut exps = vec![0u32; nvars];
        for _ in 0..rng.random_range(0..=max_degree) {
            exps[rng.random_range(0..nvars)] += 1;
        }
        if seen.insert(exps.clone()) {
            order.push(exps);
            continue;
        }
        misses += 1;
        if misses > 64 * nterms + 1024 {
            // Nearly saturated space: enumerate what is left.
            let mut rest: Vec<Vec<u32>> = all_monomials(nvars, max_degree)
                .into_iter()
                .filter(|e| !seen.contains(e))
                .collect();
            rest.shuffle(&mut rng);
            let needed = nterms - order.len();
            order.extend(rest.into_iter().take(needed));
        }
    }

    let terms: Vec<Monomial> = order
        .into_iter()
        .map(|exps| {
            let magnitude = rng.random_range(1..=MAX_COEFFICIENT);
            let coefficient = if rng.random_bool(0.5) { magnitude } else { -magnitude };
            Monomial::new(coefficient, exps.into_iter().enumerate())
        })
        .collect();
    let vars = (0..nvars).map(|i| format!("x{i}")).collect();
    Polynomial::new(vars, terms)
}

/// Number of monomials in `nvars` variables with total degree `<= max_degree`,
/// `C(nvars + max_degree, max_degree)`, saturating.
fn monomial_count(nvars: usize, max_degree: u32) -> u128 {
    let mut count: u128 = 1;
    for i in 1..=u128::from(max_degree) {
        count = match count.checked_mul(nvars as u128 + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    count
}

fn all_monomials(nvars: usize, max_degree: u32) -> Vec<Vec<u32>> {
    fn rec(var: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if var == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[var] = e;
            rec(var + 1, left - e, cur, out);
        }
        cur[var] = 0;
    }
    let mut out = Vec::new();
    rec(0, max_degree, &mut vec![0; nvars], &mut out);
    out
}
