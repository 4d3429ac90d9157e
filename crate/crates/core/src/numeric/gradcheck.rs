use rand::Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// A single scalar coordinate of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coord {
    pub param: ParamId,
    pub index: usize,
}

/// Compares tape gradients against central finite differences.
///
/// `build` records the scalar objective on a fresh tape; it is invoked once
/// for the analytic pass and twice per coordinate. Returns the largest
/// `|g_a - g_n| / max(1e-8, |g_a| + |g_n|)` over `coords`.
pub fn grad_check<F>(params: &mut ParamStore, coords: &[Coord], epsilon: f64, mut build: F) -> Result<f64>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = build(params, &mut tape)?;
    let f0 = tape.scalar(out);
    if !f0.is_finite() {
        return Err(Error::NonFinite("objective at base point".into()));
    }
    let adj = tape.backward(out);
    let mut analytic = Gradients::zeros_like(params);
    tape.accumulate(&adj, &mut analytic, 1.0);

    let mut eval = |params: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let v = build(params, &mut t)?;
        let f = t.scalar(v);
        if !f.is_finite() {
            return Err(Error::NonFinite("objective at perturbed point".into()));
        }
        Ok(f)
    };

    let mut worst = 0.0f64;
    for c in coords {
        let orig = params.get(c.param).data[c.index];
        params.get_mut(c.param).data[c.index] = orig + epsilon;
        let plus = eval(params);
        params.get_mut(c.param).data[c.index] = orig - epsilon;
        let minus = eval(params);
        params.get_mut(c.param).data[c.index] = orig;
        let numeric = (plus? - minus?) / (2.0 * epsilon);
        let a = analytic.at(c.param, c.index);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Up to `per_param` random coordinates from each parameter (all of them when
/// the parameter is smaller). Row-sparse parameters draw only from `rows`
/// when given.
pub fn sample_coords<R: Rng>(params: &ParamStore, per_param: usize, rows: Option<&[usize]>, rng: &mut R) -> Vec<Coord> {
    let mut out = Vec::new();
    for (id, p) in params.iter() {
        let candidates: Vec<usize> = match (p.row_sparse, rows) {
            (true, Some(rows)) => {
                let rl = p.row_len();
                rows.iter().flat_map(|r| r * rl..(r + 1) * rl).collect()
            }
            _ => (0..p.data.len()).collect(),
        };
        if candidates.len() <= per_param {
            out.extend(candidates.into_iter().map(|index| Coord { param: id, index }));
        } else {
            for k in rand::seq::index::sample(rng, candidates.len(), per_param) {
                out.push(Coord {
                    param: id,
                    index: candidates[k],
                });
            }
        }
    }
    out
}
