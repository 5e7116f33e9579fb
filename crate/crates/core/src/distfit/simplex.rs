//! Nelder–Mead downhill simplex.

use std::cmp::Ordering;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SimplexOptions<T: Real> {
    pub max_evals: usize,
    /// Relative spread of objective values across the simplex.
    pub ftol: T,
    /// Largest coordinate distance of any vertex from the best one.
    pub xtol: T,
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexResult<T: Real> {
    pub x: Vec<T>,
    pub f: T,
    pub evals: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0`, with the initial simplex spanned by `steps`
/// along the coordinate axes. NaN objective values count as `+∞`.
pub(crate) fn nelder_mead<T: Real, F: Fn(&[T]) -> T>(
    f: F,
    x0: &[T],
    steps: &[T],
    options: &SimplexOptions<T>,
) -> SimplexResult<T> {
    let dim = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[T]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };
    let half = T::lit(0.5);
    let two = T::lit(2.0);

    let mut pts: Vec<Vec<T>> = vec![x0.to_vec()];
    for (i, &s) in steps.iter().enumerate() {
        let mut p = x0.to_vec();
        p[i] += s;
        pts.push(p);
    }
    let mut fs: Vec<T> = pts.iter().map(|p| eval(p)).collect();
    let mut converged = false;

    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap_or(Ordering::Equal));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        fs = order.iter().map(|&i| fs[i]).collect();

        let best = fs[0];
        let fspread = fs[dim] - best;
        let xspread = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(&a, &b)| (a - b).abs()))
            .fold(T::zero(), T::max);
        if best.is_finite()
            && fspread <= options.ftol * (best.abs() + T::one())
            && xspread <= options.xtol
        {
            converged = true;
            break;
        }
        if evals.get() >= options.max_evals {
            break;
        }

        let mut centroid = vec![T::zero(); dim];
        for p in &pts[..dim] {
            for (c, &v) in centroid.iter_mut().zip(p) {
                *c += v;
            }
        }
        let nd = T::count(dim);
        centroid.iter_mut().for_each(|c| *c /= nd);
        let along = |t: T| -> Vec<T> {
            centroid
                .iter()
                .zip(&pts[dim])
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };

        let xr = along(T::one());
        let fr = eval(&xr);
        if fr < fs[0] {
            let xe = along(two);
            let fe = eval(&xe);
            if fe < fr {
                pts[dim] = xe;
                fs[dim] = fe;
            } else {
                pts[dim] = xr;
                fs[dim] = fr;
            }
        } else if fr < fs[dim - 1] {
            pts[dim] = xr;
            fs[dim] = fr;
        } else {
            let outside = fr < fs[dim];
            let xc = along(if outside { half } else { -half });
            let fc = eval(&xc);
            if fc < fr.min(fs[dim]) {
                pts[dim] = xc;
                fs[dim] = fc;
            } else {
                for i in 1..=dim {
                    let shrunk: Vec<T> = pts[i]
                        .iter()
                        .zip(&pts[0])
                        .map(|(&v, &b)| b + half * (v - b))
                        .collect();
                    fs[i] = eval(&shrunk);
                    pts[i] = shrunk;
                }
            }
        }
    }

    SimplexResult {
        x: pts.swap_remove(0),
        f: fs[0],
        evals: evals.get(),
        converged,
    }
}
