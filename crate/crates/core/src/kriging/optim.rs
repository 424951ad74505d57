//! Derivative-free minimization used by the likelihood fit.

use rand::seq::SliceRandom;
use rand::Rng;

/// `n` points of a Latin hypercube in `[lower, upper]^d`: each axis is cut into
/// `n` strata and every stratum holds exactly one point.
pub fn latin_hypercube<R: Rng>(n: usize, lower: &[f64], upper: &[f64], rng: &mut R) -> Vec<Vec<f64>> {
    let d = lower.len();
    let mut out = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..d {
        perm.shuffle(rng);
        for (i, row) in out.iter_mut().enumerate() {
            let u = (perm[i] as f64 + rng.gen::<f64>()) / n as f64;
            row[k] = lower[k] + u * (upper[k] - lower[k]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Initial simplex edge length.
    pub step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 200,
            step: 1.0,
            f_tol: 1e-10,
            x_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for (k, v) in x.iter_mut().enumerate() {
        *v = v.clamp(lower[k], upper[k]);
    }
}

/// Nelder–Mead on a box. Trial points are projected onto the box; `f` may
/// return `+inf` for infeasible points. The starting point is a simplex
/// vertex, so the returned value is never worse than `f(start)`.
pub fn nelder_mead<F>(
    mut f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: NelderMeadOptions,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let d = start.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut x0 = start.to_vec();
    clamp_into(&mut x0, lower, upper);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let f0 = eval(&x0, &mut evals);
    simplex.push((x0.clone(), f0));
    for k in 0..d {
        let mut x = x0.clone();
        // step away from the nearer wall
        if x[k] + opts.step <= upper[k] {
            x[k] += opts.step;
        } else {
            x[k] -= opts.step;
        }
        clamp_into(&mut x, lower, upper);
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    // standard coefficients
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    while evals < opts.max_evals {
        // stable sort keeps the earliest vertex first among ties
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if best.is_finite()
            && (worst - best).abs() <= opts.f_tol * (1.0 + best.abs())
            && diameter <= opts.x_tol
        {
            break;
        }

        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for k in 0..d {
                centroid[k] += x[k] / d as f64;
            }
        }
        let along = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..d)
                .map(|k| centroid[k] + coef * (simplex[d].0[k] - centroid[k]))
                .collect();
            clamp_into(&mut p, lower, upper);
            p
        };

        let xr = along(-alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-alpha * gamma);
            let fe = eval(&xe, &mut evals);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = along(-alpha * rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for k in 0..d {
                        v.0[k] = x_best[k] + sigma * (v.0[k] - x_best[k]);
                    }
                    v.1 = eval(&v.0, &mut evals);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum { x, f, evals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn lhs_has_one_point_per_stratum() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let pts = latin_hypercube(10, &[0.0, -1.0], &[1.0, 1.0], &mut rng);
        for k in 0..2 {
            let (lo, hi) = ([0.0, -1.0][k], [1.0, 1.0][k]);
            let mut strata: Vec<usize> = pts
                .iter()
                .map(|p| (((p[k] - lo) / (hi - lo)) * 10.0).floor() as usize)
                .collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 5000,
            step: 0.5,
            ..Default::default()
        };
        let m = nelder_mead(rosen, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], opts);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3, "{m:?}");
    }

    #[test]
    fn respects_box_and_never_worse_than_start() {
        let f = |x: &[f64]| (x[0] - 10.0).powi(2);
        let m = nelder_mead(f, &[0.0], &[-1.0], &[2.0], NelderMeadOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-6);
        assert!(m.f <= 100.0);
    }

    #[test]
    fn infeasible_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { (x[0] - 0.5).powi(2) };
        let m = nelder_mead(f, &[1.5], &[-3.0], &[3.0], NelderMeadOptions::default());
        assert!((m.x[0] - 0.5).abs() < 1e-4);
    }
}
