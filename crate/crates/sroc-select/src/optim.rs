//! Small derivative-free minimizer used by the variance-component fits.
//!
//! A Nelder-Mead simplex search gets close to the optimum from each start,
//! then a coordinate-wise Newton polish (finite-difference curvature along
//! one axis at a time) tightens the solution well past what the simplex
//! alone achieves. Objectives are minimized; non-finite objective values
//! are treated as +infinity so boundary excursions are simply rejected.

/// Result of a simplex run, before polishing.
#[derive(Debug, Clone)]
pub(crate) struct MinimizeResult {
    pub x: Vec<f64>,
    // callers re-evaluate after polishing, so only tests read this
    #[allow(dead_code)]
    pub fval: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn guard(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Nelder-Mead with standard coefficients (reflect 1, expand 2, contract
/// 0.5, shrink 0.5). Stops when the simplex's objective spread falls below
/// `ftol` or after `max_iter` iterations.
pub(crate) fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    initial_step: f64,
    ftol: f64,
    max_iter: usize,
) -> MinimizeResult {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += initial_step;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| guard(f(v))).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        // order the simplex: best first
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| fvals[i].total_cmp(&fvals[j]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        if (fvals[worst] - fvals[best]).abs() < ftol {
            converged = true;
            break;
        }

        // centroid of all but the worst vertex
        let mut centroid = vec![0.0; n];
        for &idx in order.iter().take(n) {
            for d in 0..n {
                centroid[d] += simplex[idx][d] / n as f64;
            }
        }

        let lerp = |from: &[f64], towards: &[f64], t: f64| -> Vec<f64> {
            from.iter()
                .zip(towards)
                .map(|(a, b)| a + t * (b - a))
                .collect()
        };

        // reflection
        let reflected = lerp(&centroid, &simplex[worst], -1.0);
        let f_reflected = guard(f(&reflected));
        if f_reflected < fvals[best] {
            // expansion
            let expanded = lerp(&centroid, &simplex[worst], -2.0);
            let f_expanded = guard(f(&expanded));
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                fvals[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                fvals[worst] = f_reflected;
            }
            continue;
        }
        if f_reflected < fvals[second_worst] {
            simplex[worst] = reflected;
            fvals[worst] = f_reflected;
            continue;
        }
        // contraction (outside if the reflection helped at all, else inside)
        let contracted = if f_reflected < fvals[worst] {
            lerp(&centroid, &reflected, 0.5)
        } else {
            lerp(&centroid, &simplex[worst], 0.5)
        };
        let f_contracted = guard(f(&contracted));
        if f_contracted < fvals[worst].min(f_reflected) {
            simplex[worst] = contracted;
            fvals[worst] = f_contracted;
            continue;
        }
        // shrink towards the best vertex
        let best_point = simplex[best].clone();
        for idx in 0..=n {
            if idx == best {
                continue;
            }
            simplex[idx] = lerp(&best_point, &simplex[idx], 0.5);
            fvals[idx] = guard(f(&simplex[idx]));
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    MinimizeResult {
        x: simplex[best].clone(),
        fval: fvals[best],
        iterations,
        converged,
    }
}

/// Coordinate-wise Newton polish with central differences.
///
/// Each sweep updates every coordinate once using the one-dimensional
/// Newton step `-f' / f''`, backtracking (step halving) whenever the move
/// does not reduce the objective. Stops when a whole sweep moves no
/// coordinate by more than `xtol`. Returns the improved point, its value,
/// and the number of sweeps performed.
pub(crate) fn coordinate_newton_polish<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    h: f64,
    xtol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, f64, usize) {
    let mut x = start.to_vec();
    let mut fx = guard(f(&x));
    let mut sweeps = 0;
    for _ in 0..max_sweeps {
        sweeps += 1;
        let mut largest_move = 0.0_f64;
        for d in 0..x.len() {
            let scale = 1.0 + x[d].abs();
            let hd = h * scale;
            let mut xp = x.clone();
            xp[d] += hd;
            let mut xm = x.clone();
            xm[d] -= hd;
            let fp = guard(f(&xp));
            let fm = guard(f(&xm));
            if !fp.is_finite() || !fm.is_finite() {
                continue;
            }
            let grad = (fp - fm) / (2.0 * hd);
            let curv = (fp - 2.0 * fx + fm) / (hd * hd);
            let mut step = if curv > 0.0 {
                -grad / curv
            } else {
                // fall back to a conservative gradient step away from the
                // non-convex direction
                -grad.signum() * hd
            };
            // backtrack until the move actually improves the objective
            let mut accepted = false;
            for _ in 0..30 {
                if step.abs() < 1e-300 {
                    break;
                }
                let mut trial = x.clone();
                trial[d] += step;
                let ft = guard(f(&trial));
                if ft < fx {
                    x = trial;
                    fx = ft;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if accepted {
                largest_move = largest_move.max(step.abs());
            }
        }
        if largest_move <= xtol {
            break;
        }
    }

    // Final refinement: a few unguarded Newton sweeps. Near the optimum the
    // guarded loop stalls once objective improvements drop below the
    // floating-point comparison floor, so we switch to root-finding on the
    // finite-difference gradient instead, which reaches parameter precision
    // well below that floor. Steps are capped at the probe width and the
    // result is only kept if it did not measurably worsen the objective.
    let mut refined = x.clone();
    for _ in 0..3 {
        for d in 0..refined.len() {
            let hd = h * (1.0 + refined[d].abs());
            let mut xp = refined.clone();
            xp[d] += hd;
            let mut xm = refined.clone();
            xm[d] -= hd;
            let fc = guard(f(&refined));
            let fp = guard(f(&xp));
            let fm = guard(f(&xm));
            if !(fp.is_finite() && fm.is_finite() && fc.is_finite()) {
                continue;
            }
            let grad = (fp - fm) / (2.0 * hd);
            let curv = (fp - 2.0 * fc + fm) / (hd * hd);
            if curv > 0.0 {
                let step = (-grad / curv).clamp(-hd, hd);
                refined[d] += step;
            }
        }
    }
    let f_refined = guard(f(&refined));
    if f_refined <= fx + 1e-12 * (1.0 + fx.abs()) {
        x = refined;
        fx = f_refined.min(fx);
    }
    (x, fx, sweeps)
}
