//! Nelder–Mead on the unit box. Trial points are clamped onto the box, so
//! callers map their parameters to `[0, 1]` first.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Relative spread of vertex values that counts as converged.
    pub ftol: f64,
    /// Absolute floor for the spread (objective units).
    pub fabs: f64,
    /// Largest vertex distance from the best vertex that counts as converged.
    pub xtol: f64,
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_evals: 20_000,
            ftol: 1e-10,
            fabs: 1e-24,
            xtol: 1e-9,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// Best value after every iteration.
    pub history: Vec<f64>,
}

fn clamp(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

fn initial_simplex(x0: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut s = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] = if v[i] + step <= 1.0 {
            v[i] + step
        } else {
            v[i] - step
        };
        s.push(v);
    }
    s
}

/// Minimise `f` from `x0`. After the simplex collapses it is rebuilt around
/// the best point once; the run ends when that no longer helps.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &SimplexOptions,
) -> SimplexResult {
    let n = x0.len();
    let mut x0 = x0.to_vec();
    clamp(&mut x0);
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut history = Vec::new();
    let mut best_x = x0.clone();
    let mut best_f = eval(&x0, &mut evals);
    let mut step = opts.initial_step;
    let mut converged = false;

    'outer: while evals < opts.max_evals {
        let mut pts = initial_simplex(&best_x, step);
        let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();
        loop {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            pts = order.iter().map(|&i| pts[i].clone()).collect();
            vals = order.iter().map(|&i| vals[i]).collect();
            history.push(vals[0].min(best_f));

            let spread = vals[n] - vals[0];
            let diameter = pts[1..]
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&pts[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread <= opts.ftol * vals[0].abs() + opts.fabs && diameter <= opts.xtol {
                let improved = vals[0] < best_f - opts.ftol * best_f.abs() - opts.fabs;
                if vals[0] <= best_f {
                    best_f = vals[0];
                    best_x = pts[0].clone();
                }
                if !improved {
                    converged = true;
                    break 'outer;
                }
                step = (step * 0.5).max(1e-4);
                continue 'outer;
            }
            if evals >= opts.max_evals {
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| {
                let mut p: Vec<f64> = (0..n)
                    .map(|j| centroid[j] + t * (pts[n][j] - centroid[j]))
                    .collect();
                clamp(&mut p);
                p
            };
            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < vals[0] {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    pts[n] = xe;
                    vals[n] = fe;
                } else {
                    pts[n] = xr;
                    vals[n] = fr;
                }
            } else if fr < vals[n - 1] {
                pts[n] = xr;
                vals[n] = fr;
            } else {
                let (xc, fc) = if fr < vals[n] {
                    let xc = along(-0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < vals[n].min(fr) {
                    pts[n] = xc;
                    vals[n] = fc;
                } else {
                    for i in 1..=n {
                        let p: Vec<f64> = (0..n)
                            .map(|j| pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]))
                            .collect();
                        vals[i] = eval(&p, &mut evals);
                        pts[i] = p;
                    }
                }
            }
        }
        // budget exhausted inside the inner loop
        let i = (0..=n)
            .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
            .unwrap();
        if vals[i] < best_f {
            best_f = vals[i];
            best_x = pts[i].clone();
        }
        break;
    }

    if history.last().is_none_or(|&h| best_f < h) {
        history.push(best_f);
    }
    SimplexResult {
        x: best_x,
        f: best_f,
        evals,
        converged,
        history,
    }
}
