//! Differential evolution (rand/1/bin with dithered scale) on the unit box.
//! Used to find the right basin when the line-position loss has several
//! nearly degenerate minima.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Population size per dimension.
    pub population_factor: usize,
    pub generations: usize,
    pub crossover: f64,
    /// Mutation scale is drawn uniformly from this range every generation.
    pub scale: (f64, f64),
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            population_factor: 10,
            generations: 200,
            crossover: 0.9,
            scale: (0.5, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolveResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

/// Minimise `f` over `[0, 1]^n`. `seed_point`, when given, joins the
/// initial population; the rest is uniform.
pub fn evolve<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    n: usize,
    seed_point: Option<&[f64]>,
    opts: &EvolveOptions,
    rng: &mut ChaCha8Rng,
) -> EvolveResult {
    let np = (opts.population_factor * n).max(5);
    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(np);
    if let Some(p) = seed_point {
        pop.push(p.iter().map(|v| v.clamp(0.0, 1.0)).collect());
    }
    while pop.len() < np {
        pop.push((0..n).map(|_| rng.random::<f64>()).collect());
    }
    let mut score = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut fit: Vec<f64> = pop.iter().map(|x| score(x)).collect();
    let mut evals = np;

    for _ in 0..opts.generations {
        let scale = rng.random_range(opts.scale.0..=opts.scale.1);
        for i in 0..np {
            let mut pick = |taken: &[usize]| loop {
                let k = rng.random_range(0..np);
                if k != i && !taken.contains(&k) {
                    break k;
                }
            };
            let a = pick(&[]);
            let b = pick(&[a]);
            let c = pick(&[a, b]);
            let forced = rng.random_range(0..n);
            let trial: Vec<f64> = (0..n)
                .map(|j| {
                    if j == forced || rng.random::<f64>() < opts.crossover {
                        (pop[a][j] + scale * (pop[b][j] - pop[c][j])).clamp(0.0, 1.0)
                    } else {
                        pop[i][j]
                    }
                })
                .collect();
            let ft = score(&trial);
            evals += 1;
            if ft <= fit[i] {
                pop[i] = trial;
                fit[i] = ft;
            }
        }
    }
    let best = (0..np)
        .min_by(|&a, &b| fit[a].total_cmp(&fit[b]))
        .expect("non-empty population");
    EvolveResult {
        x: pop.swap_remove(best),
        f: fit[best],
        evals,
    }
}
