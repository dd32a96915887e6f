//! Least-squares estimation of model parameters from measured line positions.

pub mod evolve;
pub mod params;
pub mod report;
pub mod simplex;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::PairSiteModel;
use crate::parallel;
use crate::spectrum::{levels, lines_from_levels, TransitionLine};
use crate::tensor::Vector3;
use evolve::{evolve, EvolveOptions};
pub use params::{parse_keys, Ion, ParamKey};
pub use report::{fit_quality_report, QualityReport};
use simplex::{minimize, SimplexOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// T along the fit axis.
    pub field: f64,
    /// GHz
    pub frequency: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn unit_weight() -> f64 {
    1.0
}

fn default_generations() -> usize {
    200
}

impl Peak {
    pub fn new(field: f64, frequency: f64) -> Self {
        Peak {
            field,
            frequency,
            weight: 1.0,
            label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParameter {
    pub key: ParamKey,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub initial: PairSiteModel,
    pub free: Vec<FreeParameter>,
    /// Direction of the field for every peak.
    pub axis: Vector3,
    /// Association rejection threshold (GHz); residuals beyond it cost a
    /// constant.
    pub threshold: f64,
    /// Lines fainter than this are not candidates for association.
    pub min_intensity: f64,
    /// Differential-evolution searches run alongside the simplex start
    /// from the initial model; seeds are `seed`, `seed + 1`, ...
    pub restarts: usize,
    pub seed: u64,
    /// Objective evaluations per simplex stage.
    pub max_evals: usize,
    /// Generations of each differential-evolution search.
    #[serde(default = "default_generations")]
    pub generations: usize,
}

impl FitSpec {
    /// Free parameters with default bounds around the initial values.
    pub fn new(initial: PairSiteModel, keys: &[ParamKey]) -> Result<Self> {
        let free = keys
            .iter()
            .map(|k| {
                let v = k.get(&initial)?;
                let (lower, upper) = k.default_bounds(v);
                Ok(FreeParameter {
                    key: *k,
                    lower,
                    upper,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FitSpec {
            initial,
            free,
            axis: Vector3::Z,
            threshold: 5.0,
            min_intensity: 1e-3,
            restarts: 3,
            seed: 0,
            max_evals: 20_000,
            generations: default_generations(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::InvalidFitSpec("no free parameters".into()));
        }
        if self.axis.normalized().is_none() {
            return Err(Error::InvalidFitSpec("zero field axis".into()));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(Error::InvalidFitSpec("threshold must be positive".into()));
        }
        for (i, p) in self.free.iter().enumerate() {
            if self.free[..i].iter().any(|q| q.key == p.key) {
                return Err(Error::InvalidFitSpec(format!("{} listed twice", p.key)));
            }
            let v = p.key.get(&self.initial)?;
            if p.lower.is_nan()
                || p.upper.is_nan()
                || p.lower >= p.upper
                || v < p.lower
                || v > p.upper
            {
                return Err(Error::InvalidFitSpec(format!(
                    "{}: bounds [{}, {}] must contain the initial value {}",
                    p.key, p.lower, p.upper, v
                )));
            }
        }
        self.initial.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedLine {
    pub frequency: f64,
    pub intensity: f64,
    pub initial_index: usize,
    pub final_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub peak: usize,
    /// Nearest candidate line, present even when it was rejected.
    pub line: Option<MatchedLine>,
    /// Model minus measured frequency (GHz).
    pub residual: Option<f64>,
    pub matched: bool,
}

/// Match each peak to the nearest sufficiently bright line at its field;
/// exact distance ties go to the brighter line.
pub fn associate<'a>(
    peaks: &[Peak],
    lines_at: impl Fn(usize) -> &'a [TransitionLine],
    threshold: f64,
    min_intensity: f64,
) -> Vec<Association> {
    peaks
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best: Option<&TransitionLine> = None;
            for l in lines_at(i).iter().filter(|l| l.intensity >= min_intensity) {
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (dl, db) = (
                            (l.frequency - p.frequency).abs(),
                            (b.frequency - p.frequency).abs(),
                        );
                        dl < db || (dl == db && l.intensity > b.intensity)
                    }
                };
                if better {
                    best = Some(l);
                }
            }
            match best {
                Some(l) => {
                    let r = l.frequency - p.frequency;
                    Association {
                        peak: i,
                        line: Some(MatchedLine {
                            frequency: l.frequency,
                            intensity: l.intensity,
                            initial_index: l.initial_index,
                            final_index: l.final_index,
                        }),
                        residual: Some(r),
                        matched: r.abs() <= threshold,
                    }
                }
                None => Association {
                    peak: i,
                    line: None,
                    residual: None,
                    matched: false,
                },
            }
        })
        .collect()
}

/// Simulated lines at each distinct peak field.
struct FieldTable {
    fields: Vec<f64>,
    /// Index into `fields` for each peak.
    peak_field: Vec<usize>,
}

impl FieldTable {
    fn new(peaks: &[Peak]) -> Self {
        let mut map: BTreeMap<u64, usize> = BTreeMap::new();
        let mut fields = Vec::new();
        let peak_field = peaks
            .iter()
            .map(|p| {
                *map.entry(p.field.to_bits()).or_insert_with(|| {
                    fields.push(p.field);
                    fields.len() - 1
                })
            })
            .collect();
        FieldTable { fields, peak_field }
    }

    fn simulate(&self, model: &PairSiteModel, dir: Vector3) -> Result<Vec<Vec<TransitionLine>>> {
        self.fields
            .iter()
            .map(|&b| {
                levels(model, dir * b)
                    .map(|lv| lines_from_levels(model, &lv))
                    .map_err(|e| Error::Simulation {
                        field: b,
                        source: Box::new(e),
                    })
            })
            .collect()
    }
}

/// Associate `peaks` with the lines of `model`.
pub fn associate_peaks(
    model: &PairSiteModel,
    peaks: &[Peak],
    axis: Vector3,
    threshold: f64,
    min_intensity: f64,
) -> Result<Vec<Association>> {
    let dir = axis
        .normalized()
        .ok_or_else(|| Error::InvalidFitSpec("zero field axis".into()))?;
    let table = FieldTable::new(peaks);
    let lines = table.simulate(model, dir)?;
    Ok(associate(
        peaks,
        |i| &lines[table.peak_field[i]],
        threshold,
        min_intensity,
    ))
}

struct Objective<'a> {
    spec: &'a FitSpec,
    peaks: Vec<Peak>,
    table: FieldTable,
    dir: Vector3,
}

impl<'a> Objective<'a> {
    fn new(spec: &'a FitSpec, peaks: Vec<Peak>, dir: Vector3) -> Self {
        let table = FieldTable::new(&peaks);
        Objective {
            spec,
            peaks,
            table,
            dir,
        }
    }

    fn model_at(&self, values: &[f64]) -> Result<PairSiteModel> {
        let mut m = self.spec.initial.clone();
        for (p, &v) in self.spec.free.iter().zip(values) {
            p.key.set(&mut m, v)?;
        }
        Ok(m)
    }

    fn to_values(&self, unit: &[f64]) -> Vec<f64> {
        self.spec
            .free
            .iter()
            .zip(unit)
            .map(|(p, u)| p.lower + u * (p.upper - p.lower))
            .collect()
    }

    fn to_unit(&self, values: &[f64]) -> Vec<f64> {
        self.spec
            .free
            .iter()
            .zip(values)
            .map(|(p, v)| (v - p.lower) / (p.upper - p.lower))
            .collect()
    }

    fn residuals(&self, values: &[f64], tau: f64) -> Result<Vec<Option<f64>>> {
        let m = self.model_at(values)?;
        let lines = self.table.simulate(&m, self.dir)?;
        let assoc = associate(
            &self.peaks,
            |i| &lines[self.table.peak_field[i]],
            tau,
            self.spec.min_intensity,
        );
        Ok(assoc
            .iter()
            .map(|a| a.residual.filter(|r| r.abs() <= tau))
            .collect())
    }

    /// `Σ w·min(r², τ²)`.
    fn loss(&self, values: &[f64], tau: f64) -> Result<f64> {
        Ok(self
            .residuals(values, tau)?
            .iter()
            .zip(&self.peaks)
            .map(|(r, p)| p.weight * r.map_or(tau * tau, |r| r * r))
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub key: ParamKey,
    pub value: f64,
    pub initial: f64,
    /// Absent for locked parameters and when the curvature is not usable.
    pub std_error: Option<f64>,
    pub free: bool,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: PairSiteModel,
    pub parameters: Vec<ParameterEstimate>,
    /// Root-mean-square residual over matched peaks (GHz).
    pub rms: f64,
    pub loss: f64,
    pub associations: Vec<Association>,
    pub converged: bool,
    pub evaluations: usize,
    /// Index of the winning start (0 = the initial model).
    pub best_start: usize,
    /// Best objective after every simplex iteration of the winning start.
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn parameter(&self, key: ParamKey) -> Option<&ParameterEstimate> {
        self.parameters.iter().find(|p| p.key == key)
    }
}

/// Threshold stages of the simplex start, as multiples of τ.
const ANNEAL: [f64; 4] = [8.0, 4.0, 2.0, 1.0];

/// Where a start begins its search.
enum Start {
    /// Annealed simplex from this point.
    Local(Vec<f64>),
    /// Differential evolution with this seed.
    Global(u64),
}

struct StartOutcome {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    converged: bool,
    history: Vec<f64>,
}

fn run_start(obj: &Objective, start: Start) -> Result<StartOutcome> {
    let tau = obj.spec.threshold;
    // failing points score as infinite; a failure at the chosen point
    // surfaces from the polish
    let loss_at = |u: &[f64], tau: f64| obj.loss(&obj.to_values(u), tau).unwrap_or(f64::INFINITY);
    let mut evals = 0;
    let mut history = Vec::new();
    let x = match start {
        Start::Local(mut x) => {
            for mult in ANNEAL {
                // loose tolerances: the polish below does the fine work
                let opts = SimplexOptions {
                    max_evals: obj.spec.max_evals,
                    ftol: 1e-7,
                    fabs: 1e-12,
                    xtol: 1e-6,
                    ..Default::default()
                };
                let r = minimize(|u| loss_at(u, tau * mult), &x, &opts);
                evals += r.evals;
                x = r.x;
                if mult == 1.0 {
                    history = r.history;
                }
            }
            x
        }
        Start::Global(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let opts = EvolveOptions {
                generations: obj.spec.generations,
                ..Default::default()
            };
            let r = evolve(
                |u| loss_at(u, tau),
                obj.spec.free.len(),
                None,
                &opts,
                &mut rng,
            );
            evals += r.evals;
            history.push(r.f);
            r.x
        }
    };
    let polished = polish(obj, x, tau)?;
    evals += polished.evals;
    let f = obj.loss(&obj.to_values(&polished.x), tau)?;
    if history.last().is_none_or(|&h| f < h) {
        history.push(f);
    }
    Ok(StartOutcome {
        x: polished.x,
        f,
        evals,
        converged: polished.converged,
        history,
    })
}

struct Polished {
    x: Vec<f64>,
    evals: usize,
    converged: bool,
}

/// Relative loss improvement below which the polish stops.
const POLISH_FTOL: f64 = 1e-10;
const POLISH_MAX_ITER: usize = 200;

/// Levenberg–Marquardt on the matched residuals, re-associating at every
/// trial point. It follows the long shallow valleys that appear when the
/// lines mostly constrain parameter differences.
fn polish(obj: &Objective, mut x: Vec<f64>, tau: f64) -> Result<Polished> {
    const H: f64 = 1e-7;
    let n = x.len();
    let sqrt_w: Vec<f64> = obj.peaks.iter().map(|p| p.weight.sqrt()).collect();
    let mut evals = 0;
    let eval = |u: &[f64], evals: &mut usize| -> Result<(Vec<Option<f64>>, f64)> {
        *evals += 1;
        let r = obj.residuals(&obj.to_values(u), tau)?;
        let loss = r
            .iter()
            .zip(&obj.peaks)
            .map(|(r, p)| p.weight * r.map_or(tau * tau, |r| r * r))
            .sum();
        Ok((r, loss))
    };
    let (mut r, mut f) = eval(&x, &mut evals)?;
    let mut lambda = 1e-3;
    for _ in 0..POLISH_MAX_ITER {
        if f == 0.0 {
            return Ok(Polished {
                x,
                evals,
                converged: true,
            });
        }
        // forward-difference Jacobian over the peaks matched at x
        let rows: Vec<usize> = (0..r.len()).filter(|&i| r[i].is_some()).collect();
        let mut jac = DMatrix::<f64>::zeros(rows.len(), n);
        for j in 0..n {
            let mut xp = x.clone();
            let h = if xp[j] + H <= 1.0 { H } else { -H };
            xp[j] += h;
            let (rp, _) = eval(&xp, &mut evals)?;
            for (k, &i) in rows.iter().enumerate() {
                if let (Some(a), Some(b)) = (r[i], rp[i]) {
                    jac[(k, j)] = sqrt_w[i] * (b - a) / h;
                }
            }
        }
        let res = DVector::from_iterator(
            rows.len(),
            rows.iter().map(|&i| sqrt_w[i] * r[i].unwrap_or(0.0)),
        );
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * res;
        let mut gain = None;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x
                .iter()
                .zip(step.iter())
                .map(|(v, s)| (v + s).clamp(0.0, 1.0))
                .collect();
            let (rt, ft) = eval(&trial, &mut evals)?;
            if ft < f {
                gain = Some((f - ft) / f);
                x = trial;
                r = rt;
                f = ft;
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        match gain {
            Some(g) if g >= POLISH_FTOL => {}
            _ => {
                return Ok(Polished {
                    x,
                    evals,
                    converged: true,
                })
            }
        }
    }
    Ok(Polished {
        x,
        evals,
        converged: false,
    })
}

/// Fit the free parameters of `spec` to `peaks`.
pub fn fit_model(spec: &FitSpec, peaks: &[Peak]) -> Result<FitResult> {
    spec.validate()?;
    if peaks.len() < spec.free.len() {
        return Err(Error::UnderDetermined {
            peaks: peaks.len(),
            params: spec.free.len(),
        });
    }
    let dir = spec.axis.normalized().expect("validated");
    let obj = Objective::new(spec, peaks.to_vec(), dir);
    // surface simulation failures before optimising
    let initial_values: Vec<f64> = spec
        .free
        .iter()
        .map(|p| p.key.get(&spec.initial))
        .collect::<Result<_>>()?;
    obj.loss(&initial_values, spec.threshold)?;

    let mut starts = vec![Start::Local(obj.to_unit(&initial_values))];
    starts.extend((0..spec.restarts as u64).map(|k| Start::Global(spec.seed.wrapping_add(k))));

    let outcomes: Vec<Result<StartOutcome>> = parallel::install(|| {
        starts
            .into_par_iter()
            .map(|x0| run_start(&obj, x0))
            .collect()
    });
    let mut best: Option<(usize, StartOutcome)> = None;
    let mut evaluations = 0;
    let mut first_err = None;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => {
                evaluations += o.evals;
                log::debug!("start {i}: loss {:.6e} after {} evaluations", o.f, o.evals);
                if best.as_ref().is_none_or(|(_, b)| o.f < b.f) {
                    best = Some((i, o));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((best_start, best)) = best else {
        return Err(first_err.expect("at least one start"));
    };

    let values = obj.to_values(&best.x);
    let model = obj.model_at(&values)?;
    let associations = associate_peaks(&model, peaks, dir, spec.threshold, spec.min_intensity)?;
    let matched: Vec<f64> = associations
        .iter()
        .filter(|a| a.matched)
        .filter_map(|a| a.residual)
        .collect();
    let rms = if matched.is_empty() {
        0.0
    } else {
        (matched.iter().map(|r| r * r).sum::<f64>() / matched.len() as f64).sqrt()
    };

    let errors = standard_errors(&obj, &best.x);
    let mut parameters = Vec::new();
    for key in ParamKey::all_for(&spec.initial) {
        if spec.free.iter().any(|p| p.key == key) {
            continue;
        }
        let v = key.get(&model)?;
        parameters.push(ParameterEstimate {
            key,
            value: v,
            initial: v,
            std_error: None,
            free: false,
            unit: key.unit().into(),
        });
    }
    for (i, p) in spec.free.iter().enumerate() {
        parameters.push(ParameterEstimate {
            key: p.key,
            value: values[i],
            initial: initial_values[i],
            std_error: errors.as_ref().and_then(|e| e[i]),
            free: true,
            unit: p.key.unit().into(),
        });
    }

    Ok(FitResult {
        model,
        parameters,
        rms,
        loss: best.f,
        associations,
        converged: best.converged,
        evaluations,
        best_start,
        history: best.history,
    })
}

/// `cov = 2 s² H⁻¹` with `s² = L/(N − p)` over the matched peaks. The
/// loss Hessian is taken in its Gauss–Newton form `H = 2 JᵀJ`, with `J` the
/// forward-difference Jacobian of the weighted residuals; second differences
/// of the loss itself are spoiled by association switches between close
/// lines.
fn standard_errors(obj: &Objective, unit: &[f64]) -> Option<Vec<Option<f64>>> {
    const H: f64 = 1e-7;
    let tau = obj.spec.threshold;
    let p = unit.len();
    let values = obj.to_values(unit);
    let r0 = obj.residuals(&values, tau).ok()?;
    let rows: Vec<usize> = (0..r0.len()).filter(|&i| r0[i].is_some()).collect();
    if rows.len() <= p {
        return None;
    }
    let sqrt_w: Vec<f64> = obj.peaks.iter().map(|pk| pk.weight.sqrt()).collect();
    let mut jac = DMatrix::<f64>::zeros(rows.len(), p);
    for j in 0..p {
        let mut u = unit.to_vec();
        let h = if u[j] + H <= 1.0 { H } else { -H };
        u[j] += h;
        let width = obj.spec.free[j].upper - obj.spec.free[j].lower;
        let rp = obj.residuals(&obj.to_values(&u), tau).ok()?;
        for (k, &i) in rows.iter().enumerate() {
            let (a, b) = (r0[i]?, rp[i]?);
            jac[(k, j)] = sqrt_w[i] * (b - a) / (h * width);
        }
    }
    let loss: f64 = rows
        .iter()
        .map(|&i| obj.peaks[i].weight * r0[i].unwrap().powi(2))
        .sum();
    let s2 = loss / (rows.len() - p) as f64;
    let inv = (jac.transpose() * jac).try_inverse()?;
    Some(
        (0..p)
            .map(|i| {
                let var = s2 * inv[(i, i)];
                (var.is_finite() && var >= 0.0).then(|| var.sqrt())
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::presets::site_b_ising;
    use crate::spectrum::FinalManifold;

    fn line(frequency: f64, intensity: f64) -> TransitionLine {
        TransitionLine {
            field: Vector3::ZERO,
            frequency,
            intensity,
            initial_index: 0,
            final_index: 0,
            final_manifold: FinalManifold::E10,
        }
    }

    #[test]
    fn association_rules() {
        let lines = [line(-1.0, 0.2), line(1.0, 0.9), line(50.0, 1.0)];
        let peaks = vec![
            Peak::new(0.0, 0.0),
            Peak::new(0.0, 150.0),
            Peak::new(0.0, 49.0),
        ];
        let a = associate(&peaks, |_| &lines[..], 5.0, 1e-3);
        // equidistant: brighter wins
        assert_eq!(a[0].line.unwrap().frequency, 1.0);
        assert!(a[0].matched);
        assert!(!a[1].matched);
        assert_eq!(a[2].residual, Some(1.0));
    }

    #[test]
    fn faint_lines_are_not_candidates() {
        let lines = [line(0.0, 1e-6), line(3.0, 0.5)];
        let a = associate(&[Peak::new(0.0, 0.0)], |_| &lines[..], 5.0, 1e-3);
        assert_eq!(a[0].line.unwrap().frequency, 3.0);
    }

    fn synthetic(model: &PairSiteModel) -> Vec<Peak> {
        let mut peaks = Vec::new();
        for i in 0..10 {
            let b = 0.1 + 0.1 * i as f64;
            let lv = levels(model, Vector3::new(0.0, 0.0, b)).unwrap();
            for l in lines_from_levels(model, &lv)
                .into_iter()
                .filter(|l| l.intensity > 0.5)
            {
                peaks.push(Peak::new(b, l.frequency));
            }
        }
        peaks
    }

    #[test]
    fn self_generated_peaks_match_exactly() {
        let m = site_b_ising();
        let peaks = synthetic(&m);
        let a = associate_peaks(&m, &peaks, Vector3::Z, 5.0, 1e-3).unwrap();
        assert!(a
            .iter()
            .all(|x| x.matched && x.residual.unwrap().abs() < 1e-9));
    }

    #[test]
    fn recovers_single_offset() {
        let truth = site_b_ising();
        let peaks = synthetic(&truth);
        let mut start = truth.clone();
        start.delta = -8.0;
        let mut spec = FitSpec::new(start, &[ParamKey::Delta]).unwrap();
        spec.restarts = 0;
        let r = fit_model(&spec, &peaks).unwrap();
        assert!((r.model.delta + 10.8).abs() < 1e-6, "{}", r.model.delta);
        assert!(r.rms < 1e-6);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn spec_validation() {
        let m = site_b_ising();
        assert!(matches!(
            FitSpec::new(m.clone(), &[]).unwrap().validate(),
            Err(Error::InvalidFitSpec(_))
        ));
        let mut spec = FitSpec::new(m.clone(), &[ParamKey::Delta]).unwrap();
        spec.free[0].lower = 0.0;
        assert!(spec.validate().is_err());
        let spec = FitSpec::new(m, &[ParamKey::Delta, ParamKey::Nu10]).unwrap();
        assert!(matches!(
            fit_model(&spec, &[Peak::new(0.0, 0.0)]),
            Err(Error::UnderDetermined {
                peaks: 1,
                params: 2
            })
        ));
    }
}
