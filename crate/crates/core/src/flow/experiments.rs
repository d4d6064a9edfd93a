//! The dynamical experiments: Δ-line blow-up, resonant escape, the
//! rotating-frame comparison and the coupled escape of the A families.

use super::integrator::{Method, Output};
use super::report::{Check, ExperimentReport};
use super::trajectory::{
    integrate, plane_modulus, state_from_xi, Curve, Escape, EscapeMeasure, Frame, IntegrateOptions, Trajectory,
};
use crate::error::{Error, Result};
use crate::eval::{real_to_complex, CompiledSeries};
use crate::frequency::FrequencyVector;
use crate::models::{generator_chi, integrable_part, build_model, saddle_series, ChiOptions, ModelSpec};
use crate::scalar::{Backend, Scalar};
use crate::series::PoissonSeries;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Dop853,
    ImplicitMidpoint,
}

/// Integrator settings shared by all experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSettings {
    pub method: MethodName,
    pub rtol: f64,
    pub atol: f64,
    /// Fixed step of the implicit midpoint rule.
    pub step: f64,
    pub max_steps: usize,
    /// Wall-clock budget per run in seconds, where an experiment checks one.
    pub runtime_budget: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            method: MethodName::Dop853,
            rtol: 1e-10,
            atol: 1e-14,
            step: 1e-3,
            max_steps: 5_000_000,
            runtime_budget: 5.0,
        }
    }
}

impl FlowSettings {
    pub fn tight() -> FlowSettings {
        FlowSettings { rtol: 1e-13, atol: 1e-16, ..Default::default() }
    }

    fn options(&self) -> IntegrateOptions {
        let method = match self.method {
            MethodName::Dop853 => Method::Dop853,
            MethodName::ImplicitMidpoint => Method::ImplicitMidpoint { step: self.step },
        };
        IntegrateOptions { method, rtol: self.rtol, atol: self.atol, max_steps: self.max_steps, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol >= 0.0 && self.step > 0.0) {
            return Err(Error::Integration("tolerances and step must be positive".into()));
        }
        Ok(())
    }
}

/// An experiment's report together with the data behind it.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub report: ExperimentReport,
    pub trajectories: Vec<(String, Trajectory)>,
    pub curves: Vec<(String, Curve)>,
}

/// Closed forms for the flow of F_{k,l} on Δ: ṙ = c r^α with c = k u^l, u = √(l/k), α = k+l−1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaClosedForm {
    pub k: u32,
    pub l: u32,
    pub u: f64,
    pub alpha: f64,
    pub rate: f64,
    pub r0: f64,
}

impl DeltaClosedForm {
    pub fn new(k: u32, l: u32, r0: f64) -> Result<DeltaClosedForm> {
        if k == 0 || l == 0 || k + l <= 2 {
            return Err(Error::Model(format!("Δ-line needs k, l >= 1 and k + l > 2, got ({k},{l})")));
        }
        let u = (l as f64 / k as f64).sqrt();
        Ok(DeltaClosedForm { k, l, u, alpha: (k + l - 1) as f64, rate: k as f64 * u.powi(l as i32), r0 })
    }

    /// r(t) from r^{α−1} = 1/(r0^{1−α} − (α−1) c t).
    pub fn radius(&self, t: f64) -> f64 {
        let p = self.alpha - 1.0;
        (1.0 / (self.r0.powf(-p) - p * self.rate * t)).powf(1.0 / p)
    }

    pub fn blowup_time(&self) -> f64 {
        let p = self.alpha - 1.0;
        self.r0.powf(-p) / (p * self.rate)
    }

    pub fn escape_time(&self, radius: f64) -> f64 {
        let p = self.alpha - 1.0;
        (self.r0.powf(-p) - radius.powf(-p)) / (p * self.rate)
    }
}

/// Phases ν = ν′ with kν + lν′ = 3/4 (growth for positive coupling) or 1/4 (negative coupling).
pub fn delta_phase(k: u32, l: u32, positive: bool) -> f64 {
    let target = if positive { 0.75 } else { 0.25 };
    target / (k + l) as f64
}

/// Real state of the Δ point with parameter r in pairs (0, 1) of a d-dof system; other pairs zero.
pub fn delta_point(k: u32, l: u32, r: f64, d: usize, positive: bool) -> Vec<f64> {
    let nu = delta_phase(k, l, positive);
    let u = (l as f64 / k as f64).sqrt();
    let (s, c) = (2.0 * PI * nu).sin_cos();
    let mut xi = vec![(0.0, 0.0); d];
    xi[0] = (r * c, r * s);
    xi[1] = (u * r * c, u * r * s);
    state_from_xi(&xi)
}

fn xi_of(z: &[f64], p: usize) -> Complex64 {
    Complex64::new(z[2 * p], z[2 * p + 1]) * FRAC_1_SQRT_2
}

/// |(ξ₁,ξ₂) − r̂(e, u e′)| / |r̂| with r̂ the orthogonal projection on the Δ direction.
fn transverse_deviation(z: &[f64], k: u32, l: u32, positive: bool) -> f64 {
    let nu = delta_phase(k, l, positive);
    let u = (l as f64 / k as f64).sqrt();
    let e = Complex64::from_polar(1.0, 2.0 * PI * nu);
    let (x1, x2) = (xi_of(z, 0), xi_of(z, 1));
    let r = (x1 * e.conj() + x2 * (e * u).conj()).re / (1.0 + u * u);
    let dev = ((x1 - e * r).norm_sqr() + (x2 - e * u * r).norm_sqr()).sqrt();
    dev / r.abs()
}

const FLOAT: Backend = Backend::Float(128);

pub fn delta_experiment(k: u32, l: u32, n: usize, settings: &FlowSettings) -> Result<Experiment> {
    settings.validate()?;
    if n == 0 {
        return Err(Error::Model("n must be >= 1".into()));
    }
    let started = Instant::now();
    let cf = DeltaClosedForm::new(k, l, 1.0 / (2 * n) as f64)?;
    let radius = (2 * n + 1) as f64;
    let h = saddle_series(2, (k + l) as usize, k, l, &Scalar::one(FLOAT))?;
    let z0 = delta_point(k, l, cf.r0, 2, true);
    let mut opts = settings.options();
    opts.escape = Some(Escape { radius, measure: EscapeMeasure::Plane { pair: 0 } });
    let tr = integrate(&h, &z0, (0.0, cf.blowup_time()), &opts)?.with_model(&format!("bare-saddle({k},{l})"));
    let runtime = started.elapsed().as_secs_f64();

    let transverse = tr.states.iter().map(|z| transverse_deviation(z, k, l, true)).fold(0.0, f64::max);
    let escape = tr.escape_time.unwrap_or(f64::NAN);
    let bound = ((2 * n) as f64).powi((k + l - 2) as i32);
    let mut rep = ExperimentReport::new("delta");
    rep.input("k", k).input("l", l).input("n", n).input("flow", settings);
    rep.input("nu", delta_phase(k, l, true)).input("r0", cf.r0).input("escape_radius", radius);
    rep.predict("escape_time", cf.escape_time(radius))
        .predict("blowup_time", cf.blowup_time())
        .predict("time_bound", bound)
        .predict("u", cf.u)
        .predict("rate", cf.rate)
        .predict("alpha", cf.alpha);
    rep.measure("escape_time", escape).measure("max_transverse", transverse);
    rep.timing("runtime_s", runtime);
    rep.criterion("escaped", Check::flag(tr.escape_time.is_some(), true));
    rep.criterion("escape_time", Check::relative(escape, cf.escape_time(radius), 1e-6));
    rep.criterion("time_bound", Check::at_most(escape, bound));
    rep.criterion("transverse", Check::at_most(transverse, 1e-8));
    // Only the verdict is stored: wall-clock numbers would make reports nondeterministic.
    rep.criterion("runtime", Check::flag(runtime <= settings.runtime_budget, true));
    let curve = Curve {
        columns: vec!["t".into(), "r_measured".into(), "r_closed_form".into()],
        rows: tr.times.iter().zip(&tr.states).map(|(&t, z)| vec![t, plane_modulus(z, 0), cf.radius(t)]).collect(),
    };
    Ok(Experiment { report: rep, trajectories: vec![("trajectory".into(), tr)], curves: vec![("radius".into(), curve)] })
}

fn require_relation(omega: &FrequencyVector, k: u32, l: u32) -> Result<()> {
    if omega.dof() != 2 {
        return Err(Error::Dimension { expected: 2, got: omega.dof() });
    }
    let m = [k as i64, l as i64];
    if !omega.in_lattice(&m) {
        return Err(Error::Lattice(format!("({k},{l}) is not in the declared resonance lattice")));
    }
    if !omega.pairing(&m).is_zero() && omega.backend() == Backend::Exact {
        return Err(Error::Lattice(format!("kω₁ + lω₂ ≠ 0 for ({k},{l})")));
    }
    Ok(())
}

fn omega_f64(omega: &FrequencyVector) -> Vec<f64> {
    omega.values().iter().map(|w| w.re_f64()).collect()
}

pub fn resonant_escape(omega: &FrequencyVector, k: u32, l: u32, a: f64, n: usize, settings: &FlowSettings) -> Result<Experiment> {
    settings.validate()?;
    require_relation(omega, k, l)?;
    if a == 0.0 || !a.is_finite() {
        return Err(Error::Model("coupling a must be finite and nonzero".into()));
    }
    if n == 0 {
        return Err(Error::Model("n must be >= 1".into()));
    }
    let b = omega.backend();
    let order = (k + l) as usize;
    let cf = DeltaClosedForm::new(k, l, 1.0 / (2 * n) as f64)?;
    let radius = (2 * n + 1) as f64;
    let predicted = cf.escape_time(radius) / a.abs();
    let coupling = saddle_series(2, order, k, l, &Scalar::from_f64(a, b))?;
    let h = PoissonSeries::quadratic(omega.values(), order).add(&coupling)?;
    let z0 = delta_point(k, l, cf.r0, 2, a > 0.0);
    let mut opts = settings.options();
    opts.escape = Some(Escape { radius, measure: EscapeMeasure::Plane { pair: 0 } });
    let tr = integrate(&h, &z0, (0.0, cf.blowup_time() / a.abs()), &opts)?.with_model("resonant-2dof");
    let escape = tr.escape_time.unwrap_or(f64::NAN);

    // Norm identity on a common grid before escape.
    let horizon = 0.999 * escape.min(predicted);
    let grid: Vec<f64> = (1..=400).map(|i| horizon * i as f64 / 400.0).collect();
    let mut gopts = settings.options();
    gopts.output = Output::Times(grid.clone());
    let full = integrate(&h, &z0, (0.0, horizon), &gopts)?;
    let bare = integrate(&coupling, &z0, (0.0, horizon), &gopts)?;
    let norm = |z: &[f64]| z.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for (p, q) in full.states.iter().zip(&bare.states) {
        worst = worst.max((norm(p) - norm(q)).abs() / norm(q));
    }
    let same_grid = full.times == bare.times && full.times.len() == grid.len() + 1;

    let mut rep = ExperimentReport::new("resonant-escape");
    rep.input("omega", omega.to_strings()).input("k", k).input("l", l).input("a", a).input("n", n).input("flow", settings);
    rep.predict("escape_time", predicted).predict("unit_escape_time", cf.escape_time(radius));
    rep.measure("escape_time", escape).measure("norm_identity_max_rel", worst);
    rep.criterion("escaped", Check::flag(tr.escape_time.is_some(), true));
    rep.criterion("escape_time", Check::relative(escape, predicted, 1e-4));
    rep.criterion("norm_grid_complete", Check::flag(same_grid, true));
    rep.criterion("norm_identity", Check::at_most(worst, 1e-6));
    let curve = Curve {
        columns: vec!["t".into(), "norm_full".into(), "norm_coupling_only".into()],
        rows: full.times.iter().zip(full.states.iter().zip(&bare.states)).map(|(&t, (p, q))| vec![t, norm(p), norm(q)]).collect(),
    };
    Ok(Experiment { report: rep, trajectories: vec![("trajectory".into(), tr)], curves: vec![("norms".into(), curve)] })
}

/// Sup norms of all real partial derivatives up to a given order.
pub struct DerivativeNorms {
    d: usize,
    value: CompiledSeries,
    first: Vec<CompiledSeries>,
    second: Vec<Vec<CompiledSeries>>,
}

impl DerivativeNorms {
    /// Complex partials ∂_s with s ∈ {ξ_1..ξ_d, η_1..η_d}.
    pub fn new(f: &PoissonSeries) -> DerivativeNorms {
        let d = f.dof();
        let part = |s: &PoissonSeries, i: usize| if i < d { s.d_xi(i) } else { s.d_eta(i - d) };
        let first_series: Vec<PoissonSeries> = (0..2 * d).map(|i| part(f, i)).collect();
        let second = first_series.iter().map(|g| (0..2 * d).map(|j| CompiledSeries::new(&part(g, j))).collect()).collect();
        DerivativeNorms {
            d,
            value: CompiledSeries::new(f),
            first: first_series.iter().map(CompiledSeries::new).collect(),
            second,
        }
    }

    // Real derivative ∂_{x_j} = (∂_ξ + ∂_η)/√2, ∂_{y_j} = i(∂_ξ − ∂_η)/√2 as weights on (ξ_j, η_j).
    fn weights(&self, a: usize) -> [(usize, Complex64); 2] {
        let j = a / 2;
        let s = FRAC_1_SQRT_2;
        if a % 2 == 0 {
            [(j, Complex64::new(s, 0.0)), (self.d + j, Complex64::new(s, 0.0))]
        } else {
            [(j, Complex64::new(0.0, s)), (self.d + j, Complex64::new(0.0, -s))]
        }
    }

    /// (|f|, max |∂f|, max |∂²f|) at a real point.
    pub fn at(&self, z: &[f64]) -> (f64, f64, f64) {
        let v = real_to_complex(z);
        let f0 = self.value.eval(&v).norm();
        let c1: Vec<Complex64> = self.first.iter().map(|s| s.eval(&v)).collect();
        let c2: Vec<Vec<Complex64>> = self.second.iter().map(|row| row.iter().map(|s| s.eval(&v)).collect()).collect();
        let n = 2 * self.d;
        let mut g1: f64 = 0.0;
        let mut g2: f64 = 0.0;
        for a in 0..n {
            let wa = self.weights(a);
            let da: Complex64 = wa.iter().map(|&(i, w)| w * c1[i]).sum();
            g1 = g1.max(da.norm());
            for b in 0..n {
                let wb = self.weights(b);
                let mut dab = Complex64::new(0.0, 0.0);
                for &(i, wi) in &wa {
                    for &(j, wj) in &wb {
                        dab += wi * wj * c2[i][j];
                    }
                }
                g2 = g2.max(dab.norm());
            }
        }
        (f0, g1, g2)
    }
}

/// Radical-inverse (Halton) points in the ball of the given radius.
pub fn halton_ball(dim: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let radical = |mut i: u64, b: u64| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= b as f64;
            r += f * (i % b) as f64;
            i /= b;
        }
        r
    };
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let p: Vec<f64> = (0..dim).map(|k| 2.0 * radical(i, PRIMES[k % PRIMES.len()]) - 1.0).collect();
        if p.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            out.push(p.into_iter().map(|x| x * radius).collect());
        }
        i += 1;
    }
    out
}

/// Solution x of x eˣ = y for y ≥ 0.
pub fn lambert_w(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let mut x = if y < 1.0 { y } else { y.ln() - y.ln().ln().max(0.0) };
    for _ in 0..100 {
        let ex = x.exp();
        let step = (x * ex - y) / (ex * (x + 1.0));
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1e-300) {
            break;
        }
    }
    x
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareOptions {
    /// Coupling a in H = H_ω + aF and h = H + a²G.
    pub a: f64,
    /// Both flows must stay in the ball of radius R + 1.
    pub ball_radius: f64,
    /// Constant C of the reported bound C a²AT e^{CaAT}, if any.
    pub bound_constant: Option<f64>,
    pub samples: usize,
    pub norm_points: usize,
    pub flow: FlowSettings,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            a: 1e-3,
            ball_radius: 1.0,
            bound_constant: None,
            samples: 400,
            norm_points: 2000,
            flow: FlowSettings { rtol: 1e-13, atol: 1e-16, ..Default::default() },
        }
    }
}

/// Flows of H = H_ω + aF and h = H + a²G compared in the frame rotating with ω.
pub fn rotating_frame_compare(
    big_h: &PoissonSeries,
    small_h: &PoissonSeries,
    omega: &FrequencyVector,
    z0: &[f64],
    horizon: f64,
    opts: &CompareOptions,
) -> Result<Experiment> {
    opts.flow.validate()?;
    if !(opts.a > 0.0) || !(horizon > 0.0) || opts.samples == 0 {
        return Err(Error::Model("a, T and the sample count must be positive".into()));
    }
    let d = big_h.dof();
    if small_h.dof() != d || omega.dof() != d {
        return Err(Error::Dimension { expected: d, got: small_h.dof().min(omega.dof()) });
    }
    let b = big_h.backend();
    let order = big_h.order().max(small_h.order());
    let a = Scalar::from_f64(opts.a, b);
    let af = big_h.sub(&PoissonSeries::quadratic(omega.values(), order))?;
    let f = af.scale(&a.inv()?)?;
    let g = small_h.sub(big_h)?.scale(&(&a * &a).inv()?)?;

    let w = omega_f64(omega);
    let grid: Vec<f64> = (1..=opts.samples).map(|i| horizon * i as f64 / opts.samples as f64).collect();
    let mut io = opts.flow.options();
    io.frame = Frame::Rotating(w);
    io.output = Output::Times(grid);
    io.escape = Some(Escape { radius: opts.ball_radius + 1.0, measure: EscapeMeasure::Euclidean });
    let run_big = integrate(big_h, z0, (0.0, horizon), &io)?.with_model("H");
    let run_small = integrate(small_h, z0, (0.0, horizon), &io)?.with_model("h");
    let complete = run_big.escape_time.is_none()
        && run_small.escape_time.is_none()
        && run_big.blow_up.is_none()
        && run_small.blow_up.is_none()
        && run_big.times.len() == opts.samples + 1
        && run_small.times.len() == opts.samples + 1;
    let m = run_big.times.len().min(run_small.times.len());

    // A = max(‖F‖_{C²}, ‖G‖_{C¹}) on B_{R+1}, sampled.
    let fn_norms = DerivativeNorms::new(&f);
    let gn_norms = DerivativeNorms::new(&g);
    let mut points = halton_ball(2 * d, opts.ball_radius + 1.0, opts.norm_points);
    points.extend(run_big.states.iter().cloned());
    points.extend(run_small.states.iter().cloned());
    let (mut f_c2, mut g_c1): (f64, f64) = (0.0, 0.0);
    for p in &points {
        let (f0, f1, f2) = fn_norms.at(p);
        let (g0, g1, _) = gn_norms.at(p);
        f_c2 = f_c2.max(f0).max(f1).max(f2);
        g_c1 = g_c1.max(g0).max(g1);
    }
    let big_a = f_c2.max(g_c1);

    let dist = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut sup: f64 = 0.0;
    let mut c_star: f64 = 0.0;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let s = run_big.times[i];
        let dev = dist(&run_big.states[i], &run_small.states[i]);
        sup = sup.max(dev);
        if s > 0.0 && dev > 0.0 {
            // C a² A s e^{C a A s} = dev  ⇔  x eˣ = dev/a with x = C a A s.
            c_star = c_star.max(lambert_w(dev / opts.a) / (opts.a * big_a * s));
        }
        rows.push((s, dev));
    }
    let bound = |c: f64, s: f64| c * opts.a * opts.a * big_a * s * (c * opts.a * big_a * s).exp();
    let mut rep = ExperimentReport::new("rotating-frame-compare");
    rep.input("a", opts.a).input("T", horizon).input("ball_radius", opts.ball_radius).input("z0", z0).input("flow", &opts.flow);
    rep.measure("sup_deviation", sup).measure("A", big_a).measure("F_C2", f_c2).measure("G_C1", g_c1).measure("c_star", c_star);
    rep.predict("bound_fitted", bound(c_star, horizon));
    rep.criterion("within_ball", Check::flag(complete, true));
    rep.criterion("fitted_bound", Check::at_most(sup, bound(c_star, horizon) * (1.0 + 1e-9)));
    if let Some(c) = opts.bound_constant {
        rep.input("bound_constant", c).predict("bound_configured", bound(c, horizon));
        rep.criterion("configured_bound", Check::at_most(sup, bound(c, horizon)));
    }
    let curve = Curve {
        columns: vec!["t".into(), "deviation".into(), "bound_fitted".into()],
        rows: rows.iter().map(|&(s, dev)| vec![s, dev, bound(c_star, s)]).collect(),
    };
    Ok(Experiment {
        report: rep,
        trajectories: vec![("H".into(), run_big), ("h".into(), run_small)],
        curves: vec![("deviation".into(), curve)],
    })
}

/// Runs the comparison for several couplings and fits the log-log slope of sup|ξ| against a.
pub fn gronwall_scaling(
    f: &PoissonSeries,
    g: &PoissonSeries,
    omega: &FrequencyVector,
    z0: &[f64],
    horizon: f64,
    couplings: &[f64],
    opts: &CompareOptions,
) -> Result<(Experiment, Vec<Experiment>)> {
    if couplings.len() < 2 {
        return Err(Error::Model("slope fit needs at least two couplings".into()));
    }
    let b = f.backend();
    let order = f.order().max(g.order());
    let mut runs = Vec::new();
    for &a in couplings {
        let sa = Scalar::from_f64(a, b);
        let big_h = PoissonSeries::quadratic(omega.values(), order).add(&f.scale(&sa)?)?;
        let small_h = big_h.add(&g.scale(&(&sa * &sa))?)?;
        let o = CompareOptions { a, ..opts.clone() };
        runs.push(rotating_frame_compare(&big_h, &small_h, omega, z0, horizon, &o)?);
    }
    let xs: Vec<f64> = couplings.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = runs.iter().map(|r| r.report.measured("sup_deviation").unwrap_or(f64::NAN).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let c_max = runs.iter().map(|r| r.report.measured("c_star").unwrap_or(f64::NAN)).fold(0.0, f64::max);

    let mut rep = ExperimentReport::new("gronwall-scaling");
    rep.input("couplings", couplings).input("T", horizon).input("z0", z0);
    rep.predict("slope", 2.0);
    rep.measure("slope", slope).measure("c_star_max", c_max);
    rep.criterion("slope", Check::at_most((slope - 2.0).abs(), 0.1));
    for (i, r) in runs.iter().enumerate() {
        let a = couplings[i];
        let big_a = r.report.measured("A").unwrap_or(f64::NAN);
        let bound = c_max * a * a * big_a * horizon * (c_max * a * big_a * horizon).exp();
        let sup = r.report.measured("sup_deviation").unwrap_or(f64::NAN);
        rep.measure(&format!("sup_deviation_{i}"), sup).predict(&format!("bound_{i}"), bound);
        rep.criterion(&format!("bound_{i}"), Check::at_most(sup, bound * (1.0 + 1e-9)));
        rep.criterion(&format!("within_ball_{i}"), Check::flag(r.report.get("within_ball").map(|c| c.passed) == Some(true), true));
    }
    Ok((Experiment { report: rep, trajectories: Vec::new(), curves: Vec::new() }, runs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupledOptions {
    /// Phase of (x₃, y₃) on the circle I₃ = 𝐈.
    pub phase: f64,
    /// The control run is integrated for this multiple of the prediction.
    pub control_factor: f64,
    pub flow: FlowSettings,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions { phase: 0.0, control_factor: 10.0, flow: FlowSettings::default() }
    }
}

/// Checks the orderings the coupled mechanism relies on; fails before any integration.
pub fn validate_scale_profile(spec: &ModelSpec, position: usize) -> Result<()> {
    let p = &spec.sequence.profile;
    p.validate()?;
    let level = p.action_level;
    let e = spec.entry(position)?;
    let a = e.a.abs_f64();
    let gap = e.gap.abs_f64();
    if gap > (level * a).powi(2) {
        return Err(Error::Profile(format!(
            "|kω₁+lω₂| = {gap:e} exceeds (𝐈a_n)² = {:e}; the detuning would act before the escape",
            (level * a).powi(2)
        )));
    }
    let chi: f64 = spec.sequence.entries[..position].iter().map(|e| e.b.as_ref().map_or(f64::INFINITY, |b| b.abs_f64())).sum();
    if level * chi > level.powf(p.chi_exponent) {
        return Err(Error::Profile(format!(
            "𝐈Σ|b_j| = {:e} exceeds 𝐈^{} = {:e}",
            level * chi,
            p.chi_exponent,
            level.powf(p.chi_exponent)
        )));
    }
    let tail: f64 = spec.sequence.entries[position + 1..spec.terms.max(position + 1)].iter().map(|e| e.a.abs_f64()).sum();
    if tail > level {
        return Err(Error::Profile(format!("later couplings sum to {tail:e}, above 𝐈 = {level:e}")));
    }
    Ok(())
}

pub fn coupled_escape(spec: &ModelSpec, position: usize, opts: &CoupledOptions) -> Result<Experiment> {
    opts.flow.validate()?;
    if !spec.family.is_a_family() {
        return Err(Error::Model(format!("coupled_escape needs an A family, got {}", spec.family)));
    }
    spec.validate()?;
    if position >= spec.terms {
        return Err(Error::Model(format!("position {position} is not among the {} active couplings", spec.terms)));
    }
    validate_scale_profile(spec, position)?;
    let profile = &spec.sequence.profile;
    let level = profile.action_level;
    let e = spec.entry(position)?.clone();
    if e.n == 0 {
        return Err(Error::Model("the coupled escape needs sequence index n >= 1 (set first_index)".into()));
    }
    let d = spec.omega().dof();
    let i4 = if d == 4 {
        Some(e.i4.clone().ok_or_else(|| Error::Model("A4 families need the mode-R shift I4".into()))?)
    } else {
        None
    };
    let a_n = e.a.re_f64();
    let cf = DeltaClosedForm::new(e.k, e.l, 1.0 / (2 * e.n) as f64)?;
    let radius = (2 * e.n + 1) as f64;
    let predicted = cf.escape_time(radius) / (level * a_n.abs());

    // w_n: Δ point in the first two pairs, I₃ = 𝐈 at the chosen phase, I₄ = I4_n.
    let mut w = delta_point(e.k, e.l, cf.r0, d, a_n > 0.0);
    let r3 = (2.0 * level).sqrt();
    w[4] = r3 * opts.phase.cos();
    w[5] = r3 * opts.phase.sin();
    if let Some(v) = &i4 {
        w[6] = (2.0 * v.re_f64()).sqrt();
    }
    // z_n = Φ^{-1}_{χ̂}(w_n), with χ̂ the generators of the earlier couplings.
    let chi_opts = ChiOptions { expansion_order: 0, i4: i4.clone() };
    let mut chi_hat = PoissonSeries::zero(d, spec.order, spec.backend());
    for j in 0..position {
        chi_hat = chi_hat.add(&generator_chi(spec, j, spec.order, &chi_opts)?)?;
    }
    let z0 = if chi_hat.is_zero() {
        w.clone()
    } else {
        let back = integrate(&chi_hat.neg(), &w, (0.0, 1.0), &FlowSettings::tight().options())?;
        back.final_state().to_vec()
    };
    let shift = z0.iter().zip(&w).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let start_radius = plane_modulus(&z0, 0).max(plane_modulus(&z0, 1));

    let h = build_model(spec)?;
    let mut io = opts.flow.options();
    io.frame = Frame::Rotating(omega_f64(spec.omega()));
    io.escape = Some(Escape { radius, measure: EscapeMeasure::Plane { pair: 0 } });
    let main = integrate(&h, &z0, (0.0, profile.slack * predicted), &io)?.with_model(&format!("{}", spec.family));
    let control_h = integrable_part(spec)?;
    let control = integrate(&control_h, &z0, (0.0, opts.control_factor * predicted), &io)?.with_model("control");

    let i3_0 = main.actions[0][2];
    let drift_main = main.action_drift(2) / i3_0;
    let drift_control = control.action_drift(2) / control.actions[0][2];
    let measured = main.escape_time.unwrap_or(f64::NAN);
    let ratio = measured / predicted;
    let tol = opts.flow.rtol;

    let mut rep = ExperimentReport::new("coupled-escape");
    rep.input("family", spec.family).input("position", position).input("n", e.n).input("k", e.k).input("l", e.l);
    rep.input("omega", spec.omega().to_strings()).input("profile", profile).input("options", opts);
    rep.input("a_n", a_n).input("gap", e.gap.re_f64());
    rep.predict("escape_time", predicted).predict("unit_escape_time", cf.escape_time(radius));
    rep.measure("escape_time", measured)
        .measure("escape_ratio", ratio)
        .measure("i3_drift_rel", drift_main)
        .measure("control_i3_drift_rel", drift_control)
        .measure("start_shift", shift)
        .measure("start_radius", start_radius)
        .measure("start_norm", z0[..4].iter().map(|x| x * x).sum::<f64>().sqrt())
        .measure("control_final_time", control.final_time());
    rep.criterion("escaped", Check::flag(main.escape_time.is_some(), true));
    rep.criterion("escape_not_late", Check::at_most(ratio, profile.slack));
    rep.criterion("escape_not_early", Check::at_least(ratio, 1.0 / profile.slack));
    rep.criterion("control_no_escape", Check::flag(control.escape_time.is_none() && control.blow_up.is_none(), true));
    rep.criterion("control_full_horizon", Check::relative(control.final_time(), opts.control_factor * predicted, 1e-12));
    rep.criterion("i3_conserved", Check::at_most(drift_main, 10.0 * tol));
    rep.criterion("control_i3_conserved", Check::at_most(drift_control, 10.0 * tol));
    rep.criterion("start_radius", Check::at_most(start_radius, 1.0 / e.n as f64));
    rep.criterion("start_shift", Check::at_most(shift, level.powf(profile.shift_exponent)));
    Ok(Experiment {
        report: rep,
        trajectories: vec![("trajectory".into(), main), ("control".into(), control)],
        curves: Vec::new(),
    })
}

/// gnuplot script for an experiment whose data files are `<name>.csv`.
pub fn plot_script(exp: &Experiment) -> Option<String> {
    let r = &exp.report;
    match r.kind.as_str() {
        "delta" => {
            let alpha = r.predicted("alpha")?;
            let rate = r.predicted("rate")?;
            let r0 = r.inputs.get("r0")?.as_f64()?;
            Some(format!(
                "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\nset ylabel 'r'\n\
                 p = {p:e}\nc = {rate:e}\nr0 = {r0:e}\nclosed(t) = (1.0/(r0**(-p) - p*c*t))**(1.0/p)\n\
                 plot 'radius.csv' using 1:2 with points title 'measured r(t)', closed(x) with lines title 'closed form'\n",
                p = alpha - 1.0,
            ))
        }
        "rotating-frame-compare" => Some(
            "set datafile separator ','\nset key autotitle columnhead\nset logscale y\nset xlabel 's'\n\
             plot 'deviation.csv' using 1:2 with lines title '|xi(s)|', '' using 1:3 with lines title 'fitted bound'\n"
                .to_string(),
        ),
        "resonant-escape" => Some(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 's'\n\
             plot 'norms.csv' using 1:2 with lines title '|Phi_H|', '' using 1:3 with points title '|Phi_aF|'\n"
                .to_string(),
        ),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_numbers() {
        let cf = DeltaClosedForm::new(1, 2, 0.5).unwrap();
        assert!((cf.blowup_time() - 1.0).abs() < 1e-15);
        assert!((cf.escape_time(3.0) - 5.0 / 6.0).abs() < 1e-15);
        assert!(DeltaClosedForm::new(1, 1, 0.5).is_err());
    }

    #[test]
    fn delta_line_is_invariant_and_matches_closed_form() {
        let exp = delta_experiment(1, 2, 1, &FlowSettings::tight()).unwrap();
        assert!(exp.report.passed(), "{}", exp.report.to_json());
        let t = exp.report.measured("escape_time").unwrap();
        assert!((t - 5.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn other_phase_sum_decays() {
        // Phases with kν + lν′ = 5/4 ≡ 1/4: the radius shrinks along the flow.
        let (k, l) = (1u32, 2u32);
        let nu = 1.25 / 3.0;
        let u = 2f64.sqrt();
        let (s, c) = (2.0 * PI * nu).sin_cos();
        let z0 = state_from_xi(&[(0.5 * c, 0.5 * s), (u * 0.5 * c, u * 0.5 * s)]);
        let h = saddle_series(2, 3, k, l, &Scalar::one(FLOAT)).unwrap();
        let tr = integrate(&h, &z0, (0.0, 0.5), &FlowSettings::tight().options()).unwrap();
        assert!(plane_modulus(tr.final_state(), 0) < 0.5);
    }

    #[test]
    fn bare_saddle_blows_up_before_prediction() {
        let cf = DeltaClosedForm::new(1, 2, 0.5).unwrap();
        let h = saddle_series(2, 3, 1, 2, &Scalar::one(FLOAT)).unwrap();
        let z0 = delta_point(1, 2, 0.5, 2, true);
        let tr = integrate(&h, &z0, (0.0, 2.0 * cf.blowup_time()), &FlowSettings::tight().options()).unwrap();
        assert!(tr.blow_up.is_some());
        assert!(tr.final_time() <= cf.blowup_time() * (1.0 + 1e-6));
    }

    #[test]
    fn time_rescaling_of_the_coupling_flow() {
        // Φ_{aF}^{t/a} = Φ_F^t
        let z0 = delta_point(2, 1, 0.3, 2, true);
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let a = 0.01;
        let unit = saddle_series(2, 3, 2, 1, &Scalar::one(FLOAT)).unwrap();
        let scaled = saddle_series(2, 3, 2, 1, &Scalar::from_f64(a, FLOAT)).unwrap();
        let mut o = FlowSettings::tight().options();
        o.output = Output::Times(grid.clone());
        let p = integrate(&unit, &z0, (0.0, 1.0), &o).unwrap();
        o.output = Output::Times(grid.iter().map(|t| t / a).collect());
        let q = integrate(&scaled, &z0, (0.0, 1.0 / a), &o).unwrap();
        for (x, y) in p.states.iter().zip(&q.states) {
            for (s, t) in x.iter().zip(y) {
                assert!((s - t).abs() <= 1e-6 * s.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn lambert() {
        for y in [1e-12, 0.5, 1.0, 10.0, 1e6] {
            let x = lambert_w(y);
            assert!((x * x.exp() - y).abs() <= 1e-12 * y);
        }
    }

    #[test]
    fn derivative_norms_of_quadratic() {
        // F = I₁ = (x²+y²)/2: |∂F| = max(|x|,|y|), second derivatives are 1.
        let f = PoissonSeries::action(1, 2, 0, Scalar::one(FLOAT));
        let (v, g1, g2) = DerivativeNorms::new(&f).at(&[0.3, -0.4]);
        assert!((v - 0.125).abs() < 1e-15);
        assert!((g1 - 0.4).abs() < 1e-15);
        assert!((g2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_perturbation_gives_zero_deviation() {
        let omega = FrequencyVector::new(vec![Scalar::one(FLOAT), Scalar::parse_real("-sqrt(2)", FLOAT).unwrap()]).unwrap();
        let f = saddle_series(2, 3, 2, 1, &Scalar::one(FLOAT)).unwrap();
        let h = PoissonSeries::quadratic(omega.values(), 3).add(&f.scale(&Scalar::from_f64(1e-3, FLOAT)).unwrap()).unwrap();
        let opts = CompareOptions { samples: 20, norm_points: 50, ..Default::default() };
        let exp = rotating_frame_compare(&h, &h, &omega, &[0.3, 0.1, 0.2, -0.1], 1.0, &opts).unwrap();
        assert_eq!(exp.report.measured("sup_deviation"), Some(0.0));
    }
}
