//! Hamiltonian flows of Poisson series in real coordinates, with monitors.

use super::integrator::{solve, Method, Output, SolveOptions, StepStats, Stop, VectorField};
use crate::error::{Error, Result};
use crate::eval::{CompiledField, CompiledSeries};
use crate::scalar::Scalar;
use crate::series::PoissonSeries;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    Lab,
    /// Co-rotating with the linear flow of Σ ω_j I_j; only the remainder is integrated.
    Rotating(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "measure", rename_all = "kebab-case")]
pub enum EscapeMeasure {
    /// Euclidean norm of the full real state.
    Euclidean,
    /// |ξ_p| = √((x_p² + y_p²)/2) for the zero-based pair p.
    Plane { pair: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Escape {
    pub radius: f64,
    #[serde(flatten)]
    pub measure: EscapeMeasure,
}

impl EscapeMeasure {
    pub fn of(&self, z: &[f64]) -> f64 {
        match *self {
            EscapeMeasure::Euclidean => z.iter().map(|x| x * x).sum::<f64>().sqrt(),
            EscapeMeasure::Plane { pair } => plane_modulus(z, pair),
        }
    }
}

pub fn plane_modulus(z: &[f64], pair: usize) -> f64 {
    ((z[2 * pair].powi(2) + z[2 * pair + 1].powi(2)) / 2.0).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrateOptions {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub escape: Option<Escape>,
    pub output: Output,
    pub frame: Frame,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        let s = SolveOptions::default();
        IntegrateOptions {
            method: s.method,
            rtol: s.rtol,
            atol: s.atol,
            escape: None,
            output: s.output,
            frame: Frame::Lab,
            max_steps: s.max_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorMeta {
    pub method: String,
    pub rtol: f64,
    pub atol: f64,
    pub stats: StepStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub model: String,
    pub dof: usize,
    pub times: Vec<f64>,
    /// Lab-frame states (x₁, y₁, …, x_d, y_d).
    pub states: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    /// actions[i][j] = I_{j+1} at sample i.
    pub actions: Vec<Vec<f64>>,
    pub meta: IntegratorMeta,
    pub escape_time: Option<f64>,
    pub blow_up: Option<String>,
    pub hit_step_limit: bool,
}

fn rotate_pairs(z: &[f64], omega: &[f64], t: f64, sign: f64, out: &mut [f64]) {
    for (j, w) in omega.iter().enumerate() {
        let (s, c) = (sign * w * t).sin_cos();
        let (x, y) = (z[2 * j], z[2 * j + 1]);
        out[2 * j] = x * c - y * s;
        out[2 * j + 1] = x * s + y * c;
    }
}

/// Lab state from a co-rotating state at time t (ξ = e^{−iωt} w).
pub fn rotating_to_lab(w: &[f64], omega: &[f64], t: f64) -> Vec<f64> {
    let mut z = vec![0.0; w.len()];
    rotate_pairs(w, omega, t, -1.0, &mut z);
    z
}

pub fn lab_to_rotating(z: &[f64], omega: &[f64], t: f64) -> Vec<f64> {
    let mut w = vec![0.0; z.len()];
    rotate_pairs(z, omega, t, 1.0, &mut w);
    w
}

/// The real Hamiltonian vector field of a series, optionally in a rotating frame.
pub struct SeriesField {
    field: CompiledField,
    omega: Option<Vec<f64>>,
}

impl SeriesField {
    pub fn new(h: &PoissonSeries, frame: &Frame) -> Result<SeriesField> {
        match frame {
            Frame::Lab => Ok(SeriesField { field: CompiledField::new(h), omega: None }),
            Frame::Rotating(w) => {
                if w.len() != h.dof() {
                    return Err(Error::Dimension { expected: h.dof(), got: w.len() });
                }
                let quad: Vec<Scalar> = w.iter().map(|&x| Scalar::from_f64(x, h.backend())).collect();
                let rest = h.sub(&PoissonSeries::quadratic(&quad, h.order()))?;
                Ok(SeriesField { field: CompiledField::new(&rest), omega: Some(w.clone()) })
            }
        }
    }
}

impl VectorField for SeriesField {
    fn dim(&self) -> usize {
        2 * self.field.dof()
    }

    fn eval(&self, t: f64, z: &[f64], out: &mut [f64]) {
        match &self.omega {
            None => self.field.field_real(z, out),
            Some(w) => {
                let lab = rotating_to_lab(z, w, t);
                let mut f = vec![0.0; z.len()];
                self.field.field_real(&lab, &mut f);
                rotate_pairs(&f, w, t, 1.0, out);
            }
        }
    }
}

/// Actions I_j = (x_j² + y_j²)/2.
pub fn actions_of(z: &[f64]) -> Vec<f64> {
    z.chunks(2).map(|p| (p[0] * p[0] + p[1] * p[1]) / 2.0).collect()
}

/// Real state from complex ξ (η = ξ̄): x + iy = √2 ξ.
pub fn state_from_xi(xi: &[(f64, f64)]) -> Vec<f64> {
    xi.iter().flat_map(|&(re, im)| [SQRT_2 * re, SQRT_2 * im]).collect()
}

pub fn integrate(h: &PoissonSeries, z0: &[f64], tspan: (f64, f64), opts: &IntegrateOptions) -> Result<Trajectory> {
    let d = h.dof();
    if z0.len() != 2 * d {
        return Err(Error::Dimension { expected: 2 * d, got: z0.len() });
    }
    if z0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Integration("initial state is not finite".into()));
    }
    if !(tspan.1 > tspan.0) {
        return Err(Error::Integration(format!("empty time span [{}, {}]", tspan.0, tspan.1)));
    }
    if !h.is_real() {
        return Err(Error::Integration("flow of a non-real series".into()));
    }
    let field = SeriesField::new(h, &opts.frame)?;
    let omega = match &opts.frame {
        Frame::Rotating(w) => Some(w.clone()),
        Frame::Lab => None,
    };
    let w0 = match &omega {
        Some(w) => lab_to_rotating(z0, w, tspan.0),
        None => z0.to_vec(),
    };
    let mut f0 = vec![0.0; 2 * d];
    field.eval(tspan.0, &w0, &mut f0);
    if f0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Integration("vector field is not finite at the initial state".into()));
    }
    let solve_opts = SolveOptions {
        method: opts.method,
        rtol: opts.rtol,
        atol: opts.atol,
        output: opts.output.clone(),
        max_steps: opts.max_steps,
        ..Default::default()
    };
    let sol = match opts.escape {
        Some(esc) => {
            let g = move |z: &[f64]| esc.measure.of(z) - esc.radius;
            solve(&field, &w0, tspan.0, tspan.1, &solve_opts, Some(&g))
        }
        None => solve(&field, &w0, tspan.0, tspan.1, &solve_opts, None),
    };
    let states: Vec<Vec<f64>> = match &omega {
        Some(w) => sol.times.iter().zip(&sol.states).map(|(&t, s)| rotating_to_lab(s, w, t)).collect(),
        None => sol.states,
    };
    let value = CompiledSeries::new(h);
    let energy = states.iter().map(|z| value.eval(&crate::eval::real_to_complex(z)).re).collect();
    let actions = states.iter().map(|z| actions_of(z)).collect();
    let (blow_up, hit_step_limit) = match sol.stop {
        Stop::BlowUp(m) => (Some(m), false),
        Stop::MaxSteps => (None, true),
        _ => (None, false),
    };
    Ok(Trajectory {
        model: "series".into(),
        dof: d,
        times: sol.times,
        states,
        energy,
        actions,
        meta: IntegratorMeta { method: opts.method.name().into(), rtol: opts.rtol, atol: opts.atol, stats: sol.stats },
        escape_time: sol.event_time,
        blow_up,
        hit_step_limit,
    })
}

impl Trajectory {
    pub fn with_model(mut self, model: &str) -> Trajectory {
        self.model = model.to_string();
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectories hold the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectories hold the initial state")
    }

    /// max_i |I_j(t_i) − I_j(t_0)|.
    pub fn action_drift(&self, j: usize) -> f64 {
        let a0 = self.actions[0][j];
        self.actions.iter().map(|a| (a[j] - a0).abs()).fold(0.0, f64::max)
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        for j in 1..=self.dof {
            cols.push(format!("x{j}"));
            cols.push(format!("y{j}"));
        }
        cols.push("H".into());
        for j in 1..=self.dof {
            cols.push(format!("I{j}"));
        }
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header();
        s.push('\n');
        for i in 0..self.times.len() {
            let mut row = vec![fmt_num(self.times[i])];
            row.extend(self.states[i].iter().map(|&x| fmt_num(x)));
            row.push(fmt_num(self.energy[i]));
            row.extend(self.actions[i].iter().map(|&x| fmt_num(x)));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest round-trip rendering, always in exponent form.
pub fn fmt_num(x: f64) -> String {
    format!("{x:e}")
}

/// A named-column numeric table (deviation curves and the like).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}
