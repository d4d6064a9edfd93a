//! Point evaluation of series and of the Hamiltonian vector field
//! ξ̇_j = −i ∂_{η_j}H, η̇_j = i ∂_{ξ_j}H.

use crate::error::{Error, Result};
use crate::scalar::{Backend, Scalar};
use crate::series::PoissonSeries;
use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Debug, PartialEq)]
pub enum PhasePoint {
    Complex { xi: Vec<Scalar>, eta: Vec<Scalar> },
    /// ξ = (x+iy)/√2, η = (x−iy)/√2; needs the float backend for √2.
    Real { x: Vec<Scalar>, y: Vec<Scalar> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub value: Scalar,
    pub xi_dot: Vec<Scalar>,
    pub eta_dot: Vec<Scalar>,
}

fn to_complex(point: &PhasePoint, backend: Backend) -> Result<(Vec<Scalar>, Vec<Scalar>)> {
    match point {
        PhasePoint::Complex { xi, eta } => Ok((xi.clone(), eta.clone())),
        PhasePoint::Real { x, y } => {
            let r2 = Scalar::from_i64(2, backend).sqrt_real().map_err(|_| {
                Error::NotRepresentable("real coordinates need √2; use the float backend".into())
            })?;
            let xi = x.iter().zip(y).map(|(a, b)| &(a + &b.mul_i()) / &r2).collect();
            let eta = x.iter().zip(y).map(|(a, b)| &(a - &b.mul_i()) / &r2).collect();
            Ok((xi, eta))
        }
    }
}

fn eval_series(h: &PoissonSeries, xi: &[Scalar], eta: &[Scalar]) -> Scalar {
    let backend = h.backend();
    let d = h.dof();
    let mut total = Scalar::zero(backend);
    for (m, c) in h.terms() {
        let mut t = c.clone();
        for j in 0..d {
            if m.u()[j] > 0 {
                t = &t * &xi[j].powi(m.u()[j] as u32);
            }
            if m.v()[j] > 0 {
                t = &t * &eta[j].powi(m.v()[j] as u32);
            }
        }
        total = &total + &t;
    }
    total
}

pub fn evaluate(h: &PoissonSeries, point: &PhasePoint, with_derivatives: bool) -> Result<Evaluation> {
    let d = h.dof();
    let (xi, eta) = to_complex(point, h.backend())?;
    if xi.len() != d || eta.len() != d {
        return Err(Error::Dimension { expected: 2 * d, got: xi.len() + eta.len() });
    }
    for c in xi.iter().chain(&eta) {
        if c.backend() != h.backend() {
            return Err(Error::Backend(h.backend().to_string(), c.backend().to_string()));
        }
    }
    let value = eval_series(h, &xi, &eta);
    let (mut xi_dot, mut eta_dot) = (Vec::new(), Vec::new());
    if with_derivatives {
        for j in 0..d {
            xi_dot.push(eval_series(&h.d_eta(j), &xi, &eta).mul_i().mul_int(-1));
            eta_dot.push(eval_series(&h.d_xi(j), &xi, &eta).mul_i());
        }
    }
    Ok(Evaluation { value, xi_dot, eta_dot })
}

/// A series with f64 complex coefficients, for fast repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledSeries {
    dof: usize,
    exps: Vec<Vec<u16>>,
    coefs: Vec<Complex64>,
    max_exp: Vec<u16>,
}

impl CompiledSeries {
    pub fn new(h: &PoissonSeries) -> CompiledSeries {
        let d = h.dof();
        let mut max_exp = vec![0u16; 2 * d];
        let mut exps = Vec::new();
        let mut coefs = Vec::new();
        for (m, c) in h.terms() {
            for (mx, &e) in max_exp.iter_mut().zip(m.exps()) {
                *mx = (*mx).max(e);
            }
            exps.push(m.exps().to_vec());
            let (re, im) = c.to_c64();
            coefs.push(Complex64::new(re, im));
        }
        CompiledSeries { dof: d, exps, coefs, max_exp }
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }

    fn powers(&self, vars: &[Complex64]) -> Vec<Vec<Complex64>> {
        vars.iter()
            .zip(&self.max_exp)
            .map(|(&z, &mx)| {
                let mut p = Vec::with_capacity(mx as usize + 1);
                let mut acc = Complex64::new(1.0, 0.0);
                p.push(acc);
                for _ in 0..mx {
                    acc *= z;
                    p.push(acc);
                }
                p
            })
            .collect()
    }

    /// Evaluate at (ξ, η) given as one slice of length 2d.
    pub fn eval(&self, vars: &[Complex64]) -> Complex64 {
        let pw = self.powers(vars);
        self.eval_with(&pw)
    }

    fn eval_with(&self, pw: &[Vec<Complex64>]) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for (e, c) in self.exps.iter().zip(&self.coefs) {
            let mut t = *c;
            for (k, &ek) in e.iter().enumerate() {
                if ek > 0 {
                    t *= pw[k][ek as usize];
                }
            }
            sum += t;
        }
        sum
    }
}

/// Real-coordinate state (x₁, y₁, …, x_d, y_d) to (ξ₁..ξ_d, η₁..η_d).
pub fn real_to_complex(z: &[f64]) -> Vec<Complex64> {
    let d = z.len() / 2;
    let mut v = vec![Complex64::new(0.0, 0.0); 2 * d];
    for j in 0..d {
        let (x, y) = (z[2 * j], z[2 * j + 1]);
        v[j] = Complex64::new(x, y) * FRAC_1_SQRT_2;
        v[d + j] = Complex64::new(x, -y) * FRAC_1_SQRT_2;
    }
    v
}

/// Value and Hamiltonian vector field of a series, compiled to f64.
#[derive(Clone, Debug)]
pub struct CompiledField {
    value: CompiledSeries,
    d_xi: Vec<CompiledSeries>,
    d_eta: Vec<CompiledSeries>,
}

impl CompiledField {
    pub fn new(h: &PoissonSeries) -> CompiledField {
        let d = h.dof();
        CompiledField {
            value: CompiledSeries::new(h),
            d_xi: (0..d).map(|j| CompiledSeries::new(&h.d_xi(j))).collect(),
            d_eta: (0..d).map(|j| CompiledSeries::new(&h.d_eta(j))).collect(),
        }
    }

    pub fn dof(&self) -> usize {
        self.value.dof
    }

    pub fn value_real(&self, z: &[f64]) -> f64 {
        self.value.eval(&real_to_complex(z)).re
    }

    /// (ξ̇, η̇) at a complex point.
    pub fn field_complex(&self, vars: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        // Derivative exponents are bounded by the parent's, so one power table serves all.
        let pw = self.value.powers(vars);
        let i = Complex64::new(0.0, 1.0);
        let xi_dot = self.d_eta.iter().map(|s| -i * s.eval_with(&pw)).collect();
        let eta_dot = self.d_xi.iter().map(|s| i * s.eval_with(&pw)).collect();
        (xi_dot, eta_dot)
    }

    /// (ẋ₁, ẏ₁, …) = (∂H/∂y₁, −∂H/∂x₁, …) at a real state.
    pub fn field_real(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dof();
        let (xd, ed) = self.field_complex(&real_to_complex(z));
        for j in 0..d {
            out[2 * j] = ((xd[j] + ed[j]) * FRAC_1_SQRT_2).re;
            out[2 * j + 1] = ((xd[j] - ed[j]) * FRAC_1_SQRT_2).im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Monomial;

    const F: Backend = Backend::Float(256);

    #[test]
    fn rotation_value_and_field() {
        let w = [Scalar::from_i64(2, F), Scalar::ratio(-3, 2, F)];
        let h = PoissonSeries::quadratic(&w, 4);
        let xi = vec![Scalar::complex_rational(&crate::scalar::rational(1, 2), &crate::scalar::rational(1, 3), F), Scalar::from_i64(1, F)];
        let eta: Vec<Scalar> = xi.iter().map(|z| z.conj()).collect();
        let ev = evaluate(&h, &PhasePoint::Complex { xi: xi.clone(), eta }, true).unwrap();
        assert!(ev.value.is_real());
        let expect = 2.0 * (0.25 + 1.0 / 9.0) - 1.5;
        assert!((ev.value.re_f64() - expect).abs() < 1e-15);
        for j in 0..2 {
            let rot = (&w[j] * &xi[j]).mul_i().mul_int(-1);
            assert!((&ev.xi_dot[j] - &rot).is_zero());
            assert_eq!(ev.eta_dot[j], ev.xi_dot[j].conj());
        }
    }

    #[test]
    fn real_point_needs_float() {
        let h = PoissonSeries::action(1, 2, 0, Scalar::one(Backend::Exact));
        let p = PhasePoint::Real { x: vec![Scalar::one(Backend::Exact)], y: vec![Scalar::zero(Backend::Exact)] };
        assert!(evaluate(&h, &p, false).is_err());
    }

    #[test]
    fn compiled_field_matches_real_gradient() {
        // H = ω(x²+y²)/2 + (ξ₁²ξ₂ + η₁²η₂); compare with a finite-difference gradient.
        let h = PoissonSeries::quadratic(&[Scalar::from_i64(1, F), Scalar::ratio(-21, 10, F)], 3)
            .add(&PoissonSeries::from_terms(
                2,
                3,
                F,
                [(Monomial::new(&[2, 1], &[0, 0]), Scalar::one(F)), (Monomial::new(&[0, 0], &[2, 1]), Scalar::one(F))],
            )
            .unwrap())
            .unwrap();
        let cf = CompiledField::new(&h);
        let z = [0.3, -0.2, 0.1, 0.4];
        let mut f = [0.0; 4];
        cf.field_real(&z, &mut f);
        let eps = 1e-6;
        for k in 0..4 {
            let mut zp = z;
            let mut zm = z;
            zp[k] += eps;
            zm[k] -= eps;
            let g = (cf.value_real(&zp) - cf.value_real(&zm)) / (2.0 * eps);
            // ẋ = ∂H/∂y, ẏ = −∂H/∂x
            let expect = if k % 2 == 0 { -f[k + 1] } else { f[k - 1] };
            assert!((g - expect).abs() < 1e-8, "component {k}: {g} vs {expect}");
        }
    }
}
