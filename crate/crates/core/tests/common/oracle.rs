//! A deliberately naive normal-form computation used only as a test oracle.
//! Polynomials are maps from exponent vectors (ξ₁..ξ_d, η₁..η_d) to complex
//! rationals; the bracket uses the opposite sign convention from the crate.

use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Zero};
use std::collections::HashMap;

pub type Q = Complex<BigRational>;
pub type Poly = HashMap<Vec<u32>, Q>;

pub fn q(n: i64, d: i64) -> Q {
    Complex::new(BigRational::new(n.into(), d.into()), BigRational::zero())
}

fn i_unit() -> Q {
    Complex::new(BigRational::zero(), BigRational::one())
}

fn add_into(p: &mut Poly, e: Vec<u32>, c: Q) {
    let entry = p.entry(e.clone()).or_insert_with(Q::zero);
    *entry = entry.clone() + c;
    if p[&e].is_zero() {
        p.remove(&e);
    }
}

pub fn mul(a: &Poly, b: &Poly, max_deg: u32) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            if e.iter().sum::<u32>() <= max_deg {
                add_into(&mut out, e, ca.clone() * cb.clone());
            }
        }
    }
    out
}

pub fn deriv(a: &Poly, var: usize) -> Poly {
    let mut out = Poly::new();
    for (e, c) in a {
        if e[var] > 0 {
            let mut f = e.clone();
            f[var] -= 1;
            add_into(&mut out, f, c.clone() * q(e[var] as i64, 1));
        }
    }
    out
}

/// {F,G} = i Σ_j (∂_{ξ_j}F ∂_{η_j}G − ∂_{η_j}F ∂_{ξ_j}G), truncated at max_deg.
pub fn bracket(f: &Poly, g: &Poly, d: usize, max_deg: u32) -> Poly {
    let mut out = Poly::new();
    for j in 0..d {
        for (e, c) in mul(&deriv(f, j), &deriv(g, d + j), max_deg) {
            add_into(&mut out, e, c * i_unit());
        }
        for (e, c) in mul(&deriv(f, d + j), &deriv(g, j), max_deg) {
            add_into(&mut out, e, -(c * i_unit()));
        }
    }
    out
}

/// For H = Σ ω_j ξ_jη_j + H₃ (cubic, nonresonant), the degree-4 normal form ½{H₃, χ₃}
/// with χ₃ solving H₃ + {H₂, χ₃} = 0. Returns its action monomials.
pub fn order4_normal_form(omega: &[Q], cubic: &Poly) -> Poly {
    let d = omega.len();
    let mut chi = Poly::new();
    for (e, c) in cubic {
        // {H₂, ξ^uη^v} = i⟨ω, v − u⟩ ξ^uη^v in this convention.
        let mut p = Q::zero();
        for j in 0..d {
            p = p + omega[j].clone() * q(e[d + j] as i64 - e[j] as i64, 1);
        }
        assert!(!p.is_zero(), "resonant cubic term");
        let coef = -(c.clone() / (p * i_unit()));
        chi.insert(e.clone(), coef);
    }
    let h4 = bracket(cubic, &chi, d, 4);
    h4.into_iter()
        .filter(|(e, _)| e[..d] == e[d..])
        .map(|(e, c)| (e, c * q(1, 2)))
        .collect()
}
