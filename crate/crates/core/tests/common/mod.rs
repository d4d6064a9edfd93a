#![allow(dead_code)]

pub mod oracle;

use birkhoff_core::bnf::{normalize_with, Elimination, NormalizeOptions};
use birkhoff_core::frequency::{split_resonant, FrequencyVector};
use birkhoff_core::scalar::{rational, Backend, Scalar};
use birkhoff_core::series::{Monomial, PoissonSeries, SIGMA};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const E: Backend = Backend::Exact;

pub fn small_complex(rng: &mut ChaCha8Rng, real: bool) -> Scalar {
    let re = rational(rng.gen_range(-9..=9), rng.gen_range(1..=5));
    let im = if real { rational(0, 1) } else { rational(rng.gen_range(-9..=9), rng.gen_range(1..=5)) };
    Scalar::complex_rational(&re, &im, E)
}

pub fn random_monomial(rng: &mut ChaCha8Rng, d: usize, degree: usize) -> Monomial {
    let mut e = vec![0u16; 2 * d];
    for _ in 0..degree {
        e[rng.gen_range(0..2 * d)] += 1;
    }
    Monomial::new(&e[..d], &e[d..])
}

/// A real series with up to `terms` conjugate pairs of degrees in [lo, hi].
pub fn random_real_series(rng: &mut ChaCha8Rng, d: usize, order: usize, lo: usize, hi: usize, terms: usize) -> PoissonSeries {
    let mut out = PoissonSeries::zero(d, order, E);
    for _ in 0..terms {
        let deg = rng.gen_range(lo..=hi);
        let m = random_monomial(rng, d, deg);
        let sw = m.swapped();
        let c = small_complex(rng, m == sw);
        let mut pair = vec![(m.clone(), c.clone())];
        if m != sw {
            pair.push((sw, c.conj()));
        }
        let p = PoissonSeries::from_terms(d, order, E, pair).unwrap();
        out = out.add(&p).unwrap();
    }
    out
}

/// Frequencies without integer relations of length below 97.
pub fn random_omega(rng: &mut ChaCha8Rng, d: usize) -> FrequencyVector {
    let dens = [97i64, 101, 103];
    let mut w = vec![Scalar::from_i64(1, E)];
    for j in 1..d {
        let mut p = rng.gen_range(1..dens[j - 1] * 3);
        while p % dens[j - 1] == 0 {
            p += 1;
        }
        let sign = if j == 1 { -1 } else { 1 };
        w.push(Scalar::ratio(sign * p, dens[j - 1], E));
    }
    FrequencyVector::new(w).unwrap()
}

fn same(a: &PoissonSeries, b: &PoissonSeries) -> Result<(), String> {
    let diff = a.sub(b).map_err(|e| e.to_string())?;
    if diff.is_zero() {
        Ok(())
    } else {
        Err(format!("difference has {} terms", diff.len()))
    }
}

fn br(a: &PoissonSeries, b: &PoissonSeries, n: usize) -> PoissonSeries {
    a.bracket(b, n).unwrap()
}

pub fn antisymmetry(f: &PoissonSeries, g: &PoissonSeries, n: usize) -> Result<(), String> {
    same(&br(f, g, n), &br(g, f, n).neg())
}

/// {F, GK} = {F,G}K + G{F,K}; needs min degree ≥ 2 so truncation commutes.
pub fn leibniz(f: &PoissonSeries, g: &PoissonSeries, k: &PoissonSeries, n: usize) -> Result<(), String> {
    let lhs = br(f, &g.mul(k, n).unwrap(), n);
    let rhs = br(f, g, n).mul(k, n).unwrap().add(&g.mul(&br(f, k, n), n).unwrap()).unwrap();
    same(&lhs, &rhs)
}

pub fn jacobi(f: &PoissonSeries, g: &PoissonSeries, k: &PoissonSeries, n: usize) -> Result<(), String> {
    let s = br(f, &br(g, k, n), n).add(&br(g, &br(k, f, n), n)).unwrap().add(&br(k, &br(f, g, n), n)).unwrap();
    if s.is_zero() {
        Ok(())
    } else {
        Err(format!("Jacobi sum has {} terms", s.len()))
    }
}

pub fn reality_closure(f: &PoissonSeries, g: &PoissonSeries, chi: &PoissonSeries, n: usize) -> Result<(), String> {
    for (name, s) in [
        ("bracket", br(f, g, n)),
        ("product", f.mul(g, n).unwrap()),
        ("lie", f.lie_transform(chi, n).unwrap()),
    ] {
        if !s.check_reality() || !s.is_real() {
            return Err(format!("{name} lost reality"));
        }
    }
    Ok(())
}

/// {H_ω, ξ^uη^v} = σ i ⟨ω, v − u⟩ ξ^uη^v.
pub fn homega_identity(omega: &FrequencyVector, m: &Monomial, n: usize) -> Result<(), String> {
    let hw = PoissonSeries::quadratic(omega.values(), n);
    let mono = PoissonSeries::monomial(omega.dof(), n, m.clone(), Scalar::one(E)).unwrap();
    let v_minus_u: Vec<i64> = m.v().iter().zip(m.u()).map(|(&v, &u)| v as i64 - u as i64).collect();
    let factor = omega.pairing(&v_minus_u).mul_i().mul_int(SIGMA);
    same(&br(&hw, &mono, n), &mono.scale(&factor).unwrap())
}

pub fn split_projection(h: &PoissonSeries, omega: &FrequencyVector) -> Result<(), String> {
    let (res, non) = split_resonant(h, omega).map_err(|e| e.to_string())?;
    same(&res.add(&non).unwrap(), h)?;
    let (res2, non2) = split_resonant(&res, omega).unwrap();
    same(&res2, &res)?;
    if !non2.is_zero() {
        return Err("resonant part is not idempotent".into());
    }
    if non.terms().any(|(m, _)| omega.in_lattice(&m.charge())) {
        return Err("nonresonant part holds a resonant monomial".into());
    }
    Ok(())
}

pub fn lie_inverse(h: &PoissonSeries, chi: &PoissonSeries, n: usize) -> Result<(), String> {
    let forward = h.lie_transform(chi, n).unwrap();
    let back = forward.lie_transform(&chi.neg(), n).unwrap();
    same(&back, &h.truncated(n))
}

pub fn order_invariance(h: &PoissonSeries, omega: &FrequencyVector, order: usize, seed: u64) -> Result<(), String> {
    let batched = normalize_with(h, omega, order, NormalizeOptions::default()).map_err(|e| e.to_string())?;
    let single = normalize_with(
        h,
        omega,
        order,
        NormalizeOptions { elimination: Elimination::Single { seed }, ..Default::default() },
    )
    .map_err(|e| e.to_string())?;
    if batched.bnf == single.bnf {
        Ok(())
    } else {
        Err(format!("normal forms differ: {:?} vs {:?}", batched.bnf.len(), single.bnf.len()))
    }
}

/// One randomized instance of every algebra property.
pub fn algebra_case(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Result<(), String>)> {
    let d = rng.gen_range(2..=3usize);
    let n = rng.gen_range(4..=8usize);
    let f = random_real_series(rng, d, n, 2, 4, 3);
    let g = random_real_series(rng, d, n, 2, 4, 3);
    let k = random_real_series(rng, d, n, 2, 3, 2);
    let chi = random_real_series(rng, d, n, 3, 4, 2);
    let omega = random_omega(rng, d);
    let mono_degree = rng.gen_range(1..=n);
    let mono = random_monomial(rng, d, mono_degree);
    let hw = PoissonSeries::quadratic(omega.values(), n);
    let h = hw.add(&random_real_series(rng, d, n, 3, n, 4)).unwrap();
    let bnf_order = (n / 2).clamp(2, 3);
    let hb = hw.with_order(2 * bnf_order).add(&random_real_series(rng, d, 2 * bnf_order, 3, 2 * bnf_order, 4)).unwrap();
    vec![
        ("antisymmetry", antisymmetry(&f, &g, n)),
        ("leibniz", leibniz(&f, &g, &k, n)),
        ("jacobi", jacobi(&f, &g, &k, n)),
        ("reality", reality_closure(&f, &g, &chi, n)),
        ("homega-identity", homega_identity(&omega, &mono, n)),
        ("split-projection", split_projection(&h, &omega)),
        ("lie-inverse", lie_inverse(&h, &chi, n)),
        ("order-invariance", order_invariance(&hb, &omega, bnf_order, rng.gen())),
    ]
}
