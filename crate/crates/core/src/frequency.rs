//! Frequency vectors with an explicitly declared integer resonance lattice.

use crate::error::{Error, Result};
use crate::scalar::{Backend, Scalar};
use crate::series::{Monomial, PoissonSeries};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resonance {
    Resonant,
    Nonresonant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NearResonance {
    pub m: Vec<i64>,
    pub gap: Scalar,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyVector {
    values: Vec<Scalar>,
    lattice: Vec<Vec<i64>>,
    near: Vec<NearResonance>,
    // Row-echelon basis of the integer span of `lattice`.
    echelon: Vec<Vec<i64>>,
}

impl FrequencyVector {
    pub fn new(values: Vec<Scalar>) -> Result<FrequencyVector> {
        FrequencyVector::with_lattice(values, Vec::new())
    }

    /// Declared relations are checked exactly on the exact backend and to
    /// half the mantissa on the float backend.
    pub fn with_lattice(values: Vec<Scalar>, lattice: Vec<Vec<i64>>) -> Result<FrequencyVector> {
        if values.is_empty() {
            return Err(Error::Lattice("frequency vector must have d >= 1".into()));
        }
        let backend = values[0].backend();
        for w in &values {
            if w.backend() != backend {
                return Err(Error::Backend(backend.to_string(), w.backend().to_string()));
            }
            if !w.is_real() {
                return Err(Error::Lattice("frequencies must be real".into()));
            }
        }
        let d = values.len();
        for m in &lattice {
            if m.len() != d {
                return Err(Error::Dimension { expected: d, got: m.len() });
            }
            if m.iter().all(|&x| x == 0) {
                return Err(Error::Lattice("zero lattice vector".into()));
            }
            let p = pairing_int(&values, m);
            let ok = match backend {
                Backend::Exact => p.is_zero(),
                Backend::Float(bits) => {
                    let scale: f64 = values.iter().zip(m).map(|(w, &k)| w.abs_f64() * k.abs() as f64).sum();
                    p.is_zero() || p.ln_abs() <= scale.ln() - (bits as f64 / 2.0) * std::f64::consts::LN_2
                }
            };
            if !ok {
                return Err(Error::Lattice(format!("declared relation {m:?} does not annihilate ω (⟨m,ω⟩ = {p})")));
            }
        }
        let echelon = hermite(&lattice, d);
        Ok(FrequencyVector { values, lattice, near: Vec::new(), echelon })
    }

    pub fn with_near(mut self, m: Vec<i64>) -> Result<FrequencyVector> {
        if m.len() != self.dof() {
            return Err(Error::Dimension { expected: self.dof(), got: m.len() });
        }
        let gap = pairing_int(&self.values, &m);
        self.near.push(NearResonance { m, gap });
        Ok(self)
    }

    pub fn dof(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Scalar] {
        &self.values
    }

    pub fn lattice(&self) -> &[Vec<i64>] {
        &self.lattice
    }

    pub fn near(&self) -> &[NearResonance] {
        &self.near
    }

    pub fn backend(&self) -> Backend {
        self.values[0].backend()
    }

    /// ⟨ω, m⟩ for an integer vector.
    pub fn pairing(&self, m: &[i64]) -> Scalar {
        pairing_int(&self.values, m)
    }

    /// Whether m lies in the integer span of the declared lattice.
    pub fn in_lattice(&self, m: &[i64]) -> bool {
        if m.iter().all(|&x| x == 0) {
            return true;
        }
        let mut r = m.to_vec();
        for row in &self.echelon {
            let p = row.iter().position(|&x| x != 0).expect("echelon rows are nonzero");
            if r[p] % row[p] != 0 {
                return false;
            }
            let f = r[p] / row[p];
            for (a, b) in r.iter_mut().zip(row) {
                *a -= f * b;
            }
        }
        r.iter().all(|&x| x == 0)
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.values.iter().map(|w| w.to_strings().0).collect()
    }
}

fn pairing_int(values: &[Scalar], m: &[i64]) -> Scalar {
    let backend = values[0].backend();
    let mut acc = Scalar::zero(backend);
    for (w, &k) in values.iter().zip(m) {
        if k != 0 {
            acc = &acc + &w.mul_int(k);
        }
    }
    acc
}

/// Integer row echelon form (rows with strictly increasing pivot columns).
fn hermite(rows: &[Vec<i64>], d: usize) -> Vec<Vec<i64>> {
    let mut rows: Vec<Vec<i64>> = rows.to_vec();
    let mut out = Vec::new();
    for col in 0..d {
        loop {
            rows.retain(|r| r.iter().any(|&x| x != 0));
            let mut active: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][col] != 0).collect();
            if active.len() <= 1 {
                break;
            }
            active.sort_by_key(|&i| rows[i][col].abs());
            let piv = active[0];
            let pivot_row = rows[piv].clone();
            for &i in &active[1..] {
                let f = rows[i][col] / pivot_row[col];
                for (a, b) in rows[i].iter_mut().zip(&pivot_row) {
                    *a -= f * b;
                }
            }
        }
        if let Some(i) = (0..rows.len()).find(|&i| rows[i][col] != 0) {
            out.push(rows.remove(i));
        }
    }
    out
}

/// ⟨ω, u − v⟩ and the lattice-exact classification.
pub fn frequency_pairing(m: &Monomial, omega: &FrequencyVector) -> Result<(Scalar, Resonance)> {
    if m.dof() != omega.dof() {
        return Err(Error::Dimension { expected: omega.dof(), got: m.dof() });
    }
    let charge = m.charge();
    let p = omega.pairing(&charge);
    let class = if omega.in_lattice(&charge) { Resonance::Resonant } else { Resonance::Nonresonant };
    Ok((p, class))
}

/// (resonant part, nonresonant part).
pub fn split_resonant(h: &PoissonSeries, omega: &FrequencyVector) -> Result<(PoissonSeries, PoissonSeries)> {
    if h.dof() != omega.dof() {
        return Err(Error::Dimension { expected: omega.dof(), got: h.dof() });
    }
    let res = h.filter(|m| omega.in_lattice(&m.charge()));
    let non = h.filter(|m| !omega.in_lattice(&m.charge()));
    Ok((res, non))
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: Backend = Backend::Exact;

    #[test]
    fn action_monomials_are_resonant() {
        let w = FrequencyVector::new(vec![Scalar::from_i64(1, E), Scalar::ratio(-21, 10, E)]).unwrap();
        let (p, c) = frequency_pairing(&Monomial::action(&[1, 1]), &w).unwrap();
        assert!(p.is_zero());
        assert_eq!(c, Resonance::Resonant);
    }

    #[test]
    fn declared_relation() {
        let w = FrequencyVector::with_lattice(vec![Scalar::from_i64(2, E), Scalar::from_i64(-1, E)], vec![vec![1, 2]]).unwrap();
        let (p, c) = frequency_pairing(&Monomial::new(&[1, 2], &[0, 0]), &w).unwrap();
        assert!(p.is_zero());
        assert_eq!(c, Resonance::Resonant);
        assert!(FrequencyVector::with_lattice(vec![Scalar::from_i64(2, E), Scalar::from_i64(-1, E)], vec![vec![1, 1]]).is_err());
    }

    #[test]
    fn irrational_pair_is_nonresonant() {
        let f = Backend::Float(256);
        let w = FrequencyVector::new(vec![Scalar::from_i64(1, f), Scalar::parse_real("sqrt(2)", f).unwrap()]).unwrap();
        let (p, c) = frequency_pairing(&Monomial::new(&[1, 0], &[0, 1]), &w).unwrap();
        assert_eq!(c, Resonance::Nonresonant);
        assert!((p.re_f64() - (1.0 - std::f64::consts::SQRT_2)).abs() < 1e-15);
    }

    #[test]
    fn integer_span_not_rational_span() {
        let w = FrequencyVector::with_lattice(vec![Scalar::from_i64(2, E), Scalar::from_i64(-1, E)], vec![vec![2, 4]]).unwrap();
        assert!(w.in_lattice(&[4, 8]));
        assert!(!w.in_lattice(&[1, 2]));
        let w3 = FrequencyVector::with_lattice(
            vec![Scalar::from_i64(1, E), Scalar::from_i64(1, E), Scalar::from_i64(-2, E)],
            vec![vec![1, -1, 0], vec![1, 1, 1]],
        )
        .unwrap();
        assert!(w3.in_lattice(&[3, -1, 1]));
        assert!(w3.in_lattice(&[0, 2, 1]));
        assert!(!w3.in_lattice(&[1, 0, 0]));
    }

    #[test]
    fn dimension_mismatch() {
        let w = FrequencyVector::new(vec![Scalar::from_i64(1, E)]).unwrap();
        assert!(frequency_pairing(&Monomial::action(&[1, 1]), &w).is_err());
    }
}
