//! Linear-logistic misclassification model:
//! `gamma01 = expit(nu1 + nu2'z)`, `gamma10 = expit(nu3 + nu4'z)`.

use serde::{Deserialize, Serialize};

use super::a_from_gammas;
use crate::error::{Error, Result};
use crate::link::expit;

/// Flat layout `[nu1, nu2 (p), nu3, nu4 (p)]`, length `2(p+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuVector {
    values: Vec<f64>,
}

impl NuVector {
    pub fn zeros(p: usize) -> Self {
        NuVector { values: vec![0.0; 2 * (p + 1)] }
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !values.len().is_multiple_of(2) {
            return Err(Error::invalid(format!("nu must have even length 2(p+1), got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("nu has non-finite entries"));
        }
        Ok(NuVector { values })
    }

    pub fn from_parts(nu1: f64, nu2: &[f64], nu3: f64, nu4: &[f64]) -> Result<Self> {
        if nu2.len() != nu4.len() {
            return Err(Error::Dimension { expected: nu2.len(), got: nu4.len() });
        }
        let mut v = Vec::with_capacity(2 * (nu2.len() + 1));
        v.push(nu1);
        v.extend_from_slice(nu2);
        v.push(nu3);
        v.extend_from_slice(nu4);
        Self::from_vec(v)
    }

    pub fn p(&self) -> usize {
        self.values.len() / 2 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn eta01(&self, z: &[f64]) -> f64 {
        let p = self.p();
        self.values[0] + self.values[1..=p].iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    fn eta10(&self, z: &[f64]) -> f64 {
        let p = self.p();
        self.values[p + 1] + self.values[p + 2..].iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `(gamma01, gamma10)` at `z`.
    #[inline]
    pub fn gammas(&self, z: &[f64]) -> (f64, f64) {
        (expit(self.eta01(z)), expit(self.eta10(z)))
    }
}

/// Probabilities and their gradients with respect to the full `nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaParam {
    pub g01: f64,
    pub g10: f64,
    pub d01: Vec<f64>,
    pub d10: Vec<f64>,
}

pub fn gamma_param(nu: &NuVector, z: &[f64]) -> Result<GammaParam> {
    let p = nu.p();
    if z.len() != p {
        return Err(Error::Dimension { expected: p, got: z.len() });
    }
    let (g01, g10) = nu.gammas(z);
    let q = nu.len();
    let mut d01 = vec![0.0; q];
    let mut d10 = vec![0.0; q];
    let s01 = g01 * (1.0 - g01);
    let s10 = g10 * (1.0 - g10);
    d01[0] = s01;
    d10[p + 1] = s10;
    for j in 0..p {
        d01[1 + j] = s01 * z[j];
        d10[p + 2 + j] = s10 * z[j];
    }
    Ok(GammaParam { g01, g10, d01, d10 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ACoefficients {
    pub a0: f64,
    pub a1: f64,
    pub da0: Vec<f64>,
    pub da1: Vec<f64>,
}

/// `a0 = gamma01^{y*} (1 - gamma01)^{1-y*}`, `a1 = gamma10^{1-y*} (1 - gamma10)^{y*}`
/// and their gradients in `nu`.
pub fn a_coefficients(nu: &NuVector, y_star: u8, z: &[f64]) -> Result<ACoefficients> {
    if y_star > 1 {
        return Err(Error::invalid(format!("y* must be 0 or 1, got {y_star}")));
    }
    let g = gamma_param(nu, z)?;
    let (a0, a1) = a_from_gammas(g.g01, g.g10, y_star);
    let (s0, s1) = if y_star == 1 { (1.0, -1.0) } else { (-1.0, 1.0) };
    Ok(ACoefficients { a0, a1, da0: g.d01.iter().map(|v| s0 * v).collect(), da1: g.d10.iter().map(|v| s1 * v).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{mean_value, LinkKind};
    use crate::misclass::surrogate_mean;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_nu(rng: &mut ChaCha8Rng, p: usize) -> NuVector {
        NuVector::from_vec((0..2 * (p + 1)).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_nu_gives_half() {
        let g = gamma_param(&NuVector::zeros(3), &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!((g.g01, g.g10), (0.5, 0.5));
    }

    #[test]
    fn setting_one_intercept() {
        let mut nu2 = vec![0.0; 20];
        nu2[..5].copy_from_slice(&[1.0, 1.0, -1.5, 1.1, -1.3]);
        let nu = NuVector::from_parts(-2.15, &nu2, -2.15, &nu2).unwrap();
        let g = gamma_param(&nu, &[0.0; 20]).unwrap();
        assert_relative_eq!(g.g01, 1.0 / (1.0 + 2.15f64.exp()), epsilon = 1e-15);
        assert_relative_eq!(g.g01, 0.104331, epsilon = 1e-6);
    }

    #[test]
    fn a_coefficients_by_definition() {
        assert_eq!(a_from_gammas(0.0, 0.0, 1), (0.0, 1.0));
        let (a0, a1) = a_from_gammas(0.1, 0.2, 0);
        assert_relative_eq!(a0, 0.9, epsilon = 1e-15);
        assert_relative_eq!(a1, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn gradients_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..50 {
            let p = 3;
            let nu = random_nu(&mut rng, p);
            let z: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ys = rng.random_range(0..2u8);
            let a = a_coefficients(&nu, ys, &z).unwrap();
            let g = gamma_param(&nu, &z).unwrap();
            for k in 0..nu.len() {
                let mut up = nu.clone();
                let mut dn = nu.clone();
                up.as_mut_slice()[k] += h;
                dn.as_mut_slice()[k] -= h;
                let (u01, u10) = up.gammas(&z);
                let (d01, d10) = dn.gammas(&z);
                assert!((g.d01[k] - (u01 - d01) / (2.0 * h)).abs() < 1e-8);
                assert!((g.d10[k] - (u10 - d10) / (2.0 * h)).abs() < 1e-8);
                let au = a_coefficients(&up, ys, &z).unwrap();
                let ad = a_coefficients(&dn, ys, &z).unwrap();
                assert!((a.da0[k] - (au.a0 - ad.a0) / (2.0 * h)).abs() < 1e-8);
                assert!((a.da1[k] - (au.a1 - ad.a1) / (2.0 * h)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn a_complements_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let nu = random_nu(&mut rng, 2);
            let z = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let c0 = a_coefficients(&nu, 0, &z).unwrap();
            let c1 = a_coefficients(&nu, 1, &z).unwrap();
            assert_relative_eq!(c0.a0 + c1.a0, 1.0, epsilon = 1e-15);
            assert_relative_eq!(c0.a1 + c1.a1, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn surrogate_mean_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let nu = random_nu(&mut rng, 2);
            let z = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let bb = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let mu = mean_value(LinkKind::Logit, &bb, &z).unwrap();
            let a = a_coefficients(&nu, 1, &z).unwrap();
            let (g01, g10) = nu.gammas(&z);
            assert_relative_eq!(surrogate_mean(g01, g10, mu), a.a1 * mu + a.a0 * (1.0 - mu), epsilon = 1e-15);
        }
    }
}
