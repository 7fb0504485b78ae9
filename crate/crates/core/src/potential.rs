//! Attractive–repulsive power-law pair potential
//!
//! ```text
//! W(z) = |z|^2 / 2 + 1 / (s (|z|^2 + eps)^(s/2))      s > 0
//! W(z) = |z|^2 / 2 - log(|z|^2 + eps) / 2             s = 0
//! ```
//!
//! The quadratic term attracts, the Riesz term repels. Both branches share
//! one gradient formula,
//!
//! ```text
//! grad W(z) = z (1 - (|z|^2 + eps)^(-(s+2)/2))
//! ```
//!
//! so two particles at unit separation are in equilibrium when `eps = 0`.

use crate::error::{EfsError, Result};
use crate::particles::norm_sq;

/// Exponent `s` and regularizer `epsilon` of the pair potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialParams {
    s: f64,
    epsilon: f64,
}

impl PotentialParams {
    pub fn new(s: f64, epsilon: f64) -> Result<Self> {
        if !s.is_finite() || s < 0.0 {
            return Err(EfsError::invalid(format!(
                "exponent s must be finite and >= 0, got {s}"
            )));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(EfsError::invalid(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(PotentialParams { s, epsilon })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Whether `d - 2 <= s < d`, the range in which the mean-field minimizer
    /// is the uniform ball.
    pub fn in_ball_regime(&self, d: usize) -> bool {
        let d = d as f64;
        d - 2.0 <= self.s && self.s < d
    }

    pub(crate) fn require_positive_epsilon(&self) -> Result<()> {
        if self.epsilon > 0.0 {
            Ok(())
        } else {
            Err(EfsError::Singularity(
                "curvature bounds need epsilon > 0".into(),
            ))
        }
    }

    /// Pair potential as a function of the squared separation.
    #[inline]
    pub(crate) fn value_sq(&self, r2: f64) -> Result<f64> {
        let a = r2 + self.epsilon;
        if a == 0.0 {
            return Err(singular());
        }
        Ok(if self.s == 0.0 {
            0.5 * r2 - 0.5 * a.ln()
        } else {
            0.5 * r2 + 1.0 / (self.s * a.powf(0.5 * self.s))
        })
    }

    /// Radial gradient factor `1 - (r2 + eps)^(-(s+2)/2)`; the gradient is
    /// this factor times `z`.
    #[inline]
    pub(crate) fn grad_factor_sq(&self, r2: f64) -> Result<f64> {
        let a = r2 + self.epsilon;
        if a == 0.0 {
            return Err(singular());
        }
        Ok(1.0 - self.repulsion_sq(a))
    }

    /// `a^(-(s+2)/2)` with the two common exponents special-cased.
    #[inline]
    fn repulsion_sq(&self, a: f64) -> f64 {
        if self.s == 0.0 {
            1.0 / a
        } else if self.s == 1.0 {
            1.0 / (a * a.sqrt())
        } else {
            a.powf(-0.5 * (self.s + 2.0))
        }
    }
}

fn singular() -> EfsError {
    EfsError::Singularity("pair potential evaluated at zero separation with epsilon = 0".into())
}

fn check_finite(z: &[f64]) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EfsError::invalid("non-finite separation vector"))
    }
}

pub fn potential_value(z: &[f64], p: &PotentialParams) -> Result<f64> {
    check_finite(z)?;
    p.value_sq(norm_sq(z))
}

pub fn potential_gradient(z: &[f64], p: &PotentialParams) -> Result<Vec<f64>> {
    check_finite(z)?;
    let f = p.grad_factor_sq(norm_sq(z))?;
    Ok(z.iter().map(|v| v * f).collect())
}

/// Uniform bound on the operator norm of the pair Hessian,
/// `1 + (s + 3) eps^(-(s+2)/2)`.
pub fn pair_hessian_spectral_bound(p: &PotentialParams) -> Result<f64> {
    p.require_positive_epsilon()?;
    Ok(1.0 + (p.s + 3.0) * p.epsilon.powf(-0.5 * (p.s + 2.0)))
}

/// Step-size bound `(n - 1) / (1 + s^2 eps^(-s/2 - 1))` for the joint
/// proximal problem over all `n` particles.
///
/// The constant comes from a variant of the potential whose repulsive term
/// carries the opposite sign, so it is reported for reference only; the
/// backward pass guards convexity with [`pair_hessian_spectral_bound`].
pub fn joint_prox_step_bound(n: usize, p: &PotentialParams) -> Result<f64> {
    if n < 2 {
        return Err(EfsError::invalid("joint step bound needs n >= 2"));
    }
    p.require_positive_epsilon()?;
    let m = p.s;
    Ok((n as f64 - 1.0) / (1.0 + m * m * p.epsilon.powf(-0.5 * m - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::EfsRng;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn params(s: f64, eps: f64) -> PotentialParams {
        PotentialParams::new(s, eps).unwrap()
    }

    fn random_direction(rng: &mut EfsRng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = norm_sq(&v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn value_examples() {
        let unit = [0.6, 0.8];
        assert!((potential_value(&unit, &params(2.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(potential_value(&[2.0, 0.0], &params(1.0, 0.0)).unwrap(), 2.5);
        assert!((potential_value(&unit, &params(0.0, 0.0)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        for s in [0.0, 1.0, 2.0, 7.5] {
            let g = potential_gradient(&[1.0, 0.0], &params(s, 0.0)).unwrap();
            assert_eq!(g, vec![0.0, 0.0]);
            let g0 = potential_gradient(&[0.0, 0.0, 0.0], &params(s, 0.5)).unwrap();
            assert!(g0.iter().all(|&v| v == 0.0));
        }
        let g = potential_gradient(&[2.0, 0.0], &params(1.0, 0.0)).unwrap();
        assert_eq!(g, vec![1.75, 0.0]);
    }

    #[test]
    fn singular_at_origin_without_regularizer() {
        let err = potential_value(&[0.0, 0.0], &params(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, EfsError::Singularity(_)));
        assert!(potential_gradient(&[0.0], &params(1.0, 0.0)).is_err());
        assert!(potential_value(&[f64::NAN, 0.0], &params(1.0, 1.0)).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PotentialParams::new(-1.0, 0.1).is_err());
        assert!(PotentialParams::new(1.0, -0.1).is_err());
        assert!(PotentialParams::new(f64::INFINITY, 0.1).is_err());
    }

    #[test]
    fn spectral_bound_examples() {
        assert_eq!(pair_hessian_spectral_bound(&params(0.0, 1.0)).unwrap(), 4.0);
        assert_eq!(pair_hessian_spectral_bound(&params(2.0, 1.0)).unwrap(), 6.0);
        let l = pair_hessian_spectral_bound(&params(1.0, 0.001)).unwrap();
        assert!((l - 126_492.1).abs() < 0.1, "{l}");
        assert!(pair_hessian_spectral_bound(&params(1.0, 0.0)).is_err());
    }

    #[test]
    fn joint_bound_examples() {
        assert_eq!(joint_prox_step_bound(2, &params(1.0, 1.0)).unwrap(), 0.5);
        let b = joint_prox_step_bound(400, &params(1.0, 0.001)).unwrap();
        assert!((b - 399.0 / (1.0 + 0.001f64.powf(-1.5))).abs() < 1e-15);
        assert!((b - 0.01262).abs() < 1e-5);
        assert_eq!(joint_prox_step_bound(2, &params(0.0, 1.0)).unwrap(), 1.0);
        assert!(joint_prox_step_bound(2, &params(1.0, 0.0)).is_err());
    }

    #[test]
    fn regime() {
        assert!(params(0.0, 0.1).in_ball_regime(2));
        assert!(params(1.0, 0.1).in_ball_regime(2));
        assert!(!params(2.0, 0.1).in_ball_regime(2));
        assert!(params(13.0, 0.1).in_ball_regime(15));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = EfsRng::new(11);
        let mut checked = 0;
        for &s in &[0.0, 1.0, 2.0, 13.0] {
            for &eps in &[1e-3, 1.0] {
                let p = params(s, eps);
                for _ in 0..100 {
                    let r = 0.1 * 100f64.powf(rng.uniform());
                    let z: Vec<f64> = random_direction(&mut rng, 3)
                        .into_iter()
                        .map(|v| v * r)
                        .collect();
                    let g = potential_gradient(&z, &p).unwrap();
                    let h = 1e-6 * r;
                    let fd: Vec<f64> = (0..3)
                        .map(|k| {
                            let mut zp = z.clone();
                            let mut zm = z.clone();
                            zp[k] += h;
                            zm[k] -= h;
                            (potential_value(&zp, &p).unwrap() - potential_value(&zm, &p).unwrap())
                                / (2.0 * h)
                        })
                        .collect();
                    let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    let scale = norm_sq(&g).sqrt().max(1.0);
                    assert!(diff / scale < 1e-6, "s={s} eps={eps} r={r}: {g:?} vs {fd:?}");
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 800);
    }

    #[test]
    fn gradient_continuous_as_s_vanishes() {
        let mut rng = EfsRng::new(5);
        for _ in 0..50 {
            let z = [rng.uniform_range(-3.0, 3.0), rng.uniform_range(-3.0, 3.0)];
            let a = potential_gradient(&z, &params(1e-9, 1e-3)).unwrap();
            let b = potential_gradient(&z, &params(0.0, 1e-3)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn hessian_within_spectral_bound() {
        let mut rng = EfsRng::new(9);
        for &(s, eps) in &[(0.0, 1e-3), (1.0, 1e-3), (1.0, 0.1), (2.0, 1.0), (13.0, 0.5)] {
            let p = params(s, eps);
            let bound = pair_hessian_spectral_bound(&p).unwrap();
            for i in 0..100 {
                // Cover the core, where curvature peaks, as well as the tail.
                let r = if i % 2 == 0 { eps.sqrt() * rng.uniform() * 3.0 } else { 5.0 * rng.uniform() };
                let z: Vec<f64> = random_direction(&mut rng, 3).into_iter().map(|v| v * r).collect();
                let h = 1e-7 * eps.sqrt().max(1e-3);
                let mut m = DMatrix::zeros(3, 3);
                for k in 0..3 {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[k] += h;
                    zm[k] -= h;
                    let gp = potential_gradient(&zp, &p).unwrap();
                    let gm = potential_gradient(&zm, &p).unwrap();
                    for row in 0..3 {
                        m[(row, k)] = (gp[row] - gm[row]) / (2.0 * h);
                    }
                }
                let sym = (&m + m.transpose()) * 0.5;
                let eig = SymmetricEigen::new(sym);
                let norm = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                assert!(norm <= bound * (1.0 + 1e-6), "s={s} eps={eps} r={r}: {norm} > {bound}");
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn radial_and_odd(x in -5.0f64..5.0, y in -5.0f64..5.0, angle in 0.0f64..std::f64::consts::TAU, s in 0.0f64..6.0) {
                let p = params(s, 1e-3);
                let z = [x, y];
                let (c, sn) = (angle.cos(), angle.sin());
                let rz = [c * x - sn * y, sn * x + c * y];
                let v = potential_value(&z, &p).unwrap();
                let rv = potential_value(&rz, &p).unwrap();
                prop_assert!((v - rv).abs() <= 1e-12 * v.abs().max(1.0));

                let g = potential_gradient(&z, &p).unwrap();
                let rg = potential_gradient(&rz, &p).unwrap();
                let expect = [c * g[0] - sn * g[1], sn * g[0] + c * g[1]];
                for k in 0..2 {
                    prop_assert!((rg[k] - expect[k]).abs() <= 1e-10 * g[0].abs().max(g[1].abs()).max(1.0));
                }

                let neg = potential_gradient(&[-x, -y], &p).unwrap();
                prop_assert_eq!(neg[0], -g[0]);
                prop_assert_eq!(neg[1], -g[1]);
            }
        }
    }
}
