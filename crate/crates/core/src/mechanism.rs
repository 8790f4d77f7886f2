//! The Gaussian mechanism on projected data and its sensitivity calibration.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Role};
use crate::{Error, Result};

/// Margin added to the Gaussian-mechanism constant so that `c^2 > 2 ln(1.25/delta)` holds strictly.
pub const CONSTANT_MARGIN: f64 = 1e-6;

/// Smallest number of projections for which the sensitivity bound is valid.
pub const MIN_PROJECTIONS: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub sigma: f64,
    pub seed: u64,
}

impl SmoothingParams {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(SmoothingParams { sigma, seed })
    }
}

/// How the squared-Frobenius bound `w` turns into an l2 sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMode {
    /// `Delta = norm_factor * sqrt(w)`: `w` bounds the squared Frobenius distance.
    #[default]
    SqrtW,
    /// `Delta = norm_factor * w`.
    W,
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every entry. Row `i` draws from its own
/// stream keyed by `(seed, i)`, so the result is independent of scheduling.
pub fn perturb(projected: ArrayView2<'_, f64>, params: &SmoothingParams) -> Array2<f64> {
    let mut out = projected.to_owned();
    if params.sigma == 0.0 {
        return out;
    }
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let mut rng = rng::stream(params.seed, Role::Perturb, i as u64, 0);
            row.iter_mut()
                .for_each(|v| *v += params.sigma * rng.sample::<f64, _>(StandardNormal));
        });
    out
}

/// Inverse of the standard normal CDF (Wichura's AS241, about 1e-16 relative accuracy).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_854_5e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_049e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// High-probability bound on `||X Theta - X' Theta||_F^2` for neighbouring data
/// matrices whose differing rows are at distance at most 1, with `n_theta`
/// random unit projections in dimension `d`:
///
/// `w = n_theta/d + (z_{1-delta}/d) * sqrt(2 n_theta (d-1)/(d+2))`.
pub fn sensitivity_bound(n_theta: usize, delta: f64, d: usize) -> Result<f64> {
    if n_theta < MIN_PROJECTIONS {
        return Err(Error::UnsupportedRegime(format!(
            "the projection sensitivity bound needs more than 30 projections, got {n_theta}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if delta >= 0.5 {
        return Err(Error::invalid(format!(
            "delta = {delta} >= 0.5 gives a non-positive normal quantile; not supported"
        )));
    }
    if d < 2 {
        return Err(Error::invalid(format!("sensitivity bound needs d >= 2, got {d}")));
    }
    let (nt, df) = (n_theta as f64, d as f64);
    let z = normal_quantile(1.0 - delta);
    Ok(nt / df + (z / df) * (2.0 * nt * (df - 1.0) / (df + 2.0)).sqrt())
}

/// The l2 sensitivity fed to the Gaussian mechanism.
pub fn l2_sensitivity(
    n_theta: usize,
    delta: f64,
    d: usize,
    norm_factor: f64,
    mode: SensitivityMode,
) -> Result<f64> {
    if !(norm_factor > 0.0 && norm_factor.is_finite()) {
        return Err(Error::invalid(format!("norm_factor must be > 0, got {norm_factor}")));
    }
    let w = sensitivity_bound(n_theta, delta, d)?;
    Ok(match mode {
        SensitivityMode::SqrtW => norm_factor * w.sqrt(),
        SensitivityMode::W => norm_factor * w,
    })
}

/// `sqrt(2 ln(1.25/delta))`, the classical Gaussian-mechanism constant without margin.
pub fn gaussian_constant(delta: f64) -> f64 {
    (2.0 * (1.25 / delta).ln()).sqrt()
}

/// Noise level that makes one release `(epsilon, delta)`-DP with the default
/// `sqrt(w)` sensitivity.
pub fn sigma_for_epsilon(
    epsilon: f64,
    delta: f64,
    n_theta: usize,
    d: usize,
    norm_factor: f64,
) -> Result<f64> {
    sigma_for_epsilon_with_mode(epsilon, delta, n_theta, d, norm_factor, SensitivityMode::SqrtW)
}

pub fn sigma_for_epsilon_with_mode(
    epsilon: f64,
    delta: f64,
    n_theta: usize,
    d: usize,
    norm_factor: f64,
    mode: SensitivityMode,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be finite and > 0, got {epsilon}")));
    }
    let sensitivity = l2_sensitivity(n_theta, delta, d, norm_factor, mode)?;
    let c = gaussian_constant(delta) + CONSTANT_MARGIN;
    Ok(c * sensitivity / epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use statrs::function::erf::erfc;

    // Bisection on the normal tail erfc(|x|/sqrt 2)/2, independent of normal_quantile.
    // The upper tail is solved for 1 - p, which is exact for p > 0.5.
    fn quantile_oracle(p: f64) -> f64 {
        let (tail, sign) = if p > 0.5 { (1.0 - p, 1.0) } else { (p, -1.0) };
        let upper = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
        let (mut lo, mut hi) = (0.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if upper(mid) > tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        sign * 0.5 * (lo + hi)
    }

    #[test]
    fn normal_quantile_matches_oracle() {
        for &p in &[1e-12, 1e-8, 1e-5, 0.001, 0.02, 0.1, 0.3, 0.5, 0.7, 0.95, 0.99999, 1.0 - 1e-10] {
            let (got, want) = (normal_quantile(p), quantile_oracle(p));
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn perturb_zero_sigma_is_identity() {
        let m = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.37 - 1.0);
        let out = perturb(m.view(), &SmoothingParams::new(0.0, 5).unwrap());
        assert_eq!(out, m);
    }

    #[test]
    fn perturb_is_deterministic() {
        let m = Array2::<f64>::zeros((10, 7));
        let p = SmoothingParams::new(1.5, 42).unwrap();
        assert_eq!(perturb(m.view(), &p), perturb(m.view(), &p));
        assert_ne!(perturb(m.view(), &p), perturb(m.view(), &SmoothingParams::new(1.5, 43).unwrap()));
    }

    #[test]
    fn perturb_noise_scale() {
        let m = Array2::<f64>::zeros((1000, 100));
        let out = perturb(m.view(), &SmoothingParams::new(2.0, 7).unwrap());
        let n = out.len() as f64;
        let mean = out.sum() / n;
        let var = out.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0);
        assert!((var.sqrt() - 2.0).abs() <= 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(SmoothingParams::new(-0.1, 0).is_err());
        assert!(SmoothingParams::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn sensitivity_reference_value() {
        let w = sensitivity_bound(70, 1e-5, 8).unwrap();
        let want = 70.0 / 8.0 + quantile_oracle(1.0 - 1e-5) / 8.0 * (2.0 * 70.0 * 7.0 / 10.0f64).sqrt();
        assert!(((w - want) / want).abs() <= 1e-6);
        assert!((w - 14.03).abs() < 0.01, "{w}");
    }

    #[test]
    fn sensitivity_regime_errors() {
        assert!(matches!(sensitivity_bound(30, 1e-5, 8), Err(Error::UnsupportedRegime(_))));
        assert!(matches!(sensitivity_bound(31, 0.0, 8), Err(Error::InvalidArgument(_))));
        assert!(matches!(sensitivity_bound(31, 1.0, 8), Err(Error::InvalidArgument(_))));
        assert!(matches!(sensitivity_bound(31, 0.5, 8), Err(Error::InvalidArgument(_))));
        assert!(matches!(sensitivity_bound(31, 1e-5, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sensitivity_monotone_on_grid() {
        for &nt in &[31usize, 70, 200, 1000] {
            for &delta in &[1e-8, 1e-5, 1e-2, 0.2] {
                for &d in &[2usize, 3, 8, 48, 100] {
                    let w = sensitivity_bound(nt, delta, d).unwrap();
                    assert!(sensitivity_bound(2 * nt, delta, d).unwrap() > w);
                    assert!(sensitivity_bound(nt, delta, d + 1).unwrap() < w);
                }
            }
        }
    }

    #[test]
    fn sigma_for_epsilon_examples() {
        let s10 = sigma_for_epsilon(10.0, 1e-5, 70, 8, 2.0).unwrap();
        let s20 = sigma_for_epsilon(20.0, 1e-5, 70, 8, 2.0).unwrap();
        assert!((s10 / s20 - 2.0).abs() < 1e-12);
        assert!((s10 - 3.63).abs() < 0.01, "{s10}");
        let half = sigma_for_epsilon(10.0, 1e-5, 70, 8, 1.0).unwrap();
        assert!((s10 / half - 2.0).abs() < 1e-12);
        for eps in [0.5, 1.0, 3.0, 7.0] {
            let s = sigma_for_epsilon(eps, 1e-5, 70, 8, 2.0).unwrap();
            assert!((s * eps - s10 * 10.0).abs() < 1e-9);
        }
        assert!(sigma_for_epsilon(0.0, 1e-5, 70, 8, 2.0).is_err());
        assert!(sigma_for_epsilon(-1.0, 1e-5, 70, 8, 2.0).is_err());
    }

    #[test]
    fn w_mode_uses_unsquared_bound() {
        let w = sensitivity_bound(70, 1e-5, 8).unwrap();
        let s = l2_sensitivity(70, 1e-5, 8, 2.0, SensitivityMode::W).unwrap();
        assert!((s - 2.0 * w).abs() < 1e-12);
    }
}
