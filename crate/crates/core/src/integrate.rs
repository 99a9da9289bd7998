//! Adaptive 7/15-point Gauss–Kronrod integration.
//!
//! Used as an independent reference by the asymptotic coefficient oracle and
//! by tests that cross-check the structured evaluators.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One G7K15 panel: (Kronrod estimate, |Kronrod - Gauss|).
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` by recursive
/// bisection. Gives up refining below a panel width of `1e-12 (b - a)`.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let min_width = 1e-12 * (b - a).abs();
    let mut total = 0.0;
    let mut stack = vec![(a, b, tol, 0u32)];
    while let Some((lo, hi, eps, depth)) = stack.pop() {
        let (val, err) = gauss_kronrod(&mut f, lo, hi);
        if err <= eps || (hi - lo).abs() < min_width || depth >= 60 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, 0.5 * eps, depth + 1));
            stack.push((lo, mid, 0.5 * eps, depth + 1));
        }
    }
    total
}

/// [`adaptive`] over consecutive breakpoints; `points` must be sorted.
pub fn adaptive_with_breaks<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], tol: f64) -> f64 {
    let share = tol / points.len().saturating_sub(1).max(1) as f64;
    points.windows(2).map(|w| adaptive(&mut f, w[0], w[1], share)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, 1e-14);
        assert!((v - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn kinked_integrand_with_breaks() {
        let v = adaptive_with_breaks(|x: f64| (x - 1.0).abs(), &[0.0, 1.0, 3.0], 1e-14);
        assert!((v - 2.5).abs() < 1e-13);
    }

    #[test]
    fn gaussian_tail_integral() {
        let v = adaptive(|t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt(), 1.0, 40.0, 1e-15);
        assert!((v - 0.158_655_253_931_457_05).abs() < 1e-14);
    }
}
