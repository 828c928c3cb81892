//! Adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    /// Relative tolerance, measured against the integral of |f|.
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_segments: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-13, abs_tol: 1e-300, max_segments: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    /// Integral of |f| over the same range.
    pub abs_value: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = fc.abs() * WGK[7];
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let hl = h.abs();
    let value = resk * h;
    resabs *= hl;
    resasc *= hl;
    let mut err = ((resk - resg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Segment { a, b, value, error: err, abs_value: resabs }
}

/// Adaptive integral of `f` over `[a, b]`. `scale` is an external magnitude
/// the error may be measured against (pass 0 to use the integral itself).
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    scale: f64,
    cfg: &QuadConfig,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0, abs_value: 0.0 });
    }
    let mut segs = vec![gk15(f, a, b)];
    let mut roundoff = 0;
    loop {
        let (mut value, mut error, mut abs_value) = (0.0, 0.0, 0.0);
        let mut worst = 0;
        for (i, s) in segs.iter().enumerate() {
            value += s.value;
            error += s.error;
            abs_value += s.abs_value;
            if s.error > segs[worst].error {
                worst = i;
            }
        }
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureFailure { a, b, err: f64::NAN });
        }
        let target = cfg.abs_tol.max(cfg.rel_tol * abs_value.max(scale.abs()));
        if error <= target {
            return Ok(Quadrature { value, error, abs_value });
        }
        let s = segs[worst];
        let mid = 0.5 * (s.a + s.b);
        let resolvable = mid != s.a && mid != s.b && (s.b - s.a).abs() > 1e-15 * s.a.abs().max(s.b.abs());
        if segs.len() >= cfg.max_segments || !resolvable {
            // accept a near miss, fail on a genuine one
            if error <= 1e4 * target {
                return Ok(Quadrature { value, error, abs_value });
            }
            return Err(Error::QuadratureFailure { a, b, err: error });
        }
        let (l, r) = (gk15(f, s.a, mid), gk15(f, mid, s.b));
        // rounding noise in f: splitting neither moves the value nor shrinks the error
        let area = l.value + r.value;
        if (s.value - area).abs() <= 1e-5 * area.abs() && l.error + r.error >= 0.99 * s.error {
            roundoff += 1;
            if roundoff >= 6 {
                return Ok(Quadrature { value, error, abs_value });
            }
        }
        segs[worst] = l;
        segs.push(r);
    }
}
