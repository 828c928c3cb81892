use crate::error::{Error, Result};

/// Bisection for a sign change of `f` on `[lo, hi]`. `f_lo` and `f_hi` are the
/// known values (or just their signs) at the ends. Midpoints are geometric
/// while the bracket spans more than a factor of four on the positive axis.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, f_lo: f64, f_hi: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(f_lo * f_hi <= 0.0) {
        return Err(Error::RootNotBracketed(format!(
            "no sign change on [{lo}, {hi}] ({f_lo}, {f_hi})"
        )));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    let lo_neg = f_lo < 0.0;
    for _ in 0..2000 {
        if (hi - lo).abs() <= rel_tol * lo.abs().max(hi.abs()) {
            break;
        }
        let mid = if lo > 0.0 && hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for the maximum of `f` on `[a, b]`, working in
/// `ln x` when `log_axis` is set.
pub fn golden_max<F>(mut f: F, a: f64, b: f64, rel_tol: f64, log_axis: bool) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let to = |x: f64| if log_axis { x.ln() } else { x };
    let from = |u: f64| if log_axis { u.exp() } else { u };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (to(a), to(b));
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = f(from(c))?;
    let mut fd = f(from(d))?;
    for _ in 0..500 {
        let (xl, xh) = (from(lo), from(hi));
        if (xh - xl).abs() <= rel_tol * xl.abs().max(xh.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(from(c))?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(from(d))?;
        }
    }
    Ok(from(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, -2.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn bisect_decreasing_wide_bracket() {
        let r = bisect(|x| Ok(1.0 / x - 1e3), 1e-8, 1.0, 1.0, -1.0, 1e-12).unwrap();
        assert!((r - 1e-3).abs() < 1e-14);
    }

    #[test]
    fn bisect_rejects_same_sign() {
        assert!(matches!(bisect(|x| Ok(x), 1.0, 2.0, 1.0, 2.0, 1e-10), Err(Error::RootNotBracketed(_))));
    }

    #[test]
    fn golden_finds_kink() {
        let x = golden_max(|x| Ok(if x < 1.0 { x } else { 2.0 - x }), 0.1, 10.0, 1e-10, true).unwrap();
        assert!((x - 1.0).abs() < 1e-9);
    }
}
