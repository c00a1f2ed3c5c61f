use crate::error::{Error, Result};

/// Ordinary least squares of `ln err` on `ln n`. Returns `(slope, intercept)`.
pub fn fit_loglog_slope(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.iter().any(|&(n, e)| !(n > 0.0) || !(e > 0.0)) {
        return Err(Error::InvalidInput(
            "log-log fit needs positive abscissae and errors".into(),
        ));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k.max(1.0);
    let my = ys.iter().sum::<f64>() / k.max(1.0);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if pairs.len() < 2 || sxx <= 0.0 {
        return Err(Error::InvalidInput(
            "log-log fit needs at least two distinct abscissae".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let (s, _) = fit_loglog_slope(&[(100.0, 0.1), (400.0, 0.05), (1600.0, 0.025)]).unwrap();
        assert!((s + 0.5).abs() < 1e-12);
        let (s, b) = fit_loglog_slope(&[(10.0, 3.0), (100.0, 0.3)]).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        assert!((b - 30f64.ln()).abs() < 1e-12);
        let (s, _) = fit_loglog_slope(&[(1.0, 2.0), (5.0, 2.0), (9.0, 2.0)]).unwrap();
        assert!(s.abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(fit_loglog_slope(&[(10.0, 1.0)]).is_err());
        assert!(fit_loglog_slope(&[(10.0, 1.0), (10.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[(10.0, 0.0), (20.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[(-1.0, 1.0), (20.0, 2.0)]).is_err());
    }
}
