//! Small regression helpers.

/// Ordinary least-squares line `y ≈ a + b x`; returns `(a, b)`.
pub fn line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    line(x, y).1
}

/// Residuals of the least-squares line.
pub fn residuals(x: &[f64], y: &[f64]) -> Vec<f64> {
    let (a, b) = line(x, y);
    x.iter().zip(y).map(|(u, v)| v - a - b * u).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|t| 3.0 - 0.5 * t).collect();
        let (a, b) = line(&x, &y);
        assert!((a - 3.0).abs() < 1e-14 && (b + 0.5).abs() < 1e-14);
    }
}
