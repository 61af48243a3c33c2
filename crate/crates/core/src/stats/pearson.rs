use super::{LengthMismatch, Stat, Undefined};

/// Pearson's r. Undefined for fewer than two points or a zero-variance side.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Stat, LengthMismatch> {
    if x.len() != y.len() {
        return Err(LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Ok(Stat::Undefined(Undefined::TooFewPoints));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Stat::Undefined(Undefined::ConstantInput));
    }
    Ok(Stat::Value((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// `1 - |r|`, in [0, 1].
pub fn pearson_distance(x: &[f64], y: &[f64]) -> Result<Stat, LengthMismatch> {
    Ok(match pearson_r(x, y)? {
        Stat::Value(r) => Stat::Value(1.0 - r.abs()),
        undefined => undefined,
    })
}
