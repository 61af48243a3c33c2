use super::{LengthMismatch, Stat, Undefined};

/// Number of tied pairs, Σ t(t-1)/2 over groups of equal values.
fn tied_pairs(values: &[f64]) -> u64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

fn sign(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Kendall's τb with tie correction. Undefined when either side is constant
/// or has fewer than two values.
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<Stat, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len() as u64;
    if n < 2 {
        return Ok(Stat::Undefined(Undefined::TooFewPoints));
    }
    let n0 = n * (n - 1) / 2;
    let n1 = tied_pairs(a);
    let n2 = tied_pairs(b);
    if n1 == n0 || n2 == n0 {
        return Ok(Stat::Undefined(Undefined::ConstantInput));
    }
    let mut s: i64 = 0;
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            s += sign(a[i] - a[j]) * sign(b[i] - b[j]);
        }
    }
    let denom = (((n0 - n1) * (n0 - n2)) as f64).sqrt();
    Ok(Stat::Value(s as f64 / denom))
}

/// Rank distance `(1 - τb) / 2`, in [0, 1].
pub fn kendall_tau_b_distance(a: &[f64], b: &[f64]) -> Result<Stat, LengthMismatch> {
    Ok(match kendall_tau_b(a, b)? {
        Stat::Value(tau) => Stat::Value((1.0 - tau) / 2.0),
        undefined => undefined,
    })
}
