//! Small numeric helpers used throughout the crate.

/// log(sum(exp(v))) with max subtraction; tolerates `-inf` entries.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// KL(p || q) with the conventions 0 log 0 = 0 and KL = +inf whenever some
/// p_a > 0 has q_a = 0.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut acc = 0.0;
    for (&pa, &qa) in p.iter().zip(q) {
        if pa == 0.0 {
            continue;
        }
        if qa == 0.0 {
            return f64::INFINITY;
        }
        acc += pa * (pa / qa).ln();
    }
    acc
}

/// Shannon entropy in nats with 0 log 0 = 0.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .map(|&x| if x == 0.0 { 0.0 } else { x * x.ln() })
        .sum::<f64>()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

/// Infinity-norm distance between two equally sized slices.
pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0, |m, (&x, &y)| m.max((x - y).abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// FNV-1a over a byte stream; used for content fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
