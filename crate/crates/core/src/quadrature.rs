//! Quadrature over uniformly spaced node values and compensated summation.

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Composite trapezoidal rule for samples spaced `h` apart.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        len => {
            let inner = compensated_sum(values[1..len - 1].iter().copied());
            h * (0.5 * (values[0] + values[len - 1]) + inner)
        }
    }
}

/// Composite Simpson rule for samples spaced `h` apart.
///
/// An odd number of intervals closes with Simpson's 3/8 rule on the last
/// three; a single interval falls back to the trapezoid.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let intervals = values.len().saturating_sub(1);
    match intervals {
        0 => 0.0,
        1 => trapezoid(values, h),
        _ if intervals.is_multiple_of(2) => simpson_even(values, h),
        3 => three_eighths(values, h),
        _ => {
            let split = intervals - 3;
            simpson_even(&values[..=split], h) + three_eighths(&values[split..], h)
        }
    }
}

fn simpson_even(values: &[f64], h: f64) -> f64 {
    let last = values.len() - 1;
    let weighted = (1..last).map(|k| {
        if k % 2 == 1 {
            4.0 * values[k]
        } else {
            2.0 * values[k]
        }
    });
    h / 3.0 * (values[0] + values[last] + compensated_sum(weighted))
}

fn three_eighths(v: &[f64], h: f64) -> f64 {
    3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_on_lines() {
        let h = 0.25;
        let v: Vec<f64> = (0..=8).map(|k| 3.0 * k as f64 * h - 1.0).collect();
        // ∫₀² (3t − 1) dt = 4
        assert!((trapezoid(&v, h) - 4.0).abs() < 1e-14);
        assert_eq!(trapezoid(&[2.0], h), 0.0);
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let f = |t: f64| t * t * t - 2.0 * t * t + 0.5;
        // ∫₀¹ f = 1/4 − 2/3 + 1/2
        let want = 0.25 - 2.0 / 3.0 + 0.5;
        for intervals in [2usize, 3, 4, 5, 7, 10] {
            let h = 1.0 / intervals as f64;
            let v: Vec<f64> = (0..=intervals).map(|k| f(k as f64 * h)).collect();
            assert!((simpson(&v, h) - want).abs() < 1e-14, "{intervals}");
        }
    }

    #[test]
    fn simpson_converges_at_fourth_order() {
        let err = |intervals: usize| {
            let h = 1.0 / intervals as f64;
            let v: Vec<f64> = (0..=intervals).map(|k| (k as f64 * h).exp()).collect();
            (simpson(&v, h) - (1.0_f64.exp() - 1.0)).abs()
        };
        let ratio = err(20) / err(40);
        assert!((ratio - 16.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
