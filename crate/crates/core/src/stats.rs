//! Descriptive statistics, correlations and the Mann–Whitney U test.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// 1-based ranks with ties assigned their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

const EXACT_LIMIT: usize = 50;

/// Two-sided Mann–Whitney U test. Uses the exact null distribution when
/// there are no ties and both samples are small, otherwise the normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> MannWhitney {
    let n1 = x.len();
    let n2 = y.len();
    assert!(n1 > 0 && n2 > 0, "mann_whitney_u needs two non-empty samples");
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let nn = (n1 * n2) as f64;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut has_ties = false;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        if j - i > 1 {
            has_ties = true;
            tie_term += t * t * t - t;
        }
        i = j;
    }

    if !has_ties && n1 + n2 <= EXACT_LIMIT {
        let counts = u_null_counts(n1, n2);
        let total: f64 = counts.iter().sum();
        let u = u1.round() as usize;
        let lower: f64 = counts[..=u].iter().sum::<f64>() / total;
        let upper: f64 = counts[u..].iter().sum::<f64>() / total;
        let p = (2.0 * lower.min(upper)).min(1.0);
        return MannWhitney {
            u: u1,
            p_value: p,
            exact: true,
        };
    }

    let n = (n1 + n2) as f64;
    let var = nn / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let diff = (u1 - nn / 2.0).abs();
        let z = (diff - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * (1.0 - normal.cdf(z))).min(1.0)
    };
    MannWhitney {
        u: u1,
        p_value: p,
        exact: false,
    }
}

/// Number of rank arrangements giving each U value under the null.
fn u_null_counts(n1: usize, n2: usize) -> Vec<f64> {
    // c[a][b][u]: arrangements of a x-values and b y-values with U = u
    let max_u = n1 * n2;
    let mut table = vec![vec![vec![0.0f64; max_u + 1]; n2 + 1]; n1 + 1];
    for a in 0..=n1 {
        for b in 0..=n2 {
            if a == 0 || b == 0 {
                table[a][b][0] = 1.0;
                continue;
            }
            for u in 0..=a * b {
                // largest value is an x: it beats all b y-values
                let from_x = if u >= b { table[a - 1][b][u - b] } else { 0.0 };
                let from_y = table[a][b - 1][u];
                table[a][b][u] = from_x + from_y;
            }
        }
    }
    table[n1][n2].clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn pearson_matches_hand_computation() {
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-15);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn exact_u_distribution_small_case() {
        // n1 = n2 = 2: U ∈ {0,1,2,2,3,4} over the 6 arrangements
        assert_eq!(u_null_counts(2, 2), vec![1.0, 1.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn mann_whitney_separated_samples() {
        let x: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mw = mann_whitney_u(&x, &y);
        assert!(mw.exact);
        assert_eq!(mw.u, 100.0);
        // 2 / C(20,10)
        assert!((mw.p_value - 2.0 / 184_756.0).abs() < 1e-15);
    }

    #[test]
    fn mann_whitney_identical_samples_give_p_one() {
        let x = [0.3, 0.3, 0.3];
        let mw = mann_whitney_u(&x, &x);
        assert_eq!(mw.p_value, 1.0);
        let z = [0.1, 0.5, 0.9, 0.2];
        assert!(mann_whitney_u(&z, &z).p_value > 0.9);
    }

    #[test]
    fn std_of_single_value_is_zero() {
        assert_eq!(sample_std(&[3.0]), 0.0);
        assert!((sample_std(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }
}
