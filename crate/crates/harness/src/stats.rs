//! Paired comparison statistics.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignTest {
    /// Pairs where the first sample is smaller.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

/// One-sided sign test that `a` tends to be smaller than `b`; ties are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "sign test needs paired samples");
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Less) => wins += 1,
            Some(std::cmp::Ordering::Greater) => losses += 1,
            _ => ties += 1,
        }
    }
    SignTest {
        wins,
        losses,
        ties,
        p_value: binomial_upper_tail(wins + losses, wins),
    }
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let ln2n = n as f64 * std::f64::consts::LN_2;
    let mut ln_c = 0.0;
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            total += (ln_c - ln2n).exp();
        }
    }
    total.min(1.0)
}
