/// Hinge loss for an (older, newer) sentence pair with unit margin: zero
/// once the newer sentence outscores the older by at least 1.
pub fn pairwise_ranking_loss(score_old: f64, score_new: f64) -> f64 {
    (score_old - score_new + 1.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn truth_table() {
        assert_eq!(pairwise_ranking_loss(0.0, 2.0), 0.0);
        assert_eq!(pairwise_ranking_loss(0.0, 0.0), 1.0);
        assert_eq!(pairwise_ranking_loss(2.0, 0.0), 3.0);
    }

    proptest! {
        #[test]
        fn non_negative_and_zero_only_past_margin(old in -50.0f64..50.0, new in -50.0f64..50.0) {
            let loss = pairwise_ranking_loss(old, new);
            prop_assert!(loss >= 0.0);
            prop_assert_eq!(loss == 0.0, new >= old + 1.0);
        }
    }
}
