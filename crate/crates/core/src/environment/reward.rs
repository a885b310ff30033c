//! Reward and payment rules of the incentive programme.

/// Cents paid to a participant for reducing consumption `e` below its
/// baseline `b` at incentive `p` (cents/kW). Never negative: consuming above
/// the baseline is not penalised.
pub fn participant_payout(incentive: f64, cbl: f64, consumption: f64) -> f64 {
    incentive * (cbl - consumption).max(0.0)
}

/// Payout minus the dissatisfaction of every appliance.
pub fn participant_reward(payout: f64, costs: &[f64]) -> f64 {
    payout - costs.iter().sum::<f64>()
}

/// Consumption above the target, kW.
pub fn surplus(aggregate: f64, target: f64) -> f64 {
    (aggregate - target).max(0.0)
}

/// Aggregator reward: weighted penalty on consumption above the target plus
/// the incentives paid out. Never positive.
pub fn aggregator_reward(aggregate: f64, target: f64, payouts: &[f64], rho: f64) -> f64 {
    let paid: f64 = payouts.iter().sum();
    -(rho * surplus(aggregate, target) + (1.0 - rho) * paid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn payout_examples() {
        assert_eq!(participant_payout(5.0, 10.0, 8.0), 10.0);
        assert_eq!(participant_payout(5.0, 10.0, 12.0), 0.0);
        assert_eq!(participant_payout(5.0, 10.0, 10.0), 0.0);
        assert_eq!(participant_payout(0.0, 10.0, 2.0), 0.0);
    }

    #[test]
    fn participant_reward_examples() {
        assert!((participant_reward(10.0, &[0.2, 1.6]) - 8.2).abs() < 1e-12);
        assert_eq!(participant_reward(7.5, &[]), 7.5);
        assert_eq!(participant_reward(0.0, &[12.0]), -12.0);
    }

    #[test]
    fn aggregator_reward_examples() {
        assert_eq!(aggregator_reward(90.0, 80.0, &[20.0], 0.5), -15.0);
        assert_eq!(aggregator_reward(70.0, 80.0, &[0.0, 0.0], 0.5), 0.0);
        assert_eq!(aggregator_reward(84.0, 80.0, &[3.0, 9.0], 1.0), -4.0);
    }

    proptest! {
        #[test]
        fn payout_is_nonnegative_and_monotone(p in 0.0f64..20.0, dp in 0.0f64..5.0, b in 0.0f64..20.0, e in 0.0f64..20.0, de in 0.0f64..5.0) {
            let u = participant_payout(p, b, e);
            prop_assert!(u >= 0.0);
            prop_assert!(participant_payout(p + dp, b, e) >= u);
            prop_assert!(participant_payout(p, b, e + de) <= u);
        }

        #[test]
        fn aggregator_reward_sign(e in 0.0f64..200.0, k in 0.1f64..200.0, payouts in proptest::collection::vec(0.0f64..50.0, 0..6), rho in 0.01f64..0.99) {
            let r = aggregator_reward(e, k, &payouts, rho);
            prop_assert!(r <= 0.0);
            let ideal = e <= k && payouts.iter().all(|&u| u == 0.0);
            prop_assert_eq!(r == 0.0, ideal);
        }
    }
}
