use super::ReplayEntry;
use crate::error::{Error, Result};

/// Discounted value targets for the first `unroll + 1` positions of a
/// `2 * unroll + 1` window.
///
/// The recursion runs backwards from the last entry's mean root return,
/// which serves as the bootstrap (it already carries one discount factor,
/// being a rollout return from a root whose own predicted reward is zero):
///
/// ```text
/// T[2L]    = gmean[2L]
/// T[m]     = reward[m] + (done[m] ? 0 : gamma * T[m + 1])
/// targets  = T[0..=L]
/// ```
///
/// Termination truncates the chain, so targets past an episode boundary
/// collapse to the padded zeros.
pub fn compute_value_targets(
    entries: &[ReplayEntry],
    gamma: f64,
    unroll: usize,
) -> Result<Vec<f64>> {
    let need = 2 * unroll + 1;
    if entries.len() < need {
        return Err(Error::SequenceTooShort {
            need,
            got: entries.len(),
        });
    }
    let last = need - 1;
    let mut chained = entries[last].mean_root_return;
    let mut targets = vec![0.0; need];
    targets[last] = chained;
    for m in (0..last).rev() {
        chained = entries[m].reward
            + if entries[m].done {
                0.0
            } else {
                gamma * chained
            };
        targets[m] = chained;
    }
    targets.truncate(unroll + 1);
    Ok(targets)
}

#[cfg(test)]
pub(crate) fn entry_with(reward: f64, done: bool, gmean: f64) -> ReplayEntry {
    ReplayEntry {
        action: 0,
        action_dist: vec![0.5, 0.5],
        mean_root_return: gmean,
        reward,
        next_state: vec![0.0],
        done,
        priority: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pure_bootstrap_when_rewards_zero() {
        // gamma = 1, L = 1, all rewards 0, bootstrap 1: every target is 1.
        let entries = vec![
            entry_with(0.0, false, 0.0),
            entry_with(0.0, false, 0.0),
            entry_with(0.0, false, 1.0),
        ];
        let t = compute_value_targets(&entries, 1.0, 1).unwrap();
        assert_eq!(t, vec![1.0, 1.0]);
    }

    #[test]
    fn worked_example_matches_direct_evaluation() {
        // L = 1, gamma = 0.5, rewards (1, 2), bootstrap 4:
        // target_0 = 1 + 0.5 * 2 + 0.25 * 4 = 3.
        let entries = vec![
            entry_with(1.0, false, 0.0),
            entry_with(2.0, false, 0.0),
            entry_with(0.0, false, 4.0),
        ];
        let t = compute_value_targets(&entries, 0.5, 1).unwrap();
        assert!((t[0] - 3.0).abs() < 1e-12);
        assert!((t[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn termination_truncates() {
        let entries = vec![
            entry_with(0.7, true, 0.0),
            entry_with(0.0, true, 0.0),
            entry_with(0.0, true, 0.0),
        ];
        let t = compute_value_targets(&entries, 0.9, 1).unwrap();
        assert_eq!(t, vec![0.7, 0.0]);
    }

    #[test]
    fn short_sequence_is_an_error() {
        let entries = vec![entry_with(0.0, false, 0.0); 4];
        assert!(compute_value_targets(&entries, 0.9, 2).is_err());
    }

    proptest! {
        /// The recursion must agree with an independent direct sum:
        /// target_l = sum_j gamma^(j-l) r_j (until a done) + gamma^(2L-l) * gmean.
        #[test]
        fn recursion_matches_direct_sum(
            rewards in proptest::collection::vec(-2.0f64..2.0, 11),
            dones in proptest::collection::vec(proptest::bool::weighted(0.15), 11),
            gmean in -3.0f64..3.0,
            gamma in 0.0f64..=1.0,
        ) {
            let unroll = 5;
            let entries: Vec<_> = (0..11)
                .map(|m| entry_with(rewards[m], dones[m], if m == 10 { gmean } else { 0.0 }))
                .collect();
            let got = compute_value_targets(&entries, gamma, unroll).unwrap();
            for l in 0..=unroll {
                let mut expect = 0.0;
                let mut disc = 1.0;
                let mut cut = false;
                for m in l..10 {
                    expect += disc * rewards[m];
                    if dones[m] {
                        cut = true;
                        break;
                    }
                    disc *= gamma;
                }
                if !cut {
                    // disc is now gamma^(2L - l): the bootstrap coefficient.
                    expect += disc * gmean;
                }
                prop_assert!((got[l] - expect).abs() < 1e-9, "l={l} got={} expect={}", got[l], expect);
            }
        }
    }
}
