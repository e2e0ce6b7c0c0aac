use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mdp, Policy};

/// Generator used for every stochastic routine. ChaCha output is identical
/// across platforms, which the CSV determinism contract relies on.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One transition `(A_k, R(S_k, A_k), S_{k+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Inverse-CDF draw over `probs` in index order. Falls back to the last index
/// with positive mass when rounding leaves `u` above the accumulated total.
fn inverse_cdf(probs: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draws `A ~ pi(.|s)` then `S' ~ P_A(s, .)`.
///
/// Exactly two uniforms are consumed per call, action first, so that runs
/// sharing a seed see the same trajectory regardless of which algorithm
/// consumes it.
pub fn sample_step(mdp: &Mdp, pi: &Policy, s: usize, rng: &mut Rng) -> Step {
    let u_action: f64 = rng.gen();
    let u_state: f64 = rng.gen();
    let action = inverse_cdf(pi.row(s).iter().copied(), u_action);
    let p = mdp.transition(action);
    let next_state = inverse_cdf((0..mdp.n_states()).map(|s2| p[(s, s2)]), u_state);
    Step {
        action,
        reward: mdp.reward(s, action),
        next_state,
    }
}
