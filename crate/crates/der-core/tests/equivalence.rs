//! The central algebraic guarantees of transition division:
//!
//! 1. Replaying every divided single-agent transition with unit weight
//!    accumulates exactly the joint-loss gradient on the shared agent
//!    network.
//! 2. Each divided transition's TD residual equals the joint residual
//!    scaled by the mixer's sensitivity to that agent's utility.
//!
//! Both are checked over random networks, random transitions, both mixer
//! kinds, and team sizes 2, 3, and 5.

mod common;

use common::{divided_side, joint_side, random_transition, relative_gap, scrambled_store, small_dims};
use der_core::nets::{agent_input, MixerKind, Templates};
use der_core::replay::{individual_reward, individual_td};
use der_core::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GRAD_REL_TOL: f64 = 1e-6;
const DIVISION_ABS_TOL: f64 = 1e-9;
const DRAWS_PER_SETTING: usize = 20;

#[test]
fn summed_individual_gradients_equal_joint_gradient() {
    let gamma = 0.97;
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for kind in [MixerKind::Vdn, MixerKind::Monotonic] {
        for n_agents in [2usize, 3, 5] {
            let dims = small_dims(n_agents);
            let tpls = Templates::new(&dims, kind).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(900 + n_agents as u64);
            for draw in 0..DRAWS_PER_SETTING {
                let store = scrambled_store(&dims, kind, 7000 + draw as u64);
                let tr = random_transition(&dims, &mut rng);
                let joint = joint_side(&tpls, &store, &tr, gamma);
                let (summed, _) = divided_side(&tpls, &store, &tr, gamma);
                let gap = relative_gap(&joint.agent_grads, &summed);
                assert!(
                    gap <= GRAD_REL_TOL,
                    "{kind:?} N={n_agents} draw {draw}: relative gradient gap {gap:e}"
                );
                worst = worst.max(gap);
                checked += 1;
            }
        }
    }
    assert!(checked >= 100, "only {checked} draws");
    println!("gradient equivalence: {checked} draws, worst relative gap {worst:e}");
}

#[test]
fn divided_td_errors_factor_the_joint_residual() {
    let gamma = 0.93;
    let mut checked = 0usize;
    for kind in [MixerKind::Vdn, MixerKind::Monotonic] {
        for n_agents in [2usize, 3, 5] {
            let dims = small_dims(n_agents);
            let tpls = Templates::new(&dims, kind).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1700 + n_agents as u64);
            for draw in 0..DRAWS_PER_SETTING {
                let store = scrambled_store(&dims, kind, 100 + draw as u64);
                let tr = random_transition(&dims, &mut rng);

                // Mixer sensitivities at the taken actions.
                let q_chosen: Vec<f64> = (0..n_agents)
                    .map(|i| {
                        let x = agent_input(&dims, &tr.obs[i], tr.last_actions[i], i);
                        tpls.agent.eval(&store.agent, &x).unwrap().data()[tr.actions[i]]
                    })
                    .collect();
                let mix = tpls
                    .mixer
                    .eval(&store.mixer, &q_chosen, &Tensor::row(&tr.state))
                    .unwrap();
                let joint = joint_side(&tpls, &store, &tr, gamma);
                let delta_tot = joint.y - joint.q_tot;

                let (_, candidates) = divided_side(&tpls, &store, &tr, gamma);
                assert_eq!(candidates.len(), n_agents);
                for c in &candidates {
                    let expected = delta_tot * mix.grads_g[c.agent];
                    assert!(
                        (c.td_error - expected).abs() <= DIVISION_ABS_TOL,
                        "{kind:?} N={n_agents} draw {draw} agent {}: td {} vs {}",
                        c.agent,
                        c.td_error,
                        expected
                    );
                    // The stored residual is consistent with its parts.
                    let recomputed = individual_td(c.reward, gamma, c.q_target, {
                        let x = agent_input(&dims, &tr.obs[c.agent], tr.last_actions[c.agent], c.agent);
                        tpls.agent.eval(&store.agent, &x).unwrap().data()[c.action]
                    });
                    assert!((c.td_error - recomputed).abs() <= DIVISION_ABS_TOL);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked >= 100, "only {checked} checks");
    println!("division identity: {checked} per-agent residuals checked");
}

/// Pencil-and-paper case: R = 1, gamma = 0.99, team value 2 with target 3,
/// one agent holding utility 0.5 with target 1 and unit sensitivity. Its
/// individual reward must come out 1.48 and its residual 1.97.
#[test]
fn hand_worked_reward_and_residual() {
    let r_i = individual_reward(1.0, 0.99, 2.0, 3.0, 0.5, 1.0, 1.0);
    assert!((r_i - 1.48).abs() < 1e-12, "reward {r_i}");
    let td = individual_td(r_i, 0.99, 1.0, 0.5);
    assert!((td - 1.97).abs() < 1e-12, "residual {td}");
}

/// With the additive mixer every sensitivity is exactly one, so each
/// divided residual must equal the joint residual bit for bit.
#[test]
fn additive_mixer_residuals_are_exactly_joint() {
    let gamma = 0.9;
    let dims = small_dims(3);
    let tpls = Templates::new(&dims, MixerKind::Vdn).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for draw in 0..10 {
        let store = scrambled_store(&dims, MixerKind::Vdn, 313 + draw);
        let tr = random_transition(&dims, &mut rng);
        let joint = joint_side(&tpls, &store, &tr, gamma);
        let delta_tot = joint.y - joint.q_tot;
        let (_, candidates) = divided_side(&tpls, &store, &tr, gamma);
        for c in &candidates {
            assert!(
                (c.td_error - delta_tot).abs() <= 1e-12,
                "draw {draw}: {} vs {delta_tot}",
                c.td_error
            );
        }
    }
}
