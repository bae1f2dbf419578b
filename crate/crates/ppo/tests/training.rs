use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use upmsp_core::atcsr::{solve_atcsr, AtcsrParams};
use upmsp_core::exact::solve_exact_scalarized;
use upmsp_core::{build_graph, generate_instance, validate_schedule, GenParams, ProblemInstance, RewardConfig, SchedulingEnv};
use upmsp_nn::{forward, grad_check, GraphBatch, PolicyConfig, PolicyParams, Tape, Tensor};
use upmsp_ppo::eval::solve_greedy;
use upmsp_ppo::{
    compute_gae, curve_csv, evaluate_policy, initial_params, ppo_loss, score, train, train_with, InstanceSampler,
    LossConfig, PpoError, TrainConfig, Transition,
};

/// Advantages straight from the definition: a double sum of discounted TD
/// residuals that stops at the end of the episode.
fn gae_direct(r: &[f64], v: &[f64], done: &[bool], bootstrap: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let len = r.len();
    let next_v = |t: usize| {
        if done[t] {
            0.0
        } else if t + 1 < len {
            v[t + 1]
        } else {
            bootstrap
        }
    };
    (0..len)
        .map(|t| {
            let mut sum = 0.0;
            for l in 0..len - t {
                let k = t + l;
                let delta = r[k] + gamma * next_v(k) - v[k];
                sum += (gamma * lam).powi(l as i32) * delta;
                if done[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gae_matches_direct_definition(
        steps in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, prop::bool::weighted(0.2)), 1..=10),
        bootstrap in -5.0f64..5.0,
        gamma in 0.01f64..=1.0,
        lam in 0.01f64..=1.0,
    ) {
        let r: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let v: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let d: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let (adv, ret) = compute_gae(&r, &v, &d, bootstrap, gamma, lam).unwrap();
        let want = gae_direct(&r, &v, &d, bootstrap, gamma, lam);
        for t in 0..r.len() {
            prop_assert!((adv[t] - want[t]).abs() <= 1e-12, "t {t}: {} vs {}", adv[t], want[t]);
            prop_assert_eq!(ret[t], adv[t] + v[t]);
        }
    }
}

fn small_policy() -> PolicyConfig {
    PolicyConfig { hidden: 6, rounds: 2, head_hidden: 7, head_layers: 2 }
}

fn tiny_instance(seed: u64) -> ProblemInstance {
    generate_instance(&GenParams { n: 5, m: 2, seed, ..GenParams::default() }).unwrap()
}

/// Transitions of a random episode, with stored log-probabilities taken from
/// `params` and then shifted by up to ±0.05.
fn transitions(params: &PolicyParams, seed: u64) -> Vec<Transition> {
    let inst = tiny_instance(seed);
    let mut env = SchedulingEnv::reset(&inst, RewardConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while !env.is_done() {
        let actions = env.feasible_actions().unwrap();
        let graph = build_graph(&inst, env.state());
        let (lp, value) = score(params, &graph, &actions).unwrap();
        let chosen = rng.gen_range(0..actions.actions.len());
        let res = env.step(actions.actions[chosen]).unwrap();
        out.push(Transition {
            graph,
            actions: actions.actions,
            chosen,
            log_prob: lp[chosen] + rng.gen_range(-0.05..0.05),
            value,
            reward: res.reward,
            done: res.done,
            step: out.len(),
        });
    }
    out
}

fn perturbed(cfg: PolicyConfig, seed: u64) -> PolicyParams {
    let mut p = PolicyParams::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
    let flat: Vec<f64> = p.flat().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
    p.set_flat(&flat).unwrap();
    p
}

#[test]
fn loss_gradients_match_finite_differences() {
    for seed in 0..6 {
        let params = perturbed(small_policy(), seed);
        let ts = transitions(&params, seed);
        let batch: Vec<&Transition> = ts.iter().take(4).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let adv: Vec<f64> = batch.iter().map(|_| rng.gen_range(-1.5..1.5)).collect();
        let ret: Vec<f64> = batch.iter().map(|_| rng.gen_range(-3.0..3.0)).collect();
        let cfg = LossConfig { clip: 0.2, value_coef: 0.5, entropy_coef: 0.01 };
        let f = |flat: &[f64]| {
            let mut p = params.clone();
            p.set_flat(flat)?;
            let out = ppo_loss(&p, &batch, &adv, &ret, &cfg).map_err(|e| upmsp_nn::NnError::Invalid(e.to_string()))?;
            Ok((out.loss, out.grad))
        };
        let err = grad_check(f, &params.flat(), 1e-6).unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn identical_policies_give_the_vanilla_policy_gradient() {
    let params = perturbed(small_policy(), 3);
    let mut ts = transitions(&params, 3);
    // Stored log-probabilities exactly as the batched forward computes them.
    let batch: Vec<&Transition> = ts.iter().collect();
    let graphs: Vec<_> = batch.iter().map(|t| &t.graph).collect();
    let acts: Vec<_> = batch.iter().map(|t| t.actions.as_slice()).collect();
    let gb = GraphBatch::new(&graphs, &acts).unwrap();
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let heads = forward(&mut tape, &params, &p, &gb).unwrap();
    let rows: Vec<usize> = batch.iter().zip(gb.offsets()).map(|(t, o)| o + t.chosen).collect();
    let logp = tape.gather_rows(heads.log_probs, &rows).unwrap();
    let exact: Vec<f64> = tape.value(logp).data().to_vec();
    let adv: Vec<f64> = (0..batch.len()).map(|i| (i as f64 * 0.7).sin()).collect();
    let a = tape.constant(Tensor::column(adv.clone()));
    let w = tape.mul(logp, a).unwrap();
    let mw = tape.mean(w);
    let vanilla = tape.scale(mw, -1.0);
    let want = params.flat_grad(&tape.backward(vanilla).unwrap(), &p);
    let want_value = tape.value(vanilla).item();
    drop(batch);

    for (t, lp) in ts.iter_mut().zip(exact) {
        t.log_prob = lp;
    }
    let batch: Vec<&Transition> = ts.iter().collect();
    let ret = vec![0.0; batch.len()];
    let cfg = LossConfig { clip: 0.2, value_coef: 0.0, entropy_coef: 0.0 };
    let out = ppo_loss(&params, &batch, &adv, &ret, &cfg).unwrap();
    assert_eq!(out.ratio_deviation, 0.0);
    let mean_adv = adv.iter().sum::<f64>() / adv.len() as f64;
    assert!((out.policy_loss + mean_adv).abs() < 1e-12);
    // At ρ ≡ 1 the surrogate gradient is ∇ mean(A·logπ).
    for (g, w) in out.grad.iter().zip(&want) {
        assert!((g - w).abs() < 1e-10, "{g} vs {w}");
    }
    assert!(want_value.is_finite());
}

#[test]
fn non_finite_ratio_names_the_step() {
    let params = perturbed(small_policy(), 1);
    let mut ts = transitions(&params, 1);
    ts[2].log_prob = -1e4;
    ts[2].step = 77;
    let batch: Vec<&Transition> = ts.iter().collect();
    let zeros = vec![0.0; batch.len()];
    let err = ppo_loss(&params, &batch, &zeros, &zeros, &LossConfig::default()).unwrap_err();
    assert!(matches!(err, PpoError::NonFiniteRatio { step: 77 }), "{err}");
    assert!(err.to_string().contains("77"));
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        total_steps: 192,
        rollout_steps: 64,
        actors: 2,
        minibatch: 16,
        epochs: 2,
        learning_rate: 1e-3,
        policy: small_policy(),
        seed,
        ..TrainConfig::default()
    }
}

fn quick_sampler() -> InstanceSampler {
    InstanceSampler::new(vec![
        GenParams { n: 6, m: 2, ..GenParams::default() },
        GenParams { n: 6, m: 2, tau: 0.6, range_r: 0.2, ..GenParams::default() },
    ])
    .unwrap()
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let cfg = TrainConfig { learning_rate: 0.0, ..quick_config(4) };
    let out = train(&quick_sampler(), &cfg).unwrap();
    let init = initial_params(&cfg).unwrap();
    let same = out.params.flat().iter().zip(init.flat()).all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same);
}

#[test]
fn training_is_reproducible() {
    let a = train(&quick_sampler(), &quick_config(9)).unwrap();
    let b = train(&quick_sampler(), &quick_config(9)).unwrap();
    assert_eq!(curve_csv(&a.curve), curve_csv(&b.curve));
    assert_eq!(a.params, b.params);
    let c = train(&quick_sampler(), &quick_config(10)).unwrap();
    assert_ne!(curve_csv(&a.curve), curve_csv(&c.curve));
}

#[test]
fn learning_curve_has_expected_shape() {
    let out = train(&quick_sampler(), &quick_config(2)).unwrap();
    let csv = curve_csv(&out.curve);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("update,steps,mean_return,mean_twt,mean_tst,lr"));
    assert_eq!(out.curve.len(), 3);
    assert_eq!(out.curve.last().unwrap().steps, 192);
    assert!(out.curve.windows(2).all(|w| w[1].lr < w[0].lr));
    assert_eq!(out.curve[0].lr, 1e-3);
}

#[test]
fn reported_returns_telescope_to_the_objectives() {
    for (alpha, beta) in [(1.0, 1.0), (0.5, 2.0)] {
        let cfg = TrainConfig { alpha, beta, ..quick_config(6) };
        let out = train(&quick_sampler(), &cfg).unwrap();
        assert!(!out.episodes.is_empty());
        for e in &out.episodes {
            assert_eq!(e.ret, -(alpha * e.twt as f64 + beta * e.tst as f64));
        }
        for row in out.curve.iter().filter(|r| r.episodes > 0) {
            let (r, twt, tst) = (row.mean_return.unwrap(), row.mean_twt.unwrap(), row.mean_tst.unwrap());
            assert!((r + alpha * twt + beta * tst).abs() <= 1e-9 * (1.0 + r.abs()));
        }
    }
}

#[test]
fn divergence_guard_aborts() {
    let cfg = TrainConfig { learning_rate: 0.05, divergence_limit: 1e-6, ..quick_config(1) };
    let err = train(&quick_sampler(), &cfg).unwrap_err();
    assert!(matches!(err, PpoError::Diverged { .. }), "{err}");
}

#[test]
fn observer_can_stop_training() {
    let mut calls = 0;
    let res = train_with(&quick_sampler(), &quick_config(3), |_, _| {
        calls += 1;
        Err(PpoError::Config("stop".into()))
    });
    assert!(res.is_err());
    assert_eq!(calls, 1);
}

/// Mean over sampled states of the policy entropy divided by `ln(k)`.
fn relative_entropy(params: &PolicyParams) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for seed in 0..4 {
        let inst = generate_instance(&GenParams { n: 6, m: 2, seed: 900 + seed, ..GenParams::default() }).unwrap();
        let mut env = SchedulingEnv::reset(&inst, RewardConfig::default()).unwrap();
        while !env.is_done() {
            let actions = env.feasible_actions().unwrap();
            let (lp, _) = score(params, &build_graph(&inst, env.state()), &actions).unwrap();
            if lp.len() > 1 {
                let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                total += h / (lp.len() as f64).ln();
                count += 1;
            }
            env.step(actions.actions[0]).unwrap();
        }
    }
    total / count as f64
}

#[test]
fn dominant_entropy_bonus_keeps_the_policy_near_uniform() {
    let cfg = TrainConfig { entropy_coef: 100.0, total_steps: 256, ..quick_config(8) };
    let out = train(&quick_sampler(), &cfg).unwrap();
    assert!(relative_entropy(&out.params) > 0.99, "{}", relative_entropy(&out.params));
}

#[test]
fn greedy_evaluation_is_feasible_and_deterministic() {
    let params = PolicyParams::init(small_policy(), 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let instances: Vec<ProblemInstance> = (0..100)
        .map(|i| {
            let n = rng.gen_range(1..=15);
            let m = rng.gen_range(1..=4);
            let delta = [0.75, 1.0][i % 2];
            generate_instance(&GenParams { n, m, elig_density_delta: delta, seed: i as u64, ..GenParams::default() })
                .unwrap()
        })
        .collect();
    let a = evaluate_policy(&params, &instances, 1.0, 1.0).unwrap();
    let b = evaluate_policy(&params, &instances, 1.0, 1.0).unwrap();
    assert_eq!(a.rows.len(), 100);
    for ((ra, rb), inst) in a.rows.iter().zip(&b.rows).zip(&instances) {
        assert!(validate_schedule(inst, &ra.schedule).is_empty());
        assert_eq!(ra.schedule, rb.schedule);
        assert_eq!(ra.scalarized, (ra.objectives.twt + ra.objectives.tst) as f64);
    }
    let mean = a.rows.iter().map(|r| r.scalarized).sum::<f64>() / 100.0;
    assert!((a.mean_scalarized - mean).abs() <= 1e-12 * mean.max(1.0));
}

#[test]
fn greedy_policy_never_beats_the_oracle() {
    for seed in 0..10 {
        let params = perturbed(small_policy(), seed);
        let inst = generate_instance(&GenParams { n: 5, m: 2, seed: 40 + seed, ..GenParams::default() }).unwrap();
        let (_, obj) = solve_greedy(&params, &inst).unwrap();
        let exact = solve_exact_scalarized(&inst, 1.0, 1.0).unwrap();
        assert!((obj.twt + obj.tst) as f64 >= exact.value);
        let atc = solve_atcsr(&inst, &AtcsrParams::default()).unwrap();
        assert!((atc.objectives.twt + atc.objectives.tst) as f64 >= exact.value);
    }
}
