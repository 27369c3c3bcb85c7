//! Temporary scratch probe: scores a saved reward checkpoint along a
//! held-out demonstration and prints Spearman + anchors + trace stats.

use rewardlab::harness::{run_scripted, ScriptedPolicyKind};
use rewardlab::reward::RewardModel;
use rewardlab::sampler::generate_expert;
use rewardlab::sim::{observe, EnvConfig};

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
        let mut r = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for i in 0..xs.len() {
        num += (rx[i] - mean) * (ry[i] - mean);
        dx += (rx[i] - mean).powi(2);
        dy += (ry[i] - mean).powi(2);
    }
    num / (dx.sqrt() * dy.sqrt())
}

fn main() {
    let ckpt = std::env::args().nth(1).expect("usage: eval_probe <reward.ckpt>");
    let model = RewardModel::load(std::path::Path::new(&ckpt)).expect("load");
    let env = EnvConfig::peg_hole();
    let held_out = generate_expert(&env, 23, 2000).expect("held-out demo");
    let mut prev = None;
    let mut rewards = Vec::new();
    for state in &held_out.states {
        let obs = observe(state, prev.as_ref(), &env);
        rewards.push(model.dense_reward(&obs).expect("reward").value);
        prev = Some(obs);
    }
    let times: Vec<f64> = (0..rewards.len()).map(|t| t as f64).collect();
    println!("held-out rewards: {rewards:.3?}");
    println!("spearman = {:.4}", spearman(&rewards, &times));

    for kind in ScriptedPolicyKind::ALL {
        let rows = run_scripted(kind, &model, &env, 5, 160).expect("rollout");
        let vals: Vec<f64> = rows.iter().map(|r| r.reward).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        println!(
            "{:>14}: n={} mean={mean:.3} last={:.3}",
            kind.name(),
            rows.len(),
            vals.last().unwrap()
        );
        if matches!(kind, ScriptedPolicyKind::SearchFail | ScriptedPolicyKind::Random) {
            let states = rewardlab::harness::scripted_states(kind, &env, 5, 160);
            for (i, s) in states.iter().enumerate().step_by(10) {
                println!(
                    "   step {i:3} pose [{:6.2},{:6.2},{:5.2}] contact {} r={:.3}",
                    s.pose[0],
                    s.pose[1],
                    s.pose[2],
                    !s.contact_points.is_empty(),
                    rows[i].reward
                );
            }
        }
        if kind == ScriptedPolicyKind::SearchFail {
            let loss_idx = rows.iter().enumerate()
                .skip_while(|(_, r)| !r.contact)
                .find(|(_, r)| !r.contact)
                .map(|(i, _)| i);
            if let Some(i) = loss_idx {
                let plateau = rows[..i].iter().rev().take(10).map(|r| r.reward).sum::<f64>() / 10.0_f64.min(i as f64);
                let after = rows[i..].iter().map(|r| r.reward).fold(f64::INFINITY, f64::min);
                let tail = rows.last().unwrap().reward;
                println!("   contact loss at step {i}: plateau={plateau:.3} min_after={after:.3} tail={tail:.3}");
            } else {
                println!("   no contact-loss step found");
            }
        }
    }
}
