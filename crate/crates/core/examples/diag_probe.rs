//! Temporary scratch probe: tree statistics and latent ordering on tree
//! nodes vs a held-out demonstration.

use rewardlab::reward::RewardModel;
use rewardlab::sampler::{build_tree, generate_expert, temporal_position, SamplerConfig};
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
    let env = EnvConfig::peg_hole();
    if std::env::args().nth(1).as_deref() == Some("scan") {
        for seed in 0..40u64 {
            let s = rewardlab::sim::reset(&env, seed).unwrap();
            match generate_expert(&env, seed, 2000) {
                Ok(t) => {
                    let ys: Vec<f64> = t.states.iter().map(|st| st.pose[1]).collect();
                    let monotone_y = ys.windows(2).all(|w| w[1] <= w[0] + 1e-9);
                    println!(
                        "seed {seed:2}: start [{:6.2},{:5.2},{:5.2}] len {:3} monotone_y {}",
                        s.pose[0], s.pose[1], s.pose[2], t.states.len(), monotone_y
                    );
                }
                Err(e) => println!("seed {seed:2}: start [{:6.2},{:5.2},{:5.2}] FAILED: {e}", s.pose[0], s.pose[1], s.pose[2]),
            }
        }
        return;
    }
    if std::env::args().nth(1).as_deref() == Some("grid") {
        let ckpt = std::env::args().nth(2).expect("grid <ckpt>");
        let model = RewardModel::load(std::path::Path::new(&ckpt)).expect("load");
        let base = rewardlab::sim::reset(&env, 12).unwrap();
        println!("reward heatmap, free space, theta=0, colors from seed-12 reset:");
        print!("{:>6}", "y\\x");
        for xi in -10..=10 {
            print!("{:>6}", xi * 2);
        }
        println!();
        for yi in (6..=22).rev() {
            let y = yi as f64 * 2.0;
            print!("{y:>6.0}");
            for xi in -10..=10 {
                let x = xi as f64 * 2.0;
                let mut s = base.clone();
                s.pose = [x, y, 0.0];
                s.twist = [0.0; 3];
                s.contact_points.clear();
                let o = observe(&s, None, &env);
                let r = model.dense_reward(&o).expect("r").value;
                print!("{:>6.2}", r);
            }
            println!();
        }
        return;
    }
    let expert = generate_expert(&env, 12, 2000).expect("expert");
    println!("expert len {} start pose {:?} goal pose {:?}",
        expert.states.len(),
        expert.states[0].pose,
        expert.states.last().unwrap().pose);
    let cfg = SamplerConfig::defaults_for(&env);
    let tree = build_tree(&env, &expert, &cfg).expect("tree");
    println!("tree nodes {} terminal_depth {}", tree.nodes.len(), tree.terminal_depth);
    let mut per_depth = std::collections::BTreeMap::<usize, usize>::new();
    for n in &tree.nodes {
        *per_depth.entry(n.depth).or_default() += 1;
    }
    let depths: Vec<_> = per_depth.into_iter().collect();
    println!("depth histogram (first 10 / last 5): {:?} ... {:?}",
        &depths[..depths.len().min(10)],
        &depths[depths.len().saturating_sub(5)..]);
    // Pose spread at a few depths.
    for d in [0, tree.terminal_depth / 4, tree.terminal_depth / 2, tree.terminal_depth] {
        let poses: Vec<[f64; 3]> = tree
            .nodes
            .iter()
            .filter(|n| n.depth == d)
            .map(|n| n.sim_state.pose)
            .collect();
        let ymin = poses.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let ymax = poses.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let xmin = poses.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let xmax = poses.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        println!("depth {d}: n={} x [{xmin:.1},{xmax:.1}] y [{ymin:.1},{ymax:.1}]", poses.len());
    }

    if let Some(ckpt) = std::env::args().nth(1) {
        let model = RewardModel::load(std::path::Path::new(&ckpt)).expect("load");
        // Ordering quality on the tree itself: latent distance to goal vs
        // temporal position, sampled across nodes.
        let mut ds = Vec::new();
        let mut ts = Vec::new();
        for n in tree.nodes.iter().step_by(tree.nodes.len() / 200 + 1) {
            let obs = observe(&n.sim_state, None, &env);
            ds.push(model.dense_reward(&obs).expect("reward").value);
            ts.push(temporal_position(n, &tree) as f64);
        }
        println!("tree nodes scored: {} spearman(reward, temporal) = {:.4}",
            ds.len(), spearman(&ds, &ts));
        // Held-out expert, with and without F/T (prev obs chaining).
        let held = generate_expert(&env, 23, 2000).expect("held");
        let mut prev = None;
        let (mut rw, mut tt) = (Vec::new(), Vec::new());
        for (t, s) in held.states.iter().enumerate() {
            let o = observe(s, prev.as_ref(), &env);
            rw.push(model.dense_reward(&o).expect("r").value);
            tt.push(t as f64);
            prev = Some(o);
        }
        println!("held-out spearman = {:.4}", spearman(&rw, &tt));
        for (t, s) in held.states.iter().enumerate() {
            println!("  t={t:3} pose=[{:6.2},{:6.2},{:5.2}] r={:.3}", s.pose[0], s.pose[1], s.pose[2], rw[t]);
        }
    }
}
