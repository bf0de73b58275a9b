mod common;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{figure_graph, random_mat};
use neuralff::classical::INF;
use neuralff::datagen::{gen_bipartite, rng_for};
use neuralff::flowgraph::ResidualGraph;
use neuralff::gnncore::*;
use neuralff::tape::{sigmoid, Mat, ParamStore, Segments, Tape};

fn affine_store(fan_in: usize, fan_out: usize, w: Mat) -> (ParamStore, Affine) {
    let mut store = ParamStore::new();
    let wid = store.add("w", w);
    let bid = store.add("b", Mat::zeros((1, fan_out)));
    assert_eq!(store.get(wid).dim(), (fan_in, fan_out));
    (store, Affine { w: wid, b: bid })
}

#[test]
fn encode_zero_and_identity() {
    let (store, aff) = affine_store(6, 6, Mat::zeros((6, 6)));
    let mut t = Tape::new(&store);
    let x = t.constant(Mat::zeros((3, 4)));
    let h = t.constant(Mat::zeros((3, 2)));
    let z = encode(&mut t, x, h, &aff);
    assert!(t.value(z).iter().all(|&v| v == 0.0));

    let (store, aff) = affine_store(6, 6, Mat::eye(6));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xv = random_mat(&mut rng, 3, 4);
    let hv = random_mat(&mut rng, 3, 2);
    let mut t = Tape::new(&store);
    let x = t.constant(xv.clone());
    let h = t.constant(hv.clone());
    let z = encode(&mut t, x, h, &aff);
    let zv = t.value(z);
    for r in 0..3 {
        for c in 0..4 {
            assert_eq!(zv[[r, c]], xv[[r, c]]);
        }
        for c in 0..2 {
            assert_eq!(zv[[r, 4 + c]], hv[[r, c]]);
        }
    }
}

/// Plain triple loop, independent of ndarray's matrix product.
fn dense_oracle(input: &[Vec<f64>], w: &Mat, b: &Mat) -> Vec<Vec<f64>> {
    input
        .iter()
        .map(|row| {
            (0..w.ncols())
                .map(|c| b[[0, c]] + row.iter().enumerate().map(|(k, x)| x * w[[k, c]]).sum::<f64>())
                .collect()
        })
        .collect()
}

#[test]
fn encode_and_decode_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let enc = Affine::new(&mut store, "enc", 7, 5, &mut rng);
    let dec = Affine::new(&mut store, "dec", 10, 3, &mut rng);
    *store.get_mut(enc.b) = random_mat(&mut rng, 1, 5);
    *store.get_mut(dec.b) = random_mat(&mut rng, 1, 3);
    let xv = random_mat(&mut rng, 4, 4);
    let hv = random_mat(&mut rng, 4, 3);
    let mut t = Tape::new(&store);
    let x = t.constant(xv.clone());
    let h = t.constant(hv.clone());
    let z = encode(&mut t, x, h, &enc);
    let h2 = t.constant(random_mat(&mut rng, 4, 5));
    let y = decode(&mut t, z, h2, &dec);

    let rows = |a: &Mat, b: &Mat| -> Vec<Vec<f64>> {
        (0..a.nrows())
            .map(|r| a.row(r).iter().chain(b.row(r).iter()).copied().collect())
            .collect()
    };
    let z_oracle = dense_oracle(&rows(&xv, &hv), store.get(enc.w), store.get(enc.b));
    let y_oracle = dense_oracle(&rows(t.value(z), t.value(h2)), store.get(dec.w), store.get(dec.b));
    for (r, row) in z_oracle.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            assert!((t.value(z)[[r, c]] - v).abs() < 1e-6);
        }
    }
    for (r, row) in y_oracle.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            assert!((t.value(y)[[r, c]] - v).abs() < 1e-6);
        }
    }
}

#[test]
fn termination_examples() {
    let mut store = ParamStore::new();
    let term = Affine { w: store.add("w", Mat::zeros((4, 1))), b: store.add("b", Mat::zeros((1, 1))) };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let hv = random_mat(&mut rng, 5, 4);
    let mut t = Tape::new(&store);
    let h = t.constant(hv.clone());
    let l = termination_logit(&mut t, h, &term);
    assert_eq!(sigmoid(t.scalar(l)), 0.5);

    *store.get_mut(term.w) = random_mat(&mut rng, 4, 1);
    let mut permuted = hv.clone();
    for (r, src) in [3, 0, 4, 1, 2].into_iter().enumerate() {
        permuted.row_mut(r).assign(&hv.row(src));
    }
    let mut t = Tape::new(&store);
    let a = t.constant(hv);
    let b = t.constant(permuted);
    let la = termination_logit(&mut t, a, &term);
    let lb = termination_logit(&mut t, b, &term);
    assert!((t.scalar(la) - t.scalar(lb)).abs() < 1e-12);
    assert!(sigmoid(1e6) > 0.999_999);
}

fn processor_store(kind: ProcessorKind) -> (ModelConfig, Processor, ParamStore) {
    let cfg = ModelConfig { processor: kind, latent: 6, emb: 3, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let p = Processor::new(&mut store, &cfg, &mut rng);
    (cfg, p, store)
}

#[test]
fn mpnn_single_incoming_edge_is_exact() {
    let (cfg, p, store) = processor_store(ProcessorKind::Mpnn);
    let mut g = ResidualGraph::new(3, 0, 2).unwrap();
    g.add_edge_pair(0, 1, 1, 0, 1, 1).unwrap();
    let ctx = GraphCtx::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut t = Tape::new(&store);
    let z = t.constant(random_mat(&mut rng, 3, 6));
    let e = t.constant(random_mat(&mut rng, ctx.num_message_edges(), cfg.edge_features()));
    let (h, m) = p.process(&mut t, &ctx, z, e, &cfg);
    // Node 2 only has its self-loop: aggregate is that one message.
    let loop_msg = t.value(m).row(ctx.self_loop(2)).to_owned().insert_axis(ndarray::Axis(0));
    let zrow = t.value(z).row(2).to_owned().insert_axis(ndarray::Axis(0));
    let zc = t.constant(zrow);
    let mc = t.constant(loop_msg);
    let input = t.concat(&[zc, mc]);
    let expect = p.update.apply(&mut t, input);
    for c in 0..6 {
        assert!((t.value(h)[[2, c]] - t.value(expect)[[0, c]]).abs() < 1e-12);
    }
}

#[test]
fn pna_single_neighbour_statistics_coincide() {
    let (cfg, p, store) = processor_store(ProcessorKind::PnaNoStd);
    let g = figure_graph();
    let ctx = GraphCtx::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut t = Tape::new(&store);
    let m = t.constant(random_mat(&mut rng, ctx.num_message_edges(), 6));
    // Collapse node 0's segment to a single message by construction.
    let single = Arc::new(Segments::new((0..ctx.num_message_edges()).map(|e| if e == 0 { 0 } else { 1 }).collect(), 2));
    let ctx1 = GraphCtx { by_target: single, log_degree: vec![2f64.ln(), 3f64.ln()], n: 2, ..ctx.clone() };
    let agg = p.aggregate(&mut t, &ctx1, m, &cfg);
    let a = t.value(agg);
    let msg = t.value(m).row(0).to_owned();
    for c in 0..6 {
        assert!((a[[0, c]] - msg[c]).abs() < 1e-12);
        assert!((a[[0, 6 + c]] - msg[c]).abs() < 1e-12);
        assert!((a[[0, 12 + c]] - msg[c]).abs() < 1e-12);
    }
    // Identity scaler block with uniform messages replicates the message.
    let uniform = t.constant(Mat::from_elem((ctx.num_message_edges(), 6), 0.25));
    let agg = p.aggregate(&mut t, &ctx, uniform, &cfg);
    for v in 0..ctx.n {
        for c in 0..18 {
            assert!((t.value(agg)[[v, c]] - 0.25).abs() < 1e-12);
        }
    }
}

#[test]
fn max_aggregation_ignores_duplicates() {
    let (cfg, p, store) = processor_store(ProcessorKind::Mpnn);
    let g = figure_graph();
    let ctx = GraphCtx::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut t = Tape::new(&store);
    let mv = random_mat(&mut rng, ctx.num_message_edges(), 6);
    let m = t.constant(mv.clone());
    let a1 = p.aggregate(&mut t, &ctx, m, &cfg);
    // Duplicate every message row; max is unchanged.
    let mut doubled_to = (*ctx.to).clone();
    doubled_to.extend(ctx.to.iter().copied());
    let ctx2 = GraphCtx { by_target: Arc::new(Segments::new(doubled_to, ctx.n)), ..ctx.clone() };
    let m2 = t.constant(ndarray::concatenate![ndarray::Axis(0), mv, mv]);
    let a2 = p.aggregate(&mut t, &ctx2, m2, &cfg);
    assert_eq!(t.value(a1), t.value(a2));
}

fn permute_graph(g: &ResidualGraph, perm: &[usize]) -> ResidualGraph {
    let mut out = ResidualGraph::new(g.n(), perm[g.src()], perm[g.sink()]).unwrap();
    for e in (0..g.num_edges()).filter(|&e| g.is_forward(e)) {
        let (a, b) = (g.edge(e), g.edge(g.edge(e).pair));
        out.add_edge_pair(perm[a.from], perm[a.to], a.cap, b.cap, a.weight, b.weight).unwrap();
    }
    out
}

fn equivariance_case(kind: ProcessorKind, seed: u64) -> f64 {
    let cfg = ModelConfig { processor: kind, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, store) = Model::build(cfg, &mut rng);
    let g = gen_bipartite(4, 0.5, &mut rng_for(seed, 0));
    let mut perm: Vec<usize> = (0..g.n()).collect();
    use rand::seq::SliceRandom;
    perm.shuffle(&mut rng);
    let pg = permute_graph(&g, &perm);
    let run = |g: &ResidualGraph| {
        let ctx = GraphCtx::new(g);
        let mut t = Tape::new(&store);
        let hp = t.constant(Mat::zeros((ctx.n, 32)));
        let emb = model.edge_embeddings(&mut t, &ctx);
        let st = NodeState::initial(&ctx);
        let out = model.step(&mut t, &ctx, Algo::BellmanFord, &st, hp, emb);
        (t.value(out.h).clone(), t.scalar(out.tau_logit.unwrap()))
    };
    let (h, tau) = run(&g);
    let (ph, ptau) = run(&pg);
    let mut worst = (tau - ptau).abs();
    for v in 0..g.n() {
        for c in 0..32 {
            worst = worst.max((h[[v, c]] - ph[[perm[v], c]]).abs());
        }
    }
    worst
}

#[test]
fn step_is_permutation_equivariant() {
    for seed in 0..5 {
        assert!(equivariance_case(ProcessorKind::Mpnn, seed) < 1e-5);
        assert!(equivariance_case(ProcessorKind::PnaNoStd, seed) < 1e-5);
    }
}

#[test]
fn rollout_respects_step_bound_and_forced_stop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (model, store) = Model::build(ModelConfig::default(), &mut rng);
    let ctx = GraphCtx::new(&figure_graph());
    let stop = model.rollout_bf(&store, &ctx, Some(0.0));
    assert_eq!(stop.steps(), 1);
    let run = model.rollout_bf(&store, &ctx, Some(1.0));
    assert_eq!(run.steps(), ctx.n - 1);
    let free = model.rollout_bf(&store, &ctx, None);
    assert!(free.steps() >= 1 && free.steps() <= ctx.n - 1);
    let bfs = model.rollout_bfs(&store, &ctx);
    assert!(bfs.reach.len() <= ctx.n - 1);
}

#[test]
fn rollout_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (model, store) = Model::build(ModelConfig::default(), &mut rng);
    let ctx = GraphCtx::new(&figure_graph());
    let a = model.rollout_bf(&store, &ctx, None);
    let b = model.rollout_bf(&store, &ctx, None);
    assert_eq!(a.states, b.states);
    assert_eq!(a.taus, b.taus);
    assert_eq!(a.last_messages, b.last_messages);
}

#[test]
fn derived_state_follows_predecessors() {
    let g = figure_graph();
    let ctx = GraphCtx::new(&g);
    let s0 = NodeState::initial(&ctx);
    let s1 = derive_bf_state(&ctx, &s0, vec![0, 0, 0, 3, 4, 5]);
    assert_eq!(s1.dist[1], 6);
    assert_eq!(s1.dist[2], 1);
    assert_eq!(s1.dist[3], INF);
    assert!(s1.reach[1] && !s1.reach[3]);
    let s2 = derive_bf_state(&ctx, &s1, vec![0, 0, 0, 1, 2, 5]);
    assert_eq!(s2.dist[4], 6);
    assert_eq!(s2.dist[3], 8);
}

#[test]
fn teacher_rollout_matches_trace_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (model, store) = Model::build(ModelConfig::default(), &mut rng);
    let g = figure_graph();
    let ctx = GraphCtx::new(&g);
    let trace = neuralff::classical::bellman_ford_trace(&g);
    let mut t = Tape::new(&store);
    let steps = model.rollout_teacher(&mut t, &ctx, Algo::BellmanFord, &trace);
    assert_eq!(steps.len(), trace.steps());
    let bfs = neuralff::classical::bfs_trace(&g);
    let steps = model.rollout_teacher(&mut t, &ctx, Algo::Bfs, &bfs);
    assert_eq!(steps.len(), bfs.steps());
    assert!(steps.iter().all(|s| s.tau_logit.is_none() && s.pred_scores.is_none()));
}

#[test]
fn executor_gradients_match_finite_differences() {
    for kind in [ProcessorKind::Mpnn, ProcessorKind::PnaNoStd] {
        let cfg = ModelConfig { processor: kind, latent: 6, emb: 3, attention_heads: 2, pna_delta: 1.3, ..Default::default() };
        let (model, store) = Model::build(cfg, &mut ChaCha8Rng::seed_from_u64(14));
        let mut g = ResidualGraph::new(4, 0, 3).unwrap();
        g.add_edge_pair(0, 1, 1, 0, 3, 2).unwrap();
        g.add_edge_pair(0, 2, 2, 0, 1, 4).unwrap();
        g.add_edge_pair(1, 3, 1, 0, 2, 1).unwrap();
        g.add_edge_pair(2, 3, 1, 1, 5, 3).unwrap();
        let ctx = GraphCtx::new(&g);
        let trace = neuralff::classical::bellman_ford_trace(&g);
        common::check_grads(
            &store,
            |t| {
                let steps = model.rollout_teacher(t, &ctx, Algo::BellmanFord, &trace);
                let mut total = None;
                for s in &steps {
                    let y = t.sum(s.y);
                    let p = t.sum(s.pred_scores.unwrap());
                    let p = t.scale(p, 0.3);
                    let tau = s.tau_logit.unwrap();
                    let a = t.add(y, p);
                    let a = t.add(a, tau);
                    total = Some(match total {
                        None => a,
                        Some(acc) => t.add(acc, a),
                    });
                }
                total.unwrap()
            },
            1e-4,
        );
    }
}
