mod common;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{check_grads, figure_graph, random_mat};
use neuralff::datagen::{gen_random_walk, rng_for};
use neuralff::flowgraph::{Path, ResidualGraph};
use neuralff::gnncore::{Algo, GraphCtx, Model, ModelConfig, NodeState};
use neuralff::heads::*;
use neuralff::tape::{Mat, ParamStore, Segments, Tape};

fn model() -> (Model, ParamStore) {
    Model::build(ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(21))
}

#[test]
fn predecessor_distribution_normalises() {
    let (model, store) = model();
    let ctx = GraphCtx::new(&figure_graph());
    let mut t = Tape::new(&store);
    let hp = t.constant(Mat::zeros((ctx.n, 32)));
    let emb = model.edge_embeddings(&mut t, &ctx);
    let out = model.step(&mut t, &ctx, Algo::BellmanFord, &NodeState::initial(&ctx), hp, emb);
    let probs = predecessor_probs(&ctx, t.value(out.pred_scores.unwrap()));
    for v in 0..ctx.n {
        let s: f64 = ctx.incoming(v).iter().map(|&e| probs[e]).sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn lone_self_loop_is_certain() {
    let (model, store) = model();
    let mut g = ResidualGraph::new(3, 0, 2).unwrap();
    g.add_edge_pair(0, 1, 1, 0, 1, 1).unwrap();
    let ctx = GraphCtx::new(&g);
    let mut t = Tape::new(&store);
    let hp = t.constant(Mat::zeros((ctx.n, 32)));
    let emb = model.edge_embeddings(&mut t, &ctx);
    let out = model.step(&mut t, &ctx, Algo::BellmanFord, &NodeState::initial(&ctx), hp, emb);
    let probs = predecessor_probs(&ctx, t.value(out.pred_scores.unwrap()));
    // Node 0 receives only the backward edge 1→0 and its self-loop;
    // node 2 only its self-loop.
    assert_eq!(probs[ctx.self_loop(2)], 1.0);
}

#[test]
fn reachability_in_open_interval() {
    let y = Mat::from_shape_vec((4, 1), vec![-30.0, 0.0, 3.0, 30.0]).unwrap();
    let p = reachability(&y);
    assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
    assert_eq!(p[1], 0.5);
}

#[test]
fn bottleneck_masking_and_single_edge() {
    let (model, store) = model();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (g, path) = gen_random_walk(5, &mut rng_for(3, 0));
    let bank = random_mat(&mut rng, g.num_edges() + g.n(), 32);
    let probs = bottleneck_select(&model, &store, &bank, &path).unwrap();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let full = mask_to_edges(&path, &probs, g.num_edges());
    for e in 0..g.num_edges() {
        if !path.edges.contains(&e) {
            assert_eq!(full[e], 0.0);
        }
    }
    let single = Path { nodes: vec![path.nodes[0], path.nodes[1]], edges: vec![path.edges[0]] };
    assert_eq!(bottleneck_select(&model, &store, &bank, &single).unwrap(), vec![1.0]);
    let empty = Path { nodes: vec![0], edges: vec![] };
    assert_eq!(bottleneck_select(&model, &store, &bank, &empty), Err(HeadError::EmptyPath));
}

#[test]
fn bottleneck_is_equivariant_to_path_order() {
    let (model, store) = model();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let bank = random_mat(&mut rng, 12, 32);
    let p = Path { nodes: vec![0, 1, 2, 3, 4], edges: vec![0, 2, 4, 6] };
    let q = Path { nodes: vec![0, 1, 2, 3, 4], edges: vec![6, 2, 0, 4] };
    let a = mask_to_edges(&p, &bottleneck_select(&model, &store, &bank, &p).unwrap(), 12);
    let b = mask_to_edges(&q, &bottleneck_select(&model, &store, &bank, &q).unwrap(), 12);
    for e in 0..12 {
        assert!((a[e] - b[e]).abs() < 1e-12);
    }
}

#[test]
fn capacity_support() {
    let (model, store) = model();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let bank = random_mat(&mut rng, 6, 32);
    assert_eq!(capacity_distribution(&model, &store, &bank, 1, 0, 0).unwrap(), vec![1.0]);
    let d = capacity_distribution(&model, &store, &bank, 2, 9, 2).unwrap();
    assert_eq!(d.len(), 10);
    assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(capacity_distribution(&model, &store, &bank, 9, 3, 1), Err(HeadError::MissingMessage(9)));
}

#[test]
fn bottleneck_targets() {
    assert_eq!(bottleneck_target(&[4, 2, 9, 2, 6]), vec![0.0, 0.5, 0.0, 0.5, 0.0]);
    assert_eq!(bottleneck_target(&[7]), vec![1.0]);
    assert_eq!(argmax(&[0.1, 0.4, 0.4]), 1);
}

#[test]
fn head_gradients() {
    let cfg = ModelConfig { latent: 8, emb: 4, attention_heads: 2, ..Default::default() };
    let (model, store) = Model::build(cfg, &mut ChaCha8Rng::seed_from_u64(25));
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let bank = random_mat(&mut rng, 8, 8);
    let path = Path { nodes: vec![0, 1, 2, 3], edges: vec![0, 3, 5] };
    let cands = Candidates::new(&[(0, 3), (3, 2)]);
    let cap_targets = Arc::new({
        let mut v = vec![0.0; cands.len()];
        v[1] = 1.0;
        v[4] = 1.0;
        v
    });
    check_grads(
        &store,
        |t| {
            let b = t.constant(bank.clone());
            let s = bottleneck_scores(t, &model.bottleneck_head, b, &path).unwrap();
            let one = Arc::new(Segments::new(vec![0; 3], 1));
            let l1 = t.segment_softmax_ce(s, one, Arc::new(vec![0.5, 0.0, 0.5]), 1.0);
            let c = capacity_scores(t, &model, b, &cands, 2);
            let l2 = t.segment_softmax_ce(c, cands.segs.clone(), cap_targets.clone(), 0.5);
            t.add(l1, l2)
        },
        1e-4,
    );
}
