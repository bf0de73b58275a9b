mod common;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{check_grads, random_mat};
use neuralff::tape::*;

fn store_with(rng: &mut ChaCha8Rng, shapes: &[(usize, usize)]) -> (ParamStore, Vec<ParamId>) {
    let mut store = ParamStore::new();
    let ids = shapes
        .iter()
        .enumerate()
        .map(|(i, &(r, c))| store.add(format!("p{i}"), random_mat(rng, r, c)))
        .collect();
    (store, ids)
}

#[test]
fn dense_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (store, p) = store_with(&mut rng, &[(4, 3), (3, 5), (1, 5), (1, 5), (4, 5)]);
    check_grads(
        &store,
        |t| {
            let a = t.param(p[0]);
            let w = t.param(p[1]);
            let b = t.param(p[2]);
            let gain = t.param(p[3]);
            let other = t.param(p[4]);
            let x = t.matmul(a, w);
            let x = t.add_row(x, b);
            let x = t.relu(x);
            let x = t.mul_row(x, gain);
            let y = t.mul(x, other);
            let y = t.sub(y, other);
            let y = t.scale(y, 0.7);
            let z = t.transpose(y);
            let z = t.softmax_rows(z);
            let z = t.layer_norm(z, 1e-5);
            let m = t.mean_rows(z);
            let m = t.mul(m, m);
            t.sum(m)
        },
        1e-4,
    );
}

#[test]
fn indexing_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (store, p) = store_with(&mut rng, &[(5, 3), (1, 3), (4, 2)]);
    let segs = Arc::new(Segments::new(vec![0, 0, 2, 2, 2, 1, 0], 4));
    let idx = Arc::new(vec![0, 1, 1, 3, 4, 2, 0]);
    let factors = Arc::new(vec![0.5, 2.0, -1.0, 3.0]);
    check_grads(
        &store,
        |t| {
            let a = t.param(p[0]);
            let d = t.param(p[1]);
            let g = t.gather(a, idx.clone());
            let mx = t.segment_max(g, segs.clone(), Some(d));
            let mn = t.segment_min(g, segs.clone(), None);
            let sm = t.segment_sum(g, segs.clone());
            let cat = t.concat(&[mx, mn, sm]);
            let cat = t.scale_rows(cat, factors.clone());
            let part = t.slice_cols(cat, 2, 4);
            let w = t.param(p[2]);
            let out = t.matmul(part, w);
            let sq = t.mul(out, out);
            t.sum(sq)
        },
        1e-4,
    );
}

#[test]
fn loss_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (store, p) = store_with(&mut rng, &[(6, 1), (3, 2)]);
    let segs = Arc::new(Segments::new(vec![0, 0, 1, 1, 1, 2], 3));
    let targets = Arc::new(vec![1.0, 0.0, 0.5, 0.0, 0.5, 0.0]);
    let y = Mat::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    let w = Mat::from_shape_vec((3, 2), vec![1.0, 0.5, 0.0, 2.0, 1.0, 1.0]).unwrap();
    check_grads(
        &store,
        |t| {
            let s = t.param(p[0]);
            let ce = t.segment_softmax_ce(s, segs.clone(), targets.clone(), 0.5);
            let l = t.param(p[1]);
            let b = t.bce_logits(l, y.clone(), w.clone());
            t.add(ce, b)
        },
        1e-4,
    );
}

#[test]
fn segment_max_empty_uses_default() {
    let mut store = ParamStore::new();
    let d = store.add("d", Mat::from_elem((1, 2), 7.0));
    let mut t = Tape::new(&store);
    let a = t.constant(Mat::from_shape_vec((2, 2), vec![1.0, 5.0, 3.0, 2.0]).unwrap());
    let dv = t.param(d);
    let segs = Arc::new(Segments::new(vec![0, 0], 2));
    let m = t.segment_max(a, segs, Some(dv));
    assert_eq!(t.value(m), &Mat::from_shape_vec((2, 2), vec![3.0, 5.0, 7.0, 7.0]).unwrap());
}

#[test]
fn segment_softmax_sums_to_one() {
    let segs = Segments::new(vec![0, 1, 0, 1, 1], 2);
    let p = segment_softmax(vec![0.3, -2.0, 4.0, 1.0, 0.0], &segs);
    assert!((p[0] + p[2] - 1.0).abs() < 1e-12);
    assert!((p[1] + p[3] + p[4] - 1.0).abs() < 1e-12);
}

#[test]
fn sigmoid_is_stable() {
    assert_eq!(sigmoid(0.0), 0.5);
    assert!(sigmoid(1000.0) <= 1.0 && sigmoid(1000.0) > 0.999);
    assert!(sigmoid(-1000.0) >= 0.0);
}
