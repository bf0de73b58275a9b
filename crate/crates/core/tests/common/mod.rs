//! Helpers shared by the integration tests.
#![allow(dead_code)]

use neuralff::flowgraph::ResidualGraph;
use neuralff::tape::{Mat, ParamStore, Tape, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The six-node example: two unit paths src→1→3→sink (weight 16) and
/// src→2→4→sink (weight 13), plus a cross edge 1→4.
pub fn figure_graph() -> ResidualGraph {
    let mut g = ResidualGraph::new(6, 0, 5).unwrap();
    g.add_edge_pair(0, 1, 1, 0, 6, 12).unwrap();
    g.add_edge_pair(0, 2, 1, 0, 1, 11).unwrap();
    g.add_edge_pair(1, 3, 1, 0, 2, 5).unwrap();
    g.add_edge_pair(2, 4, 1, 0, 5, 15).unwrap();
    g.add_edge_pair(1, 4, 1, 0, 7, 13).unwrap();
    g.add_edge_pair(3, 5, 1, 0, 8, 1).unwrap();
    g.add_edge_pair(4, 5, 1, 0, 7, 1).unwrap();
    g
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
}

/// Central finite differences of `f` with respect to every parameter
/// entry, compared against the tape's gradients.
pub fn check_grads<F>(store: &ParamStore, f: F, tol: f64)
where
    F: Fn(&mut Tape) -> Var,
{
    let mut tape = Tape::new(store);
    let root = f(&mut tape);
    let grads = tape.backward(root);
    let h = 1e-6;
    for (id, name, value) in store.iter() {
        for idx in 0..value.len() {
            let mut plus = store.clone();
            let mut minus = store.clone();
            let (r, c) = (idx / value.ncols(), idx % value.ncols());
            plus.get_mut(id)[[r, c]] += h;
            minus.get_mut(id)[[r, c]] -= h;
            let fp = {
                let mut t = Tape::new(&plus);
                let v = f(&mut t);
                t.scalar(v)
            };
            let fm = {
                let mut t = Tape::new(&minus);
                let v = f(&mut t);
                t.scalar(v)
            };
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g[[r, c]]);
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
            assert!(
                err < tol,
                "{name}[{r},{c}]: numeric {numeric} analytic {analytic} rel err {err}"
            );
        }
    }
}
