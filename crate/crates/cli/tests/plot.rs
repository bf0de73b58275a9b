use neuralff::trainer::History;
use neuralff_cli::plot::*;

#[test]
fn renders_both_curves() {
    let mut h = History::default();
    for e in 1..=4 {
        h.push(e, "maxflow", "val", "accuracy", e as f64 / 4.0);
        h.push(e, "maxflow", "val", "flow_error", 1.0 / e as f64);
    }
    let s = flow_series(&h).unwrap();
    assert_eq!(s.epochs, vec![1, 2, 3, 4]);
    let svg = render_svg("mpnn", &s);
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("stroke-dasharray"));
}

#[test]
fn no_flow_rows_means_no_series() {
    let mut h = History::default();
    h.push(1, "predecessor", "train", "loss", 1.0);
    assert!(flow_series(&h).is_none());
}
