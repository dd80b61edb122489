//! The split witness seen through the discretized operator: beyond `r` only
//! the `a_0` component of `A f_r` survives, and its size is the witness mean.

use volterra_split::criteria::DegenerateKernel;
use volterra_split::numerics::{parse_weight, WeightExpr};
use volterra_split::operators::{discretize, GridSpec};
use volterra_split::orthopoly::build_split_witness;

fn w(s: &str) -> WeightExpr {
    parse_weight(s).unwrap()
}

#[test]
fn witness_moments_vanish_under_the_operator() {
    for (u, r, n) in [("1", 3.0, 1), ("(1+x)^(1/4)", 40.0, 2), ("(1+x)^(1/2)*log(2+x)", 200.0, 3), ("x^(1/3)", 10.0, 2)] {
        let u = w(u);
        let wt = build_split_witness(&u, r, n).unwrap();
        let kernel = DegenerateKernel::new(vec![WeightExpr::constant(1.0); n + 1]).unwrap();
        let op = discretize(&kernel, &u, &w("1"), r, 256, &GridSpec::default()).unwrap();
        let f: Vec<f64> = op.nodes.iter().map(|&t| wt.p.eval(t) / u.eval(t).unwrap().powi(2)).collect();
        let abs_f: Vec<f64> = f.iter().map(|v| v.abs()).collect();
        let signed = op.total_integrals(&f);
        let scale = op.total_integrals(&abs_f);
        for ((k, s), (_, m)) in signed.iter().zip(&scale) {
            if *k >= 1 {
                assert!((s / m).abs() < 1e-8, "{u:?} k = {k}: {s} against {m}");
            } else {
                // the surviving mean is a fixed fraction of |f_r u| |u^{-1}|
                let (mut fu, mut ui) = (0.0, 0.0);
                for ((&t, &wq), &fv) in op.nodes.iter().zip(&op.weights).zip(&f) {
                    let uv = u.eval(t).unwrap();
                    fu += wq * (fv * uv).powi(2);
                    ui += wq / (uv * uv);
                }
                let norms = (fu * ui).sqrt();
                assert!((s / norms - wt.epsilon_achieved).abs() < 1e-6, "{s} / {norms} vs {}", wt.epsilon_achieved);
            }
        }
    }
}
