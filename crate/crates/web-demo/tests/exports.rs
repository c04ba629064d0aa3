use ghn_web_demo::{descent, regime, retrieve};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn lse_retrieval_matches_direct_softmax() {
    let v = parse(retrieve(vec![1.0, 0.0, 0.0, 1.0], 2, vec![0.5, 0.2], 2.0, "lse"));
    let (a, b) = ((2.0f64 * 0.5).exp(), (2.0f64 * 0.2).exp());
    let w = [a / (a + b), b / (a + b)];
    let out = v["output"].as_array().unwrap();
    assert!((out[0].as_f64().unwrap() - w[0]).abs() < 1e-12);
    assert!((out[1].as_f64().unwrap() - w[1]).abs() < 1e-12);
    let weights = v["weights"].as_array().unwrap();
    assert!((weights[0].as_f64().unwrap() - w[0]).abs() < 1e-12);
}

#[test]
fn lsr_far_query_passes_through() {
    let v = parse(retrieve(vec![1.0, 0.0, 0.0, 1.0], 2, vec![9.0, 9.0], 1.0, "lsr"));
    let out: Vec<f64> = v["output"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(out, vec![9.0, 9.0]);
}

#[test]
fn bad_inputs_report_errors() {
    assert!(parse(retrieve(vec![1.0, 0.0, 0.0], 2, vec![0.0, 0.0], 1.0, "lse"))["error"].is_string());
    assert!(parse(retrieve(vec![1.0, 0.0], 2, vec![0.0, 0.0], 1.0, "nomem"))["error"].is_string());
    assert!(parse(descent(1.0, 0.1, 2, 0, 10))["error"].is_string());
    assert!(parse(regime(0.0, 1.0, 0.1, 2.0))["error"].is_string());
}

#[test]
fn descent_energies_decrease() {
    let v = parse(descent(1.5, 0.2, 12, 3, 100));
    let e: Vec<f64> = v["energies"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(e.len(), 101);
    assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert_eq!(v["descent"]["status"], "pass");
    assert_eq!(v["paths"].as_array().unwrap().len(), 12);
    assert_eq!(v["constants"]["regime"], "strongly_convex");
}

#[test]
fn regime_boundary_and_constants() {
    let v = parse(regime(1.0, 2.0, 0.1, 2.0));
    assert_eq!(v["constants"]["regime"], "convex_boundary");
    assert!((v["constants"]["rho"].as_f64().unwrap() - 1.4).abs() < 1e-12);
    assert_eq!(v["contractive"], false);
    let v = parse(regime(0.5, 1.0, 0.05, 2.0));
    assert_eq!(v["constants"]["regime"], "strongly_convex");
    assert!((v["constants"]["mu"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(v["contractive"], true);
}
