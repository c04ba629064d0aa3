use ghn_core::config::TrainConfig;
use ghn_core::graph::{load_dir, normalized_laplacian, write_graph};
use ghn_core::model::{run, GhnModel};
use ghn_core::record::{append_jsonl, read_jsonl, RunRecord};
use ghn_core::synthetic::{generate, SbmSpec};
use ghn_core::Split;

#[test]
fn written_graphs_load_back_identically() {
    let g = generate(&SbmSpec::heterophilous(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_graph(&g, dir.path()).unwrap();
    let (back, _) = load_dir(dir.path()).unwrap();
    assert_eq!(back, g);
}

#[test]
fn memory_receives_gradient_at_initialisation() {
    let g = generate(&SbmSpec::homophilous(1)).unwrap();
    let l = normalized_laplacian(&g, true).unwrap();
    let cfg = TrainConfig { dropout: 0.0, ..TrainConfig::default() };
    let model = GhnModel::new(&cfg, g.feature_dim(), g.num_classes()).unwrap();
    let (_, grads) = model.loss_and_grads(&g, &l, &g.split_nodes(Split::Train)).unwrap();
    for (p, gr) in model.params.iter().zip(&grads) {
        if p.name.ends_with("patterns") {
            assert!(gr.iter().any(|v| *v != 0.0), "{} has zero gradient", p.name);
        }
    }
}

#[test]
fn records_append_and_reproduce() {
    let g = generate(&SbmSpec::homophilous(2)).unwrap();
    let cfg = TrainConfig { hidden_dim: 16, num_patterns: 16, epochs: 15, ..TrainConfig::default() };
    let (_, a) = run(&g, &cfg).unwrap();
    let (_, b) = run(&g, &cfg).unwrap();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    assert!(a.test_acc.is_finite() && !a.collapsed);
    assert_eq!(a.layers.len(), 2);
    assert!(a.layers.iter().all(|l| l.gate_means.len() == 4 && l.step_norms.len() == 4));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("runs.jsonl");
    append_jsonl(&p, &[a.clone()]).unwrap();
    append_jsonl(&p, &[b]).unwrap();
    let back: Vec<RunRecord> = read_jsonl(&p).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].hash().unwrap(), a.hash().unwrap());
}
