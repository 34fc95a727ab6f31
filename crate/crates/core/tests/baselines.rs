use std::time::Instant;

use toxbench_core::dataset::synthetic::{generate, SyntheticConfig};
use toxbench_core::metrics::score_run;
use toxbench_core::models::{fit_artifact, Artifact, ModelKind, ModelSpec};

#[test]
fn linear_baseline_on_synthetic_split() {
    let split = generate(&SyntheticConfig::default());
    let t = Instant::now();
    let artifact = fit_artifact(&split.train, &ModelSpec::new(ModelKind::Linear)).unwrap();
    eprintln!("fit {:?}, width {}", t.elapsed(), artifact.pipeline.output_width());
    let preds: Vec<_> = split.test.smiles().iter().map(|s| artifact.predict_smiles(s).unwrap()).collect();
    let score = score_run(&preds, &split.test).unwrap();
    eprintln!("{:?} total {:?}", score, t.elapsed());
    assert!(score.mean_auc >= 0.95, "{}", score.mean_auc);
    let dir = tempfile::tempdir().unwrap();
    artifact.save(dir.path()).unwrap();
    assert_eq!(Artifact::load(dir.path()).unwrap(), artifact);
}
