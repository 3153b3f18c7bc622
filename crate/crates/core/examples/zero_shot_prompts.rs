// Prompt-based zero-shot scoring with the stub encoder on fixture images.

use xrayclip::data::dataset::ImageDataset;
use xrayclip::data::manifest::Split;
use xrayclip::data::splits::assign_splits;
use xrayclip::data::synthetic::{generate, FixtureSpec};
use xrayclip::eval::evaluate;
use xrayclip::model::inference::score_with_prompts;
use xrayclip::model::prompts::PromptSet;
use xrayclip::model::stub::{StubBackend, StubConfig};
use xrayclip::model::EncoderBackend;

pub fn run_example() -> xrayclip::Result<f64> {
    let fixture = generate(&FixtureSpec::default());
    let manifest = assign_splits(fixture.manifest.clone(), &fixture.train_val_ids, &fixture.test_ids, 0.25, 7)?;
    let test = ImageDataset::from_split(&manifest, Split::Test, fixture.source());

    let backend = StubBackend::new(StubConfig::default())?;
    let prompts = PromptSet {
        positive_template: "Frontal radiograph with [disease]".into(),
        ..PromptSet::default()
    };
    for p in prompts.render_all().iter().take(3) {
        println!("prompt: {p}");
    }
    let matrix = score_with_prompts(&backend, &prompts, None, &test)?;
    let report = evaluate(&matrix)?;
    println!(
        "zero-shot on {} test images at temperature {}: mean AUC {:.4}",
        matrix.n_images(),
        backend.logit_scale(),
        report.mean_auc
    );
    println!("(the stub text tower is random, so expect a value near 0.5)");
    Ok(report.mean_auc)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("zero-shot example failed");
}
