// Parse a manifest, assign patient-grouped splits and build a few-shot
// subset, all from the synthetic fixture.

use std::collections::HashMap;

use xrayclip::data::fewshot::sample_few_shot;
use xrayclip::data::manifest::{parse_manifest, Split};
use xrayclip::data::splits::{assign_splits, split_sizes};
use xrayclip::data::synthetic::{generate, FixtureSpec};
use xrayclip::DiseaseLabel;

pub fn run_example() -> xrayclip::Result<HashMap<Split, usize>> {
    let fixture = generate(&FixtureSpec::default());
    let csv = fixture.manifest.to_csv()?;
    println!("manifest header: {}", csv.lines().next().unwrap_or_default());

    let labels: Vec<DiseaseLabel> = DiseaseLabel::all().collect();
    let manifest = parse_manifest(csv.as_bytes(), &labels)?;
    let manifest = assign_splits(manifest, &fixture.train_val_ids, &fixture.test_ids, 0.25, 7)?;
    let sizes = split_sizes(&manifest);
    println!("split sizes: {sizes:?}");

    let subset = sample_few_shot(&manifest.restrict(Split::Train), 2, 7)?;
    println!("2-shot subset: {} images", subset.len());
    for label in DiseaseLabel::all() {
        println!("  {:<20} {}", label.display_name(), subset.per_class_counts[label.index()]);
    }
    Ok(sizes)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("ingest example failed");
}
