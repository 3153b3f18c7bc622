// Domain adaptation with the library API: freeze, train, checkpoint,
// reload and check the reloaded model scores identically.

use xrayclip::data::dataset::ImageDataset;
use xrayclip::data::manifest::Split;
use xrayclip::data::splits::assign_splits;
use xrayclip::data::synthetic::{generate, FixtureSpec};
use xrayclip::model::checkpoint::{Checkpoint, CheckpointMeta, FORMAT_VERSION};
use xrayclip::model::freeze::apply_freeze_policy;
use xrayclip::model::head::{ClassificationHead, HeadConfig};
use xrayclip::model::inference::score_with_head;
use xrayclip::pipeline::RunConfig;
use xrayclip::train::adapt;

pub fn run_example() -> xrayclip::Result<f64> {
    let cfg = RunConfig::fixture_preset();
    let fixture = generate(&FixtureSpec::default());
    let manifest = assign_splits(fixture.manifest.clone(), &fixture.train_val_ids, &fixture.test_ids, cfg.val_fraction, cfg.seed)?;
    let source = fixture.source();
    let [train, val, test] = [Split::Train, Split::Val, Split::Test].map(|s| ImageDataset::from_split(&manifest, s, source.clone()));

    let descriptor = cfg.backend_descriptor()?;
    let mut backend = descriptor.build()?;
    let freeze = apply_freeze_policy(backend.as_mut(), &cfg.freeze)?;
    println!("{} of {} encoder parameters trainable", freeze.trainable, freeze.total);
    let head_cfg = HeadConfig::for_embed_dim(backend.embed_dim());
    let mut head = ClassificationHead::new(head_cfg, cfg.seed, backend.device())?;

    let outcome = adapt(backend.as_mut(), &mut head, &train, &val, &cfg.adaptation)?;
    for r in &outcome.trace.epochs {
        println!(
            "epoch {:>2}  loss {:.5}  val AUC {:.4}  lr {:.1e}/{:.1e}",
            r.epoch,
            r.train_loss,
            r.val_mean_auc.unwrap_or(f64::NAN),
            r.encoder_lr,
            r.head_lr
        );
    }
    println!("best epoch {} (val AUC {:.4})", outcome.best_epoch, outcome.best_val_auc);

    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        backend: descriptor,
        freeze: cfg.freeze,
        head: head_cfg,
        prompts: cfg.prompts.clone(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        epoch: outcome.best_epoch,
        adapted: true,
        stage: "adapt".into(),
        history: outcome.trace.normalized().epochs,
    };
    let path = std::env::temp_dir().join("xrayclip-adapt-example.safetensors");
    Checkpoint::capture(backend.as_ref(), &head, meta)?.save(&path)?;
    let (b2, h2) = Checkpoint::load(&path)?.restore()?;
    let before = score_with_head(backend.as_ref(), &head, &test)?;
    let after = score_with_head(b2.as_ref(), &h2, &test)?;
    assert_eq!(before, after, "reloaded checkpoint scores identically");
    println!("checkpoint round trip verified: {}", path.display());
    Ok(outcome.best_val_auc)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("adaptation example failed");
}
