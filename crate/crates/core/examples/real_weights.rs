// Load pretrained ViT-B/32 weights (a Hugging Face CLIP `model.safetensors`
// plus `tokenizer.json`) from `XRAYCLIP_WEIGHTS` and apply the default freeze
// policy. Does nothing when the variable is unset.

use xrayclip::model::clip::ClipBackend;
use xrayclip::model::freeze::{apply_freeze_policy, FreezePolicy};
use xrayclip::model::head::HeadConfig;
use xrayclip::model::prompts::PromptSet;
use xrayclip::model::EncoderBackend;

pub fn run_example() -> xrayclip::Result<Option<usize>> {
    let Some(path) = std::env::var_os("XRAYCLIP_WEIGHTS") else {
        println!("XRAYCLIP_WEIGHTS not set; skipping");
        return Ok(None);
    };
    let mut backend = ClipBackend::load(std::path::Path::new(&path))?;
    let report = apply_freeze_policy(&mut backend, &FreezePolicy::default())?;
    let head = HeadConfig::for_embed_dim(backend.embed_dim()).param_count();
    let with_head = report.with_head(head);
    println!(
        "trainable with head: {} ({:.2}% of {})",
        with_head.trainable,
        100.0 * with_head.trainable_fraction(),
        with_head.total
    );
    if backend.supports_text() {
        let text = backend.encode_text(&PromptSet::default().render_all())?;
        println!("prompt embeddings: {:?}", text.dims());
    }
    Ok(Some(with_head.trainable))
}

#[allow(dead_code)]
fn main() {
    run_example().expect("real weights example failed");
}
