// Count trainable parameters of the ViT-B/32 visual tower under the freeze
// policy, without loading any weights.

use xrayclip::model::clip::ClipArch;
use xrayclip::model::freeze::{plan_freeze, FreezePolicy};
use xrayclip::model::head::HeadConfig;

pub fn run_example() -> xrayclip::Result<(usize, f64)> {
    let arch = ClipArch::vit_b32();
    let inventory = arch.visual_inventory();
    let blocks = arch.vision.layers;
    let head = HeadConfig::for_embed_dim(arch.embed_dim).param_count();

    println!("{:>3}  {:>12}  {:>9}", "k", "trainable", "fraction");
    for k in [0, 1, 3, 6, blocks] {
        let policy = FreezePolicy {
            k_top_blocks: k,
            unfreeze_post_norm_and_projection: true,
        };
        let report = plan_freeze(&inventory, blocks, &policy)?.with_head(head);
        println!("{k:>3}  {:>12}  {:>8.2}%", report.trainable, 100.0 * report.trainable_fraction());
    }

    let report = plan_freeze(&inventory, blocks, &FreezePolicy::default())?.with_head(head);
    println!("default policy with head: {} of {} trainable", report.trainable, report.total);
    for g in &report.groups {
        if g.trainable {
            println!("  {:<12} {:>10}", g.group.to_string(), g.params);
        }
    }
    Ok((report.trainable, report.trainable_fraction()))
}

#[allow(dead_code)]
fn main() {
    run_example().expect("freeze example failed");
}
