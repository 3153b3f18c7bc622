// The command pipeline end to end on the fixture written to disk: adapt,
// zero-shot, few-shot at 1/2/4 shots and a baseline comparison.

use xrayclip::data::synthetic::{generate, FixtureSpec};
use xrayclip::pipeline::{cmd_adapt, cmd_fewshot, cmd_report, cmd_zeroshot, Baselines, RunConfig};

pub fn run_example() -> xrayclip::Result<Vec<(usize, f64)>> {
    let root = std::env::temp_dir().join(format!("xrayclip-pipeline-example-{}", std::process::id()));
    let data = root.join("data");
    generate(&FixtureSpec::default()).write_to(&data)?;
    let cfg = RunConfig {
        output_dir: root.join("runs"),
        ..RunConfig::fixture_preset().with_data_root(&data)
    };

    let adapted = cmd_adapt(&cfg)?;
    println!("adapted: test mean AUC {:.4}", adapted.test_report.mean_auc);
    let (zs, _) = cmd_zeroshot(&cfg, Some(&adapted.checkpoint))?;
    println!("zero-shot after adaptation: {:.4}", zs.mean_auc);

    let few = cmd_fewshot(&cfg, &adapted.checkpoint, &[1, 2, 4])?;
    print!("{}", few.curve.to_csv());
    println!("curve plot: {}", few.curve_svg.display());

    let last = few.reports.last().expect("at least one report").clone();
    for path in cmd_report(&cfg, &[("4shot".into(), last)], Baselines::Bundled)? {
        println!("wrote {}", path.display());
    }
    let rows = few.curve.rows.clone();
    std::fs::remove_dir_all(&root)?;
    Ok(rows)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("pipeline example failed");
}
