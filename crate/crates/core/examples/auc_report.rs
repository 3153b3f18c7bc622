// Exact ROC-AUC with ties, and the bundled comparison table.

use xrayclip::eval::{compare_with_baselines, reference_report, roc_auc, BaselineTable, ShotsCurve};

pub fn run_example() -> xrayclip::Result<Vec<String>> {
    let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])?;
    println!("AUC of [0.1, 0.4, 0.35, 0.8] vs [0, 0, 1, 1]: {auc:?}");
    let tied = roc_auc(&[0.5, 0.5, 0.5, 0.9], &[1, 0, 0, 1])?;
    println!("with ties: {tied:?}");
    println!("single class: {:?}", roc_auc(&[0.2, 0.3], &[1, 1])?);

    let reference = reference_report();
    let table = compare_with_baselines(&reference, "Reference", &BaselineTable::bundled())?;
    print!("{}", table.to_text());
    print!("{}", ShotsCurve::reference().to_csv());
    Ok(table.average_strings())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("AUC example failed");
}
