//! The full dependence triangle on one scene: points-covariate,
//! marks-covariate and points-marks tests, and a Bonferroni combination of
//! the two tests that bear on the covariate.

use markshift::procgen::{generate_model, ModelId, ModelSpec};
use markshift::shifttest::{bonferroni_combine, run_shift_test, schlather_test, Correction, TestConfig};
use markshift::stats::{SchlatherSettings, StatisticKind};

fn main() -> markshift::Result<()> {
    let scene = generate_model(&ModelSpec::new(ModelId::M8, 0.0, 77)?)?;
    println!("M8, true structure {}", scene.truth);
    let pc = run_shift_test(
        &scene.pattern,
        &scene.covariate,
        &TestConfig::new(StatisticKind::MeanAtPoints, Correction::Variance, 1),
    )?;
    let pmc = run_shift_test(
        &scene.pattern,
        &scene.covariate,
        &TestConfig::new(StatisticKind::Kendall, Correction::Variance, 2),
    )?;
    let (pm, _) = schlather_test(&scene.pattern, 99, 3, &SchlatherSettings::default())?;
    println!("P-C  p = {:.3}", pc.p_value);
    println!("PM-C p = {:.3}", pmc.p_value);
    println!("P-M  p = {:.3}", pm.p_value);
    println!("covariate matters (Bonferroni over P-C and PM-C): p = {:.3}", bonferroni_combine(&[pc.p_value, pmc.p_value])?);
    Ok(())
}
