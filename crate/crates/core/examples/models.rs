//! The model registry: one scene of each model with its dependence
//! structure, point count and the means of marks and covariate at the
//! points.

use markshift::procgen::{generate_model, ModelId, ModelSpec};
use markshift::stats::field_at_points;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> markshift::Result<()> {
    println!("model  alpha  structure   points  mean mark  mean covariate");
    for id in ModelId::ALL {
        let alpha = if id.uses_alpha() { 0.6 } else { 0.0 };
        let scene = generate_model(&ModelSpec::new(id, alpha, 3)?)?;
        let marks = scene.pattern.numeric_marks().unwrap_or(&[]);
        let z = field_at_points(&scene.pattern, &scene.covariate)?;
        println!(
            "{:<6} {alpha:<6} {:<11} {:>6}  {:>9.3}  {:>14.3}",
            id.to_string(),
            scene.truth.to_string(),
            scene.pattern.len(),
            mean(marks),
            mean(&z)
        );
    }
    Ok(())
}
