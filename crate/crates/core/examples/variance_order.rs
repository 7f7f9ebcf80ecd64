//! Variance of the test statistics scaled by window area, for growing
//! square windows. Flat curves mean the variance decays like one over the
//! area.

use markshift::experiments::{variance_order_study, VarianceKind};

fn main() -> markshift::Result<()> {
    let sides = [0.5, 1.0, 1.5, 2.0];
    for kind in [VarianceKind::PcMean, VarianceKind::PmcKendallEqual, VarianceKind::PmcKendallUnequal] {
        let curve = variance_order_study(kind, &sides, &[0.1], 300, 17)?;
        let v: Vec<String> = curve.points.iter().map(|p| format!("a={} {:.4}", p.side, p.value)).collect();
        println!("{kind:?}: {}", v.join("  "));
        println!("  max/min ratio {:.2}", curve.max_min_ratio(0.1, &sides).unwrap_or(f64::NAN));
    }
    Ok(())
}
