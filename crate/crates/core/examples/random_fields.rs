//! Gaussian random fields by circulant embedding: empirical variance and
//! lag correlation of exponential and spherical fields on a 128 x 128 grid.

use markshift::geometry::Window;
use markshift::randfield::{simulate_grf_pair, CorrelationModel, FieldSpec, GridGeometry};

fn main() -> markshift::Result<()> {
    let window = Window::unit_square();
    let grid = GridGeometry::covering(&window.bounding_box(), 128)?;
    let lag = 13; // about 0.1
    for corr in [CorrelationModel::exponential(0.2)?, CorrelationModel::spherical(0.2)?] {
        let spec = FieldSpec::standard(corr);
        let (mut var, mut cov, mut n) = (0.0, 0.0, 0usize);
        for seed in 0..50 {
            let (a, b) = simulate_grf_pair(&spec, &grid, &window, seed)?;
            for f in [&a, &b] {
                for r in 0..grid.nrows {
                    for c in 0..grid.ncols - lag {
                        var += f.get(r, c).powi(2);
                        cov += f.get(r, c) * f.get(r, c + lag);
                        n += 1;
                    }
                }
            }
        }
        let h = lag as f64 * grid.cell;
        println!(
            "{:?}: variance {:.3}, correlation at {h:.3} is {:.3} (model {:.3})",
            corr,
            var / n as f64,
            cov / var,
            corr.correlation(h)?
        );
    }
    Ok(())
}
