//! Writes a simulated scene to CSV and ESRI ASCII, reads it back and runs
//! the command-line front end on the files.

use markshift::cli::{dispatch, parse_grid, parse_points, write_grid, write_points, MarkMode, WindowArg};
use markshift::procgen::{generate_model, ModelId, ModelSpec};

fn main() -> markshift::Result<()> {
    let dir = std::env::temp_dir().join("markshift-example");
    std::fs::create_dir_all(&dir)?;
    let (pts, grid, out) = (dir.join("points.csv"), dir.join("covariate.asc"), dir.join("result.json"));

    let scene = generate_model(&ModelSpec::new(ModelId::M2, 0.0, 31)?)?;
    write_points(&scene.pattern, &pts)?;
    write_grid(&scene.covariate, &grid)?;
    let window = WindowArg::Rectangle(0.0, 1.0, 0.0, 1.0);
    let back = parse_points(&pts, &window, MarkMode::Auto)?;
    let field = parse_grid(&grid, Some(back.window()))?;
    assert_eq!(back.points(), scene.pattern.points());
    assert_eq!(field.values(), scene.covariate.values());
    println!("round trip of {} points and a {} cell grid is exact", back.len(), field.values().len());

    let code = dispatch([
        "markshift", "test", "pmc", "--points", pts.to_str().unwrap(), "--grid", grid.to_str().unwrap(),
        "--window", "0,1,0,1", "--stat", "kendall", "--nshifts", "199", "--seed", "42",
        "--out", out.to_str().unwrap(),
    ]);
    println!("exit code {code}");
    print!("{}", std::fs::read_to_string(&out)?);
    Ok(())
}
