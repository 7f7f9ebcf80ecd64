//! A small rejection-rate table: every test variant on M1 to M8 with 100
//! scenes per cell. Rates are printed as a grid; the CSV with
//! Clopper-Pearson intervals goes to a temporary file.

use markshift::experiments::{run_study, StudyConfig, StudyKind, StudyOutput};

fn main() -> markshift::Result<()> {
    let mut cfg = StudyConfig::desk(StudyKind::Overall, 2024);
    cfg.n_reps = 100;
    cfg.n_shifts = 99;
    let run = run_study(&cfg, None)?;
    let StudyOutput::Table(table) = &run.output else { unreachable!("overall study yields a table") };

    print!("{:<24}", "test");
    for c in &table.columns {
        print!("{:>7}", c.model.to_string());
    }
    println!();
    for (variant, row) in table.rows.iter().zip(&table.cells) {
        print!("{:<24}", variant.label());
        for cell in row {
            print!("{:>7.2}", cell.rate);
        }
        println!();
    }

    let path = std::env::temp_dir().join("markshift-overall.csv");
    std::fs::write(&path, run.output.to_csv()?)?;
    println!("{} cells in {:.0} s, table written to {}", run.manifest.cells.len(), run.manifest.seconds, path.display());
    Ok(())
}
