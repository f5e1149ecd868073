//! Small versions of the estimator comparison and the curvature-by-radius
//! patch table, printed as text and saved as JSON.
//!
//! cargo run --release --example error_tables -- [trials]

use raden::experiments::{error_table, patch_table, PatchTableConfig, TableConfig, TableId};
use raden::pointcloud::canonical;
use raden::Result;

fn main() -> Result<()> {
    let trials: usize = std::env::args().nth(1).map_or(3, |s| s.parse().expect("trials must be an integer"));
    let out = std::env::temp_dir().join("raden-examples");
    std::fs::create_dir_all(&out)?;

    let cfg = TableConfig {
        trials,
        resolution: 50,
        ..TableConfig::default()
    };
    let table = error_table(TableId::T2, &cfg)?;
    println!("Gaussian plus box, m = {}, {trials} trials", cfg.m);
    for s in &table.methods {
        println!(
            "  {:<4} mean {:.3}  std {:.3}  failures {}",
            s.method.to_string(),
            s.mean.unwrap_or(f64::NAN),
            s.std.unwrap_or(f64::NAN),
            s.failures
        );
    }
    std::fs::write(out.join("t2.json"), serde_json::to_string_pretty(&table).unwrap())?;

    let cfg = PatchTableConfig {
        trials: trials.min(3),
        m: 3000,
        resolution: 30,
        ..PatchTableConfig::default()
    };
    let patches = patch_table(&canonical::density4(), &cfg)?;
    println!("patch medians (rows r, columns kappa {:?})", cfg.kappas);
    for row in &patches.cells {
        let cells: Vec<String> = row.iter().map(|c| format!("{:.3}", c.median_error.unwrap_or(f64::NAN))).collect();
        println!("  r = {:>4}: {}", row[0].r, cells.join("  "));
    }
    std::fs::write(out.join("patch.json"), serde_json::to_string_pretty(&patches).unwrap())?;
    println!("tables written to {}", out.display());
    Ok(())
}
