// Writing and reading tensors, masks, bundles, configs and reports.

use admm_prune::bench::{gen_synthetic, InputDist};
use admm_prune::io::{
    load_bundle, load_config, read_mask, read_report, read_tensor, write_bundle, write_config,
    write_mask, write_report, write_tensor, Dtype, ReportFormat,
};
use admm_prune::{prune_layer, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let bundle = gen_synthetic(16, 8, 64, 5, InputDist::Gaussian)?;
    write_bundle(dir.path().join("layer"), &bundle)?;
    let loaded = load_bundle(dir.path().join("layer"))?;
    assert_eq!(loaded, bundle);

    let cfg = SolverConfig::default().with_sparsity(0.75);
    write_config(dir.path().join("config.json"), &cfg)?;
    assert_eq!(load_config(dir.path().join("config.json"))?, cfg);

    let out = prune_layer(&loaded.weights, &loaded.calib, &cfg)?;
    write_tensor(dir.path().join("w64.tensor"), &out.weights, Dtype::F64)?;
    write_tensor(dir.path().join("w32.tensor"), &out.weights, Dtype::F32)?;
    write_mask(dir.path().join("mask.tensor"), &out.mask)?;
    assert_eq!(read_tensor(dir.path().join("w64.tensor"))?, out.weights);
    assert_eq!(read_mask(dir.path().join("mask.tensor"))?, out.mask);
    let w32 = read_tensor(dir.path().join("w32.tensor"))?;
    let drift = w32.sub(&out.weights)?.frobenius() / out.weights.frobenius();
    println!("f32 relative drift {drift:.2e}");

    let mut report = out.report.without_timing();
    report.layer = loaded.name.clone();
    write_report(dir.path().join("report.json"), &report, ReportFormat::Json)?;
    write_report(dir.path().join("report.csv"), &report, ReportFormat::Csv)?;
    assert_eq!(read_report(dir.path().join("report.json"))?, report);
    let csv = std::fs::read_to_string(dir.path().join("report.csv"))?;
    for line in csv.lines().take(3) {
        println!("{line}");
    }
    Ok(())
}
