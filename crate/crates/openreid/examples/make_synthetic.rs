//! Writes a Gaussian-cluster dataset for trying the CLI:
//! `cargo run -p openreid --example make_synthetic -- <out-dir> [seed]`.

use std::path::PathBuf;

use openreid::store::write_dataset;
use openreid::synthetic::{gaussian_clusters, ClusterSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().ok_or("usage: make_synthetic <out-dir> [seed]")?);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    std::fs::create_dir_all(&out)?;
    let synth = gaussian_clusters(&ClusterSpec {
        seed,
        ..ClusterSpec::default()
    });
    write_dataset(&synth.dataset, &out.join("meta.csv"), &out.join("emb.bin"))?;
    println!(
        "{} rows, {} individuals, min centre distance {:.2}",
        synth.dataset.len(),
        synth.centres.len(),
        synth.min_centre_distance()
    );
    Ok(())
}
