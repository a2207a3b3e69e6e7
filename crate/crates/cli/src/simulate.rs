use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use hsbm::model::GenerativeSpec;
use hsbm::simgen::{scenario, scenario_names};
use hsbm::special::stream_rng;
use hsbm::summaries::labels_csv;
use hsbm::NetworkFormat;

use crate::manifest::OutputDir;
use crate::output::write;
use crate::{usage, FormatArg};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named scenario.
    #[arg(long, default_value = "fig3", conflicts_with_all = ["flat", "spec"])]
    preset: String,
    /// Shorthand for `--preset flat`.
    #[arg(long)]
    flat: bool,
    /// JSON generative spec instead of a preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "edge-list")]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
    /// Print the scenario names and exit.
    #[arg(long)]
    list: bool,
}

pub fn run(a: SimulateArgs) -> Result<()> {
    if a.list {
        for name in scenario_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let (name, spec) = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let spec: GenerativeSpec = serde_json::from_str(&text)
                .map_err(|e| usage(format!("spec {}: {e}", path.display())))?;
            ("custom".to_string(), spec)
        }
        None => {
            let name = if a.flat { "flat" } else { a.preset.as_str() };
            (name.to_string(), scenario(name)?.spec)
        }
    };
    spec.validate()
        .map_err(|e| usage(format!("invalid generative spec: {e}")))?;
    let format = NetworkFormat::from(a.format);
    let config =
        serde_json::json!({ "scenario": name, "spec": spec, "format": format, "seed": a.seed });
    let out = OutputDir::open(&a.out, "simulate", config, a.seed, &[])?;

    let g = spec.generate(&mut stream_rng(a.seed, 0))?;
    let network_file = match format {
        NetworkFormat::EdgeList => "network.txt",
        NetworkFormat::Dense => "network.dense.txt",
    };
    g.network.save(out.file(network_file), format)?;
    write(&out.file("truth.csv"), labels_csv(&g.xi))?;
    let supers: Vec<usize> = g.xi.iter().map(|&k| g.zeta[k]).collect();
    write(&out.file("truth_super.csv"), labels_csv(&supers))?;
    write(
        &out.file("spec.json"),
        serde_json::to_string_pretty(&spec)? + "\n",
    )?;
    log::info!(
        "{name}: {} vertices, {} edges, {} communities in {} supercommunities -> {}",
        g.network.vertex_count(),
        g.network.edge_count(),
        spec.community_count(),
        spec.supercommunity_count(),
        out.path.display()
    );
    out.finish()
}
