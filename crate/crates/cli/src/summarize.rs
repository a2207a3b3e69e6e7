use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use hsbm::mcmc::Trace;
use hsbm::summaries::{
    adjacency_pgm, ari, comembership_mcmc, comembership_vb, cross_overlay, display_order,
    parse_labels, CoMembership, Level,
};
use hsbm::vb::VbState;
use hsbm::{Network, NetworkFormat};

use crate::fit::{BestRun, Engine};
use crate::manifest::OutputDir;
use crate::output::{write, write_matrix, write_summary};
use crate::{usage, FormatArg};

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Output directory of an MCMC fit.
    #[arg(long)]
    mcmc: Option<PathBuf>,
    /// Output directory of a VB fit.
    #[arg(long)]
    vb: Option<PathBuf>,
    #[arg(long)]
    network: PathBuf,
    #[arg(long, value_enum, default_value = "edge-list")]
    format: FormatArg,
    /// True community labels, one per vertex.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// True per-vertex supercommunity labels.
    #[arg(long)]
    truth_super: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// The two co-membership matrices of one fit.
struct Fitted {
    community: CoMembership,
    supercommunity: CoMembership,
}

fn best_file(dir: &Path, engine: Engine) -> Result<PathBuf> {
    let p = dir.join("best.json");
    let best: BestRun = serde_json::from_str(
        &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
    )
    .with_context(|| format!("parsing {}", p.display()))?;
    if best.engine != engine {
        return Err(usage(format!(
            "{} holds a {:?} fit",
            dir.display(),
            best.engine
        )));
    }
    let name = match engine {
        Engine::Mcmc => "trace.ndjson",
        Engine::Vb => "state.json",
    };
    Ok(dir.join(best.dir).join(name))
}

fn load_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let labels = parse_labels(&text).with_context(|| format!("parsing {}", path.display()))?;
    if labels.len() != n {
        anyhow::bail!(
            "{} has {} labels for {n} vertices",
            path.display(),
            labels.len()
        );
    }
    Ok(labels)
}

pub fn run(a: SummarizeArgs) -> Result<()> {
    if a.mcmc.is_none() && a.vb.is_none() {
        return Err(usage("give --mcmc DIR, --vb DIR or both"));
    }
    let net = Network::load(&a.network, NetworkFormat::from(a.format))
        .with_context(|| format!("loading {}", a.network.display()))?;
    let n = net.vertex_count();
    let mcmc_file = a
        .mcmc
        .as_deref()
        .map(|d| best_file(d, Engine::Mcmc))
        .transpose()?;
    let vb_file =
        a.vb.as_deref()
            .map(|d| best_file(d, Engine::Vb))
            .transpose()?;

    let mut inputs: Vec<&Path> = vec![&a.network];
    inputs.extend(mcmc_file.as_deref());
    inputs.extend(vb_file.as_deref());
    inputs.extend(a.truth.as_deref());
    inputs.extend(a.truth_super.as_deref());
    let config = serde_json::json!({ "format": NetworkFormat::from(a.format) });
    let out = OutputDir::open(&a.out, "summarize", config, 0, &inputs)?;

    let mcmc = match &mcmc_file {
        Some(p) => {
            let trace = Trace::read_ndjson(p)?;
            Some(Fitted {
                community: comembership_mcmc(&trace, Level::Community)?,
                supercommunity: comembership_mcmc(&trace, Level::Supercommunity)?,
            })
        }
        None => None,
    };
    let vb = match &vb_file {
        Some(p) => {
            let state = VbState::load(p)?;
            Some(Fitted {
                community: comembership_vb(&state, Level::Community),
                supercommunity: comembership_vb(&state, Level::Supercommunity),
            })
        }
        None => None,
    };
    for f in mcmc.iter().chain(&vb) {
        if f.community.n != n {
            anyhow::bail!("fit has {} vertices but the network has {n}", f.community.n);
        }
    }

    let truth = a.truth.as_deref().map(|p| load_labels(p, n)).transpose()?;
    let truth_super = a
        .truth_super
        .as_deref()
        .map(|p| load_labels(p, n))
        .transpose()?;
    let mut ari_rows = String::from("source,level,reference,ari\n");
    let mut partitions: Vec<(&str, Vec<usize>, Vec<usize>)> = Vec::new();
    for (name, fit) in [("mcmc", &mcmc), ("vb", &vb)] {
        let Some(fit) = fit else { continue };
        let comm = write_summary(&out.path, &fit.community)?;
        let sup = write_summary(&out.path, &fit.supercommunity)?;
        if let Some(t) = &truth {
            ari_rows.push_str(&format!("{name},community,truth,{}\n", ari(&comm, t)));
        }
        if let Some(t) = &truth_super {
            ari_rows.push_str(&format!("{name},supercommunity,truth,{}\n", ari(&sup, t)));
        }
        partitions.push((name, comm, sup));
    }
    if let [(_, mc, ms), (_, vc, vs)] = partitions.as_slice() {
        ari_rows.push_str(&format!("vb,community,mcmc,{}\n", ari(vc, mc)));
        ari_rows.push_str(&format!("vb,supercommunity,mcmc,{}\n", ari(vs, ms)));
    }
    if ari_rows.lines().count() > 1 {
        write(&out.file("ari.csv"), &ari_rows)?;
        for line in ari_rows.lines().skip(1) {
            log::info!("ARI {line}");
        }
    }

    // the MCMC ordering when available, so VB can be overlaid on it
    let lead = mcmc.as_ref().or(vb.as_ref()).expect("at least one fit");
    let order = display_order(&lead.community, &net.degrees());
    let mut order_csv = String::from("position,vertex\n");
    for (p, v) in order.iter().enumerate() {
        order_csv.push_str(&format!("{},{}\n", p + 1, v + 1));
    }
    write(&out.file("order.csv"), order_csv)?;
    write(
        &out.file("adjacency_ordered.pgm"),
        adjacency_pgm(&net, &order),
    )?;
    net.permuted(&order)?
        .save(out.file("network_ordered.txt"), NetworkFormat::EdgeList)?;
    for fit in mcmc.iter().chain(&vb) {
        for cm in [&fit.community, &fit.supercommunity] {
            write(
                &out.file(&format!("{}_ordered.pgm", cm.tag())),
                cm.permuted(&order).to_pgm(),
            )?;
        }
    }
    if let (Some(_), Some(v)) = (&mcmc, &vb) {
        for cm in [&v.community, &v.supercommunity] {
            let level = cm.level.tag();
            write_matrix(
                &out.path,
                &format!("overlay_vb_on_mcmc_{level}"),
                &cross_overlay(cm, &order),
            )?;
        }
    }
    log::info!("summaries written to {}", out.path.display());
    out.finish()
}
