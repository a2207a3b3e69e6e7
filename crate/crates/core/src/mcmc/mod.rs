//! Pólya-Gamma Gibbs sampler.
//!
//! One sweep updates, in order: auxiliaries Γ, logits Θ, community labels ξ,
//! weights w, σ², supercommunity logits H, supercommunity labels ζ, weights
//! v, μ, τ², α, β. The σ², μ and τ² draws integrate out logits that no data
//! (resp. no block pair) touches; those logits are redrawn from their prior
//! straight afterwards so every later step sees a current value.

mod steps;
mod trace;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_joint, log_likelihood, Hyperparams, LogJoint, McmcState};
use crate::network::{BlockStats, Network};
use crate::special::{logit, stream_rng, ChainRng, PolyaGamma, DEFAULT_EXACT_MAX};
use crate::spectral::spectral_partition;
use crate::tri::TriMatrix;

pub use steps::*;
pub use trace::{Checkpoint, Trace, TraceRecord};

/// How community labels are initialised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Uniform random labels.
    Random,
    /// Spectral clustering of the adjacency matrix.
    #[default]
    Spectral,
    /// Fixed 0-based labels.
    Given(Vec<usize>),
}

/// Per-run score used to pick the best of several restarts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RunScore {
    /// Mean recorded log-likelihood.
    #[default]
    LogLikelihood,
    /// Mean recorded log joint density. Dominated by how close the weights
    /// of empty communities sit to zero, so it tends to favour runs that
    /// have merged communities.
    LogJoint,
}

impl RunScore {
    pub fn of(self, trace: &Trace) -> f64 {
        match self {
            RunScore::LogLikelihood => trace.mean_log_likelihood(),
            RunScore::LogJoint => trace.mean_log_joint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub restarts: usize,
    pub init: InitStrategy,
    /// Also record Θ and H in the trace.
    pub record_theta: bool,
    /// Largest PG shape drawn exactly; larger shapes use a Gaussian.
    pub pg_exact_max: u64,
    /// Visit vertices and communities in a fresh random order each sweep.
    pub random_scan: bool,
    pub concentration: ConcentrationUpdate,
    /// Proposal scale of the log-scale Metropolis step for α and β.
    pub mh_step: f64,
    /// Sweeps between checkpoints when persisting to disk.
    pub checkpoint_every: usize,
    pub selection: RunScore,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            thin: 1,
            seed: 1,
            restarts: 32,
            init: InitStrategy::Spectral,
            record_theta: false,
            pg_exact_max: DEFAULT_EXACT_MAX,
            random_scan: false,
            concentration: ConcentrationUpdate::Auto,
            mh_step: 0.5,
            checkpoint_every: 1_000,
            selection: RunScore::LogLikelihood,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thinning must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig(
                "restart count must be at least 1".into(),
            ));
        }
        if !(self.mh_step > 0.0) {
            return Err(Error::InvalidConfig("mh_step must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidConfig(
                "checkpoint_every must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of records a full run keeps.
    pub fn kept(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions {
            random_scan: self.random_scan,
            concentration: self.concentration,
            mh_step: self.mh_step,
            pg: PolyaGamma::new(self.pg_exact_max),
        }
    }
}

/// Per-sweep knobs.
#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    pub random_scan: bool,
    pub concentration: ConcentrationUpdate,
    pub mh_step: f64,
    pub pg: PolyaGamma,
}

impl Default for StepOptions {
    fn default() -> Self {
        ChainConfig::default().step_options()
    }
}

/// One full sweep in the fixed order.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut McmcState,
    stats: &mut BlockStats,
    net: &Network,
    hp: &Hyperparams,
    opts: &StepOptions,
    rng: &mut R,
) -> Result<()> {
    let mut vertices: Vec<usize> = (0..net.vertex_count()).collect();
    let mut communities: Vec<usize> = (0..state.k()).collect();
    if opts.random_scan {
        vertices.shuffle(rng);
        communities.shuffle(rng);
    }
    step_gamma(state, stats, &opts.pg, rng);
    step_theta(state, stats, rng);
    step_xi(state, net, stats, &vertices, rng)?;
    step_w(state, stats, rng);
    step_sigma2(state, stats, hp, rng);
    refresh_empty_theta(state, stats, rng);
    step_eta(state, rng);
    step_zeta(state, &communities, rng)?;
    step_v(state, rng);
    step_mu(state, hp, rng);
    step_tau2(state, hp, rng);
    refresh_empty_eta(state, rng);
    step_alpha(state, hp, opts.concentration, opts.mh_step, rng);
    step_beta(state, hp, opts.concentration, opts.mh_step, rng);
    Ok(())
}

/// Starting state: labels per `init`, ζ uniform, Θ from smoothed block
/// densities, H from block-pair means, scalars from their priors.
pub fn initialize<R: Rng + ?Sized>(
    net: &Network,
    hp: &Hyperparams,
    init: &InitStrategy,
    rng: &mut R,
) -> Result<McmcState> {
    hp.validate_for(net.vertex_count())?;
    let n = net.vertex_count();
    let (k, r) = (hp.k, hp.r);
    let xi = match init {
        InitStrategy::Random => (0..n).map(|_| rng.random_range(0..k)).collect(),
        InitStrategy::Spectral => spectral_partition(net, k, rng),
        InitStrategy::Given(xi) => xi.clone(),
    };
    let stats = BlockStats::compute(net, &xi, k)?;
    let mut st = McmcState::sample_prior(hp, n, rng);
    st.xi = xi;
    st.zeta = (0..k).map(|_| rng.random_range(0..r)).collect();
    st.theta = TriMatrix::from_fn(k, |a, b| {
        logit((stats.edges(a, b) as f64 + 0.5) / (stats.dyads(a, b) as f64 + 1.0))
    });
    let (m, t) = st.super_pair_stats();
    for (idx, e) in st.eta.as_mut_slice().iter_mut().enumerate() {
        if m.as_slice()[idx] > 0 {
            *e = t.as_slice()[idx] / m.as_slice()[idx] as f64;
        }
    }
    let (alpha, beta) = (st.alpha, st.beta);
    let total = n as f64 + alpha;
    st.log_w = stats
        .sizes()
        .iter()
        .map(|&c| ((c as f64 + alpha / k as f64) / total).ln())
        .collect();
    let total = k as f64 + beta;
    st.log_v = st
        .super_sizes()
        .iter()
        .map(|&c| ((c as f64 + beta / r as f64) / total).ln())
        .collect();
    Ok(st)
}

/// A chain bound to a network.
pub struct Chain<'a> {
    net: &'a Network,
    hp: &'a Hyperparams,
    opts: StepOptions,
    pub state: McmcState,
    pub stats: BlockStats,
}

impl<'a> Chain<'a> {
    pub fn new(
        net: &'a Network,
        hp: &'a Hyperparams,
        state: McmcState,
        opts: StepOptions,
    ) -> Result<Self> {
        let stats = BlockStats::compute(net, &state.xi, state.k())?;
        Ok(Self {
            net,
            hp,
            opts,
            state,
            stats,
        })
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        sweep(
            &mut self.state,
            &mut self.stats,
            self.net,
            self.hp,
            &self.opts,
            rng,
        )
    }

    pub fn log_joint(&self) -> Result<LogJoint> {
        log_joint(&self.state, &self.stats, self.hp)
    }

    pub fn record(&self, iteration: usize, with_theta: bool) -> Result<TraceRecord> {
        let lj = self.log_joint()?;
        let st = &self.state;
        Ok(TraceRecord {
            iteration,
            xi: st.xi.clone(),
            zeta: st.zeta.clone(),
            mu: st.mu,
            sigma2: st.sigma2,
            tau2: st.tau2,
            alpha: st.alpha,
            beta: st.beta,
            log_joint: lj.total(),
            log_likelihood: log_likelihood(&self.stats, &st.theta),
            occupied_communities: st.occupied_communities(),
            occupied_supercommunities: st.occupied_supercommunities(),
            theta: with_theta.then(|| st.theta.as_slice().to_vec()),
            eta: with_theta.then(|| st.eta.as_slice().to_vec()),
        })
    }
}

enum Event<'e, 'a> {
    Record(&'e TraceRecord),
    Checkpoint(usize, &'e Chain<'a>, &'e ChainRng),
}

/// Run sweeps `start+1..=iterations`, handing kept records and checkpoint
/// opportunities to `sink`.
fn drive(
    chain: &mut Chain<'_>,
    rng: &mut ChainRng,
    start: usize,
    cfg: &ChainConfig,
    label: u64,
    sink: &mut dyn FnMut(Event<'_, '_>) -> Result<()>,
) -> Result<()> {
    let report_every = (cfg.iterations / 10).max(1);
    for it in start + 1..=cfg.iterations {
        chain.sweep(rng).map_err(|e| dump(chain, label, it, e))?;
        if cfg.keeps(it) {
            let rec = chain
                .record(it, cfg.record_theta)
                .map_err(|e| dump(chain, label, it, e))?;
            sink(Event::Record(&rec))?;
        } else {
            chain.log_joint().map_err(|e| dump(chain, label, it, e))?;
        }
        if it % cfg.checkpoint_every == 0 || it == cfg.iterations {
            sink(Event::Checkpoint(it, chain, rng))?;
        }
        if it % report_every == 0 {
            log::info!("chain {label}: sweep {it}/{}", cfg.iterations);
        }
    }
    Ok(())
}

fn dump(chain: &Chain<'_>, label: u64, it: usize, err: Error) -> Error {
    let state = serde_json::to_string(&chain.state).unwrap_or_default();
    log::error!("chain {label} failed at sweep {it}: {err}; state: {state}");
    err
}

/// Run one chain in memory on RNG stream `stream`.
pub fn run_chain(net: &Network, hp: &Hyperparams, cfg: &ChainConfig, stream: u64) -> Result<Trace> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, stream);
    let state = initialize(net, hp, &cfg.init, &mut rng)?;
    let mut chain = Chain::new(net, hp, state, cfg.step_options())?;
    let mut trace = Trace::default();
    drive(&mut chain, &mut rng, 0, cfg, stream, &mut |ev| {
        if let Event::Record(rec) = ev {
            trace.records.push(rec.clone());
        }
        Ok(())
    })?;
    Ok(trace)
}

/// Run one chain writing `trace.ndjson`, `trace.csv` and `checkpoint.json`
/// into `dir`. An existing checkpoint is resumed from.
pub fn run_chain_persisted(
    net: &Network,
    hp: &Hyperparams,
    cfg: &ChainConfig,
    stream: u64,
    dir: &Path,
) -> Result<Trace> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ckpt_path = dir.join("checkpoint.json");
    let (mut rng, state, start, kept) = if ckpt_path.exists() {
        let ck = Checkpoint::load(&ckpt_path)?;
        log::info!("chain {stream}: resuming after sweep {}", ck.iteration);
        (ck.rng, ck.state, ck.iteration, ck.records)
    } else {
        let mut rng = stream_rng(cfg.seed, stream);
        let state = initialize(net, hp, &cfg.init, &mut rng)?;
        (rng, state, 0, 0)
    };
    let mut writer = trace::TraceWriter::open(dir, kept)?;
    let mut chain = Chain::new(net, hp, state, cfg.step_options())?;
    let mut written = kept;
    let result = drive(
        &mut chain,
        &mut rng,
        start,
        cfg,
        stream,
        &mut |ev| match ev {
            Event::Record(rec) => {
                written += 1;
                writer.push(rec)
            }
            Event::Checkpoint(it, ch, rng) => {
                writer.flush()?;
                Checkpoint {
                    iteration: it,
                    records: written,
                    state: ch.state.clone(),
                    rng: rng.clone(),
                }
                .save(&ckpt_path)
            }
        },
    );
    writer.flush()?;
    result?;
    Trace::read_ndjson(&dir.join("trace.ndjson"))
}

/// Run `cfg.restarts` independent chains in parallel on streams `0..restarts`.
pub fn run_restarts(net: &Network, hp: &Hyperparams, cfg: &ChainConfig) -> Vec<Result<Trace>> {
    (0..cfg.restarts as u64)
        .into_par_iter()
        .map(|s| run_chain(net, hp, cfg, s))
        .collect()
}

/// Index of the run with the largest score; ties go to the lowest index.
/// `None` when no run has records.
pub fn select_best_run(traces: &[Trace], score: RunScore) -> Option<usize> {
    best_index(traces.iter().map(|t| score.of(t)))
}

pub(crate) fn best_index(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if s.is_nan() || s == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GenerativeSpec;

    fn small_net() -> (Network, Vec<usize>) {
        let spec = GenerativeSpec {
            sizes: vec![8, 8, 8],
            zeta: vec![0, 0, 1],
            eta: TriMatrix::from_fn(2, |a, b| if a == b { 1.0 } else { -2.5 }),
            sigma: 0.0,
            theta: Some(TriMatrix::from_fn(
                3,
                |a, b| if a == b { 2.0 } else { -2.5 },
            )),
        };
        let g = spec.generate(&mut stream_rng(4, 0)).unwrap();
        (g.network, g.xi)
    }

    fn quick_cfg() -> ChainConfig {
        ChainConfig {
            iterations: 200,
            burn_in: 100,
            thin: 2,
            restarts: 2,
            seed: 5,
            ..ChainConfig::default()
        }
    }

    #[test]
    fn trace_length_and_finiteness() {
        let (net, _) = small_net();
        let hp = Hyperparams::with_sizes(5, 2);
        let cfg = quick_cfg();
        let trace = run_chain(&net, &hp, &cfg, 0).unwrap();
        assert_eq!(trace.len(), cfg.kept());
        assert_eq!(trace.len(), 50);
        assert!(trace.records.iter().all(|r| r.log_joint.is_finite()));
    }

    #[test]
    fn identical_seed_identical_trace() {
        let (net, _) = small_net();
        let hp = Hyperparams::with_sizes(5, 2);
        let cfg = quick_cfg();
        let a = run_chain(&net, &hp, &cfg, 1).unwrap();
        let b = run_chain(&net, &hp, &cfg, 1).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&net, &hp, &cfg, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn persisted_run_resumes_bit_for_bit() {
        let (net, _) = small_net();
        let hp = Hyperparams::with_sizes(5, 2);
        let mut cfg = quick_cfg();
        cfg.checkpoint_every = 50;
        let full = run_chain(&net, &hp, &cfg, 3).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let mut short = cfg.clone();
        short.iterations = 150;
        let partial = run_chain_persisted(&net, &hp, &short, 3, dir.path()).unwrap();
        assert_eq!(partial.len(), 25);
        let resumed = run_chain_persisted(&net, &hp, &cfg, 3, dir.path()).unwrap();
        assert_eq!(resumed, full);
    }

    #[test]
    fn best_run_selection() {
        let mk = |v: f64| Trace {
            records: vec![TraceRecord {
                iteration: 1,
                xi: vec![],
                zeta: vec![],
                mu: 0.0,
                sigma2: 1.0,
                tau2: 1.0,
                alpha: 1.0,
                beta: 1.0,
                log_joint: v,
                log_likelihood: v,
                occupied_communities: 0,
                occupied_supercommunities: 0,
                theta: None,
                eta: None,
            }],
        };
        for score in [RunScore::LogJoint, RunScore::LogLikelihood] {
            assert_eq!(select_best_run(&[mk(-3.0)], score), Some(0));
            assert_eq!(select_best_run(&[mk(-3.0), mk(-1.0)], score), Some(1));
            assert_eq!(select_best_run(&[mk(-1.0), mk(-1.0)], score), Some(0));
            assert_eq!(select_best_run(&[], score), None);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = ChainConfig::default();
        assert!(c.validate().is_ok());
        c.burn_in = c.iterations;
        assert!(c.validate().is_err());
        let c = ChainConfig {
            thin: 0,
            ..ChainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
