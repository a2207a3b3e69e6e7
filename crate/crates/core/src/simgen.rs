//! Named synthetic scenarios.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::GenerativeSpec;
use crate::tri::TriMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assortativity {
    Assortative,
    Disassortative,
}

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub name: &'static str,
    pub spec: GenerativeSpec,
    pub true_communities: usize,
    pub true_supercommunities: usize,
    pub class: Assortativity,
    /// Truncation levels suggested for fitting this scenario.
    pub fit_k: usize,
    pub fit_r: usize,
}

// Calibrated stand-ins for the hierarchical design: strong within-community
// ties, weaker ties inside a supercommunity, sparse across.
const FIG3_WITHIN: f64 = 2.0;
const FIG3_SAME_SUPER: f64 = 0.0;
const FIG3_ACROSS: f64 = -3.0;

const FLAT_LEVEL: f64 = -1.0;
const FLAT_SPREAD: f64 = 0.5;

const NAMES: [&str; 4] = ["fig3", "flat", "disassortative", "sparse"];

pub fn scenario_names() -> &'static [&'static str] {
    &NAMES
}

/// Block logits from three levels: diagonal, same supercommunity, across.
fn layered(zeta: &[usize], within: f64, same: f64, across: f64) -> TriMatrix<f64> {
    TriMatrix::from_fn(zeta.len(), |k, l| {
        if k == l {
            within
        } else if zeta[k] == zeta[l] {
            same
        } else {
            across
        }
    })
}

fn build(
    sizes: Vec<usize>,
    zeta: Vec<usize>,
    eta: TriMatrix<f64>,
    theta: TriMatrix<f64>,
) -> GenerativeSpec {
    GenerativeSpec {
        sizes,
        zeta,
        eta,
        sigma: 0.0,
        theta: Some(theta),
    }
}

pub fn scenario(name: &str) -> Result<Scenario> {
    let sizes = vec![20; 7];
    let two_level = vec![0, 0, 0, 0, 1, 1, 1];
    let s = match name {
        "fig3" => Scenario {
            name: "fig3",
            spec: build(
                sizes,
                two_level.clone(),
                TriMatrix::from_fn(2, |a, b| if a == b { FIG3_SAME_SUPER } else { FIG3_ACROSS }),
                layered(&two_level, FIG3_WITHIN, FIG3_SAME_SUPER, FIG3_ACROSS),
            ),
            true_communities: 7,
            true_supercommunities: 2,
            class: Assortativity::Assortative,
            fit_k: 20,
            fit_r: 2,
        },
        // every block logit drawn around one shared level, diagonal included
        "flat" => Scenario {
            name: "flat",
            spec: GenerativeSpec {
                sizes,
                zeta: vec![0; 7],
                eta: TriMatrix::filled(1, FLAT_LEVEL),
                sigma: FLAT_SPREAD,
                theta: None,
            },
            true_communities: 7,
            true_supercommunities: 1,
            class: Assortativity::Assortative,
            fit_k: 20,
            fit_r: 2,
        },
        "disassortative" => {
            let zeta = vec![0; 7];
            Scenario {
                name: "disassortative",
                spec: build(
                    sizes,
                    zeta.clone(),
                    TriMatrix::filled(1, 0.5),
                    layered(&zeta, -2.5, 0.5, 0.5),
                ),
                true_communities: 7,
                true_supercommunities: 1,
                class: Assortativity::Disassortative,
                fit_k: 20,
                fit_r: 2,
            }
        }
        "sparse" => Scenario {
            name: "sparse",
            spec: build(
                vec![30; 7],
                two_level.clone(),
                TriMatrix::from_fn(2, |a, b| if a == b { -3.0 } else { -5.0 }),
                layered(&two_level, -1.0, -3.0, -5.0),
            ),
            true_communities: 7,
            true_supercommunities: 2,
            class: Assortativity::Assortative,
            fit_k: 20,
            fit_r: 2,
        },
        _ => {
            return Err(Error::UnknownScenario {
                name: name.to_string(),
                known: NAMES.join(", "),
            })
        }
    };
    Ok(s)
}
