use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssncp::problems::{gen_biq, gen_rcp, gen_theta, gen_thetaplus, read_affinity_csv, read_biq, read_edge_list, read_sdpa, KnownSolution};
use ssncp::{HSpec, ProblemSpec, SsnError, SymBlockMat};

use crate::InputFormat;

pub const SIDECAR_SCHEMA: &str = "ssncp-instance/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HKind {
    Absent,
    Nonneg,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionJson {
    pub x: SymBlockMat,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<SymBlockMat>,
    pub s: SymBlockMat,
}

impl From<&KnownSolution> for SolutionJson {
    fn from(k: &KnownSolution) -> Self {
        SolutionJson {
            x: k.x.clone(),
            y: k.y.clone(),
            z: k.z.clone(),
            s: k.s.clone(),
        }
    }
}

/// Metadata written next to every generated SDPA file. It carries what the
/// SDPA format cannot: the X ≥ 0 constraint and the known solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema: String,
    pub family: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub n: usize,
    pub m: usize,
    pub h: HKind,
    #[serde(default)]
    pub strictly_complementary: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_solution: Option<SolutionJson>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>, SsnError> {
    let side = sidecar_path(path);
    if side == path || !side.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&side)?;
    let sc: Sidecar = serde_json::from_str(&text)?;
    if sc.schema != SIDECAR_SCHEMA {
        return Err(SsnError::Parse {
            line: 0,
            msg: format!("{}: unknown schema {:?}", side.display(), sc.schema),
        });
    }
    Ok(Some(sc))
}

pub struct Loaded {
    pub spec: ProblemSpec,
    pub family: String,
}

pub fn load(path: &Path, format: InputFormat, nonneg: bool, clusters: Option<usize>) -> Result<Loaded, SsnError> {
    let (spec, family) = match format {
        InputFormat::Sdpa => {
            let p = read_sdpa(path)?;
            let side = read_sidecar(path)?;
            let family = side.as_ref().map_or_else(|| "sdpa".to_string(), |s| s.family.clone());
            let want_nonneg = nonneg || side.is_some_and(|s| s.h == HKind::Nonneg);
            let p = if want_nonneg {
                ProblemSpec::new(p.c.clone(), p.a.clone(), p.q.clone(), HSpec::Nonneg)?
            } else {
                p
            };
            (p, family)
        }
        InputFormat::Theta | InputFormat::Thetaplus => {
            let g = read_edge_list(path, None)?;
            if format == InputFormat::Theta {
                (gen_theta(&g.edges, g.n)?, "theta".into())
            } else {
                (gen_thetaplus(&g.edges, g.n)?, "thetaplus".into())
            }
        }
        InputFormat::Biq => {
            let (q0, c0) = read_biq(path)?;
            (gen_biq(&q0, &c0)?, "biq".into())
        }
        InputFormat::Rcp => {
            let k = clusters.ok_or_else(|| SsnError::InvalidParameter("--format rcp needs --clusters".into()))?;
            (gen_rcp(&read_affinity_csv(path)?, k)?, "rcp".into())
        }
    };
    Ok(Loaded { spec, family })
}
