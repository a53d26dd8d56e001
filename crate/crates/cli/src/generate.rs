use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ssncp::problems::{
    gen_biq, gen_nonsc_sdp_with, gen_nonsc_sdpplus_with, gen_rcp, gen_theta, gen_thetaplus, read_affinity_csv, read_biq,
    read_edge_list, write_sdpa_string, GeneratedInstance, DEFAULT_DENSITY,
};
use ssncp::{ProblemSpec, SsnError};

use crate::input::{sidecar_path, HKind, Sidecar, SolutionJson, SIDECAR_SCHEMA};
use crate::{EXIT_INPUT, EXIT_OPTIMAL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    NonscSdp,
    NonscSdpplus,
    Theta,
    Thetaplus,
    Biq,
    Rcp,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::NonscSdp => "nonsc-sdp",
            Family::NonscSdpplus => "nonsc-sdpplus",
            Family::Theta => "theta",
            Family::Thetaplus => "thetaplus",
            Family::Biq => "biq",
            Family::Rcp => "rcp",
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub family: Family,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// File stem; defaults to a name built from the parameters.
    #[arg(long)]
    pub name: Option<String>,
    /// Matrix order (vertices for theta, variables for biq, points for rcp).
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Number of constraints (non-SC families).
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 20)]
    pub rank_x: usize,
    #[arg(long, default_value_t = 20)]
    pub rank_s: usize,
    /// Density of random constraints or random graphs.
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Input file instead of a random instance: edge list (theta), Biq Mac
    /// file (biq) or affinity CSV (rcp).
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Cluster count for rcp.
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
}

fn random_graph(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Points scattered around `k` centres on a line, Gaussian affinities.
fn random_affinity(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let c = (i % k) as f64 * 3.0;
            (c + 0.5 * rng.sample::<f64, _>(StandardNormal), 0.5 * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        (-(dx * dx + dy * dy) / 2.0).exp()
    })
}

fn sidecar(family: Family, seed: Option<u64>, spec: &ProblemSpec, gen: Option<&GeneratedInstance>) -> Sidecar {
    Sidecar {
        schema: SIDECAR_SCHEMA.into(),
        family: family.name().into(),
        seed,
        n: spec.order(),
        m: spec.m(),
        h: if spec.h.is_absent() { HKind::Absent } else { HKind::Nonneg },
        strictly_complementary: gen.and_then(|g| g.meta.strictly_complementary),
        known_solution: gen.and_then(|g| g.known_solution.as_ref()).map(SolutionJson::from),
    }
}

fn build(a: &GenerateArgs) -> Result<(ProblemSpec, Sidecar, String), SsnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let density = a.density.unwrap_or(DEFAULT_DENSITY);
    // seeds only matter for random instances
    let seed = a.from.is_none().then_some(a.seed);
    let stem = |extra: String| a.name.clone().unwrap_or_else(|| format!("{}-{extra}", a.family.name()));
    match a.family {
        Family::NonscSdp | Family::NonscSdpplus => {
            let g = if a.family == Family::NonscSdp {
                gen_nonsc_sdp_with(a.n, a.m, a.rank_x, a.rank_s, a.seed, density)?
            } else {
                gen_nonsc_sdpplus_with(a.n, a.m, a.rank_x, a.rank_s, a.seed, density)?
            };
            let sc = sidecar(a.family, Some(a.seed), &g.spec, Some(&g));
            let name = stem(format!("n{}-m{}-s{}", a.n, a.m, a.seed));
            Ok((g.spec, sc, name))
        }
        Family::Theta | Family::Thetaplus => {
            let (edges, n, tag) = match &a.from {
                Some(path) => {
                    let g = read_edge_list(path, None)?;
                    (g.edges, g.n, file_tag(path))
                }
                None => {
                    let p = a.density.unwrap_or(0.5);
                    (random_graph(a.n, p, &mut rng), a.n, format!("n{}-s{}", a.n, a.seed))
                }
            };
            let spec = if a.family == Family::Theta { gen_theta(&edges, n)? } else { gen_thetaplus(&edges, n)? };
            Ok((spec.clone(), sidecar(a.family, seed, &spec, None), stem(tag)))
        }
        Family::Biq => {
            let (q0, c0, tag) = match &a.from {
                Some(path) => {
                    let (q0, c0) = read_biq(path)?;
                    (q0, c0, file_tag(path))
                }
                None => {
                    let g = DMatrix::from_fn(a.n, a.n, |_, _| rng.random_range(-10i32..=10) as f64);
                    let c0 = (0..a.n).map(|_| rng.random_range(-10i32..=10) as f64).collect();
                    (&g + g.transpose(), c0, format!("n{}-s{}", a.n, a.seed))
                }
            };
            let spec = gen_biq(&q0, &c0)?;
            Ok((spec.clone(), sidecar(a.family, seed, &spec, None), stem(tag)))
        }
        Family::Rcp => {
            let (w, tag) = match &a.from {
                Some(path) => (read_affinity_csv(path)?, file_tag(path)),
                None => (random_affinity(a.n, a.clusters, &mut rng), format!("n{}-k{}-s{}", a.n, a.clusters, a.seed)),
            };
            let spec = gen_rcp(&w, a.clusters)?;
            Ok((spec.clone(), sidecar(a.family, seed, &spec, None), stem(tag)))
        }
    }
}

fn file_tag(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

pub fn run(a: &GenerateArgs) -> u8 {
    let (spec, sc, name) = match build(a) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let write = || -> Result<PathBuf, SsnError> {
        std::fs::create_dir_all(&a.out)?;
        let path = a.out.join(format!("{name}.dat-s"));
        std::fs::write(&path, write_sdpa_string(&spec)?)?;
        std::fs::write(sidecar_path(&path), serde_json::to_string_pretty(&sc)? + "\n")?;
        Ok(path)
    };
    match write() {
        Ok(path) => {
            println!("{} (n = {}, m = {}, X >= 0: {})", path.display(), sc.n, sc.m, sc.h == HKind::Nonneg);
            EXIT_OPTIMAL
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
