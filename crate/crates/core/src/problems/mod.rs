//! Test problem families and file formats.

mod formats;
mod generators;
mod sdpa;

pub use formats::{read_affinity_csv, read_biq, read_edge_list, EdgeList};
pub use generators::{
    gen_biq, gen_nonsc_sdp, gen_nonsc_sdp_with, gen_nonsc_sdpplus, gen_nonsc_sdpplus_with, gen_rcp, gen_theta,
    gen_thetaplus, GeneratedInstance, InstanceMeta, KnownSolution, DEFAULT_DENSITY,
};
pub use sdpa::{parse_sdpa, read_sdpa, write_sdpa, write_sdpa_string};
