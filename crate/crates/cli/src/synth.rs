//! `synth`: writes a synthetic campaign in the same layout `clean` reads.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use pathloss_core::ingest::write_measurements;
use pathloss_core::synth::{generate_dataset, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::artifact::{to_json_bytes, write_bytes, write_json, Artifact, CliResult, InputDigest, Inputs, Timer};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings (JSON); omitted fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's sample count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBody {
    pub spec: SyntheticSpec,
    pub outputs: BTreeMap<String, InputDigest>,
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let mut timer = Timer::start();
    let mut inputs = Inputs::default();
    let mut spec: SyntheticSpec = match &args.spec {
        Some(path) => inputs.json("spec", path)?,
        None => SyntheticSpec::default(),
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let data = generate_dataset(&spec)?;
    timer.lap("generate");

    let mut csv = Vec::new();
    write_measurements(&mut csv, &data.records)?;
    let files = [
        ("measurements.csv", csv),
        ("links.json", to_json_bytes(&data.links)?),
        ("radio.json", to_json_bytes(&spec.radio)?),
        ("truth.json", to_json_bytes(&data.truth)?),
    ];
    let mut outputs = BTreeMap::new();
    for (name, bytes) in &files {
        let path = args.out_dir.join(name);
        write_bytes(&path, bytes)?;
        outputs.insert(name.to_string(), InputDigest::of(&path, bytes));
    }
    timer.lap("write");

    let seeds = BTreeMap::from([("synth".to_string(), spec.seed)]);
    let body = SynthBody { spec, outputs };
    write_json(
        &args.out_dir.join("synth.json"),
        &Artifact::new("synth", &inputs, seeds, body, timer),
    )
}
