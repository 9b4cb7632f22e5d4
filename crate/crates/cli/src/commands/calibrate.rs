use std::collections::BTreeMap;

use sslc::matrix::SeededRng;

use super::tensor_seed;
use crate::error::{CliError, Result};
use crate::formats::{sha256_hex, ActivationStream, CalibrationManifest, CalibrationStats, WeightBundle};
use crate::CalibrateArgs;

pub fn run(args: &CalibrateArgs) -> Result<()> {
    let manifest = match (&args.activations, &args.synthetic) {
        (Some(dir), _) => {
            let bundle = WeightBundle::open(dir)?;
            let stats = stream_norms(&bundle)?;
            CalibrationStats::write(&args.out, &bundle.hash, stats)?
        }
        (None, Some(spec)) => {
            let spec = SyntheticSpec::parse(spec)?;
            if args.tensors.is_empty() {
                return Err(CliError::validation("--synthetic needs at least one --tensor"));
            }
            let stats = args
                .tensors
                .iter()
                .map(|name| (name.clone(), spec.samples as u64, spec.norms(name)))
                .collect();
            CalibrationStats::write(&args.out, &spec.source_hash(&args.tensors), stats)?
        }
        (None, None) => return Err(CliError::validation("pass --activations or --synthetic")),
    };
    log_summary(&manifest);
    Ok(())
}

fn log_summary(m: &CalibrationManifest) {
    for t in &m.tensors {
        log::info!("{}: {} channels from {} samples", t.name, t.channels, t.samples);
    }
}

struct Accumulator {
    channels: usize,
    samples: u64,
    sum_sq: Vec<f64>,
}

/// One pass over every activation batch. Batches that name the same target
/// (via `calibrates`, or by sharing a name) accumulate into one set of
/// running sums, so memory is one `f64` per channel.
pub fn stream_norms(bundle: &WeightBundle) -> Result<Vec<(String, u64, Vec<f64>)>> {
    let mut acc: BTreeMap<String, Accumulator> = BTreeMap::new();
    for entry in &bundle.manifest.tensors {
        let target = entry.target().to_string();
        let slot = acc.entry(target.clone()).or_insert_with(|| Accumulator {
            channels: entry.cols,
            samples: 0,
            sum_sq: vec![0.0; entry.cols],
        });
        if slot.channels != entry.cols {
            return Err(CliError::validation(format!(
                "activation batch `{}` has {} channels, earlier batches for `{target}` have {}",
                entry.name, entry.cols, slot.channels
            )));
        }
        let mut index = 0u64;
        ActivationStream { bundle, entry }.for_each(|channel, value| {
            if !value.is_finite() {
                return Err(CliError::validation(format!(
                    "activation batch `{}`: non-finite value at sample {}, channel {channel}",
                    entry.name,
                    index / entry.cols as u64
                )));
            }
            let v = value as f64;
            slot.sum_sq[channel] += v * v;
            index += 1;
            Ok(())
        })?;
        slot.samples += entry.rows as u64;
    }
    Ok(acc
        .into_iter()
        .map(|(name, a)| (name, a.samples, a.sum_sq.into_iter().map(f64::sqrt).collect()))
        .collect())
}

/// `lognormal:sigma=S,seed=N,channels=C,samples=T`: activations
/// `x[t, j] = exp(σ·z_j)·g[t, j]` with standard normal `z` and `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub sigma: f64,
    pub seed: u64,
    pub channels: usize,
    pub samples: usize,
}

impl SyntheticSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| CliError::validation(format!("synthetic spec `{text}`: {msg}"));
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        if kind != "lognormal" {
            return Err(bad(format!("unknown generator `{kind}` (expected lognormal)")));
        }
        let (mut sigma, mut seed, mut channels, mut samples) = (None, 0u64, None, None);
        for pair in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| bad(format!("`{pair}` is not key=value")))?;
            let num = |what: &str| bad(format!("{what} `{v}` is not a valid number"));
            match k.trim() {
                "sigma" => sigma = Some(v.trim().parse::<f64>().map_err(|_| num("sigma"))?),
                "seed" => seed = v.trim().parse().map_err(|_| num("seed"))?,
                "channels" => channels = Some(v.trim().parse::<usize>().map_err(|_| num("channels"))?),
                "samples" => samples = Some(v.trim().parse::<usize>().map_err(|_| num("samples"))?),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let sigma = sigma.ok_or_else(|| bad("missing sigma".into()))?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(bad("sigma must be finite and non-negative".into()));
        }
        let channels = channels.filter(|&c| c > 0).ok_or_else(|| bad("channels must be positive".into()))?;
        let samples = samples.filter(|&s| s > 0).ok_or_else(|| bad("samples must be positive".into()))?;
        Ok(Self {
            sigma,
            seed,
            channels,
            samples,
        })
    }

    /// Streams the generator for one tensor, keeping only running sums.
    pub fn norms(&self, name: &str) -> Vec<f64> {
        let mut rng = SeededRng::new(tensor_seed(self.seed, name));
        let scale: Vec<f64> = (0..self.channels).map(|_| (self.sigma * rng.gaussian()).exp()).collect();
        let mut sum_sq = vec![0.0; self.channels];
        for _ in 0..self.samples {
            for (acc, s) in sum_sq.iter_mut().zip(&scale) {
                let x = s * rng.gaussian();
                *acc += x * x;
            }
        }
        sum_sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn source_hash(&self, names: &[String]) -> String {
        let text = format!(
            "lognormal:sigma={},seed={},channels={},samples={};rng={};tensors={}",
            self.sigma,
            self.seed,
            self.channels,
            self.samples,
            SeededRng::ALGORITHM,
            names.join(",")
        );
        sha256_hex([text.as_bytes()])
    }
}
