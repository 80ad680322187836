//! Deterministic simulated devices. Signal values are pure functions of the
//! device seed, the signal's generator and the requested timestamp; there is
//! no internal clock.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AddressSpaceNode, Quality, Sample, SourceAdapter};
use crate::clock::EpochMillis;
use crate::error::{Error, Result};
use crate::query_model::{from_json_with_paths, NodeRef};
use crate::value::{DataType, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum Generator {
    Constant {
        value: f64,
    },
    #[serde(rename_all = "camelCase")]
    Sine {
        amplitude: f64,
        freq_hz: f64,
        offset: f64,
    },
    #[serde(rename_all = "camelCase")]
    Ramp {
        slope_per_sec: f64,
    },
    /// One Gaussian step per second of source time.
    #[serde(rename_all = "camelCase")]
    RandomWalk {
        step_std_dev: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SignalConfig {
    pub node_ref: NodeRef,
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimDeviceConfig {
    pub name: String,
    pub seed: u64,
    pub signals: Vec<SignalConfig>,
}

/// On-disk description of a simulated device: its address space and,
/// optionally, the generators behind its variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DeviceFile {
    pub address_space: AddressSpaceNode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimDeviceConfig>,
}

impl DeviceFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        from_json_with_paths(&text)
    }
}

struct Signal {
    generator: Generator,
    key: u64,
}

pub struct SimDevice {
    name: String,
    address_space: AddressSpaceNode,
    signals: Vec<(NodeRef, Signal)>,
    reads: AtomicU64,
}

impl SimDevice {
    pub fn new(config: SimDeviceConfig, address_space: AddressSpaceNode) -> Result<Self> {
        address_space.validate()?;
        let mut signals = Vec::with_capacity(config.signals.len());
        for (i, s) in config.signals.into_iter().enumerate() {
            let path = format!("signals[{i}]");
            let node = address_space
                .find(&s.node_ref)
                .ok_or_else(|| Error::unresolvable(&s.node_ref))?;
            if !node.is_variable() {
                return Err(Error::NotAVariable(s.node_ref.canonical()));
            }
            if node.data_type != Some(DataType::Float64) {
                return Err(Error::invalid(path, "generators produce float64 values"));
            }
            match s.generator {
                Generator::Sine { freq_hz, .. } if !(freq_hz > 0.0) => {
                    return Err(Error::invalid(format!("{path}.generator.freqHz"), "must be > 0"));
                }
                Generator::RandomWalk { step_std_dev } if !(step_std_dev >= 0.0) => {
                    return Err(Error::invalid(
                        format!("{path}.generator.stepStdDev"),
                        "must be ≥ 0",
                    ));
                }
                _ => {}
            }
            let key = mix(config.seed ^ fnv1a(node.node_ref.canonical().as_bytes()));
            signals.push((
                node.node_ref.clone(),
                Signal {
                    generator: s.generator,
                    key,
                },
            ));
        }
        Ok(Self {
            name: config.name,
            address_space,
            signals,
            reads: AtomicU64::new(0),
        })
    }

    /// Device with a flat address space: an object named after the device
    /// holding one float64 variable per signal.
    pub fn from_config(config: SimDeviceConfig) -> Result<Self> {
        let ns = config.signals.first().map_or(1, |s| s.node_ref.namespace_index);
        let mut root = AddressSpaceNode::object(NodeRef::node_id(ns, config.name.clone()), config.name.clone());
        for s in &config.signals {
            root.children.push(AddressSpaceNode::variable(
                s.node_ref.clone(),
                s.node_ref.identifier.clone(),
                DataType::Float64,
            ));
        }
        Self::new(config, root)
    }

    /// Device named `name`, whatever name the simulation section carries.
    pub fn from_file(file: DeviceFile, name: &str) -> Result<Self> {
        let mut config = file.simulation.unwrap_or_else(|| SimDeviceConfig {
            name: String::new(),
            seed: 0,
            signals: Vec::new(),
        });
        config.name = name.to_string();
        Self::new(config, file.address_space)
    }

    fn sample(&self, node_ref: &NodeRef, at: EpochMillis) -> Result<Sample> {
        let node = self
            .address_space
            .find(node_ref)
            .ok_or_else(|| Error::unresolvable(node_ref))?;
        if !node.is_variable() {
            return Err(Error::NotAVariable(node_ref.canonical()));
        }
        let signal = self.signals.iter().find(|(r, _)| r == &node.node_ref);
        Ok(match signal {
            Some((_, s)) => Sample {
                node_ref: node_ref.clone(),
                value: Some(Value::Float64(evaluate(&s.generator, s.key, at))),
                source_timestamp: at,
                status: Quality::Good,
            },
            None => Sample {
                node_ref: node_ref.clone(),
                value: None,
                source_timestamp: at,
                status: Quality::Bad,
            },
        })
    }
}

impl SourceAdapter for SimDevice {
    fn device_name(&self) -> &str {
        &self.name
    }

    fn address_space(&self) -> Result<AddressSpaceNode> {
        Ok(self.address_space.clone())
    }

    fn read(&self, refs: &[NodeRef], at: EpochMillis) -> Result<Vec<Sample>> {
        self.reads.fetch_add(1, Ordering::SeqCst);
        refs.iter().map(|r| self.sample(r, at)).collect()
    }

    fn read_count(&self) -> u64 {
        self.reads.load(Ordering::SeqCst)
    }
}

fn evaluate(g: &Generator, key: u64, at: EpochMillis) -> f64 {
    let t = at as f64 / 1000.0;
    match *g {
        Generator::Constant { value } => value,
        Generator::Sine {
            amplitude,
            freq_hz,
            offset,
        } => offset + amplitude * (2.0 * PI * freq_hz * t).sin(),
        Generator::Ramp { slope_per_sec } => slope_per_sec * t,
        Generator::RandomWalk { step_std_dev } => {
            let step = at.div_euclid(1000).max(0) as u64;
            random_walk_value(key, step_std_dev, step)
        }
    }
}

const WALK_LEVELS: u32 = 40;

/// Position after `step` Gaussian increments of a walk identified by `key`.
///
/// The walk is laid out as a Brownian bridge over `[0, 2^40]`: every dyadic
/// midpoint draws its own normal from a hash of `(key, midpoint)`, so any step
/// is addressable in 40 draws without replaying the ones before it. Steps past
/// `2^40` are clamped.
pub fn random_walk_value(key: u64, step_std_dev: f64, step: u64) -> f64 {
    let target = step.min(1 << WALK_LEVELS);
    let (mut lo, mut hi) = (0u64, 1u64 << WALK_LEVELS);
    let mut w_lo = 0.0;
    let mut w_hi = step_std_dev * (hi as f64).sqrt() * normal(key, u64::MAX);
    while target != lo && target != hi {
        let mid = lo + (hi - lo) / 2;
        let sd = step_std_dev * ((hi - lo) as f64 / 4.0).sqrt();
        let w_mid = 0.5 * (w_lo + w_hi) + sd * normal(key, mid);
        if target < mid {
            hi = mid;
            w_hi = w_mid;
        } else {
            lo = mid;
            w_lo = w_mid;
        }
    }
    if target == lo {
        w_lo
    } else {
        w_hi
    }
}

fn normal(key: u64, position: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(key ^ mix(position)));
    StandardNormal.sample(&mut rng)
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
