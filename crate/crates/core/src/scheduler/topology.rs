use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ScheduleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Terminal,
    Edge,
    Cloud,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Terminal, Tier::Edge, Tier::Cloud];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Terminal => "terminal",
            Tier::Edge => "edge",
            Tier::Cloud => "cloud",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tier::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tier `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    pub tier: Tier,
    /// Work-units per second.
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub latency_s: f64,
    pub bandwidth_kbps: f64,
}

/// Unordered tier pair, serialized as `"terminal-edge"` and friends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TierPair(Tier, Tier);

impl TierPair {
    pub fn new(a: Tier, b: Tier) -> Self {
        if a <= b {
            TierPair(a, b)
        } else {
            TierPair(b, a)
        }
    }
}

impl fmt::Display for TierPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

impl FromStr for TierPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| format!("tier pair `{s}` must look like `terminal-edge`"))?;
        Ok(TierPair::new(a.parse()?, b.parse()?))
    }
}

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    devices: Vec<Device>,
    links: BTreeMap<String, LinkParams>,
}

/// Devices plus a per-tier-pair link table. Devices are kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTopology {
    devices: Vec<Device>,
    links: BTreeMap<TierPair, LinkParams>,
    index: BTreeMap<String, usize>,
}

impl DeviceTopology {
    pub fn new(
        mut devices: Vec<Device>,
        links: BTreeMap<TierPair, LinkParams>,
    ) -> Result<Self, ScheduleError> {
        let bad = |m: String| Err(ScheduleError::InvalidTopology(m));
        if devices.is_empty() {
            return bad("topology needs at least one device".into());
        }
        devices.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = BTreeMap::new();
        for (i, d) in devices.iter().enumerate() {
            if !(d.speed.is_finite() && d.speed > 0.0) {
                return bad(format!("device `{}` needs speed > 0", d.id));
            }
            if index.insert(d.id.clone(), i).is_some() {
                return bad(format!("duplicate device id `{}`", d.id));
            }
        }
        for a in Tier::ALL {
            for b in Tier::ALL {
                match links.get(&TierPair::new(a, b)) {
                    None => return bad(format!("missing link parameters for {a}-{b}")),
                    Some(l)
                        if !(l.latency_s.is_finite()
                            && l.latency_s >= 0.0
                            && l.bandwidth_kbps > 0.0) =>
                    {
                        return bad(format!("invalid link parameters for {a}-{b}"))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(Self {
            devices,
            links,
            index,
        })
    }

    /// 1 cloud, 5 edge servers, 10 terminals. The cloud is compute-rich but
    /// sits behind a long round trip.
    pub fn default_edge() -> Self {
        let mut devices = vec![Device {
            id: "cloud-0".into(),
            tier: Tier::Cloud,
            speed: 32.0,
        }];
        devices.extend((0..5).map(|i| Device {
            id: format!("edge-{i}"),
            tier: Tier::Edge,
            speed: 8.0,
        }));
        devices.extend((0..10).map(|i| Device {
            id: format!("terminal-{i}"),
            tier: Tier::Terminal,
            speed: 1.0,
        }));
        let link = |latency_s, bandwidth_kbps| LinkParams {
            latency_s,
            bandwidth_kbps,
        };
        let cloud = link(0.20, 5_000.0);
        let links = BTreeMap::from([
            (TierPair::new(Tier::Cloud, Tier::Cloud), cloud),
            (TierPair::new(Tier::Cloud, Tier::Edge), cloud),
            (TierPair::new(Tier::Cloud, Tier::Terminal), cloud),
            (TierPair::new(Tier::Edge, Tier::Edge), link(0.01, 50_000.0)),
            (TierPair::new(Tier::Terminal, Tier::Edge), link(0.02, 20_000.0)),
            (
                TierPair::new(Tier::Terminal, Tier::Terminal),
                link(0.05, 10_000.0),
            ),
        ]);
        Self::new(devices, links).expect("default topology is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, ScheduleError> {
        let file: TopologyFile = serde_json::from_str(text)
            .map_err(|e| ScheduleError::InvalidTopology(e.to_string()))?;
        let mut links = BTreeMap::new();
        for (key, params) in file.links {
            let pair: TierPair = key.parse().map_err(ScheduleError::InvalidTopology)?;
            if links.insert(pair, params).is_some() {
                return Err(ScheduleError::InvalidTopology(format!(
                    "link `{key}` listed twice"
                )));
            }
        }
        Self::new(file.devices, links)
    }

    pub fn to_json(&self) -> String {
        let file = TopologyFile {
            devices: self.devices.clone(),
            links: self
                .links
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("serializable") + "\n"
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn device(&self, idx: usize) -> &Device {
        &self.devices[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn link(&self, a: Tier, b: Tier) -> LinkParams {
        self.links[&TierPair::new(a, b)]
    }

    /// Zero on the same device, otherwise latency plus size over bandwidth.
    pub fn transfer_time(&self, from: usize, to: usize, size_kb: f64) -> f64 {
        if from == to {
            return 0.0;
        }
        let l = self.link(self.devices[from].tier, self.devices[to].tier);
        l.latency_s + size_kb / l.bandwidth_kbps
    }

    /// Same topology with every link latency set to zero and bandwidth made
    /// effectively infinite.
    pub fn without_comm(&self) -> Self {
        let links = self
            .links
            .keys()
            .map(|k| {
                (
                    *k,
                    LinkParams {
                        latency_s: 0.0,
                        bandwidth_kbps: f64::INFINITY,
                    },
                )
            })
            .collect();
        Self {
            devices: self.devices.clone(),
            links,
            index: self.index.clone(),
        }
    }

    pub fn select(&self, selector: &DeviceSelector) -> Result<Vec<usize>, ScheduleError> {
        let picked: Vec<usize> = match selector {
            DeviceSelector::Tiers(tiers) => (0..self.devices.len())
                .filter(|&i| tiers.contains(&self.devices[i].tier))
                .collect(),
            DeviceSelector::Devices(ids) => {
                let mut out = Vec::with_capacity(ids.len());
                for id in ids {
                    out.push(
                        self.index_of(id)
                            .ok_or_else(|| ScheduleError::UnknownDevice(id.clone()))?,
                    );
                }
                out.sort_unstable();
                out
            }
        };
        if picked.is_empty() {
            return Err(ScheduleError::NoDeviceAvailable);
        }
        Ok(picked)
    }
}

/// Which devices a schedule may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceSelector {
    Tiers(BTreeSet<Tier>),
    Devices(BTreeSet<String>),
}

impl DeviceSelector {
    pub fn all() -> Self {
        DeviceSelector::Tiers(Tier::ALL.into_iter().collect())
    }

    pub fn tiers(tiers: impl IntoIterator<Item = Tier>) -> Self {
        DeviceSelector::Tiers(tiers.into_iter().collect())
    }

    pub fn device(id: &str) -> Self {
        DeviceSelector::Devices(BTreeSet::from([id.to_string()]))
    }
}
