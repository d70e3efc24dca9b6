//! Seeded generator for the emergency-response task corpus.
//!
//! A task's calls fall into three layers that mirror the role layers of the
//! catalog: perception (video), analysis (keyframes, weather, map) and
//! reporting. Analysis calls consume perception outputs and may also consume
//! an earlier analysis call of the same role; reporting calls consume
//! analysis or perception outputs. No call has more than two inputs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::DrawKey;
use crate::task::{Catalog, Corpus, Difficulty, GroundTruthPlan, GtCall, Scenario, Task};

/// Terminals a task's home device is drawn from.
pub const HOME_TERMINALS: usize = 10;

/// Sizes of the perception, analysis and reporting layers for `n` calls.
pub fn layer_sizes(n: usize) -> (usize, usize, usize) {
    let a = ((0.3 * n as f64).round() as usize).max(1);
    let c = match n {
        0..=2 => 0,
        3..=7 => 1,
        _ => 2,
    };
    (a, n - a - c, c)
}

fn value_prefix(param: &str) -> &'static str {
    match param {
        "video" => "cam",
        "clip" => "clip",
        "location" => "cell",
        "area" => "zone",
        "template" => "tpl",
        "channel" => "chan",
        _ => "case",
    }
}

fn fixture_output(tool: &str, scenario: Scenario) -> String {
    let (object, anomaly) = match scenario {
        Scenario::Fire => ("smoke", "fire"),
        Scenario::TrafficAccident => ("vehicle", "collision"),
        Scenario::Flood => ("water", "flooding"),
        Scenario::Intrusion => ("person", "intruder"),
    };
    match tool {
        "detect_objects" => format!("objects={object}"),
        "classify_anomaly" => format!("anomaly={anomaly}"),
        _ => format!("tracks={object}"),
    }
}

fn opening(scenario: Scenario, place: &str) -> String {
    match scenario {
        Scenario::Fire => format!("A fire has been reported near {place}."),
        Scenario::TrafficAccident => format!("A traffic accident has been reported at {place}."),
        Scenario::Flood => format!("Flooding has been reported around {place}."),
        Scenario::Intrusion => format!("An intrusion has been detected at {place}."),
    }
}

/// `counts[d]` tasks per difficulty, easy to hard. Deterministic per seed.
pub fn generate_taskset(seed: u64, counts: [usize; 3], catalog: &Catalog) -> Corpus {
    let mut tasks = Vec::new();
    for (d, &count) in Difficulty::ALL.iter().zip(&counts) {
        for i in 0..count {
            let id = format!("{}-{:02}", d.as_str(), i + 1);
            tasks.push(generate_task(seed, *d, &id, catalog));
        }
    }
    Corpus { seed, tasks }
}

fn generate_task(seed: u64, difficulty: Difficulty, id: &str, catalog: &Catalog) -> Task {
    let mut rng = DrawKey::new("corpus").u64(seed).str(id).rng();
    let (lo, hi) = difficulty.bin();
    let n = rng.gen_range(lo..=hi);
    let scenario = *Scenario::ALL.choose(&mut rng).expect("nonempty");
    let home = format!("terminal-{}", rng.gen_range(0..HOME_TERMINALS));
    let (a, b, c) = layer_sizes(n);

    let layer_tools = |layer: u8| -> Vec<&str> {
        catalog
            .roles()
            .iter()
            .filter(|r| r.layer == layer)
            .flat_map(|r| r.tools.iter().map(String::as_str))
            .collect()
    };
    let pick = |rng: &mut rand_chacha::ChaCha8Rng, layer: u8, k: usize| -> Vec<String> {
        let mut pool = layer_tools(layer);
        pool.shuffle(rng);
        let mut chosen: Vec<String> = pool.into_iter().take(k).map(String::from).collect();
        // Keep catalog order within a layer so ids read naturally.
        chosen.sort_by_key(|t| layer_tools(layer).iter().position(|x| x == t));
        chosen
    };
    let a_tools = pick(&mut rng, 0, a);
    let b_tools = pick(&mut rng, 1, b);
    let c_tools = pick(&mut rng, 2, c);

    let mut calls: Vec<GtCall> = Vec::with_capacity(n);
    let mut used_numbers: BTreeMap<&'static str, Vec<u32>> = BTreeMap::new();
    let mut push = |rng: &mut rand_chacha::ChaCha8Rng, tool: &str, deps: Vec<u32>, calls: &mut Vec<GtCall>| {
        let info = catalog.tool(tool).expect("catalog tool");
        let prefix = value_prefix(&info.param);
        let taken = used_numbers.entry(prefix).or_default();
        let num = loop {
            let k = rng.gen_range(1..100);
            if !taken.contains(&k) {
                taken.push(k);
                break k;
            }
        };
        let mut deps = deps;
        deps.sort_unstable();
        deps.dedup();
        calls.push(GtCall {
            id: calls.len() as u32 + 1,
            tool: tool.to_string(),
            role: info.role.clone(),
            param: info.param.clone(),
            value: format!("{prefix}_{num:02}"),
            deps,
        });
    };

    for t in &a_tools {
        push(&mut rng, t, Vec::new(), &mut calls);
    }
    let a_ids: Vec<u32> = (1..=a as u32).collect();
    for t in &b_tools {
        let mut deps = vec![*a_ids.choose(&mut rng).expect("a >= 1")];
        let role = &catalog.tool(t).expect("catalog tool").role;
        let same_role: Vec<u32> = calls
            .iter()
            .filter(|c| &c.role == role)
            .map(|c| c.id)
            .collect();
        if !same_role.is_empty() && rng.gen_bool(0.5) {
            deps.push(*same_role.choose(&mut rng).expect("nonempty"));
        } else if a_ids.len() > 1 && rng.gen_bool(0.5) {
            deps.push(*a_ids.choose(&mut rng).expect("nonempty"));
        }
        push(&mut rng, t, deps, &mut calls);
    }
    let upstream: Vec<u32> = if b > 0 {
        (a as u32 + 1..=(a + b) as u32).collect()
    } else {
        a_ids.clone()
    };
    for t in &c_tools {
        let k = rng.gen_range(1..=upstream.len().min(2));
        let deps: Vec<u32> = upstream.choose_multiple(&mut rng, k).copied().collect();
        push(&mut rng, t, deps, &mut calls);
    }

    let fixture = calls
        .iter()
        .filter(|c| catalog.tool(&c.tool).is_some_and(|i| i.param == "video"))
        .map(|c| (c.tool.clone(), fixture_output(&c.tool, scenario)))
        .collect();
    let place = calls
        .iter()
        .find(|c| c.param == "area" || c.param == "location")
        .map_or_else(|| calls[0].value.clone(), |c| c.value.clone());
    let steps: Vec<String> = calls
        .iter()
        .map(|c| catalog.tool(&c.tool).expect("catalog tool").describe(&c.value))
        .collect();
    let instruction = format!("{} Please {}.", opening(scenario, &place), steps.join(", then "));

    Task {
        id: id.to_string(),
        instruction,
        scenario,
        difficulty,
        home,
        fixture,
        ground_truth: GroundTruthPlan { calls },
    }
}
