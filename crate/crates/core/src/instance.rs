//! Pooling network instances in the q-formulation.
//!
//! An instance is a tripartite flow network: sources feed pools and/or
//! terminals, pools feed terminals. Stream qualities mix linearly in the
//! pools, which is what makes the problem bilinear. All data is validated
//! on construction and immutable afterwards.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::InstanceError;

/// Feed stream: cost, availability window, nominal concentration and
/// maximum deviation per quality component, optional planar location.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub id: String,
    pub cost: f64,
    pub lower_avail: f64,
    pub upper_avail: f64,
    /// Nominal concentration per component index.
    pub quality: Vec<f64>,
    /// Maximum concentration deviation per component index.
    pub deviation: Vec<f64>,
    pub location: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolSpec {
    pub id: String,
    pub capacity: f64,
}

/// Product terminal: price, demand window, quality window per component.
/// A missing upper quality bound is stored as `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSpec {
    pub id: String,
    pub price: f64,
    pub min_demand: f64,
    pub max_demand: f64,
    pub quality_lower: Vec<f64>,
    pub quality_upper: Vec<f64>,
}

/// Validated pooling instance. Arc lists define the index spaces used by
/// [`crate::solution::Solution`]: `q` values align with `source_pool_arcs`,
/// `y` with `pool_terminal_arcs`, `z` with `source_terminal_arcs`.
#[derive(Debug, Clone)]
pub struct PoolingInstance {
    name: String,
    notes: Option<String>,
    components: Vec<String>,
    sources: Vec<SourceSpec>,
    pools: Vec<PoolSpec>,
    terminals: Vec<TerminalSpec>,
    source_pool_arcs: Vec<(usize, usize)>,
    pool_terminal_arcs: Vec<(usize, usize)>,
    source_terminal_arcs: Vec<(usize, usize)>,
    // adjacency caches, arc indices grouped by endpoint
    pool_inlets: Vec<Vec<usize>>,
    pool_outlets: Vec<Vec<usize>>,
    terminal_pool_arcs: Vec<Vec<usize>>,
    terminal_direct_arcs: Vec<Vec<usize>>,
    sp_index: HashMap<(usize, usize), usize>,
    st_index: HashMap<(usize, usize), usize>,
}

impl PoolingInstance {
    /// Builds and validates an instance from its parts.
    pub fn new(
        name: String,
        notes: Option<String>,
        components: Vec<String>,
        sources: Vec<SourceSpec>,
        pools: Vec<PoolSpec>,
        terminals: Vec<TerminalSpec>,
        source_pool_arcs: Vec<(usize, usize)>,
        pool_terminal_arcs: Vec<(usize, usize)>,
        source_terminal_arcs: Vec<(usize, usize)>,
    ) -> Result<Self, InstanceError> {
        let n_comp = components.len();
        let invalid = |msg: String| Err(InstanceError::Validation(msg));

        for s in &sources {
            if s.cost < 0.0 {
                return invalid(format!("source {}: negative cost", s.id));
            }
            if s.lower_avail < 0.0 || s.lower_avail > s.upper_avail {
                return invalid(format!(
                    "source {}: availability bounds must satisfy 0 <= lower <= upper",
                    s.id
                ));
            }
            if s.quality.len() != n_comp || s.deviation.len() != n_comp {
                return invalid(format!(
                    "source {}: quality/deviation must cover all {} components",
                    s.id, n_comp
                ));
            }
            if s.quality.iter().any(|c| *c < 0.0) || s.deviation.iter().any(|c| *c < 0.0) {
                return invalid(format!(
                    "source {}: concentrations and deviations must be nonnegative",
                    s.id
                ));
            }
        }
        for p in &pools {
            if p.capacity < 0.0 {
                return invalid(format!("pool {}: negative capacity", p.id));
            }
        }
        for t in &terminals {
            if t.price < 0.0 {
                return invalid(format!("terminal {}: negative price", t.id));
            }
            if t.min_demand < 0.0 || t.min_demand > t.max_demand {
                return invalid(format!(
                    "terminal {}: demand bounds must satisfy 0 <= lower <= upper",
                    t.id
                ));
            }
            if t.quality_lower.len() != n_comp || t.quality_upper.len() != n_comp {
                return invalid(format!(
                    "terminal {}: quality bounds must cover all {} components",
                    t.id, n_comp
                ));
            }
            for k in 0..n_comp {
                if t.quality_lower[k] < 0.0 || t.quality_lower[k] > t.quality_upper[k] {
                    return invalid(format!(
                        "terminal {}, component {}: quality bounds must satisfy 0 <= lower <= upper",
                        t.id, components[k]
                    ));
                }
            }
        }

        let check_ids = |what: &str, ids: Vec<&String>| -> Result<(), InstanceError> {
            let mut seen = HashMap::new();
            for id in ids {
                if seen.insert(id.clone(), ()).is_some() {
                    return Err(InstanceError::Validation(format!(
                        "duplicate {what} id {id}"
                    )));
                }
            }
            Ok(())
        };
        check_ids("source", sources.iter().map(|s| &s.id).collect())?;
        check_ids("pool", pools.iter().map(|p| &p.id).collect())?;
        check_ids("terminal", terminals.iter().map(|t| &t.id).collect())?;

        let check_arcs = |what: &str, arcs: &[(usize, usize)], n_a: usize, n_b: usize| {
            let mut seen = HashMap::new();
            for &(a, b) in arcs {
                if a >= n_a || b >= n_b {
                    return Err(InstanceError::Validation(format!(
                        "{what} arc ({a}, {b}) references a missing node"
                    )));
                }
                if seen.insert((a, b), ()).is_some() {
                    return Err(InstanceError::Validation(format!(
                        "duplicate {what} arc ({a}, {b})"
                    )));
                }
            }
            Ok(())
        };
        check_arcs("source-pool", &source_pool_arcs, sources.len(), pools.len())?;
        check_arcs(
            "pool-terminal",
            &pool_terminal_arcs,
            pools.len(),
            terminals.len(),
        )?;
        check_arcs(
            "source-terminal",
            &source_terminal_arcs,
            sources.len(),
            terminals.len(),
        )?;

        let mut pool_inlets = vec![Vec::new(); pools.len()];
        let mut pool_outlets = vec![Vec::new(); pools.len()];
        let mut terminal_pool_arcs = vec![Vec::new(); terminals.len()];
        let mut terminal_direct_arcs = vec![Vec::new(); terminals.len()];
        let mut sp_index = HashMap::new();
        let mut st_index = HashMap::new();
        for (a, &(i, l)) in source_pool_arcs.iter().enumerate() {
            pool_inlets[l].push(a);
            sp_index.insert((i, l), a);
        }
        for (a, &(l, j)) in pool_terminal_arcs.iter().enumerate() {
            pool_outlets[l].push(a);
            terminal_pool_arcs[j].push(a);
        }
        for (a, &(i, j)) in source_terminal_arcs.iter().enumerate() {
            terminal_direct_arcs[j].push(a);
            st_index.insert((i, j), a);
        }
        for (l, p) in pools.iter().enumerate() {
            if pool_inlets[l].is_empty() {
                return invalid(format!("pool {} has no inbound source arc", p.id));
            }
            if pool_outlets[l].is_empty() {
                return invalid(format!("pool {} has no outbound terminal arc", p.id));
            }
        }

        Ok(Self {
            name,
            notes,
            components,
            sources,
            pools,
            terminals,
            source_pool_arcs,
            pool_terminal_arcs,
            source_terminal_arcs,
            pool_inlets,
            pool_outlets,
            terminal_pool_arcs,
            terminal_direct_arcs,
            sp_index,
            st_index,
        })
    }

    /// Parses an instance from its JSON document format.
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let raw: RawInstance = serde_json::from_str(text)?;
        raw.build()
    }

    /// Serializes the instance back to its JSON document format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RawInstance::from(self)).expect("instance serialization")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn notes(&self) -> Option<&str> {
        self.notes.as_deref()
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn sources(&self) -> &[SourceSpec] {
        &self.sources
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn pools(&self) -> &[PoolSpec] {
        &self.pools
    }

    pub fn terminals(&self) -> &[TerminalSpec] {
        &self.terminals
    }

    pub fn n_terminals(&self) -> usize {
        self.terminals.len()
    }

    /// T_X: (source, pool) arcs; `q` variables align with this list.
    pub fn source_pool_arcs(&self) -> &[(usize, usize)] {
        &self.source_pool_arcs
    }

    /// T_Y: (pool, terminal) arcs; `y` variables align with this list.
    pub fn pool_terminal_arcs(&self) -> &[(usize, usize)] {
        &self.pool_terminal_arcs
    }

    /// T_Z: (source, terminal) arcs; `z` variables align with this list.
    pub fn source_terminal_arcs(&self) -> &[(usize, usize)] {
        &self.source_terminal_arcs
    }

    /// Indices into `source_pool_arcs` whose pool is `l`.
    pub fn pool_inlets(&self, l: usize) -> &[usize] {
        &self.pool_inlets[l]
    }

    /// Indices into `pool_terminal_arcs` whose pool is `l`.
    pub fn pool_outlets(&self, l: usize) -> &[usize] {
        &self.pool_outlets[l]
    }

    /// Indices into `pool_terminal_arcs` whose terminal is `j`.
    pub fn terminal_pool_arcs(&self, j: usize) -> &[usize] {
        &self.terminal_pool_arcs[j]
    }

    /// Indices into `source_terminal_arcs` whose terminal is `j`.
    pub fn terminal_direct_arcs(&self, j: usize) -> &[usize] {
        &self.terminal_direct_arcs[j]
    }

    pub fn sp_arc_index(&self, source: usize, pool: usize) -> Option<usize> {
        self.sp_index.get(&(source, pool)).copied()
    }

    pub fn st_arc_index(&self, source: usize, terminal: usize) -> Option<usize> {
        self.st_index.get(&(source, terminal)).copied()
    }

    pub fn source_index(&self, id: &str) -> Option<usize> {
        self.sources.iter().position(|s| s.id == id)
    }

    pub fn pool_index(&self, id: &str) -> Option<usize> {
        self.pools.iter().position(|p| p.id == id)
    }

    pub fn terminal_index(&self, id: &str) -> Option<usize> {
        self.terminals.iter().position(|t| t.id == id)
    }

    pub fn component_index(&self, id: &str) -> Option<usize> {
        self.components.iter().position(|c| c == id)
    }

    /// Total flow that can ever reach terminals; used as the implied
    /// availability bound when a source leaves `upper_avail` open.
    pub fn total_max_demand(&self) -> f64 {
        self.terminals.iter().map(|t| t.max_demand).sum()
    }

    /// Nominal concentrations C as a dense sources-by-components matrix.
    pub fn nominal_concentrations(&self) -> Concentrations {
        let mut c = Concentrations::zeros(self.n_sources(), self.n_components());
        for (i, s) in self.sources.iter().enumerate() {
            for k in 0..self.n_components() {
                *c.get_mut(i, k) = s.quality[k];
            }
        }
        c
    }

    /// Source locations in arc-list order.
    pub fn locations(&self) -> Vec<[f64; 2]> {
        self.sources.iter().map(|s| s.location).collect()
    }
}

/// Dense sources-by-components value matrix (concentrations, deviations,
/// deviation multipliers).
#[derive(Debug, Clone, PartialEq)]
pub struct Concentrations {
    values: Vec<f64>,
    n_sources: usize,
    n_components: usize,
}

impl Concentrations {
    pub fn zeros(n_sources: usize, n_components: usize) -> Self {
        Self {
            values: vec![0.0; n_sources * n_components],
            n_sources,
            n_components,
        }
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn get(&self, source: usize, component: usize) -> f64 {
        self.values[source * self.n_components + component]
    }

    pub fn get_mut(&mut self, source: usize, component: usize) -> &mut f64 {
        &mut self.values[source * self.n_components + component]
    }

    /// Column over sources for a fixed component.
    pub fn component_column(&self, component: usize) -> Vec<f64> {
        (0..self.n_sources).map(|i| self.get(i, component)).collect()
    }

    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// JSON document format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
    components: Vec<String>,
    sources: Vec<RawSource>,
    pools: Vec<RawPool>,
    terminals: Vec<RawTerminal>,
    arcs: RawArcs,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    id: String,
    cost: f64,
    #[serde(default)]
    lower_avail: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper_avail: Option<f64>,
    quality: HashMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deviation: Option<HashMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location: Option<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPool {
    id: String,
    capacity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerminal {
    id: String,
    price: f64,
    #[serde(default)]
    min_demand: f64,
    max_demand: f64,
    #[serde(default)]
    quality_lower: HashMap<String, f64>,
    #[serde(default)]
    quality_upper: HashMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArcs {
    #[serde(default)]
    source_pool: Vec<(String, String)>,
    #[serde(default)]
    pool_terminal: Vec<(String, String)>,
    #[serde(default)]
    source_terminal: Vec<(String, String)>,
}

impl RawInstance {
    fn build(self) -> Result<PoolingInstance, InstanceError> {
        let components = self.components;
        let comp_index = |k: &str| components.iter().position(|c| c == k);
        let total_max_demand: f64 = self.terminals.iter().map(|t| t.max_demand).sum();

        let mut sources = Vec::with_capacity(self.sources.len());
        for s in self.sources {
            let mut quality = vec![f64::NAN; components.len()];
            for (k, v) in &s.quality {
                let idx = comp_index(k).ok_or_else(|| {
                    InstanceError::Validation(format!("source {}: unknown component {k}", s.id))
                })?;
                quality[idx] = *v;
            }
            if quality.iter().any(|v| v.is_nan()) {
                return Err(InstanceError::Validation(format!(
                    "source {}: quality must define every component",
                    s.id
                )));
            }
            // Deviation defaults to the nominal concentration itself.
            let deviation = match &s.deviation {
                None => quality.clone(),
                Some(map) => {
                    let mut dev = quality.clone();
                    for (k, v) in map {
                        let idx = comp_index(k).ok_or_else(|| {
                            InstanceError::Validation(format!(
                                "source {}: unknown component {k} in deviation",
                                s.id
                            ))
                        })?;
                        dev[idx] = *v;
                    }
                    dev
                }
            };
            sources.push(SourceSpec {
                id: s.id,
                cost: s.cost,
                lower_avail: s.lower_avail,
                // Implied bound keeps every variable finite downstream.
                upper_avail: s.upper_avail.unwrap_or(total_max_demand),
                quality,
                deviation,
                location: s.location.unwrap_or([0.0, 0.0]),
            });
        }

        let pools: Vec<PoolSpec> = self
            .pools
            .into_iter()
            .map(|p| PoolSpec {
                id: p.id,
                capacity: p.capacity,
            })
            .collect();

        let mut terminals = Vec::with_capacity(self.terminals.len());
        for t in self.terminals {
            let mut lower = vec![0.0; components.len()];
            let mut upper = vec![f64::INFINITY; components.len()];
            for (k, v) in &t.quality_lower {
                let idx = comp_index(k).ok_or_else(|| {
                    InstanceError::Validation(format!(
                        "terminal {}: unknown component {k} in quality_lower",
                        t.id
                    ))
                })?;
                lower[idx] = *v;
            }
            for (k, v) in &t.quality_upper {
                let idx = comp_index(k).ok_or_else(|| {
                    InstanceError::Validation(format!(
                        "terminal {}: unknown component {k} in quality_upper",
                        t.id
                    ))
                })?;
                upper[idx] = *v;
            }
            terminals.push(TerminalSpec {
                id: t.id,
                price: t.price,
                min_demand: t.min_demand,
                max_demand: t.max_demand,
                quality_lower: lower,
                quality_upper: upper,
            });
        }

        let source_index = |id: &str| {
            sources.iter().position(|s| s.id == id).ok_or_else(|| {
                InstanceError::Validation(format!("arc references unknown source {id}"))
            })
        };
        let pool_index = |id: &str| {
            pools.iter().position(|p| p.id == id).ok_or_else(|| {
                InstanceError::Validation(format!("arc references unknown pool {id}"))
            })
        };
        let terminal_index = |id: &str| {
            terminals.iter().position(|t| t.id == id).ok_or_else(|| {
                InstanceError::Validation(format!("arc references unknown terminal {id}"))
            })
        };

        let mut sp = Vec::new();
        for (s, p) in &self.arcs.source_pool {
            sp.push((source_index(s)?, pool_index(p)?));
        }
        let mut pt = Vec::new();
        for (p, t) in &self.arcs.pool_terminal {
            pt.push((pool_index(p)?, terminal_index(t)?));
        }
        let mut st = Vec::new();
        for (s, t) in &self.arcs.source_terminal {
            st.push((source_index(s)?, terminal_index(t)?));
        }

        PoolingInstance::new(
            self.name, self.notes, components, sources, pools, terminals, sp, pt, st,
        )
    }
}

impl From<&PoolingInstance> for RawInstance {
    fn from(inst: &PoolingInstance) -> Self {
        let comp = |k: usize| inst.components[k].clone();
        RawInstance {
            name: inst.name.clone(),
            notes: inst.notes.clone(),
            components: inst.components.clone(),
            sources: inst
                .sources
                .iter()
                .map(|s| RawSource {
                    id: s.id.clone(),
                    cost: s.cost,
                    lower_avail: s.lower_avail,
                    upper_avail: Some(s.upper_avail),
                    quality: s
                        .quality
                        .iter()
                        .enumerate()
                        .map(|(k, v)| (comp(k), *v))
                        .collect(),
                    deviation: Some(
                        s.deviation
                            .iter()
                            .enumerate()
                            .map(|(k, v)| (comp(k), *v))
                            .collect(),
                    ),
                    location: Some(s.location),
                })
                .collect(),
            pools: inst
                .pools
                .iter()
                .map(|p| RawPool {
                    id: p.id.clone(),
                    capacity: p.capacity,
                })
                .collect(),
            terminals: inst
                .terminals
                .iter()
                .map(|t| RawTerminal {
                    id: t.id.clone(),
                    price: t.price,
                    min_demand: t.min_demand,
                    max_demand: t.max_demand,
                    quality_lower: t
                        .quality_lower
                        .iter()
                        .enumerate()
                        .map(|(k, v)| (comp(k), *v))
                        .collect(),
                    quality_upper: t
                        .quality_upper
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| v.is_finite())
                        .map(|(k, v)| (comp(k), *v))
                        .collect(),
                })
                .collect(),
            arcs: RawArcs {
                source_pool: inst
                    .source_pool_arcs
                    .iter()
                    .map(|&(i, l)| (inst.sources[i].id.clone(), inst.pools[l].id.clone()))
                    .collect(),
                pool_terminal: inst
                    .pool_terminal_arcs
                    .iter()
                    .map(|&(l, j)| (inst.pools[l].id.clone(), inst.terminals[j].id.clone()))
                    .collect(),
                source_terminal: inst
                    .source_terminal_arcs
                    .iter()
                    .map(|&(i, j)| (inst.sources[i].id.clone(), inst.terminals[j].id.clone()))
                    .collect(),
            },
        }
    }
}
