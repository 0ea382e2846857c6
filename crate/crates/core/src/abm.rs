//! Cumulative-innovation agent model on a fixed network.
//!
//! Every agent starts with the same six items, three on trajectory A and
//! three on trajectory B. Each time step every agent acts once as the focal
//! agent, in a fresh random order: it picks a random neighbor, the two pool
//! three items (the focal agent contributes one or two, chosen by coin
//! flip), and the pooled triad is checked against the recipe table. A valid
//! triad yields a product that both agents and all of their neighbors
//! receive. Items are drawn from an inventory with probability proportional
//! to their score, without replacement, so high-scoring innovations crowd
//! out the rest of the inventory. The run ends when the crossover item,
//! which needs the top items of both trajectories, is first produced.
//!
//! Inventories are bit sets over the item indices of a [`RecipeTable`], so a
//! table may hold at most 64 items.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Index of an item within its [`RecipeTable`].
pub type ItemId = usize;

const MAX_ITEMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trajectory {
    A,
    B,
    Crossover,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub trajectory: Trajectory,
    pub tier: u32,
    pub score: u32,
}

/// Set of items held by one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Inventory(u64);

impl Inventory {
    pub fn from_items(items: impl IntoIterator<Item = ItemId>) -> Self {
        let mut inv = Inventory(0);
        for id in items {
            inv.insert(id);
        }
        inv
    }

    #[inline]
    pub fn contains(self, id: ItemId) -> bool {
        self.0 >> id & 1 == 1
    }

    /// Returns true when the item was not already present.
    #[inline]
    pub fn insert(&mut self, id: ItemId) -> bool {
        let fresh = !self.contains(id);
        self.0 |= 1 << id;
        fresh
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_superset(self, other: Inventory) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn iter(self) -> impl Iterator<Item = ItemId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let id = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(id)
            }
        })
    }
}

/// Items, triad recipes and the crossover rule.
///
/// A recipe maps an unordered set of three distinct items to a product. The
/// crossover rule accepts any triad of distinct items that contains every
/// item in `crossover_inputs`.
#[derive(Debug, Clone)]
pub struct RecipeTable {
    items: Vec<Item>,
    by_name: HashMap<String, ItemId>,
    recipes: HashMap<u64, ItemId>,
    crossover_inputs: Inventory,
    crossover_product: ItemId,
    initial: Inventory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecipeTableFile {
    items: Vec<Item>,
    recipes: Vec<RecipeSpec>,
    crossover: CrossoverSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecipeSpec {
    inputs: Vec<String>,
    product: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CrossoverSpec {
    contains: Vec<String>,
    product: String,
    score: u32,
}

impl RecipeTable {
    /// Two parallel ladders plus a crossover. On each trajectory, tier `k`
    /// combines the two most recent items below it with the previous
    /// innovation: `{x1,x2,x3} -> x4`, `{x2,x3,x4} -> x5`, `{x3,x4,x5} -> x6`.
    /// Any triad holding both `a6` and `b6` yields the crossover item.
    pub fn default_table() -> Self {
        const INITIAL_SCORES: [u32; 3] = [6, 8, 10];
        const TIER_SCORES: [u32; 3] = [48, 109, 188];
        let mut items = Vec::new();
        let mut recipes = Vec::new();
        for (prefix, trajectory) in [("a", Trajectory::A), ("b", Trajectory::B)] {
            for (k, score) in INITIAL_SCORES.iter().chain(&TIER_SCORES).enumerate() {
                items.push(Item {
                    id: format!("{prefix}{}", k + 1),
                    trajectory,
                    tier: k.saturating_sub(2) as u32,
                    score: *score,
                });
            }
            for k in 4..=6 {
                recipes.push(RecipeSpec {
                    inputs: (k - 3..k).map(|j| format!("{prefix}{j}")).collect(),
                    product: format!("{prefix}{k}"),
                });
            }
        }
        let file = RecipeTableFile {
            items,
            recipes,
            crossover: CrossoverSpec {
                contains: vec!["a6".into(), "b6".into()],
                product: "xfinal".into(),
                score: 358,
            },
        };
        Self::from_file(file).expect("default recipe table is well formed")
    }

    /// Table with the default items and crossover rule but no recipes.
    pub fn without_recipes() -> Self {
        let mut file = Self::default_table().to_file();
        file.recipes.clear();
        Self::from_file(file).expect("empty recipe table is well formed")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RecipeTableFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidRecipeTable(format!("malformed JSON: {e}")))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("table serializes")
    }

    fn to_file(&self) -> RecipeTableFile {
        let name = |id: ItemId| self.items[id].id.clone();
        let mut recipes: Vec<RecipeSpec> = self
            .recipes
            .iter()
            .map(|(&mask, &product)| RecipeSpec {
                inputs: Inventory(mask).iter().map(name).collect(),
                product: name(product),
            })
            .collect();
        recipes.sort_by_key(|r| self.by_name[&r.product]);
        let product = &self.items[self.crossover_product];
        RecipeTableFile {
            items: self
                .items
                .iter()
                .enumerate()
                .filter(|&(id, _)| id != self.crossover_product)
                .map(|(_, item)| item.clone())
                .collect(),
            recipes,
            crossover: CrossoverSpec {
                contains: self.crossover_inputs.iter().map(name).collect(),
                product: product.id.clone(),
                score: product.score,
            },
        }
    }

    fn from_file(file: RecipeTableFile) -> Result<Self> {
        let bad = |msg: String| Error::InvalidRecipeTable(msg);
        let mut items = file.items;
        let max_tier = items.iter().map(|i| i.tier).max().unwrap_or(0);
        match items.iter().find(|i| i.id == file.crossover.product) {
            Some(listed) if listed.score != file.crossover.score => {
                return Err(bad(format!(
                    "crossover product {} listed with score {} but rule says {}",
                    listed.id, listed.score, file.crossover.score
                )));
            }
            Some(_) => {}
            None => items.push(Item {
                id: file.crossover.product.clone(),
                trajectory: Trajectory::Crossover,
                tier: max_tier + 1,
                score: file.crossover.score,
            }),
        }
        if items.len() > MAX_ITEMS {
            return Err(bad(format!("{} items; at most {MAX_ITEMS} supported", items.len())));
        }
        let mut by_name = HashMap::new();
        for (id, item) in items.iter().enumerate() {
            if item.score == 0 {
                return Err(bad(format!("item {} has zero score", item.id)));
            }
            if by_name.insert(item.id.clone(), id).is_some() {
                return Err(bad(format!("duplicate item id {}", item.id)));
            }
        }
        let lookup = |name: &str| {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| bad(format!("unknown item {name}")))
        };
        let initial = Inventory::from_items(
            items
                .iter()
                .enumerate()
                .filter(|(_, i)| i.tier == 0)
                .map(|(id, _)| id),
        );
        if initial.is_empty() {
            return Err(bad("no tier-0 items".into()));
        }

        let crossover_product = lookup(&file.crossover.product)?;
        let crossover_inputs = Inventory::from_items(
            file.crossover
                .contains
                .iter()
                .map(|n| lookup(n))
                .collect::<Result<Vec<_>>>()?,
        );
        if crossover_inputs.is_empty() || crossover_inputs.len() > 3 {
            return Err(bad("crossover rule needs one to three distinct inputs".into()));
        }
        if crossover_inputs.contains(crossover_product) {
            return Err(bad("crossover product cannot be its own input".into()));
        }

        let mut recipes = HashMap::new();
        let mut produced = HashSet::new();
        for recipe in &file.recipes {
            let ids = recipe
                .inputs
                .iter()
                .map(|n| lookup(n))
                .collect::<Result<Vec<_>>>()?;
            let mask = Inventory::from_items(ids.iter().copied());
            if ids.len() != 3 || mask.len() != 3 {
                return Err(bad(format!(
                    "recipe {:?} needs exactly three distinct inputs",
                    recipe.inputs
                )));
            }
            let product = lookup(&recipe.product)?;
            if initial.contains(product) {
                return Err(bad(format!("recipe produces initial item {}", recipe.product)));
            }
            if product == crossover_product {
                return Err(bad("crossover product comes from the crossover rule only".into()));
            }
            if !produced.insert(product) {
                return Err(bad(format!("{} has more than one recipe", recipe.product)));
            }
            if mask.is_superset(crossover_inputs) {
                return Err(bad(format!(
                    "recipe {:?} overlaps the crossover rule",
                    recipe.inputs
                )));
            }
            if recipes.insert(mask.bits(), product).is_some() {
                return Err(bad(format!("inputs {:?} used twice", recipe.inputs)));
            }
        }

        Ok(RecipeTable {
            items,
            by_name,
            recipes,
            crossover_inputs,
            crossover_product,
            initial,
        })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, id: ItemId) -> &Item {
        &self.items[id]
    }

    pub fn id(&self, name: &str) -> Option<ItemId> {
        self.by_name.get(name).copied()
    }

    #[inline]
    pub fn score(&self, id: ItemId) -> u32 {
        self.items[id].score
    }

    pub fn initial_inventory(&self) -> Inventory {
        self.initial
    }

    pub fn crossover_product(&self) -> ItemId {
        self.crossover_product
    }

    pub fn recipe_count(&self) -> usize {
        self.recipes.len()
    }

    /// Product of a recipe, if `name` is produced by one.
    pub fn recipe_for(&self, name: &str) -> Option<Vec<ItemId>> {
        let id = self.id(name)?;
        self.recipes
            .iter()
            .find(|&(_, &p)| p == id)
            .map(|(&mask, _)| Inventory(mask).iter().collect())
    }

    /// Checks a pooled triad. Any repeated item makes it invalid.
    pub fn combine(&self, triad: [ItemId; 3]) -> Option<ItemId> {
        let mask = Inventory::from_items(triad);
        if mask.len() != 3 {
            return None;
        }
        if let Some(&product) = self.recipes.get(&mask.bits()) {
            return Some(product);
        }
        mask.is_superset(self.crossover_inputs)
            .then_some(self.crossover_product)
    }
}

impl Default for RecipeTable {
    fn default() -> Self {
        Self::default_table()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentState {
    pub inventory: Inventory,
    pub score: u32,
}

impl AgentState {
    fn receive(&mut self, item: ItemId, score: u32) -> bool {
        let fresh = self.inventory.insert(item);
        self.score = self.score.max(score);
        fresh
    }
}

/// Gives every agent the table's initial items. Each agent needs at least
/// one neighbor to pick partners from.
pub fn init_population(g: &Graph, table: &RecipeTable) -> Result<Vec<AgentState>> {
    if g.node_count() < 2 {
        return Err(Error::InvalidPopulation(format!(
            "{} agents; need at least 2",
            g.node_count()
        )));
    }
    if let Some(i) = (0..g.node_count()).find(|&i| g.neighbors_of(i).is_empty()) {
        return Err(Error::InvalidPopulation(format!("agent {i} has no neighbors")));
    }
    let inventory = table.initial_inventory();
    let score = inventory.iter().map(|id| table.score(id)).max().unwrap_or(0);
    Ok(vec![AgentState { inventory, score }; g.node_count()])
}

pub fn select_partner<R: Rng + ?Sized>(g: &Graph, focal: usize, rng: &mut R) -> Result<usize> {
    let neighbors = g.neighbors(focal)?;
    if neighbors.is_empty() {
        return Err(Error::NoNeighbors(focal));
    }
    Ok(neighbors[rng.random_range(0..neighbors.len())])
}

/// Score-weighted draw of `k` distinct items, one at a time; each draw picks
/// an item with probability `score / (sum of scores still in the pool)`.
pub fn select_items<R: Rng + ?Sized>(
    inventory: Inventory,
    k: usize,
    table: &RecipeTable,
    rng: &mut R,
) -> Result<Vec<ItemId>> {
    if inventory.len() < k {
        return Err(Error::InsufficientInventory {
            wanted: k,
            available: inventory.len(),
        });
    }
    let mut pool = inventory;
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let id = weighted_pick(pool, table, rng);
        pool.0 &= !(1 << id);
        picked.push(id);
    }
    Ok(picked)
}

#[inline]
fn weighted_pick<R: Rng + ?Sized>(pool: Inventory, table: &RecipeTable, rng: &mut R) -> ItemId {
    let total: u32 = pool.iter().map(|id| table.score(id)).sum();
    let mut ticket = rng.random_range(0..total);
    for id in pool.iter() {
        let s = table.score(id);
        if ticket < s {
            return id;
        }
        ticket -= s;
    }
    unreachable!("ticket below total score")
}

/// Three items pooled by a dyad: the focal agent contributes `focal_count`
/// of them, the partner the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triad {
    pub focal_count: usize,
    pub items: [ItemId; 3],
}

/// Coin-flips the focal share (1 or 2), then draws each side's items from
/// its own inventory.
pub fn draw_triad<R: Rng + ?Sized>(
    focal: Inventory,
    partner: Inventory,
    table: &RecipeTable,
    rng: &mut R,
) -> Result<Triad> {
    let focal_count = rng.random_range(1..=2usize);
    let partner_count = 3 - focal_count;
    for (inv, k) in [(focal, focal_count), (partner, partner_count)] {
        if inv.len() < k {
            return Err(Error::InsufficientInventory {
                wanted: k,
                available: inv.len(),
            });
        }
    }
    let mut items = [0; 3];
    let mut pool = focal;
    for (slot, item) in items.iter_mut().enumerate() {
        if slot == focal_count {
            pool = partner;
        }
        *item = weighted_pick(pool, table, rng);
        pool.0 &= !(1 << *item);
    }
    Ok(Triad { focal_count, items })
}

/// Gives `item` to both dyad members, then to every neighbor of either.
/// Returns how many agents did not have it before.
pub fn diffuse(
    item: ItemId,
    dyad: (usize, usize),
    g: &Graph,
    table: &RecipeTable,
    states: &mut [AgentState],
) -> usize {
    let score = table.score(item);
    let mut received = 0;
    for agent in [dyad.0, dyad.1] {
        received += usize::from(states[agent].receive(item, score));
    }
    for agent in [dyad.0, dyad.1] {
        for &j in g.neighbors_of(agent) {
            received += usize::from(states[j].receive(item, score));
        }
    }
    received
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepEvents {
    pub attempts: usize,
    pub innovations: usize,
    /// Set when the crossover item was produced; the step stops there.
    pub crossover: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// `None` runs until the crossover event.
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub record_trajectory: bool,
}

impl SimConfig {
    pub const DEFAULT_MAX_STEPS: u64 = 1000;

    pub fn with_seed(seed: u64) -> Self {
        SimConfig {
            seed,
            ..Default::default()
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            max_steps: Some(Self::DEFAULT_MAX_STEPS),
            seed: 0,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// 1-based step at which the crossover item first appeared.
    pub discovery_time: Option<u64>,
    pub censored: bool,
    pub steps_run: u64,
    pub final_scores: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_score: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_score: Option<Vec<u32>>,
}

/// One running instance of the model. Owns its agents and random source.
pub struct Simulation<'a, R = ChaCha8Rng> {
    graph: &'a Graph,
    table: &'a RecipeTable,
    states: Vec<AgentState>,
    order: Vec<usize>,
    rng: R,
    steps: u64,
}

impl<'a> Simulation<'a, ChaCha8Rng> {
    pub fn seeded(graph: &'a Graph, table: &'a RecipeTable, seed: u64) -> Result<Self> {
        Self::with_rng(graph, table, ChaCha8Rng::seed_from_u64(seed))
    }
}

impl<'a, R: Rng> Simulation<'a, R> {
    pub fn with_rng(graph: &'a Graph, table: &'a RecipeTable, rng: R) -> Result<Self> {
        let states = init_population(graph, table)?;
        Ok(Simulation {
            graph,
            table,
            states,
            order: (0..graph.node_count()).collect(),
            rng,
            steps: 0,
        })
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Every agent acts as focal once, in a fresh random order; each
    /// interaction takes effect before the next one starts.
    pub fn step(&mut self) -> StepEvents {
        self.steps += 1;
        self.order.shuffle(&mut self.rng);
        let mut events = StepEvents::default();
        let crossover = self.table.crossover_product();
        for idx in 0..self.order.len() {
            let focal = self.order[idx];
            let neighbors = self.graph.neighbors_of(focal);
            let partner = neighbors[self.rng.random_range(0..neighbors.len())];
            let triad = draw_triad(
                self.states[focal].inventory,
                self.states[partner].inventory,
                self.table,
                &mut self.rng,
            )
            .expect("inventories hold at least the initial items");
            events.attempts += 1;
            if let Some(product) = self.table.combine(triad.items) {
                events.innovations += 1;
                diffuse(product, (focal, partner), self.graph, self.table, &mut self.states);
                if product == crossover {
                    events.crossover = true;
                    return events;
                }
            }
        }
        events
    }

    /// Steps until the crossover event or `max_steps`.
    pub fn run(mut self, max_steps: Option<u64>, record_trajectory: bool) -> SimResult {
        let mut mean_series = Vec::new();
        let mut max_series = Vec::new();
        let mut discovery_time = None;
        while max_steps.is_none_or(|cap| self.steps < cap) {
            let events = self.step();
            if record_trajectory {
                let total: u64 = self.states.iter().map(|s| u64::from(s.score)).sum();
                mean_series.push(total as f64 / self.states.len() as f64);
                max_series.push(self.states.iter().map(|s| s.score).max().unwrap_or(0));
            }
            if events.crossover {
                discovery_time = Some(self.steps);
                break;
            }
        }
        SimResult {
            discovery_time,
            censored: discovery_time.is_none(),
            steps_run: self.steps,
            final_scores: self.states.iter().map(|s| s.score).collect(),
            mean_score: record_trajectory.then_some(mean_series),
            max_score: record_trajectory.then_some(max_series),
        }
    }
}

/// Runs one seeded simulation to the crossover event or the step cap.
pub fn run_simulation(g: &Graph, cfg: &SimConfig, table: &RecipeTable) -> Result<SimResult> {
    if cfg.max_steps == Some(0) {
        return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
    }
    let sim = Simulation::seeded(g, table, cfg.seed)?;
    Ok(sim.run(cfg.max_steps, cfg.record_trajectory))
}

impl fmt::Display for Inventory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}
