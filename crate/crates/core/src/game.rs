//! Finite two-stage stochastic games and welfare-optimal decision rules.
//!
//! A game couples a finite type space with two rounds of planner decisions:
//! a first-stage outcome committed knowing only the players' supertype bids,
//! and a per-day recourse action chosen after type bids arrive. All
//! expectations here are exact enumerations over the product type grid; the
//! module refuses grids larger than [`MAX_ENUM_CELLS`].

use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the number of type profiles enumerated exactly.
pub const MAX_ENUM_CELLS: u64 = 1_000_000;

/// Tolerance for probability masses summing to one.
pub const MASS_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Type space and supertypes
// ---------------------------------------------------------------------------

/// Ordered finite set of type labels. The declared order is load-bearing: it
/// fixes tie-breaking in every argmax and the meaning of type indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSpace {
    labels: Vec<String>,
}

impl TypeSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("type space must be nonempty".into()));
        }
        for (k, l) in labels.iter().enumerate() {
            if labels[..k].contains(l) {
                return Err(Error::InvalidInput(format!("duplicate type label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// Labels formatted from a list of real-valued grid points.
    pub fn from_reals(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|v| format!("{v}")).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Probability mass function over a type space; a player's true supertype or
/// its first-stage bid. Indexed positionally against the owning [`TypeSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Supertype {
    mass: Vec<f64>,
}

impl Supertype {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidInput("supertype must have support".into()));
        }
        if mass.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidInput(
                "supertype masses must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "supertype masses sum to {total}, expected 1"
            )));
        }
        Ok(Self { mass })
    }

    pub fn uniform(n_types: usize) -> Self {
        Self {
            mass: vec![1.0 / n_types as f64; n_types],
        }
    }

    pub fn point_mass(n_types: usize, at: usize) -> Self {
        let mut mass = vec![0.0; n_types];
        mass[at] = 1.0;
        Self { mass }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn prob(&self, t: usize) -> f64 {
        self.mass[t]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Mean of the pmf against real-valued grid points.
    pub fn mean_on(&self, grid: &[f64]) -> f64 {
        self.mass.iter().zip(grid).map(|(p, x)| p * x).sum()
    }

    /// Type indices carrying positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(t, _)| t)
    }

    /// Inverse-CDF draw from a uniform in `[0, 1)`. Using an explicit uniform
    /// keeps draws coupled across alternative supertypes (common random
    /// numbers): the same `u` maps to comparable quantiles everywhere.
    pub fn quantile(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (t, &p) in self.mass.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = t;
                if u < acc {
                    return t;
                }
            }
        }
        last
    }
}

impl TryFrom<Vec<f64>> for Supertype {
    type Error = Error;
    fn try_from(mass: Vec<f64>) -> Result<Self> {
        Self::new(mass)
    }
}

impl From<Supertype> for Vec<f64> {
    fn from(s: Supertype) -> Vec<f64> {
        s.mass
    }
}

/// A scalar estimate with its standard error. Exact enumerations carry a
/// standard error of zero; Monte Carlo fallbacks report their sampling error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_err: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// The game abstraction shared by the payment rule and the engine
// ---------------------------------------------------------------------------

/// A two-stage stochastic game the planner can optimize over.
///
/// The table-driven [`GameSpec`] and the demand-response market implement
/// this; payments and the simulation engine are generic over it. `Shock` is
/// exogenous per-day state (nothing for finite games; the reserve cost draw
/// and demand for the DR market) drawn from the engine's seeded stream.
pub trait Game: Send + Sync {
    type O1: Clone + PartialEq + fmt::Debug + Send + Sync;
    type O2: Clone + PartialEq + fmt::Debug + Send + Sync;
    type Shock: Clone + fmt::Debug + Send + Sync;

    fn num_players(&self) -> usize;

    fn types(&self) -> &TypeSpace;

    /// Welfare-optimal first-stage outcome for the given supertype bids.
    fn optimal_first_stage(&self, bids: &[Supertype]) -> Result<Self::O1>;

    /// Exogenous state realized at the start of day `day`.
    fn draw_shock(&self, day: u64, rng: &mut ChaCha8Rng) -> Self::Shock;

    /// Welfare-optimal recourse action given the day's type bids.
    fn optimal_second_stage(&self, o1: &Self::O1, day_bids: &[usize], shock: &Self::Shock)
        -> Self::O2;

    /// Valuation of `player` when its realized type is `own_type` and the
    /// planner chose `(o1, o2)`.
    fn valuation(&self, player: usize, own_type: usize, o1: &Self::O1, o2: &Self::O2) -> f64;

    /// Planner cost of the chosen outcomes.
    fn cost(&self, o1: &Self::O1, o2: &Self::O2) -> f64;

    /// `E[v_i(δ_i, g1*, g2*(δ))]` with `δ` drawn from the bid product law and
    /// the optimal rules evaluated at those bids.
    fn expected_valuation(&self, bids: &[Supertype], player: usize) -> Result<Estimate>;

    /// `E[Σ_{j≠i} v_j(δ_j, g1*, g2*(δ)) − c(g1*, g2*(δ))]` under the same law
    /// and rules as [`Game::expected_valuation`].
    fn expected_others_welfare(&self, bids: &[Supertype], player: usize) -> Result<Estimate>;

    /// Optimal expected welfare of the restricted game containing only the
    /// players with `included[i] == true` (their valuations kept, everyone
    /// else's dropped, planner cost retained).
    fn optimal_welfare(&self, bids: &[Supertype], included: &[bool]) -> Result<Estimate>;

    /// Stable numeric code for a recourse action; strategies may condition on
    /// the code history but never on other players' raw bids.
    fn o2_code(&self, o2: &Self::O2) -> u64;

    /// Human-readable outcome renderings for ledgers.
    fn o1_display(&self, o1: &Self::O1) -> String;
    fn o2_display(&self, o2: &Self::O2) -> String;

    /// Digest of the game definition, folded into ledger config hashes.
    fn digest(&self) -> u64;
}

/// Walks the product of the supports of `supertypes` in lexicographic order,
/// calling `f` with each profile and its probability. Refuses products larger
/// than [`MAX_ENUM_CELLS`].
pub(crate) fn for_each_support_profile<F>(supertypes: &[Supertype], mut f: F) -> Result<()>
where
    F: FnMut(&[usize], f64),
{
    let supports: Vec<Vec<usize>> = supertypes.iter().map(|s| s.support().collect()).collect();
    let mut cells: u128 = 1;
    for s in &supports {
        if s.is_empty() {
            return Err(Error::InvalidInput("supertype with empty support".into()));
        }
        cells = cells.saturating_mul(s.len() as u128);
    }
    if cells > MAX_ENUM_CELLS as u128 {
        return Err(Error::GridTooLarge {
            cells,
            limit: MAX_ENUM_CELLS,
        });
    }
    let n = supports.len();
    let mut cursor = vec![0usize; n];
    let mut profile = vec![0usize; n];
    loop {
        let mut prob = 1.0;
        for j in 0..n {
            profile[j] = supports[j][cursor[j]];
            prob *= supertypes[j].prob(profile[j]);
        }
        f(&profile, prob);
        // odometer increment, last player fastest
        let mut j = n;
        loop {
            if j == 0 {
                return Ok(());
            }
            j -= 1;
            cursor[j] += 1;
            if cursor[j] < supports[j].len() {
                break;
            }
            cursor[j] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// Table-driven finite game
// ---------------------------------------------------------------------------

/// A finite two-stage stochastic game given by explicit valuation and cost
/// tables. Outcomes are referenced by their index into the declared orderings.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    n: usize,
    types: TypeSpace,
    o1_labels: Vec<String>,
    o2_labels: Vec<String>,
    /// Row-major `[player][type][o1][o2]`.
    valuation: Vec<f64>,
    /// Row-major `[o1][o2]`.
    cost: Vec<f64>,
}

impl GameSpec {
    pub fn new(
        n: usize,
        types: TypeSpace,
        o1_labels: Vec<String>,
        o2_labels: Vec<String>,
        valuation: impl Fn(usize, usize, usize, usize) -> f64,
        cost: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("player count must be at least 1".into()));
        }
        if o1_labels.is_empty() || o2_labels.is_empty() {
            return Err(Error::InvalidInput("outcome lists must be nonempty".into()));
        }
        let (nt, n1, n2) = (types.len(), o1_labels.len(), o2_labels.len());
        let mut val = Vec::with_capacity(n * nt * n1 * n2);
        for i in 0..n {
            for t in 0..nt {
                for a in 0..n1 {
                    for b in 0..n2 {
                        val.push(valuation(i, t, a, b));
                    }
                }
            }
        }
        let mut cst = Vec::with_capacity(n1 * n2);
        for a in 0..n1 {
            for b in 0..n2 {
                cst.push(cost(a, b));
            }
        }
        Ok(Self {
            n,
            types,
            o1_labels,
            o2_labels,
            valuation: val,
            cost: cst,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn type_space(&self) -> &TypeSpace {
        &self.types
    }

    pub fn o1_labels(&self) -> &[String] {
        &self.o1_labels
    }

    pub fn o2_labels(&self) -> &[String] {
        &self.o2_labels
    }

    #[inline]
    fn vindex(&self, i: usize, t: usize, a: usize, b: usize) -> usize {
        ((i * self.types.len() + t) * self.o1_labels.len() + a) * self.o2_labels.len() + b
    }

    pub fn valuation_at(&self, player: usize, t: usize, o1: usize, o2: usize) -> f64 {
        self.valuation[self.vindex(player, t, o1, o2)]
    }

    pub fn cost_at(&self, o1: usize, o2: usize) -> f64 {
        self.cost[o1 * self.o2_labels.len() + o2]
    }

    fn check_profile(&self, supertypes: &[Supertype]) -> Result<()> {
        if supertypes.len() != self.n {
            return Err(Error::ProfileMismatch {
                expected: self.n,
                got: supertypes.len(),
            });
        }
        for s in supertypes {
            if s.len() != self.types.len() {
                return Err(Error::InvalidInput(format!(
                    "supertype over {} types does not match the {}-type space",
                    s.len(),
                    self.types.len()
                )));
            }
        }
        Ok(())
    }

    /// Realized welfare `Σ_{i included} v_i − c` of a type profile under fixed
    /// outcomes.
    fn profile_welfare(&self, profile: &[usize], o1: usize, o2: usize, included: &[bool]) -> f64 {
        let mut w = 0.0;
        for (i, &t) in profile.iter().enumerate() {
            if included[i] {
                w += self.valuation_at(i, t, o1, o2);
            }
        }
        w - self.cost_at(o1, o2)
    }

    /// Argmax over recourse actions of realized welfare; ties break to the
    /// lowest index in the declared `o2` ordering.
    pub fn optimal_second_stage(&self, o1: usize, profile: &[usize]) -> usize {
        self.optimal_second_stage_restricted(o1, profile, &vec![true; self.n])
    }

    fn optimal_second_stage_restricted(
        &self,
        o1: usize,
        profile: &[usize],
        included: &[bool],
    ) -> usize {
        let mut best = 0;
        let mut best_w = self.profile_welfare(profile, o1, 0, included);
        for b in 1..self.o2_labels.len() {
            let w = self.profile_welfare(profile, o1, b, included);
            if w > best_w {
                best = b;
                best_w = w;
            }
        }
        best
    }

    /// Exact expected welfare of the restricted game under optimal play,
    /// conditioned on first-stage outcome `o1`.
    fn stage_value(&self, o1: usize, supertypes: &[Supertype], included: &[bool]) -> Result<f64> {
        let mut acc = 0.0;
        for_each_support_profile(supertypes, |profile, prob| {
            let o2 = self.optimal_second_stage_restricted(o1, profile, included);
            acc += prob * self.profile_welfare(profile, o1, o2, included);
        })?;
        Ok(acc)
    }

    /// Argmax over first-stage outcomes of the exact stage-2 value; ties break
    /// to the lowest index in the declared `o1` ordering.
    pub fn optimal_first_stage(&self, supertypes: &[Supertype]) -> Result<usize> {
        self.check_profile(supertypes)?;
        let included = vec![true; self.n];
        let mut best = 0;
        let mut best_w = self.stage_value(0, supertypes, &included)?;
        for a in 1..self.o1_labels.len() {
            let w = self.stage_value(a, supertypes, &included)?;
            if w > best_w {
                best = a;
                best_w = w;
            }
        }
        Ok(best)
    }

    /// Optimal expected welfare of the game restricted to `included` players.
    /// Excluded players keep their type randomness but contribute no value.
    pub fn optimal_welfare_restricted(
        &self,
        supertypes: &[Supertype],
        included: &[bool],
    ) -> Result<f64> {
        self.check_profile(supertypes)?;
        if included.len() != self.n {
            return Err(Error::ProfileMismatch {
                expected: self.n,
                got: included.len(),
            });
        }
        let mut best = self.stage_value(0, supertypes, included)?;
        for a in 1..self.o1_labels.len() {
            let w = self.stage_value(a, supertypes, included)?;
            if w > best {
                best = w;
            }
        }
        Ok(best)
    }

    /// Expected welfare of playing `rules` against truthful draws from
    /// `supertypes`; exact enumeration, no sampling.
    pub fn expected_welfare(
        &self,
        supertypes: &[Supertype],
        rules: &dyn DecisionRules,
    ) -> Result<f64> {
        self.check_profile(supertypes)?;
        let o1 = rules.first_stage(supertypes)?;
        if o1 >= self.o1_labels.len() {
            return Err(Error::InvalidInput(format!(
                "rule chose first-stage outcome {o1} outside the declared list"
            )));
        }
        let included = vec![true; self.n];
        let mut acc = 0.0;
        let mut rule_err = None;
        for_each_support_profile(supertypes, |profile, prob| {
            if rule_err.is_some() {
                return;
            }
            match rules.second_stage_at(o1, profile) {
                Ok(o2) if o2 < self.o2_labels.len() => {
                    acc += prob * self.profile_welfare(profile, o1, o2, &included);
                }
                Ok(o2) => {
                    rule_err = Some(Error::InvalidInput(format!(
                        "rule chose recourse action {o2} outside the declared list"
                    )));
                }
                Err(e) => rule_err = Some(e),
            }
        })?;
        match rule_err {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    }
}

/// Deterministic decision rules: a first-stage choice from supertype bids and
/// a per-profile recourse choice.
pub trait DecisionRules {
    fn first_stage(&self, bids: &[Supertype]) -> Result<usize>;

    /// Recourse action given a committed first-stage outcome.
    fn second_stage_at(&self, o1: usize, profile: &[usize]) -> Result<usize>;

    /// Recourse action from bids alone, routing through the first stage.
    fn second_stage(&self, bids: &[Supertype], profile: &[usize]) -> Result<usize> {
        let o1 = self.first_stage(bids)?;
        self.second_stage_at(o1, profile)
    }
}

/// The welfare-optimal rules of a spec.
pub struct OptimalRules<'a> {
    spec: &'a GameSpec,
}

impl<'a> OptimalRules<'a> {
    pub fn new(spec: &'a GameSpec) -> Self {
        Self { spec }
    }
}

impl DecisionRules for OptimalRules<'_> {
    fn first_stage(&self, bids: &[Supertype]) -> Result<usize> {
        self.spec.optimal_first_stage(bids)
    }

    fn second_stage_at(&self, o1: usize, profile: &[usize]) -> Result<usize> {
        Ok(self.spec.optimal_second_stage(o1, profile))
    }
}

/// Constant rules, mainly for probing welfare losses of fixed play.
pub struct ConstantRules {
    pub o1: usize,
    pub o2: usize,
}

impl DecisionRules for ConstantRules {
    fn first_stage(&self, _bids: &[Supertype]) -> Result<usize> {
        Ok(self.o1)
    }

    fn second_stage_at(&self, _o1: usize, _profile: &[usize]) -> Result<usize> {
        Ok(self.o2)
    }
}

impl Game for GameSpec {
    type O1 = usize;
    type O2 = usize;
    type Shock = ();

    fn num_players(&self) -> usize {
        self.n
    }

    fn types(&self) -> &TypeSpace {
        &self.types
    }

    fn optimal_first_stage(&self, bids: &[Supertype]) -> Result<usize> {
        GameSpec::optimal_first_stage(self, bids)
    }

    fn draw_shock(&self, _day: u64, _rng: &mut ChaCha8Rng) {}

    fn optimal_second_stage(&self, o1: &usize, day_bids: &[usize], _shock: &()) -> usize {
        GameSpec::optimal_second_stage(self, *o1, day_bids)
    }

    fn valuation(&self, player: usize, own_type: usize, o1: &usize, o2: &usize) -> f64 {
        self.valuation_at(player, own_type, *o1, *o2)
    }

    fn cost(&self, o1: &usize, o2: &usize) -> f64 {
        self.cost_at(*o1, *o2)
    }

    fn expected_valuation(&self, bids: &[Supertype], player: usize) -> Result<Estimate> {
        self.check_profile(bids)?;
        let o1 = GameSpec::optimal_first_stage(self, bids)?;
        let mut acc = 0.0;
        for_each_support_profile(bids, |profile, prob| {
            let o2 = self.optimal_second_stage(o1, profile);
            acc += prob * self.valuation_at(player, profile[player], o1, o2);
        })?;
        Ok(Estimate::exact(acc))
    }

    fn expected_others_welfare(&self, bids: &[Supertype], player: usize) -> Result<Estimate> {
        self.check_profile(bids)?;
        let o1 = GameSpec::optimal_first_stage(self, bids)?;
        let mut included = vec![true; self.n];
        included[player] = false;
        let mut acc = 0.0;
        for_each_support_profile(bids, |profile, prob| {
            // Rules stay optimal for the full game; only the accounting drops
            // player i's valuation.
            let o2 = self.optimal_second_stage(o1, profile);
            acc += prob * self.profile_welfare(profile, o1, o2, &included);
        })?;
        Ok(Estimate::exact(acc))
    }

    fn optimal_welfare(&self, bids: &[Supertype], included: &[bool]) -> Result<Estimate> {
        self.optimal_welfare_restricted(bids, included)
            .map(Estimate::exact)
    }

    fn o2_code(&self, o2: &usize) -> u64 {
        *o2 as u64
    }

    fn o1_display(&self, o1: &usize) -> String {
        self.o1_labels[*o1].clone()
    }

    fn o2_display(&self, o2: &usize) -> String {
        self.o2_labels[*o2].clone()
    }

    fn digest(&self) -> u64 {
        let mut h = crate::fnv1a_init();
        crate::fnv1a_write(&mut h, &(self.n as u64).to_le_bytes());
        for l in self.types.labels() {
            crate::fnv1a_write(&mut h, l.as_bytes());
        }
        for l in self.o1_labels.iter().chain(&self.o2_labels) {
            crate::fnv1a_write(&mut h, l.as_bytes());
        }
        for v in self.valuation.iter().chain(&self.cost) {
            crate::fnv1a_write(&mut h, &v.to_bits().to_le_bytes());
        }
        h
    }
}

/// All-players inclusion mask.
pub fn all_players(n: usize) -> Vec<bool> {
    vec![true; n]
}

/// Inclusion mask dropping one player.
pub fn excluding(n: usize, player: usize) -> Vec<bool> {
    let mut mask = vec![true; n];
    mask[player] = false;
    mask
}

// ---------------------------------------------------------------------------
// JSON instance documents
// ---------------------------------------------------------------------------

/// A game together with the players' true supertypes, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    pub spec: GameSpec,
    pub supertypes: Vec<Supertype>,
}

/// A type or outcome label that may be written as a JSON string or number.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LabelJson {
    Text(String),
    Number(serde_json::Number),
}

impl LabelJson {
    fn into_string(self) -> String {
        match self {
            LabelJson::Text(s) => s,
            LabelJson::Number(n) => n.to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GameInstanceJson {
    n: usize,
    types: Vec<LabelJson>,
    o1: Vec<LabelJson>,
    o2: Vec<LabelJson>,
    valuation: Vec<(usize, LabelJson, LabelJson, LabelJson, f64)>,
    cost: Vec<(LabelJson, LabelJson, f64)>,
    supertypes: Vec<Vec<f64>>,
}

impl GameInstance {
    pub fn to_json(&self) -> serde_json::Value {
        let spec = &self.spec;
        let mut valuation = Vec::new();
        for i in 0..spec.n {
            for t in 0..spec.types.len() {
                for a in 0..spec.o1_labels.len() {
                    for b in 0..spec.o2_labels.len() {
                        valuation.push(serde_json::json!([
                            i,
                            spec.types.label(t),
                            spec.o1_labels[a],
                            spec.o2_labels[b],
                            spec.valuation_at(i, t, a, b)
                        ]));
                    }
                }
            }
        }
        let mut cost = Vec::new();
        for a in 0..spec.o1_labels.len() {
            for b in 0..spec.o2_labels.len() {
                cost.push(serde_json::json!([
                    spec.o1_labels[a],
                    spec.o2_labels[b],
                    spec.cost_at(a, b)
                ]));
            }
        }
        serde_json::json!({
            "n": spec.n,
            "types": spec.types.labels(),
            "o1": spec.o1_labels,
            "o2": spec.o2_labels,
            "valuation": valuation,
            "cost": cost,
            "supertypes": self.supertypes.iter().map(|s| s.masses().to_vec()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self> {
        let raw: GameInstanceJson = serde_json::from_value(doc.clone())?;
        let types = TypeSpace::new(raw.types.into_iter().map(LabelJson::into_string).collect())?;
        let o1: Vec<String> = raw.o1.into_iter().map(LabelJson::into_string).collect();
        let o2: Vec<String> = raw.o2.into_iter().map(LabelJson::into_string).collect();
        let (nt, n1, n2) = (types.len(), o1.len(), o2.len());
        if n1 == 0 || n2 == 0 {
            return Err(Error::Config("outcome lists must be nonempty".into()));
        }
        let lookup = |labels: &[String], l: &str, what: &str| -> Result<usize> {
            labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::Config(format!("unknown {what} label {l:?}")))
        };
        let mut val = vec![None; raw.n * nt * n1 * n2];
        for (i, t, a, b, v) in raw.valuation {
            let t_label = t.into_string();
            let (t, a, b) = (
                types.index_of(&t_label).ok_or_else(|| {
                    Error::Config(format!("unknown type label {t_label:?} in valuation"))
                })?,
                lookup(&o1, &a.into_string(), "o1")?,
                lookup(&o2, &b.into_string(), "o2")?,
            );
            if i >= raw.n {
                return Err(Error::Config(format!(
                    "valuation entry references player {i} of {}",
                    raw.n
                )));
            }
            let idx = ((i * nt + t) * n1 + a) * n2 + b;
            if val[idx].replace(v).is_some() {
                return Err(Error::Config(format!(
                    "duplicate valuation entry for player {i}, type index {t}"
                )));
            }
        }
        let mut cst = vec![None; n1 * n2];
        for (a, b, v) in raw.cost {
            let (a, b) = (
                lookup(&o1, &a.into_string(), "o1")?,
                lookup(&o2, &b.into_string(), "o2")?,
            );
            if cst[a * n2 + b].replace(v).is_some() {
                return Err(Error::Config(format!(
                    "duplicate cost entry for outcomes ({a}, {b})"
                )));
            }
        }
        let val: Vec<f64> = val
            .into_iter()
            .enumerate()
            .map(|(idx, v)| v.ok_or_else(|| Error::Config(format!("valuation table is missing entry {idx}; every (player, type, o1, o2) tuple must be present"))))
            .collect::<Result<_>>()?;
        let cst: Vec<f64> = cst
            .into_iter()
            .enumerate()
            .map(|(idx, v)| {
                v.ok_or_else(|| Error::Config(format!("cost table is missing entry {idx}")))
            })
            .collect::<Result<_>>()?;
        let spec = GameSpec {
            n: raw.n,
            types,
            o1_labels: o1,
            o2_labels: o2,
            valuation: val,
            cost: cst,
        };
        if raw.supertypes.len() != spec.n {
            return Err(Error::Config(format!(
                "{} supertypes for {} players",
                raw.supertypes.len(),
                spec.n
            )));
        }
        let supertypes: Vec<Supertype> = raw
            .supertypes
            .into_iter()
            .map(Supertype::new)
            .collect::<Result<_>>()?;
        for s in &supertypes {
            if s.len() != spec.types.len() {
                return Err(Error::Config(
                    "supertype length does not match the type space".into(),
                ));
            }
        }
        Ok(Self { spec, supertypes })
    }
}

// ---------------------------------------------------------------------------
// Shared fixture
// ---------------------------------------------------------------------------

pub mod fixtures {
    //! Small reference instances used across the test suites.

    use super::*;

    /// Two players with binary types drawn uniformly, a single first-stage
    /// commitment, and a recourse that allocates to one player or nobody.
    /// A player values an allocation to itself at its realized type; the
    /// planner cost is identically zero. Optimal play allocates to any player
    /// whose type is 1, preferring player 1 on ties; the optimal expected
    /// welfare is 0.75.
    pub fn uniform_allocation_game() -> (GameSpec, Vec<Supertype>) {
        let types = TypeSpace::new(vec!["0".into(), "1".into()]).unwrap();
        let spec = GameSpec::new(
            2,
            types,
            vec!["A".into()],
            vec!["none".into(), "p1".into(), "p2".into()],
            |i, t, _o1, o2| {
                if o2 == i + 1 {
                    t as f64
                } else {
                    0.0
                }
            },
            |_, _| 0.0,
        )
        .unwrap();
        let sts = vec![Supertype::uniform(2), Supertype::uniform(2)];
        (spec, sts)
    }
}
