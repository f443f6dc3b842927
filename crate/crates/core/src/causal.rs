//! Partial orders over local operations, the no-signaling test for wirings,
//! and reconstruction of a standard LOCC protocol from a respecting wiring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{random_distribution, validate_instrument, CpMap, Instrument, KrausSum};
use crate::composition::{compose_sequences, CondDist, JointMap, LoccProtocol, Round};
use crate::error::{schema, Error, Result};
use crate::numerics::MixedRadix;

/// Entrywise tolerance of the marginal-invariance test.
pub const MARGINAL_TOL: f64 = 1e-12;
/// Denominators at or below this are treated as zero-probability branches.
const ZERO_MASS: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

/// A local operation: `party`'s `round`-th instrument, rounds counted from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpLabel {
    pub party: Party,
    pub round: usize,
}

impl OpLabel {
    pub fn a(round: usize) -> Self {
        OpLabel {
            party: Party::A,
            round,
        }
    }

    pub fn b(round: usize) -> Self {
        OpLabel {
            party: Party::B,
            round,
        }
    }
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}({})", self.party, self.round)
    }
}

/// The canonical slot list `A(1)..A(n_a), B(1)..B(n_b)`.
pub fn canonical_slots(n_a: usize, n_b: usize) -> Vec<OpLabel> {
    (1..=n_a)
        .map(OpLabel::a)
        .chain((1..=n_b).map(OpLabel::b))
        .collect()
}

/// A strict partial order on the operations of both parties, stored as its
/// transitive closure. Within-party successor edges are always present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CausalOrder {
    nodes: Vec<OpLabel>,
    less: Vec<Vec<bool>>,
}

impl CausalOrder {
    /// Builds the order from `n_a` Alice and `n_b` Bob operations and the
    /// given cross-party or same-party edges `(earlier, later)`.
    pub fn new(n_a: usize, n_b: usize, edges: &[(OpLabel, OpLabel)]) -> Result<Self> {
        let nodes = canonical_slots(n_a, n_b);
        let n = nodes.len();
        let mut less = vec![vec![false; n]; n];
        let index = |l: &OpLabel| -> Result<usize> {
            nodes
                .iter()
                .position(|x| x == l)
                .ok_or(Error::UnknownLabel(*l))
        };
        for w in nodes.windows(2) {
            if w[0].party == w[1].party {
                less[index(&w[0])?][index(&w[1])?] = true;
            }
        }
        for (x, y) in edges {
            less[index(x)?][index(y)?] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if less[i][k] {
                    for j in 0..n {
                        if less[k][j] {
                            less[i][j] = true;
                        }
                    }
                }
            }
        }
        if let Some(i) = (0..n).find(|&i| less[i][i]) {
            return Err(Error::NotPartialOrder(format!(
                "{} precedes itself through a cycle",
                nodes[i]
            )));
        }
        Ok(CausalOrder { nodes, less })
    }

    /// The total order that runs the labels in the given sequence.
    pub fn chain(sequence: &[OpLabel]) -> Result<Self> {
        let n_a = sequence.iter().filter(|l| l.party == Party::A).count();
        let n_b = sequence.len() - n_a;
        let edges: Vec<_> = sequence.windows(2).map(|w| (w[0], w[1])).collect();
        let order = CausalOrder::new(n_a, n_b, &edges)?;
        if order.nodes.len() != sequence.len() {
            return Err(Error::NotPartialOrder("sequence repeats a label".into()));
        }
        Ok(order)
    }

    pub fn nodes(&self) -> &[OpLabel] {
        &self.nodes
    }

    pub fn party_counts(&self) -> (usize, usize) {
        let n_a = self.nodes.iter().filter(|l| l.party == Party::A).count();
        (n_a, self.nodes.len() - n_a)
    }

    pub fn index_of(&self, label: &OpLabel) -> Result<usize> {
        self.nodes
            .iter()
            .position(|x| x == label)
            .ok_or(Error::UnknownLabel(*label))
    }

    /// `x ≺ y`.
    pub fn precedes(&self, x: &OpLabel, y: &OpLabel) -> Result<bool> {
        Ok(self.less[self.index_of(x)?][self.index_of(y)?])
    }

    /// All pairs of the transitive closure.
    pub fn relations(&self) -> Vec<(OpLabel, OpLabel)> {
        let mut out = Vec::new();
        for (i, x) in self.nodes.iter().enumerate() {
            for (j, y) in self.nodes.iter().enumerate() {
                if self.less[i][j] {
                    out.push((*x, *y));
                }
            }
        }
        out
    }

    /// Every strict partial order on `n_a` + `n_b` operations that contains
    /// the within-party successor edges.
    pub fn enumerate(n_a: usize, n_b: usize) -> Vec<CausalOrder> {
        let cross: Vec<(OpLabel, OpLabel)> = (1..=n_a)
            .flat_map(|k| {
                (1..=n_b).flat_map(move |l| {
                    [(OpLabel::a(k), OpLabel::b(l)), (OpLabel::b(l), OpLabel::a(k))]
                })
            })
            .collect();
        let mut seen: Vec<CausalOrder> = Vec::new();
        for mask in 0u64..(1u64 << cross.len()) {
            let edges: Vec<_> = cross
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, e)| *e)
                .collect();
            if let Ok(order) = CausalOrder::new(n_a, n_b, &edges) {
                if !seen.contains(&order) {
                    seen.push(order);
                }
            }
        }
        seen
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeEnd {
    Index(usize),
    Label(OpLabel),
}

#[derive(Serialize, Deserialize)]
struct RawOrder {
    nodes: Vec<OpLabel>,
    #[serde(default)]
    edges: Vec<[EdgeEnd; 2]>,
}

impl Serialize for CausalOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut edges = Vec::new();
        for i in 0..self.nodes.len() {
            for j in 0..self.nodes.len() {
                if self.less[i][j] {
                    edges.push([EdgeEnd::Index(i), EdgeEnd::Index(j)]);
                }
            }
        }
        RawOrder {
            nodes: self.nodes.clone(),
            edges,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CausalOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawOrder::deserialize(d)?;
        let n_a = raw.nodes.iter().filter(|l| l.party == Party::A).count();
        let n_b = raw.nodes.len() - n_a;
        let mut sorted = raw.nodes.clone();
        sorted.sort();
        if sorted != canonical_slots(n_a, n_b) {
            return Err(D::Error::custom(
                "invalid field `nodes`: rounds of each party must run 1, 2, ... without gaps",
            ));
        }
        let resolve = |e: &EdgeEnd| -> std::result::Result<OpLabel, D::Error> {
            match e {
                EdgeEnd::Index(i) => raw.nodes.get(*i).copied().ok_or_else(|| {
                    D::Error::custom(format!("invalid field `edges`: node index {i} out of range"))
                }),
                EdgeEnd::Label(l) => Ok(*l),
            }
        };
        let mut edges = Vec::new();
        for [x, y] in &raw.edges {
            edges.push((resolve(x)?, resolve(y)?));
        }
        CausalOrder::new(n_a, n_b, &edges).map_err(D::Error::custom)
    }
}

/// Output slots of every operation strictly preceding an operation whose
/// input is in `inputs`. Slots are named by their operation.
pub fn past_set(order: &CausalOrder, inputs: &[OpLabel]) -> Result<BTreeSet<OpLabel>> {
    let idx: Vec<usize> = inputs
        .iter()
        .map(|l| order.index_of(l))
        .collect::<Result<_>>()?;
    Ok(order
        .nodes
        .iter()
        .enumerate()
        .filter(|(x, _)| idx.iter().any(|&y| order.less[*x][y]))
        .map(|(_, l)| *l)
        .collect())
}

/// A wiring over all per-round classical slots, in canonical slot order
/// (Alice rounds then Bob rounds) on both the input and output side.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateWiring {
    slots: Vec<OpLabel>,
    dist: CondDist,
}

impl AggregateWiring {
    pub fn new(n_a: usize, n_b: usize, dist: CondDist) -> Result<Self> {
        let slots = canonical_slots(n_a, n_b);
        if dist.input_alphabets().len() != slots.len() || dist.output_alphabets().len() != slots.len()
        {
            return Err(Error::Alphabet(format!(
                "wiring has {} input and {} output slots, expected {} of each",
                dist.input_alphabets().len(),
                dist.output_alphabets().len(),
                slots.len()
            )));
        }
        Ok(AggregateWiring { slots, dist })
    }

    pub fn slots(&self) -> &[OpLabel] {
        &self.slots
    }

    pub fn dist(&self) -> &CondDist {
        &self.dist
    }

    pub fn party_counts(&self) -> (usize, usize) {
        let n_a = self.slots.iter().filter(|l| l.party == Party::A).count();
        (n_a, self.slots.len() - n_a)
    }

    fn slot_index(&self, l: &OpLabel) -> Result<usize> {
        self.slots
            .iter()
            .position(|x| x == l)
            .ok_or(Error::UnknownLabel(*l))
    }

    /// Checks the slot alphabets against per-party instrument lists.
    pub fn check_instruments(&self, alice: &[Instrument], bob: &[Instrument]) -> Result<()> {
        let (n_a, n_b) = self.party_counts();
        if alice.len() != n_a || bob.len() != n_b {
            return Err(Error::Alphabet(format!(
                "wiring has {n_a}+{n_b} slots but {}+{} instruments were given",
                alice.len(),
                bob.len()
            )));
        }
        for (slot, inst) in self.slots.iter().zip(alice.iter().chain(bob)) {
            let s = self.slot_index(slot)?;
            if self.dist.input_alphabets()[s] != inst.in_alphabet()
                || self.dist.output_alphabets()[s] != inst.out_alphabet()
            {
                return Err(Error::Alphabet(format!(
                    "slot {slot} is {}→{} in the wiring but {}→{} in the instrument",
                    self.dist.output_alphabets()[s],
                    self.dist.input_alphabets()[s],
                    inst.out_alphabet(),
                    inst.in_alphabet()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawAggregate {
    slots: Vec<OpLabel>,
    input_alphabets: Vec<usize>,
    output_alphabets: Vec<usize>,
    table: Vec<f64>,
}

impl Serialize for AggregateWiring {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawAggregate {
            slots: self.slots.clone(),
            input_alphabets: self.dist.input_alphabets().to_vec(),
            output_alphabets: self.dist.output_alphabets().to_vec(),
            table: self.dist.table().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AggregateWiring {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawAggregate::deserialize(d)?;
        let n_a = raw.slots.iter().filter(|l| l.party == Party::A).count();
        let n_b = raw.slots.len() - n_a;
        if raw.slots != canonical_slots(n_a, n_b) {
            return Err(D::Error::custom(schema(
                "slots",
                "slots must list A(1)..A(n) then B(1)..B(m)",
            )));
        }
        let dist = CondDist::new(raw.input_alphabets, raw.output_alphabets, raw.table)
            .map_err(D::Error::custom)?;
        AggregateWiring::new(n_a, n_b, dist).map_err(D::Error::custom)
    }
}

fn check_slots_match(p: &AggregateWiring, order: &CausalOrder) -> Result<()> {
    if p.slots != order.nodes {
        return Err(Error::Alphabet(format!(
            "wiring slots {:?} do not match the order's operations {:?}",
            p.party_counts(),
            order.party_counts()
        )));
    }
    Ok(())
}

/// A no-signaling violation: the marginal over the first `k` Alice and `l`
/// Bob inputs changes with output `slot`, which is outside their past.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub k: usize,
    pub l: usize,
    pub slot: OpLabel,
}

/// Marginal `p(selected inputs | outputs)` as a table indexed
/// `[output flat][selected-input flat]`.
fn marginal(dist: &CondDist, selected: &[usize]) -> (MixedRadix, Vec<Vec<f64>>) {
    let ins = dist.input_radix();
    let sel = MixedRadix::new(selected.iter().map(|&s| dist.input_alphabets()[s]).collect());
    let n_out = dist.output_size();
    let mut table = vec![vec![0.0; sel.size()]; n_out];
    let mut digits_sel = vec![0; selected.len()];
    for i in 0..ins.size() {
        let digits = ins.decode(i);
        for (d, &s) in digits_sel.iter_mut().zip(selected) {
            *d = digits[s];
        }
        let m = sel.encode(&digits_sel);
        for (o, row) in table.iter_mut().enumerate() {
            row[m] += dist.prob_flat(i, o);
        }
    }
    (sel, table)
}

/// Finds the first `(k, l)` marginal that depends on an output outside the
/// past of its inputs, or `None` if the wiring respects `order`.
pub fn check_causal_order(p: &AggregateWiring, order: &CausalOrder) -> Result<Option<Violation>> {
    check_slots_match(p, order)?;
    let (n_a, n_b) = p.party_counts();
    let outs = p.dist.output_radix();
    for k in 0..=n_a {
        for l in 0..=n_b {
            if k + l == 0 {
                continue;
            }
            let labels: Vec<OpLabel> = (1..=k).map(OpLabel::a).chain((1..=l).map(OpLabel::b)).collect();
            let past = past_set(order, &labels)?;
            let selected: Vec<usize> = labels
                .iter()
                .map(|x| p.slot_index(x))
                .collect::<Result<_>>()?;
            let free: Vec<usize> = p
                .slots
                .iter()
                .enumerate()
                .filter(|(_, s)| !past.contains(s))
                .map(|(i, _)| i)
                .collect();
            if free.is_empty() {
                continue;
            }
            let (_, table) = marginal(&p.dist, &selected);
            for o in 0..outs.size() {
                let digits = outs.decode(o);
                let mut reference = digits.clone();
                for &s in &free {
                    reference[s] = 0;
                }
                let r = outs.encode(&reference);
                if differs(&table[o], &table[r]) {
                    // name a single free slot responsible, if there is one
                    let slot = free
                        .iter()
                        .copied()
                        .find(|&s| {
                            let mut single = digits.clone();
                            single[s] = 0;
                            differs(&table[o], &table[outs.encode(&single)])
                        })
                        .or_else(|| free.iter().copied().find(|&s| digits[s] != 0))
                        .expect("some free output differs from the reference");
                    return Ok(Some(Violation {
                        k,
                        l,
                        slot: p.slots[slot],
                    }));
                }
            }
        }
    }
    Ok(None)
}

fn differs(x: &[f64], y: &[f64]) -> bool {
    x.iter().zip(y).any(|(a, b)| (a - b).abs() > MARGINAL_TOL)
}

pub fn respects_causal_order(p: &AggregateWiring, order: &CausalOrder) -> Result<bool> {
    Ok(check_causal_order(p, order)?.is_none())
}

fn require_causal_order(p: &AggregateWiring, order: &CausalOrder) -> Result<()> {
    match check_causal_order(p, order)? {
        None => Ok(()),
        Some(v) => Err(Error::CausalOrder {
            k: v.k,
            l: v.l,
            slot: v.slot,
        }),
    }
}

/// A total order compatible with a [`CausalOrder`]; `sequence[s]` runs at step `s+1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearExtension {
    pub sequence: Vec<OpLabel>,
}

impl LinearExtension {
    /// 1-based step of an operation.
    pub fn step_of(&self, label: &OpLabel) -> Result<usize> {
        self.sequence
            .iter()
            .position(|x| x == label)
            .map(|p| p + 1)
            .ok_or(Error::UnknownLabel(*label))
    }
}

/// Kahn's algorithm; among ready operations Alice goes first, then lower rounds.
pub fn linear_extension(order: &CausalOrder) -> Result<LinearExtension> {
    let n = order.nodes.len();
    let mut indegree: Vec<usize> = (0..n)
        .map(|j| (0..n).filter(|&i| order.less[i][j]).count())
        .collect();
    let mut ready: BTreeSet<OpLabel> = (0..n)
        .filter(|&j| indegree[j] == 0)
        .map(|j| order.nodes[j])
        .collect();
    let mut sequence = Vec::with_capacity(n);
    while let Some(next) = ready.pop_first() {
        let i = order.index_of(&next)?;
        sequence.push(next);
        for j in 0..n {
            if order.less[i][j] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.insert(order.nodes[j]);
                }
            }
        }
    }
    if sequence.len() != n {
        return Err(Error::NotPartialOrder("relation contains a cycle".into()));
    }
    Ok(LinearExtension { sequence })
}

/// Per-step classical channels of the sequential rewrite.
///
/// Step `s` (1-based) draws `I_s` given the aggregate history
/// `𝕆_{s−1} = (I_1..I_{s−1}, O_1..O_{s−1})`, encoded first-index-fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct QChannels {
    extension: LinearExtension,
    in_alphabets: Vec<usize>,
    out_alphabets: Vec<usize>,
    /// `factors[s−1][I_s + |I_s|·𝕆_{s−1}]`.
    factors: Vec<Vec<f64>>,
}

impl QChannels {
    pub fn steps(&self) -> usize {
        self.in_alphabets.len()
    }

    pub fn extension(&self) -> &LinearExtension {
        &self.extension
    }

    /// Alphabet of `𝕆_s` (`s = 0` is the trivial history).
    pub fn history_radix(&self, s: usize) -> MixedRadix {
        let mut r = self.in_alphabets[..s].to_vec();
        r.extend_from_slice(&self.out_alphabets[..s]);
        MixedRadix::new(r)
    }

    /// Alphabet of `𝕁_s = (I_1..I_s, O_1..O_{s−1})`.
    pub fn request_radix(&self, s: usize) -> MixedRadix {
        let mut r = self.in_alphabets[..s].to_vec();
        r.extend_from_slice(&self.out_alphabets[..s - 1]);
        MixedRadix::new(r)
    }

    /// The conditional factor `q(I_1..I_s|O_1..O_{s−1}) / q(I_1..I_{s−1}|O_1..O_{s−2})`.
    pub fn factor(&self, s: usize, input: usize, history: usize) -> f64 {
        self.factors[s - 1][input + self.in_alphabets[s - 1] * history]
    }

    /// `Q(𝕁_s | 𝕆_{s−1})` including the bookkeeping deltas.
    pub fn prob(&self, s: usize, request: &[usize], history: &[usize]) -> f64 {
        let prev_i = &history[..s - 1];
        let prev_o = &history[s - 1..];
        if request[..s - 1] != *prev_i || request[s..] != *prev_o {
            return 0.0;
        }
        let h = self.history_radix(s - 1).encode(history);
        self.factor(s, request[s - 1], h)
    }
}

/// Maps the wiring to step order: `q(I_1..I_2N | O_1..O_2N)`.
fn step_slots(p: &AggregateWiring, ext: &LinearExtension) -> Result<Vec<usize>> {
    ext.sequence.iter().map(|l| p.slot_index(l)).collect()
}

/// Builds the per-step channels. Zero-probability histories get the uniform
/// distribution over `I_s`.
pub fn build_q_channels(p: &AggregateWiring, ext: &LinearExtension) -> Result<QChannels> {
    let slot_of = step_slots(p, ext)?;
    let n = slot_of.len();
    let in_alphabets: Vec<usize> = slot_of.iter().map(|&s| p.dist.input_alphabets()[s]).collect();
    let out_alphabets: Vec<usize> = slot_of.iter().map(|&s| p.dist.output_alphabets()[s]).collect();
    let outs = p.dist.output_radix();

    // qm[k][J_k] = q(I_1..I_k | O_1..O_{k−1}), other outputs pinned to 0
    let mut qm: Vec<Vec<f64>> = vec![vec![1.0]];
    for k in 1..=n {
        let selected: Vec<usize> = slot_of[..k].to_vec();
        let (sel, table) = marginal(&p.dist, &selected);
        let hist = MixedRadix::new(out_alphabets[..k - 1].to_vec());
        let mut row = vec![0.0; sel.size() * hist.size()];
        for h in hist.iter() {
            let mut full = vec![0; slot_of.len()];
            for (j, &o) in h.iter().enumerate() {
                full[slot_of[j]] = o;
            }
            let o_flat = outs.encode(&full);
            let h_flat = hist.encode(&h);
            for m in 0..sel.size() {
                row[m + sel.size() * h_flat] = table[o_flat][m];
            }
        }
        qm.push(row);
    }

    let mut factors = Vec::with_capacity(n);
    for s in 1..=n {
        let history = {
            let mut r = in_alphabets[..s - 1].to_vec();
            r.extend_from_slice(&out_alphabets[..s - 1]);
            MixedRadix::new(r)
        };
        let n_is = in_alphabets[s - 1];
        let num_radix = {
            let mut r = in_alphabets[..s].to_vec();
            r.extend_from_slice(&out_alphabets[..s - 1]);
            MixedRadix::new(r)
        };
        let den_radix = {
            let mut r = in_alphabets[..s - 1].to_vec();
            r.extend_from_slice(&out_alphabets[..s.saturating_sub(2)]);
            MixedRadix::new(r)
        };
        let mut f = vec![0.0; n_is * history.size()];
        for h in history.iter() {
            let (hi, ho) = h.split_at(s - 1);
            let mut den_digits = hi.to_vec();
            den_digits.extend_from_slice(&ho[..s.saturating_sub(2)]);
            let den = qm[s - 1][den_radix.encode(&den_digits)];
            let h_flat = history.encode(&h);
            for is in 0..n_is {
                let value = if den <= ZERO_MASS {
                    1.0 / n_is as f64
                } else {
                    let mut num_digits = hi.to_vec();
                    num_digits.push(is);
                    num_digits.extend_from_slice(ho);
                    qm[s][num_radix.encode(&num_digits)] / den
                };
                f[is + n_is * h_flat] = value;
            }
        }
        factors.push(f);
    }
    Ok(QChannels {
        extension: ext.clone(),
        in_alphabets,
        out_alphabets,
        factors,
    })
}

/// The sequential instruments `C'`/`D'`, in step order.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimedOperations {
    pub labels: Vec<OpLabel>,
    pub instruments: Vec<Instrument>,
}

/// Folds each step's channel into its instrument: input `𝕆_{s−1}`, output `𝕆_s`.
pub fn build_primed_operations(
    alice: &[Instrument],
    bob: &[Instrument],
    q: &QChannels,
    tol: f64,
) -> Result<PrimedOperations> {
    let mut labels = Vec::new();
    let mut instruments = Vec::new();
    for s in 1..=q.steps() {
        let label = q.extension.sequence[s - 1];
        let base = match label.party {
            Party::A => alice.get(label.round - 1),
            Party::B => bob.get(label.round - 1),
        }
        .ok_or(Error::UnknownLabel(label))?;
        let prev = q.history_radix(s - 1);
        let next = q.history_radix(s);
        let mut elements = Vec::new();
        for h in prev.iter() {
            let h_flat = prev.encode(&h);
            let (hi, ho) = h.split_at(s - 1);
            for is in 0..base.in_alphabet() {
                let w = q.factor(s, is, h_flat);
                if w <= 0.0 {
                    continue;
                }
                for (os, m) in base.outcomes(is) {
                    let mut digits = hi.to_vec();
                    digits.push(is);
                    digits.extend_from_slice(ho);
                    digits.push(os);
                    elements.push((h_flat, next.encode(&digits), m.scaled(w)));
                }
            }
        }
        let inst = Instrument::new(prev.size(), next.size(), base.in_dim(), base.out_dim(), elements)?;
        if !validate_instrument(&inst, tol) {
            return Err(Error::Reconstruction { step: s, label });
        }
        labels.push(label);
        instruments.push(inst);
    }
    Ok(PrimedOperations {
        labels,
        instruments,
    })
}

fn same_party_pairs(rounds: &[Round]) -> Option<usize> {
    rounds.windows(2).position(|w| w[0].party == w[1].party)
}

/// Combines consecutive same-party rounds; the combined outcome is the pair
/// `(o₁, o₂)` encoded `o₁ + |o₁|·o₂`, and the following round ignores `o₁`.
pub fn merge_successive(p: &LoccProtocol) -> Result<LoccProtocol> {
    let mut rounds = p.rounds().to_vec();
    while let Some(r) = same_party_pairs(&rounds) {
        let (first, second) = (&rounds[r].instrument, &rounds[r + 1].instrument);
        let beta = first.out_alphabet();
        let gamma = second.out_alphabet();
        let mut elements = Vec::new();
        for (i, o1, m1) in first.iter() {
            for (o2, m2) in second.outcomes(o1) {
                elements.push((i, o1 + beta * o2, m1.then(m2)?));
            }
        }
        let merged = Instrument::new(
            first.in_alphabet(),
            beta * gamma,
            first.in_dim(),
            second.out_dim(),
            elements,
        )?;
        rounds[r] = Round {
            party: rounds[r].party,
            instrument: merged,
        };
        rounds.remove(r + 1);
        if let Some(following) = rounds.get(r + 1) {
            let inst = &following.instrument;
            let lifted: Vec<_> = inst
                .iter()
                .flat_map(|(o2, o, m)| (0..beta).map(move |o1| (o1 + beta * o2, o, m.clone())))
                .collect();
            let lifted = Instrument::new(
                beta * gamma,
                inst.out_alphabet(),
                inst.in_dim(),
                inst.out_dim(),
                lifted,
            )?;
            rounds[r + 1] = Round {
                party: following.party,
                instrument: lifted,
            };
        }
    }
    LoccProtocol::new(p.local_dims(), rounds)
}

/// Combines consecutive same-party rounds by summing out the intermediate
/// outcome. Used when later rounds only read the last history symbol, which
/// already contains every earlier one.
pub fn absorb_successive(p: &LoccProtocol) -> Result<LoccProtocol> {
    let mut rounds = p.rounds().to_vec();
    while let Some(r) = same_party_pairs(&rounds) {
        let (first, second) = (&rounds[r].instrument, &rounds[r + 1].instrument);
        let mut sums: BTreeMap<(usize, usize), KrausSum> = BTreeMap::new();
        for (i, o1, m1) in first.iter() {
            for (o2, m2) in second.outcomes(o1) {
                sums.entry((i, o2))
                    .or_insert_with(|| KrausSum::new(first.in_dim(), second.out_dim()))
                    .add(&m1.then(m2)?, 1.0)?;
            }
        }
        let merged = Instrument::new(
            first.in_alphabet(),
            second.out_alphabet(),
            first.in_dim(),
            second.out_dim(),
            sums.into_iter().map(|((i, o), acc)| (i, o, acc.finish())),
        )?;
        rounds[r] = Round {
            party: rounds[r].party,
            instrument: merged,
        };
        rounds.remove(r + 1);
    }
    LoccProtocol::new(p.local_dims(), rounds)
}

/// Output of [`reconstruct_locc`].
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub extension: LinearExtension,
    /// The δ-wired sequence before same-party rounds are combined.
    pub sequential: LoccProtocol,
    /// The alternating protocol.
    pub protocol: LoccProtocol,
}

/// Rewrites instruments wired by a causal-order-respecting `p` as a
/// standard alternating LOCC protocol.
pub fn reconstruct_locc(
    alice: &[Instrument],
    bob: &[Instrument],
    p: &AggregateWiring,
    order: &CausalOrder,
    tol: f64,
) -> Result<Reconstruction> {
    if alice.is_empty() || bob.is_empty() {
        return Err(Error::Precondition("each party needs at least one round".into()));
    }
    p.check_instruments(alice, bob)?;
    require_causal_order(p, order)?;
    let extension = linear_extension(order)?;
    let q = build_q_channels(p, &extension)?;
    let primed = build_primed_operations(alice, bob, &q, tol)?;
    let rounds = primed
        .labels
        .iter()
        .zip(primed.instruments)
        .map(|(l, instrument)| Round {
            party: l.party,
            instrument,
        })
        .collect();
    let sequential = LoccProtocol::new([alice[0].in_dim(), bob[0].in_dim()], rounds)?;
    let protocol = absorb_successive(&sequential)?;
    Ok(Reconstruction {
        extension,
        sequential,
        protocol,
    })
}

/// Direct composition of per-round instruments under an aggregate wiring.
pub fn compose_aggregate(
    alice: &[Instrument],
    bob: &[Instrument],
    p: &AggregateWiring,
) -> Result<JointMap> {
    p.check_instruments(alice, bob)?;
    compose_sequences(alice, bob, &p.dist)
}

/// A protocol's δ-wiring re-expressed over per-party rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolWiring {
    pub alice: Vec<Instrument>,
    pub bob: Vec<Instrument>,
    pub wiring: AggregateWiring,
    /// The total order in which the protocol runs its rounds.
    pub order: CausalOrder,
}

/// Splits a protocol into per-party rounds with the δ-wiring
/// `i_{t} = o_{t−1}`, `i_1 = 0`. A party without rounds gets one trivial
/// identity round at the end.
pub fn protocol_wiring(p: &LoccProtocol) -> Result<ProtocolWiring> {
    let mut alice = Vec::new();
    let mut bob = Vec::new();
    let mut sequence = Vec::new();
    for r in p.rounds() {
        let list = match r.party {
            Party::A => &mut alice,
            Party::B => &mut bob,
        };
        list.push(r.instrument.clone());
        sequence.push(OpLabel {
            party: r.party,
            round: list.len(),
        });
    }
    let out_dims = p.output_dims();
    let last_out = p.rounds().last().map_or(1, |r| r.instrument.out_alphabet());
    let trivial = |d: usize| -> Result<Instrument> {
        let elems = (0..last_out).map(|i| (i, 0, CpMap::identity(d)));
        Instrument::new(last_out, 1, d, d, elems)
    };
    if alice.is_empty() {
        alice.push(trivial(out_dims[0])?);
        sequence.push(OpLabel::a(1));
    }
    if bob.is_empty() {
        bob.push(trivial(out_dims[1])?);
        sequence.push(OpLabel::b(1));
    }
    let slots = canonical_slots(alice.len(), bob.len());
    let position: Vec<usize> = slots
        .iter()
        .map(|s| sequence.iter().position(|x| x == s).expect("every slot is scheduled"))
        .collect();
    let insts: Vec<&Instrument> = alice.iter().chain(&bob).collect();
    let ins = insts.iter().map(|i| i.in_alphabet()).collect();
    let outs = insts.iter().map(|i| i.out_alphabet()).collect();
    let dist = CondDist::deterministic(ins, outs, |o| {
        position
            .iter()
            .map(|&t| {
                if t == 0 {
                    0
                } else {
                    let prev = sequence[t - 1];
                    o[slots.iter().position(|x| *x == prev).expect("slot")]
                }
            })
            .collect()
    })?;
    let order = CausalOrder::chain(&sequence)?;
    Ok(ProtocolWiring {
        wiring: AggregateWiring::new(alice.len(), bob.len(), dist)?,
        alice,
        bob,
        order,
    })
}

/// Random wiring that respects `order`: each operation's input is drawn
/// conditioned on the inputs and outputs of the operations strictly before it.
pub fn random_respecting_wiring(
    rng: &mut impl Rng,
    order: &CausalOrder,
    in_alphabets: &[usize],
    out_alphabets: &[usize],
) -> Result<AggregateWiring> {
    let (n_a, n_b) = order.party_counts();
    let n = order.nodes.len();
    if in_alphabets.len() != n || out_alphabets.len() != n {
        return Err(Error::Alphabet("one alphabet per operation is required".into()));
    }
    // conditional tables r_x(i_x | inputs and outputs of predecessors)
    let mut tables = Vec::with_capacity(n);
    for x in 0..n {
        let preds: Vec<usize> = (0..n).filter(|&y| order.less[y][x]).collect();
        let ctx: usize = preds
            .iter()
            .map(|&y| in_alphabets[y] * out_alphabets[y])
            .product();
        let rows: Vec<Vec<f64>> = (0..ctx)
            .map(|_| random_distribution(rng, in_alphabets[x]))
            .collect();
        tables.push((preds, rows));
    }
    let dist = CondDist::from_fn(in_alphabets.to_vec(), out_alphabets.to_vec(), |i, o| {
        tables
            .iter()
            .enumerate()
            .map(|(x, (preds, rows))| {
                let mut ctx = 0;
                for &y in preds.iter().rev() {
                    ctx = ctx * in_alphabets[y] + i[y];
                    ctx = ctx * out_alphabets[y] + o[y];
                }
                rows[ctx][i[x]]
            })
            .product()
    })?;
    AggregateWiring::new(n_a, n_b, dist)
}
