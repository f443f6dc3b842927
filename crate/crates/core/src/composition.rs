//! Joint bipartite operations built from local instruments and classical wirings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::causal::Party;
use crate::channels::{is_trace_nonincreasing, CpMap, Instrument, KrausSum};
use crate::error::{schema, Error, Result};
use crate::numerics::{MixedRadix, DEFAULT_TOL};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Conditional distribution `p(i₁..i_m | o₁..o_n)` over finite alphabets.
///
/// The flat table index is mixed-radix over `(inputs..., outputs...)` with the
/// first input varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCondDist", into = "RawCondDist")]
pub struct CondDist {
    input_alphabets: Vec<usize>,
    output_alphabets: Vec<usize>,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCondDist {
    input_alphabets: Vec<usize>,
    output_alphabets: Vec<usize>,
    table: Vec<f64>,
}

impl TryFrom<RawCondDist> for CondDist {
    type Error = Error;

    fn try_from(raw: RawCondDist) -> Result<Self> {
        CondDist::new(raw.input_alphabets, raw.output_alphabets, raw.table)
    }
}

impl From<CondDist> for RawCondDist {
    fn from(p: CondDist) -> Self {
        RawCondDist {
            input_alphabets: p.input_alphabets,
            output_alphabets: p.output_alphabets,
            table: p.table,
        }
    }
}

impl CondDist {
    pub fn new(
        input_alphabets: Vec<usize>,
        output_alphabets: Vec<usize>,
        table: Vec<f64>,
    ) -> Result<Self> {
        if input_alphabets.iter().chain(&output_alphabets).any(|&n| n == 0) {
            return Err(schema("input_alphabets/output_alphabets", "alphabets must be non-empty"));
        }
        let n_in: usize = input_alphabets.iter().product();
        let n_out: usize = output_alphabets.iter().product();
        if table.len() != n_in * n_out {
            return Err(schema(
                "table",
                format!("length {} does not match alphabet product {}", table.len(), n_in * n_out),
            ));
        }
        if let Some(x) = table.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Distribution(format!("entry {x} is negative or not finite")));
        }
        for o in 0..n_out {
            let s: f64 = table[o * n_in..(o + 1) * n_in].iter().sum();
            if (s - 1.0).abs() > NORMALIZATION_TOL {
                let digits = MixedRadix::new(output_alphabets.clone()).decode(o);
                return Err(Error::Distribution(format!(
                    "inputs sum to {s} for outputs {digits:?}"
                )));
            }
        }
        Ok(CondDist {
            input_alphabets,
            output_alphabets,
            table,
        })
    }

    /// Builds a table from a function of `(inputs, outputs)`.
    pub fn from_fn(
        input_alphabets: Vec<usize>,
        output_alphabets: Vec<usize>,
        f: impl Fn(&[usize], &[usize]) -> f64,
    ) -> Result<Self> {
        let ins = MixedRadix::new(input_alphabets.clone());
        let outs = MixedRadix::new(output_alphabets.clone());
        let mut table = Vec::with_capacity(ins.size() * outs.size());
        for o in outs.iter() {
            for i in ins.iter() {
                table.push(f(&i, &o));
            }
        }
        CondDist::new(input_alphabets, output_alphabets, table)
    }

    /// Deterministic wiring `p(i|o) = δ_{i, f(o)}`.
    pub fn deterministic(
        input_alphabets: Vec<usize>,
        output_alphabets: Vec<usize>,
        f: impl Fn(&[usize]) -> Vec<usize>,
    ) -> Result<Self> {
        CondDist::from_fn(input_alphabets, output_alphabets, |i, o| {
            if f(o).as_slice() == i {
                1.0
            } else {
                0.0
            }
        })
    }

    /// The loop wiring `δ_{i_A,o_B} δ_{i_B,o_A}` for a bipartite pair.
    pub fn loop_wiring(alice_out: usize, bob_out: usize) -> Result<Self> {
        CondDist::deterministic(vec![bob_out, alice_out], vec![alice_out, bob_out], |o| {
            vec![o[1], o[0]]
        })
    }

    /// One-way wiring `δ_{i_A,0} δ_{i_B,o_A}`.
    pub fn one_way_wiring(alice_in: usize, alice_out: usize, bob_out: usize) -> Result<Self> {
        CondDist::deterministic(vec![alice_in, alice_out], vec![alice_out, bob_out], |o| {
            vec![0, o[0]]
        })
    }

    pub fn input_alphabets(&self) -> &[usize] {
        &self.input_alphabets
    }

    pub fn output_alphabets(&self) -> &[usize] {
        &self.output_alphabets
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn input_size(&self) -> usize {
        self.input_alphabets.iter().product()
    }

    pub fn output_size(&self) -> usize {
        self.output_alphabets.iter().product()
    }

    pub fn input_radix(&self) -> MixedRadix {
        MixedRadix::new(self.input_alphabets.clone())
    }

    pub fn output_radix(&self) -> MixedRadix {
        MixedRadix::new(self.output_alphabets.clone())
    }

    /// Entry by flat input and output indices.
    pub fn prob_flat(&self, input: usize, output: usize) -> f64 {
        self.table[input + self.input_size() * output]
    }

    pub fn prob(&self, inputs: &[usize], outputs: &[usize]) -> f64 {
        let i = self.input_radix().encode(inputs);
        let o = self.output_radix().encode(outputs);
        self.prob_flat(i, o)
    }

    /// `q·self + (1−q)·other`.
    pub fn mix(&self, q: f64, other: &CondDist) -> Result<CondDist> {
        if self.input_alphabets != other.input_alphabets
            || self.output_alphabets != other.output_alphabets
        {
            return Err(Error::Alphabet("cannot mix wirings over different alphabets".into()));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Precondition(format!("mixing weight {q} outside [0,1]")));
        }
        let table = self
            .table
            .iter()
            .zip(&other.table)
            .map(|(a, b)| q * a + (1.0 - q) * b)
            .collect();
        CondDist::new(self.input_alphabets.clone(), self.output_alphabets.clone(), table)
    }
}

/// A CP map produced by a composition that is not guaranteed to be TP, with
/// its TP defect `‖Σ K†K − 𝕀‖_F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointMap {
    pub map: CpMap,
    pub tp_defect: f64,
}

impl JointMap {
    fn new(map: CpMap) -> Self {
        let tp_defect = map.tp_defect();
        JointMap { map, tp_defect }
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.tp_defect <= tol
    }
}

/// Local instruments plus a bipartite wiring `p(i_A, i_B | o_A, o_B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct JointMapSpec {
    alice: Instrument,
    bob: Instrument,
    wiring: CondDist,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    alice: Instrument,
    bob: Instrument,
    wiring: CondDist,
}

impl TryFrom<RawSpec> for JointMapSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        JointMapSpec::new(raw.alice, raw.bob, raw.wiring)
    }
}

impl From<JointMapSpec> for RawSpec {
    fn from(s: JointMapSpec) -> Self {
        RawSpec {
            alice: s.alice,
            bob: s.bob,
            wiring: s.wiring,
        }
    }
}

impl JointMapSpec {
    pub fn new(alice: Instrument, bob: Instrument, wiring: CondDist) -> Result<Self> {
        let ins = [alice.in_alphabet(), bob.in_alphabet()];
        let outs = [alice.out_alphabet(), bob.out_alphabet()];
        if wiring.input_alphabets() != ins || wiring.output_alphabets() != outs {
            return Err(Error::Alphabet(format!(
                "wiring is over inputs {:?} / outputs {:?}, instruments need {ins:?} / {outs:?}",
                wiring.input_alphabets(),
                wiring.output_alphabets()
            )));
        }
        Ok(JointMapSpec { alice, bob, wiring })
    }

    /// The loop wiring between two instruments.
    pub fn looped(alice: Instrument, bob: Instrument) -> Result<Self> {
        let wiring = CondDist::loop_wiring(alice.out_alphabet(), bob.out_alphabet())?;
        JointMapSpec::new(alice, bob, wiring)
    }

    pub fn alice(&self) -> &Instrument {
        &self.alice
    }

    pub fn bob(&self) -> &Instrument {
        &self.bob
    }

    pub fn wiring(&self) -> &CondDist {
        &self.wiring
    }
}

/// `Σ_o A_o ⊗ B_{|o}` for an input-free Alice instrument and a family of Bob channels.
pub fn compose_one_way(alice: &Instrument, bob: &[CpMap]) -> Result<CpMap> {
    if alice.in_alphabet() != 1 {
        return Err(Error::Precondition(format!(
            "one-way sender must have a trivial input alphabet, got {}",
            alice.in_alphabet()
        )));
    }
    if alice.out_alphabet() != bob.len() {
        return Err(Error::Alphabet(format!(
            "sender has {} outcomes but receiver has {} channels",
            alice.out_alphabet(),
            bob.len()
        )));
    }
    let (bi, bo) = bob
        .first()
        .map(|b| (b.in_dim(), b.out_dim()))
        .expect("non-empty alphabet");
    if bob.iter().any(|b| (b.in_dim(), b.out_dim()) != (bi, bo)) {
        return Err(Error::Dimension("receiver channels disagree on dimensions".into()));
    }
    let mut acc = KrausSum::new(alice.in_dim() * bi, alice.out_dim() * bo);
    for (o, a) in alice.outcomes(0) {
        acc.add(&a.tensor(&bob[o]), 1.0)?;
    }
    Ok(acc.finish())
}

/// `Σ p(i_A,i_B|o_A,o_B) A_{o_A|i_A} ⊗ B_{o_B|i_B}`.
pub fn compose_ccstar(spec: &JointMapSpec) -> Result<JointMap> {
    let (alice, bob, p) = (&spec.alice, &spec.bob, &spec.wiring);
    let mut acc = KrausSum::new(alice.in_dim() * bob.in_dim(), alice.out_dim() * bob.out_dim());
    for (ia, oa, a) in alice.iter() {
        for (ib, ob, b) in bob.iter() {
            let w = p.prob(&[ia, ib], &[oa, ob]);
            if w > 0.0 {
                acc.add(&a.tensor(b), w)?;
            }
        }
    }
    Ok(JointMap::new(acc.finish()))
}

pub fn is_locc_star_member(spec: &JointMapSpec, tol: f64) -> Result<bool> {
    Ok(compose_ccstar(spec)?.is_trace_preserving(tol))
}

/// `Σ_{a,b} A_{a|b} ⊗ B_{b|a}`.
pub fn compose_loop(alice: &Instrument, bob: &Instrument) -> Result<JointMap> {
    if alice.in_alphabet() != bob.out_alphabet() || alice.out_alphabet() != bob.in_alphabet() {
        return Err(Error::Alphabet(format!(
            "loop needs alice {}→{} to mirror bob {}→{}",
            alice.in_alphabet(),
            alice.out_alphabet(),
            bob.in_alphabet(),
            bob.out_alphabet()
        )));
    }
    let mut acc = KrausSum::new(alice.in_dim() * bob.in_dim(), alice.out_dim() * bob.out_dim());
    for (b, a, ea) in alice.iter() {
        if let Some(eb) = bob.get(a, b) {
            acc.add(&ea.tensor(eb), 1.0)?;
        }
    }
    Ok(JointMap::new(acc.finish()))
}

/// Rewrites a CC* spec as a pair of loop-wired instruments.
///
/// Alice's new output is `a = (i_B, x)` with `x` ranging over her original
/// outputs; her new input is `b = (o_A, o_B)`. Both pairs are encoded
/// first-index-fastest.
pub fn to_loop_form(spec: &JointMapSpec) -> Result<(Instrument, Instrument)> {
    let (alice, bob, p) = (&spec.alice, &spec.bob, &spec.wiring);
    let (n_ia, n_oa) = (alice.in_alphabet(), alice.out_alphabet());
    let (n_ib, n_ob) = (bob.in_alphabet(), bob.out_alphabet());
    let a_of = |ib: usize, x: usize| ib + n_ib * x;
    let b_of = |oa: usize, ob: usize| oa + n_oa * ob;

    let mut alice_elems = Vec::new();
    for oa in 0..n_oa {
        for ob in 0..n_ob {
            for ib in 0..n_ib {
                for x in 0..n_oa {
                    let mut acc = KrausSum::new(alice.in_dim(), alice.out_dim());
                    for ia in 0..n_ia {
                        let w = p.prob(&[ia, ib], &[oa, ob]);
                        if w > 0.0 {
                            if let Some(m) = alice.get(ia, x) {
                                acc.add(m, w)?;
                            }
                        }
                    }
                    alice_elems.push((b_of(oa, ob), a_of(ib, x), acc.finish()));
                }
            }
        }
    }
    let mut bob_elems = Vec::new();
    for (ib, ob, m) in bob.iter() {
        for x in 0..n_oa {
            bob_elems.push((a_of(ib, x), b_of(x, ob), m.clone()));
        }
    }
    let alice_loop = Instrument::new(
        n_oa * n_ob,
        n_ib * n_oa,
        alice.in_dim(),
        alice.out_dim(),
        alice_elems,
    )?;
    let bob_loop = Instrument::new(n_ib * n_oa, n_oa * n_ob, bob.in_dim(), bob.out_dim(), bob_elems)?;
    Ok((alice_loop, bob_loop))
}

/// One round of a finite-round protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub party: Party,
    pub instrument: Instrument,
}

/// Standard finite-round LOCC: round 1 receives symbol 0, every later round
/// receives the previous round's classical output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProtocol", into = "RawProtocol")]
pub struct LoccProtocol {
    local_dims: [usize; 2],
    rounds: Vec<Round>,
}

#[derive(Serialize, Deserialize)]
struct RawProtocol {
    local_dims: [usize; 2],
    rounds: Vec<Round>,
}

impl TryFrom<RawProtocol> for LoccProtocol {
    type Error = Error;

    fn try_from(raw: RawProtocol) -> Result<Self> {
        LoccProtocol::new(raw.local_dims, raw.rounds)
    }
}

impl From<LoccProtocol> for RawProtocol {
    fn from(p: LoccProtocol) -> Self {
        RawProtocol {
            local_dims: p.local_dims,
            rounds: p.rounds,
        }
    }
}

fn party_index(p: Party) -> usize {
    match p {
        Party::A => 0,
        Party::B => 1,
    }
}

impl LoccProtocol {
    /// `local_dims` are the initial quantum dimensions of Alice and Bob.
    pub fn new(local_dims: [usize; 2], rounds: Vec<Round>) -> Result<Self> {
        if local_dims.contains(&0) {
            return Err(schema("local_dims", "dimensions must be positive"));
        }
        let mut dims = local_dims;
        let mut prev_out = 1;
        for (r, round) in rounds.iter().enumerate() {
            let inst = &round.instrument;
            if inst.in_alphabet() != prev_out {
                return Err(Error::Alphabet(format!(
                    "round {} expects {} input symbols, previous round emits {prev_out}",
                    r + 1,
                    inst.in_alphabet()
                )));
            }
            let p = party_index(round.party);
            if inst.in_dim() != dims[p] {
                return Err(Error::Dimension(format!(
                    "round {} acts on dim {}, party {:?} currently holds dim {}",
                    r + 1,
                    inst.in_dim(),
                    round.party,
                    dims[p]
                )));
            }
            dims[p] = inst.out_dim();
            prev_out = inst.out_alphabet();
        }
        Ok(LoccProtocol { local_dims, rounds })
    }

    pub fn local_dims(&self) -> [usize; 2] {
        self.local_dims
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    /// Final quantum dimensions of Alice and Bob.
    pub fn output_dims(&self) -> [usize; 2] {
        let mut dims = self.local_dims;
        for r in &self.rounds {
            dims[party_index(r.party)] = r.instrument.out_dim();
        }
        dims
    }

    /// True iff consecutive rounds always belong to different parties.
    pub fn is_alternating(&self) -> bool {
        self.rounds.windows(2).all(|w| w[0].party != w[1].party)
    }

    /// Per-party instrument lists in round order.
    pub fn party_rounds(&self) -> [Vec<Instrument>; 2] {
        let mut out = [Vec::new(), Vec::new()];
        for r in &self.rounds {
            out[party_index(r.party)].push(r.instrument.clone());
        }
        out
    }
}

/// Chains the rounds with δ-wiring and sums every classical index.
pub fn compose_locc_protocol(p: &LoccProtocol) -> Result<CpMap> {
    let [da, db] = p.local_dims;
    let mut dims = p.local_dims;
    // joint map so far, keyed by the last classical output
    let mut branches: BTreeMap<usize, CpMap> = BTreeMap::new();
    branches.insert(0, CpMap::identity(da * db));
    for round in &p.rounds {
        let inst = &round.instrument;
        let party = party_index(round.party);
        let joint_in = da * db;
        let mut next: BTreeMap<usize, KrausSum> = BTreeMap::new();
        let mut new_dims = dims;
        new_dims[party] = inst.out_dim();
        for (&i, so_far) in &branches {
            for (o, m) in inst.outcomes(i) {
                let local = match round.party {
                    Party::A => m.tensor(&CpMap::identity(dims[1])),
                    Party::B => CpMap::identity(dims[0]).tensor(m),
                };
                let step = so_far.then(&local)?;
                next.entry(o)
                    .or_insert_with(|| KrausSum::new(joint_in, new_dims[0] * new_dims[1]))
                    .add(&step, 1.0)?;
            }
        }
        dims = new_dims;
        branches = next.into_iter().map(|(o, acc)| (o, acc.finish())).collect();
    }
    let mut total = KrausSum::new(da * db, dims[0] * dims[1]);
    for m in branches.values() {
        total.add(m, 1.0)?;
    }
    Ok(total.finish())
}

/// Collapses one party's ordered instruments into a single instrument with
/// aggregate input `(i₁..i_N)` and output `(o₁..o_N)`, first index fastest.
pub fn collapse_sequence(seq: &[Instrument]) -> Result<Instrument> {
    let first = seq
        .first()
        .ok_or_else(|| Error::Precondition("cannot collapse an empty sequence".into()))?;
    for (k, w) in seq.windows(2).enumerate() {
        if w[1].in_dim() != w[0].out_dim() {
            return Err(Error::Dimension(format!(
                "instrument {} outputs dim {} but instrument {} expects {}",
                k + 1,
                w[0].out_dim(),
                k + 2,
                w[1].in_dim()
            )));
        }
    }
    let ins = MixedRadix::new(seq.iter().map(Instrument::in_alphabet).collect());
    let outs = MixedRadix::new(seq.iter().map(Instrument::out_alphabet).collect());
    let last = seq.last().expect("non-empty");
    let mut elements = Vec::new();
    for i in ins.iter() {
        // partial chains keyed by the outputs chosen so far
        let mut partial: Vec<(Vec<usize>, CpMap)> = vec![(Vec::new(), CpMap::identity(first.in_dim()))];
        for (k, inst) in seq.iter().enumerate() {
            let mut next = Vec::new();
            for (os, m) in &partial {
                for (o, e) in inst.outcomes(i[k]) {
                    let mut os2 = os.clone();
                    os2.push(o);
                    next.push((os2, m.then(e)?));
                }
            }
            partial = next;
        }
        let i_flat = ins.encode(&i);
        for (os, m) in partial {
            elements.push((i_flat, outs.encode(&os), m));
        }
    }
    Instrument::new(ins.size(), outs.size(), first.in_dim(), last.out_dim(), elements)
}

/// Composes per-party round sequences under a wiring over
/// `(i₁..i_N, i'₁..i'_M | o₁..o_N, o'₁..o'_M)`.
pub fn compose_sequences(
    alice: &[Instrument],
    bob: &[Instrument],
    wiring: &CondDist,
) -> Result<JointMap> {
    let a = collapse_sequence(alice)?;
    let b = collapse_sequence(bob)?;
    let expected_in: Vec<usize> = alice
        .iter()
        .chain(bob)
        .map(Instrument::in_alphabet)
        .collect();
    let expected_out: Vec<usize> = alice
        .iter()
        .chain(bob)
        .map(Instrument::out_alphabet)
        .collect();
    if wiring.input_alphabets() != expected_in || wiring.output_alphabets() != expected_out {
        return Err(Error::Alphabet(format!(
            "wiring is over {:?}|{:?}, rounds need {expected_in:?}|{expected_out:?}",
            wiring.input_alphabets(),
            wiring.output_alphabets()
        )));
    }
    // the aggregate encoding makes the flat tables coincide
    let bipartite = CondDist::new(
        vec![a.in_alphabet(), b.in_alphabet()],
        vec![a.out_alphabet(), b.out_alphabet()],
        wiring.table().to_vec(),
    )?;
    compose_ccstar(&JointMapSpec::new(a, b, bipartite)?)
}

/// Result of the stochastic decomposition: the composed loop equals
/// `Σ_k E^A_k ⊗ E^B_k`, and every Alice factor was divided by `scale` before
/// being placed in an instrument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SloccStarDecomposition {
    pub scale: usize,
    pub spec: JointMapSpec,
}

fn ceil_norm(n: f64) -> usize {
    (n - 1e-9).ceil().max(1.0) as usize
}

/// Loop-form decomposition of an arbitrary sum of CP product terms.
///
/// Terms whose Bob factor is trace increasing first move that norm onto the
/// Alice factor. Then `M = ⌈max_k ‖Σ K†K‖⌉` over Alice factors, every term is
/// duplicated `M` times with Alice factor `E^A_k / M`, and the duplicated list
/// goes through the SEP compiler construction.
pub fn slocc_star_decompose(terms: &[(CpMap, CpMap)]) -> Result<SloccStarDecomposition> {
    if terms.is_empty() {
        return Err(Error::Precondition("no terms to decompose".into()));
    }
    let mut shifted = Vec::with_capacity(terms.len());
    for (a, b) in terms {
        let nb = b.trace_gain();
        if !nb.is_finite() {
            return Err(Error::Positivity("factor has a non-finite Gram operator".into()));
        }
        if nb > 1.0 && !is_trace_nonincreasing(b, DEFAULT_TOL) {
            shifted.push((a.scaled(nb), b.scaled(1.0 / nb)));
        } else {
            shifted.push((a.clone(), b.clone()));
        }
    }
    let max_norm = shifted
        .iter()
        .map(|(a, _)| a.trace_gain())
        .fold(0.0, f64::max);
    let scale = ceil_norm(max_norm);
    let mut duplicated = Vec::with_capacity(scale * shifted.len());
    for _ in 0..scale {
        for (a, b) in &shifted {
            duplicated.push((a.scaled(1.0 / scale as f64), b.clone()));
        }
    }
    let (alice, bob) = crate::sep::loop_pair_from_terms(&duplicated)?;
    Ok(SloccStarDecomposition {
        scale,
        spec: JointMapSpec::looped(alice, bob)?,
    })
}
