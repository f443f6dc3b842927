//! Seeded random and hand-built inputs shared by tests, the self-test and
//! the command-line tool.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::causal::{random_respecting_wiring, AggregateWiring, CausalOrder, OpLabel, Party};
use crate::channels::{random_cptp_with, random_instrument_with, CpMap, Instrument};
use crate::composition::{CondDist, JointMapSpec, LoccProtocol, Round};
use crate::error::Result;
use crate::sep::SepMap;

/// Kraus operators per element: enough rows for an isometry, sometimes one more.
fn kraus_count(rng: &mut impl Rng, d_in: usize, rows_per_kraus: usize) -> usize {
    let min = d_in.div_ceil(rows_per_kraus);
    rng.random_range(min..=min + 1)
}

/// A TP wiring of two random instruments: a random respecting wiring for a
/// random order on one operation per party, sometimes mixed with a second one.
pub fn random_tp_spec(rng: &mut impl Rng, max_dim: usize, max_alphabet: usize) -> Result<JointMapSpec> {
    let mut dim = || rng.random_range(1..=max_dim);
    let (da_in, da_out, db_in, db_out) = (dim(), dim(), dim(), dim());
    let mut sym = || rng.random_range(1..=max_alphabet);
    let (ia, oa, ib, ob) = (sym(), sym(), sym(), sym());
    let orders = CausalOrder::enumerate(1, 1);
    let first = &orders[rng.random_range(0..orders.len())];
    let mut wiring = random_respecting_wiring(rng, first, &[ia, ib], &[oa, ob])?.dist().clone();
    if rng.random_bool(0.5) {
        let second = &orders[rng.random_range(0..orders.len())];
        let other = random_respecting_wiring(rng, second, &[ia, ib], &[oa, ob])?;
        wiring = wiring.mix(rng.random_range(0.0..=1.0), other.dist())?;
    }
    let ka = kraus_count(rng, da_in, da_out * oa);
    let kb = kraus_count(rng, db_in, db_out * ob);
    let alice = random_instrument_with(rng, ia, oa, da_in, da_out, ka)?;
    let bob = random_instrument_with(rng, ib, ob, db_in, db_out, kb)?;
    JointMapSpec::new(alice, bob, wiring)
}

/// A random separable TP map with `terms` product terms: a q-mixture of
/// "Alice measures, Bob applies a channel per outcome" and the reverse,
/// with random weights moved between the two factors of each term.
pub fn random_sep_map(rng: &mut impl Rng, dims: [usize; 4], terms: usize) -> Result<SepMap> {
    let [a_in, a_out, b_in, b_out] = dims;
    let terms = terms.max(2);
    let k1 = terms / 2;
    let k2 = terms - k1;
    let q = rng.random_range(0.1..0.9);
    let mut out = Vec::with_capacity(terms);
    let kraus = kraus_count(rng, a_in, a_out * k1);
    let meas_a = random_instrument_with(rng, 1, k1, a_in, a_out, kraus)?;
    for k in 0..k1 {
        let c = rng.random_range(0.3..3.0);
        let kraus = kraus_count(rng, b_in, b_out);
        let b = random_cptp_with(rng, b_in, b_out, kraus)?;
        out.push((meas_a.element(0, k).scaled(q * c), b.scaled(1.0 / c)));
    }
    let kraus = kraus_count(rng, b_in, b_out * k2);
    let meas_b = random_instrument_with(rng, 1, k2, b_in, b_out, kraus)?;
    for k in 0..k2 {
        let c = rng.random_range(0.3..3.0);
        let kraus = kraus_count(rng, a_in, a_out);
        let a = random_cptp_with(rng, a_in, a_out, kraus)?;
        out.push((a.scaled((1.0 - q) * c), meas_b.element(0, k).scaled(1.0 / c)));
    }
    SepMap::new(out)
}

/// Product terms of CP maps with random, not necessarily trace-nonincreasing, norms.
pub fn random_cp_terms(rng: &mut impl Rng, dims: [usize; 4], terms: usize) -> Result<Vec<(CpMap, CpMap)>> {
    let [a_in, a_out, b_in, b_out] = dims;
    let mut out = Vec::with_capacity(terms);
    for _ in 0..terms {
        let ka = kraus_count(rng, a_in, 2 * a_out);
        let a = random_instrument_with(rng, 1, 2, a_in, a_out, ka)?.element(0, 0);
        let kb = kraus_count(rng, b_in, 2 * b_out);
        let b = random_instrument_with(rng, 1, 2, b_in, b_out, kb)?.element(0, 1);
        out.push((a.scaled(rng.random_range(0.1..5.0)), b.scaled(rng.random_range(0.1..3.0))));
    }
    Ok(out)
}

/// A random finite-round protocol with `n_a` Alice and `n_b` Bob rounds in a
/// random interleaving. Each party keeps its local dimension.
pub fn random_protocol(
    rng: &mut impl Rng,
    n_a: usize,
    n_b: usize,
    dims: [usize; 2],
    max_alphabet: usize,
) -> Result<LoccProtocol> {
    let mut parties: Vec<Party> = std::iter::repeat_n(Party::A, n_a)
        .chain(std::iter::repeat_n(Party::B, n_b))
        .collect();
    parties.shuffle(rng);
    let mut rounds = Vec::with_capacity(parties.len());
    let mut alphabet = 1;
    for party in parties {
        let d = match party {
            Party::A => dims[0],
            Party::B => dims[1],
        };
        let out = rng.random_range(1..=max_alphabet);
        let kraus = kraus_count(rng, d, d * out);
        let instrument = random_instrument_with(rng, alphabet, out, d, d, kraus)?;
        rounds.push(Round { party, instrument });
        alphabet = out;
    }
    LoccProtocol::new(dims, rounds)
}

/// Instruments, a wiring and an order, as consumed by LOCC reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionInput {
    pub alice: Vec<Instrument>,
    pub bob: Vec<Instrument>,
    pub wiring: AggregateWiring,
    pub order: CausalOrder,
}

/// `A(1) ≺ B(1)`, `i_A` fixed, `i_B` is `o_A` through a binary symmetric channel.
pub fn binary_symmetric_fixture(rng: &mut impl Rng, flip: f64) -> Result<ReconstructionInput> {
    let dist = CondDist::from_fn(vec![1, 2], vec![2, 2], |i, o| {
        if i[1] == o[0] {
            1.0 - flip
        } else {
            flip
        }
    })?;
    Ok(ReconstructionInput {
        alice: vec![random_instrument_with(rng, 1, 2, 2, 2, 1)?],
        bob: vec![random_instrument_with(rng, 2, 2, 2, 2, 1)?],
        wiring: AggregateWiring::new(1, 1, dist)?,
        order: CausalOrder::new(1, 1, &[(OpLabel::a(1), OpLabel::b(1))])?,
    })
}

/// Two alternating rounds per party. `B(2)` reads `o_A(1) ⊕ i_B(1)` through
/// a noisy channel, so the wiring carries memory across Bob's rounds.
pub fn memoryful_fixture(rng: &mut impl Rng) -> Result<ReconstructionInput> {
    let order = CausalOrder::chain(&[OpLabel::a(1), OpLabel::b(1), OpLabel::a(2), OpLabel::b(2)])?;
    let dist = CondDist::from_fn(vec![1, 2, 2, 2], vec![2, 3, 3, 2], |i, o| {
        let (ia2, ib1, ib2) = (i[1], i[2], i[3]);
        let (oa1, ob1) = (o[0], o[2]);
        let p_ib1 = if ib1 == oa1 { 0.9 } else { 0.1 };
        let p_ia2 = match ob1 {
            2 => 0.5,
            _ if ia2 == ob1 => 1.0,
            _ => 0.0,
        };
        let p_ib2 = if ib2 == (oa1 ^ ib1) { 0.75 } else { 0.25 };
        p_ib1 * p_ia2 * p_ib2
    })?;
    Ok(ReconstructionInput {
        alice: vec![
            random_instrument_with(rng, 1, 2, 2, 2, 1)?,
            random_instrument_with(rng, 2, 3, 2, 2, 1)?,
        ],
        bob: vec![
            random_instrument_with(rng, 2, 3, 2, 2, 1)?,
            random_instrument_with(rng, 2, 2, 2, 2, 1)?,
        ],
        wiring: AggregateWiring::new(2, 2, dist)?,
        order,
    })
}
