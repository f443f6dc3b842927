//! Classical (diagonal) process matrices: validity, composition, the split
//! into one-way components, and a probe test for general `W`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::Party;
use crate::channels::{
    choi_of, random_cptp_with, random_distribution, CpMap, Instrument, KrausSum,
};
use crate::composition::{compose_ccstar, compose_locc_protocol, CondDist, JointMapSpec, LoccProtocol, Round};
use crate::error::{Error, Result};
use crate::lp::phase_one;
use crate::numerics::{hermitian_eigen, ComplexMatrix, MixedRadix, C64};

/// Normalization tolerance of `Σ_{i_A,i_B} w(i_A,i_B,a,b) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Largest accepted `|q·p_AB + (1−q)·p_BA − w|`.
pub const RECOMBINATION_TOL: f64 = 1e-7;
/// Branch weights at or below this count as zero.
const ZERO_MASS: f64 = 1e-12;

/// `w(i_A, i_B, o_A, o_B)`, flattened with `i_A` fastest, then `i_B`, `o_A`, `o_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProcess", into = "RawProcess")]
pub struct ClassicalProcess {
    i_a: usize,
    i_b: usize,
    o_a: usize,
    o_b: usize,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawProcess {
    i_a: usize,
    i_b: usize,
    o_a: usize,
    o_b: usize,
    table: Vec<f64>,
}

impl TryFrom<RawProcess> for ClassicalProcess {
    type Error = Error;

    fn try_from(r: RawProcess) -> Result<Self> {
        ClassicalProcess::new([r.i_a, r.i_b, r.o_a, r.o_b], r.table)
    }
}

impl From<ClassicalProcess> for RawProcess {
    fn from(w: ClassicalProcess) -> Self {
        RawProcess {
            i_a: w.i_a,
            i_b: w.i_b,
            o_a: w.o_a,
            o_b: w.o_b,
            table: w.table,
        }
    }
}

impl ClassicalProcess {
    /// `alphabets = [i_A, i_B, o_A, o_B]`.
    pub fn new(alphabets: [usize; 4], table: Vec<f64>) -> Result<Self> {
        let [i_a, i_b, o_a, o_b] = alphabets;
        if alphabets.contains(&0) {
            return Err(crate::error::schema("alphabets", "every alphabet needs a symbol"));
        }
        if table.len() != i_a * i_b * o_a * o_b {
            return Err(crate::error::schema(
                "table",
                &format!("expected {} entries, found {}", i_a * i_b * o_a * o_b, table.len()),
            ));
        }
        if let Some(v) = table.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Positivity(format!("process table entry {v} is negative")));
        }
        let w = ClassicalProcess {
            i_a,
            i_b,
            o_a,
            o_b,
            table,
        };
        for a in 0..o_a {
            for b in 0..o_b {
                let s: f64 = (0..i_a)
                    .flat_map(|x| (0..i_b).map(move |y| (x, y)))
                    .map(|(x, y)| w.get(x, y, a, b))
                    .sum();
                if (s - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::Distribution(format!(
                        "Σ w(·,·|{a},{b}) = {s}, expected 1"
                    )));
                }
            }
        }
        Ok(w)
    }

    pub fn from_fn(alphabets: [usize; 4], f: impl Fn(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let [i_a, i_b, o_a, o_b] = alphabets;
        let mut table = Vec::with_capacity(i_a * i_b * o_a * o_b);
        for b in 0..o_b {
            for a in 0..o_a {
                for y in 0..i_b {
                    for x in 0..i_a {
                        table.push(f(x, y, a, b));
                    }
                }
            }
        }
        ClassicalProcess::new(alphabets, table)
    }

    /// `[i_A, i_B, o_A, o_B]`.
    pub fn alphabets(&self) -> [usize; 4] {
        [self.i_a, self.i_b, self.o_a, self.o_b]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn get(&self, i_a: usize, i_b: usize, o_a: usize, o_b: usize) -> f64 {
        self.table[i_a + self.i_a * (i_b + self.i_b * (o_a + self.o_a * o_b))]
    }

    /// The same table read as a wiring `p(i_A, i_B | o_A, o_B)`.
    pub fn to_cond_dist(&self) -> CondDist {
        CondDist::new(
            vec![self.i_a, self.i_b],
            vec![self.o_a, self.o_b],
            self.table.clone(),
        )
        .expect("a classical process is a conditional distribution")
    }

    pub fn mix(&self, q: f64, other: &ClassicalProcess) -> Result<ClassicalProcess> {
        if self.alphabets() != other.alphabets() {
            return Err(Error::Alphabet("mixed processes need equal alphabets".into()));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Precondition(format!("mixing weight {q} outside [0, 1]")));
        }
        let table = self
            .table
            .iter()
            .zip(&other.table)
            .map(|(x, y)| q * x + (1.0 - q) * y)
            .collect();
        ClassicalProcess::new(self.alphabets(), table)
    }

    /// `δ(i_A, 0)·δ(i_B, o_A)` with `o_B` ignored.
    pub fn copy_a_to_b(alphabets: [usize; 4]) -> Result<Self> {
        Self::from_fn(alphabets, |x, y, a, _| f64::from(x == 0 && y == a))
    }

    /// `δ(i_B, 0)·δ(i_A, o_B)` with `o_A` ignored.
    pub fn copy_b_to_a(alphabets: [usize; 4]) -> Result<Self> {
        Self::from_fn(alphabets, |x, y, _, b| f64::from(y == 0 && x == b))
    }

    /// `δ(i_A, o_B)·δ(i_B, o_A)` on `n`-symbol alphabets.
    pub fn loop_process(n: usize) -> Result<Self> {
        Self::from_fn([n; 4], |x, y, a, b| f64::from(x == b && y == a))
    }
}

/// Deterministic local strategies `o_A = f(i_A)`, `o_B = g(i_B)` and the
/// resulting normalization sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyWitness {
    pub f: Vec<usize>,
    pub g: Vec<usize>,
    pub sum: f64,
}

fn strategy_sum(w: &ClassicalProcess, f: &[usize], g: &[usize]) -> f64 {
    let mut s = 0.0;
    for (y, &b) in g.iter().enumerate() {
        for (x, &a) in f.iter().enumerate() {
            s += w.get(x, y, a, b);
        }
    }
    s
}

/// The strategy pair whose sum is farthest from 1, if any misses 1 by more
/// than [`NORMALIZATION_TOL`]. Every pair is enumerated.
pub fn find_violating_strategies(w: &ClassicalProcess) -> Option<StrategyWitness> {
    let fs = MixedRadix::new(vec![w.o_a; w.i_a]);
    let gs = MixedRadix::new(vec![w.o_b; w.i_b]);
    let mut worst: Option<StrategyWitness> = None;
    for f in fs.iter() {
        for g in gs.iter() {
            let sum = strategy_sum(w, &f, &g);
            let dev = (sum - 1.0).abs();
            if dev > NORMALIZATION_TOL && worst.as_ref().is_none_or(|x| dev > (x.sum - 1.0).abs()) {
                worst = Some(StrategyWitness { f: f.clone(), g, sum });
            }
        }
    }
    worst
}

pub fn validate_classical_process(w: &ClassicalProcess) -> bool {
    find_violating_strategies(w).is_none()
}

fn require_valid(w: &ClassicalProcess) -> Result<()> {
    match find_violating_strategies(w) {
        None => Ok(()),
        Some(s) => Err(Error::ProcessValidity(format!(
            "strategies f = {:?}, g = {:?} give total probability {}",
            s.f, s.g, s.sum
        ))),
    }
}

/// `Σ w(i_A,i_B,o_A,o_B) A_{o_A|i_A} ⊗ B_{o_B|i_B}`.
pub fn compose_via_classical_process(
    w: &ClassicalProcess,
    alice: &Instrument,
    bob: &Instrument,
) -> Result<CpMap> {
    require_valid(w)?;
    let spec = JointMapSpec::new(alice.clone(), bob.clone(), w.to_cond_dist())?;
    Ok(compose_ccstar(&spec)?.map)
}

/// `w = q·p_AB(i_A,i_B|o_A) + (1−q)·p_BA(i_A,i_B|o_B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalDecomposition {
    pub q: f64,
    pub p_ab: CondDist,
    pub p_ba: CondDist,
}

impl CausalDecomposition {
    pub fn recombine(&self) -> Result<ClassicalProcess> {
        let [i_a, i_b] = [self.p_ab.input_alphabets()[0], self.p_ab.input_alphabets()[1]];
        let o_a = self.p_ab.output_alphabets()[0];
        let o_b = self.p_ba.output_alphabets()[0];
        let table: Vec<f64> = (0..o_b)
            .flat_map(|b| (0..o_a).map(move |a| (a, b)))
            .flat_map(|(a, b)| {
                (0..i_b).flat_map(move |y| (0..i_a).map(move |x| (x, y, a, b)))
            })
            .map(|(x, y, a, b)| {
                self.q * self.p_ab.prob(&[x, y], &[a]) + (1.0 - self.q) * self.p_ba.prob(&[x, y], &[b])
            })
            .collect();
        // renormalize away rounding before the strict table check
        let mut table = table;
        let block = i_a * i_b;
        for chunk in table.chunks_mut(block) {
            let s: f64 = chunk.iter().sum();
            chunk.iter_mut().for_each(|v| *v /= s);
        }
        ClassicalProcess::new([i_a, i_b, o_a, o_b], table)
    }

    /// `max |q·p_AB + (1−q)·p_BA − w|`.
    pub fn recombination_error(&self, w: &ClassicalProcess) -> f64 {
        let [i_a, i_b, o_a, o_b] = w.alphabets();
        let mut err: f64 = 0.0;
        for b in 0..o_b {
            for a in 0..o_a {
                for y in 0..i_b {
                    for x in 0..i_a {
                        let v = self.q * self.p_ab.prob(&[x, y], &[a])
                            + (1.0 - self.q) * self.p_ba.prob(&[x, y], &[b]);
                        err = err.max((v - w.get(x, y, a, b)).abs());
                    }
                }
            }
        }
        err
    }
}

/// Splits a valid process into A→B and B→A parts by LP feasibility over the
/// unnormalized parts `r₁(i_A,i_B,o_A)` and `r₂(i_A,i_B,o_B)`.
pub fn causal_decompose(w: &ClassicalProcess) -> Result<CausalDecomposition> {
    require_valid(w)?;
    let [i_a, i_b, o_a, o_b] = w.alphabets();
    let r1 = |x: usize, y: usize, a: usize| x + i_a * (y + i_b * a);
    let n1 = i_a * i_b * o_a;
    let r2 = |x: usize, y: usize, b: usize| n1 + x + i_a * (y + i_b * b);
    let n = n1 + i_a * i_b * o_b;

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for b in 0..o_b {
        for a in 0..o_a {
            for y in 0..i_b {
                for x in 0..i_a {
                    let mut row = vec![0.0; n];
                    row[r1(x, y, a)] = 1.0;
                    row[r2(x, y, b)] = 1.0;
                    rows.push(row);
                    rhs.push(w.get(x, y, a, b));
                }
            }
        }
    }
    // Σ_{i_B} r₁(i_A,i_B,o_A) does not depend on o_A
    for a in 1..o_a {
        for x in 0..i_a {
            let mut row = vec![0.0; n];
            for y in 0..i_b {
                row[r1(x, y, a)] += 1.0;
                row[r1(x, y, 0)] -= 1.0;
            }
            rows.push(row);
            rhs.push(0.0);
        }
    }
    for b in 1..o_b {
        for y in 0..i_b {
            let mut row = vec![0.0; n];
            for x in 0..i_a {
                row[r2(x, y, b)] += 1.0;
                row[r2(x, y, 0)] -= 1.0;
            }
            rows.push(row);
            rhs.push(0.0);
        }
    }
    let sol = phase_one(&rows, &rhs)?;
    if !sol.is_feasible() {
        return Err(Error::Infeasible {
            residual: sol.residual,
        });
    }

    let mass = |base: usize, outs: usize| -> f64 {
        let block = i_a * i_b;
        (0..outs)
            .map(|o| sol.x[base + o * block..base + (o + 1) * block].iter().sum::<f64>())
            .sum::<f64>()
            / outs as f64
    };
    let m1 = mass(0, o_a);
    let m2 = mass(n1, o_b);
    let mut q = (m1 / (m1 + m2)).clamp(0.0, 1.0);
    if q <= ZERO_MASS {
        q = 0.0;
    } else if q >= 1.0 - ZERO_MASS {
        q = 1.0;
    }
    let component = |base: usize, outs: usize, weight: f64| -> Result<CondDist> {
        let block = i_a * i_b;
        let mut table = Vec::with_capacity(block * outs);
        for o in 0..outs {
            let col = &sol.x[base + o * block..base + (o + 1) * block];
            let s: f64 = col.iter().sum();
            if weight == 0.0 || s <= ZERO_MASS {
                table.extend(std::iter::repeat_n(1.0 / block as f64, block));
            } else {
                table.extend(col.iter().map(|v| v / s));
            }
        }
        CondDist::new(vec![i_a, i_b], vec![outs], table)
    };
    let dec = CausalDecomposition {
        q,
        p_ab: component(0, o_a, q)?,
        p_ba: component(n1, o_b, 1.0 - q)?,
    };
    let err = dec.recombination_error(w);
    if err > RECOMBINATION_TOL {
        return Err(Error::Infeasible { residual: err });
    }
    Ok(dec)
}

/// The two one-way protocols of a causal decomposition and their weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneWayMixture {
    pub q: f64,
    pub a_to_b: LoccProtocol,
    pub b_to_a: LoccProtocol,
}

impl OneWayMixture {
    /// `q·M_{A→B} + (1−q)·M_{B→A}`.
    pub fn compose(&self) -> Result<CpMap> {
        let first = compose_locc_protocol(&self.a_to_b)?;
        let second = compose_locc_protocol(&self.b_to_a)?;
        let mut acc = KrausSum::new(first.in_dim(), first.out_dim());
        if self.q > 0.0 {
            acc.add(&first, self.q)?;
        }
        if self.q < 1.0 {
            acc.add(&second, 1.0 - self.q)?;
        }
        Ok(acc.finish())
    }
}

/// One-way protocol for a component `p(i_s, i_r | o_s)` in which the
/// sender measures first. The sender announces `(i_s, o_s)`; the receiver
/// draws `i_r` from `p'(i_r | o_s, i_s)` and sums its outcomes.
fn one_way_protocol(
    sender: Party,
    p: &CondDist,
    send: &Instrument,
    recv: &Instrument,
    local_dims: [usize; 2],
) -> Result<LoccProtocol> {
    let (n_s, n_r) = match sender {
        Party::A => (p.input_alphabets()[0], p.input_alphabets()[1]),
        Party::B => (p.input_alphabets()[1], p.input_alphabets()[0]),
    };
    let n_o = p.output_alphabets()[0];
    let joint = |s: usize, r: usize, o: usize| match sender {
        Party::A => p.prob(&[s, r], &[o]),
        Party::B => p.prob(&[r, s], &[o]),
    };
    // p(i_s) averaged over o_s, which it does not depend on
    let marginal: Vec<f64> = (0..n_s)
        .map(|s| {
            (0..n_o)
                .map(|o| (0..n_r).map(|r| joint(s, r, o)).sum::<f64>())
                .sum::<f64>()
                / n_o as f64
        })
        .collect();
    let mut first = Vec::new();
    for s in 0..n_s {
        if marginal[s] <= ZERO_MASS {
            continue;
        }
        for (o, m) in send.outcomes(s) {
            first.push((0, s + n_s * o, m.scaled(marginal[s])));
        }
    }
    let first = Instrument::new(1, n_s * n_o, send.in_dim(), send.out_dim(), first)?;
    let mut second = Vec::new();
    for o in 0..n_o {
        for s in 0..n_s {
            let weights: Vec<f64> = (0..n_r).map(|r| joint(s, r, o)).collect();
            let total: f64 = weights.iter().sum();
            let mut acc = KrausSum::new(recv.in_dim(), recv.out_dim());
            for (r, wr) in weights.iter().enumerate() {
                let pr = if marginal[s] <= ZERO_MASS || total <= ZERO_MASS {
                    1.0 / n_r as f64
                } else {
                    wr / total
                };
                if pr > 0.0 {
                    acc.add(&recv.channel(r), pr)?;
                }
            }
            second.push((s + n_s * o, 0, acc.finish()));
        }
    }
    let second = Instrument::new(n_s * n_o, 1, recv.in_dim(), recv.out_dim(), second)?;
    let receiver = match sender {
        Party::A => Party::B,
        Party::B => Party::A,
    };
    LoccProtocol::new(
        local_dims,
        vec![
            Round {
                party: sender,
                instrument: first,
            },
            Round {
                party: receiver,
                instrument: second,
            },
        ],
    )
}

/// Packages each component of a decomposition as one-way LOCC.
pub fn extract_one_way_mixture(
    dec: &CausalDecomposition,
    alice: &Instrument,
    bob: &Instrument,
) -> Result<OneWayMixture> {
    let ins = dec.p_ab.input_alphabets();
    if alice.in_alphabet() != ins[0]
        || bob.in_alphabet() != ins[1]
        || alice.out_alphabet() != dec.p_ab.output_alphabets()[0]
        || bob.out_alphabet() != dec.p_ba.output_alphabets()[0]
    {
        return Err(Error::Alphabet("instruments do not match the decomposition".into()));
    }
    let dims = [alice.in_dim(), bob.in_dim()];
    Ok(OneWayMixture {
        q: dec.q,
        a_to_b: one_way_protocol(Party::A, &dec.p_ab, alice, bob, dims)?,
        b_to_a: one_way_protocol(Party::B, &dec.p_ba, bob, alice, dims)?,
    })
}

/// Diagonal `W` on `I_A ⊗ O_A ⊗ I_B ⊗ O_B` (leftmost factor most significant).
pub fn embed_diagonal(w: &ClassicalProcess) -> ComplexMatrix {
    let [i_a, i_b, o_a, o_b] = w.alphabets();
    let mut diag = vec![C64::new(0.0, 0.0); i_a * o_a * i_b * o_b];
    for x in 0..i_a {
        for a in 0..o_a {
            for y in 0..i_b {
                for b in 0..o_b {
                    diag[((x * o_a + a) * i_b + y) * o_b + b] = C64::new(w.get(x, y, a, b), 0.0);
                }
            }
        }
    }
    ComplexMatrix::diagonal(&diag)
}

/// Reads the diagonal of `W`; off-diagonal entries above `tol` are rejected.
pub fn extract_diagonal(m: &ComplexMatrix, alphabets: [usize; 4], tol: f64) -> Result<ClassicalProcess> {
    let [i_a, i_b, o_a, o_b] = alphabets;
    let d = i_a * o_a * i_b * o_b;
    if m.shape() != (d, d) {
        return Err(Error::Dimension(format!("W is {:?}, expected {d}×{d}", m.shape())));
    }
    for r in 0..d {
        for c in 0..d {
            if r != c && m[(r, c)].norm() > tol {
                return Err(Error::Precondition(format!("W has off-diagonal entry at ({r}, {c})")));
            }
        }
    }
    ClassicalProcess::from_fn(alphabets, |x, y, a, b| m[(((x * o_a + a) * i_b + y) * o_b + b, ((x * o_a + a) * i_b + y) * o_b + b)].re)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Random,
    Structured,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub kind: ProbeKind,
    pub alice: usize,
    pub bob: usize,
    pub value: f64,
    pub deviation: f64,
}

/// Outcome of [`probe_quantum_process`]. Passing is necessary, not sufficient,
/// for `W` to be a valid process matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub dims: [usize; 4],
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub probes: Vec<ProbeRecord>,
}

/// Every deterministic measure-and-prepare map `|i⟩ ↦ |f(i)⟩`; with a
/// one-symbol input these are the trace-and-replace maps onto basis states.
fn structured_probes(d_in: usize, d_out: usize) -> Vec<CpMap> {
    MixedRadix::new(vec![d_out; d_in])
        .iter()
        .map(|f| CpMap::classical_function(d_in, d_out, &f))
        .collect()
}

/// Contracts the Alice factor: `V[(r_B, c_B)] = Σ W[(r_A r_B),(c_A c_B)] X^T[r_A... ]`
/// so that `tr[W (X^T ⊗ Y^T)] = Σ V[r_B,c_B] Y[r_B,c_B]`.
fn contract_alice(w: &ComplexMatrix, x: &ComplexMatrix, db: usize) -> Vec<C64> {
    let da = x.rows();
    let mut v = vec![C64::new(0.0, 0.0); db * db];
    for ra in 0..da {
        for ca in 0..da {
            // (X^T)[ca, ra] pairs with W[(ra rb),(ca cb)]
            let xv = x[(ra, ca)];
            if xv == C64::new(0.0, 0.0) {
                continue;
            }
            for rb in 0..db {
                for cb in 0..db {
                    v[rb * db + cb] += w[(ra * db + rb, ca * db + cb)] * xv;
                }
            }
        }
    }
    v
}

fn pair_value(v: &[C64], y: &ComplexMatrix) -> C64 {
    let db = y.rows();
    let mut s = C64::new(0.0, 0.0);
    for rb in 0..db {
        for cb in 0..db {
            s += v[rb * db + cb] * y[(rb, cb)];
        }
    }
    s
}

/// Evaluates `tr[W (M_A^T ⊗ M_B^T)]` on `probes` random CPTP pairs and on
/// every pair of deterministic measure-and-prepare maps.
pub fn probe_quantum_process(
    w: &ComplexMatrix,
    dims: [usize; 4],
    probes: usize,
    seed: u64,
    tol: f64,
) -> Result<ProbeReport> {
    let [i_a, o_a, i_b, o_b] = dims;
    let (da, db) = (i_a * o_a, i_b * o_b);
    if w.shape() != (da * db, da * db) {
        return Err(Error::Dimension(format!(
            "W is {:?}, expected {}×{}",
            w.shape(),
            da * db,
            da * db
        )));
    }
    let eig = hermitian_eigen(w, tol)?;
    if eig.min() < -tol {
        return Err(Error::Positivity(format!(
            "W has eigenvalue {:.3e}",
            eig.min()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut push = |kind, alice, bob, value: C64| {
        records.push(ProbeRecord {
            kind,
            alice,
            bob,
            value: value.re,
            deviation: (value - C64::new(1.0, 0.0)).norm(),
        });
    };
    for k in 0..probes {
        let ka = rng.random_range(1..=i_a * o_a);
        let kb = rng.random_range(1..=i_b * o_b);
        let ma = choi_of(&random_cptp_with(&mut rng, i_a, o_a, ka)?).matrix;
        let mb = choi_of(&random_cptp_with(&mut rng, i_b, o_b, kb)?).matrix;
        let v = contract_alice(w, &ma, db);
        push(ProbeKind::Random, k, k, pair_value(&v, &mb));
    }
    let alice_set: Vec<ComplexMatrix> = structured_probes(i_a, o_a).iter().map(|m| choi_of(m).matrix).collect();
    let bob_set: Vec<ComplexMatrix> = structured_probes(i_b, o_b).iter().map(|m| choi_of(m).matrix).collect();
    for (ka, ma) in alice_set.iter().enumerate() {
        let v = contract_alice(w, ma, db);
        for (kb, mb) in bob_set.iter().enumerate() {
            push(ProbeKind::Structured, ka, kb, pair_value(&v, mb));
        }
    }
    let max_deviation = records.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(ProbeReport {
        dims,
        max_deviation,
        tolerance: tol,
        pass: max_deviation <= tol,
        probes: records,
    })
}

/// `p(i_A)·p'(i_B | i_A, o_A)` with random factors.
pub fn random_one_way_process(rng: &mut impl Rng, alphabets: [usize; 4], sender: Party) -> Result<ClassicalProcess> {
    let [i_a, i_b, o_a, o_b] = alphabets;
    let (n_s, n_r, n_o) = match sender {
        Party::A => (i_a, i_b, o_a),
        Party::B => (i_b, i_a, o_b),
    };
    let first = random_distribution(rng, n_s);
    let second: Vec<Vec<f64>> = (0..n_s * n_o).map(|_| random_distribution(rng, n_r)).collect();
    ClassicalProcess::from_fn(alphabets, |x, y, a, b| match sender {
        Party::A => first[x] * second[x + n_s * a][y],
        Party::B => first[y] * second[y + n_s * b][x],
    })
}

/// A random mixture of an A→B and a B→A process.
pub fn random_valid_process(rng: &mut impl Rng, alphabets: [usize; 4]) -> Result<ClassicalProcess> {
    let ab = random_one_way_process(rng, alphabets, Party::A)?;
    let ba = random_one_way_process(rng, alphabets, Party::B)?;
    ab.mix(rng.random_range(0.0..=1.0), &ba)
}

/// A random conditional table that fails validation. Alphabets of at
/// least two symbols on both output sides are required.
pub fn random_invalid_process(rng: &mut impl Rng, alphabets: [usize; 4]) -> Result<ClassicalProcess> {
    let [i_a, i_b, o_a, o_b] = alphabets;
    if i_a * i_b < 2 || o_a * o_b < 2 {
        return Err(Error::Precondition("trivial alphabets admit only valid processes".into()));
    }
    for _ in 0..64 {
        let cols: Vec<Vec<f64>> = (0..o_a * o_b).map(|_| random_distribution(rng, i_a * i_b)).collect();
        let w = ClassicalProcess::new(alphabets, cols.concat())?;
        if !validate_classical_process(&w) {
            return Ok(w);
        }
    }
    Err(Error::Precondition("no invalid process found".into()))
}
