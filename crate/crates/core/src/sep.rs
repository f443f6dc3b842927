//! Separable maps, the SEP → loop-instrument compiler and the nine-state example.

use serde::{Deserialize, Serialize};

use crate::channels::{
    complementary_map, is_trace_nonincreasing, validate_instrument, CpMap, Instrument, KrausSum,
};
use crate::composition::compose_loop;
use crate::error::{schema, Error, Result};
use crate::numerics::{distance, tensor_product, ComplexMatrix, C64, DEFAULT_TOL, ONE, ZERO};

/// `Σ_k E^A_k ⊗ E^B_k` with CP factors.
#[derive(Clone, Debug, PartialEq)]
pub struct SepMap {
    terms: Vec<(CpMap, CpMap)>,
}

#[derive(Serialize, Deserialize)]
struct RawTerm {
    alice: CpMap,
    bob: CpMap,
}

#[derive(Serialize, Deserialize)]
struct RawSep {
    terms: Vec<RawTerm>,
}

impl Serialize for SepMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawSep {
            terms: self
                .terms
                .iter()
                .map(|(a, b)| RawTerm {
                    alice: a.clone(),
                    bob: b.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SepMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSep::deserialize(d)?;
        SepMap::new(raw.terms.into_iter().map(|t| (t.alice, t.bob)).collect())
            .map_err(serde::de::Error::custom)
    }
}

impl SepMap {
    pub fn new(terms: Vec<(CpMap, CpMap)>) -> Result<Self> {
        let (a0, b0) = terms
            .first()
            .ok_or_else(|| schema("terms", "a separable map needs at least one term"))?;
        let dims = (a0.in_dim(), a0.out_dim(), b0.in_dim(), b0.out_dim());
        for (k, (a, b)) in terms.iter().enumerate() {
            if (a.in_dim(), a.out_dim(), b.in_dim(), b.out_dim()) != dims {
                return Err(Error::Dimension(format!(
                    "term {k} has local dims {}->{} / {}->{}, term 0 has {}->{} / {}->{}",
                    a.in_dim(),
                    a.out_dim(),
                    b.in_dim(),
                    b.out_dim(),
                    dims.0,
                    dims.1,
                    dims.2,
                    dims.3
                )));
            }
        }
        Ok(SepMap { terms })
    }

    pub fn terms(&self) -> &[(CpMap, CpMap)] {
        &self.terms
    }

    /// `(alice_in, alice_out, bob_in, bob_out)`.
    pub fn local_dims(&self) -> (usize, usize, usize, usize) {
        let (a, b) = &self.terms[0];
        (a.in_dim(), a.out_dim(), b.in_dim(), b.out_dim())
    }

    pub fn joint_map(&self) -> CpMap {
        let (ai, ao, bi, bo) = self.local_dims();
        let mut acc = KrausSum::new(ai * bi, ao * bo);
        for (a, b) in &self.terms {
            acc.add(&a.tensor(b), 1.0).expect("dims checked at construction");
        }
        acc.finish()
    }

    /// `‖Σ_k G(E^A_k) ⊗ G(E^B_k) − 𝕀‖_F` where `G` is the Kraus Gram operator.
    pub fn tp_defect(&self) -> f64 {
        let (ai, _, bi, _) = self.local_dims();
        let mut g = ComplexMatrix::zeros(ai * bi, ai * bi);
        for (a, b) in &self.terms {
            g += &tensor_product(&a.gram(), &b.gram());
        }
        (&g - &ComplexMatrix::identity(ai * bi)).frobenius_norm()
    }
}

/// True iff the summed map is TP within `tol`. Factors in Kraus form are CP.
pub fn validate_sep(m: &SepMap, tol: f64) -> bool {
    m.tp_defect() <= tol
}

/// Rescales factor pairs so both factors are trace non-increasing.
///
/// Each pair is first rescaled by `c = max(1, ‖G(E^A)‖)`; if the Bob factor is
/// then trace increasing, the pair is split into `⌈‖G(E^B)‖⌉` equal copies.
pub fn normalize_terms(terms: &[(CpMap, CpMap)]) -> Result<Vec<(CpMap, CpMap)>> {
    let mut out = Vec::new();
    for (k, (a, b)) in terms.iter().enumerate() {
        if a.is_zero() || b.is_zero() {
            continue;
        }
        let na = a.trace_gain();
        if !na.is_finite() {
            return Err(Error::Scaling(format!("term {k}: Alice factor has no finite norm")));
        }
        let c = na.max(1.0);
        let (a, b) = (a.scaled(1.0 / c), b.scaled(c));
        let nb = b.trace_gain();
        if !nb.is_finite() {
            return Err(Error::Scaling(format!("term {k}: Bob factor has no finite norm")));
        }
        if is_trace_nonincreasing(&b, DEFAULT_TOL) {
            out.push((a, b));
        } else {
            let copies = (nb - 1e-9).ceil().max(1.0) as usize;
            let b = b.scaled(1.0 / copies as f64);
            if !is_trace_nonincreasing(&b, DEFAULT_TOL) {
                return Err(Error::Scaling(format!("term {k}: Bob factor cannot be normalized")));
            }
            out.extend(std::iter::repeat_n((a, b), copies));
        }
    }
    if out.is_empty() {
        return Err(Error::Scaling("every term is zero".into()));
    }
    Ok(out)
}

/// Builds the loop-wired instrument pair over alphabets of size `K+2` whose
/// loop composition is `Σ_k E^A_k ⊗ E^B_k`. All factors must be trace
/// non-increasing.
///
/// Symbols `0..K` carry the terms, `K` and `K+1` are the padding symbols.
pub fn loop_pair_from_terms(terms: &[(CpMap, CpMap)]) -> Result<(Instrument, Instrument)> {
    let (a0, b0) = terms
        .first()
        .ok_or_else(|| Error::Precondition("no terms".into()))?;
    let (ai, ao, bi, bo) = (a0.in_dim(), a0.out_dim(), b0.in_dim(), b0.out_dim());
    let k_count = terms.len();
    let (pad1, pad2) = (k_count, k_count + 1);
    let pad_a = CpMap::replace_with_maximally_mixed(ai, ao);
    let pad_b = CpMap::replace_with_maximally_mixed(bi, bo);

    let mut alice = Vec::with_capacity(2 * k_count + 2);
    let mut bob = Vec::with_capacity(2 * k_count + 2);
    for (k, (ea, eb)) in terms.iter().enumerate() {
        let ca = complementary_map(ea, DEFAULT_TOL)
            .map_err(|_| Error::Scaling(format!("term {k}: Alice factor is trace increasing")))?;
        let cb = complementary_map(eb, DEFAULT_TOL)
            .map_err(|_| Error::Scaling(format!("term {k}: Bob factor is trace increasing")))?;
        // (input, output, element)
        alice.push((k, k, ea.clone()));
        alice.push((k, pad1, ca));
        bob.push((k, k, eb.clone()));
        bob.push((k, pad1, cb));
    }
    alice.push((pad1, pad1, pad_a.clone()));
    alice.push((pad2, pad2, pad_a));
    bob.push((pad2, pad1, pad_b.clone()));
    bob.push((pad1, pad2, pad_b));
    let n = k_count + 2;
    Ok((
        Instrument::new(n, n, ai, ao, alice)?,
        Instrument::new(n, n, bi, bo, bob)?,
    ))
}

/// Compiles a separable CPTP map into a loop-wired instrument pair.
pub fn sep_to_locc_star(m: &SepMap, tol: f64) -> Result<(Instrument, Instrument)> {
    if !validate_sep(m, tol) {
        return Err(Error::Precondition(format!(
            "separable map is not trace preserving (defect {:.3e})",
            m.tp_defect()
        )));
    }
    loop_pair_from_terms(&normalize_terms(m.terms())?)
}

/// Flattens a TP loop pair into product terms `A_{a|b} ⊗ B_{b|a}`, dropping zeros.
pub fn locc_star_to_sep(alice: &Instrument, bob: &Instrument, tol: f64) -> Result<SepMap> {
    let joint = compose_loop(alice, bob)?;
    if !joint.is_trace_preserving(tol) {
        return Err(Error::Membership(format!(
            "loop composition has TP defect {:.3e}",
            joint.tp_defect
        )));
    }
    let terms = alice
        .iter()
        .filter_map(|(b, a, ea)| bob.get(a, b).map(|eb| (ea.clone(), eb.clone())))
        .collect();
    SepMap::new(terms)
}

const LABELS: usize = 9;

fn basis3(expr: &str) -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let r = |x: f64| C64::new(x, 0.0);
    match expr {
        "0" => vec![ONE, ZERO, ZERO],
        "1" => vec![ZERO, ONE, ZERO],
        "2" => vec![ZERO, ZERO, ONE],
        "0+1" => vec![r(s), r(s), ZERO],
        "0-1" => vec![r(s), r(-s), ZERO],
        "1+2" => vec![ZERO, r(s), r(s)],
        "1-2" => vec![ZERO, r(s), r(-s)],
        _ => unreachable!("unknown basis label {expr}"),
    }
}

/// `|label⟩⟨v|` from the 3-dim input to the 9-dim output, `label` 1-based.
fn labelled_kraus(label: usize, bra: &str) -> ComplexMatrix {
    let v = basis3(bra);
    let mut k = ComplexMatrix::zeros(LABELS, 3);
    for (c, z) in v.iter().enumerate() {
        k[(label - 1, c)] = z.conj();
    }
    k
}

// Rows are the emitted symbol, columns the received symbol, both 1-based in
// the table and 0-based in the instruments.
const ALICE_TABLE: [[(usize, &str); 3]; 3] = [
    [(1, "0"), (2, "0"), (3, "0+1")],
    [(8, "1-2"), (9, "1"), (4, "0-1")],
    [(7, "1+2"), (6, "2"), (5, "2")],
];

// Rows are Alice's symbol a (Bob's input), columns Bob's output b.
const BOB_TABLE: [[(usize, &str); 3]; 3] = [
    [(1, "0+1"), (2, "0-1"), (3, "2")],
    [(8, "0"), (9, "1"), (4, "2")],
    [(7, "0"), (6, "1-2"), (5, "1+2")],
];

const STATES: [(&str, &str); 9] = [
    ("0", "0+1"),
    ("0", "0-1"),
    ("0+1", "2"),
    ("0-1", "2"),
    ("2", "1+2"),
    ("2", "1-2"),
    ("1+2", "0"),
    ("1-2", "0"),
    ("1", "1"),
];

/// The nine orthogonal product states and the two loop instruments that map
/// `|ψ_k⟩` to `|k⟩|k⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NineStateFixture {
    /// Projectors `|ψ_k⟩⟨ψ_k|` on 3⊗3, `k = 1..9` stored at index `k−1`.
    pub states: Vec<ComplexMatrix>,
    pub alice: Instrument,
    pub bob: Instrument,
}

fn product_vector(a: &str, b: &str) -> Vec<C64> {
    let (va, vb) = (basis3(a), basis3(b));
    va.iter()
        .flat_map(|x| vb.iter().map(move |y| x * y))
        .collect()
}

pub fn nine_state_fixture() -> NineStateFixture {
    let states = STATES
        .iter()
        .map(|(a, b)| ComplexMatrix::projector(&product_vector(a, b)))
        .collect();
    let mut alice = Vec::new();
    let mut bob = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            let (la, ka) = ALICE_TABLE[a][b];
            alice.push((b, a, CpMap::from_operator(labelled_kraus(la, ka))));
            let (lb, kb) = BOB_TABLE[a][b];
            bob.push((a, b, CpMap::from_operator(labelled_kraus(lb, kb))));
        }
    }
    NineStateFixture {
        states,
        alice: Instrument::new(3, 3, 3, LABELS, alice).expect("well-formed table"),
        bob: Instrument::new(3, 3, 3, LABELS, bob).expect("well-formed table"),
    }
}

/// The discriminator as a separable map `Σ_k |k⟩⟨α_k| ⊗ |k⟩⟨β_k|` with
/// `|ψ_k⟩ = |α_k⟩|β_k⟩`.
pub fn nine_state_sep() -> SepMap {
    let terms = STATES
        .iter()
        .enumerate()
        .map(|(k, (a, b))| {
            (
                CpMap::from_operator(labelled_kraus(k + 1, a)),
                CpMap::from_operator(labelled_kraus(k + 1, b)),
            )
        })
        .collect();
    SepMap::new(terms).expect("consistent dims")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    /// 1-based state label.
    pub state: usize,
    /// Probability that both local readouts report `state`.
    pub output_fidelity: f64,
    /// Frobenius distance between the output and `|k⟩⟨k| ⊗ |k⟩⟨k|`.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NineStateReport {
    pub pass: bool,
    pub tolerance: f64,
    pub alice_tp_defect: f64,
    pub bob_tp_defect: f64,
    pub joint_tp_defect: f64,
    pub states: Vec<StateRecord>,
}

/// Runs the loop-composed discriminator on all nine states.
pub fn nine_state_report(tol: f64) -> Result<NineStateReport> {
    let fx = nine_state_fixture();
    let joint = compose_loop(&fx.alice, &fx.bob)?;
    let mut records = Vec::with_capacity(LABELS);
    for (k, psi) in fx.states.iter().enumerate() {
        let out = joint.map.apply(psi)?;
        let idx = k * LABELS + k;
        let target = ComplexMatrix::ket_bra(LABELS * LABELS, LABELS * LABELS, idx, idx);
        records.push(StateRecord {
            state: k + 1,
            output_fidelity: out[(idx, idx)].re,
            distance: distance(&out, &target)?,
        });
    }
    let alice_tp_defect = fx.alice.tp_defect();
    let bob_tp_defect = fx.bob.tp_defect();
    let pass = records.iter().all(|r| r.distance <= tol)
        && validate_instrument(&fx.alice, tol)
        && validate_instrument(&fx.bob, tol)
        && joint.is_trace_preserving(tol);
    Ok(NineStateReport {
        pass,
        tolerance: tol,
        alice_tp_defect,
        bob_tp_defect,
        joint_tp_defect: joint.tp_defect,
        states: records,
    })
}

/// Like [`nine_state_report`] but fails with the per-state distances when any
/// check exceeds `tol`.
pub fn verify_nine_state_discrimination(tol: f64) -> Result<NineStateReport> {
    let report = nine_state_report(tol)?;
    if report.pass {
        Ok(report)
    } else {
        let d: Vec<String> = report
            .states
            .iter()
            .map(|r| format!("{}:{:.3e}", r.state, r.distance))
            .collect();
        Err(Error::Verification(format!(
            "nine-state discrimination off by [{}]",
            d.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{choi_of, is_trace_preserving, random_cptp};
    use crate::composition::compose_ccstar;
    use crate::composition::JointMapSpec;

    fn choi_distance(a: &CpMap, b: &CpMap) -> f64 {
        choi_of(a).distance(&choi_of(b)).unwrap()
    }

    #[test]
    fn nine_states_are_orthonormal() {
        for (j, (aj, bj)) in STATES.iter().enumerate() {
            for (k, (ak, bk)) in STATES.iter().enumerate() {
                let (u, v) = (product_vector(aj, bj), product_vector(ak, bk));
                let ip: C64 = u.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((ip - C64::new(expected, 0.0)).norm() < 1e-15, "({j},{k})");
            }
        }
    }

    #[test]
    fn table_instruments_validate() {
        let fx = nine_state_fixture();
        assert!(validate_instrument(&fx.alice, 1e-12));
        assert!(validate_instrument(&fx.bob, 1e-12));
        // column b=1 of Alice's table
        let col: Vec<_> = fx.alice.outcomes(0).collect();
        assert_eq!(col.len(), 3);
        let mut g = ComplexMatrix::zeros(3, 3);
        for (_, m) in col {
            assert_eq!(m.kraus().len(), 1);
            g += &m.gram();
        }
        assert!(distance(&g, &ComplexMatrix::identity(3)).unwrap() < 1e-15);
    }

    #[test]
    fn first_alice_kraus_moves_zero_to_label_one() {
        let fx = nine_state_fixture();
        let out = fx.alice.element(0, 0).apply(&ComplexMatrix::ket_bra(3, 3, 0, 0)).unwrap();
        assert!(distance(&out, &ComplexMatrix::ket_bra(9, 9, 0, 0)).unwrap() < 1e-15);
    }

    #[test]
    fn discrimination_is_perfect() {
        let report = verify_nine_state_discrimination(1e-9).unwrap();
        assert!(report.pass);
        for r in &report.states {
            assert!(r.distance <= 1e-9);
            assert!((r.output_fidelity - 1.0).abs() < 1e-12);
        }
        assert!(report.joint_tp_defect < 1e-12);
    }

    #[test]
    fn uniform_mixture_goes_to_uniform_labels() {
        let fx = nine_state_fixture();
        let joint = compose_loop(&fx.alice, &fx.bob).unwrap();
        let mut rho = ComplexMatrix::zeros(9, 9);
        for s in &fx.states {
            rho += &s.scale_real(1.0 / 9.0);
        }
        let out = joint.map.apply(&rho).unwrap();
        let mut expected = ComplexMatrix::zeros(81, 81);
        for k in 0..9 {
            expected[(10 * k, 10 * k)] = C64::new(1.0 / 9.0, 0.0);
        }
        assert!(distance(&out, &expected).unwrap() < 1e-12);
    }

    #[test]
    fn nine_state_sep_validates_and_matches_table() {
        let sep = nine_state_sep();
        assert!(validate_sep(&sep, 1e-12));
        let fx = nine_state_fixture();
        let joint = compose_loop(&fx.alice, &fx.bob).unwrap();
        assert!(choi_distance(&sep.joint_map(), &joint.map) < 1e-9);
        let flat = locc_star_to_sep(&fx.alice, &fx.bob, 1e-9).unwrap();
        assert_eq!(flat.terms().len(), 9);
        assert!(choi_distance(&flat.joint_map(), &joint.map) < 1e-9);
    }

    #[test]
    fn compiled_nine_state_discriminates() {
        let (a, b) = sep_to_locc_star(&nine_state_sep(), 1e-9).unwrap();
        assert!(validate_instrument(&a, 1e-9) && validate_instrument(&b, 1e-9));
        let joint = compose_loop(&a, &b).unwrap();
        let fx = nine_state_fixture();
        for (k, psi) in fx.states.iter().enumerate() {
            let out = joint.map.apply(psi).unwrap();
            let target = ComplexMatrix::ket_bra(81, 81, 10 * k, 10 * k);
            assert!(distance(&out, &target).unwrap() < 1e-9);
        }
    }

    #[test]
    fn validate_sep_cases() {
        let id = SepMap::new(vec![(CpMap::identity(2), CpMap::identity(3))]).unwrap();
        assert!(validate_sep(&id, 1e-12));
        let mut terms = nine_state_sep().terms().to_vec();
        terms[0].0 = terms[0].0.scaled(2.0);
        assert!(!validate_sep(&SepMap::new(terms).unwrap(), 1e-9));
        let bad = SepMap::new(vec![
            (CpMap::identity(2), CpMap::identity(2)),
            (CpMap::identity(3), CpMap::identity(2)),
        ]);
        assert!(matches!(bad, Err(Error::Dimension(_))));
    }

    #[test]
    fn single_product_term_compiles() {
        let a = random_cptp(2, 3, 2, 1).unwrap();
        let b = random_cptp(3, 2, 2, 2).unwrap();
        let sep = SepMap::new(vec![(a.clone(), b.clone())]).unwrap();
        let (la, lb) = sep_to_locc_star(&sep, 1e-9).unwrap();
        let joint = compose_loop(&la, &lb).unwrap();
        assert!(choi_distance(&joint.map, &a.tensor(&b)) < 1e-8);
        let flat = locc_star_to_sep(&la, &lb, 1e-9).unwrap();
        assert!(choi_distance(&flat.joint_map(), &a.tensor(&b)) < 1e-8);
    }

    #[test]
    fn product_instruments_flatten_to_one_term() {
        let a = Instrument::unconditioned(vec![random_cptp(2, 2, 2, 5).unwrap()]).unwrap();
        let b = Instrument::unconditioned(vec![random_cptp(2, 2, 2, 6).unwrap()]).unwrap();
        let sep = locc_star_to_sep(&a, &b, 1e-9).unwrap();
        assert_eq!(sep.terms().len(), 1);
    }

    #[test]
    fn unbalanced_factors_are_rebalanced() {
        // a TP measure-and-prepare map split with mismatched weights
        let p = |k: usize| CpMap::from_operator(ComplexMatrix::ket_bra(2, 2, k, k));
        let sep = SepMap::new(vec![
            (p(0).scaled(4.0), CpMap::identity(2).scaled(0.25)),
            (p(1).scaled(0.1), CpMap::identity(2).scaled(10.0)),
        ])
        .unwrap();
        assert!(validate_sep(&sep, 1e-12));
        let (a, b) = sep_to_locc_star(&sep, 1e-9).unwrap();
        assert!(validate_instrument(&a, 1e-9) && validate_instrument(&b, 1e-9));
        let joint = compose_loop(&a, &b).unwrap();
        assert!(choi_distance(&joint.map, &sep.joint_map()) < 1e-8);
        assert!(is_trace_preserving(&joint.map, 1e-9));
    }

    #[test]
    fn loop_pair_agrees_with_ccstar() {
        let (a, b) = sep_to_locc_star(&nine_state_sep(), 1e-9).unwrap();
        let spec = JointMapSpec::looped(a.clone(), b.clone()).unwrap();
        let cc = compose_ccstar(&spec).unwrap();
        let lp = compose_loop(&a, &b).unwrap();
        assert!(choi_distance(&cc.map, &lp.map) < 1e-9);
    }

    #[test]
    fn non_tp_loop_is_rejected() {
        let a = Instrument::unconditioned(vec![CpMap::identity(2).scaled(0.5)]).unwrap();
        let b = Instrument::unconditioned(vec![CpMap::identity(2)]).unwrap();
        assert!(matches!(locc_star_to_sep(&a, &b, 1e-9), Err(Error::Membership(_))));
    }

    #[test]
    fn sep_json_roundtrip() {
        let sep = nine_state_sep();
        let s = serde_json::to_string(&sep).unwrap();
        assert_eq!(serde_json::from_str::<SepMap>(&s).unwrap(), sep);
    }
}
