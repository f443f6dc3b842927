//! Completely positive maps, quantum instruments and the Choi representation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{schema, Error, Result};
use crate::numerics::{
    hermitian_eigen, is_positive_semidefinite, partial_trace, psd_sqrt, tensor_product,
    ComplexMatrix, DimProfile, C64, DEFAULT_TOL, ZERO,
};

/// A completely positive map in Kraus form.
///
/// An empty Kraus list is the zero map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCpMap", into = "RawCpMap")]
pub struct CpMap {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<ComplexMatrix>,
}

#[derive(Serialize, Deserialize)]
struct RawCpMap {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<ComplexMatrix>,
}

impl TryFrom<RawCpMap> for CpMap {
    type Error = Error;

    fn try_from(raw: RawCpMap) -> Result<Self> {
        CpMap::new(raw.in_dim, raw.out_dim, raw.kraus)
    }
}

impl From<CpMap> for RawCpMap {
    fn from(m: CpMap) -> Self {
        RawCpMap {
            in_dim: m.in_dim,
            out_dim: m.out_dim,
            kraus: m.kraus,
        }
    }
}

impl CpMap {
    pub fn new(in_dim: usize, out_dim: usize, kraus: Vec<ComplexMatrix>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(schema("in_dim/out_dim", "dimensions must be positive"));
        }
        if let Some((idx, k)) = kraus
            .iter()
            .enumerate()
            .find(|(_, k)| k.shape() != (out_dim, in_dim))
        {
            return Err(schema(
                "kraus",
                format!(
                    "operator {idx} is {}x{}, expected {out_dim}x{in_dim}",
                    k.rows(),
                    k.cols()
                ),
            ));
        }
        Ok(CpMap {
            in_dim,
            out_dim,
            kraus,
        })
    }

    pub fn zero(in_dim: usize, out_dim: usize) -> Self {
        CpMap {
            in_dim,
            out_dim,
            kraus: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        CpMap {
            in_dim: dim,
            out_dim: dim,
            kraus: vec![ComplexMatrix::identity(dim)],
        }
    }

    /// Single-Kraus map `ρ ↦ KρK†`.
    pub fn from_operator(k: ComplexMatrix) -> Self {
        CpMap {
            in_dim: k.cols(),
            out_dim: k.rows(),
            kraus: vec![k],
        }
    }

    /// `ρ ↦ tr(ρ)·𝕀/out_dim`.
    pub fn replace_with_maximally_mixed(in_dim: usize, out_dim: usize) -> Self {
        let w = (1.0 / out_dim as f64).sqrt();
        let kraus = (0..out_dim)
            .flat_map(|j| {
                (0..in_dim)
                    .map(move |m| ComplexMatrix::ket_bra(out_dim, in_dim, j, m).scale_real(w))
            })
            .collect();
        CpMap {
            in_dim,
            out_dim,
            kraus,
        }
    }

    /// `ρ ↦ tr(ρ)·|state⟩⟨state|` for a computational basis state.
    pub fn replace_with_basis_state(in_dim: usize, out_dim: usize, state: usize) -> Self {
        CpMap {
            in_dim,
            out_dim,
            kraus: (0..in_dim)
                .map(|m| ComplexMatrix::ket_bra(out_dim, in_dim, state, m))
                .collect(),
        }
    }

    /// Measure in the computational basis, then prepare `|f(i)⟩`.
    pub fn classical_function(in_dim: usize, out_dim: usize, f: &[usize]) -> Self {
        CpMap {
            in_dim,
            out_dim,
            kraus: (0..in_dim)
                .map(|i| ComplexMatrix::ket_bra(out_dim, in_dim, f[i], i))
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn is_zero(&self) -> bool {
        self.kraus.iter().all(ComplexMatrix::is_zero)
    }

    /// `Σ_j K_j ρ K_j†`.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.shape() != (self.in_dim, self.in_dim) {
            return Err(Error::Dimension(format!(
                "state is {}x{}, map expects {}x{}",
                rho.rows(),
                rho.cols(),
                self.in_dim,
                self.in_dim
            )));
        }
        let mut out = ComplexMatrix::zeros(self.out_dim, self.out_dim);
        for k in &self.kraus {
            out += &k.matmul(rho).matmul(&k.adjoint());
        }
        Ok(out)
    }

    /// `Σ_j K_j† K_j`.
    pub fn gram(&self) -> ComplexMatrix {
        let mut g = ComplexMatrix::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            g += &k.adjoint().matmul(k);
        }
        g
    }

    /// `‖Σ K†K − 𝕀‖_F`.
    pub fn tp_defect(&self) -> f64 {
        let g = self.gram();
        (&g - &ComplexMatrix::identity(self.in_dim)).frobenius_norm()
    }

    /// Operator norm of `Σ K†K`, i.e. the largest trace any input state can reach.
    pub fn trace_gain(&self) -> f64 {
        hermitian_eigen(&self.gram(), DEFAULT_TOL)
            .map(|e| e.max().max(0.0))
            .unwrap_or(f64::INFINITY)
    }

    /// Multiplies the map by a nonnegative scalar.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor >= 0.0, "CP maps can only be scaled by nonnegative factors");
        let s = factor.sqrt();
        CpMap {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            kraus: self.kraus.iter().map(|k| k.scale_real(s)).collect(),
        }
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &CpMap) -> Result<CpMap> {
        if next.in_dim != self.out_dim {
            return Err(Error::Dimension(format!(
                "cannot chain a map with output dim {} into one with input dim {}",
                self.out_dim, next.in_dim
            )));
        }
        let mut kraus = Vec::with_capacity(self.kraus.len() * next.kraus.len());
        for b in &next.kraus {
            for a in &self.kraus {
                kraus.push(b.matmul(a));
            }
        }
        Ok(CpMap {
            in_dim: self.in_dim,
            out_dim: next.out_dim,
            kraus,
        }
        .compressed())
    }

    /// `self ⊗ other` with subsystem order (self, other).
    pub fn tensor(&self, other: &CpMap) -> CpMap {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(tensor_product(a, b));
            }
        }
        CpMap {
            in_dim: self.in_dim * other.in_dim,
            out_dim: self.out_dim * other.out_dim,
            kraus,
        }
    }

    /// `self + other` (union of Kraus sets).
    pub fn plus(&self, other: &CpMap) -> Result<CpMap> {
        let mut acc = KrausSum::new(self.in_dim, self.out_dim);
        acc.add(self, 1.0)?;
        acc.add(other, 1.0)?;
        Ok(acc.finish())
    }

    pub fn choi(&self) -> ChoiOperator {
        choi_of(self)
    }

    /// Re-expresses the map with at most `in_dim·out_dim` Kraus operators when
    /// the current list is longer than that.
    pub fn compressed(self) -> CpMap {
        if self.kraus.len() <= self.in_dim * self.out_dim {
            return self.pruned();
        }
        kraus_from_choi(&choi_of(&self), DEFAULT_TOL)
            .expect("Choi operator of a Kraus map is PSD")
    }

    /// Drops all-zero Kraus operators.
    pub fn pruned(mut self) -> CpMap {
        self.kraus.retain(|k| !k.is_zero());
        self
    }
}

/// Accumulates weighted sums of CP maps, compressing the Kraus list when it
/// grows past a multiple of the Choi rank bound.
#[derive(Clone, Debug)]
pub struct KrausSum {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<ComplexMatrix>,
}

impl KrausSum {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        KrausSum {
            in_dim,
            out_dim,
            kraus: Vec::new(),
        }
    }

    /// Adds `weight · map`; `weight` must be nonnegative.
    pub fn add(&mut self, map: &CpMap, weight: f64) -> Result<()> {
        if (map.in_dim, map.out_dim) != (self.in_dim, self.out_dim) {
            return Err(Error::Dimension(format!(
                "cannot add a {}->{} map to a {}->{} sum",
                map.in_dim, map.out_dim, self.in_dim, self.out_dim
            )));
        }
        if weight < 0.0 || !weight.is_finite() {
            return Err(Error::Precondition(format!(
                "CP maps only combine with nonnegative weights, got {weight}"
            )));
        }
        if weight == 0.0 {
            return Ok(());
        }
        let s = weight.sqrt();
        self.kraus.extend(
            map.kraus
                .iter()
                .filter(|k| !k.is_zero())
                .map(|k| if s == 1.0 { k.clone() } else { k.scale_real(s) }),
        );
        let bound = self.in_dim * self.out_dim;
        if self.kraus.len() > 4 * bound.max(4) {
            self.compress();
        }
        Ok(())
    }

    fn compress(&mut self) {
        let map = CpMap {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            kraus: std::mem::take(&mut self.kraus),
        };
        self.kraus = map.compressed().kraus;
    }

    pub fn finish(self) -> CpMap {
        CpMap {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            kraus: self.kraus,
        }
        .compressed()
    }
}

/// Choi operator `Σ_{k,l} |k⟩⟨l| ⊗ M(|k⟩⟨l|)` with subsystem order (in, out).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiOperator {
    pub in_dim: usize,
    pub out_dim: usize,
    pub matrix: ComplexMatrix,
}

impl ChoiOperator {
    pub fn new(in_dim: usize, out_dim: usize, matrix: ComplexMatrix) -> Result<Self> {
        let d = in_dim * out_dim;
        if matrix.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "Choi operator for {in_dim}->{out_dim} must be {d}x{d}, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(ChoiOperator {
            in_dim,
            out_dim,
            matrix,
        })
    }

    fn profile(&self) -> DimProfile {
        DimProfile::new(vec![self.in_dim, self.out_dim]).expect("positive dims")
    }

    /// `tr_out M`, equal to `𝕀_in` iff the map is TP.
    pub fn output_marginal(&self) -> ComplexMatrix {
        partial_trace(&self.matrix, &self.profile(), &[1]).expect("profile matches")
    }

    pub fn distance(&self, other: &ChoiOperator) -> Result<f64> {
        crate::numerics::distance(&self.matrix, &other.matrix)
    }
}

pub fn choi_of(map: &CpMap) -> ChoiOperator {
    let (din, dout) = (map.in_dim, map.out_dim);
    let n = din * dout;
    let mut m = ComplexMatrix::zeros(n, n);
    let mut v = vec![ZERO; n];
    for k in &map.kraus {
        // v[(in k, out a)] = K[a, k]
        for i in 0..din {
            for a in 0..dout {
                v[i * dout + a] = k[(a, i)];
            }
        }
        for r in 0..n {
            if v[r] == ZERO {
                continue;
            }
            for c in 0..n {
                m[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    ChoiOperator {
        in_dim: din,
        out_dim: dout,
        matrix: m,
    }
}

/// `tr_in[ M (ρᵀ ⊗ 𝕀_out) ]`.
pub fn apply_via_choi(choi: &ChoiOperator, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if rho.shape() != (choi.in_dim, choi.in_dim) {
        return Err(Error::Dimension(format!(
            "state is {}x{}, Choi operator expects input dim {}",
            rho.rows(),
            rho.cols(),
            choi.in_dim
        )));
    }
    let lifted = tensor_product(&rho.transpose(), &ComplexMatrix::identity(choi.out_dim));
    partial_trace(&choi.matrix.matmul(&lifted), &choi.profile(), &[0])
}

/// Kraus operators from the eigenvectors of a PSD Choi operator; eigenvalues
/// below `1e-10·max(λ_max, 1)` are dropped.
pub fn kraus_from_choi(choi: &ChoiOperator, tol: f64) -> Result<CpMap> {
    let eig = hermitian_eigen(&choi.matrix, tol)?;
    let scale = eig.max().max(1.0);
    if eig.min() < -tol * scale {
        return Err(Error::Positivity(format!(
            "Choi operator has eigenvalue {:.3e}",
            eig.min()
        )));
    }
    let cutoff = 1e-10 * scale;
    let (din, dout) = (choi.in_dim, choi.out_dim);
    let mut kraus = Vec::new();
    for (idx, &lambda) in eig.values.iter().enumerate().rev() {
        if lambda < cutoff {
            continue;
        }
        let s = lambda.sqrt();
        let v = eig.vector(idx);
        let mut k = ComplexMatrix::zeros(dout, din);
        for i in 0..din {
            for a in 0..dout {
                k[(a, i)] = v[i * dout + a] * s;
            }
        }
        kraus.push(k);
    }
    CpMap::new(din, dout, kraus)
}

pub fn is_trace_preserving(map: &CpMap, tol: f64) -> bool {
    map.tp_defect() <= tol
}

/// `𝕀 − Σ K†K ⪰ 0` within `tol`.
pub fn is_trace_nonincreasing(map: &CpMap, tol: f64) -> bool {
    let defect = &ComplexMatrix::identity(map.in_dim) - &map.gram();
    is_positive_semidefinite(&defect, tol).unwrap_or(false)
}

/// A CP map `M̄` such that `map + M̄` is trace preserving.
///
/// With defect `D = 𝕀 − Σ K†K`, the Kraus operators are `|0⟩⟨m|√D`.
pub fn complementary_map(map: &CpMap, tol: f64) -> Result<CpMap> {
    let defect = &ComplexMatrix::identity(map.in_dim) - &map.gram();
    let root = psd_sqrt(&defect, tol).map_err(|_| {
        Error::Precondition("map is not trace non-increasing; no complement exists".into())
    })?;
    let mut kraus = Vec::new();
    for m in 0..map.in_dim {
        let mut k = ComplexMatrix::zeros(map.out_dim, map.in_dim);
        let mut nonzero = false;
        for c in 0..map.in_dim {
            let z = root[(m, c)];
            if z.norm() > 1e-14 {
                nonzero = true;
            }
            k[(0, c)] = z;
        }
        if nonzero {
            kraus.push(k);
        }
    }
    CpMap::new(map.in_dim, map.out_dim, kraus)
}

/// A classical-input-conditioned family of CP maps `{M_{o|i}}_o`.
///
/// Elements absent from the table are zero maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    in_alphabet: usize,
    out_alphabet: usize,
    in_dim: usize,
    out_dim: usize,
    elements: BTreeMap<(usize, usize), CpMap>,
}

impl Instrument {
    /// Builds an instrument from `(input, output, map)` triples; zero maps are dropped.
    pub fn new(
        in_alphabet: usize,
        out_alphabet: usize,
        in_dim: usize,
        out_dim: usize,
        elements: impl IntoIterator<Item = (usize, usize, CpMap)>,
    ) -> Result<Self> {
        if in_alphabet == 0 || out_alphabet == 0 {
            return Err(schema("in_alphabet/out_alphabet", "alphabets must be non-empty"));
        }
        let mut table = BTreeMap::new();
        for (i, o, map) in elements {
            if i >= in_alphabet || o >= out_alphabet {
                return Err(Error::Alphabet(format!(
                    "element ({o}|{i}) outside alphabets {out_alphabet}|{in_alphabet}"
                )));
            }
            if (map.in_dim, map.out_dim) != (in_dim, out_dim) {
                return Err(Error::Dimension(format!(
                    "element ({o}|{i}) is {}->{}, instrument is {in_dim}->{out_dim}",
                    map.in_dim, map.out_dim
                )));
            }
            let map = map.pruned();
            if map.kraus.is_empty() {
                continue;
            }
            match table.get_mut(&(i, o)) {
                None => {
                    table.insert((i, o), map);
                }
                Some(existing) => {
                    let merged: CpMap = CpMap::plus(existing, &map)?;
                    *existing = merged;
                }
            }
        }
        Ok(Instrument {
            in_alphabet,
            out_alphabet,
            in_dim,
            out_dim,
            elements: table,
        })
    }

    /// From a dense table indexed `[input][output]`.
    pub fn from_table(table: Vec<Vec<CpMap>>) -> Result<Self> {
        let in_alphabet = table.len();
        let out_alphabet = table.first().map_or(0, Vec::len);
        let first = table
            .first()
            .and_then(|row| row.first())
            .ok_or_else(|| schema("elements", "instrument needs at least one element"))?;
        let (in_dim, out_dim) = (first.in_dim, first.out_dim);
        if table.iter().any(|row| row.len() != out_alphabet) {
            return Err(Error::Alphabet("ragged instrument table".into()));
        }
        let elems = table.into_iter().enumerate().flat_map(|(i, row)| {
            row.into_iter().enumerate().map(move |(o, m)| (i, o, m))
        });
        Instrument::new(in_alphabet, out_alphabet, in_dim, out_dim, elems)
    }

    /// Instrument without classical input (`in_alphabet = 1`).
    pub fn unconditioned(outcomes: Vec<CpMap>) -> Result<Self> {
        Self::from_table(vec![outcomes])
    }

    /// A single TP map per input, no classical output.
    pub fn from_channels(channels: Vec<CpMap>) -> Result<Self> {
        Self::from_table(channels.into_iter().map(|c| vec![c]).collect())
    }

    /// Computational-basis measurement that leaves the post-measurement state.
    pub fn basis_measurement(dim: usize) -> Self {
        let outcomes = (0..dim)
            .map(|o| CpMap::from_operator(ComplexMatrix::ket_bra(dim, dim, o, o)))
            .collect();
        Self::unconditioned(outcomes).expect("well-formed")
    }

    pub fn in_alphabet(&self) -> usize {
        self.in_alphabet
    }

    pub fn out_alphabet(&self) -> usize {
        self.out_alphabet
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn get(&self, input: usize, output: usize) -> Option<&CpMap> {
        self.elements.get(&(input, output))
    }

    /// The element `M_{o|i}`, materializing zero maps.
    pub fn element(&self, input: usize, output: usize) -> CpMap {
        self.get(input, output)
            .cloned()
            .unwrap_or_else(|| CpMap::zero(self.in_dim, self.out_dim))
    }

    /// Nonzero elements for one classical input.
    pub fn outcomes(&self, input: usize) -> impl Iterator<Item = (usize, &CpMap)> {
        self.elements
            .range((input, 0)..(input + 1, 0))
            .map(|(&(_, o), m)| (o, m))
    }

    /// All nonzero elements as `(input, output, map)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &CpMap)> {
        self.elements.iter().map(|(&(i, o), m)| (i, o, m))
    }

    /// `Σ_o M_{o|i}`.
    pub fn channel(&self, input: usize) -> CpMap {
        let mut acc = KrausSum::new(self.in_dim, self.out_dim);
        for (_, m) in self.outcomes(input) {
            acc.add(m, 1.0).expect("consistent dims");
        }
        acc.finish()
    }

    /// Largest `‖Σ_o K†K − 𝕀‖_F` over classical inputs.
    pub fn tp_defect(&self) -> f64 {
        (0..self.in_alphabet)
            .map(|i| {
                let mut g = ComplexMatrix::zeros(self.in_dim, self.in_dim);
                for (_, m) in self.outcomes(i) {
                    g += &m.gram();
                }
                (&g - &ComplexMatrix::identity(self.in_dim)).frobenius_norm()
            })
            .fold(0.0, f64::max)
    }
}

/// True iff, for each classical input, the outcome-summed map is TP within `tol`.
/// Kraus-form elements are CP by construction.
pub fn validate_instrument(inst: &Instrument, tol: f64) -> bool {
    inst.tp_defect() <= tol
}

#[derive(Serialize, Deserialize)]
struct RawInstrument {
    in_alphabet: usize,
    out_alphabet: usize,
    elements: BTreeMap<String, Vec<CpMap>>,
}

impl Serialize for Instrument {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let elements = (0..self.in_alphabet)
            .map(|i| {
                let row = (0..self.out_alphabet).map(|o| self.element(i, o)).collect();
                (i.to_string(), row)
            })
            .collect();
        RawInstrument {
            in_alphabet: self.in_alphabet,
            out_alphabet: self.out_alphabet,
            elements,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Instrument {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawInstrument::deserialize(d)?;
        let mut dims = None;
        let mut triples = Vec::new();
        for (key, row) in raw.elements {
            let i: usize = key
                .parse()
                .map_err(|_| D::Error::custom(format!("invalid field `elements`: key {key:?} is not an index")))?;
            if row.len() != raw.out_alphabet {
                return Err(D::Error::custom(format!(
                    "invalid field `elements`: input {i} lists {} outcomes, out_alphabet is {}",
                    row.len(),
                    raw.out_alphabet
                )));
            }
            for (o, m) in row.into_iter().enumerate() {
                dims.get_or_insert((m.in_dim, m.out_dim));
                triples.push((i, o, m));
            }
        }
        let (in_dim, out_dim) =
            dims.ok_or_else(|| D::Error::custom("invalid field `elements`: no elements"))?;
        Instrument::new(raw.in_alphabet, raw.out_alphabet, in_dim, out_dim, triples)
            .map_err(D::Error::custom)
    }
}

fn gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Random `rows x cols` isometry (orthonormal columns) by Gram–Schmidt on a
/// complex Gaussian matrix; requires `rows ≥ cols`.
pub fn random_isometry(rng: &mut impl Rng, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if rows < cols {
        return Err(Error::Precondition(format!(
            "an isometry from dim {cols} needs at least {cols} rows, got {rows}"
        )));
    }
    let mut columns: Vec<Vec<C64>> = Vec::with_capacity(cols);
    while columns.len() < cols {
        let mut v: Vec<C64> = (0..rows).map(|_| gaussian(rng)).collect();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for u in &columns {
                let overlap: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= overlap * y;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|z| *z /= norm);
        columns.push(v);
    }
    let mut m = ComplexMatrix::zeros(rows, cols);
    for (c, col) in columns.iter().enumerate() {
        for (r, &z) in col.iter().enumerate() {
            m[(r, c)] = z;
        }
    }
    Ok(m)
}

fn split_isometry(v: &ComplexMatrix, blocks: usize, out_dim: usize) -> Vec<ComplexMatrix> {
    (0..blocks)
        .map(|b| {
            let mut k = ComplexMatrix::zeros(out_dim, v.cols());
            for r in 0..out_dim {
                for c in 0..v.cols() {
                    k[(r, c)] = v[(b * out_dim + r, c)];
                }
            }
            k
        })
        .collect()
}

/// Random CPTP map from a stacked random isometry, drawn from `rng`.
pub fn random_cptp_with(
    rng: &mut impl Rng,
    in_dim: usize,
    out_dim: usize,
    kraus_count: usize,
) -> Result<CpMap> {
    if in_dim == 0 || out_dim == 0 || kraus_count == 0 {
        return Err(Error::Precondition("dimensions and Kraus count must be positive".into()));
    }
    let v = random_isometry(rng, kraus_count * out_dim, in_dim)?;
    CpMap::new(in_dim, out_dim, split_isometry(&v, kraus_count, out_dim))
}

/// Deterministic random CPTP map for a fixed seed.
pub fn random_cptp(in_dim: usize, out_dim: usize, kraus_count: usize, seed: u64) -> Result<CpMap> {
    random_cptp_with(&mut ChaCha8Rng::seed_from_u64(seed), in_dim, out_dim, kraus_count)
}

/// Random instrument: for each classical input, one isometry split across all
/// outcomes and Kraus slots.
pub fn random_instrument_with(
    rng: &mut impl Rng,
    in_alphabet: usize,
    out_alphabet: usize,
    in_dim: usize,
    out_dim: usize,
    kraus_per_element: usize,
) -> Result<Instrument> {
    if in_alphabet == 0 || out_alphabet == 0 || kraus_per_element == 0 {
        return Err(Error::Precondition("alphabets and Kraus counts must be positive".into()));
    }
    let blocks = out_alphabet * kraus_per_element;
    let mut elements = Vec::new();
    for i in 0..in_alphabet {
        let v = random_isometry(rng, blocks * out_dim, in_dim)?;
        let ks = split_isometry(&v, blocks, out_dim);
        for (o, chunk) in ks.chunks(kraus_per_element).enumerate() {
            elements.push((i, o, CpMap::new(in_dim, out_dim, chunk.to_vec())?));
        }
    }
    Instrument::new(in_alphabet, out_alphabet, in_dim, out_dim, elements)
}

pub fn random_instrument(
    in_alphabet: usize,
    out_alphabet: usize,
    in_dim: usize,
    out_dim: usize,
    kraus_per_element: usize,
    seed: u64,
) -> Result<Instrument> {
    random_instrument_with(
        &mut ChaCha8Rng::seed_from_u64(seed),
        in_alphabet,
        out_alphabet,
        in_dim,
        out_dim,
        kraus_per_element,
    )
}

/// Uniformly random probability vector of length `n`.
pub fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{distance, ONE};

    fn random_state(seed: u64, dim: usize) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ComplexMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                b[(r, c)] = gaussian(&mut rng);
            }
        }
        let p = b.adjoint().matmul(&b);
        let t = p.trace().re;
        p.scale_real(1.0 / t)
    }

    #[test]
    fn identity_channel_is_identity() {
        let rho = random_state(1, 3);
        let out = CpMap::identity(3).apply(&rho).unwrap();
        assert!(distance(&out, &rho).unwrap() < 1e-15);
    }

    #[test]
    fn projector_kraus_keeps_population() {
        let rho = random_state(2, 2);
        let p0 = CpMap::from_operator(ComplexMatrix::ket_bra(2, 2, 0, 0));
        let out = p0.apply(&rho).unwrap();
        let expected = ComplexMatrix::ket_bra(2, 2, 0, 0).scale(rho[(0, 0)]);
        assert!(distance(&out, &expected).unwrap() < 1e-15);
        assert!(!is_trace_preserving(&p0, DEFAULT_TOL));
        assert!(is_trace_nonincreasing(&p0, DEFAULT_TOL));
        assert!(is_trace_preserving(&CpMap::identity(2), DEFAULT_TOL));
    }

    #[test]
    fn apply_rejects_wrong_dims() {
        assert!(CpMap::identity(2).apply(&ComplexMatrix::identity(3)).is_err());
    }

    #[test]
    fn choi_of_identity_is_unnormalized_bell_projector() {
        let choi = choi_of(&CpMap::identity(2));
        let mut expected = ComplexMatrix::zeros(4, 4);
        for k in [0, 3] {
            for l in [0, 3] {
                expected[(k, l)] = ONE;
            }
        }
        assert_eq!(choi.matrix, expected);
    }

    #[test]
    fn choi_of_reset_map() {
        // ρ ↦ tr(ρ)|0⟩⟨0| expands to Σ_k |k⟩⟨k| ⊗ |0⟩⟨0|
        let reset = CpMap::replace_with_basis_state(2, 2, 0);
        let expected = tensor_product(&ComplexMatrix::identity(2), &ComplexMatrix::ket_bra(2, 2, 0, 0));
        assert_eq!(choi_of(&reset).matrix, expected);
    }

    #[test]
    fn kraus_from_choi_identity_gives_one_unitary() {
        let m = kraus_from_choi(&choi_of(&CpMap::identity(2)), DEFAULT_TOL).unwrap();
        assert_eq!(m.kraus().len(), 1);
        let k = &m.kraus()[0];
        let phase = k[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(distance(k, &ComplexMatrix::identity(2).scale(phase)).unwrap() < 1e-12);
    }

    #[test]
    fn kraus_from_choi_reset_roundtrip_and_rank() {
        let choi = ChoiOperator::new(
            2,
            2,
            tensor_product(&ComplexMatrix::identity(2), &ComplexMatrix::ket_bra(2, 2, 0, 0)),
        )
        .unwrap();
        let m = kraus_from_choi(&choi, DEFAULT_TOL).unwrap();
        assert_eq!(m.kraus().len(), 2);
        assert!(choi_of(&m).distance(&choi).unwrap() < 1e-12);
    }

    #[test]
    fn kraus_count_matches_numerical_rank() {
        for (count, seed) in [(1, 3u64), (2, 4), (3, 5)] {
            let m = random_cptp(2, 3, count, seed).unwrap();
            let back = kraus_from_choi(&choi_of(&m), DEFAULT_TOL).unwrap();
            let eig = hermitian_eigen(&choi_of(&m).matrix, DEFAULT_TOL).unwrap();
            let rank = eig.values.iter().filter(|&&v| v > 1e-10).count();
            assert_eq!(back.kraus().len(), rank);
            assert_eq!(rank, count);
        }
    }

    #[test]
    fn kraus_from_choi_rejects_non_psd() {
        let bad = ChoiOperator::new(1, 2, ComplexMatrix::diagonal(&[ONE, -ONE])).unwrap();
        assert!(matches!(kraus_from_choi(&bad, DEFAULT_TOL), Err(Error::Positivity(_))));
    }

    #[test]
    fn choi_roundtrip_on_random_maps() {
        for seed in 0..20 {
            let m = random_cptp(2 + (seed as usize % 2), 3, 2, seed).unwrap();
            let back = kraus_from_choi(&choi_of(&m), DEFAULT_TOL).unwrap();
            assert!(choi_of(&back).distance(&choi_of(&m)).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn apply_via_choi_agrees_with_kraus() {
        for seed in 0..20u64 {
            let m = random_cptp(3, 2, 3, seed).unwrap();
            let rho = random_state(seed + 100, 3);
            let direct = m.apply(&rho).unwrap();
            let via = apply_via_choi(&choi_of(&m), &rho).unwrap();
            assert!(distance(&direct, &via).unwrap() <= 1e-10);
            // tr(result) = tr[tr_out(M) ρᵀ]
            let marg = choi_of(&m).output_marginal();
            let expected = marg.matmul(&rho.transpose()).trace();
            assert!((via.trace() - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_choi_applied_is_identity() {
        let rho = random_state(8, 2);
        let out = apply_via_choi(&choi_of(&CpMap::identity(2)), &rho).unwrap();
        assert!(distance(&out, &rho).unwrap() < 1e-15);
    }

    #[test]
    fn complement_of_tp_map_is_empty() {
        let m = random_cptp(2, 2, 2, 1).unwrap();
        let comp = complementary_map(&m, DEFAULT_TOL).unwrap();
        assert!(comp.kraus().iter().all(|k| k.frobenius_norm() < 1e-6));
        assert!(is_trace_preserving(&m.plus(&comp).unwrap(), DEFAULT_TOL));
    }

    #[test]
    fn complement_of_projector() {
        let p0 = CpMap::from_operator(ComplexMatrix::ket_bra(2, 2, 0, 0));
        let comp = complementary_map(&p0, DEFAULT_TOL).unwrap();
        assert_eq!(comp.kraus().len(), 1);
        assert!(distance(&comp.kraus()[0], &ComplexMatrix::ket_bra(2, 2, 0, 1)).unwrap() < 1e-12);
        assert!(is_trace_preserving(&p0.plus(&comp).unwrap(), DEFAULT_TOL));
    }

    #[test]
    fn complement_of_scaled_random_map() {
        for seed in 0..20 {
            let m = random_cptp(3, 2, 2, seed).unwrap().scaled(0.3);
            let comp = complementary_map(&m, DEFAULT_TOL).unwrap();
            assert!(is_trace_preserving(&m.plus(&comp).unwrap(), 1e-9));
            assert!(is_trace_nonincreasing(&comp, DEFAULT_TOL));
        }
    }

    #[test]
    fn complement_rejects_trace_increasing_map() {
        let m = CpMap::identity(2).scaled(2.0);
        assert!(matches!(complementary_map(&m, DEFAULT_TOL), Err(Error::Precondition(_))));
    }

    #[test]
    fn basis_measurement_validates_and_deficit_detected() {
        let inst = Instrument::basis_measurement(3);
        assert!(validate_instrument(&inst, DEFAULT_TOL));
        let partial = Instrument::unconditioned(vec![
            CpMap::from_operator(ComplexMatrix::ket_bra(3, 3, 0, 0)),
            CpMap::from_operator(ComplexMatrix::ket_bra(3, 3, 1, 1)),
        ])
        .unwrap();
        assert!(!validate_instrument(&partial, DEFAULT_TOL));
    }

    #[test]
    fn instrument_rejects_inconsistent_dims() {
        let err = Instrument::unconditioned(vec![CpMap::identity(2), CpMap::identity(3)]);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn random_fixtures_are_valid_and_deterministic() {
        let u = random_cptp(3, 3, 1, 42).unwrap();
        assert!(is_trace_preserving(&u, 1e-12));
        let k = &u.kraus()[0];
        assert!(distance(&k.matmul(&k.adjoint()), &ComplexMatrix::identity(3)).unwrap() < 1e-12);
        let a = serde_json::to_string(&random_cptp(2, 3, 2, 9).unwrap()).unwrap();
        let b = serde_json::to_string(&random_cptp(2, 3, 2, 9).unwrap()).unwrap();
        assert_eq!(a, b);
        let inst = random_instrument(2, 3, 2, 2, 1, 5).unwrap();
        assert!(validate_instrument(&inst, 1e-12));
        assert!(random_cptp(4, 1, 2, 0).is_err());
    }

    #[test]
    fn instrument_json_roundtrip() {
        let inst = random_instrument(2, 2, 2, 3, 1, 77).unwrap();
        let s = serde_json::to_string(&inst).unwrap();
        let back: Instrument = serde_json::from_str(&s).unwrap();
        assert_eq!(back, inst);
        let bad = r#"{"in_alphabet":1,"out_alphabet":2,"elements":{"0":[{"in_dim":1,"out_dim":1,"kraus":[]}]}}"#;
        let err = serde_json::from_str::<Instrument>(bad).unwrap_err();
        assert!(err.to_string().contains("elements"));
    }

    #[test]
    fn compression_preserves_choi() {
        let mut acc = KrausSum::new(2, 2);
        for seed in 0..40 {
            acc.add(&random_cptp(2, 2, 2, seed).unwrap(), 1.0 / 40.0).unwrap();
        }
        let m = acc.finish();
        assert!(m.kraus().len() <= 4);
        assert!(is_trace_preserving(&m, 1e-9));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn complement_completes_td_maps(seed in any::<u64>(), din in 1usize..=3, dout in 1usize..=3, w in 0.0f64..1.0) {
                let m = random_cptp(din, dout, din.max(1), seed).unwrap().scaled(w);
                let comp = complementary_map(&m, DEFAULT_TOL).unwrap();
                let union = m.plus(&comp).unwrap();
                let marg = choi_of(&union).output_marginal();
                prop_assert!(distance(&marg, &ComplexMatrix::identity(din)).unwrap() <= 1e-9);
            }

            #[test]
            fn random_instruments_validate(seed in any::<u64>(), ni in 1usize..=3, no in 1usize..=3, d in 1usize..=3) {
                let inst = random_instrument(ni, no, d, d, 1, seed).unwrap();
                prop_assert!(validate_instrument(&inst, 1e-10));
            }
        }
    }
}
