//! Reference computations written directly on dense arrays, without going
//! through the library's composition or Choi code.

#![allow(dead_code)]

use causal_channels::causal::{CausalOrder, OpLabel};
use causal_channels::channels::{CpMap, Instrument};
use causal_channels::composition::CondDist;
use causal_channels::numerics::ComplexMatrix;
use num_complex::Complex64 as C;

#[derive(Clone, Debug)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<C>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense { rows, cols, a: vec![C::new(0.0, 0.0); rows * cols] }
    }

    pub fn eye(n: usize) -> Self {
        let mut m = Dense::zeros(n, n);
        for i in 0..n {
            m.a[i * n + i] = C::new(1.0, 0.0);
        }
        m
    }

    pub fn from_lib(m: &ComplexMatrix) -> Self {
        let mut d = Dense::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                d.a[r * m.cols() + c] = m[(r, c)];
            }
        }
        d
    }

    pub fn at(&self, r: usize, c: usize) -> C {
        self.a[r * self.cols + c]
    }

    pub fn mul(&self, o: &Dense) -> Dense {
        assert_eq!(self.cols, o.rows);
        let mut m = Dense::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let x = self.at(i, k);
                if x == C::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..o.cols {
                    m.a[i * o.cols + j] += x * o.at(k, j);
                }
            }
        }
        m
    }

    pub fn dagger(&self) -> Dense {
        let mut m = Dense::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.a[j * self.rows + i] = self.at(i, j).conj();
            }
        }
        m
    }

    pub fn kron(&self, o: &Dense) -> Dense {
        let (r, c) = (self.rows * o.rows, self.cols * o.cols);
        let mut m = Dense::zeros(r, c);
        for i in 0..self.rows {
            for j in 0..self.cols {
                for k in 0..o.rows {
                    for l in 0..o.cols {
                        m.a[(i * o.rows + k) * c + j * o.cols + l] = self.at(i, j) * o.at(k, l);
                    }
                }
            }
        }
        m
    }

    pub fn add_scaled(&mut self, o: &Dense, w: f64) {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        for (x, y) in self.a.iter_mut().zip(&o.a) {
            *x += y * w;
        }
    }

    pub fn dist(&self, o: &Dense) -> f64 {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        self.a.iter().zip(&o.a).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest eigenvalue of a PSD matrix by power iteration.
    pub fn psd_norm(&self) -> f64 {
        let n = self.rows;
        let mut v: Vec<C> = (0..n).map(|i| C::new(1.0 + 0.37 * i as f64, 0.11 * i as f64)).collect();
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let mut w = vec![C::new(0.0, 0.0); n];
            for i in 0..n {
                for j in 0..n {
                    w[i] += self.at(i, j) * v[j];
                }
            }
            let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm / v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v = w.into_iter().map(|z| z / norm).collect();
            if (next - lambda).abs() < 1e-15 * next.max(1.0) {
                return next;
            }
            lambda = next;
        }
        lambda
    }
}

pub fn kraus(m: &CpMap) -> Vec<Dense> {
    m.kraus().iter().map(Dense::from_lib).collect()
}

/// `Σ K ρ K†`.
pub fn apply(ks: &[Dense], rho: &Dense) -> Dense {
    let mut out = Dense::zeros(ks[0].rows, ks[0].rows);
    for k in ks {
        out.add_scaled(&k.mul(rho).mul(&k.dagger()), 1.0);
    }
    out
}

/// `Σ K†K`.
pub fn gram(ks: &[Dense], d_in: usize) -> Dense {
    let mut g = Dense::zeros(d_in, d_in);
    for k in ks {
        g.add_scaled(&k.dagger().mul(k), 1.0);
    }
    g
}

/// Choi matrix `Σ_{k,l} |k⟩⟨l| ⊗ M(|k⟩⟨l|)` built by applying the map to
/// every matrix unit.
pub fn choi(ks: &[Dense], d_in: usize, d_out: usize) -> Dense {
    let n = d_in * d_out;
    let mut j = Dense::zeros(n, n);
    if ks.is_empty() {
        return j;
    }
    for k in 0..d_in {
        for l in 0..d_in {
            let mut e = Dense::zeros(d_in, d_in);
            e.a[k * d_in + l] = C::new(1.0, 0.0);
            let img = apply(ks, &e);
            for a in 0..d_out {
                for b in 0..d_out {
                    j.a[(k * d_out + a) * n + l * d_out + b] += img.at(a, b);
                }
            }
        }
    }
    j
}

pub fn choi_of_map(m: &CpMap) -> Dense {
    choi(&kraus(m), m.in_dim(), m.out_dim())
}

/// Kraus operators of `A ⊗ B`.
pub fn kron_all(a: &[Dense], b: &[Dense]) -> Vec<Dense> {
    a.iter().flat_map(|x| b.iter().map(move |y| x.kron(y))).collect()
}

fn element(inst: &Instrument, i: usize, o: usize) -> Vec<Dense> {
    inst.get(i, o).map(kraus).unwrap_or_default()
}

/// `Σ p(i_A,i_B|o_A,o_B) choi(A_{o_A|i_A} ⊗ B_{o_B|i_B})`.
pub fn ccstar_choi(alice: &Instrument, bob: &Instrument, p: &CondDist) -> Dense {
    let (din, dout) = (alice.in_dim() * bob.in_dim(), alice.out_dim() * bob.out_dim());
    let mut j = Dense::zeros(din * dout, din * dout);
    for ia in 0..alice.in_alphabet() {
        for ib in 0..bob.in_alphabet() {
            for oa in 0..alice.out_alphabet() {
                for ob in 0..bob.out_alphabet() {
                    let w = p.prob(&[ia, ib], &[oa, ob]);
                    let ks = kron_all(&element(alice, ia, oa), &element(bob, ib, ob));
                    if w != 0.0 && !ks.is_empty() {
                        j.add_scaled(&choi(&ks, din, dout), w);
                    }
                }
            }
        }
    }
    j
}

/// `Σ_{a,b} choi(A_{a|b} ⊗ B_{b|a})`.
pub fn loop_choi(alice: &Instrument, bob: &Instrument) -> Dense {
    let (din, dout) = (alice.in_dim() * bob.in_dim(), alice.out_dim() * bob.out_dim());
    let mut j = Dense::zeros(din * dout, din * dout);
    for b in 0..alice.in_alphabet() {
        for a in 0..alice.out_alphabet() {
            let ks = kron_all(&element(alice, b, a), &element(bob, a, b));
            if !ks.is_empty() {
                j.add_scaled(&choi(&ks, din, dout), 1.0);
            }
        }
    }
    j
}

/// `Σ_k choi(E^A_k ⊗ E^B_k)`.
pub fn terms_choi(terms: &[(CpMap, CpMap)]) -> Dense {
    let (a, b) = &terms[0];
    let (din, dout) = (a.in_dim() * b.in_dim(), a.out_dim() * b.out_dim());
    let mut j = Dense::zeros(din * dout, din * dout);
    for (a, b) in terms {
        j.add_scaled(&choi(&kron_all(&kraus(a), &kraus(b)), din, dout), 1.0);
    }
    j
}

/// Kraus operators of `R_n ∘ … ∘ R_1` with each round's symbols given.
fn sequence(rounds: &[Instrument], inputs: &[usize], outputs: &[usize]) -> Vec<Dense> {
    let d = rounds[0].in_dim();
    let mut acc = vec![Dense::eye(d)];
    for (r, inst) in rounds.iter().enumerate() {
        let ks = element(inst, inputs[r], outputs[r]);
        acc = ks.iter().flat_map(|k| acc.iter().map(move |x| k.mul(x))).collect();
        if acc.is_empty() {
            break;
        }
    }
    acc
}

fn digits(mut index: usize, radices: &[usize]) -> Vec<usize> {
    radices
        .iter()
        .map(|&r| {
            let d = index % r;
            index /= r;
            d
        })
        .collect()
}

/// Multi-round contraction with slots ordered `A(1..n_a), B(1..n_b)`.
pub fn aggregate_choi(alice: &[Instrument], bob: &[Instrument], p: &CondDist) -> Dense {
    let (din, dout) = (
        alice[0].in_dim() * bob[0].in_dim(),
        alice.last().unwrap().out_dim() * bob.last().unwrap().out_dim(),
    );
    let na = alice.len();
    let ins = p.input_alphabets().to_vec();
    let outs = p.output_alphabets().to_vec();
    let n_in: usize = ins.iter().product();
    let n_out: usize = outs.iter().product();
    let mut j = Dense::zeros(din * dout, din * dout);
    for x in 0..n_in {
        let i = digits(x, &ins);
        for y in 0..n_out {
            let o = digits(y, &outs);
            let w = p.prob(&i, &o);
            if w == 0.0 {
                continue;
            }
            let ka = sequence(alice, &i[..na], &o[..na]);
            let kb = sequence(bob, &i[na..], &o[na..]);
            let ks = kron_all(&ka, &kb);
            if !ks.is_empty() {
                j.add_scaled(&choi(&ks, din, dout), w);
            }
        }
    }
    j
}

/// Brute-force no-signalling test: for every set of input slots, the
/// marginal on those slots may depend only on outputs of operations that
/// strictly precede one of them.
pub fn no_signalling(p: &CondDist, slots: &[OpLabel], order: &CausalOrder) -> bool {
    let ins = p.input_alphabets().to_vec();
    let outs = p.output_alphabets().to_vec();
    let m = slots.len();
    let n_in: usize = ins.iter().product();
    let n_out: usize = outs.iter().product();
    for subset in 1usize..(1 << m) {
        let chosen: Vec<usize> = (0..m).filter(|k| subset >> k & 1 == 1).collect();
        let past: Vec<usize> = (0..m)
            .filter(|&s| chosen.iter().any(|&c| order.precedes(&slots[s], &slots[c]).unwrap()))
            .collect();
        let sub_radix: Vec<usize> = chosen.iter().map(|&c| ins[c]).collect();
        let n_sub: usize = sub_radix.iter().product();
        let mut seen: std::collections::HashMap<Vec<usize>, Vec<f64>> = Default::default();
        for y in 0..n_out {
            let o = digits(y, &outs);
            let mut marg = vec![0.0; n_sub];
            for x in 0..n_in {
                let i = digits(x, &ins);
                let mut idx = 0;
                for (pos, &c) in chosen.iter().enumerate().rev() {
                    idx = idx * sub_radix[pos] + i[c];
                }
                marg[idx] += p.prob(&i, &o);
            }
            let key: Vec<usize> = past.iter().map(|&s| o[s]).collect();
            if let Some(prev) = seen.get(&key) {
                if prev.iter().zip(&marg).any(|(a, b)| (a - b).abs() > 1e-12) {
                    return false;
                }
            } else {
                seen.insert(key, marg);
            }
        }
    }
    true
}
