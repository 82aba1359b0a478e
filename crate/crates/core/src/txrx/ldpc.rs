//! Binary LDPC codes: progressive edge-growth construction, systematic
//! encoding, min-sum decoding and a sparse text format.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::{rng_for, SimRng, Stream};

/// Dense GF(2) row packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BitRow(Vec<u64>);

impl BitRow {
    fn zeros(n: usize) -> Self {
        BitRow(vec![0; n.div_ceil(64)])
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn xor(&mut self, other: &BitRow) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
    }
}

/// A binary linear code given by a sparse parity-check matrix.
///
/// Encoding is systematic: information bits are copied to `info_positions`
/// and the remaining `parity_positions` are solved from the checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpcCode {
    pub n_code: usize,
    pub k_info: usize,
    pub seed: u64,
    /// Column indices of every parity check.
    checks: Vec<Vec<usize>>,
    info_positions: Vec<usize>,
    parity_positions: Vec<usize>,
    /// `parity[r] = Σ_i coeff[r][i]·info[i]` over GF(2).
    parity_coeffs: Vec<BitRow>,
    // Edge layout for the decoder: check c owns edges
    // `check_start[c]..check_start[c + 1]`, edge e touches `edge_var[e]`.
    check_start: Vec<usize>,
    edge_var: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
}

/// Decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Hard decisions on the whole codeword.
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iters: usize,
}

impl LdpcCode {
    /// Builds a code from its parity checks (one list of column indices per
    /// row). The checks must be linearly independent.
    pub fn from_checks(n_code: usize, checks: Vec<Vec<usize>>, seed: u64) -> Result<Self> {
        let r = checks.len();
        if r == 0 || r >= n_code {
            return Err(Error::Config(format!("{r} checks for length {n_code}")));
        }
        let mut rows = Vec::with_capacity(r);
        for (ri, c) in checks.iter().enumerate() {
            let mut row = BitRow::zeros(n_code);
            for &j in c {
                if j >= n_code {
                    return Err(Error::Config(format!("check {ri} references column {j} >= {n_code}")));
                }
                if row.get(j) {
                    return Err(Error::Config(format!("check {ri} repeats column {j}")));
                }
                row.set(j);
            }
            rows.push(row);
        }
        // Gauss-Jordan, pivoting from the last column backwards so parity
        // bits gather at the end of the codeword.
        let mut pivots = Vec::with_capacity(r);
        let mut next = 0;
        for col in (0..n_code).rev() {
            if next == r {
                break;
            }
            let Some(p) = (next..r).find(|&i| rows[i].get(col)) else { continue };
            rows.swap(next, p);
            let pivot = rows[next].clone();
            for (i, row) in rows.iter_mut().enumerate() {
                if i != next && row.get(col) {
                    row.xor(&pivot);
                }
            }
            pivots.push(col);
            next += 1;
        }
        if pivots.len() < r {
            return Err(Error::Config(format!("parity checks have rank {} < {r}", pivots.len())));
        }
        let is_pivot: Vec<bool> = (0..n_code).map(|j| pivots.contains(&j)).collect();
        let info_positions: Vec<usize> = (0..n_code).filter(|&j| !is_pivot[j]).collect();
        let k_info = info_positions.len();
        let parity_coeffs = rows
            .iter()
            .map(|row| {
                let mut c = BitRow::zeros(k_info);
                for (i, &j) in info_positions.iter().enumerate() {
                    if row.get(j) {
                        c.set(i);
                    }
                }
                c
            })
            .collect();
        let mut check_start = vec![0];
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); n_code];
        for c in &checks {
            for &v in c {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
            }
            check_start.push(edge_var.len());
        }
        Ok(LdpcCode {
            n_code,
            k_info,
            seed,
            checks,
            info_positions,
            parity_positions: pivots,
            parity_coeffs,
            check_start,
            edge_var,
            var_edges,
        })
    }

    /// Regular `(dv, dc)` code of length `n_code` built by progressive edge
    /// growth. Rank-deficient draws are retried with fresh randomness.
    pub fn peg(n_code: usize, dv: usize, dc: usize, seed: u64) -> Result<Self> {
        if dv < 2 || dc <= dv || n_code * dv % dc != 0 {
            return Err(Error::Config(format!("cannot build a ({dv},{dc}) code of length {n_code}")));
        }
        let mut rng = rng_for(seed, Stream::Code, 0);
        for _ in 0..64 {
            if let Some(checks) = peg_graph(n_code, dv, dc, &mut rng) {
                if let Ok(code) = Self::from_checks(n_code, checks, seed) {
                    return Ok(code);
                }
            }
        }
        Err(Error::Config("no full-rank construction found".into()))
    }

    /// Default code: regular (3,6), rate 1/2.
    pub fn regular_3_6(n_code: usize, seed: u64) -> Result<Self> {
        Self::peg(n_code, 3, 6, seed)
    }

    /// The (8,4) extended Hamming code.
    pub fn hamming_8_4() -> Self {
        let checks = vec![vec![0, 1, 2, 4], vec![0, 1, 3, 5], vec![0, 2, 3, 6], vec![0, 1, 2, 3, 4, 5, 6, 7]];
        Self::from_checks(8, checks, 0).expect("extended Hamming checks are independent")
    }

    pub fn rate(&self) -> f64 {
        self.k_info as f64 / self.n_code as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Dense parity-check matrix `[n - k][n]`.
    pub fn parity_check(&self) -> Vec<Vec<u8>> {
        self.checks
            .iter()
            .map(|c| {
                let mut row = vec![0u8; self.n_code];
                for &j in c {
                    row[j] = 1;
                }
                row
            })
            .collect()
    }

    /// Dense systematic generator `[k][n]`; row `i` encodes unit vector `e_i`.
    pub fn generator(&self) -> Vec<Vec<u8>> {
        (0..self.k_info)
            .map(|i| {
                let mut e = vec![0u8; self.k_info];
                e[i] = 1;
                self.encode(&e).expect("unit vector has length k")
            })
            .collect()
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k_info {
            return Err(Error::Shape(format!("{} info bits for k = {}", info.len(), self.k_info)));
        }
        let mut word = vec![0u8; self.n_code];
        let mut packed = BitRow::zeros(self.k_info);
        for (i, (&b, &pos)) in info.iter().zip(&self.info_positions).enumerate() {
            word[pos] = b & 1;
            if b & 1 == 1 {
                packed.set(i);
            }
        }
        for (coeff, &pos) in self.parity_coeffs.iter().zip(&self.parity_positions) {
            let ones: u32 = coeff.0.iter().zip(&packed.0).map(|(a, b)| (a & b).count_ones()).sum();
            word[pos] = (ones & 1) as u8;
        }
        Ok(word)
    }

    pub fn syndrome_ok(&self, word: &[u8]) -> bool {
        word.len() == self.n_code && self.checks.iter().all(|c| c.iter().fold(0u8, |s, &j| s ^ (word[j] & 1)) == 0)
    }

    pub fn extract_info(&self, word: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&j| word[j]).collect()
    }

    /// Scaled min-sum decoding with a flooding schedule.
    ///
    /// LLRs are `log P(0)/P(1)`. Decoding stops once the hard decision meets
    /// every check and no posterior is exactly zero; `iters` counts the
    /// iterations actually run.
    pub fn decode<T: Real>(&self, llrs: &[T], max_iter: usize) -> Result<DecodeResult> {
        if llrs.len() != self.n_code {
            return Err(Error::Shape(format!("{} LLRs for n = {}", llrs.len(), self.n_code)));
        }
        const SCALE: f64 = 0.75;
        let ch: Vec<f64> = llrs.iter().map(|v| v.as_f64()).collect();
        let n_edges = self.edge_var.len();
        let mut c2v = vec![0.0f64; n_edges];
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| ch[v]).collect();
        let mut post = ch.clone();
        let mut bits = vec![0u8; self.n_code];
        for it in 1..=max_iter {
            for c in 0..self.checks.len() {
                let edges = self.check_start[c]..self.check_start[c + 1];
                let (mut min1, mut min2, mut arg, mut sign) = (f64::INFINITY, f64::INFINITY, 0, 1.0);
                for e in edges.clone() {
                    let a = v2c[e].abs();
                    if v2c[e] < 0.0 {
                        sign = -sign;
                    }
                    if a < min1 {
                        min2 = min1;
                        min1 = a;
                        arg = e;
                    } else if a < min2 {
                        min2 = a;
                    }
                }
                for e in edges {
                    let mag = if e == arg { min2 } else { min1 };
                    let s = if v2c[e] < 0.0 { -sign } else { sign };
                    c2v[e] = SCALE * s * mag;
                }
            }
            for (v, edges) in self.var_edges.iter().enumerate() {
                let total = ch[v] + edges.iter().map(|&e| c2v[e]).sum::<f64>();
                post[v] = total;
                for &e in edges {
                    v2c[e] = total - c2v[e];
                }
            }
            for (b, &p) in bits.iter_mut().zip(&post) {
                *b = u8::from(p < 0.0);
            }
            if self.syndrome_ok(&bits) && post.iter().all(|&p| p != 0.0) {
                return Ok(DecodeResult { bits, converged: true, iters: it });
            }
        }
        Ok(DecodeResult { bits, converged: false, iters: max_iter })
    }

    /// Sparse text form: a header of `key value` lines then one line of
    /// column indices per check.
    ///
    /// ```text
    /// ldpc 1
    /// n_code 128
    /// k_info 64
    /// seed 7
    /// checks 64
    /// 3 17 40 77 90 121
    /// ...
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "ldpc 1\nn_code {}\nk_info {}\nseed {}\nchecks {}\n",
            self.n_code,
            self.k_info,
            self.seed,
            self.checks.len()
        );
        for c in &self.checks {
            let cols: Vec<String> = c.iter().map(|j| j.to_string()).collect();
            let _ = writeln!(s, "{}", cols.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<u64> {
            let line = lines.next().ok_or_else(|| Error::Format(format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Format(format!("expected `{key}`, found `{line}`")));
            }
            parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad value on `{line}`")))
        };
        if header("ldpc")? != 1 {
            return Err(Error::Format("unsupported code file version".into()));
        }
        let n_code = header("n_code")? as usize;
        let k_info = header("k_info")? as usize;
        let seed = header("seed")?;
        let n_checks = header("checks")? as usize;
        let checks = lines
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| Error::Format(e.to_string())))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if checks.len() != n_checks {
            return Err(Error::Format(format!("header says {n_checks} checks, found {}", checks.len())));
        }
        let code = Self::from_checks(n_code, checks, seed)?;
        if code.k_info != k_info {
            return Err(Error::Format(format!("header says k = {k_info}, checks give {}", code.k_info)));
        }
        Ok(code)
    }
}

/// One attempt at a PEG graph; `None` if the degree constraints jam.
fn peg_graph(n: usize, dv: usize, dc: usize, rng: &mut SimRng) -> Option<Vec<Vec<usize>>> {
    let m = n * dv / dc;
    let mut check_vars: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut var_checks: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order: Vec<usize> = (0..m).collect();
    for v in 0..n {
        for t in 0..dv {
            let eligible = |c: usize, vc: &[usize], cv: &[Vec<usize>]| cv[c].len() < dc && !vc.contains(&c);
            let mut candidates: Vec<usize> = Vec::new();
            if t > 0 {
                // Breadth-first expansion from v; keep the farthest layer.
                let mut reached = vec![false; m];
                let mut seen_var = vec![false; n];
                seen_var[v] = true;
                let mut frontier = vec![v];
                loop {
                    let mut layer = Vec::new();
                    for &u in &frontier {
                        for &c in &var_checks[u] {
                            if !reached[c] {
                                reached[c] = true;
                                layer.push(c);
                            }
                        }
                    }
                    let unreached: Vec<usize> = (0..m)
                        .filter(|&c| !reached[c] && eligible(c, &var_checks[v], &check_vars))
                        .collect();
                    if layer.is_empty() || unreached.is_empty() {
                        candidates = if unreached.is_empty() {
                            layer.into_iter().filter(|&c| eligible(c, &var_checks[v], &check_vars)).collect()
                        } else {
                            unreached
                        };
                        break;
                    }
                    let mut next = Vec::new();
                    for &c in &layer {
                        for &u in &check_vars[c] {
                            if !seen_var[u] {
                                seen_var[u] = true;
                                next.push(u);
                            }
                        }
                    }
                    frontier = next;
                }
            }
            if candidates.is_empty() {
                candidates = (0..m).filter(|&c| eligible(c, &var_checks[v], &check_vars)).collect();
            }
            let min_deg = candidates.iter().map(|&c| check_vars[c].len()).min()?;
            order.shuffle(rng);
            let pick = *order
                .iter()
                .find(|&&c| check_vars[c].len() == min_deg && candidates.contains(&c))?;
            check_vars[pick].push(v);
            var_checks[v].push(pick);
        }
    }
    if check_vars.iter().any(|c| c.len() != dc) {
        return None;
    }
    for c in &mut check_vars {
        c.sort_unstable();
    }
    Some(check_vars)
}
