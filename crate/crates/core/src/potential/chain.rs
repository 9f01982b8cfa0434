//! Finite reversible continuous-time chains in compressed row form.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Result, ZrpError};

/// Relative tolerance for the reversibility check on construction.
pub const REVERSIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pi: Vec<f64>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    rates: Vec<f64>,
}

impl ChainSpec {
    /// Build from stationary weights and `(i, j, rate)` triples. Repeated
    /// pairs are summed, self-loops and zero rates dropped, and detailed
    /// balance is checked on every stored pair.
    pub fn new(pi: Vec<f64>, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let chain = Self::new_unchecked(pi, edges)?;
        chain.check_reversible(REVERSIBILITY_TOL)?;
        Ok(chain)
    }

    /// As [`ChainSpec::new`] without the detailed-balance check.
    pub fn new_unchecked(pi: Vec<f64>, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let n = pi.len();
        if let Some((i, w)) = pi.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite()) {
            return Err(ZrpError::InvalidParameter(format!("pi[{i}] = {w}")));
        }
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (i, j, r) in edges {
            if i >= n || j >= n {
                return Err(ZrpError::InvalidParameter(format!("edge ({i}, {j}) outside {n} states")));
            }
            if !(r >= 0.0) || !r.is_finite() {
                return Err(ZrpError::InvalidParameter(format!("rate {r} on ({i}, {j})")));
            }
            if i != j && r > 0.0 {
                *rows[i].entry(j).or_insert(0.0) += r;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut rates = Vec::new();
        offsets.push(0);
        for row in rows {
            for (j, r) in row {
                targets.push(j);
                rates.push(r);
            }
            offsets.push(targets.len());
        }
        Ok(Self { pi, offsets, targets, rates })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Outgoing `(j, r(i, j))`.
    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        self.targets[a..b].iter().copied().zip(self.rates[a..b].iter().copied())
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        match self.targets[a..b].binary_search(&j) {
            Ok(k) => self.rates[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.row(i).map(|(_, r)| r).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.len()).flat_map(move |i| self.row(i).map(move |(j, r)| (i, j, r)))
    }

    /// Same rates with `pi` scaled to a probability vector.
    pub fn normalized(&self) -> Self {
        let s: f64 = self.pi.iter().sum();
        Self { pi: self.pi.iter().map(|w| w / s).collect(), ..self.clone() }
    }

    /// Largest relative detailed-balance residual and the edge attaining it.
    pub fn reversibility_residual(&self) -> (f64, usize, usize) {
        let mut worst = (0.0, 0, 0);
        for (i, j, r) in self.edges() {
            let f = self.pi[i] * r;
            let g = self.pi[j] * self.rate(j, i);
            let res = (f - g).abs() / f.max(g);
            if res > worst.0 {
                worst = (res, i, j);
            }
        }
        worst
    }

    pub fn check_reversible(&self, tol: f64) -> Result<()> {
        let (residual, i, j) = self.reversibility_residual();
        if residual > tol {
            return Err(ZrpError::NotReversible { i, j, residual });
        }
        Ok(())
    }

    /// Sub-chain on the states where `keep` holds, in index order. Rates to
    /// dropped states are removed. Returns the chain and the kept indices.
    pub fn induced(&self, keep: &[bool]) -> (Self, Vec<usize>) {
        let kept: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        let mut pos = vec![usize::MAX; self.len()];
        for (k, &i) in kept.iter().enumerate() {
            pos[i] = k;
        }
        let pi = kept.iter().map(|&i| self.pi[i]).collect();
        let edges: Vec<_> = kept
            .iter()
            .flat_map(|&i| self.row(i).filter(|&(j, _)| keep[j]).map(move |(j, r)| (i, j, r)))
            .map(|(i, j, r)| (pos[i], pos[j], r))
            .collect();
        (Self::new_unchecked(pi, edges).expect("induced chain is well formed"), kept)
    }

    /// Connected components of the undirected rate graph, as a label per state.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            stack.push(s);
            while let Some(i) = stack.pop() {
                for (j, _) in self.row(i) {
                    if label[j] == usize::MAX {
                        label[j] = count;
                        stack.push(j);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    pub fn is_irreducible(&self) -> bool {
        self.components().0 <= 1
    }

    /// Edge-list text: a block of `pi i weight` lines, then `i j rate` lines.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, p) in self.pi.iter().enumerate() {
            writeln!(w, "pi {i} {p:e}")?;
        }
        for (i, j, r) in self.edges() {
            writeln!(w, "{i} {j} {r:e}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut pi: Vec<Option<f64>> = Vec::new();
        let mut edges = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| ZrpError::Parse { line: lineno + 1, msg: msg.to_string() };
            match toks.as_slice() {
                [] => continue,
                [c, ..] if c.starts_with('#') => continue,
                ["pi", i, w] => {
                    let i: usize = i.parse().map_err(|_| bad("bad state index"))?;
                    let w: f64 = w.parse().map_err(|_| bad("bad weight"))?;
                    if pi.len() <= i {
                        pi.resize(i + 1, None);
                    }
                    pi[i] = Some(w);
                }
                [i, j, r] => {
                    let i: usize = i.parse().map_err(|_| bad("bad source index"))?;
                    let j: usize = j.parse().map_err(|_| bad("bad target index"))?;
                    let r: f64 = r.parse().map_err(|_| bad("bad rate"))?;
                    edges.push((i, j, r));
                }
                _ => return Err(bad("expected `pi i weight` or `i j rate`")),
            }
        }
        let pi = pi
            .into_iter()
            .enumerate()
            .map(|(i, w)| w.ok_or(ZrpError::Parse { line: 0, msg: format!("missing weight for state {i}") }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pi, edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ring(l: usize) -> ChainSpec {
        let edges = (0..l).flat_map(|i| [(i, (i + 1) % l, 0.5), (i, (i + l - 1) % l, 0.5)]);
        ChainSpec::new(vec![1.0 / l as f64; l], edges).unwrap()
    }

    #[test]
    fn merges_duplicate_edges() {
        let c = ChainSpec::new(vec![1.0, 1.0], [(0, 1, 0.5), (0, 1, 0.5), (1, 0, 1.0)]).unwrap();
        assert_eq!(c.rate(0, 1), 1.0);
        assert_eq!(c.edge_count(), 2);
    }

    #[test]
    fn rejects_irreversible() {
        let err = ChainSpec::new(vec![1.0, 2.0], [(0, 1, 1.0), (1, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, ZrpError::NotReversible { .. }));
        assert!(ChainSpec::new_unchecked(vec![1.0, 2.0], [(0, 1, 1.0), (1, 0, 1.0)]).is_ok());
    }

    #[test]
    fn edge_list_round_trip() {
        let c = ring(7);
        let mut buf = Vec::new();
        c.write_edge_list(&mut buf).unwrap();
        let d = ChainSpec::read_edge_list(&buf[..]).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = "pi 0 1\npi 1 1\n0 1\n";
        assert!(matches!(ChainSpec::read_edge_list(text.as_bytes()), Err(ZrpError::Parse { line: 3, .. })));
    }

    #[test]
    fn induced_and_components() {
        let c = ring(6);
        let keep = [true, true, false, true, true, false];
        let (sub, kept) = c.induced(&keep);
        assert_eq!(kept, vec![0, 1, 3, 4]);
        assert_eq!(sub.components().0, 2);
        assert!(c.is_irreducible());
    }
}
