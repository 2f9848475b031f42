//! Directed binary networks, node attributes and network time series.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};

/// Read access to an `n x n` 0/1 adjacency matrix.
///
/// Statistic kernels are generic over this so the same code evaluates a
/// stored network or a network with one dyad overridden.
pub trait Adjacency {
    fn order(&self) -> usize;
    fn at(&self, i: usize, j: usize) -> u8;
}

/// Directed binary network with no self-loops, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Network {
    n: usize,
    adj: Vec<u8>,
}

impl Network {
    pub fn empty(n: usize) -> Self {
        Network {
            n,
            adj: vec![0; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut net = Network::empty(n);
        for (i, j) in dyads(n) {
            net.adj[i * n + j] = 1;
        }
        net
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut net = Network::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(TergmError::InvalidNetwork(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(TergmError::InvalidNetwork(format!("self-loop on node {i}")));
            }
            net.adj[i * n + j] = 1;
        }
        Ok(net)
    }

    /// Builds a network from 0/1 rows, rejecting non-binary entries and self-loops.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut net = Network::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(TergmError::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 if i == j => {
                        return Err(TergmError::InvalidNetwork(format!("self-loop on node {i}")))
                    }
                    1 => net.adj[i * n + j] = 1,
                    other => {
                        return Err(TergmError::InvalidNetwork(format!(
                            "entry ({i}, {j}) = {other} is not binary"
                        )))
                    }
                }
            }
        }
        Ok(net)
    }

    /// Network whose dyads (in [`dyads`] order) are the low bits of `bits`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        let mut net = Network::empty(n);
        for (d, (i, j)) in dyads(n).enumerate() {
            if bits >> d & 1 == 1 {
                net.adj[i * n + j] = 1;
            }
        }
        net
    }

    pub fn to_bits(&self) -> u64 {
        dyads(self.n)
            .enumerate()
            .filter(|&(_, (i, j))| self.has_edge(i, j))
            .fold(0u64, |acc, (d, _)| acc | 1 << d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] == 1
    }

    /// Sets dyad `(i, j)`. Panics on the diagonal.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        assert!(i != j, "self-loops are not representable");
        self.adj[i * self.n + j] = u8::from(value);
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|&v| v as usize).sum()
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.n * (self.n - 1)) as f64
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        dyads(self.n).filter(move |&(i, j)| self.has_edge(i, j))
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.adj
            .chunks(self.n.max(1))
            .take(self.n)
            .map(<[u8]>::to_vec)
            .collect()
    }

    /// Raw row-major 0/1 entries.
    pub fn as_slice(&self) -> &[u8] {
        &self.adj
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Network {
        let mut out = Network::empty(self.n);
        for (i, j) in self.edges() {
            out.adj[perm[i] * self.n + perm[j]] = 1;
        }
        out
    }
}

impl Adjacency for Network {
    #[inline]
    fn order(&self) -> usize {
        self.n
    }
    #[inline]
    fn at(&self, i: usize, j: usize) -> u8 {
        self.adj[i * self.n + j]
    }
}

impl<T: Adjacency + ?Sized> Adjacency for &T {
    #[inline]
    fn order(&self) -> usize {
        (**self).order()
    }
    #[inline]
    fn at(&self, i: usize, j: usize) -> u8 {
        (**self).at(i, j)
    }
}

/// A network viewed with dyad `(i, j)` forced to `value`.
#[derive(Clone, Copy)]
pub struct WithDyad<'a> {
    pub base: &'a Network,
    pub i: usize,
    pub j: usize,
    pub value: u8,
}

impl Adjacency for WithDyad<'_> {
    #[inline]
    fn order(&self) -> usize {
        self.base.n
    }
    #[inline]
    fn at(&self, i: usize, j: usize) -> u8 {
        if i == self.i && j == self.j {
            self.value
        } else {
            self.base.at(i, j)
        }
    }
}

/// Ordered pairs `(i, j)` with `i != j`, row-major.
pub fn dyads(n: usize) -> impl Iterator<Item = (usize, usize)> + Clone {
    (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
}

/// Per-node categorical attribute with an observed/unknown mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAttributes {
    alphabet: Vec<String>,
    labels: Vec<Option<usize>>,
    observed: Vec<bool>,
}

impl NodeAttributes {
    /// `labels[i]` indexes into `alphabet`; `None` means the value is not
    /// recorded at all (the node must then be unobserved).
    pub fn new(
        alphabet: Vec<String>,
        labels: Vec<Option<usize>>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(TergmError::InvalidConfig("label alphabet is empty".into()));
        }
        for (a, name) in alphabet.iter().enumerate() {
            if alphabet[..a].contains(name) {
                return Err(TergmError::InvalidConfig(format!(
                    "duplicate label `{name}`"
                )));
            }
        }
        if labels.len() != observed.len() {
            return Err(TergmError::DimensionMismatch {
                expected: labels.len(),
                found: observed.len(),
            });
        }
        for (i, (l, &obs)) in labels.iter().zip(&observed).enumerate() {
            match l {
                Some(v) if *v >= alphabet.len() => {
                    return Err(TergmError::InvalidConfig(format!(
                        "label index {v} for node {i} outside alphabet of size {}",
                        alphabet.len()
                    )))
                }
                None if obs => {
                    return Err(TergmError::InvalidConfig(format!(
                        "node {i} is marked observed but has no label"
                    )))
                }
                _ => {}
            }
        }
        Ok(NodeAttributes {
            alphabet,
            labels,
            observed,
        })
    }

    /// All labels known and observed.
    pub fn fully_observed(alphabet: Vec<String>, labels: Vec<usize>) -> Result<Self> {
        let observed = vec![true; labels.len()];
        Self::new(alphabet, labels.into_iter().map(Some).collect(), observed)
    }

    /// Builds from label names; unknown names are rejected.
    pub fn from_names(
        alphabet: Vec<String>,
        values: &[Option<String>],
        observed: Vec<bool>,
    ) -> Result<Self> {
        let labels = values
            .iter()
            .map(|v| match v {
                None => Ok(None),
                Some(name) => alphabet
                    .iter()
                    .position(|a| a == name)
                    .map(Some)
                    .ok_or_else(|| {
                        TergmError::InvalidConfig(format!("label `{name}` not in alphabet"))
                    }),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, labels, observed)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn label_name(&self, label: usize) -> &str {
        &self.alphabet[label]
    }

    pub fn unknown_nodes(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.observed[i]).collect()
    }

    /// Every node's label, or an error if any label is missing.
    pub fn complete_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| TergmError::MissingLabels(format!("node {i}"))))
            .collect()
    }

    /// Copy with the given nodes marked unobserved (labels kept as ground truth).
    pub fn with_hidden(&self, hidden: &[usize]) -> NodeAttributes {
        let mut out = self.clone();
        for &i in hidden {
            out.observed[i] = false;
        }
        out
    }

    pub fn permuted(&self, perm: &[usize]) -> NodeAttributes {
        let mut labels = vec![None; self.n()];
        let mut observed = vec![false; self.n()];
        for i in 0..self.n() {
            labels[perm[i]] = self.labels[i];
            observed[perm[i]] = self.observed[i];
        }
        NodeAttributes {
            alphabet: self.alphabet.clone(),
            labels,
            observed,
        }
    }
}

/// Ordered sequence of equally sized networks `A^1..A^T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSeries {
    networks: Vec<Network>,
    attributes: Option<NodeAttributes>,
    node_names: Option<Vec<String>>,
}

impl NetworkSeries {
    pub fn new(networks: Vec<Network>) -> Result<Self> {
        let first = networks
            .first()
            .ok_or_else(|| TergmError::EmptySeries("a series needs at least one network".into()))?;
        let n = first.n();
        if let Some(bad) = networks.iter().find(|a| a.n() != n) {
            return Err(TergmError::DimensionMismatch {
                expected: n,
                found: bad.n(),
            });
        }
        Ok(NetworkSeries {
            networks,
            attributes: None,
            node_names: None,
        })
    }

    pub fn with_attributes(mut self, attributes: NodeAttributes) -> Result<Self> {
        if attributes.n() != self.n() {
            return Err(TergmError::DimensionMismatch {
                expected: self.n(),
                found: attributes.n(),
            });
        }
        self.attributes = Some(attributes);
        Ok(self)
    }

    pub fn with_node_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n() {
            return Err(TergmError::DimensionMismatch {
                expected: self.n(),
                found: names.len(),
            });
        }
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.networks[0].n()
    }

    /// Number of networks `T`.
    pub fn len(&self) -> usize {
        self.networks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.networks.is_empty()
    }

    pub fn networks(&self) -> &[Network] {
        &self.networks
    }

    pub fn attributes(&self) -> Option<&NodeAttributes> {
        self.attributes.as_ref()
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    /// `(A^{t-1}, A^t)` pairs for `t = 2..T`.
    pub fn transitions(&self) -> impl Iterator<Item = (&Network, &Network)> {
        self.networks.windows(2).map(|w| (&w[0], &w[1]))
    }

    pub fn require_transitions(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(TergmError::SeriesTooShort {
                needed: 2,
                found: self.len(),
            });
        }
        Ok(())
    }

    /// Drops the first `k` networks.
    pub fn drop_prefix(&self, k: usize) -> Result<NetworkSeries> {
        if k >= self.len() {
            return Err(TergmError::EmptySeries(format!(
                "dropping {k} of {} networks leaves nothing",
                self.len()
            )));
        }
        Ok(NetworkSeries {
            networks: self.networks[k..].to_vec(),
            attributes: self.attributes.clone(),
            node_names: self.node_names.clone(),
        })
    }

    pub fn permuted(&self, perm: &[usize]) -> NetworkSeries {
        let node_names = self.node_names.as_ref().map(|names| {
            let mut out = vec![String::new(); names.len()];
            for (i, name) in names.iter().enumerate() {
                out[perm[i]] = name.clone();
            }
            out
        });
        NetworkSeries {
            networks: self.networks.iter().map(|a| a.permuted(perm)).collect(),
            attributes: self.attributes.as_ref().map(|a| a.permuted(perm)),
            node_names,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_counts() {
        assert_eq!(Network::empty(5).edge_count(), 0);
        assert_eq!(Network::complete(3).edge_count(), 6);
        let a = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(a.edge_count(), 2);
    }

    #[test]
    fn rejects_self_loops_and_non_binary() {
        assert!(Network::from_edges(3, &[(2, 2)]).is_err());
        assert!(Network::from_rows(&[vec![0, 2], vec![0, 0]]).is_err());
        assert!(Network::from_rows(&[vec![1, 0], vec![0, 0]]).is_err());
        assert!(Network::from_rows(&[vec![0, 1, 0], vec![0, 0]]).is_err());
    }

    #[test]
    fn bits_round_trip() {
        for bits in 0..64u64 {
            assert_eq!(Network::from_bits(3, bits).to_bits(), bits);
        }
    }

    #[test]
    fn series_rejects_mixed_sizes() {
        let err = NetworkSeries::new(vec![Network::empty(3), Network::empty(4)]);
        assert!(matches!(err, Err(TergmError::DimensionMismatch { .. })));
        assert!(NetworkSeries::new(vec![]).is_err());
    }

    #[test]
    fn attributes_validate() {
        let abc: Vec<String> = vec!["D".into(), "R".into()];
        assert!(NodeAttributes::new(abc.clone(), vec![Some(2)], vec![true]).is_err());
        assert!(NodeAttributes::new(abc.clone(), vec![None], vec![true]).is_err());
        let attrs = NodeAttributes::new(abc, vec![Some(0), None], vec![true, false]).unwrap();
        assert_eq!(attrs.unknown_nodes(), vec![1]);
        assert!(attrs.complete_labels().is_err());
    }

    #[test]
    fn with_dyad_overrides_one_entry() {
        let a = Network::from_edges(3, &[(0, 1)]).unwrap();
        let v = WithDyad {
            base: &a,
            i: 0,
            j: 1,
            value: 0,
        };
        assert_eq!(v.at(0, 1), 0);
        let v = WithDyad {
            base: &a,
            i: 1,
            j: 2,
            value: 1,
        };
        assert_eq!(v.at(1, 2), 1);
        assert_eq!(v.at(0, 1), 1);
    }
}
