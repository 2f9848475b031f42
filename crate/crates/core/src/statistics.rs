//! Transition statistics `Ψ(A^t, A^{t-1})` and their dyad-level change scores.
//!
//! Every built-in statistic is linear in the entries of the current network
//! once the previous network is fixed, so it can be written as
//! `base + Σ_ij A^t_ij · delta_ij`. [`StatisticSet::change_scores`] computes
//! that decomposition in closed form; [`evaluate`] sums the defining formula
//! directly. The two are kept independent so each can check the other.
//!
//! Conventions: sums over pairs exclude `i == j`, triple sums require
//! `i, j, k` pairwise distinct, and a ratio statistic whose denominator is
//! zero evaluates to 0 with zero change scores.

use std::cell::OnceCell;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};
use crate::network::{dyads, Adjacency, Network};

/// Built-in statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Statistic {
    /// `D`: edge count scaled by `1/(n-1)`.
    Density,
    /// `S`: dyads that keep their value, scaled by `1/(n-1)`.
    Stability,
    /// `R`: previous edges `i->j` answered by `j->i`, relative to the previous edge count.
    Reciprocity,
    /// `T`: previous two-paths `i->j->k` closed by `i->k`.
    Transitivity,
    /// `WD`: density among same-label pairs.
    WithinDensity,
    /// `BD`: density among different-label pairs.
    BetweenDensity,
    /// `WR`: reciprocity among same-label pairs.
    WithinReciprocity,
    /// `BR`: reciprocity among different-label pairs.
    BetweenReciprocity,
    /// `RT`: previous two-paths `j->k->i` answered by `i->j`.
    ReverseTransitivity,
    /// `CSd`: nodes sharing a previous supporter link up.
    CoSupported,
    /// `CSg`: nodes supporting a common node link up.
    CoSupporting,
    /// `P`: links into nodes that already had a supporter.
    Popularity,
    /// `G`: links out of nodes that already supported someone.
    Generosity,
}

impl Statistic {
    pub const ALL: [Statistic; 13] = [
        Statistic::Density,
        Statistic::Stability,
        Statistic::Reciprocity,
        Statistic::Transitivity,
        Statistic::WithinDensity,
        Statistic::BetweenDensity,
        Statistic::WithinReciprocity,
        Statistic::BetweenReciprocity,
        Statistic::ReverseTransitivity,
        Statistic::CoSupported,
        Statistic::CoSupporting,
        Statistic::Popularity,
        Statistic::Generosity,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Statistic::Density => "D",
            Statistic::Stability => "S",
            Statistic::Reciprocity => "R",
            Statistic::Transitivity => "T",
            Statistic::WithinDensity => "WD",
            Statistic::BetweenDensity => "BD",
            Statistic::WithinReciprocity => "WR",
            Statistic::BetweenReciprocity => "BR",
            Statistic::ReverseTransitivity => "RT",
            Statistic::CoSupported => "CSd",
            Statistic::CoSupporting => "CSg",
            Statistic::Popularity => "P",
            Statistic::Generosity => "G",
        }
    }

    pub fn from_symbol(symbol: &str) -> Result<Statistic> {
        Statistic::ALL
            .into_iter()
            .find(|s| s.symbol() == symbol)
            .ok_or_else(|| TergmError::UnknownStatistic(symbol.to_string()))
    }

    pub fn requires_labels(self) -> bool {
        matches!(
            self,
            Statistic::WithinDensity
                | Statistic::BetweenDensity
                | Statistic::WithinReciprocity
                | Statistic::BetweenReciprocity
        )
    }

    pub fn is_triadic(self) -> bool {
        matches!(
            self,
            Statistic::Transitivity
                | Statistic::ReverseTransitivity
                | Statistic::CoSupported
                | Statistic::CoSupporting
                | Statistic::Popularity
                | Statistic::Generosity
        )
    }

    /// Ratio statistics are scaled by `n / denominator`; the rest by `1/(n-1)`.
    pub fn is_ratio(self) -> bool {
        !matches!(
            self,
            Statistic::Density
                | Statistic::Stability
                | Statistic::WithinDensity
                | Statistic::BetweenDensity
        )
    }

    /// Largest `|ψ_ij(a, A^{t-1})|` over every possible previous network.
    pub fn global_edge_bound(self, n: usize) -> f64 {
        let n_f = n as f64;
        match self {
            Statistic::Density
            | Statistic::Stability
            | Statistic::WithinDensity
            | Statistic::BetweenDensity => 1.0 / (n_f - 1.0),
            // n * indegree_j / ((n-2) * edges) <= n / (n-2)
            Statistic::Popularity | Statistic::Generosity => n_f / (n_f - 2.0).max(1.0),
            _ => n_f,
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[inline]
fn same_label(labels: Option<&[usize]>, i: usize, j: usize) -> f64 {
    let l = labels.expect("labels checked before evaluation");
    f64::from(u8::from(l[i] == l[j]))
}

fn check_inputs(
    stat_name: &str,
    needs_labels: bool,
    n: usize,
    n_prev: usize,
    labels: Option<&[usize]>,
) -> Result<()> {
    if n != n_prev {
        return Err(TergmError::DimensionMismatch {
            expected: n_prev,
            found: n,
        });
    }
    if needs_labels {
        match labels {
            None => return Err(TergmError::MissingLabels(stat_name.to_string())),
            Some(l) if l.len() != n => {
                return Err(TergmError::DimensionMismatch {
                    expected: n,
                    found: l.len(),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Raw numerator and denominator sums of a built-in statistic, evaluated
/// straight from its defining formula. For non-ratio statistics the
/// denominator is reported as `n - 1`.
pub fn raw_sums<C: Adjacency, P: Adjacency>(
    stat: Statistic,
    cur: &C,
    prev: &P,
    labels: Option<&[usize]>,
) -> (f64, f64) {
    let n = cur.order();
    let c = |i: usize, j: usize| f64::from(cur.at(i, j));
    let p = |i: usize, j: usize| f64::from(prev.at(i, j));
    let mut num = 0.0;
    let mut den = 0.0;
    if !stat.is_triadic() {
        for (i, j) in dyads(n) {
            match stat {
                Statistic::Density => num += c(i, j),
                Statistic::Stability => {
                    num += c(i, j) * p(i, j) + (1.0 - c(i, j)) * (1.0 - p(i, j))
                }
                Statistic::WithinDensity => num += c(i, j) * same_label(labels, i, j),
                Statistic::BetweenDensity => num += c(i, j) * (1.0 - same_label(labels, i, j)),
                Statistic::Reciprocity => {
                    num += c(j, i) * p(i, j);
                    den += p(i, j);
                }
                Statistic::WithinReciprocity => {
                    let w = same_label(labels, i, j);
                    num += c(j, i) * p(i, j) * w;
                    den += p(i, j) * w;
                }
                Statistic::BetweenReciprocity => {
                    let w = 1.0 - same_label(labels, i, j);
                    num += c(j, i) * p(i, j) * w;
                    den += p(i, j) * w;
                }
                _ => unreachable!(),
            }
        }
        if !stat.is_ratio() {
            den = n as f64 - 1.0;
        }
        return (num, den);
    }
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                let (nu, de) = match stat {
                    Statistic::Transitivity => (c(i, k) * p(i, j) * p(j, k), p(i, j) * p(j, k)),
                    Statistic::ReverseTransitivity => {
                        (p(j, k) * p(k, i) * c(i, j), p(j, k) * p(k, i))
                    }
                    Statistic::CoSupported => (p(k, i) * p(k, j) * c(i, j), p(k, i) * p(k, j)),
                    Statistic::CoSupporting => (p(i, k) * p(j, k) * c(i, j), p(i, k) * p(j, k)),
                    Statistic::Popularity => (p(k, j) * c(i, j), p(k, j)),
                    Statistic::Generosity => (p(i, k) * c(i, j), p(i, k)),
                    _ => unreachable!(),
                };
                num += nu;
                den += de;
            }
        }
    }
    (num, den)
}

/// Scales raw sums into the statistic value.
pub fn scaled_value(stat: Statistic, n: usize, num: f64, den: f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if stat.is_ratio() {
        if den == 0.0 {
            0.0
        } else {
            n as f64 * num / den
        }
    } else {
        num / (n as f64 - 1.0)
    }
}

/// Value of one built-in statistic by direct summation of its formula.
pub fn evaluate<C: Adjacency, P: Adjacency>(
    stat: Statistic,
    cur: &C,
    prev: &P,
    labels: Option<&[usize]>,
) -> Result<f64> {
    check_inputs(
        stat.symbol(),
        stat.requires_labels(),
        cur.order(),
        prev.order(),
        labels,
    )?;
    let (num, den) = raw_sums(stat, cur, prev, labels);
    Ok(scaled_value(stat, cur.order(), num, den))
}

/// Base and per-dyad change scores of a single term, `n * n` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadScores {
    pub base: f64,
    pub delta: Vec<f64>,
}

/// A user-supplied statistic.
///
/// Statistics that are linear in the current network return their
/// decomposition from [`CustomStatistic::change_scores`] and can be used on
/// the exact path. Others are only accepted by the sampling-based paths.
pub trait CustomStatistic: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn requires_labels(&self) -> bool {
        false
    }

    fn evaluate(&self, cur: &Network, prev: &Network, labels: Option<&[usize]>) -> f64;

    fn is_factorized(&self) -> bool {
        false
    }

    fn change_scores(&self, _prev: &Network, _labels: Option<&[usize]>) -> Option<DyadScores> {
        None
    }

    /// Value with `cur_ij = 1` minus value with `cur_ij = 0`.
    fn toggle_change(
        &self,
        cur: &Network,
        prev: &Network,
        labels: Option<&[usize]>,
        i: usize,
        j: usize,
    ) -> f64 {
        let mut on = cur.clone();
        on.set(i, j, true);
        let mut off = cur.clone();
        off.set(i, j, false);
        self.evaluate(&on, prev, labels) - self.evaluate(&off, prev, labels)
    }

    /// Bound on `|ψ_ij|` needed for degeneracy bounds; `None` if unbounded or unknown.
    fn edge_bound(&self, _n: usize) -> Option<f64> {
        None
    }
}

#[derive(Clone)]
pub enum Term {
    Builtin(Statistic),
    Custom(Arc<dyn CustomStatistic>),
}

impl Term {
    pub fn name(&self) -> &str {
        match self {
            Term::Builtin(s) => s.symbol(),
            Term::Custom(c) => c.name(),
        }
    }

    pub fn requires_labels(&self) -> bool {
        match self {
            Term::Builtin(s) => s.requires_labels(),
            Term::Custom(c) => c.requires_labels(),
        }
    }

    pub fn is_factorized(&self) -> bool {
        match self {
            Term::Builtin(_) => true,
            Term::Custom(c) => c.is_factorized(),
        }
    }

    pub fn as_builtin(&self) -> Option<Statistic> {
        match self {
            Term::Builtin(s) => Some(*s),
            Term::Custom(_) => None,
        }
    }

    pub fn evaluate(&self, cur: &Network, prev: &Network, labels: Option<&[usize]>) -> Result<f64> {
        match self {
            Term::Builtin(s) => evaluate(*s, cur, prev, labels),
            Term::Custom(c) => {
                check_inputs(c.name(), c.requires_labels(), cur.n(), prev.n(), labels)?;
                Ok(c.evaluate(cur, prev, labels))
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered statistic collection; parameter `m` always belongs to term `m`.
#[derive(Clone, Debug)]
pub struct StatisticSet {
    terms: Vec<Term>,
}

impl StatisticSet {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        for (m, t) in terms.iter().enumerate() {
            if terms[..m].iter().any(|u| u.name() == t.name()) {
                return Err(TergmError::DuplicateStatistic(t.name().to_string()));
            }
        }
        Ok(StatisticSet { terms })
    }

    pub fn builtin(stats: &[Statistic]) -> Result<Self> {
        Self::new(stats.iter().copied().map(Term::Builtin).collect())
    }

    /// Parses a comma-separated symbol list such as `D,S,R,T`.
    pub fn parse(list: &str) -> Result<Self> {
        let stats = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(Statistic::from_symbol)
            .collect::<Result<Vec<_>>>()?;
        if stats.is_empty() {
            return Err(TergmError::InvalidConfig("empty statistic list".into()));
        }
        Self::builtin(&stats)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name().to_string()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name() == name)
    }

    pub fn requires_labels(&self) -> bool {
        self.terms.iter().any(Term::requires_labels)
    }

    pub fn is_factorized(&self) -> bool {
        self.terms.iter().all(Term::is_factorized)
    }

    /// All built-in, in order; `None` if any term is custom.
    pub fn builtins(&self) -> Option<Vec<Statistic>> {
        self.terms.iter().map(Term::as_builtin).collect()
    }

    pub fn check_labels(&self, n: usize, labels: Option<&[usize]>) -> Result<()> {
        for t in &self.terms {
            check_inputs(t.name(), t.requires_labels(), n, n, labels)?;
        }
        Ok(())
    }

    /// `Ψ(cur, prev)` by direct evaluation of every term.
    pub fn evaluate_all(
        &self,
        cur: &Network,
        prev: &Network,
        labels: Option<&[usize]>,
    ) -> Result<Vec<f64>> {
        self.terms
            .iter()
            .map(|t| t.evaluate(cur, prev, labels))
            .collect()
    }

    /// Closed-form change-score decomposition given the previous network.
    pub fn change_scores(
        &self,
        prev: &Network,
        labels: Option<&[usize]>,
    ) -> Result<ChangeScoreTable> {
        let n = prev.n();
        self.check_labels(n, labels)?;
        let k = self.len();
        let summary = PrevSummary::new(prev);
        let mut table = ChangeScoreTable {
            k,
            n,
            base: vec![0.0; k],
            delta: vec![0.0; k * n * n],
        };
        for (m, term) in self.terms.iter().enumerate() {
            let scores = match term {
                Term::Builtin(s) => builtin_scores(*s, &summary, labels),
                Term::Custom(c) => c
                    .change_scores(prev, labels)
                    .ok_or_else(|| TergmError::NotFactorized(c.name().to_string()))?,
            };
            if scores.delta.len() != n * n {
                return Err(TergmError::DimensionMismatch {
                    expected: n * n,
                    found: scores.delta.len(),
                });
            }
            table.base[m] = scores.base;
            for (idx, d) in scores.delta.into_iter().enumerate() {
                if idx / n != idx % n {
                    table.delta[idx * k + m] = d;
                }
            }
        }
        Ok(table)
    }
}

/// `Ψ_m(A^t, A^{t-1}) = base[m] + Σ_ij A^t_ij · delta[m][i][j]` for a fixed `A^{t-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangeScoreTable {
    k: usize,
    n: usize,
    base: Vec<f64>,
    // dyad-major: the k scores of dyad (i, j) are contiguous
    delta: Vec<f64>,
}

impl ChangeScoreTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    #[inline]
    pub fn delta(&self, m: usize, i: usize, j: usize) -> f64 {
        self.delta[(i * self.n + j) * self.k + m]
    }

    /// The `k` change scores of dyad `(i, j)`.
    #[inline]
    pub fn dyad(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.n + j) * self.k;
        &self.delta[start..start + self.k]
    }

    /// Statistic vector of `cur` rebuilt from the decomposition.
    pub fn reconstruct(&self, cur: &Network) -> Vec<f64> {
        let mut out = self.base.clone();
        for (i, j) in cur.edges() {
            for (o, d) in out.iter_mut().zip(self.dyad(i, j)) {
                *o += d;
            }
        }
        out
    }

    /// Logit `θ · delta_ij` of every dyad, row-major with zero diagonal.
    pub fn linear_predictor(&self, theta: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.n * self.n];
        for (i, j) in dyads(self.n) {
            eta[i * self.n + j] = self.dyad(i, j).iter().zip(theta).map(|(d, t)| d * t).sum();
        }
        eta
    }
}

/// Pair counts of the previous network shared by the closed-form scores.
struct PrevSummary<'a> {
    prev: &'a Network,
    n: usize,
    edges: f64,
    indeg: Vec<f64>,
    outdeg: Vec<f64>,
    out_lists: Vec<Vec<usize>>,
    in_lists: Vec<Vec<usize>>,
    two_paths: OnceCell<Vec<f64>>,
    common_source: OnceCell<Vec<f64>>,
    common_target: OnceCell<Vec<f64>>,
}

impl<'a> PrevSummary<'a> {
    fn new(prev: &'a Network) -> Self {
        let n = prev.n();
        let mut indeg = vec![0.0; n];
        let mut outdeg = vec![0.0; n];
        let mut out_lists = vec![Vec::new(); n];
        let mut in_lists = vec![Vec::new(); n];
        for (i, j) in prev.edges() {
            outdeg[i] += 1.0;
            indeg[j] += 1.0;
            out_lists[i].push(j);
            in_lists[j].push(i);
        }
        PrevSummary {
            prev,
            n,
            edges: prev.edge_count() as f64,
            indeg,
            outdeg,
            out_lists,
            in_lists,
            two_paths: OnceCell::new(),
            common_source: OnceCell::new(),
            common_target: OnceCell::new(),
        }
    }

    #[inline]
    fn p(&self, i: usize, j: usize) -> f64 {
        f64::from(self.prev.at(i, j))
    }

    /// `W_ik = #{j : i->j->k}` (the diagonal is never read).
    fn two_paths(&self) -> &[f64] {
        self.two_paths.get_or_init(|| {
            let n = self.n;
            let mut w = vec![0.0; n * n];
            for j in 0..n {
                for &i in &self.in_lists[j] {
                    for &k in &self.out_lists[j] {
                        w[i * n + k] += 1.0;
                    }
                }
            }
            w
        })
    }

    /// `#{k : k->i, k->j}`.
    fn common_source(&self) -> &[f64] {
        self.common_source.get_or_init(|| {
            let n = self.n;
            let mut c = vec![0.0; n * n];
            for k in 0..n {
                for &i in &self.out_lists[k] {
                    for &j in &self.out_lists[k] {
                        c[i * n + j] += 1.0;
                    }
                }
            }
            c
        })
    }

    /// `#{k : i->k, j->k}`.
    fn common_target(&self) -> &[f64] {
        self.common_target.get_or_init(|| {
            let n = self.n;
            let mut c = vec![0.0; n * n];
            for k in 0..n {
                for &i in &self.in_lists[k] {
                    for &j in &self.in_lists[k] {
                        c[i * n + j] += 1.0;
                    }
                }
            }
            c
        })
    }
}

fn off_diagonal_sum(m: &[f64], n: usize) -> f64 {
    dyads(n).map(|(i, j)| m[i * n + j]).sum()
}

fn builtin_scores(stat: Statistic, s: &PrevSummary<'_>, labels: Option<&[usize]>) -> DyadScores {
    let n = s.n;
    let mut delta = vec![0.0; n * n];
    let mut base = 0.0;
    if n < 2 {
        return DyadScores { base, delta };
    }
    let inv = 1.0 / (n as f64 - 1.0);
    let n_f = n as f64;
    // ratio statistics: delta_ij = n * coef_ij / den, zero when den == 0
    let mut ratio = |coef: &dyn Fn(usize, usize) -> f64, den: f64| {
        if den > 0.0 {
            for (i, j) in dyads(n) {
                delta[i * n + j] = n_f * coef(i, j) / den;
            }
        }
    };
    match stat {
        Statistic::Density => {
            for (i, j) in dyads(n) {
                delta[i * n + j] = inv;
            }
        }
        Statistic::Stability => {
            for (i, j) in dyads(n) {
                let p = s.p(i, j);
                delta[i * n + j] = (2.0 * p - 1.0) * inv;
                base += (1.0 - p) * inv;
            }
        }
        Statistic::WithinDensity => {
            for (i, j) in dyads(n) {
                delta[i * n + j] = same_label(labels, i, j) * inv;
            }
        }
        Statistic::BetweenDensity => {
            for (i, j) in dyads(n) {
                delta[i * n + j] = (1.0 - same_label(labels, i, j)) * inv;
            }
        }
        Statistic::Reciprocity => ratio(&|i, j| s.p(j, i), s.edges),
        Statistic::WithinReciprocity => {
            let den: f64 = dyads(n)
                .map(|(i, j)| s.p(i, j) * same_label(labels, i, j))
                .sum();
            ratio(&|i, j| s.p(j, i) * same_label(labels, i, j), den)
        }
        Statistic::BetweenReciprocity => {
            let den: f64 = dyads(n)
                .map(|(i, j)| s.p(i, j) * (1.0 - same_label(labels, i, j)))
                .sum();
            ratio(&|i, j| s.p(j, i) * (1.0 - same_label(labels, i, j)), den)
        }
        Statistic::Transitivity => {
            let w = s.two_paths();
            ratio(&|i, j| w[i * n + j], off_diagonal_sum(w, n))
        }
        Statistic::ReverseTransitivity => {
            let w = s.two_paths();
            ratio(&|i, j| w[j * n + i], off_diagonal_sum(w, n))
        }
        Statistic::CoSupported => {
            let c = s.common_source();
            ratio(&|i, j| c[i * n + j], off_diagonal_sum(c, n))
        }
        Statistic::CoSupporting => {
            let c = s.common_target();
            ratio(&|i, j| c[i * n + j], off_diagonal_sum(c, n))
        }
        Statistic::Popularity => ratio(&|i, j| s.indeg[j] - s.p(i, j), (n_f - 2.0) * s.edges),
        Statistic::Generosity => ratio(&|i, j| s.outdeg[i] - s.p(i, j), (n_f - 2.0) * s.edges),
    }
    DyadScores { base, delta }
}

/// Running numerators and denominators of `Ψ(N, N)` for a single evolving
/// network `N`, as used when sampling an initial network from the static
/// model `exp{θ'Ψ(N, N)}`. Flipping one dyad updates every sum in `O(n)`.
#[derive(Clone, Debug)]
pub struct SelfTally {
    stats: Vec<Statistic>,
    num: Vec<f64>,
    den: Vec<f64>,
}

impl SelfTally {
    pub fn new(stats: &[Statistic], net: &Network, labels: Option<&[usize]>) -> Result<Self> {
        let mut num = Vec::with_capacity(stats.len());
        let mut den = Vec::with_capacity(stats.len());
        for &s in stats {
            check_inputs(s.symbol(), s.requires_labels(), net.n(), net.n(), labels)?;
            let (a, b) = raw_sums(s, net, net, labels);
            num.push(a);
            den.push(b);
        }
        Ok(SelfTally {
            stats: stats.to_vec(),
            num,
            den,
        })
    }

    pub fn values(&self, n: usize) -> Vec<f64> {
        self.stats
            .iter()
            .zip(self.num.iter().zip(&self.den))
            .map(|(&s, (&a, &b))| scaled_value(s, n, a, b))
            .collect()
    }

    /// `(Δnum, Δden)` per statistic for switching dyad `(a, b)` from 0 to 1.
    /// Every summand touches a given dyad at most once, so the change does
    /// not depend on the current value of `(a, b)`.
    pub fn toggle_coefficients(
        &self,
        net: &Network,
        labels: Option<&[usize]>,
        a: usize,
        b: usize,
    ) -> Vec<(f64, f64)> {
        let n = net.n();
        let x = |i: usize, j: usize| f64::from(net.at(i, j));
        // c ranges over nodes other than a and b
        let (mut acb, mut acbc, mut cbca, mut bcca) = (0.0, 0.0, 0.0, 0.0);
        let (mut out_a, mut in_a, mut out_b, mut in_b) = (0.0, 0.0, 0.0, 0.0);
        for c in 0..n {
            if c == a || c == b {
                continue;
            }
            let (ac, ca, bc, cb) = (x(a, c), x(c, a), x(b, c), x(c, b));
            acb += ac * cb;
            acbc += ac * bc;
            cbca += cb * ca;
            bcca += bc * ca;
            out_a += ac;
            in_a += ca;
            out_b += bc;
            in_b += cb;
        }
        let transitive = acb + acbc + cbca;
        let two_path_den = out_b + in_a;
        let n_f = n as f64;
        self.stats
            .iter()
            .map(|&s| match s {
                Statistic::Density => (1.0, 0.0),
                Statistic::Stability => (0.0, 0.0),
                Statistic::WithinDensity => (same_label(labels, a, b), 0.0),
                Statistic::BetweenDensity => (1.0 - same_label(labels, a, b), 0.0),
                Statistic::Reciprocity => (2.0 * x(b, a), 1.0),
                Statistic::WithinReciprocity => {
                    let w = same_label(labels, a, b);
                    (2.0 * x(b, a) * w, w)
                }
                Statistic::BetweenReciprocity => {
                    let w = 1.0 - same_label(labels, a, b);
                    (2.0 * x(b, a) * w, w)
                }
                Statistic::Transitivity => (transitive, two_path_den),
                Statistic::ReverseTransitivity => (3.0 * bcca, two_path_den),
                Statistic::CoSupported => (transitive, 2.0 * out_a),
                Statistic::CoSupporting => (transitive, 2.0 * in_b),
                Statistic::Popularity => (2.0 * in_b, n_f - 2.0),
                Statistic::Generosity => (2.0 * out_a, n_f - 2.0),
            })
            .collect()
    }

    /// `θ'Ψ(N with ab=1) - θ'Ψ(N with ab=0)`.
    pub fn log_odds(
        &self,
        net: &Network,
        labels: Option<&[usize]>,
        theta: &[f64],
        a: usize,
        b: usize,
    ) -> f64 {
        let n = net.n();
        let on = net.has_edge(a, b);
        self.toggle_coefficients(net, labels, a, b)
            .into_iter()
            .enumerate()
            .map(|(m, (dn, dd))| {
                let (num1, den1, num0, den0) = if on {
                    (self.num[m], self.den[m], self.num[m] - dn, self.den[m] - dd)
                } else {
                    (self.num[m] + dn, self.den[m] + dd, self.num[m], self.den[m])
                };
                let s = self.stats[m];
                theta[m] * (scaled_value(s, n, num1, den1) - scaled_value(s, n, num0, den0))
            })
            .sum()
    }

    /// Records that dyad `(a, b)` of `net` is about to change to `value`.
    pub fn apply(
        &mut self,
        net: &Network,
        labels: Option<&[usize]>,
        a: usize,
        b: usize,
        value: bool,
    ) {
        if net.has_edge(a, b) == value {
            return;
        }
        let sign = if value { 1.0 } else { -1.0 };
        for (m, (dn, dd)) in self
            .toggle_coefficients(net, labels, a, b)
            .into_iter()
            .enumerate()
        {
            self.num[m] += sign * dn;
            self.den[m] += sign * dd;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::WithDyad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_network(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Network {
        let mut a = Network::empty(n);
        for (i, j) in dyads(n) {
            a.set(i, j, rng.random::<f64>() < density);
        }
        a
    }

    fn random_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..2)).collect()
    }

    fn net(n: usize, edges: &[(usize, usize)]) -> Network {
        Network::from_edges(n, edges).unwrap()
    }

    #[test]
    fn stability_of_unchanged_network_is_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..7 {
            let a = random_network(n, 0.4, &mut rng);
            assert!(
                (evaluate(Statistic::Stability, &a, &a, None).unwrap() - n as f64).abs() < 1e-12
            );
        }
    }

    #[test]
    fn reciprocity_on_empty_previous_is_zero() {
        let cur = Network::complete(4);
        assert_eq!(
            evaluate(Statistic::Reciprocity, &cur, &Network::empty(4), None).unwrap(),
            0.0
        );
    }

    #[test]
    fn density_hand_value() {
        let a = net(3, &[(0, 1), (1, 2)]);
        assert!((evaluate(Statistic::Density, &a, &a, None).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transitivity_hand_value() {
        let prev = net(3, &[(0, 1), (1, 2)]);
        let cur = net(3, &[(0, 2)]);
        assert!(
            (evaluate(Statistic::Transitivity, &cur, &prev, None).unwrap() - 3.0).abs() < 1e-15
        );
    }

    #[test]
    fn density_scores_are_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prev = random_network(4, 0.5, &mut rng);
        let t = StatisticSet::builtin(&[Statistic::Density])
            .unwrap()
            .change_scores(&prev, None)
            .unwrap();
        assert_eq!(t.base(), &[0.0]);
        for (i, j) in dyads(4) {
            assert!((t.delta(0, i, j) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stability_scores_follow_previous_edges() {
        let n = 5;
        let prev = net(n, &[(0, 1)]);
        let t = StatisticSet::builtin(&[Statistic::Stability])
            .unwrap()
            .change_scores(&prev, None)
            .unwrap();
        let inv = 1.0 / (n as f64 - 1.0);
        assert!((t.delta(0, 0, 1) - inv).abs() < 1e-15);
        assert!((t.delta(0, 1, 0) + inv).abs() < 1e-15);
        assert!((t.delta(0, 2, 3) + inv).abs() < 1e-15);
    }

    #[test]
    fn reciprocity_scores_vanish_on_empty_previous() {
        let t = StatisticSet::builtin(&[Statistic::Reciprocity])
            .unwrap()
            .change_scores(&Network::empty(4), None)
            .unwrap();
        assert_eq!(t.base(), &[0.0]);
        assert!(dyads(4).all(|(i, j)| t.delta(0, i, j) == 0.0));
    }

    #[test]
    fn empty_networks_dsrt() {
        let n = 5;
        let e = Network::empty(n);
        let set = StatisticSet::parse("D,S,R,T").unwrap();
        assert_eq!(
            set.evaluate_all(&e, &e, None).unwrap(),
            vec![0.0, n as f64, 0.0, 0.0]
        );
    }

    #[test]
    fn labels_required_for_party_terms() {
        let e = Network::empty(3);
        assert!(matches!(
            evaluate(Statistic::WithinDensity, &e, &e, None),
            Err(TergmError::MissingLabels(_))
        ));
        assert!(matches!(
            evaluate(
                Statistic::Density,
                &Network::empty(3),
                &Network::empty(4),
                None
            ),
            Err(TergmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn symbols_round_trip_and_duplicates_rejected() {
        for s in Statistic::ALL {
            assert_eq!(Statistic::from_symbol(s.symbol()).unwrap(), s);
        }
        assert!(StatisticSet::parse("D,D").is_err());
        assert!(StatisticSet::parse("D,X").is_err());
    }

    #[test]
    fn linearity_certificate_all_builtins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = StatisticSet::builtin(&Statistic::ALL).unwrap();
        for n in 2..=6 {
            for _ in 0..200 {
                let prev = random_network(n, rng.random(), &mut rng);
                let cur = random_network(n, rng.random(), &mut rng);
                let labels = random_labels(n, &mut rng);
                let direct = set.evaluate_all(&cur, &prev, Some(&labels)).unwrap();
                let table = set.change_scores(&prev, Some(&labels)).unwrap();
                let rebuilt = table.reconstruct(&cur);
                for (m, (a, b)) in direct.iter().zip(&rebuilt).enumerate() {
                    assert!(
                        (a - b).abs() < 1e-12,
                        "{} n={n}: {a} vs {b}",
                        Statistic::ALL[m]
                    );
                }
                for v in direct {
                    assert!((-1e-12..=n as f64 + 1e-12).contains(&v));
                }
            }
        }
    }

    #[test]
    fn party_split_adds_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = 6;
            let prev = random_network(n, 0.5, &mut rng);
            let cur = random_network(n, 0.5, &mut rng);
            let l = random_labels(n, &mut rng);
            let v = |s| evaluate(s, &cur, &prev, Some(&l)).unwrap();
            assert!(
                (v(Statistic::WithinDensity) + v(Statistic::BetweenDensity)
                    - v(Statistic::Density))
                .abs()
                    < 1e-12
            );
            let (_, dw) = raw_sums(Statistic::WithinReciprocity, &cur, &prev, Some(&l));
            let (_, db) = raw_sums(Statistic::BetweenReciprocity, &cur, &prev, Some(&l));
            let (_, d) = raw_sums(Statistic::Reciprocity, &cur, &prev, Some(&l));
            if dw > 0.0 && db > 0.0 {
                let lhs =
                    v(Statistic::WithinReciprocity) * dw + v(Statistic::BetweenReciprocity) * db;
                assert!((lhs - v(Statistic::Reciprocity) * d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn self_tally_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 3..=7 {
            let labels = random_labels(n, &mut rng);
            let mut a = random_network(n, 0.4, &mut rng);
            let mut tally = SelfTally::new(&Statistic::ALL, &a, Some(&labels)).unwrap();
            for _ in 0..60 {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                // generic local change: evaluate with the dyad forced both ways
                let on = WithDyad {
                    base: &a,
                    i,
                    j,
                    value: 1,
                };
                let off = WithDyad {
                    base: &a,
                    i,
                    j,
                    value: 0,
                };
                for (m, &s) in Statistic::ALL.iter().enumerate() {
                    let (n1, d1) = raw_sums(s, &on, &on, Some(&labels));
                    let (n0, d0) = raw_sums(s, &off, &off, Some(&labels));
                    let (dn, dd) = tally.toggle_coefficients(&a, Some(&labels), i, j)[m];
                    assert!((n1 - n0 - dn).abs() < 1e-9, "{s} numerator");
                    if s.is_ratio() {
                        assert!((d1 - d0 - dd).abs() < 1e-9, "{s} denominator");
                    }
                }
                let v = !a.has_edge(i, j);
                tally.apply(&a, Some(&labels), i, j, v);
                a.set(i, j, v);
                let direct: Vec<f64> = Statistic::ALL
                    .iter()
                    .map(|&s| evaluate(s, &a, &a, Some(&labels)).unwrap())
                    .collect();
                for (x, y) in tally.values(n).iter().zip(&direct) {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}
