//! Conflict-graph data model: budgets, valued edges, donation arcs, graph queries.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Certificate attached to constructed instances: both payoff derivatives at
/// tau = 0 for the transfer donor -> recipient are strictly positive.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Certificate {
    pub donor: usize,
    pub recipient: usize,
    #[serde(rename = "dU_donor")]
    pub d_u_donor: f64,
    #[serde(rename = "dU_recipient")]
    pub d_u_recipient: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContestInstance {
    budgets: Vec<f64>,
    /// Stored normalized: i < j, sorted by (i, j), values > 0.
    edges: Vec<(usize, usize, f64)>,
    donation_arcs: Vec<(usize, usize)>,
    pub certificate: Option<Certificate>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    budgets: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    donation_arcs: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    certificate: Option<Certificate>,
}

impl ContestInstance {
    pub fn new(budgets: Vec<f64>, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        Self::with_arcs(budgets, edges, Vec::new())
    }

    pub fn with_arcs(
        budgets: Vec<f64>,
        edges: Vec<(usize, usize, f64)>,
        donation_arcs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = budgets.len();
        if n < 2 {
            return Err(Error::Validation(format!(
                "budgets: need at least 2 players, got {n}"
            )));
        }
        for (i, b) in budgets.iter().enumerate() {
            if !b.is_finite() || *b <= 0.0 {
                return Err(Error::Validation(format!("budgets[{i}] = {b} not positive")));
            }
        }
        let mut norm: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
        for &(i, j, v) in &edges {
            if i == j {
                return Err(Error::Validation(format!("edges: self-loop at player {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::Validation(format!("edges: endpoint ({i},{j}) out of range")));
            }
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Validation(format!("edges: value {v} on ({i},{j}) not positive")));
            }
            norm.push((i.min(j), i.max(j), v));
        }
        norm.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in norm.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::Validation(format!(
                    "edges: duplicate edge ({},{})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j, v) in &norm {
            neighbors[i].push((j, v));
            neighbors[j].push((i, v));
        }
        for (i, nb) in neighbors.iter_mut().enumerate() {
            if nb.is_empty() {
                return Err(Error::Validation(format!("edges: player {i} is isolated")));
            }
            nb.sort_by_key(|&(j, _)| j);
        }
        for &(d, r) in &donation_arcs {
            if d == r {
                return Err(Error::Validation(format!("donation_arcs: self-arc at {d}")));
            }
            if d >= n || r >= n {
                return Err(Error::Validation(format!("donation_arcs: ({d},{r}) out of range")));
            }
        }
        let mut arcs = donation_arcs;
        arcs.sort_unstable();
        arcs.dedup();
        Ok(ContestInstance {
            budgets,
            edges: norm,
            donation_arcs: arcs,
            certificate: None,
            neighbors,
        })
    }

    pub fn load(mut source: impl Read) -> Result<Self> {
        let mut buf = String::new();
        source.read_to_string(&mut buf)?;
        Self::from_json(&buf)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: RawInstance =
            serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let mut inst = Self::with_arcs(raw.budgets, raw.edges, raw.donation_arcs)?;
        inst.certificate = raw.certificate;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        let raw = RawInstance {
            budgets: self.budgets.clone(),
            edges: self.edges.clone(),
            donation_arcs: self.donation_arcs.clone(),
            certificate: self.certificate.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("instance serialization")
    }

    pub fn n(&self) -> usize {
        self.budgets.len()
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn donation_arcs(&self) -> &[(usize, usize)] {
        &self.donation_arcs
    }

    /// Neighbors of i with edge values, sorted by index. v_{i,j} = v_{j,i}.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.neighbors[i].iter().find(|&&(k, _)| k == j).map(|&(_, v)| v)
    }

    pub fn check_player(&self, i: usize) -> Result<()> {
        if i < self.n() {
            Ok(())
        } else {
            Err(Error::Index(format!("player {i} out of range (n = {})", self.n())))
        }
    }

    /// True iff a path connects a and b in E \ {(a,b)}.
    pub fn connectivity_excluding(&self, a: usize, b: usize) -> Result<bool> {
        Ok(self.path_between(a, b)?.is_some())
    }

    /// Shortest path from a to b avoiding the direct edge (a,b); BFS with
    /// lowest-index neighbor first so ties break deterministically.
    pub fn path_between(&self, a: usize, b: usize) -> Result<Option<Vec<usize>>> {
        self.check_player(a)?;
        self.check_player(b)?;
        if a == b {
            return Err(Error::Index(format!("a and b must differ, both {a}")));
        }
        let mut prev = vec![usize::MAX; self.n()];
        let mut queue = std::collections::VecDeque::new();
        prev[a] = a;
        queue.push_back(a);
        while let Some(u) = queue.pop_front() {
            for &(w, _) in &self.neighbors[u] {
                if (u, w) == (a, b) || (u, w) == (b, a) {
                    continue;
                }
                if prev[w] == usize::MAX {
                    prev[w] = u;
                    if w == b {
                        let mut path = vec![b];
                        let mut cur = b;
                        while cur != a {
                            cur = prev[cur];
                            path.push(cur);
                        }
                        path.reverse();
                        return Ok(Some(path));
                    }
                    queue.push_back(w);
                }
            }
        }
        Ok(None)
    }
}

/// Per-player allocation x_{i,j} over j in N_i.
pub type AllocationProfile = Vec<std::collections::BTreeMap<usize, f64>>;

#[cfg(test)]
mod tests {
    use super::*;

    fn line3() -> ContestInstance {
        ContestInstance::from_json(r#"{"budgets":[6,6,1],"edges":[[0,1,2.0],[1,2,10.0]]}"#)
            .unwrap()
    }

    #[test]
    fn loads_three_line() {
        let inst = line3();
        assert_eq!(inst.n(), 3);
        assert_eq!(inst.edges(), &[(0, 1, 2.0), (1, 2, 10.0)]);
    }

    #[test]
    fn minimal_two_player() {
        let inst = ContestInstance::from_json(r#"{"budgets":[1,1],"edges":[[0,1,4.0]]}"#).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.value(0, 1), Some(4.0));
        assert_eq!(inst.value(1, 0), Some(4.0));
    }

    #[test]
    fn duplicate_edge_after_normalization() {
        let err =
            ContestInstance::from_json(r#"{"budgets":[1,1],"edges":[[0,1,4.0],[1,0,3.0]]}"#)
                .unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate")));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ContestInstance::new(vec![1.0, -1.0], vec![(0, 1, 1.0)]).is_err());
        assert!(ContestInstance::new(vec![1.0, 1.0], vec![(0, 1, 0.0)]).is_err());
        assert!(ContestInstance::new(vec![1.0, 1.0], vec![(0, 0, 1.0)]).is_err());
        assert!(ContestInstance::new(vec![1.0, 1.0], vec![(0, 2, 1.0)]).is_err());
        // isolated player 2
        assert!(ContestInstance::new(vec![1.0, 1.0, 1.0], vec![(0, 1, 1.0)]).is_err());
    }

    #[test]
    fn round_trip() {
        let inst = line3();
        let back = ContestInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn connectivity_and_paths() {
        let inst = line3();
        assert!(inst.connectivity_excluding(0, 2).unwrap());
        assert_eq!(inst.path_between(0, 2).unwrap(), Some(vec![0, 1, 2]));

        let pair = ContestInstance::new(vec![1.0, 1.0], vec![(0, 1, 1.0)]).unwrap();
        assert!(!pair.connectivity_excluding(0, 1).unwrap());
        assert_eq!(pair.path_between(0, 1).unwrap(), None);

        let cyc3 = ContestInstance::new(
            vec![1.0; 3],
            vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)],
        )
        .unwrap();
        assert!(cyc3.connectivity_excluding(0, 1).unwrap());

        // 4-cycle: two equal paths 0-1-2 and 0-3-2; lowest-index first wins
        let cyc4 = ContestInstance::new(
            vec![1.0; 4],
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)],
        )
        .unwrap();
        assert_eq!(cyc4.path_between(0, 2).unwrap(), Some(vec![0, 1, 2]));
    }

    #[test]
    fn neighbor_symmetry() {
        let inst = line3();
        for i in 0..inst.n() {
            for &(j, v) in inst.neighbors(i) {
                assert_eq!(inst.value(j, i), Some(v));
            }
        }
    }
}
