use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{State, SubMdpParams, ThresholdPolicy};
use crate::steady_state::policy_averages;

/// Threshold policy that idles exactly the states of the first `w` levels,
/// with its long-run averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub policy: ThresholdPolicy,
    pub j: f64,
    pub a: f64,
}

/// One `(D, q, index)` row of a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    #[serde(rename = "D")]
    pub age: usize,
    pub q: u8,
    pub index: f64,
}

/// Whittle index of every state of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TableDocument", try_from = "TableDocument")]
pub struct WhittleTable {
    pub params: SubMdpParams,
    /// By flat state index.
    index: Vec<f64>,
    /// Distinct index values, strictly increasing.
    pub levels: Vec<f64>,
    /// States carrying each level.
    pub groups: Vec<Vec<State>>,
    /// `boundaries[w]` idles the groups of the first `w` levels; entry 0
    /// schedules everywhere and the last entry never schedules.
    pub boundaries: Vec<Boundary>,
}

impl WhittleTable {
    pub(crate) fn empty(params: SubMdpParams) -> Self {
        Self {
            params,
            index: vec![f64::NAN; params.num_states()],
            levels: Vec::new(),
            groups: Vec::new(),
            boundaries: Vec::new(),
        }
    }

    pub(crate) fn push_boundary(&mut self, policy: ThresholdPolicy, j: f64, a: f64) {
        self.boundaries.push(Boundary { policy, j, a });
    }

    /// Gives `states` the value `level`, folding it into the previous level
    /// when the two agree to `tol` relative.
    pub(crate) fn assign(&mut self, level: f64, states: Vec<State>, tol: f64) {
        let merge = self
            .levels
            .last()
            .is_some_and(|&last| (level - last).abs() <= tol * level.abs().max(last.abs()));
        let value = if merge {
            let last = *self.levels.last().unwrap();
            info!("level {level} merged into {last}");
            // The merged boundary is superseded by the one pushed next.
            self.boundaries.pop();
            self.groups.last_mut().unwrap().extend(states.iter().copied());
            last
        } else {
            self.levels.push(level);
            self.groups.push(states.clone());
            level
        };
        for s in states {
            self.index[self.params.index(s)] = value;
        }
    }

    /// Checks the table invariants.
    pub(crate) fn finish(&self) -> Result<()> {
        let params = &self.params;
        if let Some(i) = self.index.iter().position(|x| !x.is_finite()) {
            return Err(Error::Structural(format!(
                "state {} received no index",
                params.state(i)
            )));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Structural("index levels are not strictly increasing".into()));
        }
        if self.levels.first().is_some_and(|&l| l <= 0.0) {
            return Err(Error::Structural(format!(
                "non-positive index level {}",
                self.levels[0]
            )));
        }
        for q in [false, true] {
            for age in 1..params.d_max {
                let here = self.index(State::new(age, q));
                let next = self.index(State::new(age + 1, q));
                if next < here {
                    return Err(Error::Structural(format!(
                        "index decreases from {} ({here}) to {} ({next})",
                        State::new(age, q),
                        State::new(age + 1, q)
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, s: State) -> f64 {
        self.index[self.params.index(s)]
    }

    /// Indices by flat state index.
    pub fn as_slice(&self) -> &[f64] {
        &self.index
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// 1-based level number of a state.
    pub fn level_of(&self, s: State) -> usize {
        let x = self.index(s);
        self.levels.partition_point(|&l| l < x) + 1
    }

    /// Rows ordered by `q`, then age.
    pub fn rows(&self) -> Vec<IndexRow> {
        self.params
            .states()
            .map(|s| IndexRow {
                age: s.age,
                q: s.q() as u8,
                index: self.index(s),
            })
            .collect()
    }

    pub fn max_index(&self) -> f64 {
        self.levels.last().copied().unwrap_or(0.0)
    }

    fn from_rows(params: SubMdpParams, rows: &[IndexRow]) -> Result<Self> {
        params.validate()?;
        let mut index = vec![f64::NAN; params.num_states()];
        for row in rows {
            let s = State::new(row.age, row.q == 1);
            params.check_state(s)?;
            if row.q > 1 {
                return Err(Error::Domain(format!("query flag {} is not 0 or 1", row.q)));
            }
            index[params.index(s)] = row.index;
        }
        let mut levels: Vec<f64> = index.iter().copied().filter(|x| x.is_finite()).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let groups: Vec<Vec<State>> = levels
            .iter()
            .map(|&l| params.states().filter(|&s| index[params.index(s)] == l).collect())
            .collect();
        let mut table = Self {
            params,
            index,
            levels,
            groups,
            boundaries: Vec::new(),
        };
        table.finish()?;
        let mut policy = ThresholdPolicy::always();
        for w in 0..=table.groups.len() {
            if w > 0 {
                for s in &table.groups[w - 1] {
                    let h = policy.threshold(s.query).max(s.age + 1);
                    policy = policy.with_threshold(s.query, h);
                }
            }
            let (j, a) = policy_averages(&params, &policy)?;
            table.push_boundary(policy, j, a);
        }
        Ok(table)
    }
}

/// On-disk form: parameters, levels and one row per state.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableDocument {
    params: SubMdpParams,
    levels: Vec<f64>,
    index: Vec<IndexRow>,
}

impl From<WhittleTable> for TableDocument {
    fn from(t: WhittleTable) -> Self {
        TableDocument {
            params: t.params,
            levels: t.levels.clone(),
            index: t.rows(),
        }
    }
}

impl TryFrom<TableDocument> for WhittleTable {
    type Error = Error;

    fn try_from(doc: TableDocument) -> Result<Self> {
        WhittleTable::from_rows(doc.params, &doc.index)
    }
}
