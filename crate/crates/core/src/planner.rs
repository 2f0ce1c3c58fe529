//! Reachability and plan extraction from the support of a one-step inverse model.
//!
//! `B^a_{ss'} > 0` exactly when `M^a_{ss'} > 0`, so the support of `B` is the
//! transition graph of every action.

use serde::Serialize;

use crate::model::{ActionSeq, Mask, MaskedInverseModel};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportGraph {
    #[serde(serialize_with = "ser_masks")]
    pub g: Vec<Mask>,
    #[serde(serialize_with = "ser_mask")]
    pub g_plus: Mask,
}

fn ser_mask<S: serde::Serializer>(m: &Mask, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&crate::model::mask_to_rows(m), s)
}

fn ser_masks<S: serde::Serializer>(m: &[Mask], s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<_> = m.iter().map(crate::model::mask_to_rows).collect();
    serde::Serialize::serialize(&rows, s)
}

impl SupportGraph {
    pub fn k(&self) -> usize {
        self.g.len()
    }

    pub fn d(&self) -> usize {
        self.g_plus.nrows()
    }

    /// States reachable from `s` with action `a` in one step.
    pub fn successors(&self, a: usize, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.d()).filter(move |&t| self.g[a][(s, t)])
    }

    /// Every step of `states` follows the corresponding action's support.
    pub fn replay(&self, plan: &Plan) -> bool {
        plan.states.len() == plan.actions.len() + 1
            && plan
                .actions
                .as_slice()
                .iter()
                .enumerate()
                .all(|(t, &a)| a < self.k() && self.g[a][(plan.states[t], plan.states[t + 1])])
    }
}

pub fn support_graph(b1: &MaskedInverseModel) -> SupportGraph {
    let d = b1.d();
    let g: Vec<Mask> = (0..b1.num_slices())
        .map(|a| Mask::from_fn(d, d, |s, t| b1.is_defined(s, t) && b1.slice(a)[(s, t)] > 0.0))
        .collect();
    let g_plus = Mask::from_fn(d, d, |s, t| g.iter().any(|ga| ga[(s, t)]));
    SupportGraph { g, g_plus }
}

/// Backward sets: `sets[j][s]` iff `s` can reach `goal` in exactly `j` steps.
fn backward_sets(g: &SupportGraph, goal: usize, i: usize) -> Vec<Vec<bool>> {
    let d = g.d();
    let mut sets = Vec::with_capacity(i + 1);
    let mut cur = vec![false; d];
    cur[goal] = true;
    sets.push(cur);
    for _ in 0..i {
        let prev = sets.last().unwrap();
        let next = (0..d)
            .map(|s| (0..d).any(|t| prev[t] && g.g_plus[(s, t)]))
            .collect();
        sets.push(next);
    }
    sets
}

/// `[(G⁺)^i]_{s, goal} > 0`; `i = 0` means `s == goal`.
pub fn reachable(g: &SupportGraph, s: usize, goal: usize, i: usize) -> bool {
    backward_sets(g, goal, i)[i][s]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Plan {
    pub actions: ActionSeq,
    /// `i + 1` states starting at `s` and ending at the goal.
    pub states: Vec<usize>,
}

/// A length-`i` action sequence from `s` to `goal`, choosing the lowest feasible action
/// and then the lowest feasible successor at every step. Runs in `O(i d (d + k))`.
pub fn plan(g: &SupportGraph, s: usize, goal: usize, i: usize) -> Option<Plan> {
    let sets = backward_sets(g, goal, i);
    if !sets[i][s] {
        return None;
    }
    let mut actions = Vec::with_capacity(i);
    let mut states = vec![s];
    let mut cur = s;
    for j in (0..i).rev() {
        let target = &sets[j];
        let (a, next) = (0..g.k())
            .find_map(|a| g.successors(a, cur).find(|&t| target[t]).map(|t| (a, t)))
            .expect("backward set guarantees a feasible step");
        actions.push(a);
        states.push(next);
        cur = next;
    }
    Some(Plan {
        actions: ActionSeq::new(actions, g.k()).expect("actions below k"),
        states,
    })
}

/// Smallest `i ≤ max_i` with a plan, and the plan.
pub fn shortest_plan(g: &SupportGraph, s: usize, goal: usize, max_i: usize) -> Option<(usize, Plan)> {
    let sets = backward_sets(g, goal, max_i);
    let i = (0..=max_i).find(|&i| sets[i][s])?;
    plan(g, s, goal, i).map(|p| (i, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{perm_cmp, PermPair};
    use crate::model::{one_step_inverse, ControlledMP, Policy};
    use nalgebra::DMatrix;

    fn pair_m() -> ControlledMP {
        ControlledMP::new(vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 1.0]) / 4.0,
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]) / 4.0,
        ])
        .unwrap()
    }

    fn swap() -> SupportGraph {
        let m = ControlledMP::new(vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])]).unwrap();
        support_graph(&one_step_inverse(&m))
    }

    #[test]
    fn pair_supports() {
        let g = support_graph(&one_step_inverse(&pair_m()));
        assert_eq!(g.g[0], Mask::from_row_slice(2, 2, &[false, true, true, true]));
        assert_eq!(g.g[1], Mask::from_row_slice(2, 2, &[true, false, true, true]));
        assert!(g.g_plus.iter().all(|&x| x));
    }

    #[test]
    fn permutation_supports() {
        let m = perm_cmp(&PermPair::six_state(), &Policy::uniform(2, 6)).unwrap();
        let g = support_graph(&one_step_inverse(&m));
        for ga in &g.g {
            for s in 0..6 {
                assert_eq!(ga.row(s).iter().filter(|&&x| x).count(), 1);
                assert_eq!(ga.column(s).iter().filter(|&&x| x).count(), 1);
            }
        }
    }

    #[test]
    fn swap_parity() {
        let g = swap();
        assert!(reachable(&g, 0, 0, 0));
        assert!(reachable(&g, 0, 1, 1));
        assert!(!reachable(&g, 0, 1, 2));
        assert!(plan(&g, 0, 1, 2).is_none());
        let p = plan(&g, 0, 1, 3).unwrap();
        assert_eq!(p.states, vec![0, 1, 0, 1]);
        assert!(g.replay(&p));
    }

    #[test]
    fn shortest_and_tie_breaking() {
        let g = support_graph(&one_step_inverse(&pair_m()));
        let (i, p) = shortest_plan(&g, 0, 0, 5).unwrap();
        assert_eq!(i, 0);
        assert!(p.actions.is_empty());
        let p = plan(&g, 0, 0, 1).unwrap();
        assert_eq!(p.actions.as_slice(), &[1]);
        let p = plan(&g, 0, 1, 2).unwrap();
        assert_eq!(p.actions.as_slice(), &[0, 0]);
        assert_eq!(p.states, vec![0, 1, 1]);
    }
}
