//! Communicating classes, closed-class detection and state classification.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::chain::StochasticMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Transient,
    NullRecurrent,
    PositiveRecurrent,
}

impl Classification {
    pub fn short(self) -> &'static str {
        match self {
            Classification::Transient => "T",
            Classification::NullRecurrent => "NR",
            Classification::PositiveRecurrent => "PR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommClass {
    pub id: usize,
    /// Member state indices, ascending.
    pub members: Vec<usize>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassStructure {
    /// Topological order of the condensation; closed classes last.
    pub classes: Vec<CommClass>,
    pub class_of: Vec<usize>,
    pub classification: Vec<Classification>,
}

impl ClassStructure {
    pub fn closed_classes(&self) -> impl Iterator<Item = &CommClass> {
        self.classes.iter().filter(|c| c.closed)
    }

    pub fn transient_states(&self) -> Vec<usize> {
        (0..self.class_of.len())
            .filter(|&i| self.classification[i] == Classification::Transient)
            .collect()
    }

    pub fn is_positive_recurrent(&self, i: usize) -> bool {
        self.classification[i] == Classification::PositiveRecurrent
    }
}

/// Strongly connected components of the positive-transition digraph, ordered
/// topologically (ties broken by smallest member, open before closed), with
/// each state classified.
pub fn communicating_classes(p: &StochasticMatrix) -> ClassStructure {
    let n = p.n_states();
    let (comp_of, n_comp) = tarjan(p);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for i in 0..n {
        members[comp_of[i]].push(i);
    }
    let mut closed = vec![true; n_comp];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    let mut indeg = vec![0usize; n_comp];
    for i in 0..n {
        let a = comp_of[i];
        for &j in p.row_cols(i) {
            let b = comp_of[j];
            if a != b {
                closed[a] = false;
                succ[a].push(b);
            }
        }
    }
    for s in succ.iter_mut() {
        s.sort_unstable();
        s.dedup();
        for &b in s.iter() {
            indeg[b] += 1;
        }
    }

    // Kahn's algorithm; closed classes are sinks so deferring them is valid.
    let key = |c: usize| Reverse((closed[c], members[c][0], c));
    let mut ready: BinaryHeap<_> = (0..n_comp).filter(|&c| indeg[c] == 0).map(key).collect();
    let mut order = Vec::with_capacity(n_comp);
    while let Some(Reverse((_, _, c))) = ready.pop() {
        order.push(c);
        for &b in &succ[c] {
            indeg[b] -= 1;
            if indeg[b] == 0 {
                ready.push(key(b));
            }
        }
    }
    debug_assert_eq!(order.len(), n_comp);

    let mut class_of = vec![0; n];
    let mut classes = Vec::with_capacity(n_comp);
    for (id, &c) in order.iter().enumerate() {
        for &i in &members[c] {
            class_of[i] = id;
        }
        classes.push(CommClass {
            id,
            members: std::mem::take(&mut members[c]),
            closed: closed[c],
        });
    }
    let classification = classify_states(&classes, &class_of);
    ClassStructure {
        classes,
        class_of,
        classification,
    }
}

/// Finite-chain classification: closed class members are positive recurrent,
/// all others transient.
pub fn classify_states(classes: &[CommClass], class_of: &[usize]) -> Vec<Classification> {
    class_of
        .iter()
        .map(|&c| {
            if classes[c].closed {
                Classification::PositiveRecurrent
            } else {
                Classification::Transient
            }
        })
        .collect()
}

/// Iterative Tarjan; returns the component id of every vertex and the count.
fn tarjan(p: &StochasticMatrix) -> (Vec<usize>, usize) {
    const UNSEEN: usize = usize::MAX;
    let n = p.n_states();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp_of = vec![UNSEEN; n];
    let mut stack: Vec<usize> = Vec::new();
    // (vertex, position of the next edge to explore)
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next_index = 0;
    let mut n_comp = 0;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            let cols = p.row_cols(v);
            if *edge < cols.len() {
                let w = cols[*edge];
                *edge += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp_of[w] = n_comp;
                    if w == v {
                        break;
                    }
                }
                n_comp += 1;
            }
        }
    }
    (comp_of, n_comp)
}
