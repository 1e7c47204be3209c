//! Greedy state merging for relaxed diagrams: repeatedly merge the two nodes
//! whose states share the most members, preferring a smaller union and then
//! the lexicographically smaller union, until the layer fits the width.

use std::cmp::Ordering;
use std::collections::HashMap;

use super::StateSet;

pub(crate) struct Merged<T> {
    pub state: StateSet,
    pub payload: T,
    /// Whether this entry absorbed at least one other.
    pub merged: bool,
}

struct Item<T> {
    state: StateSet,
    payload: Option<T>,
    merged: bool,
    order: usize,
}

struct Class {
    state: StateSet,
    /// Live item ids, ascending by creation order.
    members: Vec<usize>,
}

/// Merges `items` down to at most `width` entries. Output keeps the order of
/// each entry's earliest member.
pub(crate) fn merge_to_width<T>(
    items: Vec<(StateSet, T)>,
    width: usize,
    mut merge: impl FnMut(T, T) -> T,
) -> Vec<Merged<T>> {
    let width = width.max(1);
    let mut pool: Vec<Item<T>> = items
        .into_iter()
        .enumerate()
        .map(|(k, (state, payload))| Item {
            state,
            payload: Some(payload),
            merged: false,
            order: k,
        })
        .collect();
    let mut alive = pool.len();
    if alive > width {
        let mut classes: Vec<Class> = Vec::new();
        let mut by_state: HashMap<StateSet, usize> = HashMap::new();
        for (id, item) in pool.iter().enumerate() {
            let c = *by_state.entry(item.state.clone()).or_insert_with(|| {
                classes.push(Class {
                    state: item.state.clone(),
                    members: Vec::new(),
                });
                classes.len() - 1
            });
            classes[c].members.push(id);
        }

        while alive > width {
            let (c, d) = best_pair(&classes);
            let a = classes[c].members.remove(0);
            let b = classes[d].members.remove(0);
            let state = if c == d {
                classes[c].state.clone()
            } else {
                classes[c].state.union(&classes[d].state)
            };
            let pa = pool[a].payload.take().expect("live item");
            let pb = pool[b].payload.take().expect("live item");
            let order = pool[a].order.min(pool[b].order);
            let id = pool.len();
            pool.push(Item {
                state: state.clone(),
                payload: Some(merge(pa, pb)),
                merged: true,
                order,
            });
            let target = *by_state.entry(state.clone()).or_insert_with(|| {
                classes.push(Class {
                    state,
                    members: Vec::new(),
                });
                classes.len() - 1
            });
            let members = &mut classes[target].members;
            let pos = members.partition_point(|&m| pool[m].order < order);
            members.insert(pos, id);
            alive -= 1;
        }
    }
    let mut out: Vec<(usize, Merged<T>)> = pool
        .into_iter()
        .filter_map(|it| {
            let Item {
                state,
                payload,
                merged,
                order,
            } = it;
            payload.map(|payload| {
                (
                    order,
                    Merged {
                        state,
                        payload,
                        merged,
                    },
                )
            })
        })
        .collect();
    out.sort_by_key(|(o, _)| *o);
    out.into_iter().map(|(_, m)| m).collect()
}

/// Best class pair by (overlap desc, union size asc, union lex asc), then by
/// class index.
fn best_pair(classes: &[Class]) -> (usize, usize) {
    let mut best: Option<(usize, usize, usize, usize, StateSet)> = None;
    let consider =
        |best: &mut Option<(usize, usize, usize, usize, StateSet)>, c: usize, d: usize| {
            let (s, t) = (&classes[c].state, &classes[d].state);
            let inter = if c == d {
                s.len()
            } else {
                s.intersection_len(t)
            };
            let uni = if c == d { s.len() } else { s.union_len(t) };
            let better = match best {
                None => true,
                Some((bi, bu, _, _, bs)) => match inter.cmp(bi).then((*bu).cmp(&uni)) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => {
                        let union = if c == d { s.clone() } else { s.union(t) };
                        union.lex_cmp(bs) == Ordering::Less
                    }
                },
            };
            if better {
                let union = if c == d { s.clone() } else { s.union(t) };
                *best = Some((inter, uni, c, d, union));
            }
        };
    for c in 0..classes.len() {
        let n = classes[c].members.len();
        if n == 0 {
            continue;
        }
        if n >= 2 {
            consider(&mut best, c, c);
        }
        for d in c + 1..classes.len() {
            if !classes[d].members.is_empty() {
                consider(&mut best, c, d);
            }
        }
    }
    let (_, _, c, d, _) = best.expect("at least two live items");
    (c, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[u32]) -> StateSet {
        v.iter().copied().collect()
    }

    #[test]
    fn merges_largest_overlap_first() {
        let items = vec![
            (set(&[0, 1, 2]), "a"),
            (set(&[0, 3]), "b"),
            (set(&[0, 1, 2, 3]), "c"),
        ];
        let out = merge_to_width(items, 2, |x, y| if x < y { x } else { y });
        assert_eq!(out.len(), 2);
        // {0,1,2} and {0,1,2,3} share three members.
        assert_eq!(out[0].state, set(&[0, 1, 2, 3]));
        assert!(out[0].merged);
        assert_eq!(out[1].state, set(&[0, 3]));
        assert!(!out[1].merged);
    }

    #[test]
    fn identical_states_merge_before_supersets() {
        let items = vec![(set(&[0, 1]), 1), (set(&[0, 1, 2]), 2), (set(&[0, 1]), 3)];
        let out = merge_to_width(items, 2, |x, y| x + y);
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].payload, &out[0].state), (4, &set(&[0, 1])));
    }

    #[test]
    fn width_one_collapses_to_the_union() {
        let items = vec![(set(&[0, 1]), ()), (set(&[0, 2]), ()), (set(&[0]), ())];
        let out = merge_to_width(items, 1, |_, _| ());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].state, set(&[0, 1, 2]));
    }

    #[test]
    fn no_merge_when_under_width() {
        let items = vec![(set(&[0]), 1), (set(&[0]), 2)];
        let out = merge_to_width(items, 2, |x, y| x + y);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|m| !m.merged));
    }
}
