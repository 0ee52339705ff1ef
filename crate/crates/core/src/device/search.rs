//! Breadth-first shortest-path oracle over the simulator's state graph.

use std::collections::{BTreeMap, HashSet, VecDeque};

use super::sim::{goal_holds, SimState};
use super::suite::{GestureKind, Suite, TaskSpec, HOME_APP, INPUT_PLACEHOLDER};

/// Upper bound on explored states; beyond it the goal counts as unreachable.
pub const MAX_SEARCH_STATES: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Node {
    app: String,
    /// Current screens of the relevant apps only.
    screens: BTreeMap<String, String>,
    focus: Option<String>,
    /// Values of the goal's required variables, in goal order.
    vars: Vec<Option<String>>,
}

pub(crate) fn shortest_steps(suite: &Suite, state: &SimState, task: &TaskSpec) -> Option<u32> {
    let goal_app = task.goal_app().to_string();
    let tracked: Vec<&String> = task.goal.required_vars.keys().collect();
    // Apps that can neither hold the goal screen nor set a goal variable only
    // add detours, so their screens are left out of the state.
    let relevant: Vec<&String> = suite
        .app_ids()
        .iter()
        .filter(|id| {
            **id == goal_app
                || suite.apps[*id]
                    .transitions
                    .values()
                    .any(|t| t.effects.iter().any(|e| task.goal.required_vars.contains_key(&e.var)))
        })
        .collect();
    let start = Node {
        app: state.current_app.clone(),
        screens: state
            .screens
            .iter()
            .filter(|(app, _)| relevant.contains(app))
            .map(|(a, s)| (a.clone(), s.clone()))
            .collect(),
        focus: state.focused_element.clone(),
        vars: tracked.iter().map(|k| state.variables.get(*k).cloned()).collect(),
    };
    let is_goal = |n: &Node| {
        let Some(screen) = n.screens.get(&goal_app) else { return false };
        goal_holds(task, screen, |v| {
            tracked
                .iter()
                .position(|k| k.as_str() == v)
                .and_then(|i| n.vars[i].as_deref())
        })
    };

    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back((start, 0u32));
    while let Some((node, d)) = queue.pop_front() {
        if is_goal(&node) {
            return Some(d);
        }
        for next in successors(suite, &node, &tracked, task) {
            if seen.len() >= MAX_SEARCH_STATES {
                return None;
            }
            if seen.insert(next.clone()) {
                queue.push_back((next, d + 1));
            }
        }
    }
    None
}

fn successors(suite: &Suite, n: &Node, tracked: &[&String], task: &TaskSpec) -> Vec<Node> {
    let mut out = Vec::new();
    if n.app == HOME_APP {
        for app in suite.app_ids().iter().filter(|a| n.screens.contains_key(*a)) {
            out.push(Node {
                app: app.clone(),
                focus: None,
                ..n.clone()
            });
        }
        return out;
    }

    out.push(Node {
        app: HOME_APP.to_string(),
        focus: None,
        ..n.clone()
    });

    let Some(screen) = n.screens.get(&n.app) else { return out };
    let compiled = &suite.apps[&n.app];
    let elements = &compiled.screens[screen];
    let editable = |key: &str| elements.iter().any(|e| e.editable && e.key() == key);

    for ((from, trigger), t) in &compiled.transitions {
        if from != screen {
            continue;
        }
        let key = trigger.element_key.as_deref();
        if trigger.gesture == GestureKind::TextInput && n.focus.as_deref() != key {
            continue;
        }
        // Typed text is free; try each goal value the input could supply.
        let mut inputs: Vec<Option<&str>> = Vec::new();
        if trigger.gesture == GestureKind::TextInput {
            for eff in &t.effects {
                if eff.value == INPUT_PLACEHOLDER {
                    if let Some(v) = task.goal.required_vars.get(&eff.var) {
                        inputs.push(Some(v));
                    }
                }
            }
        }
        if inputs.is_empty() {
            inputs.push(None);
        }
        for input in inputs {
            let mut next = n.clone();
            for eff in &t.effects {
                let Some(i) = tracked.iter().position(|k| **k == eff.var) else { continue };
                let value = if eff.value == INPUT_PLACEHOLDER && trigger.gesture == GestureKind::TextInput {
                    match input {
                        Some(v) => v.to_string(),
                        None => String::new(),
                    }
                } else {
                    eff.value.clone()
                };
                next.vars[i] = Some(value);
            }
            next.screens.insert(n.app.clone(), t.to.clone());
            if trigger.gesture == GestureKind::Tap && key.is_some_and(editable) {
                next.focus = key.map(str::to_string);
            }
            clear_stale(suite, &mut next);
            out.push(next);
        }
    }

    for e in elements.iter().filter(|e| e.editable) {
        let key = e.key();
        let has_tap = compiled.transitions.contains_key(&(
            screen.clone(),
            super::suite::Trigger {
                element_key: Some(key.clone()),
                gesture: GestureKind::Tap,
            },
        ));
        if !has_tap && n.focus.as_deref() != Some(key.as_str()) {
            out.push(Node {
                focus: Some(key),
                ..n.clone()
            });
        }
    }
    out
}

fn clear_stale(suite: &Suite, n: &mut Node) {
    if let Some(key) = &n.focus {
        let present = n
            .screens
            .get(&n.app)
            .and_then(|s| suite.screen_elements(&n.app, s))
            .is_some_and(|els| els.iter().any(|e| &e.key() == key));
        if !present {
            n.focus = None;
        }
    }
}
