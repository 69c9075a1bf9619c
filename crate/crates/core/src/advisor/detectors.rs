use std::collections::{BTreeSet, HashSet};

use super::{Entity, EntityKind};
use crate::cpg::{CallId, CallKind, CallSite, CodePropertyGraph, DeclKind, LoopScope, StatementNode};
use crate::source::LineSpan;

/// Self-calling methods with no memo table: no identifier both read and
/// written indirectly that lives outside the method body.
pub fn detect_recursion_without_memoization(g: &CodePropertyGraph) -> Vec<Entity> {
    let mut out = Vec::new();
    for f in g.self_call_methods() {
        let reads = g.indirect_reads(f).expect("method from graph");
        let writes = g.indirect_writes(f).expect("method from graph");
        let memo = reads.intersection(&writes).any(|id| !g.declares(f, id).expect("method from graph"));
        if !memo {
            let m = g.method(f).expect("method from graph");
            out.push(Entity { kind: EntityKind::Method, name: m.name.clone(), span: m.span });
        }
    }
    out
}

/// Containers that only ever use fixed-size-compatible operations.
pub fn detect_static_replaceable_container(
    g: &CodePropertyGraph,
    containers: &[String],
    allowed_ops: &[String],
) -> Vec<Entity> {
    let mut out = Vec::new();
    for d in g.declarations() {
        if d.kind != DeclKind::Variable
            || !containers.contains(&d.ty.base)
            || d.ty.is_ref
            || d.ty.is_ptr
            || d.is_array
            || d.escapes
            || d.ty.is_container_of_containers()
        {
            continue;
        }
        let ops = g.container_operations_of(d.id);
        if ops.is_empty() || ops.iter().any(|o| !allowed_ops.contains(&o.op)) {
            continue;
        }
        let end = g
            .uses_of(d.id)
            .map(|u| u.span.end_line)
            .chain(ops.iter().map(|o| o.span.end_line))
            .max()
            .unwrap_or(d.span.end_line)
            .max(d.span.end_line);
        out.push(Entity {
            kind: EntityKind::Variable,
            name: d.name.clone(),
            span: LineSpan::new(d.span.start_line, end),
        });
    }
    out
}

/// Unresolved library calls named in `calls`, one entity per call site.
pub fn detect_slow_calls(
    g: &CodePropertyGraph,
    calls: &[String],
    unless_calls: &[String],
    integral_arg: Option<usize>,
) -> Vec<Entity> {
    if !unless_calls.is_empty() && !g.call_sites(unless_calls).is_empty() {
        return Vec::new();
    }
    g.call_sites(calls)
        .into_iter()
        .filter(|c| !c.is_resolved() && !matches!(c.kind, CallKind::Member { .. }))
        .filter(|c| match integral_arg {
            Some(i) => c.args.get(i).is_some_and(|a| a.integral),
            None => true,
        })
        .map(|c| Entity { kind: EntityKind::Call, name: c.name.clone(), span: c.span })
        .collect()
}

/// Calls inside loops whose inputs the loop never changes.
///
/// The reported span grows over the following statements of the same block
/// that only consume the call's results and otherwise loop-invariant data.
pub fn detect_loop_invariant_calls(g: &CodePropertyGraph, hoistable: &[String]) -> Vec<Entity> {
    let invariant: BTreeSet<CallId> = g
        .calls()
        .iter()
        .filter(|c| is_candidate(g, c, hoistable))
        .filter(|c| {
            let l = g.loop_scope(c.loop_scope.expect("candidate inside a loop"));
            let mutated = l.mutated_excluding(c.id);
            dependencies(g, c).iter().all(|d| !mutated.contains(d.as_str()))
        })
        .map(|c| c.id)
        .collect();

    let mut absorbed: HashSet<CallId> = HashSet::new();
    let mut out = Vec::new();
    for &id in &invariant {
        let c = g.call(id);
        if absorbed.contains(&id) || c.parent_call.is_some_and(|p| invariant.contains(&p)) {
            continue;
        }
        let l = g.loop_scope(c.loop_scope.unwrap());
        let mut span = c.span;
        if let Some(stmt) = c.stmt.map(|s| g.statement(s)).filter(|s| s.simple && s.loop_scope == Some(l.id)) {
            span = span.merge(stmt.span);
            let mut group: BTreeSet<String> = dependencies(g, c);
            group.extend(stmt.declares.iter().cloned());
            absorbed.extend(stmt.calls.iter().copied());
            for next in following(g, stmt) {
                if !absorbable(next, &group, l, c.id, &invariant) {
                    break;
                }
                span = span.merge(next.span);
                group.extend(next.declares.iter().cloned());
                absorbed.extend(next.calls.iter().copied());
            }
        }
        out.push(Entity { kind: EntityKind::Call, name: c.name.clone(), span });
    }
    out
}

fn is_candidate(g: &CodePropertyGraph, c: &CallSite, hoistable: &[String]) -> bool {
    if c.loop_scope.is_none() || c.in_loop_init || c.kind != CallKind::Function {
        return false;
    }
    let eligible = match c.callee {
        None => hoistable.contains(&c.name),
        Some(m) => m != c.caller && g.method(m).is_ok_and(|m| m.is_pure),
    };
    eligible && c.args.iter().any(|a| !a.identifiers.is_empty())
}

/// Argument identifiers plus the non-local names a user callee reads.
fn dependencies(g: &CodePropertyGraph, c: &CallSite) -> BTreeSet<String> {
    let mut deps: BTreeSet<String> = c.argument_identifiers().into_iter().map(String::from).collect();
    if let Some(m) = c.callee {
        let mut seen = BTreeSet::new();
        let mut stack = vec![m];
        while let Some(m) = stack.pop() {
            if !seen.insert(m) {
                continue;
            }
            for u in g.identifiers().iter().filter(|u| u.method == m) {
                let local = u.decl.is_some_and(|d| g.declaration(d).method == Some(m));
                if !local {
                    deps.insert(u.name.clone());
                }
            }
            stack.extend(g.calls().iter().filter(|x| x.caller == m).filter_map(|x| x.callee));
        }
    }
    deps
}

fn following<'g>(g: &'g CodePropertyGraph, stmt: &'g StatementNode) -> impl Iterator<Item = &'g StatementNode> {
    let mut rest: Vec<&StatementNode> = g
        .statements()
        .iter()
        .filter(|s| s.method == stmt.method && s.block == stmt.block && s.index > stmt.index)
        .collect();
    rest.sort_by_key(|s| s.index);
    rest.into_iter()
}

fn absorbable(
    s: &StatementNode,
    group: &BTreeSet<String>,
    l: &LoopScope,
    call: CallId,
    invariant: &BTreeSet<CallId>,
) -> bool {
    if !s.simple || s.reads.is_empty() || s.reads.is_disjoint(group) {
        return false;
    }
    let mutated = l.mutated_excluding(call);
    let reads_ok = s.reads.iter().all(|r| group.contains(r) || !mutated.contains(r.as_str()));
    let writes_ok = s.writes.is_subset(&s.declares);
    let calls_ok = s.calls.iter().all(|c| invariant.contains(c));
    reads_ok && writes_ok && calls_ok
}
