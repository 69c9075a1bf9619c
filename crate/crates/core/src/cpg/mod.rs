//! Simplified code property graph for single-file C++ programs.
//!
//! The graph keeps the AST-derived nodes the bottleneck rules query
//! (methods, call sites, identifier uses, loops, declarations), plus
//! containment, call and def-use edges. Built once, never mutated.

pub mod ast;
mod builder;
pub mod lexer;
pub mod parser;

use std::collections::BTreeSet;
use std::io::{self, Write};

use serde::Serialize;
use serde_json::json;

use crate::error::{ParseError, QueryError};
use crate::source::{LineSpan, SourceUnit};
pub use ast::{Skip, TypeRef};

/// Name of the synthetic method holding statements found at file scope.
pub const TOPLEVEL_METHOD: &str = "<toplevel>";

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        pub struct $name(pub usize);
    };
}

id_type!(MethodId);
id_type!(CallId);
id_type!(UseId);
id_type!(LoopId);
id_type!(DeclId);
id_type!(StmtId);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodNode {
    pub id: MethodId,
    pub name: String,
    pub qualified: String,
    pub span: LineSpan,
    pub params: Vec<DeclId>,
    pub is_toplevel: bool,
    /// No side effects visible to callers; computed as a greatest fixpoint.
    pub is_pure: bool,
    /// Non-local names this method (or anything it calls) may write.
    pub effects: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallKind {
    Function,
    Member {
        receiver: Option<String>,
    },
    /// A `>>` / `<<` chain rooted at a standard stream object.
    Stream,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallArg {
    /// Identifiers read anywhere inside the argument, first occurrence order.
    pub identifiers: Vec<String>,
    pub literal: Option<String>,
    pub integral: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub id: CallId,
    pub name: String,
    pub qualified: String,
    pub kind: CallKind,
    pub caller: MethodId,
    pub callee: Option<MethodId>,
    pub span: LineSpan,
    pub args: Vec<CallArg>,
    /// Innermost loop whose iterations execute this call.
    pub loop_scope: Option<LoopId>,
    pub stmt: Option<StmtId>,
    /// Call whose argument list contains this one.
    pub parent_call: Option<CallId>,
    /// Sits in a `for` initializer, executed once.
    pub in_loop_init: bool,
}

impl CallSite {
    pub fn is_resolved(&self) -> bool {
        self.callee.is_some()
    }

    pub fn argument_identifiers(&self) -> BTreeSet<&str> {
        self.args.iter().flat_map(|a| a.identifiers.iter().map(String::as_str)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Directness {
    Direct,
    /// Through a subscript, dereference or member access.
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifierUse {
    pub id: UseId,
    pub name: String,
    pub access: Access,
    pub directness: Directness,
    pub method: MethodId,
    pub span: LineSpan,
    pub decl: Option<DeclId>,
    pub stmt: Option<StmtId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclKind {
    Variable,
    Parameter,
    Field,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declaration {
    pub id: DeclId,
    pub name: String,
    pub ty: TypeRef,
    pub kind: DeclKind,
    /// `None` for file-scope names.
    pub method: Option<MethodId>,
    pub span: LineSpan,
    pub is_array: bool,
    /// Passed whole to a call, reassigned, or returned.
    pub escapes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopKind {
    For,
    RangeFor,
    While,
    DoWhile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutation {
    pub name: String,
    /// The call responsible when the write is only possible, not syntactic.
    pub origin: Option<CallId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopScope {
    pub id: LoopId,
    pub kind: LoopKind,
    pub method: MethodId,
    pub span: LineSpan,
    pub parent: Option<LoopId>,
    /// Calls executed per iteration, nested loops included.
    pub calls: Vec<CallId>,
    pub mutations: Vec<Mutation>,
}

impl LoopScope {
    pub fn mutated(&self) -> BTreeSet<&str> {
        self.mutations.iter().map(|m| m.name.as_str()).collect()
    }

    /// Mutation set ignoring writes the given call may perform itself.
    pub fn mutated_excluding(&self, call: CallId) -> BTreeSet<&str> {
        self.mutations.iter().filter(|m| m.origin != Some(call)).map(|m| m.name.as_str()).collect()
    }
}

/// A statement directly inside a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementNode {
    pub id: StmtId,
    pub method: MethodId,
    pub block: usize,
    pub index: usize,
    pub span: LineSpan,
    pub loop_scope: Option<LoopId>,
    /// Declaration, expression or return statement.
    pub simple: bool,
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
    pub declares: BTreeSet<String>,
    pub calls: Vec<CallId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerOp {
    pub name: String,
    pub decl: Option<DeclId>,
    /// Member function name, or `operator[]` for subscripts.
    pub op: String,
    pub span: LineSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum NodeRef {
    Method(MethodId),
    Call(CallId),
    Use(UseId),
    Loop(LoopId),
    Decl(DeclId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Contains,
    Calls,
    DefUse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub kind: EdgeKind,
    pub from: NodeRef,
    pub to: NodeRef,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Fail on the first unsupported construct instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodePropertyGraph {
    line_count: u32,
    methods: Vec<MethodNode>,
    calls: Vec<CallSite>,
    identifiers: Vec<IdentifierUse>,
    loops: Vec<LoopScope>,
    declarations: Vec<Declaration>,
    statements: Vec<StatementNode>,
    container_ops: Vec<ContainerOp>,
    edges: Vec<Edge>,
    warnings: Vec<Skip>,
}

pub fn build_cpg(src: &SourceUnit) -> Result<CodePropertyGraph, ParseError> {
    build_cpg_with(src, BuildOptions::default())
}

pub fn build_cpg_with(src: &SourceUnit, opts: BuildOptions) -> Result<CodePropertyGraph, ParseError> {
    let tu = parser::parse(src.text(), opts.strict)?;
    Ok(builder::build(&tu, src.line_count()))
}

impl CodePropertyGraph {
    pub fn line_count(&self) -> u32 {
        self.line_count
    }

    pub fn methods(&self) -> &[MethodNode] {
        &self.methods
    }

    pub fn calls(&self) -> &[CallSite] {
        &self.calls
    }

    pub fn identifiers(&self) -> &[IdentifierUse] {
        &self.identifiers
    }

    pub fn loops(&self) -> &[LoopScope] {
        &self.loops
    }

    pub fn declarations(&self) -> &[Declaration] {
        &self.declarations
    }

    pub fn statements(&self) -> &[StatementNode] {
        &self.statements
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Regions skipped by the lenient parser.
    pub fn warnings(&self) -> &[Skip] {
        &self.warnings
    }

    pub fn method(&self, id: MethodId) -> Result<&MethodNode, QueryError> {
        self.methods.get(id.0).ok_or_else(|| QueryError::UnknownMethod(format!("#{}", id.0)))
    }

    /// First method whose simple or qualified name matches.
    pub fn method_named(&self, name: &str) -> Result<&MethodNode, QueryError> {
        self.methods
            .iter()
            .find(|m| m.name == name || m.qualified == name)
            .ok_or_else(|| QueryError::UnknownMethod(name.to_string()))
    }

    pub fn call(&self, id: CallId) -> &CallSite {
        &self.calls[id.0]
    }

    pub fn declaration(&self, id: DeclId) -> &Declaration {
        &self.declarations[id.0]
    }

    pub fn loop_scope(&self, id: LoopId) -> &LoopScope {
        &self.loops[id.0]
    }

    pub fn statement(&self, id: StmtId) -> &StatementNode {
        &self.statements[id.0]
    }

    /// Methods with at least one call site resolving to themselves.
    pub fn self_call_methods(&self) -> BTreeSet<MethodId> {
        self.calls.iter().filter(|c| c.callee == Some(c.caller)).map(|c| c.caller).collect()
    }

    pub fn indirect_reads(&self, f: MethodId) -> Result<BTreeSet<String>, QueryError> {
        self.indirect_names(f, Access::Read)
    }

    pub fn indirect_writes(&self, f: MethodId) -> Result<BTreeSet<String>, QueryError> {
        self.indirect_names(f, Access::Write)
    }

    fn indirect_names(&self, f: MethodId, access: Access) -> Result<BTreeSet<String>, QueryError> {
        self.method(f)?;
        Ok(self
            .identifiers
            .iter()
            .filter(|u| u.method == f && u.access == access && u.directness == Directness::Indirect)
            .map(|u| u.name.clone())
            .collect())
    }

    /// True iff the body of `f` (parameters excluded) declares `id`.
    pub fn declares(&self, f: MethodId, id: &str) -> Result<bool, QueryError> {
        self.method(f)?;
        Ok(self.declarations.iter().any(|d| d.method == Some(f) && d.kind == DeclKind::Variable && d.name == id))
    }

    /// Call sites whose simple or qualified name is in `filter`; all sites when empty.
    pub fn call_sites<S: AsRef<str>>(&self, filter: &[S]) -> Vec<&CallSite> {
        self.calls
            .iter()
            .filter(|c| filter.is_empty() || filter.iter().any(|f| f.as_ref() == c.name || f.as_ref() == c.qualified))
            .collect()
    }

    pub fn loop_scopes(&self) -> &[LoopScope] {
        &self.loops
    }

    /// Member operations (and subscripts) applied directly to `var`, in source order.
    pub fn container_operations(&self, var: &str) -> Result<Vec<(String, LineSpan)>, QueryError> {
        let known = self.declarations.iter().any(|d| d.name == var) || self.identifiers.iter().any(|u| u.name == var);
        if !known {
            return Err(QueryError::UnknownIdentifier(var.to_string()));
        }
        let mut ops: Vec<&ContainerOp> = self.container_ops.iter().filter(|o| o.name == var).collect();
        ops.sort_by_key(|o| o.span.start_line);
        Ok(ops.into_iter().map(|o| (o.op.clone(), o.span)).collect())
    }

    pub fn container_operations_of(&self, decl: DeclId) -> Vec<&ContainerOp> {
        let mut ops: Vec<&ContainerOp> = self.container_ops.iter().filter(|o| o.decl == Some(decl)).collect();
        ops.sort_by_key(|o| o.span.start_line);
        ops
    }

    pub fn uses_of(&self, decl: DeclId) -> impl Iterator<Item = &IdentifierUse> {
        self.identifiers.iter().filter(move |u| u.decl == Some(decl))
    }

    /// Line-delimited JSON dump: one node or edge per line.
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for line in self.dump_records() {
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn dump_records(&self) -> Vec<String> {
        let mut lines = Vec::new();
        let mut push = |kind: &str, id: usize, span: Option<LineSpan>, attrs: serde_json::Value| {
            let span = span.map(|s| s.to_string());
            lines.push(json!({ "kind": kind, "id": id, "span": span, "attrs": attrs }).to_string());
        };
        for m in &self.methods {
            push(
                "method",
                m.id.0,
                Some(m.span),
                json!({ "name": m.name, "qualified": m.qualified, "pure": m.is_pure }),
            );
        }
        for d in &self.declarations {
            push(
                "decl",
                d.id.0,
                Some(d.span),
                json!({ "name": d.name, "type": d.ty.text, "kind": d.kind, "method": d.method.map(|m| m.0) }),
            );
        }
        for c in &self.calls {
            let kind = match &c.kind {
                CallKind::Function => "function".to_string(),
                CallKind::Member { receiver } => format!("member:{}", receiver.as_deref().unwrap_or("?")),
                CallKind::Stream => "stream".to_string(),
            };
            push(
                "call",
                c.id.0,
                Some(c.span),
                json!({
                    "name": c.qualified, "call_kind": kind, "caller": c.caller.0,
                    "callee": c.callee.map(|m| m.0), "loop": c.loop_scope.map(|l| l.0),
                }),
            );
        }
        for u in &self.identifiers {
            push(
                "use",
                u.id.0,
                Some(u.span),
                json!({ "name": u.name, "access": u.access, "directness": u.directness, "method": u.method.0 }),
            );
        }
        for l in &self.loops {
            let mutated: Vec<&str> = l.mutated().into_iter().collect();
            push(
                "loop",
                l.id.0,
                Some(l.span),
                json!({ "loop_kind": l.kind, "method": l.method.0, "parent": l.parent.map(|p| p.0), "mutates": mutated }),
            );
        }
        for (i, e) in self.edges.iter().enumerate() {
            push("edge", i, None, json!({ "edge": e.kind, "from": e.from, "to": e.to }));
        }
        lines
    }
}
