use std::collections::{BTreeSet, HashMap, HashSet};

use super::ast::*;
use super::*;

/// Library calls that never modify their arguments and have no side effects.
pub(crate) const PURE_LIBRARY: &[&str] = &[
    "min",
    "max",
    "abs",
    "sqrt",
    "cbrt",
    "pow",
    "powl",
    "sqrtl",
    "log",
    "log2",
    "log10",
    "exp",
    "gcd",
    "__gcd",
    "lcm",
    "strlen",
    "strcmp",
    "accumulate",
    "count",
    "count_if",
    "find",
    "find_if",
    "lower_bound",
    "upper_bound",
    "binary_search",
    "min_element",
    "max_element",
    "distance",
    "make_pair",
    "make_tuple",
    "to_string",
    "stoi",
    "stol",
    "stoll",
    "atoi",
    "atol",
    "atoll",
    "floor",
    "ceil",
    "round",
    "fabs",
    "llabs",
    "labs",
    "hypot",
    "sin",
    "cos",
    "tan",
    "atan",
    "atan2",
    "asin",
    "acos",
    "fmod",
    "fmin",
    "fmax",
    "isdigit",
    "isalpha",
    "isalnum",
    "isupper",
    "islower",
    "isspace",
    "tolower",
    "toupper",
    "all_of",
    "any_of",
    "none_of",
    "equal",
    "is_sorted",
    "__builtin_popcount",
    "__builtin_popcountll",
    "__builtin_clz",
    "__builtin_clzll",
    "__builtin_ctz",
    "__builtin_ctzll",
    "begin",
    "end",
    "size",
];

/// Impure library calls that still leave their arguments untouched.
const READONLY_IO: &[&str] = &["printf", "puts", "putchar", "fprintf", "fputs", "assert", "exit"];

/// Member functions that modify the receiver.
pub(crate) const MUTATING_MEMBERS: &[&str] = &[
    "push_back",
    "pop_back",
    "push_front",
    "pop_front",
    "insert",
    "erase",
    "clear",
    "emplace",
    "emplace_back",
    "emplace_front",
    "emplace_hint",
    "push",
    "pop",
    "resize",
    "assign",
    "reserve",
    "swap",
    "append",
    "shrink_to_fit",
    "splice",
    "merge",
    "unique",
    "remove",
    "remove_if",
    "sort",
    "reverse",
    "fill",
    "set",
    "reset",
    "flip",
    "replace",
    "operator=",
];

const ITERATOR_MEMBERS: &[&str] = &["begin", "end", "rbegin", "rend", "data", "c_str"];

const INPUT_STREAMS: &[&str] = &["cin"];
const OUTPUT_STREAMS: &[&str] = &["cout", "cerr", "clog"];

const INTEGRAL_TYPES: &[&str] = &[
    "int",
    "long",
    "short",
    "char",
    "bool",
    "size_t",
    "int64_t",
    "int32_t",
    "int16_t",
    "int8_t",
    "uint64_t",
    "uint32_t",
    "uint16_t",
    "uint8_t",
    "__int128",
    "wchar_t",
    "ptrdiff_t",
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Read,
    Write,
    ReadWrite,
}

pub(crate) fn build(tu: &TranslationUnit, line_count: u32) -> CodePropertyGraph {
    let mut b = Builder::new(tu, line_count);
    b.declare_globals();
    b.walk_items();
    b.finish()
}

struct Builder<'a> {
    tu: &'a TranslationUnit,
    g: CodePropertyGraph,
    scopes: Vec<HashMap<String, DeclId>>,
    method: Option<MethodId>,
    loops: Vec<LoopId>,
    stmt: Option<StmtId>,
    call_stack: Vec<CallId>,
    next_block: usize,
    in_loop_init: bool,
    /// Free functions by simple name.
    functions: HashMap<String, Vec<MethodId>>,
    /// Struct methods by qualified name.
    members: HashMap<String, Vec<MethodId>>,
    struct_fields: HashMap<String, Vec<DeclId>>,
    current_struct: Option<String>,
    /// Function bodies in source order, paired with their method ids.
    bodies: Vec<(MethodId, &'a Function, Option<String>)>,
    toplevel: Option<MethodId>,
    escaped: HashSet<DeclId>,
}

impl<'a> Builder<'a> {
    fn new(tu: &'a TranslationUnit, line_count: u32) -> Self {
        Builder {
            tu,
            g: CodePropertyGraph {
                line_count,
                methods: Vec::new(),
                calls: Vec::new(),
                identifiers: Vec::new(),
                loops: Vec::new(),
                declarations: Vec::new(),
                statements: Vec::new(),
                container_ops: Vec::new(),
                edges: Vec::new(),
                warnings: tu.warnings.clone(),
            },
            scopes: vec![HashMap::new()],
            method: None,
            loops: Vec::new(),
            stmt: None,
            call_stack: Vec::new(),
            next_block: 0,
            in_loop_init: false,
            functions: HashMap::new(),
            members: HashMap::new(),
            struct_fields: HashMap::new(),
            current_struct: None,
            bodies: Vec::new(),
            toplevel: None,
            escaped: HashSet::new(),
        }
    }

    fn clamp(&self, span: LineSpan) -> LineSpan {
        let max = self.g.line_count.max(1);
        let start = span.start_line.clamp(1, max);
        LineSpan::new(start, span.end_line.clamp(start, max))
    }

    fn edge(&mut self, kind: EdgeKind, from: NodeRef, to: NodeRef) {
        self.g.edges.push(Edge { kind, from, to });
    }

    // ------------------------------------------------------------- pass one

    fn declare_globals(&mut self) {
        for m in &self.tu.macros {
            let ty = TypeRef { text: "macro".into(), base: "macro".into(), ..Default::default() };
            self.declare(&m.name, ty, DeclKind::Macro, LineSpan::line(m.line), false);
        }
        for item in &self.tu.items {
            match item {
                Item::Function(f) => self.add_method(f, None),
                Item::Decl(d) => self.declare_stmt_names(d, DeclKind::Variable),
                Item::Struct(s) => {
                    let mut fields = Vec::new();
                    for fd in &s.fields {
                        for d in &fd.declarators {
                            let span = LineSpan::line(d.line);
                            let ty = declarator_type(&fd.ty, d);
                            fields.push(self.new_decl(&d.name, ty, DeclKind::Field, span, !d.dims.is_empty()));
                        }
                    }
                    self.struct_fields.insert(s.name.clone(), fields);
                    for m in &s.methods {
                        self.add_method(m, Some(s.name.clone()));
                    }
                    if let Some(t) = &s.trailing {
                        self.declare_stmt_names(t, DeclKind::Variable);
                    }
                }
                Item::Stmt(_) => {}
            }
        }
        let top_span = self
            .tu
            .items
            .iter()
            .filter_map(|i| match i {
                Item::Stmt(s) => Some(s.span),
                Item::Decl(d) => Some(d.span),
                _ => None,
            })
            .reduce(LineSpan::merge);
        if self.tu.items.iter().any(|i| matches!(i, Item::Stmt(_))) {
            let id = MethodId(self.g.methods.len());
            let span = self.clamp(top_span.expect("fragment statements have spans"));
            self.g.methods.push(MethodNode {
                id,
                name: TOPLEVEL_METHOD.into(),
                qualified: TOPLEVEL_METHOD.into(),
                span,
                params: Vec::new(),
                is_toplevel: true,
                is_pure: false,
                effects: BTreeSet::new(),
            });
            self.toplevel = Some(id);
        }
    }

    fn add_method(&mut self, f: &'a Function, owner: Option<String>) {
        let Some(_) = &f.body else { return };
        let owner = owner.or_else(|| {
            f.qualified.rsplit_once("::").map(|(prefix, _)| prefix.rsplit("::").next().unwrap_or(prefix).to_string())
        });
        let id = MethodId(self.g.methods.len());
        let span = self.clamp(f.span);
        self.g.methods.push(MethodNode {
            id,
            name: f.name.clone(),
            qualified: f.qualified.clone(),
            span,
            params: Vec::new(),
            is_toplevel: false,
            is_pure: true,
            effects: BTreeSet::new(),
        });
        let mut params = Vec::new();
        for p in &f.params {
            if let Some(name) = &p.name {
                let decl = self.new_decl(name, p.ty.clone(), DeclKind::Parameter, LineSpan::line(p.line), false);
                self.g.declarations[decl.0].method = Some(id);
                params.push(decl);
            }
        }
        self.g.methods[id.0].params = params;
        match &owner {
            Some(o) if self.struct_fields.contains_key(o) || f.qualified.contains("::") => {
                self.members.entry(format!("{o}::{}", f.name)).or_default().push(id);
            }
            _ => self.functions.entry(f.name.clone()).or_default().push(id),
        }
        self.bodies.push((id, f, owner));
    }

    fn declare_stmt_names(&mut self, d: &DeclStmt, kind: DeclKind) {
        for decl in &d.declarators {
            let ty = declarator_type(&d.ty, decl);
            self.declare(&decl.name, ty, kind, LineSpan::line(decl.line), !decl.dims.is_empty());
        }
    }

    fn new_decl(&mut self, name: &str, ty: TypeRef, kind: DeclKind, span: LineSpan, is_array: bool) -> DeclId {
        let id = DeclId(self.g.declarations.len());
        let span = self.clamp(span);
        self.g.declarations.push(Declaration {
            id,
            name: name.to_string(),
            ty,
            kind,
            method: self.method,
            span,
            is_array,
            escapes: false,
        });
        if let Some(m) = self.method {
            self.edge(EdgeKind::Contains, NodeRef::Method(m), NodeRef::Decl(id));
        }
        id
    }

    fn declare(&mut self, name: &str, ty: TypeRef, kind: DeclKind, span: LineSpan, is_array: bool) -> DeclId {
        let id = self.new_decl(name, ty, kind, span, is_array);
        self.scopes.last_mut().expect("scope").insert(name.to_string(), id);
        id
    }

    fn resolve(&self, name: &str) -> Option<DeclId> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    // ------------------------------------------------------------- pass two

    fn walk_items(&mut self) {
        let tu = self.tu;
        let mut bodies = std::mem::take(&mut self.bodies).into_iter().peekable();
        let top_block = self.next_block();
        let mut top_index = 0;
        for item in &tu.items {
            match item {
                Item::Function(f) if f.body.is_some() => {
                    let (id, func, owner) = bodies.next().expect("method registered for body");
                    debug_assert!(std::ptr::eq(func, f));
                    self.walk_function(id, func, owner);
                }
                Item::Struct(s) => {
                    for m in &s.methods {
                        if m.body.is_some() {
                            let (id, func, owner) = bodies.next().expect("method registered for body");
                            self.walk_function(id, func, owner);
                        }
                    }
                }
                Item::Stmt(s) => {
                    if let Some(top) = self.toplevel {
                        self.method = Some(top);
                        self.stmt(s, top_block, top_index);
                        top_index += 1;
                        self.method = None;
                    }
                }
                Item::Decl(d) => {
                    if let Some(top) = self.toplevel {
                        self.method = Some(top);
                        let id = self.open_stmt(d.span, top_block, top_index, true);
                        let saved = self.stmt.replace(id);
                        self.walk_global_decl(d);
                        self.stmt = saved;
                        top_index += 1;
                        self.method = None;
                    }
                }
                Item::Function(_) => {}
            }
        }
    }

    fn walk_global_decl(&mut self, d: &DeclStmt) {
        for decl in &d.declarators {
            self.walk_declarator_exprs(decl);
            if decl.init.is_some() {
                self.record(&decl.name, Mode::Write, false, LineSpan::line(decl.line));
            }
            if let Some(s) = self.stmt {
                self.g.statements[s.0].declares.insert(decl.name.clone());
            }
        }
    }

    fn walk_function(&mut self, id: MethodId, f: &Function, owner: Option<String>) {
        self.method = Some(id);
        self.current_struct = owner.clone();
        let mut field_scope = HashMap::new();
        if let Some(fields) = owner.as_ref().and_then(|o| self.struct_fields.get(o)) {
            for d in fields {
                field_scope.insert(self.g.declarations[d.0].name.clone(), *d);
            }
        }
        self.scopes.push(field_scope);
        let params: HashMap<String, DeclId> =
            self.g.methods[id.0].params.iter().map(|d| (self.g.declarations[d.0].name.clone(), *d)).collect();
        for d in params.values() {
            self.edge(EdgeKind::Contains, NodeRef::Method(id), NodeRef::Decl(*d));
        }
        self.scopes.push(params);
        if let Some(body) = &f.body {
            self.block(body);
        }
        self.scopes.pop();
        self.scopes.pop();
        self.method = None;
        self.current_struct = None;
    }

    fn next_block(&mut self) -> usize {
        self.next_block += 1;
        self.next_block - 1
    }

    fn open_stmt(&mut self, span: LineSpan, block: usize, index: usize, simple: bool) -> StmtId {
        let id = StmtId(self.g.statements.len());
        let span = self.clamp(span);
        self.g.statements.push(StatementNode {
            id,
            method: self.method.expect("statement inside a method"),
            block,
            index,
            span,
            loop_scope: self.loops.last().copied(),
            simple,
            reads: BTreeSet::new(),
            writes: BTreeSet::new(),
            declares: BTreeSet::new(),
            calls: Vec::new(),
        });
        id
    }

    fn block(&mut self, b: &Block) {
        self.scopes.push(HashMap::new());
        let id = self.next_block();
        for (i, s) in b.stmts.iter().enumerate() {
            self.stmt(s, id, i);
        }
        self.scopes.pop();
    }

    fn sub_stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Block(b) => self.block(b),
            _ => {
                self.scopes.push(HashMap::new());
                let id = self.next_block();
                self.stmt(s, id, 0);
                self.scopes.pop();
            }
        }
    }

    fn stmt(&mut self, s: &Stmt, block: usize, index: usize) {
        let simple = matches!(s.kind, StmtKind::Decl(_) | StmtKind::Expr(_) | StmtKind::Return(_) | StmtKind::Empty);
        let id = self.open_stmt(s.span, block, index, simple);
        let saved = self.stmt.replace(id);
        match &s.kind {
            StmtKind::Block(b) => self.block(b),
            StmtKind::Decl(d) => self.decl_stmt(d),
            StmtKind::Expr(e) => self.expr(e),
            StmtKind::If { cond, then, els } => {
                self.expr(cond);
                self.sub_stmt(then);
                if let Some(e) = els {
                    self.sub_stmt(e);
                }
            }
            StmtKind::For { init, cond, step, body } => {
                self.scopes.push(HashMap::new());
                if let Some(init) = init {
                    self.in_loop_init = true;
                    match &init.kind {
                        StmtKind::Decl(d) => self.decl_stmt(d),
                        StmtKind::Expr(e) => self.expr(e),
                        _ => {}
                    }
                    self.in_loop_init = false;
                }
                self.open_loop(LoopKind::For, s.span);
                if let Some(c) = cond {
                    self.expr(c);
                }
                if let Some(st) = step {
                    self.expr(st);
                }
                self.sub_stmt(body);
                self.loops.pop();
                self.scopes.pop();
            }
            StmtKind::RangeFor { var, range, body } => {
                self.scopes.push(HashMap::new());
                self.expr(range);
                self.open_loop(LoopKind::RangeFor, s.span);
                let mutable_ref = var.declarators.iter().any(|d| d.is_ref) && !var.ty.is_const;
                for d in &var.declarators {
                    let ty = declarator_type(&var.ty, d);
                    self.declare(&d.name, ty, DeclKind::Variable, LineSpan::line(d.line), false);
                    self.record(&d.name, Mode::Write, false, LineSpan::line(d.line));
                    if let Some(st) = self.stmt {
                        self.g.statements[st.0].declares.insert(d.name.clone());
                    }
                }
                if mutable_ref {
                    self.lvalue(range, Mode::Write, true);
                }
                self.sub_stmt(body);
                self.loops.pop();
                self.scopes.pop();
            }
            StmtKind::While { cond, body } => {
                self.open_loop(LoopKind::While, s.span);
                self.expr(cond);
                self.sub_stmt(body);
                self.loops.pop();
            }
            StmtKind::DoWhile { body, cond } => {
                self.open_loop(LoopKind::DoWhile, s.span);
                self.sub_stmt(body);
                self.expr(cond);
                self.loops.pop();
            }
            StmtKind::Switch { cond, body } => {
                self.expr(cond);
                self.sub_stmt(body);
            }
            StmtKind::Case(Some(e)) => self.expr(e),
            StmtKind::Return(Some(e)) => {
                self.expr(e);
                self.mark_escape(e);
            }
            StmtKind::Case(None)
            | StmtKind::Return(None)
            | StmtKind::Break
            | StmtKind::Continue
            | StmtKind::Empty
            | StmtKind::Skipped(_) => {}
        }
        self.stmt = saved;
    }

    fn open_loop(&mut self, kind: LoopKind, span: LineSpan) {
        let id = LoopId(self.g.loops.len());
        let method = self.method.expect("loop inside a method");
        let parent = self.loops.last().copied();
        let span = self.clamp(span);
        self.g.loops.push(LoopScope { id, kind, method, span, parent, calls: Vec::new(), mutations: Vec::new() });
        match parent {
            Some(p) => self.edge(EdgeKind::Contains, NodeRef::Loop(p), NodeRef::Loop(id)),
            None => self.edge(EdgeKind::Contains, NodeRef::Method(method), NodeRef::Loop(id)),
        }
        self.loops.push(id);
    }

    fn decl_stmt(&mut self, d: &DeclStmt) {
        for decl in &d.declarators {
            self.walk_declarator_exprs(decl);
            let ty = declarator_type(&d.ty, decl);
            let span = LineSpan::line(decl.line);
            self.declare(&decl.name, ty, DeclKind::Variable, span, !decl.dims.is_empty());
            if decl.init.is_some() {
                self.record(&decl.name, Mode::Write, false, span);
            }
            if let Some(s) = self.stmt {
                self.g.statements[s.0].declares.insert(decl.name.clone());
            }
        }
    }

    fn walk_declarator_exprs(&mut self, decl: &Declarator) {
        for e in decl.dims.iter().flatten() {
            self.expr(e);
        }
        match &decl.init {
            Some(Init::Expr(e)) => self.expr(e),
            Some(Init::Ctor(args)) | Some(Init::List(args)) => {
                for a in args {
                    self.expr(a);
                }
            }
            None => {}
        }
    }

    // ----------------------------------------------------------- expressions

    fn record(&mut self, name: &str, mode: Mode, indirect: bool, span: LineSpan) {
        let Some(method) = self.method else { return };
        let decl = self.resolve(name);
        let span = self.clamp(span);
        let directness = if indirect { Directness::Indirect } else { Directness::Direct };
        let accesses: &[Access] = match mode {
            Mode::Read => &[Access::Read],
            Mode::Write => &[Access::Write],
            Mode::ReadWrite => &[Access::Read, Access::Write],
        };
        for &access in accesses {
            let id = UseId(self.g.identifiers.len());
            self.g.identifiers.push(IdentifierUse {
                id,
                name: name.to_string(),
                access,
                directness,
                method,
                span,
                decl,
                stmt: self.stmt,
            });
            self.edge(EdgeKind::Contains, NodeRef::Method(method), NodeRef::Use(id));
            if let Some(d) = decl {
                self.edge(EdgeKind::DefUse, NodeRef::Decl(d), NodeRef::Use(id));
            }
            if let Some(s) = self.stmt {
                let st = &mut self.g.statements[s.0];
                match access {
                    Access::Read => st.reads.insert(name.to_string()),
                    Access::Write => st.writes.insert(name.to_string()),
                };
            }
            if access == Access::Write {
                self.mutate(name, None);
            }
        }
    }

    fn mutate(&mut self, name: &str, origin: Option<CallId>) {
        for l in &self.loops {
            let muts = &mut self.g.loops[l.0].mutations;
            if !muts.iter().any(|m| m.name == name && m.origin == origin) {
                muts.push(Mutation { name: name.to_string(), origin });
            }
        }
    }

    fn container_op(&mut self, base: &Expr, op: &str, span: LineSpan) {
        if let ExprKind::Ident { name, .. } = &base.kind {
            let decl = self.resolve(name);
            let span = self.clamp(span);
            self.g.container_ops.push(ContainerOp { name: name.clone(), decl, op: op.to_string(), span });
        }
    }

    fn mark_escape(&mut self, e: &Expr) {
        let target = match &e.kind {
            ExprKind::Ident { name, .. } => Some(name),
            ExprKind::Unary { op, operand } if op == "&" => match &operand.kind {
                ExprKind::Ident { name, .. } => Some(name),
                _ => None,
            },
            _ => None,
        };
        if let Some(d) = target.and_then(|n| self.resolve(n)) {
            self.escaped.insert(d);
        }
    }

    fn lvalue(&mut self, e: &Expr, mode: Mode, indirect: bool) {
        match &e.kind {
            ExprKind::Ident { name, .. } => self.record(name, mode, indirect, e.span),
            ExprKind::Index { base, index } => {
                self.lvalue(base, mode, true);
                self.container_op(base, "operator[]", e.span);
                self.expr(index);
            }
            ExprKind::Member { base, .. } => self.lvalue(base, mode, true),
            ExprKind::Unary { op, operand } if op == "*" => self.lvalue(operand, mode, true),
            ExprKind::Cast { expr, .. } => self.lvalue(expr, mode, indirect),
            _ => self.expr(e),
        }
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Ident { .. } | ExprKind::Index { .. } | ExprKind::Member { .. } => {
                self.lvalue(e, Mode::Read, false)
            }
            ExprKind::Literal(_) | ExprKind::This | ExprKind::SizeofType(_) => {}
            ExprKind::Unary { op, operand } => match op.as_str() {
                "*" => self.lvalue(e, Mode::Read, false),
                "++" | "--" => self.lvalue(operand, Mode::ReadWrite, false),
                "&" => self.lvalue(operand, Mode::Write, false),
                "sizeof" => {}
                _ => self.expr(operand),
            },
            ExprKind::Postfix { operand, .. } => self.lvalue(operand, Mode::ReadWrite, false),
            ExprKind::Binary { op, lhs, rhs } => {
                if (op == ">>" || op == "<<") && self.stream_chain(e) {
                    return;
                }
                self.expr(lhs);
                self.expr(rhs);
            }
            ExprKind::Assign { op, lhs, rhs } => {
                self.expr(rhs);
                let mode = if op == "=" { Mode::Write } else { Mode::ReadWrite };
                self.lvalue(lhs, mode, false);
                if let ExprKind::Ident { .. } = lhs.kind {
                    self.mark_escape(lhs);
                }
            }
            ExprKind::Ternary { cond, then, els } => {
                self.expr(cond);
                self.expr(then);
                self.expr(els);
            }
            ExprKind::Comma { lhs, rhs } => {
                self.expr(lhs);
                self.expr(rhs);
            }
            ExprKind::Call { callee, args } => self.call(e, callee, args),
            ExprKind::Cast { expr, .. } => self.expr(expr),
            ExprKind::InitList(items) | ExprKind::New { args: items, .. } => {
                for i in items {
                    self.expr(i);
                }
            }
            ExprKind::Lambda { params, body, .. } => {
                self.scopes.push(HashMap::new());
                for p in params {
                    if let Some(name) = &p.name {
                        self.declare(name, p.ty.clone(), DeclKind::Parameter, LineSpan::line(p.line), false);
                    }
                }
                let saved = self.stmt.take();
                self.block(body);
                self.stmt = saved;
                self.scopes.pop();
            }
            ExprKind::Delete(x) => self.expr(x),
        }
    }

    /// `cin >> a >> b` / `cout << x << endl`: one call site per chain.
    fn stream_chain(&mut self, e: &Expr) -> bool {
        let mut operands = Vec::new();
        let mut ops = BTreeSet::new();
        let mut cur = e;
        while let ExprKind::Binary { op, lhs, rhs } = &cur.kind {
            if op != ">>" && op != "<<" {
                break;
            }
            ops.insert(op.as_str());
            operands.push(rhs.as_ref());
            cur = lhs;
        }
        let ExprKind::Ident { name, qualified } = &cur.kind else { return false };
        let input = INPUT_STREAMS.contains(&name.as_str()) && ops.len() == 1 && ops.contains(">>");
        let output = OUTPUT_STREAMS.contains(&name.as_str()) && ops.len() == 1 && ops.contains("<<");
        if !(input || output) || self.resolve(name).is_some() {
            return false;
        }
        let id = self.push_call(name, qualified, CallKind::Stream, None, e.span);
        self.call_stack.push(id);
        self.record(name, Mode::Read, false, cur.span);
        for operand in operands.into_iter().rev() {
            if input {
                self.lvalue(operand, Mode::Write, false);
            } else {
                self.expr(operand);
            }
        }
        self.call_stack.pop();
        true
    }

    fn push_call(
        &mut self,
        name: &str,
        qualified: &str,
        kind: CallKind,
        callee: Option<MethodId>,
        span: LineSpan,
    ) -> CallId {
        let caller = self.method.expect("call inside a method");
        let id = CallId(self.g.calls.len());
        let span = self.clamp(span);
        self.g.calls.push(CallSite {
            id,
            name: name.to_string(),
            qualified: qualified.to_string(),
            kind,
            caller,
            callee,
            span,
            args: Vec::new(),
            loop_scope: self.loops.last().copied(),
            stmt: self.stmt,
            parent_call: self.call_stack.last().copied(),
            in_loop_init: self.in_loop_init,
        });
        self.edge(EdgeKind::Contains, NodeRef::Method(caller), NodeRef::Call(id));
        if let Some(l) = self.loops.last() {
            self.edge(EdgeKind::Contains, NodeRef::Loop(*l), NodeRef::Call(id));
        }
        if let Some(m) = callee {
            self.edge(EdgeKind::Calls, NodeRef::Call(id), NodeRef::Method(m));
        }
        for l in &self.loops {
            self.g.loops[l.0].calls.push(id);
        }
        if let Some(s) = self.stmt {
            self.g.statements[s.0].calls.push(id);
        }
        id
    }

    fn resolve_function(&self, name: &str, qualified: &str, argc: usize) -> Option<MethodId> {
        let pick = |ids: &Vec<MethodId>| {
            ids.iter().copied().find(|m| self.g.methods[m.0].params.len() == argc).or_else(|| ids.first().copied())
        };
        if qualified.contains("::") {
            if let Some(ids) = self.members.get(qualified) {
                return pick(ids);
            }
        }
        if let Some(owner) = &self.current_struct {
            if let Some(ids) = self.members.get(&format!("{owner}::{name}")) {
                return pick(ids);
            }
        }
        if qualified != name && !qualified.starts_with("std::") {
            if let Some(ids) = self.members.get(qualified) {
                return pick(ids);
            }
        }
        if qualified == name || qualified.starts_with("::") {
            return self.functions.get(name).and_then(pick);
        }
        None
    }

    fn call(&mut self, e: &Expr, callee: &Expr, args: &[Expr]) {
        match &callee.kind {
            ExprKind::Ident { name, qualified } => {
                let variable = self.resolve(name);
                let target = if variable.is_some() { None } else { self.resolve_function(name, qualified, args.len()) };
                let id = self.push_call(name, qualified, CallKind::Function, target, e.span);
                if variable.is_some() {
                    self.record(name, Mode::Read, false, callee.span);
                }
                self.call_args(id, target, args);
                let readonly = PURE_LIBRARY.contains(&name.as_str()) || READONLY_IO.contains(&name.as_str());
                if target.is_none() && !readonly {
                    for a in args {
                        if let Some(root) = may_write_root(a, self) {
                            self.mutate(&root, Some(id));
                        }
                    }
                }
            }
            ExprKind::Member { base, member, .. } => {
                let receiver = base.base_identifier().map(|(n, _)| n.to_string());
                let target = self.resolve_member(base, member, args.len());
                let qualified = match &receiver {
                    Some(r) => format!("{r}.{member}"),
                    None => member.clone(),
                };
                let id = self.push_call(member, &qualified, CallKind::Member { receiver }, target, e.span);
                self.call_stack.push(id);
                let mode = if MUTATING_MEMBERS.contains(&member.as_str()) { Mode::Write } else { Mode::Read };
                self.lvalue(base, mode, true);
                self.container_op(base, member, e.span);
                self.call_stack.pop();
                self.call_args(id, target, args);
            }
            _ => {
                self.expr(callee);
                for a in args {
                    self.expr(a);
                }
            }
        }
    }

    fn resolve_member(&self, base: &Expr, member: &str, argc: usize) -> Option<MethodId> {
        let (name, _) = base.base_identifier()?;
        let decl = self.resolve(name)?;
        let ty = &self.g.declarations[decl.0].ty;
        let ids = self.members.get(&format!("{}::{member}", ty.base))?;
        ids.iter().copied().find(|m| self.g.methods[m.0].params.len() == argc).or_else(|| ids.first().copied())
    }

    fn call_args(&mut self, id: CallId, target: Option<MethodId>, args: &[Expr]) {
        self.call_stack.push(id);
        let mut infos = Vec::new();
        for (i, a) in args.iter().enumerate() {
            let param = target
                .and_then(|m| self.g.methods[m.0].params.get(i).copied())
                .map(|d| self.g.declarations[d.0].ty.clone());
            match &param {
                Some(ty) if ty.is_ref && !ty.is_const => self.lvalue(a, Mode::ReadWrite, false),
                _ => self.expr(a),
            }
            if param.as_ref().is_some_and(|ty| ty.is_ptr) {
                if let Some(root) = may_write_root(a, self) {
                    self.mutate(&root, Some(id));
                }
            }
            self.mark_escape(a);
            infos.push(self.arg_info(a));
        }
        self.call_stack.pop();
        self.g.calls[id.0].args = infos;
    }

    fn arg_info(&self, a: &Expr) -> CallArg {
        let mut identifiers = Vec::new();
        collect_identifiers(a, &mut identifiers);
        let literal = match &a.kind {
            ExprKind::Literal(l) => Some(l.clone()),
            _ => None,
        };
        let integral = match &a.kind {
            ExprKind::Literal(l) => is_integer_literal(l),
            ExprKind::Ident { name, .. } => {
                self.resolve(name).is_some_and(|d| self.is_integral(&self.g.declarations[d.0].ty))
            }
            ExprKind::Cast { ty, .. } => self.is_integral(ty),
            _ => false,
        };
        CallArg { identifiers, literal, integral }
    }

    fn is_integral(&self, ty: &TypeRef) -> bool {
        if ty.is_ptr {
            return false;
        }
        let mut base = ty.base.as_str();
        for _ in 0..8 {
            if INTEGRAL_TYPES.contains(&base) {
                return true;
            }
            match self.tu.aliases.get(base) {
                Some(t) => base = t.base.as_str(),
                None => return false,
            }
        }
        false
    }

    // -------------------------------------------------------------- finish

    fn finish(mut self) -> CodePropertyGraph {
        for d in std::mem::take(&mut self.escaped) {
            self.g.declarations[d.0].escapes = true;
        }
        self.compute_effects();
        self.g
    }

    fn compute_effects(&mut self) {
        let g = &mut self.g;
        let n = g.methods.len();
        let mut effects: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
        let mut bad = vec![false; n];
        for u in &g.identifiers {
            if u.access != Access::Write {
                continue;
            }
            let m = u.method.0;
            match u.decl.map(|d| &g.declarations[d.0]) {
                None => {
                    effects[m].insert(u.name.clone());
                }
                Some(d) if d.method.is_none() => {
                    effects[m].insert(u.name.clone());
                }
                Some(d) if d.kind == DeclKind::Parameter => {
                    let through = d.ty.is_ref || d.ty.is_ptr || d.is_array;
                    if (d.ty.is_ref && !d.ty.is_const) || (u.directness == Directness::Indirect && through) {
                        bad[m] = true;
                    }
                }
                Some(_) => {}
            }
        }
        for l in &g.loops {
            for mu in l.mutations.iter().filter(|mu| mu.origin.is_some()) {
                let method = g.calls[mu.origin.unwrap().0].caller.0;
                let local = g.declarations.iter().any(|d| d.name == mu.name && d.method == Some(MethodId(method)));
                if !local {
                    effects[method].insert(mu.name.clone());
                }
            }
        }
        loop {
            let mut changed = false;
            for c in &g.calls {
                if let Some(t) = c.callee {
                    if t != c.caller {
                        let extra: Vec<String> = effects[t.0].difference(&effects[c.caller.0]).cloned().collect();
                        if !extra.is_empty() {
                            effects[c.caller.0].extend(extra);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut pure: Vec<bool> = g.methods.iter().map(|m| !m.is_toplevel).collect();
        for (m, p) in pure.iter_mut().enumerate() {
            if !effects[m].is_empty() || bad[m] {
                *p = false;
            }
        }
        loop {
            let mut changed = false;
            for c in &g.calls {
                if !pure[c.caller.0] {
                    continue;
                }
                let ok = match (c.callee, &c.kind) {
                    (Some(t), _) => pure[t.0],
                    (None, CallKind::Stream) => false,
                    (None, CallKind::Function) => PURE_LIBRARY.contains(&c.name.as_str()),
                    (None, CallKind::Member { .. }) => true,
                };
                if !ok {
                    pure[c.caller.0] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        // effects of user calls are possible writes inside every loop around the call
        for l in 0..g.loops.len() {
            let mut extra = Vec::new();
            for c in &g.loops[l].calls {
                if let Some(t) = g.calls[c.0].callee {
                    for name in &effects[t.0] {
                        extra.push(Mutation { name: name.clone(), origin: Some(*c) });
                    }
                }
            }
            for mu in extra {
                if !g.loops[l].mutations.contains(&mu) {
                    g.loops[l].mutations.push(mu);
                }
            }
        }
        for (m, method) in g.methods.iter_mut().enumerate() {
            method.is_pure = pure[m];
            method.effects = std::mem::take(&mut effects[m]);
        }
    }
}

fn declarator_type(base: &TypeRef, d: &Declarator) -> TypeRef {
    let mut ty = base.clone();
    ty.is_ref |= d.is_ref;
    ty.is_ptr |= d.is_ptr;
    ty
}

fn collect_identifiers(e: &Expr, out: &mut Vec<String>) {
    let push = |n: &str, out: &mut Vec<String>| {
        if !out.iter().any(|x| x == n) {
            out.push(n.to_string());
        }
    };
    match &e.kind {
        ExprKind::Ident { name, .. } => push(name, out),
        ExprKind::Literal(_) | ExprKind::This | ExprKind::SizeofType(_) => {}
        ExprKind::Unary { operand, .. } | ExprKind::Postfix { operand, .. } => collect_identifiers(operand, out),
        ExprKind::Binary { lhs, rhs, .. } | ExprKind::Assign { lhs, rhs, .. } | ExprKind::Comma { lhs, rhs } => {
            collect_identifiers(lhs, out);
            collect_identifiers(rhs, out);
        }
        ExprKind::Ternary { cond, then, els } => {
            collect_identifiers(cond, out);
            collect_identifiers(then, out);
            collect_identifiers(els, out);
        }
        ExprKind::Call { callee, args } => {
            if !matches!(callee.kind, ExprKind::Ident { .. }) {
                collect_identifiers(callee, out);
            }
            for a in args {
                collect_identifiers(a, out);
            }
        }
        ExprKind::Index { base, index } => {
            collect_identifiers(base, out);
            collect_identifiers(index, out);
        }
        ExprKind::Member { base, .. } => collect_identifiers(base, out),
        ExprKind::Cast { expr, .. } | ExprKind::Delete(expr) => collect_identifiers(expr, out),
        ExprKind::InitList(items) | ExprKind::New { args: items, .. } => {
            for i in items {
                collect_identifiers(i, out);
            }
        }
        ExprKind::Lambda { .. } => {}
    }
}

/// The variable a call might modify through this argument.
fn may_write_root(a: &Expr, b: &Builder) -> Option<String> {
    match &a.kind {
        ExprKind::Unary { op, operand } if op == "&" => operand.base_identifier().map(|(n, _)| n.to_string()),
        ExprKind::Call { callee, .. } => match &callee.kind {
            ExprKind::Member { base, member, .. } if ITERATOR_MEMBERS.contains(&member.as_str()) => {
                base.base_identifier().map(|(n, _)| n.to_string())
            }
            ExprKind::Ident { name, .. } if name == "begin" || name == "end" => None,
            _ => None,
        },
        ExprKind::Binary { op, lhs, .. } if op == "+" || op == "-" => {
            let root = may_write_root(lhs, b)?;
            let pointerish = match b.resolve(&root) {
                Some(d) => {
                    let d = &b.g.declarations[d.0];
                    d.is_array || d.ty.is_ptr
                }
                None => true,
            };
            pointerish.then_some(root)
        }
        _ => a.base_identifier().map(|(n, _)| n.to_string()),
    }
}

fn is_integer_literal(text: &str) -> bool {
    let t = text.to_ascii_lowercase();
    if t.starts_with('\'') {
        return true;
    }
    if !t.starts_with(|c: char| c.is_ascii_digit()) {
        return false;
    }
    if t.starts_with("0x") {
        return !t.contains('.') && !t.contains('p');
    }
    !t.contains('.') && !t.contains('e') && !t.ends_with('f')
}
