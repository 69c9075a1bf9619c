//! Syntax tree for the supported C++ subset. Only what the graph builder needs.

use std::collections::BTreeMap;

use crate::source::LineSpan;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TypeRef {
    /// Normalized spelling, e.g. `std::vector<int>`.
    pub text: String,
    /// Last path segment of the base type, e.g. `vector`.
    pub base: String,
    pub args: Vec<TypeRef>,
    pub is_const: bool,
    pub is_ref: bool,
    pub is_ptr: bool,
}

impl TypeRef {
    pub fn is_container_of_containers(&self) -> bool {
        self.args.iter().any(|a| !a.args.is_empty())
    }
}

#[derive(Debug, Clone)]
pub struct TranslationUnit {
    pub items: Vec<Item>,
    pub macros: Vec<MacroDef>,
    /// typedef / using / macro type aliases, name to target.
    pub aliases: BTreeMap<String, TypeRef>,
    pub warnings: Vec<Skip>,
}

/// A region the parser did not model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub span: LineSpan,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct MacroDef {
    pub name: String,
    pub value: String,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub enum Item {
    Function(Function),
    Decl(DeclStmt),
    Struct(StructDef),
    /// Statement outside any function, as found in code fragments.
    Stmt(Stmt),
}

#[derive(Debug, Clone)]
pub struct Function {
    pub name: String,
    pub qualified: String,
    pub ret: TypeRef,
    pub params: Vec<Param>,
    pub body: Option<Block>,
    pub span: LineSpan,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: Option<String>,
    pub ty: TypeRef,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub struct StructDef {
    pub name: String,
    pub fields: Vec<DeclStmt>,
    pub methods: Vec<Function>,
    /// Variables declared after the closing brace.
    pub trailing: Option<DeclStmt>,
    pub span: LineSpan,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub span: LineSpan,
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: LineSpan,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    Block(Block),
    Decl(DeclStmt),
    Expr(Expr),
    If { cond: Expr, then: Box<Stmt>, els: Option<Box<Stmt>> },
    For { init: Option<Box<Stmt>>, cond: Option<Expr>, step: Option<Expr>, body: Box<Stmt> },
    RangeFor { var: DeclStmt, range: Expr, body: Box<Stmt> },
    While { cond: Expr, body: Box<Stmt> },
    DoWhile { body: Box<Stmt>, cond: Expr },
    Switch { cond: Expr, body: Box<Stmt> },
    Case(Option<Expr>),
    Return(Option<Expr>),
    Break,
    Continue,
    Empty,
    Skipped(String),
}

#[derive(Debug, Clone)]
pub struct DeclStmt {
    pub ty: TypeRef,
    pub declarators: Vec<Declarator>,
    pub span: LineSpan,
}

#[derive(Debug, Clone)]
pub struct Declarator {
    pub name: String,
    pub is_ref: bool,
    pub is_ptr: bool,
    pub dims: Vec<Option<Expr>>,
    pub init: Option<Init>,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub enum Init {
    Expr(Expr),
    Ctor(Vec<Expr>),
    List(Vec<Expr>),
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: LineSpan,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Ident { name: String, qualified: String },
    Literal(String),
    This,
    Unary { op: String, operand: Box<Expr> },
    Postfix { op: String, operand: Box<Expr> },
    Binary { op: String, lhs: Box<Expr>, rhs: Box<Expr> },
    Assign { op: String, lhs: Box<Expr>, rhs: Box<Expr> },
    Ternary { cond: Box<Expr>, then: Box<Expr>, els: Box<Expr> },
    Comma { lhs: Box<Expr>, rhs: Box<Expr> },
    Call { callee: Box<Expr>, args: Vec<Expr> },
    Index { base: Box<Expr>, index: Box<Expr> },
    Member { base: Box<Expr>, member: String, arrow: bool },
    Cast { ty: TypeRef, expr: Box<Expr> },
    SizeofType(TypeRef),
    InitList(Vec<Expr>),
    Lambda { by_ref_default: bool, params: Vec<Param>, body: Block },
    New { ty: TypeRef, args: Vec<Expr> },
    Delete(Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, span: LineSpan) -> Self {
        Expr { kind, span }
    }

    /// The identifier an lvalue-ish expression is rooted at, with whether the
    /// access goes through a subscript, dereference, or member.
    pub fn base_identifier(&self) -> Option<(&str, bool)> {
        match &self.kind {
            ExprKind::Ident { name, .. } => Some((name, false)),
            ExprKind::Index { base, .. } | ExprKind::Member { base, .. } => {
                base.base_identifier().map(|(n, _)| (n, true))
            }
            ExprKind::Unary { op, operand } if op == "*" => operand.base_identifier().map(|(n, _)| (n, true)),
            ExprKind::Cast { expr, .. } => expr.base_identifier(),
            _ => None,
        }
    }
}
