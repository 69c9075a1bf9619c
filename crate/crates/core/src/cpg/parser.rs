//! Recursive-descent parser for competitive-programming style C++.
//!
//! Handles single translation units: functions, globals, simple structs,
//! typedef/using aliases, lambdas and standard containers. Code fragments
//! (statements at file scope) are accepted as well. In lenient mode any
//! statement or item that fails to parse is skipped and recorded.

use std::collections::{BTreeMap, HashSet};

use super::ast::*;
use super::lexer::{tokenize, Directive, Token, TokenKind};
use crate::error::ParseError;
use crate::source::LineSpan;

type PResult<T> = Result<T, ParseError>;

const BUILTIN_WORDS: &[&str] = &[
    "void", "bool", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "auto", "wchar_t",
    "char16_t", "char32_t", "__int128",
];

const QUALIFIERS: &[&str] = &[
    "const",
    "volatile",
    "static",
    "constexpr",
    "inline",
    "extern",
    "register",
    "mutable",
    "thread_local",
    "typename",
    "struct",
    "class",
    "enum",
    "union",
];

const STD_TYPES: &[&str] = &[
    "string",
    "vector",
    "map",
    "set",
    "multiset",
    "multimap",
    "unordered_map",
    "unordered_set",
    "unordered_multiset",
    "unordered_multimap",
    "pair",
    "tuple",
    "queue",
    "priority_queue",
    "stack",
    "deque",
    "list",
    "forward_list",
    "bitset",
    "array",
    "istringstream",
    "ostringstream",
    "stringstream",
    "greater",
    "less",
    "greater_equal",
    "less_equal",
    "function",
    "complex",
    "valarray",
    "size_t",
    "int64_t",
    "int32_t",
    "int16_t",
    "int8_t",
    "uint64_t",
    "uint32_t",
    "uint16_t",
    "uint8_t",
    "ptrdiff_t",
    "istream",
    "ostream",
    "iterator",
    "const_iterator",
    "reverse_iterator",
    "initializer_list",
    "numeric_limits",
    "optional",
    "variant",
    "string_view",
    "mt19937",
    "mt19937_64",
    "random_device",
    "uniform_int_distribution",
    "uniform_real_distribution",
    "clock_t",
    "FILE",
    "basic_string",
    "hash",
];

const STD_TEMPLATES: &[&str] = &[
    "vector",
    "map",
    "set",
    "multiset",
    "multimap",
    "unordered_map",
    "unordered_set",
    "unordered_multiset",
    "unordered_multimap",
    "pair",
    "tuple",
    "queue",
    "priority_queue",
    "stack",
    "deque",
    "list",
    "forward_list",
    "bitset",
    "array",
    "greater",
    "less",
    "greater_equal",
    "less_equal",
    "function",
    "complex",
    "valarray",
    "numeric_limits",
    "optional",
    "variant",
    "initializer_list",
    "basic_string",
    "uniform_int_distribution",
    "uniform_real_distribution",
    "hash",
];

const KEYWORDS: &[&str] = &[
    "if",
    "else",
    "for",
    "while",
    "do",
    "return",
    "break",
    "continue",
    "switch",
    "case",
    "default",
    "goto",
    "sizeof",
    "new",
    "delete",
    "this",
    "true",
    "false",
    "nullptr",
    "throw",
    "try",
    "catch",
    "operator",
    "template",
    "using",
    "typedef",
    "namespace",
    "public",
    "private",
    "protected",
    "friend",
    "static_cast",
    "dynamic_cast",
    "const_cast",
    "reinterpret_cast",
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<="];

pub fn parse(text: &str, strict: bool) -> PResult<TranslationUnit> {
    let lexed = tokenize(text)?;
    let mut parser = Parser::new(lexed.tokens, strict);
    let macros = parser.apply_directives(&lexed.directives);
    let items = parser.items(false)?;
    if parser.pos < parser.toks.len() {
        return Err(parser.error("unexpected `}` at file scope"));
    }
    Ok(TranslationUnit { items, macros, aliases: parser.aliases, warnings: parser.warnings })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    types: HashSet<String>,
    templates: HashSet<String>,
    strict: bool,
    no_gt: bool,
    aliases: BTreeMap<String, TypeRef>,
    warnings: Vec<Skip>,
}

impl Parser {
    fn new(toks: Vec<Token>, strict: bool) -> Self {
        Parser {
            toks,
            pos: 0,
            types: STD_TYPES.iter().map(|s| s.to_string()).collect(),
            templates: STD_TEMPLATES.iter().map(|s| s.to_string()).collect(),
            strict,
            no_gt: false,
            aliases: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    // ---------------------------------------------------------------- tokens

    fn peek(&self, off: usize) -> Option<&Token> {
        self.toks.get(self.pos + off)
    }

    fn at(&self, text: &str) -> bool {
        self.peek(0).is_some_and(|t| t.is(text))
    }

    fn at_off(&self, off: usize, text: &str) -> bool {
        self.peek(off).is_some_and(|t| t.is(text))
    }

    fn at_ident(&self) -> bool {
        self.peek(0).is_some_and(|t| t.kind == TokenKind::Ident && !KEYWORDS.contains(&t.text.as_str()))
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn bump(&mut self) -> PResult<Token> {
        let t = self.peek(0).cloned().ok_or_else(|| self.error("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, text: &str) -> PResult<Token> {
        if self.at(text) {
            self.bump()
        } else {
            Err(self.error(format!("expected `{text}`")))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        if self.at_ident() {
            Ok(self.bump()?.text)
        } else {
            Err(self.error("expected identifier"))
        }
    }

    fn line(&self) -> u32 {
        match self.peek(0) {
            Some(t) => t.line,
            None => self.prev_line(),
        }
    }

    fn prev_line(&self) -> u32 {
        if self.pos == 0 {
            1
        } else {
            self.toks[(self.pos - 1).min(self.toks.len() - 1)].line
        }
    }

    fn span_from(&self, start: u32) -> LineSpan {
        LineSpan::new(start, self.prev_line().max(start))
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let message = message.into();
        match self.peek(0) {
            Some(t) => ParseError { line: t.line, column: t.column, message: format!("{message}, found `{}`", t.text) },
            None => ParseError { line: self.prev_line(), column: 1, message },
        }
    }

    /// `>` immediately followed by `>`: a shift operator outside template lists.
    fn at_shift_right(&self) -> bool {
        self.at(">") && self.peek(1).is_some_and(|t| t.text == ">" && !t.space_before)
    }

    fn at_shift_right_assign(&self) -> bool {
        self.at(">") && self.peek(1).is_some_and(|t| t.text == ">=" && !t.space_before)
    }

    // ------------------------------------------------------------ directives

    fn apply_directives(&mut self, directives: &[Directive]) -> Vec<MacroDef> {
        let mut macros = Vec::new();
        for d in directives {
            let Some(rest) = d.text.strip_prefix("define") else { continue };
            if !rest.starts_with(char::is_whitespace) {
                continue;
            }
            let rest = rest.trim_start();
            let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            if name.is_empty() {
                continue;
            }
            let after = &rest[name.len()..];
            let span = LineSpan::new(d.line, d.end_line);
            if after.starts_with('(') {
                self.warnings.push(Skip { span, reason: format!("function-like macro `{name}`") });
                continue;
            }
            let value = after.trim().to_string();
            let words: Vec<&str> = value.split_whitespace().collect();
            let is_type =
                !words.is_empty() && words.iter().all(|w| BUILTIN_WORDS.contains(w) || self.types.contains(*w));
            if is_type {
                self.types.insert(name.clone());
                let base = words
                    .iter()
                    .rev()
                    .find(|w| !matches!(**w, "signed" | "unsigned" | "long" | "short" | "const"))
                    .map(|w| w.to_string())
                    .unwrap_or_else(|| "int".into());
                self.aliases.insert(name, TypeRef { text: value, base, ..Default::default() });
                continue;
            }
            if is_constant_text(&value) {
                macros.push(MacroDef { name, value, line: d.line });
            } else {
                self.warnings.push(Skip { span, reason: format!("non-constant object-like macro `{name}`") });
            }
        }
        macros
    }

    // ----------------------------------------------------------------- items

    fn items(&mut self, until_brace: bool) -> PResult<Vec<Item>> {
        let mut out = Vec::new();
        while self.pos < self.toks.len() {
            if self.at("}") {
                if until_brace {
                    break;
                }
                if self.strict {
                    return Err(self.error("unbalanced `}`"));
                }
                let line = self.line();
                self.pos += 1;
                self.warnings.push(Skip { span: LineSpan::line(line), reason: "stray `}`".into() });
                continue;
            }
            let start = self.pos;
            match self.item() {
                Ok(mut items) => out.append(&mut items),
                Err(e) if !self.strict => {
                    self.pos = start;
                    let span = self.skip_statement();
                    self.warnings.push(Skip { span, reason: e.to_string() });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    fn item(&mut self) -> PResult<Vec<Item>> {
        if self.eat(";") {
            return Ok(vec![]);
        }
        if self.at("using") || self.at("typedef") {
            self.alias()?;
            return Ok(vec![]);
        }
        if self.at("template") {
            self.template_header()?;
            return self.item();
        }
        if self.at("namespace") {
            self.bump()?;
            if self.at_ident() {
                self.bump()?;
            }
            self.expect("{")?;
            let items = self.items(true)?;
            self.expect("}")?;
            return Ok(items);
        }
        if self.at("extern") && self.peek(1).is_some_and(|t| t.kind == TokenKind::Str) {
            self.pos += 2;
            if self.eat("{") {
                let items = self.items(true)?;
                self.expect("}")?;
                return Ok(items);
            }
            return self.item();
        }
        if (self.at("struct") || self.at("class") || self.at("union"))
            && self.peek(1).is_some_and(|t| t.kind == TokenKind::Ident)
            && (self.at_off(2, "{") || self.at_off(2, ":") || self.at_off(2, ";"))
        {
            return Ok(self.struct_def()?.into_iter().map(Item::Struct).collect());
        }
        if self.at("enum") {
            self.skip_statement();
            return Ok(vec![]);
        }
        if self.looks_like_decl() {
            let start = self.line();
            let ty = self.parse_type(true, false)?;
            if self.at_function_name() {
                let save = self.pos;
                let (name, qualified) = self.function_name()?;
                if self.at("(") && self.at_function_params() {
                    let f = self.function_rest(ty, name, qualified, start)?;
                    return Ok(vec![Item::Function(f)]);
                }
                self.pos = save;
            }
            let decl = self.decl_rest(ty, start)?;
            self.expect(";")?;
            return Ok(vec![Item::Decl(decl)]);
        }
        Ok(vec![Item::Stmt(self.stmt()?)])
    }

    fn alias(&mut self) -> PResult<()> {
        if self.eat("typedef") {
            let ty = if (self.at("struct") || self.at("class")) && (self.at_off(1, "{") || self.at_off(2, "{")) {
                let name = self.peek(1).filter(|t| t.kind == TokenKind::Ident).map(|t| t.text.clone());
                self.struct_def()?;
                let name = name.unwrap_or_default();
                TypeRef { text: name.clone(), base: name, ..Default::default() }
            } else {
                self.parse_type(true, true)?
            };
            loop {
                let mut ty = ty.clone();
                while self.at("*") || self.at("&") {
                    ty.is_ptr |= self.bump()?.text == "*";
                }
                let name = self.ident()?;
                while self.eat("[") {
                    self.skip_balanced_until("]")?;
                    ty.is_ptr = true;
                }
                self.types.insert(name.clone());
                self.aliases.insert(name, ty);
                if !self.eat(",") {
                    break;
                }
            }
            self.expect(";")?;
            return Ok(());
        }
        self.expect("using")?;
        if self.eat("namespace") {
            while !self.at(";") {
                self.bump()?;
            }
            self.expect(";")?;
            return Ok(());
        }
        if self.at_ident() && self.at_off(1, "=") {
            let name = self.ident()?;
            self.expect("=")?;
            let ty = self.parse_type(true, true)?;
            self.types.insert(name.clone());
            self.aliases.insert(name, ty);
            self.expect(";")?;
            return Ok(());
        }
        // using std::cin;
        while !self.at(";") {
            self.bump()?;
        }
        self.expect(";")?;
        Ok(())
    }

    fn template_header(&mut self) -> PResult<()> {
        self.expect("template")?;
        self.expect("<")?;
        let mut depth = 1;
        while depth > 0 {
            let t = self.bump()?;
            match t.text.as_str() {
                "<" => depth += 1,
                ">" => depth -= 1,
                "typename" | "class" if self.at_ident() => {
                    let name = self.ident()?;
                    self.types.insert(name);
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn struct_def(&mut self) -> PResult<Option<StructDef>> {
        let start = self.line();
        self.bump()?; // struct/class/union
        let name = self.ident()?;
        self.types.insert(name.clone());
        if self.eat(";") {
            return Ok(None);
        }
        if self.eat(":") {
            while !self.at("{") {
                self.bump()?;
            }
        }
        self.expect("{")?;
        let mut fields = Vec::new();
        let mut methods = Vec::new();
        while !self.at("}") {
            if self.pos >= self.toks.len() {
                return Err(self.error("unterminated struct"));
            }
            let member_start = self.pos;
            match self.member(&name, &mut fields, &mut methods) {
                Ok(()) => {}
                Err(e) if !self.strict => {
                    self.pos = member_start;
                    let span = self.skip_statement();
                    self.warnings.push(Skip { span, reason: e.to_string() });
                }
                Err(e) => return Err(e),
            }
        }
        self.expect("}")?;
        let trailing = if self.at_ident() || self.at("*") {
            let ty = TypeRef { text: name.clone(), base: name.clone(), ..Default::default() };
            Some(self.decl_rest(ty, self.line())?)
        } else {
            None
        };
        self.expect(";")?;
        Ok(Some(StructDef { name, fields, methods, trailing, span: self.span_from(start) }))
    }

    fn member(&mut self, owner: &str, fields: &mut Vec<DeclStmt>, methods: &mut Vec<Function>) -> PResult<()> {
        if self.eat(";") {
            return Ok(());
        }
        if (self.at("public") || self.at("private") || self.at("protected")) && self.at_off(1, ":") {
            self.pos += 2;
            return Ok(());
        }
        if self.at("using") || self.at("typedef") {
            return self.alias();
        }
        if self.at("template") {
            return self.template_header();
        }
        self.eat("friend");
        while self.eat("explicit") || self.eat("inline") || self.eat("virtual") {}
        let start = self.line();
        let is_ctor = self.at(owner) && self.at_off(1, "(");
        if is_ctor || (self.at("~") && self.at_off(1, owner)) {
            let mut name = String::new();
            if self.eat("~") {
                name.push('~');
            }
            name.push_str(&self.ident()?);
            let qualified = format!("{owner}::{name}");
            let ret = TypeRef { text: "void".into(), base: "void".into(), ..Default::default() };
            methods.push(self.function_rest(ret, name, qualified, start)?);
            return Ok(());
        }
        if (self.at("struct") || self.at("class")) && self.at_off(2, "{") {
            if let Some(inner) = self.struct_def()? {
                methods.extend(inner.methods);
            }
            return Ok(());
        }
        let ty = self.parse_type(true, false)?;
        if self.at_function_name() {
            let save = self.pos;
            let (name, _) = self.function_name()?;
            if self.at("(") {
                let qualified = format!("{owner}::{name}");
                methods.push(self.function_rest(ty, name, qualified, start)?);
                return Ok(());
            }
            self.pos = save;
        }
        let decl = self.decl_rest(ty, start)?;
        self.expect(";")?;
        fields.push(decl);
        Ok(())
    }

    fn at_function_name(&self) -> bool {
        self.at_ident() || self.at("operator") || self.at("~")
    }

    fn function_name(&mut self) -> PResult<(String, String)> {
        let mut segments = Vec::new();
        loop {
            let name = if self.eat("operator") {
                let mut op = String::from("operator");
                if self.at("(") && self.at_off(1, ")") {
                    self.pos += 2;
                    op.push_str("()");
                } else if self.at("[") && self.at_off(1, "]") {
                    self.pos += 2;
                    op.push_str("[]");
                } else {
                    while !self.at("(") {
                        op.push_str(&self.bump()?.text);
                    }
                }
                op
            } else if self.eat("~") {
                format!("~{}", self.ident()?)
            } else {
                self.ident()?
            };
            segments.push(name);
            if !self.eat("::") {
                break;
            }
        }
        let name = segments.last().cloned().unwrap_or_default();
        Ok((name, segments.join("::")))
    }

    /// At `(` after a file-scope name: parameter list rather than constructor arguments.
    fn at_function_params(&mut self) -> bool {
        if self.at_off(1, ")") {
            return true;
        }
        let save = self.pos;
        self.pos += 1;
        let result = match self.parse_type_known(true, false) {
            Ok((_, true)) => true,
            Ok((_, false)) => {
                while self.eat("*") || self.eat("&") {}
                self.at_ident()
            }
            Err(_) => false,
        };
        self.pos = save;
        result
    }

    fn function_rest(&mut self, ret: TypeRef, name: String, qualified: String, start: u32) -> PResult<Function> {
        let params = self.params()?;
        loop {
            if self.eat("const") || self.eat("noexcept") || self.eat("override") || self.eat("final") {
                continue;
            }
            if self.eat("->") {
                self.parse_type(true, true)?;
                continue;
            }
            break;
        }
        if self.eat(";") {
            return Ok(Function { name, qualified, ret, params, body: None, span: self.span_from(start) });
        }
        if self.eat("=") {
            // = default / = delete / = 0
            self.bump()?;
            self.expect(";")?;
            return Ok(Function { name, qualified, ret, params, body: None, span: self.span_from(start) });
        }
        let mut init_stmts = Vec::new();
        if self.eat(":") {
            loop {
                let line = self.line();
                let member = self.ident()?;
                let args = if self.eat("(") {
                    self.args(")")?
                } else {
                    self.expect("{")?;
                    self.args("}")?
                };
                let span = self.span_from(line);
                let lhs = Expr::new(ExprKind::Ident { name: member.clone(), qualified: member }, span);
                let rhs = match args.len() {
                    1 => args.into_iter().next().unwrap(),
                    _ => Expr::new(ExprKind::InitList(args), span),
                };
                let assign = ExprKind::Assign { op: "=".into(), lhs: Box::new(lhs), rhs: Box::new(rhs) };
                init_stmts.push(Stmt { kind: StmtKind::Expr(Expr::new(assign, span)), span });
                if !self.eat(",") {
                    break;
                }
            }
        }
        let mut body = self.block()?;
        if !init_stmts.is_empty() {
            init_stmts.append(&mut body.stmts);
            body.stmts = init_stmts;
        }
        Ok(Function { name, qualified, ret, params, body: Some(body), span: self.span_from(start) })
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect("(")?;
        let mut params = Vec::new();
        if self.at("void") && self.at_off(1, ")") {
            self.bump()?;
        }
        while !self.at(")") {
            if self.eat("...") {
                continue;
            }
            let line = self.line();
            let mut ty = self.parse_type(true, false)?;
            loop {
                if self.eat("*") {
                    ty.is_ptr = true;
                } else if self.eat("&") || self.eat("&&") {
                    ty.is_ref = true;
                } else if self.eat("const") {
                } else {
                    break;
                }
            }
            let name = if self.at_ident() { Some(self.ident()?) } else { None };
            while self.eat("[") {
                self.skip_balanced_until("]")?;
                ty.is_ptr = true;
            }
            if self.eat("=") {
                self.assign()?;
            }
            params.push(Param { name, ty, line });
            if !self.eat(",") {
                break;
            }
        }
        self.expect(")")?;
        Ok(params)
    }

    // ----------------------------------------------------------------- types

    /// Speculative check: does a declaration start here?
    fn looks_like_decl(&mut self) -> bool {
        if !(self.at_ident() || QUALIFIERS.iter().any(|q| self.at(q)) || self.at("::")) {
            return false;
        }
        let save = self.pos;
        let result = match self.parse_type_known(true, false) {
            Ok((ty, known)) => {
                let mut ptr = false;
                while self.eat("*") || self.eat("&") || self.eat("&&") {
                    ptr = true;
                }
                if self.at_ident() || self.at("operator") || (self.at("[") && ty.base == "auto") {
                    true
                } else if self.at("~") && !ptr {
                    false
                } else {
                    // `unsigned;` and other bare keyword types are not declarations we model
                    known && ptr && self.at("(")
                }
            }
            Err(_) => false,
        };
        self.pos = save;
        result
    }

    fn parse_type(&mut self, allow_unknown: bool, abstract_decl: bool) -> PResult<TypeRef> {
        let (ty, known) = self.parse_type_known(allow_unknown, abstract_decl)?;
        if !known && !allow_unknown {
            return Err(self.error("unknown type"));
        }
        Ok(ty)
    }

    /// Parses a type; `abstract_decl` also consumes trailing `*` / `&`.
    fn parse_type_known(&mut self, allow_unknown: bool, abstract_decl: bool) -> PResult<(TypeRef, bool)> {
        let mut ty = TypeRef::default();
        let mut words: Vec<String> = Vec::new();
        loop {
            if self.at("const") || self.at("volatile") {
                ty.is_const |= self.at("const");
                self.bump()?;
            } else if QUALIFIERS.iter().any(|q| self.at(q)) {
                self.bump()?;
            } else {
                break;
            }
        }
        let known;
        let mut builtin = Vec::new();
        while let Some(t) = self.peek(0) {
            if t.kind == TokenKind::Ident && BUILTIN_WORDS.contains(&t.text.as_str()) {
                builtin.push(t.text.clone());
                self.pos += 1;
            } else if t.is("const") {
                ty.is_const = true;
                self.pos += 1;
            } else {
                break;
            }
        }
        if !builtin.is_empty() {
            let base = builtin
                .iter()
                .rev()
                .find(|w| !matches!(w.as_str(), "signed" | "unsigned" | "long" | "short"))
                .cloned()
                .unwrap_or_else(|| "int".into());
            ty.base = base;
            words.push(builtin.join(" "));
            known = true;
        } else {
            let leading = self.eat("::");
            let mut segments = Vec::new();
            loop {
                if !self.at_ident() {
                    return Err(self.error("expected type"));
                }
                let seg = self.bump()?.text;
                let mut text = seg.clone();
                if self.at("<") && self.templates.contains(&seg) {
                    let args = self.template_args()?;
                    text.push('<');
                    text.push_str(&args.iter().map(|a| a.text.clone()).collect::<Vec<_>>().join(","));
                    text.push('>');
                    ty.args = args;
                }
                segments.push(text);
                ty.base = seg;
                if self.at("::") && self.peek(1).is_some_and(|t| t.kind == TokenKind::Ident) {
                    self.bump()?;
                } else {
                    break;
                }
            }
            known = self.types.contains(&ty.base);
            let mut joined = segments.join("::");
            if leading {
                joined.insert_str(0, "::");
            }
            words.push(joined);
            if !known && !allow_unknown {
                return Err(self.error("unknown type"));
            }
        }
        while self.at("const") || self.at("volatile") {
            ty.is_const |= self.at("const");
            self.bump()?;
        }
        if abstract_decl {
            loop {
                if self.eat("*") {
                    ty.is_ptr = true;
                } else if self.eat("&") || self.eat("&&") {
                    ty.is_ref = true;
                } else if self.eat("const") {
                    ty.is_const = true;
                } else {
                    break;
                }
            }
        }
        ty.text = words.join(" ");
        Ok((ty, known))
    }

    fn template_args(&mut self) -> PResult<Vec<TypeRef>> {
        self.expect("<")?;
        let mut args = Vec::new();
        while !self.at(">") {
            let save = self.pos;
            let as_type = match self.parse_type_known(false, true) {
                Ok((ty, true)) if self.at(",") || self.at(">") || self.at("(") => Some(ty),
                _ => None,
            };
            match as_type {
                Some(mut ty) => {
                    if self.at("(") {
                        // function signature, e.g. function<int(int)>
                        self.bump()?;
                        self.skip_balanced_until(")")?;
                        ty.text.push_str("(...)");
                    }
                    args.push(ty);
                }
                None => {
                    self.pos = save;
                    let old = self.no_gt;
                    self.no_gt = true;
                    let e = self.binary(9);
                    self.no_gt = old;
                    let e = e?;
                    let text = match &e.kind {
                        ExprKind::Literal(l) => l.clone(),
                        ExprKind::Ident { qualified, .. } => qualified.clone(),
                        _ => "expr".into(),
                    };
                    args.push(TypeRef { text: text.clone(), base: text, ..Default::default() });
                }
            }
            if !self.eat(",") {
                break;
            }
        }
        self.expect(">")?;
        Ok(args)
    }

    // ------------------------------------------------------------ statements

    fn block(&mut self) -> PResult<Block> {
        let start = self.line();
        self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.pos >= self.toks.len() {
                return Err(self.error("unterminated block"));
            }
            let begin = self.pos;
            match self.stmt() {
                Ok(s) => stmts.push(s),
                Err(e) if !self.strict => {
                    self.pos = begin;
                    let span = self.skip_statement();
                    self.warnings.push(Skip { span, reason: e.to_string() });
                    stmts.push(Stmt { kind: StmtKind::Skipped(e.message), span });
                }
                Err(e) => return Err(e),
            }
        }
        self.expect("}")?;
        Ok(Block { stmts, span: self.span_from(start) })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.line();
        let kind = self.stmt_kind()?;
        Ok(Stmt { kind, span: self.span_from(start) })
    }

    fn stmt_kind(&mut self) -> PResult<StmtKind> {
        if self.at("{") {
            return Ok(StmtKind::Block(self.block()?));
        }
        if self.eat(";") {
            return Ok(StmtKind::Empty);
        }
        if self.eat("if") {
            self.eat("constexpr");
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            let then = Box::new(self.stmt()?);
            let els = if self.eat("else") { Some(Box::new(self.stmt()?)) } else { None };
            return Ok(StmtKind::If { cond, then, els });
        }
        if self.eat("for") {
            return self.for_rest();
        }
        if self.eat("while") {
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            let body = Box::new(self.stmt()?);
            return Ok(StmtKind::While { cond, body });
        }
        if self.eat("do") {
            let body = Box::new(self.stmt()?);
            self.expect("while")?;
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            self.expect(";")?;
            return Ok(StmtKind::DoWhile { body, cond });
        }
        if self.eat("switch") {
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            let body = Box::new(self.stmt()?);
            return Ok(StmtKind::Switch { cond, body });
        }
        if self.eat("case") {
            let e = self.conditional()?;
            self.expect(":")?;
            return Ok(StmtKind::Case(Some(e)));
        }
        if self.at("default") && self.at_off(1, ":") {
            self.pos += 2;
            return Ok(StmtKind::Case(None));
        }
        if self.eat("return") {
            let e = if self.at(";") { None } else { Some(self.expr()?) };
            self.expect(";")?;
            return Ok(StmtKind::Return(e));
        }
        if self.eat("break") {
            self.expect(";")?;
            return Ok(StmtKind::Break);
        }
        if self.eat("continue") {
            self.expect(";")?;
            return Ok(StmtKind::Continue);
        }
        if self.eat("goto") {
            self.ident()?;
            self.expect(";")?;
            return Ok(StmtKind::Empty);
        }
        if self.at("using") || self.at("typedef") {
            self.alias()?;
            return Ok(StmtKind::Empty);
        }
        if (self.at("struct") || self.at("class")) && self.at_off(2, "{") {
            self.struct_def()?;
            return Ok(StmtKind::Empty);
        }
        if self.at_ident() && self.at_off(1, ":") {
            self.pos += 2;
            return Ok(StmtKind::Empty);
        }
        if self.looks_like_decl() {
            let start = self.line();
            let ty = self.parse_type(true, false)?;
            let decl = self.decl_rest(ty, start)?;
            self.expect(";")?;
            return Ok(StmtKind::Decl(decl));
        }
        let e = self.expr()?;
        self.expect(";")?;
        Ok(StmtKind::Expr(e))
    }

    fn for_rest(&mut self) -> PResult<StmtKind> {
        self.expect("(")?;
        let init_start = self.line();
        let mut init = None;
        if !self.eat(";") {
            if self.looks_like_decl() {
                let ty = self.parse_type(true, false)?;
                let first = self.declarator()?;
                if self.eat(":") {
                    let range = self.expr()?;
                    self.expect(")")?;
                    let var = DeclStmt { ty, declarators: first, span: self.span_from(init_start) };
                    let body = Box::new(self.stmt()?);
                    return Ok(StmtKind::RangeFor { var, range, body });
                }
                let mut declarators = first;
                while self.eat(",") {
                    declarators.extend(self.declarator()?);
                }
                let span = self.span_from(init_start);
                init = Some(Box::new(Stmt { kind: StmtKind::Decl(DeclStmt { ty, declarators, span }), span }));
            } else {
                let e = self.expr()?;
                let span = self.span_from(init_start);
                init = Some(Box::new(Stmt { kind: StmtKind::Expr(e), span }));
            }
            self.expect(";")?;
        }
        let cond = if self.at(";") { None } else { Some(self.expr()?) };
        self.expect(";")?;
        let step = if self.at(")") { None } else { Some(self.expr()?) };
        self.expect(")")?;
        let body = Box::new(self.stmt()?);
        Ok(StmtKind::For { init, cond, step, body })
    }

    fn decl_rest(&mut self, ty: TypeRef, start: u32) -> PResult<DeclStmt> {
        let mut declarators = self.declarator()?;
        while self.eat(",") {
            declarators.extend(self.declarator()?);
        }
        Ok(DeclStmt { ty, declarators, span: self.span_from(start) })
    }

    fn declarator(&mut self) -> PResult<Vec<Declarator>> {
        let line = self.line();
        let (mut is_ptr, mut is_ref) = (false, false);
        loop {
            if self.eat("*") {
                is_ptr = true;
            } else if self.eat("&") || self.eat("&&") {
                is_ref = true;
            } else if self.eat("const") {
            } else {
                break;
            }
        }
        if self.eat("[") {
            // structured binding
            let mut names = Vec::new();
            while !self.at("]") {
                names.push(self.ident()?);
                if !self.eat(",") {
                    break;
                }
            }
            self.expect("]")?;
            let init = self.initializer()?;
            let mut out: Vec<Declarator> = names
                .into_iter()
                .map(|name| Declarator { name, is_ref, is_ptr, dims: vec![], init: None, line })
                .collect();
            if let Some(first) = out.first_mut() {
                first.init = init;
            }
            return Ok(out);
        }
        let name = self.ident()?;
        let mut dims = Vec::new();
        while self.eat("[") {
            if self.eat("]") {
                dims.push(None);
            } else {
                dims.push(Some(self.expr()?));
                self.expect("]")?;
            }
        }
        let init = self.initializer()?;
        Ok(vec![Declarator { name, is_ref, is_ptr, dims, init, line }])
    }

    fn initializer(&mut self) -> PResult<Option<Init>> {
        if self.eat("=") {
            if self.at("{") {
                self.bump()?;
                return Ok(Some(Init::List(self.args("}")?)));
            }
            return Ok(Some(Init::Expr(self.assign()?)));
        }
        if self.eat("(") {
            return Ok(Some(Init::Ctor(self.args(")")?)));
        }
        if self.eat("{") {
            return Ok(Some(Init::List(self.args("}")?)));
        }
        Ok(None)
    }

    /// Comma-separated assignment expressions up to and including `close`.
    fn args(&mut self, close: &str) -> PResult<Vec<Expr>> {
        let mut out = Vec::new();
        while !self.at(close) {
            out.push(self.assign()?);
            if !self.eat(",") {
                break;
            }
        }
        self.expect(close)?;
        Ok(out)
    }

    // ----------------------------------------------------------- expressions

    fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.assign()?;
        while self.at(",") {
            self.bump()?;
            let rhs = self.assign()?;
            let span = e.span.merge(rhs.span);
            e = Expr::new(ExprKind::Comma { lhs: Box::new(e), rhs: Box::new(rhs) }, span);
        }
        Ok(e)
    }

    fn assign(&mut self) -> PResult<Expr> {
        if self.at("throw") {
            let start = self.line();
            self.bump()?;
            let operand = if self.at(";") || self.at(")") {
                Expr::new(ExprKind::Literal(String::new()), LineSpan::line(start))
            } else {
                self.assign()?
            };
            let span = self.span_from(start);
            return Ok(Expr::new(ExprKind::Unary { op: "throw".into(), operand: Box::new(operand) }, span));
        }
        let lhs = self.conditional()?;
        let op = if !self.no_gt && self.at_shift_right_assign() {
            self.pos += 2;
            Some(">>=".to_string())
        } else if ASSIGN_OPS.iter().any(|op| self.at(op)) {
            Some(self.bump()?.text)
        } else {
            None
        };
        let Some(op) = op else { return Ok(lhs) };
        let rhs = if self.at("{") {
            let start = self.line();
            self.bump()?;
            let items = self.args("}")?;
            Expr::new(ExprKind::InitList(items), self.span_from(start))
        } else {
            self.assign()?
        };
        let span = lhs.span.merge(rhs.span);
        Ok(Expr::new(ExprKind::Assign { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span))
    }

    fn conditional(&mut self) -> PResult<Expr> {
        let cond = self.binary(1)?;
        if !self.eat("?") {
            return Ok(cond);
        }
        let then = self.expr()?;
        self.expect(":")?;
        let els = self.assign()?;
        let span = cond.span.merge(els.span);
        Ok(Expr::new(ExprKind::Ternary { cond: Box::new(cond), then: Box::new(then), els: Box::new(els) }, span))
    }

    /// Binary operator at the cursor: (spelling, token count, precedence).
    fn peek_binop(&self) -> Option<(&'static str, usize, u8)> {
        let t = self.peek(0)?;
        if t.kind != TokenKind::Punct {
            return None;
        }
        if t.text == ">" {
            if self.no_gt || self.at_shift_right_assign() {
                return None;
            }
            if self.at_shift_right() {
                return Some((">>", 2, 8));
            }
            return Some((">", 1, 7));
        }
        let entry = match t.text.as_str() {
            "||" => ("||", 1),
            "&&" => ("&&", 2),
            "|" => ("|", 3),
            "^" => ("^", 4),
            "&" => ("&", 5),
            "==" => ("==", 6),
            "!=" => ("!=", 6),
            "<" => ("<", 7),
            "<=" => ("<=", 7),
            ">=" if !self.no_gt => (">=", 7),
            "<=>" => ("<=>", 7),
            "<<" => ("<<", 8),
            "+" => ("+", 9),
            "-" => ("-", 9),
            "*" => ("*", 10),
            "/" => ("/", 10),
            "%" => ("%", 10),
            ".*" => (".*", 11),
            "->*" => ("->*", 11),
            _ => return None,
        };
        Some((entry.0, 1, entry.1))
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some((op, ntoks, prec)) = self.peek_binop() {
            if prec < min_prec {
                break;
            }
            self.pos += ntoks;
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.merge(rhs.span);
            lhs = Expr::new(ExprKind::Binary { op: op.to_string(), lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.line();
        for op in ["!", "~", "-", "+", "++", "--", "*", "&", "&&"] {
            if self.at(op) {
                self.bump()?;
                let operand = self.unary()?;
                let span = self.span_from(start);
                return Ok(Expr::new(ExprKind::Unary { op: op.into(), operand: Box::new(operand) }, span));
            }
        }
        if self.eat("sizeof") {
            self.eat("...");
            if self.at("(") {
                let save = self.pos;
                self.bump()?;
                if let Ok((ty, true)) = self.parse_type_known(false, true) {
                    if self.eat(")") {
                        return Ok(Expr::new(ExprKind::SizeofType(ty), self.span_from(start)));
                    }
                }
                self.pos = save;
            }
            let operand = self.unary()?;
            let span = self.span_from(start);
            return Ok(Expr::new(ExprKind::Unary { op: "sizeof".into(), operand: Box::new(operand) }, span));
        }
        if self.eat("new") {
            let ty = self.parse_type(true, true)?;
            let mut args = Vec::new();
            if self.eat("[") {
                args.push(self.expr()?);
                self.expect("]")?;
            }
            if self.eat("(") {
                args.extend(self.args(")")?);
            } else if self.eat("{") {
                args.extend(self.args("}")?);
            }
            return Ok(Expr::new(ExprKind::New { ty, args }, self.span_from(start)));
        }
        if self.eat("delete") {
            if self.eat("[") {
                self.expect("]")?;
            }
            let operand = self.unary()?;
            return Ok(Expr::new(ExprKind::Delete(Box::new(operand)), self.span_from(start)));
        }
        if self.at("(") {
            if let Some(e) = self.try_cast(start)? {
                return Ok(e);
            }
        }
        let primary = self.primary()?;
        self.postfix(primary)
    }

    fn try_cast(&mut self, start: u32) -> PResult<Option<Expr>> {
        let save = self.pos;
        self.bump()?;
        match self.parse_type_known(false, true) {
            Ok((ty, true)) if self.at(")") => {
                self.bump()?;
                let starts_operand = self.peek(0).is_some_and(|t| {
                    matches!(t.kind, TokenKind::Ident | TokenKind::Number | TokenKind::Str | TokenKind::Char)
                        || ["(", "!", "~", "-", "+", "*", "&", "++", "--", "{"].contains(&t.text.as_str())
                });
                if starts_operand {
                    let operand = self.unary()?;
                    let span = self.span_from(start);
                    return Ok(Some(Expr::new(ExprKind::Cast { ty, expr: Box::new(operand) }, span)));
                }
            }
            _ => {}
        }
        self.pos = save;
        Ok(None)
    }

    fn postfix(&mut self, mut e: Expr) -> PResult<Expr> {
        loop {
            let start = e.span.start_line;
            if self.eat("(") {
                let args = self.args(")")?;
                e = Expr::new(ExprKind::Call { callee: Box::new(e), args }, self.span_from(start));
            } else if self.eat("[") {
                let index = self.expr()?;
                self.expect("]")?;
                e = Expr::new(ExprKind::Index { base: Box::new(e), index: Box::new(index) }, self.span_from(start));
            } else if self.at(".") || self.at("->") {
                let arrow = self.bump()?.text == "->";
                self.eat("template");
                let member = if self.at("~") {
                    self.bump()?;
                    format!("~{}", self.ident()?)
                } else if self.eat("operator") {
                    format!("operator{}", self.bump()?.text)
                } else {
                    self.ident()?
                };
                if self.at("<") && self.templates.contains(&member) {
                    self.template_args()?;
                }
                e = Expr::new(ExprKind::Member { base: Box::new(e), member, arrow }, self.span_from(start));
            } else if self.at("++") || self.at("--") {
                let op = self.bump()?.text;
                e = Expr::new(ExprKind::Postfix { op, operand: Box::new(e) }, self.span_from(start));
            } else if self.at("{") && self.is_type_expr(&e) {
                self.bump()?;
                let args = self.args("}")?;
                e = Expr::new(ExprKind::Call { callee: Box::new(e), args }, self.span_from(start));
            } else {
                return Ok(e);
            }
        }
    }

    fn is_type_expr(&self, e: &Expr) -> bool {
        matches!(&e.kind, ExprKind::Ident { name, .. } if self.types.contains(name))
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.line();
        let Some(t) = self.peek(0).cloned() else {
            return Err(self.error("expected expression"));
        };
        match t.kind {
            TokenKind::Number | TokenKind::Char => {
                self.bump()?;
                return Ok(Expr::new(ExprKind::Literal(t.text), LineSpan::line(t.line)));
            }
            TokenKind::Str => {
                let mut text = String::new();
                while self.peek(0).is_some_and(|t| t.kind == TokenKind::Str) {
                    text.push_str(&self.bump()?.text);
                }
                return Ok(Expr::new(ExprKind::Literal(text), self.span_from(start)));
            }
            _ => {}
        }
        if self.eat("(") {
            let e = self.expr()?;
            self.expect(")")?;
            return Ok(Expr::new(e.kind, self.span_from(start)));
        }
        if self.eat("{") {
            let items = self.args("}")?;
            return Ok(Expr::new(ExprKind::InitList(items), self.span_from(start)));
        }
        if self.at("[") {
            return self.lambda();
        }
        if self.eat("this") {
            return Ok(Expr::new(ExprKind::This, LineSpan::line(t.line)));
        }
        if ["true", "false", "nullptr", "NULL"].iter().any(|k| self.at(k)) {
            self.bump()?;
            return Ok(Expr::new(ExprKind::Literal(t.text), LineSpan::line(t.line)));
        }
        if ["static_cast", "dynamic_cast", "const_cast", "reinterpret_cast"].iter().any(|k| self.at(k)) {
            self.bump()?;
            self.expect("<")?;
            let ty = self.parse_type(true, true)?;
            self.expect(">")?;
            self.expect("(")?;
            let e = self.expr()?;
            self.expect(")")?;
            return Ok(Expr::new(ExprKind::Cast { ty, expr: Box::new(e) }, self.span_from(start)));
        }
        if t.kind == TokenKind::Ident && BUILTIN_WORDS.contains(&t.text.as_str()) {
            // functional cast: int(x), long long(x)
            let ty = self.parse_type(false, false)?;
            if self.eat("(") {
                let mut args = self.args(")")?;
                let inner = if args.len() == 1 {
                    args.pop().unwrap()
                } else {
                    Expr::new(ExprKind::InitList(args), self.span_from(start))
                };
                return Ok(Expr::new(ExprKind::Cast { ty, expr: Box::new(inner) }, self.span_from(start)));
            }
            self.expect("{")?;
            let args = self.args("}")?;
            let inner = Expr::new(ExprKind::InitList(args), self.span_from(start));
            return Ok(Expr::new(ExprKind::Cast { ty, expr: Box::new(inner) }, self.span_from(start)));
        }
        self.eat("::");
        if !self.at_ident() && !self.at("operator") {
            return Err(self.error("expected expression"));
        }
        let mut segments = Vec::new();
        loop {
            let seg = if self.at("operator") {
                let (name, _) = self.function_name()?;
                name
            } else {
                self.ident()?
            };
            if self.at("<") && (self.templates.contains(&seg) || self.template_id_ahead()) {
                self.template_args()?;
            }
            segments.push(seg);
            if self.at("::") && self.peek(1).is_some_and(|t| t.kind == TokenKind::Ident) {
                self.bump()?;
            } else {
                break;
            }
        }
        let name = segments.last().cloned().unwrap_or_default();
        let qualified = segments.join("::");
        Ok(Expr::new(ExprKind::Ident { name, qualified }, self.span_from(start)))
    }

    /// `ident<T, 3>(` style template-id whose arguments are types or numbers.
    fn template_id_ahead(&mut self) -> bool {
        let save = self.pos;
        let mut ok = self.eat("<");
        while ok && !self.at(">") {
            let numeric = self.peek(0).is_some_and(|t| t.kind == TokenKind::Number);
            if numeric {
                self.pos += 1;
            } else {
                ok = matches!(self.parse_type_known(false, true), Ok((_, true)));
            }
            if ok && !self.eat(",") {
                break;
            }
        }
        ok = ok && self.eat(">") && (self.at("(") || self.at("::") || self.at("{"));
        self.pos = save;
        ok
    }

    fn lambda(&mut self) -> PResult<Expr> {
        let start = self.line();
        self.expect("[")?;
        let mut by_ref_default = false;
        while !self.at("]") {
            let t = self.bump()?;
            if t.text == "&" && (self.at("]") || self.at(",")) {
                by_ref_default = true;
            }
        }
        self.expect("]")?;
        let params = if self.at("(") { self.params()? } else { Vec::new() };
        while self.eat("mutable") || self.eat("constexpr") || self.eat("noexcept") {}
        if self.eat("->") {
            self.parse_type(true, true)?;
        }
        let body = self.block()?;
        Ok(Expr::new(ExprKind::Lambda { by_ref_default, params, body }, self.span_from(start)))
    }

    // -------------------------------------------------------------- recovery

    fn skip_balanced_until(&mut self, close: &str) -> PResult<()> {
        let mut depth = 0usize;
        loop {
            let t = self.bump()?;
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" if depth > 0 => depth -= 1,
                s if s == close && depth == 0 => return Ok(()),
                _ => {}
            }
        }
    }

    /// Skips one statement-like region: through the next `;` at depth zero or
    /// through a balanced `{ ... }` group. Never consumes an enclosing `}`.
    fn skip_statement(&mut self) -> LineSpan {
        let start = self.line();
        let mut end = start;
        let mut depth = 0usize;
        let mut consumed = false;
        while let Some(t) = self.peek(0).cloned() {
            if depth == 0 && t.is("}") && consumed {
                break;
            }
            self.pos += 1;
            consumed = true;
            end = t.line;
            match t.text.as_str() {
                "(" | "[" | "{" if t.kind == TokenKind::Punct => depth += 1,
                ")" | "]" if t.kind == TokenKind::Punct => depth = depth.saturating_sub(1),
                "}" if t.kind == TokenKind::Punct => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        if self.at(";") {
                            end = self.line();
                            self.pos += 1;
                        }
                        break;
                    }
                }
                ";" if depth == 0 => break,
                _ => {}
            }
        }
        LineSpan::new(start, end.max(start))
    }
}

fn is_constant_text(value: &str) -> bool {
    let v = value.trim();
    if v.is_empty() {
        return false;
    }
    if (v.starts_with('\'') && v.ends_with('\'')) || (v.starts_with('"') && v.ends_with('"')) {
        return true;
    }
    v.chars().all(|c| c.is_ascii_alphanumeric() || " +-*/%()<>._|&^~".contains(c))
        && v.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '(' || c == '-' || c == '.')
}
