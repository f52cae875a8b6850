//! Syntax-level model of Python source files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tree_sitter::{Node, Parser};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub path: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceModel {
    pub files: Vec<FileModel>,
    pub parse_errors: Vec<ParseFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileModel {
    pub path: String,
    pub module: String,
    pub classes: Vec<ClassDef>,
    pub functions: Vec<FunctionDef>,
    pub imports: Vec<Import>,
    pub calls: Vec<CallSite>,
    /// Lines on which a bare `sessionmaker` name appears.
    pub sessionmaker_lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: String,
    pub qualname: String,
    pub line: usize,
    pub attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub line: usize,
    /// Annotation source with surrounding string quotes removed.
    pub annotation: Option<String>,
    /// Callee of the assigned value when the value is a call.
    pub value_call: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Positional,
    VarArgs,
    KwArgs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub annotated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub name: String,
    /// Dotted path inside the module, e.g. `Repo.get`.
    pub qualname: String,
    pub line: usize,
    pub is_async: bool,
    pub is_method: bool,
    pub params: Vec<Param>,
    pub return_annotation: Option<String>,
    /// `await` expressions in the body, excluding nested scopes.
    pub awaits: usize,
    /// `async with` / `async for` statements in the body, excluding nested scopes.
    pub async_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Import {
    pub line: usize,
    /// Source module of a `from X import ...`; `None` for plain `import`.
    pub from_module: Option<String>,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub callee: String,
    pub line: usize,
}

impl CallSite {
    /// Last dotted component of the callee, `Column` for `sa.schema.Column`.
    pub fn tail(&self) -> &str {
        callee_tail(&self.callee)
    }
}

pub fn callee_tail(callee: &str) -> &str {
    callee.rsplit('.').next().unwrap_or(callee)
}

impl FunctionDef {
    /// Parameters other than a leading `self`/`cls` receiver of a method.
    pub fn non_receiver_params(&self) -> &[Param] {
        match self.params.first() {
            Some(p) if self.is_method && p.kind == ParamKind::Positional && (p.name == "self" || p.name == "cls") => {
                &self.params[1..]
            }
            _ => &self.params,
        }
    }

    pub fn fully_typed(&self) -> bool {
        self.return_annotation.is_some() && self.non_receiver_params().iter().all(|p| p.annotated)
    }
}

impl FileModel {
    pub fn function_full_name(&self, f: &FunctionDef) -> String {
        join_dotted(&self.module, &f.qualname)
    }

    pub fn class_full_name(&self, c: &ClassDef) -> String {
        join_dotted(&self.module, &c.qualname)
    }
}

fn join_dotted(module: &str, qualname: &str) -> String {
    if module.is_empty() {
        qualname.to_string()
    } else {
        format!("{module}.{qualname}")
    }
}

/// `pkg/sub/mod.py` → `pkg.sub.mod`, `pkg/__init__.py` → `pkg`.
pub fn module_name(path: &str) -> String {
    let stem = path.strip_suffix(".py").unwrap_or(path);
    let stem = stem.strip_suffix("/__init__").unwrap_or(stem);
    if stem == "__init__" {
        return String::new();
    }
    stem.replace('/', ".")
}

/// Parses every file; a file with syntax errors is reported and left out of
/// the model while the remaining files are still analyzed.
pub fn parse_sources(files: &BTreeMap<String, String>) -> SourceModel {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_python::LANGUAGE.into())
        .expect("bundled grammar matches the tree-sitter ABI");
    let mut model = SourceModel::default();
    for (path, text) in files {
        match parse_file(&mut parser, path, text) {
            Ok(file) => model.files.push(file),
            Err(failure) => model.parse_errors.push(failure),
        }
    }
    model
}

pub fn parse_file(parser: &mut Parser, path: &str, text: &str) -> Result<FileModel, ParseFailure> {
    let tree = parser.parse(text, None).ok_or_else(|| ParseFailure {
        path: path.to_string(),
        line: 1,
        message: "parser produced no tree".into(),
    })?;
    let root = tree.root_node();
    if root.has_error() {
        let bad = first_error(root).unwrap_or(root);
        let message = if bad.is_missing() {
            format!("missing `{}`", bad.kind())
        } else {
            "invalid syntax".to_string()
        };
        return Err(ParseFailure {
            path: path.to_string(),
            line: bad.start_position().row + 1,
            message,
        });
    }
    let mut file = FileModel {
        path: path.to_string(),
        module: module_name(path),
        ..FileModel::default()
    };
    let mut walker = Walker { src: text, file: &mut file };
    walker.visit_block(root, &Scope::Module, "");
    walker.collect_expressions(root);
    Ok(file)
}

fn first_error(node: Node) -> Option<Node> {
    if node.is_error() || node.is_missing() {
        return Some(node);
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        if child.has_error() {
            if let Some(found) = first_error(child) {
                return Some(found);
            }
        }
    }
    None
}

enum Scope {
    Module,
    Class(usize),
    Function,
}

struct Walker<'a> {
    src: &'a str,
    file: &'a mut FileModel,
}

impl<'a> Walker<'a> {
    fn text(&self, node: Node) -> &'a str {
        &self.src[node.byte_range()]
    }

    fn line(node: Node) -> usize {
        node.start_position().row + 1
    }

    /// Visits the statements of a module, class or function body.
    fn visit_block(&mut self, block: Node, scope: &Scope, prefix: &str) {
        let mut cursor = block.walk();
        for stmt in block.named_children(&mut cursor) {
            self.visit_statement(stmt, scope, prefix);
        }
    }

    fn visit_statement(&mut self, stmt: Node, scope: &Scope, prefix: &str) {
        match stmt.kind() {
            "decorated_definition" => {
                if let Some(def) = stmt.child_by_field_name("definition") {
                    self.visit_statement(def, scope, prefix);
                }
            }
            "class_definition" => self.visit_class(stmt, prefix),
            "function_definition" => self.visit_function(stmt, scope, prefix),
            "expression_statement" => {
                if let Scope::Class(idx) = scope {
                    let mut cursor = stmt.walk();
                    for child in stmt.named_children(&mut cursor) {
                        if child.kind() == "assignment" {
                            self.visit_class_assignment(child, *idx);
                        }
                    }
                }
            }
            "import_statement" | "import_from_statement" | "future_import_statement" => self.visit_import(stmt),
            _ => {
                // compound statements (if/try/with/...) may nest definitions
                let mut cursor = stmt.walk();
                for child in stmt.named_children(&mut cursor) {
                    if matches!(child.kind(), "block" | "else_clause" | "elif_clause" | "except_clause" | "finally_clause" | "case_clause") {
                        self.visit_nested(child, scope, prefix);
                    }
                }
            }
        }
    }

    fn visit_nested(&mut self, node: Node, scope: &Scope, prefix: &str) {
        if node.kind() == "block" {
            self.visit_block(node, scope, prefix);
            return;
        }
        let mut cursor = node.walk();
        for child in node.named_children(&mut cursor) {
            if child.kind() == "block" {
                self.visit_block(child, scope, prefix);
            }
        }
    }

    fn visit_class(&mut self, node: Node, prefix: &str) {
        let Some(name_node) = node.child_by_field_name("name") else { return };
        let name = self.text(name_node).to_string();
        let qualname = qualify(prefix, &name);
        self.file.classes.push(ClassDef {
            name,
            qualname: qualname.clone(),
            line: Self::line(node),
            attributes: Vec::new(),
        });
        let idx = self.file.classes.len() - 1;
        if let Some(body) = node.child_by_field_name("body") {
            self.visit_block(body, &Scope::Class(idx), &qualname);
        }
    }

    fn visit_class_assignment(&mut self, node: Node, class_idx: usize) {
        let Some(left) = node.child_by_field_name("left") else { return };
        if left.kind() != "identifier" {
            return;
        }
        let annotation = node.child_by_field_name("type").map(|t| {
            let raw = self.text(t).trim();
            raw.trim_matches(|c| c == '"' || c == '\'').trim().to_string()
        });
        let value_call = node
            .child_by_field_name("right")
            .filter(|r| r.kind() == "call")
            .and_then(|r| r.child_by_field_name("function"))
            .map(|f| squash(self.text(f)));
        let attr = Attribute {
            name: self.text(left).to_string(),
            line: Self::line(node),
            annotation,
            value_call,
        };
        self.file.classes[class_idx].attributes.push(attr);
    }

    fn visit_function(&mut self, node: Node, scope: &Scope, prefix: &str) {
        let Some(name_node) = node.child_by_field_name("name") else { return };
        let name = self.text(name_node).to_string();
        let qualname = qualify(prefix, &name);
        let is_async = node.child(0).is_some_and(|c| c.kind() == "async");
        let params = node
            .child_by_field_name("parameters")
            .map(|p| self.params(p))
            .unwrap_or_default();
        let return_annotation = node
            .child_by_field_name("return_type")
            .map(|r| self.text(r).trim().to_string());
        let (awaits, async_blocks) = node
            .child_by_field_name("body")
            .map(count_async_uses)
            .unwrap_or((0, 0));
        self.file.functions.push(FunctionDef {
            name,
            qualname: qualname.clone(),
            line: Self::line(node),
            is_async,
            is_method: matches!(scope, Scope::Class(_)),
            params,
            return_annotation,
            awaits,
            async_blocks,
        });
        if let Some(body) = node.child_by_field_name("body") {
            self.visit_block(body, &Scope::Function, &qualname);
        }
    }

    fn params(&self, node: Node) -> Vec<Param> {
        let mut out = Vec::new();
        let mut cursor = node.walk();
        for p in node.named_children(&mut cursor) {
            let (target, annotated) = match p.kind() {
                "identifier" | "list_splat_pattern" | "dictionary_splat_pattern" => (p, false),
                "default_parameter" => match p.child_by_field_name("name") {
                    Some(n) => (n, false),
                    None => continue,
                },
                "typed_default_parameter" => match p.child_by_field_name("name") {
                    Some(n) => (n, true),
                    None => continue,
                },
                "typed_parameter" => match p.named_child(0) {
                    Some(n) => (n, true),
                    None => continue,
                },
                // `*` and `/` separators, comments
                _ => continue,
            };
            let kind = match target.kind() {
                "list_splat_pattern" => ParamKind::VarArgs,
                "dictionary_splat_pattern" => ParamKind::KwArgs,
                _ => ParamKind::Positional,
            };
            let name = self.text(target).trim_start_matches('*').to_string();
            out.push(Param { name, kind, annotated });
        }
        out
    }

    fn visit_import(&mut self, node: Node) {
        let line = Self::line(node);
        let from_module = match node.kind() {
            "import_from_statement" => node.child_by_field_name("module_name").map(|m| squash(self.text(m))),
            "future_import_statement" => Some("__future__".to_string()),
            _ => None,
        };
        let mut names = Vec::new();
        let mut cursor = node.walk();
        for (i, child) in node.children(&mut cursor).enumerate() {
            if node.field_name_for_child(i as u32) != Some("name") {
                continue;
            }
            let target = match child.kind() {
                "aliased_import" => child.child_by_field_name("name").unwrap_or(child),
                _ => child,
            };
            names.push(squash(self.text(target)));
        }
        if node.kind() == "import_from_statement" && names.is_empty() {
            names.push("*".to_string());
        }
        self.file.imports.push(Import { line, from_module, names });
    }

    /// Records every call and every `sessionmaker` identifier in the file.
    fn collect_expressions(&mut self, root: Node) {
        let mut stack = vec![root];
        let mut calls = Vec::new();
        let mut sm_lines = Vec::new();
        while let Some(node) = stack.pop() {
            match node.kind() {
                "call" => {
                    if let Some(f) = node.child_by_field_name("function") {
                        calls.push(CallSite {
                            callee: squash(self.text(f)),
                            line: Self::line(node),
                        });
                    }
                }
                "identifier" if self.text(node) == "sessionmaker" => sm_lines.push(Self::line(node)),
                _ => {}
            }
            let mut cursor = node.walk();
            stack.extend(node.children(&mut cursor));
        }
        calls.sort_by(|a, b| (a.line, &a.callee).cmp(&(b.line, &b.callee)));
        sm_lines.sort_unstable();
        sm_lines.dedup();
        self.file.calls = calls;
        self.file.sessionmaker_lines = sm_lines;
    }
}

fn qualify(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Removes whitespace so `sa .Column` and `sa.Column` compare equal.
fn squash(text: &str) -> String {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

fn count_async_uses(body: Node) -> (usize, usize) {
    let mut awaits = 0;
    let mut blocks = 0;
    let mut stack = vec![body];
    while let Some(node) = stack.pop() {
        match node.kind() {
            "function_definition" | "class_definition" | "lambda" => continue,
            "await" => awaits += 1,
            "with_statement" | "for_statement" if node.child(0).is_some_and(|c| c.kind() == "async") => blocks += 1,
            _ => {}
        }
        let mut cursor = node.walk();
        stack.extend(node.named_children(&mut cursor));
    }
    (awaits, blocks)
}
