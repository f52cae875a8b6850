//! Synthetic analyzer corpus and a line-based oracle that classifies the
//! same targets from the raw text with regular expressions only.

#![allow(dead_code)]

use std::collections::BTreeMap;

use migrate_core::analyzer::{ColumnTarget, MethodTarget, TargetsManifest, TestTarget};
use regex::Regex;

pub const FILES: usize = 20;

const ANNOTATIONS: [Option<&str>; 7] = [
    None,
    Some("Mapped[int]"),
    Some("Mapped[Optional[str]]"),
    Some("orm.Mapped[int]"),
    Some("'Mapped[int]'"),
    Some("int"),
    Some("Optional[Mapped[int]]"),
];

const VALUES: [Option<&str>; 7] = [
    Some("mapped_column(Integer)"),
    Some("orm.mapped_column(Integer, primary_key=True)"),
    Some("Column(Integer)"),
    Some("sa.Column(String(10))"),
    Some("relationship()"),
    Some("5"),
    None,
];

const METHOD_PARAMS: [&str; 10] = [
    "self",
    "self, a: int",
    "self, a",
    "self, a: int, *args",
    "self, a: int, *args: str, **kw: int",
    "self, a: int = 1",
    "self, a=1",
    "self, *, key: str",
    "self, d: Dict[str, int], e",
    "cls, b: str",
];

const RETURNS: [Option<&str>; 3] = [None, Some("int"), Some("None")];

const TEST_BODIES: [&str; 7] = [
    "    await thing()\n",
    "    async with ctx() as c:\n        assert c\n",
    "    async for x in gen():\n        assert x\n",
    "    x = 1\n    assert x\n",
    "    async def inner():\n        await thing()\n    assert inner\n",
    "    # await later\n    assert True\n",
    "    s = \"await me\"\n    assert s\n",
];

pub struct Corpus {
    pub files: BTreeMap<String, String>,
    pub manifest: TargetsManifest,
}

fn module_of(file: usize) -> String {
    format!("corpus.mod_{file:02}")
}

/// 20 modules covering every annotation × value pair for columns, every
/// parameter × return × async × expected-async combination for methods,
/// and async/sync tests with each kind of body.
pub fn generate() -> Corpus {
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); FILES];
    let mut methods: Vec<Vec<String>> = vec![Vec::new(); FILES];
    let mut functions: Vec<Vec<String>> = vec![Vec::new(); FILES];
    let mut manifest = TargetsManifest::default();

    let mut j = 0;
    for ann in ANNOTATIONS {
        for value in VALUES {
            if ann.is_none() && value.is_none() {
                continue;
            }
            let f = j % FILES;
            let name = format!("col_{j}");
            let line = match (ann, value) {
                (Some(a), Some(v)) => format!("    {name}: {a} = {v}\n"),
                (Some(a), None) => format!("    {name}: {a}\n"),
                (None, Some(v)) => format!("    {name} = {v}\n"),
                (None, None) => unreachable!(),
            };
            columns[f].push(line);
            manifest.expected_columns.push(ColumnTarget {
                class_name: format!("{}.Model{f}", module_of(f)),
                attribute_name: name,
            });
            j += 1;
        }
    }

    let mut m = 0;
    for params in METHOD_PARAMS {
        for ret in RETURNS {
            for is_async in [false, true] {
                for must in [false, true] {
                    let f = m % FILES;
                    let as_method = m % 3 != 0;
                    let name = format!("m_{m}");
                    let params = if as_method {
                        params.to_string()
                    } else {
                        strip_receiver(params)
                    };
                    let arrow = ret.map(|r| format!(" -> {r}")).unwrap_or_default();
                    let kw = if is_async { "async def" } else { "def" };
                    let full = if as_method {
                        let deco = if params.starts_with("cls") { "    @classmethod\n" } else { "" };
                        methods[f].push(format!("{deco}    {kw} {name}({params}){arrow}:\n        return None\n"));
                        format!("{}.Model{f}.{name}", module_of(f))
                    } else {
                        functions[f].push(format!("{kw} {name}({params}){arrow}:\n    return None\n"));
                        format!("{}.{name}", module_of(f))
                    };
                    manifest.expected_methods.push(MethodTarget {
                        qualified_name: full,
                        must_be_async: must,
                    });
                    m += 1;
                }
            }
        }
    }

    let mut t = 0;
    for is_async in [false, true] {
        for body in TEST_BODIES {
            let f = (t * 3) % FILES;
            let kw = if is_async { "async def" } else { "def" };
            let name = format!("test_{t}");
            functions[f].push(format!("{kw} {name}():\n{body}"));
            manifest.expected_tests.push(TestTarget {
                name: format!("{}.{name}", module_of(f)),
            });
            t += 1;
        }
    }

    let mut files = BTreeMap::new();
    for f in 0..FILES {
        let mut src = String::from(
            "from typing import Dict, Optional\n\nimport sqlalchemy as sa\nfrom sqlalchemy import Column, Integer, String, orm\nfrom sqlalchemy.orm import Mapped, mapped_column, relationship\n\n\n",
        );
        src.push_str(&format!("class Model{f}(Base):\n    __tablename__ = \"t{f}\"\n"));
        for c in &columns[f] {
            src.push_str(c);
        }
        for meth in &methods[f] {
            src.push('\n');
            src.push_str(meth);
        }
        for func in &functions[f] {
            src.push_str("\n\n");
            src.push_str(func);
        }
        files.insert(format!("corpus/mod_{f:02}.py"), src);
    }
    Corpus { files, manifest }
}

fn strip_receiver(params: &str) -> String {
    for prefix in ["self, ", "cls, ", "self"] {
        if let Some(rest) = params.strip_prefix(prefix) {
            return rest.to_string();
        }
    }
    params.to_string()
}

/// Expected `migrated` flags, computed from the text alone.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct OracleVerdicts {
    pub columns: BTreeMap<String, bool>,
    pub methods: BTreeMap<String, bool>,
    pub tests: BTreeMap<String, bool>,
}

/// Splits a dotted target into (file text, remaining names) by trying the
/// longest module prefix that names a file.
fn locate<'a>(files: &'a BTreeMap<String, String>, dotted: &str) -> Option<(&'a str, Vec<String>)> {
    let parts: Vec<&str> = dotted.split('.').collect();
    (1..parts.len()).rev().find_map(|k| {
        let path = format!("{}.py", parts[..k].join("/"));
        files
            .get(&path)
            .map(|text| (text.as_str(), parts[k..].iter().map(|s| s.to_string()).collect()))
    })
}

/// Lines of the body of `class <name>` (indented, up to the next dedent).
fn class_body<'a>(text: &'a str, class: &str) -> Vec<&'a str> {
    let header = Regex::new(&format!(r"^class {}\b", regex::escape(class))).unwrap();
    let mut lines = text.lines().skip_while(|l| !header.is_match(l));
    if lines.next().is_none() {
        return Vec::new();
    }
    lines
        .take_while(|l| l.is_empty() || l.starts_with(' '))
        .collect()
}

fn split_top_level(params: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in params.chars() {
        match ch {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur);
    out.into_iter().map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}

fn signature_typed(params: &str, ret: Option<&str>, in_class: bool) -> bool {
    let mut parts = split_top_level(params);
    parts.retain(|p| p != "*" && p != "/");
    if in_class {
        if let Some(first) = parts.first() {
            let name = first.split([':', '=']).next().unwrap_or("").trim();
            if name == "self" || name == "cls" {
                parts.remove(0);
            }
        }
    }
    let params_typed = parts.iter().all(|p| {
        let colon = p.find(':');
        let eq = p.find('=');
        match (colon, eq) {
            (Some(c), Some(e)) => c < e,
            (Some(_), None) => true,
            _ => false,
        }
    });
    params_typed && ret.is_some_and(|r| !r.trim().is_empty())
}

/// Strips string literals and comments so only code tokens remain.
fn code_only(line: &str) -> String {
    let strings = Regex::new(r#""[^"]*"|'[^']*'"#).unwrap();
    let no_strings = strings.replace_all(line, "\"\"");
    match no_strings.find('#') {
        Some(i) => no_strings[..i].to_string(),
        None => no_strings.into_owned(),
    }
}

pub fn oracle(files: &BTreeMap<String, String>, manifest: &TargetsManifest) -> OracleVerdicts {
    let mut v = OracleVerdicts::default();
    let column_re = Regex::new(r"^    (\w+)\s*(?::\s*([^=]+?))?\s*(?:=\s*(.+))?$").unwrap();
    let call_re = Regex::new(r"^((?:\w+\.)*)(\w+)\(").unwrap();
    let mapped_re = Regex::new(r"^(?:\w+\.)*Mapped\[.*\]$").unwrap();

    for c in &manifest.expected_columns {
        let key = format!("{}.{}", c.class_name, c.attribute_name);
        let verdict = locate(files, &c.class_name)
            .filter(|(_, rest)| rest.len() == 1)
            .and_then(|(text, rest)| {
                class_body(text, &rest[0])
                    .into_iter()
                    .filter_map(|l| column_re.captures(l))
                    .rfind(|cap| cap[1] == *c.attribute_name)
                    .map(|cap| {
                        let ann = cap.get(2).map(|a| a.as_str().trim().trim_matches(['\'', '"']).to_string());
                        let call_tail = cap
                            .get(3)
                            .and_then(|val| call_re.captures(val.as_str().trim()).map(|k| k[2].to_string()));
                        ann.is_some_and(|a| mapped_re.is_match(&a)) && call_tail.as_deref() == Some("mapped_column")
                    })
            })
            .unwrap_or(false);
        v.columns.insert(key, verdict);
    }

    for m in &manifest.expected_methods {
        let verdict = locate(files, &m.qualified_name)
            .and_then(|(text, rest)| {
                let (indent, in_class, name, lines): (&str, bool, &str, Vec<&str>) = match rest.as_slice() {
                    [func] => ("", false, func.as_str(), text.lines().collect()),
                    [class, meth] => ("    ", true, meth.as_str(), class_body(text, class)),
                    _ => return None,
                };
                let def_re = Regex::new(&format!(
                    r"^{indent}(async\s+)?def\s+{}\((.*)\)\s*(?:->\s*(.+?))?\s*:\s*$",
                    regex::escape(name)
                ))
                .unwrap();
                lines.iter().rev().find_map(|l| def_re.captures(l)).map(|cap| {
                    let is_async = cap.get(1).is_some();
                    signature_typed(&cap[2], cap.get(3).map(|r| r.as_str()), in_class) && is_async == m.must_be_async
                })
            })
            .unwrap_or(false);
        v.methods.insert(m.qualified_name.clone(), verdict);
    }

    let await_re = Regex::new(r"\bawait\b|^\s*async\s+(?:with|for)\b").unwrap();
    let nested_def_re = Regex::new(r"^\s*(?:async\s+)?def\s").unwrap();
    for t in &manifest.expected_tests {
        let verdict = locate(files, &t.name)
            .filter(|(_, rest)| rest.len() == 1)
            .and_then(|(text, rest)| {
                let def_re = Regex::new(&format!(r"^(async\s+)?def\s+{}\(", regex::escape(&rest[0]))).unwrap();
                let mut lines = text.lines().skip_while(|l| !def_re.is_match(l));
                let header = lines.next()?;
                let is_async = header.starts_with("async");
                let mut awaits = false;
                let mut nested_indent: Option<usize> = None;
                for line in lines.take_while(|l| l.is_empty() || l.starts_with(' ')) {
                    let indent = line.len() - line.trim_start().len();
                    if let Some(n) = nested_indent {
                        if indent > n || line.trim().is_empty() {
                            continue;
                        }
                        nested_indent = None;
                    }
                    let code = code_only(line);
                    if nested_def_re.is_match(&code) {
                        nested_indent = Some(indent);
                        continue;
                    }
                    awaits |= await_re.is_match(&code);
                }
                Some(is_async && awaits)
            })
            .unwrap_or(false);
        v.tests.insert(t.name.clone(), verdict);
    }
    v
}
