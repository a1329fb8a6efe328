//! PENMAN codec.
//!
//! Parsing accepts the usual `(var / concept :role target ...)` form with
//! reentrancy through bare variable references and `-of` role inversion.
//! Concepts and roles may be double-quoted, and an unquoted concept may
//! contain balanced parentheses, so regex labels such as `(drop|dump)` can
//! be written inline.
//!
//! Serialization is deterministic: variables are `u_1, u_2, ...` in
//! depth-first visiting order and the edges of a node are emitted ordered by
//! edge label, then neighbor label.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::graph::{LabeledGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PenmanErrorKind {
    UnexpectedEnd,
    UnexpectedChar(char),
    ExpectedVariable,
    ExpectedSlash,
    EmptyConcept,
    EmptyRole,
    DuplicateVariable(String),
    UndefinedVariable(String),
    UnterminatedString,
    TrailingInput,
}

impl fmt::Display for PenmanErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnexpectedEnd => write!(f, "unexpected end of input (unbalanced parentheses?)"),
            Self::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            Self::ExpectedVariable => write!(f, "expected a variable"),
            Self::ExpectedSlash => write!(f, "expected '/' after the variable"),
            Self::EmptyConcept => write!(f, "empty concept"),
            Self::EmptyRole => write!(f, "empty role"),
            Self::DuplicateVariable(v) => write!(f, "variable {v:?} is defined more than once"),
            Self::UndefinedVariable(v) => write!(f, "reference to undefined variable {v:?}"),
            Self::UnterminatedString => write!(f, "unterminated quoted string"),
            Self::TrailingInput => write!(f, "unexpected input after the closing parenthesis"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("PENMAN syntax error at byte {position}: {kind}")]
pub struct PenmanError {
    pub position: usize,
    pub kind: PenmanErrorKind,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SerializeError {
    #[error("root node {0} is not part of the graph")]
    UnknownRoot(NodeId),
    #[error("node {0} is not reachable from the root")]
    Disconnected(NodeId),
}

/// Parse result with labels exactly as written. Node 0 is the top node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RawPenman {
    pub nodes: Vec<String>,
    /// `(source, target, label)`, `-of` already resolved.
    pub edges: Vec<(usize, usize, String)>,
}

/// Read access the serializer needs; implemented by graphs and patterns.
pub(crate) trait PenmanView {
    fn node_count(&self) -> usize;
    fn node_text(&self, node: usize) -> &str;
    fn edge_list(&self) -> Vec<(usize, usize, &str)>;
}

impl PenmanView for LabeledGraph {
    fn node_count(&self) -> usize {
        LabeledGraph::node_count(self)
    }

    fn node_text(&self, node: usize) -> &str {
        self.label(NodeId(node as u32))
    }

    fn edge_list(&self) -> Vec<(usize, usize, &str)> {
        self.edges()
            .iter()
            .map(|e| (e.source.index(), e.target.index(), e.label.as_str()))
            .collect()
    }
}

/// Parses PENMAN text into a graph. Labels are lowercased.
pub fn parse_penman(text: &str) -> Result<LabeledGraph, PenmanError> {
    let raw = parse_raw(text)?;
    let mut g = LabeledGraph::new();
    for label in &raw.nodes {
        g.add_node(label).expect("parser rejects empty concepts");
    }
    for (s, t, label) in &raw.edges {
        g.add_edge(NodeId(*s as u32), NodeId(*t as u32), label)
            .expect("parser produces valid endpoints and non-empty roles");
    }
    Ok(g)
}

/// Serializes the graph rooted at `root`. Every node must be reachable from
/// the root when edge direction is ignored.
pub fn serialize_penman(g: &LabeledGraph, root: NodeId) -> Result<String, SerializeError> {
    write_penman(g, root.index())
}

/// Serializes every weakly connected component from its default root, one
/// PENMAN tree per line. Used for display of arbitrary graphs.
pub fn serialize_components(g: &LabeledGraph) -> Vec<String> {
    g.components()
        .into_iter()
        .map(|comp| {
            let root = comp
                .iter()
                .copied()
                .find(|&n| g.in_edges(n).next().is_none())
                .unwrap_or(comp[0]);
            let sub_edges: Vec<usize> = (0..g.edge_count())
                .filter(|&e| comp.binary_search(&g.edge(e).source).is_ok())
                .collect();
            if sub_edges.is_empty() {
                write_penman(&g.node_subgraph(root), 0).expect("single node")
            } else {
                let sub = g.edge_subgraph(&sub_edges);
                let pos = comp.binary_search(&root).expect("root in component");
                write_penman(&sub, pos).expect("component is connected")
            }
        })
        .collect()
}

pub(crate) fn parse_raw(text: &str) -> Result<RawPenman, PenmanError> {
    let mut p = Parser {
        src: text,
        pos: 0,
        nodes: Vec::new(),
        vars: HashMap::new(),
        pending: Vec::new(),
    };
    p.skip_ws();
    p.expect('(')?;
    p.parse_node()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error(PenmanErrorKind::TrailingInput));
    }
    p.finish()
}

enum Target {
    Node(usize),
    Ref { name: String, position: usize },
}

struct PendingEdge {
    from: usize,
    target: Target,
    label: String,
    inverted: bool,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    nodes: Vec<String>,
    vars: HashMap<String, usize>,
    pending: Vec<PendingEdge>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn error(&self, kind: PenmanErrorKind) -> PenmanError {
        PenmanError {
            position: self.pos,
            kind,
        }
    }

    fn unexpected(&self) -> PenmanError {
        match self.peek() {
            Some(c) => self.error(PenmanErrorKind::UnexpectedChar(c)),
            None => self.error(PenmanErrorKind::UnexpectedEnd),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), PenmanError> {
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    /// Called after the opening parenthesis; returns the node index.
    fn parse_node(&mut self) -> Result<usize, PenmanError> {
        self.skip_ws();
        let var_pos = self.pos;
        let var = self.read_var();
        if var.is_empty() {
            return Err(self.error(PenmanErrorKind::ExpectedVariable));
        }
        self.skip_ws();
        if self.peek() != Some('/') {
            return Err(self.error(PenmanErrorKind::ExpectedSlash));
        }
        self.bump();
        self.skip_ws();
        let concept_pos = self.pos;
        let concept = self.read_label()?;
        if concept.is_empty() {
            return Err(PenmanError {
                position: concept_pos,
                kind: PenmanErrorKind::EmptyConcept,
            });
        }
        if self.vars.contains_key(&var) {
            return Err(PenmanError {
                position: var_pos,
                kind: PenmanErrorKind::DuplicateVariable(var),
            });
        }
        let id = self.nodes.len();
        self.nodes.push(concept);
        self.vars.insert(var, id);

        loop {
            self.skip_ws();
            match self.peek() {
                Some(')') => {
                    self.bump();
                    return Ok(id);
                }
                Some(':') => {
                    self.bump();
                    let (label, inverted) = self.read_role()?;
                    self.skip_ws();
                    let target = match self.peek() {
                        Some('(') => {
                            self.bump();
                            Target::Node(self.parse_node()?)
                        }
                        Some('"') => {
                            let value = self.read_quoted()?;
                            if value.is_empty() {
                                return Err(self.error(PenmanErrorKind::EmptyConcept));
                            }
                            self.nodes.push(value);
                            Target::Node(self.nodes.len() - 1)
                        }
                        _ => {
                            let position = self.pos;
                            let name = self.read_var();
                            if name.is_empty() {
                                return Err(self.unexpected());
                            }
                            Target::Ref { name, position }
                        }
                    };
                    self.pending.push(PendingEdge {
                        from: id,
                        target,
                        label,
                        inverted,
                    });
                }
                _ => return Err(self.unexpected()),
            }
        }
    }

    fn read_var(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || matches!(c, '(' | ')' | '/' | ':' | '"') {
                break;
            }
            self.bump();
        }
        self.src[start..self.pos].to_owned()
    }

    fn read_role(&mut self) -> Result<(String, bool), PenmanError> {
        let start = self.pos;
        let (mut label, quoted) = if self.peek() == Some('"') {
            (self.read_quoted()?, true)
        } else {
            (self.read_label()?, false)
        };
        let mut inverted = false;
        if quoted {
            if self.src[self.pos..].starts_with("-of") {
                self.pos += 3;
                inverted = true;
            }
        } else if let Some(stripped) = label.strip_suffix("-of") {
            label = stripped.to_owned();
            inverted = true;
        }
        if label.is_empty() {
            return Err(PenmanError {
                position: start,
                kind: PenmanErrorKind::EmptyRole,
            });
        }
        Ok((label, inverted))
    }

    fn read_label(&mut self) -> Result<String, PenmanError> {
        if self.peek() == Some('"') {
            return self.read_quoted();
        }
        let len = scan_label(&self.src[self.pos..]).map_err(|offset| PenmanError {
            position: self.pos + offset,
            kind: PenmanErrorKind::UnexpectedEnd,
        })?;
        let label = self.src[self.pos..self.pos + len].to_owned();
        self.pos += len;
        Ok(label)
    }

    fn read_quoted(&mut self) -> Result<String, PenmanError> {
        let start = self.pos;
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some(c) => out.push(c),
                    None => break,
                },
                Some(c) => out.push(c),
                None => break,
            }
        }
        Err(PenmanError {
            position: start,
            kind: PenmanErrorKind::UnterminatedString,
        })
    }

    fn finish(mut self) -> Result<RawPenman, PenmanError> {
        let mut edges = Vec::with_capacity(self.pending.len());
        let pending = std::mem::take(&mut self.pending);
        for edge in pending {
            let target = match edge.target {
                Target::Node(n) => n,
                Target::Ref { name, position } => match self.vars.get(&name) {
                    Some(&n) => n,
                    None if is_constant(&name) => {
                        self.nodes.push(name);
                        self.nodes.len() - 1
                    }
                    None => {
                        return Err(PenmanError {
                            position,
                            kind: PenmanErrorKind::UndefinedVariable(name),
                        })
                    }
                },
            };
            if edge.inverted {
                edges.push((target, edge.from, edge.label));
            } else {
                edges.push((edge.from, target, edge.label));
            }
        }
        Ok(RawPenman {
            nodes: self.nodes,
            edges,
        })
    }
}

/// Numbers and the polarity markers are atomic constants, not variables.
fn is_constant(token: &str) -> bool {
    token == "-" || token == "+" || token.parse::<f64>().is_ok()
}

/// Length of an unquoted label at the start of `s`. Parentheses nest and may
/// contain whitespace; outside of them the label ends at whitespace, at a
/// closing parenthesis, or at an opening one that follows label text.
/// `Err(offset)` when a group is still open at the end of input.
fn scan_label(s: &str) -> Result<usize, usize> {
    let mut depth = 0usize;
    let mut chars = s.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '\\' => {
                chars.next();
                chars.next();
                continue;
            }
            '(' => {
                if depth == 0 && i > 0 {
                    return Ok(i);
                }
                depth += 1;
            }
            ')' => {
                if depth == 0 {
                    return Ok(i);
                }
                depth -= 1;
            }
            c if c.is_whitespace() && depth == 0 => return Ok(i),
            _ => {}
        }
        chars.next();
    }
    if depth > 0 {
        Err(s.len())
    } else {
        Ok(s.len())
    }
}

fn needs_quotes(label: &str) -> bool {
    // `scan_label` skips the char after a backslash; a trailing backslash would
    // swallow the delimiter that follows it.
    label.is_empty()
        || label.starts_with('"')
        || label.ends_with('\\')
        || scan_label(label) != Ok(label.len())
}

fn quote(label: &str) -> String {
    let mut out = String::with_capacity(label.len() + 2);
    out.push('"');
    for c in label.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn write_concept(out: &mut String, label: &str) {
    if needs_quotes(label) {
        out.push_str(&quote(label));
    } else {
        out.push_str(label);
    }
}

fn write_role(out: &mut String, label: &str, inverted: bool) {
    out.push(':');
    if needs_quotes(label) || label.ends_with("-of") {
        out.push_str(&quote(label));
    } else {
        out.push_str(label);
    }
    if inverted {
        out.push_str("-of");
    }
}

pub(crate) fn write_penman<V: PenmanView + ?Sized>(view: &V, root: usize) -> Result<String, SerializeError> {
    run_writer(view, root).map(|w| w.0)
}

/// Nodes in the order they receive variables `u_1, u_2, ...`.
pub(crate) fn visit_order<V: PenmanView + ?Sized>(view: &V, root: usize) -> Vec<usize> {
    run_writer(view, root).map(|w| w.1).unwrap_or_default()
}

fn run_writer<V: PenmanView + ?Sized>(view: &V, root: usize) -> Result<(String, Vec<usize>), SerializeError> {
    let n = view.node_count();
    if root >= n {
        return Err(SerializeError::UnknownRoot(NodeId(root as u32)));
    }
    let edges = view.edge_list();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &(s, t, _)) in edges.iter().enumerate() {
        incident[s].push(i);
        if s != t {
            incident[t].push(i);
        }
    }

    // reachability check before emitting anything
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        for &e in &incident[u] {
            let (s, t, _) = edges[e];
            let other = if s == u { t } else { s };
            if !seen[other] {
                seen[other] = true;
                stack.push(other);
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(SerializeError::Disconnected(NodeId(missing as u32)));
    }

    let mut writer = Writer {
        view,
        edges: &edges,
        incident: &incident,
        vars: vec![None; n],
        emitted: vec![false; edges.len()],
        order: Vec::with_capacity(n),
        out: String::new(),
    };
    writer.visit(root);
    Ok((writer.out, writer.order))
}

struct Writer<'a, V: ?Sized> {
    view: &'a V,
    edges: &'a [(usize, usize, &'a str)],
    incident: &'a [Vec<usize>],
    vars: Vec<Option<usize>>,
    emitted: Vec<bool>,
    order: Vec<usize>,
    out: String,
}

impl<V: PenmanView + ?Sized> Writer<'_, V> {
    fn visit(&mut self, node: usize) {
        self.order.push(node);
        let var = self.order.len();
        self.vars[node] = Some(var);
        self.out.push_str(&format!("(u_{var} / "));
        write_concept(&mut self.out, self.view.node_text(node));

        // (label, inverted, neighbor label, neighbor rank, neighbor, edge).
        // Visited neighbors rank by variable and come first; the rest fall
        // back to node ids, which are text order once the output is parsed,
        // so serializing a parsed graph from its top reproduces the text.
        let mut children: Vec<(&str, bool, &str, usize, usize, usize)> = self.incident[node]
            .iter()
            .map(|&e| {
                let (s, t, label) = self.edges[e];
                let (inverted, other) = if s == node { (false, t) } else { (true, s) };
                let rank = self.vars[other].unwrap_or(usize::MAX);
                (label, inverted, self.view.node_text(other), rank, other, e)
            })
            .collect();
        children.sort();

        for (label, inverted, _, _, other, e) in children {
            if self.emitted[e] {
                continue;
            }
            self.emitted[e] = true;
            self.out.push(' ');
            write_role(&mut self.out, label, inverted);
            self.out.push(' ');
            match self.vars[other] {
                Some(v) => self.out.push_str(&format!("u_{v}")),
                None => self.visit(other),
            }
        }
        self.out.push(')');
    }
}
