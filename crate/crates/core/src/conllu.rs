//! Ingestion of already-parsed CoNLL-U dependency trees.
//!
//! Each token becomes a node labeled with its lemma (the form when the lemma
//! is `_`) and each non-root dependency becomes a `head --deprel--> dependent`
//! edge. Multiword-token ranges and empty nodes are skipped.

use std::collections::HashMap;

use thiserror::Error;

use crate::graph::{LabeledGraph, NodeId};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid token id {id:?}")]
    BadId { line: usize, id: String },
    #[error("line {line}: invalid head {head:?}")]
    BadHead { line: usize, head: String },
    #[error("line {line}: head {head} is out of range for a sentence of {tokens} tokens")]
    HeadOutOfRange { line: usize, head: usize, tokens: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluSentence {
    /// From a `# text = ...` comment, when present.
    pub text: Option<String>,
    pub graph: LabeledGraph,
    /// Tokens attached to the pseudo-root (head 0).
    pub roots: Vec<NodeId>,
    /// 1-based line number of the first token line.
    pub line: usize,
}

/// Parses CoNLL-U text into one graph per sentence.
pub fn parse_conllu(text: &str) -> Result<Vec<LabeledGraph>, ConlluError> {
    Ok(parse_conllu_sentences(text)?
        .into_iter()
        .map(|s| s.graph)
        .collect())
}

/// Like [`parse_conllu`] but keeps sentence text and root information.
pub fn parse_conllu_sentences(text: &str) -> Result<Vec<ConlluSentence>, ConlluError> {
    let mut out = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            if !block.is_empty() {
                out.push(parse_sentence(&block)?);
                block.clear();
            }
        } else {
            block.push((line_no, line));
        }
    }
    if !block.is_empty() {
        out.push(parse_sentence(&block)?);
    }
    Ok(out)
}

struct Token<'a> {
    line: usize,
    head: usize,
    deprel: &'a str,
}

fn parse_sentence(lines: &[(usize, &str)]) -> Result<ConlluSentence, ConlluError> {
    let mut text = None;
    let mut graph = LabeledGraph::new();
    let mut ids: HashMap<usize, NodeId> = HashMap::new();
    let mut tokens: Vec<(NodeId, Token)> = Vec::new();

    for &(line, raw) in lines {
        if let Some(comment) = raw.strip_prefix('#') {
            if let Some(t) = comment.trim_start().strip_prefix("text =") {
                text = Some(t.trim().to_owned());
            }
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::ColumnCount {
                line,
                found: cols.len(),
            });
        }
        let id_col = cols[0];
        if id_col.contains('-') || id_col.contains('.') {
            continue;
        }
        let id: usize = id_col
            .parse()
            .ok()
            .filter(|&id| id > 0)
            .ok_or_else(|| ConlluError::BadId {
                line,
                id: id_col.to_owned(),
            })?;
        let head: usize = cols[6].parse().map_err(|_| ConlluError::BadHead {
            line,
            head: cols[6].to_owned(),
        })?;
        let label = if cols[2] != "_" && !cols[2].is_empty() {
            cols[2]
        } else {
            cols[1]
        };
        let node = graph.add_node(label).map_err(|_| ConlluError::BadId {
            line,
            id: id_col.to_owned(),
        })?;
        if ids.insert(id, node).is_some() {
            return Err(ConlluError::BadId {
                line,
                id: id_col.to_owned(),
            });
        }
        tokens.push((
            node,
            Token {
                line,
                head,
                deprel: cols[7],
            },
        ));
    }

    let mut roots = Vec::new();
    let count = tokens.len();
    for (node, tok) in tokens {
        if tok.head == 0 {
            roots.push(node);
            continue;
        }
        let head = *ids.get(&tok.head).ok_or(ConlluError::HeadOutOfRange {
            line: tok.line,
            head: tok.head,
            tokens: count,
        })?;
        let deprel = if tok.deprel.is_empty() { "_" } else { tok.deprel };
        graph
            .add_edge(head, node, deprel)
            .expect("both endpoints were added above");
    }

    Ok(ConlluSentence {
        text,
        graph,
        roots,
        line: lines.first().map(|l| l.0).unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOYS_SLEEP: &str = "# text = boys sleep\n\
1\tboys\tboy\tNOUN\t_\t_\t2\tnsubj\t_\t_\n\
2\tsleep\tsleep\tVERB\t_\t_\t0\troot\t_\t_\n";

    #[test]
    fn two_token_sentence() {
        let graphs = parse_conllu(BOYS_SLEEP).unwrap();
        assert_eq!(graphs.len(), 1);
        let g = &graphs[0];
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        let e = &g.edges()[0];
        assert_eq!(g.label(e.source), "sleep");
        assert_eq!(e.label, "nsubj");
        assert_eq!(g.label(e.target), "boy");

        let s = &parse_conllu_sentences(BOYS_SLEEP).unwrap()[0];
        assert_eq!(s.text.as_deref(), Some("boys sleep"));
        assert_eq!(s.roots, vec![NodeId(1)]);
    }

    #[test]
    fn root_only_sentence() {
        let g = parse_conllu("1\tHi\t_\tINTJ\t_\t_\t0\troot\t_\t_\n").unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].node_count(), 1);
        assert_eq!(g[0].edge_count(), 0);
        assert_eq!(g[0].label(NodeId(0)), "hi");
    }

    #[test]
    fn blank_lines_separate_sentences() {
        let text = format!("{BOYS_SLEEP}\n1\tgo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n\n\n");
        assert_eq!(parse_conllu(&text).unwrap().len(), 2);
    }

    #[test]
    fn skips_ranges_and_empty_nodes() {
        let text = "1-2\tdu\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tde\tde\tADP\t_\t_\t2\tcase\t_\t_\n\
2\tle\tle\tDET\t_\t_\t0\troot\t_\t_\n\
2.1\tx\tx\t_\t_\t_\t_\t_\t_\t_\n";
        let g = &parse_conllu(text).unwrap()[0];
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert_eq!(
            parse_conllu("1\tboys\tboy\n"),
            Err(ConlluError::ColumnCount { line: 1, found: 3 })
        );
        assert_eq!(
            parse_conllu("1\tboys\tboy\tNOUN\t_\t_\t7\tnsubj\t_\t_\n"),
            Err(ConlluError::HeadOutOfRange {
                line: 1,
                head: 7,
                tokens: 1
            })
        );
        assert!(matches!(
            parse_conllu("1\tboys\tboy\tNOUN\t_\t_\tx\tnsubj\t_\t_\n"),
            Err(ConlluError::BadHead { line: 1, .. })
        ));
    }
}
