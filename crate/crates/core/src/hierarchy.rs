//! Hierarchical explanations over parse trees or greedily merged spans.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, AttributionQuery, AttributionScore, ContextSource};
use crate::corpus::{AnnotatedTree, Span, TokenId};
use crate::error::{Error, Result};
use crate::model::SequenceModel;

/// Scores one span of a sentence.
pub trait PhraseScorer: Sync {
    fn score(&self, seq: &[TokenId], span: Span) -> Result<AttributionScore>;
}

impl<F> PhraseScorer for F
where
    F: Fn(&[TokenId], Span) -> Result<AttributionScore> + Sync,
{
    fn score(&self, seq: &[TokenId], span: Span) -> Result<AttributionScore> {
        self(seq, span)
    }
}

/// Applies one attribution method; the query's phrase is replaced per call.
pub struct MethodScorer<'a> {
    pub model: &'a dyn SequenceModel,
    pub source: ContextSource<'a>,
    pub query: AttributionQuery,
}

impl PhraseScorer for MethodScorer<'_> {
    fn score(&self, seq: &[TokenId], span: Span) -> Result<AttributionScore> {
        let query = AttributionQuery {
            phrase: span,
            ..self.query.clone()
        };
        attribute(self.model, &self.source, seq, &query)
    }
}

fn scored<S: PhraseScorer + ?Sized>(scorer: &S, seq: &[TokenId], span: Span) -> Result<AttributionScore> {
    scorer.score(seq, span).map_err(|e| Error::Node {
        start: span.start,
        end: span.end,
        source: Box::new(e),
    })
}

/// A scored span with its sub-spans. This is also the JSON sidecar schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedNode {
    pub span: Span,
    pub score: Vec<f64>,
    pub display: f64,
    pub children: Vec<ExplainedNode>,
}

impl ExplainedNode {
    fn leaf(span: Span, s: &AttributionScore) -> Self {
        ExplainedNode {
            span,
            score: s.per_class.clone(),
            display: s.display(),
            children: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<&ExplainedNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.nodes());
        }
        out
    }

    pub fn max_abs_display(&self) -> f64 {
        self.nodes().iter().map(|n| n.display.abs()).fold(0.0, f64::max)
    }
}

fn collect_spans(tree: &AnnotatedTree, out: &mut Vec<Span>) {
    out.push(tree.span);
    for c in &tree.children {
        collect_spans(c, out);
    }
}

fn rebuild(tree: &AnnotatedTree, scores: &mut impl Iterator<Item = AttributionScore>) -> ExplainedNode {
    let s = scores.next().expect("one score per node");
    let mut node = ExplainedNode::leaf(tree.span, &s);
    node.children = tree.children.iter().map(|c| rebuild(c, scores)).collect();
    node
}

/// Scores every node of `tree` exactly once, preserving its structure.
pub fn explain_tree<S: PhraseScorer + ?Sized>(
    scorer: &S,
    seq: &[TokenId],
    tree: &AnnotatedTree,
) -> Result<ExplainedNode> {
    if tree.span.start != 0 || tree.span.end != seq.len() {
        return Err(Error::InvalidSpan {
            start: tree.span.start,
            end: tree.span.end,
            len: seq.len(),
        });
    }
    let mut spans = Vec::with_capacity(tree.node_count());
    collect_spans(tree, &mut spans);
    let scores = spans
        .par_iter()
        .map(|&span| scored(scorer, seq, span))
        .collect::<Result<Vec<_>>>()?;
    Ok(rebuild(tree, &mut scores.into_iter()))
}

/// Disjoint spans at one stage of agglomeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyLevel {
    pub level: usize,
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agglomeration {
    pub levels: Vec<HierarchyLevel>,
    /// Every span that was scored, including rejected merge candidates.
    pub scores: BTreeMap<Span, AttributionScore>,
    pub tree: ExplainedNode,
}

/// Greedy bottom-up merging: starting from single tokens, repeatedly merge
/// the adjacent pair whose merged span has the largest `|display|`, taking
/// the leftmost pair on ties, until one span covers the sentence.
pub fn agglomerate<S: PhraseScorer + ?Sized>(scorer: &S, seq: &[TokenId]) -> Result<Agglomeration> {
    if seq.is_empty() {
        return Err(Error::Empty("sequence"));
    }
    let mut cache: BTreeMap<Span, AttributionScore> = BTreeMap::new();
    let score_missing = |cache: &mut BTreeMap<Span, AttributionScore>, spans: Vec<Span>| -> Result<()> {
        let todo: Vec<Span> = spans.into_iter().filter(|s| !cache.contains_key(s)).collect();
        let fresh = todo
            .par_iter()
            .map(|&s| scored(scorer, seq, s))
            .collect::<Result<Vec<_>>>()?;
        cache.extend(todo.into_iter().zip(fresh));
        Ok(())
    };

    let mut current: Vec<Span> = (0..seq.len()).map(|i| Span::new(i, i + 1)).collect();
    score_missing(&mut cache, current.clone())?;
    let mut nodes: Vec<ExplainedNode> = current.iter().map(|s| ExplainedNode::leaf(*s, &cache[s])).collect();
    let mut levels = vec![HierarchyLevel {
        level: 0,
        spans: current.clone(),
    }];

    while current.len() > 1 {
        let candidates: Vec<Span> = current.windows(2).map(|w| Span::new(w[0].start, w[1].end)).collect();
        score_missing(&mut cache, candidates.clone())?;
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, c) in candidates.iter().enumerate() {
            let v = cache[c].display().abs();
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        let merged = candidates[best];
        let right = nodes.remove(best + 1);
        let left = nodes.remove(best);
        let mut parent = ExplainedNode::leaf(merged, &cache[&merged]);
        parent.children = vec![left, right];
        nodes.insert(best, parent);
        current.remove(best + 1);
        current[best] = merged;
        levels.push(HierarchyLevel {
            level: levels.len(),
            spans: current.clone(),
        });
    }

    Ok(Agglomeration {
        levels,
        scores: cache,
        tree: nodes.pop().expect("single root"),
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Background colour: red for positive, blue for negative, white at zero.
pub fn node_color(display: f64, max_abs: f64) -> String {
    let a = if max_abs > 0.0 {
        (display.abs() / max_abs).min(1.0)
    } else {
        0.0
    };
    let fade = (255.0 * (1.0 - a)).round() as u8;
    if display > 0.0 && a > 0.0 {
        format!("#ff{fade:02x}{fade:02x}")
    } else if display < 0.0 && a > 0.0 {
        format!("#{fade:02x}{fade:02x}ff")
    } else {
        "#ffffff".to_string()
    }
}

fn render_node(node: &ExplainedNode, tokens: &[String], max_abs: f64, out: &mut String) {
    let text: Vec<&str> = tokens[node.span.start..node.span.end]
        .iter()
        .map(|s| s.as_str())
        .collect();
    let _ = write!(
        out,
        "<div class=\"node\" style=\"background:{}\" title=\"{}:{} {:.4}\">",
        node_color(node.display, max_abs),
        node.span.start,
        node.span.end,
        node.display
    );
    if node.children.is_empty() {
        let _ = write!(out, "<span class=\"tok\">{}</span>", escape(&text.join(" ")));
    } else {
        out.push_str("<div class=\"kids\">");
        for c in &node.children {
            render_node(c, tokens, max_abs, out);
        }
        out.push_str("</div>");
    }
    let _ = write!(out, "<span class=\"val\">{:.3}</span></div>", node.display);
}

/// Self-contained HTML page of nested boxes. `config` is embedded verbatim
/// as a JSON script block.
pub fn render_html(root: &ExplainedNode, tokens: &[String], config: Option<&str>) -> Result<String> {
    render_page(&[(root, tokens)], config)
}

/// One page holding several explained sentences in order.
pub fn render_page(items: &[(&ExplainedNode, &[String])], config: Option<&str>) -> Result<String> {
    for (root, tokens) in items {
        if root.span.end > tokens.len() {
            return Err(Error::InvalidSpan {
                start: root.span.start,
                end: root.span.end,
                len: tokens.len(),
            });
        }
    }
    let mut out = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>explanation</title>\n<style>\n\
         .node{display:inline-block;vertical-align:top;border:1px solid #888;margin:2px;padding:3px;font-family:sans-serif}\n\
         .kids{display:flex;gap:2px}\n.val{display:block;font-size:70%;color:#333;text-align:center}\n\
         .tok{display:block;text-align:center}\n.sentence{margin:8px 0}\n</style>\n",
    );
    if let Some(cfg) = config {
        let _ = writeln!(
            out,
            "<script type=\"application/json\" id=\"run-config\">{}</script>",
            cfg.replace("</", "<\\/")
        );
    }
    out.push_str("</head><body>\n");
    for (root, tokens) in items {
        out.push_str("<div class=\"sentence\">");
        render_node(root, tokens, root.max_abs_display(), &mut out);
        out.push_str("</div>\n");
    }
    out.push_str("</body></html>\n");
    Ok(out)
}
