use thiserror::Error;

use super::hash::{content_digest, structural_digest};
use super::{Diagnostic, Document, Node, NodeKind, Span};
use crate::text::MarkerLexicon;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("input is not valid UTF-8 (valid up to byte {valid_up_to})")]
    Encoding { valid_up_to: usize },
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub markers: MarkerLexicon,
}

pub fn parse(text: &str) -> Document {
    parse_with(text, &ParseOptions::default())
}

pub fn parse_bytes(bytes: &[u8]) -> Result<Document, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ParseError::Encoding {
        valid_up_to: e.valid_up_to(),
    })?;
    Ok(parse(text))
}

pub fn parse_with(text: &str, opts: &ParseOptions) -> Document {
    let lines: Vec<&str> = text.lines().collect();
    let mut b = Builder::new(opts);
    let mut i = 0;
    while i < lines.len() {
        i = b.line(&lines, i);
    }
    let (children, diagnostics) = b.finish();
    let span = if lines.is_empty() {
        Span::EMPTY
    } else {
        Span::new(1, lines.len())
    };
    let root = Draft {
        kind: NodeKind::Document,
        heading_level: None,
        text: String::new(),
        span,
        children,
    };
    Document {
        root: finalize(root, &mut Vec::new(), 0),
        diagnostics,
        line_count: lines.len(),
    }
}

#[derive(Debug)]
struct Draft {
    kind: NodeKind,
    heading_level: Option<u8>,
    text: String,
    span: Span,
    children: Vec<Draft>,
}

fn finalize(draft: Draft, path: &mut Vec<usize>, sibling_index: usize) -> Node {
    let mut children = Vec::with_capacity(draft.children.len());
    for (i, child) in draft.children.into_iter().enumerate() {
        path.push(i);
        children.push(finalize(child, path, i));
        path.pop();
    }
    let child_hashes: Vec<_> = children.iter().map(|c: &Node| c.content_hash).collect();
    Node {
        kind: draft.kind,
        heading_level: draft.heading_level,
        content_hash: content_digest(draft.kind, &draft.text, &child_hashes),
        structural_hash: structural_digest(draft.kind, path),
        text: draft.text,
        depth: path.len(),
        sibling_index,
        span: draft.span,
        children,
    }
}

struct Para {
    start: usize,
    end: usize,
    lines: Vec<String>,
}

struct Item {
    start: usize,
    end: usize,
    lines: Vec<String>,
    nested: Vec<Draft>,
}

struct ListFrame {
    indent: usize,
    items: Vec<Draft>,
    current: Option<Item>,
}

struct Builder<'a> {
    opts: &'a ParseOptions,
    root: Vec<Draft>,
    sections: Vec<Draft>,
    para: Option<Para>,
    lists: Vec<ListFrame>,
    blank_pending: bool,
    seen_heading: bool,
    diagnostics: Vec<Diagnostic>,
}

impl<'a> Builder<'a> {
    fn new(opts: &'a ParseOptions) -> Self {
        Self {
            opts,
            root: Vec::new(),
            sections: Vec::new(),
            para: None,
            lists: Vec::new(),
            blank_pending: false,
            seen_heading: false,
            diagnostics: Vec::new(),
        }
    }

    /// Consumes one or more lines starting at `i`; returns the next index.
    fn line(&mut self, lines: &[&str], i: usize) -> usize {
        let line = lines[i];
        let lineno = i + 1;
        if line.trim().is_empty() {
            self.flush_para();
            self.blank_pending = true;
            return i + 1;
        }
        let after_blank = std::mem::take(&mut self.blank_pending);

        if let Some(fence) = fence_open(line) {
            self.flush_para();
            self.close_lists();
            return self.code_block(lines, i, fence);
        }
        if let Some((level, title)) = atx_heading(line) {
            self.flush_para();
            self.close_lists();
            self.open_section(level, title, lineno, lineno);
            return i + 1;
        }
        if let Some(level) = setext_underline(line) {
            if let Some(para) = self.para.as_ref().filter(|p| p.lines.len() == 1) {
                let title = para.lines[0].trim().to_string();
                let start = para.start;
                self.para = None;
                self.open_section(level, title, start, lineno);
                return i + 1;
            }
        }
        if let Some(item) = list_marker(line) {
            self.flush_para();
            self.list_item(item, lineno);
            return i + 1;
        }
        if !self.lists.is_empty() {
            if !after_blank || indent_width(line) >= 2 {
                self.continue_item(line, lineno);
                return i + 1;
            }
            self.close_lists();
        }
        if !self.seen_heading && self.para.is_none() && self.is_metadata(line) {
            self.emit(Draft {
                kind: NodeKind::Metadata,
                heading_level: None,
                text: line.to_string(),
                span: Span::new(lineno, lineno),
                children: Vec::new(),
            });
            return i + 1;
        }
        match &mut self.para {
            Some(p) => {
                p.lines.push(line.to_string());
                p.end = lineno;
            }
            None => {
                self.para = Some(Para {
                    start: lineno,
                    end: lineno,
                    lines: vec![line.to_string()],
                })
            }
        }
        i + 1
    }

    fn code_block(&mut self, lines: &[&str], i: usize, fence: Fence) -> usize {
        let mut j = i + 1;
        let mut closed = false;
        while j < lines.len() {
            if fence.closes(lines[j]) {
                closed = true;
                break;
            }
            j += 1;
        }
        let body_end = j.min(lines.len());
        let text = lines[i + 1..body_end].join("\n");
        let end_line = if closed { j + 1 } else { lines.len() };
        if !closed {
            self.diagnostics.push(Diagnostic {
                line: i + 1,
                message: "unterminated code fence; block runs to end of document".into(),
            });
        }
        self.emit(Draft {
            kind: NodeKind::CodeBlock,
            heading_level: None,
            text,
            span: Span::new(i + 1, end_line),
            children: Vec::new(),
        });
        end_line
    }

    fn is_metadata(&self, line: &str) -> bool {
        if line.starts_with(char::is_whitespace) || self.opts.markers.contains_marker(line) {
            return false;
        }
        let Some(colon) = line.find(':') else {
            return false;
        };
        let key = &line[..colon];
        let mut chars = key.chars();
        let key_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
        let rest = &line[colon + 1..];
        key_ok && rest.starts_with(char::is_whitespace) && !rest.trim().is_empty()
    }

    fn classify(&self, text: &str, plain: NodeKind) -> NodeKind {
        if self.opts.markers.contains_marker(text) {
            NodeKind::Directive
        } else {
            plain
        }
    }

    fn emit(&mut self, draft: Draft) {
        match self.sections.last_mut() {
            Some(section) => section.children.push(draft),
            None => self.root.push(draft),
        }
    }

    fn flush_para(&mut self) {
        if let Some(p) = self.para.take() {
            let text = p.lines.join("\n");
            let kind = self.classify(&text, NodeKind::Paragraph);
            self.emit(Draft {
                kind,
                heading_level: None,
                text,
                span: Span::new(p.start, p.end),
                children: Vec::new(),
            });
        }
    }

    fn open_section(&mut self, level: u8, title: String, start: usize, end: usize) {
        self.seen_heading = true;
        while self
            .sections
            .last()
            .is_some_and(|s| s.heading_level.unwrap_or(0) >= level)
        {
            self.close_section();
        }
        self.sections.push(Draft {
            kind: NodeKind::Section,
            heading_level: Some(level),
            text: title,
            span: Span::new(start, end),
            children: Vec::new(),
        });
    }

    fn close_section(&mut self) {
        if let Some(mut s) = self.sections.pop() {
            if let Some(last) = s.children.last() {
                s.span.end = s.span.end.max(last.span.end);
            }
            self.emit(s);
        }
    }

    fn list_item(&mut self, (indent, content): (usize, String), lineno: usize) {
        while self.lists.len() > 1 && indent + 1 < self.lists.last().map_or(0, |f| f.indent) {
            self.pop_list_frame();
        }
        let nest = self
            .lists
            .last()
            .is_some_and(|top| indent > top.indent + 1 && top.current.is_some());
        if self.lists.is_empty() || nest {
            self.lists.push(ListFrame {
                indent,
                items: Vec::new(),
                current: None,
            });
        }
        let frame = self.lists.last_mut().expect("frame pushed above");
        if let Some(done) = frame.current.take() {
            let draft = finish_item(done, &self.opts.markers);
            frame.items.push(draft);
        }
        frame.current = Some(Item {
            start: lineno,
            end: lineno,
            lines: vec![content],
            nested: Vec::new(),
        });
    }

    fn continue_item(&mut self, line: &str, lineno: usize) {
        let frame = self.lists.last_mut().expect("caller checked lists");
        if let Some(item) = frame.current.as_mut() {
            item.lines.push(line.trim_start().to_string());
            item.end = lineno;
        }
    }

    fn pop_list_frame(&mut self) {
        let Some(mut frame) = self.lists.pop() else {
            return;
        };
        if let Some(done) = frame.current.take() {
            frame.items.push(finish_item(done, &self.opts.markers));
        }
        if frame.items.is_empty() {
            return;
        }
        let span = Span::new(
            frame.items.first().map_or(0, |d| d.span.start),
            frame.items.last().map_or(0, |d| d.span.end),
        );
        let list = Draft {
            kind: NodeKind::List,
            heading_level: None,
            text: String::new(),
            span,
            children: frame.items,
        };
        match self.lists.last_mut().and_then(|f| f.current.as_mut()) {
            Some(parent_item) => {
                parent_item.end = parent_item.end.max(list.span.end);
                parent_item.nested.push(list);
            }
            None => self.emit(list),
        }
    }

    fn close_lists(&mut self) {
        while !self.lists.is_empty() {
            self.pop_list_frame();
        }
    }

    fn finish(mut self) -> (Vec<Draft>, Vec<Diagnostic>) {
        self.flush_para();
        self.close_lists();
        while !self.sections.is_empty() {
            self.close_section();
        }
        (self.root, self.diagnostics)
    }
}

fn finish_item(item: Item, markers: &MarkerLexicon) -> Draft {
    let text = item.lines.join("\n");
    let kind = if markers.contains_marker(&text) {
        NodeKind::Directive
    } else {
        NodeKind::ListItem
    };
    Draft {
        kind,
        heading_level: None,
        text,
        span: Span::new(item.start, item.end),
        children: item.nested,
    }
}

fn indent_width(line: &str) -> usize {
    line.chars()
        .take_while(|c| c.is_whitespace())
        .map(|c| if c == '\t' { 4 } else { 1 })
        .sum()
}

fn atx_heading(line: &str) -> Option<(u8, String)> {
    if indent_width(line) > 3 {
        return None;
    }
    let t = line.trim_start();
    let hashes = t.chars().take_while(|&c| c == '#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &t[hashes..];
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let title = rest.trim().trim_end_matches('#').trim_end();
    Some((hashes as u8, title.to_string()))
}

fn setext_underline(line: &str) -> Option<u8> {
    if indent_width(line) > 3 {
        return None;
    }
    let t = line.trim();
    if !t.is_empty() && t.chars().all(|c| c == '=') {
        Some(1)
    } else if t.len() >= 2 && t.chars().all(|c| c == '-') {
        Some(2)
    } else {
        None
    }
}

fn list_marker(line: &str) -> Option<(usize, String)> {
    let indent = indent_width(line);
    let t = line.trim_start();
    let marker_len = if t.starts_with(['-', '*', '+']) {
        1
    } else {
        let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits == 0 || digits > 9 || !t[digits..].starts_with(['.', ')']) {
            return None;
        }
        digits + 1
    };
    let rest = &t[marker_len..];
    if !rest.starts_with([' ', '\t']) {
        return None;
    }
    let content = rest.trim();
    if content.is_empty() {
        return None;
    }
    Some((indent, content.to_string()))
}

#[derive(Debug, Clone, Copy)]
struct Fence {
    ch: char,
    len: usize,
}

impl Fence {
    fn closes(&self, line: &str) -> bool {
        let t = line.trim();
        t.len() >= self.len && t.chars().all(|c| c == self.ch)
    }
}

fn fence_open(line: &str) -> Option<Fence> {
    let t = line.trim_start();
    let ch = t.chars().next().filter(|c| *c == '`' || *c == '~')?;
    let len = t.chars().take_while(|&c| c == ch).count();
    if len < 3 {
        return None;
    }
    if ch == '`' && t[len..].contains('`') {
        return None;
    }
    Some(Fence { ch, len })
}
