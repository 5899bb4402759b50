//! Byte-level context-free grammars: data model, text format, cleanup and
//! nullability.
//!
//! Terminals are single bytes. Quoted literals in the text format are
//! expanded to their bytes at parse time, so a rule like `kw ::= "if"` becomes
//! a two-symbol body. Nonterminals are interned to dense ids in order of first
//! appearance in the source.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use crate::error::GrammarError;

/// Dense nonterminal id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NtId(pub u32);

impl NtId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Terminal(u8),
    Nonterminal(NtId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Production {
    pub head: NtId,
    pub body: Vec<Symbol>,
}

/// A context-free grammar whose terminals are bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    names: Vec<String>,
    productions: Vec<Production>,
    start: NtId,
    alphabet: BTreeSet<u8>,
}

impl Cfg {
    /// Builds a grammar, checking that every referenced nonterminal exists.
    ///
    /// Nonterminals without productions are allowed here; [`Cfg::validate`]
    /// removes them.
    pub fn new(
        names: Vec<String>,
        productions: Vec<Production>,
        start: NtId,
    ) -> Result<Self, GrammarError> {
        let n = names.len();
        if start.index() >= n {
            return Err(GrammarError::Malformed(format!(
                "start symbol id {} out of range ({} nonterminals)",
                start.0, n
            )));
        }
        let mut seen = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if seen.insert(name.as_str(), i).is_some() {
                return Err(GrammarError::Malformed(format!(
                    "duplicate nonterminal name `{name}`"
                )));
            }
        }
        let mut alphabet = BTreeSet::new();
        for p in &productions {
            if p.head.index() >= n {
                return Err(GrammarError::Malformed(format!(
                    "production head id {} out of range",
                    p.head.0
                )));
            }
            for s in &p.body {
                match *s {
                    Symbol::Terminal(b) => {
                        alphabet.insert(b);
                    }
                    Symbol::Nonterminal(a) if a.index() >= n => {
                        return Err(GrammarError::Malformed(format!(
                            "body references nonterminal id {} out of range",
                            a.0
                        )));
                    }
                    Symbol::Nonterminal(_) => {}
                }
            }
        }
        Ok(Self {
            names,
            productions,
            start,
            alphabet,
        })
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn nonterminal_count(&self) -> usize {
        self.names.len()
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = NtId> + '_ {
        (0..self.names.len() as u32).map(NtId)
    }

    pub fn name(&self, nt: NtId) -> &str {
        &self.names[nt.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn find(&self, name: &str) -> Option<NtId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| NtId(i as u32))
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn productions_of(&self, nt: NtId) -> impl Iterator<Item = &Production> + '_ {
        self.productions.iter().filter(move |p| p.head == nt)
    }

    /// Bytes that occur in some production body.
    pub fn alphabet(&self) -> &BTreeSet<u8> {
        &self.alphabet
    }

    /// Nullability of every nonterminal, by fixpoint over the productions.
    pub fn nullable(&self) -> Vec<bool> {
        let mut nullable = vec![false; self.names.len()];
        let mut changed = true;
        while changed {
            changed = false;
            for p in &self.productions {
                if nullable[p.head.index()] {
                    continue;
                }
                let all = p.body.iter().all(|s| match s {
                    Symbol::Terminal(_) => false,
                    Symbol::Nonterminal(a) => nullable[a.index()],
                });
                if all {
                    nullable[p.head.index()] = true;
                    changed = true;
                }
            }
        }
        nullable
    }

    /// True iff `nt` derives the empty string.
    pub fn derives_epsilon(&self, nt: NtId) -> bool {
        self.nullable()[nt.index()]
    }

    /// Nonterminals that derive at least one terminal string.
    pub fn productive(&self) -> Vec<bool> {
        let mut productive = vec![false; self.names.len()];
        let mut changed = true;
        while changed {
            changed = false;
            for p in &self.productions {
                if productive[p.head.index()] {
                    continue;
                }
                let all = p.body.iter().all(|s| match s {
                    Symbol::Terminal(_) => true,
                    Symbol::Nonterminal(a) => productive[a.index()],
                });
                if all {
                    productive[p.head.index()] = true;
                    changed = true;
                }
            }
        }
        productive
    }

    /// Removes non-productive nonterminals, then unreachable ones.
    ///
    /// Surviving nonterminals keep their relative order, so ids stay
    /// deterministic. Fails if the start symbol derives no terminal string.
    pub fn validate(self) -> Result<Cfg, GrammarError> {
        let productive = self.productive();
        if !productive[self.start.index()] {
            return Err(GrammarError::EmptyLanguage {
                start: self.name(self.start).to_string(),
            });
        }
        let uses_dead = |p: &Production| {
            p.body.iter().any(|s| match s {
                Symbol::Nonterminal(a) => !productive[a.index()],
                Symbol::Terminal(_) => false,
            })
        };
        let kept: Vec<&Production> = self
            .productions
            .iter()
            .filter(|p| productive[p.head.index()] && !uses_dead(p))
            .collect();

        let mut reachable = vec![false; self.names.len()];
        reachable[self.start.index()] = true;
        let mut stack = vec![self.start];
        while let Some(a) = stack.pop() {
            for p in kept.iter().filter(|p| p.head == a) {
                for s in &p.body {
                    if let Symbol::Nonterminal(b) = *s {
                        if !reachable[b.index()] {
                            reachable[b.index()] = true;
                            stack.push(b);
                        }
                    }
                }
            }
        }

        let mut remap = vec![None; self.names.len()];
        let mut names = Vec::new();
        for (i, name) in self.names.iter().enumerate() {
            if reachable[i] {
                remap[i] = Some(NtId(names.len() as u32));
                names.push(name.clone());
            }
        }
        let map = |a: NtId| remap[a.index()].expect("reachable symbol is kept");
        let productions = kept
            .into_iter()
            .filter(|p| reachable[p.head.index()])
            .map(|p| Production {
                head: map(p.head),
                body: p
                    .body
                    .iter()
                    .map(|s| match *s {
                        Symbol::Nonterminal(a) => Symbol::Nonterminal(map(a)),
                        t => t,
                    })
                    .collect(),
            })
            .collect();
        Cfg::new(names, productions, map(self.start))
    }

    /// Renders the grammar in the text format, start rule first.
    ///
    /// Nonterminals without productions are skipped, so only validated
    /// grammars render to text that parses back.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut order: Vec<NtId> = vec![self.start];
        order.extend(self.nonterminals().filter(|&a| a != self.start));
        for a in order {
            let alts: Vec<String> = self.productions_of(a).map(|p| self.render_body(&p.body)).collect();
            if alts.is_empty() {
                continue;
            }
            out.push_str(self.name(a));
            out.push_str(" ::= ");
            out.push_str(&alts.join(" | "));
            out.push('\n');
        }
        out
    }

    fn render_body(&self, body: &[Symbol]) -> String {
        if body.is_empty() {
            return "\"\"".to_string();
        }
        let mut parts = Vec::new();
        let mut lit: Vec<u8> = Vec::new();
        for s in body {
            match *s {
                Symbol::Terminal(b) => lit.push(b),
                Symbol::Nonterminal(a) => {
                    if !lit.is_empty() {
                        parts.push(quote_bytes(&lit));
                        lit.clear();
                    }
                    parts.push(self.name(a).to_string());
                }
            }
        }
        if !lit.is_empty() {
            parts.push(quote_bytes(&lit));
        }
        parts.join(" ")
    }

    /// Structural equality keyed by nonterminal names rather than ids.
    pub fn same_structure(&self, other: &Cfg) -> bool {
        // Body symbols as (is_terminal, text).
        type Rules = BTreeMap<String, Vec<Vec<(bool, String)>>>;
        fn canon(g: &Cfg) -> (String, Rules) {
            let mut rules = Rules::new();
            for p in &g.productions {
                let body = p
                    .body
                    .iter()
                    .map(|s| match *s {
                        Symbol::Terminal(b) => (false, format!("{b:02x}")),
                        Symbol::Nonterminal(a) => (true, g.name(a).to_string()),
                    })
                    .collect();
                rules.entry(g.name(p.head).to_string()).or_default().push(body);
            }
            (g.name(g.start).to_string(), rules)
        }
        canon(self) == canon(other)
    }
}

impl fmt::Display for Cfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Quotes a byte string as a grammar literal.
pub fn quote_bytes(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() + 2);
    s.push('"');
    for &b in bytes {
        match b {
            b'"' => s.push_str("\\\""),
            b'\\' => s.push_str("\\\\"),
            b'\n' => s.push_str("\\n"),
            b'\t' => s.push_str("\\t"),
            0x20..=0x7e => s.push(b as char),
            _ => s.push_str(&format!("\\x{b:02x}")),
        }
    }
    s.push('"');
    s
}

/// Raw grammar text plus where it came from (for error messages).
#[derive(Debug, Clone)]
pub struct GrammarSource {
    pub text: String,
    pub origin: String,
}

impl GrammarSource {
    pub fn literal(origin: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            origin: origin.into(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GrammarError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GrammarError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(Self {
            text,
            origin: path.display().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Define,
    Bar,
    Literal(Vec<u8>),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '\'' | '-' | '.')
}

fn lex(src: &GrammarSource) -> Result<Vec<Spanned>, GrammarError> {
    let syntax = |line: usize, col: usize, message: String| GrammarError::Syntax {
        origin: src.origin.clone(),
        line,
        col,
        message,
    };
    let mut toks = Vec::new();
    let mut chars = src.text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, col);
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '|' => {
                chars.next();
                col += 1;
                toks.push(Spanned { tok: Tok::Bar, line: tl, col: tc });
            }
            ':' => {
                chars.next();
                let ok = chars.next() == Some(':') && chars.next() == Some('=');
                if !ok {
                    return Err(syntax(tl, tc, "expected `::=`".into()));
                }
                col += 3;
                toks.push(Spanned { tok: Tok::Define, line: tl, col: tc });
            }
            '"' => {
                chars.next();
                col += 1;
                let mut bytes = Vec::new();
                loop {
                    let Some(c) = chars.next() else {
                        return Err(syntax(tl, tc, "unterminated string literal".into()));
                    };
                    col += 1;
                    match c {
                        '"' => break,
                        '\n' => return Err(syntax(tl, tc, "newline in string literal".into())),
                        '\\' => {
                            let Some(e) = chars.next() else {
                                return Err(syntax(tl, tc, "unterminated escape".into()));
                            };
                            col += 1;
                            match e {
                                '"' => bytes.push(b'"'),
                                '\\' => bytes.push(b'\\'),
                                'n' => bytes.push(b'\n'),
                                't' => bytes.push(b'\t'),
                                'x' => {
                                    let hi = chars.next();
                                    let lo = chars.next();
                                    col += 2;
                                    let digits: Option<String> = hi.zip(lo).map(|(a, b)| [a, b].iter().collect());
                                    let value = digits.as_deref().and_then(|d| u8::from_str_radix(d, 16).ok());
                                    match value {
                                        Some(v) => bytes.push(v),
                                        None => {
                                            return Err(syntax(line, col - 4, "`\\x` needs two hex digits".into()))
                                        }
                                    }
                                }
                                other => {
                                    return Err(syntax(line, col - 2, format!("unknown escape `\\{other}`")))
                                }
                            }
                        }
                        c => {
                            let mut buf = [0u8; 4];
                            bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                        }
                    }
                }
                toks.push(Spanned { tok: Tok::Literal(bytes), line: tl, col: tc });
            }
            c if is_ident_start(c) => {
                let mut name = String::new();
                while let Some(&c) = chars.peek() {
                    if !is_ident_continue(c) {
                        break;
                    }
                    name.push(c);
                    chars.next();
                    col += 1;
                }
                toks.push(Spanned { tok: Tok::Ident(name), line: tl, col: tc });
            }
            other => return Err(syntax(tl, tc, format!("unexpected character `{other}`"))),
        }
    }
    Ok(toks)
}

/// Parses the grammar text format. The first rule's head is the start symbol.
///
/// A rule may be split across several `name ::= ...` definitions; their
/// alternatives are concatenated in source order.
pub fn parse_grammar(src: &GrammarSource) -> Result<Cfg, GrammarError> {
    let toks = lex(src)?;
    let syntax = |t: &Spanned, message: String| GrammarError::Syntax {
        origin: src.origin.clone(),
        line: t.line,
        col: t.col,
        message,
    };

    let mut names: Vec<String> = Vec::new();
    let mut ids: HashMap<String, NtId> = HashMap::new();
    let mut first_use: HashMap<NtId, (usize, usize)> = HashMap::new();
    let mut defined: BTreeSet<NtId> = BTreeSet::new();
    let mut productions = Vec::new();

    let mut intern = |name: &str, names: &mut Vec<String>| -> NtId {
        if let Some(&id) = ids.get(name) {
            return id;
        }
        let id = NtId(names.len() as u32);
        names.push(name.to_string());
        ids.insert(name.to_string(), id);
        id
    };

    let starts_rule = |i: usize| {
        matches!(toks.get(i).map(|t| &t.tok), Some(Tok::Ident(_)))
            && matches!(toks.get(i + 1).map(|t| &t.tok), Some(Tok::Define))
    };

    let mut i = 0;
    while i < toks.len() {
        let head = match &toks[i].tok {
            Tok::Ident(name) if starts_rule(i) => intern(name, &mut names),
            _ => return Err(syntax(&toks[i], "expected `name ::=` to start a rule".into())),
        };
        defined.insert(head);
        i += 2;
        let mut body: Vec<Symbol> = Vec::new();
        let mut empty_alt = true;
        loop {
            let at_end = i >= toks.len() || starts_rule(i);
            if at_end || toks[i].tok == Tok::Bar {
                if empty_alt {
                    let t = toks.get(i).or_else(|| toks.last()).expect("non-empty token stream");
                    return Err(syntax(t, "empty alternative (write \"\" for epsilon)".into()));
                }
                productions.push(Production {
                    head,
                    body: std::mem::take(&mut body),
                });
                empty_alt = true;
                if at_end {
                    break;
                }
                i += 1;
                continue;
            }
            match &toks[i].tok {
                Tok::Literal(bytes) => {
                    body.extend(bytes.iter().map(|&b| Symbol::Terminal(b)));
                }
                Tok::Ident(name) => {
                    let id = intern(name, &mut names);
                    first_use.entry(id).or_insert((toks[i].line, toks[i].col));
                    body.push(Symbol::Nonterminal(id));
                }
                Tok::Define => return Err(syntax(&toks[i], "unexpected `::=`".into())),
                Tok::Bar => unreachable!(),
            }
            empty_alt = false;
            i += 1;
        }
    }

    if productions.is_empty() {
        return Err(GrammarError::EmptyGrammar {
            origin: src.origin.clone(),
        });
    }
    for (idx, name) in names.iter().enumerate() {
        let id = NtId(idx as u32);
        if !defined.contains(&id) {
            let (line, col) = first_use[&id];
            return Err(GrammarError::UndefinedRule {
                origin: src.origin.clone(),
                name: name.clone(),
                line,
                col,
            });
        }
    }
    Cfg::new(names, productions, NtId(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Cfg, GrammarError> {
        parse_grammar(&GrammarSource::literal("test", text))
    }

    #[test]
    fn single_rule() {
        let g = parse(r#"root ::= "a""#).unwrap();
        assert_eq!(g.nonterminal_count(), 1);
        assert_eq!(g.productions().len(), 1);
        assert_eq!(g.productions()[0].body, vec![Symbol::Terminal(b'a')]);
    }

    #[test]
    fn dyck_has_epsilon_alternative() {
        let g = parse(r#"root ::= "(" root ")" root | """#).unwrap();
        assert_eq!(g.productions().len(), 2);
        assert!(g.productions()[1].body.is_empty());
        assert!(g.derives_epsilon(g.start()));
    }

    #[test]
    fn left_recursive_arithmetic() {
        let g = parse("root ::= expr\nexpr ::= expr \"+\" term | term\nterm ::= \"n\"").unwrap();
        assert_eq!(g.productions().len(), 4);
        assert_eq!(g.name(NtId(1)), "expr");
        assert_eq!(g.name(NtId(2)), "term");
        assert!(!g.derives_epsilon(g.find("term").unwrap()));
    }

    #[test]
    fn rules_may_share_a_line() {
        let g = parse(r#"root ::= expr  expr ::= expr "+" term | term  term ::= "n""#).unwrap();
        assert_eq!(g.productions().len(), 4);
    }

    #[test]
    fn nullable_through_chain() {
        let g = parse(r#"a ::= b b
b ::= "" | "x""#)
        .unwrap();
        assert!(g.derives_epsilon(g.find("a").unwrap()));
    }

    #[test]
    fn escapes_expand_to_bytes() {
        let g = parse(r#"root ::= "\"\\\n\t\xff" "é""#).unwrap();
        let bytes: Vec<u8> = g.productions()[0]
            .body
            .iter()
            .map(|s| match s {
                Symbol::Terminal(b) => *b,
                _ => panic!(),
            })
            .collect();
        assert_eq!(bytes, vec![b'"', b'\\', b'\n', b'\t', 0xff, 0xc3, 0xa9]);
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse("root ::= \"a\"\nother ::= \"b\" $").unwrap_err();
        match err {
            GrammarError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 15)),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn undefined_rule_is_reported() {
        let err = parse(r#"root ::= missing "a""#).unwrap_err();
        match err {
            GrammarError::UndefinedRule { name, line, col, .. } => {
                assert_eq!(name, "missing");
                assert_eq!((line, col), (1, 10));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn empty_grammar_is_an_error() {
        assert!(matches!(parse("# nothing\n"), Err(GrammarError::EmptyGrammar { .. })));
    }

    #[test]
    fn unterminated_literal() {
        assert!(matches!(parse("root ::= \"abc"), Err(GrammarError::Syntax { .. })));
    }

    #[test]
    fn validate_keeps_dyck() {
        let g = parse(r#"root ::= "(" root ")" root | """#).unwrap();
        assert_eq!(g.clone().validate().unwrap(), g);
    }

    #[test]
    fn validate_drops_non_productive() {
        let g = parse("root ::= \"a\" | dead\ndead ::= dead \"x\"").unwrap();
        let v = g.validate().unwrap();
        assert_eq!(v.nonterminal_count(), 1);
        assert!(v.find("dead").is_none());
        assert_eq!(v.productions().len(), 1);
    }

    #[test]
    fn validate_drops_unreachable() {
        let g = parse("root ::= \"a\"\nisland ::= \"b\"").unwrap();
        let v = g.validate().unwrap();
        assert!(v.find("island").is_none());
    }

    #[test]
    fn validate_rejects_empty_language() {
        let g = parse("root ::= root").unwrap();
        assert!(matches!(g.validate(), Err(GrammarError::EmptyLanguage { .. })));
    }

    #[test]
    fn render_round_trips() {
        let text = "root ::= \"(\" root \")\" root | \"\"\nx ::= \"\\x00ab\" root";
        let g = parse(text).unwrap();
        let again = parse(&g.render()).unwrap();
        assert!(g.same_structure(&again));
    }
}
