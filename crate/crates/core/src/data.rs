//! ABSA annotation types and the `sentence####[[...]]` line format.
//!
//! A line carries a tokenized sentence, four `#` characters, and a Python
//! style list of element lists. Quad tasks (ASQP, ACOS) use four elements in
//! the order `(aspect, category, polarity, opinion)`; TASD drops the opinion
//! and ASTE drops the category. The element order can be overridden per file
//! through [`ParseOptions::order`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Separator between the sentence and its annotation.
pub const SEPARATOR: &str = "####";

/// Sentiment polarity of one aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Neutral,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Neutral, Polarity::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Neutral => "neutral",
            Polarity::Negative => "negative",
        }
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "neutral" => Ok(Polarity::Neutral),
            "negative" => Ok(Polarity::Negative),
            _ => Err(Error::UnknownPolarity(s.to_string())),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An aspect or opinion term: either a span of the sentence or implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Null,
    Span(String),
}

impl Term {
    pub const NULL_SENTINEL: &'static str = "null";

    /// Parses a raw element; `null` in any casing is the implicit term.
    pub fn parse(raw: &str) -> Term {
        if raw.eq_ignore_ascii_case(Self::NULL_SENTINEL) {
            Term::Null
        } else {
            Term::Span(raw.to_string())
        }
    }

    pub fn span(s: impl Into<String>) -> Term {
        Term::parse(&s.into())
    }

    pub fn as_str(&self) -> &str {
        match self {
            Term::Null => Self::NULL_SENTINEL,
            Term::Span(s) => s,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Term::Null)
    }

    pub fn as_span(&self) -> Option<&str> {
        match self {
            Term::Null => None,
            Term::Span(s) => Some(s),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Term::parse(&s))
    }
}

/// One `(aspect, category, polarity, opinion)` annotation.
///
/// Triplet tasks leave one field empty: TASD has no opinion, ASTE has no
/// category. Equality is exact on every present field.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruplet {
    pub aspect: Term,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinion: Option<Term>,
}

impl Quadruplet {
    pub fn new(aspect: &str, category: &str, polarity: Polarity, opinion: &str) -> Self {
        Quadruplet {
            aspect: Term::parse(aspect),
            category: Some(category.to_string()),
            polarity,
            opinion: Some(Term::parse(opinion)),
        }
    }

    fn field(&self, field: Field) -> Option<String> {
        match field {
            Field::Aspect => Some(self.aspect.as_str().to_string()),
            Field::Category => self.category.clone(),
            Field::Polarity => Some(self.polarity.as_str().to_string()),
            Field::Opinion => self.opinion.as_ref().map(|t| t.as_str().to_string()),
        }
    }
}

/// Annotation task; decides which tuple elements exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    Asqp,
    Acos,
    Tasd,
    Aste,
}

impl Task {
    pub fn arity(self) -> usize {
        match self {
            Task::Asqp | Task::Acos => 4,
            Task::Tasd | Task::Aste => 3,
        }
    }

    pub fn has_category(self) -> bool {
        !matches!(self, Task::Aste)
    }

    pub fn has_opinion(self) -> bool {
        !matches!(self, Task::Tasd)
    }

    pub fn default_order(self) -> FieldOrder {
        use Field::*;
        FieldOrder(match self {
            Task::Asqp | Task::Acos => vec![Aspect, Category, Polarity, Opinion],
            Task::Tasd => vec![Aspect, Category, Polarity],
            Task::Aste => vec![Aspect, Opinion, Polarity],
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Asqp => "ASQP",
            Task::Acos => "ACOS",
            Task::Tasd => "TASD",
            Task::Aste => "ASTE",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "asqp" => Ok(Task::Asqp),
            "acos" => Ok(Task::Acos),
            "tasd" => Ok(Task::Tasd),
            "aste" => Ok(Task::Aste),
            _ => Err(Error::ConfigInvalid(format!("unknown task {s:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Aspect,
    Category,
    Polarity,
    Opinion,
}

/// Position of each element inside an annotation tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldOrder(pub Vec<Field>);

impl FromStr for FieldOrder {
    type Err = Error;

    /// Accepts comma separated short names, e.g. `at,ac,ot,sp`.
    fn from_str(s: &str) -> Result<Self> {
        let mut fields = Vec::new();
        for part in s.split(',') {
            let field = match part.trim().to_ascii_lowercase().as_str() {
                "at" | "aspect" => Field::Aspect,
                "ac" | "category" => Field::Category,
                "sp" | "polarity" | "sentiment" => Field::Polarity,
                "ot" | "opinion" => Field::Opinion,
                other => return Err(Error::ConfigInvalid(format!("unknown tuple field {other:?}"))),
            };
            if fields.contains(&field) {
                return Err(Error::ConfigInvalid(format!("duplicate tuple field in {s:?}")));
            }
            fields.push(field);
        }
        Ok(FieldOrder(fields))
    }
}

/// Layout details needed to reproduce a parsed line byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LineStyle {
    /// Elements separated by `,` rather than `, `.
    pub compact: bool,
    /// Non-default element order, if the file used one.
    pub order: Option<FieldOrder>,
    /// Spelling of the implicit-term sentinel when it differs from `null`.
    pub null_literal: Option<String>,
}

/// A sentence together with its gold tuples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub id: String,
    pub text: String,
    pub quads: Vec<Quadruplet>,
    pub task: Task,
    #[serde(skip)]
    pub style: LineStyle,
}

impl PartialEq for AnnotatedExample {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.text == other.text && self.quads == other.quads && self.task == other.task
    }
}

impl AnnotatedExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, quads: Vec<Quadruplet>, task: Task) -> Self {
        AnnotatedExample {
            id: id.into(),
            text: text.into(),
            quads,
            task,
            style: LineStyle::default(),
        }
    }

    /// Checks the example invariants: non-empty tuples, fields matching the
    /// task, and every explicit term occurring in the text.
    pub fn validate(&self, categories: Option<&BTreeSet<String>>) -> Result<()> {
        if self.quads.is_empty() {
            return Err(Error::MalformedLine("example has no annotation tuples".into()));
        }
        let haystack = normalize(&self.text);
        for quad in &self.quads {
            if quad.category.is_some() != self.task.has_category()
                || quad.opinion.is_some() != self.task.has_opinion()
            {
                return Err(Error::ArityMismatch {
                    expected: self.task.arity(),
                    found: 2 + quad.category.is_some() as usize + quad.opinion.is_some() as usize,
                });
            }
            for term in std::iter::once(&quad.aspect).chain(quad.opinion.as_ref()) {
                if let Term::Span(s) = term {
                    if !haystack.contains(&normalize(s)) {
                        return Err(Error::TermNotInSentence { term: s.clone() });
                    }
                }
            }
            if let (Some(set), Some(cat)) = (categories, &quad.category) {
                if !set.contains(cat) {
                    return Err(Error::UnknownCategory(cat.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Collapses whitespace runs and lowercases, for tokenization-tolerant
/// substring checks.
pub fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Options controlling [`parse_line_with`].
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Element order override; `None` uses the task default.
    pub order: Option<FieldOrder>,
    /// Declared aspect category set, checked when present.
    pub categories: Option<BTreeSet<String>>,
}

/// Parses one dataset line with the default element order.
pub fn parse_line(line: &str, task: Task) -> Result<AnnotatedExample> {
    parse_line_with(line, task, &ParseOptions::default())
}

pub fn parse_line_with(line: &str, task: Task, opts: &ParseOptions) -> Result<AnnotatedExample> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let (text, annotation) = line
        .split_once(SEPARATOR)
        .ok_or_else(|| Error::MalformedLine(format!("missing {SEPARATOR:?} separator")))?;
    let (quads, compact, null_literal) = parse_tuples_with_style(annotation, task, opts.order.as_ref())?;
    if quads.is_empty() {
        return Err(Error::MalformedLine("empty annotation list".into()));
    }
    let expected_order = task.default_order();

    let example = AnnotatedExample {
        id: String::new(),
        text: text.to_string(),
        quads,
        task,
        style: LineStyle {
            compact,
            order: opts.order.clone().filter(|o| *o != expected_order),
            null_literal,
        },
    };
    example.validate(opts.categories.as_ref())?;
    Ok(example)
}

/// Parses a bare tuple list such as `[['pizza', 'food quality', 'positive', 'great']]`
/// without checking terms against a sentence.
pub fn parse_tuples(annotation: &str, task: Task, order: Option<&FieldOrder>) -> Result<Vec<Quadruplet>> {
    parse_tuples_with_style(annotation, task, order).map(|(q, ..)| q)
}

type StyledTuples = (Vec<Quadruplet>, bool, Option<String>);

fn parse_tuples_with_style(annotation: &str, task: Task, order: Option<&FieldOrder>) -> Result<StyledTuples> {
    let (tuples, compact) = parse_annotation(annotation)?;
    let mut null_literal = None;
    let default_order = task.default_order();
    let order = order.unwrap_or(&default_order);
    if order.0.len() != task.arity() || default_order.0.iter().any(|f| !order.0.contains(f)) {
        return Err(Error::ConfigInvalid(format!("field order does not fit task {task}")));
    }
    let mut quads = Vec::with_capacity(tuples.len());
    for tuple in tuples {
        if tuple.len() != task.arity() {
            return Err(Error::ArityMismatch { expected: task.arity(), found: tuple.len() });
        }
        let mut aspect = None;
        let mut category = None;
        let mut polarity = None;
        let mut opinion = None;
        for (field, value) in order.0.iter().zip(tuple) {
            match field {
                Field::Aspect | Field::Opinion if Term::parse(&value).is_null() && value != Term::NULL_SENTINEL => {
                    null_literal.get_or_insert_with(|| value.clone());
                    if *field == Field::Aspect {
                        aspect = Some(Term::Null);
                    } else {
                        opinion = Some(Term::Null);
                    }
                }
                Field::Aspect => aspect = Some(Term::parse(&value)),
                Field::Category => category = Some(value),
                Field::Polarity => polarity = Some(value.parse::<Polarity>()?),
                Field::Opinion => opinion = Some(Term::parse(&value)),
            }
        }
        quads.push(Quadruplet {
            aspect: aspect.expect("aspect is in every order"),
            category,
            polarity: polarity.expect("polarity is in every order"),
            opinion,
        });
    }
    Ok((quads, compact, null_literal))
}

/// Renders an example back into its line form (no trailing newline).
pub fn serialize_example(example: &AnnotatedExample) -> String {
    let mut out = String::with_capacity(example.text.len() + 64);
    out.push_str(&example.text);
    out.push_str(SEPARATOR);
    out.push_str(&format_tuples(example, example.style.compact));
    out
}

/// Formats the tuple list of an example as a Python-style nested list.
pub fn format_tuples(example: &AnnotatedExample, compact: bool) -> String {
    let sep = if compact { "," } else { ", " };
    let order = example.style.order.clone().unwrap_or_else(|| example.task.default_order());
    let tuples: Vec<String> = example
        .quads
        .iter()
        .map(|q| {
            let fields: Vec<String> = order
                .0
                .iter()
                .map(|f| {
                    let implicit = match f {
                        Field::Aspect => q.aspect.is_null(),
                        Field::Opinion => q.opinion.as_ref().is_some_and(Term::is_null),
                        _ => false,
                    };
                    match (&example.style.null_literal, implicit) {
                        (Some(lit), true) => py_repr(lit),
                        _ => py_repr(&q.field(*f).unwrap_or_default()),
                    }
                })
                .collect();
            format!("[{}]", fields.join(sep))
        })
        .collect();
    format!("[{}]", tuples.join(sep))
}

/// Quotes a string the way Python's `repr` does for plain text.
fn py_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    compact: Option<bool>,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) -> bool {
        let mut any = false;
        while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
            self.chars.next();
            any = true;
        }
        any
    }

    fn expect_open(&mut self) -> Result<char> {
        self.skip_ws();
        match self.chars.next() {
            Some('[') => Ok(']'),
            Some('(') => Ok(')'),
            other => Err(Error::MalformedLine(format!("expected '[' but found {other:?}"))),
        }
    }

    /// After an item: returns true if another item follows, false at the
    /// closing bracket.
    fn separator(&mut self, close: char) -> Result<bool> {
        self.skip_ws();
        match self.chars.next() {
            Some(',') => {
                let spaced = self.skip_ws();
                if self.chars.peek() == Some(&close) {
                    // trailing comma
                    self.chars.next();
                    return Ok(false);
                }
                self.compact.get_or_insert(!spaced);
                Ok(true)
            }
            Some(c) if c == close => Ok(false),
            other => Err(Error::MalformedLine(format!("unbalanced brackets near {other:?}"))),
        }
    }

    fn string(&mut self) -> Result<String> {
        self.skip_ws();
        let quote = match self.chars.next() {
            Some(q @ ('\'' | '"')) => q,
            other => return Err(Error::MalformedLine(format!("expected quoted element, found {other:?}"))),
        };
        let mut out = String::new();
        loop {
            match self.chars.next() {
                None => return Err(Error::MalformedLine("unterminated string".into())),
                Some('\\') => match self.chars.next() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(c) => out.push(c),
                    None => return Err(Error::MalformedLine("dangling escape".into())),
                },
                Some(c) if c == quote => return Ok(out),
                Some(c) => out.push(c),
            }
        }
    }

    fn tuple(&mut self) -> Result<Vec<String>> {
        let close = self.expect_open()?;
        let mut items = Vec::new();
        self.skip_ws();
        if self.chars.peek() == Some(&close) {
            self.chars.next();
            return Ok(items);
        }
        loop {
            items.push(self.string()?);
            if !self.separator(close)? {
                return Ok(items);
            }
        }
    }
}

/// Parses `[[..], [..]]`, also reporting whether separators were compact.
fn parse_annotation(s: &str) -> Result<(Vec<Vec<String>>, bool)> {
    let mut lx = Lexer { chars: s.chars().peekable(), compact: None };
    let close = lx.expect_open()?;
    let mut tuples = Vec::new();
    lx.skip_ws();
    if lx.chars.peek() == Some(&close) {
        lx.chars.next();
    } else {
        loop {
            tuples.push(lx.tuple()?);
            if !lx.separator(close)? {
                break;
            }
        }
    }
    lx.skip_ws();
    if let Some(c) = lx.chars.next() {
        return Err(Error::MalformedLine(format!("unexpected trailing {c:?}")));
    }
    Ok((tuples, lx.compact.unwrap_or(false)))
}

/// Reads a whole dataset file. Blank lines are skipped; ids are
/// `<file stem>-<line number>`.
pub fn read_dataset(path: &Path, task: Task, opts: &ParseOptions) -> Result<Vec<AnnotatedExample>> {
    let content = std::fs::read_to_string(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("line");
    parse_dataset(&content, stem, task, opts)
}

pub fn parse_dataset(content: &str, id_prefix: &str, task: Task, opts: &ParseOptions) -> Result<Vec<AnnotatedExample>> {
    let mut examples = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut example = parse_line_with(line, task, opts)
            .map_err(|e| Error::AtLine { line: i + 1, source: Box::new(e) })?;
        example.id = format!("{id_prefix}-{}", i + 1);
        examples.push(example);
    }
    Ok(examples)
}

/// Per-file counts in the layout of the usual dataset statistics table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sentence_count: usize,
    pub quad_counts_by_polarity: BTreeMap<Polarity, usize>,
    pub category_set_size: usize,
}

impl DatasetStats {
    pub fn total_quads(&self) -> usize {
        self.quad_counts_by_polarity.values().sum()
    }

    pub fn count(&self, polarity: Polarity) -> usize {
        self.quad_counts_by_polarity.get(&polarity).copied().unwrap_or(0)
    }
}

pub fn dataset_stats(examples: &[AnnotatedExample]) -> DatasetStats {
    let mut by_polarity: BTreeMap<Polarity, usize> = Polarity::ALL.iter().map(|p| (*p, 0)).collect();
    let mut categories = BTreeSet::new();
    for example in examples {
        for quad in &example.quads {
            *by_polarity.entry(quad.polarity).or_default() += 1;
            if let Some(c) = &quad.category {
                categories.insert(c.as_str());
            }
        }
    }
    DatasetStats {
        sentence_count: examples.len(),
        quad_counts_by_polarity: by_polarity,
        category_set_size: categories.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE7: &str = "i ' ve never had bad service and the fish is fresh and delicious .####[['service','service general','positive','never had bad'],['fish','food quality','positive','fresh'],['fish','food quality','positive','delicious']]";

    #[test]
    fn parses_demo_line() {
        let ex = parse_line(TABLE7, Task::Asqp).unwrap();
        assert_eq!(ex.quads.len(), 3);
        assert!(ex.quads.iter().all(|q| q.polarity == Polarity::Positive));
        assert_eq!(ex.quads[0].aspect, Term::Span("service".into()));
        assert_eq!(ex.quads[0].opinion, Some(Term::Span("never had bad".into())));
        assert_eq!(ex.quads[1].category.as_deref(), Some("food quality"));
    }

    #[test]
    fn null_aspect() {
        let ex = parse_line("good .####[['null','restaurant general','positive','good']]", Task::Asqp).unwrap();
        assert_eq!(ex.quads.len(), 1);
        assert!(ex.quads[0].aspect.is_null());
        let ex = parse_line("good .####[['NULL','restaurant general','Positive','good']]", Task::Asqp).unwrap();
        assert!(ex.quads[0].aspect.is_null());
        assert_eq!(ex.quads[0].polarity, Polarity::Positive);
    }

    #[test]
    fn term_must_occur() {
        let err = parse_line("the pizza was great .####[['pizza','food quality','positive','bad']]", Task::Asqp)
            .unwrap_err();
        assert!(matches!(err, Error::TermNotInSentence { ref term } if term == "bad"));
    }

    #[test]
    fn substring_check_is_whitespace_and_case_tolerant() {
        parse_line("The  Pizza was great .####[['pizza','food quality','positive','GREAT']]", Task::Asqp).unwrap();
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(parse_line("no separator here", Task::Asqp), Err(Error::MalformedLine(_))));
        assert!(matches!(
            parse_line("a b .####[['a','c','positive','b']", Task::Asqp),
            Err(Error::MalformedLine(_))
        ));
        assert!(matches!(
            parse_line("a b .####[['a','c','positive']]", Task::Asqp),
            Err(Error::ArityMismatch { expected: 4, found: 3 })
        ));
        assert!(matches!(
            parse_line("a b .####[['a','c','happy','b']]", Task::Asqp),
            Err(Error::UnknownPolarity(_))
        ));
        assert!(matches!(parse_line("a b .####[]", Task::Asqp), Err(Error::MalformedLine(_))));
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ex = parse_line(TABLE7, Task::Asqp).unwrap();
        assert_eq!(serialize_example(&ex), TABLE7);

        let spaced = "it ' s ok .####[['null', 'restaurant general', 'neutral', \"it ' s ok\"]]";
        let ex = parse_line(spaced, Task::Acos).unwrap();
        assert_eq!(ex.quads[0].opinion, Some(Term::Span("it ' s ok".into())));
        assert_eq!(serialize_example(&ex), spaced);
    }

    #[test]
    fn null_opinion_serializes_in_fourth_slot() {
        let ex = AnnotatedExample::new(
            "x",
            "the food .",
            vec![Quadruplet::new("food", "food quality", Polarity::Negative, "NULL")],
            Task::Acos,
        );
        let line = serialize_example(&ex);
        assert!(line.ends_with("['food', 'food quality', 'negative', 'null']]"), "{line}");
    }

    #[test]
    fn triplet_tasks() {
        let ex = parse_line("the food was fine .####[['food', 'fine', 'neutral']]", Task::Aste).unwrap();
        assert_eq!(ex.quads[0].category, None);
        assert_eq!(ex.quads[0].opinion, Some(Term::Span("fine".into())));
        let ex = parse_line("the food was fine .####[['food', 'food quality', 'neutral']]", Task::Tasd).unwrap();
        assert_eq!(ex.quads[0].opinion, None);
        assert_eq!(serialize_example(&ex), "the food was fine .####[['food', 'food quality', 'neutral']]");
    }

    #[test]
    fn order_override() {
        let opts = ParseOptions { order: Some("at,ac,ot,sp".parse().unwrap()), ..Default::default() };
        let line = "the food was bad .####[['food', 'food quality', 'bad', 'negative']]";
        let ex = parse_line_with(line, Task::Asqp, &opts).unwrap();
        assert_eq!(ex.quads[0].polarity, Polarity::Negative);
        assert_eq!(serialize_example(&ex), line);
    }

    #[test]
    fn category_set_enforced() {
        let opts = ParseOptions {
            categories: Some(["food quality".to_string()].into_iter().collect()),
            ..Default::default()
        };
        let err = parse_line_with("nice staff .####[['staff', 'service general', 'positive', 'nice']]", Task::Asqp, &opts)
            .unwrap_err();
        assert!(matches!(err, Error::UnknownCategory(_)));
    }

    #[test]
    fn stats() {
        let empty = dataset_stats(&[]);
        assert_eq!(empty.sentence_count, 0);
        assert_eq!(empty.total_quads(), 0);
        assert_eq!(empty.category_set_size, 0);

        let ex = parse_line(TABLE7, Task::Asqp).unwrap();
        let s = dataset_stats(&[ex]);
        assert_eq!(s.sentence_count, 1);
        assert_eq!(s.count(Polarity::Positive), 3);
        assert_eq!(s.category_set_size, 2);
    }

    #[test]
    fn dataset_ids_and_line_errors() {
        let content = format!("{TABLE7}\n\ngood .####[['null','restaurant general','positive','good']]\n");
        let exs = parse_dataset(&content, "train", Task::Asqp, &ParseOptions::default()).unwrap();
        assert_eq!(exs.len(), 2);
        assert_eq!(exs[1].id, "train-3");
        let err = parse_dataset("bad line\n", "x", Task::Asqp, &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::AtLine { line: 1, .. }));
    }

    #[test]
    fn json_record_shape() {
        let ex = parse_line("good .####[['null','restaurant general','positive','good']]", Task::Asqp).unwrap();
        let v = serde_json::to_value(&ex).unwrap();
        assert_eq!(v["task"], "ASQP");
        assert_eq!(v["quads"][0]["aspect"], "null");
        let back: AnnotatedExample = serde_json::from_value(v).unwrap();
        assert_eq!(back, ex);
    }
}
