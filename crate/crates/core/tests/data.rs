use aspect_splitter::data::{
    dataset_stats, parse_dataset, parse_line, parse_line_with, serialize_example, ParseOptions, Polarity, Task,
};
use aspect_splitter::Error;
use proptest::prelude::*;

const WORDS: [&str; 10] = ["the", "pizza", "was", "great", "staff", "rude", "don't", "and", "wine", ","];

/// Independent formatter: single quotes unless the element holds one.
fn quote(s: &str) -> String {
    if s.contains('\'') {
        format!("\"{s}\"")
    } else {
        format!("'{s}'")
    }
}

fn task_strategy() -> impl Strategy<Value = Task> {
    prop_oneof![Just(Task::Asqp), Just(Task::Acos), Just(Task::Tasd), Just(Task::Aste)]
}

/// A sentence plus a well-formed annotation line for it.
fn line_strategy() -> impl Strategy<Value = (Task, String)> {
    (
        task_strategy(),
        prop::collection::vec(0..WORDS.len(), 1..12),
        prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), 0..3usize, any::<bool>()), 1..4),
        any::<bool>(),
    )
        .prop_map(|(task, words, tuples, compact)| {
            let tokens: Vec<&str> = words.iter().map(|&i| WORDS[i]).collect();
            let sep = if compact { "," } else { ", " };
            let rendered: Vec<String> = tuples
                .iter()
                .map(|(a, o, pol, null_op)| {
                    let aspect = tokens[a.index(tokens.len())];
                    let opinion = if *null_op { "NULL" } else { tokens[o.index(tokens.len())] };
                    let polarity = ["positive", "neutral", "negative"][*pol];
                    let fields = match task {
                        Task::Asqp | Task::Acos => vec![aspect, "food quality", polarity, opinion],
                        Task::Tasd => vec![aspect, "food quality", polarity],
                        Task::Aste => vec![aspect, opinion, polarity],
                    };
                    let quoted: Vec<String> = fields.iter().map(|f| quote(f)).collect();
                    format!("[{}]", quoted.join(sep))
                })
                .collect();
            (task, format!("{}####[{}]", tokens.join(" "), rendered.join(sep)))
        })
}

proptest! {
    #[test]
    fn lines_round_trip_byte_for_byte((task, line) in line_strategy()) {
        let ex = parse_line(&line, task).unwrap();
        prop_assert_eq!(serialize_example(&ex), line.clone());
        let again = parse_line(&serialize_example(&ex), task).unwrap();
        prop_assert_eq!(again, ex);
    }

    #[test]
    fn garbage_never_panics(s in ".{0,80}", task in task_strategy()) {
        let _ = parse_line(&s, task);
    }
}

#[test]
fn fixture_lines_round_trip() {
    let lines = [
        (Task::Asqp, "the pizza was great####[['pizza', 'food quality', 'positive', 'great']]"),
        (Task::Acos, "i don't like it####[['NULL', 'laptop general', 'negative', \"don't like\"]]"),
        (Task::Tasd, "nice wine , rude staff####[['wine','drinks quality','positive'],['staff','service general','negative']]"),
        (Task::Aste, "the staff was rude####[['staff', 'rude', 'negative']]"),
    ];
    for (task, line) in lines {
        let ex = parse_line(line, task).unwrap();
        assert_eq!(serialize_example(&ex), line);
    }
}

#[test]
fn implicit_terms_parse_as_null() {
    let ex = parse_line("good value####[['NULL', 'restaurant prices', 'positive', 'good value']]", Task::Asqp).unwrap();
    assert!(ex.quads[0].aspect.is_null());
    assert_eq!(ex.quads[0].opinion.as_ref().unwrap().as_span(), Some("good value"));
}

#[test]
fn malformed_lines_are_typed_errors() {
    let cases: [(&str, fn(&Error) -> bool); 5] = [
        ("no separator here", |e| matches!(e, Error::MalformedLine(_))),
        ("pizza####[['pizza', 'food quality', 'positive']]", |e| matches!(e, Error::ArityMismatch { expected: 4, found: 3 })),
        ("pizza####[['pizza', 'food quality', 'great', 'great']]", |e| matches!(e, Error::UnknownPolarity(_))),
        ("pizza####[['pasta', 'food quality', 'positive', 'NULL']]", |e| matches!(e, Error::TermNotInSentence { .. })),
        ("pizza####[['pizza', 'food quality', 'positive', 'NULL'", |e| matches!(e, Error::MalformedLine(_))),
    ];
    for (line, ok) in cases {
        let err = parse_line(line, Task::Asqp).unwrap_err();
        assert!(ok(&err), "{line}: {err:?}");
    }
}

#[test]
fn declared_categories_are_enforced() {
    let opts = ParseOptions { categories: Some(["food quality".to_string()].into()), ..Default::default() };
    let line = "pizza####[['pizza', 'food prices', 'positive', 'NULL']]";
    assert!(matches!(parse_line_with(line, Task::Asqp, &opts), Err(Error::UnknownCategory(_))));
}

#[test]
fn dataset_errors_carry_line_numbers_and_stats_count_polarities() {
    let content = "a pizza####[['pizza', 'food quality', 'positive', 'NULL']]\n\nbad line\n";
    match parse_dataset(content, "train", Task::Asqp, &ParseOptions::default()) {
        Err(Error::AtLine { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected AtLine, got {other:?}"),
    }
    let content = "a pizza , rude staff####[['pizza', 'food quality', 'positive', 'NULL'], ['staff', 'service general', 'negative', 'rude']]\n";
    let examples = parse_dataset(content, "train", Task::Asqp, &ParseOptions::default()).unwrap();
    let stats = dataset_stats(&examples);
    assert_eq!(stats.sentence_count, 1);
    assert_eq!((stats.count(Polarity::Positive), stats.count(Polarity::Neutral), stats.count(Polarity::Negative)), (1, 0, 1));
}
