use proptest::prelude::*;
use pseudogate_core::detector::RegexRules;
use pseudogate_core::{Detector, EntityClass, Gazetteer};

const CITIES: [&str; 3] = ["Palo Alto", "Chicago", "Alto"];
const FILLER: [&str; 8] = ["in", "the", "weather", "Chicagoland", "palo", "x", "altos", "near"];
const SEPS: [&str; 5] = [" ", ", ", ". ", "-", "\n"];

fn detector() -> Detector {
    let g = Gazetteer::from_entries(EntityClass::Gpe, CITIES).unwrap();
    Detector::new(vec![g], RegexRules::new(false, false)).unwrap()
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

/// Every case-insensitive, word-bounded occurrence of each entry, then greedy
/// longest-first selection of non-overlapping ones.
fn brute_force(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let lower: Vec<char> = chars.iter().map(|c| c.to_lowercase().next().unwrap()).collect();
    let mut hits = Vec::new();
    for entry in CITIES {
        let e: Vec<char> = entry.to_lowercase().chars().collect();
        for s in 0..chars.len() {
            let end = s + e.len();
            if end > chars.len() || lower[s..end] != e[..] {
                continue;
            }
            let left_ok = s == 0 || !is_word(chars[s - 1]);
            let right_ok = end == chars.len() || !is_word(chars[end]);
            if left_ok && right_ok {
                hits.push((s, end));
            }
        }
    }
    hits.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for h in hits {
        if kept.iter().all(|k| h.1 <= k.0 || k.1 <= h.0) {
            kept.push(h);
        }
    }
    kept.sort();
    kept
}

fn recase(s: &str, mode: u8) -> String {
    match mode % 3 {
        0 => s.to_string(),
        1 => s.to_lowercase(),
        _ => s.to_uppercase(),
    }
}

fn text_strategy() -> impl Strategy<Value = (String, Vec<(usize, usize)>)> {
    prop::collection::vec((0usize..11, 0u8..3, 0usize..SEPS.len()), 0..14).prop_map(|parts| {
        let mut text = String::new();
        let mut planted = Vec::new();
        for (i, (pick, case, sep)) in parts.into_iter().enumerate() {
            if i > 0 {
                text.push_str(SEPS[sep]);
            }
            let start = text.chars().count();
            if pick < CITIES.len() {
                let word = recase(CITIES[pick], case);
                text.push_str(&word);
                planted.push((start, start + word.chars().count()));
            } else {
                text.push_str(FILLER[pick - CITIES.len()]);
            }
        }
        (text, planted)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn spans_are_disjoint_sorted_and_valid((text, _) in text_strategy()) {
        let d = detector().detect_entities(&text);
        for w in d.spans.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for s in &d.spans {
            prop_assert!(s.validate(&text).is_ok());
        }
    }

    #[test]
    fn detection_is_deterministic((text, _) in text_strategy()) {
        let det = detector();
        prop_assert_eq!(det.detect_entities(&text), det.detect_entities(&text));
    }

    #[test]
    fn planted_entries_are_covered((text, planted) in text_strategy()) {
        let d = detector().detect_entities(&text);
        for (s, e) in planted {
            prop_assert!(
                d.spans.iter().any(|sp| sp.start <= s && e <= sp.end),
                "planted {}..{} in {:?} not covered by {:?}", s, e, text, d.spans
            );
        }
    }

    #[test]
    fn matches_brute_force_oracle((text, _) in text_strategy()) {
        let got: Vec<(usize, usize)> = detector().detect_entities(&text).spans.iter().map(|s| (s.start, s.end)).collect();
        prop_assert_eq!(got, brute_force(&text));
    }
}

#[test]
fn palo_alto_is_one_span() {
    let d = detector().detect_entities("What's the weather in Palo Alto?");
    assert_eq!(d.spans.len(), 1);
    assert_eq!((d.spans[0].text.as_str(), d.spans[0].start, d.spans[0].end), ("Palo Alto", 22, 31));
}

#[test]
fn regex_layer_finds_email_and_phone() {
    let det = Detector::new(vec![], RegexRules::new(true, true)).unwrap();
    let d = det.detect_entities("mail jay.doe@example.com or call (415) 555-0134 today");
    let classes: Vec<_> = d.spans.iter().map(|s| (s.class.clone(), s.text.as_str())).collect();
    assert_eq!(
        classes,
        vec![(EntityClass::Email, "jay.doe@example.com"), (EntityClass::Phone, "(415) 555-0134")]
    );
}
