//! Character-level helpers shared by detection, pseudonymization and restoration.
//!
//! All offsets in this crate are counted in Unicode scalar values. Case-insensitive
//! comparison folds one `char` to one `char` so that a folded string always has the
//! same length as its source, which keeps offsets valid across folding.

/// A letter or digit. Word boundaries are transitions between word and non-word chars.
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Single-char case fold. Characters whose lowercase form expands to several chars
/// (e.g. `'İ'`) are kept as-is.
pub fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

pub fn fold(s: &str) -> String {
    s.chars().map(fold_char).collect()
}

pub fn fold_chars(s: &str) -> Vec<char> {
    s.chars().map(fold_char).collect()
}

pub fn eq_ci(a: &str, b: &str) -> bool {
    a.chars().count() == b.chars().count()
        && a.chars().zip(b.chars()).all(|(x, y)| fold_char(x) == fold_char(y))
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Slice `s` by char offsets. Panics if the range is out of bounds.
pub fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let b_start = indices.nth(start).expect("start out of bounds");
    let b_end = if end == start {
        b_start
    } else {
        indices.nth(end - start - 1).expect("end out of bounds")
    };
    &s[b_start..b_end]
}

/// Maps byte offsets of `s` to char offsets. The returned table has `s.len() + 1`
/// entries; non-boundary bytes map to the char that contains them.
pub fn byte_to_char_table(s: &str) -> Vec<usize> {
    let mut table = vec![0; s.len() + 1];
    let mut ci = 0;
    for (bi, ch) in s.char_indices() {
        for slot in table.iter_mut().skip(bi).take(ch.len_utf8()) {
            *slot = ci;
        }
        ci += 1;
    }
    table[s.len()] = ci;
    table
}

/// True when a match occupying `chars[start..end]` is not abutted by a word char on
/// either side.
pub fn is_word_bounded(chars: &[char], start: usize, end: usize) -> bool {
    let left_ok = start == 0 || !is_word_char(chars[start - 1]);
    let right_ok = end >= chars.len() || !is_word_char(chars[end]);
    left_ok && right_ok
}

/// Case-insensitive comparison of `hay[at..at + needle.len()]` against an already
/// folded needle.
pub fn matches_folded_at(hay: &[char], at: usize, folded_needle: &[char]) -> bool {
    at + folded_needle.len() <= hay.len()
        && hay[at..at + folded_needle.len()]
            .iter()
            .zip(folded_needle)
            .all(|(h, n)| fold_char(*h) == *n)
}

/// All word-bounded, case-insensitive, non-overlapping occurrences of `needle`
/// in `hay`, scanning left to right. Returns char start offsets.
pub fn find_word_bounded_ci(hay: &[char], needle: &str) -> Vec<usize> {
    let folded = fold_chars(needle);
    let mut out = Vec::new();
    if folded.is_empty() || folded.len() > hay.len() {
        return out;
    }
    let mut i = 0;
    while i + folded.len() <= hay.len() {
        if matches_folded_at(hay, i, &folded) && is_word_bounded(hay, i, i + folded.len()) {
            out.push(i);
            i += folded.len();
        } else {
            i += 1;
        }
    }
    out
}

/// Case-insensitive substring test (not word-bounded).
pub fn contains_ci(hay: &str, needle: &str) -> bool {
    let hay = fold_chars(hay);
    let needle = fold_chars(needle);
    if needle.is_empty() {
        return true;
    }
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Surface casing of a matched token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Casing {
    /// At least two cased letters, all uppercase.
    AllCaps,
    /// Every cased letter is lowercase.
    Lower,
    /// Each word starts uppercase, the rest lowercase.
    Title,
    Mixed,
}

pub fn casing_of(s: &str) -> Casing {
    let cased: Vec<char> = s.chars().filter(|c| c.is_uppercase() || c.is_lowercase()).collect();
    if cased.is_empty() || cased.iter().all(|c| c.is_lowercase()) {
        return Casing::Lower;
    }
    if cased.len() >= 2 && cased.iter().all(|c| c.is_uppercase()) {
        return Casing::AllCaps;
    }
    if title_case(s) == s {
        return Casing::Title;
    }
    Casing::Mixed
}

/// Uppercase the first cased letter of each word and lowercase the rest.
pub fn title_case(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut at_word_start = true;
    for c in s.chars() {
        if is_word_char(c) {
            if at_word_start {
                out.extend(c.to_uppercase());
            } else {
                out.extend(c.to_lowercase());
            }
            at_word_start = false;
        } else {
            out.push(c);
            at_word_start = true;
        }
    }
    out
}
