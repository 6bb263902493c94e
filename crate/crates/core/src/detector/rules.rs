use regex::Regex;

use crate::model::EntityClass;
use crate::text;

const EMAIL: &str = r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}";
const PHONE: &str = r"(?:\+\d{1,3}[\s.\-]?)?(?:\(\d{3}\)\s?|\d{3}[\s.\-]?)\d{3}[\s.\-]?\d{4}";

/// Pattern layer for structured identifiers.
#[derive(Debug, Clone)]
pub struct RegexRules {
    email: Option<Regex>,
    phone: Option<Regex>,
}

impl RegexRules {
    pub fn new(email: bool, phone: bool) -> Self {
        Self {
            email: email.then(|| Regex::new(EMAIL).expect("email pattern")),
            phone: phone.then(|| Regex::new(PHONE).expect("phone pattern")),
        }
    }

    pub fn any_enabled(&self) -> bool {
        self.email.is_some() || self.phone.is_some()
    }

    /// Word-bounded matches as `(start, end, class)` in char offsets.
    pub fn find(&self, haystack: &str) -> Vec<(usize, usize, EntityClass)> {
        if !self.any_enabled() {
            return Vec::new();
        }
        let table = text::byte_to_char_table(haystack);
        let chars: Vec<char> = haystack.chars().collect();
        let mut out = Vec::new();
        let layers = [(&self.email, EntityClass::Email), (&self.phone, EntityClass::Phone)];
        for (re, class) in layers {
            let Some(re) = re else { continue };
            for m in re.find_iter(haystack) {
                let (start, end) = (table[m.start()], table[m.end()]);
                if text::is_word_bounded(&chars, start, end) {
                    out.push((start, end, class.clone()));
                }
            }
        }
        out
    }
}
