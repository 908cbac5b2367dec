use unicode_normalization::UnicodeNormalization;

/// Marks split into standalone tokens, beyond ASCII punctuation.
const EXTRA_PUNCT: &[char] = &[
    '¿', '¡', '«', '»', '…', '“', '”', '‘', '’', '„', '–', '—', '·', '‹', '›',
];

pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCT.contains(&c)
}

/// NFC-normalizes, lowercases, isolates punctuation and collapses whitespace.
///
/// Idempotent: the output is a fixed point.
pub fn normalize(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase().nfc().collect();
    let mut out = String::with_capacity(lowered.len() + 8);
    let mut pending_space = false;
    for c in lowered.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if is_punct(c) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push(c);
            pending_space = true;
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

pub fn tokenize(normalized: &str) -> impl Iterator<Item = &str> {
    normalized.split(' ').filter(|t| !t.is_empty())
}
