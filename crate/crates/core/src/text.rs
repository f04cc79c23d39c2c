//! Character-level rules shared by validation and the XML writer.

/// Whether `c` may appear in an XML 1.0 document.
pub fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..)
}

/// Whether every character of `s` survives an XML round trip.
pub fn is_xml_safe(s: &str) -> bool {
    s.chars().all(is_xml_char)
}

/// Lowercase ASCII letters, digits and single underscores, starting with a letter.
pub fn is_snake_case(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    !s.ends_with('_') && !s.contains("__") && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}
