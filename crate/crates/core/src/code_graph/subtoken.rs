/// Splits an identifier into lowercase pieces at underscores, lower-to-upper
/// case changes, and the last capital of an acronym that precedes a
/// lowercase run (`parseHTTPResponse` gives `parse`, `http`, `response`).
///
/// Identifiers that do not split into at least two pieces yield nothing,
/// since the single piece would duplicate the token itself.
pub fn split_identifier(ident: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    for part in ident.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let prev = chars[i - 1];
            let cur = chars[i];
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (cur.is_uppercase() && (prev.is_lowercase() || prev.is_ascii_digit()))
                || (cur.is_uppercase() && prev.is_uppercase() && next_lower);
            if boundary {
                pieces.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        pieces.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    if pieces.len() < 2 {
        Vec::new()
    } else {
        pieces
    }
}
