//! `{name}` placeholder templates shared by directives and prompts.

/// Names of `{identifier}` placeholders in order of appearance. Braces around
/// anything else (JSON, code) are left alone.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_name(&after[..close]) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Substitutes every known placeholder in one left-to-right pass, so text
/// inserted for one slot is never scanned for further placeholders.
/// Unknown placeholders are copied through unchanged.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let slot = after
            .find('}')
            .map(|close| &after[..close])
            .filter(|name| is_name(name))
            .and_then(|name| values.iter().find(|(k, _)| *k == name).map(|(_, v)| (name.len(), *v)));
        match slot {
            Some((len, value)) => {
                out.push_str(&rest[..open]);
                out.push_str(value);
                rest = &after[len + 1..];
            }
            None => {
                out.push_str(&rest[..open + 1]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
