//! Bracketed-action extraction from free-text model output.
//!
//! Every game mandates bracketed action tokens ("[call]", "[play 2]",
//! "[12]", "[Offer: 3 Sheep -> 2 Ore]", "[Propose] $1.20"). Models often
//! restate their options before committing, so extraction takes the LAST
//! well-formed token in the response that matches a legal one.

/// Template sentinel used by the negotiation game's legal-action set.
pub const OFFER_TEMPLATE: &str = "[Offer: ... -> ...]";
/// Template sentinel used by the two-dollar game's legal-action set.
pub const PROPOSE_TEMPLATE: &str = "[Propose] $X.XX";

pub const RESOURCE_NAMES: [&str; 5] = ["Wheat", "Wood", "Sheep", "Brick", "Ore"];

/// A parsed resource bundle: quantity per resource kind, indexed as in
/// [`RESOURCE_NAMES`].
pub type Bundle = [u32; 5];

/// Extract the action the response commits to, if any.
///
/// Keyword tokens match case-insensitively with collapsed whitespace;
/// template tokens ([`OFFER_TEMPLATE`], [`PROPOSE_TEMPLATE`]) match
/// structurally and yield a canonicalized concrete token. Returns `None`
/// when no bracketed token matches the legal set.
pub fn extract_action(raw: &str, legal: &[String]) -> Option<String> {
    let mut last: Option<String> = None;
    for (token, after) in bracketed_tokens(raw) {
        if let Some(canonical) = match_token(&token, after, legal) {
            last = Some(canonical);
        }
    }
    last
}

/// All `[...]` segments in `raw`, each paired with the text that follows it
/// (needed for "[Propose] $X.XX", whose amount sits outside the bracket).
fn bracketed_tokens(raw: &str) -> Vec<(String, &str)> {
    let mut out = Vec::new();
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            if let Some(end) = raw[i + 1..].find(|c| c == ']' || c == '[') {
                let end_idx = i + 1 + end;
                if bytes[end_idx] == b']' {
                    let token = &raw[i..=end_idx];
                    out.push((token.to_string(), &raw[end_idx + 1..]));
                    i = end_idx + 1;
                    continue;
                }
                // Nested '[': restart scanning from it.
                i = end_idx;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn match_token(token: &str, after: &str, legal: &[String]) -> Option<String> {
    for entry in legal {
        match entry.as_str() {
            OFFER_TEMPLATE => {
                if let Some(canonical) = parse_offer(token) {
                    return Some(canonical);
                }
            }
            PROPOSE_TEMPLATE => {
                if norm(token) == "[propose]" {
                    if let Some(cents) = parse_amount(after) {
                        return Some(format_propose(cents));
                    }
                }
            }
            lit => {
                if norm(token) == norm(lit) {
                    return Some(lit.to_string());
                }
            }
        }
    }
    None
}

/// Lowercase with all whitespace removed; both sides of a keyword
/// comparison are normalized, so "[play 1]" still matches "[Play  1]".
fn norm(token: &str) -> String {
    token
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect()
}

/// Parse a dollar amount "$X.XX" appearing shortly after a [Propose] token.
/// Returns the amount in integer cents.
pub fn parse_amount(after: &str) -> Option<u32> {
    let dollar = after.find('$')?;
    // Only accept an amount adjacent to the token.
    if !after[..dollar].trim().is_empty() {
        return None;
    }
    let rest = &after[dollar + 1..];
    let mut chars = rest.char_indices();
    let mut int_end = 0;
    for (i, c) in chars.by_ref() {
        if c.is_ascii_digit() {
            int_end = i + 1;
        } else {
            break;
        }
    }
    if int_end == 0 {
        return None;
    }
    let dollars: u32 = rest[..int_end].parse().ok()?;
    let mut cents = 0;
    if rest[int_end..].starts_with('.') {
        let frac = &rest[int_end + 1..];
        let frac_digits: String = frac.chars().take_while(|c| c.is_ascii_digit()).collect();
        if frac_digits.len() != 2 {
            return None;
        }
        cents = frac_digits.parse::<u32>().ok()?;
    }
    Some(dollars * 100 + cents)
}

pub fn format_propose(cents: u32) -> String {
    format!("[Propose] ${}.{:02}", cents / 100, cents % 100)
}

/// Parse "[Offer: 3 Sheep, 2 Ore -> 5 Brick]" into (offered, requested)
/// bundles and return the canonicalized token.
pub fn parse_offer(token: &str) -> Option<String> {
    let (give, get) = parse_offer_bundles(token)?;
    Some(format_offer(&give, &get))
}

pub fn parse_offer_bundles(token: &str) -> Option<(Bundle, Bundle)> {
    let inner = token.strip_prefix('[')?.strip_suffix(']')?;
    let rest = strip_keyword(inner, "offer")?;
    let rest = rest.trim_start().strip_prefix(':')?;
    let (give_text, get_text) = rest.split_once("->")?;
    let give = parse_bundle(give_text)?;
    let get = parse_bundle(get_text)?;
    if bundle_total(&give) == 0 || bundle_total(&get) == 0 {
        return None;
    }
    Some((give, get))
}

fn strip_keyword<'a>(text: &'a str, keyword: &str) -> Option<&'a str> {
    let trimmed = text.trim_start();
    if trimmed.len() >= keyword.len() && trimmed[..keyword.len()].eq_ignore_ascii_case(keyword) {
        Some(&trimmed[keyword.len()..])
    } else {
        None
    }
}

fn parse_bundle(text: &str) -> Option<Bundle> {
    let mut bundle = [0u32; 5];
    for item in text.split(',') {
        let mut parts = item.split_whitespace();
        let qty: u32 = parts.next()?.parse().ok()?;
        let name = parts.next()?;
        if parts.next().is_some() || qty == 0 {
            return None;
        }
        let idx = RESOURCE_NAMES
            .iter()
            .position(|r| r.eq_ignore_ascii_case(name))?;
        bundle[idx] = bundle[idx].checked_add(qty)?;
    }
    Some(bundle)
}

pub fn bundle_total(bundle: &Bundle) -> u32 {
    bundle.iter().sum()
}

pub fn format_bundle(bundle: &Bundle) -> String {
    let mut parts = Vec::new();
    for (i, &qty) in bundle.iter().enumerate() {
        if qty > 0 {
            parts.push(format!("{} {}", qty, RESOURCE_NAMES[i]));
        }
    }
    parts.join(", ")
}

pub fn format_offer(give: &Bundle, get: &Bundle) -> String {
    format!("[Offer: {} -> {}]", format_bundle(give), format_bundle(get))
}
