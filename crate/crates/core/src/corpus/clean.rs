//! Boilerplate removal: a small forgiving HTML scanner that keeps visible
//! main-content text.
//!
//! Dropped subtrees: `head`, `script`, `style`, `noscript`, `nav`, `header`,
//! `footer`, `aside`, `form`, `iframe`, `svg`, `template`, and any element whose
//! `class` or `id` names an ad, banner, menu, sidebar or similar chrome. Block
//! elements split the text into blocks; a block repeated verbatim later on the
//! page is dropped. `<sup>` and `<sub>` become `^` and `_` so exponents and
//! indices stay readable. Entities are decoded, whitespace collapses to single
//! spaces, and a `<` that would read as a tag gets a space after it, so the
//! output is a fixed point.

const DROPPED_TAGS: [&str; 13] = [
    "head", "script", "style", "noscript", "nav", "header", "footer", "aside", "form", "iframe", "svg", "template",
    "button",
];
const RAW_TEXT_TAGS: [&str; 2] = ["script", "style"];
const VOID_TAGS: [&str; 14] = [
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr",
];
const BLOCK_TAGS: [&str; 27] = [
    "p", "div", "br", "li", "ul", "ol", "h1", "h2", "h3", "h4", "h5", "h6", "tr", "td", "th", "table", "section",
    "article", "main", "blockquote", "pre", "dd", "dt", "dl", "figure", "figcaption", "hr",
];
const CHROME_WORDS: [&str; 19] = [
    "ad", "ads", "advert", "advertisement", "sponsor", "sponsored", "banner", "cookie", "promo", "menu", "nav",
    "navbar", "navigation", "toolbar", "sidebar", "breadcrumb", "share", "social", "popup",
];

struct Tag {
    name: String,
    closing: bool,
    self_closing: bool,
    chrome: bool,
}

fn attr_is_chrome(value: &str) -> bool {
    value
        .to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .any(|w| CHROME_WORDS.contains(&w))
}

/// Parses the tag starting at `s[0] == '<'`; returns it and its byte length.
fn parse_tag(s: &str) -> (Option<Tag>, usize) {
    let bytes = s.as_bytes();
    // Find the closing '>' outside quotes.
    let mut quote: Option<u8> = None;
    let mut end = s.len();
    for (i, &b) in bytes.iter().enumerate().skip(1) {
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None if b == b'"' || b == b'\'' => quote = Some(b),
            None if b == b'>' => {
                end = i + 1;
                break;
            }
            None => {}
        }
    }
    let inner = s[1..end].trim_end_matches('>');
    let closing = inner.starts_with('/');
    let inner = inner.trim_start_matches('/');
    let name_len = inner.find(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == ':')).unwrap_or(inner.len());
    let name = inner[..name_len].to_ascii_lowercase();
    if name.is_empty() {
        return (None, end);
    }
    let attrs = &inner[name_len..];
    let mut chrome = false;
    for key in ["class", "id", "role"] {
        let lower = attrs.to_ascii_lowercase();
        let mut from = 0;
        while let Some(pos) = lower[from..].find(key) {
            let at = from + pos;
            from = at + key.len();
            let before_ok = at == 0 || !lower.as_bytes()[at - 1].is_ascii_alphanumeric();
            let rest = lower[from..].trim_start();
            if !before_ok || !rest.starts_with('=') {
                continue;
            }
            let rest = rest[1..].trim_start();
            let value = match rest.chars().next() {
                Some(q @ ('"' | '\'')) => rest[1..].split(q).next().unwrap_or(""),
                _ => rest.split(|c: char| c.is_whitespace() || c == '/').next().unwrap_or(""),
            };
            chrome |= if key == "role" { matches!(value, "navigation" | "banner" | "contentinfo") } else { attr_is_chrome(value) };
        }
    }
    let self_closing = inner.trim_end().ends_with('/') || VOID_TAGS.contains(&name.as_str());
    (Some(Tag { name, closing, self_closing, chrome }), end)
}

fn starts_tag(rest: &str) -> bool {
    let mut chars = rest.chars();
    chars.next() == Some('<') && matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '/' || c == '!' || c == '?')
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack.to_ascii_lowercase().find(needle)
}

fn finish_block(block: &str) -> String {
    let mut text = block.to_owned();
    loop {
        let next = html_escape::decode_html_entities(&text).into_owned();
        if next == text {
            break;
        }
        text = next;
    }
    let mut guarded = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        guarded.push(c);
        if c == '<' && matches!(chars.peek(), Some(n) if n.is_ascii_alphabetic() || matches!(n, '/' | '!' | '?')) {
            guarded.push(' ');
        }
    }
    guarded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Visible main-content text of an HTML or plain-text body.
pub fn clean_boilerplate(raw: &str) -> String {
    let mut blocks: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut stack: Vec<(String, bool)> = Vec::new();
    let mut dropped_depth = 0usize;
    let mut i = 0;
    let flush = |current: &mut String, blocks: &mut Vec<String>| {
        let block = finish_block(current);
        if !block.is_empty() {
            blocks.push(block);
        }
        current.clear();
    };
    while i < raw.len() {
        let rest = &raw[i..];
        let Some(lt) = rest.find('<') else {
            if dropped_depth == 0 {
                current.push_str(rest);
            }
            break;
        };
        if dropped_depth == 0 {
            current.push_str(&rest[..lt]);
        }
        i += lt;
        let rest = &raw[i..];
        if !starts_tag(rest) {
            if dropped_depth == 0 {
                current.push('<');
            }
            i += 1;
            continue;
        }
        if rest.starts_with("<!--") {
            i += rest.find("-->").map_or(rest.len(), |e| e + 3);
            continue;
        }
        if rest.starts_with("<!") || rest.starts_with("<?") {
            i += rest.find('>').map_or(rest.len(), |e| e + 1);
            continue;
        }
        let (tag, len) = parse_tag(rest);
        i += len;
        let Some(tag) = tag else { continue };
        let name = tag.name.as_str();
        if BLOCK_TAGS.contains(&name) && dropped_depth == 0 {
            flush(&mut current, &mut blocks);
        }
        if tag.closing {
            if let Some(pos) = stack.iter().rposition(|(n, _)| n == name) {
                for (_, dropped) in stack.drain(pos..) {
                    if dropped {
                        dropped_depth -= 1;
                    }
                }
            }
            continue;
        }
        if RAW_TEXT_TAGS.contains(&name) && !tag.self_closing {
            let body = &raw[i..];
            let close = find_ci(body, &format!("</{name}"));
            i += close.map_or(body.len(), |c| c + body[c..].find('>').map_or(body.len() - c, |g| g + 1));
            continue;
        }
        if tag.self_closing {
            continue;
        }
        if dropped_depth == 0 {
            match name {
                "sup" => current.push('^'),
                "sub" => current.push('_'),
                _ => {}
            }
        }
        let dropped = DROPPED_TAGS.contains(&name) || tag.chrome;
        if dropped {
            dropped_depth += 1;
        }
        stack.push((tag.name, dropped));
    }
    if dropped_depth == 0 {
        flush(&mut current, &mut blocks);
    }
    let mut seen = std::collections::HashSet::new();
    blocks.retain(|b| seen.insert(b.clone()));
    blocks.join(" ")
}

/// Text of the first `<title>` element, entity-decoded; empty when absent.
pub fn html_title(html: &str) -> String {
    let lower = html.to_ascii_lowercase();
    let Some(open) = lower.find("<title") else {
        return String::new();
    };
    let Some(gt) = lower[open..].find('>') else {
        return String::new();
    };
    let start = open + gt + 1;
    let end = lower[start..].find("</title").map_or(html.len(), |e| start + e);
    clean_boilerplate(&html[start..end])
}
