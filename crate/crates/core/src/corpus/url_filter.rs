//! URL allow/deny rules.
//!
//! Patterns are globs (`*` any run, `?` one character) matched against
//! `host + path` of the URL, case-insensitively. A rules file has one pattern
//! per line, `!` marks a deny rule and `#` starts a comment.

use std::path::Path;

use url::Url;

pub const DEFAULT_RULES: &str = include_str!("../../fixtures/url_rules.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UrlVerdict {
    Allowed,
    Denied,
    /// Not an absolute http(s) URL with a host.
    Malformed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UrlRules {
    pub allow: Vec<String>,
    pub deny: Vec<String>,
}

impl UrlRules {
    pub fn parse(text: &str) -> Self {
        let mut rules = Self::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            match line.strip_prefix('!') {
                Some(deny) => rules.deny.push(deny.trim().to_owned()),
                None => rules.allow.push(line.to_owned()),
            }
        }
        rules
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn defaults() -> Self {
        Self::parse(DEFAULT_RULES)
    }

    pub fn verdict(&self, url: &str) -> UrlVerdict {
        url_verdict(url, &self.allow, &self.deny)
    }
}

/// `host + path` of an http(s) URL, or `None` if it is malformed.
pub fn match_target(url: &str) -> Option<String> {
    if url.chars().any(char::is_whitespace) {
        return None;
    }
    let parsed = Url::parse(url).ok()?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return None;
    }
    let host = parsed.host_str().filter(|h| !h.is_empty())?;
    Some(format!("{}{}", host.to_ascii_lowercase(), parsed.path()))
}

/// Glob match with `*` and `?`, ASCII case-insensitive.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().map(|c| c.to_ascii_lowercase()).collect();
    let t: Vec<char> = text.chars().map(|c| c.to_ascii_lowercase()).collect();
    let (mut pi, mut ti) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            backtrack = Some((pi, ti));
            pi += 1;
        } else if let Some((bp, bt)) = backtrack {
            pi = bp + 1;
            ti = bt + 1;
            backtrack = Some((bp, bt + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

pub fn url_verdict(url: &str, allow: &[String], deny: &[String]) -> UrlVerdict {
    let Some(target) = match_target(url) else {
        return UrlVerdict::Malformed;
    };
    if deny.iter().any(|d| glob_match(d, &target)) {
        return UrlVerdict::Denied;
    }
    if allow.is_empty() || allow.iter().any(|a| glob_match(a, &target)) {
        UrlVerdict::Allowed
    } else {
        UrlVerdict::Denied
    }
}

pub fn filter_url(url: &str, allow: &[String], deny: &[String]) -> bool {
    url_verdict(url, allow, deny) == UrlVerdict::Allowed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn deny_listed_benchmark_host() {
        let r = UrlRules::defaults();
        assert_eq!(r.verdict("https://huggingface.co/datasets/gsm8k/main"), UrlVerdict::Denied);
        assert_eq!(r.verdict("https://en.wikipedia.org/wiki/Euler"), UrlVerdict::Allowed);
    }

    #[test]
    fn allow_and_deny_semantics() {
        assert!(filter_url("https://a.org/x", &[], &[]));
        assert!(!filter_url("https://a.org/x", &v(&["*a.org/*"]), &v(&["a.org/x"])));
        assert!(filter_url("https://a.org/x", &v(&["*a.org/*"]), &[]));
        assert!(!filter_url("https://b.org/x", &v(&["*a.org/*"]), &[]));
    }

    #[test]
    fn malformed_urls_are_rejected() {
        for bad in ["ht!tp//broken url/x", "ftp://a.org/x", "notaurl", "", "https://"] {
            assert_eq!(url_verdict(bad, &[], &[]), UrlVerdict::Malformed, "{bad}");
        }
    }

    #[test]
    fn glob_basics() {
        assert!(glob_match("*.org/w?ki/*", "en.ORG/wiki/x"));
        assert!(glob_match("*", ""));
        assert!(!glob_match("a*b", "ac"));
        assert!(glob_match("a*b*c", "axxbyyc"));
    }

    #[test]
    fn rules_file_parsing() {
        let r = UrlRules::parse("# c\n\n  !*bad.com/*\n*good.org/*\n");
        assert_eq!(r.deny, v(&["*bad.com/*"]));
        assert_eq!(r.allow, v(&["*good.org/*"]));
    }
}
