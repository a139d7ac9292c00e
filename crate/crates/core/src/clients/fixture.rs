//! A saved slice of the web on disk.
//!
//! The directory holds `manifest.json`, a list of `{"url", "title", "file"}`
//! entries, plus the referenced HTML files. Every query returns all entries in
//! manifest order. The manifest title is what search reports; the fetched
//! page carries the title found in its own `<title>` element.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::scripted::StaticWeb;
use crate::corpus::html_title;

#[derive(Debug, Deserialize)]
struct Entry {
    url: String,
    title: String,
    file: String,
}

pub fn load_fixture_web(dir: &Path) -> std::io::Result<StaticWeb> {
    let manifest = fs::read_to_string(dir.join("manifest.json"))?;
    let entries: Vec<Entry> = serde_json::from_str(&manifest)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    let mut web = StaticWeb::default();
    for e in entries {
        let body = fs::read_to_string(dir.join(&e.file))?;
        web.add_page(&e.url, &e.title, &body);
        if let Some(page) = web.pages.get_mut(&e.url) {
            page.title = html_title(&body);
        }
    }
    Ok(web)
}
