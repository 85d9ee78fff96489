//! Mapping of labels (stringified keys, container names) onto single path
//! components, and of text into URI segments.

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};

/// Characters escaped when a label becomes a directory name.
const PATH_COMPONENT: &AsciiSet = &CONTROLS.add(b'%').add(b'/').add(b'\\');

/// Characters escaped inside a location URI segment.
pub(crate) const URI_SEGMENT: &AsciiSet = &CONTROLS
    .add(b'%')
    .add(b'/')
    .add(b'?')
    .add(b'&')
    .add(b'#')
    .add(b' ');

/// Like [`URI_SEGMENT`] but keeps `/` so relative paths stay readable.
pub(crate) const URI_PATH: &AsciiSet = &CONTROLS.add(b'%').add(b'?').add(b'&').add(b'#').add(b' ');

pub fn encode_component(label: &str) -> String {
    let s = utf8_percent_encode(label, PATH_COMPONENT).to_string();
    match s.as_str() {
        "." => "%2E".to_string(),
        ".." => "%2E%2E".to_string(),
        _ => s,
    }
}

pub fn decode(s: &str) -> Option<String> {
    percent_decode_str(s).decode_utf8().ok().map(|c| c.into_owned())
}

pub(crate) fn encode_with(s: &str, set: &'static AsciiSet) -> String {
    utf8_percent_encode(s, set).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_round_trip() {
        for label in ["od:oper:0001:20231201:1200", "a/b", "..", ".", "50%", "x\\y"] {
            let enc = encode_component(label);
            assert!(!enc.contains('/'));
            assert!(enc != "." && enc != "..");
            assert_eq!(decode(&enc).unwrap(), label);
        }
        assert_eq!(encode_component("od:oper"), "od:oper");
    }
}
