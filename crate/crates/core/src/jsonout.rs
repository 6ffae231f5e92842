//! Locating the JSON object inside free-form LLM output.
//!
//! Models wrap JSON in code fences or prefix it with reasoning. The helpers
//! here are total: any input yields either an object or `None`.

use serde_json::{Map, Value};

const MAX_ATTEMPTS: usize = 256;

/// Returns the last complete top-level JSON object in `text`.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    let trimmed = strip_fences(text.trim());
    if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(trimmed) {
        return Some(map);
    }
    let mut found = None;
    let mut pos = 0;
    let mut attempts = 0;
    while let Some(offset) = trimmed[pos..].find('{') {
        if attempts >= MAX_ATTEMPTS {
            break;
        }
        attempts += 1;
        let start = pos + offset;
        let mut stream = serde_json::Deserializer::from_str(&trimmed[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                found = Some(map);
                pos = start + stream.byte_offset();
            }
            _ => pos = start + 1,
        }
    }
    found
}

fn strip_fences(text: &str) -> &str {
    let Some(rest) = text.strip_prefix("```") else {
        return text;
    };
    // Drop an optional language tag on the opening fence.
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_fenced_and_prefixed() {
        assert!(extract_json_object(r#"{"a": 1}"#).is_some());
        let fenced = "```json\n{\"label\": \"Intel\"}\n```";
        assert_eq!(extract_json_object(fenced).unwrap()["label"], "Intel");
        let cot = "Step 1: think about {founders}.\nDone.\n{\"predicates\": [\"x\"]}";
        assert_eq!(extract_json_object(cot).unwrap()["predicates"][0], "x");
    }

    #[test]
    fn last_object_wins_and_nested_objects_stay_whole() {
        let text = r#"e.g. {"label": "A"} then {"label": "B", "meta": {"k": 1}} trailing"#;
        let map = extract_json_object(text).unwrap();
        assert_eq!(map["label"], "B");
        assert!(map["meta"].is_object());
    }

    #[test]
    fn garbage_yields_none() {
        for s in ["", "not json", "{", "[1,2]", "{{{{", "```\n```", "\u{0}{\"a\""] {
            assert!(extract_json_object(s).is_none(), "{s:?}");
        }
    }
}
