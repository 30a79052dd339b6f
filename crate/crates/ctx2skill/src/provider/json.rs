//! Strict JSON extraction from model output.

use serde_json::Value;

use super::ProviderError;

/// Pulls the first top-level JSON object out of model output.
///
/// Markdown code fences around the object are tolerated; any non-whitespace
/// after the object (outside the closing fence) is rejected.
pub fn extract_json_payload(content: &str) -> Result<Value, ProviderError> {
    let stripped = strip_fences(content);
    let start = stripped.find('{').ok_or_else(|| ProviderError::NoJsonObject {
        raw: content.to_string(),
    })?;
    let mut stream = serde_json::Deserializer::from_str(&stripped[start..]).into_iter::<Value>();
    let value = match stream.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => {
            return Err(ProviderError::MalformedJson {
                message: e.to_string(),
                raw: content.to_string(),
            })
        }
        None => {
            return Err(ProviderError::NoJsonObject {
                raw: content.to_string(),
            })
        }
    };
    if !value.is_object() {
        return Err(ProviderError::NoJsonObject {
            raw: content.to_string(),
        });
    }
    let rest = &stripped[start + stream.byte_offset()..];
    if !rest.trim().is_empty() {
        return Err(ProviderError::TrailingContent {
            raw: content.to_string(),
        });
    }
    Ok(value)
}

/// Removes a surrounding ``` / ```json fence pair if present.
fn strip_fences(content: &str) -> &str {
    let trimmed = content.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    let rest = rest.strip_prefix('\n').unwrap_or(rest);
    rest.strip_suffix("```").map(str::trim).unwrap_or(trimmed)
}
