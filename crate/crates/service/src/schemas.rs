//! JSON Schemas for the API payloads, served under `/schemas/{name}`.

pub const ALL: [(&str, &str); 6] = [
    ("recall_result", include_str!("../schemas/recall_result.schema.json")),
    ("query_request", include_str!("../schemas/query_request.schema.json")),
    ("error", include_str!("../schemas/error.schema.json")),
    ("session_manifest", include_str!("../schemas/session_manifest.schema.json")),
    ("ingest_plan", include_str!("../schemas/ingest_plan.schema.json")),
    ("ingest_status", include_str!("../schemas/ingest_status.schema.json")),
];

/// Looks a schema up by name, with or without a `.schema.json` / `.json` suffix.
pub fn get(name: &str) -> Option<&'static str> {
    let base = name
        .strip_suffix(".schema.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(name);
    ALL.iter().find(|(n, _)| *n == base).map(|(_, s)| *s)
}
