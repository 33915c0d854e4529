use serde_json::{json, Value};

fn backend() -> Value {
    json!({
        "type": "object",
        "additionalProperties": false,
        "required": ["kind"],
        "properties": {
            "kind": {"enum": ["http_chat", "scripted", "truthful_sim"]},
            "model_id": {"type": "string"},
            "temperature": {"type": "number", "minimum": 0, "maximum": 2},
            "seed": {"type": "integer", "minimum": 0},
            "script": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": false,
                    "required": ["matcher", "response"],
                    "properties": {
                        "matcher": {"type": "string"},
                        "response": {"type": "string"},
                        "priority": {"type": "integer"},
                        "regex": {"type": "boolean"}
                    }
                }
            }
        }
    })
}

fn facts() -> Value {
    json!({
        "type": "object",
        "additionalProperties": false,
        "required": [
            "covid_positive", "needs_hospitalization_or_oxygen", "high_risk", "egfr_ml_min",
            "severe_hepatic_impairment", "unmanageable_paxlovid_interactions", "remdesivir_accessible",
            "weight_kg", "age_years"
        ],
        "properties": {
            "covid_positive": {"type": "boolean"},
            "needs_hospitalization_or_oxygen": {"type": "boolean"},
            "high_risk": {"type": "boolean"},
            "egfr_ml_min": {"type": "number", "minimum": 0},
            "severe_hepatic_impairment": {"type": "boolean"},
            "unmanageable_paxlovid_interactions": {"type": "boolean"},
            "remdesivir_accessible": {"type": "boolean"},
            "weight_kg": {"type": "number", "exclusiveMinimum": 0},
            "age_years": {"type": "integer", "minimum": 0}
        }
    })
}

fn trace() -> Value {
    json!({
        "type": "object",
        "required": ["method", "seed", "steps", "final_leaf"],
        "properties": {
            "method": {"$ref": "#/definitions/method"},
            "seed": {"type": ["integer", "null"]},
            "steps": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["prompt_kind", "prompt_text", "response_text"],
                    "properties": {
                        "node_id": {"type": "string"},
                        "prompt_kind": {"enum": ["bdt_question", "bdt_yesno", "cot_fsp", "pagc", "zsp"]},
                        "prompt_text": {"type": "string"},
                        "response_text": {"type": "string"},
                        "verdict": {"enum": ["YES", "NO", "AMBIGUOUS"]}
                    }
                }
            },
            "final_leaf": {
                "type": ["object", "null"],
                "properties": {"id": {"type": "string"}, "label": {"type": "string"}}
            }
        }
    })
}

/// JSON Schema (draft-07) for the request and response bodies.
pub fn api_schema() -> Value {
    json!({
        "$schema": "http://json-schema.org/draft-07/schema#",
        "definitions": {
            "method": {"enum": ["bdt", "cot_fsp", "pagc", "zsp"]},
            "backend": backend(),
            "facts": facts(),
            "trace": trace(),
            "RecommendRequest": {
                "type": "object",
                "additionalProperties": false,
                "required": ["patient_description", "method", "backend"],
                "properties": {
                    "patient_description": {"type": "string", "minLength": 1},
                    "method": {"$ref": "#/definitions/method"},
                    "backend": {"$ref": "#/definitions/backend"},
                    "facts": {"$ref": "#/definitions/facts"},
                    "case_id": {"type": "string"}
                }
            },
            "RecommendResponse": {
                "type": "object",
                "required": ["recommendation", "leaf_id", "failure", "trace", "latency_ms"],
                "properties": {
                    "recommendation": {"type": ["string", "null"]},
                    "leaf_id": {"type": ["string", "null"]},
                    "failure": {
                        "type": ["object", "null"],
                        "properties": {"kind": {"type": "string"}, "message": {"type": "string"}}
                    },
                    "trace": {"oneOf": [{"$ref": "#/definitions/trace"}, {"type": "null"}]},
                    "latency_ms": {"type": "integer", "minimum": 0}
                }
            },
            "EvaluateRequest": {
                "type": "object",
                "additionalProperties": false,
                "required": ["methods", "backend"],
                "properties": {
                    "corpus": {
                        "oneOf": [
                            {"type": "array", "maxItems": 200, "items": {"type": "object"}},
                            {"type": "object", "required": ["path"], "properties": {"path": {"type": "string"}}}
                        ]
                    },
                    "methods": {"type": "array", "minItems": 1, "items": {"$ref": "#/definitions/method"}},
                    "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
                    "backend": {"$ref": "#/definitions/backend"},
                    "parallelism": {"type": "integer", "minimum": 1, "maximum": 64},
                    "include_predictions": {"type": "boolean"}
                }
            },
            "CorpusResponse": {
                "type": "object",
                "required": ["source", "total", "cases"],
                "properties": {
                    "source": {"type": "string"},
                    "total": {"type": "integer"},
                    "cases": {"type": "array", "items": {"type": "object"}}
                }
            },
            "Error": {
                "type": "object",
                "required": ["error"],
                "properties": {"error": {"type": "string"}}
            }
        }
    })
}
