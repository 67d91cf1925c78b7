"""Versioned JSON schema of the trace document emitted on stdout.

This document is the contract consumed by external harnesses; bump
SCHEMA_VERSION on any shape change.
"""

SCHEMA_VERSION = 1

TRACE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "io", "events", "truncated"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "io": {
            "type": "object",
            "required": ["input", "expected_output", "actual_output", "exit_status"],
            "additionalProperties": False,
            "properties": {
                "input": {"type": "string"},
                "expected_output": {"type": "string"},
                "actual_output": {"type": "string"},
                "exit_status": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["ok", "exception", "timeout"]},
                        "name": {"type": "string"},
                        "message": {"type": "string"},
                    },
                },
            },
        },
        "events": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["step", "line", "vars"],
                "additionalProperties": False,
                "properties": {
                    "step": {"type": "integer", "minimum": 1},
                    "line": {"type": "integer", "minimum": 1},
                    "vars": {
                        "type": "object",
                        "additionalProperties": {"type": "string"},
                    },
                },
            },
        },
        "truncated": {"type": "boolean"},
    },
}
