"""Hybrid cleartext/MPC relational query compiler and simulated runtime.

The heavy lifting lives in the C++ extension module; this package re-exports
it and adds a couple of file-oriented conveniences.
"""

import json as _json

try:
    # Wheel layout: the extension is installed inside the package.
    from ._secrel import (  # noqa: F401
        SecrelError,
        analyze,
        compile,
        generate_inputs,
        oracle,
        simulate,
        verify,
    )
except ImportError:
    # Development layout: the extension sits on PYTHONPATH next to the build.
    from _secrel import (  # noqa: F401
        SecrelError,
        analyze,
        compile,
        generate_inputs,
        oracle,
        simulate,
        verify,
    )

__all__ = [
    "SecrelError",
    "analyze",
    "compile",
    "generate_inputs",
    "oracle",
    "simulate",
    "verify",
    "load_query",
    "analyze_report",
]


def load_query(path):
    """Read a query document from disk and return it as a JSON string."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    _json.loads(text)  # fail early on malformed documents
    return text


def analyze_report(query_json):
    """Run the analysis passes and return the per-node report as a dict."""
    return _json.loads(analyze(query_json))
