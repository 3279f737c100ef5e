"""Source normalization: parse to the AST and unparse back.

Comments, blank-line layout, and unusual indentation disappear, so two
programs that differ only cosmetically normalize to identical text and
cannot fake a semantic difference. Unparse output is a fixed point of the
transformation.
"""

from __future__ import annotations

import ast


class NormalizeError(ValueError):
    """Source is not syntactically valid; carries the parser message."""


def normalize(source: str) -> str:
    try:
        tree = ast.parse(source)
    except (SyntaxError, ValueError) as exc:
        message = getattr(exc, "msg", str(exc))
        lineno = getattr(exc, "lineno", None)
        where = f" (line {lineno})" if lineno else ""
        raise NormalizeError(f"{message}{where}") from exc
    return ast.unparse(tree)


def parse_check(source: str) -> ast.Module:
    """Parse without unparsing, for pre-run syntax validation."""
    try:
        return ast.parse(source)
    except (SyntaxError, ValueError) as exc:
        message = getattr(exc, "msg", str(exc))
        raise NormalizeError(message) from exc
