"""Canonical, bit-exact text serialization of subject return values.

The form is repr-compatible for scalars (ints in decimal, floats as
shortest round-trip repr with nan/inf tokens, strings with repr escaping)
and repr-shaped for containers, except that sets and mapping entries are
ordered by their serialized form so the text is independent of hash order.
Consequences relied on by verdict comparison: nan serializes equal to nan,
-0.0 stays distinct from 0.0, True is distinct from 1, and tuples, lists,
and sets are mutually distinct. Values outside the supported kinds (or
cyclic ones) have no canonical form.
"""

from __future__ import annotations


class Unserializable(ValueError):
    """The value has no canonical serialization."""


_SCALARS = (bool, int, float, complex, str, bytes)


def canonical_repr(value: object) -> str:
    return _canon(value, seen=set())


def _canon(value: object, seen: set[int]) -> str:
    if value is None:
        return "None"
    if isinstance(value, _SCALARS):
        return repr(value)
    if isinstance(value, (list, tuple, set, frozenset, dict)):
        marker = id(value)
        if marker in seen:
            raise Unserializable("cyclic structure")
        seen.add(marker)
        try:
            if isinstance(value, list):
                return "[" + ", ".join(_canon(v, seen) for v in value) + "]"
            if isinstance(value, tuple):
                if len(value) == 1:
                    return "(" + _canon(value[0], seen) + ",)"
                return "(" + ", ".join(_canon(v, seen) for v in value) + ")"
            if isinstance(value, (set, frozenset)):
                body = "{" + ", ".join(sorted(_canon(v, seen) for v in value)) + "}"
                if isinstance(value, frozenset):
                    return "frozenset(" + (body if value else "") + ")"
                return body if value else "set()"
            entries = sorted(
                (_canon(k, seen), _canon(v, seen)) for k, v in value.items()
            )
            return "{" + ", ".join(f"{k}: {v}" for k, v in entries) + "}"
        finally:
            seen.discard(marker)
    raise Unserializable(f"no canonical form for {type(value).__name__}")
