"""Strict complexity limits on live runtime objects.

Values that flow into prompts must stay small and predictable: total deep
size under 1024 bytes, containers under 20 entries, strings under 100
characters, and any non-simple object under 128 bytes, applied recursively
to every sub-object including dict keys.

Deep size is measured by walking the object graph with sys.getsizeof,
counting each distinct object once. Exact byte counts for exotic objects
vary by interpreter version, so the test suite pins verdicts on plain
JSON-like values and clear-cut boundary cases only.
"""

from __future__ import annotations

import sys

TOTAL_LIMIT = 1024
CONTAINER_LIMIT = 20
STRING_LIMIT = 100
OTHER_OBJECT_LIMIT = 128


def deep_sizeof(obj: object) -> int:
    """Total size of an object graph; shared sub-objects count once."""
    seen: set[int] = set()
    stack = [obj]
    total = 0
    while stack:
        current = stack.pop()
        if id(current) in seen:
            continue
        seen.add(id(current))
        total += sys.getsizeof(current)
        if isinstance(current, dict):
            stack.extend(current.keys())
            stack.extend(current.values())
        elif isinstance(current, (list, tuple, set, frozenset)):
            stack.extend(current)
        else:
            attrs = getattr(current, "__dict__", None)
            if attrs:
                stack.append(attrs)
    return total


def strict_size_check(obj: object) -> bool:
    if deep_sizeof(obj) >= TOTAL_LIMIT:
        return False
    if isinstance(obj, dict):
        if len(obj) >= CONTAINER_LIMIT:
            return False
        for key, value in obj.items():
            if not strict_size_check(key) or not strict_size_check(value):
                return False
    elif isinstance(obj, (list, tuple, set)):
        if len(obj) >= CONTAINER_LIMIT:
            return False
        for item in obj:
            if not strict_size_check(item):
                return False
    elif isinstance(obj, str):
        if len(obj) >= STRING_LIMIT:
            return False
    else:
        if deep_sizeof(obj) >= OTHER_OBJECT_LIMIT:
            return False
    return True
