"""Data model for the unified function format and its structural checks.

A unified sample packages one corpus file's logic as five pieces: cleaned
reference code with a main entrypoint function, the entrypoint name, a
textual input/output description, a zero-argument input generator, and a
natural-language query. Everything downstream (execution, prompting,
verification) consumes this shape.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional

UNIFIED_SCHEMA = "codeio_unified_v1"
DEFAULT_ENTRYPOINT = "main_solution"

# Recursive complexity limits on I/O values. The executor side additionally
# enforces byte-size limits on live objects; these are the structural rules
# an orchestrator can check on plain JSON values.
MAX_CONTAINER_LEN = 20
MAX_STRING_LEN = 100


class SourceTag(str, Enum):
    CODEMIX = "CodeMix"
    PYEDU_R = "PyEduR"
    OTHER = "Other"


class ClassificationLabel(str, Enum):
    ALGORITHMS = "Algorithms"
    LOGIC_PUZZLES = "LogicPuzzles"
    MATH_RELATED = "MathRelated"
    SCIENTIFIC_COMPUTATION = "ScientificComputation"
    SYSTEM_MODELING = "SystemModeling"
    OTHER_COMPLEX_REASONING = "OtherComplexReasoning"
    NON_REASONING = "NonReasoning"


@dataclass(frozen=True)
class RawCodeFile:
    """One file from the raw corpus, before any transformation."""

    id: str
    source_tag: SourceTag
    text: str
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("raw code file text must be non-empty")
        if not isinstance(self.source_tag, SourceTag):
            object.__setattr__(self, "source_tag", SourceTag(self.source_tag))


@dataclass(frozen=True)
class UnifiedSample:
    """A transformed function package (the unified format)."""

    id: str
    source_tag: SourceTag
    reference_code: str
    io_description: str
    generator_code: str
    query: str
    entrypoint_name: str = DEFAULT_ENTRYPOINT

    def __post_init__(self) -> None:
        if not isinstance(self.source_tag, SourceTag):
            object.__setattr__(self, "source_tag", SourceTag(self.source_tag))

    def to_json_obj(self) -> dict:
        return {
            "schema": UNIFIED_SCHEMA,
            "id": self.id,
            "source_tag": self.source_tag.value,
            "reference_code": self.reference_code,
            "entrypoint_name": self.entrypoint_name,
            "io_description": self.io_description,
            "generator_code": self.generator_code,
            "query": self.query,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "UnifiedSample":
        schema = obj.get("schema", UNIFIED_SCHEMA)
        if schema != UNIFIED_SCHEMA:
            raise ValueError(f"unsupported unified sample schema: {schema!r}")
        return cls(
            id=obj["id"],
            source_tag=SourceTag(obj["source_tag"]),
            reference_code=obj["reference_code"],
            entrypoint_name=obj.get("entrypoint_name", DEFAULT_ENTRYPOINT),
            io_description=obj["io_description"],
            generator_code=obj["generator_code"],
            query=obj["query"],
        )


# ---------------------------------------------------------------------------
# I/O description parsing
# ---------------------------------------------------------------------------

# Matches lines like "    target (int): the target sum" or "  - `x` (int): ...".
_VARIABLE_LINE = re.compile(r"^\s*-?\s*`?(\w+)`?\s*\(([^()]*)\)\s*:\s*(.*)$")
_INPUT_HEADER = re.compile(r"^\s*Input\s*:?\s*$", re.IGNORECASE)
_OUTPUT_HEADER = re.compile(r"^\s*Output\s*:?\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class IOVariable:
    name: str
    type_name: str
    note: str = ""


@dataclass(frozen=True)
class IODescription:
    """Parsed view of the textual input/output description.

    The raw text is what prompts embed verbatim; this parsed form is what the
    verifier uses to know the declared input variable names. Sub-bullets under
    a dict-valued output (key descriptions) parse as additional outputs, which
    is harmless for the "at least one output" rule.
    """

    inputs: tuple[IOVariable, ...]
    outputs: tuple[IOVariable, ...]

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.inputs)


def parse_io_description(text: str) -> Optional[IODescription]:
    """Parse Input/Output blocks; returns None when either block is missing or empty."""
    inputs: list[IOVariable] = []
    outputs: list[IOVariable] = []
    current: Optional[list[IOVariable]] = None
    for line in text.splitlines():
        if _INPUT_HEADER.match(line):
            current = inputs
            continue
        if _OUTPUT_HEADER.match(line):
            current = outputs
            continue
        if current is None:
            continue
        match = _VARIABLE_LINE.match(line)
        if match:
            current.append(IOVariable(match.group(1), match.group(2).strip(), match.group(3).strip()))
    if not inputs or not outputs:
        return None
    return IODescription(inputs=tuple(inputs), outputs=tuple(outputs))


# ---------------------------------------------------------------------------
# Sample validation
# ---------------------------------------------------------------------------

MISSING_ENTRYPOINT = "MissingEntrypoint"
EMPTY_PARAMS = "EmptyParams"
NO_GENERATOR = "NoGenerator"
EMPTY_QUERY = "EmptyQuery"
MALFORMED_IO_DESCRIPTION = "MalformedIODescription"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _find_function(tree: ast.AST, name: str) -> Optional[ast.FunctionDef]:
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == name:
            return node
    return None


def _named_param_count(fn: ast.FunctionDef) -> int:
    args = fn.args
    return len(args.posonlyargs) + len(args.args) + len(args.kwonlyargs)


def validate_unified_sample(candidate: UnifiedSample) -> ValidationReport:
    """Check the unified-format invariants; violations are data, not exceptions.

    Codes: MissingEntrypoint (no function of that name parses out of the
    reference code), EmptyParams (entrypoint declares no named parameters),
    NoGenerator (generator code does not define exactly one zero-argument
    function), EmptyQuery, MalformedIODescription.
    """
    violations: list[str] = []

    try:
        ref_tree = ast.parse(candidate.reference_code)
    except SyntaxError:
        ref_tree = None
    entry = _find_function(ref_tree, candidate.entrypoint_name) if ref_tree is not None else None
    if entry is None:
        violations.append(MISSING_ENTRYPOINT)
    elif _named_param_count(entry) == 0:
        violations.append(EMPTY_PARAMS)

    if not _defines_single_zero_arg_function(candidate.generator_code):
        violations.append(NO_GENERATOR)

    if not candidate.query.strip():
        violations.append(EMPTY_QUERY)

    if parse_io_description(candidate.io_description) is None:
        violations.append(MALFORMED_IO_DESCRIPTION)

    return ValidationReport(violations=tuple(violations))


def _defines_single_zero_arg_function(generator_code: str) -> bool:
    try:
        tree = ast.parse(generator_code)
    except SyntaxError:
        return False
    defs = [n for n in tree.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))]
    if len(defs) != 1:
        return False
    fn = defs[0]
    return _named_param_count(fn) == 0 and fn.args.vararg is None and fn.args.kwarg is None


# ---------------------------------------------------------------------------
# Transformer completion parsing / rendering
# ---------------------------------------------------------------------------

SECTION_ORDER = ("REFERENCE_CODE", "ENTRYPOINT", "IO_DESCRIPTION", "INPUT_GENERATOR", "QUERY")
_MISSING_SECTION_CODE = {
    "REFERENCE_CODE": "NoReferenceCode",
    "ENTRYPOINT": "NoEntrypoint",
    "IO_DESCRIPTION": "NoIODescription",
    "INPUT_GENERATOR": NO_GENERATOR,
    "QUERY": "NoQuery",
}

# Accepts headers with forgiving decoration: "REFERENCE_CODE:", "## QUERY", "**ENTRYPOINT:**".
_HEADER_RE = re.compile(
    r"^\s*(?:[#*]+\s*)?(" + "|".join(SECTION_ORDER) + r")\s*[:*]*\s*$"
)
_FENCE_OPEN_RE = re.compile(r"^(`{3,})\s*(\w*)\s*$")


class TransformParseError(ValueError):
    """A completion did not contain the five labeled fenced sections.

    ``code`` names the first problem: a per-section missing code
    (e.g. NoGenerator) or UnbalancedFence.
    """

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


def parse_transform_output(model_text: str, id: str, source_tag: SourceTag) -> UnifiedSample:
    """Extract the five labeled fenced sections from one completion.

    Each section is a header line followed by a fenced block; the fence may be
    any run of three or more backticks and closes on a line of at least as
    many. When a section appears more than once the last occurrence wins.
    """
    # Split strictly on \n: splitlines() would also split on form feeds and
    # unicode separators, breaking the render round trip for content that
    # legitimately contains them.
    lines = model_text.split("\n")
    sections: dict[str, str] = {}
    i = 0
    while i < len(lines):
        header = _HEADER_RE.match(lines[i])
        if not header:
            i += 1
            continue
        name = header.group(1)
        j = i + 1
        while j < len(lines) and not lines[j].strip():
            j += 1
        if j >= len(lines):
            raise TransformParseError("UnbalancedFence", f"{name} header at end of text")
        fence = _FENCE_OPEN_RE.match(lines[j])
        if not fence:
            # Header without a fenced block: ignore the stray header line.
            i += 1
            continue
        fence_len = len(fence.group(1))
        body: list[str] = []
        k = j + 1
        while k < len(lines):
            stripped = lines[k].strip()
            if set(stripped) == {"`"} and len(stripped) >= fence_len:
                break
            body.append(lines[k])
            k += 1
        else:
            raise TransformParseError("UnbalancedFence", f"unterminated fence in {name}")
        sections[name] = "\n".join(body)
        i = k + 1

    for name in SECTION_ORDER:
        if name not in sections:
            raise TransformParseError(_MISSING_SECTION_CODE[name], f"missing section {name}")

    entrypoint = sections["ENTRYPOINT"].strip() or DEFAULT_ENTRYPOINT
    return UnifiedSample(
        id=id,
        source_tag=source_tag,
        reference_code=sections["REFERENCE_CODE"],
        entrypoint_name=entrypoint,
        io_description=sections["IO_DESCRIPTION"],
        generator_code=sections["INPUT_GENERATOR"],
        query=sections["QUERY"],
    )


def _fence_for(content: str) -> str:
    longest = 0
    for run in re.findall(r"`+", content):
        longest = max(longest, len(run))
    return "`" * max(3, longest + 1)


def render_transform_sections(sample: UnifiedSample) -> str:
    """Inverse of parse_transform_output; used by fixtures and round-trip tests."""
    parts = []
    contents = {
        "REFERENCE_CODE": sample.reference_code,
        "ENTRYPOINT": sample.entrypoint_name,
        "IO_DESCRIPTION": sample.io_description,
        "INPUT_GENERATOR": sample.generator_code,
        "QUERY": sample.query,
    }
    for name in SECTION_ORDER:
        content = contents[name]
        fence = _fence_for(content)
        lang = "python" if name in ("REFERENCE_CODE", "INPUT_GENERATOR") else ""
        parts.append(f"{name}:\n{fence}{lang}\n{content}\n{fence}")
    return "\n\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Structural complexity limits
# ---------------------------------------------------------------------------


def structural_limits_check(value: Any) -> bool:
    """True iff every nested container has length < 20 and every string length < 100.

    This is the orchestrator-side mirror of the executor's strict object-size
    check: it covers the structural rules only (byte sizes need the live
    runtime object). Map keys count as strings.
    """
    if isinstance(value, str):
        return len(value) < MAX_STRING_LEN
    if isinstance(value, dict):
        if len(value) >= MAX_CONTAINER_LEN:
            return False
        return all(
            structural_limits_check(k) and structural_limits_check(v) for k, v in value.items()
        )
    if isinstance(value, (list, tuple)):
        if len(value) >= MAX_CONTAINER_LEN:
            return False
        return all(structural_limits_check(item) for item in value)
    return True
