"""Parse agent markdown responses into structured artifacts.

Generator responses carry three level-1 sections (Analysis, Generated
program, Diverging input example); evaluator responses carry Analysis, an
Equivalent? verdict, and an input section that is mandatory only for a
"No" verdict. Only level-1 ATX headings and backtick code fences are
interpreted; full CommonMark is deliberately out of scope. Parsing never
executes or evaluates response content.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

SECTION_ANALYSIS = "analysis"
SECTION_PROGRAM = "generated program"
SECTION_INPUT = "diverging input example"
SECTION_EQUIVALENT = "equivalent"


class ParseError(ValueError):
    """A response does not match the required markdown layout.

    The message names the first defect found (missing/empty/duplicate
    section, missing code fence, ambiguous answer) so round statistics can
    aggregate rejection reasons.
    """


@dataclass(frozen=True)
class AliceArtifacts:
    analysis: str
    program_source: str
    input_literal: str


@dataclass(frozen=True)
class BobArtifacts:
    analysis: str
    claims_equivalent: bool
    input_literal: str | None


_HEADING_RE = re.compile(r"^ {0,3}#(?!#)\s*(.*?)\s*$")
_FENCE_OPEN_RE = re.compile(r"^ {0,3}(`{3,})(.*)$")
_FENCE_CLOSE_RE = re.compile(r"^ {0,3}(`{3,})\s*$")
_WORD_RE = re.compile(r"[a-zA-Z]+")


def _canonical_heading(raw: str) -> str:
    """Normalize a heading for name matching: case-insensitive, tolerant of
    trailing punctuation and whitespace ("# Equivalent?" -> "equivalent")."""
    return raw.strip().rstrip(":.!?").strip().lower()


def split_sections(text: str) -> dict[str, str]:
    """Split a markdown response on its level-1 headings.

    Returns canonical heading name -> section body (text up to the next
    level-1 heading, stripped of leading/trailing blank space). Headings
    inside fenced code blocks do not split sections, so Python comments in
    code blocks cannot truncate a section. Section order is not significant.
    Raises ParseError on duplicate headings of the same name, which would
    make it ambiguous which payload the agent stands behind.
    """
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    fence: str | None = None
    for line in text.split("\n"):
        if fence is not None:
            if current is not None:
                current.append(line)
            close = _FENCE_CLOSE_RE.match(line)
            if close and len(close.group(1)) >= len(fence):
                fence = None
            continue
        opened = _FENCE_OPEN_RE.match(line)
        if opened and "`" not in opened.group(2):
            fence = opened.group(1)
            if current is not None:
                current.append(line)
            continue
        heading = _HEADING_RE.match(line)
        if heading:
            name = _canonical_heading(heading.group(1))
            if name in sections:
                raise ParseError(f"duplicate section: {name}")
            current = sections.setdefault(name, [])
            continue
        if current is not None:
            current.append(line)
    return {name: "\n".join(lines).strip("\n").strip() for name, lines in sections.items()}


def extract_first_code_fence(section_text: str) -> str | None:
    """Body of the first terminated backtick fence in a section, or None.

    The info string (language tag) is ignored; interior newlines are
    preserved exactly. An unterminated fence yields None rather than
    swallowing the rest of the section.
    """
    lines = section_text.split("\n")
    open_len: int | None = None
    body: list[str] = []
    for line in lines:
        if open_len is None:
            opened = _FENCE_OPEN_RE.match(line)
            if opened and "`" not in opened.group(2):
                open_len = len(opened.group(1))
            continue
        close = _FENCE_CLOSE_RE.match(line)
        if close and len(close.group(1)) >= open_len:
            return "\n".join(body)
        body.append(line)
    return None


def _require_section(sections: dict[str, str], name: str) -> str:
    if name not in sections:
        raise ParseError(f"missing section: {name}")
    if not sections[name]:
        raise ParseError(f"empty section: {name}")
    return sections[name]


def _require_fence(sections: dict[str, str], name: str) -> str:
    body = extract_first_code_fence(_require_section(sections, name))
    if body is None:
        raise ParseError(f"missing code fence in section: {name}")
    return body


def parse_alice_response(text: str) -> AliceArtifacts:
    """Extract (analysis, program, input literal) from a generator response.

    The program is the first fenced block of the "Generated program"
    section and the input literal the first fenced block of "Diverging
    input example". Sub-headings and code blocks inside Analysis are kept
    as part of the analysis.
    """
    sections = split_sections(text)
    analysis = _require_section(sections, SECTION_ANALYSIS)
    program = _require_fence(sections, SECTION_PROGRAM)
    input_literal = _require_fence(sections, SECTION_INPUT)
    if not program.strip():
        raise ParseError(f"empty code fence in section: {SECTION_PROGRAM}")
    if not input_literal.strip():
        raise ParseError(f"empty code fence in section: {SECTION_INPUT}")
    return AliceArtifacts(analysis=analysis, program_source=program, input_literal=input_literal)


def parse_bob_response(text: str) -> BobArtifacts:
    """Extract (analysis, equivalence claim, optional input) from an
    evaluator response.

    The Equivalent? section may contain surrounding prose but must contain
    exactly one of the words yes/no (case-insensitive). A "No" verdict
    requires a fenced diverging-input block; for "Yes" the input section may
    be absent or empty.
    """
    sections = split_sections(text)
    analysis = _require_section(sections, SECTION_ANALYSIS)
    answer_text = _require_section(sections, SECTION_EQUIVALENT)
    words = {w.lower() for w in _WORD_RE.findall(answer_text)}
    has_yes = "yes" in words
    has_no = "no" in words
    if has_yes == has_no:
        raise ParseError("ambiguous answer: equivalent section must contain exactly one of yes/no")
    if has_yes:
        # an input section alongside "Yes" is tolerated but never trusted:
        # a correct claim must be "No" plus a verified input
        return BobArtifacts(analysis=analysis, claims_equivalent=True, input_literal=None)
    input_literal = _require_fence(sections, SECTION_INPUT)
    if not input_literal.strip():
        raise ParseError(f"empty code fence in section: {SECTION_INPUT}")
    return BobArtifacts(analysis=analysis, claims_equivalent=False, input_literal=input_literal)


def render_alice_response(analysis: str, program_source: str, input_literal: str) -> str:
    """Format generator artifacts in the canonical response layout.

    Inverse of parse_alice_response for well-formed payloads; used to build
    fixtures and round-trip checks.
    """
    return (
        f"# Analysis\n{analysis}\n"
        f"# Generated program\n```python\n{program_source}\n```\n"
        f"# Diverging input example\n```python\n{input_literal}\n```"
    )


def render_bob_response(analysis: str, claims_equivalent: bool, input_literal: str | None = None) -> str:
    """Format evaluator artifacts in the canonical response layout."""
    answer = "Yes" if claims_equivalent else "No"
    text = f"# Analysis\n{analysis}\n# Equivalent?\n{answer}"
    if input_literal is not None:
        text += f"\n# Diverging input example\n```python\n{input_literal}\n```"
    return text
