"""Parser and serializer for the knowledge-base definition language (KBDL).

KBDL is a line-oriented, brace-delimited text format with two file kinds:

* knowledge bases — ordinal scales, input/derived attributes with rule
  tables, drill-down help, and a goal;
* overlays — red-flag, risk-weight and valuation definitions that reference
  attributes across knowledge bases as ``kb_id.attr_name``.

Parsing is two-pass: syntax first, then name/level resolution against the
declarations found anywhere in the file, so attribute order does not matter
and even cyclic rule graphs parse (cycles are a `compiler.validate` error,
not a parse error). All parse problems are reported together with 1-based
line/column positions.
"""

from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass
from typing import Optional

from .model import (
    MAX_HELP_DEPTH,
    Attribute,
    Comparator,
    ConditionTerm,
    HelpNode,
    KnowledgeBase,
    OverlaySpec,
    Pattern,
    QualifiedRef,
    RedFlagDef,
    RiskEntry,
    RuleBlock,
    RuleRow,
    Scale,
    Severity,
    ValuationCategory,
    ValuationDriver,
)

KEYWORDS = frozenset(
    """kb version scale attribute input derived question help more rules
    default goal overlay redflag severity when and message risk weight
    valuation category base driver""".split()
)

SEVERITY_WORDS = frozenset(s.value for s in Severity)


@dataclass(frozen=True)
class ParseError:
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class ParseFailure(Exception):
    """Raised when a source fails to parse; carries every collected error."""

    def __init__(self, errors: list[ParseError]):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors) or "parse failed")


class _Recover(Exception):
    """Internal: unwind to the nearest recovery point."""


# Tokens are plain (kind, text, pos) tuples; kind is one of kw | ident |
# number | string | punct | eof. Line/column come from pos lazily, only when
# an error is actually reported: the tokenizer sits on the bundle-startup hot
# path at five-digit rule counts.
Token = tuple

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\r\n]+)
    | (?P<comment>\#[^\n]*)
    | (?P<arrow>->)
    | (?P<ge>>=)
    | (?P<le><=)
    | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
    | (?P<ident>[a-z][a-z0-9_]*)
    | (?P<string>"(?:\\.|[^"\\\n])*")
    | (?P<punct>[=|:(){},.*])
    """,
    re.VERBOSE,
)

_STRING_ESCAPES = {'"': '"', "\\": "\\"}


def _tokenize(source: str) -> tuple[list[Token], list[tuple[int, str]]]:
    tokens: list[Token] = []
    lex_errors: list[tuple[int, str]] = []
    append = tokens.append
    match = _TOKEN_RE.match
    keywords = KEYWORDS
    pos = 0
    n = len(source)
    while pos < n:
        m = match(source, pos)
        if m is None:
            ch = source[pos]
            if ch == '"':
                lex_errors.append((pos, "unterminated string"))
                nl = source.find("\n", pos)
                pos = n if nl < 0 else nl + 1
            else:
                lex_errors.append((pos, f"unexpected character {ch!r}"))
                pos += 1
            continue
        kind = m.lastgroup
        if kind == "ws" or kind == "comment":
            pos = m.end()
            continue
        text = m.group()
        if kind == "ident":
            if text in keywords:
                kind = "kw"
        elif kind == "arrow" or kind == "ge" or kind == "le":
            kind = "punct"
        append((kind, text, pos))
        pos = m.end()
    append(("eof", "", n))
    return tokens, lex_errors


def _unquote(tok: Token) -> tuple[str, Optional[str]]:
    """Decode a string token body; returns (text, error message or None)."""
    body = tok[1][1:-1]
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            esc = body[i + 1]
            if esc not in _STRING_ESCAPES:
                return "", f"invalid string escape '\\{esc}'"
            out.append(_STRING_ESCAPES[esc])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out), None


class _Parser:
    """Shared token-stream machinery for the KB and overlay parsers."""

    def __init__(self, source: str):
        self._line_starts = [0] + [m.end() for m in re.finditer(r"\n", source)]
        self.tokens, lex_errors = _tokenize(source)
        self.errors = [
            ParseError(*self._linecol(pos), message) for pos, message in lex_errors
        ]
        self.i = 0

    def _linecol(self, pos: int) -> tuple[int, int]:
        line = bisect.bisect_right(self._line_starts, pos) - 1
        return line + 1, pos - self._line_starts[line] + 1

    # --- stream primitives ---------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok[0] != "eof":
            self.i += 1
        return tok

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.tokens[self.i]
        return tok[0] == kind and (text is None or tok[1] == text)

    def at_kw(self, word: str) -> bool:
        tok = self.tokens[self.i]
        return tok[0] == "kw" and tok[1] == word

    def error(self, message: str, tok: Optional[Token] = None) -> None:
        if tok is None:
            tok = self.tokens[self.i]
        line, col = self._linecol(tok[2])
        self.errors.append(ParseError(line, col, message))

    def fail(self, message: str, tok: Optional[Token] = None) -> None:
        self.error(message, tok)
        raise _Recover()

    def expect(self, kind: str, text: Optional[str] = None, what: str = "") -> Token:
        tok = self.tokens[self.i]
        if tok[0] == kind and (text is None or tok[1] == text):
            if kind != "eof":
                self.i += 1
            return tok
        want = what or (text if text is not None else kind)
        got = tok[1] or "end of input"
        self.fail(f"expected {want}, got {got!r}")
        raise AssertionError("unreachable")

    def expect_kw(self, word: str) -> Token:
        return self.expect("kw", word, what=f"'{word}'")

    def expect_ident(self, what: str = "identifier") -> str:
        tok = self.tokens[self.i]
        if tok[0] == "ident":
            self.i += 1
            return tok[1]
        got = tok[1] or "end of input"
        self.fail(f"expected {what}, got {got!r}")
        raise AssertionError("unreachable")

    def expect_string(self, what: str = "string") -> str:
        tok = self.expect("string", what=what)
        text, err = _unquote(tok)
        if err is not None:
            self.fail(err, tok)
        return text

    def expect_int(self, what: str = "integer") -> int:
        tok = self.expect("number", what=what)
        if not re.fullmatch(r"-?\d+", tok[1]):
            self.fail(f"expected {what}, got {tok[1]!r}", tok)
        return int(tok[1])

    def expect_number(self, what: str = "number") -> float:
        tok = self.expect("number", what=what)
        value = float(tok[1])
        if not math.isfinite(value):
            self.fail("weight or multiplier not a finite number", tok)
        return value

    def skip_to(self, *stops: tuple[str, Optional[str]]) -> None:
        """Panic-mode recovery: skip tokens until one of the stop points."""
        tokens = self.tokens
        while tokens[self.i][0] != "eof":
            tok = tokens[self.i]
            for kind, text in stops:
                if tok[0] == kind and (text is None or tok[1] == text):
                    return
            self.i += 1


_ITEM_STOPS = (("kw", "scale"), ("kw", "attribute"), ("kw", "goal"))


class _KbParser(_Parser):
    def parse(self) -> Optional[KnowledgeBase]:
        if self.at("eof"):
            self.error("missing header")
            return None

        kb_id, version = self._header()
        scales: list[tuple[Scale, Token]] = []
        raw_attrs: list[dict] = []
        goal: Optional[tuple[str, Token]] = None

        while not self.at("eof"):
            try:
                if self.at_kw("scale"):
                    scales.append(self._scale())
                elif self.at_kw("attribute"):
                    raw_attrs.append(self._attribute())
                elif self.at_kw("goal"):
                    tok = self.advance()
                    name = self.expect_ident("goal attribute name")
                    if goal is not None:
                        self.error("duplicate goal", tok)
                    else:
                        goal = (name, tok)
                else:
                    self.fail("expected 'scale', 'attribute' or 'goal'")
            except _Recover:
                self.skip_to(*_ITEM_STOPS)
        return self._resolve(kb_id, version, scales, raw_attrs, goal)

    def _header(self) -> tuple[str, int]:
        try:
            self.expect_kw("kb")
            kb_id = self.expect_string("kb id string")
            self.expect_kw("version")
            version = self.expect_int("version integer")
            return kb_id, version
        except _Recover:
            self.skip_to(*_ITEM_STOPS)
            return "", 0

    def _scale(self) -> tuple[Scale, Token]:
        tok = self.expect_kw("scale")
        name = self.expect_ident("scale name")
        self.expect("punct", "=")
        levels = [self.expect_ident("level name")]
        self.expect("punct", "|", what="'|' (a scale needs at least 2 levels)")
        levels.append(self.expect_ident("level name"))
        while self.at("punct", "|"):
            self.advance()
            levels.append(self.expect_ident("level name"))
        seen = set()
        for lvl in levels:
            if lvl in seen:
                self.error(f"duplicate level {lvl!r} in scale {name!r}", tok)
            seen.add(lvl)
        deduped = tuple(dict.fromkeys(levels))
        if len(deduped) < 2:
            deduped = deduped + ("_pad",)  # parse already failed; keep the model constructible
        return Scale(name, deduped), tok

    def _attribute(self) -> dict:
        tok = self.expect_kw("attribute")
        name = self.expect_ident("attribute name")
        self.expect("punct", ":")
        scale_name = self.expect_ident("scale name")
        raw: dict = {"tok": tok, "name": name, "scale": scale_name}
        if self.at_kw("input"):
            self.advance()
            self.expect_kw("question")
            raw["kind"] = "input"
            raw["question"] = self.expect_string("question string")
            raw["help"] = self._help() if self.at_kw("help") else None
        elif self.at_kw("derived"):
            self.advance()
            raw["kind"] = "derived"
            raw.update(self._rule_body())
        else:
            self.fail("expected 'input' or 'derived'")
        return raw

    def _help(self) -> Optional[HelpNode]:
        tok = self.expect_kw("help")
        self.expect("punct", "{")
        texts = [self.expect_string("help text")]
        while self.at_kw("more"):
            self.advance()
            self.expect("punct", "{")
            texts.append(self.expect_string("help text"))
            self.expect("punct", "}")
        self.expect("punct", "}")
        if len(texts) > MAX_HELP_DEPTH:
            self.error(f"help drill-down exceeds {MAX_HELP_DEPTH} levels", tok)
            texts = texts[:MAX_HELP_DEPTH]
        return HelpNode.from_chain(texts)

    def _rule_body(self) -> dict:
        self.expect_kw("rules")
        self.expect("punct", "(")
        children = [self.expect_ident("child attribute name")]
        while self.at("punct", ","):
            self.advance()
            children.append(self.expect_ident("child attribute name"))
        self.expect("punct", ")")
        self.expect("punct", "{")
        rows: list[dict] = []
        default: Optional[tuple[str, Token]] = None
        while not self.at("punct", "}") and not self.at("eof"):
            try:
                if self.at_kw("default"):
                    tok = self.advance()
                    self.expect("punct", "->", what="'->'")
                    level = self.expect_ident("output level")
                    if default is not None:
                        self.error("duplicate default row", tok)
                    else:
                        default = (level, tok)
                elif self.at("punct", "("):
                    rows.append(self._row())
                else:
                    self.fail("expected a rule row or '}'")
            except _Recover:
                self.skip_to(("punct", "("), ("kw", "default"), ("punct", "}"))
        self.expect("punct", "}")
        if not rows and default is None:
            self.error("rule block needs at least one row")
        return {"children": children, "rows": rows, "default": default}

    def _row(self) -> dict:
        tok = self.expect("punct", "(")
        patterns: list[tuple[Optional[list[str]], Token]] = [self._pattern()]
        while self.at("punct", ","):
            self.advance()
            patterns.append(self._pattern())
        self.expect("punct", ")")
        self.expect("punct", "->", what="'->'")
        output = self.expect_ident("output level")
        return {"tok": tok, "patterns": patterns, "output": output}

    def _pattern(self) -> tuple[Optional[list[str]], Token]:
        tok = self.peek()
        if self.at("punct", "*"):
            self.advance()
            return None, tok
        levels = [self.expect_ident("level name or '*'")]
        while self.at("punct", "|"):
            self.advance()
            levels.append(self.expect_ident("level name"))
        return levels, tok

    # --- pass 2: resolution ---------------------------------------------

    def _resolve(
        self,
        kb_id: str,
        version: int,
        scales: list[tuple[Scale, Token]],
        raw_attrs: list[dict],
        goal: Optional[tuple[str, Token]],
    ) -> Optional[KnowledgeBase]:
        scale_map: dict[str, Scale] = {}
        for scale, tok in scales:
            if scale.name in scale_map:
                self.error(f"duplicate scale name {scale.name!r}", tok)
            else:
                scale_map[scale.name] = scale

        attr_scale: dict[str, Optional[Scale]] = {}
        for raw in raw_attrs:
            name = raw["name"]
            if name in attr_scale:
                self.error(f"duplicate attribute name {raw['name']!r}", raw["tok"])
                raw["dup"] = True
                continue
            scale = scale_map.get(raw["scale"])
            if scale is None:
                self.error(f"unknown scale {raw['scale']!r}", raw["tok"])
            attr_scale[name] = scale

        attributes: list[Attribute] = []
        for raw in raw_attrs:
            if raw.get("dup"):
                continue
            if raw["kind"] == "input":
                attributes.append(
                    Attribute(
                        name=raw["name"],
                        scale=raw["scale"],
                        kind="input",
                        question=raw["question"],
                        help=raw["help"],
                    )
                )
                continue
            block = self._resolve_block(raw, attr_scale)
            if block is not None:
                attributes.append(
                    Attribute(name=raw["name"], scale=raw["scale"], kind="derived", rules=block)
                )

        if goal is None:
            eof = self.tokens[-1]
            self.error("missing goal", eof)
        else:
            goal_name, tok = goal
            raw_kinds = {r["name"]: r["kind"] for r in raw_attrs}
            if goal_name not in raw_kinds:
                self.error(f"unknown goal attribute {goal_name!r}", tok)
            elif raw_kinds[goal_name] != "derived":
                self.error(f"goal {goal_name!r} must be a derived attribute", tok)

        if self.errors:
            return None
        assert goal is not None
        return KnowledgeBase(
            id=kb_id,
            version=version,
            scales=tuple(s for s, _ in scales),
            attributes=tuple(attributes),
            goal=goal[0],
        )

    def _resolve_block(self, raw: dict, attr_scale: dict[str, Optional[Scale]]) -> Optional[RuleBlock]:
        owner = raw["name"]
        own_scale = attr_scale.get(owner)
        children: list[str] = raw["children"]
        child_scales: list[Optional[Scale]] = []
        for child in children:
            if child not in attr_scale:
                self.error(f"unknown attribute {child!r} in rules of {owner!r}", raw["tok"])
                child_scales.append(None)
            else:
                child_scales.append(attr_scale[child])

        rows: list[RuleRow] = []
        ok = True
        for rr in raw["rows"]:
            if len(rr["patterns"]) != len(children):
                self.error(
                    f"arity mismatch, expected {len(children)} patterns, "
                    f"got {len(rr['patterns'])}",
                    rr["tok"],
                )
                ok = False
                continue  # drop the row; the block is discarded anyway
            patterns: list[Pattern] = []
            for (levels, tok), scale in zip(rr["patterns"], child_scales):
                if levels is None:
                    patterns.append(None)
                    continue
                seen = set()
                for lvl in levels:
                    if lvl in seen:
                        self.error(f"duplicate level {lvl!r} in pattern", tok)
                        ok = False
                    seen.add(lvl)
                    if scale is not None and lvl not in scale:
                        self.error(
                            f"unknown level name {lvl!r} (scale {scale.name!r} "
                            f"has {', '.join(scale.levels)})",
                            tok,
                        )
                        ok = False
                patterns.append(tuple(dict.fromkeys(levels)))
            if own_scale is not None and rr["output"] not in own_scale:
                self.error(f"unknown level name {rr['output']!r} for {owner!r}", rr["tok"])
                ok = False
            rows.append(RuleRow(tuple(patterns), rr["output"]))

        default = None
        if raw["default"] is not None:
            level, tok = raw["default"]
            if own_scale is not None and level not in own_scale:
                self.error(f"unknown level name {level!r} for {owner!r}", tok)
                ok = False
            default = level
        if not ok or own_scale is None:
            return None
        return RuleBlock(tuple(children), tuple(rows), default)


class _OverlayParser(_Parser):
    def parse(self) -> Optional[OverlaySpec]:
        if self.at("eof"):
            self.error("missing header")
            return None
        try:
            self.expect_kw("overlay")
            name = self.expect_string("overlay name string")
        except _Recover:
            name = ""
            self.skip_to(("kw", "redflag"), ("kw", "risk"), ("kw", "valuation"))

        flags: list[RedFlagDef] = []
        risks: list[RiskEntry] = []
        categories: list[ValuationCategory] = []
        while not self.at("eof"):
            try:
                if self.at_kw("redflag"):
                    flag = self._redflag()
                    if flag is not None:
                        flags.append(flag)
                elif self.at_kw("risk"):
                    risks.append(self._risk())
                elif self.at_kw("valuation"):
                    categories.append(self._valuation())
                else:
                    self.fail("expected 'redflag', 'risk' or 'valuation'")
            except _Recover:
                self.skip_to(("kw", "redflag"), ("kw", "risk"), ("kw", "valuation"))

        if self.errors:
            return None
        return OverlaySpec(
            name=name,
            red_flags=tuple(flags),
            risk_entries=tuple(risks),
            valuation_categories=tuple(categories),
        )

    def _qref(self) -> QualifiedRef:
        kb_id = self.expect_ident("kb id")
        self.expect("punct", ".", what="'.' (qualified reference is kb_id.attr)")
        return QualifiedRef(kb_id, self.expect_ident("attribute name"))

    def _redflag(self) -> Optional[RedFlagDef]:
        self.expect_kw("redflag")
        flag_id = self.expect_string("red flag id string")
        self.expect_kw("severity")
        sev_tok = self.peek()
        if sev_tok[0] == "ident" and sev_tok[1] in SEVERITY_WORDS:
            severity = Severity(self.advance()[1])
        else:
            self.fail(f"unknown severity {sev_tok[1]!r}", sev_tok)
            raise AssertionError("unreachable")
        when_tok = self.expect_kw("when")
        terms: list[ConditionTerm] = []
        if self.at_kw("message"):
            self.fail("empty condition", when_tok)
        terms.append(self._term())
        while self.at_kw("and"):
            self.advance()
            terms.append(self._term())
        self.expect_kw("message")
        message = self.expect_string("message string")
        return RedFlagDef(flag_id, severity, tuple(terms), message)

    def _term(self) -> ConditionTerm:
        ref = self._qref()
        tok = self.peek()
        if tok[0] == "punct" and tok[1] in ("=", ">=", "<="):
            cmp = Comparator(self.advance()[1])
        else:
            self.fail(f"expected '=', '>=' or '<=', got {tok[1]!r}", tok)
            raise AssertionError("unreachable")
        return ConditionTerm(ref, cmp, self.expect_ident("level name"))

    def _map(self) -> tuple[tuple[str, float], ...]:
        self.expect("punct", "{")
        entries: list[tuple[str, float]] = []
        seen: set[str] = set()
        while True:
            tok = self.peek()
            level = self.expect_ident("level name")
            self.expect("punct", "->", what="'->'")
            value = self.expect_number()
            if level in seen:
                self.error(f"duplicate level {level!r} in map", tok)
            else:
                seen.add(level)
                entries.append((level, value))
            if self.at("punct", ","):
                self.advance()
            else:
                break
        self.expect("punct", "}")
        return tuple(entries)

    def _risk(self) -> RiskEntry:
        self.expect_kw("risk")
        ref = self._qref()
        self.expect_kw("weight")
        weight = self.expect_number("weight")
        return RiskEntry(ref, weight, self._map())

    def _valuation(self) -> ValuationCategory:
        self.expect_kw("valuation")
        self.expect_kw("category")
        name = self.expect_string("category name string")
        self.expect_kw("base")
        base = self.expect_number("base value")
        drivers: list[ValuationDriver] = []
        while self.at_kw("driver"):
            self.advance()
            drivers.append(ValuationDriver(self._qref(), self._map()))
        return ValuationCategory(name, base, tuple(drivers))


def parse_kb(source: str) -> KnowledgeBase:
    """Parse KBDL text into a KnowledgeBase; raises ParseFailure listing
    every problem found."""
    parser = _KbParser(source)
    kb = parser.parse()
    if parser.errors or kb is None:
        raise ParseFailure(parser.errors)
    return kb


def parse_overlay(source: str) -> OverlaySpec:
    """Parse overlay text; attribute references stay unresolved here."""
    parser = _OverlayParser(source)
    spec = parser.parse()
    if parser.errors or spec is None:
        raise ParseFailure(parser.errors)
    return spec


# --- serialization --------------------------------------------------------


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _format_pattern(pat: Pattern) -> str:
    return "*" if pat is None else "|".join(pat)


def format_rule_block(block: RuleBlock, indent: str = "") -> str:
    """Render one rule block in KBDL syntax."""
    lines = [f"{indent}rules ({', '.join(block.children)}) {{"]
    for row in block.rows:
        pats = ", ".join(_format_pattern(p) for p in row.patterns)
        lines.append(f"{indent}  ({pats}) -> {row.output}")
    if block.default is not None:
        lines.append(f"{indent}  default -> {block.default}")
    lines.append(f"{indent}}}")
    return "\n".join(lines)


def _format_help(help_node: HelpNode) -> str:
    texts = help_node.chain()
    parts = [_quote(texts[0])]
    for text in texts[1:]:
        parts.append(f"more {{ {_quote(text)} }}")
    return "help { " + " ".join(parts) + " }"


def _format_map(entries: tuple[tuple[str, float], ...]) -> str:
    return "{ " + ", ".join(f"{lvl} -> {value!r}" for lvl, value in entries) + " }"


def serialize_overlay(spec: OverlaySpec) -> str:
    """Emit an OverlaySpec as canonical overlay text."""
    lines = [f"overlay {_quote(spec.name)}", ""]
    for flag in spec.red_flags:
        terms = " and ".join(
            f"{t.ref} {t.comparator.value} {t.level}" for t in flag.conditions
        )
        lines.append(f"redflag {_quote(flag.id)} severity {flag.severity.value}")
        lines.append(f"  when {terms}")
        lines.append(f"  message {_quote(flag.message)}")
        lines.append("")
    for entry in spec.risk_entries:
        lines.append(
            f"risk {entry.ref} weight {entry.weight!r} {_format_map(entry.severity_map)}"
        )
    if spec.risk_entries:
        lines.append("")
    for cat in spec.valuation_categories:
        lines.append(f"valuation category {_quote(cat.name)} base {cat.base!r}")
        for drv in cat.drivers:
            lines.append(f"  driver {drv.ref} {_format_map(drv.multipliers)}")
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


def serialize_kb(kb: KnowledgeBase) -> str:
    """Emit a KnowledgeBase as canonical KBDL text.

    Scales come first (in model order), then attributes, then the goal;
    re-parsing the output reconstructs a structurally identical model and
    re-serializing is byte-stable.
    """
    lines = [f"kb {_quote(kb.id)} version {kb.version}", ""]
    for scale in kb.scales:
        lines.append(f"scale {scale.name} = {' | '.join(scale.levels)}")
    if kb.scales:
        lines.append("")
    for attr in kb.attributes:
        if attr.is_input:
            lines.append(f"attribute {attr.name} : {attr.scale} input")
            lines.append(f"  question {_quote(attr.question or '')}")
            if attr.help is not None:
                lines.append(f"  {_format_help(attr.help)}")
        else:
            lines.append(f"attribute {attr.name} : {attr.scale} derived")
            assert attr.rules is not None
            lines.append(format_rule_block(attr.rules, indent="  "))
        lines.append("")
    lines.append(f"goal {kb.goal}")
    return "\n".join(lines) + "\n"
