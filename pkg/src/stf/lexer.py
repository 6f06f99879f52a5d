"""Tokenizer for ``.stf`` model files."""

from __future__ import annotations

import re
from dataclasses import dataclass

from stf.model import SourceSpan

KEYWORDS = frozenset("""
    import thing fragment includes property message port receives sends
    data_analytics dataset features labels sequential window horizon scaling
    missing model automl metric folds budget pretrained statechart init state
    on_entry on_exit transition event guard var print if else while and or not
    true false da_save da_preprocess da_train da_predict configuration instance
    connector Int Float Bool String Timestamp
""".split())

# longest first
PUNCTUATION = ("<->", "->", "==", "!=", "<=", ">=", "{", "}", "(", ")", ",", ":",
               "=", ".", "!", "@", ";", "+", "-", "*", "/", "%", "<", ">")

_NUMBER = re.compile(r"\d+(\.\d+)?([eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | ident | int | float | string | punct | eof
    lexeme: str
    span: SourceSpan
    value: object = None

    def describe(self) -> str:
        if self.kind == "eof":
            return "end of input"
        if self.kind in ("keyword", "punct"):
            return f"'{self.lexeme}'"
        return f"{self.kind} '{self.lexeme}'"


@dataclass(frozen=True)
class LexError:
    message: str
    span: SourceSpan


def tokenize(text: str, filename: str = "<input>") -> tuple[list[Token], list[LexError]]:
    tokens: list[Token] = []
    errors: list[LexError] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for ch in text[i:i + k]:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
        i += k

    def span_from(start: int, sline: int, scol: int) -> SourceSpan:
        return SourceSpan(sline, scol, line, col, start, i, filename)

    while i < n:
        ch = text[i]
        if ch in " \t\r\n\ufeff":
            advance(1)
            continue
        if text.startswith("//", i):
            end = text.find("\n", i)
            advance((end if end >= 0 else n) - i)
            continue
        if text.startswith("/*", i):
            start, sl, sc = i, line, col
            end = text.find("*/", i + 2)
            if end < 0:
                advance(n - i)
                errors.append(LexError("unterminated block comment", span_from(start, sl, sc)))
            else:
                advance(end + 2 - i)
            continue
        start, sl, sc = i, line, col
        if ch == '"':
            j = i + 1
            buf = []
            closed = False
            while j < n:
                c = text[j]
                if c == '"':
                    closed = True
                    break
                if c == "\\" and j + 1 < n and text[j + 1] in _ESCAPES:
                    buf.append(_ESCAPES[text[j + 1]])
                    j += 2
                    continue
                if c == "\n":
                    break
                buf.append(c)
                j += 1
            if not closed:
                advance(j - i)
                errors.append(LexError("unterminated string literal", span_from(start, sl, sc)))
                continue
            advance(j + 1 - i)
            tokens.append(Token("string", text[start:i], span_from(start, sl, sc), "".join(buf)))
            continue
        m = _NUMBER.match(text, i)
        if m:
            lex = m.group(0)
            advance(len(lex))
            if m.group(1) or m.group(2):
                tokens.append(Token("float", lex, span_from(start, sl, sc), float(lex)))
            else:
                tokens.append(Token("int", lex, span_from(start, sl, sc), int(lex)))
            continue
        m = _IDENT.match(text, i)
        if m:
            lex = m.group(0)
            advance(len(lex))
            kind = "keyword" if lex in KEYWORDS else "ident"
            tokens.append(Token(kind, lex, span_from(start, sl, sc), lex))
            continue
        for p in PUNCTUATION:
            if text.startswith(p, i):
                advance(len(p))
                tokens.append(Token("punct", p, span_from(start, sl, sc), p))
                break
        else:
            advance(1)
            errors.append(LexError(f"unexpected character {ch!r}", span_from(start, sl, sc)))
    tokens.append(Token("eof", "", SourceSpan(line, col, line, col, i, i, filename)))
    return tokens, errors
