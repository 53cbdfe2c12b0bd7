"""Corpus ingestion: vocabularies, context-value registries, encoding.

File format: UTF-8 text, one example per line, TAB-separated fields.
The first n fields are the values of the n context variables, the last
field is the text (space-separated tokens in word mode, raw characters
in char mode).  Text fields therefore cannot contain TABs.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

UNK_TOKEN = "<unk>"
BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
SPECIALS = (UNK_TOKEN, BOS_TOKEN, EOS_TOKEN)

TOKENIZER_MODES = ("word", "char")


class CorpusFormatError(ValueError):
    """A corpus line violates the TAB-separated format."""


def tokenize(text: str, mode: str) -> list[str]:
    """Split a text field into tokens. Char mode keeps every character."""
    if mode == "word":
        return text.split()
    if mode == "char":
        return list(text)
    raise ValueError(f"unknown tokenizer_mode {mode!r}")


def _parse_line(line: str, lineno: int, n_vars: int) -> tuple[list[str], str]:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != n_vars + 1:
        raise CorpusFormatError(
            f"line {lineno}: expected {n_vars} context fields + text "
            f"({n_vars + 1} TAB-separated fields), got {len(fields)}"
        )
    return fields[:n_vars], fields[n_vars]


def _iter_lines(corpus_path, n_vars=None):
    """Yield (lineno, context_fields, text). n_vars inferred from line 1 if None."""
    with open(corpus_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if n_vars is None:
                n_vars = line.rstrip("\n").count("\t")
            yield lineno, *_parse_line(line, lineno, n_vars)


class Vocabulary:
    """Token <-> id bijection with counts.

    Ids 0..2 are the specials <unk>, <s>, </s>; content tokens follow in
    order of decreasing count (ties broken lexicographically).  Counts
    back the unigram proposal used for negative sampling: <unk> carries
    the total count of dropped tokens, </s> one count per sentence, and
    <s> zero (it is never predicted).
    """

    def __init__(self, tokens: list[str], counts: np.ndarray):
        assert tuple(tokens[:3]) == SPECIALS
        self.tokens = list(tokens)
        self.counts = np.asarray(counts, dtype=np.int64)
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    unk_id = 0
    bos_id = 1
    eos_id = 2

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        return self._ids.get(token, self.unk_id)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def unigram(self) -> np.ndarray:
        """Count-proportional distribution over ids; uniform if all zero."""
        total = int(self.counts.sum())
        if total == 0:
            return np.full(len(self), 1.0 / len(self))
        return self.counts / total

    def save(self, path) -> None:
        """One token per line; line number (0-based) is the id."""
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.tokens:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        """Inverse of save. Counts are not stored in the text format."""
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        return cls(tokens, np.zeros(len(tokens), dtype=np.int64))


def build_vocab(corpus_path, min_count: int, tokenizer_mode: str, n_vars=None) -> Vocabulary:
    """Count tokens in the corpus and keep those occurring >= min_count.

    Dropped tokens fold into <unk>'s count. An empty corpus yields the
    three specials only (warned, not an error).
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if tokenizer_mode not in TOKENIZER_MODES:
        raise ValueError(f"tokenizer_mode must be one of {TOKENIZER_MODES}")
    raw: dict[str, int] = {}
    n_sentences = 0
    for _, _, text in _iter_lines(corpus_path, n_vars):
        n_sentences += 1
        for tok in tokenize(text, tokenizer_mode):
            raw[tok] = raw.get(tok, 0) + 1
    kept = [(t, c) for t, c in raw.items() if c >= min_count and t not in SPECIALS]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    dropped = sum(c for t, c in raw.items() if c < min_count and t not in SPECIALS)
    tokens = list(SPECIALS) + [t for t, _ in kept]
    counts = np.array([dropped, 0, n_sentences] + [c for _, c in kept], dtype=np.int64)
    if not kept:
        log.warning("vocabulary from %s holds only the special tokens", corpus_path)
    return Vocabulary(tokens, counts)


def split_long_utterances(token_ids, max_len: int):
    """Chop a token sequence into consecutive chunks of <= max_len tokens.

    Counts content tokens only; sentence-boundary ids are added later,
    at encode time.  An empty input yields one empty chunk.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    token_ids = list(token_ids)
    if not token_ids:
        return [[]]
    return [token_ids[i : i + max_len] for i in range(0, len(token_ids), max_len)]


def build_context_registry(corpus_path, variable_index: int, threshold: int,
                           tokenizer_mode: str = "word", max_len=None) -> dict[str, int]:
    """value -> id map for one context variable.

    A value keeps a distinct id only when it labels at least `threshold`
    training sentences (counted after long-utterance splitting); all
    other values share the <unk> bucket, id 0.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    counts: dict[str, int] = {}
    for lineno, ctx, text in _iter_lines(corpus_path):
        if variable_index >= len(ctx):
            raise CorpusFormatError(
                f"line {lineno}: context variable {variable_index} out of range "
                f"({len(ctx)} fields)"
            )
        n_tokens = len(tokenize(text, tokenizer_mode))
        n_chunks = max(1, math.ceil(n_tokens / max_len)) if max_len else 1
        counts[ctx[variable_index]] = counts.get(ctx[variable_index], 0) + n_chunks
    kept = [(v, c) for v, c in counts.items() if c >= threshold and v != UNK_TOKEN]
    kept.sort(key=lambda vc: (-vc[1], vc[0]))
    return {v: i + 1 for i, (v, _) in enumerate(kept)}


class ContextValueRegistry:
    """Per-variable value <-> id maps; id 0 is each variable's <unk> bucket."""

    def __init__(self, variables: list[str], value_lists: list[list[str]]):
        if len(variables) != len(value_lists):
            raise ValueError("one value list per variable required")
        self.variables = list(variables)
        self.values = [list(vs) for vs in value_lists]
        for vs in self.values:
            assert vs[0] == UNK_TOKEN
        self._maps = [{v: i for i, v in enumerate(vs)} for vs in self.values]

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def cardinality(self, var: int) -> int:
        return len(self.values[var])

    def cardinalities(self) -> list[int]:
        return [len(vs) for vs in self.values]

    def value_id(self, var: int, value: str) -> int:
        return self._maps[var].get(value, 0)

    def value_str(self, var: int, idx: int) -> str:
        return self.values[var][idx]

    def variable_index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise KeyError(f"unknown context variable {name!r}") from None

    @classmethod
    def build(cls, corpus_path, variables: list[str], thresholds: list[int],
              tokenizer_mode: str = "word", max_len=None) -> "ContextValueRegistry":
        value_lists = []
        for i, _ in enumerate(variables):
            mapping = build_context_registry(corpus_path, i, thresholds[i],
                                             tokenizer_mode, max_len)
            ordered = [UNK_TOKEN] + [v for v, _ in sorted(mapping.items(), key=lambda kv: kv[1])]
            value_lists.append(ordered)
        return cls(variables, value_lists)

    def save(self, path) -> None:
        """TSV lines: variable <TAB> value <TAB> id."""
        with open(path, "w", encoding="utf-8") as fh:
            for var, vs in zip(self.variables, self.values):
                for i, v in enumerate(vs):
                    fh.write(f"{var}\t{v}\t{i}\n")

    @classmethod
    def load(cls, path) -> "ContextValueRegistry":
        variables: list[str] = []
        lists: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                var, value, idx = line.rstrip("\n").split("\t")
                if var not in lists:
                    variables.append(var)
                    lists[var] = []
                if int(idx) != len(lists[var]):
                    raise ValueError(f"non-contiguous ids for variable {var!r}")
                lists[var].append(value)
        return cls(variables, [lists[v] for v in variables])


@dataclass
class EncodedExample:
    """One training/evaluation sentence in integer form."""

    context_ids: np.ndarray  # (n,) int64, one id per context variable
    token_ids: np.ndarray    # int64, [<s>, w_1, ..., w_L, </s>]


def encode_stream(corpus_path, vocab: Vocabulary, registry: ContextValueRegistry,
                  tokenizer_mode: str = "word", max_len=None):
    """Yield EncodedExamples in file order; unknowns map to <unk> ids.

    Long sentences are split into chunks of max_len content tokens, each
    chunk re-wrapped in boundary tokens and sharing the line's context.
    """
    n = registry.n_vars
    for lineno, ctx, text in _iter_lines(corpus_path, n_vars=n):
        ctx_ids = np.array([registry.value_id(i, v) for i, v in enumerate(ctx)],
                           dtype=np.int64)
        ids = [vocab.lookup(t) for t in tokenize(text, tokenizer_mode)]
        chunks = split_long_utterances(ids, max_len) if max_len else [ids]
        for chunk in chunks:
            toks = np.array([vocab.bos_id] + chunk + [vocab.eos_id], dtype=np.int64)
            yield EncodedExample(ctx_ids, toks)
