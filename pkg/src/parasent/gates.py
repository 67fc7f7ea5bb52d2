"""Per-token gate norms of GRAN models, aggregated by POS tag and dependency label.

The tagged corpus is a five-column, tab-separated format (ID, FORM, POS,
HEAD, DEPREL), one token per line, sentences separated by blank lines.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, FormatError
from .vocab import encode

__all__ = [
    "GROUPINGS",
    "NormTable",
    "TaggedCorpus",
    "TaggedSentence",
    "TaggedToken",
    "aggregate_norms",
    "gate_l1_per_token",
    "load_tagged_corpus",
]

GROUPINGS = ("pos", "dep", "pos_x_dep")
TOKEN_CAP = 15


@dataclass(frozen=True)
class TaggedToken:
    form: str
    pos: str
    head: int
    deprel: str


@dataclass(frozen=True)
class TaggedSentence:
    tokens: tuple

    def __len__(self):
        return len(self.tokens)

    @property
    def forms(self):
        return [t.form for t in self.tokens]

    def key(self, tok, group_by):
        if group_by == "pos":
            return tok.pos
        if group_by == "dep":
            return tok.deprel
        return f"{tok.pos}|{tok.deprel}"


@dataclass
class TaggedCorpus:
    sentences: list = field(default_factory=list)
    skipped: int = 0

    def __iter__(self):
        return iter(self.sentences)

    def __len__(self):
        return len(self.sentences)


def _finish(rows, cap, corpus):
    if not rows:
        return
    n = len(rows)
    for offset, (lineno, tok_id, tok) in enumerate(rows):
        if tok_id != offset + 1:
            raise FormatError(f"token ID {tok_id} out of sequence (expected {offset + 1})", lineno)
        if not 0 <= tok.head <= n:
            raise FormatError(f"head {tok.head} outside 0..{n}", lineno)
    if n > cap:
        corpus.skipped += 1
    else:
        corpus.sentences.append(TaggedSentence(tuple(t for _, _, t in rows)))


def load_tagged_corpus(stream, token_cap=TOKEN_CAP):
    """Parse the tagged corpus; sentences longer than ``token_cap`` are counted and skipped."""
    if token_cap < 1:
        raise ConfigError("token cap must be positive")
    corpus = TaggedCorpus()
    rows = []
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            _finish(rows, token_cap, corpus)
            rows = []
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise FormatError(f"expected 5 tab-separated columns (ID FORM POS HEAD DEPREL), found {len(parts)}",
                              lineno)
        tok_id, form, pos, head, deprel = (p.strip() for p in parts)
        if not form or not pos or not deprel:
            raise FormatError("empty FORM, POS or DEPREL column", lineno)
        try:
            tok_id, head = int(tok_id), int(head)
        except ValueError:
            raise FormatError("ID and HEAD must be integers", lineno) from None
        rows.append((lineno, tok_id, TaggedToken(form, pos, head, deprel)))
    _finish(rows, token_cap, corpus)
    return corpus


def _float64(params):
    return {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}


def gate_l1_per_token(sentence, model):
    """L1 norm of the (first) gate activation at every word position.

    ``model`` is a :class:`ParaphraseModel` with a unidirectional GRAN
    encoder. The sentence is encoded as the model was trained (with SOS/EOS
    when the model uses them) but those positions are dropped from the result.
    """
    forms = sentence.forms if isinstance(sentence, TaggedSentence) else list(sentence)
    if not forms:
        raise ValueError("empty sentence")
    seq = encode(forms, model.table, model.add_sos, model.add_eos)
    gates = model.encoder.gates(_float64(model.params), [seq])[0]
    norms = np.abs(gates).sum(axis=1)
    lo = 1 if model.add_sos else 0
    return norms[lo:lo + len(forms)].tolist()


@dataclass
class NormTable:
    """Per-key token counts and norm sums; ``rows()`` gives ``(key, mean, count)``."""

    group_by: str
    sums: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def add(self, key, norm):
        self.sums.setdefault(key, []).append(float(norm))
        self.counts[key] = self.counts.get(key, 0) + 1

    def merge(self, other):
        for key, values in other.sums.items():
            self.sums.setdefault(key, []).extend(values)
            self.counts[key] = self.counts.get(key, 0) + other.counts[key]
        return self

    def mean(self, key):
        return math.fsum(self.sums[key]) / self.counts[key]

    def rows(self):
        """Sorted by mean, largest first; equal means fall back to key order."""
        return sorted(((k, self.mean(k), self.counts[k]) for k in self.counts), key=lambda r: (-r[1], r[0]))

    def top(self, k):
        return self.rows()[:k]

    def bottom(self, k):
        return self.rows()[-k:][::-1] if k > 0 else []

    def total(self):
        return math.fsum(v for values in self.sums.values() for v in values)

    def to_tsv(self, rows=None):
        return "".join(f"{k}\t{m:.6f}\t{c}\n" for k, m, c in (self.rows() if rows is None else rows))


def aggregate_norms(sentences, model, group_by="pos"):
    """Mean gate L1 norm per POS tag, dependency label, or ``POS|label`` pair."""
    group_by = group_by.lower().replace("-", "_")
    if group_by not in GROUPINGS:
        raise ConfigError(f"group_by must be one of {', '.join(GROUPINGS)}")
    sentences = list(sentences)
    if not sentences:
        raise ValueError("no sentences to analyze (all skipped or corpus empty)")
    table = NormTable(group_by)
    for sent in sentences:
        part = NormTable(group_by)
        for tok, norm in zip(sent.tokens, gate_l1_per_token(sent, model)):
            part.add(sent.key(tok, group_by), norm)
        table.merge(part)
    return table
