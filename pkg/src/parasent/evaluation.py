"""Semantic-similarity evaluation: scoring, correlations, and model selection."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import read_scored_pairs
from .exceptions import DegenerateVectorError, FormatError

__all__ = [
    "EvalDataset",
    "EvalReport",
    "Selection",
    "aggregate",
    "average_ranks",
    "evaluate",
    "load_manifest",
    "pearson_r",
    "score_pairs",
    "spearman_rho",
]

MODES = ("test", "oracle")


@dataclass
class EvalDataset:
    name: str
    pairs: list

    def __post_init__(self):
        if not self.pairs:
            raise FormatError(f"dataset {self.name!r} is empty")
        for s1, s2, gold in self.pairs:
            if not 0.0 <= gold <= 5.0:
                raise FormatError(f"dataset {self.name!r}: gold score {gold} outside [0, 5]")

    @property
    def gold(self):
        return np.array([g for _, _, g in self.pairs], dtype=np.float64)

    @classmethod
    def from_file(cls, path, name=None):
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls(name or path.stem, read_scored_pairs(fh))


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("correlation needs two 1-D sequences of equal length")
    if x.size < 2:
        raise ValueError("correlation needs at least two observations")
    return x, y


def pearson_r(x, y):
    """Sample Pearson correlation; raises on zero variance."""
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance")
    r = np.dot(dx, dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def average_ranks(x):
    """1-based ranks with ties sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    sorted_x = x[order]
    start = 0
    while start < x.size:
        stop = start + 1
        while stop < x.size and sorted_x[stop] == sorted_x[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + stop - 1) + 1.0
        start = stop
    return ranks


def spearman_rho(x, y):
    x, y = _check_pair(x, y)
    return pearson_r(average_ranks(x), average_ranks(y))


def score_pairs(dataset, model, scale_to_range=False):
    """Cosine similarity per pair, optionally mapped from [-1, 1] onto [0, 5].

    ``model`` must provide ``embed(sentences) -> (n, d) array``.
    """
    pairs = dataset.pairs if isinstance(dataset, EvalDataset) else dataset
    left = np.asarray(model.embed([p[0] for p in pairs]), dtype=np.float64)
    right = np.asarray(model.embed([p[1] for p in pairs]), dtype=np.float64)
    nl = np.linalg.norm(left, axis=1)
    nr = np.linalg.norm(right, axis=1)
    bad = np.flatnonzero((nl == 0) | (nr == 0))
    if bad.size:
        i = int(bad[0])
        raise DegenerateVectorError(f"zero embedding for pair {i}: {pairs[i][0]!r} / {pairs[i][1]!r}")
    cos = np.clip((left * right).sum(axis=1) / (nl * nr), -1.0, 1.0)
    return 2.5 * (cos + 1.0) if scale_to_range else cos


def load_manifest(path):
    """Parse ``group: file1, file2`` lines into ``{group: [paths]}``.

    Relative paths resolve against the manifest's directory. Dataset names
    (file stems) must be unique across groups.
    """
    path = Path(path)
    groups = {}
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise FormatError("expected 'group: file1, file2, ...'", lineno)
            group, files = line.split(":", 1)
            group = group.strip()
            entries = [f.strip() for f in files.split(",") if f.strip()]
            if not group or not entries:
                raise FormatError("manifest line needs a group name and at least one file", lineno)
            resolved = []
            for entry in entries:
                p = Path(entry)
                p = p if p.is_absolute() else path.parent / p
                if p.stem in seen:
                    raise FormatError(f"dataset name {p.stem!r} appears twice", lineno)
                seen.add(p.stem)
                resolved.append(p)
            groups.setdefault(group, []).extend(resolved)
    if not groups:
        raise FormatError("manifest lists no datasets")
    return groups


@dataclass
class EvalReport:
    """Correlations of one model on every dataset, plus group means."""

    name: str
    pearson: dict = field(default_factory=dict)
    spearman: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)

    def group_means(self):
        return {g: float(np.mean([self.pearson[d] for d in names])) for g, names in self.groups.items()}

    def rows(self):
        rows = []
        for group, names in self.groups.items():
            for d in names:
                rows.append((self.name, group, d, self.pearson[d], self.spearman[d]))
        return rows

    def to_tsv(self):
        lines = ["model\tgroup\tdataset\tpearson\tspearman"]
        lines += [f"{m}\t{g}\t{d}\t{p:.6f}\t{s:.6f}" for m, g, d, p, s in self.rows()]
        for g, mean in self.group_means().items():
            lines.append(f"{self.name}\t{g}\t<mean>\t{mean:.6f}\t")
        return "\n".join(lines) + "\n"

    def to_text(self):
        return format_table(["model", "group", "dataset", "pearson", "spearman"],
                            [(m, g, d, f"{p:.4f}", f"{s:.4f}") for m, g, d, p, s in self.rows()]
                            + [(self.name, g, "<mean>", f"{v:.4f}", "") for g, v in self.group_means().items()])


def format_table(header, rows):
    rows = [tuple(str(c) for c in header)] + [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def evaluate(model, datasets, groups=None, name="model"):
    """Score ``model`` on ``datasets`` (name -> EvalDataset) in name order."""
    report = EvalReport(name)
    for dname in sorted(datasets):
        ds = datasets[dname]
        pred = score_pairs(ds, model)
        report.pearson[dname] = pearson_r(pred, ds.gold)
        report.spearman[dname] = spearman_rho(pred, ds.gold)
    report.groups = groups if groups is not None else {"all": sorted(datasets)}
    return report


@dataclass
class Selection:
    mode: str
    winner: str
    score: float
    criterion: dict
    per_dataset: dict
    group_means: dict

    def to_text(self):
        lines = [f"selection: {self.mode}", f"winner: {self.winner}", f"selection score: {self.score:.6f}"]
        lines += [f"candidate {k}: {v:.6f}" for k, v in self.criterion.items()]
        lines += [f"group {g}: {v:.6f}" for g, v in self.group_means.items()]
        lines += [f"dataset {d}: {v:.6f}" for d, v in self.per_dataset.items()]
        return "\n".join(lines) + "\n"


def aggregate(reports, mode, groups, held_out_group=None):
    """Choose a configuration from per-dataset Pearson scores.

    ``reports`` maps configuration name to ``{dataset: pearson}`` (or an
    :class:`EvalReport`); ``groups`` maps group name to dataset names.
    ``test`` maximizes the mean over ``held_out_group``; ``oracle``
    maximizes the mean over every dataset outside that group (all datasets
    when no group is held out). Ties go to the first configuration given.
    """
    mode = mode.lower()
    if mode not in MODES:
        raise ValueError(f"selection mode must be one of {MODES}")
    if not reports:
        raise ValueError("no configurations to select from")
    scores = {k: (v.pearson if isinstance(v, EvalReport) else dict(v)) for k, v in reports.items()}
    every = [d for names in groups.values() for d in names]
    for config, table in scores.items():
        missing = [d for d in every if d not in table]
        if missing:
            raise ValueError(f"configuration {config!r} has no result for {', '.join(missing)}")
    if held_out_group is not None and held_out_group not in groups:
        raise ValueError(f"unknown held-out group {held_out_group!r}")
    if mode == "test":
        if held_out_group is None:
            raise ValueError("test selection needs a held-out group")
        basis = list(groups[held_out_group])
    else:
        held = set(groups[held_out_group]) if held_out_group is not None else set()
        basis = [d for d in every if d not in held]
    if not basis:
        raise ValueError("no datasets to select on")
    criterion = {k: float(np.mean([t[d] for d in basis])) for k, t in scores.items()}
    winner = max(criterion, key=lambda k: criterion[k])
    table = scores[winner]
    return Selection(
        mode=mode,
        winner=winner,
        score=criterion[winner],
        criterion=criterion,
        per_dataset={d: table[d] for d in every},
        group_means={g: float(np.mean([table[d] for d in names])) for g, names in groups.items()},
    )

