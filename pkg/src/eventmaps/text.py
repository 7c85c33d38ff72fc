"""Tokenization, TF-IDF vectors, cosine similarity, corpus classification,
and keyword-peak detection for unspecified topics."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources


_TOKEN_RE = re.compile(r"#?\w+")
_stopwords: frozenset[str] | None = None


def load_stopwords(path: str | None = None) -> frozenset[str]:
    if path is None:
        raw = resources.files("eventmaps").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    words = set()
    for line in raw.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


def default_stopwords() -> frozenset[str]:
    global _stopwords
    if _stopwords is None:
        _stopwords = load_stopwords()
    return _stopwords


def tokenize(text: str, stopwords: frozenset[str] | None = None) -> list[str]:
    """Lowercased tokens with punctuation stripped, stopwords and tokens
    shorter than 2 chars removed; hashtags are kept without the '#'."""
    if not text:
        return []
    if stopwords is None:
        stopwords = default_stopwords()
    out = []
    for tok in _TOKEN_RE.findall(text.lower()):
        tok = tok.lstrip("#")
        if len(tok) < 2 or tok in stopwords:
            continue
        out.append(tok)
    return out


@dataclass(frozen=True)
class TermVector:
    """Sparse term-weight map with its Euclidean norm cached."""

    weights: dict[str, float]
    norm: float

    @classmethod
    def from_weights(cls, weights: dict[str, float]) -> "TermVector":
        clean = {t: w for t, w in weights.items() if w != 0.0}
        norm = math.sqrt(sum(w * w for w in clean.values()))
        return cls(clean, norm)

    @classmethod
    def zero(cls) -> "TermVector":
        return cls({}, 0.0)

    def top_terms(self, k: int) -> list[tuple[str, float]]:
        """Top-k terms by weight, ties broken by term."""
        ranked = sorted(self.weights.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[:k]


@dataclass
class VocabularyStats:
    """Document counts backing the IDF denominator for one batch window."""

    doc_count: int = 0
    doc_freq: dict[str, int] = field(default_factory=dict)
    window_id: str = ""

    def add_document(self, tokens: list[str]) -> None:
        self.doc_count += 1
        for t in set(tokens):
            self.doc_freq[t] = self.doc_freq.get(t, 0) + 1


def tf_idf(tokens: list[str], stats: VocabularyStats) -> TermVector:
    """weight(t) = tf(t) * ln(1 + doc_count / (1 + doc_freq(t))), tf = raw count.

    Unknown terms get doc_freq 0, smoothed by the +1.
    """
    if not tokens:
        return TermVector.zero()
    counts: dict[str, int] = {}
    for t in tokens:
        counts[t] = counts.get(t, 0) + 1
    n = stats.doc_count
    df = stats.doc_freq
    weights = {t: c * math.log(1.0 + n / (1.0 + df.get(t, 0))) for t, c in counts.items()}
    return TermVector.from_weights(weights)


def cosine(a: TermVector, b: TermVector) -> float:
    """dot(a, b) / (|a| * |b|); 0 if either norm is 0."""
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    if len(b.weights) < len(a.weights):
        a, b = b, a
    dot = 0.0
    bw = b.weights
    for t, w in a.weights.items():
        other = bw.get(t)
        if other is not None:
            dot += w * other
    return dot / (a.norm * b.norm)


def mean_vector(vectors: list[TermVector], weights: list[float] | None = None) -> TermVector:
    """Weighted mean of term vectors (uniform when weights omitted)."""
    if not vectors:
        return TermVector.zero()
    if weights is None:
        weights = [1.0] * len(vectors)
    total = sum(weights)
    if total == 0.0:
        return TermVector.zero()
    acc: dict[str, float] = {}
    for vec, w in zip(vectors, weights):
        for t, v in vec.weights.items():
            acc[t] = acc.get(t, 0.0) + v * w
    return TermVector.from_weights({t: v / total for t, v in acc.items()})


class CorpusError(ValueError):
    """Malformed classifier corpus definition."""


@dataclass
class ClassCorpus:
    """Seed term sets per event class, compared to packet vectors by cosine."""

    classes: dict[str, dict[str, float]]
    threshold: float = 0.30

    def __post_init__(self) -> None:
        if not (0.0 < self.threshold <= 1.0):
            raise CorpusError(f"threshold out of (0, 1]: {self.threshold}")
        for name, seeds in self.classes.items():
            if not name or not seeds:
                raise CorpusError(f"class {name!r} has no seed terms")
        self._seed_vectors = {
            name: TermVector.from_weights(seeds) for name, seeds in self.classes.items()
        }

    def seed_vector(self, name: str) -> TermVector:
        return self._seed_vectors[name]

    @classmethod
    def parse(cls, text: str, threshold: float = 0.30) -> "ClassCorpus":
        classes: dict[str, dict[str, float]] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise CorpusError(f"line {lineno}: expected 'class: terms'")
            name, _, rest = line.partition(":")
            name = name.strip().lower()
            seeds: dict[str, float] = {}
            for part in rest.split(","):
                part = part.strip()
                if not part:
                    continue
                pieces = part.rsplit(" ", 1)
                if len(pieces) == 2:
                    try:
                        weight = float(pieces[1])
                        term = pieces[0].strip().lower()
                    except ValueError:
                        weight, term = 1.0, part.lower()
                else:
                    weight, term = 1.0, part.lower()
                if not term:
                    raise CorpusError(f"line {lineno}: empty term")
                seeds[term] = weight
            if not seeds:
                raise CorpusError(f"line {lineno}: class {name!r} has no terms")
            classes[name] = seeds
        return cls(classes, threshold)

    @classmethod
    def load(cls, path: str | None = None, threshold: float = 0.30) -> "ClassCorpus":
        if path is None:
            raw = resources.files("eventmaps").joinpath("data/event_classes.txt").read_text("utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                raw = fh.read()
        return cls.parse(raw, threshold)


def classify(vec: TermVector, corpus: ClassCorpus) -> tuple[str, float] | None:
    """Argmax class by cosine against the seed vectors, when the best score
    clears the corpus threshold. Ties break by lexicographic class name."""
    if vec.norm == 0.0:
        return None
    best_name: str | None = None
    best_score = 0.0
    for name in sorted(corpus.classes):
        score = cosine(vec, corpus.seed_vector(name))
        if score > best_score:
            best_name, best_score = name, score
    if best_name is None or best_score < corpus.threshold:
        return None
    return best_name, best_score


@dataclass(frozen=True)
class PeakParams:
    min_count: int = 10
    ratio_threshold: float = 3.0

    def __post_init__(self) -> None:
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if self.ratio_threshold <= 1.0:
            raise ValueError("ratio_threshold must be > 1")


@dataclass
class KeywordBaseline:
    """Exponentially-weighted per-keyword mean and variance over past windows."""

    half_life: float = 8.0
    mean: dict[str, float] = field(default_factory=dict)
    variance: dict[str, float] = field(default_factory=dict)

    @property
    def alpha(self) -> float:
        return 1.0 - 0.5 ** (1.0 / self.half_life)

    def update(self, window_counts: dict[str, int]) -> None:
        a = self.alpha
        for kw in set(self.mean) | set(window_counts):
            x = float(window_counts.get(kw, 0))
            m = self.mean.get(kw, 0.0)
            v = self.variance.get(kw, 0.0)
            delta = x - m
            self.mean[kw] = m + a * delta
            self.variance[kw] = (1.0 - a) * (v + a * delta * delta)


def detect_peaks(
    window_counts: dict[str, int],
    baseline: KeywordBaseline,
    params: PeakParams,
) -> list[tuple[str, float]]:
    """Keywords whose window count spikes against their baseline mean.

    A keyword is flagged iff count >= min_count and
    count / max(mean, 1) >= ratio_threshold; the score is that ratio.
    The baseline is updated with the window after flagging.
    """
    flagged: list[tuple[str, float]] = []
    for kw in sorted(window_counts):
        count = window_counts[kw]
        if count < params.min_count:
            continue
        ratio = count / max(baseline.mean.get(kw, 0.0), 1.0)
        if ratio >= params.ratio_threshold:
            flagged.append((kw, ratio))
    baseline.update(window_counts)
    flagged.sort(key=lambda kv: (-kv[1], kv[0]))
    return flagged
