"""Caption metrics: nltk BLEU with brevity penalty and LCS-based ROUGE-L.

BLEU uses uniform weights over orders 1..n_max, counts clipped against the
maximum count of each n-gram over all references, and the closest reference
length (shorter on a tie) for the brevity penalty. An order with no matching
n-gram makes the score exactly 0; nothing is smoothed.
"""

from nltk.translate.bleu_score import corpus_bleu as nltk_corpus_bleu
from nltk.translate.bleu_score import sentence_bleu
from pydantic import BaseModel, field_validator

from scancap.operations.errors import InputError

ROUGE_BETA = 1.2


def tokens(text: str) -> list[str]:
    return text.lower().split()


class EvalRecord(BaseModel):
    candidate: list[str]
    references: list[list[str]]

    @field_validator("candidate")
    @classmethod
    def lowercase_candidate(cls, value: list[str]) -> list[str]:
        return [word.lower() for word in value]

    @field_validator("references")
    @classmethod
    def lowercase_references(cls, value: list[list[str]]) -> list[list[str]]:
        if not value:
            raise ValueError("at least one reference is required")
        return [[word.lower() for word in ref] for ref in value]

    @classmethod
    def from_text(cls, candidate: str, references: list[str]) -> "EvalRecord":
        return cls(candidate=tokens(candidate), references=[tokens(r) for r in references])


class ZeroOrderGuard:
    """nltk smoothing hook that flags an order without matches instead of smoothing it."""

    def __init__(self) -> None:
        self.missing = False

    def __call__(self, p_n, *args, **kwargs):
        self.missing = any(p.numerator == 0 for p in p_n)
        # placeholders keep nltk's log finite; the score is discarded
        return [p if p.numerator else 1 for p in p_n]


def _weights(n_max: int) -> tuple[float, ...]:
    if not 1 <= n_max <= 4:
        raise InputError(f"BLEU order must be in 1..4, got {n_max}")
    return (1.0 / n_max,) * n_max


def bleu(candidate: list[str], references: list[list[str]], n_max: int = 4) -> float:
    """Sentence BLEU-n_max in [0, 1]."""
    weights = _weights(n_max)
    if not references:
        raise InputError("BLEU needs at least one reference")
    if not candidate:
        return 0.0
    guard = ZeroOrderGuard()
    score = sentence_bleu(references, candidate, weights=weights, smoothing_function=guard)
    return 0.0 if guard.missing else float(score)


def corpus_bleu(records: list[EvalRecord], n_max: int = 4) -> float:
    """Counts and lengths are summed over the corpus before any ratio is taken."""
    weights = _weights(n_max)
    if not any(r.candidate for r in records):
        return 0.0
    guard = ZeroOrderGuard()
    score = nltk_corpus_bleu(
        [r.references for r in records],
        [r.candidate for r in records],
        weights=weights,
        smoothing_function=guard,
    )
    return 0.0 if guard.missing else float(score)


def lcs_length(a: list[str], b: list[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            current.append(previous[j - 1] + 1 if x == y else max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate: list[str], references: list[list[str]], beta: float = ROUGE_BETA) -> float:
    """Best LCS F-measure over the references."""
    if not references:
        raise InputError("ROUGE-L needs at least one reference")
    if not candidate:
        return 0.0
    best = 0.0
    for ref in references:
        lcs = lcs_length(candidate, ref)
        if lcs == 0 or not ref:
            continue
        precision = lcs / len(candidate)
        recall = lcs / len(ref)
        f = (1 + beta**2) * precision * recall / (recall + beta**2 * precision)
        best = max(best, f)
    return best


def corpus_rouge_l(records: list[EvalRecord]) -> float:
    if not records:
        return 0.0
    return sum(rouge_l(r.candidate, r.references) for r in records) / len(records)
