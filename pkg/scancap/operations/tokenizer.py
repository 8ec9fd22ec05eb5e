from dataclasses import dataclass, field

from scancap.operations.errors import InputError

PAD, BOS, EOS, IMG = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<img>")

COLORS = ("red", "green", "blue", "yellow")
SHAPES = ("square", "circle", "bar")
DIRECTIONS = ("left", "right", "up", "down")
EVENTS = ("none", "vanish", "flash")
EVENT_WORDS = {"vanish": "vanishes", "flash": "flashes"}

CAPTION_WORDS = (
    ("a", "moves", "then") + COLORS + SHAPES + DIRECTIONS + tuple(EVENT_WORDS.values())
)


@dataclass
class TokenSequence:
    ids: list[int] = field(default_factory=list)

    def validate(self, vocab_size: int) -> "TokenSequence":
        if any(i < 0 or i >= vocab_size for i in self.ids):
            raise InputError(f"token id outside vocabulary of size {vocab_size}")
        if self.ids.count(EOS) > 1:
            raise InputError("token sequence holds more than one EOS")
        if PAD in self.ids:
            first = self.ids.index(PAD)
            if any(i != PAD for i in self.ids[first:]):
                raise InputError("PAD may only appear as a suffix")
        return self

    def __len__(self) -> int:
        return len(self.ids)


class Vocabulary:
    """Word-level vocabulary over the caption grammar plus the four specials."""

    def __init__(self, words: tuple[str, ...] = CAPTION_WORDS) -> None:
        self.words = list(SPECIALS) + list(words)
        self.index = {word: i for i, word in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, text: str) -> list[int]:
        try:
            return [self.index[word] for word in text.lower().split()]
        except KeyError as exc:
            raise InputError(f"word {exc.args[0]!r} is not in the vocabulary") from None

    def decode(self, ids: list[int]) -> str:
        words = []
        for i in ids:
            if i == EOS:
                break
            if i in (PAD, BOS, IMG):
                continue
            words.append(self.words[i])
        return " ".join(words)

    def caption_ids(self, text: str) -> TokenSequence:
        """BOS + caption + EOS."""
        return TokenSequence([BOS] + self.encode(text) + [EOS])
