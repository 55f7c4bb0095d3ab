"""WordPiece subword vocabulary training and greedy longest-match encoding.

The trainer starts from single characters (word-initial and "##"-prefixed
continuation variants) and repeatedly merges the adjacent symbol pair with the
highest likelihood score freq(pair) / (freq(left) * freq(right)), breaking ties
by lexicographic order of the merged string. Scores are exact rationals so
tie detection never depends on float rounding.

Encoding segments each pre-tokenized word greedily: take the longest piece
matching the remaining prefix, continuation pieces after the first. A word
with an unmatchable remainder encodes as a single [UNK].
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
CONTINUATION = "##"


class VocabularyError(Exception):
    """Raised for invalid trainer configs or malformed vocabulary files."""


@dataclass(frozen=True)
class TrainerConfig:
    """WordPiece trainer settings.

    vocab_size counts the special tokens. The desk default keeps test runs in
    the seconds range; real-corpus runs use 70000.
    """

    vocab_size: int = 1000
    min_pair_frequency: int = 1
    max_word_length: int = 64

    def __post_init__(self) -> None:
        if self.min_pair_frequency < 1:
            raise VocabularyError("min_pair_frequency must be >= 1")
        if self.vocab_size < len(SPECIALS) + 1:
            raise VocabularyError("vocab_size must exceed the special-token count")


class SubwordVocabulary:
    """Immutable trained vocabulary: ordered pieces with dense ids 0..n-1."""

    def __init__(self, pieces: list[str]):
        if list(pieces[: len(SPECIALS)]) != list(SPECIALS):
            raise VocabularyError(f"first {len(SPECIALS)} pieces must be {SPECIALS}")
        self.pieces = list(pieces)
        self.id_of: dict[str, int] = {}
        for i, p in enumerate(self.pieces):
            if not p:
                raise VocabularyError(f"empty piece at id {i}")
            if p in self.id_of:
                raise VocabularyError(f"duplicate piece {p!r}")
            self.id_of[p] = i
        self._initial_trie = _build_trie(
            p for p in self.pieces[len(SPECIALS):] if not p.startswith(CONTINUATION)
        )
        self._continuation_trie = _build_trie(
            p[len(CONTINUATION):] for p in self.pieces[len(SPECIALS):] if p.startswith(CONTINUATION)
        )

    def __len__(self) -> int:
        return len(self.pieces)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SubwordVocabulary) and self.pieces == other.pieces

    def alphabet(self) -> set[str]:
        """Single characters covered as word-initial pieces."""
        return {p for p in self.pieces[len(SPECIALS):] if len(p) == 1}


_PUNCT_SPLIT = ".,;:!?\"()-"  # apostrophe is a word character, not punctuation


def pretokenize(text: str) -> list[str]:
    """Split normalized text into words: whitespace, then standalone punctuation."""
    words: list[str] = []
    for chunk in text.split():
        start = 0
        for i, ch in enumerate(chunk):
            if ch in _PUNCT_SPLIT:
                if start < i:
                    words.append(chunk[start:i])
                words.append(ch)
                start = i + 1
        if start < len(chunk):
            words.append(chunk[start:])
    return words


def word_frequencies(texts: Iterable[str]) -> Counter:
    """Pre-tokenized word counts over an iterable of normalized texts."""
    freqs: Counter = Counter()
    for text in texts:
        freqs.update(pretokenize(text))
    return freqs


def _segmentation(word: str) -> list[str]:
    return [word[0]] + [CONTINUATION + ch for ch in word[1:]]


def _merged_string(left: str, right: str) -> str:
    return left + (right[len(CONTINUATION):] if right.startswith(CONTINUATION) else right)


def train_wordpiece(
    corpus: Mapping[str, int],
    cfg: TrainerConfig = TrainerConfig(),
    *,
    snapshot_every: int | None = None,
) -> SubwordVocabulary | tuple[SubwordVocabulary, list[list[str]]]:
    """Train a vocabulary from a word-frequency table.

    Deterministic for a given corpus and config. When ``snapshot_every`` is
    set, also returns the piece list captured every N merges (for tests that
    track segmentation across trainer snapshots).
    """
    words = {
        w: f for w, f in corpus.items() if w and f > 0 and len(w) <= cfg.max_word_length
    }
    if not words:
        raise VocabularyError("empty training corpus")

    alphabet = sorted({ch for w in words for ch in w})
    pieces = list(SPECIALS) + alphabet + [CONTINUATION + ch for ch in alphabet]
    if cfg.vocab_size < len(pieces):
        raise VocabularyError(
            f"vocab_size {cfg.vocab_size} smaller than seed set ({len(pieces)} pieces)"
        )

    segs = {w: _segmentation(w) for w in words}
    snapshots: list[list[str]] = []
    merges_done = 0
    while len(pieces) < cfg.vocab_size:
        sym_freq: Counter = Counter()
        pair_freq: Counter = Counter()
        for w, f in words.items():
            seg = segs[w]
            for s in seg:
                sym_freq[s] += f
            for pair in zip(seg, seg[1:]):
                pair_freq[pair] += f

        best_pair = None
        best_score = None
        best_merged = None
        for pair, pf in pair_freq.items():
            if pf < cfg.min_pair_frequency:
                continue
            score = Fraction(pf, sym_freq[pair[0]] * sym_freq[pair[1]])
            merged = _merged_string(*pair)
            if (
                best_score is None
                or score > best_score
                or (score == best_score and merged < best_merged)
            ):
                best_pair, best_score, best_merged = pair, score, merged
        if best_pair is None:
            break

        pieces.append(best_merged)
        for w, seg in segs.items():
            out: list[str] = []
            i = 0
            while i < len(seg):
                if i + 1 < len(seg) and (seg[i], seg[i + 1]) == best_pair:
                    out.append(best_merged)
                    i += 2
                else:
                    out.append(seg[i])
                    i += 1
            segs[w] = out
        merges_done += 1
        if snapshot_every and merges_done % snapshot_every == 0:
            snapshots.append(list(pieces))

    vocab = SubwordVocabulary(pieces)
    if snapshot_every:
        snapshots.append(list(pieces))
        return vocab, snapshots
    return vocab


def _build_trie(pieces: Iterable[str]) -> dict:
    """Character trie; terminal nodes carry the empty-string key."""
    root: dict = {}
    for piece in pieces:
        node = root
        for ch in piece:
            node = node.setdefault(ch, {})
        node[""] = True
    return root


def _trie_longest(trie: dict, word: str, start: int) -> int:
    """Length of the longest trie piece matching word[start:], or 0."""
    node = trie
    best = 0
    for i in range(start, len(word)):
        node = node.get(word[i])
        if node is None:
            break
        if "" in node:
            best = i - start + 1
    return best


def _encode_word_trie(word: str, vocab: SubwordVocabulary) -> list[int] | None:
    ids: list[int] = []
    pos = 0
    while pos < len(word):
        trie = vocab._initial_trie if pos == 0 else vocab._continuation_trie
        n = _trie_longest(trie, word, pos)
        if n == 0:
            return None
        piece = word[pos : pos + n] if pos == 0 else CONTINUATION + word[pos : pos + n]
        ids.append(vocab.id_of[piece])
        pos += n
    return ids


def _encode_word_reference(word: str, vocab: SubwordVocabulary) -> list[int] | None:
    """Greedy longest-match by scanning prefix lengths; the reference matcher."""
    ids: list[int] = []
    pos = 0
    while pos < len(word):
        match = None
        for end in range(len(word), pos, -1):
            cand = word[pos:end] if pos == 0 else CONTINUATION + word[pos:end]
            if cand in vocab.id_of:
                match = (cand, end)
                break
        if match is None:
            return None
        ids.append(vocab.id_of[match[0]])
        pos = match[1]
    return ids


def encode(
    text: str,
    vocab: SubwordVocabulary,
    *,
    max_word_length: int = 64,
    matcher: str = "trie",
) -> list[int]:
    """Encode normalized text to token ids (no specials added here)."""
    word_fn = _encode_word_trie if matcher == "trie" else _encode_word_reference
    ids: list[int] = []
    for word in pretokenize(text):
        if len(word) > max_word_length:
            ids.append(UNK_ID)
            continue
        word_ids = word_fn(word, vocab)
        ids.extend(word_ids if word_ids is not None else [UNK_ID])
    return ids


def decode(ids: Iterable[int], vocab: SubwordVocabulary) -> str:
    """Token ids back to text: "##" pieces join their predecessor, words get
    single spaces, specials other than [UNK] are dropped."""
    parts: list[str] = []
    for i in ids:
        if not 0 <= i < len(vocab):
            raise VocabularyError(f"token id {i} out of range (vocab size {len(vocab)})")
        piece = vocab.pieces[i]
        if piece in SPECIALS and piece != UNK:
            continue
        if piece.startswith(CONTINUATION):
            if parts:
                parts[-1] += piece[len(CONTINUATION):]
            else:
                parts.append(piece[len(CONTINUATION):])
        else:
            parts.append(piece)
    return " ".join(parts)


def save_vocab(vocab: SubwordVocabulary, path: str | Path) -> None:
    """One piece per line, UTF-8, LF endings; line number = id."""
    Path(path).write_bytes(serialize_vocab(vocab))


def serialize_vocab(vocab: SubwordVocabulary) -> bytes:
    return ("\n".join(vocab.pieces) + "\n").encode("utf-8")


def load_vocab(path: str | Path) -> SubwordVocabulary:
    raw = Path(path).read_text(encoding="utf-8")
    pieces = raw.splitlines()
    if len(pieces) < len(SPECIALS):
        raise VocabularyError(f"{path}: fewer lines than the {len(SPECIALS)} special tokens")
    if pieces[: len(SPECIALS)] != list(SPECIALS):
        raise VocabularyError(f"{path}: first {len(SPECIALS)} lines must be {SPECIALS}")
    seen = set()
    for n, p in enumerate(pieces):
        if p in seen:
            raise VocabularyError(f"{path}: duplicate piece {p!r} at line {n + 1}")
        seen.add(p)
    return SubwordVocabulary(pieces)


def normalize_for_roundtrip(text: str) -> str:
    """Whitespace-and-punctuation normal form used by the round-trip contract."""
    return " ".join(pretokenize(text))
