"""Source-text tokenization to fixed-length id sequences with attention masks.

Two tokenizers share one output contract:

* a byte-level BPE tokenizer whose vocab/merges files follow the published
  RoBERTa/CodeBERT layout (``vocab.json`` token->id map plus a ranked
  ``merges.txt``), and
* a dependency-free fallback tokenizer (whitespace/punctuation split, CRC32
  hash into a small id space) so the full pipeline runs without external
  vocabulary artifacts.

Every encoded sample is exactly ``max_length`` ids long: bos + content
(head-truncated) + eos, padded with the pad id; the attention mask is 1 on
real tokens and 0 on padding.
"""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import regex

DEFAULT_MAX_LENGTH = 512

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"

# Fallback tokenizer id layout mirrors the RoBERTa special-id convention.
FALLBACK_BOS = 0
FALLBACK_PAD = 1
FALLBACK_EOS = 2
FALLBACK_UNK = 3
FALLBACK_NUM_SPECIALS = 4
DEFAULT_FALLBACK_VOCAB = 4096

# GPT-2-style pre-tokenizer: contractions, letter runs, digit runs,
# punctuation runs, trailing whitespace. Spaces attach to the following
# chunk, which is what gives the leading space-marker tokens after the
# byte-to-unicode mapping.
_PRETOKEN = regex.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)

_FALLBACK_TOKEN = re.compile(r"\w+|[^\w\s]")


class TokenizerError(ValueError):
    """Malformed vocabulary/merges input."""


@dataclass(frozen=True)
class SpecialIds:
    bos: int
    eos: int
    pad: int
    unk: int
    mask: int


@dataclass
class BpeVocab:
    """Token vocabulary plus ranked merge table for byte-level BPE."""

    token_to_id: dict[str, int]
    merges: list[tuple[str, str]]
    specials: SpecialIds
    bpe_ranks: dict[tuple[str, str], int] = field(init=False, repr=False, compare=False)
    _cache: dict[str, tuple[str, ...]] = field(default_factory=dict, init=False,
                                               repr=False, compare=False)

    def __post_init__(self):
        ids = sorted(self.token_to_id.values())
        if len(set(ids)) != len(ids):
            raise TokenizerError("duplicate token ids in vocabulary")
        if ids and (ids[0] != 0 or ids[-1] != len(ids) - 1):
            raise TokenizerError("token ids must be dense in [0, vocab_size)")
        special_ids = (self.specials.bos, self.specials.eos, self.specials.pad,
                       self.specials.unk, self.specials.mask)
        if len(set(special_ids)) != len(special_ids):
            raise TokenizerError("special token ids must be distinct")
        for a, b in self.merges:
            if a + b not in self.token_to_id:
                raise TokenizerError(f"merge output {a + b!r} missing from vocabulary")
        self.bpe_ranks = {pair: rank for rank, pair in enumerate(self.merges)}

    @property
    def vocab_size(self) -> int:
        return len(self.token_to_id)


@dataclass(frozen=True)
class TokenizedSample:
    """Fixed-length token ids + attention mask for one piece of text."""

    token_ids: tuple[int, ...]
    attention_mask: tuple[int, ...]
    true_length: int

    def __post_init__(self):
        n = len(self.token_ids)
        if len(self.attention_mask) != n:
            raise ValueError("token_ids and attention_mask lengths differ")
        if not 2 <= self.true_length <= n:
            raise ValueError(f"true_length {self.true_length} out of range [2, {n}]")
        expected = (1,) * self.true_length + (0,) * (n - self.true_length)
        if tuple(self.attention_mask) != expected:
            raise ValueError("attention mask must be ones then zeros, "
                             "matching true_length")

    @property
    def max_length(self) -> int:
        return len(self.token_ids)


@lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """GPT-2 byte-to-printable-unicode map (space becomes the Ġ marker)."""
    bs = (list(range(ord("!"), ord("~") + 1))
          + list(range(ord("\xa1"), ord("\xac") + 1))
          + list(range(ord("\xae"), ord("\xff") + 1)))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


def load_vocab(vocab_path, merges_path) -> BpeVocab:
    """Load vocab.json + merges.txt (RoBERTa/CodeBERT file layout)."""

    def reject_duplicates(pairs):
        seen = {}
        for k, v in pairs:
            if k in seen:
                raise TokenizerError(f"duplicate token {k!r} in vocabulary file")
            seen[k] = v
        return seen

    with open(vocab_path, encoding="utf-8") as fh:
        token_to_id = json.load(fh, object_pairs_hook=reject_duplicates)
    if not all(isinstance(v, int) for v in token_to_id.values()):
        raise TokenizerError("vocabulary ids must be integers")

    merges: list[tuple[str, str]] = []
    with open(merges_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or (lineno == 1 and line.startswith("#")):
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise TokenizerError(
                    f"{merges_path}:{lineno}: merge line must be two "
                    f"space-separated symbols, got {line!r}")
            merges.append((parts[0], parts[1]))

    try:
        specials = SpecialIds(
            bos=token_to_id[BOS_TOKEN],
            eos=token_to_id[EOS_TOKEN],
            pad=token_to_id[PAD_TOKEN],
            unk=token_to_id[UNK_TOKEN],
            mask=token_to_id[MASK_TOKEN],
        )
    except KeyError as exc:
        raise TokenizerError(f"vocabulary is missing special token {exc.args[0]!r}") from None
    return BpeVocab(token_to_id=token_to_id, merges=merges, specials=specials)


def _bpe(vocab: BpeVocab, token: str) -> tuple[str, ...]:
    """Apply ranked merges greedily (lowest rank first) to one chunk."""
    cached = vocab._cache.get(token)
    if cached is not None:
        return cached
    word = list(token)
    ranks = vocab.bpe_ranks
    while len(word) > 1:
        pairs = set(zip(word, word[1:]))
        best = min(pairs, key=lambda p: ranks.get(p, float("inf")))
        if best not in ranks:
            break
        merged = []
        i = 0
        while i < len(word):
            if i < len(word) - 1 and (word[i], word[i + 1]) == best:
                merged.append(word[i] + word[i + 1])
                i += 2
            else:
                merged.append(word[i])
                i += 1
        word = merged
    result = tuple(word)
    vocab._cache[token] = result
    return result


def _assemble(content_ids: list[int], max_length: int,
              bos: int, eos: int, pad: int) -> TokenizedSample:
    if max_length < 2:
        raise ValueError("max_length must be at least 2 (bos + eos)")
    content = content_ids[:max_length - 2]
    ids = [bos, *content, eos]
    true_length = len(ids)
    ids.extend([pad] * (max_length - true_length))
    mask = [1] * true_length + [0] * (max_length - true_length)
    return TokenizedSample(token_ids=tuple(ids), attention_mask=tuple(mask),
                           true_length=true_length)


def encode(text: str, vocab: BpeVocab,
           max_length: int = DEFAULT_MAX_LENGTH) -> TokenizedSample:
    """Byte-level BPE encode with head truncation and padding."""
    byte_map = bytes_to_unicode()
    unk = vocab.specials.unk
    content: list[int] = []
    limit = max_length - 2
    for chunk in _PRETOKEN.findall(text):
        mapped = "".join(byte_map[b] for b in chunk.encode("utf-8"))
        for tok in _bpe(vocab, mapped):
            content.append(vocab.token_to_id.get(tok, unk))
        if len(content) >= limit:
            break
    return _assemble(content, max_length, vocab.specials.bos,
                     vocab.specials.eos, vocab.specials.pad)


def encode_batch(texts, vocab: BpeVocab,
                 max_length: int = DEFAULT_MAX_LENGTH) -> list[TokenizedSample]:
    return [encode(t, vocab, max_length) for t in texts]


def fallback_token_id(token: str, vocab_size: int) -> int:
    """Stable hash of a surface token into [num_specials, vocab_size)."""
    span = vocab_size - FALLBACK_NUM_SPECIALS
    return FALLBACK_NUM_SPECIALS + zlib.crc32(token.encode("utf-8")) % span


def fallback_encode(text: str, max_length: int,
                    vocab_size: int = DEFAULT_FALLBACK_VOCAB,
                    token_to_id: dict[str, int] | None = None) -> TokenizedSample:
    """Desk-scale tokenizer: split on word/punctuation boundaries, then hash.

    An explicit ``token_to_id`` map overrides hashing (unknown tokens map to
    the unk id). Output shape/padding contract is identical to ``encode``.
    """
    if vocab_size <= FALLBACK_NUM_SPECIALS:
        raise ValueError("vocab_size must exceed the reserved special ids")
    tokens = _FALLBACK_TOKEN.findall(text)
    if token_to_id is not None:
        content = [token_to_id.get(t, FALLBACK_UNK) for t in tokens]
    else:
        content = [fallback_token_id(t, vocab_size) for t in tokens]
    return _assemble(content, max_length, FALLBACK_BOS, FALLBACK_EOS, FALLBACK_PAD)


def batch_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (ids [B, S] int64, mask [B, S] float32) arrays."""
    ids = np.array([s.token_ids for s in samples], dtype=np.int64)
    mask = np.array([s.attention_mask for s in samples], dtype=np.float32)
    return ids, mask
