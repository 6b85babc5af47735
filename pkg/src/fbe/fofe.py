"""Fixed-size ordinally-forgetting encoding of symbol sequences.

Every sequence over an alphabet of K symbols maps to a single length-K
vector: starting from zeros, each symbol w updates the vector as
``v <- factor * v + onehot(w)``, so the most recent symbol contributes 1
and earlier symbols decay geometrically. For factor below 0.5 the map is
injective, which the brute-force decoder here can certify on small cases.
"""

from __future__ import annotations

import itertools

import numpy as np

MAX_DECODE_LENGTH = 12


class DecodeBudgetError(RuntimeError):
    """Brute-force search space exceeds the configured budget."""


def _check_factor(forgetting_factor: float) -> None:
    if not 0.0 < forgetting_factor < 1.0:
        raise ValueError(f"forgetting factor must lie in (0, 1), got {forgetting_factor}")


def fofe_encode(sequence, alphabet_size: int, forgetting_factor: float) -> np.ndarray:
    """Encode a symbol-id sequence into a fixed-length vector.

    Parameters
    ----------
    sequence : iterable of int
        Symbol ids, each in ``[0, alphabet_size)``.
    alphabet_size : int
        Number of distinct symbols K; also the output length.
    forgetting_factor : float
        Geometric decay weight in (0, 1).
    """
    if alphabet_size < 1:
        raise ValueError(f"alphabet size must be >= 1, got {alphabet_size}")
    _check_factor(forgetting_factor)
    encoded = np.zeros(alphabet_size)
    for position, symbol in enumerate(sequence):
        if not 0 <= symbol < alphabet_size:
            raise ValueError(
                f"symbol {symbol} at position {position} outside [0, {alphabet_size})"
            )
        encoded *= forgetting_factor
        encoded[symbol] += 1.0
    return encoded


def _encode_all_of_length(length: int, alphabet_size: int, forgetting_factor: float):
    """All sequences of one length with their encodings, vectorized.

    Encodings come from the closed form sum(factor**(length-1-j) * onehot(s_j)),
    deliberately not the recursion used by fofe_encode, so the decoder can act
    as an independent check on the encoder.
    """
    if length == 0:
        return np.empty((1, 0), dtype=np.int64), np.zeros((1, alphabet_size))
    seqs = np.array(
        list(itertools.product(range(alphabet_size), repeat=length)), dtype=np.int64
    )
    powers = forgetting_factor ** np.arange(length - 1, -1, -1, dtype=np.float64)
    encodings = np.zeros((len(seqs), alphabet_size))
    rows = np.arange(len(seqs))
    for j in range(length):
        np.add.at(encodings, (rows, seqs[:, j]), powers[j])
    return seqs, encodings


def fofe_decode_bruteforce(
    target: np.ndarray,
    alphabet_size: int,
    forgetting_factor: float,
    max_len: int,
    tolerance: float = 1e-9,
    budget: int = 2_000_000,
) -> list[list[int]]:
    """Find every sequence up to ``max_len`` whose encoding matches ``target``.

    Matching means the max-norm difference is at most ``tolerance``. Results
    are returned in lexicographic order (shorter prefixes first). An empty
    result means nothing in range encodes to the target; more than one entry
    witnesses a collision of the encoding at this factor.
    """
    if alphabet_size < 1:
        raise ValueError(f"alphabet size must be >= 1, got {alphabet_size}")
    _check_factor(forgetting_factor)
    if tolerance <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    if not 0 <= max_len <= MAX_DECODE_LENGTH:
        raise ValueError(f"max_len must lie in [0, {MAX_DECODE_LENGTH}], got {max_len}")
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (alphabet_size,):
        raise ValueError(f"target must have shape ({alphabet_size},), got {target.shape}")

    search_size = sum(alphabet_size**t for t in range(max_len + 1))
    if search_size > budget:
        raise DecodeBudgetError(
            f"search space of {search_size} sequences exceeds budget {budget}"
        )

    matches: list[list[int]] = []
    for length in range(max_len + 1):
        seqs, encodings = _encode_all_of_length(length, alphabet_size, forgetting_factor)
        hit = np.abs(encodings - target).max(axis=1) <= tolerance
        matches.extend(seqs[i].tolist() for i in np.flatnonzero(hit))
    matches.sort()
    return matches
