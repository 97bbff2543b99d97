"""Deterministic hashing of non-semantic item fields to a token."""

_MASK = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x):
    """One SplitMix64 round: algorithmic, stable across platforms."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _mix_bytes(state, data):
    for chunk_start in range(0, len(data), 8):
        word = int.from_bytes(data[chunk_start : chunk_start + 8], "little")
        state = _splitmix64(state ^ word)
    return state


def hash_final_level(non_semantic, vocab_size, salt):
    """Map a record of discrete non-semantic fields to a token in
    ``[0, vocab_size)``.

    All fields are folded in, in sorted key order, so the result does not
    depend on insertion order. Same record and salt always hash equal.
    """
    if vocab_size < 1:
        raise ValueError("vocab_size must be >= 1")
    state = _splitmix64(salt & _MASK)
    for key in sorted(non_semantic):
        state = _mix_bytes(state, str(key).encode("utf-8"))
        state = _mix_bytes(state, str(non_semantic[key]).encode("utf-8"))
        state = _splitmix64(state)
    return int(state % vocab_size)
