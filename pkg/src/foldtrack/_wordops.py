"""Pure-Python free-word kernels.

Words are ASCII strings over ``a``-``z`` with ``A``-``Z`` the inverses;
the empty string is the identity.  These three functions are the hot
inner loop of everything downstream (marking validation, loop words,
fold transport), so they have a compiled twin in ``_speedups.pyx`` with
identical behaviour; :mod:`foldtrack.fgroup` picks one at import time.
"""

from __future__ import annotations

_CASE_FLIP = 0x20


def reduce_word(w: str) -> str:
    """Freely reduce ``w`` by cancelling adjacent inverse pairs."""
    stack: list[str] = []
    push = stack.append
    pop = stack.pop
    for ch in w:
        if stack and ord(stack[-1]) ^ _CASE_FLIP == ord(ch):
            pop()
        else:
            push(ch)
    return "".join(stack)


def mul(a: str, b: str) -> str:
    """Reduced product of two already-reduced words."""
    i = len(a)
    j = 0
    nb = len(b)
    while i > 0 and j < nb and ord(a[i - 1]) ^ _CASE_FLIP == ord(b[j]):
        i -= 1
        j += 1
    return a[:i] + b[j:]


def cyclic_split(w: str) -> tuple[str, str]:
    """Split reduced ``w`` as ``conjugator * core * conjugator^-1``.

    Returns ``(core, conjugator)`` with ``core`` cyclically reduced.
    """
    i = 0
    j = len(w)
    while j - i >= 2 and ord(w[i]) ^ _CASE_FLIP == ord(w[j - 1]):
        i += 1
        j -= 1
    return w[i:j], w[:i]
