"""Finite windows of bi-infinite words."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Window:
    """A finite piece of a bi-infinite word; ``letters[origin]`` is the letter at index 0."""

    letters: str
    origin: int

    def __len__(self) -> int:
        return len(self.letters)

    def at(self, i: int) -> str | None:
        """Letter at index ``i`` of the bi-infinite word, or None outside the window."""
        j = self.origin + i
        return self.letters[j] if 0 <= j < len(self.letters) else None

    def agreement_radius(self, other: "Window") -> int | None:
        """Largest ``N`` with both windows defined and equal on ``[-N, N]``.

        ``-1`` if they differ at index 0; None if they agree wherever both are defined.
        """
        n = 0
        while True:
            pairs = [(self.at(i), other.at(i)) for i in (-n, n)]
            if any(a is None or b is None for a, b in pairs):
                return None
            if any(a != b for a, b in pairs):
                return n - 1
            n += 1
