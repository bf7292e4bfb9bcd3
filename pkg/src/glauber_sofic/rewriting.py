"""Shortlex Knuth-Bendix completion for finitely presented groups.

Letters are signed integers: ``i`` is the generator ``s_i`` (1-based) and
``-i`` its inverse.  Words are tuples of letters in product order.

Completion of a presentation need not terminate, so every run carries an
explicit budget and raises :class:`UndecidableAtBudget` when it is exhausted.
"""

from __future__ import annotations

from collections import deque


class UndecidableAtBudget(RuntimeError):
    """Raised when rewriting completion does not finish within its budget."""


def letter_rank(letter: int) -> int:
    # s_1 < s_1^-1 < s_2 < s_2^-1 < ...
    return 2 * (abs(letter) - 1) + (0 if letter > 0 else 1)


def shortlex_key(word: tuple[int, ...]) -> tuple:
    return (len(word), tuple(letter_rank(x) for x in word))


def free_reduce(word) -> tuple[int, ...]:
    out: list[int] = []
    for x in word:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def invert(word) -> tuple[int, ...]:
    return tuple(-x for x in reversed(word))


class RewritingSystem:
    """A confluent shortlex rewriting system for a group presentation."""

    def __init__(self, r: int, relators, max_rules: int = 200, max_pairs: int = 20000):
        self.r = r
        self.max_rules = max_rules
        self.max_pairs = max_pairs
        self.rules: dict[tuple[int, ...], tuple[int, ...]] = {}
        for i in range(1, r + 1):
            self.rules[(i, -i)] = ()
            self.rules[(-i, i)] = ()
        for rel in relators:
            rel = free_reduce(rel)
            if rel:
                self._add_equation(rel, ())
                # inverse relator is a consequence but seeds completion faster
                self._add_equation(invert(rel), ())
        self._complete()

    def reduce(self, word) -> tuple[int, ...]:
        word = tuple(word)
        changed = True
        while changed:
            changed = False
            for lhs, rhs in self.rules.items():
                n = len(lhs)
                for i in range(len(word) - n + 1):
                    if word[i:i + n] == lhs:
                        word = word[:i] + rhs + word[i + n:]
                        changed = True
                        break
                if changed:
                    break
        return word

    def _orient(self, a, b):
        a, b = self.reduce(a), self.reduce(b)
        if a == b:
            return None
        if shortlex_key(a) < shortlex_key(b):
            a, b = b, a
        return a, b

    def _add_equation(self, a, b) -> bool:
        oriented = self._orient(a, b)
        if oriented is None:
            return False
        lhs, rhs = oriented
        self.rules[lhs] = rhs
        self._interreduce(lhs)
        if len(self.rules) > self.max_rules:
            raise UndecidableAtBudget(
                f"rewriting system exceeded {self.max_rules} rules before completing"
            )
        return True

    def _interreduce(self, new_lhs) -> None:
        for lhs in list(self.rules):
            if lhs == new_lhs or lhs not in self.rules:
                continue
            rhs = self.rules.pop(lhs)
            reduced_lhs = self.reduce(lhs)
            if reduced_lhs != lhs:
                self._add_equation(reduced_lhs, rhs)
            else:
                self.rules[lhs] = self.reduce(rhs)

    @staticmethod
    def _critical_pairs(l1, r1, l2, r2):
        n1, n2 = len(l1), len(l2)
        for k in range(1, min(n1, n2)):
            if l1[n1 - k:] == l2[:k]:
                yield r1 + l2[k:], l1[:n1 - k] + r2
        if n2 <= n1 and l1 != l2:
            for i in range(n1 - n2 + 1):
                if l1[i:i + n2] == l2:
                    yield r1, l1[:i] + r2 + l1[i + n2:]

    def _complete(self) -> None:
        processed = 0
        while True:
            queue = deque((a, b) for a in list(self.rules) for b in list(self.rules))
            added = False
            while queue:
                l1, l2 = queue.popleft()
                if l1 not in self.rules or l2 not in self.rules:
                    continue
                processed += 1
                if processed > self.max_pairs:
                    raise UndecidableAtBudget(
                        f"rewriting completion exceeded {self.max_pairs} critical pairs"
                    )
                for a, b in self._critical_pairs(l1, self.rules[l1], l2, self.rules[l2]):
                    if self._add_equation(a, b):
                        added = True
            if not added:
                return
