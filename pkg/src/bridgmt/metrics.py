"""Text and vector distances used for start-sentence selection and bridge analysis."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import httpx

from .errors import ProtocolError, TransportError, UsageError


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over code points, two rows of memory."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class LabeledTree:
    label: str
    children: tuple[LabeledTree, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))

    def __len__(self) -> int:
        return 1 + sum(len(c) for c in self.children)

    def to_brackets(self) -> str:
        if not self.children:
            return self.label
        return f"({self.label} {' '.join(c.to_brackets() for c in self.children)})"


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def tree_from_brackets(text: str) -> LabeledTree:
    """Parse ``(label child child ...)`` notation; bare tokens are leaves."""
    tokens = _TOKEN.findall(text)
    pos = 0

    def parse() -> LabeledTree:
        nonlocal pos
        if pos >= len(tokens):
            raise UsageError("unexpected end of bracketed tree")
        tok = tokens[pos]
        pos += 1
        if tok == ")":
            raise UsageError("unbalanced ')' in bracketed tree")
        if tok != "(":
            return LabeledTree(tok)
        if pos >= len(tokens) or tokens[pos] in "()":
            raise UsageError("bracketed node without a label")
        label = tokens[pos]
        pos += 1
        kids = []
        while pos < len(tokens) and tokens[pos] != ")":
            kids.append(parse())
        if pos >= len(tokens):
            raise UsageError("unbalanced '(' in bracketed tree")
        pos += 1
        return LabeledTree(label, tuple(kids))

    tree = parse()
    if pos != len(tokens):
        raise UsageError("trailing tokens after bracketed tree")
    return tree


# --- Zhang-Shasha -------------------------------------------------------------


class _Annotated:
    """Postorder arrays for one tree: labels, leftmost leaf descendants, keyroots."""

    __slots__ = ("labels", "lmd", "keyroots")

    def __init__(self, root: LabeledTree) -> None:
        labels: list[str] = []
        lmd: list[int] = []

        def walk(node: LabeledTree) -> int:
            first = None
            for child in node.children:
                leftmost = walk(child)
                if first is None:
                    first = leftmost
            idx = len(labels)
            labels.append(node.label)
            lmd.append(idx if first is None else first)
            return lmd[idx]

        walk(root)
        self.labels = labels
        self.lmd = lmd
        # a keyroot is the highest node for each distinct leftmost leaf
        seen: dict[int, int] = {}
        for i, l in enumerate(lmd):
            seen[l] = i
        self.keyroots = sorted(seen.values())


def _unit_relabel(a: str, b: str) -> float:
    return 0 if a == b else 1


def _unit_indel(label: str) -> float:
    return 1


def tree_edit_distance(
    t1: LabeledTree,
    t2: LabeledTree,
    *,
    insert_cost: Callable[[str], float] = _unit_indel,
    delete_cost: Callable[[str], float] = _unit_indel,
    relabel_cost: Callable[[str, str], float] = _unit_relabel,
) -> float:
    """Ordered tree edit distance (Zhang & Shasha keyroot recurrence).

    Unit costs by default, in which case the result is an exact integer.
    """
    return _zhang_shasha(_Annotated(t1), _Annotated(t2), insert_cost, delete_cost, relabel_cost)


def _zhang_shasha(A: _Annotated, B: _Annotated, ins, dele, ren) -> float:
    la, lb = A.lmd, B.lmd
    na, nb = len(la), len(lb)
    treedist = [[0.0] * nb for _ in range(na)]
    for i in A.keyroots:
        for j in B.keyroots:
            li, lj = la[i], lb[j]
            m, n = i - li + 2, j - lj + 2
            fd = [[0.0] * n for _ in range(m)]
            for x in range(1, m):
                fd[x][0] = fd[x - 1][0] + dele(A.labels[li + x - 1])
            for y in range(1, n):
                fd[0][y] = fd[0][y - 1] + ins(B.labels[lj + y - 1])
            for x in range(1, m):
                ix = li + x - 1
                row, prow = fd[x], fd[x - 1]
                dcost = dele(A.labels[ix])
                for y in range(1, n):
                    jy = lj + y - 1
                    if la[ix] == li and lb[jy] == lj:
                        d = min(
                            prow[y] + dcost,
                            row[y - 1] + ins(B.labels[jy]),
                            prow[y - 1] + ren(A.labels[ix], B.labels[jy]),
                        )
                        row[y] = d
                        treedist[ix][jy] = d
                    else:
                        p, q = la[ix] - li, lb[jy] - lj
                        row[y] = min(
                            prow[y] + dcost,
                            row[y - 1] + ins(B.labels[jy]),
                            fd[p][q] + treedist[ix][jy],
                        )
    return treedist[na - 1][nb - 1]


# --- vectors ------------------------------------------------------------------


def _check_dims(u: Sequence[float], v: Sequence[float]) -> None:
    if len(u) != len(v):
        raise UsageError(f"dimension mismatch: {len(u)} vs {len(v)}")


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    _check_dims(u, v)
    nu = math.sqrt(math.fsum(x * x for x in u))
    nv = math.sqrt(math.fsum(x * x for x in v))
    if nu == 0 or nv == 0:
        raise UsageError("cosine similarity of a zero vector (broken embedding provider?)")
    sim = math.fsum(x * y for x, y in zip(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, sim))


def euclidean_distance(u: Sequence[float], v: Sequence[float]) -> float:
    _check_dims(u, v)
    return math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(u, v)))


# --- tree providers -----------------------------------------------------------


class TreeProvider(Protocol):
    def __call__(self, sentence: str) -> LabeledTree: ...


def chain_tree(sentence: str) -> LabeledTree:
    """Right-branching chain of whitespace tokens under a ``ROOT`` node."""
    tokens = sentence.split()
    node: LabeledTree | None = None
    for tok in reversed(tokens):
        node = LabeledTree(tok, (node,) if node is not None else ())
    return LabeledTree("ROOT", (node,) if node is not None else ())


class HttpTreeProvider:
    """Fetches bracketed parses from a remote parser.

    POSTs ``{"sentence": ...}`` and expects ``{"tree": "(ROOT ...)"}``.
    Results are memoized per sentence.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, client: httpx.Client | None = None) -> None:
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout)
        self._memo: dict[str, LabeledTree] = {}

    def __call__(self, sentence: str) -> LabeledTree:
        if sentence not in self._memo:
            try:
                resp = self._client.post(self.endpoint, json={"sentence": sentence})
                resp.raise_for_status()
                self._memo[sentence] = tree_from_brackets(resp.json()["tree"])
            except httpx.HTTPError as exc:
                raise TransportError(f"tree provider failed: {exc}") from exc
            except (KeyError, ValueError, UsageError) as exc:
                raise ProtocolError(f"tree provider returned an unusable body: {exc}") from exc
        return self._memo[sentence]


def parse_tree(sentence: str, provider: TreeProvider = chain_tree) -> LabeledTree:
    if not sentence.strip():
        raise UsageError("cannot parse an empty sentence")
    return provider(sentence)
