"""Ordered subsets, receiver/message index maps and the 1-based modulus.

All indices exposed here are 1-based: groups are numbered ``1..N_g`` and
nodes ``1..K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

from .errors import MembershipError, ParameterError

__all__ = [
    "GroupTable",
    "ordered_subsets",
    "desired_indices",
    "member_position",
    "mod1",
    "subset_at",
    "group_index",
]


def mod1(a: int, M: int) -> int:
    """Modulus with outputs in ``1..M`` instead of ``0..M-1``.

    Multiples of ``M`` map to ``M``.

    Examples
    --------
    >>> mod1(4, 2), mod1(5, 2), mod1(0, 3)
    (2, 1, 3)
    """
    if M <= 0:
        raise ParameterError(f"modulus must be positive, got {M}")
    return (a - 1) % M + 1


@dataclass(frozen=True)
class GroupTable:
    """All size-``G`` subsets of ``{1..K}`` in lexicographic order.

    Attributes
    ----------
    K : int
        Number of nodes.
    G : int
        Group size.
    groups : tuple of tuple of int
        ``groups[i - 1]`` is the i-th group, each sorted ascending.
    """

    K: int
    G: int
    groups: tuple[tuple[int, ...], ...]
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {g: i + 1 for i, g in enumerate(self.groups)})

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def per_node(self) -> int:
        """Number of groups each node belongs to."""
        return comb(self.K - 1, self.G - 1)

    def subset_at(self, n: int) -> tuple[int, ...]:
        if not 1 <= n <= len(self.groups):
            raise ParameterError(f"group index {n} outside 1..{len(self.groups)}")
        return self.groups[n - 1]

    def group_index(self, subset) -> int:
        key = tuple(sorted(subset))
        try:
            return self._index[key]
        except KeyError:
            raise ParameterError(f"{key} is not a size-{self.G} subset of 1..{self.K}") from None


def ordered_subsets(K: int, G: int) -> GroupTable:
    """Enumerate size-``G`` subsets of ``{1..K}``.

    The order is lexicographic on the sorted element lists, i.e. ``A < B``
    iff the first differing element of ``A`` is smaller.

    Raises
    ------
    ParameterError
        If ``not 1 <= G <= K``.
    """
    if not isinstance(K, int) or not isinstance(G, int) or K < 1 or not 1 <= G <= K:
        raise ParameterError(f"need 1 <= G <= K, got K={K}, G={G}")
    return GroupTable(K, G, tuple(combinations(range(1, K + 1), G)))


def subset_at(n: int, table: GroupTable) -> tuple[int, ...]:
    return table.subset_at(n)


def group_index(subset, table: GroupTable) -> int:
    return table.group_index(subset)


def desired_indices(k: int, table: GroupTable) -> tuple[int, ...]:
    """Indices of the groups containing receiver ``k``, ascending."""
    if not 1 <= k <= table.K:
        raise ParameterError(f"receiver {k} outside 1..{table.K}")
    return tuple(n for n, grp in enumerate(table.groups, start=1) if k in grp)


def member_position(n: int, k: int, table: GroupTable) -> int:
    """Position ``g`` of receiver ``k`` inside group ``n`` (``S_n(g) = k``).

    Raises
    ------
    MembershipError
        If ``k`` is not a member of group ``n``.
    """
    grp = table.subset_at(n)
    if k not in grp:
        raise MembershipError(f"node {k} is not in group {n} = {set(grp)}")
    return grp.index(k) + 1
