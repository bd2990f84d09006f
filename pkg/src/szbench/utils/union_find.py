import typing


class UnionFind:
    """
    Disjoint sets over hashable items with path compression and union by
    rank. Used to group mutually overlapping intervals into clusters.

    >>> uf = UnionFind()
    >>> uf.union(1, 2)
    >>> uf.union(2, 3)
    >>> uf.find(3) == uf.find(1)
    True
    >>> uf.find(4) == uf.find(1)
    False
    """

    def __init__(self) -> None:
        self.parent: typing.Dict[typing.Hashable, typing.Hashable] = {}
        self.rank: typing.Dict[typing.Hashable, int] = {}

    def add(self, x: typing.Hashable) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.rank[x] = 0

    def find(self, x: typing.Hashable) -> typing.Hashable:
        self.add(x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        # path compression
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: typing.Hashable, y: typing.Hashable) -> None:
        px = self.find(x)
        py = self.find(y)
        if px == py:
            return
        if self.rank[px] < self.rank[py]:
            px, py = py, px
        self.parent[py] = px
        if self.rank[px] == self.rank[py]:
            self.rank[px] += 1

    def groups(self) -> typing.List[typing.List[typing.Hashable]]:
        """
        All sets, each in insertion order, ordered by their first member.
        """
        grouped: typing.Dict[typing.Hashable, typing.List[typing.Hashable]] = {}
        for x in self.parent:
            grouped.setdefault(self.find(x), []).append(x)
        return list(grouped.values())
