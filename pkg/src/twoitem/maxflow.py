"""Dinic's max-flow on integer capacities.

Python ints are unbounded, so scaled real capacities lose nothing to
overflow (scipy's implementation works in int32).
"""

from __future__ import annotations

from collections import deque


class Dinic:
    def __init__(self, n: int):
        self.n = n
        self.head = [[] for _ in range(n)]
        self.to = []
        self.cap = []

    def add_edge(self, u: int, v: int, cap: int) -> int:
        """Add u -> v and return the edge id (its reverse is id ^ 1)."""
        if cap < 0:
            raise ValueError("capacity must be nonnegative")
        eid = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0]
        self.head[u].append(eid)
        self.head[v].append(eid + 1)
        return eid

    def _levels(self, s, t):
        level = [-1] * self.n
        level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if self.cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[t] >= 0 else None

    def _augment(self, s, t, level, it):
        # iterative DFS along the level graph
        stack, path = [s], []
        pushed_total = 0
        while stack:
            u = stack[-1]
            if u == t:
                f = min(self.cap[e] for e in path)
                for e in path:
                    self.cap[e] -= f
                    self.cap[e ^ 1] += f
                pushed_total += f
                # restart from the source; saturated edges are skipped by `it`
                stack, path = [s], []
                continue
            adv = False
            edges = self.head[u]
            while it[u] < len(edges):
                e = edges[it[u]]
                v = self.to[e]
                if self.cap[e] > 0 and level[v] == level[u] + 1:
                    stack.append(v)
                    path.append(e)
                    adv = True
                    break
                it[u] += 1
            if not adv:
                stack.pop()
                level[u] = -1  # dead end
                if path:
                    path.pop()
                    it[stack[-1]] += 1
        return pushed_total

    def run(self, s: int, t: int) -> int:
        flow = 0
        while True:
            level = self._levels(s, t)
            if level is None:
                return flow
            flow += self._augment(s, t, level, [0] * self.n)

    def flow_on(self, eid: int) -> int:
        """Flow currently carried by edge ``eid``."""
        return self.cap[eid ^ 1]
