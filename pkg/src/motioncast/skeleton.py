"""Skeleton tree topology: parent links, validation, traversal order."""

from dataclasses import dataclass, field
from importlib import resources

from .errors import ConfigError, ParseError

DEFAULT_SKELETON_RESOURCE = "skeleton20.txt"


@dataclass(frozen=True)
class SkeletonTree:
    """Joint hierarchy. ``parents[j]`` is the parent index, -1 for the root."""

    parents: tuple
    names: tuple = None
    _order: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        object.__setattr__(self, "parents", parents)
        n = len(parents)
        if n < 1:
            raise ConfigError("skeleton needs at least one joint")
        roots = [j for j, p in enumerate(parents) if p == -1]
        if len(roots) != 1:
            raise ConfigError(f"skeleton must have exactly one root, found {len(roots)}")
        for j, p in enumerate(parents):
            if p != -1 and not 0 <= p < n:
                raise ConfigError(f"joint {j} has out-of-range parent {p}")
        # every joint must reach the root; a walk longer than n means a cycle
        for j in range(n):
            cur, steps = j, 0
            while parents[cur] != -1:
                cur = parents[cur]
                steps += 1
                if steps > n:
                    raise ConfigError(f"cyclic parent links at joint {j}")
        if self.names is not None and len(self.names) != n:
            raise ConfigError("names length does not match joint count")
        order = []
        placed = [False] * n
        pending = list(range(n))
        while pending:
            progressed = False
            remaining = []
            for j in pending:
                p = parents[j]
                if p == -1 or placed[p]:
                    order.append(j)
                    placed[j] = True
                    progressed = True
                else:
                    remaining.append(j)
            pending = remaining
            if not progressed:
                raise ConfigError("skeleton has no valid topological order")
        object.__setattr__(self, "_order", tuple(order))

    @property
    def n_joints(self):
        return len(self.parents)

    def topo_order(self):
        """Joint indices with every parent before its children."""
        return self._order

    def ancestors(self, j):
        """Set of ancestor joint indices of ``j`` (excluding ``j``)."""
        out = set()
        cur = self.parents[j]
        while cur != -1:
            out.add(cur)
            cur = self.parents[cur]
        return out


def chain_skeleton(n_joints):
    """Simple chain topology for toy joint counts: 0 <- 1 <- ... <- J-1."""
    return SkeletonTree(tuple([-1] + list(range(n_joints - 1))))


def load_skeleton(path):
    """Parse a topology file of ``joint_index,parent_index,name`` lines."""
    parents = {}
    names = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise ParseError(f"expected 'joint,parent[,name]', got {line!r}", line=lineno)
            try:
                j = int(parts[0])
                p = int(parts[1])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if j in parents:
                raise ParseError(f"duplicate joint index {j}", line=lineno)
            parents[j] = p
            names[j] = parts[2].strip() if len(parts) > 2 else str(j)
    if not parents:
        raise ParseError("empty skeleton file", line=None)
    n = len(parents)
    if sorted(parents) != list(range(n)):
        raise ParseError(f"joint indices must be 0..{n - 1} with no gaps", line=None)
    return SkeletonTree(
        tuple(parents[j] for j in range(n)),
        tuple(names[j] for j in range(n)),
    )


def default_skeleton():
    """The packaged 20-joint depth-camera topology."""
    ref = resources.files("motioncast.resources") / DEFAULT_SKELETON_RESOURCE
    with resources.as_file(ref) as path:
        return load_skeleton(path)
