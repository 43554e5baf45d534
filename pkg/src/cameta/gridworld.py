"""Occupancy-grid environments and the warehouse layout generator."""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import GenerationFailed, InvalidParams, OccupiedCell, OutOfBounds, ParseError

FREE = 0
OCCUPIED = 1

# up, right, down, left
MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))

Cell = tuple  # (x, y)

HEADER = "P-GRID"


@dataclass(frozen=True, eq=False)
class GridMap:
    """A width x height occupancy grid stored flat, row-major.

    ``occupancy[y * width + x]`` is 1 for an occupied cell and 0 for free.
    """

    width: int
    height: int
    occupancy: np.ndarray
    meters_per_cell: float = 1.0

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=np.uint8).ravel()
        if self.width < 2 or self.height < 2:
            raise InvalidParams(f"grid must be at least 2x2, got {self.width}x{self.height}")
        if occ.size != self.width * self.height:
            raise InvalidParams(
                f"occupancy has {occ.size} cells, expected {self.width * self.height}"
            )
        if np.any(occ > 1):
            raise InvalidParams("occupancy values must be 0 (free) or 1 (occupied)")
        if not np.any(occ == FREE):
            raise InvalidParams("map has no free cell")
        if not self.meters_per_cell > 0:
            raise InvalidParams("meters_per_cell must be positive")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def from_rows(cls, rows, meters_per_cell=1.0):
        """Build from strings of ``.`` (free) and ``#`` (occupied)."""
        height = len(rows)
        width = len(rows[0]) if rows else 0
        occ = [1 if ch == "#" else 0 for row in rows for ch in row]
        return cls(width, height, np.array(occ, dtype=np.uint8), meters_per_cell)

    @classmethod
    def empty(cls, width, height):
        return cls(width, height, np.zeros(width * height, dtype=np.uint8))

    @property
    def grid(self):
        """Read-only (height, width) view indexed ``[y, x]``."""
        return self.occupancy.reshape(self.height, self.width)

    @property
    def free_mask(self):
        return self.occupancy == FREE

    def in_bounds(self, c):
        x, y = c
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, c):
        return self.in_bounds(c) and self.occupancy[c[1] * self.width + c[0]] == FREE

    def index(self, c):
        return c[1] * self.width + c[0]

    def cell(self, idx):
        y, x = divmod(int(idx), self.width)
        return (x, y)

    def free_cells(self):
        """Free cells in row-major order."""
        ys, xs = np.nonzero(self.grid == FREE)
        return [(int(x), int(y)) for y, x in zip(ys, xs)]

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.meters_per_cell == other.meters_per_cell
            and np.array_equal(self.occupancy, other.occupancy)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.occupancy.tobytes()))

    def __repr__(self):
        return f"GridMap({self.width}x{self.height}, free={int(self.free_mask.sum())})"


def neighbors(grid_map, c):
    """Free 4-neighbours of ``c`` in the fixed order up, right, down, left."""
    if not grid_map.in_bounds(c):
        raise OutOfBounds(f"cell {c} outside {grid_map.width}x{grid_map.height}")
    if not grid_map.is_free(c):
        raise OccupiedCell(f"cell {c} is occupied")
    x, y = c
    out = []
    for dx, dy in MOVES:
        n = (x + dx, y + dy)
        if grid_map.is_free(n):
            out.append(n)
    return out


def free_components(grid_map):
    """Label array (height, width) of 4-connected free components; -1 on walls."""
    grid = grid_map.grid
    labels = np.full(grid.shape, -1, dtype=np.int64)
    nxt = 0
    for y in range(grid_map.height):
        for x in range(grid_map.width):
            if grid[y, x] != FREE or labels[y, x] >= 0:
                continue
            labels[y, x] = nxt
            queue = deque([(x, y)])
            while queue:
                cx, cy = queue.popleft()
                for dx, dy in MOVES:
                    nx, ny = cx + dx, cy + dy
                    if (
                        0 <= nx < grid_map.width
                        and 0 <= ny < grid_map.height
                        and grid[ny, nx] == FREE
                        and labels[ny, nx] < 0
                    ):
                        labels[ny, nx] = nxt
                        queue.append((nx, ny))
            nxt += 1
    return labels


def is_connected(grid_map):
    return int(free_components(grid_map).max()) == 0


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def save_map(grid_map):
    lines = [f"{HEADER} {grid_map.width} {grid_map.height}"]
    grid = grid_map.grid
    for y in range(grid_map.height):
        lines.append("".join("#" if v else "." for v in grid[y]))
    return "\n".join(lines) + "\n"


def load_map(text):
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty input", 1, 1)
    parts = lines[0].split(" ")
    if len(parts) != 3 or parts[0] != HEADER:
        raise ParseError(f"expected '{HEADER} <width> <height>'", 1, 1)
    try:
        width, height = int(parts[1]), int(parts[2])
    except ValueError:
        raise ParseError("width and height must be integers", 1, len(HEADER) + 2) from None
    if width < 2 or height < 2:
        raise ParseError("width and height must be >= 2", 1, len(HEADER) + 2)
    rows = lines[1:]
    if len(rows) != height:
        raise ParseError(f"expected {height} rows, found {len(rows)}", len(lines) + 1, 1)
    occ = np.empty(width * height, dtype=np.uint8)
    for y, row in enumerate(rows):
        line_no = y + 2
        if row.endswith("\r"):
            raise ParseError("CR line endings are not allowed", line_no, len(row))
        if len(row) != width:
            col = min(len(row), width) + 1
            raise ParseError(f"row has {len(row)} cells, expected {width}", line_no, col)
        for x, ch in enumerate(row):
            if ch == ".":
                occ[y * width + x] = FREE
            elif ch == "#":
                occ[y * width + x] = OCCUPIED
            else:
                raise ParseError(f"unexpected character {ch!r}", line_no, x + 1)
    try:
        return GridMap(width, height, occ)
    except InvalidParams as exc:
        raise ParseError(str(exc), 2, 1) from None


# ---------------------------------------------------------------------------
# warehouse generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WarehouseGenParams:
    seed: int
    width: int = 32
    height: int = 32
    shelf_row_period: int = 3
    shelf_gap_period: int = 6
    obstacle_density_jitter: float = 0.04


MIN_DIM, MAX_DIM = 8, 128
MAX_REPAIRS = 100
MIN_FREE_FRACTION, MAX_FREE_FRACTION = 0.2, 0.8


def generate_warehouse_map(params):
    """Shelf rows broken by door gaps, sprinkled obstacles, then carved to be connected.

    Pure function of ``params``: the same params always give the same map.
    """
    p = params
    for name in ("width", "height"):
        v = getattr(p, name)
        if not MIN_DIM <= v <= MAX_DIM:
            raise InvalidParams(f"{name}={v} outside [{MIN_DIM}, {MAX_DIM}]")
    if p.shelf_row_period < 2 or p.shelf_gap_period < 2:
        raise InvalidParams("shelf periods must be >= 2")
    if not 0.0 <= p.obstacle_density_jitter < 1.0:
        raise InvalidParams("obstacle_density_jitter must be in [0, 1)")
    if not 0 <= p.seed < 2**64:
        raise InvalidParams("seed must be a 64-bit unsigned integer")

    rng = np.random.default_rng(p.seed)
    w, h = p.width, p.height
    grid = np.zeros((h, w), dtype=np.uint8)
    # keep a free ring of main aisles; shelves live inside it
    margin = 1 if min(w, h) < 16 else 2
    row_phase = int(rng.integers(0, p.shelf_row_period))
    for y in range(margin, h - margin):
        if (y - margin - row_phase) % p.shelf_row_period != p.shelf_row_period - 1:
            continue
        gap_phase = int(rng.integers(0, p.shelf_gap_period))
        for x in range(margin, w - margin):
            if (x - margin + gap_phase) % p.shelf_gap_period != 0:
                grid[y, x] = OCCUPIED
    jitter = rng.random((h, w)) < p.obstacle_density_jitter
    grid[jitter] = OCCUPIED
    if not np.any(grid == FREE):
        grid[h // 2, w // 2] = FREE

    for _ in range(MAX_REPAIRS):
        gm = GridMap(w, h, grid.ravel())
        labels = free_components(gm)
        n_comp = int(labels.max()) + 1
        if n_comp > 1:
            _carve_smallest(grid, labels, n_comp)
            continue
        n_free = int(np.sum(grid == FREE))
        excess = n_free - int(MAX_FREE_FRACTION * w * h)
        if excess <= 0:
            break
        # too open: drop extra pallets on random free cells, then re-check connectivity
        fy, fx = np.nonzero(grid == FREE)
        pick = rng.choice(fy.size, size=excess, replace=False)
        grid[fy[pick], fx[pick]] = OCCUPIED
    else:
        raise GenerationFailed(f"no connected layout after {MAX_REPAIRS} repair rounds")

    frac = float(np.mean(gm.occupancy == FREE))
    if frac < MIN_FREE_FRACTION:
        raise GenerationFailed(f"free fraction {frac:.2f} below {MIN_FREE_FRACTION}")
    return gm


def _carve_smallest(grid, labels, n_comp):
    """Open the shortest wall-crossing corridor from the smallest component to any other."""
    sizes = np.bincount(labels[labels >= 0], minlength=n_comp)
    target = int(np.argmin(sizes))
    h, w = grid.shape
    prev = {}
    queue = deque()
    ys, xs = np.nonzero(labels == target)
    for y, x in zip(ys, xs):
        prev[(int(x), int(y))] = None
        queue.append((int(x), int(y)))
    while queue:
        cx, cy = queue.popleft()
        if labels[cy, cx] >= 0 and labels[cy, cx] != target:
            c = (cx, cy)
            while c is not None:
                grid[c[1], c[0]] = FREE
                c = prev[c]
            return
        for dx, dy in MOVES:
            n = (cx + dx, cy + dy)
            if 0 <= n[0] < w and 0 <= n[1] < h and n not in prev:
                prev[n] = (cx, cy)
                queue.append(n)
