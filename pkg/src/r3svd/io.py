"""Matrix and image persistence: MatrixMarket, PGM, and JSON run reports.

Readers reject malformed input deterministically with positioned errors;
writers emit full double precision so every round trip is lossless (PGM
after the one documented clamp-and-round).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .completion import ObservedEntries
from .linalg import as_matrix

__all__ = [
    "ParseError",
    "read_matrix_market",
    "write_matrix_market",
    "read_pgm",
    "write_pgm",
    "RunReport",
    "append_report",
    "read_reports",
]


class ParseError(ValueError):
    """Malformed input file; carries the path and a 1-based line number."""

    def __init__(self, path, line_no: int | None, message: str):
        where = f"{path}:{line_no}" if line_no is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line_no = line_no


# -- MatrixMarket ----------------------------------------------------------

_MM_BANNER = "%%matrixmarket"


def _mm_data_lines(lines):
    """Yield (line_no, tokens) for non-comment, non-blank lines after the banner."""
    for no, raw in lines:
        stripped = raw.strip()
        if not stripped or stripped.startswith("%"):
            continue
        yield no, stripped.split()


def read_matrix_market(path):
    """Read a MatrixMarket file.

    ``array real general`` comes back as a dense ndarray (values stored
    column-major per the format); ``coordinate real general`` comes back
    as :class:`ObservedEntries` with 1-based file indices converted to
    0-based.
    """
    path = Path(path)
    with path.open("r", encoding="ascii") as fh:
        numbered = list(enumerate(fh, start=1))
    if not numbered:
        raise ParseError(path, 1, "empty file")

    no, banner = numbered[0]
    tokens = banner.strip().split()
    if len(tokens) != 5 or tokens[0].lower() != _MM_BANNER:
        raise ParseError(path, no, f"bad MatrixMarket header: {banner.strip()!r}")
    _, objecttype, layout, fieldtype, symmetry = (t.lower() for t in tokens)
    if objecttype != "matrix":
        raise ParseError(path, no, f"unsupported object type '{objecttype}'")
    if layout not in ("array", "coordinate"):
        raise ParseError(path, no, f"unsupported layout '{layout}'")
    if fieldtype != "real":
        raise ParseError(path, no, f"unsupported field type '{fieldtype}'")
    if symmetry != "general":
        raise ParseError(path, no, f"unsupported symmetry '{symmetry}'")

    data = _mm_data_lines(numbered[1:])
    try:
        size_no, size_tokens = next(data)
    except StopIteration:
        raise ParseError(path, len(numbered), "missing size line") from None

    if layout == "array":
        if len(size_tokens) != 2:
            raise ParseError(path, size_no, f"array size line needs 2 integers, got {size_tokens}")
        try:
            rows, cols = (int(t) for t in size_tokens)
        except ValueError:
            raise ParseError(path, size_no, f"bad dimensions {size_tokens}") from None
        if rows < 1 or cols < 1:
            raise ParseError(path, size_no, f"dimensions must be positive, got {rows}x{cols}")
        values = np.empty(rows * cols)
        count = 0
        for no, tokens in data:
            if len(tokens) != 1:
                raise ParseError(path, no, f"expected one value per line, got {tokens}")
            if count >= rows * cols:
                raise ParseError(path, no, f"more than {rows * cols} entries")
            try:
                values[count] = float(tokens[0])
            except ValueError:
                raise ParseError(path, no, f"bad value {tokens[0]!r}") from None
            count += 1
        if count != rows * cols:
            raise ParseError(path, len(numbered), f"expected {rows * cols} entries, got {count}")
        matrix = values.reshape((rows, cols), order="F")
        return as_matrix(np.ascontiguousarray(matrix), name=str(path))

    if len(size_tokens) != 3:
        raise ParseError(path, size_no, f"coordinate size line needs 3 integers, got {size_tokens}")
    try:
        rows, cols, nnz = (int(t) for t in size_tokens)
    except ValueError:
        raise ParseError(path, size_no, f"bad dimensions {size_tokens}") from None
    if rows < 1 or cols < 1 or nnz < 0:
        raise ParseError(path, size_no, f"bad coordinate sizes {rows} {cols} {nnz}")
    ri = np.empty(nnz, dtype=np.int64)
    ci = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    count = 0
    for no, tokens in data:
        if len(tokens) != 3:
            raise ParseError(path, no, f"expected 'i j value', got {tokens}")
        if count >= nnz:
            raise ParseError(path, no, f"more than {nnz} entries")
        try:
            i, j, v = int(tokens[0]), int(tokens[1]), float(tokens[2])
        except ValueError:
            raise ParseError(path, no, f"bad entry {tokens}") from None
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise ParseError(path, no, f"index ({i}, {j}) out of range for {rows}x{cols}")
        ri[count], ci[count], vals[count] = i - 1, j - 1, v
        count += 1
    if count != nnz:
        raise ParseError(path, len(numbered), f"expected {nnz} entries, got {count}")
    try:
        return ObservedEntries(rows, cols, ri, ci, vals)
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from None


def write_matrix_market(obj, path) -> None:
    """Write a dense matrix or :class:`ObservedEntries` in MatrixMarket form.

    Values use shortest round-trip decimal form (full double precision).
    """
    path = Path(path)
    if isinstance(obj, ObservedEntries):
        lines = [
            "%%MatrixMarket matrix coordinate real general",
            f"{obj.rows} {obj.cols} {obj.count}",
        ]
        for i, j, v in zip(obj.row_idx, obj.col_idx, obj.values):
            lines.append(f"{i + 1} {j + 1} {float(v)!r}")
    else:
        m = as_matrix(obj)
        rows, cols = m.shape
        lines = ["%%MatrixMarket matrix array real general", f"{rows} {cols}"]
        for j in range(cols):
            for i in range(rows):
                lines.append(f"{float(m[i, j])!r}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


# -- PGM -------------------------------------------------------------------


def _pgm_tokens(data: bytes, path):
    """Token scanner over a PGM header (handles # comments); yields bytes.

    Returns (tokens, offset-past-last-token) after four header tokens.
    """
    tokens = []
    pos = 0
    size = len(data)
    while len(tokens) < 4:
        while pos < size and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= size:
            raise ParseError(path, None, "truncated header")
        if data[pos : pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise ParseError(path, None, "unterminated comment")
            pos = nl + 1
            continue
        start = pos
        while pos < size and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) PGM image into a float64 matrix.

    Row i of the result is scanline i; values lie in [0, maxval] with
    maxval at most 65535 (two-byte big-endian samples above 255).
    """
    path = Path(path)
    data = path.read_bytes()
    if data[:2] not in (b"P2", b"P5"):
        raise ParseError(path, 1, f"bad magic {data[:2]!r}, expected P2 or P5")
    tokens, pos = _pgm_tokens(data, path)
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(path, None, f"bad header fields {tokens[1:]}") from None
    if width < 1 or height < 1:
        raise ParseError(path, None, f"bad image size {width}x{height}")
    if not 0 < maxval <= 65535:
        raise ParseError(path, None, f"maxval {maxval} out of range (0, 65535]")

    if magic == b"P5":
        raster = data[pos + 1 :]  # exactly one whitespace byte after maxval
        sample_width = 1 if maxval <= 255 else 2
        expected = width * height * sample_width
        if len(raster) < expected:
            raise ParseError(path, None, f"raster too short: {len(raster)} < {expected} bytes")
        dtype = np.uint8 if sample_width == 1 else np.dtype(">u2")
        pixels = np.frombuffer(raster[:expected], dtype=dtype).astype(np.float64)
    else:
        try:
            ascii_values = data[pos:].split()
            pixels = np.array([int(t) for t in ascii_values], dtype=np.float64)
        except ValueError:
            raise ParseError(path, None, "bad ASCII sample") from None
        if pixels.size != width * height:
            raise ParseError(
                path, None, f"expected {width * height} samples, got {pixels.size}"
            )
    if pixels.size and (pixels.min() < 0 or pixels.max() > maxval):
        raise ParseError(path, None, f"sample out of range [0, {maxval}]")
    return pixels.reshape((height, width))


def write_pgm(m, path) -> None:
    """Write a matrix as a binary (P5) 8-bit PGM image.

    Values are clamped to [0, 255] and rounded to the nearest integer.
    """
    m = as_matrix(m, name="image")
    path = Path(path)
    pixels = np.rint(np.clip(m, 0.0, 255.0)).astype(np.uint8)
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    path.write_bytes(header + pixels.tobytes())


# -- Run reports -----------------------------------------------------------

SCHEMA_VERSION = 1


@dataclass
class RunReport:
    """One solver run, serialized as a single JSON line.

    ``wall_time_ms`` fields are None when timing is suppressed so reports
    stay byte-identical across reruns with the same seed.
    """

    algorithm: str
    config: dict
    seed: int
    rank: int
    converged: bool
    energy: float
    matmul_cols: int
    block_audit: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    wall_time_ms: float | None = None
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_history(cls, algorithm, config, seed, rank, history, timing=True):
        """Build a report from a solver history."""
        iterations = [
            {
                "index": int(r.index),
                "sigmas": [float(s) for s in r.sigmas],
                "energy": [float(e) for e in r.energy],
                "block_width": int(r.block_width),
                "matmul_cols": int(r.matmul_cols),
                "wall_time_ms": float(r.wall_time_s * 1e3) if timing else None,
            }
            for r in history.records
        ]
        return cls(
            algorithm=algorithm,
            config=dict(config),
            seed=int(seed),
            rank=int(rank),
            converged=bool(history.converged),
            energy=float(history.energy),
            matmul_cols=int(history.total_matmul_cols),
            block_audit=[int(w) for w in history.block_audit],
            iterations=iterations,
            wall_time_ms=float(history.wall_time_s * 1e3) if timing else None,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RunReport":
        return cls(**json.loads(line))


def append_report(report: RunReport, path) -> None:
    """Append one report line to a JSONL file."""
    with Path(path).open("a", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")


def read_reports(path) -> list[RunReport]:
    """Read every report line of a JSONL file."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(RunReport.from_json(line))
    return out
