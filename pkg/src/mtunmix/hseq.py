"""Core array types, vectorization conventions, and the HSEQ on-disk format.

An HSEQ directory stores a hyperspectral image sequence as::

    manifest.json          metadata (dimensions, dtype, byte order, layout)
    frame_0000.f64         one raw binary file per frame, zero-based index
    frame_0001.f64         zero-padded to 4 digits
    ...

Every binary file holds 64-bit IEEE-754 floats, little-endian, column-major:
for an L x N frame, element (l, n) sits at byte offset ``8 * (n * L + l)``.
The same raw layout is reused for standalone matrix files, e.g. endmember
files (``m0.f64``, L x P) and abundance files (``abund_<t>.f64``, P x N).

Vectorization is column stacking throughout the package: ``vectorize_frame``
maps element (l, n) of an L x N matrix to index ``n * L + l``, which is the
ordering that makes ``vec(M * Psi) == diag(vec(M)) @ vec(Psi)`` hold for the
Hadamard product and ``vec(X @ A) == kron(A.T, I_L) @ vec(X)``.

All types are plain immutable containers; file operations are single-writer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SequenceFormatError

DTYPE_TAG = "float64"
BYTE_ORDER_TAG = "little"
LAYOUT_TAG = "column-major"
MANIFEST_NAME = "manifest.json"

_DTYPE = np.dtype("<f8")


def vectorize_frame(Y: np.ndarray) -> np.ndarray:
    """Column-stack an L x N matrix into a length-LN vector."""
    return np.asarray(Y, dtype=float).reshape(-1, order="F")


def devectorize_frame(y: np.ndarray, L: int, N: int) -> np.ndarray:
    """Exact inverse of :func:`vectorize_frame` for an L x N matrix."""
    y = np.asarray(y, dtype=float)
    if y.size != L * N:
        raise ValueError(f"cannot reshape length-{y.size} vector into {L}x{N}")
    return y.reshape((L, N), order="F")


@dataclass(frozen=True)
class HsiSequence:
    """An observed image sequence: T frames of L bands by N pixels."""

    frames: tuple[np.ndarray, ...]
    wavelengths: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError("a sequence needs at least one frame")
        frames = tuple(np.ascontiguousarray(f, dtype=float) for f in self.frames)
        shape = frames[0].shape
        if len(shape) != 2:
            raise ValueError(f"frames must be 2-D, got shape {shape}")
        for t, f in enumerate(frames):
            if f.shape != shape:
                raise ValueError(f"frame {t} has shape {f.shape}, expected {shape}")
            if not np.all(np.isfinite(f)):
                l, n = np.argwhere(~np.isfinite(f))[0]
                raise ValueError(f"non-finite entry at frame {t}, band {l}, pixel {n}")
        object.__setattr__(self, "frames", frames)
        if self.wavelengths is not None:
            wl = tuple(float(w) for w in self.wavelengths)
            if len(wl) != shape[0]:
                raise ValueError(f"{len(wl)} wavelengths for {shape[0]} bands")
            object.__setattr__(self, "wavelengths", wl)

    @property
    def L(self) -> int:
        return self.frames[0].shape[0]

    @property
    def N(self) -> int:
        return self.frames[0].shape[1]

    @property
    def T(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class GlmmModel:
    """Reference endmember signatures M0 (L x P) and their vectorization m0."""

    M0: np.ndarray
    m0: np.ndarray = field(init=False)

    def __post_init__(self):
        M0 = np.ascontiguousarray(self.M0, dtype=float)
        if M0.ndim != 2 or M0.shape[1] < 2:
            raise ValueError("M0 must be L x P with P >= 2")
        if not np.all(np.isfinite(M0)):
            raise ValueError("M0 contains non-finite entries")
        if np.any(M0 < 0):
            raise ValueError("M0 entries must be nonnegative")
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "m0", vectorize_frame(M0))

    @property
    def L(self) -> int:
        return self.M0.shape[0]

    @property
    def P(self) -> int:
        return self.M0.shape[1]


@dataclass(frozen=True)
class AbundanceSequence:
    """T abundance maps, each P x N; columns ideally on the probability simplex."""

    maps: tuple[np.ndarray, ...]

    def __post_init__(self):
        maps = tuple(np.ascontiguousarray(m, dtype=float) for m in self.maps)
        if len(maps) < 1:
            raise ValueError("empty abundance sequence")
        shape = maps[0].shape
        for t, m in enumerate(maps):
            if m.shape != shape:
                raise ValueError(f"map {t} has shape {m.shape}, expected {shape}")
        object.__setattr__(self, "maps", maps)

    @property
    def P(self) -> int:
        return self.maps[0].shape[0]

    @property
    def N(self) -> int:
        return self.maps[0].shape[1]

    @property
    def T(self) -> int:
        return len(self.maps)

    def max_simplex_violation(self) -> float:
        """Worst deviation from the simplex over all columns (for diagnostics)."""
        worst = 0.0
        for m in self.maps:
            worst = max(worst, float(np.max(np.abs(m.sum(axis=0) - 1.0))))
            worst = max(worst, float(max(0.0, -m.min())))
        return worst


@dataclass(frozen=True)
class Manifest:
    """Sidecar metadata for an HSEQ directory."""

    L: int
    N: int
    T: int
    P: int | None = None
    dtype: str = DTYPE_TAG
    byte_order: str = BYTE_ORDER_TAG
    layout: str = LAYOUT_TAG
    frame_files: tuple[str, ...] = ()
    seed: int | None = None

    def validate(self) -> None:
        if self.dtype != DTYPE_TAG:
            raise SequenceFormatError(f"unsupported dtype {self.dtype!r}, expected {DTYPE_TAG!r}")
        if self.byte_order != BYTE_ORDER_TAG:
            raise SequenceFormatError(
                f"unsupported byte order {self.byte_order!r}, expected {BYTE_ORDER_TAG!r}"
            )
        if self.layout != LAYOUT_TAG:
            raise SequenceFormatError(f"unsupported layout {self.layout!r}, expected {LAYOUT_TAG!r}")
        if self.frame_files and self.T != len(self.frame_files):
            raise SequenceFormatError(
                f"manifest declares T={self.T} but lists {len(self.frame_files)} frame files"
            )

    def to_dict(self) -> dict:
        d = {
            "L": self.L,
            "N": self.N,
            "T": self.T,
            "dtype": self.dtype,
            "byte_order": self.byte_order,
            "layout": self.layout,
            "frames": list(self.frame_files),
        }
        if self.P is not None:
            d["P"] = self.P
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        try:
            return cls(
                L=int(d["L"]),
                N=int(d["N"]),
                T=int(d["T"]),
                P=int(d["P"]) if "P" in d and d["P"] is not None else None,
                dtype=str(d.get("dtype", "")),
                byte_order=str(d.get("byte_order", "")),
                layout=str(d.get("layout", "")),
                frame_files=tuple(str(f) for f in d.get("frames", [])),
                seed=int(d["seed"]) if d.get("seed") is not None else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SequenceFormatError(f"malformed manifest: {exc}") from exc


def frame_file_name(t: int) -> str:
    return f"frame_{t:04d}.f64"


def write_matrix(path: Path | str, X: np.ndarray) -> None:
    """Write a 2-D array as raw little-endian float64, column-major."""
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        i, j = np.argwhere(~np.isfinite(X))[0]
        raise ValueError(f"non-finite entry at ({i}, {j}) in {path}")
    Path(path).write_bytes(np.asfortranarray(X, dtype=_DTYPE).tobytes(order="F"))


def read_matrix(path: Path | str, rows: int, cols: int | None = None) -> np.ndarray:
    """Read a raw matrix file written by :func:`write_matrix`.

    When ``cols`` is omitted it is inferred from the file size.
    """
    path = Path(path)
    if not path.is_file():
        raise SequenceFormatError(f"missing matrix file {path}")
    raw = path.read_bytes()
    if cols is None:
        if len(raw) % (8 * rows) != 0:
            raise SequenceFormatError(
                f"{path} holds {len(raw)} bytes, not a multiple of {8 * rows} (rows={rows})"
            )
        cols = len(raw) // (8 * rows)
    expected = 8 * rows * cols
    if len(raw) != expected:
        raise SequenceFormatError(f"{path} holds {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype=_DTYPE).astype(float)
    return flat.reshape((rows, cols), order="F")


def write_hseq(
    seq: HsiSequence, path: Path | str, seed: int | None = None, P: int | None = None
) -> None:
    """Write a sequence to an HSEQ directory (manifest + one file per frame)."""
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SequenceFormatError(f"cannot create directory {root}: {exc}") from exc
    names = tuple(frame_file_name(t) for t in range(seq.T))
    manifest = Manifest(L=seq.L, N=seq.N, T=seq.T, P=P, frame_files=names, seed=seed)
    for t, name in enumerate(names):
        write_matrix(root / name, seq.frames[t])
    (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))


def read_manifest(path: Path | str) -> Manifest:
    root = Path(path)
    mpath = root / MANIFEST_NAME
    if not mpath.is_file():
        raise SequenceFormatError(f"no {MANIFEST_NAME} in {root}")
    try:
        manifest = Manifest.from_dict(json.loads(mpath.read_text()))
    except json.JSONDecodeError as exc:
        raise SequenceFormatError(f"unparseable manifest {mpath}: {exc}") from exc
    manifest.validate()
    return manifest


def read_hseq(path: Path | str) -> HsiSequence:
    """Read an HSEQ directory, failing loudly on any size mismatch."""
    root = Path(path)
    manifest = read_manifest(root)
    if not manifest.frame_files:
        raise SequenceFormatError(f"manifest in {root} lists no frame files")
    frames = []
    for t, name in enumerate(manifest.frame_files):
        fpath = root / name
        if not fpath.is_file():
            raise SequenceFormatError(f"missing frame file {name} (frame {t}) in {root}")
        frames.append(read_matrix(fpath, manifest.L, manifest.N))
    return HsiSequence(frames=tuple(frames))


def abundance_file_name(t: int) -> str:
    return f"abund_{t:04d}.f64"


def endmember_file_name(t: int) -> str:
    return f"endm_{t:04d}.f64"


def psi_file_name(t: int) -> str:
    return f"psi_{t:04d}.f64"


def write_result_dir(
    path: Path | str,
    L: int,
    N: int,
    T: int,
    P: int,
    abundances=None,
    endmembers=None,
    psis=None,
    frames=None,
    seed: int | None = None,
) -> None:
    """Write an estimate/truth directory in the shared raw-matrix layout.

    Abundances are P x N per frame, endmembers L x P, scaling factors L x P
    (the devectorized state), frames L x N. All arrays are optional; a
    manifest records dimensions and whichever frame files exist.
    """
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SequenceFormatError(f"cannot create directory {root}: {exc}") from exc
    frame_names: tuple[str, ...] = ()
    if frames is not None:
        frame_names = tuple(frame_file_name(t) for t in range(T))
        for t, name in enumerate(frame_names):
            write_matrix(root / name, frames[t])
    manifest = Manifest(L=L, N=N, T=T, P=P, frame_files=frame_names, seed=seed)
    (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    for t in range(T):
        if abundances is not None:
            write_matrix(root / abundance_file_name(t), abundances[t])
        if endmembers is not None:
            write_matrix(root / endmember_file_name(t), endmembers[t])
        if psis is not None:
            write_matrix(root / psi_file_name(t), psis[t])


def read_result_dir(path: Path | str) -> dict:
    """Load whatever a result directory holds; keys absent when files are."""
    root = Path(path)
    manifest = read_manifest(root)
    if manifest.P is None:
        raise SequenceFormatError(f"manifest in {root} lacks the endmember count P")
    out: dict = {"manifest": manifest}
    if manifest.frame_files:
        out["frames"] = [
            read_matrix(root / name, manifest.L, manifest.N) for name in manifest.frame_files
        ]
    kinds = (
        ("abundances", abundance_file_name, manifest.P, manifest.N),
        ("endmembers", endmember_file_name, manifest.L, manifest.P),
        ("psis", psi_file_name, manifest.L, manifest.P),
    )
    for key, namer, rows, cols in kinds:
        if (root / namer(0)).is_file():
            out[key] = [read_matrix(root / namer(t), rows, cols) for t in range(manifest.T)]
    return out
