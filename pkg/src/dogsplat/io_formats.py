"""Serialization: PLY checkpoints, PNG images, curve logs, camera lists.

Checkpoints store latents (opacity as logit, scales as log) in the standard
splatting vertex layout, so external viewers decode them the same way; the
pseudo-Gaussian latents ride along as extra properties that vanilla tooling
ignores. All round-trips are lossless at the stored 32-bit precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .camera import Camera
from .errors import ParseError, SchemaError, UnsupportedFormatError
from .scene import SceneModel, sh_coeff_count

_VANILLA_PREFIX = ("x", "y", "z")
_DOG_PROPS = ("f_alpha", "f_sx", "f_sy", "f_sz")

CURVE_HEADER = "iter,n_primitives,n_dog,l1,psnr,event"
CURVE_EVENTS = ("none", "eval", "prune", "activate_dog", "degrade", "finish")


# -- point-cloud checkpoints -------------------------------------------------

def _ply_property_names(sh_degree: int):
    rest = 3 * (sh_coeff_count(sh_degree) - 1)
    names = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(rest)]
    names += ["opacity", "scale_0", "scale_1", "scale_2",
              "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def write_ply(scene: SceneModel, path) -> None:
    """Binary little-endian PLY, one vertex per primitive, float32 latents."""
    n = scene.count
    k = sh_coeff_count(scene.sh_degree)
    names = _ply_property_names(scene.sh_degree)
    dtype = [(name, "<f4") for name in names] + \
        [(p, "<f4") for p in _DOG_PROPS] + [("dog_active", "u1")]
    rec = np.zeros(n, dtype=dtype)
    rec["x"], rec["y"], rec["z"] = scene.positions.T.astype(np.float32)
    for c in range(3):
        rec[f"f_dc_{c}"] = scene.color_coeffs[:, c, 0].astype(np.float32)
    for c in range(3):
        for m in range(k - 1):
            rec[f"f_rest_{c * (k - 1) + m}"] = \
                scene.color_coeffs[:, c, 1 + m].astype(np.float32)
    rec["opacity"] = scene.opacity_logit.astype(np.float32)
    for a in range(3):
        rec[f"scale_{a}"] = scene.log_scales[:, a].astype(np.float32)
    for a in range(4):
        rec[f"rot_{a}"] = scene.rotations[:, a].astype(np.float32)
    rec["f_alpha"] = scene.f_alpha_latent.astype(np.float32)
    for a, p in enumerate(("f_sx", "f_sy", "f_sz")):
        rec[p] = scene.f_scale_latent[:, a].astype(np.float32)
    rec["dog_active"] = scene.dog_active.astype(np.uint8)

    header = ["ply", "format binary_little_endian 1.0",
              f"comment f_s_max {scene.f_s_max!r}",
              f"element vertex {n}"]
    for name, typ in dtype:
        kind = "uchar" if typ == "u1" else "float"
        header.append(f"property {kind} {name}")
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())


_PLY_TYPES = {"float": "<f4", "float32": "<f4", "double": "<f8",
              "uchar": "u1", "uint8": "u1", "int": "<i4", "int32": "<i4"}


def read_ply(path) -> SceneModel:
    """Load a checkpoint; files without the DoG properties load as inactive."""
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise ParseError("not a PLY file", offset=0)
    body_start = end + len(b"end_header\n")
    props = []
    count = None
    f_s_max = 1.0
    offset = 0
    for line in data[:end].decode("ascii", errors="replace").splitlines():
        offset += len(line) + 1
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "binary_little_endian":
                raise ParseError(f"unsupported PLY format {tok[1]!r}",
                                 offset=offset - len(line) - 1)
        elif tok[0] == "comment" and len(tok) >= 3 and tok[1] == "f_s_max":
            f_s_max = float(tok[2])
        elif tok[0] == "element":
            if tok[1] != "vertex":
                raise ParseError(f"unsupported element {tok[1]!r}",
                                 offset=offset - len(line) - 1)
            count = int(tok[2])
        elif tok[0] == "property":
            if tok[1] not in _PLY_TYPES:
                raise ParseError(f"unsupported property type {tok[1]!r}",
                                 offset=offset - len(line) - 1)
            props.append((tok[2], _PLY_TYPES[tok[1]]))
    if count is None:
        raise ParseError("missing element vertex line", offset=0)

    dtype = np.dtype(props)
    need = count * dtype.itemsize
    if len(data) - body_start < need:
        raise ParseError(
            f"truncated vertex data: need {need} bytes, have {len(data) - body_start}",
            offset=body_start + (len(data) - body_start))
    rec = np.frombuffer(data[body_start:body_start + need], dtype=dtype, count=count)

    have = {name for name, _ in props}
    required = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    missing = [r for r in required if r not in have]
    if missing:
        raise SchemaError("checkpoint lacks required properties", missing)

    rest = sorted(int(n.split("_")[-1]) for n in have if n.startswith("f_rest_"))
    if rest != list(range(len(rest))):
        raise SchemaError("non-contiguous f_rest properties",
                          [f"f_rest_{i}" for i in range(len(rest)) if i not in rest])
    degree = {0: 0, 9: 1, 24: 2}.get(len(rest))
    if degree is None:
        raise SchemaError(f"unsupported f_rest count {len(rest)}")
    k = sh_coeff_count(degree)

    positions = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    coeffs = np.zeros((count, 3, k))
    for c in range(3):
        coeffs[:, c, 0] = rec[f"f_dc_{c}"]
        for m in range(k - 1):
            coeffs[:, c, 1 + m] = rec[f"f_rest_{c * (k - 1) + m}"]
    log_scales = np.stack([rec[f"scale_{a}"] for a in range(3)], axis=1)
    rotations = np.stack([rec[f"rot_{a}"] for a in range(4)], axis=1)
    if all(p in have for p in _DOG_PROPS):
        f_alpha = np.asarray(rec["f_alpha"], dtype=np.float64)
        f_scale = np.stack([rec["f_sx"], rec["f_sy"], rec["f_sz"]], axis=1)
        active = rec["dog_active"].astype(bool) if "dog_active" in have \
            else np.zeros(count, dtype=bool)
    else:
        f_alpha = np.zeros(count)
        f_scale = np.zeros((count, 3))
        active = np.zeros(count, dtype=bool)
    return SceneModel(positions, rotations, log_scales,
                      np.asarray(rec["opacity"], dtype=np.float64), coeffs,
                      degree, f_scale, f_alpha, active, f_s_max)


# -- images -------------------------------------------------------------------

def write_png(path, image) -> None:
    """8-bit RGB; values clamped to [0, 1], quantized round-half-up."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    quant = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(quant, mode="RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise ParseError(f"cannot decode image {path}: {exc}") from exc
    if img.mode != "RGB":
        raise UnsupportedFormatError(
            f"{path}: expected 8-bit RGB, got mode {img.mode!r}")
    return np.asarray(img, dtype=np.float64) / 255.0


# -- curve log ----------------------------------------------------------------

@dataclass
class CurveRow:
    iteration: int
    n_primitives: int
    n_dog: int
    l1: float
    psnr: float
    event: str = "none"

    def to_line(self) -> str:
        return (f"{self.iteration},{self.n_primitives},{self.n_dog},"
                f"{self.l1!r},{self.psnr!r},{self.event}")


class CurveLog:
    """Append-only CSV writer; every append is flushed so aborts keep the log."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8")
        self._fh.write(CURVE_HEADER + "\n")
        self._fh.flush()

    def append(self, row: CurveRow) -> None:
        if row.event not in CURVE_EVENTS:
            raise ValueError(f"unknown event {row.event!r}")
        self._fh.write(row.to_line() + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def append_curve_row(log: CurveLog, row: CurveRow) -> None:
    log.append(row)


def write_curve(path, rows) -> None:
    with CurveLog(path) as log:
        for row in rows:
            log.append(row)


def read_curve(path) -> list[CurveRow]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CURVE_HEADER:
        raise ParseError(f"bad curve header, expected {CURVE_HEADER!r}", line=1)
    rows = []
    for no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ParseError(f"expected 6 fields, got {len(parts)}", line=no)
        try:
            row = CurveRow(int(parts[0]), int(parts[1]), int(parts[2]),
                           float(parts[3]), float(parts[4]), parts[5])
        except ValueError as exc:
            raise ParseError(f"bad field: {exc}", line=no) from exc
        if row.event not in CURVE_EVENTS:
            raise ParseError(f"unknown event token {row.event!r}", line=no)
        rows.append(row)
    return rows


# -- camera lists ---------------------------------------------------------------

def write_cameras(path, entries) -> None:
    """One line per view: filename, 9 rotation + 3 translation floats
    (row-major), fx fy cx cy, width height."""
    with open(path, "w", encoding="utf-8") as fh:
        for filename, cam in entries:
            nums = list(cam.rotation.reshape(-1)) + list(cam.translation) \
                + [cam.fx, cam.fy, cam.cx, cam.cy]
            fh.write(filename + " " + " ".join(repr(float(v)) for v in nums)
                     + f" {cam.width} {cam.height}\n")


def read_cameras(path, near=0.1) -> list[tuple[str, Camera]]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for no, raw in enumerate(fh.read().splitlines(), start=1):
            if not raw.strip():
                continue
            tok = raw.split()
            if len(tok) != 1 + 12 + 4 + 2:
                raise ParseError(
                    f"expected filename + 18 numbers, got {len(tok)} tokens",
                    line=no)
            try:
                nums = [float(v) for v in tok[1:17]]
                width, height = int(tok[17]), int(tok[18])
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", line=no) from exc
            rot = np.array(nums[0:9]).reshape(3, 3)
            cam = Camera(rot, np.array(nums[9:12]), nums[12], nums[13],
                         nums[14], nums[15], width, height, near)
            entries.append((tok[0], cam))
    return entries
