"""Channel tensor container and its on-disk formats.

Binary layout (all little-endian)::

    offset  size  field
    0       8     magic b"NSGBSMCT"
    8       4     format version (uint32, currently 1)
    12      4     kind (uint32, 0 = CIR, 1 = TRANSFER)
    16      32    axis lengths (4 x uint64): Rx element, Tx element, time, delay/frequency
    48      64    axis origin and step pairs (8 x float64), same axis order
    112     8     carrier frequency in Hz (float64)
    120     ...   payload: complex values as (real, imag) float64 pairs, C order

The Rx/Tx element axes use element offsets in meters (origin 0, step =
spacing). The last axis holds delay in seconds for CIRs and the baseband
frequency offset in Hz for transfer functions.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"NSGBSMCT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sII4Q8dd")
KINDS = ("CIR", "TRANSFER")


class TensorFormatError(ValueError):
    pass


@dataclass
class ChannelTensor:
    """Complex channel values indexed ``(q, p, time, delay-or-frequency)``."""

    values: np.ndarray
    kind: str
    origins: tuple = (0.0, 0.0, 0.0, 0.0)
    steps: tuple = (1.0, 1.0, 1.0, 1.0)
    carrier_frequency: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 4:
            raise ValueError("channel tensor must be 4-dimensional (q, p, time, bin)")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if len(self.origins) != 4 or len(self.steps) != 4:
            raise ValueError("need one origin and one step per axis")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("channel tensor holds non-finite values")
        self.origins = tuple(float(x) for x in self.origins)
        self.steps = tuple(float(x) for x in self.steps)

    def axis(self, i: int) -> np.ndarray:
        return self.origins[i] + self.steps[i] * np.arange(self.values.shape[i])

    @property
    def times(self) -> np.ndarray:
        return self.axis(2)

    @property
    def bins(self) -> np.ndarray:
        return self.axis(3)

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, KINDS.index(self.kind),
                              *self.values.shape,
                              *[v for pair in zip(self.origins, self.steps) for v in pair],
                              self.carrier_frequency)
        payload = np.ascontiguousarray(self.values).view("<f8").tobytes()
        return header + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "ChannelTensor":
        if len(data) < _HEADER.size:
            raise TensorFormatError("file too short for a channel tensor header")
        fields = _HEADER.unpack_from(data)
        magic, version, kind = fields[:3]
        if magic != MAGIC:
            raise TensorFormatError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise TensorFormatError(f"unsupported format version {version}")
        if kind >= len(KINDS):
            raise TensorFormatError(f"unknown tensor kind {kind}")
        shape = tuple(int(n) for n in fields[3:7])
        axes = fields[7:15]
        carrier = fields[15]
        n = int(np.prod(shape))
        payload = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
        if payload.size != 2 * n:
            raise TensorFormatError(f"payload holds {payload.size // 2} values, header says {n}")
        values = payload.view(np.complex128).reshape(shape).copy()
        return cls(values, KINDS[kind], axes[0::2], axes[1::2], carrier)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "ChannelTensor":
        return cls.from_bytes(Path(path).read_bytes())

    def export_csv(self, path, q: int = 0, p: int = 0) -> Path:
        """Write one ``(q, p)`` slice in long format."""
        path = Path(path)
        bin_name = "delay_s" if self.kind == "CIR" else "frequency_offset_hz"
        sl = self.values[q, p]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", bin_name, "real", "imag", "abs"])
            for i, t in enumerate(self.times):
                for j, b in enumerate(self.bins):
                    v = sl[i, j]
                    w.writerow([repr(float(x)) for x in (t, b, v.real, v.imag, abs(v))])
        return path
