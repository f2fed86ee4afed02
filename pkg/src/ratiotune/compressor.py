"""Uniform facade over error-bounded compressors.

A :class:`CompressorHandle` hides codec differences behind compress,
decompress and eval_ratio.  The handle enforces the capability gate
(dimensionality, error-control kind, minimum bound) and serialises calls
for codecs that are not reentrant.

Ratios are raw array bytes over the byte length of the codec's own output;
nothing is added on top of what the codec emits.
"""

from __future__ import annotations

import os
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import ABSOLUTE, ELEMENT_KINDS, MSE, ContractError, Dataset


class CompressorError(RuntimeError):
    """A codec failed; the message carries the codec name."""

    def __init__(self, codec: str, message: str):
        super().__init__(f"{codec}: {message}")
        self.codec = codec


class UnsupportedDimensionality(CompressorError):
    pass


class BoundUnsupported(CompressorError):
    pass


class CorruptBuffer(CompressorError):
    pass


@dataclass(frozen=True)
class CapabilitySet:
    supported_dims: frozenset
    supported_controls: frozenset = frozenset({ABSOLUTE})
    reentrant: bool = True
    # None means: smallest positive normal of the dataset's element type
    min_error_bound: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "supported_dims", frozenset(self.supported_dims))
        object.__setattr__(self, "supported_controls", frozenset(self.supported_controls))
        if not self.supported_dims:
            raise ContractError("supported_dims must not be empty")

    def min_bound_for(self, element_kind: str) -> float:
        if self.min_error_bound is not None:
            return self.min_error_bound
        return float(np.finfo(ELEMENT_KINDS[element_kind]).tiny)


@dataclass(frozen=True, eq=False)
class CompressedBuffer:
    data: bytes
    original_shape: tuple
    original_element_kind: str
    codec_name: str
    error_bound_used: float

    def __len__(self):
        return len(self.data)


class CompressorHandle:
    """Base class for codecs; subclasses implement ``_encode`` and ``_decode``."""

    name = "abstract"

    def __init__(self, capabilities: CapabilitySet, fixed_params: Optional[dict] = None):
        self.capabilities = capabilities
        self.fixed_params = dict(fixed_params or {})
        self._lock = threading.Lock()
        self._stats_lock = threading.Lock()
        self._active = 0
        self.calls = 0
        self.max_concurrency = 0

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"

    # -- hooks -------------------------------------------------------------

    def _encode(self, values: np.ndarray, bound: float, kind: str) -> bytes:
        raise NotImplementedError

    def _decode(self, buf: CompressedBuffer) -> np.ndarray:
        raise NotImplementedError

    def effective_bound(self, bound: float) -> float:
        """The bound the codec actually acts on.

        Two bounds with the same effective bound give identical compressed
        sizes, which lets exhaustive sweeps skip repeat work.
        """
        return bound

    # -- public surface ----------------------------------------------------

    def check(self, d: Dataset, bound: float, kind: str = ABSOLUTE):
        caps = self.capabilities
        if d.ndim not in caps.supported_dims:
            raise UnsupportedDimensionality(
                self.name, f"{d.ndim}-D data not supported (supports {sorted(caps.supported_dims)})"
            )
        if kind not in caps.supported_controls:
            raise ContractError(f"{self.name} does not support error control {kind!r}")
        lo = caps.min_bound_for(d.element_kind)
        if not bound >= lo:
            raise BoundUnsupported(self.name, f"bound {bound!r} below minimum {lo!r}")

    def compress(self, d: Dataset, bound: float, kind: str = ABSOLUTE) -> CompressedBuffer:
        self.check(d, bound, kind)
        data = self._call(self._encode, d.values, float(bound), kind)
        if not data:
            raise CompressorError(self.name, "codec produced an empty buffer")
        return CompressedBuffer(bytes(data), d.shape, d.element_kind, self.name, float(bound))

    def decompress(self, buf: CompressedBuffer, like: Optional[Dataset] = None) -> Dataset:
        if buf.codec_name != self.name:
            raise CorruptBuffer(self.name, f"buffer was produced by {buf.codec_name!r}")
        values = self._call(self._decode, buf)
        values = np.asarray(values)
        if tuple(values.shape) != tuple(buf.original_shape) or values.dtype != ELEMENT_KINDS[buf.original_element_kind]:
            raise CorruptBuffer(self.name, "decoded array does not match the recorded shape/type")
        if like is not None:
            return like.with_values(values)
        return Dataset(values)

    def eval_ratio(self, d: Dataset, bound: float, kind: str = ABSOLUTE) -> float:
        return d.nbytes / len(self.compress(d, bound, kind))

    def _call(self, fn, *args):
        if self.capabilities.reentrant:
            return self._instrumented(fn, *args)
        with self._lock:
            return self._instrumented(fn, *args)

    def _instrumented(self, fn, *args):
        with self._stats_lock:
            self.calls += 1
            self._active += 1
            self.max_concurrency = max(self.max_concurrency, self._active)
        try:
            return fn(*args)
        except CompressorError:
            raise
        except (ValueError, OverflowError, MemoryError) as exc:
            raise CompressorError(self.name, str(exc)) from exc
        finally:
            with self._stats_lock:
                self._active -= 1


def compress(c: CompressorHandle, d: Dataset, bound: float, kind: str = ABSOLUTE) -> CompressedBuffer:
    return c.compress(d, bound, kind)


def decompress(c: CompressorHandle, b: CompressedBuffer) -> Dataset:
    return c.decompress(b)


def eval_ratio(c: CompressorHandle, d: Dataset, bound: float, kind: str = ABSOLUTE) -> float:
    return c.eval_ratio(d, bound, kind)


def roundtrip(c: CompressorHandle, d: Dataset, bound: float, kind: str = ABSOLUTE) -> tuple[Dataset, float]:
    """Compress then decompress; returns the reconstruction and the ratio."""
    buf = c.compress(d, bound, kind)
    return c.decompress(buf, like=d), d.nbytes / len(buf)


class IdentityCompressor(CompressorHandle):
    """Lossless passthrough: the buffer is the raw array, so the ratio is 1."""

    name = "identity"

    def __init__(self, reentrant: bool = True):
        super().__init__(
            CapabilitySet(
                supported_dims=frozenset(range(1, 9)),
                supported_controls=frozenset({ABSOLUTE, MSE}),
                reentrant=reentrant,
                min_error_bound=0.0,
            )
        )

    def _encode(self, values, bound, kind):
        return values.astype(values.dtype.newbyteorder("<"), copy=False).tobytes()

    def _decode(self, buf):
        dtype = ELEMENT_KINDS[buf.original_element_kind]
        expected = int(np.prod(buf.original_shape)) * dtype.itemsize
        if len(buf.data) != expected:
            raise CorruptBuffer(self.name, f"expected {expected} bytes, got {len(buf.data)}")
        return np.frombuffer(buf.data, dtype=dtype).reshape(buf.original_shape).copy()


class ExternalCompressor(CompressorHandle):
    """Compressor living in a separate executable.

    The plugin is invoked once per call with::

        --input PATH --output PATH --shape d1,d2,... --dtype f32|f64
        --mode abs|mse --bound E --op compress|decompress

    Input for ``compress`` is the raw little-endian row-major array; input for
    ``decompress`` is whatever the plugin wrote on ``compress``.  Exit status
    0 is success, 2 means the bound is not supported, anything else is a
    failure.  Each call is its own process, so the handle is reentrant.
    """

    def __init__(
        self,
        command: Sequence[str],
        name: str = "external",
        supported_dims=frozenset({1, 2, 3}),
        supported_controls=frozenset({ABSOLUTE}),
        min_error_bound: Optional[float] = None,
        timeout: Optional[float] = None,
        fixed_params: Optional[dict] = None,
    ):
        super().__init__(
            CapabilitySet(supported_dims, supported_controls, True, min_error_bound),
            fixed_params,
        )
        self.command = list(command)
        self.name = name
        self.timeout = timeout

    def _run(self, op, payload: bytes, shape, kind, bound, mode) -> bytes:
        dtype_flag = "f32" if kind == "float32" else "f64"
        mode_flag = "abs" if mode == ABSOLUTE else "mse"
        with tempfile.TemporaryDirectory(prefix="ratiotune-") as tmp:
            src = os.path.join(tmp, "input.bin")
            dst = os.path.join(tmp, "output.bin")
            with open(src, "wb") as fh:
                fh.write(payload)
            argv = self.command + [
                "--input", src,
                "--output", dst,
                "--shape", ",".join(str(s) for s in shape),
                "--dtype", dtype_flag,
                "--mode", mode_flag,
                "--bound", repr(float(bound)),
                "--op", op,
            ]
            for key, value in sorted(self.fixed_params.items()):
                argv += [f"--{key}", str(value)]
            try:
                proc = subprocess.run(argv, capture_output=True, timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise CompressorError(self.name, f"could not run plugin: {exc}") from exc
            if proc.returncode == 2:
                raise BoundUnsupported(self.name, f"plugin rejected bound {bound!r}")
            if proc.returncode != 0:
                err = proc.stderr.decode(errors="replace").strip()
                raise CompressorError(self.name, f"plugin exited with {proc.returncode}: {err}")
            try:
                with open(dst, "rb") as fh:
                    return fh.read()
            except OSError as exc:
                raise CompressorError(self.name, f"plugin wrote no output: {exc}") from exc

    def _encode(self, values, bound, kind):
        le = values.astype(values.dtype.newbyteorder("<"), copy=False)
        return self._run("compress", le.tobytes(), values.shape, _kind_of(values), bound, kind)

    def _decode(self, buf):
        raw = self._run(
            "decompress", buf.data, buf.original_shape, buf.original_element_kind,
            buf.error_bound_used, ABSOLUTE,
        )
        dtype = ELEMENT_KINDS[buf.original_element_kind]
        expected = int(np.prod(buf.original_shape)) * dtype.itemsize
        if len(raw) != expected:
            raise CorruptBuffer(self.name, f"plugin returned {len(raw)} bytes, expected {expected}")
        return np.frombuffer(raw, dtype=dtype).reshape(buf.original_shape).copy()


def _kind_of(values: np.ndarray) -> str:
    return "float32" if values.dtype.itemsize == 4 else "float64"


def make_compressor(name: str, **params) -> CompressorHandle:
    """Build a handle by registry name.

    ``pq`` and ``bt`` are the in-tree codecs, ``identity`` is the lossless
    passthrough, and ``external`` wraps a plugin command given as
    ``command=...`` (a string is split on whitespace).
    """
    try:
        return _build(name, params)
    except TypeError as exc:
        raise ContractError(f"bad parameters for codec {name!r}: {exc}") from exc


def _build(name: str, params: dict) -> CompressorHandle:
    from .codecs import BTCompressor, PQCompressor

    key = name.lower()
    if key == "pq":
        return PQCompressor(**params)
    if key in ("pq-nodict", "pq_nodict"):
        return PQCompressor(dictionary_stage=False, **params)
    if key == "bt":
        return BTCompressor(**params)
    if key == "identity":
        return IdentityCompressor(**params)
    if key == "external" or key.startswith("external:"):
        params = dict(params)
        command = params.pop("command", None)
        if key.startswith("external:"):
            command = key.split(":", 1)[1]
        if not command:
            raise ContractError("external compressor needs a command")
        if isinstance(command, str):
            command = command.split()
        return ExternalCompressor(command, **params)
    raise ContractError(f"unknown codec {name!r}; known: {', '.join(CODEC_NAMES)}")


CODEC_NAMES = ("pq", "pq-nodict", "bt", "identity", "external")
