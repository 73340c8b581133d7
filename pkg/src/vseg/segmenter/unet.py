"""A small encoder-decoder segmentation network in plain numpy.

Forward and backward passes are written by hand (im2col convolutions, 2x max
pooling, nearest-neighbor upsampling with skip concatenation, per-pixel
softmax head) so training has no framework dependency and gradients can be
checked against finite differences. Weights live in a flat name -> array dict
whose iteration order is the serialization order of the VSGW weight file.

VSGW layout (little endian): magic "VSGW", u8 version=1, u16 depth,
u16 base_channels, u16 in_channels, u16 out_channels, u32 total value count,
then all parameters as 64-bit floats, raveled C-order, in param_names() order.
"""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import N_CLASSES
from .dice import DEFAULT_SMOOTHING
from .masks import FormatError, MaskStack

WEIGHTS_MAGIC = b"VSGW"
WEIGHTS_VERSION = 1
_W_HEADER = struct.Struct("<4sBHHHHI")


@dataclass(frozen=True)
class ToyUNetSpec:
    depth: int = 3
    base_channels: int = 8
    in_channels: int = 1
    out_channels: int = N_CLASSES

    def __post_init__(self):
        if self.depth < 1 or self.base_channels < 1:
            raise ValueError("depth and base_channels must be >= 1")

    def min_side(self) -> int:
        return 2**self.depth


# -- primitive layers ---------------------------------------------------------


class _Workspace:
    """Per-thread scratch buffers so the hot loop never reallocates.

    Buffers are keyed by layer and role; every consumer fully overwrites the
    region it reads back, so stale contents can never leak into results.
    """

    def __init__(self):
        self._local = threading.local()

    def get(self, key: str, shape: tuple, dtype) -> np.ndarray:
        bufs = getattr(self._local, "bufs", None)
        if bufs is None:
            bufs = self._local.bufs = {}
        # shape is part of the key so alternating batch sizes (trailing
        # partial batches) keep both buffers alive instead of thrashing
        full_key = (key, shape, np.dtype(dtype).str)
        buf = bufs.get(full_key)
        if buf is None:
            buf = bufs[full_key] = np.zeros(shape, dtype)
        return buf


def _im2col3(x: np.ndarray, ws: _Workspace, key: str) -> np.ndarray:
    """3x3 same-padding patch matrix: (B, C, H, W) -> (B, C*9, H*W)."""
    b, c, h, w = x.shape
    # the padded border is written once (zeros) and only the interior changes
    xp = ws.get(key + ".xp", (b, c, h + 2, w + 2), x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    cols = ws.get(key + ".cols", (b, c, 9, h, w), x.dtype)
    for k in range(9):
        ki, kj = divmod(k, 3)
        cols[:, :, k] = xp[:, :, ki : ki + h, kj : kj + w]
    return cols.reshape(b, c * 9, h * w)


def _conv3_forward(x, weight, bias, ws: _Workspace, key: str):
    b, c, h, w = x.shape
    cout = weight.shape[0]
    cols = _im2col3(x, ws, key)
    y = ws.get(key + ".y", (b, cout, h * w), x.dtype)
    np.matmul(weight.reshape(cout, c * 9), cols, out=y)
    y += bias[:, None]
    return y.reshape(b, cout, h, w), (cols, x.shape)


def _conv3_backward(dy, weight, cache, ws: _Workspace, key: str):
    cols, (b, c, h, w) = cache
    cout = weight.shape[0]
    dyf = dy.reshape(b, cout, h * w)
    dw = np.matmul(dyf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
    db = dyf.sum(axis=(0, 2))
    dcols = ws.get(key + ".dcols", (b, c * 9, h * w), dy.dtype)
    np.matmul(weight.reshape(cout, c * 9).T, dyf, out=dcols)
    dcols = dcols.reshape(b, c, 9, h, w)
    # write the center tap first, accumulate the rest; the padded border takes
    # stale garbage but only the interior is ever returned
    dxp = ws.get(key + ".dxp", (b, c, h + 2, w + 2), dy.dtype)
    dxp[:, :, 1 : 1 + h, 1 : 1 + w] = dcols[:, :, 4]
    for k in (0, 1, 2, 3, 5, 6, 7, 8):
        ki, kj = divmod(k, 3)
        dxp[:, :, ki : ki + h, kj : kj + w] += dcols[:, :, k]
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _conv1_forward(x, weight, bias):
    y = np.einsum("oc,bchw->bohw", weight, x, optimize=True)
    y += bias[None, :, None, None]
    return y


def _conv1_backward(dy, weight, x):
    dw = np.einsum("bohw,bchw->oc", dy, x, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    dx = np.einsum("oc,bohw->bchw", weight, dy, optimize=True)
    return dx, dw, db


def _pool2_forward(x):
    b, c, h, w = x.shape
    xr = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    xr = xr.reshape(b, c, h // 2, w // 2, 4)
    idx = xr.argmax(axis=-1)
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape)


def _pool2_backward(dy, cache):
    idx, (b, c, h, w) = cache
    dxr = np.zeros((b, c, h // 2, w // 2, 4), dy.dtype)
    np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=-1)
    return (
        dxr.reshape(b, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h, w)
    )


def _upsample2_forward(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def _upsample2_backward(dy):
    b, c, h2, w2 = dy.shape
    return dy.reshape(b, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))


def _relu_forward(x):
    return np.maximum(x, 0.0)


def _relu_inplace(x):
    return np.maximum(x, 0.0, out=x)


def _softmax_ch(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# -- the model -----------------------------------------------------------------


class ToyUNet:
    """Desk-scale UNet-style segmenter with a per-pixel softmax head."""

    def __init__(self, spec: ToyUNetSpec | None = None, seed: int = 0, dtype=np.float64):
        self.spec = spec or ToyUNetSpec()
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self._ws = _Workspace()
        self._init_params(seed)

    # channel plan: enc i maps to base * 2^i, bottleneck to base * 2^depth
    def _blocks(self):
        sp = self.spec
        chans = [sp.base_channels * 2**i for i in range(sp.depth + 1)]
        blocks = []
        cin = sp.in_channels
        for i in range(sp.depth):
            blocks.append((f"enc{i}", cin, chans[i]))
            cin = chans[i]
        blocks.append(("bottleneck", cin, chans[sp.depth]))
        for i in reversed(range(sp.depth)):
            blocks.append((f"dec{i}", chans[i + 1] + chans[i], chans[i]))
        return blocks, chans

    def _init_params(self, seed: int):
        rng = np.random.default_rng(seed)
        blocks, chans = self._blocks()
        for name, cin, cout in blocks:
            for conv, ci in (("conv1", cin), ("conv2", cout)):
                bound = 1.0 / np.sqrt(ci * 9)
                self.params[f"{name}.{conv}.weight"] = rng.uniform(
                    -bound, bound, size=(cout, ci, 3, 3)
                ).astype(self.dtype)
                self.params[f"{name}.{conv}.bias"] = np.zeros(cout, self.dtype)
        bound = 1.0 / np.sqrt(chans[0])
        self.params["head.weight"] = rng.uniform(
            -bound, bound, size=(self.spec.out_channels, chans[0])
        ).astype(self.dtype)
        self.params["head.bias"] = np.zeros(self.spec.out_channels, self.dtype)

    def param_names(self) -> list[str]:
        return list(self.params)

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "ToyUNet":
        dup = ToyUNet.__new__(ToyUNet)
        dup.spec = self.spec
        dup.dtype = self.dtype
        dup.params = {k: v.copy() for k, v in self.params.items()}
        dup._ws = _Workspace()
        return dup

    def _check_side(self, n: int):
        if n % self.spec.min_side() != 0:
            raise ValueError(
                f"input side {n} is not divisible by 2^depth = {self.spec.min_side()}"
            )

    def _block_forward(self, name, x, cache):
        p = self.params
        h1, c1 = _conv3_forward(
            x, p[f"{name}.conv1.weight"], p[f"{name}.conv1.bias"], self._ws, name + ".1"
        )
        a1 = _relu_inplace(h1)
        h2, c2 = _conv3_forward(
            a1, p[f"{name}.conv2.weight"], p[f"{name}.conv2.bias"], self._ws, name + ".2"
        )
        a2 = _relu_inplace(h2)
        cache[name] = (c1, a1 > 0, c2, a2 > 0)
        return a2

    def _block_backward(self, name, dy, cache, grads):
        p = self.params
        c1, m1, c2, m2 = cache[name]
        dh2 = dy * m2
        da1, dw2, db2 = _conv3_backward(
            dh2, p[f"{name}.conv2.weight"], c2, self._ws, name + ".2"
        )
        grads[f"{name}.conv2.weight"] = dw2
        grads[f"{name}.conv2.bias"] = db2
        dh1 = da1 * m1
        dx, dw1, db1 = _conv3_backward(
            dh1, p[f"{name}.conv1.weight"], c1, self._ws, name + ".1"
        )
        grads[f"{name}.conv1.weight"] = dw1
        grads[f"{name}.conv1.bias"] = db1
        return dx

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """Per-pixel class probabilities for a (B, in_channels, N, N) batch."""
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ValueError(f"expected (B, {self.spec.in_channels}, N, N) input")
        self._check_side(x.shape[2])
        x = np.ascontiguousarray(x, dtype=self.dtype)
        cache: dict = {"x": x}
        skips = []
        cur = x
        for i in range(self.spec.depth):
            out = self._block_forward(f"enc{i}", cur, cache)
            skips.append(out)
            cur, pc = _pool2_forward(out)
            cache[f"pool{i}"] = pc
        cur = self._block_forward("bottleneck", cur, cache)
        for i in reversed(range(self.spec.depth)):
            up = _upsample2_forward(cur)
            skip = skips[i]
            cache[f"split{i}"] = up.shape[1]
            cur = self._block_forward(f"dec{i}", np.concatenate([up, skip], axis=1), cache)
        cache["feat"] = cur
        logits = _conv1_forward(cur, self.params["head.weight"], self.params["head.bias"])
        probs = _softmax_ch(logits)
        cache["probs"] = probs
        return (probs, cache) if want_cache else probs

    def backward(self, dprobs: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss w.r.t. every parameter, given dL/dprobs."""
        grads: dict[str, np.ndarray] = {}
        probs = cache["probs"]
        dlogits = probs * (dprobs - (dprobs * probs).sum(axis=1, keepdims=True))
        dfeat, dw, db = _conv1_backward(dlogits, self.params["head.weight"], cache["feat"])
        grads["head.weight"] = dw
        grads["head.bias"] = db
        cur = dfeat
        for i in range(self.spec.depth):
            dcat = self._block_backward(f"dec{i}", cur, cache, grads)
            nup = cache[f"split{i}"]
            dup, dskip = dcat[:, :nup], dcat[:, nup:]
            # skip gradient joins the encoder path again at its own level
            cache[f"dskip{i}"] = dskip
            cur = _upsample2_backward(dup)
        cur = self._block_backward("bottleneck", cur, cache, grads)
        for i in reversed(range(self.spec.depth)):
            dpooled = _pool2_backward(cur, cache[f"pool{i}"])
            cur = self._block_backward(f"enc{i}", dpooled + cache[f"dskip{i}"], cache, grads)
        return grads

    def loss_and_grads(self, x, targets, smoothing: float = DEFAULT_SMOOTHING):
        """Dice loss aggregated per class over the whole batch, with gradients.

        Batch-level aggregation keeps every class populated, so the smoothing
        term never turns an absent class into a free perfect score; per-sample
        averaging has a degenerate all-background optimum on single-event
        corpora.
        """
        probs, cache = self.forward(x, want_cache=True)
        t = np.asarray(targets, dtype=self.dtype)
        if t.shape != probs.shape:
            raise ValueError(f"target shape {t.shape} != prediction shape {probs.shape}")
        c = t.shape[1]
        inter = (probs * t).sum(axis=(0, 2, 3))
        denom = probs.sum(axis=(0, 2, 3)) + t.sum(axis=(0, 2, 3)) + smoothing
        numer = 2.0 * inter + smoothing
        loss = float((1.0 - numer / denom).mean())
        dprobs = -(2.0 * t * denom[:, None, None] - numer[:, None, None]) / (
            denom[:, None, None] ** 2
        )
        dprobs /= c
        grads = self.backward(dprobs, cache)
        return loss, grads

    def segment(self, image: np.ndarray) -> MaskStack:
        """Per-class probability masks for one N x N image."""
        a = np.asarray(image, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square N x N image, got shape {a.shape}")
        probs = self.forward(a[None, None])
        return MaskStack(masks=probs[0])

    def segment_batch(self, images: np.ndarray) -> np.ndarray:
        """Probability stacks (B, 6, N, N) for a batch of N x N images."""
        a = np.asarray(images, dtype=np.float64)
        return self.forward(a[:, None])

    # -- weight serialization ---------------------------------------------

    def save_weights(self, path) -> None:
        sp = self.spec
        flat = np.concatenate([p.ravel() for p in self.params.values()])
        with open(path, "wb") as fh:
            fh.write(
                _W_HEADER.pack(
                    WEIGHTS_MAGIC,
                    WEIGHTS_VERSION,
                    sp.depth,
                    sp.base_channels,
                    sp.in_channels,
                    sp.out_channels,
                    flat.size,
                )
            )
            fh.write(flat.astype("<f8").tobytes())

    @classmethod
    def load_weights(cls, path, dtype=np.float64) -> "ToyUNet":
        raw = Path(path).read_bytes()
        if len(raw) < _W_HEADER.size:
            raise FormatError(f"truncated VSGW header at byte {len(raw)}")
        magic, version, depth, base, cin, cout, count = _W_HEADER.unpack_from(raw)
        if magic != WEIGHTS_MAGIC:
            raise FormatError("not a VSGW file")
        if version != WEIGHTS_VERSION:
            raise FormatError(f"unsupported VSGW version {version}")
        model = cls(ToyUNetSpec(depth, base, cin, cout), seed=0, dtype=dtype)
        if count != model.n_params():
            raise FormatError(
                f"weight count {count} does not match architecture ({model.n_params()})"
            )
        need = _W_HEADER.size + count * 8
        if len(raw) != need:
            raise FormatError(f"VSGW payload ends at byte {len(raw)}, expected {need}")
        flat = np.frombuffer(raw, dtype="<f8", offset=_W_HEADER.size)
        pos = 0
        for name, p in model.params.items():
            model.params[name] = flat[pos : pos + p.size].reshape(p.shape).astype(dtype)
            pos += p.size
        return model


def segment(image: np.ndarray, model: ToyUNet) -> MaskStack:
    """Module-level convenience wrapper around ToyUNet.segment."""
    return model.segment(image)
