#!/usr/bin/env python3
"""Regenerate the committed test fixtures under crates/core/tests/fixtures.

Builds a tiny randomly initialised classifier in PyTorch (conv + batch-norm
blocks, every supported op kind), fuses batch-norm into the convolutions,
writes it as an MSLW container, and records a golden activation bundle from
the unfused PyTorch forward pass. Also writes a 3-input identity model.

Usage: python3 tools/gen_fixtures.py [output_dir]
"""

import hashlib
import json
import struct
import sys
import zlib
from pathlib import Path

import numpy as np
import torch
from torch import nn

ALIGN = 16
SEED = 20240611
CLASS_NAMES = ["mpox", "other_skin", "normal"]
SIZE = 32


def align(n):
    return (n + ALIGN - 1) // ALIGN * ALIGN


def compact(obj):
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


class ConvBn(nn.Module):
    def __init__(self, cin, cout, k, s, p):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, k, s, p, bias=False)
        self.bn = nn.BatchNorm2d(cout)
        self.k, self.s, self.p = k, s, p

    def forward(self, x):
        return self.bn(self.conv(x))

    def fused(self):
        w = self.conv.weight.detach().double()
        bn = self.bn
        scale = bn.weight.detach().double() / torch.sqrt(bn.running_var.double() + bn.eps)
        weight = w * scale[:, None, None, None]
        bias = bn.bias.detach().double() - bn.running_mean.double() * scale
        return weight.float(), bias.float()


class Tiny(nn.Module):
    def __init__(self):
        super().__init__()
        self.stem = ConvBn(3, 8, 3, 2, 1)
        self.pool = nn.MaxPool2d(3, 1, 1)
        self.inner = ConvBn(4, 4, 3, 1, 1)
        self.mix = ConvBn(12, 16, 1, 1, 0)
        self.drop = nn.Dropout(0.2)
        self.head = nn.Linear(16, len(CLASS_NAMES))

    def graph(self, x):
        """Forward pass returning (node records, per-node outputs)."""
        silu = nn.functional.silu
        outs, nodes = [], []

        def add(kind, inputs, value, attrs=None, weights=None):
            nodes.append((kind, inputs, attrs, weights))
            outs.append(value)
            return len(outs) - 1

        i = add("INPUT", [], x)
        c = add("CONV2D", [i], self.stem(outs[i]), self.stem, self.stem.fused())
        c = add("SILU", [c], silu(outs[c]))
        m = add("MAXPOOL", [c], self.pool(outs[c]), {"kernel": 3, "stride": 1, "padding": 1})
        a, b = torch.chunk(outs[m], 2, dim=1)
        lo = add("SPLIT2", [m], a, {"half": 0})
        hi = add("SPLIT2", [m], b, {"half": 1})
        r = add("CONV2D", [hi], self.inner(outs[hi]), self.inner, self.inner.fused())
        r = add("SILU", [r], silu(outs[r]))
        r = add("ADD", [hi, r], outs[hi] + outs[r])
        cat = add("CONCAT", [lo, hi, r], torch.cat([outs[lo], outs[hi], outs[r]], dim=1))
        c = add("CONV2D", [cat], self.mix(outs[cat]), self.mix, self.mix.fused())
        c = add("SILU", [c], silu(outs[c]))
        g = add("GAP", [c], outs[c].mean(dim=(2, 3), keepdim=True))
        d = add("DROPOUT_NOOP", [g], self.drop(outs[g]))
        f = add("FLATTEN", [d], torch.flatten(outs[d], 1))
        lin = self.head
        l = add("LINEAR", [f], lin(outs[f]), None, (lin.weight.detach().float(), lin.bias.detach().float()))
        add("SOFTMAX", [l], torch.softmax(outs[l], dim=1))
        return nodes, outs


def write_mslw(path, metadata, nodes):
    blobs = bytearray()

    def push(t):
        nonlocal blobs
        blobs.extend(b"\0" * (align(len(blobs)) - len(blobs)))
        offset = len(blobs)
        blobs.extend(t.detach().cpu().numpy().astype("<f4").tobytes())
        return {"offset": offset, "shape": list(t.shape)}

    records, params = [], 0
    for idx, (kind, inputs, attrs, weights) in enumerate(nodes):
        rec = {"id": idx, "kind": kind, "inputs": inputs}
        if isinstance(attrs, ConvBn):
            attrs = {"kernel": attrs.k, "stride": attrs.s, "padding": attrs.p}
        if attrs is not None:
            rec["attrs"] = attrs
        if weights is not None:
            w, b = weights
            rec["weights"] = {"weight": push(w), "bias": push(b)}
            params += w.numel() + b.numel()
        records.append(rec)
    metadata = dict(metadata, param_count=params)
    header = compact({"metadata": metadata, "nodes": records, "blob_bytes": len(blobs)})
    out = bytearray(b"MSLW" + struct.pack("<II", 1, len(header)) + header)
    out.extend(b"\0" * (align(len(out)) - len(out)))
    out.extend(blobs)
    path.write_bytes(bytes(out))
    return params


def write_golden(path, model_name, image, tensors, probabilities):
    blobs = bytearray()

    def push(raw):
        offset = len(blobs)
        blobs.extend(raw)
        blobs.extend(b"\0" * (align(len(blobs)) - len(blobs)))
        return offset

    def f32(t):
        return t.detach().cpu().numpy().astype("<f4").tobytes()

    header = {
        "model_name": model_name,
        "image": {"offset": push(image), "len": len(image)},
        "input": {"offset": push(f32(tensors[0])), "shape": list(tensors[0].shape)},
        "nodes": [{"id": i, "offset": push(f32(t)), "shape": list(t.shape)} for i, t in enumerate(tensors)],
        "probabilities": {"offset": push(f32(probabilities)), "shape": list(probabilities.shape)},
    }
    header["blob_bytes"] = len(blobs)
    raw = compact(header)
    out = bytearray(b"MSLG" + struct.pack("<II", 1, len(raw)) + raw)
    out.extend(b"\0" * (align(len(out)) - len(out)))
    out.extend(blobs)
    path.write_bytes(bytes(out))


def png(rgb):
    h, w, _ = rgb.shape
    rows = b"".join(b"\0" + rgb[y].astype(np.uint8).tobytes() for y in range(h))

    def chunk(tag, data):
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(rows, 9)) + chunk(b"IEND", b"")


def fixture_image():
    y, x = np.mgrid[0:SIZE, 0:SIZE]
    r = 128 + 100 * np.sin(x / 4.0)
    g = 8 * x
    b = 255 - 7 * y + 20 * np.cos((x + y) / 3.0)
    return np.clip(np.stack([r, g, b], axis=-1).round(), 0, 255).astype(np.uint8)


def metadata(name, size, fingerprint, training):
    meta = {
        "model_name": name,
        "class_names": CLASS_NAMES,
        "input": {"channels": 3, "height": size, "width": size, "layout": "NCHW", "color_order": "RGB"},
        "preprocess": {
            "resize_policy": "shortest_side_center_crop",
            "scale": 1.0 / 255.0,
            "per_channel_mean": [0.0, 0.0, 0.0],
            "per_channel_std": [1.0, 1.0, 1.0],
        },
        "param_count": 0,
        "source_fingerprint": fingerprint,
    }
    if training:
        meta["training"] = {
            "max_epochs": 200,
            "patience": 50,
            "learning_rate": 0.0001,
            "dropout": 0.2,
            "image_size": size,
            "optimizer_name": "Adam",
            "min_delta": 0.0,
            "mode": "maximize",
        }
    return meta


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "crates/core/tests/fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(SEED)

    model = Tiny()
    for block in (model.stem, model.inner, model.mix):
        bn = block.bn
        with torch.no_grad():
            bn.weight.uniform_(0.5, 1.5)
            bn.bias.uniform_(-0.3, 0.3)
            bn.running_mean.uniform_(-0.2, 0.2)
            bn.running_var.uniform_(0.5, 2.0)
    model.eval()

    state = b"".join(t.detach().numpy().astype("<f4").tobytes() for t in model.state_dict().values() if t.is_floating_point())
    fingerprint = "sha256:" + hashlib.sha256(state).hexdigest()

    rgb = fixture_image()
    image = png(rgb)
    (out_dir / "tiny_input.png").write_bytes(image)
    x = torch.from_numpy(rgb).permute(2, 0, 1).unsqueeze(0).float() * torch.tensor(1.0 / 255.0, dtype=torch.float32)

    with torch.no_grad():
        nodes, outs = model.graph(x)
    params = write_mslw(out_dir / "tiny.mslw", metadata("tiny-fixture", SIZE, fingerprint, True), nodes)
    write_golden(out_dir / "tiny.golden", "tiny-fixture", image, outs, outs[-1])

    eye = torch.eye(3)
    identity = [
        ("INPUT", [], None, None),
        ("LINEAR", [0], None, (eye, torch.zeros(3))),
        ("SOFTMAX", [1], None, None),
    ]
    write_mslw(out_dir / "identity3.mslw", metadata("identity3", 1, "", False), identity)

    probs = outs[-1][0].tolist()
    print(f"tiny.mslw: {params} parameters, probabilities {probs}")


if __name__ == "__main__":
    main()
