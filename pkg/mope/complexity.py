"""
Static cost analysis of a NetworkSpec: parameter counts and bytes,
multiply-accumulates, FLOPs and the receptive field.

Counting convention:
  * conv          MACs = k^2 * c_in * c_out * h_out * w_out
  * conv_transpose MACs = k^2 * c_in * c_out * h_in * w_in
  * FLOPs = 2 * MACs; bias additions are not counted
  * element-wise work (norms 2 per element, activations and skip adds 1,
    box filter 9, bilinear resize 4 and nearest resize 1 per output element,
    global pooling 1 per input element) is reported in its own column and
    never folded into MACs or FLOPs
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Tuple

import pandas as pd

from mope.graph import infer_shapes, parameter_shapes
from mope.settings import ANALYZE_INPUT_SIZE, REFERENCE_GFLOP, REFERENCE_PARAMS_MB

logger = logging.getLogger(__name__)

BYTES_PER_PARAM = 4
CONVENTION = (
    "MAC = one multiply-accumulate of a conv/conv_transpose; FLOP = 2 x MAC; "
    "element-wise ops reported separately; MB = 4-byte params / 1e6"
)

# Published sizes (MB) and costs (GFLOP, 244x244 input) of the two MoPE networks
PUBLISHED = {"denoiser": (0.187, 0.171), "gating": (0.096, 0.034)}

_ELEMENTWISE_PER_OUTPUT = {"instance_norm": 2, "activation": 1, "add_skip": 1, "box_filter": 9}


@dataclass(frozen=True)
class LayerCost:
    name: str
    params: int
    param_bytes: int
    macs: int
    flops: int
    elementwise_ops: int
    out_shape: Tuple[int, ...]
    receptive_field: Optional[int]


@dataclass
class ComplexityReport:
    network: str
    input_size: Tuple[int, int]
    rows: List[LayerCost] = field(default_factory=list)

    @property
    def params(self):
        return sum(row.params for row in self.rows)

    @property
    def param_bytes(self):
        return sum(row.param_bytes for row in self.rows)

    @property
    def macs(self):
        return sum(row.macs for row in self.rows)

    @property
    def flops(self):
        return sum(row.flops for row in self.rows)

    @property
    def elementwise_ops(self):
        return sum(row.elementwise_ops for row in self.rows)

    @property
    def params_mb(self):
        return self.param_bytes / 1e6

    @property
    def gflop(self):
        return self.flops / 1e9

    def to_frame(self):
        records = [asdict(row) for row in self.rows]
        for record in records:
            record["out_shape"] = "x".join(str(d) for d in record["out_shape"])
        records.append({
            "name": "total",
            "params": self.params,
            "param_bytes": self.param_bytes,
            "macs": self.macs,
            "flops": self.flops,
            "elementwise_ops": self.elementwise_ops,
            "out_shape": "",
            "receptive_field": self.rows[-1].receptive_field if self.rows else None,
        })
        return pd.DataFrame(records, columns=[f.name for f in fields(LayerCost)])

    def format(self):
        h, w = self.input_size
        header = f"# {self.network} @ {h}x{w}\n# {CONVENTION}\n"
        return header + self.to_frame().to_string(index=False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# {CONVENTION}\n")
            self.to_frame().to_csv(fh, index=False)


def _layer_params(index, shapes):
    total = 0
    for (layer_index, _), shape in shapes.items():
        if layer_index == index:
            count = 1
            for dim in shape:
                count *= dim
            total += count
    return total


def count_params(spec):
    """Returns (parameter count, bytes at 4 bytes per parameter)."""
    shapes = parameter_shapes(spec)
    count = sum(_layer_params(i, shapes) for i in range(len(spec.layers)))
    return count, count * BYTES_PER_PARAM


def _rf_step(layer, rf, jump):
    """Advance (receptive field, input-pixel jump) through one layer; rf None once undefined."""
    if rf is None:
        return None, jump
    if layer.kind == "conv":
        return rf + (layer.kernel - 1) * jump, jump * layer.stride
    if layer.kind == "box_filter":
        return rf + 2 * jump, jump
    if layer.kind in ("conv_transpose", "resize", "global_pool"):
        return None, jump
    return rf, jump


def _numel(shape):
    n = 1
    for dim in shape[1:]:
        n *= dim
    return n


def count_flops(spec, height=ANALYZE_INPUT_SIZE, width=None):
    """Per-layer cost rows for a single image of size height x width."""
    width = height if width is None else width
    shapes = infer_shapes(spec, height, width)
    pshapes = parameter_shapes(spec)
    report = ComplexityReport(spec.name, (height, width))
    in_shape = (1, spec.input_channels, height, width)
    rf, jump = 1, 1
    for i, (layer, out_shape) in enumerate(zip(spec.layers, shapes)):
        params = _layer_params(i, pshapes)
        macs = 0
        k2 = layer.kernel * layer.kernel
        if layer.kind == "conv":
            macs = k2 * in_shape[1] * out_shape[1] * out_shape[2] * out_shape[3]
        elif layer.kind == "conv_transpose":
            macs = k2 * in_shape[1] * out_shape[1] * in_shape[2] * in_shape[3]
        if layer.kind == "resize":
            elementwise = _numel(out_shape) * (4 if layer.mode == "bilinear" else 1)
        elif layer.kind == "global_pool":
            elementwise = _numel(in_shape)
        else:
            elementwise = _ELEMENTWISE_PER_OUTPUT.get(layer.kind, 0) * _numel(out_shape)
        rf, jump = _rf_step(layer, rf, jump)
        name = f"{i}.{layer.kind}" if layer.kind != "activation" else f"{i}.{layer.activation}"
        report.rows.append(LayerCost(
            name=name,
            params=params,
            param_bytes=params * BYTES_PER_PARAM,
            macs=macs,
            flops=2 * macs,
            elementwise_ops=elementwise,
            out_shape=tuple(out_shape[1:]),
            receptive_field=rf,
        ))
        in_shape = out_shape
    logger.debug("%s: %d params, %d MACs at %dx%d", spec.name, report.params, report.macs, height, width)
    return report


def receptive_field(spec):
    """Receptive field of a feed-forward stack; skip layers are ignored.

    RF = 1 + sum_i (k_i - 1) * prod(strides of the layers before i).
    """
    rf, jump = 1, 1
    for i, layer in enumerate(spec.layers):
        rf, jump = _rf_step(layer, rf, jump)
        if rf is None:
            raise ValueError(f"{spec.name}: receptive field is undefined after layer {i} ({layer.kind})")
    return rf


def summary_table(specs, input_size=ANALYZE_INPUT_SIZE):
    """One row per network in the size/cost layout of the published comparison."""
    rows = []
    for spec in specs:
        report = count_flops(spec, input_size)
        published_mb, published_gflop = PUBLISHED.get(spec.name, (None, None))
        rows.append({
            "network": spec.name,
            "params": report.params,
            "params_mb": round(report.params_mb, 3),
            "macs": report.macs,
            "gmac": round(report.macs / 1e9, 3),
            "gflop": round(report.gflop, 3),
            "published_mb": published_mb,
            "published_gflop": published_gflop,
            "gflop_ratio": round(report.gflop / published_gflop, 2) if published_gflop else None,
        })
    return pd.DataFrame(rows)


def overhead(specs, input_size=ANALYZE_INPUT_SIZE, reference_mb=REFERENCE_PARAMS_MB,
             reference_gflop=REFERENCE_GFLOP):
    """Combined size and cost of `specs` as a percentage of a reference detector budget."""
    reports = [count_flops(spec, input_size) for spec in specs]
    params_mb = sum(r.params_mb for r in reports)
    gflop = sum(r.gflop for r in reports)
    return {
        "params_mb": params_mb,
        "gflop": gflop,
        "params_pct": 100.0 * params_mb / reference_mb,
        "gflop_pct": 100.0 * gflop / reference_gflop,
    }


def discrepancy_note(table):
    """Human-readable remark on how far the counted GFLOP sit from the published values."""
    notes = []
    for row in table.itertuples(index=False):
        if row.published_gflop:
            notes.append(
                f"{row.network}: counted {row.gflop:.3f} GFLOP ({row.gmac:.3f} GMAC) vs published "
                f"{row.published_gflop:.3f}; the published counting convention is not stated"
            )
    return "\n".join(notes)
