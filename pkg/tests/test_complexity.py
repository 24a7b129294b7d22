import pandas as pd
import pytest

from mope import complexity
from mope import graph as g
from mope.graph import NetworkSpec, build
from mope.networks import build_classifier, build_denoiser, build_gating

# Hand counts, layer by layer (weights + biases, instance norm 2 per channel)
DENOISER_PARAMS = 448 + 4640 + 18496 + 18464 + 4624 + 435
GATING_PARAMS = 448 + 4640 + 64 + 18496 + 128 + 577
# MACs at 244x244: k^2 * c_in * c_out * spatial (output for conv, input for conv_transpose)
GATING_MACS_244 = 9 * 3 * 16 * 122 ** 2 + 9 * 16 * 32 * 61 ** 2 + 9 * 32 * 64 * 31 ** 2 + 9 * 64 * 1 * 31 ** 2
DENOISER_MACS_244 = (
    9 * 3 * 16 * 244 ** 2
    + 9 * 16 * 32 * 122 ** 2
    + 9 * 32 * 64 * 61 ** 2
    + 9 * 64 * 32 * 61 ** 2
    + 9 * 32 * 16 * 122 ** 2
    + 9 * 16 * 3 * 244 ** 2
)


def test_hand_count_fixtures():
    assert DENOISER_PARAMS == 47107
    assert GATING_PARAMS == 24353
    assert GATING_MACS_244 == 41842944
    assert DENOISER_MACS_244 == 325780992


def test_single_conv_params():
    spec = NetworkSpec("one", 3, (g.conv(3, 16),))
    assert complexity.count_params(spec) == (448, 1792)


def test_denoiser_params():
    count, nbytes = complexity.count_params(build_denoiser())
    assert count == DENOISER_PARAMS
    assert round(nbytes / 1e6, 3) == 0.188
    assert abs(nbytes / 1e6 - 0.187) / 0.187 < 0.02


def test_gating_params():
    count, nbytes = complexity.count_params(build_gating())
    assert count == GATING_PARAMS
    assert round(nbytes / 1e6, 3) == 0.097
    assert abs(nbytes / 1e6 - 0.096) / 0.096 < 0.02


@pytest.mark.parametrize("spec", [build_denoiser(), build_gating(), build_classifier(10)])
def test_params_match_built_store(spec):
    _, params = build(spec, seed=0)
    assert complexity.count_params(spec)[0] == params.num_values()


def test_one_by_one_conv_macs():
    spec = NetworkSpec("pointwise", 1, (g.conv(1, 1, kernel=1, bias=False),))
    report = complexity.count_flops(spec, 4)
    assert report.macs == 16
    assert report.flops == 32


def test_gating_flops_at_244():
    report = complexity.count_flops(build_gating(), 244)
    assert report.macs == GATING_MACS_244
    assert report.flops == 2 * GATING_MACS_244
    assert report.gflop == pytest.approx(0.0837, abs=1e-4)
    # within a factor of 4 of the published 0.034
    assert 0.034 / 4 <= report.gflop <= 0.034 * 4


def test_denoiser_flops_at_244():
    report = complexity.count_flops(build_denoiser(), 244)
    assert report.macs == DENOISER_MACS_244
    assert report.flops == 2 * DENOISER_MACS_244
    assert 0.171 / 4 <= report.gflop <= 0.171 * 4


def test_totals_are_sums_of_rows():
    report = complexity.count_flops(build_denoiser(), 64)
    assert report.params == sum(r.params for r in report.rows)
    assert report.macs == sum(r.macs for r in report.rows)
    assert all(r.flops == 2 * r.macs for r in report.rows)
    assert report.param_bytes == 4 * report.params


def test_elementwise_ops_kept_apart():
    spec = NetworkSpec("norm", 2, (g.instance_norm(), g.leaky_relu()))
    report = complexity.count_flops(spec, 4)
    assert report.macs == 0
    assert report.elementwise_ops == 2 * 32 + 32


def test_receptive_field():
    assert complexity.receptive_field(NetworkSpec("a", 3, (g.conv(3, 3),))) == 3
    two = NetworkSpec("b", 3, (g.conv(3, 3, stride=2), g.conv(3, 3, stride=2)))
    assert complexity.receptive_field(two) == 7
    assert complexity.receptive_field(build_gating()) == 31


def test_receptive_field_ignores_norms_and_skips():
    spec = NetworkSpec("c", 3, (g.conv(3, 3), g.instance_norm(), g.leaky_relu(), g.add_skip(0), g.conv(3, 3)))
    assert complexity.receptive_field(spec) == 5


def test_receptive_field_undefined_after_upsampling():
    with pytest.raises(ValueError, match="undefined"):
        complexity.receptive_field(build_denoiser())


def test_report_rows_track_receptive_field():
    report = complexity.count_flops(build_gating(), 64)
    assert report.rows[-1].receptive_field == 31
    assert report.rows[0].out_shape == (16, 32, 32)


def test_report_csv(tmp_path):
    path = tmp_path / "gating.csv"
    complexity.count_flops(build_gating(), 244).to_csv(path)
    assert path.read_text().startswith("# MAC")
    frame = pd.read_csv(path, comment="#")
    assert frame["name"].iloc[-1] == "total"
    assert frame["macs"].iloc[-1] == GATING_MACS_244


@pytest.mark.filterwarnings("error")
@pytest.mark.parametrize("spec", [build_denoiser(), build_gating()])
def test_frame_totals_row(spec):
    report = complexity.count_flops(spec, 64)
    frame = report.to_frame()
    assert len(frame) == len(report.rows) + 1
    total = frame.iloc[-1]
    assert total["name"] == "total"
    assert total["params"] == report.params
    assert total["macs"] == report.macs
    assert total["out_shape"] == ""
    if report.rows[-1].receptive_field is None:
        assert pd.isna(total["receptive_field"])
    else:
        assert total["receptive_field"] == report.rows[-1].receptive_field


def test_format_prints_convention():
    text = complexity.count_flops(build_gating(), 244).format()
    assert complexity.CONVENTION in text
    assert "gating @ 244x244" in text


def test_summary_table():
    table = complexity.summary_table([build_denoiser(), build_gating()], 244)
    assert list(table["network"]) == ["denoiser", "gating"]
    assert list(table["params_mb"]) == [0.188, 0.097]
    assert list(table["published_mb"]) == [0.187, 0.096]
    note = complexity.discrepancy_note(table)
    assert "denoiser" in note and "not stated" in note


def test_overhead():
    cost = complexity.overhead([build_denoiser(), build_gating()], 244, reference_mb=42.0, reference_gflop=116.0)
    assert cost["params_mb"] == pytest.approx((47107 + 24353) * 4 / 1e6)
    assert cost["params_pct"] == pytest.approx(100 * cost["params_mb"] / 42.0)
    assert cost["gflop_pct"] == pytest.approx(100 * 2 * (GATING_MACS_244 + DENOISER_MACS_244) / 1e9 / 116.0)
