import numpy as np
import pytest

from roadpoly import formats
from roadpoly.errors import DataError
from roadpoly.synth import (
    ArcPiece,
    LinePiece,
    arc_through_bulge,
    generate_synthetic,
    parse_synth_spec,
    tangent_arc,
)

MINI_SPEC = """\
origin,44.4268,26.1025
seed,5
noise-sigma,{sigma}
sample-rate,5
speed,10
km-limit,{km}
runs,10
min-crossings,3
min-passes,3
node,A,-250,0,12
node,B,0,0,12
node,C,250,0,12
node,D,0,250,12
edge,AB,A,B,line
edge,BA,B,A,line
edge,BC,B,C,arc,15
edge,CB,C,B,arc,-15
edge,BD,B,D,line
edge,DB,D,B,line
"""


def spec_file(tmp_path, sigma=2.0, km=10):
    path = tmp_path / "spec.txt"
    path.write_text(MINI_SPEC.format(sigma=sigma, km=km))
    return parse_synth_spec(path)


def test_arc_through_bulge_geometry():
    p0, p1 = np.array([0.0, 0.0]), np.array([100.0, 0.0])
    arc = arc_through_bulge(p0, p1, 10.0)
    assert np.allclose(arc.point_at(0.0), p0, atol=1e-9)
    assert np.allclose(arc.point_at(arc.length), p1, atol=1e-9)
    apex = arc.point_at(arc.length / 2.0)
    assert apex[1] == pytest.approx(10.0, abs=1e-9)  # bows toward the left normal
    assert arc.length > 100.0


def test_tangent_arc_matches_constraints():
    p = np.array([0.0, 0.0])
    q = np.array([10.0, 10.0])
    piece = tangent_arc(p, np.array([1.0, 0.0]), q)
    assert isinstance(piece, ArcPiece)
    assert np.allclose(piece.point_at(0.0), p, atol=1e-9)
    assert np.allclose(piece.point_at(piece.length), q, atol=1e-9)
    assert np.allclose(piece.tangent_at(0.0), [1.0, 0.0], atol=1e-9)
    straight = tangent_arc(p, np.array([1.0, 0.0]), np.array([10.0, 0.0]))
    assert isinstance(straight, LinePiece)


def test_noiseless_traces_lie_on_geometry(tmp_path):
    world = generate_synthetic(spec_file(tmp_path, sigma=0.0))
    worst = 0.0
    for trace in world.traces[:6]:
        for s in trace.samples:
            worst = max(worst, world.truth_distance(np.array([s.p.x, s.p.y])))
    # trace rows carry 9 significant digits, about a centimeter of quantization
    assert worst <= 0.02


def test_noise_statistics_match_sigma(tmp_path):
    world = generate_synthetic(spec_file(tmp_path, sigma=3.0, km=20))
    residuals = []
    for i, trace in enumerate(world.traces):
        path = world.leg_path(world.plan.legs[i])
        step = world.spec.speed_mps / world.spec.sample_rate_hz
        for k, s in enumerate(trace.samples):
            true = path.point_at(k * step)
            residuals.append([s.p.x - true[0], s.p.y - true[1]])
    residuals = np.asarray(residuals)
    assert residuals.shape[0] >= 10_000
    std = residuals.std(axis=0)
    assert np.all(np.abs(std - 3.0) / 3.0 < 0.05)


def test_same_seed_is_byte_identical(tmp_path):
    a = generate_synthetic(spec_file(tmp_path))
    b = generate_synthetic(spec_file(tmp_path))
    assert len(a.traces) == len(b.traces)
    for ta, tb in zip(a.traces, b.traces):
        assert formats.serialize_trace(ta) == formats.serialize_trace(tb)
    assert formats.serialize_plan(a.plan) == formats.serialize_plan(b.plan)
    assert formats.serialize_map(a.truth_map) == formats.serialize_map(b.truth_map)


def test_insufficient_budget_raises(tmp_path):
    with pytest.raises(DataError, match="fewer than"):
        generate_synthetic(spec_file(tmp_path, km=1))


def test_outputs_written_and_parse(tmp_path):
    out = tmp_path / "world"
    world = generate_synthetic(spec_file(tmp_path), out_dir=out, max_traces=4)
    topo, origin = formats.parse_topology(out / "topology.txt")
    assert set(topo.node_by_id) == {"A", "B", "C", "D"}
    truth = formats.parse_map(out / "truth-map.txt")
    assert set(truth.segments) == set(world.truth_map.segments)
    plan, _ = formats.parse_plan(
        out / "plan.txt", topo, {e: world.lengths[e] for e in world.lengths}
    )
    assert len(plan.legs) == len(world.plan.legs)
    traces = sorted((out / "traces").iterdir())
    assert len(traces) == 4
    assert formats.parse_trace(traces[0]) == world.traces[0]
