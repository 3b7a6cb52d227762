import math

import numpy as np
import pytest

from roadpoly import formats
from roadpoly.cli import main
from roadpoly.trajectory import ControlCommand

from test_synth import MINI_SPEC


@pytest.fixture(scope="module")
def world_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliworld")
    spec = root / "spec.txt"
    spec.write_text(MINI_SPEC.format(sigma=2.0, km=10))
    assert main(["synth", "--spec", str(spec), "--out", str(root / "world")]) == 0
    return root / "world"


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2


def test_missing_topology_names_path(tmp_path, capsys):
    rc = main(
        ["simulate-routes", "--topology", str(tmp_path / "nope.txt"),
         "--out", str(tmp_path / "plan.txt")]
    )
    assert rc == 3
    assert "nope.txt" in capsys.readouterr().err


def test_simulate_routes_zero_limit(world_dir, tmp_path):
    out = tmp_path / "plan.txt"
    rc = main(
        ["simulate-routes", "--topology", str(world_dir / "topology.txt"),
         "--seed", "3", "--km-limit", "0", "--runs", "2",
         "--out", str(out)]
    )
    assert rc == 0
    topo, _ = formats.parse_topology(world_dir / "topology.txt")
    plan, _ = formats.parse_plan(out, topo, {e.id: 1.0 for e in topo.edges})
    assert plan.legs == ()


def test_full_pipeline(world_dir, tmp_path, capsys):
    built = tmp_path / "map.txt"
    rc = main(
        ["build-map", "--topology", str(world_dir / "topology.txt"),
         "--traces", str(world_dir / "traces"), "--out", str(built)]
    )
    assert rc == 0
    road = formats.parse_map(built)
    assert len(road.segments) >= 6

    samples = tmp_path / "samples.txt"
    rc = main(
        ["ground-truth", "--traces", str(world_dir / "traces"),
         "--stride", "2", "--out", str(samples)]
    )
    assert rc == 0
    parsed, routes = formats.parse_samples(samples)
    assert parsed and routes

    fid = tmp_path / "fidelity.txt"
    rc = main(
        ["evaluate", "map-fidelity", "--map", str(built),
         "--truth-map", str(world_dir / "truth-map.txt"), "--out", str(fid)]
    )
    assert rc == 0
    report = formats.parse_report(fid)
    assert report["mean_dist"] <= 1.5
    assert report["max_adjacency_gap"] <= 0.5

    direction = tmp_path / "direction.txt"
    rc = main(
        ["evaluate", "direction", "--map", str(built),
         "--samples", str(samples), "--out", str(direction)]
    )
    assert rc == 0
    report = formats.parse_report(direction)
    counted = sum(int(report[f"direction_counted_{n}s"]) for n in range(1, 8))
    assert counted > 0

    crops = tmp_path / "a.pgm", tmp_path / "b.pgm"
    rc = main(
        ["crop", "--map", str(built), "--center", "0,0",
         "--heading", str(math.pi / 2), "--route", str(world_dir / "plan.txt"),
         "--size", "128", "--out", f"{crops[0]},{crops[1]}"]
    )
    assert rc == 0
    full = formats.read_pgm(crops[0])
    route_only = formats.read_pgm(crops[1])
    assert full.shape == (128, 128)
    assert np.all(route_only <= full)


def test_project_command(world_dir, tmp_path):
    built = tmp_path / "map.txt"
    assert main(
        ["build-map", "--topology", str(world_dir / "topology.txt"),
         "--traces", str(world_dir / "traces"), "--out", str(built)]
    ) == 0
    poses_in = tmp_path / "poses.txt"
    poses_in.write_text(
        "# poses\n"
        "pose,0,-120,6,0\n"
        "pose,1,-110,-6,0\n"
        "pose,2,-100,5,0\n"
        "pose,none\n"
        "pose,4,-80,-4,0\n"
        "pose,5,-70,3,0\n"
    )
    out = tmp_path / "projected.txt"
    assert main(
        ["project", "--map", str(built), "--poses", str(poses_in),
         "--smooth-window", "4", "--out", str(out)]
    ) == 0
    projected = formats.parse_poses(out)
    assert projected[3] is None
    road = formats.parse_map(built)
    from roadpoly.roadmap import project_point

    for pose in projected:
        if pose is not None:
            assert project_point(road, pose.p).dist <= 3.0  # snapped near the road


def test_evaluate_poses_and_controls(tmp_path):
    truth = [f"pose,{t},0,{10 * t},1.5707963" for t in range(6)]
    pred = ["pose,0,3,0,1.5707963", "pose,none", "pose,2,0,16,none",
            "pose,3,0,30,1.6707963", "pose,4,4,40,1.5707963", "pose,none"]
    (tmp_path / "truth.txt").write_text("\n".join(truth) + "\n")
    (tmp_path / "pred.txt").write_text("\n".join(pred) + "\n")
    out = tmp_path / "report.txt"
    rc = main(
        ["evaluate", "poses", "--pred", str(tmp_path / "pred.txt"),
         "--truth", str(tmp_path / "truth.txt"), "--out", str(out)]
    )
    assert rc == 0
    report = formats.parse_report(out)
    assert report["position_response"] == pytest.approx(4 / 6)
    assert report["orientation_response"] == pytest.approx(3 / 6)

    sets = [[ControlCommand(n, 10.0, 0.0) for n in range(1, 8)]]
    biased = [[ControlCommand(n, 11.0, 5.0) for n in range(1, 8)]]
    formats.write_controls(tmp_path / "ct.txt", sets)
    formats.write_controls(tmp_path / "cp.txt", biased)
    rc = main(
        ["evaluate", "controls", "--pred", str(tmp_path / "cp.txt"),
         "--truth", str(tmp_path / "ct.txt"), "--out", str(out)]
    )
    assert rc == 0
    report = formats.parse_report(out)
    assert report["speed_mae_4s"] == 1.0
    assert report["angle_mae_7s"] == 5.0
