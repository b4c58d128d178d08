import json
import os

import pytest

from morseflow.cli import main

DATA = os.path.join(os.path.dirname(__file__), "data")

FIG8 = """\
halfedges 4
pair 0 1
pair 2 3
vertex 0: 0 3 2 1
cycle-role 0 incoming
cycle-role 2 incoming
cycle-role 1 outgoing
"""

TORUS_CFG = "kind torus\ndim 2\namplitudes 1.0 0.7\n"
SPHERE_CFG = "kind sphere\ndim 2\n"
BAND_CFG = "kind sphere-band\ndim 2\neps 0.15\n"


@pytest.fixture
def fig8_file(tmp_path):
    p = tmp_path / "fig8.graph"
    p.write_text(FIG8)
    return str(p)


@pytest.fixture
def torus_cfg(tmp_path):
    p = tmp_path / "torus.cfg"
    p.write_text(TORUS_CFG)
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestGraphCommands:
    def test_cycles_text(self, capsys, fig8_file):
        code, out, _ = run(capsys, "graph", "cycles", fig8_file)
        assert code == 0
        assert "(0)" in out and "(1 3)" in out and "(2)" in out

    def test_cycles_json_matches_printed_partition(self, capsys, fig8_file):
        code, out, _ = run(capsys, "--json", "graph", "cycles", fig8_file)
        data = json.loads(out)
        assert data["cycles"] == [[0], [1, 3], [2]]
        assert data["euler_characteristic"] == -1

    def test_genus(self, capsys, fig8_file):
        code, out, _ = run(capsys, "--json", "graph", "genus", fig8_file)
        data = json.loads(out)
        assert (data["genus"], data["boundary_cycles"]) == (0, 3)

    def test_admissible(self, capsys, fig8_file):
        code, out, _ = run(capsys, "--json", "graph", "admissible", fig8_file)
        assert json.loads(out)["admissible"] is True

    def test_validate_ok(self, capsys, fig8_file):
        code, out, _ = run(capsys, "--json", "graph", "validate", fig8_file)
        assert code == 0
        assert json.loads(out)["ok"] is True

    def test_validate_violation_exit_code(self, capsys, tmp_path):
        bad = tmp_path / "bad.graph"
        bad.write_text(FIG8 + "ghost 0\n")
        code, out, _ = run(capsys, "--json", "graph", "validate", str(bad))
        assert code == 3
        assert json.loads(out)["ok"] is False

    def test_reduce_roundtrip(self, capsys, tmp_path):
        dumbbell = tmp_path / "dumbbell.graph"
        dumbbell.write_text(
            "halfedges 6\npair 0 1\npair 2 3\npair 4 5\n"
            "vertex 0: 0 1 4\nvertex 1: 2 3 5\nghost 2\n")
        code, out, _ = run(capsys, "--json", "graph", "reduce", str(dumbbell))
        data = json.loads(out)
        assert code == 0
        assert data["euler_characteristic"] == -1
        assert data["incoming"] == 2
        # the emitted file parses back to a one-vertex two-loop graph
        from morseflow.fatgraph import parse_graph_file
        again = parse_graph_file(data["graph_file"])
        assert again.graph.num_vertices == 1
        assert again.graph.num_edges == 2

    def test_parse_error_exit_code(self, capsys, tmp_path):
        p = tmp_path / "junk.graph"
        p.write_text("nonsense\n")
        code, _out, err = run(capsys, "graph", "cycles", str(p))
        assert code == 2
        assert "error" in err

    def test_deterministic_byte_identical(self, capsys, fig8_file):
        _, out1, _ = run(capsys, "--json", "--deterministic", "graph",
                         "cycles", fig8_file)
        _, out2, _ = run(capsys, "--json", "--deterministic", "graph",
                         "cycles", fig8_file)
        assert out1 == out2

    def test_deterministic_computation_byte_identical(self, capsys,
                                                      torus_cfg):
        _, out1, _ = run(capsys, "--json", "--deterministic", "homology",
                         torus_cfg)
        _, out2, _ = run(capsys, "--json", "--deterministic", "homology",
                         torus_cfg)
        assert out1 == out2

    def test_transversality_failure_exit_code(self, capsys, tmp_path,
                                              fig8_file):
        cfg = tmp_path / "same.cfg"
        cfg.write_text(TORUS_CFG)
        code, _out, err = run(capsys, "--json", "op", "nu", fig8_file,
                              "--label", str(cfg), "--label", str(cfg),
                              "--label", str(cfg), "--table")
        assert code == 5
        assert "error" in err


class TestGeomCommands:
    def test_probe(self, capsys, torus_cfg):
        code, out, _ = run(capsys, "--json", "geom", "probe", torus_cfg,
                           "--seeds", "6")
        data = json.loads(out)
        assert code == 0
        assert data["unresolved"] == 0
        assert sum(data["forward"].values()) == 6

    def test_probe_trajectories_csv_monotone(self, capsys, tmp_path):
        cfg = tmp_path / "sphere.cfg"
        cfg.write_text(SPHERE_CFG)
        csv = tmp_path / "traj.csv"
        code, _, _ = run(capsys, "geom", "probe", str(cfg), "--seeds", "2",
                         "--trajectories-csv", str(csv))
        assert code == 0
        lines = csv.read_text().splitlines()
        assert lines[0].startswith("trajectory,t,")
        f_col = lines[0].split(",").index("f")
        by_traj = {}
        for row in lines[1:]:
            vals = row.split(",")
            by_traj.setdefault(vals[0], []).append(float(vals[f_col]))
        for fs in by_traj.values():
            assert all(b <= a + 1e-8 for a, b in zip(fs, fs[1:]))

    def test_probe_empty_job(self, capsys, tmp_path):
        cfg = tmp_path / "sphere.cfg"
        cfg.write_text(SPHERE_CFG)
        csv = tmp_path / "empty.csv"
        code, _, _ = run(capsys, "geom", "probe", str(cfg), "--seeds", "0",
                         "--trajectories-csv", str(csv))
        assert code == 0
        lines = csv.read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("trajectory")

    def test_connections_csv(self, capsys, tmp_path, torus_cfg):
        csv = tmp_path / "conn.csv"
        code, out, _ = run(capsys, "--json", "geom", "connections", torus_cfg,
                           "--source", "x11", "--target", "x10",
                           "--csv", str(csv))
        data = json.loads(out)
        assert code == 0
        assert data["count"] == 2
        ids = {row.split(",")[0] for row in csv.read_text().splitlines()[1:]}
        assert ids == {"0", "1"}


class TestHomologyCommand:
    def test_torus_betti(self, capsys, torus_cfg):
        code, out, _ = run(capsys, "--json", "homology", torus_cfg)
        data = json.loads(out)
        betti = data["blocks"]["total"]["betti"]
        assert (betti["0"], betti["1"], betti["2"]) == (1, 2, 1)

    def test_mod2_ring(self, capsys, torus_cfg):
        code, out, _ = run(capsys, "--json", "homology", torus_cfg,
                           "--ring", "z2")
        data = json.loads(out)
        assert data["ring"] == "Z2"
        assert data["blocks"]["total"]["betti"]["1"] == 2

    def test_relative_band(self, capsys, tmp_path):
        cfg = tmp_path / "band.cfg"
        cfg.write_text(BAND_CFG)
        code, out, _ = run(capsys, "--json", "homology", str(cfg),
                           "--relative", "band:0.25")
        data = json.loads(out)
        sub = data["blocks"]["subcomplex"]["betti"]
        assert (sub["0"], sub["1"]) == (1, 1)

    def test_matrices_export(self, capsys, tmp_path):
        cfg = tmp_path / "band.cfg"
        cfg.write_text(BAND_CFG)
        mats = tmp_path / "mats.txt"
        code, _, _ = run(capsys, "homology", str(cfg),
                         "--matrices-out", str(mats))
        text = mats.read_text()
        assert "# total degree 2 -> 1" in text

    def test_csv_summary(self, capsys, tmp_path, torus_cfg):
        csv = tmp_path / "sum.csv"
        run(capsys, "homology", torus_cfg, "--csv", str(csv))
        lines = csv.read_text().splitlines()
        assert lines[0] == "block,degree,betti,torsion,generators"
        assert any(line.startswith("total,1,2") for line in lines)


class TestOpCommands:
    def test_push_and_umkehr(self, capsys, tmp_path):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("kind torus\ndim 2\namplitudes 1.0 0.7\n"
                       "phases 0.9 1.3\n")
        code, out, _ = run(capsys, "--json", "op", "push", str(cfg),
                           "--embedding", "factor:1:2.0:0.3")
        data = json.loads(out)
        assert code == 0
        assert data["matrices"]["0"] == [[1]]
        code, out, _ = run(capsys, "--json", "op", "umkehr", str(cfg),
                           "--embedding", "factor:1:2.0:0.3")
        data = json.loads(out)
        assert [abs(v) for v in data["matrices"]["2"][0]] == [1]

    def test_thom_and_euler(self, capsys, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(SPHERE_CFG)
        code, out, _ = run(capsys, "--json", "op", "thom", str(cfg),
                           "--bundle", "trivial:1")
        data = json.loads(out)
        assert data["relative_betti"] == {"1": 1, "3": 1}
        assert data["fiber_pairing"] == 1
        code, out, _ = run(capsys, "--json", "op", "euler", str(cfg),
                           "--bundle", "tangent")
        data = json.loads(out)
        assert abs(data["pairing_with_fundamental_class"]) == 2

    def test_nu_single_input_golden_args(self, capsys, tmp_path, fig8_file):
        cfgs = []
        for i, phases in enumerate(("0.0 0.0", "0.9 1.3", "-0.7 0.55")):
            p = tmp_path / ("label%d.cfg" % i)
            p.write_text("kind torus\ndim 2\namplitudes 1.0 0.7\nphases %s\n"
                         % phases)
            cfgs.append(str(p))
        code, out, _ = run(capsys, "--json", "op", "nu", fig8_file,
                           "--label", cfgs[0], "--label", cfgs[1],
                           "--label", cfgs[2],
                           "--input", "x10,x01")
        data = json.loads(out)
        assert code == 0
        assert data["output"] == {"x00": -1}


GOLDEN_CASES = [
    (("--json", "graph", "cycles", os.path.join(DATA, "fig8.graph")),
     "fig8.cycles.golden"),
    (("--json", "graph", "genus", os.path.join(DATA, "fig8.graph")),
     "fig8.genus.golden"),
    (("--json", "graph", "reduce", os.path.join(DATA, "dumbbell.graph")),
     "dumbbell.reduce.golden"),
    (("--json", "homology", os.path.join(DATA, "torus.cfg")),
     "torus.homology.golden"),
    (("--json", "homology", os.path.join(DATA, "band.cfg"),
      "--relative", "band:0.25"),
     "band.relative.golden"),
]


class TestGoldenFiles:
    @pytest.mark.parametrize("argv,golden", GOLDEN_CASES,
                             ids=[g for _a, g in GOLDEN_CASES])
    def test_output_matches_checked_in_golden(self, capsys, argv, golden):
        code, out, _ = run(capsys, *argv)
        assert code == 0
        with open(os.path.join(DATA, golden)) as fh:
            assert out == fh.read()
