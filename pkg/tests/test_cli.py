"""Driver tests: configs, caching, artifacts, exit codes.

Commands run in-process through cli.main() with --out pointed at the
test's tmp_path, so the default cache location lands there too and the
tests stay isolated from each other.
"""

import hashlib
import json
import math

import numpy as np
import pytest

from morsevanish.cli import (ArtifactCache, _canon, _complex_from_payload,
                             _parse_grid, _point_from_record, _point_record,
                             _thaw, cache_root, canonical_dumps,
                             config_digest, dump_json, load_config, main,
                             problem_from_config)
from morsevanish.critical import find_critical_points
from morsevanish.errors import ConfigError, ConfigParse, CorruptCache
from morsevanish.homology import homology, window_complex


@pytest.fixture(autouse=True)
def _no_env_cache(monkeypatch):
    monkeypatch.delenv("MORSEVANISH_CACHE", raising=False)


DW = {"name": "double_well", "dimension": 1, "domain": "real_line",
      "f": "x^4 - x^2", "tau": "pow(1 + x^2, -1/2)", "eps": 0.05}
Z3 = {"name": "z3", "dimension": 1, "eps": 0.1,
      "polynomial": {"terms": [{"monomial": [3], "re": 1, "im": 0}]}}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run_dir(tmp_path, cfg):
    return tmp_path / "runs" / config_digest(cfg)


def run(tmp_path, *argv):
    return main(list(argv) + ["--out", str(tmp_path / "runs")])


def read_artifact(tmp_path, cfg, stage):
    return json.loads((run_dir(tmp_path, cfg) / f"{stage}.json").read_text())


class TestConfigLoading:
    def test_malformed_json_carries_line_and_column(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{ "dimension": 1,\n  "f": "x^2"\n  "tau": "1"\n}')
        with pytest.raises(ConfigParse) as err:
            load_config(str(p))
        assert err.value.line == 3
        assert err.value.col == 3

    def test_malformed_json_exits_one(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{nope}")
        assert run(tmp_path, "crit", "--config", str(p)) == 1
        assert "line 1" in capsys.readouterr().err

    def test_root_must_be_object(self, tmp_path):
        p = tmp_path / "arr.json"
        p.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="root"):
            load_config(str(p))

    def test_unknown_keys_rejected(self, tmp_path):
        path = write_cfg(tmp_path, {**DW, "Window": {}})
        with pytest.raises(ConfigError, match="Window"):
            load_config(path)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config("/nonexistent/nowhere.json")

    def test_missing_tau(self, tmp_path):
        cfg = dict(DW)
        del cfg["tau"]
        with pytest.raises(ConfigError, match="tau"):
            problem_from_config(cfg, "t")


class TestProblemBuilding:
    def test_defaults(self):
        spec, alg = problem_from_config(dict(DW), "fallback")
        assert alg is None
        assert spec.name == "double_well"
        assert spec.variables == ("x",)
        assert spec.window.a == -1.0 and spec.window.b == 1.0
        assert spec.window.Lam == 10.0 and spec.window.sigma == 0.25

    def test_fallback_name(self):
        cfg = dict(DW)
        del cfg["name"]
        spec, _ = problem_from_config(cfg, "from_filename")
        assert spec.name == "from_filename"

    def test_ray_domain(self):
        cfg = {"dimension": 1, "variables": ["y"], "f": "y", "tau": "y",
               "domain": [{"min": 0, "max": "inf"}]}
        spec, _ = problem_from_config(cfg, "ray")
        lo, hi = spec.domain.box[0]
        assert lo == pytest.approx(1e-3)
        assert hi == pytest.approx(3.0)

    def test_domain_length_checked(self):
        cfg = {**DW, "domain": [{"min": 0, "max": 1}, {"min": 0, "max": 1}]}
        with pytest.raises(ConfigError, match="1"):
            problem_from_config(cfg, "t")

    def test_custom_metric(self):
        cfg = {**DW, "metric": {"kind": "custom", "matrix": [["1 + x^2"]]}}
        spec, _ = problem_from_config(cfg, "t")
        assert spec.metric.kind == "custom"
        assert spec.metric.custom is not None

    def test_explicit_window(self):
        cfg = {**DW, "window": {"a": -2, "b": 2, "lambda": 2,
                                "Lambda": 20, "sigma": 0.5}}
        spec, _ = problem_from_config(cfg, "t")
        assert spec.window.a == -2.0 and spec.window.Lam == 20.0

    def test_polynomial_realifies(self):
        spec, alg = problem_from_config(dict(Z3), "t")
        assert alg is not None
        assert alg.n == 1
        assert len(spec.variables) == 2

    def test_polynomial_conflicts_with_f(self):
        with pytest.raises(ConfigError, match="not both"):
            problem_from_config({**Z3, "f": "x"}, "t")

    def test_polynomial_rejects_variables(self):
        with pytest.raises(ConfigError, match="variables"):
            problem_from_config({**Z3, "variables": ["u", "v"]}, "t")

    def test_bad_rational(self):
        cfg = {"dimension": 1, "eps": 0.1,
               "polynomial": {"terms": [{"monomial": [2], "re": "x"}]}}
        with pytest.raises(ConfigError, match="rational"):
            problem_from_config(cfg, "t")


class TestGridParsing:
    def test_power_range(self):
        assert _parse_grid("2^-3..2^-6") == (2 ** -3, 2 ** -4,
                                             2 ** -5, 2 ** -6)

    def test_power_range_ascending(self):
        assert _parse_grid("2^-6..2^-4") == (2 ** -6, 2 ** -5, 2 ** -4)

    def test_comma_list(self):
        assert _parse_grid("0.4, 0.2, 0.1") == (0.4, 0.2, 0.1)

    def test_base_mismatch(self):
        with pytest.raises(ConfigError, match="base"):
            _parse_grid("2^-3..3^-6")

    def test_garbage(self):
        with pytest.raises(ConfigError):
            _parse_grid("teapot")

    def test_missing(self):
        with pytest.raises(ConfigError, match="grid"):
            _parse_grid(None)


class TestCanonicalJson:
    def test_non_finite_floats_become_strings(self):
        out = _canon({"a": float("inf"), "b": float("-inf"),
                      "c": float("nan")})
        assert out == {"a": "inf", "b": "-inf", "c": "nan"}
        assert _thaw(out["a"]) == math.inf
        assert math.isnan(_thaw(out["c"]))

    def test_numpy_types(self):
        out = _canon({"f": np.float64(0.5), "i": np.int32(7),
                      "b": np.bool_(True), "arr": np.arange(3.0)})
        assert out == {"f": 0.5, "i": 7, "b": True, "arr": [0.0, 1.0, 2.0]}
        json.dumps(out)

    def test_bool_stays_bool(self):
        assert _canon(True) is True
        assert _canon(False) is False

    def test_dumps_sorted(self):
        assert canonical_dumps({"b": 1, "a": 2}) == '{"a": 2, "b": 1}'


class TestCache:
    def test_roundtrip(self, tmp_path):
        c = ArtifactCache(tmp_path / "c")
        key = c.key("abc", "crit", {"eps": 0.1})
        c.store(key, {"points": [1, 2]})
        assert c.load(key) == {"points": [1, 2]}

    def test_miss_is_none(self, tmp_path):
        c = ArtifactCache(tmp_path / "c")
        assert c.load(c.key("abc", "crit", {})) is None

    def test_digest_mismatch_raises(self, tmp_path):
        c = ArtifactCache(tmp_path / "c")
        key = c.key("abc", "crit", {})
        c.store(key, {"v": 1})
        p = c._path(key)
        p.write_text(p.read_text().replace('"v": 1', '"v": 2'))
        with pytest.raises(CorruptCache):
            c.load(key)

    def test_fetch_recomputes_after_corruption(self, tmp_path, capsys):
        c = ArtifactCache(tmp_path / "c")
        key = c.key("abc", "crit", {})
        c.store(key, {"v": 1})
        c._path(key).write_text("not json at all")
        payload, hit = c.fetch(key, lambda: {"v": 3})
        assert payload == {"v": 3} and hit is False
        assert "recomputing" in capsys.readouterr().err
        assert c.load(key) == {"v": 3}

    def test_params_change_key(self, tmp_path):
        c = ArtifactCache(tmp_path / "c")
        assert c.key("h", "crit", {"eps": 0.1}) != \
            c.key("h", "crit", {"eps": 0.2})
        assert c.key("h", "crit", {"eps": 0.1}) != \
            c.key("h", "flow", {"eps": 0.1})

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MORSEVANISH_CACHE", str(tmp_path / "elsewhere"))
        assert cache_root(tmp_path / "runs") == tmp_path / "elsewhere"
        monkeypatch.delenv("MORSEVANISH_CACHE")
        assert cache_root(tmp_path / "runs") == tmp_path / "runs" / "cache"


class TestPointRoundtrip:
    def test_record_rebuilds_the_point(self):
        spec, _ = problem_from_config(dict(DW), "t")
        cs = find_critical_points(spec, 0.05, seed=0)
        for p in cs.points:
            q = _point_from_record(json.loads(
                json.dumps(_canon(_point_record(p)))))
            assert np.allclose(q.location, p.location)
            assert q.value == p.value
            assert q.index == p.index
            assert np.allclose(q.frame, p.frame)
            assert q.window_status == p.window_status
            assert q.drifting == p.drifting

    def test_complex_rebuild_preserves_homology(self):
        spec, _ = problem_from_config(dict(DW), "t")
        cx = window_complex(spec, 0.05, seed=0)
        payload = {
            "problem": cx.problem, "eps": cx.eps,
            "window": list(cx.window),
            "generators": [[_point_record(p) for p in grp]
                           for grp in cx.generators],
            "boundaries": [cx.boundary(k) for k in range(1, cx.top + 1)],
            "notes": list(cx.notes),
        }
        payload = json.loads(json.dumps(_canon(payload)))
        back = _complex_from_payload("t", payload)
        assert homology(back).same_as(homology(cx))
        assert back.boundaries == cx.boundaries


class TestCommands:
    def test_crit_artifact_and_cache_reuse(self, tmp_path, capsys):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "crit", "--config", path) == 0
        first = capsys.readouterr().out
        assert "(cached)" not in first
        art = read_artifact(tmp_path, DW, "crit")
        assert art["schema"] == 1
        assert len(art["points"]) == 3
        assert all("frame" in p for p in art["points"])
        assert run(tmp_path, "crit", "--config", path) == 0
        assert "(cached)" in capsys.readouterr().out

    def test_missing_eps_exits_one(self, tmp_path, capsys):
        cfg = dict(DW)
        del cfg["eps"]
        path = write_cfg(tmp_path, cfg)
        assert run(tmp_path, "crit", "--config", path) == 1
        assert "eps" in capsys.readouterr().err

    def test_homology_artifact(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "homology", "--config", path) == 0
        art = read_artifact(tmp_path, DW, "homology")
        assert art["groups"]["0"] == {"betti": 1, "torsion": []}
        assert art["euler"] == 1
        assert art["d_squared"] == "d.d = 0"

    def test_oracle_artifact(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "oracle", "--config", path, "--res", "64") == 0
        art = read_artifact(tmp_path, DW, "oracle")
        assert art["method"] == "cubical"
        assert art["groups"]["0"] == {"betti": 1, "torsion": []}
        assert art["resolution"] == 64

    def test_oracle_too_coarse_exits_two(self, tmp_path, capsys):
        path = write_cfg(tmp_path, Z3)
        assert run(tmp_path, "oracle", "--config", path, "--res", "3") == 2
        assert "refinement" in capsys.readouterr().err

    def test_compare_double_well(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "compare", "--config", path,
                   "--catalog", "double_well_1d", "--res", "64") == 0
        art = read_artifact(tmp_path, DW, "compare")
        assert art["verdict"] == "pass"
        assert art["euler"]["ok"] is True
        degree0 = next(r for r in art["rows"] if r["degree"] == 0)
        assert degree0["morse"] == degree0["oracle"] == \
            degree0["catalog"] == "Z"

    def test_compare_z3_catalog_only(self, tmp_path):
        cfg = {"catalog": "z^3"}
        assert run(tmp_path, "compare", "--catalog", "z^3") == 0
        art = read_artifact(tmp_path, cfg, "compare")
        assert art["verdict"] == "pass"
        row = next(r for r in art["rows"] if r["degree"] == 1)
        assert row["morse"] == row["oracle"] == row["catalog"] == "Z^2"

    def test_compare_needs_some_problem(self, tmp_path, capsys):
        assert run(tmp_path, "compare") == 1
        assert "--catalog" in capsys.readouterr().err

    def test_unknown_catalog_exits_one(self, tmp_path):
        assert run(tmp_path, "compare", "--catalog", "nope") == 1

    def test_compare_flagship_euler_route(self, tmp_path):
        cfg = {"catalog": "x_plus_x2y"}
        assert run(tmp_path, "compare", "--catalog", "x_plus_x2y",
                   "--res", "16") == 0
        art = read_artifact(tmp_path, cfg, "compare")
        assert art["oracle_method"] == "cell-count"
        assert art["euler"] == {"morse": 1, "oracle": 1, "ok": True}
        assert art["verdict"] == "pass"

    def test_flow_artifacts(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "flow", "--config", path) == 0
        art = read_artifact(tmp_path, DW, "flow")
        assert len(art["sources"]) == 1
        (src,) = art["sources"]
        assert src["index"] == 1
        assert sorted(c for _, c in src["counts"]) in ([-1, 1], [1, -1])
        csv_text = (run_dir(tmp_path, DW) / "flow.csv").read_text()
        lines = csv_text.strip().splitlines()
        assert lines[0].startswith("source,termination,target,sign")
        assert len(lines) >= 3

    def test_sweep_eps_artifacts(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "sweep-eps", "--config", path,
                   "--grid", "0.4,0.2,0.1,0.05") == 0
        art = read_artifact(tmp_path, DW, "sweep-eps")
        assert art["verdict"] == "separated"
        assert len(art["eps_grid"]) == 4
        csv_lines = (run_dir(tmp_path, DW) / "sweep-eps.csv") \
            .read_text().strip().splitlines()
        assert csv_lines[0] == "chain,kind,eps,value,location"
        assert len(csv_lines) > 4

    def test_sweep_theta_needs_polynomial(self, tmp_path, capsys):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "sweep-theta", "--config", path,
                   "--grid", "0.4,0.2,0.1") == 1
        assert "polynomial" in capsys.readouterr().err

    def test_sweep_theta_artifact(self, tmp_path):
        z2 = {"name": "z2", "dimension": 1, "eps": 0.1,
              "polynomial": {"terms": [{"monomial": [2], "re": 1,
                                        "im": 0}]}}
        path = write_cfg(tmp_path, z2)
        assert run(tmp_path, "sweep-theta", "--config", path,
                   "--grid", "0.4,0.2,0.1", "--thetas", "2") == 0
        art = read_artifact(tmp_path, z2, "sweep-theta")
        assert art["experimental"] is True
        assert len(art["sweeps"]) == 2
        assert art["thetas"][0] == 0.0

    def test_continue_isomorphism(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "continue", "--config", path,
                   "--eps-from", "0.1", "--eps-to", "0.05") == 0
        art = read_artifact(tmp_path, DW, "continue")
        assert art["isomorphism"] is True
        assert art["confined"] is True
        assert art["failures"] == []
        assert art["source_homology"] == art["target_homology"]

    def test_jobs_flag_accepted(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "crit", "--config", path, "--jobs", "4") == 0

    def test_report_manifest(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        run(tmp_path, "homology", "--config", path)
        run(tmp_path, "compare", "--config", path,
            "--catalog", "double_well_1d", "--res", "64")
        assert run(tmp_path, "report", "--config", path) == 0
        man = json.loads((run_dir(tmp_path, DW) / "manifest.json")
                         .read_text())
        assert man["config_hash"] == config_digest(DW)
        assert man["summary"]["compare"] == "pass"
        assert man["summary"]["homology"] == "ok"
        for name, entry in man["stages"].items():
            blob = (run_dir(tmp_path, DW) / name).read_bytes()
            assert hashlib.sha256(blob).hexdigest() == entry["sha256"]
            assert "written_at" in entry
        for stage in ("homology", "compare"):
            art = read_artifact(tmp_path, DW, stage)
            assert "written_at" not in json.dumps(art)

    def test_report_without_artifacts_exits_one(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        assert run(tmp_path, "report", "--config", path) == 1


class TestDeterminism:
    def test_reports_byte_identical_across_runs(self, tmp_path):
        path = write_cfg(tmp_path, DW)
        args = ("compare", "--config", path,
                "--catalog", "double_well_1d", "--res", "64")
        assert run(tmp_path, *args) == 0
        first = {f.name: f.read_bytes()
                 for f in run_dir(tmp_path, DW).iterdir() if f.is_file()}
        assert run(tmp_path, *args) == 0
        for f in run_dir(tmp_path, DW).iterdir():
            if f.is_file():
                assert f.read_bytes() == first[f.name], f.name

    def test_fresh_caches_agree(self, tmp_path):
        outs = []
        for sub in ("a", "b"):
            d = tmp_path / sub
            d.mkdir()
            path = write_cfg(d, DW)
            assert main(["homology", "--config", path,
                         "--out", str(d / "runs")]) == 0
            outs.append((d / "runs" / config_digest(DW) /
                         "homology.json").read_bytes())
        assert outs[0] == outs[1]

    def test_config_hash_ignores_key_order(self):
        assert config_digest({"a": 1, "b": 2}) == \
            config_digest({"b": 2, "a": 1})

    def test_dump_json_newline_terminated(self, tmp_path):
        p = dump_json(tmp_path / "x.json", {"k": 1})
        assert p.read_text().endswith("}\n")
