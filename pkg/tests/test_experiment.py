import csv
from collections import defaultdict

import numpy as np
import pytest

from tensorhbf.cli import main
from tensorhbf.experiment import (
    CSV_FIELDS,
    ConfigError,
    PlotDataError,
    emit_plotdata,
    parse_config,
    realization_seed,
    run,
    runtime_path,
    splitmix64,
)

SMALL = """\
seed: 3
realizations: {realizations}
methods: {methods}
N_s: 1
N_t_RF: 2
N_r_RF: 2
sweep:
  param: snr_db
  values: [-10, 0]
channel:
  N_t: 8
  N_r: 4
  K: 4
output: out.csv
"""


def small(realizations=2, methods="[fully_digital, vtpar, somp, pe]"):
    return parse_config(SMALL.format(realizations=realizations, methods=methods))


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSeeds:
    def test_splitmix_reference(self):
        # first outputs of the reference SplitMix64 generator seeded with 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF
        assert realization_seed(0, 0) == 0xE220A8397B1DCDAF
        assert realization_seed(0, 1) == 0x6E789E6AA1B965F4

    def test_independent_of_count(self):
        a = [realization_seed(11, i) for i in range(5)]
        b = [realization_seed(11, i) for i in range(3)]
        assert a[:3] == b and len(set(a)) == 5


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.realizations == 100 and cfg.channel.N_t == 32 and cfg.tals.init == "gevd"

    def test_scientific_without_dot(self):
        cfg = parse_config("tals:\n  rel_tol: 1e-9\n")
        assert cfg.tals.rel_tol == 1e-9

    def test_unknown_key_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("seed: 1\nrealisations: 3\n")
        assert exc.value.line == 2

    def test_nested_unknown_key_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("seed: 1\nchannel:\n  N_t: 8\n  bogus: 2\n")
        assert exc.value.line == 4

    def test_dimension_chain_rejected(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("N_s: 3\nN_t_RF: 2\n")
        assert exc.value.line == 2 and "N_s <= N_t_RF" in str(exc.value)

    def test_rf_exceeds_antennas(self):
        with pytest.raises(ConfigError):
            parse_config("N_r_RF: 9\nchannel:\n  N_r: 8\n")

    def test_sweep_values_checked(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("sweep:\n  param: N_RF\n  values: [1, 2, 40]\n")
        assert exc.value.line == 3

    def test_bad_method(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("seed: 0\nmethods: [vtpar, mo]\n")
        assert exc.value.line == 2

    def test_zero_realizations(self):
        with pytest.raises(ConfigError):
            parse_config("realizations: 0\n")

    def test_yaml_syntax_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("seed: 1\nmethods: [vtpar\nN_s: 1\n")
        assert exc.value.line is not None

    def test_non_integer(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("seed: 1\nN_s: two\n")
        assert exc.value.line == 2


class TestRun:
    def test_fully_digital_only(self, tmp_path):
        out = tmp_path / "fd.csv"
        rows = run(small(1, "[fully_digital]"), out=out)
        assert len(rows) == 2
        on_disk = read(out)
        assert [r["sweep_value"] for r in on_disk] == ["-10.0", "0.0"]
        assert all(float(r["mean_nmse"]) == 0.0 and r["status"] == "ok" for r in on_disk)
        assert list(on_disk[0]) == list(CSV_FIELDS)

    def test_byte_identical(self, tmp_path):
        cfg = small()
        run(cfg, out=tmp_path / "a.csv")
        run(cfg, out=tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_parallel_matches_serial(self, tmp_path):
        cfg = small(3)
        run(cfg, out=tmp_path / "a.csv", jobs=1)
        run(cfg, out=tmp_path / "b.csv", jobs=2)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_sorted_and_sidecar(self, tmp_path):
        out = tmp_path / "r.csv"
        rows = run(small(), out=out)
        keys = [(float(r["sweep_value"]), int(r["seed"]), r["method"]) for r in rows]
        assert keys == sorted(keys)
        times = read(runtime_path(out))
        assert len(times) == len(rows) and all(float(t["runtime_ms"]) >= 0 for t in times)

    def test_metrics_sane(self, tmp_path):
        rows = run(small(), out=tmp_path / "r.csv")
        by = defaultdict(dict)
        for r in rows:
            by[(r["sweep_value"], r["seed"])][r["method"]] = r
        for group in by.values():
            fd = float(group["fully_digital"]["mean_se"])
            for m in ("vtpar", "somp", "pe"):
                assert float(group[m]["mean_se"]) <= fd + 1e-9
                assert float(group[m]["power_error"]) <= 1e-9
        assert {r["overhead"] for r in rows if r["method"] == "pe"} == {"16"}
        assert {r["overhead"] for r in rows if r["method"] in ("vtpar", "somp")} == {"2"}

    def test_identifiability_error_row(self, tmp_path):
        # a single band with more chains than streams cannot be factorized by vtpar
        cfg = parse_config(SMALL.format(realizations=1, methods="[vtpar, somp]").replace("K: 4", "K: 1"))
        rows = run(cfg, out=tmp_path / "r.csv")
        vt = [r for r in rows if r["method"] == "vtpar"]
        assert vt and all(r["status"].startswith("error") and r["mean_se"] == "" for r in vt)
        assert all(r["status"] == "ok" for r in rows if r["method"] == "somp")

    def test_same_channel_across_snr(self, tmp_path):
        rows = run(small(1, "[fully_digital]"), out=tmp_path / "r.csv")
        assert rows[0]["seed"] == rows[1]["seed"]
        assert float(rows[1]["mean_se"]) > float(rows[0]["mean_se"])


class TestPlotData:
    def _csv(self, tmp_path, rows):
        path = tmp_path / "res.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            for r in rows:
                w.writerow({k: r.get(k, "") for k in CSV_FIELDS})
        return path

    def test_single_method(self, tmp_path):
        rows = [
            {"sweep_param": "snr_db", "sweep_value": v, "seed": s, "method": "vtpar", "status": "ok", "mean_se": se}
            for v, s, se in [(0, 1, 2.0), (0, 2, 4.0), (-5, 1, 1.0)]
        ]
        (path,) = emit_plotdata(self._csv(tmp_path, rows), "se")
        lines = open(path).read().splitlines()
        assert lines[0].startswith("#")
        assert [tuple(map(float, ln.split())) for ln in lines[1:]] == [(-5.0, 1.0), (0.0, 3.0)]

    def test_group_by_oracle(self, tmp_path):
        out = tmp_path / "r.csv"
        run(small(3), out=out)
        written = emit_plotdata(out, "nmse")
        # independent group-by on the raw CSV
        sums = defaultdict(list)
        for r in read(out):
            sums[(r["method"], float(r["sweep_value"]))].append(float(r["mean_nmse"]))
        for path in written:
            method = path.split(".")[-3]
            for line in open(path).read().splitlines()[1:]:
                v, mean = map(float, line.split())
                assert mean == pytest.approx(np.mean(sums[(method, v)]), rel=1e-12, abs=1e-300)
        assert len(written) == 4

    def test_error_rows_skipped(self, tmp_path):
        rows = [
            {"sweep_param": "snr_db", "sweep_value": 0, "seed": 1, "method": "vtpar", "status": "ok", "mean_se": 2.0},
            {"sweep_param": "snr_db", "sweep_value": 0, "seed": 2, "method": "vtpar", "status": "error: x"},
        ]
        (path,) = emit_plotdata(self._csv(tmp_path, rows), "se")
        assert open(path).read().splitlines()[1] == "0.0 2.0"

    def test_empty_csv(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(PlotDataError):
            emit_plotdata(p)

    def test_header_only(self, tmp_path):
        with pytest.raises(PlotDataError):
            emit_plotdata(self._csv(tmp_path, []))

    def test_missing_file(self, tmp_path):
        with pytest.raises(PlotDataError):
            emit_plotdata(tmp_path / "nope.csv")

    def test_malformed(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(PlotDataError):
            emit_plotdata(p)


class TestCli:
    def test_run_and_plotdata(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(SMALL.format(realizations=1, methods="[fully_digital, somp]"))
        out = tmp_path / "o.csv"
        assert main(["run", str(cfg), "--out", str(out), "--seed", "9"]) == 0
        assert {r["seed"] for r in read(out)} == {str(realization_seed(9, 0))}
        assert "±" in capsys.readouterr().out
        assert main(["plotdata", str(out), "--metric", "se"]) == 0
        assert (tmp_path / "o.somp.se.dat").exists()

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("seed: 1\nN_s: 4\n")
        assert main(["run", str(cfg)]) == 1
        assert "bad.yaml:2" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "none.yaml")]) == 1

    def test_plotdata_error_exit(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        assert main(["plotdata", str(p)]) == 2
