"""Seeded Monte-Carlo comparison of hybrid beamforming methods.

Every realization ``r`` draws its channel from
``splitmix64(master_seed + (r + 1) * 0x9E3779B97F4A7C15)``, i.e. the
``r``-th output of a SplitMix64 generator seeded with the master seed, so
any subset of realizations can be replayed on its own. The same channel
is reused across all sweep points of a realization.
"""

import csv
import io
import logging
import os
import tempfile
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .baselines import dft_codebook, pe_altmin, somp
from .channel import ChannelConfig, generate_channel, optimal_precoders, wmmse_combiners
from .cpd import TalsOptions
from .evalkit import feedback_overhead, spectral_efficiency
from .vtpar import VtparOptions, assemble

log = logging.getLogger(__name__)

METHODS = ("fully_digital", "vtpar", "somp", "pe")
SWEEP_PARAMS = ("snr_db", "N_s", "N_t_RF", "N_r_RF", "N_RF")
CSV_FIELDS = (
    "sweep_param",
    "sweep_value",
    "realization",
    "seed",
    "method",
    "status",
    "mean_se",
    "mean_nmse",
    "mean_nmse_combiner",
    "overhead",
    "power_error",
)
RUNTIME_FIELDS = ("sweep_value", "realization", "seed", "method", "runtime_ms")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def realization_seed(master_seed, index):
    """Seed of realization ``index`` (0-based) under ``master_seed``."""
    return splitmix64((master_seed + index * _GOLDEN) & _MASK64)


class ConfigError(ValueError):
    def __init__(self, message, line=None, source="<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass
class ExperimentConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    methods: tuple = METHODS
    sweep_param: str = "snr_db"
    sweep_values: tuple = (-15.0, -10.0, -5.0, 0.0)
    realizations: int = 100
    seed: int = 0
    N_s: int = 1
    N_t_RF: int = 2
    N_r_RF: int = 2
    output: str = "results.csv"
    tals: TalsOptions = field(default_factory=lambda: TalsOptions(init="gevd"))
    refit_baseband: bool = False
    codebook_oversampling: int = 1
    pe_max_iters: int = 200
    pe_tol: float = 1e-8
    jobs: int = 1

    def point(self, value):
        """``(snr_db, N_s, N_t_RF, N_r_RF)`` at one sweep value."""
        p = {"snr_db": self.channel.snr_db, "N_s": self.N_s, "N_t_RF": self.N_t_RF, "N_r_RF": self.N_r_RF}
        if self.sweep_param == "N_RF":
            p["N_t_RF"] = p["N_r_RF"] = int(value)
        elif self.sweep_param == "snr_db":
            p["snr_db"] = float(value)
        else:
            p[self.sweep_param] = int(value)
        return p

    def validate(self, lines=None):
        lines = lines or {}
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1", lines.get("realizations"))
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}", lines.get("methods"))
        if self.sweep_param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep param must be one of {list(SWEEP_PARAMS)}", lines.get("sweep.param"))
        if not self.sweep_values:
            raise ConfigError("sweep values must be non-empty", lines.get("sweep.values"))
        if self.codebook_oversampling < 1:
            raise ConfigError("codebook oversampling must be >= 1", lines.get("codebook.oversampling"))
        ch = self.channel

        def first_line(*keys):
            if self.sweep_param != "snr_db" and "sweep.values" in lines:
                return lines["sweep.values"]
            return next((lines[k] for k in keys if k in lines), None)

        for value in self.sweep_values:
            p = self.point(value)
            if not (1 <= p["N_s"] <= p["N_t_RF"] <= ch.N_t):
                raise ConfigError(
                    f"need 1 <= N_s <= N_t_RF <= N_t, got N_s={p['N_s']} N_t_RF={p['N_t_RF']} N_t={ch.N_t}",
                    first_line("N_t_RF", "N_s", "channel.N_t"),
                )
            if not (p["N_s"] <= p["N_r_RF"] <= ch.N_r):
                raise ConfigError(
                    f"need N_s <= N_r_RF <= N_r, got N_s={p['N_s']} N_r_RF={p['N_r_RF']} N_r={ch.N_r}",
                    first_line("N_r_RF", "N_s", "channel.N_r"),
                )


# ---------------------------------------------------------------------------
# config file parsing


def _walk(node, prefix, lines):
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else key.value
            lines[path] = key.start_mark.line + 1
            _walk(value, path, lines)


_TOP_KEYS = {
    "seed", "realizations", "methods", "N_s", "N_t_RF", "N_r_RF", "sweep", "channel",
    "tals", "vtpar", "codebook", "pe", "output", "jobs",
}
_SECTION_KEYS = {
    "sweep": {"param", "values"},
    "channel": {f.name for f in fields(ChannelConfig)},
    "tals": {"max_iters", "rel_tol", "n_restarts", "init", "line_search", "vandermonde_projection"},
    "vtpar": {"refit_baseband"},
    "codebook": {"oversampling"},
    "pe": {"max_iters", "tol"},
}
_FLOAT_KEYS = {"channel.delay_spread", "channel.subcarrier_spacing", "channel.angle_spread",
               "channel.snr_db", "channel.power", "tals.rel_tol", "pe.tol"}


def _coerce(path, value, line, source):
    try:
        if path in _FLOAT_KEYS:
            return float(value)
        if isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"{path} must be a number, got {value!r}", line, source) from None


def parse_config(text, source="<config>"):
    """Parse a YAML experiment description into an :class:`ExperimentConfig`."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None, source) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", 1, source)
    lines = {}
    _walk(node, "", lines)

    for key in data:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown key {key!r}", lines.get(key), source)
    for section, allowed in _SECTION_KEYS.items():
        sub = data.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"{section} must be a mapping", lines.get(section), source)
        for key in sub:
            if key not in allowed:
                raise ConfigError(f"unknown key {section}.{key}", lines.get(f"{section}.{key}"), source)

    def get(path, default):
        cur = data
        for part in path.split("."):
            if not isinstance(cur, dict) or part not in cur:
                return default
            cur = cur[part]
        return _coerce(path, cur, lines.get(path), source)

    def section(name):
        return {k: get(f"{name}.{k}", None) for k in data.get(name, {})}

    try:
        channel = ChannelConfig(**section("channel"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"channel: {exc}", lines.get("channel"), source) from None

    tals_kw = section("tals")
    tals_kw.setdefault("init", "gevd")
    if tals_kw["init"] not in ("gevd", "random"):
        raise ConfigError("tals.init must be 'gevd' or 'random'", lines.get("tals.init"), source)

    methods = data.get("methods", list(METHODS))
    values = data.get("sweep", {}).get("values", [-15, -10, -5, 0])
    if not isinstance(methods, list) or not isinstance(values, list):
        raise ConfigError("methods and sweep.values must be lists",
                          lines.get("methods") if not isinstance(methods, list) else lines.get("sweep.values"), source)
    int_fields = ("realizations", "seed", "N_s", "N_t_RF", "N_r_RF", "jobs")
    for key in int_fields:
        if key in data and (isinstance(data[key], bool) or not isinstance(data[key], int)):
            raise ConfigError(f"{key} must be an integer", lines.get(key), source)
    try:
        cfg = ExperimentConfig(
            channel=channel,
            methods=tuple(methods),
            sweep_param=data.get("sweep", {}).get("param", "snr_db"),
            sweep_values=tuple(float(v) for v in values),
            realizations=data.get("realizations", 100),
            seed=data.get("seed", 0),
            N_s=data.get("N_s", 1),
            N_t_RF=data.get("N_t_RF", 2),
            N_r_RF=data.get("N_r_RF", 2),
            output=str(data.get("output", "results.csv")),
            tals=TalsOptions(**tals_kw),
            refit_baseband=bool(get("vtpar.refit_baseband", False)),
            codebook_oversampling=get("codebook.oversampling", 1),
            pe_max_iters=get("pe.max_iters", 200),
            pe_tol=get("pe.tol", 1e-8),
            jobs=data.get("jobs", 1),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), None, source) from None
    try:
        cfg.validate(lines)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[1], exc.line, source) from None
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


# ---------------------------------------------------------------------------
# running


def _factorize(method, stack, n_rf, cfg, seed):
    if method == "vtpar":
        return assemble(stack, n_rf, VtparOptions(tals=cfg.tals, refit_baseband=cfg.refit_baseband))
    if method == "somp":
        return somp(stack, dft_codebook(stack.N, cfg.codebook_oversampling * stack.N), n_rf)
    if method == "pe":
        return pe_altmin(stack, n_rf, max_iters=cfg.pe_max_iters, tol=cfg.pe_tol, seed=seed)
    raise ValueError(method)


def _fmt(x):
    return repr(float(x))


def run_realization(cfg, index):
    """All sweep points and methods for one realization.

    Returns ``(rows, runtimes)`` where ``rows`` are CSV dicts and
    ``runtimes`` the matching timing records.
    """
    seed = realization_seed(cfg.seed, index)
    ens0 = generate_channel(cfg.channel.replace(seed=seed))
    rows, runtimes = [], []
    precoder_cache = {}
    for value in cfg.sweep_values:
        p = cfg.point(value)
        ens = ens0.with_snr(p["snr_db"], cfg.channel.power)
        F = optimal_precoders(ens, p["N_s"])
        W = wmmse_combiners(ens, F)
        for method in cfg.methods:
            row = {
                "sweep_param": cfg.sweep_param,
                "sweep_value": _fmt(value),
                "realization": str(index),
                "seed": str(seed),
                "method": method,
                "status": "ok",
                "mean_se": "",
                "mean_nmse": "",
                "mean_nmse_combiner": "",
                "overhead": "",
                "power_error": "",
            }
            try:
                t0 = time.perf_counter()
                if method == "fully_digital":
                    F_RF, F_BB = np.eye(ens.per_band.shape[2]), F.per_band
                    W_RF, W_BB = np.eye(ens.per_band.shape[1]), W.per_band
                    nmse_t = nmse_r = 0.0
                else:
                    key = (method, p["N_s"], p["N_t_RF"])
                    if key not in precoder_cache:
                        precoder_cache[key] = _factorize(method, F, p["N_t_RF"], cfg, seed)
                    hp = precoder_cache[key]
                    hc = _factorize(method, W, p["N_r_RF"], cfg, seed)
                    F_RF, F_BB, W_RF, W_BB = hp.analog, hp.baseband, hc.analog, hc.baseband
                    nmse_t = float(np.mean(hp.band_errors ** 2))
                    nmse_r = float(np.mean(hc.band_errors ** 2))
                    row["overhead"] = str(feedback_overhead(method, ens.per_band.shape[2], p["N_t_RF"]))
                elapsed = (time.perf_counter() - t0) * 1e3
                rates = [
                    spectral_efficiency(ens.per_band[k], F_RF, F_BB[k], W_RF, W_BB[k],
                                        cfg.channel.power, ens.noise_variance, p["N_s"])
                    for k in range(ens.K)
                ]
                power = np.linalg.norm(np.einsum("nr,krs->kns", F_RF, F_BB), axis=(1, 2)) ** 2
                row.update(
                    mean_se=_fmt(np.mean(rates)),
                    mean_nmse=_fmt(nmse_t),
                    mean_nmse_combiner=_fmt(nmse_r),
                    power_error=_fmt(np.max(np.abs(power - p["N_s"]))),
                )
                runtimes.append({"sweep_value": row["sweep_value"], "realization": str(index),
                                 "seed": str(seed), "method": method, "runtime_ms": f"{elapsed:.3f}"})
            except (ValueError, np.linalg.LinAlgError) as exc:
                row["status"] = f"error: {exc}".replace("\n", " ")
                log.warning("realization %d %s=%s %s failed: %s", index, cfg.sweep_param, value, method, exc)
            rows.append(row)
    return rows, runtimes


def _sort_key(row):
    return (float(row["sweep_value"]), int(row["seed"]), row["method"])


def _to_csv(rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg, out=None, jobs=None):
    """Run the experiment and write the results CSV.

    Rows are sorted by (sweep value, seed, method) before writing, so the
    file does not depend on ``jobs``. Wall-clock timings go to a sidecar
    ``<out>.runtime.csv`` to keep the main file byte-reproducible.

    Returns the list of row dicts.
    """
    out = out or cfg.output
    jobs = jobs or cfg.jobs or 1
    indices = range(cfg.realizations)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_realization, [cfg] * len(indices), indices))
    else:
        results = [run_realization(cfg, i) for i in indices]
    rows = sorted((r for res in results for r in res[0]), key=_sort_key)
    runtimes = sorted((r for res in results for r in res[1]), key=_sort_key)
    _atomic_write(out, _to_csv(rows, CSV_FIELDS))
    _atomic_write(runtime_path(out), _to_csv(runtimes, RUNTIME_FIELDS))
    return rows


def runtime_path(out):
    root, _ = os.path.splitext(os.fspath(out))
    return root + ".runtime.csv"


def summarize(rows, metric="mean_se"):
    """``{(sweep_value, method): (mean, stderr, n)}`` over successful rows."""
    groups = defaultdict(list)
    for row in rows:
        if row["status"] == "ok" and row[metric] != "":
            groups[(float(row["sweep_value"]), row["method"])].append(float(row[metric]))
    out = {}
    for key, vals in groups.items():
        vals = np.asarray(vals)
        stderr = vals.std(ddof=1) / np.sqrt(vals.size) if vals.size > 1 else 0.0
        out[key] = (float(vals.mean()), float(stderr), int(vals.size))
    return out


def format_summary(rows, sweep_param="sweep", metric="mean_se"):
    stats = summarize(rows, metric)
    methods = sorted({m for _, m in stats})
    values = sorted({v for v, _ in stats})
    header = f"{sweep_param:>10} " + " ".join(f"{m:>22}" for m in methods)
    lines = [header]
    for v in values:
        cells = []
        for m in methods:
            if (v, m) in stats:
                mean, se, _ = stats[(v, m)]
                cells.append(f"{mean:>12.4f} ± {se:<7.4f}")
            else:
                cells.append(f"{'-':>22}")
        lines.append(f"{v:>10g} " + " ".join(cells))
    errors = sum(r["status"] != "ok" for r in rows)
    if errors:
        lines.append(f"{errors} row(s) failed; see the status column")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# plot data


class PlotDataError(ValueError):
    pass


_METRIC_COLUMNS = {"se": "mean_se", "nmse": "mean_nmse"}


def read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise PlotDataError(f"{path}: empty CSV")
            missing = [c for c in ("sweep_param", "sweep_value", "method", "status") if c not in reader.fieldnames]
            if missing:
                raise PlotDataError(f"{path}: missing columns {missing}")
            rows = list(reader)
    except OSError as exc:
        raise PlotDataError(f"{path}: {exc.strerror}") from None
    if not rows:
        raise PlotDataError(f"{path}: no data rows")
    return rows


def emit_plotdata(csv_path, metric="se", outdir=None):
    """Write one ``<stem>.<method>.<metric>.dat`` file per method.

    Each file has a ``#`` header line followed by ``sweep_value mean``
    pairs sorted by sweep value. Returns the written paths.
    """
    if metric not in _METRIC_COLUMNS:
        raise PlotDataError(f"metric must be one of {sorted(_METRIC_COLUMNS)}")
    rows = read_rows(csv_path)
    column = _METRIC_COLUMNS[metric]
    if column not in rows[0]:
        raise PlotDataError(f"{csv_path}: missing column {column}")
    try:
        stats = summarize(rows, column)
    except ValueError as exc:
        raise PlotDataError(f"{csv_path}: malformed value ({exc})") from None
    if not stats:
        raise PlotDataError(f"{csv_path}: no successful rows")
    sweep_param = rows[0]["sweep_param"]
    stem = os.path.splitext(os.path.basename(os.fspath(csv_path)))[0]
    outdir = outdir or os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(outdir, exist_ok=True)
    written = []
    for method in sorted({m for _, m in stats}):
        points = sorted((v, mean) for (v, m), (mean, _, _) in stats.items() if m == method)
        path = os.path.join(outdir, f"{stem}.{method}.{metric}.dat")
        body = f"# {sweep_param} {column}\n" + "".join(f"{v!r} {mean!r}\n" for v, mean in points)
        _atomic_write(path, body)
        written.append(path)
    return written
