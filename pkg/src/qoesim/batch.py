"""Seed batches, result files and cross-architecture comparison.

Layout written by :func:`run_batch` for each architecture::

    <out>/<architecture>/
        effective_config.yaml
        manifest.json            architecture, seeds, config hash
        per_run.csv              one row of run means per seed, sorted by seed
        cdf_<metric>.csv         value,cum_fraction
        cdf_<metric>.png
        runs/seed_<n>/summary.csv

The comparison step only reads ``per_run.csv`` files, so it works on
directories produced elsewhere too.
"""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import write_effective
from .metrics import SUMMARY_HEADER, aggregate_cdf
from .plotting import plot_cdfs, plot_trend
from .runner import Simulation

log = logging.getLogger(__name__)

METRICS = ("mos", "sessions", "loss_ratio", "delay_ms", "transmitted_packets", "utilization")
PER_RUN_HEADER = ["seed", *METRICS, "sessions_admitted", "conservation_violations"]
TREND_METRICS = ("mos", "sessions", "loss_ratio", "delay_ms")


class BatchError(RuntimeError):
    pass


def _num(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_summary_csv(summary, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        w.writerows(summary.rows())


def run_one(config, seed, out_dir=None, dump_events=False, dump_packets=False,
            dump_admission=False, dump_qp=False):
    """Run one seed.  With ``out_dir`` the summary CSV and any requested dumps are written there."""
    sim = Simulation(config, seed, dump_events=dump_events, dump_packets=dump_packets)
    summary = sim.run()
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_summary_csv(summary, d / "summary.csv")
        if dump_events:
            sim.write_event_log(d / "events.log")
        if dump_packets:
            sim.write_packet_trace(d / "packets.csv")
        if dump_admission and config.architecture == "cross_layer":
            sim.write_admission_log(d / "admission.csv")
        if dump_qp:
            sim.write_qp_timeline(d / "qp_timeline.csv")
    return summary


def _job(args):
    config, seed, run_dir, dumps = args
    try:
        return seed, run_one(config, seed, run_dir, **dumps), None
    except Exception as e:  # reported with the seed by the caller
        return seed, None, f"{type(e).__name__}: {e}"


def per_run_row(summary):
    m = summary.run_metrics()
    return [summary.seed, *(m[k] for k in METRICS), summary.sessions_admitted,
            summary.conservation_violations]


def write_per_run(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PER_RUN_HEADER)
        for r in sorted(rows, key=lambda r: r[0]):
            w.writerow([_num(x) for x in r])


def read_per_run(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise BatchError(f"{path}: no runs")
    out = {k: [] for k in PER_RUN_HEADER}
    for r in rows:
        out["seed"].append(int(r["seed"]))
        for k in PER_RUN_HEADER[1:]:
            out[k].append(float(r[k]))
    return out


def write_cdf(cdf, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "cum_fraction"])
        for v, f in cdf:
            w.writerow([_num(float(v)), _num(float(f))])


def run_batch(config, seeds, out_dir, jobs=1, plots=True, **dumps):
    """Run every seed of one configuration and write the aggregate files.

    Returns ``{metric: [per-run values in seed order]}``.  Any failing seed
    aborts the batch with a :class:`BatchError` naming it.
    """
    if not seeds:
        raise BatchError("batch needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise BatchError("seed list has duplicates")
    arch = config.architecture
    d = Path(out_dir) / arch
    d.mkdir(parents=True, exist_ok=True)
    write_effective(config, d / "effective_config.yaml")
    tasks = [(config, s, d / "runs" / f"seed_{s}", dumps) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, tasks))
    else:
        results = [_job(t) for t in tasks]
    summaries = []
    for seed, summary, err in results:
        if err is not None:
            raise BatchError(f"{arch} seed {seed} failed: {err}")
        summaries.append(summary)
        log.info("%s seed %s done: mos=%.3f sessions=%d", arch, seed,
                 summary.mean_mos, summary.sessions_decoded)

    rows = [per_run_row(s) for s in summaries]
    write_per_run(rows, d / "per_run.csv")
    values = {m: [s.run_metrics()[m] for s in sorted(summaries, key=lambda s: s.seed)]
              for m in METRICS}
    for m in METRICS:
        cdf = aggregate_cdf(values[m])
        write_cdf(cdf, d / f"cdf_{m}.csv")
        if plots:
            plot_cdfs({arch: cdf}, m, d / f"cdf_{m}.png")
    manifest = {
        "architecture": arch,
        "seeds": sorted(seeds),
        "config_hash": config.config_hash(),
        "scenario": config.name,
        "metrics": list(METRICS),
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return values


def _label(path):
    p = Path(path)
    man = p / "manifest.json"
    if man.is_file():
        return json.loads(man.read_text()).get("architecture", p.name)
    return p.name


def compare(dirs, out_dir=None, plots=True):
    """Trend table over result directories; each must hold a ``per_run.csv``.

    Returns ``{label: {metric: mean over runs}}`` and, with ``out_dir``,
    writes ``comparison.csv``, overlaid CDF figures and a bar chart.
    """
    table, runs = {}, {}
    for path in dirs:
        f = Path(path) / "per_run.csv"
        if not f.is_file():
            raise BatchError(f"{path}: no per_run.csv (not a batch result directory)")
        label = _label(path)
        if label in table:
            label = f"{label}@{os.path.basename(os.path.normpath(path))}"
        data = read_per_run(f)
        runs[label] = data
        table[label] = {m: sum(data[m]) / len(data[m]) for m in METRICS}
        table[label]["runs"] = len(data["seed"])
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "comparison.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["architecture", "runs", *METRICS])
            for label in sorted(table):
                w.writerow([label, table[label]["runs"], *(_num(table[label][m]) for m in METRICS)])
        if plots:
            for m in METRICS:
                plot_cdfs({k: aggregate_cdf(v[m]) for k, v in runs.items()}, m, d / f"cdf_{m}.png")
            plot_trend(table, TREND_METRICS, d / "trend.png")
    return table


def format_table(table):
    cols = ["runs", *METRICS]
    width = max(12, *(len(k) for k in table))
    lines = [f"{'architecture':<{width}} " + " ".join(f"{c:>19}" for c in cols)]
    for label in sorted(table):
        row = table[label]
        cells = [f"{row['runs']:>19d}"] + [f"{row[m]:>19.4f}" for m in METRICS]
        lines.append(f"{label:<{width}} " + " ".join(cells))
    return "\n".join(lines)
