"""Acceptance criteria.  Each test prints one PASS/FAIL line (visible without -s).

The desk batch (grandma-desk, 3 architectures x 10 seeds) is run once per
module and shared by the trend, safety and conservation checks.
"""

import csv
import statistics
from fractions import Fraction

import numpy as np
import pytest

from oracles import beta_exact, brute_force_rung, pro_iaar_exact
from qoesim import admission as adm
from qoesim.batch import run_batch, run_one
from qoesim.config import ARCHITECTURES, load_config
from qoesim.runner import build_ladder

PRESET = "grandma-desk"
SEEDS = list(range(1, 11))


def report(capsys, num, name, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {num:>2}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    """{architecture: [RunSummary per seed]} plus the output root."""
    root = tmp_path_factory.mktemp("desk")
    runs = {}
    for arch in ARCHITECTURES:
        cfg = load_config(preset=PRESET, overrides={"architecture": arch})
        runs[arch] = [run_one(cfg, s, root / arch / f"seed_{s}", dump_admission=True)
                      for s in SEEDS]
    return runs, root


def mean(xs):
    return sum(xs) / len(xs)


# -- 1 ----------------------------------------------------------------------

def test_c01_modeled_beta(capsys):
    mad = adm.modeled_beta(-0.54, 0.96, 32, 24)
    gr = adm.modeled_beta(-0.1, 0.4, 7, 20)
    ok = (abs(mad - 0.84) <= 0.01 and abs(gr - 0.775) <= 0.005
          and abs(mad - float(beta_exact(-0.54, 0.96, 32, 24))) < 1e-12
          and abs(gr - float(beta_exact(-0.1, 0.4, 7, 20))) < 1e-12)
    report(capsys, 1, "modeled beta", ok, f"CIF {mad:.4f} (0.84±0.01), QCIF {gr:.4f} (0.775±0.005)")
    assert ok


# -- 2 ----------------------------------------------------------------------

def _random_state(rng, mode):
    n = int(rng.integers(0, 33))
    rates = [float(rng.uniform(0, 10e6)) for _ in range(n)]
    probs = [float(rng.uniform(0, 1)) for _ in range(n)]
    b = float(rng.uniform(0.01, 1.0))
    st = adm.AdmissionState(link_capacity=10e6, beta_value=b, epsilon_mode=mode)
    for i, (x, p) in enumerate(zip(rates, probs)):
        st.add(adm.SessionRecord(f"s{i}", x, p))
    return st, rates, probs, b


def test_c02_pro_iaar_oracle(capsys):
    rng = np.random.default_rng(2)
    worst = 0.0
    for mode in ("literal", "per_session"):
        for _ in range(1000):
            st, rates, probs, b = _random_state(rng, mode)
            got = adm.pro_iaar(st)
            want = pro_iaar_exact(rates, probs, b, mode)
            worst = max(worst, abs(Fraction(got) - want))
    ok = worst <= 1
    report(capsys, 2, "Pro-IAAR vs exact oracle", ok,
           f"2x1000 states, worst error {float(worst):.3g} bps (limit 1)")
    assert ok


# -- 3 ----------------------------------------------------------------------

def test_c03_rung_scan_oracle(capsys):
    rng = np.random.default_rng(3)
    mismatches = 0
    for i in range(1000):
        mode = "literal" if i % 2 else "per_session"
        st, rates, probs, b = _random_state(rng, mode)
        st.link_capacity = float(rng.uniform(0.5e6, 40e6))
        top = float(rng.uniform(0.2e6, 8e6))
        gamma = float(rng.uniform(0.5, 2.0))
        ladder = {k: top * (2 / k) ** gamma for k in range(2, 32)}
        d = adm.evaluate(st, ladder)
        load = pro_iaar_exact(rates, probs, b, mode)
        exact = {k: Fraction(x) for k, x in ladder.items()}
        want = brute_force_rung(load, exact, Fraction(st.link_capacity))
        # the float path may differ from exact arithmetic only when a rung sits on the boundary
        got = d.qp if d.accepted else None
        if got != want:
            k = min(x for x in (got, want) if x is not None)
            slack = abs(load + exact[k] - Fraction(st.link_capacity))
            if slack > 1:
                mismatches += 1
    ok = mismatches == 0
    report(capsys, 3, "rung scan vs brute force", ok, f"1000 cases, {mismatches} mismatches")
    assert ok


# -- 4 ----------------------------------------------------------------------

def test_c04_admission_safety(desk, capsys):
    _, root = desk
    cap = load_config(preset=PRESET).link["capacity_mbps"] * 1e6
    accepted = violations = 0
    for s in SEEDS[:5]:
        with open(root / "cross_layer" / f"seed_{s}" / "admission.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                if row["decision"] != "accepted":
                    continue
                accepted += 1
                x_new = float(row["x_new_tried"].split(";")[-1])
                if float(row["pro_iaar"]) + x_new > cap:
                    violations += 1
    ok = violations == 0 and accepted > 0
    report(capsys, 4, "admission safety", ok,
           f"5 seeds, {accepted} accepted rows, {violations} over capacity")
    assert ok


# -- 5, 6, 7 ----------------------------------------------------------------

def test_c05_sessions_trend(desk, capsys):
    runs, _ = desk
    m = {a: mean([r.sessions_decoded for r in runs[a]]) for a in ARCHITECTURES}
    ok = m["cross_layer"] >= m["adaptive"] >= m["non_adaptive"] and m["cross_layer"] > m["non_adaptive"]
    report(capsys, 5, "decoded sessions ordering", ok,
           f"cross {m['cross_layer']:.2f} >= adaptive {m['adaptive']:.2f} >= non {m['non_adaptive']:.2f}")
    assert ok


def test_c06_mos_trend(desk, capsys):
    runs, _ = desk
    good = 0
    for c, a, n in zip(runs["cross_layer"], runs["adaptive"], runs["non_adaptive"]):
        if c.mean_mos - a.mean_mos > 0.05 and a.mean_mos - n.mean_mos > 0.05:
            good += 1
    m = {a: mean([r.mean_mos for r in runs[a]]) for a in ARCHITECTURES}
    ok = good >= 8
    report(capsys, 6, "MOS ordering", ok,
           f"holds with gaps > 0.05 on {good}/10 seeds; means cross {m['cross_layer']:.3f}, "
           f"adaptive {m['adaptive']:.3f}, non {m['non_adaptive']:.3f}")
    assert ok


def test_c07_loss_delay_trend(desk, capsys):
    runs, _ = desk
    loss = {a: mean([r.mean_loss for r in runs[a]]) for a in ("cross_layer", "adaptive")}
    delay = {a: mean([r.mean_delay_ms for r in runs[a]]) for a in ("cross_layer", "adaptive")}
    ok = loss["cross_layer"] < loss["adaptive"] and delay["cross_layer"] < delay["adaptive"]
    report(capsys, 7, "loss and delay", ok,
           f"loss {loss['cross_layer']:.4f} < {loss['adaptive']:.4f}, "
           f"delay {delay['cross_layer']:.1f} < {delay['adaptive']:.1f} ms")
    assert ok


# -- 8 ----------------------------------------------------------------------

def test_c08_saturation(desk, capsys):
    runs, _ = desk
    cfg = load_config(preset=PRESET, overrides={"architecture": "non_adaptive"})
    ladder = build_ladder(cfg, SEEDS[0])
    cap = cfg.link["capacity_mbps"] * 1e6
    offered = cfg.sources["n_video"] * ladder.rate(2)
    util = [r.utilization for r in runs["non_adaptive"]]
    loss = [r.mean_loss for r in runs["non_adaptive"]]
    ok = offered >= 1.5 * cap and min(util) >= 0.9 and min(loss) > 0
    report(capsys, 8, "saturation", ok,
           f"offered {offered / cap:.2f}xC, utilization min {min(util):.3f}, loss min {min(loss):.3f}")
    assert ok


# -- 9 ----------------------------------------------------------------------

def test_c09_conservation(desk, capsys):
    runs, _ = desk
    all_runs = [r for a in ARCHITECTURES for r in runs[a]]
    viol = sum(r.conservation_violations for r in all_runs)
    over = sum(1 for r in all_runs if r.max_queue_occupancy > r.queue_capacity)
    flow_bad = sum(1 for r in all_runs for f in r.flows
                   if f.admitted and f.packets_sent != f.packets_delivered + f.packets_dropped + f.residual)
    ok = viol == 0 and over == 0 and flow_bad == 0
    report(capsys, 9, "conservation and queue bound", ok,
           f"{len(all_runs)} runs, {viol} audit violations, {flow_bad} end-of-run imbalances, "
           f"{over} queue overflows")
    assert ok


# -- 10 ---------------------------------------------------------------------

def test_c10_determinism(tmp_path, capsys):
    cfg = load_config(preset=PRESET, overrides={"architecture": "cross_layer"})
    same = True
    for k in (0, 1):
        run_one(cfg, 3, tmp_path / f"rep{k}", dump_events=True, dump_admission=True)
    for name in ("summary.csv", "events.log", "admission.csv"):
        same &= (tmp_path / "rep0" / name).read_bytes() == (tmp_path / "rep1" / name).read_bytes()

    acfg = load_config(preset=PRESET, overrides={"architecture": "adaptive"})
    order = [7, 2, 10, 1, 5, 9, 3, 8, 6, 4]
    run_batch(acfg, SEEDS, tmp_path / "fwd", plots=False)
    run_batch(acfg, order, tmp_path / "perm", plots=False)
    cdfs = sorted(p.name for p in (tmp_path / "fwd" / "adaptive").glob("cdf_*.csv"))
    perm_same = bool(cdfs) and all(
        (tmp_path / "fwd" / "adaptive" / n).read_bytes() == (tmp_path / "perm" / "adaptive" / n).read_bytes()
        for n in cdfs)
    ok = same and perm_same
    report(capsys, 10, "determinism", ok,
           f"repeat run byte-identical: {same}; {len(cdfs)} CDF files identical under permutation: {perm_same}")
    assert ok


# -- 11 ---------------------------------------------------------------------

def test_c11_smoothness(desk, capsys):
    runs, _ = desk
    video = [f.rate_cv for r in runs["adaptive"] for f in r.video]
    ftp = [f.rate_cv for r in runs["adaptive"] for f in r.ftp]
    mv, mf = statistics.median(video), statistics.median(ftp)
    per_seed = sum(1 for r in runs["adaptive"]
                   if statistics.median(f.rate_cv for f in r.video)
                   < statistics.median(f.rate_cv for f in r.ftp))
    ok = mv < mf
    report(capsys, 11, "rate smoothness", ok,
           f"median CV video {mv:.3f} < FTP {mf:.3f} (pooled over 10 seeds; "
           f"holds per seed on {per_seed}/10)")
    assert ok
