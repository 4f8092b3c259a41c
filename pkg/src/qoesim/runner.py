"""Builds one simulation from a scenario and a seed, runs it, and summarizes it.

Wiring per architecture:

* ``non_adaptive`` - every source starts at QP 2 and never changes rung.
* ``adaptive``     - every source starts at QP 2 and follows ECN feedback.
* ``cross_layer``  - sources request admission once per second at a random
  offset; the gateway runs the rung scan and an accepted source starts
  adaptive at the granted rung.  Rejected sources ask again later.

In the first two architectures every session is admitted and starts at a
uniform random time inside the arrival window.
"""

import csv
import logging
import math

from . import admission as adm
from .config import ARCHITECTURES
from .core import US_PER_S, Engine, EventKind, make_rng, millis, seconds
from .metrics import (FlowMetrics, FlowSummary, RunSummary, coefficient_of_variation,
                      mos_score, session_decoded)
from .netsim import (FTP, VIDEO, BottleneckLink, DroptailQueue, FtpSource, VideoSource,
                     check_conservation)
from .ratecontrol import ControllerState
from .traces import generate_ladder, import_ladder

log = logging.getLogger(__name__)

AUDIT_PERIOD_US = US_PER_S


def build_ladder(config, seed):
    if config.trace_manifest:
        return import_ladder(config.trace_manifest)
    return generate_ladder(config.profile, seed)


class Simulation:
    def __init__(self, config, seed, dump_events=False, dump_packets=False, ladder=None):
        if config.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {config.architecture!r}")
        self.config = config
        self.seed = seed
        self.arch = config.architecture
        self.engine = Engine(log_events=dump_events)
        self.ladder = ladder if ladder is not None else build_ladder(config, seed)
        self.end = seconds(config.duration_s)

        link_cfg = config.link
        self.capacity = int(round(link_cfg["capacity_mbps"] * 1e6))
        self.packet_rows = [] if dump_packets else None
        tracer = self._trace_packet if dump_packets else None
        queue = DroptailQueue(int(link_cfg["queue_packets"]), link_cfg["ecn_threshold"])
        self.prop = millis(link_cfg["delay_ms"])
        self.link = BottleneckLink(self.engine, self.capacity, self.prop, queue, tracer)

        src = config.sources
        self.packet_size = int(src["packet_size"])
        self.access = millis(src["access_delay_ms"])
        # reverse path: bottleneck propagation plus the access hop back to the source
        self.reverse = self.prop + self.access

        self.metrics = {}
        self.video_ids = [f"video{i}" for i in range(int(src["n_video"]))]
        self.ftp_ids = [f"ftp{i}" for i in range(int(src["n_ftp"]))]
        for fid in self.video_ids:
            self.metrics[fid] = FlowMetrics(fid, VIDEO)
        self.sources = {}
        self.admitted = {}  # flow -> admission time
        self.requests = 0
        self.qp_log = []
        self.audit_rows = []
        self.conservation_violations = 0
        self.meters = {}

        self.gate = None
        if self.arch == "cross_layer":
            a = config.admission
            coeffs = None
            if a["beta_mode"] == "modeled":
                coeffs = adm.BetaCoefficients(a["alpha"], a["delta"])
            self.gate = adm.AdmissionState(
                link_capacity=self.capacity, beta_mode=a["beta_mode"],
                beta_value=a["beta"] if a["beta"] is not None else 1.0,
                coefficients=coeffs, epsilon_mode=a["epsilon_mode"])
            self.window = seconds(a["window_s"])
            self.tick = millis(a["tick_ms"])
            self.pending = list(self.video_ids)

        self._schedule_ftp()
        self._schedule_video()
        if self.gate is not None:
            self.engine.at(self.tick, EventKind.MeasurementTick, "gateway", self._measure_tick)
        self.engine.at(AUDIT_PERIOD_US, EventKind.MeasurementTick, "audit", self._audit_tick)
        self.engine.at(self.end, EventKind.SimEnd, "sim", self._finish)

    # -- setup --------------------------------------------------------------

    def _schedule_ftp(self):
        lo, hi = self.config.sources["ftp_start_s"]
        for fid in self.ftp_ids:
            m = FlowMetrics(fid, FTP)
            self.metrics[fid] = m
            rng = make_rng(self.seed, f"start:{fid}")
            src = FtpSource(self.engine, self.link, fid, m, self.packet_size, self.access,
                            self.reverse, rwnd=int(self.config.sources["ftp_rwnd"]),
                            ecn=bool(self.config.sources["ftp_ecn"]))
            self.sources[fid] = src
            t = seconds(rng.uniform(lo, hi))
            if t < self.end:
                self.engine.at(t, EventKind.SessionRequest, fid, src.start)

    def _schedule_video(self):
        arr = self.config.arrivals
        if arr["policy"] == "uniform_window":
            lo, hi = arr["window_s"]
            for fid in self.video_ids:
                rng = make_rng(self.seed, f"start:{fid}")
                t = seconds(rng.uniform(lo, hi))
                if t < self.end:
                    self.engine.at(t, EventKind.SessionRequest, fid, self._start_unconditional, fid)
        else:
            rng = make_rng(self.seed, "arrivals")
            first = math.ceil(arr["request_start_s"])
            for s in range(first, int(math.ceil(self.config.duration_s))):
                t = seconds(s + rng.uniform(0.0, 1.0))
                if t < self.end:
                    self.engine.at(t, EventKind.SessionRequest, "gateway", self._request)

    def _controller(self, qp, ceiling=2):
        mode = "non_adaptive" if self.arch == "non_adaptive" else "adaptive"
        c = self.config.controller
        return ControllerState(current_qp=qp, mode=mode, step=int(c["step"]),
                               quiet_needed=int(c["quiet_intervals"]), ceiling_qp=ceiling)

    def _launch(self, fid, qp, hook=None, ceiling=2):
        src = VideoSource(
            self.engine, self.link, fid, self.ladder, self._controller(qp, ceiling), self.metrics[fid],
            self.packet_size, self.access, self.reverse, self.end,
            bucket_tolerance=self.config.controller["bucket_tolerance"],
            on_gateway=hook, qp_log=self.qp_log)
        self.sources[fid] = src
        self.admitted[fid] = self.engine.now
        src.start()

    # -- handlers -----------------------------------------------------------

    def _start_unconditional(self, fid):
        self.requests += 1
        self._launch(fid, 2)

    def _request(self):
        if not self.pending:
            return
        fid = self.pending[0]
        now = self.engine.now
        self.requests += 1
        self._refresh_measurements(now)
        d = adm.admit(self.gate, self.ladder, session_id=fid)
        self.audit_rows.append(adm.audit_row(now, fid, d))
        if d.accepted:
            self.pending.pop(0)
            meter = adm.RateMeter(self.window)
            self.meters[fid] = meter
            # optional: keep the source at or below the rung the gateway vetted
            ceiling = d.qp if self.config.controller["cap_at_granted"] else 2
            self._launch(fid, d.qp, hook=lambda t, pkt, m=meter: m.add(t, pkt.size * 8),
                         ceiling=ceiling)

    def _refresh_measurements(self, now):
        for fid, meter in self.meters.items():
            # a session keeps its granted rate until one full window has been observed
            if now - self.admitted[fid] >= self.window:
                adm.update_measurement(self.gate, fid, meter.rate(now))

    def _measure_tick(self):
        self._refresh_measurements(self.engine.now)
        nxt = self.engine.now + self.tick
        if nxt <= self.end:
            self.engine.at(nxt, EventKind.MeasurementTick, "gateway", self._measure_tick)

    def _audit_tick(self):
        bad = check_conservation(self.link, self.metrics)
        self.conservation_violations += len(bad)
        nxt = self.engine.now + AUDIT_PERIOD_US
        if nxt <= self.end:
            self.engine.at(nxt, EventKind.MeasurementTick, "audit", self._audit_tick)

    def _finish(self):
        for src in self.sources.values():
            src.stop() if hasattr(src, "stop") else src.sink.stop()
        self.conservation_violations += len(check_conservation(self.link, self.metrics))

    def _trace_packet(self, t, flow, seq, event, occ):
        self.packet_rows.append((t, flow, seq, event, occ))

    # -- run ----------------------------------------------------------------

    def run(self):
        self.engine.run_until(self.end)
        return self.summary()

    def summary(self):
        theta = self.config.metrics["theta"]
        lad = self.ladder
        s = RunSummary(self.arch, self.seed)
        for fid in self.video_ids:
            m = self.metrics[fid]
            if fid not in self.admitted:
                s.flows.append(FlowSummary(fid, VIDEO, False, False, float("nan"), 0.0, 0.0, 0))
                continue
            sent, dec, full, r_bar = m.decode_stats()
            ratio = dec / sent if sent else 0.0
            ok = session_decoded(dec, sent, full, theta)
            hist = self.sources[fid].qp_history
            s.flows.append(FlowSummary(
                fid, VIDEO, True, ok, mos_score(ratio, r_bar, lad.r_min, lad.r_max, ok),
                m.mean_delay_us / 1000, m.loss_ratio, m.delivered_bits,
                m.sent, m.delivered, m.dropped, m.residual(), ratio,
                sum(hist) / len(hist) if hist else 0.0,
                coefficient_of_variation(m.per_second_rates())))
        for fid in self.ftp_ids:
            m = self.metrics[fid]
            s.flows.append(FlowSummary(
                fid, FTP, True, False, float("nan"), m.mean_delay_us / 1000, m.loss_ratio,
                m.delivered_bits, m.sent, m.delivered, m.dropped, m.residual(), 0.0, 0.0,
                coefficient_of_variation(m.per_second_rates())))
        s.sessions_requested = self.requests
        s.sessions_admitted = len(self.admitted)
        s.sessions_decoded = sum(1 for f in s.video if f.decoded)
        s.utilization = self.link.delivered_bits / (self.capacity * self.end / US_PER_S)
        s.events = self.engine.processed
        s.conservation_violations = self.conservation_violations
        s.max_queue_occupancy = self.link.queue.max_occupancy
        s.queue_capacity = self.link.queue.capacity
        return s

    # -- dumps --------------------------------------------------------------

    def write_event_log(self, path):
        with open(path, "w") as fh:
            self.engine.dump_event_log(fh)

    def write_packet_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "flow", "seq", "event", "queue_occupancy"])
            w.writerows(self.packet_rows or [])

    def write_admission_log(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(adm.AUDIT_HEADER)
            w.writerows(self.audit_rows)

    def write_qp_timeline(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "flow", "old_qp", "new_qp", "trigger"])
            w.writerows(self.qp_log)


def simulate(config, seed, dump_events=False, dump_packets=False):
    """Run one scenario; returns the finished Simulation (summary via ``.summary()``)."""
    sim = Simulation(config, seed, dump_events=dump_events, dump_packets=dump_packets)
    sim.engine.run_until(sim.end)
    return sim
