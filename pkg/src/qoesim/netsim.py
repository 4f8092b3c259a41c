"""Data plane: one droptail bottleneck with threshold ECN marking, video
transport with interval feedback, and AIMD bulk-transfer sources.

Topology is a dumbbell: every source reaches the gateway over an
uncongested access hop, all forward traffic shares the bottleneck link, and
the reverse path (acks and feedback) is uncongested with the same
propagation delay.
"""

from collections import deque

from .core import US_PER_S, EventKind, SimulationError
from .ratecontrol import LeakyBucket, bucket_for, on_feedback, on_gop_boundary
from .traces import HEADER_BYTES, frame_at, packetize

VIDEO, FTP = "video", "ftp"

MIN_FEEDBACK_US = 100_000


class Packet:
    __slots__ = ("flow", "seq", "size", "kind", "frame", "sent_at", "ecn")

    def __init__(self, flow, seq, size, kind, frame=None, sent_at=0):
        self.flow = flow
        self.seq = seq
        self.size = size
        self.kind = kind
        self.frame = frame
        self.sent_at = sent_at
        self.ecn = False


class DroptailQueue:
    """FIFO with a hard packet limit; marks arrivals above a fill threshold.

    The packet being serialized counts toward occupancy until it departs.
    """

    def __init__(self, capacity, ecn_threshold=0.8):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        if not 0 < ecn_threshold <= 1:
            raise ValueError("ecn_threshold must lie in (0, 1]")
        self.capacity = capacity
        self.ecn_threshold = ecn_threshold
        self._mark_above = ecn_threshold * capacity
        self.packets = deque()
        self.drops = 0
        self.marks = 0
        self.max_occupancy = 0

    def __len__(self):
        return len(self.packets)

    def enqueue(self, pkt):
        """Append ``pkt``; returns False (and counts a drop) when full."""
        q = self.packets
        if len(q) >= self.capacity:
            self.drops += 1
            return False
        q.append(pkt)
        occ = len(q)
        if occ > self._mark_above:
            pkt.ecn = True
            self.marks += 1
        if occ > self.max_occupancy:
            self.max_occupancy = occ
        return True


class BottleneckLink:
    def __init__(self, engine, capacity_bps, prop_delay_us, queue, tracer=None):
        if capacity_bps <= 0:
            raise ValueError("link capacity must be positive")
        self.engine = engine
        self.capacity = int(capacity_bps)
        self.prop_delay = prop_delay_us
        self.queue = queue
        self.busy = False
        self.busy_until = 0
        self._carry = 0  # sub-microsecond remainder of serialization times
        self.delivered_bits = 0
        self.departures = 0
        self.endpoints = {}  # flow id -> endpoint with on_drop/on_deliver
        self.metrics = {}
        self.tracer = tracer

    def attach(self, flow_id, endpoint, metrics):
        self.endpoints[flow_id] = endpoint
        self.metrics[flow_id] = metrics

    def serialization(self, size):
        num = size * 8 * US_PER_S + self._carry
        us, self._carry = divmod(num, self.capacity)
        return us

    def arrive(self, pkt):
        """A packet reaches the gateway (PacketArrival handler)."""
        now = self.engine.now
        m = self.metrics[pkt.flow]
        m.on_send(now, pkt.size)
        pkt.sent_at = now
        ep = self.endpoints[pkt.flow]
        if hasattr(ep, "on_gateway"):
            ep.on_gateway(now, pkt)
        tr = self.tracer
        if tr:
            tr(now, pkt.flow, pkt.seq, "send", len(self.queue))
        if not self.queue.enqueue(pkt):
            m.on_drop(pkt.frame)
            if tr:
                tr(now, pkt.flow, pkt.seq, "drop", len(self.queue))
            ep.on_drop(pkt)
            return
        if tr:
            tr(now, pkt.flow, pkt.seq, "enq", len(self.queue))
            if pkt.ecn:
                tr(now, pkt.flow, pkt.seq, "mark", len(self.queue))
        if not self.busy:
            self._start()

    def _start(self):
        head = self.queue.packets[0]
        self.busy = True
        self.busy_until = self.engine.now + self.serialization(head.size)
        self.engine.at(self.busy_until, EventKind.PacketDeparture, "link", self._depart)

    def _depart(self):
        pkt = self.queue.packets.popleft()
        self.delivered_bits += pkt.size * 8
        self.departures += 1
        self.metrics[pkt.flow].on_depart()
        if self.tracer:
            self.tracer(self.engine.now, pkt.flow, pkt.seq, "deq", len(self.queue))
        self.engine.after(self.prop_delay, EventKind.PacketArrival, pkt.flow,
                          self._deliver, pkt)
        if self.queue.packets:
            self._start()
        else:
            self.busy = False

    def _deliver(self, pkt):
        now = self.engine.now
        self.metrics[pkt.flow].on_deliver(pkt.size, now - pkt.sent_at, pkt.frame)
        if self.tracer:
            self.tracer(now, pkt.flow, pkt.seq, "recv", len(self.queue))
        self.endpoints[pkt.flow].on_deliver(pkt)

    def occupancy_by_flow(self):
        counts = {}
        for p in self.queue.packets:
            counts[p.flow] = counts.get(p.flow, 0) + 1
        return counts


class FtpSource:
    """Greedy bulk transfer with Reno-style AIMD, acked per packet.

    Drops are reported back by the gateway one base RTT after they happen.
    The window is halved at most once per window of data.
    """

    def __init__(self, engine, link, flow_id, metrics, packet_size, access_delay_us,
                 reverse_delay_us, rwnd=64, initial_cwnd=1.0, ecn=False):
        self.engine = engine
        self.link = link
        self.flow_id = flow_id
        self.metrics = metrics
        self.packet_size = packet_size
        self.access_delay = access_delay_us
        self.reverse_delay = reverse_delay_us
        self.rwnd = rwnd
        self.ecn = ecn
        self.cwnd = float(initial_cwnd)
        self.ssthresh = float(rwnd)
        self.in_flight = 0
        self.state = "slow_start"
        self.seq = 0
        self.last_cut = -1
        self.active = False
        link.attach(flow_id, self, metrics)

    def start(self):
        self.active = True
        self._pump()

    def stop(self):
        self.active = False

    @property
    def window(self):
        return max(1, min(int(self.cwnd), self.rwnd))

    def _pump(self):
        while self.active and self.in_flight < self.window:
            pkt = Packet(self.flow_id, self.seq, self.packet_size, FTP)
            self.seq += 1
            self.in_flight += 1
            self.engine.after(self.access_delay, EventKind.PacketArrival, self.flow_id,
                              self.link.arrive, pkt)

    def on_ack(self, marked=False, sent_at=None):
        if marked and self.ecn and sent_at > self.last_cut:
            # ECN echo: same window cut as a loss, but nothing was lost
            self.in_flight -= 1
            self._cut()
            self._pump()
            return
        self.in_flight -= 1
        if self.state == "slow_start":
            self.cwnd += 1
            if self.cwnd >= self.ssthresh:
                self.state = "congestion_avoidance"
        else:
            self.cwnd += 1 / self.cwnd
        self.cwnd = min(self.cwnd, float(self.rwnd))
        self._pump()

    def on_loss(self, sent_at=None):
        self.in_flight -= 1
        if sent_at is None or sent_at > self.last_cut:
            self._cut()
        self._pump()

    def _cut(self):
        self.ssthresh = max(self.cwnd / 2, 2.0)
        self.cwnd = self.ssthresh
        self.state = "congestion_avoidance"
        self.last_cut = self.engine.now

    # link endpoint interface
    def on_deliver(self, pkt):
        self.engine.after(self.reverse_delay, EventKind.PacketArrival, self.flow_id, self.on_ack,
                          pkt.ecn, pkt.sent_at)

    def on_drop(self, pkt):
        base_rtt = self.access_delay + self.link.prop_delay + self.reverse_delay
        self.engine.after(base_rtt, EventKind.FeedbackReport, self.flow_id,
                          self.on_loss, pkt.sent_at)


class FeedbackReport:
    __slots__ = ("ecn_seen", "loss_events", "rtt_sample")

    def __init__(self, ecn_seen, loss_events, rtt_sample):
        self.ecn_seen = ecn_seen
        self.loss_events = loss_events
        self.rtt_sample = rtt_sample

    def __repr__(self):
        return f"FeedbackReport(ecn={self.ecn_seen}, loss={self.loss_events}, rtt={self.rtt_sample})"


class VideoSink:
    """Receiver side of one video flow: ECN and gap tracking per feedback interval."""

    def __init__(self, engine, flow_id, reverse_delay_us, deliver_report, min_interval_us=MIN_FEEDBACK_US):
        self.engine = engine
        self.flow_id = flow_id
        self.reverse_delay = reverse_delay_us
        self.deliver_report = deliver_report
        self.min_interval = min_interval_us
        self.expected_seq = 0
        self.ecn_seen = False
        self.losses = 0
        self.srtt = None
        self.rtt_sample = None
        self.active = False
        self.reports = []

    def start(self):
        self.active = True
        self._arm()

    def stop(self):
        self.active = False

    def interval(self):
        if self.srtt is None:
            return self.min_interval
        return max(int(self.srtt), self.min_interval)

    def _arm(self):
        self.engine.after(self.interval(), EventKind.FeedbackReport, self.flow_id, self._emit)

    def receive(self, pkt):
        now = self.engine.now
        if pkt.seq > self.expected_seq:
            self.losses += pkt.seq - self.expected_seq
        self.expected_seq = pkt.seq + 1
        if pkt.ecn:
            self.ecn_seen = True
        rtt = now - pkt.sent_at + self.reverse_delay
        self.rtt_sample = rtt
        self.srtt = rtt if self.srtt is None else 0.875 * self.srtt + 0.125 * rtt

    def _emit(self):
        if not self.active:
            return
        rep = FeedbackReport(self.ecn_seen, self.losses, self.rtt_sample)
        self.reports.append((self.engine.now, rep))
        self.ecn_seen = False
        self.losses = 0
        self.engine.after(self.reverse_delay, EventKind.FeedbackReport, self.flow_id,
                          self.deliver_report, rep)
        self._arm()


class VideoSource:
    """Streams a looping VBR trace GoP by GoP through a leaky-bucket shaper."""

    def __init__(self, engine, link, flow_id, ladder, controller, metrics,
                 packet_size, access_delay_us, reverse_delay_us, end_us,
                 bucket_tolerance=1.2, on_gateway=None, qp_log=None):
        self.engine = engine
        self.link = link
        self.flow_id = flow_id
        self.ladder = ladder
        self.controller = controller
        self.metrics = metrics
        self.packet_size = packet_size
        self.access_delay = access_delay_us
        self.end = end_us
        self.tolerance = bucket_tolerance
        self.gateway_hook = on_gateway
        self.qp_log = qp_log
        self.sink = VideoSink(engine, flow_id, reverse_delay_us, self.on_feedback)
        self.seq = 0
        self.start_time = None
        self.gop_index = 0
        self.bucket = None
        self.qp_history = []
        p = ladder.content
        self.fps = p.frame_rate
        self.gop_length = p.gop_length
        link.attach(flow_id, self, metrics)

    def start(self):
        now = self.engine.now
        self.start_time = now
        self.bucket = LeakyBucket(*bucket_for(self.ladder[self.controller.current_qp], self.tolerance))
        self.bucket.last_update = self.bucket.last_release = now
        self.sink.start()
        self._gop()

    def frame_time(self, k):
        # rounded up so that frame_at() maps the time back to frame k
        return self.start_time - (-k * US_PER_S // self.fps)

    def _gop(self):
        """GopBoundary handler: pick the rung, then lay out the GoP's packets."""
        c = self.controller
        old = c.current_qp
        qp = on_gop_boundary(c)
        if self.qp_log is not None and qp != old:
            self.qp_log.append((self.engine.now, self.flow_id, old, qp, "gop_apply"))
        trace = self.ladder[qp]
        self.qp_history.append(qp)
        if qp != old:
            self.bucket.configure(*bucket_for(trace, self.tolerance))
        m = self.metrics
        gid = m.new_gop(qp, trace.mean_rate)
        first = self.gop_index * self.gop_length
        for k in range(first, first + self.gop_length):
            t = self.frame_time(k)
            if t >= self.end:
                break
            _, _, size = frame_at(trace, t - self.start_time)
            pkts = packetize(size, self.packet_size, HEADER_BYTES)
            fid = m.new_frame(gid, len(pkts))
            for wire, _payload in pkts:
                release = self.bucket.shape(wire * 8, t)
                pkt = Packet(self.flow_id, self.seq, wire, VIDEO, fid)
                self.seq += 1
                self.engine.at(release + self.access_delay, EventKind.PacketArrival,
                               self.flow_id, self.link.arrive, pkt)
        self.gop_index += 1
        nxt = self.frame_time(self.gop_index * self.gop_length)
        if nxt < self.end:
            self.engine.at(nxt, EventKind.GopBoundary, self.flow_id, self._gop)

    def on_feedback(self, report):
        c = self.controller
        old = c.current_qp
        trig = on_feedback(c, report.ecn_seen, report.loss_events)
        if trig and self.qp_log is not None:
            self.qp_log.append((self.engine.now, self.flow_id, old, c.pending_qp, trig))

    # link endpoint interface
    def on_gateway(self, now, pkt):
        if self.gateway_hook is not None:
            self.gateway_hook(now, pkt)

    def on_deliver(self, pkt):
        self.sink.receive(pkt)

    def on_drop(self, pkt):
        pass


def check_conservation(link, metrics):
    """Per-flow sent == delivered + dropped + queued + in propagation.  Returns violating flows."""
    queued = link.occupancy_by_flow()
    bad = []
    for fid, m in metrics.items():
        if m.sent != m.delivered + m.dropped + queued.get(fid, 0) + m.in_flight:
            bad.append(fid)
    if len(link.queue) > link.queue.capacity:
        raise SimulationError("queue occupancy exceeds capacity")
    return bad
