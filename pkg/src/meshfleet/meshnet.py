"""Mesh network layer: distance-based link quality, airtime path metrics,
on-demand route discovery, per-hop forwarding with retries, and fault
injection (blackouts, node loss).

Every radio node can relay. Link rate steps down with distance and frame
error probability rises with it; past the maximum radio range the link is
down. Route discovery floods path requests that accumulate the loaded
airtime metric and installs next-hop entries guarded by sequence numbers.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .kernel import RngStream, SimKernel

MAX_HOPS = 16


@dataclass
class LinkCurve:
    """Distance -> (rate, frame error) curve; a config, not a constant.

    The error cap is calibrated so that the standard relay geometry
    (130 m + 100 m two-hop versus a 220 m direct link) lands in the
    expected 2-10x goodput band.
    """
    breakpoints_m: tuple = (50.0, 100.0, 150.0, 200.0, 220.0)
    rates_bps: tuple = (54e6, 24e6, 12e6, 6e6, 2e6)
    max_range_m: float = 220.0
    error_exponent: float = 4.0
    error_cap: float = 0.5

    def evaluate(self, distance: float) -> tuple[float, float, bool]:
        """(rate bit/s, frame error prob, up) at a distance in meters."""
        if distance > self.max_range_m:
            return 0.0, 1.0, False
        rate = self.rates_bps[-1]
        for bp, r in zip(self.breakpoints_m, self.rates_bps):
            if distance <= bp:
                rate = r
                break
        e_f = min(self.error_cap, (distance / self.max_range_m) ** self.error_exponent)
        return rate, e_f, True


@dataclass
class NetParams:
    overhead_s: float = 1e-4          # per-frame channel/protocol overhead (O)
    test_frame_bits: int = 8192       # airtime test frame size (B_t)
    ewma_alpha: float = 0.25
    load_weight: float = 1.0          # beta in the loaded metric
    retry_limit: int = 4              # transmission attempts per hop
    route_ttl: float = 30.0
    sample_period: float = 1.0        # link quality / load sampling
    preq_bytes: int = 64
    prep_bytes: int = 64
    gs_link_rate: float = 10e6
    gs_link_delay: float = 1.0        # seconds each way on the ground link


@dataclass
class LinkState:
    a: str
    b: str
    distance: float = 0.0
    rate: float = 0.0
    e_f: float = 1.0
    per_ewma: float = 0.0
    load: float = 0.0
    up: bool = False
    extra_delay: float = 0.0
    wired: bool = False
    busy_until: float = 0.0
    busy_accum: float = 0.0

    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


def airtime(link: LinkState, params: NetParams) -> float:
    """Baseline airtime cost in seconds: (O + B_t/rate) / (1 - e_f)."""
    if not link.up or link.rate <= 0:
        return math.inf
    return (params.overhead_s + params.test_frame_bits / link.rate) / (1.0 - link.e_f)


def airtime_plus(link: LinkState, params: NetParams) -> float:
    """Loaded airtime: smoothed error estimate plus a traffic load factor."""
    if not link.up or link.rate <= 0:
        return math.inf
    base = params.overhead_s + params.test_frame_bits / link.rate
    per = min(link.per_ewma, 0.999999)
    return base / (1.0 - per) * (1.0 + params.load_weight * link.load)


def update_per(link: LinkState, frame_succeeded: bool, alpha: float) -> float:
    link.per_ewma = alpha * (0.0 if frame_succeeded else 1.0) + (1 - alpha) * link.per_ewma
    return link.per_ewma


@dataclass
class RouteEntry:
    next_hop: str
    metric: float
    seqnum: int
    expires_at: float


@dataclass
class Frame:
    src: str
    dst: str
    frame_bytes: int
    payload_share: int = 0            # bytes of user payload inside this frame
    overhead_share: int = 0           # bytes of per-message overhead inside
    category: str = "data"            # data | ack | discovery
    payload: object = None
    on_delivered: Optional[Callable] = None   # fn(frame, latency_s, path)
    on_dropped: Optional[Callable] = None     # fn(frame, reason)
    sent_at: float = 0.0
    hops: int = 0
    path: list = field(default_factory=list)


@dataclass
class ByteAudit:
    """Exact wire accounting; total is the sum of the named buckets."""
    payload: int = 0
    overhead: int = 0
    retransmissions: int = 0
    acks: int = 0
    discovery: int = 0
    routing_control: int = 0
    per_node_tx: dict = field(default_factory=dict)

    def total(self) -> int:
        return (self.payload + self.overhead + self.retransmissions +
                self.acks + self.discovery + self.routing_control)

    def count_tx(self, node: str, nbytes: int) -> None:
        self.per_node_tx[node] = self.per_node_tx.get(node, 0) + nbytes


@dataclass
class Blackout:
    t0: float
    t1: float
    selector: object          # "all", "gs-lander", node name, or (a, b) pair

    def matches(self, link: LinkState) -> bool:
        sel = self.selector
        ends = {link.a, link.b}
        if sel == "all":
            return True
        if sel == "gs-lander":
            return ends == {"ground_station", "lander"}
        if isinstance(sel, str):
            return sel in ends
        return ends == set(sel)


class MeshNode:
    def __init__(self, name: str, pos: tuple[float, float], radio: bool = True):
        self.name = name
        self.pos = pos
        self.radio = radio
        self.powered = True
        self.routes: dict[str, RouteEntry] = {}
        self.preq_seq = 0


class MeshNet:
    """Topology, routing state, and the frame forwarding machinery."""

    def __init__(self, kernel: SimKernel, params: Optional[NetParams] = None,
                 curve: Optional[LinkCurve] = None, rng: Optional[RngStream] = None):
        self.kernel = kernel
        self.params = params or NetParams()
        self.curve = curve or LinkCurve()
        self.rng = rng or kernel.fork_rng("meshnet")
        self.nodes: dict[str, MeshNode] = {}
        self.links: dict[frozenset, LinkState] = {}
        self.blackouts: list[Blackout] = []
        self.audit = ByteAudit()
        self.route_log: list[str] = []
        self.frames_sent = 0
        self.frames_delivered = 0
        self.frames_dropped = 0
        self.frames_in_flight = 0

    # -- topology ------------------------------------------------------------

    def add_node(self, name: str, pos: tuple[float, float], radio: bool = True) -> MeshNode:
        if name in self.nodes:
            raise ValueError(f"duplicate mesh node {name!r}")
        node = MeshNode(name, pos, radio)
        self.nodes[name] = node
        return node

    def add_wired_link(self, a: str, b: str, rate: Optional[float] = None,
                       extra_delay: Optional[float] = None) -> LinkState:
        link = LinkState(a=a, b=b, wired=True,
                         rate=rate if rate is not None else self.params.gs_link_rate,
                         e_f=0.0, up=True,
                         extra_delay=(extra_delay if extra_delay is not None
                                      else self.params.gs_link_delay))
        self.links[link.key()] = link
        return link

    def set_position(self, name: str, pos: tuple[float, float]) -> None:
        self.nodes[name].pos = pos

    def set_node_power(self, name: str, powered: bool) -> None:
        self.nodes[name].powered = powered
        if not powered:
            self.on_node_down(name)

    def sample_topology(self) -> None:
        """Refresh link quality from positions; fold busy time into load."""
        period = self.params.sample_period
        names = [n for n, node in self.nodes.items() if node.radio]
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                key = frozenset((a, b))
                link = self.links.get(key)
                pa, pb = self.nodes[a].pos, self.nodes[b].pos
                d = math.hypot(pa[0] - pb[0], pa[1] - pb[1])
                rate, e_f, up = self.curve.evaluate(d)
                up = up and self.nodes[a].powered and self.nodes[b].powered
                if link is None:
                    if not up:
                        continue
                    link = LinkState(a=a, b=b)
                    self.links[key] = link
                was_up = link.up
                link.distance, link.rate, link.e_f = d, rate, e_f
                link.up = up
                if was_up and not up:
                    self._invalidate_links([link], "link_down")
        for link in self.links.values():
            link.load = min(1.0, link.busy_accum / period)
            link.busy_accum = 0.0

    def link_between(self, a: str, b: str) -> Optional[LinkState]:
        return self.links.get(frozenset((a, b)))

    def link_usable(self, link: LinkState, now: float) -> bool:
        if not link.up:
            return False
        if not (self.nodes[link.a].powered and self.nodes[link.b].powered):
            return False
        return not any(b.t0 <= now < b.t1 and b.matches(link) for b in self.blackouts)

    def neighbors(self, name: str, now: float) -> list[tuple[str, LinkState]]:
        out = []
        for link in self.links.values():
            if name == link.a and self.link_usable(link, now):
                out.append((link.b, link))
            elif name == link.b and self.link_usable(link, now):
                out.append((link.a, link))
        return out

    # -- fault injection -------------------------------------------------------

    def inject_blackout(self, t0: float, t1: float, selector: object) -> None:
        if t1 < t0:
            raise ValueError("blackout window must have t1 >= t0")
        bo = Blackout(t0, t1, selector)
        self.blackouts.append(bo)

        def activate(_):
            affected = [l for l in self.links.values() if bo.matches(l)]
            self._invalidate_links(affected, "blackout")

        if t1 > t0:
            self.kernel.schedule(t0, "meshnet.blackout", activate)

    def on_node_down(self, name: str) -> None:
        """Invalidate every route through or to a dead node."""
        for link in self.links.values():
            if name in (link.a, link.b):
                link.up = False
        for node in self.nodes.values():
            stale = [d for d, e in node.routes.items()
                     if d == name or e.next_hop == name]
            for d in stale:
                del node.routes[d]
                self._log_route(node.name, d, None, math.inf, -1)

    def _invalidate_links(self, links: list[LinkState], reason: str) -> None:
        pairs = {frozenset((l.a, l.b)) for l in links}
        for node in self.nodes.values():
            stale = [d for d, e in node.routes.items()
                     if frozenset((node.name, e.next_hop)) in pairs]
            for d in stale:
                del node.routes[d]
                self._log_route(node.name, d, None, math.inf, -1, note=reason)

    # -- routing ---------------------------------------------------------------

    def route_for(self, node: str, dst: str, now: float) -> Optional[RouteEntry]:
        entry = self.nodes[node].routes.get(dst)
        if entry is None or entry.expires_at < now:
            return None
        return entry

    def path_discovery(self, src: str, dst: str) -> Optional[list[str]]:
        """On-demand discovery: flood a path request, reply along the best path.

        The flood relaxes the loaded-airtime metric until quiescent, which
        converges to the optimum on a static topology. Reverse routes (to
        the requester) land on every flooded node; forward routes (to the
        destination) are installed along the reply path. Entries only
        improve for a fresher sequence number or a better same-seq metric.
        """
        if src == dst:
            raise ValueError("discovery needs distinct endpoints")
        now = self.kernel.now
        origin = self.nodes[src]
        # sequence numbers belong to the route's destination: the request
        # carries the requester's, the reply carries the target's fresh one
        origin.preq_seq += 1
        req_seq = origin.preq_seq

        best: dict[str, float] = {src: 0.0}
        prev: dict[str, str] = {}
        queue = [src]
        while queue:
            n = queue.pop(0)
            # one rebroadcast of the request per queue service
            self.audit.routing_control += self.params.preq_bytes
            self.audit.count_tx(n, self.params.preq_bytes)
            for m, link in self.neighbors(n, now):
                cost = airtime_plus(link, self.params)
                if math.isinf(cost):
                    continue
                cand = best[n] + cost
                if m not in best or cand < best[m] - 1e-15:
                    best[m] = cand
                    prev[m] = n
                    queue.append(m)
            # reverse route back to the requester
            if n != src:
                self._update_route(n, src, prev[n], best[n], req_seq, now)
        if dst not in best:
            return None

        path = [dst]
        while path[-1] != src:
            path.append(prev[path[-1]])
        path.reverse()
        # reply walks dst -> src installing a consistent chain of forward
        # routes, all stamped with the destination's new sequence number
        target = self.nodes[dst]
        target.preq_seq += 1
        rep_seq = target.preq_seq
        for i in range(len(path) - 1):
            node, nxt = path[i], path[i + 1]
            self._update_route(node, dst, nxt, best[dst] - best[node], rep_seq, now)
            self.audit.routing_control += self.params.prep_bytes
            self.audit.count_tx(nxt, self.params.prep_bytes)
        return path

    def _update_route(self, node: str, dst: str, next_hop: str,
                      metric: float, seq: int, now: float) -> None:
        entry = self.nodes[node].routes.get(dst)
        if entry is not None and entry.expires_at >= now:
            if seq < entry.seqnum:
                return
            if seq == entry.seqnum and metric >= entry.metric:
                return
        self.nodes[node].routes[dst] = RouteEntry(next_hop, metric,
                                                  seq, now + self.params.route_ttl)
        self._log_route(node, dst, next_hop, metric, seq)

    def _log_route(self, node: str, dst: str, next_hop: Optional[str],
                   metric: float, seq: int, note: str = "") -> None:
        line = (f"{self.kernel.now:.6f} {node} -> {dst}: "
                f"via={next_hop or '-'} metric={metric:.6g} seq={seq}"
                + (f" [{note}]" if note else ""))
        self.route_log.append(line)

    def check_loop_free(self, dst: str, now: float) -> bool:
        """Audit: the next-hop graph toward dst must be acyclic."""
        for start in self.nodes:
            seen = set()
            n = start
            while n != dst:
                entry = self.route_for(n, dst, now)
                if entry is None:
                    break
                if n in seen:
                    return False
                seen.add(n)
                n = entry.next_hop
        return True

    # -- forwarding ---------------------------------------------------------------

    def send(self, frame: Frame) -> None:
        """Route and transmit a frame; callbacks fire on delivery or drop."""
        if frame.src == frame.dst:
            raise ValueError("mesh frames need distinct endpoints")
        frame.sent_at = self.kernel.now
        frame.path = [frame.src]
        self.frames_sent += 1
        self.frames_in_flight += 1
        if not self._ensure_route(frame.src, frame.dst):
            self._drop(frame, "no_route")
            return
        self._start_hop(frame, frame.src, attempt=1)

    def _ensure_route(self, node: str, dst: str) -> bool:
        if self.route_for(node, dst, self.kernel.now) is not None:
            return True
        return self.path_discovery(node, dst) is not None

    def _start_hop(self, frame: Frame, node: str, attempt: int) -> None:
        now = self.kernel.now
        entry = self.route_for(node, frame.dst, now)
        if entry is None:
            if not self._ensure_route(node, frame.dst):
                self._drop(frame, "route_lost")
                return
            entry = self.route_for(node, frame.dst, now)
        link = self.link_between(node, entry.next_hop)
        if link is None or not self.link_usable(link, now):
            self._invalidate_links([link] if link else [], "link_down")
            if not self._ensure_route(node, frame.dst):
                self._drop(frame, "route_lost")
                return
            self._start_hop(frame, node, attempt)
            return

        ser = self.params.overhead_s + frame.frame_bytes * 8 / link.rate
        start = max(now, link.busy_until)
        link.busy_until = start + ser
        link.busy_accum += ser
        self._count_frame_bytes(frame, node, attempt)

        lost = self.rng.random() < link.e_f
        update_per(link, not lost, self.params.ewma_alpha)
        if lost:
            if attempt < self.params.retry_limit:
                self.kernel.schedule(start + ser, "meshnet.retx",
                                     lambda _: self._start_hop(frame, node, attempt + 1))
            else:
                self._invalidate_links([link], "retry_exhausted")
                self.kernel.schedule(start + ser, "meshnet.drop",
                                     lambda _: self._drop(frame, "retry_exhausted",
                                                          in_flight_adjust=False))
                self.frames_in_flight -= 1
                self.frames_dropped += 1
            return

        arrive_at = start + ser + link.extra_delay
        nxt = entry.next_hop
        self.kernel.schedule(arrive_at, "meshnet.arrive",
                             lambda _: self._arrive(frame, nxt))

    def _arrive(self, frame: Frame, node: str) -> None:
        frame.hops += 1
        frame.path.append(node)
        if node == frame.dst:
            self.frames_in_flight -= 1
            self.frames_delivered += 1
            if frame.on_delivered:
                frame.on_delivered(frame, self.kernel.now - frame.sent_at, frame.path)
            return
        if frame.hops >= MAX_HOPS:
            self._drop(frame, "hop_limit")
            return
        self._start_hop(frame, node, attempt=1)

    def _drop(self, frame: Frame, reason: str, in_flight_adjust: bool = True) -> None:
        if in_flight_adjust:
            self.frames_in_flight -= 1
            self.frames_dropped += 1
        if frame.on_dropped:
            frame.on_dropped(frame, reason)

    def _count_frame_bytes(self, frame: Frame, node: str, attempt: int) -> None:
        self.audit.count_tx(node, frame.frame_bytes)
        if attempt > 1 or frame.category == "retx":
            self.audit.retransmissions += frame.frame_bytes
        elif frame.category == "ack":
            self.audit.acks += frame.frame_bytes
        elif frame.category == "discovery":
            self.audit.discovery += frame.frame_bytes
        else:
            self.audit.payload += frame.payload_share
            self.audit.overhead += frame.overhead_share
            extra = frame.frame_bytes - frame.payload_share - frame.overhead_share
            if extra > 0:
                self.audit.overhead += extra


def measure_goodput(net: MeshNet, src: str, dst: str, duration: float,
                    frame_bytes: int = 1500) -> float:
    """Delivered payload bit rate over a window, stop-and-wait saturation.

    Sends one frame at a time; the next departs when the previous one is
    delivered or dropped. Returns delivered payload bits per second.
    """
    kernel = net.kernel
    t_end = kernel.now + duration
    delivered_bits = 0

    def send_next():
        if kernel.now >= t_end:
            return
        frame = Frame(src=src, dst=dst, frame_bytes=frame_bytes,
                      payload_share=frame_bytes,
                      on_delivered=on_delivered, on_dropped=on_dropped)
        net.send(frame)

    def on_delivered(frame, latency, path):
        nonlocal delivered_bits
        if kernel.now <= t_end:
            delivered_bits += frame.payload_share * 8
        send_next()

    def on_dropped(frame, reason):
        if reason == "no_route":
            return
        send_next()

    send_next()
    kernel.run_until(t_end)
    return delivered_bits / duration
