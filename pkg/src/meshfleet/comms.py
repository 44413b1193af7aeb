"""Topic pub-sub over the mesh: namespaces, QoS, discovery announcements,
per-message overhead accounting, and the lander gateway.

Every publication is unicast per matching subscriber node as an envelope:
payload plus fixed per-message overhead, fragmented to the MTU. Reliable
envelopes get per-fragment acks with bounded retransmission; best-effort
ones are fire-and-forget. Traffic crossing the ground link is relayed
through the lander gateway, which takes custody and buffers while that
link is down.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .kernel import SimKernel
from .meshnet import Frame, MeshNet

RELIABLE = "reliable"
BEST_EFFORT = "best_effort"

GROUND_STATION = "ground_station"
LANDER = "lander"


@dataclass
class CommsParams:
    overhead_bytes: int = 64          # per-message QoS/discovery overhead
    mtu_bytes: int = 1500
    ack_bytes: int = 64
    ack_timeout: float = 3.0
    retransmit_limit: int = 4         # leg-level attempts per fragment
    discovery_period: float = 2.0
    discovery_expiry_periods: int = 3
    announcement_bytes: int = 96
    source_buffer_depth: int = 16     # reliable envelopes held per topic at source
    gateway_capacity_bytes: int = 16_000_000


@dataclass
class Envelope:
    topic: str
    namespace: str
    payload_bytes: int
    qos: str
    seq: int
    publisher: str
    final_dst: str
    payload: object = None
    sent_at: float = 0.0
    delivered_at: Optional[float] = None
    env_id: int = 0
    path: list = field(default_factory=list)


@dataclass
class Subscription:
    sub_id: int
    node: str
    pattern: str
    callback: Optional[Callable] = None


def topic_matches(pattern: str, topic: str) -> bool:
    """Exact match or '*/<name>' across namespaces."""
    if pattern == topic:
        return True
    if pattern.startswith("*/"):
        _, _, name = topic.partition("/")
        return name == pattern[2:]
    return False


def split_topic(topic: str) -> tuple[str, str]:
    ns, sep, name = topic.partition("/")
    if not sep or not ns or not name:
        raise ValueError(f"topic {topic!r} must look like '<namespace>/<name>'")
    return ns, name


class _NodeState:
    def __init__(self, name: str, powered_fn: Optional[Callable[[], bool]]):
        self.name = name
        self.powered_fn = powered_fn or (lambda: True)
        self.pub_seq: dict[str, int] = {}
        self.subscriptions: dict[str, Subscription] = {}   # pattern -> sub
        self.namespace_table: dict[str, float] = {}        # namespace -> last_seen
        self.remote_subs: dict[str, list[str]] = {}        # node -> patterns
        self.remote_topics: dict[str, list[str]] = {}      # node -> advertised topics
        # delivery dedup state per (publisher, topic): best-effort streams
        # release strictly increasing; reliable streams release anything
        # not yet seen (floor + sparse set, compacted as gaps fill)
        self.next_release: dict[tuple, int] = {}
        self.released_floor: dict[tuple, int] = {}
        self.released_set: dict[tuple, set] = {}
        self.bytes_in_by_topic: dict[str, int] = {}
        self.bytes_out_by_topic: dict[str, int] = {}

    def powered(self) -> bool:
        return bool(self.powered_fn())


class _LegTransfer:
    """One envelope crossing one mesh leg, fragment bookkeeping included."""

    def __init__(self, env: Envelope, src: str, dst: str, n_frags: int):
        self.env = env
        self.src = src
        self.dst = dst
        self.n_frags = n_frags
        self.acked: set[int] = set()
        self.attempts: dict[int, int] = {}
        self.failed = False


class Comms:
    """Network-wide pub-sub state; all mutation happens in kernel events."""

    def __init__(self, kernel: SimKernel, mesh: MeshNet,
                 params: Optional[CommsParams] = None):
        self.kernel = kernel
        self.mesh = mesh
        self.params = params or CommsParams()
        self.nodes: dict[str, _NodeState] = {}
        self.events: list[tuple[float, str, str]] = []
        self.gateway_queue: deque[Envelope] = deque()
        self.gateway_queued_bytes = 0
        self.gateway_drops_best_effort = 0
        self.gateway_drops_reliable = 0
        # reliable envelopes parked at their source while no route exists
        self.source_buffers: dict[tuple, deque] = {}
        self._env_counter = 0
        self._sub_counter = 0
        self._transfers: dict[tuple, _LegTransfer] = {}
        self._reassembly: dict[tuple, set] = {}
        self.record_deliveries = False
        self.delivered_log: list[Envelope] = []
        self.delivered_count = 0
        self.latency_sum = 0.0
        self.latency_max = 0.0
        # gateway proxying: host node announces these attached nodes so
        # their presence survives outages of their own announcements
        self.proxies: dict[str, list[str]] = {}

    def set_gateway_proxy(self, host: str, attached: str) -> None:
        self.proxies.setdefault(host, []).append(attached)

    # -- membership ------------------------------------------------------------

    def add_node(self, name: str, powered_fn: Optional[Callable[[], bool]] = None) -> None:
        if name in self.nodes:
            raise ValueError(f"duplicate comms node {name!r}")
        self.nodes[name] = _NodeState(name, powered_fn)

    def _event(self, kind: str, detail: str) -> None:
        self.events.append((self.kernel.now, kind, detail))

    # -- subscriptions -----------------------------------------------------------

    def subscribe(self, node: str, pattern: str,
                  callback: Optional[Callable] = None) -> int:
        state = self.nodes[node]
        if not state.powered():
            raise ValueError(f"{node} is not powered; cannot subscribe")
        existing = state.subscriptions.get(pattern)
        if existing is not None:
            if callback is not None:
                existing.callback = callback
            return existing.sub_id
        self._sub_counter += 1
        state.subscriptions[pattern] = Subscription(self._sub_counter, node,
                                                    pattern, callback)
        return self._sub_counter

    def _subscriber_nodes(self, publisher: str, topic: str) -> list[str]:
        """Nodes (other than the publisher) known to want this topic.

        A node whose discovery announcements have expired is treated as
        gone; publishing to it would only burn retries on a dead link.
        """
        state = self.nodes[publisher]
        live = self.live_namespaces(publisher)
        out = []
        for node, patterns in sorted(state.remote_subs.items()):
            if node == publisher or node not in live:
                continue
            if any(topic_matches(p, topic) for p in patterns):
                out.append(node)
        return out

    # -- publish path ---------------------------------------------------------------

    def publish(self, node: str, topic: str, payload_bytes: int,
                qos: str = BEST_EFFORT, payload: object = None) -> Optional[Envelope]:
        """Publish once; unicast copies go to every known remote subscriber."""
        state = self.nodes[node]
        if not state.powered():
            return None
        split_topic(topic)
        seq = state.pub_seq.get(topic, 0) + 1
        state.pub_seq[topic] = seq
        ns = topic.partition("/")[0]
        state.bytes_out_by_topic[topic] = (state.bytes_out_by_topic.get(topic, 0)
                                           + payload_bytes + self.params.overhead_bytes)
        template = Envelope(topic=topic, namespace=ns, payload_bytes=payload_bytes,
                            qos=qos, seq=seq, publisher=node, final_dst="",
                            payload=payload, sent_at=self.kernel.now)

        # local subscribers get the message without touching the wire
        if any(topic_matches(p, topic) for p in self.nodes[node].subscriptions):
            local = Envelope(**{**template.__dict__, "final_dst": node})
            local.path = [node]
            self._deliver(local)

        for dst in self._subscriber_nodes(node, topic):
            self._env_counter += 1
            env = Envelope(**{**template.__dict__, "final_dst": dst})
            env.env_id = self._env_counter
            env.path = [node]
            self._route(env, node)
        return template

    def _route(self, env: Envelope, at_node: str) -> None:
        """Decide the next leg for an envelope sitting at a node."""
        if env.final_dst == at_node:
            self._deliver(env)
            return
        if env.final_dst == GROUND_STATION and at_node not in (LANDER, GROUND_STATION):
            # ground-bound traffic goes through the gateway
            self._leg_send(env, at_node, LANDER)
        elif at_node == LANDER and env.final_dst == GROUND_STATION:
            self._gateway_enqueue(env)
        else:
            self._leg_send(env, at_node, env.final_dst)

    # -- gateway (store-and-forward) ----------------------------------------------

    def _gs_link_usable(self) -> bool:
        link = self.mesh.link_between(LANDER, GROUND_STATION)
        return link is not None and self.mesh.link_usable(link, self.kernel.now)

    def _gateway_enqueue(self, env: Envelope, front: bool = False) -> None:
        if self._gs_link_usable() and not self.gateway_queue and not front:
            self._leg_send(env, LANDER, GROUND_STATION)
            return
        size = env.payload_bytes + self.params.overhead_bytes
        while (self.gateway_queued_bytes + size > self.params.gateway_capacity_bytes
               and self.gateway_queue):
            victim = self._pop_oldest_best_effort()
            if victim is None:
                self.gateway_drops_reliable += 1
                self._event("gateway_overflow",
                            f"reliable envelope dropped: {env.topic} seq={env.seq}")
                return
            self.gateway_drops_best_effort += 1
        if front:
            self.gateway_queue.appendleft(env)
        else:
            self.gateway_queue.append(env)
        self.gateway_queued_bytes += size

    def _pop_oldest_best_effort(self) -> Optional[Envelope]:
        for i, env in enumerate(self.gateway_queue):
            if env.qos == BEST_EFFORT:
                del self.gateway_queue[i]
                self.gateway_queued_bytes -= env.payload_bytes + self.params.overhead_bytes
                return env
        return None

    def gateway_tick(self) -> None:
        """Flush the gateway buffer while the ground link is up (FIFO),
        and retry source-parked reliable envelopes."""
        while self.gateway_queue and self._gs_link_usable():
            env = self.gateway_queue.popleft()
            self.gateway_queued_bytes -= env.payload_bytes + self.params.overhead_bytes
            self._leg_send(env, LANDER, GROUND_STATION)
        now = self.kernel.now
        for key in list(self.source_buffers):
            queue = self.source_buffers[key]
            src = key[0]
            while queue:
                env, dst = queue[0]
                if self.mesh.route_for(src, dst, now) is None and \
                        self.mesh.path_discovery(src, dst) is None:
                    break
                queue.popleft()
                self._leg_send(env, src, dst)
            if not queue:
                del self.source_buffers[key]

    def _source_park(self, transfer: _LegTransfer) -> None:
        env = transfer.env
        key = (transfer.src, env.topic)
        queue = self.source_buffers.setdefault(key, deque())
        if len(queue) >= self.params.source_buffer_depth:
            victim, _ = queue.popleft()
            self._event("source_buffer_overflow",
                        f"{victim.topic} seq={victim.seq} dropped at {transfer.src}")
        queue.append((env, transfer.dst))

    # -- leg transfer (fragmentation, acks, retransmission) --------------------------

    def _fragment_sizes(self, env: Envelope) -> list[tuple[int, int, int]]:
        """(frame_bytes, payload_share, overhead_share) per fragment."""
        total_payload = env.payload_bytes
        total_overhead = self.params.overhead_bytes
        mtu = self.params.mtu_bytes
        out = []
        remaining_p, remaining_o = total_payload, total_overhead
        while remaining_p + remaining_o > 0:
            o = min(remaining_o, mtu)
            p = min(remaining_p, mtu - o)
            out.append((o + p, p, o))
            remaining_o -= o
            remaining_p -= p
        return out or [(0, 0, 0)]

    def _leg_send(self, env: Envelope, src: str, dst: str) -> None:
        frags = self._fragment_sizes(env)
        key = (env.env_id, src, dst)
        transfer = _LegTransfer(env, src, dst, len(frags))
        self._transfers[key] = transfer
        for idx, sizes in enumerate(frags):
            self._send_fragment(transfer, idx, sizes, retx=False)

    def _send_fragment(self, transfer: _LegTransfer, idx: int,
                       sizes: tuple[int, int, int], retx: bool) -> None:
        if transfer.failed or idx in transfer.acked:
            return
        env = transfer.env
        attempts = transfer.attempts.get(idx, 0) + 1
        transfer.attempts[idx] = attempts
        frame_bytes, p_share, o_share = sizes
        frame = Frame(
            src=transfer.src, dst=transfer.dst,
            frame_bytes=max(frame_bytes, 1),
            payload_share=0 if retx else p_share,
            overhead_share=0 if retx else o_share,
            category="retx" if retx else "data",
            payload=(env.env_id, idx, transfer.n_frags),
            on_delivered=lambda fr, lat, path: self._fragment_arrived(
                transfer, idx, sizes, path),
            on_dropped=lambda fr, reason: self._fragment_lost(
                transfer, idx, sizes, reason),
        )
        self.mesh.send(frame)
        if env.qos == RELIABLE:
            self.kernel.schedule_in(self.params.ack_timeout, "comms.ack_timeout",
                                    lambda _: self._ack_timeout(transfer, idx, sizes))

    def _fragment_arrived(self, transfer: _LegTransfer, idx: int,
                          sizes: tuple[int, int, int], path: list) -> None:
        env = transfer.env
        if env.qos == RELIABLE:
            ack = Frame(src=transfer.dst, dst=transfer.src,
                        frame_bytes=self.params.ack_bytes, category="ack",
                        payload=("ack", env.env_id, idx),
                        on_delivered=lambda fr, lat, p: self._ack_arrived(transfer, idx),
                        on_dropped=lambda fr, reason: None)
            self.mesh.send(ack)
        rkey = (env.env_id, transfer.dst)
        got = self._reassembly.setdefault(rkey, set())
        if idx in got:
            return
        got.add(idx)
        if len(got) == transfer.n_frags:
            del self._reassembly[rkey]
            env.path = env.path + path[1:]
            self._route(env, transfer.dst)

    def _fragment_lost(self, transfer: _LegTransfer, idx: int,
                       sizes: tuple[int, int, int], reason: str) -> None:
        env = transfer.env
        if env.qos != RELIABLE:
            return  # best effort: the loss is the contract
        if reason in ("no_route", "route_lost") and not transfer.failed:
            # no point burning the retry budget against a missing route:
            # park the envelope at its source until connectivity returns
            transfer.failed = True
            self._source_park(transfer)
            return
        self._retry_or_fail(transfer, idx, sizes)

    def _ack_arrived(self, transfer: _LegTransfer, idx: int) -> None:
        transfer.acked.add(idx)

    def _ack_timeout(self, transfer: _LegTransfer, idx: int,
                     sizes: tuple[int, int, int]) -> None:
        if transfer.failed or idx in transfer.acked:
            return
        self._retry_or_fail(transfer, idx, sizes)

    def _retry_or_fail(self, transfer: _LegTransfer, idx: int,
                       sizes: tuple[int, int, int]) -> None:
        if transfer.failed or idx in transfer.acked:
            return
        if transfer.attempts.get(idx, 0) >= self.params.retransmit_limit:
            transfer.failed = True
            env = transfer.env
            if transfer.src == LANDER and env.final_dst == GROUND_STATION:
                # gateway keeps custody instead of surfacing a failure
                self._gateway_enqueue(env, front=True)
                return
            self._event("delivery_failure",
                        f"{env.topic} seq={env.seq} to {env.final_dst}: "
                        f"fragment {idx} exhausted retries")
            return
        self._send_fragment(transfer, idx, sizes, retx=True)

    # -- delivery ---------------------------------------------------------------------

    def _deliver(self, env: Envelope) -> None:
        state = self.nodes[env.final_dst]
        if not state.powered():
            return
        stream = (env.publisher, env.topic)
        if env.qos == RELIABLE:
            floor = state.released_floor.get(stream, 0)
            seen = state.released_set.setdefault(stream, set())
            if env.seq <= floor or env.seq in seen:
                return  # duplicate
            seen.add(env.seq)
            while floor + 1 in seen:
                floor += 1
                seen.discard(floor)
            state.released_floor[stream] = floor
            self._release(state, stream, env)
        else:
            nxt = state.next_release.get(stream)
            if nxt is not None and env.seq < nxt:
                return  # never reorder a best-effort stream
            self._release(state, stream, env)
            state.next_release[stream] = env.seq + 1

    def _release(self, state: _NodeState, stream: tuple, env: Envelope) -> None:
        env.delivered_at = self.kernel.now
        state.bytes_in_by_topic[env.topic] = (
            state.bytes_in_by_topic.get(env.topic, 0)
            + env.payload_bytes + self.params.overhead_bytes)
        latency = env.delivered_at - env.sent_at
        self.delivered_count += 1
        self.latency_sum += latency
        self.latency_max = max(self.latency_max, latency)
        if self.record_deliveries:
            self.delivered_log.append(env)
        for sub in state.subscriptions.values():
            if topic_matches(sub.pattern, env.topic) and sub.callback:
                sub.callback(env)

    # -- discovery ----------------------------------------------------------------------

    def discovery_tick(self, node: str) -> None:
        """Flood one announcement; receivers refresh their namespace tables."""
        state = self.nodes[node]
        if not state.powered():
            return
        now = self.kernel.now
        entries = [{"node": node,
                    "topics": sorted(state.pub_seq.keys()),
                    "subscribed": sorted(state.subscriptions.keys())}]
        for attached in self.proxies.get(node, []):
            astate = self.nodes.get(attached)
            if astate is not None and astate.powered():
                entries.append({"node": attached,
                                "topics": sorted(astate.pub_seq.keys()),
                                "subscribed": sorted(astate.subscriptions.keys())})
        ann = {"node": node, "entries": entries}
        # breadth-first flood over usable links; every reached node
        # rebroadcasts once
        reached = {node}
        frontier = [node]
        while frontier:
            nxt = []
            for n in frontier:
                self.mesh.audit.discovery += self.params.announcement_bytes
                self.mesh.audit.count_tx(n, self.params.announcement_bytes)
                for m, _link in self.mesh.neighbors(n, now):
                    if m in reached or m not in self.nodes:
                        continue
                    reached.add(m)
                    nxt.append(m)
                    self._receive_announcement(m, ann, now)
            frontier = nxt

    def _receive_announcement(self, node: str, ann: dict, now: float) -> None:
        state = self.nodes[node]
        if not state.powered():
            return
        for entry in ann["entries"]:
            state.namespace_table[entry["node"]] = now
            state.remote_subs[entry["node"]] = list(entry["subscribed"])
            state.remote_topics[entry["node"]] = list(entry["topics"])

    def live_namespaces(self, node: str) -> dict[str, float]:
        """Namespace -> last_seen, restricted to unexpired entries."""
        state = self.nodes[node]
        horizon = (self.params.discovery_period
                   * self.params.discovery_expiry_periods)
        now = self.kernel.now
        return {ns: t for ns, t in state.namespace_table.items()
                if now - t <= horizon}

    def start_discovery(self, stagger: float = 0.0) -> None:
        for i, node in enumerate(self.nodes):
            start = self.kernel.now + stagger * i

            def tick(n=node):
                self.discovery_tick(n)

            self.kernel.every(self.params.discovery_period,
                              f"comms.discovery.{node}", tick, start=start)
