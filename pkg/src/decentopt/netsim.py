"""Synchronous message-passing execution of EXTRA and DGD.

Each :class:`AgentNode` owns one row of the stack, its local objective and
the weights ``w_ij``, ``wt_ij`` for ``j`` in its closed neighborhood.  A round
is: every agent sends its current row to each neighbor, the network delivers
all messages (barrier), then every agent updates from its own state and its
inbox.  Neighborhood sums run in ascending sender id, the same order as
:func:`decentopt.solvers.mix`, so iterates equal the matrix form exactly.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .solvers import DivergenceError, StepSchedule, schedule_alpha


class ProtocolViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class RoundMessage:
    round: int
    sender: int
    receiver: int
    payload: np.ndarray


class AgentNode:
    def __init__(self, agent_id, neighbors, w_row, wt_row, objective):
        self.id = agent_id
        self.neighbors = tuple(sorted(neighbors))
        self.closed = tuple(sorted(self.neighbors + (agent_id,)))
        allowed = set(self.closed)
        for j, v in enumerate(w_row):
            if j not in allowed and (v != 0.0 or wt_row[j] != 0.0):
                raise ProtocolViolation(f"agent {agent_id} given a weight for non-neighbor {j}")
        self.w = {j: float(w_row[j]) for j in self.closed}
        self.wt = {j: float(wt_row[j]) for j in self.closed}
        self.objective = objective
        self.x_prev = None
        self.x_curr = None
        self.grad_prev = None
        self.inbox = {}
        self.prev_inbox = {}
        self.reads = set()
        self.history = []

    def reset(self, x0_row):
        self.x_curr = np.array(x0_row, dtype=np.float64)
        self.x_prev = None
        self.grad_prev = None
        self.inbox, self.prev_inbox = {}, {}
        self.history = [self.x_curr.copy()]

    def outgoing(self, rnd):
        return [RoundMessage(rnd, self.id, j, self.x_curr.copy()) for j in self.neighbors]

    def receive(self, msg):
        if msg.receiver != self.id:
            raise ProtocolViolation(f"message for {msg.receiver} delivered to {self.id}")
        if msg.sender not in self.neighbors:
            raise ProtocolViolation(f"agent {self.id} received a message from non-neighbor {msg.sender}")
        if msg.sender in self.inbox:
            raise ProtocolViolation(f"duplicate message {msg.sender}->{self.id} in round {msg.round}")
        if not np.all(np.isfinite(msg.payload)):
            raise ProtocolViolation(f"non-finite payload from {msg.sender}")
        self.inbox[msg.sender] = msg.payload

    def _row(self, j, own, box):
        self.reads.add(j)
        if j == self.id:
            return own
        if j not in self.neighbors:
            raise ProtocolViolation(f"agent {self.id} tried to read agent {j}")
        return box[j]

    def _weighted_sum(self, weights, own, box):
        acc = None
        for j in self.closed:
            term = weights[j] * self._row(j, own, box)
            acc = term if acc is None else acc + term
        return acc

    def compute(self, rnd, algo, alpha_k):
        if len(self.inbox) != len(self.neighbors):
            raise ProtocolViolation(f"agent {self.id} missing messages in round {rnd}")
        g_curr = self.objective.grad(self.x_curr)
        mixed = self._weighted_sum(self.w, self.x_curr, self.inbox)
        if algo == "dgd":
            x_next = mixed - alpha_k * g_curr
        elif rnd == 0:
            x_next = mixed - alpha_k * g_curr
        else:
            mixed_prev = self._weighted_sum(self.wt, self.x_prev, self.prev_inbox)
            x_next = self.x_curr + mixed - mixed_prev - alpha_k * (g_curr - self.grad_prev)
        if not np.all(np.isfinite(x_next)):
            raise DivergenceError(rnd + 1)
        self.x_prev, self.x_curr, self.grad_prev = self.x_curr, x_next, g_curr
        self.prev_inbox, self.inbox = self.inbox, {}
        self.history.append(x_next.copy())


@dataclass
class NetworkRun:
    traces: list  # per agent: (rounds + 1, p) array
    transcript: list = field(default_factory=list)
    messages: int = 0
    foreign_reads: int = 0

    def stacked(self, k):
        return np.vstack([t[k] for t in self.traces])


class Network:
    def __init__(self, g, pair, obj):
        if obj.n != g.n or pair.n != g.n:
            raise ValueError("graph, mixing pair and objective disagree on n")
        self.graph = g
        self.agents = [
            AgentNode(i, g.adjacency[i], pair.W[i], pair.Wt[i], obj.agents[i]) for i in range(g.n)
        ]
        self.transcript = []
        self.messages = 0

    def deliver(self, msg, record=False):
        self.agents[msg.receiver].receive(msg)
        self.messages += 1
        if record:
            self.transcript.append(msg)

    def round(self, rnd, algo, alpha_k, pool=None, record=False):
        outbox = [m for a in self.agents for m in a.outgoing(rnd)]
        for msg in sorted(outbox, key=lambda m: (m.sender, m.receiver)):
            self.deliver(msg, record)
        # barrier: all round-rnd messages are in place before anyone computes
        if pool is None:
            for a in self.agents:
                a.compute(rnd, algo, alpha_k)
        else:
            list(pool.map(lambda a: a.compute(rnd, algo, alpha_k), self.agents))

    def foreign_reads(self):
        return sum(len(a.reads - set(a.closed)) for a in self.agents)


def run_rounds(g, pair, obj, algo, alpha, rounds, x0, schedule="fixed", workers=None,
               record_transcript=False):
    """Run ``rounds`` synchronous rounds of EXTRA (``algo="extra"``) or DGD.

    ``schedule`` applies to DGD only: ``"fixed"``, ``"dgd-1/3"`` or ``"dgd-1/2"``.
    With ``workers`` set, agents within a round run on a thread pool; the
    result is identical to the sequential schedule.
    """
    if algo not in ("extra", "dgd"):
        raise ValueError(f"unknown algorithm {algo!r}")
    net = Network(g, pair, obj)
    x0 = np.asarray(x0, dtype=np.float64)
    for a in net.agents:
        a.reset(x0[a.id])
    sched = StepSchedule.for_solver(schedule if algo == "dgd" else "extra", alpha)
    pool = ThreadPoolExecutor(max_workers=workers) if workers else None
    try:
        for rnd in range(rounds):
            net.round(rnd, algo, schedule_alpha(sched, rnd), pool, record_transcript)
    finally:
        if pool is not None:
            pool.shutdown()
    return NetworkRun(
        traces=[np.array(a.history) for a in net.agents],
        transcript=net.transcript,
        messages=net.messages,
        foreign_reads=net.foreign_reads(),
    )


def message_count(g, rounds):
    return 2 * g.m * rounds


def write_transcript_csv(path, transcript):
    with open(path, "w", newline="\n") as fh:
        fh.write("round,sender,receiver,payload\n")
        for m in transcript:
            payload = " ".join(f"{v:.17g}" for v in np.reshape(m.payload, -1))
            fh.write(f"{m.round},{m.sender},{m.receiver},{payload}\n")
