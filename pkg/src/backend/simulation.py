"""
スロットシミュレータ - エージェント群とチャネルの橋渡し

1スロットの順序は固定:
    送信判断 -> チャネル解決 -> フィードバック放送 -> 到着 -> キュー更新

各エージェントに渡すのは「全員共通のフィードバック」と「自分の到着ビット」だけで、
他ユーザーのキュー長や到着は決して渡さない。
"""

from dataclasses import dataclass, field
import hashlib
from typing import List, Optional, Protocol, Sequence

import numpy as np

from src.backend.baselines import BackoffAgent, TdmaAgent
from src.backend.channel import (
    ArrivalRates, BernoulliArrivals, ContractViolationError, Feedback, SlotRecord, apply_dynamics,
)
from src.backend.cima import CimaAgent
from src.utils.logger import app_logger as logger
from src.utils.rng import arrival_streams, decision_streams

PROTOCOLS = ("cima", "tdma", "backoff")
# 構造上衝突が起こらないはずのプロトコル
COLLISION_FREE_PROTOCOLS = ("cima", "tdma")


class Agent(Protocol):
    """プロトコルエージェントのインターフェース"""

    def decide(self) -> int: ...

    def on_feedback(self, feedback: Feedback, my_arrival: int) -> None: ...


class ArrivalSource(Protocol):
    """到着源のインターフェース (BernoulliArrivals / ScriptedArrivals)"""

    @property
    def n_users(self) -> int: ...

    def draw(self, t: int) -> np.ndarray: ...


@dataclass
class SystemState:
    """オーケストレータだけが見る真のシステム状態"""
    queues: np.ndarray
    time: int = 0

    @classmethod
    def empty(cls, n_users: int) -> "SystemState":
        return cls(np.zeros(n_users, dtype=np.int64))


@dataclass
class InvariantAudit:
    """実行中に集計する不変条件の監査結果"""
    collisions: int = 0
    idle_slots: int = 0
    success_slots: int = 0
    bound_violations: int = 0      # B[n] < Q[n] となったスロット数
    replica_mismatches: int = 0    # エージェント間で上界の複製が食い違ったスロット数
    queue_mismatches: int = 0      # エージェントの自己キュー長が真値と食い違ったスロット数
    bound_overflows: int = 0       # max B > t+1 となったスロット数
    audited_slots: int = 0

    def violations(self, protocol: str) -> int:
        """プロトコルにとって「あってはならない」事象の総数"""
        total = (self.bound_violations + self.replica_mismatches
                 + self.queue_mismatches + self.bound_overflows)
        if protocol in COLLISION_FREE_PROTOCOLS:
            total += self.collisions
        return total


@dataclass
class Trajectory:
    """
    時刻インデックス付きの実行記録

    queues は T+1 行 (queues[t] はスロット t 開始時のキュー長)。
    bounds は CIMA の場合のみ、エージェント 0 の複製を T+1 行記録する。
    """
    protocol: str
    n_users: int
    decisions: np.ndarray
    feedback: np.ndarray
    arrivals: np.ndarray
    queues: np.ndarray
    bounds: Optional[np.ndarray] = None
    audit: InvariantAudit = field(default_factory=InvariantAudit)

    @property
    def horizon(self) -> int:
        return int(len(self.feedback))

    @property
    def successes(self) -> np.ndarray:
        """Ū_t (フィードバックが Success なら 1)"""
        return (self.feedback == int(Feedback.SUCCESS)).astype(np.int64)

    @property
    def total_queue(self) -> np.ndarray:
        """Q^tot_t (t = 0..T)"""
        return self.queues.sum(axis=1)

    def record(self, t: int) -> SlotRecord:
        """スロット t の SlotRecord を復元する"""
        decisions = tuple(int(d) for d in self.decisions[t])
        fb = Feedback(int(self.feedback[t]))
        transmitter = decisions.index(1) if fb == Feedback.SUCCESS else None
        return SlotRecord(
            time=t,
            decisions=decisions,
            feedback=fb,
            arrivals=tuple(int(a) for a in self.arrivals[t]),
            queues_before=tuple(int(q) for q in self.queues[t]),
            queues_after=tuple(int(q) for q in self.queues[t + 1]),
            transmitter=transmitter,
        )

    def arrival_checksum(self) -> str:
        """到着ビット列の SHA-256 (プロトコル間で到着系列が同一であることの確認用)"""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.arrivals, dtype=np.int8).tobytes())
        return digest.hexdigest()[:16]


def build_agents(protocol: str, n_users: int, seed: int,
                 initial_queues: Optional[Sequence[int]] = None) -> List[Agent]:
    """
    プロトコル名からエージェント群を生成する。

    Args:
        protocol: "cima" / "tdma" / "backoff"
        n_users: ユーザー数
        seed: マスターシード (バックオフの送信判断ストリームに使用)
        initial_queues: 初期キュー長 (テスト用、省略時は空)

    Returns:
        List[Agent]: ユーザー番号順のエージェント
    """
    q0 = list(initial_queues) if initial_queues is not None else [0] * n_users
    if protocol == "cima":
        return [CimaAgent(n, n_users, initial_queue=q0[n]) for n in range(n_users)]
    if protocol == "tdma":
        return [TdmaAgent(n, n_users, initial_queue=q0[n]) for n in range(n_users)]
    if protocol == "backoff":
        streams = decision_streams(seed, n_users)
        return [BackoffAgent(n, streams[n], initial_queue=q0[n]) for n in range(n_users)]
    raise ValueError(f"不明なプロトコル: {protocol} (利用可能: {', '.join(PROTOCOLS)})")


class SlotSimulator:
    """
    エージェント群・到着源・真のキュー状態を保持し、スロットを順に進める

    Args:
        agents: ユーザー番号順のエージェント
        arrivals: 到着源
        state: 初期状態 (省略時は全キュー空)
        audit_interval: 上界複製の監査を行うスロット間隔 (0 で監査しない)
        record_bounds: CIMA の上界を毎スロット記録するか
    """

    def __init__(self, agents: Sequence[Agent], arrivals: ArrivalSource,
                 state: Optional[SystemState] = None, audit_interval: int = 1,
                 record_bounds: bool = False):
        n_users = arrivals.n_users
        if len(agents) != n_users:
            raise ContractViolationError(
                f"エージェント数 {len(agents)} がユーザー数 {n_users} と一致しません")
        self.agents = list(agents)
        self.arrivals = arrivals
        self.state = state if state is not None else SystemState.empty(n_users)
        if self.state.queues.shape != (n_users,):
            raise ContractViolationError("初期キューの長さがユーザー数と一致しません")
        self.audit = InvariantAudit()
        self.audit_interval = audit_interval
        self.record_bounds = record_bounds
        self.protocol = getattr(self.agents[0], "protocol", "custom")
        self._has_bounds = all(hasattr(a, "local_bounds") for a in self.agents)

    @property
    def n_users(self) -> int:
        return len(self.agents)

    def _step(self) -> tuple:
        state = self.state
        t = state.time
        queues_before = state.queues

        decisions = np.fromiter((a.decide() for a in self.agents), dtype=np.int8,
                                count=self.n_users)
        transmitters = np.flatnonzero(decisions)
        if transmitters.size and np.any(queues_before[transmitters] == 0):
            empty = [int(n) for n in transmitters if queues_before[n] == 0]
            raise ContractViolationError(f"スロット {t}: 空のキューから送信しました (users {empty})")

        if transmitters.size == 0:
            feedback = Feedback.IDLE
            self.audit.idle_slots += 1
        elif transmitters.size == 1:
            feedback = Feedback.SUCCESS
            self.audit.success_slots += 1
        else:
            feedback = Feedback.COLLISION
            self.audit.collisions += 1

        arrivals = self.arrivals.draw(t)
        for agent, bit in zip(self.agents, arrivals):
            agent.on_feedback(feedback, int(bit))

        queues_after = apply_dynamics(queues_before, decisions, arrivals)
        state.queues = queues_after
        state.time = t + 1

        if self.audit_interval and (state.time % self.audit_interval == 0):
            self._audit(queues_after, state.time)
        return decisions, feedback, arrivals, queues_before, queues_after

    def _audit(self, queues: np.ndarray, t: int) -> None:
        audit = self.audit
        audit.audited_slots += 1
        local = [getattr(a, "local_queue", None) for a in self.agents]
        if any(lq is not None and lq != int(q) for lq, q in zip(local, queues)):
            audit.queue_mismatches += 1
        if not self._has_bounds:
            return
        reference = self.agents[0].local_bounds
        if any(a.local_bounds != reference for a in self.agents[1:]):
            audit.replica_mismatches += 1
        if any(b < q for b, q in zip(reference, queues.tolist())):
            audit.bound_violations += 1
        if max(reference) > t + 1:
            audit.bound_overflows += 1

    def run_slot(self) -> SlotRecord:
        """1スロット進めて SlotRecord を返す"""
        t = self.state.time
        decisions, feedback, arrivals, before, after = self._step()
        transmitter = int(np.flatnonzero(decisions)[0]) if feedback == Feedback.SUCCESS else None
        return SlotRecord(
            time=t,
            decisions=tuple(int(d) for d in decisions),
            feedback=feedback,
            arrivals=tuple(int(a) for a in arrivals),
            queues_before=tuple(int(q) for q in before),
            queues_after=tuple(int(q) for q in after),
            transmitter=transmitter,
        )

    def run(self, horizon: int) -> Trajectory:
        """
        horizon スロット実行して Trajectory を返す。

        Args:
            horizon: 実行するスロット数

        Returns:
            Trajectory: 実行記録 (監査結果を含む)
        """
        n = self.n_users
        decisions = np.zeros((horizon, n), dtype=np.int8)
        feedback = np.zeros(horizon, dtype=np.int8)
        arrivals = np.zeros((horizon, n), dtype=np.int8)
        queues = np.zeros((horizon + 1, n), dtype=np.int64)
        bounds = None
        keep_bounds = self.record_bounds and self._has_bounds
        if keep_bounds:
            bounds = np.zeros((horizon + 1, n), dtype=np.int64)
            bounds[0] = self.agents[0].local_bounds
        queues[0] = self.state.queues

        for i in range(horizon):
            u, fb, a, _, after = self._step()
            decisions[i] = u
            feedback[i] = int(fb)
            arrivals[i] = a
            queues[i + 1] = after
            if keep_bounds:
                bounds[i + 1] = self.agents[0].local_bounds

        return Trajectory(self.protocol, n, decisions, feedback, arrivals, queues, bounds,
                          self.audit)


def simulate(protocol: str, rates: ArrivalRates, horizon: int, seed: int,
             audit_interval: int = 1, record_bounds: bool = False) -> Trajectory:
    """
    プロトコル名・到着率・シードから1本の軌跡を生成する。

    同じ (seed, 設定) からはビット単位で同一の Trajectory が得られる。
    到着ストリームは (seed, ユーザー番号) だけで決まり、プロトコルには依存しない。

    Args:
        protocol: "cima" / "tdma" / "backoff"
        rates: 到着率
        horizon: スロット数 T
        seed: マスターシード
        audit_interval: 監査間隔
        record_bounds: CIMA の上界を記録するか

    Returns:
        Trajectory
    """
    n_users = rates.n_users
    agents = build_agents(protocol, n_users, seed)
    source = BernoulliArrivals(rates, arrival_streams(seed, n_users))
    simulator = SlotSimulator(agents, source, audit_interval=audit_interval,
                              record_bounds=record_bounds)
    trajectory = simulator.run(horizon)
    logger.debug(
        f"simulate: protocol={protocol}, N={n_users}, T={horizon}, seed={seed}, "
        f"collisions={trajectory.audit.collisions}, "
        f"violations={trajectory.audit.violations(protocol)}")
    return trajectory
