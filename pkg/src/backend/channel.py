"""
衝突チャネルの物理モデル

- スロット単位の衝突チャネル (Idle / Success / Collision のフィードバック)
- ベルヌーイ到着
- キューのダイナミクス Q_{t+1} = A_t + (Q_t - served_t)^+
"""

from dataclasses import dataclass
from enum import IntEnum
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.logger import app_logger as logger


class ContractViolationError(RuntimeError):
    """インターフェース契約違反 (ハーネスやエージェントのバグを示す)"""
    pass


class Feedback(IntEnum):
    """スロットごとに全ユーザーへ放送される三値フィードバック {0, 1, e}"""
    IDLE = 0
    SUCCESS = 1
    COLLISION = 2

    @property
    def symbol(self) -> str:
        return {Feedback.IDLE: "0", Feedback.SUCCESS: "1", Feedback.COLLISION: "e"}[self]


@dataclass(frozen=True)
class ArrivalRates:
    """
    ユーザーごとの到着率ベクトル

    合計が 1 以上のベクトルも受け付ける (不安定性のデモ用) が、supportable が False になる。
    """
    rates: Tuple[float, ...]

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.rates)
        if not rates:
            raise ValueError("到着率ベクトルが空です")
        for n, r in enumerate(rates):
            if not (0.0 <= r <= 1.0) or math.isnan(r):
                raise ValueError(f"到着率は [0, 1] の範囲で指定してください (user {n}: {r})")
        object.__setattr__(self, "rates", rates)
        if not self.supportable:
            logger.warning(f"到着率の合計 {self.total:.4f} >= 1: スループット領域の外です")

    @classmethod
    def asymmetric(cls, n_users: int, total: float) -> "ArrivalRates":
        """
        非対称パターン: 前半のユーザーに 1.4λ/N、後半に 0.6λ/N を割り当てる。

        Args:
            n_users: ユーザー数 (偶数)
            total: 合計到着率 λ^tot

        Returns:
            ArrivalRates
        """
        if n_users < 2 or n_users % 2 != 0:
            raise ValueError(f"asymmetric パターンには偶数のユーザー数が必要です: N={n_users}")
        high = 1.4 * total / n_users
        low = 0.6 * total / n_users
        half = n_users // 2
        return cls(tuple([high] * half + [low] * half))

    @classmethod
    def symmetric(cls, n_users: int, total: float) -> "ArrivalRates":
        """全ユーザーに λ/N を割り当てる"""
        if n_users < 1:
            raise ValueError(f"ユーザー数は1以上である必要があります: N={n_users}")
        return cls(tuple([total / n_users] * n_users))

    @property
    def n_users(self) -> int:
        return len(self.rates)

    @property
    def total(self) -> float:
        return math.fsum(self.rates)

    @property
    def supportable(self) -> bool:
        """スループット領域 Λ (合計 < 1) に含まれるか"""
        return self.total < 1.0

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=float)


@dataclass(frozen=True)
class SlotRecord:
    """1スロット分の記録 (送信判断・フィードバック・到着・更新前後のキュー)"""
    time: int
    decisions: Tuple[int, ...]
    feedback: Feedback
    arrivals: Tuple[int, ...]
    queues_before: Tuple[int, ...]
    queues_after: Tuple[int, ...]
    transmitter: Optional[int] = None


def resolve_slot(decisions: Sequence[int]) -> Tuple[Feedback, Optional[int]]:
    """
    送信判断ベクトルからチャネルの結果を決定する。

    Args:
        decisions: 長さ N のビットベクトル (1 = 送信)

    Returns:
        (Feedback, 送信成功したユーザー番号 or None)
    """
    transmitters = [n for n, d in enumerate(decisions) if d]
    if not transmitters:
        return Feedback.IDLE, None
    if len(transmitters) == 1:
        return Feedback.SUCCESS, transmitters[0]
    return Feedback.COLLISION, None


def apply_dynamics(queues: Sequence[int], decisions: Sequence[int],
                   arrivals: Sequence[int]) -> np.ndarray:
    """
    キューを1スロット進める: new[n] = A[n] + max(Q[n] - served[n], 0)

    served[n] は「n だけが送信した」場合に限り 1。

    Args:
        queues: 更新前のキュー長
        decisions: 送信判断ビット
        arrivals: 到着ビット

    Returns:
        np.ndarray: 更新後のキュー長

    Raises:
        ContractViolationError: ベクトル長が一致しない場合
    """
    q = np.asarray(queues, dtype=np.int64)
    u = np.asarray(decisions, dtype=np.int64)
    a = np.asarray(arrivals, dtype=np.int64)
    if not (q.shape == u.shape == a.shape) or q.ndim != 1:
        raise ContractViolationError(
            f"ベクトル長が一致しません: queues={q.shape}, decisions={u.shape}, arrivals={a.shape}")
    served = u if int(u.sum()) == 1 else np.zeros_like(u)
    return a + np.maximum(q - served, 0)


def sample_arrivals(rates: ArrivalRates, streams: Sequence[np.random.Generator]) -> np.ndarray:
    """
    各ユーザーの到着ビットを独立にサンプリングする。

    Args:
        rates: 到着率
        streams: ユーザーごとの乱数ストリーム (rng.derive_stream で生成)

    Returns:
        np.ndarray: 長さ N の 0/1 ベクトル
    """
    if len(streams) != rates.n_users:
        raise ContractViolationError(
            f"ストリーム数 {len(streams)} がユーザー数 {rates.n_users} と一致しません")
    uniforms = np.fromiter((s.random() for s in streams), dtype=float, count=len(streams))
    return (uniforms < rates.as_array()).astype(np.int8)


class BernoulliArrivals:
    """
    ユーザー別ストリームからブロック単位で一様乱数を引くベルヌーイ到着源

    ブロック化しても各ストリームの消費順は変わらないため、sample_arrivals と同じ系列になる。
    """

    def __init__(self, rates: ArrivalRates, streams: Sequence[np.random.Generator],
                 block: int = 4096):
        if len(streams) != rates.n_users:
            raise ContractViolationError(
                f"ストリーム数 {len(streams)} がユーザー数 {rates.n_users} と一致しません")
        self.rates = rates
        self._streams = list(streams)
        self._block = block
        self._threshold = rates.as_array()
        self._buffer = np.empty((0, rates.n_users), dtype=np.int8)
        self._pos = 0

    @property
    def n_users(self) -> int:
        return self.rates.n_users

    def _refill(self) -> None:
        columns = [s.random(self._block) for s in self._streams]
        self._buffer = (np.column_stack(columns) < self._threshold).astype(np.int8)
        self._pos = 0

    def draw(self, t: int) -> np.ndarray:
        """スロット t の到着ビットを返す (t は呼び出し順に増加すること)"""
        if self._pos >= len(self._buffer):
            self._refill()
        row = self._buffer[self._pos]
        self._pos += 1
        return row


class ScriptedArrivals:
    """
    明示的な到着行列 (T x N) を返す到着源。手計算トレースのテスト用。
    行列の範囲外のスロットでは到着なし。
    """

    def __init__(self, matrix: Iterable[Sequence[int]], n_users: Optional[int] = None):
        rows: List[Sequence[int]] = [list(r) for r in matrix]
        if not rows and n_users is None:
            raise ValueError("空の到着行列にはユーザー数の指定が必要です")
        self._matrix = np.asarray(rows, dtype=np.int8).reshape(len(rows), -1) if rows else \
            np.zeros((0, n_users), dtype=np.int8)
        if n_users is not None and self._matrix.shape[1] != n_users:
            raise ContractViolationError(
                f"到着行列の列数 {self._matrix.shape[1]} がユーザー数 {n_users} と一致しません")
        if np.any((self._matrix != 0) & (self._matrix != 1)):
            raise ValueError("到着行列は 0/1 のみで構成してください")

    @property
    def n_users(self) -> int:
        return int(self._matrix.shape[1])

    def draw(self, t: int) -> np.ndarray:
        if t < len(self._matrix):
            return self._matrix[t]
        return np.zeros(self.n_users, dtype=np.int8)
