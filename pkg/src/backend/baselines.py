"""
比較用プロトコル
- 基本 TDMA (固定ラウンドロビン)
- 二次バックオフ (送信確率 (c+1)^-2)

どちらも CIMA と同じエージェントインターフェース (decide / on_feedback) を持つ。
"""

import numpy as np

from src.backend.channel import ContractViolationError, Feedback


class TdmaAgent:
    """
    TDMA エージェント: ユーザー n はスロット t (t mod N == n) を占有する。

    クロックは全体のスロット番号と同期している (時刻は共通知識)。
    """

    protocol = "tdma"

    def __init__(self, my_index: int, n_users: int, initial_queue: int = 0, clock: int = 0):
        if not 0 <= my_index < n_users:
            raise ContractViolationError(f"ユーザー番号 {my_index} が範囲外です (N={n_users})")
        self.my_index = my_index
        self.n_users = n_users
        self.clock = clock
        self.local_queue = int(initial_queue)
        self._transmitted = 0

    def decide(self) -> int:
        mine = (self.clock % self.n_users) == self.my_index
        self._transmitted = 1 if (mine and self.local_queue > 0) else 0
        return self._transmitted

    def on_feedback(self, feedback: Feedback, my_arrival: int) -> None:
        served = self._transmitted and feedback == Feedback.SUCCESS
        self.local_queue = max(self.local_queue - int(served), 0) + int(my_arrival)
        self.clock += 1
        self._transmitted = 0


class BackoffAgent:
    """
    二次バックオフエージェント

    キューが空でなければ確率 (c+1)^-2 で送信する。カウンタ c は
    自分の送信が衝突したら +1、成功したら 0 に戻し、それ以外は変えない。
    """

    protocol = "backoff"

    def __init__(self, my_index: int, rng: np.random.Generator, initial_queue: int = 0,
                 counter: int = 0):
        if counter < 0:
            raise ValueError(f"バックオフカウンタは非負である必要があります: {counter}")
        self.my_index = my_index
        self.counter = counter
        self.local_queue = int(initial_queue)
        self.transmitted_last = 0
        self._rng = rng

    @property
    def transmit_probability(self) -> float:
        return 1.0 / (self.counter + 1) ** 2

    def decide(self) -> int:
        if self.local_queue == 0:
            self.transmitted_last = 0
        else:
            self.transmitted_last = 1 if self._rng.random() < self.transmit_probability else 0
        return self.transmitted_last

    def on_feedback(self, feedback: Feedback, my_arrival: int) -> None:
        served = False
        if self.transmitted_last:
            if feedback == Feedback.COLLISION:
                self.counter += 1
            elif feedback == Feedback.SUCCESS:
                self.counter = 0
                served = True
        self.local_queue = max(self.local_queue - int(served), 0) + int(my_arrival)
