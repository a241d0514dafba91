"""
CIMA (Common Information-based Multiple Access) プロトコル

各ユーザーは放送フィードバックだけから共通上界ベクトル B を複製して保持する。
毎スロット、B が最大のユーザー (同点なら最小番号) v だけが送信権を持ち、
キューが空でなければ1パケット送信する。

上界の更新則:
    n != v           : B[n] <- B[n] + 1
    n == v, Success  : B[v] <- B[v]
    n == v, Idle     : B[v] <- 1
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.backend.channel import ContractViolationError, Feedback


def select_user(bounds: Sequence[int]) -> int:
    """
    共通上界が最大のユーザーを選ぶ (同点なら最小番号)。

    Args:
        bounds: 共通上界ベクトル (空でないこと)

    Returns:
        int: 選択されたユーザー番号 (0始まり)
    """
    seq = bounds if isinstance(bounds, (list, tuple)) else [int(x) for x in bounds]
    if not seq:
        raise ContractViolationError("上界ベクトルが空です")
    # index は最大値の最初の位置を返す
    return seq.index(max(seq))


def update_bounds(bounds: Sequence[int], feedback: Feedback) -> List[int]:
    """
    フィードバックを受けて共通上界を1スロット進める (純粋関数)。

    Args:
        bounds: 更新前の上界
        feedback: Idle または Success

    Returns:
        List[int]: 更新後の上界 (新しいリスト)

    Raises:
        ContractViolationError: Collision を受け取った場合 (CIMA では起こり得ない)
    """
    if feedback == Feedback.COLLISION:
        raise ContractViolationError("CIMA の上界更新に Collision が渡されました")
    b = bounds if isinstance(bounds, list) else [int(x) for x in bounds]
    v = select_user(b)
    new = [x + 1 for x in b]
    new[v] = b[v] if feedback == Feedback.SUCCESS else 1
    return new


def cima_transition(queues: Sequence[int], bounds: Sequence[int],
                    arrivals: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, Feedback]:
    """
    集中計算版の1ステップ遷移 Y_t -> Y_{t+1} (解析・検証用)。

    フィードバックは F = Success iff Q[v] > 0 で決まるので、(Y_t, A_t) から Y_{t+1} が一意に決まる。

    Args:
        queues: 現在のキュー長
        bounds: 現在の共通上界
        arrivals: 到着ビット

    Returns:
        (次のキュー長, 次の上界, このスロットのフィードバック)
    """
    q = np.asarray(queues, dtype=np.int64)
    a = np.asarray(arrivals, dtype=np.int64)
    if q.shape != a.shape or q.shape != np.shape(bounds):
        raise ContractViolationError("状態と到着ビットの次元が一致しません")
    v = select_user(bounds)
    feedback = Feedback.SUCCESS if q[v] > 0 else Feedback.IDLE
    next_q = q + a
    next_q[v] = max(int(q[v]) - 1, 0) + int(a[v])
    return next_q, np.asarray(update_bounds(bounds, feedback), dtype=np.int64), feedback


class CimaAgent:
    """
    ユーザー1人分の CIMA 状態機械

    保持するのは自分の番号・上界の複製・自分のキュー長だけで、フィードバック履歴は持たない。
    上界の複製は Python の int のリストで持つ (毎スロット全エージェントが読むため)。
    """

    protocol = "cima"

    def __init__(self, my_index: int, n_users: int, initial_queue: int = 0,
                 initial_bounds: Optional[Sequence[int]] = None):
        if not 0 <= my_index < n_users:
            raise ContractViolationError(f"ユーザー番号 {my_index} が範囲外です (N={n_users})")
        self.my_index = my_index
        self.local_queue = int(initial_queue)
        if initial_bounds is None:
            self.local_bounds: List[int] = [0] * n_users
        else:
            self.local_bounds = [int(b) for b in initial_bounds]
            if len(self.local_bounds) != n_users:
                raise ContractViolationError("初期上界の長さがユーザー数と一致しません")
        self.last_selected: Optional[int] = None

    def decide(self) -> int:
        """今スロットに送信するなら 1"""
        v = select_user(self.local_bounds)
        self.last_selected = v
        return 1 if (v == self.my_index and self.local_queue > 0) else 0

    def on_feedback(self, feedback: Feedback, my_arrival: int) -> None:
        """
        放送フィードバックと自分の到着ビットで状態を更新する。

        Args:
            feedback: 今スロットのフィードバック
            my_arrival: 自分のキューへの到着 (0/1)

        Raises:
            ContractViolationError: decide() 前の呼び出し、または Collision を受け取った場合
        """
        v = self.last_selected
        if v is None:
            raise ContractViolationError("decide() の前に on_feedback() が呼ばれました")
        if feedback == Feedback.COLLISION:
            raise ContractViolationError(f"CIMA ユーザー {self.my_index} が Collision を受信しました")

        self.local_bounds = update_bounds(self.local_bounds, feedback)

        if v == self.my_index:
            self.local_queue = max(self.local_queue - 1, 0) + int(my_arrival)
        else:
            self.local_queue += int(my_arrival)
        self.last_selected = None
