"""
安定性解析 - 解析結果を実行可能なチェックとして実装する

- リアプノフ関数 h(y) = Σ_n (q^n + α b^n) と1ステップドリフトの厳密式
- ドリフト不等式 (b^v >= 1/α + 1 なら drift <= -ε/2) の格子上の全数確認
- サービス保証: 時刻 t の総キュー q は [t, t+q+N-1] の間に必ず送信し切られる
- 更新エポック T_k の再帰と平均総キュー長
- 軌跡の指標 (平均総キュー長・遅延推定・パケット単位の滞在時間)
- (Y_t, A_t) -> Y_{t+1} の決定性
"""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.backend.belief import to_exact
from src.backend.channel import (
    ArrivalRates, ContractViolationError, Feedback, apply_dynamics, resolve_slot,
)
from src.backend.cima import CimaAgent, cima_transition, select_user, update_bounds
from src.backend.simulation import simulate
from src.utils.logger import app_logger as logger
from src.utils.rng import ANALYSIS_STREAM, derive_stream

Number = Union[float, Fraction]

# 全数列挙に切り替える状態数の上限 (これを超えたら同値類で列挙する)
MAX_FULL_GRID_STATES = 200_000


class ParameterError(ValueError):
    """解析パラメータが前提を満たさない (λ^tot >= 1, N < 2 など)"""
    pass


@dataclass(frozen=True)
class LyapunovParams:
    """ε = 1 - λ^tot, α = ε / (2(N-1))"""
    epsilon: Number
    alpha: Number
    n_users: int

    @classmethod
    def from_rates(cls, rates: ArrivalRates, exact: bool = False) -> "LyapunovParams":
        n_users = rates.n_users
        if n_users < 2:
            raise ParameterError("N=1 では α が定義されません (CIMA は自明に work-conserving)")
        if exact:
            epsilon: Number = 1 - sum(to_exact(r) for r in rates.rates)
        else:
            epsilon = 1.0 - rates.total
        if epsilon <= 0:
            raise ParameterError(f"λ^tot = {rates.total:.6f} >= 1: スループット領域の外です")
        return cls(epsilon, epsilon / (2 * (n_users - 1)), n_users)

    @property
    def threshold(self) -> Number:
        """ドリフト不等式が成り立つ b^v の下限 1/α + 1"""
        return 1 / self.alpha + 1


@dataclass(frozen=True)
class JointState:
    """Y_t = (Q_t, B_t)"""
    queues: Tuple[int, ...]
    bounds: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "queues", tuple(int(q) for q in self.queues))
        object.__setattr__(self, "bounds", tuple(int(b) for b in self.bounds))
        if len(self.queues) != len(self.bounds):
            raise ContractViolationError("キュー長と上界の次元が一致しません")
        if min(self.queues) < 0 or min(self.bounds) < 0:
            raise ContractViolationError(f"負の成分を含む状態です: {self}")

    @property
    def n_users(self) -> int:
        return len(self.queues)

    @property
    def selected_user(self) -> int:
        return select_user(self.bounds)


def lyapunov(state: JointState, params: LyapunovParams) -> Number:
    """h(y) = Σ_n (q^n + α b^n)"""
    if state.n_users != params.n_users:
        raise ContractViolationError("状態の次元と N が一致しません")
    return sum(state.queues) + params.alpha * sum(state.bounds)


def in_finite_set(state: JointState, params: LyapunovParams) -> bool:
    """有限集合 C = {q^n < 1/α + 1, b^n < 1/α + 1 (全 n)} に含まれるか"""
    limit = params.threshold
    return all(q < limit for q in state.queues) and all(b < limit for b in state.bounds)


def exact_drift(state: JointState, rates: ArrivalRates, exact: bool = False) -> Number:
    """
    条件付き期待ドリフト E[h(Y_{t+1}) - h(Y_t) | Y_t = y] の厳密式。

        -ε + α(N-1) + (1 + α(1 - b^v)) 1{q^v = 0}

    Args:
        state: 現在の状態 y
        rates: 到着率 (λ^tot < 1)
        exact: 有理数で計算するか

    Returns:
        ドリフト値 (exact なら Fraction)

    Raises:
        ParameterError: λ^tot >= 1 または N < 2 の場合
    """
    params = LyapunovParams.from_rates(rates, exact)
    if state.n_users != params.n_users:
        raise ContractViolationError("状態の次元と到着率ベクトル長が一致しません")
    return _drift(state, params)


def _drift(state: JointState, params: LyapunovParams) -> Number:
    v = state.selected_user
    drift = -params.epsilon + params.alpha * (params.n_users - 1)
    if state.queues[v] == 0:
        drift = drift + 1 + params.alpha * (1 - state.bounds[v])
    return drift


def monte_carlo_drift(state: JointState, rates: ArrivalRates, draws: int,
                      rng: np.random.Generator) -> Tuple[float, float]:
    """
    到着を draws 回サンプリングして1ステップドリフトを推定する。

    Returns:
        (平均, 標準誤差)
    """
    params = LyapunovParams.from_rates(rates)
    q = np.asarray(state.queues, dtype=np.int64)
    v = state.selected_user
    feedback = Feedback.SUCCESS if q[v] > 0 else Feedback.IDLE
    bound_change = float(sum(update_bounds(state.bounds, feedback)) - sum(state.bounds))

    arrivals = (rng.random((draws, state.n_users)) < rates.as_array()).astype(np.int64)
    next_q = q + arrivals
    next_q[:, v] = max(int(q[v]) - 1, 0) + arrivals[:, v]
    diffs = (next_q - q).sum(axis=1) + params.alpha * bound_change
    mean = float(diffs.mean())
    stderr = float(diffs.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return mean, stderr


@dataclass
class MonteCarloCheck:
    state: JointState
    exact: float
    mean: float
    stderr: float
    passed: bool


@dataclass
class DriftReport:
    """ドリフト領域チェックの結果"""
    n_users: int
    rates: Tuple[float, ...]
    epsilon: Number
    alpha: Number
    grid_cap: int
    mode: str = "full"
    states_checked: int = 0
    region_states: int = 0
    violations: int = 0
    witness: Optional[JointState] = None
    max_region_drift: Optional[Number] = None
    mc_checks: List[MonteCarloCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and all(c.passed for c in self.mc_checks)


def _class_witnesses(n_users: int, grid_cap: int) -> List[JointState]:
    # ドリフトは (v, b^v, 1{q^v=0}) だけに依存するので、各同値類から代表を1つ取る
    witnesses = []
    for v in range(n_users):
        for bv in range(grid_cap + 1):
            if v > 0 and bv == 0:
                continue  # v より前のユーザーは b < b^v でなければならない
            bounds = [bv - 1] * v + [bv] + [0] * (n_users - v - 1)
            for qv in (0, 1):
                queues = [0] * n_users
                queues[v] = qv
                witnesses.append(JointState(tuple(queues), tuple(bounds)))
    return witnesses


def check_drift_region(n_users: int, rates: ArrivalRates, grid_cap: Optional[int] = None,
                       mc_states: int = 10, mc_draws: int = 10**6, mc_sigma: float = 3.0,
                       seed: int = 0, max_states: int = MAX_FULL_GRID_STATES) -> DriftReport:
    """
    q^n, b^n ∈ [0, grid_cap] の格子上で、b^v >= 1/α + 1 を満たす全状態について
    厳密ドリフト <= -ε/2 を有理数演算で確認する。

    格子が max_states を超える場合は (v, b^v, 1{q^v=0}) の同値類ごとに代表状態を評価する
    (ドリフトはこの3つ組だけの関数なので、同値類の列挙も全数確認になる)。
    さらに mc_states 個のランダムな状態でモンテカルロ推定と突き合わせる。

    Args:
        n_users: ユーザー数 (2 以上)
        rates: 到着率 (λ^tot < 1)
        grid_cap: 格子の上限 (省略時 ceil(1/α)+5、ceil(1/α)+2 以上であること)
        mc_states: モンテカルロ照合を行う状態数
        mc_draws: 1状態あたりのサンプル数
        mc_sigma: 許容する標準誤差の倍数
        seed: モンテカルロ用のシード
        max_states: 全数列挙に切り替える状態数の上限

    Returns:
        DriftReport
    """
    if rates.n_users != n_users:
        raise ParameterError(f"到着率ベクトル長 {rates.n_users} が N={n_users} と一致しません")
    params = LyapunovParams.from_rates(rates, exact=True)
    min_cap = math.ceil(1 / params.alpha) + 2
    if grid_cap is None:
        grid_cap = math.ceil(1 / params.alpha) + 5
    if grid_cap < min_cap:
        raise ParameterError(f"grid_cap={grid_cap} は ceil(1/α)+2 = {min_cap} 以上である必要があります")

    report = DriftReport(n_users, tuple(rates.rates), params.epsilon, params.alpha, grid_cap)
    limit = -params.epsilon / 2
    threshold = params.threshold

    full_size = (grid_cap + 1) ** (2 * n_users)
    if full_size <= max_states:
        report.mode = "full"
        axis = range(grid_cap + 1)
        states = (JointState(q, b) for b in product(axis, repeat=n_users)
                  for q in product(axis, repeat=n_users))
    else:
        report.mode = "class"
        states = iter(_class_witnesses(n_users, grid_cap))

    for state in states:
        report.states_checked += 1
        if state.bounds[state.selected_user] < threshold:
            continue
        report.region_states += 1
        drift = _drift(state, params)
        if report.max_region_drift is None or drift > report.max_region_drift:
            report.max_region_drift = drift
        if drift > limit:
            report.violations += 1
            if report.witness is None:
                report.witness = state

    rng = derive_stream(seed, ANALYSIS_STREAM)
    for _ in range(mc_states):
        q = tuple(int(x) for x in rng.integers(0, grid_cap + 1, size=n_users))
        b = tuple(int(x) for x in rng.integers(0, grid_cap + 1, size=n_users))
        state = JointState(q, b)
        expected = float(exact_drift(state, rates, exact=True))
        mean, stderr = monte_carlo_drift(state, rates, mc_draws, rng)
        ok = abs(mean - expected) <= mc_sigma * stderr if stderr > 0 \
            else abs(mean - expected) < 1e-12
        report.mc_checks.append(MonteCarloCheck(state, expected, mean, stderr, ok))

    logger.info(
        f"ドリフト確認: N={n_users}, ε={float(params.epsilon):.4f}, α={float(params.alpha):.4f}, "
        f"cap={grid_cap}, mode={report.mode}, 状態数={report.states_checked}, "
        f"領域内={report.region_states}, 違反={report.violations}")
    return report


def _require_cima(trajectory) -> None:
    if trajectory.protocol != "cima":
        raise ContractViolationError(
            f"この検査は CIMA の軌跡専用です (protocol={trajectory.protocol})")


def _success_prefix(trajectory) -> np.ndarray:
    # S[t] = Σ_{τ<t} Ū_τ (長さ T+1)
    return np.concatenate(([0], np.cumsum(trajectory.successes)))


@dataclass
class WindowReport:
    passed: bool
    windows_checked: int
    first_violation: Optional[int] = None


def lemma4_window_check(trajectory, n_users: int) -> WindowReport:
    """
    サービス保証の確認: 各スロット t について q = Q^tot_t、t+q+N-1 < T なら
    Σ_{τ=t}^{t+q+N-1} Ū_τ >= q。

    Args:
        trajectory: CIMA の Trajectory
        n_users: ユーザー数

    Returns:
        WindowReport (最初の違反スロットを含む)

    Raises:
        ContractViolationError: CIMA 以外の軌跡が渡された場合
    """
    _require_cima(trajectory)
    horizon = trajectory.horizon
    q_tot = trajectory.total_queue[:horizon]
    prefix = _success_prefix(trajectory)
    starts = np.arange(horizon)
    ends = starts + q_tot + n_users - 1
    mask = ends < horizon
    served = prefix[np.minimum(ends, horizon - 1) + 1] - prefix[starts]
    bad = np.flatnonzero(mask & (served < q_tot))
    first = int(bad[0]) if bad.size else None
    if first is not None:
        logger.error(f"サービス保証違反: t={first}, Q^tot={int(q_tot[first])}")
    return WindowReport(bad.size == 0, int(mask.sum()), first)


@dataclass
class EpochReport:
    """更新エポック T_k の列と統計"""
    epochs: List[int]
    queue_at_epochs: List[int]
    bound_violations: int
    partial: bool
    mean_queue: Optional[float]
    stderr_queue: Optional[float]
    reference_bound: Optional[float]

    @property
    def passed(self) -> bool:
        return self.bound_violations == 0


def renewal_epochs(trajectory, n_users: int,
                   rates: Optional[ArrivalRates] = None) -> EpochReport:
    """
    T_1 = N から始め、T_k を「T_{k-1} 以降の成功数が Q^tot_{T_{k-1}} に達した直後のスロット」
    として再帰的に求める。各エポックで T_k - T_{k-1} <= Q^tot_{T_{k-1}} + N を確認し、
    Q^tot_{T_k} の平均を参照値 λ^tot N / (1 - λ^tot) と並べて返す。

    Args:
        trajectory: CIMA の Trajectory
        n_users: ユーザー数
        rates: 参照値の計算に使う到着率 (省略可)

    Returns:
        EpochReport (エポックが1つも完了しなければ partial=True)
    """
    _require_cima(trajectory)
    horizon = trajectory.horizon
    q_tot = trajectory.total_queue
    prefix = _success_prefix(trajectory)

    epochs: List[int] = []
    queue_at: List[int] = []
    violations = 0
    if n_users <= horizon:
        epochs.append(n_users)
        queue_at.append(int(q_tot[n_users]))
        while True:
            prev = epochs[-1]
            q = queue_at[-1]
            if q == 0:
                nxt = prev + 1
            else:
                nxt = int(np.searchsorted(prefix, prefix[prev] + q, side="left"))
            if nxt > horizon:
                break
            if nxt - prev > q + n_users:
                violations += 1
                logger.error(f"エポック上界違反: T_k-1={prev}, T_k={nxt}, Q^tot={q}")
            epochs.append(nxt)
            queue_at.append(int(q_tot[nxt]))

    partial = len(epochs) < 2
    mean = stderr = None
    if queue_at:
        values = np.asarray(queue_at, dtype=float)
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    reference = None
    if rates is not None and rates.supportable:
        reference = rates.total * n_users / (1.0 - rates.total)
    if partial:
        logger.warning(f"ホライズン T={horizon} が短く、エポックが完了しませんでした")
    return EpochReport(epochs, queue_at, violations, partial, mean, stderr, reference)


@dataclass
class EpochMeanCheck:
    """複数軌跡のエポック時点の総キュー長をまとめた平均と参照値の比較"""
    samples: int
    mean: float
    stderr: float
    reference: float
    sigma: float

    @property
    def passed(self) -> bool:
        return self.mean <= self.reference + self.sigma * self.stderr


def epoch_mean_check(reports: Sequence[EpochReport], sigma: float = 3.0) -> EpochMeanCheck:
    """
    各軌跡の Q^tot_{T_k} をまとめ、平均が λ^tot N / (1 - λ^tot) + sigma 標準誤差以下かを判定する。

    Args:
        reports: 同じ到着率で得た renewal_epochs の結果
        sigma: 許容する標準誤差の倍数

    Returns:
        EpochMeanCheck

    Raises:
        ParameterError: 参照値がない (到着率未指定・λ^tot >= 1) か、エポックが2つ未満の場合
    """
    references = {r.reference_bound for r in reports}
    if not reports or None in references or len(references) != 1:
        raise ParameterError(
            "エポック平均の参照値が決まりません (同じ到着率を renewal_epochs に渡すこと)")
    values = np.asarray([q for r in reports for q in r.queue_at_epochs], dtype=float)
    if values.size < 2:
        raise ParameterError(f"エポック数が足りません: {values.size}")
    check = EpochMeanCheck(
        samples=int(values.size),
        mean=float(values.mean()),
        stderr=float(values.std(ddof=1) / math.sqrt(values.size)),
        reference=float(references.pop()),
        sigma=sigma,
    )
    logger.info(f"エポック平均: {check.mean:.3f} ± {check.stderr:.3f} (参照値 {check.reference:.3f}, "
                f"n={check.samples})")
    return check


@dataclass
class TrajectoryMetrics:
    """軌跡の集計指標"""
    horizon: int
    total_queue_sum: int
    success_count: int
    q_avg: float
    delay_estimate: Optional[float]
    sojourn_mean: Optional[float]
    throughput: float


def sojourn_times(trajectory, burn_in: int = 0) -> np.ndarray:
    """
    各キュー内 FIFO を仮定したパケット単位の滞在時間 (出発スロット - 到着スロット)。

    初期キューにあったパケットと、ホライズン内に出発しなかったパケットは含めない。
    """
    served = trajectory.decisions.astype(bool) & \
        (trajectory.feedback == int(Feedback.SUCCESS))[:, None]
    samples = []
    for n in range(trajectory.n_users):
        arrived = np.flatnonzero(trajectory.arrivals[:, n])
        departed = np.flatnonzero(served[:, n])
        initial = int(trajectory.queues[0, n])
        departed = departed[initial:]
        k = min(len(arrived), len(departed))
        delays = departed[:k] - arrived[:k]
        samples.append(delays[arrived[:k] >= burn_in])
    return np.concatenate(samples) if samples else np.zeros(0, dtype=np.int64)


def compute_metrics(trajectory, rates: ArrivalRates, burn_in: int = 0) -> TrajectoryMetrics:
    """
    Q_avg = (1/T) Σ_{t=0}^{T-1} Q^tot_t と遅延推定 Q_avg / λ^tot を計算する。

    Args:
        trajectory: Trajectory
        rates: 到着率
        burn_in: 先頭から除外するスロット数

    Returns:
        TrajectoryMetrics (λ^tot = 0 なら delay_estimate は None)
    """
    horizon = trajectory.horizon
    if horizon < 1:
        raise ValueError("ホライズンは1以上である必要があります")
    if not 0 <= burn_in < horizon:
        raise ValueError(f"burn_in={burn_in} はホライズン {horizon} 未満である必要があります")
    q_tot = trajectory.total_queue[burn_in:horizon]
    total = int(q_tot.sum())
    q_avg = total / len(q_tot)
    delay = q_avg / rates.total if rates.total > 0 else None
    sojourn = sojourn_times(trajectory, burn_in)
    successes = int(trajectory.successes.sum())
    return TrajectoryMetrics(
        horizon=horizon,
        total_queue_sum=total,
        success_count=successes,
        q_avg=q_avg,
        delay_estimate=delay,
        sojourn_mean=float(sojourn.mean()) if sojourn.size else None,
        throughput=successes / horizon,
    )


@dataclass
class NoTrendResult:
    second_quarter_mean: float
    last_quarter_mean: float
    passed: bool


def no_trend_check(series: Sequence[float], tolerance: float = 0.10) -> NoTrendResult:
    """
    有限ホライズンでの安定性の代用指標:
    最後の 1/4 区間の平均が 2番目の 1/4 区間の平均を 10% 超えて上回らないこと。
    """
    values = np.asarray(series, dtype=float)
    n = len(values)
    if n < 4:
        return NoTrendResult(0.0, 0.0, True)
    second = float(values[n // 4:n // 2].mean())
    last = float(values[3 * n // 4:].mean())
    return NoTrendResult(second, last, last <= (1.0 + tolerance) * second)


def sample_reachable_states(n_users: int, rates: ArrivalRates, count: int, seed: int = 0,
                            run_length: int = 500) -> List[Tuple[JointState, Tuple[int, ...]]]:
    """
    CIMA を実際に走らせて到達可能な (状態, 到着ビット) の組を集める。

    シード seed, seed+1, ... の軌跡を run_length スロットずつ生成し、各スロットの組を使う。
    """
    samples: List[Tuple[JointState, Tuple[int, ...]]] = []
    run = 0
    while len(samples) < count:
        trajectory = simulate("cima", rates, run_length, seed + run, record_bounds=True)
        for t in range(run_length):
            if len(samples) >= count:
                break
            state = JointState(tuple(trajectory.queues[t]), tuple(trajectory.bounds[t]))
            samples.append((state, tuple(int(a) for a in trajectory.arrivals[t])))
        run += 1
    return samples


@dataclass
class DeterminismReport:
    checked: int = 0
    mismatches: int = 0
    first_mismatch: Optional[JointState] = None

    @property
    def passed(self) -> bool:
        return self.mismatches == 0


def _replica_successor(state: JointState, arrivals: Sequence[int]) -> Tuple[tuple, tuple]:
    n_users = state.n_users
    agents = [CimaAgent(n, n_users, initial_queue=state.queues[n], initial_bounds=state.bounds)
              for n in range(n_users)]
    decisions = [a.decide() for a in agents]
    feedback, _ = resolve_slot(decisions)
    for agent, bit in zip(agents, arrivals):
        agent.on_feedback(feedback, int(bit))
    replicas = {tuple(int(x) for x in a.local_bounds) for a in agents}
    if len(replicas) != 1:
        raise ContractViolationError("エージェント間で上界の複製が一致しません")
    queues = tuple(int(x) for x in apply_dynamics(state.queues, decisions, arrivals))
    return queues, replicas.pop()


def next_state_determinism_check(
        samples: Sequence[Tuple[JointState, Sequence[int]]]) -> DeterminismReport:
    """
    (Y_t, A_t) が Y_{t+1} を一意に決めることを確認する。

    各サンプルについて、集中計算の遷移を2回、独立に構成したエージェント複製で2回計算し、
    すべて一致すること、および上界が update_bounds(b, F) (F = Success iff q^v > 0) と
    一致することを確認する。
    """
    report = DeterminismReport()
    for state, arrivals in samples:
        report.checked += 1
        try:
            q1, b1, _ = cima_transition(state.queues, state.bounds, arrivals)
            q2, b2, _ = cima_transition(state.queues, state.bounds, arrivals)
            central = [(tuple(int(x) for x in q1), tuple(int(x) for x in b1)),
                       (tuple(int(x) for x in q2), tuple(int(x) for x in b2))]
            replicas = [_replica_successor(state, arrivals) for _ in range(2)]
            v = state.selected_user
            fb = Feedback.SUCCESS if state.queues[v] > 0 else Feedback.IDLE
            structural = tuple(int(x) for x in update_bounds(state.bounds, fb))
            ok = len(set(central + replicas)) == 1 and central[0][1] == structural
        except ContractViolationError as e:
            logger.error(f"決定性チェック中の契約違反: {state}: {e}")
            ok = False
        if not ok:
            report.mismatches += 1
            if report.first_mismatch is None:
                report.first_mismatch = state
    return report
