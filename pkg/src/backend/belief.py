"""
信念オラクル - フィードバック履歴を条件とするキュー長の事後分布

- 再帰版: ユーザーごとの周辺 PMF をフィードバックで逐次更新する
    選ばれていないユーザー: ベルヌーイ(λ) との畳み込み
    選ばれたユーザー, Success: Q>0 で条件付け -> 1パケット減らす -> 畳み込み
    選ばれたユーザー, Idle: {0: 1-λ, 1: λ}
- 総当たり版: 到着列をすべて列挙して同時分布を厳密に求める (再帰版の検証用)

exact=True を指定すると fractions.Fraction で厳密に計算する。
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Dict, Iterator, List, Sequence, Tuple, Union

from src.backend.channel import ArrivalRates, Feedback
from src.backend.cima import select_user, update_bounds
from src.utils.logger import app_logger as logger

Number = Union[float, Fraction]
FeedbackSequence = Tuple[Feedback, ...]
JointPmf = Dict[Tuple[int, ...], Number]

# 浮動小数点モードでの比較許容誤差
TOLERANCE = 1e-12

# 総当たり列挙の上限
MAX_ORACLE_USERS = 3
MAX_ORACLE_HORIZON = 10


class ImpossibleObservationError(ValueError):
    """確率 0 のフィードバックが観測された (ハーネスとオラクルの不整合)"""
    pass


class OracleSizeError(ValueError):
    """総当たり列挙のサイズ上限を超えた"""
    pass


def to_exact(value: Union[float, int, Fraction]) -> Fraction:
    """浮動小数点の到着率を10進表記どおりの有理数に変換する (0.1 -> 1/10)"""
    if isinstance(value, Fraction):
        return value
    return Fraction(str(value))


def _is_positive(p: Number) -> bool:
    if isinstance(p, Fraction):
        return p > 0
    return p > TOLERANCE


def _trim(pmf: List[Number]) -> Tuple[Number, ...]:
    # 厳密に 0 の末尾だけを落とす (長さ = 台の最大値 + 1 を保つ)
    while len(pmf) > 1 and pmf[-1] == 0:
        pmf.pop()
    return tuple(pmf)


def _convolve_bernoulli(pmf: Sequence[Number], lam: Number) -> Tuple[Number, ...]:
    out: List[Number] = [pmf[0] * (1 - lam)]
    for q in range(1, len(pmf)):
        out.append(pmf[q] * (1 - lam) + pmf[q - 1] * lam)
    out.append(pmf[-1] * lam)
    return _trim(out)


@dataclass(frozen=True)
class MarginalBelief:
    """ユーザー1人分のキュー長の条件付き PMF (添字 = キュー長)"""
    owner: int
    pmf: Tuple[Number, ...]

    @property
    def support_max(self) -> int:
        for q in range(len(self.pmf) - 1, -1, -1):
            if _is_positive(self.pmf[q]):
                return q
        return 0

    @property
    def total(self) -> Number:
        return sum(self.pmf)

    def prob_positive(self) -> Number:
        return sum(self.pmf[1:]) if len(self.pmf) > 1 else self.pmf[0] * 0


@dataclass(frozen=True)
class BeliefProfile:
    """全ユーザーの周辺 PMF の組 (条件付き独立なので積が同時分布になる)"""
    marginals: Tuple[MarginalBelief, ...]
    slot: int
    rates: Tuple[Number, ...]
    exact: bool = False

    @property
    def n_users(self) -> int:
        return len(self.marginals)

    def support_maxima(self) -> Tuple[int, ...]:
        return tuple(m.support_max for m in self.marginals)

    def selected_user(self) -> int:
        return select_user(self.support_maxima())

    def joint(self) -> JointPmf:
        """周辺 PMF の積として同時 PMF を展開する"""
        ranges = [range(len(m.pmf)) for m in self.marginals]
        result: JointPmf = {}
        for q in product(*ranges):
            p: Number = 1
            for m, qn in zip(self.marginals, q):
                p = p * m.pmf[qn]
            if p != 0:
                result[q] = p
        return result


def init_profile(n_users: int, rates: ArrivalRates, exact: bool = False) -> BeliefProfile:
    """
    初期プロファイル (全キュー空 = 0 の点質量) を作る。

    Args:
        n_users: ユーザー数
        rates: 到着率
        exact: 有理数で計算するか

    Returns:
        BeliefProfile
    """
    if n_users < 1 or n_users != rates.n_users:
        raise ValueError(f"ユーザー数 {n_users} と到着率ベクトル長 {rates.n_users} が不正です")
    one: Number = Fraction(1) if exact else 1.0
    lams = tuple(to_exact(r) for r in rates.rates) if exact else tuple(rates.rates)
    marginals = tuple(MarginalBelief(n, (one,)) for n in range(n_users))
    return BeliefProfile(marginals, 0, lams, exact)


def update_profile(profile: BeliefProfile, feedback: Feedback) -> BeliefProfile:
    """
    フィードバック1回分だけプロファイルを更新する。

    Args:
        profile: 現在のプロファイル
        feedback: Idle または Success

    Returns:
        BeliefProfile: 更新後のプロファイル

    Raises:
        ImpossibleObservationError: 現在の信念の下で確率 0 のフィードバックの場合
    """
    if feedback == Feedback.COLLISION:
        raise ImpossibleObservationError("CIMA の下では Collision は確率 0 です")
    v = profile.selected_user()
    new_marginals = []
    for m in profile.marginals:
        lam = profile.rates[m.owner]
        if m.owner != v:
            new_marginals.append(MarginalBelief(m.owner, _convolve_bernoulli(m.pmf, lam)))
            continue
        if feedback == Feedback.SUCCESS:
            p_pos = m.prob_positive()
            if not _is_positive(p_pos):
                raise ImpossibleObservationError(
                    f"スロット {profile.slot}: user {v} は P(Q>0)=0 なのに Success が観測されました")
            # Q>0 で条件付けし、送信済みの1パケットを取り除く
            served = [p / p_pos for p in m.pmf[1:]]
            new_marginals.append(MarginalBelief(m.owner, _convolve_bernoulli(served, lam)))
        else:
            if not _is_positive(m.pmf[0]):
                raise ImpossibleObservationError(
                    f"スロット {profile.slot}: user {v} は P(Q=0)=0 なのに Idle が観測されました")
            one: Number = Fraction(1) if profile.exact else 1.0
            new_marginals.append(MarginalBelief(m.owner, _convolve_bernoulli((one,), lam)))
    return BeliefProfile(tuple(new_marginals), profile.slot + 1, profile.rates, profile.exact)


def support_max(profile: BeliefProfile, n: int) -> int:
    """ユーザー n の周辺 PMF の台の最大値 (pmf[q] > 1e-12 となる最大の q)"""
    return profile.marginals[n].support_max


def _forward_joint(n_users: int, rates: ArrivalRates, horizon: int,
                   exact: bool) -> Iterator[Dict[FeedbackSequence, JointPmf]]:
    """
    (フィードバック列, キュー長ベクトル) の同時確率を前向きに列挙する。

    到着列 2^{N·T} 通りをすべて列挙するのと同値だが、同じ状態に至る経路はスロットごとに合流させる。
    t = 0..horizon の各時点について、フィードバック列ごとの非正規化同時 PMF を yield する。
    """
    lams = [to_exact(r) for r in rates.rates] if exact else list(rates.rates)
    one: Number = Fraction(1) if exact else 1.0

    arrival_weights = []
    for a in product((0, 1), repeat=n_users):
        w: Number = one
        for bit, lam in zip(a, lams):
            w = w * (lam if bit else 1 - lam)
        if w != 0:
            arrival_weights.append((a, w))

    bounds: Dict[FeedbackSequence, Tuple[int, ...]] = {(): (0,) * n_users}
    states: Dict[FeedbackSequence, JointPmf] = {(): {(0,) * n_users: one}}
    yield states

    for _ in range(horizon):
        next_states: Dict[FeedbackSequence, JointPmf] = {}
        next_bounds: Dict[FeedbackSequence, Tuple[int, ...]] = {}
        for fseq, dist in states.items():
            b = bounds[fseq]
            v = select_user(b)
            for q, p in dist.items():
                fb = Feedback.SUCCESS if q[v] > 0 else Feedback.IDLE
                key = fseq + (fb,)
                if key not in next_bounds:
                    next_bounds[key] = tuple(int(x) for x in update_bounds(b, fb))
                    next_states[key] = {}
                bucket = next_states[key]
                base = list(q)
                base[v] = max(base[v] - 1, 0)
                for a, w in arrival_weights:
                    nq = tuple(x + y for x, y in zip(base, a))
                    bucket[nq] = bucket.get(nq, 0) + p * w
        states, bounds = next_states, next_bounds
        yield states


def _check_oracle_size(n_users: int, horizon: int) -> None:
    if n_users > MAX_ORACLE_USERS or horizon > MAX_ORACLE_HORIZON:
        raise OracleSizeError(
            f"総当たり列挙の上限を超えています: N={n_users} (上限 {MAX_ORACLE_USERS}), "
            f"T={horizon} (上限 {MAX_ORACLE_HORIZON})")
    if n_users < 1 or horizon < 0:
        raise OracleSizeError(f"不正なサイズです: N={n_users}, T={horizon}")


def _normalize(dist: JointPmf) -> JointPmf:
    total = sum(dist.values())
    return {q: p / total for q, p in dist.items()}


def brute_force_joint(n_users: int, rates: ArrivalRates, horizon: int,
                      exact: bool = False) -> Dict[FeedbackSequence, JointPmf]:
    """
    すべての到着列について CIMA を決定的に実行し、フィードバック列ごとの
    Q_T の厳密な条件付き同時 PMF を返す。

    Args:
        n_users: ユーザー数 (3 以下)
        rates: 到着率
        horizon: スロット数 T (10 以下)
        exact: 有理数で計算するか

    Returns:
        Dict[フィードバック列, {キュー長ベクトル: 条件付き確率}] (到達可能な列のみ)

    Raises:
        OracleSizeError: サイズ上限を超えた場合
    """
    _check_oracle_size(n_users, horizon)
    final: Dict[FeedbackSequence, JointPmf] = {}
    for final in _forward_joint(n_users, rates, horizon, exact):
        pass
    return {fseq: _normalize(dist) for fseq, dist in final.items()}


@dataclass
class FactorizationReport:
    """総当たり同時分布と再帰周辺分布の積の比較結果"""
    n_users: int
    horizon: int
    rates: Tuple[float, ...]
    exact: bool
    sequences_checked: int = 0
    max_deviation: Number = 0.0
    bounds_match: bool = True
    first_bound_mismatch: str = ""

    @property
    def passed(self) -> bool:
        if not self.bounds_match:
            return False
        if self.exact:
            return self.max_deviation == 0
        return self.max_deviation < TOLERANCE


def verify_factorization(n_users: int, rates: ArrivalRates, horizon: int,
                         exact: bool = False) -> FactorizationReport:
    """
    t = 1..horizon のすべての到達可能なフィードバック列について
    (a) 総当たり同時 PMF = 再帰周辺 PMF の積
    (b) 各周辺 PMF の台の最大値 = CIMA の共通上界
    を確認する。

    Args:
        n_users: ユーザー数 (3 以下)
        rates: 到着率
        horizon: 最大スロット数 (10 以下)
        exact: 有理数で計算するか (True なら偏差は厳密に 0 であること)

    Returns:
        FactorizationReport
    """
    _check_oracle_size(n_users, horizon)
    report = FactorizationReport(n_users, horizon, tuple(rates.rates), exact)
    report.max_deviation = Fraction(0) if exact else 0.0

    for t, states in enumerate(_forward_joint(n_users, rates, horizon, exact)):
        if t == 0:
            continue
        for fseq, dist in states.items():
            joint = _normalize(dist)
            profile = init_profile(n_users, rates, exact)
            bounds = (0,) * n_users
            for fb in fseq:
                profile = update_profile(profile, fb)
                bounds = tuple(int(x) for x in update_bounds(bounds, fb))
            if profile.support_maxima() != bounds and report.bounds_match:
                report.bounds_match = False
                report.first_bound_mismatch = (
                    f"F={''.join(f.symbol for f in fseq)}: support={profile.support_maxima()}, "
                    f"bounds={bounds}")
            product_pmf = profile.joint()
            for q in set(joint) | set(product_pmf):
                dev = abs(joint.get(q, 0) - product_pmf.get(q, 0))
                if dev > report.max_deviation:
                    report.max_deviation = dev
            report.sequences_checked += 1

    logger.debug(
        f"verify_factorization: N={n_users}, T={horizon}, rates={rates.rates}, exact={exact}, "
        f"sequences={report.sequences_checked}, max_dev={float(report.max_deviation):.3e}, "
        f"bounds_match={report.bounds_match}")
    return report
