"""
検証スイート - 不変条件とオラクル照合をまとめて実行する (CLI の verify サブコマンド)

quick=True は数秒で終わる規模、quick=False は T=10^5・1000 本の軌跡・10^6 サンプルの規模で実行する。
"""

from dataclasses import dataclass
from itertools import product
from typing import Callable, List, Optional, Tuple

from src.backend.analysis import (
    check_drift_region, epoch_mean_check, lemma4_window_check, next_state_determinism_check,
    renewal_epochs, sample_reachable_states,
)
from src.backend.belief import verify_factorization
from src.backend.channel import ArrivalRates
from src.backend.simulation import simulate
from src.utils.logger import app_logger as logger

# 衝突ゼロ・上界の複製一致と支配を確認するユーザー数 (full)
FULL_COLLISION_USERS = (2, 4, 8, 16, 32, 64)
FULL_COLLISION_RUNS = 100
# ドリフト確認の (N, ε) (full)。到着率は対称で λ^tot = 1 - ε
FULL_DRIFT_CASES = tuple(product((2, 3, 5), (0.1, 0.5)))
QUICK_DRIFT_CASES = ((4, 0.2),)
# 信念分布の分解を確認する N=2 の到着率の格子
FACTORIZATION_RATE_GRID = (0.1, 0.2, 0.3, 0.4)


@dataclass
class CheckResult:
    """1つの検査の結果"""
    name: str
    passed: bool
    detail: str


def _factorization_checks(quick: bool) -> List[CheckResult]:
    results = []
    if quick:
        cases = [
            (2, ArrivalRates((0.3, 0.5)), 6, True),
            (3, ArrivalRates((0.2, 0.3, 0.25)), 4, False),
        ]
        for n_users, rates, horizon, exact in cases:
            report = verify_factorization(n_users, rates, horizon, exact=exact)
            mode = "exact" if exact else "float"
            results.append(CheckResult(
                f"factorization N={n_users} T={horizon} ({mode})",
                report.passed,
                f"系列数={report.sequences_checked}, 最大偏差={float(report.max_deviation):.2e}, "
                f"上界一致={report.bounds_match}"))
        return results

    # T<=8 は浮動小数点、T<=6 は有理数で厳密一致
    for horizon, exact in ((8, False), (6, True)):
        passed = True
        sequences = 0
        worst = 0.0
        grid = [r for r in product(FACTORIZATION_RATE_GRID, repeat=2) if sum(r) < 1]
        for pair in grid:
            report = verify_factorization(2, ArrivalRates(pair), horizon, exact=exact)
            passed &= report.passed
            sequences += report.sequences_checked
            worst = max(worst, float(report.max_deviation))
            if not report.passed:
                logger.error(f"分解の不一致: rates={pair}, {report.first_bound_mismatch}")
        mode = "exact" if exact else "float"
        results.append(CheckResult(
            f"factorization N=2 T<={horizon} rate grid ({mode})", passed,
            f"rates={len(grid)}, 系列数={sequences}, 最大偏差={worst:.2e}"))

    report = verify_factorization(3, ArrivalRates((0.2, 0.3, 0.25)), 6)
    results.append(CheckResult(
        "factorization N=3 T=6 (float)", report.passed,
        f"系列数={report.sequences_checked}, 最大偏差={float(report.max_deviation):.2e}, "
        f"上界一致={report.bounds_match}"))
    return results


def _drift_checks(quick: bool, seed: int) -> List[CheckResult]:
    results = []
    for n_users, epsilon in (QUICK_DRIFT_CASES if quick else FULL_DRIFT_CASES):
        rates = ArrivalRates.symmetric(n_users, round(1.0 - epsilon, 12))
        report = check_drift_region(
            n_users, rates,
            mc_states=3 if quick else 10,
            mc_draws=20_000 if quick else 10**6,
            mc_sigma=5.0 if quick else 3.0,
            seed=seed)
        results.append(CheckResult(
            f"drift N={n_users} ε={epsilon}",
            report.passed,
            f"mode={report.mode}, 領域内={report.region_states}, 違反={report.violations}, "
            f"MC一致={sum(c.passed for c in report.mc_checks)}/{len(report.mc_checks)}"))
    return results


def _collision_runs(quick: bool, seed: int) -> List[Tuple[int, int]]:
    # (N, seed) の組。full では 100 本を N の候補に順番に割り振る
    if quick:
        return [(4, s) for s in range(seed, seed + 3)]
    return [(FULL_COLLISION_USERS[i % len(FULL_COLLISION_USERS)], seed + i)
            for i in range(FULL_COLLISION_RUNS)]


def _collision_checks(quick: bool, seed: int) -> List[CheckResult]:
    horizon = 2_000 if quick else 100_000
    results = []
    for protocol in ("cima", "tdma"):
        runs = _collision_runs(quick, seed) if protocol == "cima" else \
            [(4, s) for s in range(seed, seed + (3 if quick else 20))]
        collisions = violations = replica = dominance = 0
        for n_users, s in runs:
            audit = simulate(protocol, ArrivalRates.asymmetric(n_users, 0.8), horizon, s).audit
            collisions += audit.collisions
            replica += audit.replica_mismatches
            dominance += audit.bound_violations
            violations += audit.violations(protocol)
        users = sorted({n for n, _ in runs})
        results.append(CheckResult(
            f"collision-free {protocol}",
            violations == 0,
            f"runs={len(runs)}, N={users}, T={horizon}, collisions={collisions}, "
            f"replica={replica}, dominance={dominance}"))
    return results


def _window_checks(quick: bool, seed: int) -> List[CheckResult]:
    trajectories = 50 if quick else 1000
    windows = 0
    passed = True
    for i in range(trajectories):
        n_users = 2 + i % 7
        load = 0.5 if (i // 7) % 2 == 0 else 0.9
        trajectory = simulate("cima", ArrivalRates.symmetric(n_users, load), 500, seed + i)
        report = lemma4_window_check(trajectory, n_users)
        passed &= report.passed
        windows += report.windows_checked
    return [CheckResult("service window", passed,
                        f"trajectories={trajectories}, N=2..8, T=500, windows={windows}")]


def _epoch_checks(quick: bool, seed: int) -> List[CheckResult]:
    horizon = 20_000 if quick else 100_000
    runs = 3 if quick else 20
    rates = ArrivalRates.asymmetric(4, 0.6)
    reports = [renewal_epochs(simulate("cima", rates, horizon, s), 4, rates)
               for s in range(seed, seed + runs)]
    recursion_ok = all(r.passed for r in reports)
    mean = epoch_mean_check(reports)
    return [
        CheckResult("renewal epochs", recursion_ok,
                    f"runs={runs}, T={horizon}, epochs={sum(len(r.epochs) for r in reports)}"),
        CheckResult("epoch queue mean", mean.passed,
                    f"mean={mean.mean:.3f}, stderr={mean.stderr:.3f}, "
                    f"reference={mean.reference:.3f}"),
    ]


def _determinism_checks(quick: bool, seed: int) -> List[CheckResult]:
    rates = ArrivalRates.asymmetric(4, 0.5)
    samples = sample_reachable_states(4, rates, 1_000 if quick else 10_000, seed=seed)
    report = next_state_determinism_check(samples)
    return [CheckResult("next-state determinism", report.passed,
                        f"samples={report.checked}, mismatches={report.mismatches}")]


def run_verification(quick: bool = True, seed: int = 0,
                     progress_cb: Optional[Callable[[str, int], None]] = None) -> List[CheckResult]:
    """
    検証スイートを実行する

    Args:
        quick: 小規模で実行するか
        seed: シミュレーションとモンテカルロのシード
        progress_cb: 進捗コールバック (メッセージ, 進捗率)

    Returns:
        List[CheckResult]: 実行順の検査結果
    """
    stages = [
        ("信念分布の分解", lambda: _factorization_checks(quick)),
        ("ドリフト条件", lambda: _drift_checks(quick, seed)),
        ("衝突ゼロと上界の複製", lambda: _collision_checks(quick, seed)),
        ("サービス保証の窓", lambda: _window_checks(quick, seed)),
        ("更新エポック", lambda: _epoch_checks(quick, seed)),
        ("状態遷移の決定性", lambda: _determinism_checks(quick, seed)),
    ]
    results: List[CheckResult] = []
    for i, (label, stage) in enumerate(stages):
        if progress_cb:
            progress_cb(f"{label}を検証しています...", 100 * i // len(stages))
        results.extend(stage())
    if progress_cb:
        progress_cb("検証が完了しました", 100)

    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"検証失敗: {', '.join(failed)}")
    else:
        logger.info(f"検証成功: {len(results)} 項目")
    return results
