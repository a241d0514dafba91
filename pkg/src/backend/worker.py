"""
実験ワーカー - 設定から反復シミュレーションを実行し、CSV 行へまとめる

反復 r はシード seed + r で実行する。到着ストリームはシードとユーザー番号だけで決まるため、
同じシードで異なるプロトコルを走らせると到着系列が一致する (arrival_checksum 列で確認できる)。
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import hashlib
import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError
from tqdm import tqdm

from src.backend.analysis import TrajectoryMetrics, compute_metrics, no_trend_check
from src.backend.channel import ArrivalRates
from src.backend.simulation import simulate
from src.config.settings import ConfigurationError, ExperimentConfig, settings
from src.utils.logger import app_logger as logger

# CSV の列順 (末尾2列は拡張列)
CSV_COLUMNS = [
    "protocol", "N", "lambda_tot", "pattern", "horizon", "seed", "replication",
    "q_avg", "delay", "collisions", "bound_violations", "arrival_checksum",
    "delay_stderr", "stable",
]
NOT_APPLICABLE = "NA"
AGGREGATE_REPLICATION = -1

SWEEP_AXES = {"users": "n_users", "load": "lambda_tot"}

ProgressCallback = Callable[[str, int], None]


@dataclass(frozen=True)
class ReplicationTask:
    """1反復分の入力 (プロセス間で受け渡すため値だけを持つ)"""
    protocol: str
    rates: Tuple[float, ...]
    horizon: int
    seed: int
    replication: int
    burn_in: int = 0
    audit_interval: int = 1


@dataclass
class ReplicationResult:
    """1反復分の結果"""
    task: ReplicationTask
    metrics: TrajectoryMetrics
    collisions: int
    bound_violations: int
    violations: int
    arrival_checksum: str
    second_quarter_mean: float
    last_quarter_mean: float
    stable: bool


@dataclass
class ExperimentResult:
    """run_experiment の戻り値"""
    config: ExperimentConfig
    replications: List[ReplicationResult]
    rows: List[Dict[str, Any]]

    @property
    def aggregate(self) -> Dict[str, Any]:
        return self.rows[-1]

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.replications)

    @property
    def stable(self) -> bool:
        return bool(self.aggregate["stable"])

    @property
    def sojourn(self) -> Optional[float]:
        """FIFO 滞在時間の平均 (リトルの法則による遅延推定との照合用)"""
        values = [r.metrics.sojourn_mean for r in self.replications
                  if r.metrics.sojourn_mean is not None]
        return float(np.mean(values)) if values else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=CSV_COLUMNS)


def run_replication(task: ReplicationTask) -> ReplicationResult:
    """
    1反復を実行する (ProcessPoolExecutor から呼ぶためモジュールトップレベルに置く)

    Args:
        task: 反復の入力

    Returns:
        ReplicationResult
    """
    rates = ArrivalRates(task.rates)
    trajectory = simulate(task.protocol, rates, task.horizon, task.seed,
                          audit_interval=task.audit_interval)
    metrics = compute_metrics(trajectory, rates, burn_in=task.burn_in)
    trend = no_trend_check(trajectory.total_queue[task.burn_in:task.horizon])
    audit = trajectory.audit
    bound_violations = (audit.bound_violations + audit.replica_mismatches
                        + audit.queue_mismatches + audit.bound_overflows)
    result = ReplicationResult(
        task=task,
        metrics=metrics,
        collisions=audit.collisions,
        bound_violations=bound_violations,
        violations=audit.violations(task.protocol),
        arrival_checksum=trajectory.arrival_checksum(),
        second_quarter_mean=trend.second_quarter_mean,
        last_quarter_mean=trend.last_quarter_mean,
        stable=trend.passed,
    )
    if result.violations:
        logger.error(
            f"不変条件違反: protocol={task.protocol}, seed={task.seed}, "
            f"collisions={audit.collisions}, bound_violations={bound_violations}")
    return result


def _lambda_label(config: ExperimentConfig) -> float:
    # パターン指定なら設定値そのもの、明示ベクトルなら合計
    if config.rates is None and config.lambda_tot is not None:
        return float(config.lambda_tot)
    return config.total_rate


def _row(config: ExperimentConfig, seed: int, replication: int, q_avg: float,
         delay: Optional[float], collisions: int, bound_violations: int, checksum: str,
         delay_stderr: Any, stable: bool) -> Dict[str, Any]:
    return {
        "protocol": config.protocol,
        "N": config.n_users,
        "lambda_tot": _lambda_label(config),
        "pattern": config.pattern_label,
        "horizon": config.horizon,
        "seed": seed,
        "replication": replication,
        "q_avg": q_avg,
        "delay": NOT_APPLICABLE if delay is None else delay,
        "collisions": collisions,
        "bound_violations": bound_violations,
        "arrival_checksum": checksum,
        "delay_stderr": delay_stderr,
        "stable": bool(stable),
    }


def _aggregate_row(config: ExperimentConfig, results: Sequence[ReplicationResult]) -> Dict[str, Any]:
    q_avg = float(np.mean([r.metrics.q_avg for r in results]))
    delays = [r.metrics.delay_estimate for r in results]
    if any(d is None for d in delays):
        delay, stderr = None, NOT_APPLICABLE
    else:
        delay = float(np.mean(delays))
        stderr = float(np.std(delays, ddof=1) / math.sqrt(len(delays))) \
            if len(delays) > 1 else NOT_APPLICABLE

    # 反復ごとの四分位平均を平均してから傾向を判定する
    second = float(np.mean([r.second_quarter_mean for r in results]))
    last = float(np.mean([r.last_quarter_mean for r in results]))
    stable = last <= 1.1 * second

    digest = hashlib.sha256("".join(r.arrival_checksum for r in results).encode("ascii"))
    return _row(config, config.seed, AGGREGATE_REPLICATION, q_avg, delay,
                sum(r.collisions for r in results),
                sum(r.bound_violations for r in results),
                digest.hexdigest()[:16], stderr, stable)


def _execute(tasks: List[ReplicationTask], workers: int, label: str, show_progress: bool,
             progress_cb: Optional[ProgressCallback]) -> List[ReplicationResult]:
    results: List[ReplicationResult] = []
    total = len(tasks)
    bar = tqdm(total=total, desc=label, unit="rep", leave=False,
               disable=None if show_progress else True)
    try:
        if workers > 1 and total > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                # map は投入順に結果を返す
                for result in pool.map(run_replication, tasks):
                    results.append(result)
                    bar.update(1)
                    if progress_cb:
                        progress_cb(f"{label}: {len(results)}/{total}", 100 * len(results) // total)
        else:
            for task in tasks:
                results.append(run_replication(task))
                bar.update(1)
                if progress_cb:
                    progress_cb(f"{label}: {len(results)}/{total}", 100 * len(results) // total)
    finally:
        bar.close()
    return results


def _replication_tasks(config: ExperimentConfig, audit_interval: int) -> List[ReplicationTask]:
    rates = config.arrival_rates().rates
    return [
        ReplicationTask(config.protocol, rates, config.horizon, config.seed + r, r,
                        config.burn_in, audit_interval)
        for r in range(config.replications)
    ]


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None,
                   show_progress: bool = False,
                   progress_cb: Optional[ProgressCallback] = None,
                   audit_interval: Optional[int] = None) -> ExperimentResult:
    """
    設定の全反復を実行し、反復ごとの行と集約行 (replication=-1) を返す。

    Args:
        config: 実験設定
        workers: 並列プロセス数 (省略時は設定ファイルの値)
        show_progress: tqdm の進捗バーを表示するか
        progress_cb: 進捗コールバック (メッセージ, 進捗率)
        audit_interval: 上界複製の監査間隔 (省略時は設定ファイルの値)

    Returns:
        ExperimentResult: rows は反復順の行の後に集約行が続く
    """
    sim = settings.simulation
    workers = workers or sim.workers
    interval = sim.audit_interval if audit_interval is None else audit_interval
    rates = config.arrival_rates()
    logger.info(
        f"実験開始: protocol={config.protocol}, N={config.n_users}, "
        f"lambda_tot={rates.total:.4f}, T={config.horizon}, R={config.replications}, "
        f"seed={config.seed}")

    tasks = _replication_tasks(config, interval)
    label = f"{config.protocol} N={config.n_users} λ={_lambda_label(config):g}"
    results = _execute(tasks, workers, label, show_progress, progress_cb)

    rows = []
    for r in results:
        m = r.metrics
        rows.append(_row(config, r.task.seed, r.task.replication, m.q_avg, m.delay_estimate,
                         r.collisions, r.bound_violations, r.arrival_checksum,
                         NOT_APPLICABLE, r.stable))
    rows.append(_aggregate_row(config, results))

    experiment = ExperimentResult(config, results, rows)
    logger.info(
        f"実験完了: delay={experiment.aggregate['delay']}, "
        f"stable={experiment.stable}, violations={experiment.violations}")
    return experiment


def sweep_configs(base: ExperimentConfig, axis: str, values: Sequence[Any],
                  protocols: Optional[Sequence[str]] = None) -> List[ExperimentConfig]:
    """
    スイープの各点の設定を (値, プロトコル) の順に展開する。

    Raises:
        ConfigurationError: 軸が不明、または展開した設定が不正な場合 (例: asymmetric で奇数 N)
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"不明なスイープ軸: {axis} (利用可能: {', '.join(SWEEP_AXES)})")
    field_name = SWEEP_AXES[axis]
    protocols = list(protocols) if protocols else [base.protocol]

    base_values = base.model_dump()
    # 軸を動かすと明示ベクトルの長さや合計が合わなくなるため、パターン指定に切り替える
    if base_values.get("rates") is not None:
        base_values["lambda_tot"] = _lambda_label(base)
        base_values["rates"] = None

    configs = []
    for value in values:
        for protocol in protocols:
            point = dict(base_values, protocol=protocol)
            point[field_name] = value
            try:
                configs.append(ExperimentConfig(**point))
            except ValidationError as e:
                raise ConfigurationError(f"スイープ点 {axis}={value} の設定が不正です: {e}") from e
    return configs


def sweep(base: ExperimentConfig, axis: str, values: Sequence[Any],
          protocols: Optional[Sequence[str]] = None, workers: Optional[int] = None,
          show_progress: bool = False,
          progress_cb: Optional[ProgressCallback] = None) -> pd.DataFrame:
    """
    N (axis="users") または λ^tot (axis="load") を動かして集約行の表を作る。

    Args:
        base: 基準設定 (動かさない方の値はここから取る)
        axis: "users" または "load"
        values: 軸の値のリスト (空なら列名だけの表)
        protocols: 比較するプロトコル (省略時は base.protocol のみ)
        workers: 並列プロセス数
        show_progress: tqdm の進捗バーを表示するか
        progress_cb: 進捗コールバック (メッセージ, 進捗率)

    Returns:
        pd.DataFrame: 値 × プロトコルごとに1行
    """
    configs = sweep_configs(base, axis, values, protocols)
    logger.info(f"スイープ開始: axis={axis}, values={list(values)}, points={len(configs)}")

    rows = []
    points = tqdm(configs, desc=f"sweep {axis}", unit="pt", disable=None if show_progress else True)
    for i, config in enumerate(points):
        result = run_experiment(config, workers=workers)
        rows.append(result.aggregate)
        if progress_cb:
            progress_cb(f"スイープ {i + 1}/{len(configs)} 完了", 100 * (i + 1) // len(configs))
    return pd.DataFrame(rows, columns=CSV_COLUMNS)
