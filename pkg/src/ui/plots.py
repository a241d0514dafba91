"""
図の出力 - スイープ結果の表から遅延の図を SVG で書き出す

同じ表からは同じバイト列の SVG が得られるように、SVG の id ソルトを固定し日付メタデータを省く。
"""

from pathlib import Path
from typing import Dict, List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from src.utils.logger import app_logger as logger  # noqa: E402

PLOT_KINDS: Dict[str, Dict[str, str]] = {
    "delay_vs_users": {"x": "N", "xlabel": "number of users N"},
    "delay_vs_load": {"x": "lambda_tot", "xlabel": "total arrival rate λ_tot"},
}

PROTOCOL_ORDER = ("cima", "tdma", "backoff")
PROTOCOL_STYLE = {
    "cima": {"color": "tab:blue", "marker": "o"},
    "tdma": {"color": "tab:orange", "marker": "s"},
    "backoff": {"color": "tab:green", "marker": "^"},
}

SVG_HASH_SALT = "cima-sim"


class PlotInputError(ValueError):
    """表の列が図の種類と合わない"""
    pass


def _require_columns(table: pd.DataFrame, columns: List[str]) -> None:
    for column in columns:
        if column not in table.columns:
            raise PlotInputError(f"列 '{column}' が見つかりません")


def _protocols(table: pd.DataFrame) -> List[str]:
    present = list(dict.fromkeys(table["protocol"]))
    return [p for p in PROTOCOL_ORDER if p in present] + \
        [p for p in present if p not in PROTOCOL_ORDER]


def _reference_bound(x: np.ndarray, table: pd.DataFrame, kind: str) -> np.ndarray:
    # 遅延の上界 2N / (1 - λ^tot)
    if kind == "delay_vs_users":
        load = float(table["lambda_tot"].iloc[0])
        return 2.0 * x / (1.0 - load)
    n_users = float(table["N"].iloc[0])
    return 2.0 * n_users / (1.0 - x)


def emit_plot(table: pd.DataFrame, kind: str, output: Union[str, Path],
              bound_overlay: bool = False) -> Path:
    """
    遅延の図を SVG で保存する

    Args:
        table: sweep の出力 (replication 列があれば集約行 -1 のみ使う)
        kind: "delay_vs_users" または "delay_vs_load"
        output: 出力先パス
        bound_overlay: 上界 2N/(1-λ^tot) を破線で重ねるか

    Returns:
        Path: 保存したファイルのパス

    Raises:
        PlotInputError: 図の種類が不明、または必要な列がない場合
    """
    if kind not in PLOT_KINDS:
        raise PlotInputError(f"不明な図の種類: {kind} (利用可能: {', '.join(PLOT_KINDS)})")
    layout = PLOT_KINDS[kind]
    required = ["protocol", layout["x"], "delay"]
    if bound_overlay:
        required.append("lambda_tot" if kind == "delay_vs_users" else "N")
    _require_columns(table, required)

    data = table
    if "replication" in data.columns:
        data = data[data["replication"] == -1]
    data = data.assign(delay=pd.to_numeric(data["delay"], errors="coerce"))
    data = data.dropna(subset=["delay"])
    if bound_overlay and kind == "delay_vs_load":
        data = data[data["lambda_tot"] < 1.0]

    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        for protocol in _protocols(data):
            series = data[data["protocol"] == protocol].sort_values(layout["x"])
            style = PROTOCOL_STYLE.get(protocol, {"marker": "x"})
            ax.plot(series[layout["x"]], series["delay"], label=protocol,
                    gid=f"series-{protocol}", **style)

        if bound_overlay and not data.empty:
            x = np.sort(data[layout["x"]].astype(float).unique())
            ax.plot(x, _reference_bound(x, data, kind), linestyle="--", color="gray",
                    label="2N/(1-λ_tot)", gid="reference-bound")

        ax.set_xlabel(layout["xlabel"])
        ax.set_ylabel("delay [slots]")
        ax.spines["right"].set_visible(False)
        ax.spines["top"].set_visible(False)
        if ax.lines:
            ax.legend()

        output = Path(output)
        output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(output, format="svg", metadata={"Date": None}, bbox_inches="tight")
    finally:
        plt.close(fig)

    logger.info(f"図を保存しました: {output}")
    return output
