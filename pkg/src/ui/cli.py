"""
コマンドラインインターフェース - run / sweep / verify / plot サブコマンド

終了コード:
    0: 成功
    1: 不変条件違反 (検証失敗を含む)
    2: 設定エラー
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from rich.console import Console
from rich.table import Table

from src import __version__
from src.backend.analysis import ParameterError
from src.backend.belief import OracleSizeError
from src.backend.channel import ContractViolationError
from src.backend.simulation import COLLISION_FREE_PROTOCOLS, PROTOCOLS
from src.backend.verify import run_verification
from src.backend.worker import SWEEP_AXES, run_experiment, sweep
from src.config.presets_loader import get_preset, get_preset_names
from src.config.settings import ConfigurationError, ExperimentConfig, build_experiment_config, settings
from src.ui.plots import PLOT_KINDS, PlotInputError, emit_plot
from src.utils.file_ops import default_output_filename, load_csv_table, save_csv_table
from src.utils.logger import app_logger as logger, set_console_level

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2

console = Console()


def _comma_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="実験設定 JSON ファイル")
    parser.add_argument("--preset", help="config/presets.yaml のプリセット名")
    parser.add_argument("--protocol", choices=PROTOCOLS)
    parser.add_argument("-N", "--users", dest="n_users", type=int, help="ユーザー数")
    parser.add_argument("--lambda-tot", dest="lambda_tot", type=float, help="総到着率")
    parser.add_argument("--pattern", choices=("asymmetric", "symmetric"))
    parser.add_argument("--rates", help="明示的な到着率ベクトル (カンマ区切り)")
    parser.add_argument("--horizon", type=int, help="スロット数 T")
    parser.add_argument("--seed", type=int, help="マスターシード")
    parser.add_argument("--replications", type=int, help="反復回数")
    parser.add_argument("--burn-in", dest="burn_in", type=int, help="指標から除外する先頭スロット数")
    parser.add_argument("--workers", type=int, help="並列プロセス数")
    parser.add_argument("-o", "--output", type=Path, help="CSV の出力先")
    parser.add_argument("--no-progress", action="store_true", help="進捗バーを表示しない")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cima-sim",
        description="衝突チャネル上の CIMA プロトコルのシミュレーションと検証")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="DEBUG ログをコンソールに出す")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="1つの設定で反復シミュレーションを実行する")
    _add_experiment_arguments(run_p)

    sweep_p = sub.add_parser("sweep", help="N または λ^tot を動かして集約表を作る")
    _add_experiment_arguments(sweep_p)
    sweep_p.add_argument("--axis", choices=tuple(SWEEP_AXES))
    sweep_p.add_argument("--values", help="軸の値 (カンマ区切り、空文字なら空の表)")
    sweep_p.add_argument("--protocols", help="比較するプロトコル (カンマ区切り)")
    sweep_p.add_argument("--plot", choices=tuple(PLOT_KINDS), help="続けて図も出力する")
    sweep_p.add_argument("--bound-overlay", action="store_true", help="図に上界を重ねる")

    verify_p = sub.add_parser("verify", help="不変条件とオラクル照合の検証スイートを実行する")
    verify_p.add_argument("--full", action="store_true", help="T=10^5・1000 本の軌跡・10^6 サンプルの規模で実行する")
    verify_p.add_argument("--seed", type=int, default=0)

    plot_p = sub.add_parser("plot", help="スイープの CSV から SVG の図を出力する")
    plot_p.add_argument("input", type=Path, help="sweep が出力した CSV")
    plot_p.add_argument("--kind", choices=tuple(PLOT_KINDS), required=True)
    plot_p.add_argument("-o", "--output", type=Path, help="SVG の出力先")
    plot_p.add_argument("--bound-overlay", action="store_true",
                        help="上界 2N/(1-λ^tot) を破線で重ねる")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    rates = None
    if args.rates:
        try:
            rates = [float(x) for x in _comma_list(args.rates)]
        except ValueError:
            raise ConfigurationError(f"--rates を数値として解釈できません: {args.rates}")
    return {
        "protocol": args.protocol,
        "n_users": args.n_users,
        "lambda_tot": args.lambda_tot,
        "pattern": args.pattern,
        "rates": rates,
        "horizon": args.horizon,
        "seed": args.seed,
        "replications": args.replications,
        "burn_in": args.burn_in,
        "output_path": args.output,
    }


def _resolve(args: argparse.Namespace):
    preset = None
    if args.preset:
        preset = get_preset(args.preset)
        if preset is None:
            raise ConfigurationError(
                f"プリセットが見つかりません: {args.preset} "
                f"(利用可能: {', '.join(get_preset_names())})")
    config = build_experiment_config(args.config, _overrides(args),
                                     base=preset.base if preset else None)
    return config, preset


def _output_path(config: ExperimentConfig, stem: str) -> Path:
    if config.output_path is not None:
        return Path(config.output_path)
    return default_output_filename(settings.output.output_directory, stem)


def _results_table(title: str, table: pd.DataFrame) -> Table:
    view = Table(title=title)
    columns = ["protocol", "N", "lambda_tot", "replication", "q_avg", "delay",
               "delay_stderr", "collisions", "bound_violations", "stable"]
    for column in columns:
        view.add_column(column, justify="right")
    for _, row in table.iterrows():
        cells = []
        for column in columns:
            value = row[column]
            cells.append(f"{value:.4g}" if isinstance(value, float) else str(value))
        view.add_row(*cells)
    return view


def _table_violations(table: pd.DataFrame) -> int:
    collision_free = table["protocol"].isin(COLLISION_FREE_PROTOCOLS)
    return int(table.loc[collision_free, "collisions"].sum() + table["bound_violations"].sum())


def _cmd_run(args: argparse.Namespace) -> int:
    config, _ = _resolve(args)
    result = run_experiment(config, workers=args.workers, show_progress=not args.no_progress)
    frame = result.to_frame()
    output = _output_path(config, f"run_{config.protocol}_N{config.n_users}")
    save_csv_table(frame, output, settings.output.csv_float_format)
    console.print(_results_table(f"run: {config.protocol}", frame))
    if result.sojourn is not None:
        console.print(f"平均滞在時間 (FIFO): {result.sojourn:.4g} スロット")
    console.print(f"CSV: {output}")
    if not result.stable:
        logger.warning("キュー長に増加傾向があります (不安定と判定)")
    return EXIT_VIOLATION if result.violations else EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    config, preset = _resolve(args)
    axis = args.axis or (preset.axis if preset else None)
    if axis is None:
        raise ConfigurationError("--axis (users または load) を指定してください")

    if args.values is not None:
        caster = int if axis == "users" else float
        try:
            values: Sequence[Any] = [caster(v) for v in _comma_list(args.values)]
        except ValueError:
            raise ConfigurationError(f"--values を解釈できません: {args.values}")
    elif preset is not None and preset.is_sweep:
        values = preset.values
    else:
        raise ConfigurationError("--values を指定してください")

    protocols = _comma_list(args.protocols) if args.protocols else \
        (preset.protocols if preset else None)
    table = sweep(config, axis, values, protocols, workers=args.workers,
                  show_progress=not args.no_progress)

    output = _output_path(config, f"sweep_{axis}")
    save_csv_table(table, output, settings.output.csv_float_format)
    console.print(_results_table(f"sweep: {axis}", table))
    console.print(f"CSV: {output}")
    if args.plot:
        emit_plot(table, args.plot, output.with_suffix(".svg"), args.bound_overlay)
    return EXIT_VIOLATION if not table.empty and _table_violations(table) else EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    results = run_verification(quick=not args.full, seed=args.seed)
    view = Table(title="verify (full)" if args.full else "verify (quick)")
    view.add_column("check")
    view.add_column("result")
    view.add_column("detail")
    for r in results:
        view.add_row(r.name, "[green]PASS[/green]" if r.passed else "[red]FAIL[/red]", r.detail)
    console.print(view)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VIOLATION


def _cmd_plot(args: argparse.Namespace) -> int:
    try:
        table = load_csv_table(args.input, ["protocol"])
    except FileNotFoundError:
        raise ConfigurationError(f"CSV が見つかりません: {args.input}")
    except KeyError as e:
        raise PlotInputError(f"列 {e} が見つかりません")
    output = args.output or args.input.with_suffix(".svg")
    emit_plot(table, args.kind, output, args.bound_overlay)
    console.print(f"SVG: {output}")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
    "plot": _cmd_plot,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    CLI のエントリポイント

    Args:
        argv: 引数リスト (省略時は sys.argv)

    Returns:
        int: 終了コード
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        set_console_level(logging.DEBUG)

    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ParameterError, OracleSizeError, PlotInputError) as e:
        logger.error(f"設定エラー: {e}")
        return EXIT_CONFIG
    except ContractViolationError as e:
        logger.error(f"契約違反: {e}", exc_info=True)
        return EXIT_VIOLATION
    except Exception as e:
        logger.error(f"予期しないエラーが発生しました: {e}", exc_info=True)
        return EXIT_VIOLATION
