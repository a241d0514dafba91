"""
ファイル操作ユーティリティ
- 出力ファイル命名
- CSV テーブルの保存・読み込み
"""

import datetime
import re
from pathlib import Path
from typing import Optional, Sequence, Union

import pandas as pd

from src.utils.logger import app_logger as logger


def sanitize_filename(name: str) -> str:
    """
    ファイル名として不適切な文字を置換し、整形する。

    Args:
        name: 整形前のファイル名候補

    Returns:
        str: 整形後のファイル名
    """
    name = re.sub(r'[\\/:*?"<>|\s]', '_', name)
    name = re.sub(r'_+', '_', name).strip('_')
    if not name:
        name = "untitled"
    return name


def default_output_filename(output_dir: Path, stem: str, ext: str = ".csv") -> Path:
    """
    デフォルトの出力ファイル名を生成する。
    衝突を避けるために連番を付与する。

    Args:
        output_dir: 出力ディレクトリ
        stem: ファイル名の主部 (例: "run_cima_N4")
        ext: 拡張子 (例: ".csv")

    Returns:
        Path: 生成されたファイルパス
    """
    base_name = f"{datetime.datetime.now():%Y%m%d}_{sanitize_filename(stem)}"
    output_path = output_dir / f"{base_name}{ext}"
    counter = 1
    while output_path.exists():
        output_path = output_dir / f"{base_name}_{counter}{ext}"
        counter += 1
    return output_path


def save_csv_table(table: pd.DataFrame, output_path: Union[str, Path],
                   float_format: Optional[str] = None, use_bom: bool = False) -> Path:
    """
    DataFrame を CSV として保存する。同じ表からは常に同じバイト列が得られる。

    Args:
        table: 保存する表
        output_path: 出力ファイルパス
        float_format: 浮動小数点の書式 (None なら repr 相当)
        use_bom: UTF-8 with BOMを使用するか (Excel での文字化け防止)

    Returns:
        Path: 保存したファイルパス

    Raises:
        OSError: 書き込みに失敗した場合
    """
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    encoding = "utf-8-sig" if use_bom else "utf-8"
    table.to_csv(output_path, index=False, float_format=float_format,
                 encoding=encoding, lineterminator="\n")
    logger.info(f"CSV を保存しました: {output_path} ({len(table)} 行)")
    return output_path


def load_csv_table(input_path: Union[str, Path],
                   required_columns: Sequence[str] = ()) -> pd.DataFrame:
    """
    CSV を読み込み、必要な列が揃っているか確認する。

    Args:
        input_path: 入力ファイルパス
        required_columns: 存在を要求する列名

    Returns:
        pd.DataFrame: 読み込んだ表

    Raises:
        FileNotFoundError: ファイルが存在しない場合
        KeyError: 必要な列が欠けている場合 (最初に見つかった列名を含む)
    """
    input_path = Path(input_path)
    if not input_path.is_file():
        raise FileNotFoundError(f"入力ファイルが見つかりません: {input_path}")
    table = pd.read_csv(input_path)
    for column in required_columns:
        if column not in table.columns:
            raise KeyError(column)
    logger.debug(f"CSV を読み込みました: {input_path} ({len(table)} 行)")
    return table
