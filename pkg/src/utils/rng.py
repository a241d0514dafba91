"""
乱数ストリーム管理 - マスターシードから用途別・ユーザー別のストリームを導出

ストリームは (master_seed, 用途, ユーザー番号) の組を SeedSequence に渡して生成する。
用途ごとに独立なので、プロトコルを追加・変更しても到着系列は変化しない。
"""

from typing import List

import numpy as np

# 用途タグ (値を変えると既存の実験結果が再現できなくなるので固定)
ARRIVAL_STREAM = 0
DECISION_STREAM = 1
ANALYSIS_STREAM = 2


def derive_stream(master_seed: int, purpose: int, user: int = 0) -> np.random.Generator:
    """
    用途とユーザー番号を混ぜたシードから Generator を生成する。

    Args:
        master_seed: 実験全体のマスターシード (非負整数)
        purpose: 用途タグ (ARRIVAL_STREAM など)
        user: ユーザー番号 (0始まり)

    Returns:
        np.random.Generator: 決定的な乱数ストリーム
    """
    if master_seed < 0:
        raise ValueError(f"シードは非負整数である必要があります: {master_seed}")
    return np.random.default_rng(np.random.SeedSequence([master_seed, purpose, user]))


def arrival_streams(master_seed: int, n_users: int) -> List[np.random.Generator]:
    """ユーザーごとの到着ストリームを返す"""
    return [derive_stream(master_seed, ARRIVAL_STREAM, n) for n in range(n_users)]


def decision_streams(master_seed: int, n_users: int) -> List[np.random.Generator]:
    """ユーザーごとの送信判断ストリームを返す (確率的プロトコル用)"""
    return [derive_stream(master_seed, DECISION_STREAM, n) for n in range(n_users)]
