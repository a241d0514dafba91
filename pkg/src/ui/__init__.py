"""
UI コンポーネント - コマンドラインと図の出力
"""
