"""
텍스트 텐서 체크포인트 (분류기/학습기 공용)

    RPT-TENSOR 1
    kind risk-classifier
    meta hidden_dim 64
    tensor W1 64x6
    <행마다 float.hex 값, 공백 구분>
    ...
    end

같은 텐서면 바이트까지 같은 파일이 나온다.
"""

import ast
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from config.settings import CHECKPOINT_CONFIG
from src.errors import CheckpointError

PathLike = Union[str, Path]


def _format_meta(value: Any) -> str:
    if isinstance(value, (bool, int, str)) or value is None:
        return repr(value)
    if isinstance(value, float):
        return repr(float(value))
    raise CheckpointError(f"meta 값 형식을 저장할 수 없습니다: {type(value).__name__}")


def dumps_tensors(kind: str, meta: Dict[str, Any], tensors: Dict[str, np.ndarray]) -> str:
    lines = [f"{CHECKPOINT_CONFIG['MAGIC']} {CHECKPOINT_CONFIG['VERSION']}", f"kind {kind}"]
    for key, value in meta.items():
        lines.append(f"meta {key} {_format_meta(value)}")
    for name, array in tensors.items():
        a = np.asarray(array, dtype=np.float64)
        if a.ndim == 0:
            a = a.reshape(1)
        shape = "x".join(str(d) for d in a.shape)
        lines.append(f"tensor {name} {shape}")
        rows = a.reshape(a.shape[0], -1)
        for row in rows:
            lines.append(" ".join(float(v).hex() for v in row))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_tensors(path: PathLike, kind: str, meta: Dict[str, Any],
                 tensors: Dict[str, np.ndarray]):
    Path(path).write_text(dumps_tensors(kind, meta, tensors), encoding="utf-8")


def loads_tensors(text: str, expected_kind: str, path: str = "<memory>"
                  ) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != f"{CHECKPOINT_CONFIG['MAGIC']} {CHECKPOINT_CONFIG['VERSION']}":
        raise CheckpointError("헤더(매직/버전)가 올바르지 않습니다", path=path)
    if len(lines) < 2 or lines[1] != f"kind {expected_kind}":
        raise CheckpointError(f"kind 가 {expected_kind} 이 아닙니다", path=path)

    meta: Dict[str, Any] = {}
    tensors: Dict[str, np.ndarray] = {}
    i = 2
    try:
        while i < len(lines) and lines[i].startswith("meta "):
            _, key, raw = lines[i].split(" ", 2)
            meta[key] = ast.literal_eval(raw)
            i += 1
        while i < len(lines) and lines[i].startswith("tensor "):
            _, name, shape_txt = lines[i].split(" ")
            shape = tuple(int(d) for d in shape_txt.split("x"))
            n_rows = shape[0]
            row_len = int(np.prod(shape[1:])) if len(shape) > 1 else 1
            rows = []
            for row_line in lines[i + 1:i + 1 + n_rows]:
                values = [float.fromhex(tok) for tok in row_line.split(" ")]
                if len(values) != row_len:
                    raise CheckpointError(f"텐서 {name} 의 행 길이가 맞지 않습니다", path=path)
                rows.append(values)
            if len(rows) != n_rows:
                raise CheckpointError(f"텐서 {name} 의 행 수가 부족합니다", path=path)
            array = np.asarray(rows, dtype=np.float64).reshape(shape)
            if not np.all(np.isfinite(array)):
                raise CheckpointError(f"텐서 {name} 에 비유한 값이 있습니다", path=path)
            tensors[name] = array
            i += 1 + n_rows
    except CheckpointError:
        raise
    except (ValueError, SyntaxError, IndexError) as e:
        raise CheckpointError(f"{i + 1}번째 줄을 해석할 수 없습니다 ({e})", path=path) from e

    if i != len(lines) - 1 or lines[i] != "end":
        raise CheckpointError("end 표식이 없거나 뒤에 내용이 남아 있습니다", path=path)
    return meta, tensors


def load_tensors(path: PathLike, expected_kind: str
                 ) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    p = Path(path)
    if not p.is_file():
        raise CheckpointError("체크포인트 파일이 없습니다", path=str(p))
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise CheckpointError(f"읽을 수 없습니다 ({e})", path=str(p)) from e
    return loads_tensors(text, expected_kind, path=str(p))


def require_tensors(tensors: Dict[str, np.ndarray], shapes: Dict[str, Tuple[int, ...]],
                    path: str):
    """필요한 텐서가 모두 있고 모양이 맞는지 확인"""
    for name, shape in shapes.items():
        if name not in tensors:
            raise CheckpointError(f"텐서 {name} 이(가) 없습니다", path=path)
        if tensors[name].shape != tuple(shape):
            raise CheckpointError(
                f"텐서 {name} 모양 {tensors[name].shape} != {tuple(shape)}", path=path
            )
