"""
衣物属性标签体系

11 个属性头的类别数、类别名称、随机基线（chance）以及在实体机器人上测得的参考准确率。
"""
from dataclasses import dataclass, fields, asdict
from typing import Dict, List, Sequence, Tuple

# 属性头顺序即模型输出顺序
HEADS: Tuple[Tuple[str, int], ...] = (
    ("thickness", 5),
    ("smoothness", 5),
    ("fuzziness", 4),
    ("season", 4),
    ("textile_type", 20),
    ("wash_method", 6),
    ("softness", 2),
    ("stretchiness", 2),
    ("durability", 2),
    ("woolen", 2),
    ("windproof", 2),
)
HEAD_NAMES: Tuple[str, ...] = tuple(name for name, _ in HEADS)
HEAD_DIMS: Tuple[int, ...] = tuple(dim for _, dim in HEADS)

# 报表中的行顺序
REPORT_ORDER: Tuple[str, ...] = (
    "thickness", "smoothness", "fuzziness", "softness", "stretchiness",
    "durability", "woolen", "windproof", "season", "textile_type", "wash_method",
)

CHANCE: Dict[str, float] = {
    "thickness": 0.2,
    "smoothness": 0.2,
    "fuzziness": 0.25,
    "softness": 0.5,
    "stretchiness": 0.5,
    "durability": 0.5,
    "woolen": 0.5,
    "windproof": 0.5,
    "season": 0.25,
    "textile_type": 0.05,
    "wash_method": 0.17,
}

CLASS_NAMES: Dict[str, List[str]] = {
    "thickness": ["very thin", "thin", "thick", "very thick", "extra thick"],
    "smoothness": ["very smooth", "smooth", "normal", "not smooth", "rough"],
    "fuzziness": ["not fuzzy", "a little fuzzy", "a lot fuzzy", "very fuzzy"],
    "season": ["all season", "summer", "spring/fall", "winter"],
    "textile_type": [
        "cotton", "satin", "polyester", "denim", "gabardine", "broad cloth", "parka",
        "leather", "crepe", "corduroy", "velvet", "flannel", "fleece", "hairy", "wool",
        "knit", "net", "suit", "woven", "other",
    ],
    "wash_method": [
        "machine wash warm",
        "machine wash cold",
        "machine wash cold, gentle cycles",
        "machine wash cold, gentle cycles, no tumble dry",
        "hand wash",
        "dry clean",
    ],
    "softness": ["no", "yes"],
    "stretchiness": ["no", "yes"],
    "durability": ["no", "yes"],
    "woolen": ["no", "yes"],
    "windproof": ["no", "yes"],
}

# 实体机器人实验的参考准确率（离线：已见/未见 × 单帧/序列；在线：无重试/有重试/易识别衣物）
REFERENCE_OFFLINE: Dict[str, Tuple[float, float, float, float]] = {
    "thickness": (0.89, 0.90, 0.67, 0.69),
    "smoothness": (0.92, 0.93, 0.76, 0.77),
    "fuzziness": (0.96, 0.96, 0.76, 0.76),
    "softness": (0.95, 0.95, 0.72, 0.76),
    "stretchiness": (0.98, 0.98, 0.80, 0.81),
    "durability": (0.97, 0.98, 0.95, 0.97),
    "woolen": (0.98, 0.98, 0.90, 0.89),
    "windproof": (0.96, 0.96, 0.87, 0.89),
    "season": (0.89, 0.90, 0.61, 0.63),
    "textile_type": (0.85, 0.89, 0.44, 0.48),
    "wash_method": (0.87, 0.92, 0.53, 0.56),
}
REFERENCE_ONLINE: Dict[str, Tuple[float, float, float]] = {
    "thickness": (0.59, 0.65, 0.72),
    "smoothness": (0.71, 0.74, 0.82),
    "fuzziness": (0.67, 0.74, 0.82),
    "softness": (0.60, 0.66, 0.72),
    "stretchiness": (0.74, 0.81, 0.88),
    "durability": (0.86, 0.86, 0.91),
    "woolen": (0.92, 0.91, 0.93),
    "windproof": (0.83, 0.82, 0.86),
    "season": (0.57, 0.64, 0.71),
    "textile_type": (0.37, 0.50, 0.59),
    "wash_method": (0.50, 0.60, 0.71),
}
REFERENCE_MEAN_TRIALS = 1.71
REFERENCE_EASY_FRACTION = 0.7742


def head_index(head) -> int:
    """属性名或下标 -> 下标"""
    if isinstance(head, str):
        if head not in HEAD_NAMES:
            raise KeyError(f"Unknown property head '{head}'")
        return HEAD_NAMES.index(head)
    index = int(head)
    if not 0 <= index < len(HEADS):
        raise KeyError(f"Property head index {index} out of range")
    return index


@dataclass(frozen=True)
class PropertyLabels:
    """
    一件衣物的 11 个属性真值

    字段顺序与 ``HEADS`` 一致。
    """
    thickness: int
    smoothness: int
    fuzziness: int
    season: int
    textile_type: int
    wash_method: int
    softness: int
    stretchiness: int
    durability: int
    woolen: int
    windproof: int

    def __post_init__(self):
        for (name, dim), field in zip(HEADS, fields(self)):
            value = getattr(self, field.name)
            if not isinstance(value, int) or isinstance(value, bool):
                object.__setattr__(self, field.name, int(value))
                value = int(value)
            if not 0 <= value < dim:
                raise ValueError(f"Label '{name}'={value} outside [0, {dim})")

    def as_tuple(self) -> Tuple[int, ...]:
        return tuple(getattr(self, name) for name in HEAD_NAMES)

    def as_dict(self) -> Dict[str, int]:
        return asdict(self)

    @classmethod
    def from_sequence(cls, values: Sequence[int]) -> "PropertyLabels":
        if len(values) != len(HEADS):
            raise ValueError(f"Expected {len(HEADS)} labels, got {len(values)}")
        return cls(*[int(v) for v in values])

    @classmethod
    def from_dict(cls, values: Dict[str, int]) -> "PropertyLabels":
        return cls(**{name: int(values[name]) for name in HEAD_NAMES})
