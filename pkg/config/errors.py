"""
错误类型定义

每种错误同时继承最接近的内置异常，调用方捕获 ``ValueError`` 等内置类型时依然有效。
"""


class TactileError(Exception):
    """本项目所有错误的基类"""


class CalibrationError(TactileError, ValueError):
    """相机内参奇异或外参不是刚体变换"""


class PoseError(TactileError, ValueError):
    """相机位于桌面以下或布料内部"""


class EmptyInputError(TactileError, ValueError):
    """输入为空（无有效深度像素、空训练集等）"""


class RasterSizeError(TactileError, ValueError):
    """栅格尺寸不足以构建金字塔"""


class MarginError(TactileError, IndexError):
    """中心差分需要 1 像素边距"""


class BoundsError(TactileError, IndexError):
    """坐标落在栅格范围之外"""


class ShapeError(TactileError, ValueError):
    """帧尺寸或特征长度不匹配"""


class TrainingError(TactileError, RuntimeError):
    """训练发散或训练数据不满足前置条件"""


class UnexplorableItemError(TactileError, RuntimeError):
    """深度图上找不到任何候选抓取点"""

    def __init__(self, item_id):
        super().__init__(f"Item '{item_id}' has no grip candidates")
        self.item_id = item_id


class LeakageError(TactileError, AssertionError):
    """训练/验证记录的物品出现在测试集中"""


class FormatError(TactileError, ValueError):
    """二进制文件魔数、版本或配置哈希不匹配"""


class ConfigError(TactileError, ValueError):
    """配置项未知或取值非法"""
