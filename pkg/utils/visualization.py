import os
import logging
import numpy as np
import pandas as pd # type: ignore
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import seaborn as sns  # type: ignore
from typing import Dict, List, Optional, Sequence

from config.taxonomy import CLASS_NAMES, REPORT_ORDER

logger = logging.getLogger(__name__)


class EvalVisualization:
    """
    评估结果可视化
    """
    def __init__(self, output_path: str) -> None:
        os.makedirs(output_path, exist_ok=True)
        self.output_path = output_path

    def plot_confusion_matrix(self, conf_matrix: np.ndarray, head: str, tag: str = '') -> str:
        """
        绘制一个属性头的混淆矩阵

        :param conf_matrix: 混淆矩阵
        :type conf_matrix: np.ndarray
        :param head: 属性名
        :type head: str
        :param tag: 文件名后缀，如 ``video_unseen``
        :type tag: str
        :return: 图片路径
        :rtype: str
        """
        names = CLASS_NAMES.get(head, [str(i) for i in range(len(conf_matrix))])
        size = max(6, 0.45 * len(names))
        plt.figure(figsize=(size + 2, size))
        sns.heatmap(conf_matrix, annot=len(names) <= 8, fmt='d', cmap='Blues',
                    xticklabels=names, yticklabels=names)
        plt.xlabel('Predicted')
        plt.ylabel('Actual')
        plt.title(f'Confusion Matrix: {head}' + (f' ({tag})' if tag else ''))
        plt.tight_layout()
        path = os.path.join(self.output_path, f'confusion_{head}' + (f'_{tag}' if tag else '') + '.png')
        plt.savefig(path)
        plt.close()
        return path

    def plot_accuracy_table(self, table: pd.DataFrame, filename: str = 'accuracy.png') -> None:
        """
        按属性绘制各列准确率的分组柱状图

        :param table: 行为属性、列为各设置的准确率
        :type table: pd.DataFrame
        """
        long = table.reset_index().melt(id_vars=table.index.name or 'index', var_name='setting', value_name='accuracy')
        plt.figure(figsize=(12, 5))
        sns.barplot(data=long, x=table.index.name or 'index', y='accuracy', hue='setting')
        plt.xticks(rotation=45, ha='right')
        plt.ylim(0, 1)
        plt.grid(True, axis='y', alpha=0.3)
        plt.tight_layout()
        plt.savefig(os.path.join(self.output_path, filename))
        plt.close()

    def plot_confusion_matrices(self, matrices: Dict[str, np.ndarray], tag: str = '') -> None:
        """生成所有属性头的混淆矩阵"""
        for head in REPORT_ORDER:
            if head in matrices:
                self.plot_confusion_matrix(matrices[head], head, tag)


class TrainVisualization:
    """
    记录并可视化训练过程

    :param output_path: 输出目录
    :type output_path: str
    :param name: 模型名，历史文件为 ``training_history_<name>.csv``
    :type name: str
    """
    def __init__(self, output_path: str, name: str = 'model') -> None:
        os.makedirs(output_path, exist_ok=True)
        self.output_path = output_path
        self.name = name
        self.history: Dict[str, List[float]] = {
            'epochs': [],
            'train_loss': [],
            'val_loss': [],
            'train_acc': [],
            'val_acc': [],
            'lr': [],
        }

    def update(self, epoch: int, train_metrics: dict, val_metrics: dict, lr: Optional[float]) -> None:
        """
        更新训练过程中的指标

        :param epoch: 当前轮次
        :type epoch: int
        :param train_metrics: 训练集指标字典
        :type train_metrics: dict
        :param val_metrics: 验证集指标字典
        :type val_metrics: dict
        :param lr: 当前学习率
        :type lr: float
        """
        self.history['epochs'].append(epoch)
        self.history['train_loss'].append(train_metrics.get('loss', 0))
        self.history['val_loss'].append(val_metrics.get('loss', 0))
        self.history['train_acc'].append(train_metrics.get('acc', 0))
        self.history['val_acc'].append(val_metrics.get('acc', 0))
        self.history['lr'].append(lr if lr is not None else float('nan'))

    def _smooth_curve(self, values: Sequence[float], weight: float = 0.7) -> list:
        """
        指数滑动平均

        :param values: 待平滑的数据
        :type values: list
        :param weight: 平滑权重，默认为0.7
        :type weight: float
        :rtype: list
        """
        smoothed_values = []
        last = values[0] if len(values) else 0.0
        for value in values:
            last = last * weight + (1 - weight) * value
            smoothed_values.append(last)
        return smoothed_values

    def plot_curves(self, smoothing: bool = False) -> None:
        """
        绘制损失与平均准确率曲线

        :param smoothing: 是否进行平滑处理，默认为False
        :type smoothing: bool
        """
        if not self.history['epochs']:
            return
        prep = self._smooth_curve if smoothing else list
        fig, axes = plt.subplots(1, 2, figsize=(12, 5), sharex=True)

        axes[0].plot(self.history['epochs'], prep(self.history['train_loss']), 'b-', linewidth=2, label='Train Loss')
        axes[0].plot(self.history['epochs'], prep(self.history['val_loss']), 'r-', linewidth=2, label='Validation Loss')
        axes[0].set_xlabel('Epochs')
        axes[0].set_ylabel('Loss')
        axes[0].set_title('Training and Validation Loss')
        axes[0].legend()
        axes[0].grid(True, alpha=0.3)

        axes[1].plot(self.history['epochs'], prep(self.history['train_acc']), 'g-', linewidth=2, label='Train Accuracy')
        axes[1].plot(self.history['epochs'], prep(self.history['val_acc']), 'y-', linewidth=2, label='Validation Accuracy')
        axes[1].set_xlabel('Epochs')
        axes[1].set_ylabel('Mean Accuracy')
        axes[1].set_title('Training and Validation Accuracy')
        axes[1].legend()
        axes[1].grid(True, alpha=0.3)

        plt.tight_layout()
        plt.savefig(os.path.join(self.output_path, f'curves_{self.name}.png'), dpi=150)
        plt.close(fig)

    def save_metrics(self) -> str:
        """保存训练历史为 CSV"""
        path = os.path.join(self.output_path, f'training_history_{self.name}.csv')
        pd.DataFrame(self.history).to_csv(path, index=False)
        logger.debug("Saved training history to %s", path)
        return path

    def plot_all(self, smoothing: bool = False) -> None:
        self.plot_curves(smoothing)
        self.save_metrics()
