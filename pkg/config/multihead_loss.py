import torch
import torch.nn as nn
import torch.nn.functional as F
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


class MultiHeadLoss(nn.Module):
    """
    多标签分类损失：各属性头交叉熵之和

    :param class_weights: 每个头的类别权重（逆频率），None 表示不加权
    :type class_weights: list
    :param head_weights: 每个头的损失权重，None 表示全部为 1
    :type head_weights: list
    """
    def __init__(self, class_weights: Optional[Sequence[Optional[torch.Tensor]]] = None,
                 head_weights: Optional[Sequence[float]] = None):
        super(MultiHeadLoss, self).__init__()
        self.class_weights = list(class_weights) if class_weights is not None else None
        self.head_weights = list(head_weights) if head_weights is not None else None

    def forward(self, logits: List[torch.Tensor], targets: torch.Tensor) -> Tuple[torch.Tensor, Dict[str, float]]:
        """
        计算损失

        :param logits: 每个头的 logits，形状 (B, C_h)
        :type logits: list
        :param targets: 真实标签 (B, H)
        :type targets: torch.Tensor
        :return: 总损失和每个头的损失
        :rtype: tuple
        """
        total = 0.0
        per_head = {}
        for h, head_logits in enumerate(logits):
            weight = None
            if self.class_weights is not None and self.class_weights[h] is not None:
                weight = self.class_weights[h].to(head_logits.dtype)
            loss = F.cross_entropy(head_logits, targets[:, h].long(), weight=weight)
            if self.head_weights is not None:
                loss = loss * self.head_weights[h]
            per_head[f'head_{h}'] = loss.item()
            total = total + loss
        return total, per_head


def inverse_frequency_weights(labels: np.ndarray, head_dims: Sequence[int]) -> List[torch.Tensor]:
    """
    逆频率类别权重，缺失类别权重为 0

    :param labels: (N, H) 训练标签
    :type labels: np.ndarray
    :param head_dims: 每个头的类别数
    :type head_dims: list
    """
    weights = []
    for h, dim in enumerate(head_dims):
        counts = np.bincount(labels[:, h].astype(int), minlength=dim).astype(np.float64)
        present = counts > 0
        w = np.zeros(dim)
        w[present] = counts.sum() / (present.sum() * counts[present])
        weights.append(torch.from_numpy(w).float())
    return weights
