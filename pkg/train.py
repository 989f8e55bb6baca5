import argparse
import os
import json
import time
import copy
import logging
import torch
import numpy as np
import torch.optim as optim
from tqdm import tqdm
from torch.nn import BCEWithLogitsLoss
from torch.utils.data import DataLoader
from typing import List, Optional, Sequence, Tuple

from config.errors import EmptyInputError, TrainingError
from config.settings import GripTrainConfig, TrainConfig, load_settings, setup_logging
from config.taxonomy import HEAD_DIMS
from config.data_loader import (AugmentedFrameDataset, Corpus, GripCropDataset, GripRecord, TactileFeatureDataset,
                                filter_valid)
from config.transforms import get_train_transforms
from config.multihead_loss import MultiHeadLoss, inverse_frequency_weights
from network.model import GripQualityModel, MultiHeadModel, grip_features, save_model
from network.tactile import BankConfig, FilterBank, default_bank, select_sequence_frames
from utils.visualization import TrainVisualization

logger = logging.getLogger(__name__)


# 参数解析器
def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Train tactile property and grip quality models")
    parser.add_argument("--corpus", "--c", type=str, default="./corpus",
                        help="Corpus directory")
    parser.add_argument("--config", type=str, default=None,
                        help="YAML config file (defaults to config/defaults.yaml)")
    parser.add_argument("--seed", type=int, default=0,
                        help="Random seed")
    parser.add_argument("--epochs", "--e", type=int, default=None,
                        help="Number of epochs")
    parser.add_argument("--batch-size", "--bs", type=int, default=None,
                        help="Batch size")
    parser.add_argument("--lr", type=float, default=None,
                        help="Learning rate")
    parser.add_argument("--frames", type=int, choices=[1, 9], default=None,
                        help="Train only the single-frame (1) or the 9-frame (9) property model")
    parser.add_argument("--split", type=str, default=None,
                        help="Split name")
    parser.add_argument("--class-weighting", "--cw", action="store_true",
                        help="Inverse-frequency class weights in the property loss")
    parser.add_argument("--visualize", "--v", action="store_true",
                        help="Plot training curves after training is done")
    return parser.parse_args(argv)


def _head_correct(logits: Sequence[torch.Tensor], labels: torch.Tensor) -> np.ndarray:
    return np.array([(l.argmax(dim=1) == labels[:, h]).sum().item() for h, l in enumerate(logits)])


def train_epoch(model, dataloader, criterion, optimizer, progress=False):
    model.train()
    running_loss = 0.0
    correct = np.zeros(len(model.head_dims))

    iterator = tqdm(dataloader, desc="Training iteration", leave=False) if progress else dataloader
    for features, labels in iterator:
        optimizer.zero_grad()
        logits = model(features)
        loss, _ = criterion(logits, labels)
        if not torch.isfinite(loss):
            raise TrainingError(f"Training diverged: loss is {loss.item()}")
        loss.backward()
        optimizer.step()

        running_loss += loss.item() * features.size(0)
        correct += _head_correct([l.detach() for l in logits], labels)

    n = len(dataloader.dataset)
    head_acc = correct / n
    return {
        'loss': running_loss / n,
        'acc': float(head_acc.mean()),
        'head_acc': head_acc.tolist(),
    }


def val_epoch(model, dataloader, criterion):
    model.eval()
    running_loss = 0.0
    correct = np.zeros(len(model.head_dims))

    with torch.no_grad():
        for features, labels in dataloader:
            logits = model(features)
            loss, _ = criterion(logits, labels)
            running_loss += loss.item() * features.size(0)
            correct += _head_correct(logits, labels)

    n = len(dataloader.dataset)
    head_acc = correct / n
    return {
        'loss': running_loss / n,
        'acc': float(head_acc.mean()),
        'head_acc': head_acc.tolist(),
    }


def train_property_model(train_features: np.ndarray, train_labels: np.ndarray,
                         val_features: Optional[np.ndarray] = None, val_labels: Optional[np.ndarray] = None,
                         cfg: Optional[TrainConfig] = None, seed: int = 0, frames: int = 1, hidden: int = 128,
                         train_frames: Optional[np.ndarray] = None, bank: Optional[FilterBank] = None,
                         init_from: Optional[MultiHeadModel] = None,
                         viz: Optional[TrainVisualization] = None, progress: bool = False,
                         verbose: bool = False) -> MultiHeadModel:
    """
    训练多头属性分类器

    小批量 SGD 最小化各属性头交叉熵之和，返回验证集平均准确率最高的那一轮的模型。

    :param train_features: (N, D) / (N, T, D)，用于标准化；不增强时直接作为训练输入
    :type train_features: np.ndarray
    :param train_labels: (N, 11)
    :type train_labels: np.ndarray
    :param cfg: 训练超参数
    :type cfg: TrainConfig
    :param seed: 随机种子，决定初始化、批次顺序和每个 epoch 的增强偏移
    :type seed: int
    :param train_frames: (N, T, 48, 64) 选出的帧；给出且 ``cfg.augment`` 时每个 epoch 在线增强后重新提取特征
    :type train_frames: np.ndarray
    :param bank: 在线提取特征所用的滤波器组
    :type bank: FilterBank
    :param frames: 1 为单帧模型，否则为多帧池化模型
    :type frames: int
    :param init_from: 用于初始化多帧模型的单帧模型
    :type init_from: MultiHeadModel
    :return: 训练好的模型
    :rtype: MultiHeadModel
    """
    cfg = cfg or TrainConfig()
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if len(train_labels) == 0:
        raise EmptyInputError("Training set is empty")
    train_features = np.asarray(train_features, dtype=np.float64)
    in_dim = train_features.shape[-1]

    torch.manual_seed(seed)
    model = MultiHeadModel(in_dim, hidden, HEAD_DIMS, frames)
    if init_from is not None:
        model.init_from(init_from)
    else:
        model.standardize.fit(train_features)
    for head, classes in model.set_class_masks(train_labels):
        logger.warning("Head '%s' has no training samples for classes %s; training on present classes only",
                       head, classes)
    model.float()

    augmented = train_frames is not None and cfg.augment
    if augmented:
        bank = bank or default_bank()
        transform = get_train_transforms(cfg.aug_amplitude, contact_threshold=bank.config.contact_threshold)
        train_dataset = AugmentedFrameDataset(train_frames, train_labels, transform, bank, seed)
    else:
        train_dataset = TactileFeatureDataset(train_features, train_labels)
    generator = torch.Generator().manual_seed(seed)
    train_loader = DataLoader(train_dataset, batch_size=cfg.batch_size, shuffle=True, num_workers=0,
                              generator=generator)
    val_loader = None
    if val_labels is not None and len(val_labels) > 0:
        val_loader = DataLoader(TactileFeatureDataset(val_features, val_labels), batch_size=cfg.batch_size,
                                shuffle=False, num_workers=0)

    class_weights = inverse_frequency_weights(train_labels, HEAD_DIMS) if cfg.class_weighting else None
    criterion = MultiHeadLoss(class_weights, cfg.head_weights)
    optimizer = optim.SGD(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    best_acc, best_state, best_epoch = -1.0, None, -1
    for epoch in range(cfg.epochs):
        start_time = time.time()
        train_dataset.set_epoch(epoch)
        train_metrics = train_epoch(model, train_loader, criterion, optimizer, progress)
        val_metrics = val_epoch(model, val_loader, criterion) if val_loader is not None else {}

        score = val_metrics.get('acc', train_metrics['acc'])
        if score > best_acc:
            best_acc, best_epoch = score, epoch
            best_state = copy.deepcopy(model.state_dict())

        if viz is not None:
            viz.update(epoch, train_metrics, val_metrics, optimizer.param_groups[0]['lr'])
        if verbose:
            print(f"Epoch {epoch+1}/{cfg.epochs} | "
                  f"Train Loss: {train_metrics['loss']:.4f} | "
                  f"Train ACC: {train_metrics['acc']:.4f} | "
                  + (f"Val Loss: {val_metrics['loss']:.4f} | Val ACC: {val_metrics['acc']:.4f} | "
                     if val_metrics else "")
                  + f"Time: {time.time() - start_time:.2f}s")

    if best_state is not None:
        model.load_state_dict(best_state)
    model.meta.update({
        'kind': 'property',
        'frames': frames,
        'seed': seed,
        'lr': cfg.lr,
        'epochs': cfg.epochs,
        'best_epoch': best_epoch,
        'best_acc': best_acc,
        'augmentation': {'amplitude': cfg.aug_amplitude if augmented else 0.0, 'per_epoch': augmented},
        'class_weighting': cfg.class_weighting,
    })
    logger.info("Property model (frames=%d): best mean accuracy %.4f at epoch %d", frames, best_acc, best_epoch + 1)
    return model.eval()


def _binary_metrics(logits: torch.Tensor, labels: torch.Tensor) -> int:
    return int(((logits >= 0).float() == labels).sum().item())


def train_grip_model(train_features: np.ndarray, train_labels: np.ndarray,
                     val_features: Optional[np.ndarray] = None, val_labels: Optional[np.ndarray] = None,
                     cfg: Optional[GripTrainConfig] = None, seed: int = 0,
                     viz: Optional[TrainVisualization] = None, verbose: bool = False) -> GripQualityModel:
    """
    训练抓取质量模型

    :param train_features: (N, 211) ``grip_features`` 的输出
    :type train_features: np.ndarray
    :param train_labels: (N,) 是否产生有效触觉数据
    :type train_labels: np.ndarray
    :return: 训练好的模型
    :rtype: GripQualityModel
    """
    cfg = cfg or GripTrainConfig()
    train_labels = np.asarray(train_labels, dtype=bool)
    n_pos = int(train_labels.sum())
    n_neg = len(train_labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingError(f"Grip model needs both classes, got {n_pos} successful and {n_neg} failed grips")

    torch.manual_seed(seed)
    model = GripQualityModel(np.asarray(train_features).shape[1])
    model.standardize.fit(train_features)

    train_dataset = GripCropDataset(train_features, train_labels)
    generator = torch.Generator().manual_seed(seed)
    train_loader = DataLoader(train_dataset, batch_size=cfg.batch_size, shuffle=True, num_workers=0,
                              generator=generator)
    # 正负样本不平衡
    criterion = BCEWithLogitsLoss(pos_weight=torch.tensor([n_neg / n_pos]))
    optimizer = optim.SGD(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    val_x = val_y = None
    if val_labels is not None and len(val_labels) > 0:
        val_x = torch.from_numpy(np.asarray(val_features, dtype=np.float32))
        val_y = torch.from_numpy(np.asarray(val_labels, dtype=np.float32))

    best_acc, best_state, best_epoch = -1.0, None, -1
    for epoch in range(cfg.epochs):
        model.train()
        running_loss, correct = 0.0, 0
        for features, labels in train_loader:
            optimizer.zero_grad()
            logits = model(features)
            loss = criterion(logits, labels)
            if not torch.isfinite(loss):
                raise TrainingError(f"Grip model training diverged: loss is {loss.item()}")
            loss.backward()
            optimizer.step()
            running_loss += loss.item() * features.size(0)
            correct += _binary_metrics(logits.detach(), labels)
        train_metrics = {'loss': running_loss / len(train_dataset), 'acc': correct / len(train_dataset)}

        val_metrics = {}
        if val_x is not None:
            model.eval()
            with torch.no_grad():
                logits = model(val_x)
                val_metrics = {'loss': criterion(logits, val_y).item(),
                               'acc': _binary_metrics(logits, val_y) / len(val_y)}

        score = val_metrics.get('acc', train_metrics['acc'])
        if score > best_acc:
            best_acc, best_epoch = score, epoch
            best_state = copy.deepcopy(model.state_dict())
        if viz is not None:
            viz.update(epoch, train_metrics, val_metrics, optimizer.param_groups[0]['lr'])
        if verbose and (epoch + 1) % 20 == 0:
            print(f"Epoch {epoch+1}/{cfg.epochs} | Train Loss: {train_metrics['loss']:.4f} | "
                  f"Train ACC: {train_metrics['acc']:.4f}"
                  + (f" | Val ACC: {val_metrics['acc']:.4f}" if val_metrics else ""))

    if best_state is not None:
        model.load_state_dict(best_state)
    model.meta.update({'kind': 'grip', 'seed': seed, 'lr': cfg.lr, 'epochs': cfg.epochs,
                       'best_epoch': best_epoch, 'best_acc': best_acc, 'pos_weight': n_neg / n_pos})
    logger.info("Grip model: best accuracy %.4f at epoch %d", best_acc, best_epoch + 1)
    return model.eval()


def label_matrix(records: Sequence[GripRecord], items: dict) -> np.ndarray:
    """(N, 11) 标签"""
    return np.array([items[r.item_id].labels.as_tuple() for r in records], dtype=np.int64).reshape(-1, len(HEAD_DIMS))


def stored_features(corpus: Corpus, records: Sequence[GripRecord], bank: FilterBank, frames: int) -> np.ndarray:
    """读取采集时保存的特征：单帧 (N, D)，多帧 (N, frames, D)"""
    dim = bank.config.feature_dim
    shape = (0, dim) if frames == 1 else (0, frames, dim)
    rows = [corpus.read_features(r.item_id, r.iteration, bank.config.digest(), dim, frames) for r in records]
    return np.stack(rows) if rows else np.zeros(shape)


def selected_frames(corpus: Corpus, records: Sequence[GripRecord], n: int, step: int, frames: int) -> np.ndarray:
    """(N, frames, 48, 64) 选出的帧，单帧模型只保留最大接触帧"""
    samples = []
    for r in tqdm(records, desc="Loading sequences", leave=False):
        chosen = select_sequence_frames(corpus.read_sequence(r), n, step)
        samples.append(np.stack(chosen[-frames:]))
    return np.stack(samples)


def grip_dataset(corpus: Corpus, records: Sequence[GripRecord], bank: FilterBank) -> Tuple[np.ndarray, np.ndarray]:
    """深度窗口特征与有效接触标签"""
    if not records:
        return np.zeros((0, bank.config.feature_dim + 3)), np.zeros(0, dtype=bool)
    crops = np.stack([corpus.read_crop(r.item_id, r.iteration).values for r in records])
    return grip_features(crops, bank), np.array([r.valid_contact for r in records], dtype=bool)


def split_records(records: Sequence[GripRecord], keys) -> List[GripRecord]:
    keys = set(keys)
    return [r for r in records if r.key in keys]


def main(argv=None):
    args = parse_args(argv)
    setup_logging()
    settings = load_settings(args.config).override(
        train__epochs=args.epochs, train__batch_size=args.batch_size, train__lr=args.lr,
        grip_train__epochs=args.epochs, grip_train__batch_size=args.batch_size, grip_train__lr=args.lr,
        train__class_weighting=True if args.class_weighting else None,
    )
    corpus = Corpus(args.corpus)
    split_name = args.split or settings.corpus.split_name
    output = os.path.join(args.corpus, 'models')
    os.makedirs(output, exist_ok=True)
    settings.dump(os.path.join(output, 'config.yaml'))

    print("Start setting...")
    bank = FilterBank(BankConfig.from_settings(settings.bank)).eval()
    items = {item.item_id: item for item in corpus.load_items()}
    records = corpus.load_records()
    split = corpus.load_split(split_name)
    print(f"Items: {len(items)} | Records: {len(records)} | Split: {split.name}")
    print("=" * 50)

    # 属性模型只使用有效接触的数据
    train_records = filter_valid(split_records(records, split.train_iterations))
    val_records = filter_valid(split_records(records, split.val_iterations))
    print(f"Train dataset length: {len(train_records)}")
    print(f"Validation dataset length: {len(val_records)}")
    if not train_records:
        raise EmptyInputError(f"Split '{split.name}' has no valid-contact training records")
    y_train = label_matrix(train_records, items)
    y_val = label_matrix(val_records, items)

    tcfg = settings.train
    n_sel, step = settings.tactile.n_frames, settings.tactile.frame_step
    wanted = [args.frames] if args.frames else [1, n_sel]
    results_dir = corpus.results_dir
    metas = {}

    single = None
    for frames in wanted:
        name = 'image' if frames == 1 else 'video'
        print("=" * 50)
        print(f"Training {name} property model ({frames} frame{'s' if frames > 1 else ''})...")
        print("=" * 50)
        x_train = stored_features(corpus, train_records, bank, frames)
        train_frames = selected_frames(corpus, train_records, n_sel, step, frames) if tcfg.augment else None
        x_val = stored_features(corpus, val_records, bank, frames)

        viz = TrainVisualization(results_dir, f'property_{name}')
        model = train_property_model(x_train, y_train, x_val, y_val, tcfg, args.seed, frames, settings.model.hidden,
                                     train_frames=train_frames, bank=bank,
                                     init_from=single if frames > 1 else None, viz=viz, verbose=True)
        if frames == 1:
            single = model
        model.meta['split'] = split.name
        save_model(corpus.model_path(f'property_{name}'), model, bank.config.digest())
        metas[f'property_{name}'] = model.meta
        viz.save_metrics()
        if args.visualize:
            viz.plot_all()
        print(f"Saved {corpus.model_path(f'property_{name}')}")

    print("=" * 50)
    print("Training grip quality model...")
    print("=" * 50)
    x_gtrain, y_gtrain = grip_dataset(corpus, split_records(records, split.train_iterations), bank)
    x_gval, y_gval = grip_dataset(corpus, split_records(records, split.val_iterations), bank)
    print(f"Grip samples: {len(y_gtrain)} train ({int(y_gtrain.sum())} successful), {len(y_gval)} val")
    viz = TrainVisualization(results_dir, 'grip')
    grip_model = train_grip_model(x_gtrain, y_gtrain, x_gval, y_gval, settings.grip_train, args.seed, viz=viz,
                                  verbose=True)
    grip_model.meta['split'] = split.name
    save_model(corpus.model_path('grip'), grip_model, bank.config.digest())
    metas['grip'] = grip_model.meta
    viz.save_metrics()
    if args.visualize:
        viz.plot_all()

    with open(os.path.join(output, 'training_meta.json'), 'w') as f:
        json.dump(metas, f, indent=2, sort_keys=True)
    print("=" * 50)
    print("Training finished!")
    return 0


if __name__ == "__main__":
    main()
