"""
命令行入口

``python cli.py <subcommand> [flags]``，子命令依次对应流水线的各个阶段脚本：

    gen      生成合成衣物语料（data/generate_corpus.py）
    collect  随机抓取并写入触觉记录（collect.py）
    train    训练属性模型和抓取质量模型（train.py）
    eval     离线评估，seen/unseen × 单帧/9 帧（eval.py）
    explore  闭环主动探索评估（explore.py）
    report   合并结果表（report.py）

退出码：0 成功；1 运行错误；2 用法错误；3 文件缺失或格式错误。
"""
import sys
import logging
from typing import Callable, Dict, List, Optional

from config.errors import FormatError, TactileError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _stage(name: str) -> Callable:
    # 延迟导入：``report`` 等轻量子命令不必加载 torch
    if name == 'gen':
        from data.generate_corpus import main
    elif name == 'collect':
        from collect import main
    elif name == 'train':
        from train import main
    elif name == 'eval':
        from eval import main
    elif name == 'explore':
        from explore import main
    else:
        from report import main
    return main


COMMANDS: Dict[str, str] = {
    'gen': "Synthesize a clothing corpus",
    'collect': "Grip every item at random candidates and record tactile data",
    'train': "Train the property models and the grip quality model",
    'eval': "Offline property accuracy and grip quality accuracy",
    'explore': "Closed-loop active exploration on the unseen items",
    'report': "Merge result tables with reference accuracies",
}


def usage() -> str:
    lines = ["usage: cli.py <subcommand> [flags]", "", "subcommands:"]
    lines += [f"  {name:<9}{text}" for name, text in COMMANDS.items()]
    return "\n".join(lines)


def run(argv: Optional[List[str]] = None) -> int:
    """
    分发子命令并把异常映射为退出码

    :param argv: 命令行参数（不含程序名），默认取 ``sys.argv[1:]``
    :type argv: list or None
    :return: 退出码
    :rtype: int
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ('-h', '--help'):
        print(usage())
        return EXIT_OK if argv else EXIT_USAGE
    command, rest = argv[0], argv[1:]
    if command not in COMMANDS:
        print(f"cli.py: error: unknown subcommand '{command}'", file=sys.stderr)
        print(usage(), file=sys.stderr)
        return EXIT_USAGE

    try:
        code = _stage(command)(rest)
    except SystemExit as exc:
        # argparse 用法错误为 2，--help 为 0
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (FileNotFoundError, FormatError, OSError) as exc:
        print(f"{command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TactileError as exc:
        print(f"{command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        logger.debug("Unhandled error in %s", command, exc_info=True)
        print(f"{command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if code is None else int(code)


if __name__ == "__main__":
    sys.exit(run())
