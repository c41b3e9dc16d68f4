"""
命令行入口 - ber / exit / trace / pcm gen|inspect
"""
import argparse
import logging
import math
import sys
from typing import List, Optional

from config_models import SimDefaults, ConfigError, load_config
from ldpc import (
    LdpcConstructionError, EnumerationGuardError, build_pcm, read_alist, write_alist,
    degree_profile, has_4_cycles, derive_generator
)
from models import Scheme
from sdp import SdpStructureError
from sim_service import sim_service
from storage.serializer import dumps_json

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def parse_snr(text: str) -> List[float]:
    """'a:b:step'（含端点）或单个数值"""
    parts = text.split(':')
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"SNR 格式应为 a:b:step 或单个数值: {text}")
    if len(values) == 1:
        return values
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"SNR 格式应为 a:b:step: {text}")
    start, stop, step = values
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"SNR 范围无效: {text}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"种子必须位于 [0, 2^64): {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='日志级别')
    common.add_argument('--quiet', action='store_true', help='关闭进度条')

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument('--config', help='JSON 配置文件路径')
    sim.add_argument('--seed', type=_seed, help='主随机种子')
    sim.add_argument('--out', help='输出文件路径')
    sim.add_argument('--scheme', choices=[s.value for s in Scheme], help='接收机方案')
    sim.add_argument('--snr', type=parse_snr, help='SNR 网格 a:b:step (dB)')
    sim.add_argument('--workers', type=int, help='并行进程数')

    parser = argparse.ArgumentParser(prog='mapsdr', description='LDPC 编码 MIMO 联合 MAP-SDR Turbo 接收机仿真')
    sub = parser.add_subparsers(dest='command', required=True)

    ber = sub.add_parser('ber', parents=[common, sim], help='BER 扫描')
    ber.add_argument('--frames', type=int, help='每个 SNR 点最大帧数')
    ber.add_argument('--min-errors', type=int, help='每个 SNR 点目标比特错误数')
    ber.add_argument('--timing', action='store_true', help='输出 wall_time 列')

    exit_p = sub.add_parser('exit', parents=[common, sim], help='检测器 EXIT 曲线')
    exit_p.add_argument('--frames', type=int, help='每个 EXIT 点的帧数')
    exit_p.add_argument('--compare', nargs='+', choices=[s.value for s in Scheme],
                        help='同时测量多个方案')

    trace = sub.add_parser('trace', parents=[common, sim], help='导出单帧迭代轨迹 (JSON-lines)')
    trace.add_argument('--frame-index', type=int, default=0, help='帧序号')
    trace.add_argument('--noiseless', action='store_true', help='无噪声帧')

    pcm = sub.add_parser('pcm', help='校验矩阵工具')
    pcm_sub = pcm.add_subparsers(dest='pcm_command', required=True)
    gen = pcm_sub.add_parser('gen', parents=[common], help='构造并写出 alist')
    gen.add_argument('--n', type=int, default=SimDefaults.CODE_N, help='码长')
    gen.add_argument('--k', type=int, default=SimDefaults.CODE_K, help='信息位长')
    gen.add_argument('--col-weight', type=int, default=SimDefaults.COL_WEIGHT, help='列重')
    gen.add_argument('--seed', type=_seed, default=1, help='构造种子')
    gen.add_argument('--strict-girth', action='store_true', help='无法避免 4 环时报错')
    gen.add_argument('--out', required=True, help='alist 输出路径')
    inspect = pcm_sub.add_parser('inspect', parents=[common], help='查看 alist 的度分布')
    inspect.add_argument('path', help='alist 文件路径')
    return parser


def _load(args, extra=None):
    overrides = {
        'seed': args.seed,
        'scheme': args.scheme,
        'snr_grid_db': args.snr,
        'workers': args.workers,
    }
    overrides.update(extra or {})
    return load_config(args.config, overrides)


def cmd_ber(args) -> int:
    cfg = _load(args, {'max_frames': args.frames, 'min_errors': args.min_errors})
    out = args.out or 'ber.csv'
    records = sim_service.run_ber_sweep(cfg, out, include_timing=args.timing, progress=not args.quiet)
    logger.info(f"BER 扫描完成: {len(records)} 条记录 → {out}")
    return 0


def cmd_exit(args) -> int:
    cfg = _load(args, {'exit_frames': args.frames})
    schemes = [Scheme(s) for s in args.compare] if args.compare else None
    out = args.out or 'exit.csv'
    points = sim_service.run_exit(cfg, schemes, out, progress=not args.quiet)
    logger.info(f"EXIT 完成: {len(points)} 个点 → {out}")
    return 0


def cmd_trace(args) -> int:
    cfg = _load(args)
    out = args.out or 'trace.jsonl'
    trace = sim_service.run_trace(cfg, frame_idx=args.frame_index, out_path=out, noiseless=args.noiseless)
    final = trace.final
    logger.info(f"轨迹导出完成: 迭代 {len(trace)} 次, parity_ok={final.parity_ok}, "
                f"bit_errors={final.bit_errors} → {out}")
    return 0


def cmd_pcm(args) -> int:
    if args.pcm_command == 'gen':
        pcm = build_pcm(args.n, args.k, args.col_weight, args.seed, strict_girth=args.strict_girth)
        write_alist(pcm, args.out)
        return 0

    pcm = read_alist(args.path)
    profile = degree_profile(pcm)
    summary = {
        'n': pcm.n,
        'm': pcm.m,
        'k': derive_generator(pcm).k,
        'column_degrees': {str(d): c for d, c in profile['column'].items()},
        'row_degrees': {str(d): c for d, c in profile['row'].items()},
        'has_4_cycles': has_4_cycles(pcm),
    }
    print(dumps_json(summary).decode())
    return 0


COMMANDS = {
    'ber': cmd_ber,
    'exit': cmd_exit,
    'trace': cmd_trace,
    'pcm': cmd_pcm,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    logging.getLogger().setLevel(getattr(logging, args.log_level))

    try:
        return COMMANDS[args.command](args)
    except (ConfigError, LdpcConstructionError, EnumerationGuardError, SdpStructureError) as e:
        logger.error(f"{e}")
        return 1
    except (ValueError, OSError) as e:
        logger.error(f"执行失败: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
