"""
esgnet command line interface
"""

import argparse
import json
import sys
from pathlib import Path
from typing import (
    List,
    Optional
)

from .core.config import RunConfig
from .core.dataset import (
    VideoSample,
    as_split,
    find_video,
    load_split
)
from .core.enums import Split
from .core.exceptions import (
    ConfigError,
    EsgNetException
)
from .core.logger import Logger
from .core.meta import PACKAGE_METADATA_PARSER
from .core.multi_step_feedback import LoggingFeedback

DEFAULT_CONFIG_PATH = 'config.json'
AUDIO_FILE_TAG = '_audio'
VISUAL_FILE_TAG = '_visual'


def _run_config(args) -> RunConfig:
    """
    Loads the run config and applies command line overrides
    """
    cfg = RunConfig.load(args.config) if getattr(args, 'config', None) \
        else RunConfig()
    if getattr(args, 'seed', None) is not None:
        cfg.seed = args.seed
        cfg.model.seed = args.seed
        cfg.synth.seed = args.seed
    if getattr(args, 'data', None):
        cfg.data_dir = args.data
    cfg.validate()
    return cfg


def _load_model(args, cfg: RunConfig):
    """
    Builds a model from a checkpoint. The checkpoint's own model config
    is used unless a config file was given, in which case the two must
    agree.
    """
    # pylint: disable=import-outside-toplevel
    from .core.checkpoint import (
        load_checkpoint,
        restore
    )
    from .core.model import ESGNet

    checkpoint = load_checkpoint(args.checkpoint)
    model_cfg = cfg.model if args.config else checkpoint.model_config()
    model = ESGNet(model_cfg)
    restore(model, checkpoint, model_cfg)
    return model


def _output_dir(args, default) -> Path:
    return Path(args.out) if args.out else Path(default)


def cmd_config_init(args) -> int:
    """
    Writes a config file holding every default
    """
    path = Path(args.out or DEFAULT_CONFIG_PATH)
    RunConfig().save(path)
    print(path)
    return 0


def cmd_generate(args) -> int:
    """
    Writes the synthetic dataset
    """
    # pylint: disable=import-outside-toplevel
    from .core.synth import write_dataset

    cfg = _run_config(args)
    data_dir = _output_dir(args, cfg.data_dir)
    dataset = write_dataset(cfg.synth, data_dir, args.workers,
                            LoggingFeedback('generate'))
    Logger.instance().log_message_json({
        'type': Logger.DATASET,
        'data_dir': str(data_dir),
        'videos': {Split.to_string(s): len(v) for s, v in dataset.items()},
    })
    return 0


def cmd_train(args) -> int:
    """
    Trains a model, optionally resuming from a checkpoint
    """
    # pylint: disable=import-outside-toplevel
    from .core.trainer import Trainer

    cfg = _run_config(args)
    output_dir = _output_dir(args, cfg.output_dir)
    cfg.output_dir = str(output_dir)
    data_dir = Path(cfg.data_dir)
    train_samples = load_split(data_dir, Split.Train)
    if not train_samples:
        raise ConfigError('no training videos in {}'.format(data_dir))
    val_samples = load_split(data_dir, Split.Val)

    trainer = Trainer(cfg, output_dir=output_dir,
                      feedback=LoggingFeedback('train'),
                      status_changed=Logger.instance().log_message)
    if args.checkpoint:
        trainer.resume(args.checkpoint)
    cfg.save(output_dir / DEFAULT_CONFIG_PATH)
    state = trainer.train(train_samples, val_samples)
    Logger.instance().log_message_json({
        'type': Logger.TRAIN_STEP,
        'finished': True,
        'step': state.step,
        'epoch': state.epoch,
        'best_val_avg_map': state.best_score,
    })
    return 0


def cmd_eval(args) -> int:
    """
    Scores a checkpoint on a split and writes the report files
    """
    # pylint: disable=import-outside-toplevel
    from .core.inference import (
        evaluate_split,
        write_detections,
        write_report
    )

    cfg = _run_config(args)
    model = _load_model(args, cfg)
    split = as_split(args.split)
    samples = load_split(Path(cfg.data_dir), split)
    report, results = evaluate_split(model, samples, args.workers,
                                     LoggingFeedback('eval'),
                                     timed=args.timing)
    output_dir = _output_dir(args, Path(args.checkpoint).parent /
                             'eval_{}'.format(Split.to_string(split)))
    write_report(output_dir, report)
    write_detections(output_dir, results)
    sys.stdout.write(report.to_text())
    return 0


def _feature_file_samples(paths: List[str]) -> List[VideoSample]:
    """
    Pairs ``<id>_audio.davf`` files with their ``<id>_visual.davf``
    siblings
    """
    # pylint: disable=import-outside-toplevel
    from .core.feature_io import load_features

    res = []
    for audio_path in map(Path, paths):
        stem = audio_path.stem
        if not stem.endswith(AUDIO_FILE_TAG):
            raise ConfigError(
                '{} is not an audio feature file'.format(audio_path))
        video = stem[:-len(AUDIO_FILE_TAG)]
        visual_path = audio_path.with_name(
            video + VISUAL_FILE_TAG + audio_path.suffix)
        res.append(VideoSample(id=video,
                               audio=load_features(audio_path),
                               visual=load_features(visual_path),
                               events=[]))
    return res


def cmd_infer(args) -> int:
    """
    Writes detections and the route log for feature files, video ids or
    a whole split
    """
    # pylint: disable=import-outside-toplevel
    from .core.inference import (
        run_inference,
        write_detections
    )

    cfg = _run_config(args)
    model = _load_model(args, cfg)
    data_dir = Path(cfg.data_dir)
    if args.features:
        samples = _feature_file_samples(args.features)
    elif args.ids:
        samples = [find_video(data_dir, i) for i in args.ids]
    else:
        samples = load_split(data_dir, as_split(args.split))
    results = run_inference(model, samples, args.workers,
                            LoggingFeedback('infer'))
    output_dir = _output_dir(args, Path(args.checkpoint).parent / 'infer')
    write_detections(output_dir, results)
    Logger.instance().log_message_json({
        'type': Logger.INFERENCE,
        'videos': len(results),
        'detections': sum(len(r.candidates) for r in results),
        'output_dir': str(output_dir),
    })
    return 0


def cmd_dump_attn(args) -> int:
    """
    Exports the attention maps of one video as CSV files
    """
    # pylint: disable=import-outside-toplevel
    from .core.attention_export import export_attention

    cfg = _run_config(args)
    model = _load_model(args, cfg)
    split = as_split(args.split) if args.split else None
    sample = find_video(Path(cfg.data_dir), args.video_id, split)
    output_dir = _output_dir(args, Path(args.checkpoint).parent /
                             'attention')
    for path in export_attention(model, sample, output_dir):
        print(path)
    return 0


def cmd_summary(args) -> int:
    """
    Prints parameter counts per top-level component
    """
    # pylint: disable=import-outside-toplevel
    from .core.config import ModelConfig
    from .core.model import ESGNet

    model_cfg = ModelConfig.published() if args.published else \
        _run_config(args).model
    summary = ESGNet(model_cfg).parameter_summary()
    print(json.dumps(summary, indent=2))
    return 0


def _add_common(parser: argparse.ArgumentParser,
                checkpoint: bool = False,
                split: Optional[str] = None):
    parser.add_argument('--config', help='run config JSON file')
    parser.add_argument('--seed', type=int, help='overrides every seed')
    parser.add_argument('--out', help='output file or directory')
    parser.add_argument('--data', help='dataset directory')
    if checkpoint:
        parser.add_argument('--checkpoint', required=True,
                            help='checkpoint file')
    if split is not None:
        parser.add_argument('--split', default=split or None,
                            choices=[Split.to_string(s) for s in Split])


def build_parser() -> argparse.ArgumentParser:
    """
    Creates the argument parser
    """
    parser = argparse.ArgumentParser(
        prog='esgnet',
        description='Dense audio-visual event localization')
    parser.add_argument('--version', action='version',
                        version=PACKAGE_METADATA_PARSER.get_version())
    commands = parser.add_subparsers(dest='command', required=True)

    config = commands.add_parser('config', help='config file tools')
    config_commands = config.add_subparsers(dest='config_command',
                                            required=True)
    init = config_commands.add_parser('init',
                                      help='write a config with defaults')
    init.add_argument('--out', help='destination, config.json by default')
    init.set_defaults(func=cmd_config_init)

    generate = commands.add_parser('generate',
                                   help='write the synthetic dataset')
    _add_common(generate)
    generate.add_argument('--workers', type=int, default=1)
    generate.set_defaults(func=cmd_generate)

    train = commands.add_parser('train', help='train a model')
    _add_common(train)
    train.add_argument('--checkpoint', help='checkpoint to resume from')
    train.set_defaults(func=cmd_train)

    evaluate = commands.add_parser('eval', help='score a checkpoint')
    _add_common(evaluate, checkpoint=True, split='test')
    evaluate.add_argument('--workers', type=int, default=1)
    evaluate.add_argument('--timing', action='store_true',
                          help='include inference seconds in the report')
    evaluate.set_defaults(func=cmd_eval)

    infer = commands.add_parser('infer', help='write detections')
    _add_common(infer, checkpoint=True, split='test')
    infer.add_argument('--workers', type=int, default=1)
    infer.add_argument('--ids', nargs='+', help='video ids in the dataset')
    infer.add_argument('features', nargs='*',
                       help='<id>_audio.davf files, paired with their '
                            '<id>_visual.davf siblings')
    infer.set_defaults(func=cmd_infer)

    dump = commands.add_parser('dump-attn',
                               help='export attention maps as CSV')
    _add_common(dump, checkpoint=True, split='')
    dump.add_argument('video_id')
    dump.set_defaults(func=cmd_dump_attn)

    summary = commands.add_parser('summary', help='print parameter counts')
    summary.add_argument('--config', help='run config JSON file')
    summary.add_argument('--published', action='store_true',
                         help='count the published configuration')
    summary.set_defaults(func=cmd_summary)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Runs a subcommand, returning the process exit status
    """
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EsgNetException, OSError) as e:
        Logger.instance().log_error_json({
            'type': 'error',
            'command': args.command,
            'error': str(e),
        })
        return 1


if __name__ == '__main__':
    sys.exit(main())
