"""
Command-line front end: `learnlu generate | train | eval | spectrum`.

Every command resolves its settings from dataclass defaults, an optional
YAML `--config` file and its flags (in that order), and writes a
`manifest.json` with the resolved settings next to its outputs.
"""
import logging
import os
import sys

from .config import (
    EvalConfig, GenerateConfig, ModelConfig, PRECONDITIONERS, RunConfig,
    SpectrumConfig, TrainConfig, FORMAT_VERSION, load_config_file,
    parse_name_list, section_config,
)
from .data import ensure_directory, write_csv, write_json
from .dataset import (
    SPLITS, Dataset, load_manifest, load_split, make_dataset, save_dataset,
)
from .decorators import debug
from .exceptions import (
    ConfigError, DenseCapError, LearnLUError, TrainingDivergenceError,
)
from .neural import ModelParams
from .spectral import (
    build_preconditioner, evaluate, histogram, precond_dense,
    sigma_max_power, sigma_min_power, svd_values, write_histogram_csv,
    write_histogram_svg, write_report_csv, write_summary_csv,
)
from .training import best_epoch, train, write_history_csv
from .version import __version__

log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s:%(name)s: %(message)s"

MANIFEST = 'manifest.json'


def setup_logging(verbose=False):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format=LOG_FORMAT, stream=sys.stderr)


def fire_cli(python_object, use_debugger=None):
    """
    Create a fire command-line interface with tweaked arg handling.

    PARAMETERS
    ----------
    python_object : {function, object}
        What fire should expose; an instance gives one subcommand per
        attribute. The flags `--help`, `--debug` and `--verbose` are
        reserved and never reach the commands.
    use_debugger : debugger, optional
        See `learnlu.decorators.debug`.

    RETURNS
    -------
    run_cli : function
        Runs fire.Fire with the modified flag handling:
          * --help shows fire help, which in base fire requires `-- --help`
          * --debug drops into a post-mortem debugger on errors
          * --verbose logs at DEBUG level
        A `LearnLUError` ends the process with its `exit_code`.

    """
    import fire

    def run_fire():
        return fire.Fire(python_object)

    def run_cli():
        if '--help' in sys.argv:
            sys.argv = ([v for v in sys.argv if v != '--help'] +
                        ['--', '--help'])
        verbose = '--verbose' in sys.argv
        sys.argv = [v for v in sys.argv if v != '--verbose']
        setup_logging(verbose)
        if '--debug' in sys.argv:
            sys.argv = [v for v in sys.argv if v != '--debug']
            return debug(use_debugger=use_debugger)(run_fire)()
        try:
            return run_fire()
        except LearnLUError as e:
            log.error("%s: %s", type(e).__name__, e)
            sys.exit(e.exit_code)

    return run_cli


# helpers ------------------

def _output_directory(out, file_config):
    if out is None:
        out = RunConfig.from_mapping(file_config.get('run'),
                                     descr='run section').out
    if out is None:
        raise ConfigError("no output directory: pass --out or set run.out")
    return ensure_directory(str(out))


def _flags(**flags):
    return {k: v for k, v in flags.items() if v is not None}


def _write_manifest(out, command, overwrite, **content):
    manifest = {'format_version': FORMAT_VERSION, 'command': command,
                'learnlu_version': __version__}
    manifest.update(content)
    write_json(manifest, os.path.join(out, MANIFEST), overwrite=overwrite)
    return manifest


def _load_model(path, aggregation=None):
    if path is None:
        return None
    return ModelParams.load(str(path), aggregation=aggregation)


# commands ------------------

def cmd_generate(out=None, grid=None, train=None, val=None, test=None,
                 seed=None, offline_tol=None, jobs=None, dense_cap=None,
                 config=None, overwrite=False):
    """
    Generate perturbed 2-d Poisson problems into the dataset directory
    `out`: supervised train / val samples and source-term test samples.

    Defaults: grid 20, 50 / 5 / 5 samples, seed 0, offline tolerance 1e-11.
    """
    file_config = load_config_file(config)
    cfg = section_config(GenerateConfig, file_config, 'generate', _flags(
        grid=grid, train=train, val=val, test=test, seed=seed,
        offline_tol=offline_tol, jobs=jobs))
    run = RunConfig.from_mapping(file_config.get('run'), descr='run section')
    cap = dense_cap or run.dense_cap or EvalConfig().dense_cap
    out = _output_directory(out, file_config)
    log.info("generating dataset in %s: %r", out, cfg)
    dataset = make_dataset(cfg.grid, {'train': cfg.train, 'val': cfg.val,
                                      'test': cfg.test},
                           seed_base=cfg.seed, offline_tol=cfg.offline_tol,
                           jobs=cfg.jobs)
    save_dataset(dataset, out, config={'generate': cfg.to_mapping()},
                 dense_cap=cap, overwrite=overwrite)
    return out


def cmd_train(data, out=None, loss=None, alpha=None, lr=None, epochs=None,
              clip=None, eps=None, seed=None, hutchinson_samples=None,
              val_tol=None, inner_tol=None, jobs=None, layers=None,
              edge_hidden=None, node_hidden=None, aggregation=None,
              activation=None, init_model=None, reorthogonalize=None,
              config=None, overwrite=False):
    """
    Train a factorization network on the dataset directory `data` and
    write `model.json`, `history.csv` and a manifest to `out`.

    Losses: max, min, min-hat, combined, combined-exact. Defaults:
    loss max, alpha 0.2, lr 0.001, 100 epochs, clip 1.0, eps 1e-4.
    """
    file_config = load_config_file(config)
    train_cfg = section_config(TrainConfig, file_config, 'train', _flags(
        loss=loss, alpha=alpha, lr=lr, epochs=epochs, clip=clip, eps=eps,
        seed=seed, hutchinson_samples=hutchinson_samples, val_tol=val_tol,
        inner_tol=inner_tol, jobs=jobs, reorthogonalize=reorthogonalize))
    model_cfg = section_config(ModelConfig, file_config, 'model', _flags(
        layers=layers, edge_hidden=edge_hidden, node_hidden=node_hidden,
        aggregation=aggregation, activation=activation,
        eps=train_cfg.eps, seed=seed))
    out = _output_directory(out, file_config)
    manifest = load_manifest(str(data))
    dataset = Dataset(train=load_split(str(data), 'train', manifest),
                      val=load_split(str(data), 'val', manifest),
                      test=None)
    model = (_load_model(init_model) if init_model is not None
             else ModelParams.initialize(model_cfg))

    resolved = {'train': train_cfg.to_mapping(),
                'model': model.config.to_mapping()}
    history_path = os.path.join(out, 'history.csv')
    try:
        params, history = train(model, dataset, train_cfg)
    except TrainingDivergenceError as e:
        write_history_csv(e.history, history_path, overwrite=overwrite)
        _write_manifest(out, 'train', overwrite, config=resolved,
                        data=str(data), status='diverged', error=str(e))
        raise
    params.save(os.path.join(out, 'model.json'), overwrite=overwrite)
    write_history_csv(history, history_path, overwrite=overwrite)
    _write_manifest(out, 'train', overwrite, config=resolved, data=str(data),
                    status='ok', best_epoch=best_epoch(history),
                    parameter_count=params.parameter_count)
    return out


def cmd_eval(data, out=None, precond='none,jacobi,ilu0', model=None,
             split='test', tol=None, kmax=None, dense_cap=None, bins=None,
             jobs=None, timings=None, check_bounds=None,
             reorthogonalize=None, svg=False, config=None, overwrite=False):
    """
    Evaluate preconditioners on a split of `data` (default: test) and write
    `report.csv`, `summary.csv` and one singular value histogram per
    preconditioner to `out`. `learned` needs `--model`.
    """
    file_config = load_config_file(config)
    cfg = section_config(EvalConfig, file_config, 'eval', _flags(
        tol=tol, kmax=kmax, dense_cap=dense_cap, bins=bins, jobs=jobs,
        timings=timings, check_bounds=check_bounds,
        reorthogonalize=reorthogonalize))
    names = parse_name_list(precond, PRECONDITIONERS, 'precond')
    if split not in SPLITS:
        raise ConfigError("unknown split %r" % split)
    if 'learned' in names and model is None:
        raise ConfigError("--precond learned needs --model")
    out = _output_directory(out, file_config)
    params = _load_model(model)
    problems = load_split(str(data), split)
    report = evaluate(problems, names, cfg, params)
    write_report_csv(report, os.path.join(out, 'report.csv'), overwrite)
    write_summary_csv(report, os.path.join(out, 'summary.csv'), overwrite)
    for name in names:
        rows = histogram(report.pooled_singular_values(name), cfg.bins)
        if not rows:
            continue
        write_histogram_csv(rows, os.path.join(out, 'hist_%s.csv' % name),
                            overwrite)
        if svg:
            write_histogram_svg(rows, os.path.join(out, 'hist_%s.svg' % name),
                                title='singular values, %s' % name,
                                overwrite=overwrite)
    _write_manifest(out, 'eval', overwrite, config={'eval': cfg.to_mapping()},
                    data=str(data), split=split, preconditioners=names,
                    model=None if model is None else str(model))
    return out


def cmd_spectrum(data, out=None, precond='none,ilu0', model=None, split=None,
                 problem=None, dense_cap=None, bins=None, edges_only=None,
                 power_iters=None, power_tol=None, config=None,
                 overwrite=False):
    """
    Dump the singular values of A P^-1 for one problem of `data`, one
    `spectrum_<precond>.csv` and histogram per preconditioner. Above the
    dense cap only the extreme singular values are available, through
    `--edges-only`.
    """
    file_config = load_config_file(config)
    cfg = section_config(SpectrumConfig, file_config, 'spectrum', _flags(
        split=split, problem=problem, dense_cap=dense_cap, bins=bins,
        edges_only=edges_only, power_iters=power_iters,
        power_tol=power_tol))
    names = parse_name_list(precond, PRECONDITIONERS, 'precond')
    if 'learned' in names and model is None:
        raise ConfigError("--precond learned needs --model")
    out = _output_directory(out, file_config)
    problems = load_split(str(data), cfg.split)
    if cfg.problem >= len(problems):
        raise ConfigError("problem index %d out of range, the %s split has "
                          "%d problems" % (cfg.problem, cfg.split,
                                           len(problems)))
    sample = problems.samples[cfg.problem]
    A = sample.A
    if A.n > cfg.dense_cap and not cfg.edges_only:
        raise DenseCapError(
            "dimension %d exceeds the dense cap %d; rerun with --edges-only "
            "for the extreme singular values by power iteration"
            % (A.n, cfg.dense_cap))
    params = _load_model(model)
    edges = []
    for name in names:
        P = build_preconditioner(name, A, params)
        if cfg.edges_only:
            top = sigma_max_power(A, P, cfg.power_iters, cfg.power_tol)
            bottom = sigma_min_power(A, P, cfg.power_iters, cfg.power_tol)
            edges.append((name, top.sigma, bottom.sigma,
                          top.converged and bottom.converged))
            continue
        sigma = svd_values(precond_dense(A, P, cfg.dense_cap),
                           cap=cfg.dense_cap)
        edges.append((name, float(sigma[0]), float(sigma[-1]), True))
        write_csv(('index', 'sigma'), enumerate(sigma.tolist()),
                  os.path.join(out, 'spectrum_%s.csv' % name), overwrite)
        write_histogram_csv(histogram(sigma, cfg.bins),
                            os.path.join(out, 'hist_%s.csv' % name),
                            overwrite)
    write_csv(('preconditioner', 'sigma_max', 'sigma_min', 'converged'),
              edges, os.path.join(out, 'edges.csv'), overwrite)
    _write_manifest(out, 'spectrum', overwrite,
                    config={'spectrum': cfg.to_mapping()}, data=str(data),
                    problem=sample.name, preconditioners=names,
                    model=None if model is None else str(model))
    return out


class LearnLUCommands(object):
    """
    Learned incomplete LU preconditioners for GMRES.
    """

    def __init__(self):
        self.generate = cmd_generate
        self.train = cmd_train
        self.eval = cmd_eval
        self.spectrum = cmd_spectrum


def main(use_debugger=None):
    fire_cli(LearnLUCommands(), use_debugger=use_debugger)()
