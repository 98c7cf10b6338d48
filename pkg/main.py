# main.py - Command-line entry point for the tabular modelling toolkit

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from config import (COMPARE_KINDS, CONFIG, EXIT_CODES, FIDELITY_DEFAULTS, GAN_PIPE_DEFAULTS, LLM_CONFIG,
                    MEDLEY_DEFAULTS, SEARCH_DEFAULTS, TOOL_VERSION, load_run_config)
from utils import (DataError, ToolkitError, UsageError, get_output_directory,
                   log_step_error, log_step_success, setup_logging)
import report_generator as reports

from tabkit.data import (SplitSpec, apply_metadata, column_ops, correlation_matrix,
                         impute_missing, load_csv, profile, save_csv, standardize,
                         to_frame, to_metadata, train_test_split)
from tabkit.medley import (EXPLAINERS, ModelSpec, compare_explainers, default_gold_suite,
                           medley_interpret, recall_on_gold, scores_frame)
from tabkit.metrics import classification_report, confusion_matrix, learning_curve, roc_curves_ovr
from tabkit.models import (SearchSpec, compare_classifiers, feature_importances, fit_dataset,
                           hyper_search, model_from_dict, model_to_dict, supports_importances,
                           with_preprocessing)
from tabkit.tabgan import augmented_training_set, feature_fit_lines, generate_data_pipe, make_regression, noise_sweep
from tabkit.syneval import fidelity_report, validate_report
from tabkit.llmgen import GenSpec, HttpTransport, MockTransport, chat_loop, llm_generate_dataset

logger = logging.getLogger(__name__)

# ─── ARGUMENT HELPERS ──────────────────────────────────────────────
def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise UsageError(f"{args.command} needs {', '.join(missing)}")
    return [getattr(args, n) for n in names]


def _json_arg(value, flag):
    """Flags carrying JSON objects accept a dict from --config or a JSON string"""
    if value in (None, ""):
        return {}
    if isinstance(value, dict):
        return value
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError as e:
        raise UsageError(f"{flag} is not valid JSON: {e}")
    if not isinstance(parsed, dict):
        raise UsageError(f"{flag} must be a JSON object")
    return parsed


def _list_arg(value, cast=str):
    if value in (None, ""):
        return []
    items = value if isinstance(value, list) else str(value).split(',')
    try:
        return [cast(str(v).strip()) for v in items if str(v).strip()]
    except ValueError as e:
        raise UsageError(f"Bad list value {value!r}: {e}")


def _echo(args):
    """Flags of this run, minus logging noise, for the report config_echo"""
    skip = {'func', 'log_level', 'config'}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _out_dir(args):
    (out,) = _require(args, 'out')
    return get_output_directory(out)

# ─── DATA HELPERS ──────────────────────────────────────────────────
def _load(path, target):
    if not Path(path).is_file():
        raise DataError(f"Cannot read {path}", path=str(path))
    return load_csv(path, target_column=target or None, missing_markers=CONFIG['missing_markers'])


def _prepare(ds, args):
    if ds.has_missing:
        ds = impute_missing(ds, args.impute)
    if getattr(args, 'standardize', False):
        ds, _ = standardize(ds)
    return ds


def _align_target(ds, class_names):
    """Re-code ds.y against the class names a model was trained with"""
    if ds.y is None or not class_names or ds.class_names == list(class_names):
        return ds
    lookup = {name: i for i, name in enumerate(class_names)}
    unknown = [name for name in ds.class_names if name not in lookup]
    if unknown:
        raise DataError(f"Labels {unknown} were not seen when the model was trained", labels=unknown)
    y = np.array([lookup[ds.class_names[c]] for c in ds.y], dtype=np.int64)
    return ds.replace(y=y, class_names=list(class_names))


def _load_model(path):
    if not Path(path).is_file():
        raise DataError(f"Cannot read model file {path}", path=str(path))
    return model_from_dict(reports.read_json(path))


def _model_view(model, path, target):
    """Load a CSV and express it the way the model's training data was.

    Without ``--target`` the target column recorded at training time is used
    when the file has it; otherwise every column is read as a feature.
    """
    if not target and model.preprocessing and Path(path).is_file():
        stored = model.preprocessing.get('target_name')
        if stored and stored in pd.read_csv(path, nrows=0, encoding=CONFIG['csv_encoding']).columns:
            logger.info(f"No --target given; using stored target column {stored}")
            target = stored
    ds = _load(path, target)
    if model.preprocessing is not None:
        ds = apply_metadata(ds, model.preprocessing)
    return _align_target(ds, model.class_names)


def _row(ds, index):
    if index is None or not 0 <= int(index) < ds.n_rows:
        raise UsageError(f"--row must lie in [0, {ds.n_rows - 1}], got {index}")
    return ds.X[int(index)]


def _labelled_frame(ds, X, y, class_names):
    out = to_frame(ds.replace(X=X, y=None, class_names=None, target_name=None), decode=True)
    if y is not None:
        out[ds.target_name or 'target'] = [class_names[int(c)] for c in y] if class_names else y
    return out

# ─── DATA COMMANDS ─────────────────────────────────────────────────
def cmd_inspect(args):
    (data,) = _require(args, 'data')
    ds = _load(data, args.target)
    summary = profile(ds)
    if not ds.has_missing and ds.n_rows >= 2:
        summary['correlation'] = correlation_matrix(ds)
    for col in summary['columns']:
        print(f"  {col['name']:<24} {col['kind']:<12} missing={col['missing']} distinct={col['distinct']}")
    if args.out:
        out = _out_dir(args)
        reports.write_json(out / "profile.json", {'profile': summary}, args.seed, _echo(args))
    return summary


def cmd_prep(args):
    (data,) = _require(args, 'data')
    out = _out_dir(args)
    ds = _load(data, args.target)
    if args.select:
        ds = column_ops(ds, 'select', _list_arg(args.select))
    if args.drop:
        ds = column_ops(ds, 'drop', _list_arg(args.drop))
    if args.merge:
        ds = column_ops(ds, 'merge', other=_load(args.merge, None), on=args.on)
    ds = _prepare(ds, args)
    save_csv(ds, out / "prepared.csv")
    reports.write_json(out / "columns.json", {'metadata': to_metadata(ds)}, args.seed, _echo(args))
    log_step_success("prep", f"{ds.n_rows} rows x {ds.n_features} columns")
    return ds


def cmd_split(args):
    (data,) = _require(args, 'data')
    out = _out_dir(args)
    ds = _load(data, args.target)
    spec = SplitSpec(float(args.test_fraction), bool(args.stratified), int(args.seed))
    train, test = train_test_split(ds, spec)
    save_csv(train, out / "train.csv")
    save_csv(test, out / "test.csv")
    reports.write_json(out / "split.json", {'train_rows': train.n_rows, 'test_rows': test.n_rows},
                       args.seed, _echo(args))
    log_step_success("split", f"train {train.n_rows} / test {test.n_rows}")
    return train, test

# ─── MODEL COMMANDS ────────────────────────────────────────────────
def _train_report(model, ds):
    pred = model.predict(ds.X)
    report = classification_report(ds.y, pred, ds.class_names)
    doc = {
        'model_kind': model.kind,
        'n_rows': ds.n_rows,
        'feature_names': ds.feature_names,
        'train_report': report.to_dict(),
        'evaluated_on': 'train',
    }
    if supports_importances(model):
        doc['feature_importances'] = dict(zip(ds.feature_names, feature_importances(model).tolist()))
    return doc


def cmd_train(args):
    data, kind = _require(args, 'data', 'model')
    out = _out_dir(args)
    ds = _prepare(_load(data, args.target), args)
    params = _json_arg(args.params, '--params')
    model = with_preprocessing(fit_dataset(kind, ds, params, int(args.seed)), to_metadata(ds))
    reports.write_json(out / "model.json", model_to_dict(model), wrap=False)
    reports.write_json(out / "report.json", _train_report(model, ds), args.seed, _echo(args))
    log_step_success("train", f"{kind} on {ds.n_rows} rows", ds.n_features)
    return model


def cmd_tune(args):
    data, kind = _require(args, 'data', 'model')
    out = _out_dir(args)
    ds = _prepare(_load(data, args.target), args)
    space = _json_arg(args.space, '--space')
    spec = SearchSpec(args.strategy, space, int(args.cv_folds), args.metric, int(args.seed), int(args.n_draws))
    best, table = hyper_search(kind, ds, spec, _json_arg(args.params, '--params'))
    model = with_preprocessing(fit_dataset(kind, ds, best, int(args.seed)), to_metadata(ds))
    reports.write_csv(table, out / "search.csv")
    reports.write_json(out / "search.json", {'best_config': best, 'candidates': table},
                       args.seed, _echo(args))
    reports.write_json(out / "model.json", model_to_dict(model), wrap=False)
    log_step_success("tune", f"{len(table)} candidates, best {table['mean_score'].max():.4f}")
    return best


def cmd_evaluate(args):
    model_path, data = _require(args, 'model', 'data')
    out = _out_dir(args)
    model = _load_model(model_path)
    ds = _model_view(model, data, args.target)
    if ds.y is None:
        raise UsageError("evaluate needs --target")
    names = model.class_names or [str(c) for c in range(model.n_classes)]
    pred = model.predict(ds.X)
    report = classification_report(ds.y, pred, names)
    confusion = confusion_matrix(ds.y, pred, len(names))
    confusion_frame = pd.DataFrame(confusion, columns=names)
    confusion_frame.insert(0, 'true', names)

    curves = []
    if len(np.unique(ds.y)) >= 2:
        scores = model.scores(ds.X)
        curves = roc_curves_ovr(ds.y, scores, names)
    curve_frames = {f"roc_{c.label}": c.to_frame() for c in curves}

    reports.write_json(out / "evaluation.json", {
        'report': report.to_dict(),
        'confusion_matrix': confusion,
        'roc': [c.to_dict() for c in curves],
    }, args.seed, _echo(args))
    reports.write_csv(report.to_frame(), out / "classification_report.csv")
    reports.write_csv(confusion_frame, out / "confusion_matrix.csv")
    (out / "classification_report.txt").write_text(report.render_text(), encoding='utf-8')
    reports.create_excel_report({'report': report.to_frame(), 'confusion': confusion_frame, **curve_frames},
                                out / "report.xlsx")
    if curves:
        reports.write_svg_line_chart({c.label: ([p[0] for p in c.points], [p[1] for p in c.points])
                                      for c in curves}, out / "roc.svg", "ROC")
    print(report.render_text())
    return report


def cmd_curves(args):
    data, kind = _require(args, 'data', 'model')
    out = _out_dir(args)
    ds = _prepare(_load(data, args.target), args)
    sizes = _list_arg(args.train_sizes, int)
    if not sizes:
        raise UsageError("curves needs --train-sizes, e.g. 20,40,80")
    train_curve, valid_curve = learning_curve(kind, _json_arg(args.params, '--params'), ds, sizes,
                                              int(args.cv_folds), int(args.seed))
    frame = pd.concat([train_curve.to_frame(), valid_curve.to_frame()], ignore_index=True)
    reports.write_csv(frame, out / "learning_curve.csv")
    reports.write_json(out / "learning_curve.json",
                       {'train': train_curve.to_dict(), 'validation': valid_curve.to_dict()},
                       args.seed, _echo(args))
    reports.write_svg_line_chart({c.label: ([p[0] for p in c.points], [p[1] for p in c.points])
                                  for c in (train_curve, valid_curve)},
                                 out / "learning_curve.svg", f"Learning curve ({kind})")
    return train_curve, valid_curve


def cmd_compare(args):
    (data,) = _require(args, 'data')
    out = _out_dir(args)
    ds = _prepare(_load(data, args.target), args)
    kinds = _list_arg(args.models) or COMPARE_KINDS
    table = compare_classifiers(kinds, ds, int(args.cv_folds), int(args.seed),
                                _json_arg(args.params, '--params'))
    reports.write_csv(table, out / "compare.csv")
    reports.write_json(out / "compare.json", {'table': table}, args.seed, _echo(args))
    reports.create_excel_report({'compare': table}, out / "report.xlsx")
    reports.write_svg_bar_chart(table['model'], table['accuracy'], out / "compare.svg", "CV accuracy")
    print(table.to_string(index=False))
    return table

# ─── INTERPRETATION COMMANDS ───────────────────────────────────────
def cmd_interpret(args):
    model_path, data = _require(args, 'model', 'data')
    out = _out_dir(args)
    model = _load_model(model_path)
    train = _model_view(model, data, args.target)
    eval_data = _model_view(model, args.eval_data, args.target) if args.eval_data else None
    spec = ModelSpec(model.kind, model.config, model.seed)
    explanation = medley_interpret(spec, train, _row(train, args.row), eval_data,
                                   int(args.n_repeats), int(args.seed))
    reports.write_json(out / "explanation.json", {'explanation': explanation.to_dict(), 'row': args.row},
                       args.seed, _echo(args))
    reports.write_csv(explanation.to_frame(), out / "explanation.csv")
    reports.write_svg_bar_chart(train.feature_names, explanation.combined_scores,
                                out / "explanation.svg", f"Feature scores, row {args.row}")
    return explanation


def cmd_compare_explainers(args):
    model_path, data = _require(args, 'model', 'data')
    out = _out_dir(args)
    model = _load_model(model_path)
    train = _model_view(model, data, args.target)
    spec = ModelSpec(model.kind, model.config, model.seed)
    result = compare_explainers(spec, train, _row(train, args.row), int(args.seed))
    frame = scores_frame(train.feature_names, result['scores'])
    reports.write_csv(frame, out / "explainers.csv")
    reports.write_json(out / "explainers.json", {
        'explanation': result['explanation'].to_dict(),
        'scores': {name: values for name, values in result['scores'].items()},
        'pattern': result['pattern'],
    }, args.seed, _echo(args))
    return result


def cmd_xai_bench(args):
    out = _out_dir(args)
    names = _list_arg(args.explainers) or ['medley', 'greedy', 'parzen', 'local_linear']
    unknown = [n for n in names if n not in EXPLAINERS]
    if unknown:
        raise UsageError(f"Unknown explainers {unknown}; choose from {sorted(EXPLAINERS)}")
    suite = default_gold_suite(args.n_datasets, args.d, args.k, args.n, int(args.seed))
    rows = [{'explainer': name,
             'recall': recall_on_gold(name, suite, args.model_kind, args.instances, int(args.seed))}
            for name in names]
    table = pd.DataFrame(rows, columns=['explainer', 'recall'])
    reports.write_csv(table, out / "xai_bench.csv")
    reports.write_json(out / "xai_bench.json", {'recall': table}, args.seed, _echo(args))
    reports.write_svg_bar_chart(table['explainer'], table['recall'], out / "xai_bench.svg",
                                "Mean recall of gold features")
    print(table.to_string(index=False))
    return table

# ─── SYNTHETIC DATA COMMANDS ───────────────────────────────────────
def cmd_gan_augment(args):
    (data,) = _require(args, 'data')
    out = _out_dir(args)
    ds = _load(data, args.target)
    if ds.has_missing:
        ds = impute_missing(ds, args.impute)
    cfg = _json_arg(args.pipe_config, '--pipe-config')
    if args.gen_x_times is not None:
        cfg['gen_x_times'] = int(args.gen_x_times)
    if args.only_generated:
        cfg['only_generated_data'] = True
    gan_params = _json_arg(args.gan_params, '--gan-params')
    if gan_params:
        cfg['gan_params'] = gan_params
    categorical = [c.name for c in ds.columns if c.kind != 'numeric']
    if categorical:
        cfg['cat_cols'] = categorical

    features = ds.replace(y=None, class_names=None, target_name=None)
    test_x = None
    if args.test_data:
        test = _load(args.test_data, args.target)
        test_x = test.replace(y=None, class_names=None, target_name=None)
    result = generate_data_pipe(features, ds.y, test_x, cfg, int(args.seed))

    gen_y = result.gen_y
    labelled = ds.y is not None and gen_y is not None and np.issubdtype(np.asarray(gen_y).dtype, np.integer)
    reports.write_csv(_labelled_frame(ds, result.gen_x.X, gen_y, ds.class_names if labelled else None),
                      out / "generated.csv")
    if labelled:
        augmented = augmented_training_set(result, ds, ds.y)
        save_csv(augmented, out / "augmented.csv")
    reports.write_json(out / "provenance.json", {'provenance': result.provenance}, args.seed, _echo(args))
    log_step_success("gan-augment", "synthetic rows kept", result.provenance['rows_kept'])
    return result


def cmd_make_regression(args):
    out = _out_dir(args)
    data = make_regression(int(args.n), int(args.d), int(args.informative), float(args.noise), int(args.seed))
    save_csv(data.dataset, out / "regression.csv")
    lines = feature_fit_lines(data.dataset)
    reports.write_csv(lines, out / "fit_lines.csv")
    payload = {'coefficients': data.coefficients, 'informative': list(data.informative),
               'noise_sd': data.noise_sd, 'fit_lines': lines}
    levels = _list_arg(args.noise_sweep, float)
    if levels:
        sweep = noise_sweep(levels, int(args.n), int(args.d), int(args.informative), int(args.seed))
        reports.write_csv(sweep, out / "noise_sweep.csv")
        payload['noise_sweep'] = sweep
    reports.write_json(out / "regression.json", payload, args.seed, _echo(args))
    return data


def _transport(args):
    return MockTransport.with_samples() if args.mock else HttpTransport()


def cmd_llm_generate(args):
    topic, rows, cols = _require(args, 'topic', 'rows', 'cols')
    out = _out_dir(args)
    spec = GenSpec(topic, int(rows), int(cols), tuple(_list_arg(args.columns)),
                   args.model_id or LLM_CONFIG['model_id'], float(args.temperature))
    ds, transcript = llm_generate_dataset(spec, _transport(args), out / "transcript.json")
    save_csv(ds, out / "generated.csv")
    reports.write_json(out / "llm_generate.json", {'profile': profile(ds), 'parse_status': transcript['parse_status']},
                       args.seed, _echo(args))
    print(to_frame(ds).to_string(index=False))
    return ds


def cmd_llm_chat(args):
    history = chat_loop(_transport(args), model_id=args.model_id, temperature=float(args.temperature),
                        system_prompt=args.system)
    if args.out:
        out = _out_dir(args)
        reports.write_json(out / "chat.json", {'messages': [m.to_dict() for m in history]},
                           args.seed, _echo(args))
    return history


def cmd_syn_eval(args):
    real_path, synth_path = _require(args, 'real', 'synth')
    out = _out_dir(args)
    real = _load(real_path, args.target)
    synth = _align_target(_load(synth_path, args.target), real.class_names)
    report = fidelity_report(real, synth, args.alpha, _json_arg(args.rf_config, '--rf-config'),
                             int(args.seed), args.spearman_threshold)
    doc = report.to_dict()
    validate_report(doc)
    reports.write_json(out / "fidelity.json", doc, args.seed, _echo(args))
    reports.write_csv(report.to_frame(), out / "fidelity.csv")
    sheets = {'per_feature': report.to_frame()}
    importance = report.importance_frame(real.feature_names)
    if importance is not None:
        sheets['importance'] = importance
    reports.create_excel_report(sheets, out / "report.xlsx")
    print(f"Fidelity verdict: {report.overall_verdict}")
    return report

# ─── EXPORT / IMPORT ───────────────────────────────────────────────
def cmd_export(args):
    (model_path,) = _require(args, 'model')
    out = _out_dir(args)
    model = _load_model(model_path)
    reports.write_json(out / "model.json", model_to_dict(model), wrap=False)
    return model


def cmd_import(args):
    (model_path,) = _require(args, 'model')
    out = _out_dir(args)
    model = _load_model(model_path)
    summary = {'kind': model.kind, 'n_features': model.n_features, 'class_names': model.class_names}
    if args.data:
        ds = _model_view(model, args.data, args.target)
        pred = model.predict(ds.X)
        names = model.class_names or [str(c) for c in range(model.n_classes)]
        reports.write_csv(pd.DataFrame({'prediction': [names[int(p)] for p in pred]}),
                          out / "predictions.csv")
        summary['n_predictions'] = int(len(pred))
    reports.write_json(out / "import.json", summary, args.seed, _echo(args))
    return model

# ─── PARSER ────────────────────────────────────────────────────────
COMMANDS = {
    'inspect': cmd_inspect,
    'prep': cmd_prep,
    'split': cmd_split,
    'train': cmd_train,
    'tune': cmd_tune,
    'evaluate': cmd_evaluate,
    'curves': cmd_curves,
    'interpret': cmd_interpret,
    'compare-explainers': cmd_compare_explainers,
    'xai-bench': cmd_xai_bench,
    'gan-augment': cmd_gan_augment,
    'make-regression': cmd_make_regression,
    'llm-generate': cmd_llm_generate,
    'llm-chat': cmd_llm_chat,
    'syn-eval': cmd_syn_eval,
    'export': cmd_export,
    'import': cmd_import,
    'compare': cmd_compare,
}


def _data_flags(p, model=False):
    p.add_argument('--data', help='input CSV (header row first)')
    p.add_argument('--target', help='target column name')
    p.add_argument('--impute', default='median', help='median | mode | constant:<value>')
    p.add_argument('--standardize', action='store_true', help='z-score numeric columns')
    if model:
        p.add_argument('--model', help='model kind (logreg, dtree, rforest, linsvm, knn, gnb, zeror, lrforest, svtree)')
        p.add_argument('--params', help='JSON object of hyperparameters')


def build_parser():
    parser = argparse.ArgumentParser(prog='tabkit', description='Tabular modelling, interpretation and synthetic data toolkit')
    parser.add_argument('--version', action='version', version=f'%(prog)s {TOOL_VERSION}')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', help='output directory')
    common.add_argument('--seed', type=int, default=CONFIG['seed'])
    common.add_argument('--config', help='JSON file of flag defaults (flags win)')
    common.add_argument('--log-level', default=CONFIG['log_level'])
    sub = parser.add_subparsers(dest='command', metavar='command')
    parser.subcommands = sub.choices

    p = sub.add_parser('inspect', parents=[common], help='profile columns, missing values and correlations')
    _data_flags(p)

    p = sub.add_parser('prep', parents=[common], help='impute, scale and select/drop/merge columns')
    _data_flags(p)
    p.add_argument('--select', help='comma-separated columns to keep')
    p.add_argument('--drop', help='comma-separated columns to drop')
    p.add_argument('--merge', help='second CSV to merge column-wise')
    p.add_argument('--on', help='key column for --merge (positional when omitted)')

    p = sub.add_parser('split', parents=[common], help='seeded train/test split')
    _data_flags(p)
    p.add_argument('--test-fraction', type=float, default=CONFIG['test_fraction'])
    p.add_argument('--stratified', action='store_true')

    p = sub.add_parser('train', parents=[common], help='fit a model and export it')
    _data_flags(p, model=True)

    p = sub.add_parser('tune', parents=[common], help='grid or random hyperparameter search')
    _data_flags(p, model=True)
    p.add_argument('--space', help='JSON object: name -> list of values or {"low", "high"}')
    p.add_argument('--strategy', default=SEARCH_DEFAULTS['strategy'], choices=['grid', 'random'])
    p.add_argument('--cv-folds', type=int, default=SEARCH_DEFAULTS['cv_folds'])
    p.add_argument('--metric', default=SEARCH_DEFAULTS['metric'], choices=['accuracy', 'f1_macro'])
    p.add_argument('--n-draws', type=int, default=SEARCH_DEFAULTS['n_draws'])

    p = sub.add_parser('evaluate', parents=[common], help='classification report, confusion matrix, ROC')
    p.add_argument('--model', help='model.json written by train or tune')
    p.add_argument('--data')
    p.add_argument('--target')

    p = sub.add_parser('curves', parents=[common], help='learning curve over training sizes')
    _data_flags(p, model=True)
    p.add_argument('--train-sizes', help='comma-separated sizes')
    p.add_argument('--cv-folds', type=int, default=CONFIG['cv_folds'])

    p = sub.add_parser('compare', parents=[common], help='comparative CV table over model kinds')
    _data_flags(p)
    p.add_argument('--models', help='comma-separated kinds (default: all)')
    p.add_argument('--params', help='JSON object: kind -> hyperparameters')
    p.add_argument('--cv-folds', type=int, default=CONFIG['cv_folds'])

    for name, text in (('interpret', 'drop-column plus permutation scores for one row'),
                       ('compare-explainers', 'every explainer on one row')):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument('--model', help='model.json written by train or tune')
        p.add_argument('--data', help='training CSV the model is refit on')
        p.add_argument('--target')
        p.add_argument('--row', type=int, help='0-based row of --data to explain')
        if name == 'interpret':
            p.add_argument('--eval-data', help='held-out CSV for the importance scores')
            p.add_argument('--n-repeats', type=int, default=MEDLEY_DEFAULTS['n_repeats'])

    p = sub.add_parser('xai-bench', parents=[common], help='explainer recall on gold-feature datasets')
    p.add_argument('--explainers', help=f"comma-separated, from {sorted(EXPLAINERS)}")
    p.add_argument('--n-datasets', type=int, default=MEDLEY_DEFAULTS['gold_datasets'])
    p.add_argument('--d', type=int, default=MEDLEY_DEFAULTS['gold_d'])
    p.add_argument('--k', type=int, default=MEDLEY_DEFAULTS['gold_k'])
    p.add_argument('--n', type=int, default=MEDLEY_DEFAULTS['gold_n'])
    p.add_argument('--instances', type=int, default=MEDLEY_DEFAULTS['gold_instances'])
    p.add_argument('--model-kind', default=MEDLEY_DEFAULTS['gold_model'])

    p = sub.add_parser('gan-augment', parents=[common], help='GAN oversampling with quantile and adversarial filters')
    _data_flags(p)
    p.add_argument('--test-data', help='reference CSV for the adversarial filter')
    p.add_argument('--gen-x-times', type=int, default=None)
    p.add_argument('--only-generated', action='store_true')
    p.add_argument('--pipe-config', help=f"JSON object over {sorted(GAN_PIPE_DEFAULTS)}")
    p.add_argument('--gan-params', help='JSON object of GAN training parameters')

    p = sub.add_parser('make-regression', parents=[common], help='synthetic linear regression data')
    p.add_argument('--n', type=int, default=100)
    p.add_argument('--d', type=int, default=1)
    p.add_argument('--informative', type=int, default=1)
    p.add_argument('--noise', type=float, default=0.0)
    p.add_argument('--noise-sweep', help='comma-separated noise levels, e.g. 0,10,20')

    for name, text in (('llm-generate', 'ask an LLM for a synthetic table'),
                       ('llm-chat', 'terminal conversation with the LLM')):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument('--mock', action='store_true', help='use the offline transport with sample tables')
        p.add_argument('--model-id', default=None)
        p.add_argument('--temperature', type=float, default=0.0)
        if name == 'llm-generate':
            p.add_argument('--topic')
            p.add_argument('--rows', type=int)
            p.add_argument('--cols', type=int)
            p.add_argument('--columns', help='comma-separated column name hints')
        else:
            p.add_argument('--system', help='system prompt')

    p = sub.add_parser('syn-eval', parents=[common], help='fidelity of a synthetic table against a real one')
    p.add_argument('--real')
    p.add_argument('--synth')
    p.add_argument('--target')
    p.add_argument('--alpha', type=float, default=FIDELITY_DEFAULTS['alpha'])
    p.add_argument('--spearman-threshold', type=float, default=FIDELITY_DEFAULTS['spearman_threshold'])
    p.add_argument('--rf-config', help='JSON object of forest settings for the importance check')

    p = sub.add_parser('export', parents=[common], help='rewrite a model as canonical portable JSON')
    p.add_argument('--model')

    p = sub.add_parser('import', parents=[common], help='load a portable model and optionally predict')
    p.add_argument('--model')
    p.add_argument('--data')
    p.add_argument('--target')
    return parser


def parse_args(argv):
    """Parse twice: --config values become subcommand defaults, explicit flags win"""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, 'config', None):
        try:
            defaults = load_run_config(args.config)
        except (OSError, ValueError) as e:
            raise UsageError(f"Cannot use config file {args.config}: {e}")
        parser.subcommands[args.command].set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args

# ─── ENTRY POINT ───────────────────────────────────────────────────
def run(argv=None) -> int:
    """Execute one subcommand; returns the process exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    out_dir = None
    started = time.time()
    try:
        try:
            args = parse_args(argv)
        except SystemExit as e:
            return EXIT_CODES['ok'] if e.code in (0, None) else EXIT_CODES['usage']
        if not args.command:
            build_parser().print_help()
            return EXIT_CODES['usage']
        setup_logging(args.log_level)
        out_dir = getattr(args, 'out', None)
        COMMANDS[args.command](args)
        if out_dir:
            reports.write_metadata(out_dir, args.command, started, time.time() - started, {'argv': argv})
        print(f"✓ {args.command} finished")
        return EXIT_CODES['ok']
    except ToolkitError as e:
        return _fail(e.to_dict(), out_dir, args_command(argv))
    except KeyboardInterrupt:
        print("\n⏹️ Cancelled by user.")
        return EXIT_CODES['unexpected']
    except Exception as e:
        logger.exception("Unexpected failure")
        doc = {'error': str(e), 'type': type(e).__name__, 'exit_code': EXIT_CODES['unexpected'], 'details': {}}
        return _fail(doc, out_dir, args_command(argv))


def args_command(argv):
    return next((a for a in argv if a in COMMANDS), None)


def _fail(doc, out_dir, command):
    log_step_error(command or 'tabkit', doc['error'], doc['type'])
    print(f"❌ {doc['type']}: {doc['error']}")
    print(reports.dumps(doc), file=sys.stderr, end="")
    if out_dir:
        try:
            reports.write_error(out_dir, doc)
        except OSError as e:
            logger.error(f"Could not write error.json: {e}")
    return doc['exit_code']


if __name__ == "__main__":
    sys.exit(run())
