"""Session loop, NoC/FR metrics, configuration sweep and table emission.

Metrics follow the usual interactive-segmentation conventions: NoC is the
mean number of clicks needed to reach the IoU threshold (failures count as
the click cap), FR is the percentage of instances that never reach it.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .adapt import AdaptationConfig, AdaptationEngine
from .clicksim import Click, next_click
from .masks import binarize, iou
from .model import DecoderParams, encode_image, encode_prompts, predict


@dataclass
class SessionResult:
    instance_id: str
    noc: int
    success: bool
    final_iou: float
    clicks: list[Click]
    result_probmap: np.ndarray


@dataclass
class ClassMetrics:
    class_name: str
    n_instances: int
    mean_noc: float
    failure_rate: float  # percent


def run_session(
    engine: AdaptationEngine,
    image: np.ndarray,
    gt: np.ndarray,
    instance_id: str = "",
) -> SessionResult:
    """Simulate one full annotation session on a single object.

    Starts from the all-zeros mask, alternates simulated clicks and
    predictions (with a click-adaptation step when enabled), stops at the
    first IoU >= threshold or at the click cap, then applies the
    end-of-image adaptation policies.
    """
    gt = np.asarray(gt)
    if not gt.any():
        raise ValueError(f"ground truth mask is empty (instance {instance_id!r})")
    cfg = engine.config
    features = encode_image(image)
    prev = np.zeros(gt.shape, dtype=np.float64)
    pred_bin = np.zeros(gt.shape, dtype=np.uint8)
    clicks: list[Click] = []
    engine.begin_image()

    noc = cfg.max_clicks
    success = False
    final_iou = 0.0
    prob = prev
    last_prev_input = prev
    for tau in range(1, cfg.max_clicks + 1):
        clicks.append(next_click(gt, pred_bin, clicks))
        prompts = encode_prompts(clicks, prev, cfg.sigma)
        if cfg.ca_mode != "off":
            prob = engine.click_adapt_step(features, clicks, prev)
        else:
            prob = predict(features, prompts, engine.params)
        last_prev_input = prev
        prev = prob
        pred_bin = binarize(prob, 0.5)
        final_iou = iou(pred_bin, gt)
        if final_iou >= cfg.iou_threshold:
            noc = tau
            success = True
            break

    result = SessionResult(instance_id, noc, success, final_iou, clicks, prob)
    engine.finish_image(features, clicks, last_prev_input, prob)
    return result


def aggregate(results: list[SessionResult], class_name: str = "") -> ClassMetrics:
    """Per-class metrics; failed sessions contribute the click cap to NoC."""
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    nocs = [r.noc for r in results]
    failures = sum(1 for r in results if not r.success)
    return ClassMetrics(
        class_name=class_name,
        n_instances=len(results),
        mean_noc=float(np.mean(nocs)),
        failure_rate=100.0 * failures / len(results),
    )


def macro_average(per_class: list[ClassMetrics]) -> tuple[float, float]:
    """Unweighted mean of per-class NoC and FR."""
    if not per_class:
        raise ValueError("cannot average an empty metrics list")
    avg_noc = float(np.mean([m.mean_noc for m in per_class]))
    avg_fr = float(np.mean([m.failure_rate for m in per_class]))
    return avg_noc, avg_fr


@dataclass
class ConfigResult:
    config: AdaptationConfig
    per_class: list[ClassMetrics]
    avg_noc: float
    avg_fr: float


def run_config(
    dataset: dict[str, list[tuple[str, np.ndarray, np.ndarray]]],
    model_base: DecoderParams,
    config: AdaptationConfig,
    seed: int = 0,
    per_class_state: bool = True,
) -> ConfigResult:
    """Run one configuration over the whole dataset.

    ``dataset`` maps class name to (instance_id, image, gt) triples.
    Instance order within a class is the manifest order shuffled once by
    the seed. With ``per_class_state`` the model is re-initialized from
    ``model_base`` for every class; otherwise adaptation carries across
    classes sequentially.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(seed)
    per_class: list[ClassMetrics] = []
    engine = AdaptationEngine(model_base.copy(), config)
    for class_name in sorted(dataset):
        if per_class_state:
            engine = AdaptationEngine(model_base.copy(), config)
        instances = dataset[class_name]
        order = rng.permutation(len(instances))
        results = []
        for i in order:
            instance_id, image, gt = instances[i]
            results.append(run_session(engine, image, gt, instance_id))
        per_class.append(aggregate(results, class_name))
    avg_noc, avg_fr = macro_average(per_class)
    return ConfigResult(config, per_class, avg_noc, avg_fr)


def run_sweep(
    dataset,
    model_base: DecoderParams,
    configs: list[AdaptationConfig],
    seed: int = 0,
    per_class_state: bool = True,
) -> list[ConfigResult]:
    """Run every configuration from a fresh copy of the base model."""
    return [
        run_config(dataset, model_base, cfg, seed, per_class_state)
        for cfg in configs
    ]


def standard_configs(**common) -> list[AdaptationConfig]:
    """The ten standard CA x RM x CM configuration combinations."""
    rows = [
        ("off", "off", False),
        ("reset", "erosion", True),
        ("reset", "confidence", True),
        ("reset", "off", False),
        ("continuous", "off", False),
        ("off", "erosion", False),
        ("off", "confidence", False),
        ("off", "off", True),
        ("reset", "off", True),
        ("reset", "untreated", True),
    ]
    return [
        AdaptationConfig(ca_mode=ca, rm_mode=rm, cm_enabled=cm, **common)
        for ca, rm, cm in rows
    ]


def emit_csv(results: list[ConfigResult]) -> str:
    """CSV with one row per (config, class) plus an 'average' row per config.

    NoC is printed to 3 decimals and FR to 2, so identical runs produce
    byte-identical files.
    """
    if not results:
        raise ValueError("no results to emit")
    buf = io.StringIO()
    buf.write("ca,rm,cm,class,n,noc,fr\n")
    for res in results:
        cfg = res.config
        cm = "1" if cfg.cm_enabled else "0"
        for m in res.per_class:
            buf.write(
                f"{cfg.ca_mode},{cfg.rm_mode},{cm},{m.class_name},"
                f"{m.n_instances},{m.mean_noc:.3f},{m.failure_rate:.2f}\n"
            )
        total = sum(m.n_instances for m in res.per_class)
        buf.write(
            f"{cfg.ca_mode},{cfg.rm_mode},{cm},average,"
            f"{total},{res.avg_noc:.3f},{res.avg_fr:.2f}\n"
        )
    return buf.getvalue()


def emit_markdown(results: list[ConfigResult]) -> str:
    """Aligned Markdown table: one row per config, class columns + average."""
    if not results:
        raise ValueError("no results to emit")
    classes = [m.class_name for m in results[0].per_class]
    header = ["Config"] + [f"{c} NoC" for c in classes] + [f"{c} FR" for c in classes]
    header += ["Avg NoC", "Avg FR"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join("---" for _ in header) + "|"]
    for res in results:
        cells = [res.config.label()]
        cells += [f"{m.mean_noc:.3f}" for m in res.per_class]
        cells += [f"{m.failure_rate:.2f}" for m in res.per_class]
        cells += [f"{res.avg_noc:.3f}", f"{res.avg_fr:.2f}"]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
