"""Command line interface.

Benchmark and dataset commands drive the library directly; the ``client``
group is a thin HTTP client for a running annotation service.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import adapt, bench, dataio, model


def _config_from_options(**kw) -> adapt.AdaptationConfig:
    try:
        return adapt.AdaptationConfig(**kw)
    except ValueError as exc:
        raise click.ClickException(str(exc))


def _load_bench_dataset(dataset_dir: str):
    try:
        manifest = dataio.load_dataset(dataset_dir)
    except dataio.DatasetError as exc:
        raise click.ClickException(str(exc))
    data = dataio.to_memory(manifest)
    if not data:
        raise click.ClickException(f"no instances found under {dataset_dir}")
    return data


def _load_model(params_path: str | None, seed: int) -> model.DecoderParams:
    if params_path:
        return model.load_params(params_path)
    return model.init_params(seed)


@click.group()
def main():
    """Interactive segmentation benchmark and annotation service."""


# ---------------------------------------------------------------------------
# data

@main.group()
def data():
    """Dataset ingestion, statistics and synthesis."""


@data.command()
@click.argument("root", type=click.Path(exists=True, file_okay=False))
def validate(root):
    """Validate a dataset directory; nonzero exit on any problem."""
    try:
        manifest = dataio.load_dataset(root)
    except dataio.DatasetError as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"ok: {len(manifest.classes)} classes, "
        f"{manifest.n_masks} masks, {manifest.n_images} images"
    )


@data.command()
@click.argument("root", type=click.Path(exists=True, file_okay=False))
def stats(root):
    """Per-class mean mask-area fraction in percent."""
    try:
        manifest = dataio.load_dataset(root)
        for name, pct in dataio.class_stats(manifest).items():
            click.echo(f"{name}: {pct:.2f}")
    except dataio.DatasetError as exc:
        raise click.ClickException(str(exc))


@data.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", "n_instances", type=int, default=50, show_default=True)
@click.option("--family", type=click.Choice(dataio.SHAPE_FAMILIES), default="disk",
              show_default=True)
@click.option("--shift", type=click.Choice(dataio.DOMAIN_SHIFTS), default="none",
              show_default=True)
@click.option("--height", type=int, default=48, show_default=True)
@click.option("--width", type=int, default=48, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def synth(seed, n_instances, family, shift, height, width, out):
    """Generate a synthetic shapes dataset on disk."""
    ds = dataio.synth_dataset(seed, n_instances, family, shift, height, width)
    dataio.write_dataset(ds, out)
    click.echo(f"wrote {n_instances} instances to {out}")


# ---------------------------------------------------------------------------
# model

@main.group(name="model")
def model_group():
    """Decoder parameter management."""


@model_group.command()
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--epochs", type=int, default=5, show_default=True)
@click.option("--lr", type=float, default=1e-2, show_default=True)
@click.option("--n", "n_instances", type=int, default=80, show_default=True)
@click.option("--family", type=click.Choice(dataio.SHAPE_FAMILIES), default="disk",
              show_default=True)
@click.option("--shift", type=click.Choice(dataio.DOMAIN_SHIFTS), default="none",
              show_default=True)
@click.option("--height", type=int, default=48, show_default=True)
@click.option("--width", type=int, default=48, show_default=True)
def pretrain(out, seed, epochs, lr, n_instances, family, shift, height, width):
    """Pretrain the decoder on synthetic shapes and save it."""
    ds = dataio.synth_dataset(seed, n_instances, family, shift, height, width)
    pairs = [(img, gt) for instances in ds.values() for _, img, gt in instances]
    params = model.pretrain_base(pairs, epochs=epochs, lr=lr, seed=seed)
    model.save_params(params, out)
    click.echo(f"saved decoder parameters to {out}")


# ---------------------------------------------------------------------------
# bench

_CONFIG_OPTIONS = [
    click.option("--ca", type=click.Choice(adapt.CA_MODES), default="off",
                 show_default=True),
    click.option("--rm", type=click.Choice(adapt.RM_MODES), default="off",
                 show_default=True),
    click.option("--cm", is_flag=True, default=False),
    click.option("--iou-thr", type=float, default=0.85, show_default=True),
    click.option("--max-clicks", type=int, default=20, show_default=True),
    click.option("--erosion-k", type=int, default=5, show_default=True),
    click.option("--delta", type=float, default=0.45, show_default=True),
    click.option("--lr", type=float, default=adapt.LR_PRESETS["toy"],
                 show_default=True),
    click.option("--sigma", type=float, default=10.0, show_default=True),
]


def _with_config_options(f):
    for opt in reversed(_CONFIG_OPTIONS):
        f = opt(f)
    return f


@main.group(name="bench")
def bench_group():
    """Benchmark runs and configuration sweeps."""


@bench_group.command()
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@_with_config_options
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--cross-class", is_flag=True, default=False,
              help="carry adaptation state across classes instead of per class")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def run(dataset_dir, ca, rm, cm, iou_thr, max_clicks, erosion_k, delta, lr,
        sigma, seed, params_path, cross_class, out):
    """Run one adaptation configuration over a dataset and write a CSV."""
    config = _config_from_options(
        ca_mode=ca, rm_mode=rm, cm_enabled=cm, lr=lr, erosion_k=erosion_k,
        delta=delta, iou_threshold=iou_thr, max_clicks=max_clicks, sigma=sigma,
    )
    dataset = _load_bench_dataset(dataset_dir)
    base = _load_model(params_path, seed)
    result = bench.run_config(dataset, base, config, seed,
                              per_class_state=not cross_class)
    Path(out).write_text(bench.emit_csv([result]))
    click.echo(f"{config.label()}: NoC {result.avg_noc:.3f}, FR {result.avg_fr:.2f}")
    click.echo(f"wrote {out}")


def _parse_sweep_configs(path: str, defaults: dict) -> list[adapt.AdaptationConfig]:
    configs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kw = dict(defaults)
        for token in line.replace(",", " ").split():
            if "=" not in token:
                raise click.ClickException(
                    f"{path}:{lineno}: expected key=value, got {token!r}"
                )
            key, value = token.split("=", 1)
            kw[key] = value
        try:
            configs.append(adapt.AdaptationConfig(**{
                k: _coerce(adapt.AdaptationConfig, k, v) for k, v in kw.items()
            }))
        except (TypeError, ValueError) as exc:
            raise click.ClickException(f"{path}:{lineno}: {exc}")
    if not configs:
        raise click.ClickException(f"no configurations found in {path}")
    return configs


def _coerce(cls, key, value):
    import dataclasses as dc

    if not isinstance(value, str):
        return value
    types = {f.name: f.type for f in dc.fields(cls)}
    if key not in types:
        raise ValueError(f"unknown config key {key!r}")
    return adapt._parse_value(types[key], value)


@bench_group.command()
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--configs", "configs_path", type=click.Path(exists=True, dir_okay=False),
              help="one configuration per line as key=value pairs")
@click.option("--standard", is_flag=True, default=False,
              help="use the canonical ten-row CA x RM x CM configuration set")
@click.option("--lr", type=float, default=adapt.LR_PRESETS["toy"], show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--markdown", "markdown_out", type=click.Path(dir_okay=False))
def sweep(dataset_dir, configs_path, standard, lr, seed, params_path, out, markdown_out):
    """Run a set of configurations, each from a fresh model copy."""
    if standard:
        configs = bench.standard_configs(lr=lr)
    elif configs_path:
        configs = _parse_sweep_configs(configs_path, {"lr": lr})
    else:
        raise click.ClickException("provide --configs FILE or --standard")
    dataset = _load_bench_dataset(dataset_dir)
    base = _load_model(params_path, seed)
    results = bench.run_sweep(dataset, base, configs, seed)
    Path(out).write_text(bench.emit_csv(results))
    if markdown_out:
        Path(markdown_out).write_text(bench.emit_markdown(results))
    for r in results:
        click.echo(f"{r.config.label()}: NoC {r.avg_noc:.3f}, FR {r.avg_fr:.2f}")
    click.echo(f"wrote {out}")


# ---------------------------------------------------------------------------
# serve

@main.command()
@click.option("--images", "image_root", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="AdaptationConfig key=value file")
@click.option("--export", "export_dir", type=click.Path(file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(image_root, params_path, config_path, export_dir, host, port):
    """Start the annotation service."""
    import uvicorn

    from .service import create_app

    config = (
        adapt.AdaptationConfig.from_file(config_path)
        if config_path
        else adapt.AdaptationConfig()
    )
    app = create_app(image_root, params_path, config, export_dir)
    uvicorn.run(app, host=host, port=port)


# ---------------------------------------------------------------------------
# thin HTTP client

@main.group()
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
@click.pass_context
def client(ctx, url):
    """Thin client for a running annotation service."""
    ctx.obj = url.rstrip("/")


def _request(url: str, method: str, path: str, body=None):
    import httpx

    resp = httpx.request(method, url + path, json=body, timeout=30.0)
    if resp.status_code >= 400:
        raise click.ClickException(f"{resp.status_code}: {resp.text}")
    return resp.json()


@client.command(name="images")
@click.pass_obj
def client_images(url):
    click.echo(json.dumps(_request(url, "GET", "/v1/images"), indent=2))


@client.command(name="create")
@click.argument("image_id")
@click.pass_obj
def client_create(url, image_id):
    click.echo(json.dumps(
        _request(url, "POST", "/v1/sessions", {"image_id": image_id})
    ))


@client.command(name="click")
@click.argument("session_id")
@click.argument("row", type=int)
@click.argument("col", type=int)
@click.option("--neg", is_flag=True, default=False)
@click.pass_obj
def client_click(url, session_id, row, col, neg):
    out = _request(url, "POST", f"/v1/sessions/{session_id}/clicks",
                   {"row": row, "col": col, "label": "neg" if neg else "pos"})
    fg = sum(out["mask_rle"]["runs"][1::2])
    click.echo(f"clicks={out['clicks']} adapted={out['adapted']} fg_pixels={fg}")


@client.command(name="undo")
@click.argument("session_id")
@click.pass_obj
def client_undo(url, session_id):
    out = _request(url, "POST", f"/v1/sessions/{session_id}/undo")
    click.echo(f"clicks={out['clicks']} approximate={out['approximate']}")


@client.command(name="finish")
@click.argument("session_id")
@click.option("--reject", is_flag=True, default=False)
@click.pass_obj
def client_finish(url, session_id, reject):
    out = _request(url, "POST", f"/v1/sessions/{session_id}/finish",
                   {"accept": not reject})
    fg = sum(out["mask_rle"]["runs"][1::2])
    click.echo(f"final mask foreground pixels: {fg}")


if __name__ == "__main__":
    sys.exit(main())
