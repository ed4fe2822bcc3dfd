"""Command-line client for the explanation service.

Every subcommand talks to the HTTP API: against a remote instance when
``--server`` is given, otherwise against an in-process copy of the app, so
both paths exercise the same request/response surface.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

from . import __version__
from .configfile import load_config, referenced_files


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _post(ctx, path: str, payload: dict) -> dict:
    with _client(ctx.obj.get("server")) as client:
        response = client.post(path, json=payload)
        if response.status_code != 200:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise click.ClickException(f"{path} failed ({response.status_code}): {detail}")
        return response.json()


@click.group()
@click.version_option(__version__)
@click.option("--server", default=None, metavar="URL", help="Remote service URL; default runs in-process.")
@click.pass_context
def main(ctx, server):
    """Saliency estimation for embedding-based text classifiers."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command("gen-data")
@click.option("--vocab", type=int, default=200, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True)
@click.option("--length", type=int, default=20, show_default=True)
@click.option("--count", type=int, default=500, show_default=True)
@click.option("--rule", type=click.Choice(["planted-keyword", "linear-teacher"]),
              default="planted-keyword", show_default=True)
@click.option("--planted", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=".", show_default=True,
              help="Directory receiving table.tsv and instances.txt.")
@click.pass_context
def gen_data(ctx, vocab, dim, length, count, rule, planted, seed, out):
    """Generate a synthetic corpus (embedding table + labelled instances)."""
    body = _post(ctx, "/corpus/generate", {
        "vocab_size": vocab,
        "embedding_dim": dim,
        "sequence_length": length,
        "instances": count,
        "label_rule": rule,
        "planted_keywords": planted,
        "seed": seed,
    })
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "table.tsv").write_text(body["table"], encoding="utf-8")
    (out_dir / "instances.txt").write_text(body["instances"], encoding="utf-8")
    click.echo(f"wrote {out_dir / 'table.tsv'} and {out_dir / 'instances.txt'} "
               f"({body['positives']} positive instances)")


@main.command("train-probe")
@click.option("--table", "table_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--epochs", type=int, default=2500, show_default=True)
@click.option("--rate", type=float, default=5.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="probe.model", show_default=True)
@click.pass_context
def train_probe(ctx, table_path, data_path, epochs, rate, seed, out):
    """Fit the logistic bag-of-embeddings probe on a corpus."""
    body = _post(ctx, "/probe/train", {
        "table": Path(table_path).read_text(encoding="utf-8"),
        "instances": Path(data_path).read_text(encoding="utf-8"),
        "epochs": epochs,
        "learning_rate": rate,
        "seed": seed,
    })
    Path(out).write_text(body["model"], encoding="utf-8")
    click.echo(f"wrote {out} (training accuracy {body['train_accuracy']:.3f})")


@main.command("explain")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--table", "table_path", type=click.Path(exists=True), required=True)
@click.option("--tokens", default=None, help="Comma-separated token ids.")
@click.option("--data", "data_path", type=click.Path(exists=True), default=None,
              help="Instances file; picks the sequence at --index.")
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--sigma", type=float, default=0.1, show_default=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--estimator", type=click.Choice(["ols", "closed-form", "sparse"]), default=None)
@click.option("--sparse-L", "sparse_l", type=float, default=None,
              help="L1 budget; implies the sparse estimator.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the saliency CSV here (default: stdout).")
@click.option("--html-out", type=click.Path(dir_okay=False), default=None,
              help="Also write an HTML heatmap fragment.")
@click.pass_context
def explain_command(ctx, model_path, table_path, tokens, data_path, index,
                    sigma, samples, seed, estimator, sparse_l, out, html_out):
    """Explain one token sequence with the perturbation estimator."""
    if tokens is None and data_path is None:
        raise click.UsageError("provide --tokens or --data/--index")
    if tokens is not None:
        token_list = [int(t) for t in tokens.split(",") if t.strip()]
    else:
        from .corpus import load_instances

        instances = load_instances(data_path)
        if not (0 <= index < len(instances)):
            raise click.UsageError(f"--index {index} outside 0..{len(instances) - 1}")
        token_list = list(instances[index][0].tokens)
    body = _post(ctx, "/explain", {
        "model": Path(model_path).read_text(encoding="utf-8"),
        "table": Path(table_path).read_text(encoding="utf-8"),
        "tokens": token_list,
        "sigma": sigma,
        "samples": samples,
        "seed": seed,
        "estimator": estimator,
        "sparse_l": sparse_l,
    })
    if out:
        Path(out).write_text(body["csv"], encoding="utf-8")
        click.echo(f"wrote {out} (method {body['method']})")
    else:
        click.echo(body["csv"], nl=False)
    if html_out:
        Path(html_out).write_text(body["html"], encoding="utf-8")
        click.echo(f"wrote {html_out}")


@main.command("evaluate")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--table", "table_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--explainer", default="mase", show_default=True)
@click.option("--k", default="1,5,10,15", show_default=True, help="Comma-separated masking sizes.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sigma", type=float, default=0.1, show_default=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--infidelity-samples", type=int, default=200, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write rows as CSV (default: stdout table).")
@click.pass_context
def evaluate_command(ctx, model_path, table_path, data_path, explainer, k,
                     seed, sigma, samples, infidelity_samples, out):
    """Delta accuracy and infidelity of one explainer on a dataset."""
    body = _post(ctx, "/evaluate", {
        "model": Path(model_path).read_text(encoding="utf-8"),
        "table": Path(table_path).read_text(encoding="utf-8"),
        "instances": Path(data_path).read_text(encoding="utf-8"),
        "explainer": explainer,
        "k": [int(v) for v in k.split(",") if v.strip()],
        "seed": seed,
        "sigma": sigma,
        "samples": samples,
        "infidelity_samples": infidelity_samples,
    })
    lines = ["k,CC,CC_after,delta,infidelity_mean,infidelity_se"]
    for row in body["rows"]:
        lines.append(
            f"{row['k']},{row['correct']},{row['correct_after']},"
            f"{'' if row['delta'] is None else row['delta']},"
            f"{'' if row['infidelity_mean'] is None else row['infidelity_mean']},"
            f"{'' if row['infidelity_se'] is None else row['infidelity_se']}"
        )
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command("benchmark")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Report CSV path (default: the config's output path).")
@click.pass_context
def benchmark_command(ctx, config_path, out):
    """Run the full explainer-comparison grid from a config file."""
    config = load_config(config_path)
    files = {}
    for name in referenced_files(config):
        path = config.base_dir / name
        if not path.exists():
            raise click.ClickException(f"config references missing file: {path}")
        files[name] = path.read_text(encoding="utf-8")
    body = _post(ctx, "/benchmark", {"config": config.text, "files": files})
    out_path = Path(out) if out else config.base_dir / config.output_path
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(body["report_csv"], encoding="utf-8")
    table_path = out_path.with_name(out_path.stem + ".txt")
    table_path.write_text(body["table"], encoding="utf-8")
    meta_path = out_path.with_name(out_path.name + ".meta.json")
    meta_path.write_text(json.dumps(body["meta"], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(f"wrote {out_path}, {table_path}, {meta_path}")
    click.echo(body["table"], nl=False)


@main.command("bridge-check")
@click.option("--command", "command", default=None, help="Server launch command (stdio transport).")
@click.option("--tcp", default=None, metavar="HOST:PORT", help="Connect over TCP instead.")
@click.option("--dim", type=int, required=True)
@click.option("--model", "model_path", type=click.Path(exists=True), default=None,
              help="Reference toy-model file for numeric agreement.")
@click.option("--timeout", type=float, default=30.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def bridge_check_command(ctx, command, tcp, dim, model_path, timeout, seed):
    """Protocol conformance test against a model server."""
    if bool(command) == bool(tcp):
        raise click.UsageError("provide exactly one of --command/--tcp")
    body = _post(ctx, "/bridge/check", {
        "command": command,
        "tcp": tcp,
        "dim": dim,
        "reference_model": Path(model_path).read_text(encoding="utf-8") if model_path else None,
        "timeout": timeout,
        "seed": seed,
    })
    for check in body["checks"]:
        status = "ok  " if check["passed"] else "FAIL"
        click.echo(f"[{status}] {check['name']}: {check['detail']}")
    if body["passed"]:
        click.echo("bridge-check: zero protocol violations")
    else:
        raise click.ClickException(
            "protocol violations: " + "; ".join(body["violations"])
        )


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve_command(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main(sys.argv[1:])
