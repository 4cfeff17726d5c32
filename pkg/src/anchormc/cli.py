"""Command-line surface: map | sample | combine | evaluate | meta | diag.

Every command takes ``--config file`` plus ``key=value`` overrides, writes its
resolved configuration next to its outputs, and reads upstream artifacts from
the configured output directory.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import data as data_mod
from .artifacts import (
    ConfigError,
    load_artifact,
    load_config,
    make_artifact,
    save_artifact,
)
from .diagnostics import acf_table_csv, hmc_chain, iact
from .kernels import HmcConfig, PcnConfig
from .nets import NetworkSpec, OptConfig, make_loglik, map_estimate
from .parallel import RunResult, combine as combine_islands, island_weights, run_parallel
from .smc import McmcConfig, SmcConfig
from .targets import GaussianPrior, TargetDensity, make_anchored, make_cold
from .toys import bimodal_toy
from .uncertainty import (
    PredictiveMatrix,
    abstain_2level,
    entropy_decomposition,
    features,
    metrics,
    predictive,
    threshold_metrics,
    train_meta,
)


def _write_resolved_config(cfg: dict, out_dir: str, command: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{command}.config"), "w") as f:
        for key in sorted(cfg):
            f.write(f"{key} = {cfg[key]}\n")


def _load_datasets(cfg: dict):
    """Returns (train, val, test, spec, n_classes). Labels are remapped to
    0..K-1 in the order of ``labels_keep``."""
    if cfg["features_csv"]:
        full = data_mod.load_csv_features(cfg["features_csv"])
        n_tr, n_va = cfg["n_train"], cfg["n_val"]
        train = full.subset(np.arange(0, n_tr))
        val = full.subset(np.arange(n_tr, n_tr + n_va), split="validation")
        test = full.subset(np.arange(n_tr + n_va, len(full)), split="test")
        k = int(max(full.y)) + 1
    else:
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if not cfg[key]:
                raise ConfigError(f"config key {key!r} is required for IDX input")
        keep = [int(t) for t in str(cfg["labels_keep"]).split(",")]
        remap = {lab: i for i, lab in enumerate(keep)}
        raw_train = data_mod.load_idx(cfg["train_images"], cfg["train_labels"]).filter_labels(keep)
        raw_test = data_mod.load_idx(cfg["test_images"], cfg["test_labels"]).filter_labels(keep)

        def remapped(ds, split):
            y = np.array([remap[int(v)] for v in ds.y])
            return data_mod.Dataset(x=ds.x, y=y, split=split, image_shape=ds.image_shape)

        n_tr, n_va = cfg["n_train"], cfg["n_val"]
        train = remapped(raw_train.take(n_tr), "train")
        val = remapped(raw_train.subset(np.arange(n_tr, n_tr + n_va)), "validation")
        test = remapped(raw_test.take(cfg["n_test"]), "test")
        k = len(keep)

    if cfg["arch"] == "cnn":
        if train.image_shape is None:
            raise ConfigError("cnn architecture needs image input")
        spec = NetworkSpec(kind="cnn", image_shape=train.image_shape, n_classes=k)
    else:
        if cfg["mlp_widths"]:
            widths = tuple(int(t) for t in str(cfg["mlp_widths"]).split(","))
        else:
            widths = (train.x.shape[1], k)
        spec = NetworkSpec(kind="mlp", widths=widths)
    return train, val, test, spec, k


def _opt_config(cfg: dict) -> OptConfig:
    return OptConfig(
        learning_rate=cfg["lr"],
        batch_size=cfg["batch"],
        max_epochs=cfg["max_epochs"],
        patience=cfg["patience"],
    )


def cmd_map(cfg: dict) -> None:
    out = cfg["output_dir"]
    train, val, _, spec, _ = _load_datasets(cfg)
    prior = GaussianPrior(variance=cfg["v"], dim=spec.n_params)
    result = map_estimate(spec, prior, train, val, _opt_config(cfg), seed=cfg["seed"])
    artifact = make_artifact(
        cfg, result.theta, kind="map", epochs_used=result.epochs_used, seed=cfg["seed"]
    )
    save_artifact(os.path.join(out, "map"), artifact)
    _write_resolved_config(cfg, out, "map")
    print(f"map: {result.epochs_used} epochs, val NLL {result.val_nll:.4f} -> {out}/map")


def _build_target(cfg: dict, spec: NetworkSpec, train) -> TargetDensity:
    ll, grad = make_loglik(spec, train)
    target = TargetDensity(
        loglik=ll, grad_loglik=grad, prior=GaussianPrior(cfg["v"], spec.n_params)
    )
    s = cfg["s"]
    if s < 1.0:
        map_prefix = os.path.join(cfg["output_dir"], "map")
        try:
            anchor = load_artifact(map_prefix).samples[0]
        except FileNotFoundError:
            raise FileNotFoundError(
                f"sampling with s={s} needs the MAP artifact at {map_prefix!r}; "
                "run `anchormc map` first"
            ) from None
        target = make_anchored(target, anchor, s)
    if cfg["t"] != 1.0:
        target = make_cold(target, cfg["t"])
    return target


def cmd_sample(cfg: dict) -> None:
    out = cfg["output_dir"]
    train, _, _, spec, _ = _load_datasets(cfg)
    target = _build_target(cfg, spec, train)
    hmc = HmcConfig(cfg["step_size"], cfg["leapfrog"]) if cfg["step_size"] > 0 else None
    if cfg["method"] == "smc":
        run_cfg: SmcConfig | McmcConfig = SmcConfig(
            n_particles=cfg["n"],
            ess_fraction=cfg["rho"],
            mutation_tol=cfg["eta"],
            max_mutation_steps=cfg["max_mutation_steps"],
            kernel=cfg["kernel"],
            hmc=hmc,
        )
    elif cfg["method"] == "mcmc":
        run_cfg = McmcConfig(
            n_chains=cfg["n"], n_steps=cfg["mcmc_steps"], kernel=cfg["kernel"], hmc=hmc
        )
    else:
        raise ConfigError(f"unknown sampling method {cfg['method']!r}")
    results = run_parallel(target, run_cfg, cfg["p"], cfg["seed"])
    for r in results:
        if r.failed:
            print(f"island {r.p} FAILED: {r.error}", file=sys.stderr)
            continue
        schedule = {}
        if r.schedule is not None:
            schedule = {
                "lambdas": list(r.schedule.lambdas),
                "ess": list(r.schedule.ess_values),
                "mutation_steps": list(r.schedule.mutation_steps),
                "adaptive": r.schedule.adaptive,
                "warnings": list(r.schedule.warnings),
            }
        artifact = make_artifact(
            cfg,
            r.samples,
            kind=cfg["method"],
            log_z=r.log_z,
            epochs_used=r.epochs_per_particle,
            schedule=schedule,
            seed=cfg["seed"],
        )
        save_artifact(os.path.join(out, f"island_{r.p:03d}"), artifact)
    _write_resolved_config(cfg, out, "sample")
    done = sum(not r.failed for r in results)
    print(f"sample: {done}/{len(results)} islands -> {out}/island_*")


def _island_results(out: str) -> list[RunResult]:
    prefixes = sorted(
        p[: -len(".manifest.json")]
        for p in glob.glob(os.path.join(out, "island_*.manifest.json"))
    )
    if not prefixes:
        raise FileNotFoundError(
            f"no island artifacts in {out!r}; run `anchormc sample` first"
        )
    results = []
    for p, prefix in enumerate(prefixes):
        a = load_artifact(prefix)
        results.append(
            RunResult(
                p=p,
                samples=a.samples,
                log_z=a.manifest["log_z"],
                epochs_per_particle=a.manifest["epochs_used"],
            )
        )
    return results


def cmd_combine(cfg: dict) -> None:
    out = cfg["output_dir"]
    results = _island_results(out)
    w, excluded = island_weights(results)
    usable = [r for r in results if r.p not in excluded]
    samples = np.concatenate([r.samples for r in usable])
    weights = np.concatenate(
        [np.full(len(r.samples), wp / len(r.samples)) for r, wp in zip(usable, w)]
    )
    artifact = make_artifact(cfg, samples, kind="combined", seed=cfg["seed"])
    artifact.manifest["particle_weights"] = [float(x) for x in weights]
    artifact.manifest["island_weights"] = [float(x) for x in w]
    artifact.manifest["excluded_islands"] = excluded
    save_artifact(os.path.join(out, "combined"), artifact)
    _write_resolved_config(cfg, out, "combine")
    eff = 1.0 / np.sum(w**2)
    print(f"combine: {len(usable)} islands, effective {eff:.2f} -> {out}/combined")


def _posterior_matrix(cfg: dict, spec: NetworkSpec, x: np.ndarray) -> PredictiveMatrix:
    """Prefer combined > islands > map artifacts from the output directory."""
    out = cfg["output_dir"]
    if os.path.exists(os.path.join(out, "combined.manifest.json")):
        a = load_artifact(os.path.join(out, "combined"))
        return predictive(a.samples, np.array(a.manifest["particle_weights"]), spec, x)
    if glob.glob(os.path.join(out, "island_*.manifest.json")):
        results = _island_results(out)
        w, excluded = island_weights(results)
        usable = [r for r in results if r.p not in excluded]
        samples = np.concatenate([r.samples for r in usable])
        weights = np.concatenate(
            [np.full(len(r.samples), wp / len(r.samples)) for r, wp in zip(usable, w)]
        )
        return predictive(samples, weights, spec, x)
    if os.path.exists(os.path.join(out, "map.manifest.json")):
        a = load_artifact(os.path.join(out, "map"))
        return predictive(a.samples, np.ones(1), spec, x)
    raise FileNotFoundError(
        f"no artifacts in {out!r}; run `anchormc map` or `anchormc sample` first"
    )


def _ood_sets(cfg: dict, test) -> dict[str, data_mod.Dataset]:
    quarter = max(1, cfg["n_ood"] // 4)
    sets = {}
    if test.image_shape is not None:
        full_test = data_mod.load_idx(cfg["test_images"], cfg["test_labels"])
        sets["heldout"] = data_mod.make_ood(full_test, "heldout", 2 * quarter, seed=cfg["ood_seed"])
        sets["white-noise"] = data_mod.make_ood(test, "white-noise", quarter, seed=cfg["ood_seed"] + 1)
        perturbed = data_mod.make_ood(test, "perturbed", quarter, seed=cfg["ood_seed"] + 2)
        sets["perturbed"] = data_mod.Dataset(
            x=perturbed.x, y=None, split="ood", image_shape=perturbed.image_shape
        )
    return sets


def cmd_evaluate(cfg: dict) -> None:
    out = cfg["output_dir"]
    _, _, test, spec, _ = _load_datasets(cfg)
    matrix = _posterior_matrix(cfg, spec, test.x)
    m = metrics(matrix, test.y)
    rows = [("test", m)]
    ent_rows = []
    ent = entropy_decomposition(matrix)
    for i in range(len(test)):
        ent_rows.append(("test", i, ent.total[i], ent.aleatoric[i], ent.epistemic[i]))
    for name, ds in _ood_sets(cfg, test).items():
        om = _posterior_matrix(cfg, spec, ds.x)
        oent = entropy_decomposition(om)
        for i in range(len(ds)):
            ent_rows.append((name, i, oent.total[i], oent.aleatoric[i], oent.epistemic[i]))
    with open(os.path.join(out, "metrics.csv"), "w") as f:
        f.write("split,accuracy,nll,brier,ece\n")
        for split, mm in rows:
            f.write(f"{split},{mm.accuracy:.6g},{mm.nll:.6g},{mm.brier:.6g},{mm.ece:.6g}\n")
    with open(os.path.join(out, "entropy.csv"), "w") as f:
        f.write("split,index,h_total,h_aleatoric,h_epistemic\n")
        for split, i, ht, ha, he in ent_rows:
            f.write(f"{split},{i},{ht:.6g},{ha:.6g},{he:.6g}\n")
    _write_resolved_config(cfg, out, "evaluate")
    print(f"evaluate: accuracy {m.accuracy:.4f}, NLL {m.nll:.4f} -> {out}/metrics.csv")


def cmd_meta(cfg: dict) -> None:
    out = cfg["output_dir"]
    train, _, test, spec, _ = _load_datasets(cfg)
    half = len(test) // 2
    meta_train_id, meta_eval_id = test.take(half), test.subset(np.arange(half, len(test)))
    ood_sets = _ood_sets(cfg, test)
    if not ood_sets:
        raise ConfigError("meta command needs image input to generate OOD data")
    ood_x = np.concatenate([ds.x for ds in ood_sets.values()])
    rng = np.random.default_rng(cfg["ood_seed"] + 10)
    perm = rng.permutation(len(ood_x))
    ood_train_x, ood_eval_x = ood_x[perm[: len(perm) // 2]], ood_x[perm[len(perm) // 2 :]]

    def block(x, labels):
        matrix = _posterior_matrix(cfg, spec, x)
        feats = features(matrix)
        if labels is None:
            z = np.ones(len(x), dtype=np.int64)
            correct = np.zeros(len(x), dtype=bool)
        else:
            correct = matrix.mean.argmax(axis=1) == labels
            z = (~correct).astype(np.int64)
        return feats, z, correct

    f_tr_id, z_tr_id, _ = block(meta_train_id.x, meta_train_id.y)
    f_tr_ood, z_tr_ood, _ = block(ood_train_x, None)
    meta = train_meta(
        np.concatenate([f_tr_id, f_tr_ood]),
        np.concatenate([z_tr_id, z_tr_ood]),
        seed=cfg["seed"],
    )
    f_ev_id, z_ev_id, correct_id = block(meta_eval_id.x, meta_eval_id.y)
    f_ev_ood, z_ev_ood, correct_ood = block(ood_eval_x, None)
    f_ev = np.concatenate([f_ev_id, f_ev_ood])
    z_ev = np.concatenate([z_ev_id, z_ev_ood])
    correct = np.concatenate([correct_id, correct_ood])
    scores = meta.predict_incorrect(f_ev)
    report = threshold_metrics(scores, z_ev)
    sweep = [(tau, abstain_2level(scores, correct, tau).accuracy) for tau in np.linspace(0, 1, 101)]
    with open(os.path.join(out, "meta_report.csv"), "w") as f:
        f.write("threshold,precision,recall,f1,auc\n")
        f.write(f"0.5,{report.precision_05:.6g},{report.recall_05:.6g},{report.f1_05:.6g},{report.auc:.6g}\n")
        f.write(
            f"{report.best_threshold:.3f},{report.precision_best:.6g},"
            f"{report.recall_best:.6g},{report.f1_best:.6g},{report.auc:.6g}\n"
        )
    with open(os.path.join(out, "abstention.csv"), "w") as f:
        f.write("threshold,two_level_accuracy\n")
        for tau, acc in sweep:
            f.write(f"{tau:.3f},{acc:.6g}\n")
    _write_resolved_config(cfg, out, "meta")
    print(
        f"meta: AUC {report.auc:.4f}, best F1 {report.f1_best:.4f} "
        f"at tau={report.best_threshold:.3f} -> {out}/meta_report.csv"
    )


def cmd_diag(cfg: dict) -> None:
    """ACF/IACT comparison on the 1-d bimodal toy across anchor strengths and
    temperatures."""
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    # toy settings chosen so the full (s=1) target still hops between modes:
    # a chain that never crosses the barrier reports a deceptively small IACT
    hmc = HmcConfig(
        cfg["step_size"] if cfg["step_size"] > 0 else 0.4,
        cfg["leapfrog"] if cfg["leapfrog"] > 1 else 5,
    )
    # the default mcmc_steps (sized for posterior sampling) is far too short
    # for IACT estimation, so only honor an explicitly long setting
    n_steps = cfg["mcmc_steps"] if cfg["mcmc_steps"] >= 1000 else 40000
    toy = dict(prior_variance=8.0, sigma=0.8)
    series = {}
    for label, target in {
        "s=0.1": bimodal_toy(s=0.1, **toy),
        "s=0.3": bimodal_toy(s=0.3, **toy),
        "s=1": bimodal_toy(s=1.0, **toy),
        "T=0.2": bimodal_toy(temperature=0.2, **toy),
    }.items():
        theta0 = np.asarray(target.prior.mean, dtype=float)
        states, _, _ = hmc_chain(target, theta0, hmc, n_steps, seed=cfg["seed"])
        series[label] = states[:, 0]
    acf_table_csv(os.path.join(out, "acf.csv"), series, max_lag=200)
    with open(os.path.join(out, "iact.csv"), "w") as f:
        f.write("setting,iact\n")
        for label, x in series.items():
            f.write(f"{label},{iact(x):.6g}\n")
    _write_resolved_config(cfg, out, "diag")
    print(f"diag: wrote {out}/acf.csv and {out}/iact.csv")


COMMANDS = {
    "map": cmd_map,
    "sample": cmd_sample,
    "combine": cmd_combine,
    "evaluate": cmd_evaluate,
    "meta": cmd_meta,
    "diag": cmd_diag,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="anchormc")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("overrides", nargs="*", help="key=value overrides")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        COMMANDS[args.command](cfg)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
