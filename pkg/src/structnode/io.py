"""File formats: trajectory CSVs, dataset manifests, trained-parameter files.

Trajectory CSVs carry a header row with columns t, y1..y_dy, u1..u_du,
x1..x_dx; the u and x groups are optional. Parameter files are plain JSON
(nested lists for arrays) with a schema_version field.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .nets import GRUParams, MLPParams
from .observers import KKLGains, RecognitionVariant
from .ode import TimeGrid
from .priors import ModelSpec
from .systems import Trajectory
from .tape import Node
from .training import Scaler

PARAMS_SCHEMA_VERSION = 1


def write_trajectory_csv(path, traj):
    d_y = traj.y.shape[1]
    d_u = traj.u.shape[1] if traj.u is not None else 0
    d_x = traj.x.shape[1] if traj.x is not None else 0
    header = (["t"] + [f"y{i+1}" for i in range(d_y)]
              + [f"u{i+1}" for i in range(d_u)]
              + [f"x{i+1}" for i in range(d_x)])
    times = traj.grid.times()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(traj.grid.n):
            row = [repr(float(times[i]))]
            row += [repr(float(v)) for v in traj.y[i]]
            if d_u:
                row += [repr(float(v)) for v in traj.u[i]]
            if d_x:
                row += [repr(float(v)) for v in traj.x[i]]
            writer.writerow(row)


def read_trajectory_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    if not rows or header[0] != "t":
        raise ConfigError(f"{path}: not a trajectory CSV")
    data = np.asarray(rows, dtype=np.float64)
    cols = {name: i for i, name in enumerate(header)}
    t = data[:, 0]
    if len(t) < 2:
        raise ConfigError(f"{path}: need at least two samples")
    dt = t[1] - t[0]
    if np.max(np.abs(np.diff(t) - dt)) > 1e-9 * max(1.0, abs(t[-1])):
        raise ConfigError(f"{path}: non-uniform time grid")
    grid = TimeGrid(float(t[0]), float(dt), len(t))

    def group(prefix):
        names = [n for n in header if n.startswith(prefix) and n[len(prefix):].isdigit()]
        if not names:
            return None
        names.sort(key=lambda n: int(n[len(prefix):]))
        return data[:, [cols[n] for n in names]]

    y = group("y")
    if y is None:
        raise ConfigError(f"{path}: no output columns")
    return Trajectory(grid=grid, y=y, u=group("u"), x=group("x"))


def write_dataset(dirpath, trajs, manifest_extra=None):
    """One CSV per trajectory plus a manifest with per-trajectory metadata."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    names = []
    for j, traj in enumerate(trajs):
        name = f"traj_{j:04d}.csv"
        write_trajectory_csv(dirpath / name, traj)
        names.append(name)
    manifest = {
        "schema_version": PARAMS_SCHEMA_VERSION,
        "trajectories": names,
        "meta": [traj.meta for traj in trajs],
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(dirpath / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def read_dataset(dirpath):
    dirpath = Path(dirpath)
    manifest_path = dirpath / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {dirpath}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    trajs = []
    for j, name in enumerate(manifest["trajectories"]):
        traj = read_trajectory_csv(dirpath / name)
        metas = manifest.get("meta", [])
        if j < len(metas):
            traj.meta = metas[j]
        trajs.append(traj)
    return trajs, manifest


def _arr(x):
    return np.asarray(x, dtype=np.float64)


def _mlp_to_json(mlp):
    if mlp is None:
        return None
    return {"weights": [w.value.tolist() for w in mlp.weights],
            "biases": [b.value.tolist() for b in mlp.biases]}


def _mlp_from_json(obj, name):
    if obj is None:
        return None
    weights = [Node(_arr(w), name=f"{name}.w{i}") for i, w in enumerate(obj["weights"])]
    biases = [Node(_arr(b), name=f"{name}.b{i}") for i, b in enumerate(obj["biases"])]
    return MLPParams(weights, biases)


def _gru_to_json(gru):
    if gru is None:
        return None
    fields = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"]
    return {**{f: getattr(gru, f).value.tolist() for f in fields},
            "hidden": gru.hidden}


def _gru_from_json(obj):
    if obj is None:
        return None
    fields = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"]
    return GRUParams(**{f: Node(_arr(obj[f]), name=f"gru.{f}") for f in fields},
                     hidden=int(obj["hidden"]))


def _gains_to_json(gains):
    if gains is None:
        return None
    return {"d_params": gains.d_params.value.tolist(), "kinds": list(gains.kinds),
            "F": gains.F.tolist(), "d_z": gains.d_z, "trainable": gains.trainable}


def _gains_from_json(obj):
    if obj is None:
        return None
    from .observers import _block_parametrization

    kinds = list(obj["kinds"])
    blocks = []
    i = 0
    while i < len(kinds):
        if kinds[i] == "re" and i + 1 < len(kinds) and kinds[i + 1] == "im":
            blocks.append(("c", 0.0, 0.0))
            i += 2
        else:
            blocks.append(("r", 0.0))
            i += 1
    _, basis, kinds_built = _block_parametrization(blocks)
    if kinds_built != kinds:
        raise ConfigError("inconsistent gain parametrization in params file")
    return KKLGains(d_params=Node(_arr(obj["d_params"]), name="kkl.D"),
                    basis=basis, kinds=kinds, F=_arr(obj["F"]),
                    d_z=int(obj["d_z"]), trainable=bool(obj["trainable"]))


def save_params(path, model, recog, scaler):
    payload = {
        "schema_version": PARAMS_SCHEMA_VERSION,
        "model": {
            "kind": model.kind,
            "d_x": model.d_x,
            "d_u": model.d_u,
            "template": model.template,
            "lambda_res": model.lambda_res,
            "pair_map": [list(p) for p in model.pair_map],
            "prior": None if model.prior is None else
                [model.prior[0].tolist(),
                 None if model.prior[1] is None else model.prior[1].tolist()],
            "scalars": {k: float(v.value) for k, v in model.params.items()},
            "f_net": _mlp_to_json(model.f_net),
            "h_net": _mlp_to_json(model.h_net),
        },
        "recognition": {
            "kind": recog.kind,
            "t_c": recog.t_c,
            "dt": recog.dt,
            "d_y": recog.d_y,
            "d_u": recog.d_u,
            "d_x": recog.d_x,
            "d_omega": recog.d_omega,
            "psi": _mlp_to_json(recog.psi),
            "gru": _gru_to_json(recog.gru),
            "gains": _gains_to_json(recog.gains),
        },
        "scaler": {k: getattr(scaler, k).tolist()
                   for k in ("mean_y", "std_y", "mean_u", "std_u", "mean_x", "std_x")},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def load_params(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no parameter file at {path}")
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != PARAMS_SCHEMA_VERSION:
        raise ConfigError(f"unsupported params schema in {path}")
    m = payload["model"]
    prior = None
    if m["prior"] is not None:
        prior = (_arr(m["prior"][0]),
                 None if m["prior"][1] is None else _arr(m["prior"][1]))
    model = ModelSpec(
        kind=m["kind"], d_x=int(m["d_x"]), d_u=int(m["d_u"]),
        f_net=_mlp_from_json(m["f_net"], "f"),
        h_net=_mlp_from_json(m["h_net"], "H"),
        params={k: Node(_arr(v), name=f"param.{k}") for k, v in m["scalars"].items()},
        template=m["template"], prior=prior,
        lambda_res=float(m["lambda_res"]),
        pair_map=[tuple(p) for p in m["pair_map"]],
    )
    r = payload["recognition"]
    recog = RecognitionVariant(
        kind=r["kind"], t_c=float(r["t_c"]), dt=float(r["dt"]),
        d_y=int(r["d_y"]), d_u=int(r["d_u"]), d_x=int(r["d_x"]),
        psi=_mlp_from_json(r["psi"], "psi"),
        gains=_gains_from_json(r["gains"]),
        gru=_gru_from_json(r["gru"]),
        d_omega=int(r["d_omega"]),
    )
    s = payload["scaler"]
    scaler = Scaler(**{k: _arr(s[k]) for k in s})
    return model, recog, scaler
