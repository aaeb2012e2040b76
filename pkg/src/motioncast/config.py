"""Experiment configuration: JSON file, schema-validated, unknown keys
rejected. Every paper-unspecified hyperparameter lives here with its
default; the CLI seed flag overrides the file's global seed.
"""

import json
from dataclasses import dataclass

from .errors import ConfigError
from .finetune import FinetuneConfig, FreezeMask
from .model import GROUPS, Hyper
from .skeleton import load_skeleton
from .synth import SynthSpec, synth_skeleton
from .training import TrainConfig

_MISSING = object()


def _check(section, key, value, kinds, where):
    ok = False
    for kind in kinds:
        if kind is None and value is None:
            ok = True
        elif kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            ok = True
        elif kind is int and isinstance(value, int) and not isinstance(value, bool):
            ok = True
        elif kind is not None and kind is not float and kind is not int and isinstance(value, kind):
            ok = True
    if not ok:
        names = "/".join("null" if k is None else k.__name__ for k in kinds)
        raise ConfigError(f"{where}.{key}: expected {names}, got {value!r}")
    return value


def _validate(raw, schema, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    out = {}
    for key, (kinds, default) in schema.items():
        value = raw.get(key, _MISSING)
        if value is _MISSING:
            value = default
        else:
            value = _check(where, key, value, kinds, where)
        out[key] = value
    return out


_SYNTH_SCHEMA = {
    "n_subjects": ((int,), 4),
    "n_activities": ((int,), 3),
    "trials": ((int,), 4),
    "n_frames": ((int,), 60),
    "n_joints": ((int,), 20),
}

_DATA_SCHEMA = {
    "csv": ((str, None), None),
    "skeleton": ((str, None), None),
    "synth": ((dict, None), None),
    "tau": ((int,), 15),
    "horizon": ((int,), 15),
    "train_stride": ((int,), 1),
    "eval_stride": ((int,), 15),
    "val_fraction": ((float,), 0.1),
}

_MODEL_SCHEMA = {
    "hidden": ((int,), 64),
    "latent": ((int,), 32),
    "categories": ((int, None), None),  # null -> number of activities in the data
    "heads": ((int,), 4),
    "spl_hidden": ((int,), 16),
    "disc_hidden": ((int,), 32),
    "residual": ((bool,), False),
}

_TRAIN_SCHEMA = {
    "learning_rate": ((float,), 1e-3),
    "adv_weight": ((float,), 1e-2),
    "batch_size": ((int,), 32),
    "max_epochs": ((int,), 50),
    "patience": ((int,), 5),
    "teacher_forcing": ((float,), 0.0),
    "sample_budget": ((int, None), None),
    "seed": ((int, None), None),  # null -> global seed
}

_FINETUNE_SCHEMA = {
    "learning_rate": ((float,), 1e-4),
    "batch_size": ((int,), 32),
    "max_epochs": ((int,), 30),
    "patience": ((int,), 5),
    "sample_budget": ((int, None), None),
    "val_fraction": ((float,), 0.25),
    "subject": ((int, None), None),  # null -> first phase-2 pool subject
    "freeze": ((dict, None), None),
    "seed": ((int, None), None),
}

_EVAL_SCHEMA = {
    "frame_indices": ((list,), [2, 4, 8, 10, 13, 15]),
    "per_coord": ((bool,), False),
}

_TOP_SCHEMA = {
    "data": ((dict,), {}),
    "model": ((dict,), {}),
    "train": ((dict,), {}),
    "finetune": ((dict,), {}),
    "eval": ((dict,), {}),
    "output_dir": ((str,), "runs/out"),
    "seed": ((int,), 0),
}


@dataclass
class ExperimentConfig:
    data: dict
    model: dict
    train: dict
    finetune: dict
    eval: dict
    output_dir: str
    seed: int

    @classmethod
    def from_dict(cls, raw):
        top = _validate(raw, _TOP_SCHEMA, "config")
        data = _validate(top["data"], _DATA_SCHEMA, "data")
        if data["synth"] is not None:
            data["synth"] = _validate(data["synth"], _SYNTH_SCHEMA, "data.synth")
        if data["csv"] is None and data["synth"] is None:
            data["synth"] = _validate({}, _SYNTH_SCHEMA, "data.synth")
        model = _validate(top["model"], _MODEL_SCHEMA, "model")
        train = _validate(top["train"], _TRAIN_SCHEMA, "train")
        finetune = _validate(top["finetune"], _FINETUNE_SCHEMA, "finetune")
        if finetune["freeze"] is not None:
            freeze_schema = {g: ((bool,), True) for g in GROUPS}
            freeze_schema["decoder"] = ((bool,), False)
            finetune["freeze"] = _validate(finetune["freeze"], freeze_schema, "finetune.freeze")
        ev = _validate(top["eval"], _EVAL_SCHEMA, "eval")
        for k in ev["frame_indices"]:
            if not isinstance(k, int) or isinstance(k, bool) or k < 1:
                raise ConfigError(f"eval.frame_indices entries must be ints >= 1, got {k!r}")
        return cls(
            data=data,
            model=model,
            train=train,
            finetune=finetune,
            eval=ev,
            output_dir=top["output_dir"],
            seed=top["seed"],
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)

    def to_dict(self):
        return {
            "data": self.data,
            "model": self.model,
            "train": self.train,
            "finetune": self.finetune,
            "eval": self.eval,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    # section -> runtime objects -------------------------------------------

    def synth_spec(self):
        if self.data["synth"] is None:
            raise ConfigError("config has no data.synth block")
        return SynthSpec(seed=self.seed, **self.data["synth"])

    def skeleton(self):
        if self.data["skeleton"] is not None:
            return load_skeleton(self.data["skeleton"])
        if self.data["synth"] is not None:
            return synth_skeleton(self.data["synth"]["n_joints"])
        raise ConfigError("config needs data.skeleton when loading an external csv")

    def hyper(self, tree, n_activities):
        cats = self.model["categories"]
        return Hyper(
            joints=tree.n_joints,
            dims=3,
            hidden=self.model["hidden"],
            latent=self.model["latent"],
            categories=cats if cats is not None else max(n_activities, 2),
            heads=self.model["heads"],
            spl_hidden=self.model["spl_hidden"],
            disc_hidden=self.model["disc_hidden"],
            residual=self.model["residual"],
            parents=tree.parents,
        )

    def train_config(self):
        t = dict(self.train)
        seed = t.pop("seed")
        return TrainConfig(seed=seed if seed is not None else self.seed, **t)

    def finetune_config(self):
        f = dict(self.finetune)
        f.pop("subject")
        f.pop("freeze")
        seed = f.pop("seed")
        return FinetuneConfig(seed=seed if seed is not None else self.seed, **f)

    def freeze_mask(self):
        if self.finetune["freeze"] is None:
            return FreezeMask()
        return FreezeMask(frozen=dict(self.finetune["freeze"]))
