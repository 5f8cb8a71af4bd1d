"""Run configuration: an INI file with one section per component.

Unknown sections or keys are rejected.  Every default below is the
benchmark-scale hyperparameter; desk-scale runs override them explicitly.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import inspect
import io
import os
from dataclasses import dataclass, field, fields

from expo.envs import ENVS
from expo.errors import ConfigurationError

MODES = ("online", "offline_to_online")
VARIANTS = ("full", "no_edit", "sample_backup", "gaussian_sac")


@dataclass
class RunSection:
    seed: int = 0
    mode: str = "online"
    variant: str = "full"
    total_steps: int = 50_000
    eval_every: int = 2_500
    eval_episodes: int = 50
    output_dir: str = "runs/expo"
    dataset: str = ""
    # used when no dataset file is given: generate demos in-process
    demos: int = 0
    demo_sigma: float = 0.3
    retain_offline: bool = True


@dataclass
class EnvSection:
    name: str = "pointmaze"
    params: dict = field(default_factory=dict)


@dataclass
class AgentSection:
    lr: float = 3e-4
    batch_size: int = 256
    utd: int = 20
    pretrain_steps: int = 200_000
    capacity: int = 1_000_000
    symmetric_sampling: bool = False
    normalize_obs: bool = True


@dataclass
class DiffusionSection:
    T: int = 10
    hidden: int = 256
    blocks: int = 3
    beta_min: float = 0.1
    beta_max: float = 10.0


@dataclass
class EditSection:
    beta: float = 0.05
    hidden: int = 256
    layers: int = 3
    dropout: float = 0.0
    init_alpha: float = 1.0
    target_entropy: str = "auto"
    alpha_lr: float = 3e-4


@dataclass
class CriticSection:
    K: int = 10
    M: int = 2
    hidden: int = 256
    layers: int = 2
    gamma: float = 0.99
    tau: float = 0.005


@dataclass
class OtfSection:
    N: int = 8
    q_source: str = "online_mean"


SECTIONS = {
    "run": RunSection,
    "env": EnvSection,
    "agent": AgentSection,
    "diffusion": DiffusionSection,
    "edit": EditSection,
    "critic": CriticSection,
    "otf": OtfSection,
}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    env: EnvSection = field(default_factory=EnvSection)
    agent: AgentSection = field(default_factory=AgentSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    edit: EditSection = field(default_factory=EditSection)
    critic: CriticSection = field(default_factory=CriticSection)
    otf: OtfSection = field(default_factory=OtfSection)

    def validate(self):
        r, a = self.run, self.agent
        if r.mode not in MODES:
            raise ConfigurationError(f"run.mode must be one of {MODES}")
        if r.variant not in VARIANTS:
            raise ConfigurationError(f"run.variant must be one of {VARIANTS}")
        if r.total_steps < 0 or r.eval_every < 1 or r.eval_episodes < 1 or r.demos < 0:
            raise ConfigurationError("run step counts must be non-negative, cadences positive")
        if self.env.name not in ENVS:
            raise ConfigurationError(f"unknown env {self.env.name!r}")
        allowed = set(inspect.signature(ENVS[self.env.name][0]).parameters)
        extra = set(self.env.params) - allowed
        if extra:
            raise ConfigurationError(f"unknown [env] keys for {self.env.name}: {sorted(extra)}")
        if a.utd < 1 or a.batch_size < 1 or a.capacity < 1 or a.pretrain_steps < 0 or a.lr <= 0:
            raise ConfigurationError("invalid [agent] values")
        d = self.diffusion
        if d.T < 1 or d.hidden < 1 or d.blocks < 0 or not 0 < d.beta_min < d.beta_max:
            raise ConfigurationError("invalid [diffusion] values")
        e = self.edit
        if e.beta < 0 or not 0 <= e.dropout < 1 or e.init_alpha <= 0 or e.layers < 1:
            raise ConfigurationError("invalid [edit] values")
        if e.target_entropy != "auto":
            try:
                float(e.target_entropy)
            except ValueError:
                raise ConfigurationError("edit.target_entropy must be 'auto' or a number") from None
        c = self.critic
        if not 1 <= c.M <= c.K or not 0 <= c.gamma <= 1 or not 0 < c.tau <= 1 or c.layers < 1:
            raise ConfigurationError("invalid [critic] values")
        if self.otf.N < 1 or self.otf.q_source not in ("online_mean", "target_mean"):
            raise ConfigurationError("invalid [otf] values")
        return self

    def target_entropy(self):
        """Explicit entropy target, or None to let the policy derive it from its scale."""
        te = self.edit.target_entropy
        return None if te == "auto" else float(te)

    def replace(self, **sections):
        """Copy with per-section overrides, e.g. ``replace(run={"seed": 3})``."""
        new = {}
        for name in SECTIONS:
            sec = getattr(self, name)
            upd = sections.get(name, {})
            if name == "env":
                params = dict(sec.params)
                params.update({k: v for k, v in upd.items() if k != "name"})
                new[name] = EnvSection(upd.get("name", sec.name), params)
            else:
                new[name] = dataclasses.replace(sec, **upd)
        return RunConfig(**new).validate()

    def fingerprint(self, exclude=("seed", "output_dir")):
        """Hash of every setting except those in ``exclude``; groups seeds of one setup."""
        text = dumps(self, exclude=exclude)
        return hashlib.sha1(text.encode()).hexdigest()[:12]


def _parse(value, typ, key):
    try:
        if typ in (bool, "bool"):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ in (int, "int"):
            return int(value.replace("_", ""))
        if typ in (float, "float"):
            return float(value)
        return value.strip()
    except ValueError:
        raise ConfigurationError(f"cannot parse {key} = {value!r} as {typ}") from None


def _parse_env_value(value):
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value.strip()


def loads(text, seed_from_env=True):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for name, cls in SECTIONS.items():
        values = dict(parser[name]) if parser.has_section(name) else {}
        if name == "env":
            env_name = values.pop("name", EnvSection.name)
            sections[name] = EnvSection(env_name, {k: _parse_env_value(v) for k, v in values.items()})
            continue
        known = {f.name: f.type for f in fields(cls)}
        bad = set(values) - set(known)
        if bad:
            raise ConfigurationError(f"unknown keys in [{name}]: {sorted(bad)}")
        kwargs = {k: _parse(v, known[k], f"{name}.{k}") for k, v in values.items()}
        sections[name] = cls(**kwargs)
    cfg = RunConfig(**sections)
    if seed_from_env and os.environ.get("EXPO_SEED"):
        cfg.run.seed = _parse(os.environ["EXPO_SEED"], int, "EXPO_SEED")
    return cfg.validate()


def load(path, seed_from_env=True):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return loads(text, seed_from_env)


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def dumps(cfg, exclude=()):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name in SECTIONS:
        sec = getattr(cfg, name)
        if name == "env":
            items = {"name": sec.name, **sec.params}
        else:
            items = dataclasses.asdict(sec)
        parser[name] = {k: _format(v) for k, v in items.items() if k not in exclude}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def dump(cfg, path):
    with open(path, "w") as f:
        f.write(dumps(cfg))
