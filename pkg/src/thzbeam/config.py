"""Run configuration: one TOML file with nested sections per band and per model.

Every key maps onto a dataclass field; unknown keys and invalid values are
collected and reported together.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace

from .channel import ArrayGeometry, BandConfig, Region, ScattererConfig, ScenarioConfig
from .codebook import generate_codebook
from .errors import ConfigError
from .estimator import EstimatorArchitecture
from .nn import OptimizerConfig
from .predictor import BaselineArchitecture, PredictorArchitecture, default_snr_grid

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class EstimatorSection:
    widths: tuple = (64, 128)
    kernel: tuple = (2, 2)
    pool: tuple = (2, 2)
    dropout: float = 0.2
    epochs: int = 100
    batch_size: int = 32
    optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig("sgd_momentum", 5e-2, 0.8, 0.1, 80))


@dataclass(frozen=True)
class PredictorSection:
    hidden: tuple = (256, 256, 128, 128)
    dropout: float = 0.2
    epochs: int = 100
    batch_size: int = 128
    input: str = "ground_truth"
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig("adam", 1e-3, 0.0, 0.1, 80))


@dataclass(frozen=True)
class BaselineSection:
    filters: int = 32
    kernel: tuple = (2, 2)
    hidden: tuple = (256, 256, 128, 128)
    dropout: float = 0.2
    epochs: int = 100
    batch_size: int = 128
    pilot_snr_db: float | None = None
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig("adam", 1e-3, 0.0, 0.1, 80))


@dataclass(frozen=True)
class CodebookSection:
    thz_quantization: tuple = (2, 32, 2)
    sub6_quantization: tuple = (1, 4, 1)


@dataclass(frozen=True)
class EvalSection:
    label_snr_db: float = 0.0
    snr_grid_db: tuple = tuple(default_snr_grid())
    top_k: int = 3
    train_fraction: float = 0.8


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    codebook: CodebookSection = field(default_factory=CodebookSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    predictor: PredictorSection = field(default_factory=PredictorSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    eval: EvalSection = field(default_factory=EvalSection)

    # -- derived -------------------------------------------------------------

    @property
    def num_paths(self):
        return self.scenario.thz.max_paths

    def estimator_arch(self):
        e = self.estimator
        return EstimatorArchitecture(tuple(e.widths), tuple(e.kernel), tuple(e.pool), e.dropout, self.num_paths)

    def predictor_arch(self):
        return PredictorArchitecture(tuple(self.predictor.hidden), self.predictor.dropout)

    def baseline_arch(self):
        b = self.baseline
        return BaselineArchitecture(b.filters, tuple(b.kernel), tuple(b.hidden), b.dropout)

    def thz_codebook(self):
        return generate_codebook(self.scenario.thz.array, self.codebook.thz_quantization)

    def with_seed(self, seed):
        return replace(self, seed=int(seed), scenario=replace(self.scenario, seed=int(seed)))

    def expected_dims(self):
        s = self.scenario
        return {"K_s": s.sub6.num_subcarriers, "N_s": s.sub6.array.num_elements,
                "K_t": s.thz.num_subcarriers, "N_t": s.thz.array.num_elements, "L": s.thz.max_paths}

    # -- validation ------------------------------------------------------------

    def problems(self):
        out = list(self.scenario.problems())
        for name, q in (("codebook.thz_quantization", self.codebook.thz_quantization),
                        ("codebook.sub6_quantization", self.codebook.sub6_quantization)):
            if len(q) != 3 or min(q) < 1:
                out.append(f"{name} must be three integers >= 1")
        for name, sec in (("estimator", self.estimator), ("predictor", self.predictor),
                          ("baseline", self.baseline)):
            out += sec.optimizer.problems(f"{name}.optimizer")
            if sec.epochs < 1:
                out.append(f"{name}.epochs must be >= 1")
            if sec.batch_size < 1:
                out.append(f"{name}.batch_size must be >= 1")
            if not 0 <= sec.dropout < 1:
                out.append(f"{name}.dropout must be in [0, 1)")
        e = self.estimator
        if not e.widths or min(e.widths) < 1:
            out.append("estimator.widths must be positive integers")
        if len(e.kernel) != 2 or min(e.kernel) < 1 or len(e.pool) != 2 or min(e.pool) < 1:
            out.append("estimator.kernel and estimator.pool must be two integers >= 1")
        if self.predictor.input not in ("ground_truth", "estimated"):
            out.append("predictor.input must be ground_truth or estimated")
        if self.baseline.filters < 1:
            out.append("baseline.filters must be >= 1")
        k = self.scenario.thz.num_subcarriers
        n = self.scenario.thz.array.num_elements
        if len(self.baseline.kernel) == 2 and (self.baseline.kernel[0] > k or self.baseline.kernel[1] > n):
            out.append("baseline.kernel larger than the THz channel matrix")
        ev = self.eval
        if not math.isfinite(ev.label_snr_db):
            out.append("eval.label_snr_db must be finite")
        if not ev.snr_grid_db:
            out.append("eval.snr_grid_db must not be empty")
        if ev.top_k < 1:
            out.append("eval.top_k must be >= 1")
        if not 0 < ev.train_fraction < 1:
            out.append("eval.train_fraction must be in (0, 1)")
        if not out:
            q = self.codebook.thz_quantization
            eff = [1 if ne == 1 else qa for ne, qa in zip(self.scenario.thz.array.elements, q)]
            if ev.top_k > math.prod(eff):
                out.append(f"eval.top_k={ev.top_k} exceeds the {math.prod(eff)}-beam codebook")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self):
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# ---------------------------------------------------------------------------
# Loading

_BAND_KEYS = {"carrier_hz", "bandwidth_hz", "num_subcarriers", "array_elements", "array_spacing", "max_paths",
              "noise_variance"}


def _take(section: dict, cls, where, problems, convert=None):
    """Build dataclass ``cls`` from ``section``, recording unknown keys and bad types."""
    convert = convert or {}
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in section.items():
        if key not in names:
            problems.append(f"unknown key {where}.{key}")
            continue
        try:
            kwargs[key] = convert[key](value) if key in convert else value
        except (TypeError, ValueError) as exc:
            problems.append(f"{where}.{key}: {exc}")
    return kwargs


def _band(section, where, default: BandConfig, problems):
    unknown = set(section) - _BAND_KEYS
    problems += [f"unknown key {where}.{k}" for k in sorted(unknown)]
    try:
        array = ArrayGeometry(tuple(section.get("array_elements", default.array.elements)),
                              float(section.get("array_spacing", default.array.spacing)))
    except ConfigError as exc:
        problems += [f"{where}: {p}" for p in exc.problems]
        array = default.array
    try:
        return BandConfig(
            float(section.get("carrier_hz", default.carrier_hz)),
            float(section.get("bandwidth_hz", default.bandwidth_hz)),
            int(section.get("num_subcarriers", default.num_subcarriers)),
            array,
            int(section.get("max_paths", default.max_paths)),
            float(section.get("noise_variance", default.noise_variance)),
        )
    except (TypeError, ValueError) as exc:
        problems.append(f"{where}: {exc}")
        return default


def _optimizer(section, where, default: OptimizerConfig, problems):
    kwargs = _take(section, OptimizerConfig, where, problems,
                   {"learning_rate": float, "momentum": float, "lr_decay_factor": float,
                    "lr_decay_epoch": int, "beta1": float, "beta2": float, "epsilon": float})
    return replace(default, **kwargs)


def _section(data, name, cls, default, problems, convert):
    sec = dict(data.get(name, {}))
    opt = sec.pop("optimizer", None)
    kwargs = _take(sec, cls, name, problems, convert)
    out = replace(default, **kwargs)
    if opt is not None and hasattr(out, "optimizer"):
        out = replace(out, optimizer=_optimizer(opt, f"{name}.optimizer", out.optimizer, problems))
    return out


def config_from_dict(data: dict) -> RunConfig:
    problems = []
    base = RunConfig()
    known = {"seed", "scenario", "codebook", "estimator", "predictor", "baseline", "eval"}
    problems += [f"unknown key {k}" for k in sorted(set(data) - known)]
    seed = data.get("seed", base.seed)
    if not isinstance(seed, int) or seed < 0:
        problems.append("seed must be a nonnegative integer")
        seed = 0

    sc = dict(data.get("scenario", {}))
    d = base.scenario
    region = Region(**_take(sc.pop("region", {}), Region, "scenario.region", problems,
                            {"bs_position": lambda v: tuple(float(x) for x in v)}))
    scat = ScattererConfig(**_take(sc.pop("scatterers", {}), ScattererConfig, "scenario.scatterers", problems))
    sub6 = _band(sc.pop("sub6", {}), "scenario.sub6", d.sub6, problems)
    thz = _band(sc.pop("thz", {}), "scenario.thz", d.thz, problems)
    pilot = sc.pop("pilot_symbol", [1.0, 0.0])
    top = _take(sc, ScenarioConfig, "scenario", problems, {"absorption_coeff": float, "pathloss_exponent": float})
    top.pop("seed", None)
    try:
        pilot = complex(*pilot) if isinstance(pilot, (list, tuple)) else complex(pilot)
    except (TypeError, ValueError):
        problems.append("scenario.pilot_symbol must be [re, im]")
        pilot = 1.0 + 0j
    scenario = replace(d, seed=seed, region=region, scatterers=scat, sub6=sub6, thz=thz, pilot_symbol=pilot, **top)

    tup = lambda v: tuple(int(x) for x in v)  # noqa: E731
    cfg = RunConfig(
        seed=seed,
        scenario=scenario,
        codebook=_section(data, "codebook", CodebookSection, base.codebook, problems,
                          {"thz_quantization": tup, "sub6_quantization": tup}),
        estimator=_section(data, "estimator", EstimatorSection, base.estimator, problems,
                           {"widths": tup, "kernel": tup, "pool": tup, "dropout": float}),
        predictor=_section(data, "predictor", PredictorSection, base.predictor, problems,
                           {"hidden": tup, "dropout": float}),
        baseline=_section(data, "baseline", BaselineSection, base.baseline, problems,
                          {"kernel": tup, "hidden": tup, "dropout": float}),
        eval=_section(data, "eval", EvalSection, base.eval, problems,
                      {"snr_grid_db": lambda v: tuple(float(x) for x in v), "label_snr_db": float}),
    )
    if problems:
        raise ConfigError(problems + cfg.problems())
    return cfg.validate()


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    """TOML text that :func:`load_config` reads back to an equal configuration."""
    s = cfg.scenario
    lines = [f"seed = {cfg.seed}", "", "[scenario]"]
    lines += [f"num_users = {s.num_users}", f"absorption_coeff = {s.absorption_coeff!r}",
              f"pathloss_exponent = {s.pathloss_exponent!r}",
              f"pilot_symbol = [{s.pilot_symbol.real!r}, {s.pilot_symbol.imag!r}]", ""]
    lines += ["[scenario.region]"] + _kv(asdict(s.region)) + [""]
    lines += ["[scenario.scatterers]"] + _kv(asdict(s.scatterers)) + [""]
    for name, b in (("sub6", s.sub6), ("thz", s.thz)):
        lines += [f"[scenario.{name}]"] + _kv({
            "carrier_hz": b.carrier_hz, "bandwidth_hz": b.bandwidth_hz, "num_subcarriers": b.num_subcarriers,
            "array_elements": b.array.elements, "array_spacing": b.array.spacing, "max_paths": b.max_paths,
            "noise_variance": b.noise_variance}) + [""]
    for name in ("codebook", "estimator", "predictor", "baseline", "eval"):
        sec = getattr(cfg, name)
        d = {f.name: getattr(sec, f.name) for f in fields(sec) if f.name != "optimizer"}
        lines += [f"[{name}]"] + _kv(d) + [""]
        if hasattr(sec, "optimizer"):
            lines += [f"[{name}.optimizer]"] + _kv(asdict(sec.optimizer)) + [""]
    return "\n".join(lines)


def _kv(d):
    out = []
    for k, v in d.items():
        if v is None:
            continue
        out.append(f"{k} = {_toml_value(v)}")
    return out


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if is_dataclass(v):
        raise TypeError("nested dataclass")
    return repr(v)
