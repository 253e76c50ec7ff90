"""
Experiment harnesses: time-slot granularity sweeps and ablation studies, each training
one model per variant on the same bundle and tabulating its ranking metrics.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from omegaconf import DictConfig
from tabulate import tabulate

from .assistants import TrainAssistant
from .data import DatasetBundle
from .data.mobility_tree import check_slots_per_day
from .evaluation import evaluate
from .models import MTNet
from .utils.scorers import EvalReport

SWEEP_SLOTS = (2, 3, 4, 6, 8, 12, 24)
ABLATIONS: Dict[str, Dict[str, bool]] = {
    "full": {},
    "no_multitask": {"no_multitask": True},
    "no_geo_head": {"no_geo_head": True},
    "no_cat_head": {"no_cat_head": True},
    "no_geo_cat": {"no_geo_head": True, "no_cat_head": True},
    "no_iac": {"no_iac": True},
    "no_irc": {"no_irc": True},
    "no_aux_node_preds": {"no_aux_node_preds": True},
}


@dataclass
class ExperimentReport:
    """
    Attributes:
        parameter (str): name of the varied setting
        rows (List[Dict[str, Any]]): one row per variant, the setting then the metrics
        reports (Dict[str, EvalReport]): full report of every variant
    """

    parameter: str
    rows: List[Dict[str, Any]] = field(default_factory=list)
    reports: Dict[str, EvalReport] = field(default_factory=dict)

    def best(self, metric: str = "acc@1") -> Dict[str, Any]:
        """Row with the highest `metric`, the first one among ties."""
        return max(self.rows, key=lambda row: row[metric])

    def get_table(self) -> str:
        """"""
        if not self.rows:
            return ""
        headers = list(self.rows[0].keys())
        return tabulate(
            [[row[h] for h in headers] for row in self.rows],
            headers=headers,
            floatfmt=".4f",
            tablefmt="fancy_grid",
        )


def train_and_evaluate(
    config: DictConfig,
    bundle: DatasetBundle,
    output_dir: str,
    split: Optional[str] = None,
    threads: int = 1,
    progress: bool = False,
    **section_kwargs,
) -> EvalReport:
    """
    Trains one model and evaluates its selected checkpoint.

    Args:
        config (DictConfig):
            base configuration
        bundle (DatasetBundle):
            preprocessed dataset
        output_dir (str):
            directory of the run
        split (Optional[str]):
            evaluated split, `eval.split` when None
        threads (int):
            evaluation threads
        progress (bool):
            show progress bars
        section_kwargs:
            `model_kwargs`, `train_kwargs`, ... forwarded to `TrainAssistant`
    Returns:
        EvalReport: metrics of the selected checkpoint
    """
    assistant = TrainAssistant(config=config, bundle=bundle, **section_kwargs)
    trainer = assistant.fit(output_dir, progress=progress)
    selected = trainer.best_checkpoint or trainer.last_checkpoint
    model = MTNet.load_from_checkpoint(selected)
    cfg = assistant.config
    return evaluate(
        model,
        bundle,
        split=split or cfg.eval.split,
        mode=cfg.eval.mode,
        ks=cfg.eval.ks,
        batch_size=cfg.eval.batch_size,
        shuffle=cfg.eval.shuffle_slots,
        threads=threads,
        seed=cfg.train.seed,
    )


def _row(name: str, value: Any, report: EvalReport) -> Dict[str, Any]:
    """"""
    row = {name: value}
    row.update({k: v for k, v in report.to_dict().items() if k != "loss"})
    row["samples"] = report.n_samples
    return row


def sweep(
    config: DictConfig,
    bundle: DatasetBundle,
    output_dir: str,
    slots: Sequence[int] = SWEEP_SLOTS,
    split: Optional[str] = None,
    threads: int = 1,
    plot_path: Optional[str] = None,
    progress: bool = False,
) -> ExperimentReport:
    """
    Time-slot granularity sweep: one model per number P of period slots.

    Args:
        slots (Sequence[int]):
            values of P, each dividing 24
        plot_path (Optional[str]):
            where to save a line plot of the metrics against P
    Returns:
        ExperimentReport: one row per P
    """
    for value in slots:
        check_slots_per_day(int(value))
    report = ExperimentReport(parameter="slots_per_day")
    for value in slots:
        logging.info(f"Sweep: training with {value} period slots")
        result = train_and_evaluate(
            config,
            bundle,
            os.path.join(output_dir, f"P{value:02d}"),
            split=split,
            threads=threads,
            progress=progress,
            model_kwargs={"slots_per_day": int(value), "leaf_fanout": None},
        )
        report.reports[str(value)] = result
        row = _row("slots_per_day", int(value), result)
        row["hours_per_slot"] = 24 // int(value)
        report.rows.append(row)
    if plot_path is not None:
        plot_sweep(report, plot_path)
    return report


def plot_sweep(report: ExperimentReport, path: str) -> None:
    """Line plot of every metric against the number of period slots."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import pandas as pd
    import seaborn as sns

    frame = pd.DataFrame(report.rows)
    metrics = [c for c in frame.columns if c.startswith("acc@") or c == "mrr"]
    long = frame.melt(
        id_vars=["slots_per_day"],
        value_vars=metrics,
        var_name="metric",
        value_name="value",
    )
    fig, ax = plt.subplots(figsize=(6, 4))
    sns.lineplot(data=long, x="slots_per_day", y="value", hue="metric", marker="o", ax=ax)
    ax.set_xlabel("period slots per day")
    ax.set_xticks(sorted(frame["slots_per_day"].unique()))
    ax.set_ylabel("")
    fig.tight_layout()
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    logging.info(f"Sweep plot saved to '{path}'")


def ablate(
    config: DictConfig,
    bundle: DatasetBundle,
    output_dir: str,
    variants: Optional[Sequence[str]] = None,
    split: Optional[str] = None,
    threads: int = 1,
    progress: bool = False,
) -> ExperimentReport:
    """
    Ablation study: one model per entry of `ABLATIONS`.

    Args:
        variants (Optional[Sequence[str]]):
            subset of `ABLATIONS` to run, all of them when None
    Returns:
        ExperimentReport: one row per variant
    """
    variants = list(variants) if variants is not None else list(ABLATIONS)
    unknown = [v for v in variants if v not in ABLATIONS]
    if unknown:
        raise ValueError(
            f"unknown ablations {unknown}, expected some of {list(ABLATIONS)}"
        )
    report = ExperimentReport(parameter="variant")
    for variant in variants:
        logging.info(f"Ablation: training variant '{variant}'")
        flags = {k: False for v in ABLATIONS.values() for k in v}
        flags.update(ABLATIONS[variant])
        result = train_and_evaluate(
            config,
            bundle,
            os.path.join(output_dir, variant),
            split=split,
            threads=threads,
            progress=progress,
            train_kwargs={"ablation": flags},
        )
        report.reports[variant] = result
        report.rows.append(_row("variant", variant, result))
    return report
