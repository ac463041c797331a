"""Release gate: one test per acceptance criterion, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s``.

The property criteria run on every build with no data. The MNIST-dependent
criteria need the four IDX files (point NSN_DATA_DIR at them). The full
reproduction criteria are multi-hour CPU runs: they validate archived
results when NSN_REPRO_DIR is set (one subdirectory per experiment, each
holding the run's best.csv), or run training from scratch when
NSN_FULL_REPRO=1; otherwise they skip.

Experiment names: ref0/ref1/ref2 (baselines), nsn1 (one hidden layer),
nsn2 (two hidden layers).
"""

import contextlib
import csv
import os
import struct
from pathlib import Path

import numpy as np
import pytest

from conftest import REAL_DATA
from nsn import mnist, verify
from nsn.optim import Schedule
from nsn.train import TrainConfig, train, train_reference

FULL_REPRO = os.environ.get("NSN_FULL_REPRO") == "1"
REPRO_DIR = os.environ.get("NSN_REPRO_DIR")
REPRO_OUT = Path(os.environ.get("NSN_REPRO_OUT", "repro"))

EXPERIMENTS = {
    "ref0": dict(mode="reference", n_hidden=0, l2_lambda=9e-5),
    "ref1": dict(mode="reference", n_hidden=1, l2_lambda=5e-6),
    "ref2": dict(mode="reference", n_hidden=2, l2_lambda=1e-5),
    "nsn1": dict(mode="nsn", n_hidden=1, l2_lambda=9e-6),
    "nsn2": dict(mode="nsn", n_hidden=2, l2_lambda=9e-5),
}

_run_cache: dict = {}


@contextlib.contextmanager
def criterion(name: str):
    try:
        yield
    except pytest.skip.Exception as exc:
        print(f"SKIP {name}: {exc}")
        raise
    except BaseException:
        print(f"FAIL {name}")
        raise
    print(f"PASS {name}")


def protocol_config(name: str) -> TrainConfig:
    exp = EXPERIMENTS[name]
    return TrainConfig(
        mode=exp["mode"], n_hidden=exp["n_hidden"], epochs=600,
        batch_size=128, schedule=Schedule(base_lr=0.3, decay_every=200,
                                          decay_factor=1.0 / 3.0, alpha=0.9),
        l2_lambda=exp["l2_lambda"], input_keep=0.8, hidden_keep=0.5,
        data_dir=REAL_DATA, out_dir=REPRO_OUT / name)


def read_best_csv(path: Path) -> list[float]:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return [float(v) for v in rows[1][1:]]


def best_accuracies(name: str) -> list[float]:
    """Best-base-epoch accuracies [m0..mN] for one experiment, from the
    archive or a fresh full run."""
    if name in _run_cache:
        return _run_cache[name]
    if REPRO_DIR:
        path = Path(REPRO_DIR) / name / "best.csv"
        if path.exists():
            _run_cache[name] = read_best_csv(path)
            return _run_cache[name]
    if FULL_REPRO and REAL_DATA is not None:
        config = protocol_config(name)
        runner = train if config.mode == "nsn" else train_reference
        result = runner(config, log=print)
        _run_cache[name] = list(result.best_accuracies)
        return _run_cache[name]
    pytest.skip(f"no archived results for {name!r} (set NSN_REPRO_DIR) and "
                f"full reproduction not enabled (NSN_FULL_REPRO=1 plus "
                f"NSN_DATA_DIR)")


class TestPropertyCriteria:
    def test_criterion_5_gradient_check(self):
        with criterion("criterion 5: gradient check vs 64-bit central "
                       "differences, max relative error <= 1e-4"):
            result = verify.check_gradcheck(
                dims_list=[(784, 16, 10), (784, 16, 16, 10), (784, 10)],
                batch=4, tol=1e-4)
            assert result.passed, result.detail
            print(f"  {result.detail}")

    def test_criterion_6_tie_invariant(self):
        with criterion("criterion 6: tied layers bitwise equal after 100 "
                       "train steps on a width-4 family"):
            result = verify.check_tie_invariant(steps=100)
            assert result.passed, result.detail

    def test_criterion_7_detachment_exactness(self):
        with criterion("criterion 7: detached model logits bitwise equal "
                       "to the corresponding view"):
            result = verify.check_detach_exactness()
            assert result.passed, result.detail

    def test_criterion_8_momentum_format_equivalence(self):
        with criterion("criterion 8: EMA momentum at lr equals standard "
                       "momentum at lr*(1-alpha) within 1e-6 over 200 steps"):
            result = verify.check_momentum_equivalence(steps=200, tol=1e-6)
            assert result.passed, result.detail

    def test_criterion_9_canonical_vs_literal(self):
        with criterion("criterion 9: shared-storage trajectory equals the "
                       "literal per-model scheme within 1e-6 over 50 steps"):
            result = verify.check_canonical_vs_literal(steps=50, tol=1e-6)
            assert result.passed, result.detail


class TestLoaderCriterion:
    def test_criterion_10_mnist_loader(self):
        with criterion("criterion 10: loader counts 60000/10000, labels in "
                       "range, headers round-trip bitwise"):
            if REAL_DATA is None:
                pytest.skip("real MNIST IDX files not found; "
                            "set NSN_DATA_DIR")
            train_ds, test_ds = mnist.load_data_dir(REAL_DATA)
            assert train_ds.count == 60000
            assert test_ds.count == 10000
            for ds in (train_ds, test_ds):
                assert ds.labels.min() >= 0 and ds.labels.max() <= 9
            raw = (REAL_DATA / mnist.TRAIN_IMAGES).read_bytes()
            parsed = mnist.parse_idx_images(raw)
            assert struct.pack(">IIII", mnist.IMAGE_MAGIC,
                               *parsed.shape) == raw[:16]
            raw = (REAL_DATA / mnist.TRAIN_LABELS).read_bytes()
            labels = mnist.parse_idx_labels(raw)
            assert struct.pack(">II", mnist.LABEL_MAGIC,
                               labels.shape[0]) == raw[:8]


class TestSmokeRun:
    def test_smoke_30_epochs(self, tmp_path):
        with criterion("smoke run: 30 epochs, decay every 10 -> "
                       "model0 >= 0.90, base >= 0.96"):
            if REAL_DATA is None:
                pytest.skip("real MNIST IDX files not found; "
                            "set NSN_DATA_DIR")
            config = TrainConfig(
                mode="nsn", n_hidden=2, epochs=30, batch_size=128,
                schedule=Schedule(base_lr=0.3, decay_every=10,
                                  decay_factor=1.0 / 3.0, alpha=0.9),
                l2_lambda=9e-5, input_keep=0.8, hidden_keep=0.5,
                data_dir=REAL_DATA, out_dir=tmp_path)
            result = train(config, log=print)
            accs = result.best_accuracies
            print(f"  best epoch {result.best_epoch}: "
                  f"m0={accs[0]:.4f} m1={accs[1]:.4f} m2={accs[2]:.4f}")
            assert accs[0] >= 0.90
            assert accs[2] >= 0.96


class TestFullReproduction:
    """Multi-hour desk-scale runs; validated from the archive by default."""

    def test_criterion_1_reference_baselines(self):
        with criterion("criterion 1: reference baselines within 0.005 of "
                       "0.9241 / 0.9882 / 0.9886"):
            targets = {"ref0": 0.9241, "ref1": 0.9882, "ref2": 0.9886}
            for name, target in targets.items():
                acc = best_accuracies(name)[-1]
                print(f"  {name}: {acc:.4f} (target {target})")
                assert abs(acc - target) <= 0.005, (
                    f"{name}: {acc:.4f} not within 0.005 of {target}")

    def test_criterion_2_family_one_hidden(self):
        with criterion("criterion 2: one-hidden-layer family at best-base "
                       "epoch -> m1 >= 0.980, m0 >= 0.920"):
            accs = best_accuracies("nsn1")
            print(f"  nsn1: m0={accs[0]:.4f} m1={accs[1]:.4f}")
            assert accs[1] >= 0.980
            assert accs[0] >= 0.920

    def test_criterion_3_family_two_hidden(self):
        with criterion("criterion 3: two-hidden-layer family at best-base "
                       "epoch -> m2 >= 0.984, m1 >= 0.979, m0 >= 0.920"):
            accs = best_accuracies("nsn2")
            print(f"  nsn2: m0={accs[0]:.4f} m1={accs[1]:.4f} "
                  f"m2={accs[2]:.4f}")
            assert accs[2] >= 0.984
            assert accs[1] >= 0.979
            assert accs[0] >= 0.920

    def test_criterion_4_qualitative_ordering(self):
        with criterion("criterion 4: base beats its baseline within 0.002; "
                       "the shared one-hidden model trails its baseline"):
            ref1 = best_accuracies("ref1")[-1]
            ref2 = best_accuracies("ref2")[-1]
            nsn1 = best_accuracies("nsn1")
            nsn2 = best_accuracies("nsn2")
            print(f"  m2={nsn2[2]:.4f} vs ref2={ref2:.4f}; "
                  f"m1={nsn1[1]:.4f} vs ref1={ref1:.4f}")
            assert nsn2[2] >= ref2 - 0.002
            assert nsn1[1] < ref1
