from __future__ import annotations

import numpy as np
import pytest

from triage_align.alerts import AlertStream, stratified_split
from triage_align.calibration import calibrate, fit_isotonic, fit_platt
from triage_align.detectors import ForestConfig, LogregConfig, predict, train_forest, train_logreg
from triage_align.synthetic import default_fixture


def make_stream(X, y, ids=None, names=None) -> AlertStream:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    ids = ids or [f"a{i}" for i in range(len(X))]
    names = names or [f"f{j}" for j in range(X.shape[1])]
    return AlertStream(ids, X, y, names)


@pytest.fixture(scope="session")
def fixture_streams():
    return default_fixture()


@pytest.fixture(scope="session")
def fixture_models(fixture_streams):
    """Both detectors trained on the bundled fixture, with auto calibrators.

    Shared across test modules; the acceptance suite retrains from scratch
    where timing is part of the criterion.
    """
    train, test = fixture_streams
    fit, cal = stratified_split(train, 0.8, seed=1000)
    out = {}
    for name, trainer, cfg, fitter in (
        ("LR", train_logreg, LogregConfig(), fit_platt),
        ("RF", train_forest, ForestConfig(), fit_isotonic),
    ):
        model = trainer(fit, cfg)
        cal_raw = predict(model, cal)
        pairs = [(s, int(l)) for (_, s), l in zip(cal_raw, cal.y)]
        calibrator = fitter(pairs)
        test_raw = predict(model, test)
        test_cal = list(zip(test.ids, calibrate(calibrator, [s for _, s in test_raw])))
        out[name] = {
            "model": model,
            "calibrator": calibrator,
            "cal_pairs": pairs,
            "test_raw": test_raw,
            "test_cal": test_cal,
        }
    return out
