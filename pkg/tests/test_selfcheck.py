import numpy as np
import pytest

from rflvm import pg, selfcheck


def test_full_battery_passes():
    results = selfcheck.run_all(fast=True)
    failed = [r for r in results if not r.passed]
    assert failed == [], [f"{r.module}/{r.name}: {r.detail}" for r in failed]


def test_every_result_carries_fields():
    for r in selfcheck.run_all(fast=True):
        assert r.name and r.module
        assert isinstance(r.passed, bool)
        assert r.detail
        assert r.seconds >= 0.0


def test_modules_covered():
    modules = {r.module for r in selfcheck.run_all(fast=True)}
    assert {"features", "pg", "spectral", "likelihoods", "latent", "engine"} <= modules


def test_broken_sampler_is_detected(monkeypatch):
    # Sabotage the augmentation sampler; only the pg-module check should fail,
    # and it should say so rather than crash the battery.
    honest = pg.sample_pg

    def biased(b, c, rng):
        return np.asarray(honest(b, c, rng)) * 1.8

    monkeypatch.setattr(pg, "sample_pg", biased, raising=True)
    results = selfcheck.run_all(fast=True)
    failed = [r for r in results if not r.passed]
    assert len(failed) >= 1
    assert any(r.module == "pg" for r in failed)


def test_crashing_check_reports_failure(monkeypatch):
    def boom(fast):
        raise RuntimeError("synthetic crash")

    patched = tuple(
        boom if fn is selfcheck.check_standardization else fn
        for fn in selfcheck._CHECKS
    )
    monkeypatch.setattr(selfcheck, "_CHECKS", patched, raising=True)
    results = selfcheck.run_all(fast=True)
    crashed = [r for r in results if not r.passed and "synthetic crash" in r.detail]
    assert len(crashed) == 1


def test_fast_mode_is_faster_than_default_budget():
    results = selfcheck.run_all(fast=True)
    assert sum(r.seconds for r in results) < 30.0
