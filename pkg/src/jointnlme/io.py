"""Dataset ingestion, flat-file configuration, and chain persistence.

All emitted files are delimited text with a one-line header; chain files
carry run metadata in leading ``# key=value`` comment lines and store floats
with 17 significant digits so persist/load round trips are bitwise lossless.
File writes are whole-file atomic (write-temp-then-rename).
"""

from __future__ import annotations

import csv
import os
from dataclasses import replace

import numpy as np

from .exceptions import ConfigError, DataError
from .model import ErrorModel, Hyperparameters, Individual
from .sampler import ChainStore, FitConfig
from .simulation import TrueParameters

__all__ = [
    "load_dataset",
    "write_dataset",
    "parse_config",
    "parse_truth_config",
    "persist_chain",
    "load_chain",
    "atomic_write_text",
    "write_table",
]


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def atomic_write_text(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_table(path, header, rows):
    """Comma-delimited table with a one-line header."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Dataset ingestion
# ---------------------------------------------------------------------------

def _read_csv_rows(path):
    with open(path, newline="") as fh:
        rows = [[cell.strip() for cell in row] for row in csv.reader(fh)]
    rows = [row for row in rows if any(cell for cell in row)]
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows


def _parse_float(cell, path, row_number):
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"{path} row {row_number}: non-numeric cell {cell!r}") from None
    if not np.isfinite(value):
        raise DataError(f"{path} row {row_number}: non-finite value {cell!r}")
    return value


def load_dataset(longitudinal_path, outcomes_path, skip_bad_rows=False):
    """Join a long-format measurement file with an outcomes file.

    longitudinal: header ``id,time,y``, one row per observation.
    outcomes: header ``id,d[,w1,...]``, exactly one row per individual.

    Rows are grouped by id and sorted by time; an intercept column is
    prepended to the covariates unless the first covariate column is already
    identically 1.  Orphan ids on either side, duplicate (id, time) pairs and
    non-numeric cells raise DataError naming the offending row; with
    ``skip_bad_rows`` malformed longitudinal rows are dropped instead.
    """
    rows = _read_csv_rows(longitudinal_path)
    header = [h.lower() for h in rows[0]]
    if header[:3] != ["id", "time", "y"]:
        raise DataError(f"{longitudinal_path}: expected header id,time,y")
    series = {}
    order = []
    for number, row in enumerate(rows[1:], start=2):
        try:
            if len(row) != 3:
                raise DataError(f"{longitudinal_path} row {number}: expected 3 columns")
            ident = row[0]
            if not ident:
                raise DataError(f"{longitudinal_path} row {number}: empty id")
            t = _parse_float(row[1], longitudinal_path, number)
            y = _parse_float(row[2], longitudinal_path, number)
        except DataError:
            if skip_bad_rows:
                continue
            raise
        if ident not in series:
            series[ident] = {}
            order.append(ident)
        if t in series[ident]:
            raise DataError(
                f"{longitudinal_path} row {number}: duplicate time {t} for id {ident!r}"
            )
        series[ident][t] = y

    rows = _read_csv_rows(outcomes_path)
    header = [h.lower() for h in rows[0]]
    if len(header) < 2 or header[0] != "id" or header[1] != "d":
        raise DataError(f"{outcomes_path}: expected header id,d[,w1,...]")
    n_w = len(header) - 2
    outcomes = {}
    for number, row in enumerate(rows[1:], start=2):
        if len(row) != 2 + n_w:
            raise DataError(f"{outcomes_path} row {number}: expected {2 + n_w} columns")
        ident = row[0]
        if ident in outcomes:
            raise DataError(f"{outcomes_path} row {number}: duplicate outcome for id {ident!r}")
        d = _parse_float(row[1], outcomes_path, number)
        w = [_parse_float(c, outcomes_path, number) for c in row[2:]]
        outcomes[ident] = (d, w)

    missing_outcome = [i for i in order if i not in outcomes]
    if missing_outcome:
        raise DataError(f"no outcome row for longitudinal id {missing_outcome[0]!r}")
    missing_longit = [i for i in outcomes if i not in series]
    if missing_longit:
        raise DataError(f"no longitudinal rows for outcome id {missing_longit[0]!r}")

    if n_w == 0:
        prepend = True
    else:
        first_col = np.array([outcomes[i][1][0] for i in order])
        prepend = not np.all(first_col == 1.0)

    data = []
    for ident in order:
        times = np.array(sorted(series[ident]))
        y = np.array([series[ident][t] for t in times])
        d, w = outcomes[ident]
        covs = np.array(([1.0] + w) if prepend else w)
        data.append(Individual(id=ident, times=times, y=y, outcome=d, covariates=covs))
    return data


def write_dataset(data, longitudinal_path, outcomes_path):
    """Inverse of load_dataset (intercept column omitted when it is the only
    covariate)."""
    long_rows = []
    out_rows = []
    for ind in data:
        for t, y in zip(ind.times, ind.y):
            long_rows.append((ind.id, t, y))
        covs = ind.covariates
        extra = [] if (covs.size == 1 and covs[0] == 1.0) else list(covs)
        out_rows.append((ind.id, ind.outcome, *extra))
    n_w = max((len(r) - 2 for r in out_rows), default=0)
    write_table(longitudinal_path, ["id", "time", "y"], long_rows)
    write_table(outcomes_path, ["id", "d"] + [f"w{i + 1}" for i in range(n_w)], out_rows)


# ---------------------------------------------------------------------------
# Configuration files (flat key=value)
# ---------------------------------------------------------------------------

_INT_KEYS = {"iterations", "burn_in", "thin", "seed", "laplace_refresh"}
_STR_KEYS = {"error_model", "family"}
_HYPER_VECTOR_KEYS = {
    "alpha_prior_mean": "alpha_mean",
    "mu_x_prior_mean": "mu_x_mean",
    "beta_prior_mean": "beta_mean",
}
_HYPER_MATRIX_KEYS = {
    "alpha_prior_cov": "alpha_cov",
    "mu_x_prior_cov": "mu_x_cov",
    "sigma_x_prior_scale": "sigma_x_scale",
    "beta_prior_cov": "beta_cov",
}
_HYPER_SCALAR_KEYS = {
    "sigma_x_prior_df": "sigma_x_df",
    "sigma_eps_prior_shape": "sigma_eps_shape",
    "sigma_eps_prior_rate": "sigma_eps_rate",
    "phi_prior_shape": "phi_shape",
    "phi_prior_rate": "phi_rate",
}


def _read_kv(path):
    pairs = {}
    with open(path) as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path} line {number}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in pairs:
                raise ConfigError(f"{path} line {number}: duplicate key {key!r}")
            pairs[key] = value.strip()
    return pairs


def _parse_vector(value, key):
    try:
        return np.array([float(v) for v in value.split(",")])
    except ValueError:
        raise ConfigError(f"{key}: expected a comma list of numbers, got {value!r}") from None


def _parse_matrix(value, key, dim):
    if value.startswith("diag:"):
        try:
            scale = float(value[5:])
        except ValueError:
            raise ConfigError(f"{key}: bad diag shorthand {value!r}") from None
        return scale * np.eye(dim)
    entries = _parse_vector(value, key)
    if entries.size == dim:
        return np.diag(entries)
    if entries.size == dim * dim:
        return entries.reshape(dim, dim)
    raise ConfigError(
        f"{key}: expected diag:<scalar>, {dim} diagonal entries or {dim * dim} row-major entries"
    )


def parse_config(path, n_covariates=1):
    """FitConfig from a flat key=value file.

    Unspecified keys fall back to the package defaults (the reference
    schedule of 2,000,000 iterations / 10,000 burn-in / thin 50 and the
    weakly informative priors); ``n_covariates`` sizes the GLM coefficient
    prior.  Unknown keys and invariant violations raise ConfigError naming
    the key.
    """
    pairs = _read_kv(path)
    known = _INT_KEYS | _STR_KEYS | set(_HYPER_VECTOR_KEYS) | set(_HYPER_MATRIX_KEYS) | set(_HYPER_SCALAR_KEYS)
    unknown = set(pairs) - known
    if unknown:
        raise ConfigError(f"{path}: unknown configuration key {sorted(unknown)[0]!r}")

    config = FitConfig()
    for key in _INT_KEYS & set(pairs):
        try:
            config = replace(config, **{key: int(pairs[key])})
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {pairs[key]!r}") from None
    for key in _STR_KEYS & set(pairs):
        config = replace(config, **{key: pairs[key]})

    p = _parse_vector(pairs["alpha_prior_mean"], "alpha_prior_mean").size if "alpha_prior_mean" in pairs else 2
    q = _parse_vector(pairs["mu_x_prior_mean"], "mu_x_prior_mean").size if "mu_x_prior_mean" in pairs else 1
    base = Hyperparameters.defaults(n_covariates=n_covariates, q=q, p=p)
    dims = {"alpha_mean": p, "mu_x_mean": q, "beta_mean": base.r,
            "alpha_cov": p, "mu_x_cov": q, "sigma_x_scale": q, "beta_cov": base.r}
    updates = {}
    for key, attr in _HYPER_VECTOR_KEYS.items():
        if key in pairs:
            vec = _parse_vector(pairs[key], key)
            if vec.size != dims[attr]:
                raise ConfigError(f"{key}: expected {dims[attr]} entries, got {vec.size}")
            updates[attr] = vec
    for key, attr in _HYPER_MATRIX_KEYS.items():
        if key in pairs:
            updates[attr] = _parse_matrix(pairs[key], key, dims[attr])
    for key, attr in _HYPER_SCALAR_KEYS.items():
        if key in pairs:
            try:
                updates[attr] = float(pairs[key])
            except ValueError:
                raise ConfigError(f"{key}: expected a number, got {pairs[key]!r}") from None
    hyper = replace(base, **updates) if updates else base
    config = replace(config, hyper=hyper)
    config.validate()
    return config


_TRUTH_KEYS = {"mu_x", "alpha", "beta", "sigma2_x", "sigma2_eps", "rho"}


def parse_truth_config(path):
    """TrueParameters from a flat key=value file (missing keys keep the
    reference simulation truth)."""
    pairs = _read_kv(path)
    unknown = set(pairs) - _TRUTH_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown truth key {sorted(unknown)[0]!r}")
    kwargs = {}
    for key in ("mu_x", "sigma2_x", "sigma2_eps", "rho"):
        if key in pairs:
            kwargs[key] = float(pairs[key])
    for key in ("alpha", "beta"):
        if key in pairs:
            vec = _parse_vector(pairs[key], key)
            if vec.size != 2:
                raise ConfigError(f"{key}: expected 2 entries")
            kwargs[key] = tuple(vec)
    return TrueParameters(**kwargs)


# ---------------------------------------------------------------------------
# Chain persistence
# ---------------------------------------------------------------------------

def _chain_columns(store):
    p, r, q = store.p, store.r, store.q
    names = [f"alpha{i + 1}" for i in range(p)]
    names += [f"beta{i + 1}" for i in range(r)]
    names += [f"mu_x{i + 1}" for i in range(q)]
    names += [f"sigma_x_{i + 1}_{j + 1}" for i in range(q) for j in range(i, q)]
    names += ["sigma2_eps", "rho", "phi"]
    return names


def _latent_path(path):
    base, ext = os.path.splitext(str(path))
    return f"{base}.x{ext or '.csv'}"


def persist_chain(store, path):
    """Write a ChainStore as delimited text: one row per retained draw, one
    column per scalar parameter; the latent effects go to a companion
    ``<path stem>.x<ext>`` file.  Lossless to full float64 precision."""
    for ident in store.individual_ids:
        if "," in ident or "\n" in ident:
            raise DataError(f"id {ident!r} cannot be persisted in a comma-delimited file")
    meta_lines = [f"# {key}={_fmt(value)}" for key, value in sorted(store.meta.items())]
    header = ["iteration"] + _chain_columns(store)
    lines = ["# jointnlme chain v1"] + meta_lines + [",".join(header)]
    q = store.q
    triu = [(i, j) for i in range(q) for j in range(i, q)]
    for n in range(len(store)):
        cells = [str(int(store.iterations[n]))]
        cells += [f"{v:.17g}" for v in store.alpha[n]]
        cells += [f"{v:.17g}" for v in store.beta[n]]
        cells += [f"{v:.17g}" for v in store.mu_x[n]]
        cells += [f"{store.sigma_x[n, i, j]:.17g}" for i, j in triu]
        cells += [
            f"{store.sigma2_eps[n]:.17g}",
            f"{store.rho[n]:.17g}",
            f"{store.phi[n]:.17g}",
        ]
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")

    xheader = ["iteration"]
    for ident in store.individual_ids:
        if q == 1:
            xheader.append(f"x_{ident}")
        else:
            xheader.extend(f"x_{ident}_{c + 1}" for c in range(q))
    xlines = ["# jointnlme latent draws v1", ",".join(xheader)]
    for n in range(len(store)):
        cells = [str(int(store.iterations[n]))]
        cells += [f"{v:.17g}" for v in store.x[n].ravel()]
        xlines.append(",".join(cells))
    atomic_write_text(_latent_path(path), "\n".join(xlines) + "\n")


def _parse_meta_value(value):
    if value in ("true", "false"):
        return value == "true"
    try:
        as_int = int(value)
        return as_int
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def _read_chain_file(path, kind):
    meta = {}
    header = None
    rows = []
    with open(path) as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = _parse_meta_value(value.strip())
                continue
            cells = line.split(",")
            if header is None:
                header = cells
                continue
            if len(cells) != len(header):
                raise ConfigError(
                    f"{path} line {number}: expected {len(header)} columns, got {len(cells)} "
                    f"({kind} file truncated or corrupt)"
                )
            rows.append(cells)
    if header is None:
        raise ConfigError(f"{path}: no header line found")
    return meta, header, rows


def load_chain(path):
    """Reconstruct a ChainStore written by :func:`persist_chain`."""
    meta, header, rows = _read_chain_file(path, "chain")
    if header[0] != "iteration":
        raise ConfigError(f"{path}: first column must be 'iteration'")
    cols = header[1:]
    p = sum(c.startswith("alpha") for c in cols)
    r = sum(c.startswith("beta") for c in cols)
    q = sum(c.startswith("mu_x") for c in cols)
    triu = [(i, j) for i in range(q) for j in range(i, q)]
    expected = (
        [f"alpha{i + 1}" for i in range(p)]
        + [f"beta{i + 1}" for i in range(r)]
        + [f"mu_x{i + 1}" for i in range(q)]
        + [f"sigma_x_{i + 1}_{j + 1}" for i, j in triu]
        + ["sigma2_eps", "rho", "phi"]
    )
    if cols != expected:
        raise ConfigError(f"{path}: unexpected column layout {cols}")
    R = len(rows)
    data = np.empty((R, len(cols)))
    iterations = np.empty(R, int)
    for n, cells in enumerate(rows):
        iterations[n] = int(cells[0])
        data[n] = [float(c) for c in cells[1:]]
    ofs = 0
    alpha = data[:, ofs:ofs + p]; ofs += p
    beta = data[:, ofs:ofs + r]; ofs += r
    mu_x = data[:, ofs:ofs + q]; ofs += q
    sigma_x = np.zeros((R, q, q))
    for (i, j) in triu:
        sigma_x[:, i, j] = data[:, ofs]
        sigma_x[:, j, i] = data[:, ofs]
        ofs += 1
    sigma2_eps = data[:, ofs]; ofs += 1
    rho = data[:, ofs]; ofs += 1
    phi = data[:, ofs]

    xpath = _latent_path(path)
    if not os.path.exists(xpath):
        raise ConfigError(f"missing latent companion file {xpath}")
    _, xheader, xrows = _read_chain_file(xpath, "latent")
    if len(xrows) != R:
        raise ConfigError(f"{xpath}: {len(xrows)} rows do not match chain length {R}")
    xcols = xheader[1:]
    if len(xcols) % q:
        raise ConfigError(f"{xpath}: column count not divisible by q={q}")
    m = len(xcols) // q
    if q == 1:
        ids = [c[2:] for c in xcols]
    else:
        ids = [xcols[i * q][2:].rsplit("_", 1)[0] for i in range(m)]
    x = np.empty((R, m, q))
    for n, cells in enumerate(xrows):
        if int(cells[0]) != iterations[n]:
            raise ConfigError(f"{xpath}: iteration column disagrees with the chain file")
        x[n] = np.array([float(c) for c in cells[1:]]).reshape(m, q)

    return ChainStore(
        iterations=iterations, alpha=alpha, beta=beta, mu_x=mu_x, sigma_x=sigma_x,
        sigma2_eps=sigma2_eps, rho=rho, phi=phi, x=x, individual_ids=ids, meta=meta,
    )
