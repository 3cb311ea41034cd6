import io
import os
from typing import Dict, List, Optional, TextIO

import numpy as np
import pandas as pd

from sregnet.constants import SCHEMA_VERSION
from sregnet.estimator import EstimateReport
from sregnet.exceptions import InvalidNetworkException, NetworkFormatException
from sregnet.inference import VarianceReport
from sregnet.kde import DensityField
from sregnet.network import Latent, NetworkData, dyad_index
from sregnet.utils import set_in_dict

LATENT_MARKER = "latent"
REPORT_HEADER = f"sregnet-report v{SCHEMA_VERSION}"


class NetworkNotFoundException(Exception):
    pass


def _num(value: float) -> str:
    return repr(float(value))


def dumps_network(net: NetworkData) -> str:
    """
    `n K`, then one `i x_1 .. x_K` line per agent, then one `i j v d` line
    per dyad i < j, then optionally `latent`, `i a_i` and `i j u_ij` lines.
    """
    lines = [f"{net.n} {net.k}"]
    for i in range(net.n):
        lines.append(" ".join([str(i)] + [_num(x) for x in net.x[i]]))
    rows, cols = dyad_index(net.n)
    for i, j in zip(rows, cols):
        lines.append(f"{i} {j} {_num(net.v[i, j])} {int(net.d[i, j])}")
    if net.has_latent:
        lines.append(LATENT_MARKER)
        for i in range(net.n):
            lines.append(f"{i} {_num(net.latent.a[i])}")
        for i, j in zip(rows, cols):
            lines.append(f"{i} {j} {_num(net.latent.u[i, j])}")
    return "\n".join(lines) + "\n"


class _Lines(object):
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, what: str) -> List[str]:
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            raise NetworkFormatException(f"unexpected end of file, expected {what}",
                                         self.pos + 1)
        self.pos += 1
        return self.lines[self.pos - 1].split()

    @property
    def line(self) -> int:
        return self.pos

    def exhausted(self) -> bool:
        return all(not line.strip() for line in self.lines[self.pos :])


def _agent(token: str, n: int, line: int) -> int:
    try:
        i = int(token)
    except ValueError:
        raise NetworkFormatException(f"bad agent index '{token}'", line)
    if not 0 <= i < n:
        raise NetworkFormatException(f"agent index {i} out of range", line)
    return i


def _float(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise NetworkFormatException(f"bad number '{token}'", line)


def _dyad(fields: List[str], n: int, width: int, seen: np.ndarray, line: int):
    if len(fields) != width:
        raise NetworkFormatException(f"expected {width} fields on a dyad line", line)
    i, j = _agent(fields[0], n, line), _agent(fields[1], n, line)
    if i == j:
        raise NetworkFormatException("self-dyad", line)
    if seen[i, j]:
        raise NetworkFormatException(f"duplicate dyad ({i}, {j})", line)
    seen[i, j] = seen[j, i] = True
    return i, j


def loads_network(text: str) -> NetworkData:
    src = _Lines(text)
    header = src.next("header `n K`")
    if len(header) != 2:
        raise NetworkFormatException("header must be `n K`", src.line)
    try:
        n, k = int(header[0]), int(header[1])
    except ValueError:
        raise NetworkFormatException("header must hold two integers", src.line)
    if n < 1 or k < 1:
        raise NetworkFormatException("n and K must be positive", src.line)

    x = np.full((n, k), np.nan)
    for _ in range(n):
        fields = src.next("attribute line")
        if len(fields) != k + 1:
            raise NetworkFormatException(f"expected {k + 1} fields", src.line)
        i = _agent(fields[0], n, src.line)
        if not np.isnan(x[i]).all():
            raise NetworkFormatException(f"duplicate attributes for agent {i}", src.line)
        x[i] = [_float(t, src.line) for t in fields[1:]]

    v = np.zeros((n, n))
    d = np.zeros((n, n), dtype=np.int8)
    seen = np.zeros((n, n), dtype=bool)
    for _ in range(n * (n - 1) // 2):
        fields = src.next("dyad line")
        i, j = _dyad(fields, n, 4, seen, src.line)
        v[i, j] = v[j, i] = _float(fields[2], src.line)
        if fields[3] not in ("0", "1"):
            raise NetworkFormatException("link indicator must be 0 or 1", src.line)
        d[i, j] = d[j, i] = int(fields[3])

    latent = None
    if not src.exhausted():
        marker = src.next("latent section")
        if marker != [LATENT_MARKER]:
            raise NetworkFormatException("trailing content after dyad lines", src.line)
        latent = _load_latent(src, n)
        if not src.exhausted():
            src.next("end of file")
            raise NetworkFormatException("trailing content after latent section",
                                         src.line)
    try:
        return NetworkData(x=x, v=v, d=d, latent=latent)
    except InvalidNetworkException as e:
        raise NetworkFormatException(str(e))


def _load_latent(src: _Lines, n: int) -> Latent:
    a = np.full(n, np.nan)
    for _ in range(n):
        fields = src.next("latent agent line")
        if len(fields) != 2:
            raise NetworkFormatException("expected `i a_i`", src.line)
        a[_agent(fields[0], n, src.line)] = _float(fields[1], src.line)
    if np.isnan(a).any():
        raise NetworkFormatException("latent section misses agents", src.line)
    u = np.zeros((n, n))
    seen = np.zeros((n, n), dtype=bool)
    for _ in range(n * (n - 1) // 2):
        fields = src.next("latent dyad line")
        i, j = _dyad(fields, n, 3, seen, src.line)
        u[i, j] = u[j, i] = _float(fields[2], src.line)
    return Latent(a=a, u=u)


class NetworkRepository(object):
    def __init__(self):
        self.networks: Dict[str, NetworkData] = {}

    def get(self, file_path: str) -> NetworkData:
        try:
            return self.networks[file_path]
        except KeyError:
            pass
        if not os.path.isfile(file_path):
            raise NetworkNotFoundException(f"no network file at {file_path}")
        with open(file_path, encoding="utf8") as f:
            net = self.read(f)
        self.networks[file_path] = net
        return net

    def read(self, handle: TextIO) -> NetworkData:
        return loads_network(handle.read())

    def add(self, file_path: str, net: NetworkData) -> None:
        with open(file_path, "w", encoding="utf8") as f:
            f.write(dumps_network(net))
        self.networks[file_path] = net


def report_record(report: EstimateReport) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for key, value in report.record().items():
        out[f"estimate.{key}"] = value
    for key, value in report.extras().items():
        out[f"extras.{key}"] = value
    variance = report.variance
    if variance is not None:
        out["variance.ci_level"] = variance.ci_level
        out["variance.rho_hat"] = variance.rho_hat
        out["variance.failures"] = variance.failures
        if variance.note:
            out["variance.note"] = variance.note
    return out


def report_row(report: EstimateReport) -> str:
    buffer = io.StringIO()
    pd.DataFrame([report.record()]).to_csv(buffer, index=False, na_rep="NA")
    return buffer.getvalue()


class ResultRepository(object):
    def _open(self, file_path: str):
        folder = os.path.dirname(file_path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        return open(file_path, "w", encoding="utf8")

    def add_report(self, file_path: str, report: EstimateReport) -> None:
        lines = [REPORT_HEADER]
        for key, value in report_record(report).items():
            lines.append(f"{key}={value}")
        with self._open(file_path) as f:
            f.write("\n".join(lines) + "\n")

    def get_report(self, file_path: str) -> dict:
        record: dict = {}
        with open(file_path, encoding="utf8") as f:
            for line in f.read().splitlines():
                if line == "" or line == REPORT_HEADER:
                    continue
                key, _, val = line.partition("=")
                set_in_dict(record, key.split("."), val)
        return record

    def add_report_row(self, file_path: str, report: EstimateReport) -> None:
        with self._open(file_path) as f:
            f.write(report_row(report))

    def add_density(self, file_path: str, n: int, dens: DensityField) -> None:
        rows, cols = dyad_index(n)
        frame = pd.DataFrame(
            {"i": rows, "j": cols, "fhat": dens.values,
             "floored": dens.floored.astype(int)}
        )
        with self._open(file_path) as f:
            frame.to_csv(f, index=False)

    def add_bootstrap_draws(self, file_path: str, variance: VarianceReport) -> None:
        if variance.draws is None:
            raise ValueError("variance report carries no bootstrap draws")
        k = variance.draws.shape[1]
        frame = pd.DataFrame(
            variance.draws, columns=[f"theta_{i}" for i in range(1, k + 1)]
        )
        frame.insert(0, "draw", variance.draw_ids)
        with self._open(file_path) as f:
            frame.to_csv(f, index=False)

    def add_text(self, file_path: str, text: str) -> None:
        with self._open(file_path) as f:
            f.write(text)

    def add_frame(self, file_path: str, frame: pd.DataFrame,
                  na_rep: Optional[str] = "NA") -> None:
        with self._open(file_path) as f:
            frame.to_csv(f, index=False, na_rep=na_rep)
